//! Parameter sweeps over seeds.
//!
//! Every point of the cartesian product of the axes is run once per seed.
//! All scenarios are built and checked before the first run starts, runs
//! execute in parallel, and results come back ordered by (axis values,
//! seed) regardless of completion order.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::linkbudget::PowerDbm;
use crate::metrics::{AggregateRow, MetricsRecord};
use crate::sim::{self, Scenario, SimError, Simulation};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    NodeCount,
    TxPower,
    Payload,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::NodeCount => "node_count",
            Axis::TxPower => "tx_power",
            Axis::Payload => "payload",
        }
    }

    fn apply(self, s: &mut Scenario, v: f64) -> Result<(), SweepError> {
        let bad = |why: &str| SweepError::BadValue { axis: self, value: v, reason: why.to_string() };
        match self {
            Axis::NodeCount => {
                if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                    return Err(bad("node count must be a whole number"));
                }
                s.node_count = v as usize;
            }
            Axis::TxPower => {
                if !v.is_finite() {
                    return Err(bad("power must be finite"));
                }
                s.radio.tx_power = PowerDbm(v);
            }
            Axis::Payload => {
                if v < 0.0 || v.fract() != 0.0 || v > u32::MAX as f64 {
                    return Err(bad("payload must be a whole number of bytes"));
                }
                s.traffic.payload_bytes = v as u32;
            }
        }
        Ok(())
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = SweepError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "node_count" | "nodes" | "n" => Ok(Axis::NodeCount),
            "tx_power" | "tx" | "power" => Ok(Axis::TxPower),
            "payload" | "payload_bytes" => Ok(Axis::Payload),
            other => Err(SweepError::UnknownAxis(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepAxis {
    pub axis: Axis,
    pub values: Vec<f64>,
}

impl FromStr for SweepAxis {
    type Err = SweepError;

    /// `AXIS=V1,V2,...`
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, list) = s.split_once('=').ok_or_else(|| SweepError::Syntax(s.to_string()))?;
        let axis: Axis = name.parse()?;
        let values = list
            .split(',')
            .map(|v| v.trim().parse::<f64>().map_err(|_| SweepError::Syntax(s.to_string())))
            .collect::<Result<Vec<_>, _>>()?;
        if values.is_empty() {
            return Err(SweepError::Empty("values"));
        }
        Ok(SweepAxis { axis, values })
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("unknown sweep axis {0:?} (expected node_count, tx_power or payload)")]
    UnknownAxis(String),
    #[error("cannot parse sweep axis {0:?}; expected AXIS=V1,V2,...")]
    Syntax(String),
    #[error("sweep needs at least one entry in {0}")]
    Empty(&'static str),
    #[error("axis {axis} appears twice")]
    RepeatedAxis { axis: Axis },
    #[error("{axis}={value}: {reason}")]
    BadValue { axis: Axis, value: f64, reason: String },
    #[error("sweep point {point} seed {seed}: {source}")]
    Config { point: String, seed: u64, source: SimError },
    #[error("sweep point {point} seed {seed}: {source}")]
    Run { point: String, seed: u64, source: SimError },
}

impl SweepError {
    /// True unless a run failed after the sweep was accepted.
    pub fn is_config_error(&self) -> bool {
        !matches!(self, SweepError::Run { .. })
    }
}

#[derive(Clone, Debug)]
pub struct SweepResult {
    /// One record per (point, seed), in (point, seed) order.
    pub runs: Vec<MetricsRecord>,
    /// One row per point, in point order.
    pub rows: Vec<AggregateRow>,
}

#[derive(Debug)]
struct Job {
    point: usize,
    label: String,
    seed: u64,
    scenario: Scenario,
}

fn points(axes: &[SweepAxis]) -> Vec<Vec<(Axis, f64)>> {
    let mut out: Vec<Vec<(Axis, f64)>> = vec![Vec::new()];
    for a in axes {
        let mut values = a.values.clone();
        values.sort_by(f64::total_cmp);
        values.dedup();
        out = out
            .into_iter()
            .flat_map(|p| values.iter().map(move |&v| {
                let mut q = p.clone();
                q.push((a.axis, v));
                q
            }))
            .collect();
    }
    out
}

/// Builds and validates every scenario of the sweep without running any.
fn plan(base: &Scenario, axes: &[SweepAxis], seeds: &[u64]) -> Result<Vec<Job>, SweepError> {
    if seeds.is_empty() {
        return Err(SweepError::Empty("seeds"));
    }
    for (i, a) in axes.iter().enumerate() {
        if a.values.is_empty() {
            return Err(SweepError::Empty("values"));
        }
        if axes[..i].iter().any(|b| b.axis == a.axis) {
            return Err(SweepError::RepeatedAxis { axis: a.axis });
        }
    }
    let mut seeds = seeds.to_vec();
    seeds.sort_unstable();
    let mut jobs = Vec::new();
    for (pi, point) in points(axes).into_iter().enumerate() {
        let label = point.iter().map(|(a, v)| format!("{a}={v}")).collect::<Vec<_>>().join(",");
        let label = if label.is_empty() { "base".to_string() } else { label };
        let mut s = base.clone();
        for &(a, v) in &point {
            a.apply(&mut s, v)?;
        }
        for &seed in &seeds {
            let scenario = Scenario { seed, ..s.clone() };
            if let Err(e) = Simulation::new(&scenario) {
                return Err(SweepError::Config { point: label, seed, source: e });
            }
            jobs.push(Job { point: pi, label: label.clone(), seed, scenario });
        }
    }
    Ok(jobs)
}

/// Runs `base` at every combination of the axis values for every seed.
///
/// With no axes the sweep is a batch of seeds of `base`.
pub fn run_sweep(base: &Scenario, axes: &[SweepAxis], seeds: &[u64]) -> Result<SweepResult, SweepError> {
    let jobs = plan(base, axes, seeds)?;
    let runs = jobs
        .par_iter()
        .map(|j| {
            sim::run(&j.scenario)
                .map(|o| (j.point, o.metrics))
                .map_err(|e| SweepError::Run { point: j.label.clone(), seed: j.seed, source: e })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    let mut start = 0;
    while start < runs.len() {
        let point = runs[start].0;
        let end = start + runs[start..].iter().take_while(|r| r.0 == point).count();
        let group: Vec<MetricsRecord> = runs[start..end].iter().map(|r| r.1.clone()).collect();
        rows.extend(AggregateRow::from_runs(&group));
        start = end;
    }
    Ok(SweepResult { runs: runs.into_iter().map(|r| r.1).collect(), rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_axis_specs() {
        let a: SweepAxis = "tx_power=10,15".parse().unwrap();
        assert_eq!(a.axis, Axis::TxPower);
        assert_eq!(a.values, vec![10.0, 15.0]);
        assert!("bogus=1".parse::<SweepAxis>().is_err());
        assert!("tx_power".parse::<SweepAxis>().is_err());
        assert!("tx_power=a".parse::<SweepAxis>().is_err());
    }

    #[test]
    fn counts_runs_and_rows() {
        let base = Scenario::default();
        let axes = [
            "node_count=500,400,300,200,100".parse().unwrap(),
            "tx_power=15,10".parse().unwrap(),
        ];
        let seeds: Vec<u64> = (1..=10).collect();
        let jobs = plan(&base, &axes, &seeds).unwrap();
        assert_eq!(jobs.len(), 100);
        assert_eq!(jobs.iter().map(|j| j.point).max(), Some(9));
        assert_eq!(jobs[0].scenario.node_count, 100);
        assert_eq!(jobs[0].scenario.radio.tx_power.0, 10.0);
        assert!(jobs.windows(2).all(|w| (w[0].point, w[0].seed) < (w[1].point, w[1].seed)));
    }

    #[test]
    fn invalid_point_rejected_before_running() {
        let axes = ["node_count=100,1".parse().unwrap()];
        let e = plan(&Scenario::default(), &axes, &[1]).unwrap_err();
        assert!(e.is_config_error(), "{e}");
        assert!(matches!(run_sweep(&Scenario::default(), &axes, &[]), Err(SweepError::Empty("seeds"))));
    }
}
