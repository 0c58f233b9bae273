//! Per-run metrics, CSV output and seed aggregation.

use std::io::Write;

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::sim::trace::{TraceEvent, TraceRecord};
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("received count {received} exceeds sent count {sent}")]
    Inconsistent { received: u64, sent: u64 },
    #[error("delivery {uid} arrived before it was sent")]
    NegativeDelay { uid: u64 },
    #[error("csv: {0}")]
    Csv(String),
}

/// Packet delivery ratio N_r / N_t; `None` when nothing was sent.
pub fn pdr(n_r: u64, n_t: u64) -> Result<Option<Ratio<u64>>, MetricsError> {
    if n_r > n_t {
        return Err(MetricsError::Inconsistent { received: n_r, sent: n_t });
    }
    Ok((n_t > 0).then(|| Ratio::new(n_r, n_t)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeliveryRecord {
    pub uid: u64,
    pub sent: SimTime,
    pub received: SimTime,
    pub airtime_ns: u64,
    pub hops: usize,
}

impl DeliveryRecord {
    pub fn delay_ns(&self) -> u64 {
        self.received.since(self.sent).as_nanos()
    }
}

/// Mean end-to-end delay in seconds over delivered packets.
pub fn mean_end_to_end_delay(records: &[DeliveryRecord]) -> Result<Option<f64>, MetricsError> {
    if let Some(r) = records.iter().find(|r| r.received < r.sent) {
        return Err(MetricsError::NegativeDelay { uid: r.uid });
    }
    Ok(mean_delay_from_ns(records.iter().map(DeliveryRecord::delay_ns)))
}

fn mean_delay_from_ns<I: IntoIterator<Item = u64>>(delays: I) -> Option<f64> {
    let (sum, n) = delays
        .into_iter()
        .fold((0u128, 0u64), |(s, n), d| (s + u128::from(d), n + 1));
    (n > 0).then(|| sum as f64 / n as f64 / 1e9)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub sent: u64,
    pub received: u64,
    pub duplicates: u64,
    pub rerr_at_source: u64,
    pub notifications: u64,
    pub convictions: u64,
    pub discoveries: u64,
    pub mac_drops: u64,
    pub queue_drops: u64,
    pub collisions: u64,
    pub routing_failures: u64,
    pub black_hole_drops: u64,
}

/// One row per run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub node_count: usize,
    pub tx_power_dbm: f64,
    pub payload_bytes: u32,
    pub seed: u64,
    pub sent: u64,
    pub received: u64,
    #[serde(skip)]
    pub pdr: Option<Ratio<u64>>,
    /// Delivered packets per simulated second.
    pub throughput_pps: f64,
    pub mean_delay_s: Option<f64>,
    pub total_energy_mwh: f64,
    pub mean_energy_mwh: f64,
    pub rerr_at_source: u64,
    pub notifications: u64,
    pub convictions: u64,
    pub discoveries: u64,
    pub mac_drops: u64,
    pub collisions: u64,
}

/// Labels identifying a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLabels {
    pub node_count: usize,
    pub tx_power_dbm: f64,
    pub payload_bytes: u32,
    pub seed: u64,
    pub sim_time_s: f64,
}

impl MetricsRecord {
    pub fn build(
        labels: &RunLabels,
        counters: &Counters,
        deliveries: &[DeliveryRecord],
        per_node_energy_mwh: &[f64],
    ) -> Result<Self, MetricsError> {
        let pdr = pdr(counters.received, counters.sent)?;
        let total: f64 = per_node_energy_mwh.iter().sum();
        let mean = if per_node_energy_mwh.is_empty() { 0.0 } else { total / per_node_energy_mwh.len() as f64 };
        Ok(MetricsRecord {
            node_count: labels.node_count,
            tx_power_dbm: labels.tx_power_dbm,
            payload_bytes: labels.payload_bytes,
            seed: labels.seed,
            sent: counters.sent,
            received: counters.received,
            pdr,
            throughput_pps: counters.received as f64 / labels.sim_time_s,
            mean_delay_s: mean_end_to_end_delay(deliveries)?,
            total_energy_mwh: total,
            mean_energy_mwh: mean,
            rerr_at_source: counters.rerr_at_source,
            notifications: counters.notifications,
            convictions: counters.convictions,
            discoveries: counters.discoveries,
            mac_drops: counters.mac_drops,
            collisions: counters.collisions,
        })
    }

    pub fn pdr_f64(&self) -> Option<f64> {
        self.pdr.map(|r| *r.numer() as f64 / *r.denom() as f64)
    }

    /// Recomputes the trace-derivable fields from a trace alone.
    pub fn from_trace(labels: &RunLabels, records: &[TraceRecord], counters_extra: &Counters) -> Result<Self, MetricsError> {
        let mut c = counters_extra.clone();
        c.sent = 0;
        c.received = 0;
        c.rerr_at_source = 0;
        c.notifications = 0;
        c.convictions = 0;
        c.mac_drops = 0;
        c.discoveries = 0;
        let mut delays = Vec::new();
        let mut energy = Vec::new();
        for r in records {
            match &r.event {
                TraceEvent::AppSend { .. } => c.sent += 1,
                TraceEvent::Deliver { delay_ns, .. } => {
                    c.received += 1;
                    delays.push(*delay_ns);
                }
                TraceEvent::RerrAtSource { .. } => c.rerr_at_source += 1,
                TraceEvent::UpperLayerNotify { .. } => c.notifications += 1,
                TraceEvent::Convicted { .. } => c.convictions += 1,
                TraceEvent::MacDrop { .. } => c.mac_drops += 1,
                TraceEvent::RreqOriginated { .. } => c.discoveries += 1,
                TraceEvent::Energy { tx_mwh, rx_mwh, idle_mwh } => energy.push(tx_mwh + rx_mwh + idle_mwh),
                _ => {}
            }
        }
        let total: f64 = energy.iter().sum();
        let mean = if energy.is_empty() { 0.0 } else { total / energy.len() as f64 };
        Ok(MetricsRecord {
            node_count: labels.node_count,
            tx_power_dbm: labels.tx_power_dbm,
            payload_bytes: labels.payload_bytes,
            seed: labels.seed,
            sent: c.sent,
            received: c.received,
            pdr: pdr(c.received, c.sent)?,
            throughput_pps: c.received as f64 / labels.sim_time_s,
            mean_delay_s: mean_delay_from_ns(delays),
            total_energy_mwh: total,
            mean_energy_mwh: mean,
            rerr_at_source: c.rerr_at_source,
            notifications: c.notifications,
            convictions: c.convictions,
            discoveries: c.discoveries,
            mac_drops: c.mac_drops,
            collisions: c.collisions,
        })
    }
}

/// Undefined values are written as this marker.
pub const NA: &str = "NA";

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| NA.to_string(), |x| x.to_string())
}

pub const RUN_COLUMNS: [&str; 18] = [
    "node_count",
    "tx_power_dbm",
    "payload_bytes",
    "seed",
    "sent",
    "received",
    "pdr",
    "throughput_pps",
    "mean_delay_s",
    "total_energy_mwh",
    "mean_energy_mwh",
    "rerr_at_source",
    "notifications",
    "convictions",
    "discoveries",
    "mac_drops",
    "collisions",
    "pdr_exact",
];

impl MetricsRecord {
    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.node_count.to_string(),
            self.tx_power_dbm.to_string(),
            self.payload_bytes.to_string(),
            self.seed.to_string(),
            self.sent.to_string(),
            self.received.to_string(),
            opt(self.pdr_f64()),
            self.throughput_pps.to_string(),
            opt(self.mean_delay_s),
            self.total_energy_mwh.to_string(),
            self.mean_energy_mwh.to_string(),
            self.rerr_at_source.to_string(),
            self.notifications.to_string(),
            self.convictions.to_string(),
            self.discoveries.to_string(),
            self.mac_drops.to_string(),
            self.collisions.to_string(),
            self.pdr.map_or_else(|| NA.to_string(), |r| format!("{}/{}", r.numer(), r.denom())),
        ]
    }
}

pub fn write_runs_csv<W: Write>(out: W, runs: &[MetricsRecord]) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| MetricsError::Csv(e.to_string());
    w.write_record(RUN_COLUMNS).map_err(err)?;
    for r in runs {
        w.write_record(r.csv_row()).map_err(err)?;
    }
    w.flush().map_err(|e| MetricsError::Csv(e.to_string()))
}

/// Sample mean and standard deviation (n - 1 denominator; 0 for one sample).
pub fn mean_std(xs: &[f64]) -> Option<(f64, f64)> {
    if xs.is_empty() {
        return None;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Some((mean, var.sqrt()))
}

/// Mean and standard deviation across the seeds of one configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub node_count: usize,
    pub tx_power_dbm: f64,
    pub payload_bytes: u32,
    pub runs: usize,
    pub duplicate_seeds: bool,
    pub sent_mean: f64,
    pub received_mean: f64,
    pub pdr_mean: Option<f64>,
    pub pdr_std: Option<f64>,
    pub throughput_mean: f64,
    pub throughput_std: f64,
    pub delay_mean: Option<f64>,
    pub delay_std: Option<f64>,
    pub energy_per_node_mean: f64,
    pub energy_per_node_std: f64,
    pub total_energy_mean: f64,
    pub total_energy_std: f64,
}

pub const AGGREGATE_COLUMNS: [&str; 17] = [
    "node_count",
    "tx_power_dbm",
    "payload_bytes",
    "runs",
    "duplicate_seeds",
    "sent_mean",
    "received_mean",
    "pdr_mean",
    "pdr_std",
    "throughput_mean",
    "throughput_std",
    "delay_mean_s",
    "delay_std_s",
    "energy_per_node_mean_mwh",
    "energy_per_node_std_mwh",
    "total_energy_mean_mwh",
    "total_energy_std_mwh",
];

impl AggregateRow {
    /// `runs` must all share one configuration.
    pub fn from_runs(runs: &[MetricsRecord]) -> Option<Self> {
        let first = runs.first()?;
        let col = |f: fn(&MetricsRecord) -> f64| runs.iter().map(f).collect::<Vec<_>>();
        let defined = |f: fn(&MetricsRecord) -> Option<f64>| runs.iter().filter_map(f).collect::<Vec<_>>();
        let mut seeds: Vec<u64> = runs.iter().map(|r| r.seed).collect();
        seeds.sort_unstable();
        let duplicate_seeds = seeds.windows(2).any(|w| w[0] == w[1]);
        let (tp_m, tp_s) = mean_std(&col(|r| r.throughput_pps))?;
        let (e_m, e_s) = mean_std(&col(|r| r.mean_energy_mwh))?;
        let (te_m, te_s) = mean_std(&col(|r| r.total_energy_mwh))?;
        let pdr = mean_std(&defined(MetricsRecord::pdr_f64));
        let delay = mean_std(&defined(|r| r.mean_delay_s));
        Some(AggregateRow {
            node_count: first.node_count,
            tx_power_dbm: first.tx_power_dbm,
            payload_bytes: first.payload_bytes,
            runs: runs.len(),
            duplicate_seeds,
            sent_mean: mean_std(&col(|r| r.sent as f64))?.0,
            received_mean: mean_std(&col(|r| r.received as f64))?.0,
            pdr_mean: pdr.map(|p| p.0),
            pdr_std: pdr.map(|p| p.1),
            throughput_mean: tp_m,
            throughput_std: tp_s,
            delay_mean: delay.map(|d| d.0),
            delay_std: delay.map(|d| d.1),
            energy_per_node_mean: e_m,
            energy_per_node_std: e_s,
            total_energy_mean: te_m,
            total_energy_std: te_s,
        })
    }

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.node_count.to_string(),
            self.tx_power_dbm.to_string(),
            self.payload_bytes.to_string(),
            self.runs.to_string(),
            self.duplicate_seeds.to_string(),
            self.sent_mean.to_string(),
            self.received_mean.to_string(),
            opt(self.pdr_mean),
            opt(self.pdr_std),
            self.throughput_mean.to_string(),
            self.throughput_std.to_string(),
            opt(self.delay_mean),
            opt(self.delay_std),
            self.energy_per_node_mean.to_string(),
            self.energy_per_node_std.to_string(),
            self.total_energy_mean.to_string(),
            self.total_energy_std.to_string(),
        ]
    }

    /// Parses a row written by [`AggregateRow::csv_row`].
    pub fn parse_row(fields: &[&str]) -> Result<Self, MetricsError> {
        if fields.len() != AGGREGATE_COLUMNS.len() {
            return Err(MetricsError::Csv(format!("expected {} fields, got {}", AGGREGATE_COLUMNS.len(), fields.len())));
        }
        fn num<T: std::str::FromStr>(s: &str) -> Result<T, MetricsError> {
            s.parse().map_err(|_| MetricsError::Csv(format!("bad number {s:?}")))
        }
        fn optn(s: &str) -> Result<Option<f64>, MetricsError> {
            if s == NA {
                Ok(None)
            } else {
                num(s).map(Some)
            }
        }
        Ok(AggregateRow {
            node_count: num(fields[0])?,
            tx_power_dbm: num(fields[1])?,
            payload_bytes: num(fields[2])?,
            runs: num(fields[3])?,
            duplicate_seeds: num(fields[4])?,
            sent_mean: num(fields[5])?,
            received_mean: num(fields[6])?,
            pdr_mean: optn(fields[7])?,
            pdr_std: optn(fields[8])?,
            throughput_mean: num(fields[9])?,
            throughput_std: num(fields[10])?,
            delay_mean: optn(fields[11])?,
            delay_std: optn(fields[12])?,
            energy_per_node_mean: num(fields[13])?,
            energy_per_node_std: num(fields[14])?,
            total_energy_mean: num(fields[15])?,
            total_energy_std: num(fields[16])?,
        })
    }
}

pub fn write_aggregate_csv<W: Write>(out: W, rows: &[AggregateRow]) -> Result<(), MetricsError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| MetricsError::Csv(e.to_string());
    w.write_record(AGGREGATE_COLUMNS).map_err(err)?;
    for r in rows {
        w.write_record(r.csv_row()).map_err(err)?;
    }
    w.flush().map_err(|e| MetricsError::Csv(e.to_string()))
}

pub fn read_aggregate_csv<R: std::io::Read>(input: R) -> Result<Vec<AggregateRow>, MetricsError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| MetricsError::Csv(e.to_string()))?;
        let fields: Vec<&str> = rec.iter().collect();
        out.push(AggregateRow::parse_row(&fields)?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pdr_examples() {
        assert_eq!(pdr(180, 200).unwrap(), Some(Ratio::new(9, 10)));
        assert_eq!(pdr(0, 200).unwrap(), Some(Ratio::new(0, 1)));
        assert_eq!(pdr(200, 200).unwrap(), Some(Ratio::new(1, 1)));
        assert_eq!(pdr(0, 0).unwrap(), None);
        assert!(pdr(3, 2).is_err());
    }

    fn rec(uid: u64, sent_ns: u64, recv_ns: u64) -> DeliveryRecord {
        DeliveryRecord { uid, sent: SimTime(sent_ns), received: SimTime(recv_ns), airtime_ns: 0, hops: 1 }
    }

    #[test]
    fn delay_examples() {
        let d = mean_end_to_end_delay(&[rec(0, 0, 1_000_000), rec(1, 0, 3_000_000)]).unwrap().unwrap();
        assert!((d - 0.002).abs() < 1e-15);
        assert_eq!(mean_end_to_end_delay(&[]).unwrap(), None);
        assert!(mean_end_to_end_delay(&[rec(0, 5, 4)]).is_err());
    }

    #[test]
    fn mean_std_values() {
        assert_eq!(mean_std(&[]), None);
        assert_eq!(mean_std(&[4.0]), Some((4.0, 0.0)));
        let (m, s) = mean_std(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert_eq!(m, 5.0);
        assert!((s - (32.0f64 / 7.0).sqrt()).abs() < 1e-12);
    }
}
