use serde::{Deserialize, Serialize};

use crate::linkbudget::{self, PathlossModel, PowerDbm, RadioParams};
use crate::routing::RoutingConfig;
use crate::time::{SimDuration, SimTime};
use crate::NodeId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScenarioError {
    #[error("{field}: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error(transparent)]
    Radio(#[from] linkbudget::LinkBudgetError),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        field,
        reason: reason.into(),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CbrTraffic {
    pub source: NodeId,
    pub destination: NodeId,
    pub payload_bytes: u32,
    pub packet_count: u32,
    pub interval: SimDuration,
    pub start: SimTime,
}

impl Default for CbrTraffic {
    fn default() -> Self {
        CbrTraffic {
            source: NodeId(0),
            destination: NodeId(1),
            payload_bytes: 70,
            packet_count: 200,
            interval: SimDuration::from_millis(2_500),
            start: SimTime::from_secs_f64(5.0),
        }
    }
}

/// Slotted CSMA/CA parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MacParams {
    pub slot: SimDuration,
    pub difs: SimDuration,
    /// Time a transmission takes to become visible to carrier sense.
    pub cca_time: SimDuration,
    pub cw_min: u32,
    pub cw_max: u32,
    /// Retries after the first attempt; one more failure drops the frame.
    pub retry_limit: u32,
    pub header_bytes: u32,
    pub queue_limit: usize,
}

impl Default for MacParams {
    fn default() -> Self {
        MacParams {
            slot: SimDuration::from_micros(20),
            difs: SimDuration::from_micros(50),
            cca_time: SimDuration::from_micros(15),
            cw_min: 32,
            cw_max: 1024,
            retry_limit: 7,
            header_bytes: 34,
            queue_limit: 100,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyParams {
    /// Drawn on top of the radiated power while transmitting.
    pub tx_electronics_mw: f64,
    pub rx_mw: f64,
    /// Baseline draw for the whole time a node is alive.
    pub idle_mw: f64,
    pub budget_mwh: f64,
}

impl Default for EnergyParams {
    fn default() -> Self {
        EnergyParams {
            tx_electronics_mw: 20.0,
            rx_mw: 30.0,
            idle_mw: 1.0,
            budget_mwh: 100.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PowerControlParams {
    pub enabled: bool,
    pub step_db: f64,
    pub ewma_alpha: f64,
    pub margin_db: f64,
    pub min_power_dbm: f64,
    pub ber_target: f64,
    pub bits_per_symbol: u32,
}

impl Default for PowerControlParams {
    fn default() -> Self {
        PowerControlParams {
            enabled: true,
            step_db: 1.0,
            ewma_alpha: 0.25,
            margin_db: 3.0,
            min_power_dbm: -10.0,
            ber_target: 1e-5,
            bits_per_symbol: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryParams {
    pub npl_alpha: f64,
    pub break_margin_db: f64,
    /// Beacon periods without a reception before an NPL record is stale.
    pub stale_periods: u32,
    /// Local repair needs residual energy above this fraction of the budget.
    pub repair_energy_fraction: f64,
    pub queue_limit: usize,
    pub node_traversal: SimDuration,
}

impl Default for RecoveryParams {
    fn default() -> Self {
        RecoveryParams {
            npl_alpha: 0.25,
            break_margin_db: 3.0,
            stale_periods: 3,
            repair_energy_fraction: 0.2,
            queue_limit: 64,
            node_traversal: SimDuration::from_millis(200),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UmpireParams {
    pub enabled: bool,
    pub timeout: SimDuration,
}

impl Default for UmpireParams {
    fn default() -> Self {
        UmpireParams {
            enabled: true,
            timeout: SimDuration::from_millis(1_000),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultKind {
    /// The pair can no longer hear each other at all.
    Cut,
    /// Extra symmetric loss on the pair, in dB.
    Attenuate(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkFault {
    pub at: SimTime,
    pub a: NodeId,
    pub b: NodeId,
    pub kind: FaultKind,
}

/// Full description of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub node_count: usize,
    pub field: (f64, f64),
    pub sim_time: SimDuration,
    pub seed: u64,
    /// `radio.tx_power` is the maximum transmit power of every node.
    pub radio: RadioParams<f64>,
    pub pathloss: PathlossModel,
    pub data_rate: f64,
    pub source_sink_distance: f64,
    /// Explicit coordinates; overrides random placement when set.
    pub positions: Option<Vec<(f64, f64)>>,
    pub traffic: CbrTraffic,
    pub mac: MacParams,
    pub energy: EnergyParams,
    pub power_control: PowerControlParams,
    pub routing: RoutingConfig,
    pub rreq_jitter: SimDuration,
    pub beacon_period: SimDuration,
    pub recovery: RecoveryParams,
    pub umpire: UmpireParams,
    pub black_holes: Vec<NodeId>,
    pub link_faults: Vec<LinkFault>,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            node_count: 500,
            field: (1000.0, 1000.0),
            sim_time: SimDuration::from_millis(600_000),
            seed: 1,
            radio: RadioParams::default(),
            pathloss: PathlossModel::TwoRay,
            data_rate: 2.0e6,
            source_sink_distance: 350.0,
            positions: None,
            traffic: CbrTraffic::default(),
            mac: MacParams::default(),
            energy: EnergyParams::default(),
            power_control: PowerControlParams::default(),
            routing: RoutingConfig::default(),
            rreq_jitter: SimDuration::from_millis(10),
            beacon_period: SimDuration::from_millis(1_000),
            recovery: RecoveryParams::default(),
            umpire: UmpireParams::default(),
            black_holes: Vec::new(),
            link_faults: Vec::new(),
        }
    }
}

fn positive(field: &'static str, v: f64) -> Result<(), ScenarioError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be positive and finite, got {v}")))
    }
}

fn fraction(field: &'static str, v: f64, allow_zero: bool) -> Result<(), ScenarioError> {
    if (v > 0.0 || (allow_zero && v == 0.0)) && v <= 1.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must lie in {}0, 1], got {v}", if allow_zero { "[" } else { "(" })))
    }
}

impl Scenario {
    /// Replaces random placement with explicit coordinates.
    pub fn with_positions(mut self, positions: Vec<(f64, f64)>) -> Self {
        self.node_count = positions.len();
        self.positions = Some(positions);
        self
    }

    pub fn max_power(&self) -> PowerDbm<f64> {
        self.radio.tx_power
    }

    pub fn field_diagonal(&self) -> f64 {
        self.field.0.hypot(self.field.1)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.node_count < 2 {
            return Err(invalid("node_count", format!("need at least 2 nodes, got {}", self.node_count)));
        }
        positive("field.x", self.field.0)?;
        positive("field.y", self.field.1)?;
        if self.sim_time.as_nanos() == 0 {
            return Err(invalid("sim_time", "must be positive"));
        }
        self.radio.validate()?;
        positive("data_rate", self.data_rate)?;
        match &self.positions {
            Some(p) => {
                if p.len() != self.node_count {
                    return Err(invalid("positions", format!("{} positions for {} nodes", p.len(), self.node_count)));
                }
                if p.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
                    return Err(invalid("positions", "coordinates must be finite"));
                }
            }
            None => {
                positive("source_sink_distance", self.source_sink_distance)?;
                if self.source_sink_distance >= self.field_diagonal() {
                    return Err(invalid(
                        "source_sink_distance",
                        format!("{} m does not fit in a {} m field diagonal", self.source_sink_distance, self.field_diagonal()),
                    ));
                }
                if self.source_sink_distance > self.field.0 {
                    return Err(invalid("source_sink_distance", "source and sink are placed along x and must fit the field width"));
                }
            }
        }
        let n = self.node_count as u32;
        let t = &self.traffic;
        if t.source.0 >= n || t.destination.0 >= n {
            return Err(invalid("traffic", "source and destination must be existing nodes"));
        }
        if t.source == t.destination {
            return Err(invalid("traffic", "source and destination must differ"));
        }
        if t.packet_count > 0 && t.interval.as_nanos() == 0 {
            return Err(invalid("traffic.interval", "must be positive"));
        }
        let m = &self.mac;
        if m.slot.as_nanos() == 0 {
            return Err(invalid("mac.slot", "must be positive"));
        }
        if m.cw_min == 0 || m.cw_max < m.cw_min {
            return Err(invalid("mac.cw", "need 0 < cw_min <= cw_max"));
        }
        if m.queue_limit == 0 {
            return Err(invalid("mac.queue_limit", "must be positive"));
        }
        let e = &self.energy;
        for (f, v) in [("energy.tx_electronics_mw", e.tx_electronics_mw), ("energy.rx_mw", e.rx_mw), ("energy.idle_mw", e.idle_mw)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(f, format!("must be non-negative, got {v}")));
            }
        }
        positive("energy.budget_mwh", e.budget_mwh)?;
        let pc = &self.power_control;
        positive("power_control.step_db", pc.step_db)?;
        fraction("power_control.ewma_alpha", pc.ewma_alpha, false)?;
        if !(pc.ber_target > 0.0 && pc.ber_target <= 0.5) {
            return Err(invalid("power_control.ber_target", "must lie in (0, 0.5]"));
        }
        if pc.min_power_dbm > self.radio.tx_power.0 {
            return Err(invalid("power_control.min_power_dbm", "exceeds the maximum transmit power"));
        }
        if pc.bits_per_symbol == 0 {
            return Err(invalid("power_control.bits_per_symbol", "must be positive"));
        }
        fraction("routing.snr_alpha", self.routing.snr_alpha, false)?;
        if self.routing.route_lifetime.as_nanos() == 0 {
            return Err(invalid("routing.route_lifetime", "must be positive"));
        }
        if self.beacon_period.as_nanos() == 0 {
            return Err(invalid("beacon_period", "must be positive"));
        }
        let r = &self.recovery;
        fraction("recovery.npl_alpha", r.npl_alpha, false)?;
        fraction("recovery.repair_energy_fraction", r.repair_energy_fraction, true)?;
        if r.stale_periods == 0 {
            return Err(invalid("recovery.stale_periods", "must be positive"));
        }
        if r.queue_limit == 0 {
            return Err(invalid("recovery.queue_limit", "must be positive"));
        }
        for b in &self.black_holes {
            if b.0 >= n {
                return Err(invalid("black_holes", format!("node {} does not exist", b.0)));
            }
        }
        for f in &self.link_faults {
            if f.a.0 >= n || f.b.0 >= n || f.a == f.b {
                return Err(invalid("link_faults", format!("bad pair ({}, {})", f.a.0, f.b.0)));
            }
        }
        Ok(())
    }
}
