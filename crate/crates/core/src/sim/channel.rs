//! Shared radio medium.
//!
//! Path gains are precomputed for every ordered pair. A transmission is
//! sensed wherever its received power reaches the propagation limit and
//! decodable wherever it reaches the receive threshold. Any temporal overlap
//! of two sensed signals at a receiver destroys both there (no capture), and
//! a node cannot receive while it transmits.

use crate::linkbudget::{self, PathlossModel, PowerDbm, RadioParams};
use crate::time::{SimDuration, SimTime};
use crate::NodeId;

use super::frame::Frame;
use super::placement::distance;
use super::scenario::FaultKind;

#[derive(Clone, Debug)]
pub struct ActiveTx {
    pub frame: Frame,
    pub power_dbm: f64,
    pub start: SimTime,
    pub end: SimTime,
    /// Per receiver: destroyed by an overlap.
    pub corrupted: Vec<bool>,
}

impl ActiveTx {
    pub fn sender(&self) -> NodeId {
        self.frame.src
    }

    pub fn airtime(&self) -> SimDuration {
        self.end.since(self.start)
    }
}

#[derive(Clone, Debug)]
pub struct Channel {
    n: usize,
    gain_db: Vec<f64>,
    pub propagation_limit_dbm: f64,
    pub rx_threshold_dbm: f64,
    pub cca_time: SimDuration,
    active: Vec<ActiveTx>,
}

/// Path gain in dB between two points for a 0 dBm transmitter, capped at
/// 0 dB (the two-ray formula exceeds unity below antenna-height distances).
pub fn path_gain_db(radio: &RadioParams<f64>, model: PathlossModel, d: f64) -> f64 {
    if d <= 0.0 {
        return 0.0;
    }
    let unit = RadioParams {
        tx_power: PowerDbm(0.0),
        ..radio.clone()
    };
    match linkbudget::rx_power(&unit, model, d).and_then(|p| p.to_dbm()) {
        Ok(p) => p.0.min(0.0),
        Err(_) => f64::NEG_INFINITY,
    }
}

impl Channel {
    pub fn new(positions: &[(f64, f64)], radio: &RadioParams<f64>, model: PathlossModel, cca_time: SimDuration) -> Self {
        let n = positions.len();
        let mut gain_db = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let g = path_gain_db(radio, model, distance(positions[i], positions[j]));
                gain_db[i * n + j] = g;
                gain_db[j * n + i] = g;
            }
        }
        Channel {
            n,
            gain_db,
            propagation_limit_dbm: radio.propagation_limit.0,
            rx_threshold_dbm: radio.rx_threshold.0,
            cca_time,
            active: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn gain(&self, a: NodeId, b: NodeId) -> f64 {
        self.gain_db[a.index() * self.n + b.index()]
    }

    #[inline]
    pub fn rx_power(&self, from: NodeId, to: NodeId, tx_dbm: f64) -> f64 {
        tx_dbm + self.gain(from, to)
    }

    pub fn apply_fault(&mut self, a: NodeId, b: NodeId, kind: FaultKind) {
        let (i, j) = (a.index(), b.index());
        let g = match kind {
            FaultKind::Cut => f64::NEG_INFINITY,
            FaultKind::Attenuate(db) => self.gain_db[i * self.n + j] - db,
        };
        self.gain_db[i * self.n + j] = g;
        self.gain_db[j * self.n + i] = g;
    }

    pub fn is_transmitting(&self, node: NodeId) -> bool {
        self.active.iter().any(|t| t.sender() == node)
    }

    /// Carrier sense at `node`: it is transmitting, or some other
    /// transmission started at least `cca_time` ago reaches it above the
    /// propagation limit.
    pub fn carrier_busy(&self, node: NodeId, now: SimTime) -> bool {
        self.active.iter().any(|t| {
            t.sender() == node
                || (t.end > now
                    && t.start + self.cca_time <= now
                    && self.rx_power(t.sender(), node, t.power_dbm) >= self.propagation_limit_dbm)
        })
    }

    fn sensed(&self, t: &ActiveTx, at: NodeId) -> bool {
        t.sender() == at || self.rx_power(t.sender(), at, t.power_dbm) >= self.propagation_limit_dbm
    }

    /// Puts `frame` on the air until `now + airtime` and marks overlaps.
    pub fn begin(&mut self, frame: Frame, power_dbm: f64, now: SimTime, airtime: SimDuration) {
        let sender = frame.src;
        let mut new = ActiveTx {
            frame,
            power_dbm,
            start: now,
            end: now + airtime,
            corrupted: vec![false; self.n],
        };
        let mut active = std::mem::take(&mut self.active);
        for old in active.iter_mut().filter(|t| t.end > now) {
            for j in 0..self.n {
                let at = NodeId::from(j);
                if at == sender {
                    old.corrupted[j] = true;
                } else if at == old.sender() {
                    new.corrupted[j] = true;
                } else if self.sensed(old, at) && self.sensed(&new, at) {
                    old.corrupted[j] = true;
                    new.corrupted[j] = true;
                }
            }
        }
        active.push(new);
        self.active = active;
    }

    /// Takes `sender`'s transmission off the air.
    pub fn finish(&mut self, sender: NodeId) -> Option<ActiveTx> {
        let i = self.active.iter().position(|t| t.sender() == sender)?;
        Some(self.active.swap_remove(i))
    }

    /// Drops a transmission without delivering it (sender died mid-frame).
    pub fn abort(&mut self, sender: NodeId) {
        self.active.retain(|t| t.sender() != sender);
    }
}
