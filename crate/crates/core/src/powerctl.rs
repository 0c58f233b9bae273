//! Closed-loop transmit power control driven by beacon-carried RSSI feedback.
//!
//! Each neighbor link has its own loop. The receiver reports the signal
//! strength it measured; the transmitter smooths those reports and steps its
//! power by a fixed amount until the smoothed value sits within a deadband
//! around the target.
//!
//! When a step changes the power by `delta`, the smoothed RSSI is shifted by
//! the same `delta`. Without that shift the smoothing lag makes the loop
//! overshoot and oscillate around the target.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::linkbudget::{self, minimum_detectable_signal, required_ebn0, PowerDbm, RadioParams};
use crate::num::Real;
use crate::NodeId;

/// Loop tuning shared by every link of one node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig<T> {
    pub target_rx_power: PowerDbm<T>,
    pub step_db: T,
    pub deadband_db: T,
    pub ewma_alpha: T,
    pub min_power: PowerDbm<T>,
    pub max_power: PowerDbm<T>,
}

impl<T: Real> LoopConfig<T> {
    /// Defaults: 1 dB step, 0.5 dB deadband, alpha 0.25, [-10, +15] dBm.
    pub fn new(target_rx_power: PowerDbm<T>) -> Self {
        LoopConfig {
            target_rx_power,
            step_db: T::one(),
            deadband_db: T::lit(0.5),
            ewma_alpha: T::lit(0.25),
            min_power: PowerDbm(T::lit(-10.0)),
            max_power: PowerDbm(T::lit(15.0)),
        }
    }

    pub fn with_bounds(mut self, min_dbm: T, max_dbm: T) -> Self {
        self.min_power = PowerDbm(min_dbm);
        self.max_power = PowerDbm(max_dbm);
        self
    }

    pub fn with_step(mut self, step_db: T) -> Self {
        self.step_db = step_db;
        self.deadband_db = step_db / T::lit(2.0);
        self
    }

    pub fn with_alpha(mut self, alpha: T) -> Self {
        self.ewma_alpha = alpha;
        self
    }

    pub fn validate(&self) -> Result<(), PowerControlError> {
        if !(self.ewma_alpha > T::zero() && self.ewma_alpha <= T::one()) {
            return Err(PowerControlError::Config("ewma_alpha must lie in (0, 1]"));
        }
        if !(self.step_db > T::zero()) || !self.step_db.is_finite() {
            return Err(PowerControlError::Config("step_db must be positive"));
        }
        if !(self.deadband_db >= T::zero()) {
            return Err(PowerControlError::Config("deadband_db must be non-negative"));
        }
        if !(self.min_power.0 <= self.max_power.0) {
            return Err(PowerControlError::Config("min_power must not exceed max_power"));
        }
        if !self.target_rx_power.0.is_finite() {
            return Err(PowerControlError::Config("target_rx_power must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PowerControlError {
    #[error("invalid power-control configuration: {0}")]
    Config(&'static str),
    #[error(transparent)]
    LinkBudget(#[from] linkbudget::LinkBudgetError),
}

/// Control state of a single neighbor link.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinkPowerState<T> {
    pub current_tx_power: PowerDbm<T>,
    pub rssi_ewma: Option<T>,
    pub saturated: bool,
}

/// Result of one `adjust_tx_power` call.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Adjustment {
    Raised,
    Lowered,
    Unchanged,
    /// Wanted more power but already at `max_power`.
    SaturatedHigh,
    /// Wanted less power but already at `min_power`.
    SaturatedLow,
    /// No feedback recorded for this neighbor yet.
    NoFeedback,
}

/// Per-node power controller: one loop per neighbor.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PowerControlState<T> {
    pub config: LoopConfig<T>,
    links: BTreeMap<NodeId, LinkPowerState<T>>,
}

impl<T: Real> PowerControlState<T> {
    pub fn new(config: LoopConfig<T>) -> Result<Self, PowerControlError> {
        config.validate()?;
        Ok(PowerControlState {
            config,
            links: BTreeMap::new(),
        })
    }

    pub fn link(&self, neighbor: NodeId) -> Option<&LinkPowerState<T>> {
        self.links.get(&neighbor)
    }

    /// Power used for a unicast to `neighbor`; `max_power` before any feedback.
    pub fn tx_power_for(&self, neighbor: NodeId) -> PowerDbm<T> {
        self.links
            .get(&neighbor)
            .map(|l| l.current_tx_power)
            .unwrap_or(self.config.max_power)
    }

    /// Broadcast power: the largest per-link power over `active` neighbors,
    /// or `max_power` when there are none.
    pub fn broadcast_power<I: IntoIterator<Item = NodeId>>(&self, active: I) -> PowerDbm<T> {
        let mut best: Option<T> = None;
        for n in active {
            let p = self.tx_power_for(n).0;
            best = Some(match best {
                Some(b) if b >= p => b,
                _ => p,
            });
        }
        PowerDbm(best.unwrap_or(self.config.max_power.0))
    }

    /// Folds one RSSI report from `neighbor` into its smoothed value.
    pub fn record_feedback(&mut self, neighbor: NodeId, measured_rssi: PowerDbm<T>) {
        let alpha = self.config.ewma_alpha;
        let max = self.config.max_power;
        let link = self.links.entry(neighbor).or_insert(LinkPowerState {
            current_tx_power: max,
            rssi_ewma: None,
            saturated: false,
        });
        link.rssi_ewma = Some(match link.rssi_ewma {
            None => measured_rssi.0,
            Some(prev) => alpha * measured_rssi.0 + (T::one() - alpha) * prev,
        });
    }

    /// One step of the loop toward the target for `neighbor`.
    pub fn adjust_tx_power(&mut self, neighbor: NodeId) -> Adjustment {
        let cfg = &self.config;
        let Some(link) = self.links.get_mut(&neighbor) else {
            log::warn!("power control: no feedback from {neighbor}");
            return Adjustment::NoFeedback;
        };
        let Some(ewma) = link.rssi_ewma else {
            return Adjustment::NoFeedback;
        };
        let target = cfg.target_rx_power.0;
        let current = link.current_tx_power.0;
        let (wanted, outcome) = if ewma < target - cfg.deadband_db {
            (current + cfg.step_db, Adjustment::Raised)
        } else if ewma > target + cfg.deadband_db {
            (current - cfg.step_db, Adjustment::Lowered)
        } else {
            link.saturated = false;
            return Adjustment::Unchanged;
        };
        let clamped = wanted.max(cfg.min_power.0).min(cfg.max_power.0);
        let delta = clamped - current;
        link.current_tx_power = PowerDbm(clamped);
        link.rssi_ewma = Some(ewma + delta);
        if delta == T::zero() {
            link.saturated = true;
            match outcome {
                Adjustment::Raised => Adjustment::SaturatedHigh,
                _ => Adjustment::SaturatedLow,
            }
        } else {
            link.saturated = clamped == cfg.max_power.0 || clamped == cfg.min_power.0;
            outcome
        }
    }

    pub fn forget(&mut self, neighbor: NodeId) {
        self.links.remove(&neighbor);
    }
}

/// Received power a link should be driven to: the minimum detectable signal
/// for the BER target plus a margin.
///
/// The required SNR is (Eb/N0) * b. At BER = 0.5 that is zero (minus
/// infinity in dB), so the result is floored at the receiver noise floor.
pub fn target_rx_power<T: Real>(
    params: &RadioParams<T>,
    bits_per_symbol: u32,
    ber_target: T,
    margin_db: T,
) -> Result<PowerDbm<T>, PowerControlError> {
    let ebn0 = required_ebn0(ber_target)?;
    let snr = ebn0 * T::from_u32(bits_per_symbol).unwrap();
    let floor = params.noise_floor().0;
    let mds = if snr > T::zero() {
        minimum_detectable_signal(params, linkbudget::linear_to_db(snr))?.0.max(floor)
    } else {
        floor
    };
    Ok(PowerDbm(mds + margin_db))
}
