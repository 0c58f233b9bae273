use serde::{Deserialize, Serialize};

use crate::time::SimTime;

const NS_PER_HOUR: f64 = 3.6e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyMode {
    Tx,
    Rx,
    Idle,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnergyError {
    #[error("negative or non-finite duration {0} s")]
    Duration(f64),
    #[error("negative or non-finite power draw {0} mW")]
    Power(f64),
}

/// Consumption of one node, split by radio mode, in mWh.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub tx: f64,
    pub rx: f64,
    pub idle: f64,
    pub initial_budget: f64,
    pub dead_at: Option<SimTime>,
    /// Idle draw has been charged up to here.
    idle_settled: SimTime,
}

impl EnergyLedger {
    pub fn new(budget_mwh: f64) -> Self {
        EnergyLedger {
            tx: 0.0,
            rx: 0.0,
            idle: 0.0,
            initial_budget: budget_mwh,
            dead_at: None,
            idle_settled: SimTime(0),
        }
    }

    pub fn consumed(&self) -> f64 {
        self.tx + self.rx + self.idle
    }

    pub fn residual(&self) -> f64 {
        (self.initial_budget - self.consumed()).max(0.0)
    }

    pub fn is_dead(&self) -> bool {
        self.dead_at.is_some()
    }

    /// Charges `power_mw` for `duration_s` to `mode`. Consumption is clamped
    /// at the budget; reaching it kills the node at `now`. Returns `true` if
    /// this charge killed the node.
    pub fn account(&mut self, mode: EnergyMode, power_mw: f64, duration_s: f64, now: SimTime) -> Result<bool, EnergyError> {
        if !(duration_s.is_finite() && duration_s >= 0.0) {
            return Err(EnergyError::Duration(duration_s));
        }
        if !(power_mw.is_finite() && power_mw >= 0.0) {
            return Err(EnergyError::Power(power_mw));
        }
        if self.is_dead() {
            return Ok(false);
        }
        let want = power_mw * duration_s / 3600.0;
        let room = self.initial_budget - self.consumed();
        let take = want.min(room.max(0.0));
        match mode {
            EnergyMode::Tx => self.tx += take,
            EnergyMode::Rx => self.rx += take,
            EnergyMode::Idle => self.idle += take,
        }
        if want > 0.0 && want >= room {
            self.dead_at = Some(now);
            return Ok(true);
        }
        Ok(false)
    }

    /// Charges the idle baseline from the last settlement up to `now`.
    pub fn settle_idle(&mut self, idle_mw: f64, now: SimTime) -> bool {
        if now <= self.idle_settled || self.is_dead() {
            self.idle_settled = self.idle_settled.max(now);
            return false;
        }
        let dt_ns = now.since(self.idle_settled).as_nanos() as f64;
        self.idle_settled = now;
        let want = idle_mw * dt_ns / NS_PER_HOUR;
        let room = self.initial_budget - self.consumed();
        if want >= room && want > 0.0 {
            self.idle += room.max(0.0);
            self.dead_at = Some(now);
            return true;
        }
        self.idle += want;
        false
    }
}

/// Totals over a set of ledgers: (total, mean per node) in mWh.
pub fn energy_summary(ledgers: &[EnergyLedger]) -> (f64, f64) {
    let total: f64 = ledgers.iter().map(EnergyLedger::consumed).sum();
    let mean = if ledgers.is_empty() { 0.0 } else { total / ledgers.len() as f64 };
    (total, mean)
}
