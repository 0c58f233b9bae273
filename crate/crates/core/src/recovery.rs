//! Link-break prediction and the repair decision flow.
//!
//! Every node keeps a neighbors power list (NPL): a smoothed received-power
//! reading per neighbor. A link whose reading drifts to within a margin of
//! the receive threshold is treated as about to break. The node that sees
//! the break then repairs locally, hands repair to its upstream hop, or
//! tells the source, and a packet is abandoned after fifteen failed trials.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::routing::Data;
use crate::time::{SimDuration, SimTime};
use crate::NodeId;

/// End-to-end delivery attempts allowed per packet.
pub const MAX_TRIALS: u8 = 15;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborPowerRecord {
    pub neighbor: NodeId,
    pub last_rx_power: f64,
    pub rx_power_ewma: f64,
    pub last_update: SimTime,
    pub on_active_route: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NeighborPowerList {
    pub alpha: f64,
    pub stale_after: SimDuration,
    records: BTreeMap<NodeId, NeighborPowerRecord>,
}

/// Folds one reception into `record`, creating it on first contact.
pub fn update_npl(
    record: Option<NeighborPowerRecord>,
    neighbor: NodeId,
    rx_power_dbm: f64,
    alpha: f64,
    now: SimTime,
) -> NeighborPowerRecord {
    match record {
        None => NeighborPowerRecord {
            neighbor,
            last_rx_power: rx_power_dbm,
            rx_power_ewma: rx_power_dbm,
            last_update: now,
            on_active_route: false,
        },
        Some(r) => NeighborPowerRecord {
            last_rx_power: rx_power_dbm,
            rx_power_ewma: alpha * rx_power_dbm + (1.0 - alpha) * r.rx_power_ewma,
            last_update: now,
            ..r
        },
    }
}

impl NeighborPowerList {
    pub fn new(alpha: f64, stale_after: SimDuration) -> Self {
        NeighborPowerList {
            alpha,
            stale_after,
            records: BTreeMap::new(),
        }
    }

    pub fn update(&mut self, neighbor: NodeId, rx_power_dbm: f64, now: SimTime) -> &NeighborPowerRecord {
        let prev = self.records.get(&neighbor).copied();
        let rec = update_npl(prev, neighbor, rx_power_dbm, self.alpha, now);
        self.records.insert(neighbor, rec);
        &self.records[&neighbor]
    }

    pub fn get(&self, neighbor: NodeId) -> Option<&NeighborPowerRecord> {
        self.records.get(&neighbor)
    }

    pub fn set_active(&mut self, neighbor: NodeId, active: bool) {
        if let Some(r) = self.records.get_mut(&neighbor) {
            r.on_active_route = active;
        }
    }

    pub fn is_stale(&self, rec: &NeighborPowerRecord, now: SimTime) -> bool {
        now.since(rec.last_update) > self.stale_after
    }

    /// Removes records not refreshed within `stale_after`.
    pub fn evict_stale(&mut self, now: SimTime) -> Vec<NodeId> {
        let stale: Vec<NodeId> = self
            .records
            .values()
            .filter(|r| now.since(r.last_update) > self.stale_after)
            .map(|r| r.neighbor)
            .collect();
        for n in &stale {
            self.records.remove(n);
        }
        stale
    }

    pub fn iter(&self) -> impl Iterator<Item = &NeighborPowerRecord> {
        self.records.values()
    }

    /// Break prediction for `neighbor`; a missing or stale record counts as
    /// broken.
    pub fn predicts_break(&self, neighbor: NodeId, now: SimTime, rx_threshold_dbm: f64, margin_db: f64) -> bool {
        match self.records.get(&neighbor) {
            Some(r) if !self.is_stale(r, now) => predict_break(r, rx_threshold_dbm, margin_db),
            _ => true,
        }
    }
}

/// True iff the smoothed power is strictly below threshold + margin.
pub fn predict_break(record: &NeighborPowerRecord, rx_threshold_dbm: f64, margin_db: f64) -> bool {
    record.rx_power_ewma < rx_threshold_dbm + margin_db
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryDecision {
    LocalRepair,
    HandoffToPrehop,
    NotifySource,
    UpperLayerNotify,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecoveryContext {
    pub is_source: bool,
    pub attempt_count: u8,
    pub residual_energy_mwh: f64,
    pub repair_energy_threshold_mwh: f64,
    /// This node already tried a local repair for the route and it timed out.
    pub local_repair_failed: bool,
    pub has_prehop: bool,
}

/// Repair decision for a broken or about-to-break link.
///
/// Checked in order: trial cap, source, earlier failed local repair (hand
/// off upstream), enough residual energy (repair here), otherwise hand off
/// to the upstream hop, or tell the source when there is none.
pub fn decide_recovery(ctx: &RecoveryContext) -> RecoveryDecision {
    if ctx.attempt_count >= MAX_TRIALS {
        return RecoveryDecision::UpperLayerNotify;
    }
    if ctx.is_source {
        return RecoveryDecision::NotifySource;
    }
    let upstream = if ctx.has_prehop {
        RecoveryDecision::HandoffToPrehop
    } else {
        RecoveryDecision::NotifySource
    };
    if ctx.local_repair_failed {
        return upstream;
    }
    if ctx.residual_energy_mwh > ctx.repair_energy_threshold_mwh {
        return RecoveryDecision::LocalRepair;
    }
    upstream
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RepairMode {
    /// An intermediate node rediscovering the rest of the route.
    LocalRepair,
    /// The source rediscovering the whole route.
    Discovery,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PendingRoute {
    pub destination: NodeId,
    pub mode: RepairMode,
    pub deadline: SimTime,
    pub generation: u64,
    pub queue: VecDeque<Data>,
}

/// Per-node bookkeeping of routes under repair and the data waiting on them.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RecoveryAgent {
    pub queue_limit: usize,
    pending: BTreeMap<NodeId, PendingRoute>,
    /// Destinations whose local repair at this node has timed out at least
    /// once since the route last worked.
    failed_local: BTreeMap<NodeId, bool>,
    next_generation: u64,
}

/// Outcome of a repair deadline passing.
#[derive(Clone, Debug, PartialEq)]
pub struct Expired {
    pub mode: RepairMode,
    /// Packets still within the trial cap, attempts already incremented.
    pub retry: Vec<Data>,
    /// Packets that just used their last trial.
    pub abandoned: Vec<Data>,
}

impl RecoveryAgent {
    pub fn new(queue_limit: usize) -> Self {
        RecoveryAgent {
            queue_limit,
            pending: BTreeMap::new(),
            failed_local: BTreeMap::new(),
            next_generation: 0,
        }
    }

    pub fn pending(&self, dest: NodeId) -> Option<&PendingRoute> {
        self.pending.get(&dest)
    }

    pub fn is_pending(&self, dest: NodeId) -> bool {
        self.pending.contains_key(&dest)
    }

    pub fn pending_destinations(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.pending.keys().copied()
    }

    /// Starts (or restarts) a repair. Returns the generation to match the
    /// deadline timer against.
    pub fn begin(&mut self, dest: NodeId, mode: RepairMode, deadline: SimTime) -> u64 {
        self.next_generation += 1;
        let generation = self.next_generation;
        let entry = self.pending.entry(dest).or_insert_with(|| PendingRoute {
            destination: dest,
            mode,
            deadline,
            generation,
            queue: VecDeque::new(),
        });
        entry.mode = mode;
        entry.deadline = deadline;
        entry.generation = generation;
        generation
    }

    /// Queues `data` behind a pending repair. On overflow the newest packet,
    /// `data` itself, is handed back.
    pub fn enqueue(&mut self, dest: NodeId, data: Data) -> Result<(), Data> {
        let limit = self.queue_limit;
        match self.pending.get_mut(&dest) {
            Some(p) if p.queue.len() < limit => {
                p.queue.push_back(data);
                Ok(())
            }
            _ => Err(data),
        }
    }

    /// Route found: hands back the queue in FIFO order.
    pub fn complete(&mut self, dest: NodeId) -> Vec<Data> {
        self.failed_local.remove(&dest);
        self.pending
            .remove(&dest)
            .map(|p| p.queue.into_iter().collect())
            .unwrap_or_default()
    }

    pub fn local_repair_failed(&self, dest: NodeId) -> bool {
        self.failed_local.get(&dest).copied().unwrap_or(false)
    }

    pub fn clear_failure(&mut self, dest: NodeId) {
        self.failed_local.remove(&dest);
    }

    /// Deadline for `dest` at `generation`. Stale generations are ignored.
    pub fn expire(&mut self, dest: NodeId, generation: u64) -> Option<Expired> {
        if self.pending.get(&dest)?.generation != generation {
            return None;
        }
        let p = self.pending.remove(&dest)?;
        if p.mode == RepairMode::LocalRepair {
            self.failed_local.insert(dest, true);
        }
        let (retry, abandoned) = charge_trial(p.queue);
        Some(Expired {
            mode: p.mode,
            retry,
            abandoned,
        })
    }
}

/// Spends one trial on every packet and splits off those that hit the cap.
pub fn charge_trial<I: IntoIterator<Item = Data>>(packets: I) -> (Vec<Data>, Vec<Data>) {
    let mut retry = Vec::new();
    let mut abandoned = Vec::new();
    for mut d in packets {
        d.attempts = d.attempts.saturating_add(1).min(MAX_TRIALS);
        if d.attempts >= MAX_TRIALS {
            abandoned.push(d);
        } else {
            retry.push(d);
        }
    }
    (retry, abandoned)
}

/// Hop-count estimate of the network diameter: the field diagonal in radio
/// ranges plus two, capped by `n - 1`.
pub fn diameter_hops(node_count: usize, field_diagonal_m: f64, range_m: f64) -> u32 {
    let by_geometry = if range_m > 0.0 {
        (field_diagonal_m / range_m).ceil() as u64 + 2
    } else {
        node_count as u64
    };
    by_geometry.min(node_count.saturating_sub(1).max(1) as u64) as u32
}

/// Repair deadline: twice the time to cross the network diameter.
pub fn repair_deadline(diameter_hops: u32, node_traversal: SimDuration) -> SimDuration {
    SimDuration(2 * u64::from(diameter_hops) * node_traversal.as_nanos())
}

#[cfg(test)]
mod tests {
    use super::*;

    const N: NodeId = NodeId(3);

    fn ctx() -> RecoveryContext {
        RecoveryContext {
            is_source: false,
            attempt_count: 0,
            residual_energy_mwh: 80.0,
            repair_energy_threshold_mwh: 20.0,
            local_repair_failed: false,
            has_prehop: true,
        }
    }

    #[test]
    fn npl_ewma() {
        let mut l = NeighborPowerList::new(0.25, SimDuration::from_millis(3_000));
        assert_eq!(l.update(N, -70.0, SimTime(0)).rx_power_ewma, -70.0);
        assert_eq!(l.update(N, -82.0, SimTime(1)).rx_power_ewma, -73.0);
        assert_eq!(l.get(N).unwrap().last_rx_power, -82.0);
    }

    #[test]
    fn npl_eviction() {
        let mut l = NeighborPowerList::new(0.25, SimDuration::from_millis(3_000));
        l.update(N, -70.0, SimTime(0));
        assert!(l.evict_stale(SimTime::from_secs_f64(3.0)).is_empty());
        assert_eq!(l.evict_stale(SimTime::from_secs_f64(3.5)), vec![N]);
        assert!(l.get(N).is_none());
    }

    #[test]
    fn break_prediction_boundaries() {
        let mut l = NeighborPowerList::new(0.25, SimDuration::from_millis(3_000));
        l.update(N, -71.0, SimTime(0));
        assert!(!l.predicts_break(N, SimTime(0), -81.0, 3.0));
        let r = |p| NeighborPowerRecord { neighbor: N, last_rx_power: p, rx_power_ewma: p, last_update: SimTime(0), on_active_route: true };
        assert!(predict_break(&r(-79.0), -81.0, 3.0));
        assert!(!predict_break(&r(-78.0), -81.0, 3.0));
        assert!(l.predicts_break(N, SimTime::from_secs_f64(10.0), -81.0, 3.0));
        assert!(l.predicts_break(NodeId(9), SimTime(0), -81.0, 3.0));
    }

    #[test]
    fn decision_flow() {
        assert_eq!(decide_recovery(&RecoveryContext { attempt_count: 15, ..ctx() }), RecoveryDecision::UpperLayerNotify);
        assert_eq!(decide_recovery(&ctx()), RecoveryDecision::LocalRepair);
        assert_eq!(decide_recovery(&RecoveryContext { residual_energy_mwh: 10.0, ..ctx() }), RecoveryDecision::HandoffToPrehop);
        assert_eq!(decide_recovery(&RecoveryContext { residual_energy_mwh: 20.0, ..ctx() }), RecoveryDecision::HandoffToPrehop);
        assert_eq!(decide_recovery(&RecoveryContext { is_source: true, ..ctx() }), RecoveryDecision::NotifySource);
        assert_eq!(decide_recovery(&RecoveryContext { local_repair_failed: true, ..ctx() }), RecoveryDecision::HandoffToPrehop);
        assert_eq!(
            decide_recovery(&RecoveryContext { local_repair_failed: true, has_prehop: false, ..ctx() }),
            RecoveryDecision::NotifySource
        );
        assert_eq!(decide_recovery(&RecoveryContext { is_source: true, attempt_count: 15, ..ctx() }), RecoveryDecision::UpperLayerNotify);
    }

    fn data(uid: u64, attempts: u8) -> Data {
        let mut d = Data::new(uid, NodeId(0), NodeId(1), SimTime(0), 70);
        d.attempts = attempts;
        d
    }

    #[test]
    fn queue_overflow_drops_newest() {
        let mut a = RecoveryAgent::new(2);
        assert!(a.enqueue(N, data(0, 0)).is_err());
        a.begin(N, RepairMode::Discovery, SimTime(10));
        a.enqueue(N, data(1, 0)).unwrap();
        a.enqueue(N, data(2, 0)).unwrap();
        assert_eq!(a.enqueue(N, data(3, 0)).unwrap_err().uid, 3);
        let q = a.complete(N);
        assert_eq!(q.iter().map(|d| d.uid).collect::<Vec<_>>(), vec![1, 2]);
        assert!(!a.is_pending(N));
    }

    #[test]
    fn expiry_charges_and_caps_trials() {
        let mut a = RecoveryAgent::new(8);
        let g1 = a.begin(N, RepairMode::LocalRepair, SimTime(10));
        a.enqueue(N, data(1, 13)).unwrap();
        a.enqueue(N, data(2, 14)).unwrap();
        let g2 = a.begin(N, RepairMode::LocalRepair, SimTime(20));
        assert!(a.expire(N, g1).is_none());
        let e = a.expire(N, g2).unwrap();
        assert_eq!(e.retry.iter().map(|d| (d.uid, d.attempts)).collect::<Vec<_>>(), vec![(1, 14)]);
        assert_eq!(e.abandoned.iter().map(|d| (d.uid, d.attempts)).collect::<Vec<_>>(), vec![(2, 15)]);
        assert!(a.local_repair_failed(N));
        a.complete(N);
        assert!(!a.local_repair_failed(N));
    }

    #[test]
    fn deadline_arithmetic() {
        assert_eq!(diameter_hops(500, 1000.0 * 2f64.sqrt(), 376.782), 6);
        assert_eq!(diameter_hops(3, 1000.0, 100.0), 2);
        assert_eq!(diameter_hops(2, 1000.0, 100.0), 1);
        assert_eq!(repair_deadline(6, SimDuration::from_millis(200)), SimDuration::from_millis(2_400));
    }
}
