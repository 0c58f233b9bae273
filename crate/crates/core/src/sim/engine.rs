//! Discrete-event engine tying the radio, MAC, routing, power control,
//! recovery and umpire watches together.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::channel::{ActiveTx, Channel};
use super::energy::{EnergyLedger, EnergyMode};
use super::frame::{airtime, Frame};
use super::mac::{FailureOutcome, Mac, MacState};
use super::placement::place_nodes;
use super::scenario::{Scenario, ScenarioError};
use super::trace::{Trace, TraceEvent};
use crate::linkbudget::{self, PowerDbm};
use crate::metrics::{Counters, DeliveryRecord, MetricsError, MetricsRecord, RunLabels};
use crate::powerctl::{self, LoopConfig, PowerControlError, PowerControlState};
use crate::recovery::{
    charge_trial, decide_recovery, diameter_hops, repair_deadline, NeighborPowerList, RecoveryAgent, RecoveryContext,
    RecoveryDecision, RepairMode,
};
use crate::routing::umpire::{select_umpires, umpire_observe, ExpectedForward, Overheard};
use crate::routing::{
    Beacon, ControlPacket, Data, Feedback, ReleaseAction, Rerr, RouteEntry, RoutingNode, Rrep, RrepAction, RreqAction,
    TokenRegistry,
};
use crate::time::{SimDuration, SimTime};
use crate::NodeId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("invalid scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("power control: {0}")]
    PowerControl(#[from] PowerControlError),
    #[error("metrics: {0}")]
    Metrics(#[from] MetricsError),
    #[error("energy accounting at node {node}: {reason}")]
    Energy { node: NodeId, reason: String },
}

impl SimError {
    /// Errors caused by the input rather than by the run itself.
    pub fn is_config_error(&self) -> bool {
        matches!(self, SimError::Scenario(_) | SimError::PowerControl(PowerControlError::Config(_)))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Event {
    AppSend { k: u32 },
    MacAttempt { node: usize, generation: u64 },
    TxEnd { node: usize },
    Tick { node: usize },
    RreqRelease { node: usize, origin: NodeId, rreq_id: u32 },
    RepairDeadline { node: usize, dest: NodeId, generation: u64 },
    UmpireTimeout { watch: usize },
    Fault { index: usize },
}

#[derive(Debug)]
struct Scheduled {
    at: SimTime,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Flow {
    pub last_use: SimTime,
    pub prehop: Option<NodeId>,
    pub is_source: bool,
}

/// Everything one node keeps.
#[derive(Clone, Debug)]
pub struct NodeState {
    pub id: NodeId,
    pub black_hole: bool,
    pub routing: RoutingNode,
    pub pc: PowerControlState<f64>,
    pub npl: NeighborPowerList,
    pub recovery: RecoveryAgent,
    pub mac: Mac,
    pub energy: EnergyLedger,
    /// Neighbors this node recently forwarded data to.
    pub next_hops: BTreeMap<NodeId, SimTime>,
    /// Neighbors that recently forwarded data to this node.
    pub prev_hops: BTreeMap<NodeId, SimTime>,
    /// Destinations this node recently carried data for.
    pub flows: BTreeMap<NodeId, Flow>,
    predicted: BTreeSet<NodeId>,
}

impl NodeState {
    pub fn alive(&self) -> bool {
        !self.energy.is_dead()
    }
}

#[derive(Clone, Debug)]
struct Watch {
    expected: ExpectedForward,
    destination: NodeId,
    umpires: Vec<NodeId>,
    observed: Vec<Option<Overheard>>,
}

/// Result of a finished run.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub metrics: MetricsRecord,
    pub counters: Counters,
    pub deliveries: Vec<DeliveryRecord>,
    pub energy: Vec<EnergyLedger>,
    pub positions: Vec<(f64, f64)>,
    pub convicted: Vec<NodeId>,
    pub trace: Vec<String>,
}

pub struct Simulation {
    scenario: Scenario,
    now: SimTime,
    end: SimTime,
    heap: BinaryHeap<Scheduled>,
    seq: u64,
    rng: ChaCha8Rng,
    channel: Channel,
    positions: Vec<(f64, f64)>,
    nodes: Vec<NodeState>,
    registry: TokenRegistry,
    trace: Trace,
    counters: Counters,
    deliveries: Vec<DeliveryRecord>,
    delivered: HashSet<(NodeId, u64)>,
    watches: Vec<Watch>,
    open_watches: Vec<usize>,
    /// (umpire, forwarder, destination) -> last repair request overheard.
    repair_heard: HashMap<(NodeId, NodeId, NodeId), SimTime>,
    frame_seq: u64,
    repair_window: SimDuration,
    noise_floor: f64,
    max_power: f64,
    stale_after: SimDuration,
    error: Option<SimError>,
}

fn power_loop(s: &Scenario) -> Result<LoopConfig<f64>, SimError> {
    let p = &s.power_control;
    let max = s.max_power().0;
    let mds = powerctl::target_rx_power(&s.radio, p.bits_per_symbol, p.ber_target, p.margin_db)?;
    // Never aim below what the receiver can decode.
    let target = mds.0.max(s.radio.rx_threshold.0 + p.margin_db);
    let cfg = LoopConfig::new(PowerDbm(target))
        .with_bounds(p.min_power_dbm.min(max), max)
        .with_step(p.step_db)
        .with_alpha(p.ewma_alpha);
    cfg.validate()?;
    Ok(cfg)
}

impl Simulation {
    pub fn new(scenario: &Scenario) -> Result<Self, SimError> {
        scenario.validate()?;
        let s = scenario.clone();
        let mut place_rng = ChaCha8Rng::seed_from_u64(s.seed);
        let positions = place_nodes(&s, &mut place_rng)?;
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
        rng.set_stream(1);
        let n = s.node_count;
        let channel = Channel::new(&positions, &s.radio, s.pathloss, s.mac.cca_time);
        let loop_cfg = power_loop(&s)?;
        let stale_after = SimDuration(s.beacon_period.as_nanos() * u64::from(s.recovery.stale_periods));
        let range = linkbudget::max_range(&s.radio, s.pathloss).map_err(ScenarioError::from)?;
        let repair_window = repair_deadline(diameter_hops(n, s.field_diagonal(), range), s.recovery.node_traversal);
        let mut nodes = Vec::with_capacity(n);
        for i in 0..n {
            let id = NodeId::from(i);
            nodes.push(NodeState {
                id,
                black_hole: s.black_holes.contains(&id),
                routing: RoutingNode::new(id, n, s.routing.clone()),
                pc: PowerControlState::new(loop_cfg.clone())?,
                npl: NeighborPowerList::new(s.recovery.npl_alpha, stale_after),
                recovery: RecoveryAgent::new(s.recovery.queue_limit),
                mac: Mac::new(&s.mac),
                energy: EnergyLedger::new(s.energy.budget_mwh),
                next_hops: BTreeMap::new(),
                prev_hops: BTreeMap::new(),
                flows: BTreeMap::new(),
                predicted: BTreeSet::new(),
            });
        }
        let mut sim = Simulation {
            end: SimTime::ZERO + s.sim_time,
            now: SimTime::ZERO,
            heap: BinaryHeap::new(),
            seq: 0,
            rng,
            channel,
            positions,
            nodes,
            registry: TokenRegistry::new(n),
            trace: Trace::new(false),
            counters: Counters::default(),
            deliveries: Vec::new(),
            delivered: HashSet::new(),
            watches: Vec::new(),
            open_watches: Vec::new(),
            repair_heard: HashMap::new(),
            frame_seq: 0,
            repair_window,
            noise_floor: s.radio.noise_floor().0,
            max_power: s.max_power().0,
            stale_after,
            error: None,
            scenario: s,
        };
        for k in 0..sim.scenario.traffic.packet_count {
            let at = sim.scenario.traffic.start + SimDuration(sim.scenario.traffic.interval.as_nanos() * u64::from(k));
            sim.schedule(at, Event::AppSend { k });
        }
        for node in 0..n {
            let first = SimDuration(sim.rng.gen_range(0..sim.scenario.beacon_period.as_nanos().max(1)));
            sim.schedule(SimTime::ZERO + first, Event::Tick { node });
        }
        for index in 0..sim.scenario.link_faults.len() {
            let at = sim.scenario.link_faults[index].at;
            sim.schedule(at, Event::Fault { index });
        }
        Ok(sim)
    }

    pub fn with_trace(mut self, enabled: bool) -> Self {
        self.trace = Trace::new(enabled);
        self
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn scenario(&self) -> &Scenario {
        &self.scenario
    }

    pub fn positions(&self) -> &[(f64, f64)] {
        &self.positions
    }

    pub fn registry(&self) -> &TokenRegistry {
        &self.registry
    }

    pub fn nodes(&self) -> &[NodeState] {
        &self.nodes
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn deliveries(&self) -> &[DeliveryRecord] {
        &self.deliveries
    }

    pub fn channel(&self) -> &Channel {
        &self.channel
    }

    /// Usable route from `from` to `to` at the current time.
    pub fn route(&self, from: NodeId, to: NodeId) -> Option<&RouteEntry> {
        self.nodes[from.index()].routing.route(to, self.now, &self.registry)
    }

    fn schedule(&mut self, at: SimTime, event: Event) {
        self.seq += 1;
        self.heap.push(Scheduled { at, seq: self.seq, event });
    }

    /// Processes every event up to and including `t` (capped at the end of
    /// the run).
    pub fn run_until(&mut self, t: SimTime) -> Result<(), SimError> {
        let t = t.min(self.end);
        while self.heap.peek().is_some_and(|e| e.at <= t) {
            let Scheduled { at, event, .. } = self.heap.pop().unwrap();
            self.now = at;
            self.dispatch(event);
            if let Some(e) = self.error.take() {
                return Err(e);
            }
        }
        self.now = self.now.max(t);
        Ok(())
    }

    pub fn run_to_end(mut self) -> Result<RunOutput, SimError> {
        let end = self.end;
        self.run_until(end)?;
        self.now = end;
        let idle = self.scenario.energy.idle_mw;
        for n in &mut self.nodes {
            n.energy.settle_idle(idle, end);
        }
        for i in 0..self.nodes.len() {
            let e = &self.nodes[i].energy;
            let ev = TraceEvent::Energy { tx_mwh: e.tx, rx_mwh: e.rx, idle_mwh: e.idle };
            self.trace.push(end, NodeId::from(i), ev);
        }
        let labels = RunLabels {
            node_count: self.scenario.node_count,
            tx_power_dbm: self.max_power,
            payload_bytes: self.scenario.traffic.payload_bytes,
            seed: self.scenario.seed,
            sim_time_s: self.scenario.sim_time.as_secs_f64(),
        };
        let per_node: Vec<f64> = self.nodes.iter().map(|n| n.energy.consumed()).collect();
        let metrics = MetricsRecord::build(&labels, &self.counters, &self.deliveries, &per_node)?;
        Ok(RunOutput {
            metrics,
            counters: self.counters,
            deliveries: self.deliveries,
            energy: self.nodes.iter().map(|n| n.energy.clone()).collect(),
            positions: self.positions,
            convicted: self.registry.red_nodes().collect(),
            trace: self.trace.into_lines(),
        })
    }

    fn dispatch(&mut self, event: Event) {
        match event {
            Event::AppSend { k } => self.app_send(k),
            Event::MacAttempt { node, generation } => self.mac_attempt(node, generation),
            Event::TxEnd { node } => self.tx_end(node),
            Event::Tick { node } => self.tick(node),
            Event::RreqRelease { node, origin, rreq_id } => self.rreq_release(node, origin, rreq_id),
            Event::RepairDeadline { node, dest, generation } => self.repair_deadline(node, dest, generation),
            Event::UmpireTimeout { watch } => self.umpire_timeout(watch),
            Event::Fault { index } => {
                let f = self.scenario.link_faults[index];
                self.channel.apply_fault(f.a, f.b, f.kind);
                self.trace.push(self.now, f.a, TraceEvent::LinkFault { a: f.a, b: f.b });
            }
        }
    }

    fn alive(&self, i: usize) -> bool {
        self.nodes[i].alive()
    }

    fn die(&mut self, i: usize) {
        self.channel.abort(NodeId::from(i));
        self.nodes[i].mac.clear();
        self.trace.push(self.now, NodeId::from(i), TraceEvent::Death);
    }

    /// Charges `mw` for `secs` (after the idle baseline up to now). Returns
    /// false if the node is, or just became, dead.
    fn charge(&mut self, i: usize, mode: EnergyMode, mw: f64, secs: f64) -> bool {
        let idle = self.scenario.energy.idle_mw;
        let now = self.now;
        let ledger = &mut self.nodes[i].energy;
        if ledger.is_dead() {
            return false;
        }
        let killed = ledger.settle_idle(idle, now)
            || match ledger.account(mode, mw, secs, now) {
                Ok(k) => k,
                Err(e) => {
                    self.error.get_or_insert(SimError::Energy { node: NodeId::from(i), reason: e.to_string() });
                    false
                }
            };
        if killed {
            self.die(i);
        }
        !killed
    }

    // ---- traffic ----

    fn app_send(&mut self, k: u32) {
        let t = self.scenario.traffic.clone();
        let src = t.source.index();
        if !self.alive(src) || self.registry.is_red(t.source) {
            return;
        }
        let data = Data::new(u64::from(k), t.source, t.destination, self.now, t.payload_bytes);
        self.counters.sent += 1;
        self.trace.push(self.now, t.source, TraceEvent::AppSend { uid: data.uid, destination: t.destination });
        let now = self.now;
        self.nodes[src].flows.insert(t.destination, Flow { last_use: now, prehop: None, is_source: true });
        self.route_data(src, data, "app");
    }

    fn notify(&mut self, i: usize, data: &Data) {
        self.counters.notifications += 1;
        self.trace.push(self.now, NodeId::from(i), TraceEvent::UpperLayerNotify { uid: data.uid, attempts: data.attempts });
    }

    fn route_data(&mut self, i: usize, data: Data, trigger: &str) {
        let me = NodeId::from(i);
        let dest = data.destination;
        if self.nodes[i].recovery.is_pending(dest) {
            if let Err(d) = self.nodes[i].recovery.enqueue(dest, data) {
                self.queue_drop(i, d.uid, "repair queue full");
            }
            return;
        }
        let now = self.now;
        if let Some(next) = self.nodes[i].routing.route(dest, now, &self.registry).map(|e| e.next_hop) {
            let until = now + self.scenario.routing.route_lifetime;
            let node = &mut self.nodes[i];
            node.routing.table.touch(dest, until);
            node.next_hops.insert(next, now);
            node.npl.set_active(next, true);
            if let Some(f) = node.flows.get_mut(&dest) {
                f.last_use = now;
            }
            let uid = data.uid;
            if !self.send(i, Some(next), ControlPacket::Data(data)) {
                self.queue_drop(i, uid, "mac queue full");
            }
            return;
        }
        let prehop = data.trail.len().checked_sub(2).map(|k| data.trail[k]).filter(|_| data.trail.last() == Some(&me));
        let ctx = self.recovery_context(i, dest, data.source == me, data.attempts, prehop.is_some());
        let decision = decide_recovery(&ctx);
        self.trace.push(
            now,
            me,
            TraceEvent::Recovery { destination: dest, decision, attempt_count: data.attempts, trigger: trigger.to_string() },
        );
        match decision {
            RecoveryDecision::UpperLayerNotify => self.notify(i, &data),
            RecoveryDecision::LocalRepair => {
                self.start_repair(i, dest, RepairMode::LocalRepair, "local repair");
                self.enqueue_or_drop(i, dest, data);
            }
            RecoveryDecision::NotifySource if ctx.is_source => {
                self.start_repair(i, dest, RepairMode::Discovery, trigger);
                self.enqueue_or_drop(i, dest, data);
            }
            RecoveryDecision::NotifySource => {
                let seq = self.known_seq(i, dest);
                self.send(i, None, ControlPacket::Rerr(Rerr { unreachable: vec![(dest, seq)], handoff_to: None, carried: vec![] }));
                self.start_repair(i, dest, RepairMode::LocalRepair, "notify source");
                self.enqueue_or_drop(i, dest, data);
            }
            RecoveryDecision::HandoffToPrehop => {
                let to = prehop.unwrap();
                let seq = self.known_seq(i, dest);
                self.trace.push(now, me, TraceEvent::Handoff { to, destination: dest, packets: 1 });
                let rerr = Rerr { unreachable: vec![(dest, seq)], handoff_to: Some(to), carried: vec![data] };
                self.send(i, Some(to), ControlPacket::Rerr(rerr));
            }
        }
    }

    fn recovery_context(&self, i: usize, dest: NodeId, is_source: bool, attempts: u8, has_prehop: bool) -> RecoveryContext {
        let n = &self.nodes[i];
        RecoveryContext {
            is_source,
            attempt_count: attempts,
            residual_energy_mwh: n.energy.residual(),
            repair_energy_threshold_mwh: self.scenario.recovery.repair_energy_fraction * self.scenario.energy.budget_mwh,
            local_repair_failed: n.recovery.local_repair_failed(dest),
            has_prehop,
        }
    }

    fn known_seq(&self, i: usize, dest: NodeId) -> u32 {
        self.nodes[i].routing.table.get(dest).and_then(|e| e.dest_seq).unwrap_or(0)
    }

    fn enqueue_or_drop(&mut self, i: usize, dest: NodeId, data: Data) {
        if let Err(d) = self.nodes[i].recovery.enqueue(dest, data) {
            self.queue_drop(i, d.uid, "repair queue full");
        }
    }

    fn queue_drop(&mut self, i: usize, uid: u64, reason: &str) {
        self.counters.queue_drops += 1;
        self.trace.push(self.now, NodeId::from(i), TraceEvent::QueueDrop { uid, reason: reason.to_string() });
    }

    /// Floods a request for `dest` and, for a blocking repair, parks data
    /// until a reply or the deadline.
    fn start_repair(&mut self, i: usize, dest: NodeId, mode: RepairMode, reason: &str) {
        let deadline = self.now + self.repair_window;
        let generation = self.nodes[i].recovery.begin(dest, mode, deadline);
        self.schedule(deadline, Event::RepairDeadline { node: i, dest, generation });
        self.flood_rreq(i, dest, reason);
    }

    fn flood_rreq(&mut self, i: usize, dest: NodeId, reason: &str) {
        let now = self.now;
        if let Some(rreq) = self.nodes[i].routing.discover(dest, now, &self.registry) {
            self.counters.discoveries += 1;
            let ev = TraceEvent::RreqOriginated { destination: dest, rreq_id: rreq.rreq_id, reason: reason.to_string() };
            self.trace.push(now, NodeId::from(i), ev);
            self.send(i, None, ControlPacket::Rreq(rreq));
        }
    }

    fn repair_deadline(&mut self, i: usize, dest: NodeId, generation: u64) {
        if !self.alive(i) {
            return;
        }
        let now = self.now;
        let current = self.nodes[i].recovery.pending(dest).map(|p| p.generation);
        if current != Some(generation) {
            return;
        }
        if self.nodes[i].routing.route(dest, now, &self.registry).is_some() {
            self.flush(i, dest);
            return;
        }
        let Some(exp) = self.nodes[i].recovery.expire(dest, generation) else {
            return;
        };
        let ev = TraceEvent::RepairTimeout { destination: dest, retry: exp.retry.len(), abandoned: exp.abandoned.len() };
        self.trace.push(now, NodeId::from(i), ev);
        for d in &exp.abandoned {
            self.notify(i, d);
        }
        for d in exp.retry {
            self.route_data(i, d, "repair timeout");
        }
    }

    fn flush(&mut self, i: usize, dest: NodeId) {
        let queued = self.nodes[i].recovery.complete(dest);
        if let Some(e) = self.nodes[i].routing.table.get(dest) {
            let ev = TraceEvent::RouteReady { destination: dest, hop_count: e.hop_count, path: e.accumulated_path.clone() };
            self.trace.push(self.now, NodeId::from(i), ev);
        }
        for d in queued {
            self.route_data(i, d, "route ready");
        }
    }

    /// Flushes every pending repair that has a usable route by now.
    fn flush_ready(&mut self, i: usize) {
        let now = self.now;
        let ready: Vec<NodeId> = self.nodes[i]
            .recovery
            .pending_destinations()
            .filter(|d| self.nodes[i].routing.route(*d, now, &self.registry).is_some())
            .collect();
        for d in ready {
            self.flush(i, d);
        }
    }

    // ---- MAC ----

    /// Queues a frame; false if the MAC queue was full.
    fn send(&mut self, i: usize, dst: Option<NodeId>, packet: ControlPacket) -> bool {
        self.frame_seq += 1;
        let src = NodeId::from(i);
        let frame = Frame { id: self.frame_seq, src, dst, token: self.registry.token(src), tx_power_dbm: self.max_power, packet };
        let ok = self.nodes[i].mac.push(frame, &self.scenario.mac).is_ok();
        self.kick(i);
        ok
    }

    fn kick(&mut self, i: usize) {
        let n = &self.nodes[i];
        if n.mac.state == MacState::Idle && !n.mac.queue.is_empty() && n.alive() {
            let d = self.nodes[i].mac.backoff(&self.scenario.mac, &mut self.rng);
            let generation = self.nodes[i].mac.generation;
            self.schedule(self.now + d, Event::MacAttempt { node: i, generation });
        }
    }

    fn tx_power(&self, i: usize, frame: &Frame) -> f64 {
        let n = &self.nodes[i];
        if !self.scenario.power_control.enabled {
            return self.max_power;
        }
        match (&frame.packet, frame.dst) {
            (ControlPacket::Data(_), Some(d)) => n.pc.tx_power_for(d).0,
            (ControlPacket::Beacon(_), _) => n.pc.broadcast_power(n.next_hops.keys().copied()).0,
            _ => self.max_power,
        }
    }

    fn mac_attempt(&mut self, i: usize, generation: u64) {
        if !self.alive(i) || self.nodes[i].mac.generation != generation || self.nodes[i].mac.state != MacState::Contending {
            return;
        }
        let me = NodeId::from(i);
        if self.channel.carrier_busy(me, self.now) {
            self.mac_failure(i);
            return;
        }
        let Some(mut frame) = self.nodes[i].mac.queue.front().cloned() else {
            self.nodes[i].mac.state = MacState::Idle;
            return;
        };
        let power = self.tx_power(i, &frame);
        frame.tx_power_dbm = power;
        frame.token = self.registry.token(me);
        let bytes = frame.wire_bytes(self.scenario.mac.header_bytes);
        let air = airtime(bytes, self.scenario.data_rate);
        let rf_mw = linkbudget::dbm_to_mw(PowerDbm(power)).map(|p| p.0).unwrap_or(0.0);
        let mw = rf_mw + self.scenario.energy.tx_electronics_mw;
        if !self.charge(i, EnergyMode::Tx, mw, air.as_secs_f64()) {
            return;
        }
        self.trace.push(
            self.now,
            me,
            TraceEvent::Tx { frame: frame.id, kind: frame.packet.kind().to_string(), dst: frame.dst, power_dbm: power, bytes, airtime_ns: air.as_nanos() },
        );
        self.nodes[i].mac.state = MacState::Transmitting;
        self.channel.begin(frame, power, self.now, air);
        self.schedule(self.now + air, Event::TxEnd { node: i });
    }

    fn tx_end(&mut self, i: usize) {
        let Some(tx) = self.channel.finish(NodeId::from(i)) else {
            return;
        };
        let secs = tx.airtime().as_secs_f64();
        let rx_mw = self.scenario.energy.rx_mw;
        let mut decoded = Vec::new();
        for j in 0..self.nodes.len() {
            if j == i || !self.alive(j) {
                continue;
            }
            let rx = self.channel.rx_power(tx.sender(), NodeId::from(j), tx.power_dbm);
            if rx < self.channel.rx_threshold_dbm {
                continue;
            }
            if !self.charge(j, EnergyMode::Rx, rx_mw, secs) {
                continue;
            }
            if tx.corrupted[j] {
                self.counters.collisions += 1;
            } else {
                decoded.push((j, rx));
            }
        }
        let acked = match tx.frame.dst {
            None => true,
            Some(d) => decoded.iter().any(|&(j, _)| j == d.index()),
        };
        for &(j, rx) in &decoded {
            if self.alive(j) {
                self.handle_frame(j, &tx, rx);
            }
        }
        if !self.alive(i) || self.nodes[i].mac.state != MacState::Transmitting {
            return;
        }
        if acked {
            self.nodes[i].mac.on_success(&self.scenario.mac);
            self.kick(i);
        } else {
            self.mac_failure(i);
        }
    }

    fn mac_failure(&mut self, i: usize) {
        match self.nodes[i].mac.on_failure(&self.scenario.mac) {
            FailureOutcome::Retry => {}
            FailureOutcome::Dropped(frame) => {
                self.counters.mac_drops += 1;
                let ev = TraceEvent::MacDrop { frame: frame.id, kind: frame.packet.kind().to_string(), dst: frame.dst };
                self.trace.push(self.now, NodeId::from(i), ev);
                if let Some(nbr) = frame.dst {
                    match frame.packet {
                        ControlPacket::Data(d) => self.link_broken(i, nbr, vec![d]),
                        ControlPacket::Rerr(r) if !r.carried.is_empty() => self.link_broken(i, nbr, r.carried),
                        ControlPacket::Rrep(_) => {
                            self.counters.routing_failures += 1;
                            self.nodes[i].routing.table.invalidate_via(nbr);
                        }
                        _ => {}
                    }
                }
            }
        }
        self.kick(i);
    }

    /// The link to `nbr` failed at the MAC: spend a trial on the packets that
    /// were lost on it and route them (and anything else queued for `nbr`)
    /// again.
    fn link_broken(&mut self, i: usize, nbr: NodeId, lost: Vec<Data>) {
        self.nodes[i].routing.table.invalidate_via(nbr);
        self.nodes[i].next_hops.remove(&nbr);
        self.nodes[i].predicted.remove(&nbr);
        let (retry, abandoned) = charge_trial(lost);
        for d in &abandoned {
            self.notify(i, d);
        }
        let mac = &mut self.nodes[i].mac;
        let mut stranded = Vec::new();
        if mac.state == MacState::Idle {
            let queue = std::mem::take(&mut mac.queue);
            for f in queue {
                match f.packet {
                    ControlPacket::Data(d) if f.dst == Some(nbr) => stranded.push(d),
                    packet => mac.queue.push_back(Frame { packet, ..f }),
                }
            }
        }
        for d in retry.into_iter().chain(stranded) {
            self.route_data(i, d, "link broken");
        }
    }

    // ---- reception ----

    fn handle_frame(&mut self, j: usize, tx: &ActiveTx, rx: f64) {
        let f = &tx.frame;
        let s = f.src;
        let me = NodeId::from(j);
        if f.token.is_red() || self.registry.is_red(s) || self.registry.is_red(me) {
            return;
        }
        let now = self.now;
        let snr = rx - self.noise_floor;
        let normalized = rx - f.tx_power_dbm + self.max_power;
        {
            let node = &mut self.nodes[j];
            node.routing.neighbors.observe(s, snr);
            node.npl.update(s, normalized, now);
        }
        self.check_prediction(j, s);
        self.overhear(me, f);
        if f.dst.is_some_and(|d| d != me) {
            return;
        }
        match &f.packet {
            ControlPacket::Rreq(r) => {
                match self.nodes[j].routing.handle_rreq(s, r, snr, now, &self.registry) {
                    RreqAction::Hold { origin, rreq_id, release_at } => {
                        let jitter = self.rng.gen_range(0..=self.scenario.rreq_jitter.as_nanos());
                        self.schedule(release_at + SimDuration(jitter), Event::RreqRelease { node: j, origin, rreq_id });
                    }
                    RreqAction::Reply(rrep) => self.send_rrep(j, rrep),
                    RreqAction::Drop(_) | RreqAction::Absorbed => {}
                }
                self.flush_ready(j);
            }
            ControlPacket::Rrep(r) => {
                match self.nodes[j].routing.handle_rrep(s, r, snr, now, &self.registry) {
                    RrepAction::Deliver(_) => {}
                    RrepAction::Forward { rrep, next_hop } => {
                        self.send(j, Some(next_hop), ControlPacket::Rrep(rrep));
                    }
                    RrepAction::Drop(reason) => self.trace.push(now, me, TraceEvent::RrepDropped { reason }),
                }
                self.flush_ready(j);
            }
            ControlPacket::Rerr(r) => self.handle_rerr(j, s, r),
            ControlPacket::Beacon(b) => self.handle_beacon(j, s, b),
            ControlPacket::Data(d) => {
                let mut d = d.clone();
                d.airtime_ns += tx.airtime().as_nanos();
                self.handle_data(j, s, d);
            }
        }
    }

    fn send_rrep(&mut self, j: usize, rrep: Rrep) {
        let now = self.now;
        match self.nodes[j].routing.route(rrep.origin, now, &self.registry).map(|e| e.next_hop) {
            Some(next) => {
                self.send(j, Some(next), ControlPacket::Rrep(rrep));
            }
            None => self.counters.routing_failures += 1,
        }
    }

    fn rreq_release(&mut self, j: usize, origin: NodeId, rreq_id: u32) {
        if !self.alive(j) {
            return;
        }
        match self.nodes[j].routing.release_rreq(origin, rreq_id, self.now, &self.registry) {
            ReleaseAction::Rebroadcast(r) => {
                self.send(j, None, ControlPacket::Rreq(r));
            }
            ReleaseAction::Reply(rrep) => self.send_rrep(j, rrep),
            ReleaseAction::Nothing => {}
        }
    }

    fn handle_rerr(&mut self, j: usize, sender: NodeId, rerr: &Rerr) {
        let me = NodeId::from(j);
        let now = self.now;
        let invalidated = self.nodes[j].routing.handle_rerr(sender, rerr);
        let t = &self.scenario.traffic;
        if me == t.source && rerr.unreachable.iter().any(|(d, _)| *d == t.destination) {
            self.counters.rerr_at_source += 1;
            let destinations = rerr.unreachable.iter().map(|(d, _)| *d).collect();
            self.trace.push(now, me, TraceEvent::RerrAtSource { from: sender, destinations });
        }
        if rerr.handoff_to == Some(me) {
            for mut d in rerr.carried.iter().cloned() {
                if let Some(k) = d.trail.iter().position(|&n| n == me) {
                    d.trail.truncate(k + 1);
                }
                self.route_data(j, d, "handoff");
            }
        } else if !invalidated.is_empty() && me != t.source {
            self.send(j, None, ControlPacket::Rerr(Rerr { unreachable: invalidated, handoff_to: None, carried: vec![] }));
        }
    }

    fn handle_beacon(&mut self, j: usize, sender: NodeId, b: &Beacon) {
        let me = NodeId::from(j);
        let Some(fb) = b.feedback.iter().find(|f| f.neighbor == me) else {
            return;
        };
        let pc = &mut self.nodes[j].pc;
        let current = pc.tx_power_for(sender).0;
        pc.record_feedback(sender, PowerDbm(fb.rssi_dbm - fb.echoed_tx_dbm + current));
        pc.adjust_tx_power(sender);
    }

    fn handle_data(&mut self, j: usize, sender: NodeId, mut d: Data) {
        let me = NodeId::from(j);
        let now = self.now;
        self.nodes[j].prev_hops.insert(sender, now);
        if let Some(k) = d.trail.iter().position(|&n| n == me) {
            d.trail.truncate(k);
        }
        d.trail.push(me);
        if d.destination == me {
            if self.delivered.insert((me, d.uid)) {
                self.counters.received += 1;
                let rec = DeliveryRecord { uid: d.uid, sent: d.created, received: now, airtime_ns: d.airtime_ns, hops: d.hops() };
                let ev = TraceEvent::Deliver {
                    uid: d.uid,
                    delay_ns: rec.delay_ns(),
                    airtime_ns: d.airtime_ns,
                    hops: rec.hops,
                    trail: d.trail.clone(),
                };
                self.trace.push(now, me, ev);
                self.deliveries.push(rec);
            } else {
                self.counters.duplicates += 1;
                self.trace.push(now, me, TraceEvent::Duplicate { uid: d.uid });
            }
            return;
        }
        if self.scenario.umpire.enabled {
            self.open_watch(j, sender, &d);
        }
        if self.nodes[j].black_hole {
            self.counters.black_hole_drops += 1;
            self.trace.push(now, me, TraceEvent::BlackHoleDrop { uid: d.uid });
            return;
        }
        self.nodes[j].flows.insert(d.destination, Flow { last_use: now, prehop: Some(sender), is_source: false });
        self.route_data(j, d, "forward");
    }

    // ---- umpires ----

    fn open_watch(&mut self, f: usize, prev: NodeId, d: &Data) {
        let fid = NodeId::from(f);
        let p = prev.index();
        let now = self.now;
        let next = self.nodes[f].routing.route(d.destination, now, &self.registry).map(|e| e.next_hop);
        let rx_thr = self.channel.rx_threshold_dbm;
        let hears = |u: NodeId| match next {
            Some(nh) => self.channel.gain(fid, u) >= self.channel.gain(fid, nh),
            None => self.max_power + self.channel.gain(fid, u) >= rx_thr,
        };
        let fnode = &self.nodes[f];
        let pnode = &self.nodes[p];
        let candidates: Vec<(NodeId, f64)> = fnode
            .routing
            .neighbors
            .good()
            .filter(|c| c.neighbor != fid && c.neighbor != prev)
            .filter(|c| pnode.routing.neighbors.is_good(c.neighbor))
            .filter(|c| self.nodes[c.neighbor.index()].alive() && !self.registry.is_red(c.neighbor))
            .filter(|c| hears(c.neighbor))
            .map(|c| (c.neighbor, c.snr_ewma))
            .collect();
        let prev_ok = hears(prev) && pnode.alive();
        let umpires = select_umpires(prev_ok.then_some(prev), &candidates);
        if umpires.is_empty() {
            return;
        }
        let expected = ExpectedForward {
            forwarder: fid,
            uid: d.uid,
            digest: d.digest,
            handed_at: now,
            timeout: self.scenario.umpire.timeout,
        };
        let watch = self.watches.len();
        self.watches.push(Watch { expected, destination: d.destination, observed: vec![None; umpires.len()], umpires });
        self.open_watches.push(watch);
        self.schedule(now + self.scenario.umpire.timeout, Event::UmpireTimeout { watch });
    }

    /// `u` decoded `f`, whoever it was addressed to.
    fn overhear(&mut self, u: NodeId, f: &Frame) {
        let s = f.src;
        if let ControlPacket::Rreq(r) = &f.packet {
            if r.origin == s {
                self.repair_heard.insert((u, s, r.destination), self.now);
            }
        }
        let now = self.now;
        for &w in &self.open_watches {
            let watch = &mut self.watches[w];
            if watch.expected.forwarder != s {
                continue;
            }
            let Some(k) = watch.umpires.iter().position(|&x| x == u) else {
                continue;
            };
            if watch.observed[k].is_some() {
                continue;
            }
            let uid = watch.expected.uid;
            let digest = match &f.packet {
                ControlPacket::Data(d) if d.uid == uid => Some(d.digest),
                ControlPacket::Rreq(r) if r.origin == s && r.destination == watch.destination => Some(watch.expected.digest),
                ControlPacket::Rerr(r) => r.carried.iter().find(|d| d.uid == uid).map(|d| d.digest),
                _ => None,
            };
            if let Some(digest) = digest {
                watch.observed[k] = Some(Overheard { at: now, digest });
            }
        }
    }

    fn umpire_timeout(&mut self, w: usize) {
        self.open_watches.retain(|&x| x != w);
        let watch = self.watches[w].clone();
        let fid = watch.expected.forwarder;
        if self.registry.is_red(fid) || !self.alive(fid.index()) {
            return;
        }
        let handed = watch.expected.handed_at;
        let mut observations = Vec::new();
        let mut voters = Vec::new();
        for (k, &u) in watch.umpires.iter().enumerate() {
            if !self.alive(u.index()) {
                continue;
            }
            // A forwarder already repairing the route is not dropping.
            let repair = self
                .repair_heard
                .get(&(u, fid, watch.destination))
                .filter(|&&t| t + self.repair_window >= handed && t <= handed + watch.expected.timeout)
                .map(|&t| Overheard { at: t.max(handed), digest: watch.expected.digest });
            observations.push(watch.observed[k].or(repair));
            voters.push(u);
        }
        let verdict = umpire_observe(&watch.expected, &observations);
        if verdict.convict && self.registry.convict(fid, self.now.as_nanos()) {
            self.counters.convictions += 1;
            let ev = TraceEvent::Convicted { forwarder: fid, umpires: voters, misbehave_votes: verdict.misbehave_votes };
            self.trace.push(self.now, fid, ev);
            let f = fid.index();
            self.nodes[f].mac.clear();
            if self.channel.is_transmitting(fid) {
                self.channel.abort(fid);
            }
        }
    }

    // ---- maintenance ----

    fn check_prediction(&mut self, i: usize, nbr: NodeId) {
        if !self.nodes[i].next_hops.contains_key(&nbr) {
            return;
        }
        let node = &self.nodes[i];
        let rc = &self.scenario.recovery;
        let thr = self.channel.rx_threshold_dbm;
        // Re-armed only once the link is back above twice the margin, so a
        // level hovering at the margin does not flood a discovery per beacon.
        if node.predicted.contains(&nbr) {
            if !node.npl.predicts_break(nbr, self.now, thr, 2.0 * rc.break_margin_db) {
                self.nodes[i].predicted.remove(&nbr);
            }
        } else if node.npl.predicts_break(nbr, self.now, thr, rc.break_margin_db) {
            self.nodes[i].predicted.insert(nbr);
            self.predicted_break(i, nbr);
        }
    }

    /// Acts ahead of a link break for every flow routed over `nbr`.
    fn predicted_break(&mut self, i: usize, nbr: NodeId) {
        let now = self.now;
        let flows: Vec<(NodeId, Flow)> = self.nodes[i]
            .flows
            .iter()
            .filter(|(d, _)| self.nodes[i].routing.table.get(**d).is_some_and(|e| e.valid && e.next_hop == nbr))
            .map(|(d, f)| (*d, *f))
            .collect();
        for (dest, flow) in flows {
            if self.nodes[i].recovery.is_pending(dest) {
                continue;
            }
            let ctx = self.recovery_context(i, dest, flow.is_source, 0, flow.prehop.is_some());
            let decision = decide_recovery(&ctx);
            self.trace.push(now, NodeId::from(i), TraceEvent::Recovery { destination: dest, decision, attempt_count: 0, trigger: "predicted".into() });
            match decision {
                RecoveryDecision::LocalRepair => self.flood_rreq(i, dest, "predicted break"),
                RecoveryDecision::NotifySource if ctx.is_source => self.flood_rreq(i, dest, "predicted break"),
                RecoveryDecision::HandoffToPrehop => {
                    let to = flow.prehop.unwrap();
                    let seq = self.known_seq(i, dest);
                    self.trace.push(now, NodeId::from(i), TraceEvent::Handoff { to, destination: dest, packets: 0 });
                    self.send(i, Some(to), ControlPacket::Rerr(Rerr { unreachable: vec![(dest, seq)], handoff_to: Some(to), carried: vec![] }));
                }
                RecoveryDecision::NotifySource => {
                    let seq = self.known_seq(i, dest);
                    self.send(i, None, ControlPacket::Rerr(Rerr { unreachable: vec![(dest, seq)], handoff_to: None, carried: vec![] }));
                }
                RecoveryDecision::UpperLayerNotify => {}
            }
        }
    }

    fn tick(&mut self, i: usize) {
        let period = self.scenario.beacon_period.as_nanos();
        let next = self.rng.gen_range(period * 9 / 10..=period * 11 / 10).max(1);
        if !self.alive(i) {
            return;
        }
        self.schedule(self.now + SimDuration(next), Event::Tick { node: i });
        let now = self.now;
        if self.nodes[i].energy.settle_idle(self.scenario.energy.idle_mw, now) {
            self.die(i);
            return;
        }
        let stale = self.stale_after;
        let route_life = self.scenario.routing.route_lifetime;
        {
            let node = &mut self.nodes[i];
            node.routing.purge(now, &self.registry);
            node.npl.evict_stale(now);
            node.next_hops.retain(|_, t| now.since(*t) <= stale);
            node.prev_hops.retain(|_, t| now.since(*t) <= stale);
            node.flows.retain(|_, f| now.since(f.last_use) <= route_life);
            let keep: BTreeSet<NodeId> = node.next_hops.keys().copied().collect();
            node.predicted.retain(|n| keep.contains(n));
        }
        let hops: Vec<NodeId> = self.nodes[i].next_hops.keys().copied().collect();
        for nbr in hops {
            self.check_prediction(i, nbr);
        }
        if self.nodes[i].prev_hops.is_empty() || self.registry.is_red(NodeId::from(i)) {
            return;
        }
        let node = &self.nodes[i];
        let feedback: Vec<Feedback> = node
            .prev_hops
            .keys()
            .filter_map(|&n| node.npl.get(n).map(|r| Feedback { neighbor: n, rssi_dbm: r.rx_power_ewma, echoed_tx_dbm: self.max_power }))
            .collect();
        self.send(i, None, ControlPacket::Beacon(Beacon { feedback }));
    }
}

/// Runs a scenario to completion without a trace.
pub fn run(scenario: &Scenario) -> Result<RunOutput, SimError> {
    Simulation::new(scenario)?.run_to_end()
}

/// Runs a scenario to completion, recording the event trace.
pub fn run_traced(scenario: &Scenario) -> Result<RunOutput, SimError> {
    Simulation::new(scenario)?.with_trace(true).run_to_end()
}
