//! On-demand route discovery with path accumulation, SNR-gated neighbors and
//! token-based exclusion of convicted nodes.
//!
//! [`RoutingNode`] is a pure per-node state machine. It never schedules
//! anything itself: handlers return an action and the simulator turns that
//! into frames and timers.

mod neighbor;
pub mod packet;
mod rreq_buffer;
mod table;
mod token;
pub mod umpire;

pub use neighbor::{classify_neighbor, LinkClass, NeighborClass, NeighborTable};
pub use packet::{Beacon, ControlPacket, Data, Feedback, Rerr, Rrep, Rreq};
pub use rreq_buffer::{RreqBuffer, RreqRecord, Seen};
pub use table::{Offer, RouteEntry, RoutingTable};
pub use token::{Token, TokenRegistry, TokenStatus};

use serde::{Deserialize, Serialize};

use crate::time::{SimDuration, SimTime};
use crate::NodeId;

/// Weakest-link SNR placeholder for a request that has not crossed a link.
pub const UNMEASURED_SNR_DB: f64 = f64::MAX;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoutingConfig {
    pub route_lifetime: SimDuration,
    /// How long a node collects copies of a request before acting on the best.
    pub rreq_hold: SimDuration,
    pub rreq_buffer_lifetime: SimDuration,
    pub snr_threshold_db: f64,
    pub snr_alpha: f64,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        RoutingConfig {
            route_lifetime: SimDuration::from_millis(10_000),
            rreq_hold: SimDuration::from_millis(150),
            rreq_buffer_lifetime: SimDuration::from_millis(10_000),
            snr_threshold_db: 13.0,
            snr_alpha: 0.25,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    RedSelf,
    RedSender,
    RedInPath,
    BadSender,
    Malformed,
    OwnRequest,
    Duplicate,
    NoReverseRoute,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Originate {
    /// A usable route already exists.
    Route(RouteEntry),
    Request(Rreq),
    Refused,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RreqAction {
    Drop(DropReason),
    /// First copy. Call [`RoutingNode::release_rreq`] at `release_at`.
    Hold { origin: NodeId, rreq_id: u32, release_at: SimTime },
    /// Unicast this reply along the reverse route to its origin.
    Reply(Rrep),
    /// A later copy was folded into the buffer.
    Absorbed,
}

#[derive(Clone, Debug, PartialEq)]
pub enum ReleaseAction {
    Rebroadcast(Rreq),
    Reply(Rrep),
    Nothing,
}

#[derive(Clone, Debug, PartialEq)]
pub enum RrepAction {
    Drop(DropReason),
    /// This node asked for the route and now has it.
    Deliver(RouteEntry),
    Forward { rrep: Rrep, next_hop: NodeId },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoutingNode {
    pub id: NodeId,
    pub seq: u32,
    next_rreq_id: u32,
    pub table: RoutingTable,
    pub rreqs: RreqBuffer,
    pub neighbors: NeighborTable,
    pub config: RoutingConfig,
}

impl RoutingNode {
    pub fn new(id: NodeId, node_count: usize, config: RoutingConfig) -> Self {
        RoutingNode {
            id,
            seq: 0,
            next_rreq_id: 0,
            table: RoutingTable::new(node_count),
            rreqs: RreqBuffer::new(),
            neighbors: NeighborTable::new(node_count, config.snr_alpha, config.snr_threshold_db),
            config,
        }
    }

    fn expiry(&self, now: SimTime) -> SimTime {
        now + self.config.route_lifetime
    }

    /// Usable route to `dest` whose next hop is green.
    pub fn route(&self, dest: NodeId, now: SimTime, registry: &TokenRegistry) -> Option<&RouteEntry> {
        self.table.lookup(dest, now, registry)
    }

    /// A route good enough to answer a request for `dest` on someone's
    /// behalf: usable, at least as new as `requested`, and not looping back
    /// through any node of `avoid`.
    fn fresh_route(&self, dest: NodeId, requested: Option<u32>, avoid: &[NodeId], now: SimTime, registry: &TokenRegistry) -> Option<&RouteEntry> {
        self.route(dest, now, registry).filter(|e| {
            let new_enough = match (requested, e.dest_seq) {
                (None, _) => true,
                (Some(r), Some(s)) => s >= r,
                (Some(_), None) => false,
            };
            new_enough
                && !e.accumulated_path.iter().any(|h| avoid.contains(h) || registry.is_red(*h))
        })
    }

    pub fn originate_rreq(&mut self, destination: NodeId, now: SimTime, registry: &TokenRegistry) -> Originate {
        if registry.is_red(self.id) {
            return Originate::Refused;
        }
        if let Some(e) = self.route(destination, now, registry) {
            return Originate::Route(e.clone());
        }
        match self.discover(destination, now, registry) {
            Some(r) => Originate::Request(r),
            None => Originate::Refused,
        }
    }

    /// Starts a discovery for `destination` even if a route exists. Used for
    /// repairs, where the current route is known to be failing.
    pub fn discover(&mut self, destination: NodeId, now: SimTime, registry: &TokenRegistry) -> Option<Rreq> {
        if registry.is_red(self.id) {
            return None;
        }
        self.seq = self.seq.wrapping_add(1);
        self.next_rreq_id = self.next_rreq_id.wrapping_add(1);
        let rreq = Rreq {
            origin: self.id,
            origin_seq: self.seq,
            rreq_id: self.next_rreq_id,
            destination,
            // A repair asks for something newer than the route it replaces,
            // so nobody answers from a cache that still uses the failing link.
            dest_seq: self
                .table
                .get(destination)
                .and_then(|e| e.dest_seq.map(|s| if e.valid { s.wrapping_add(1) } else { s })),
            hop_count: 0,
            path: vec![self.id],
            min_snr_db: UNMEASURED_SNR_DB,
        };
        let expiry = now + self.config.rreq_buffer_lifetime;
        self.rreqs.record(&rreq, expiry);
        if let Some(r) = self.rreqs.get_mut(rreq.origin, rreq.rreq_id) {
            r.released = true;
        }
        Some(rreq)
    }

    fn screen(&self, sender: NodeId, path: &[NodeId], registry: &TokenRegistry) -> Result<(), DropReason> {
        if registry.is_red(self.id) {
            return Err(DropReason::RedSelf);
        }
        if registry.is_red(sender) {
            return Err(DropReason::RedSender);
        }
        if path.last() != Some(&sender) || !packet::path_is_simple(path) || path.contains(&self.id) {
            return Err(DropReason::Malformed);
        }
        if path.iter().any(|&n| registry.is_red(n)) {
            return Err(DropReason::RedInPath);
        }
        if !self.neighbors.is_good(sender) {
            return Err(DropReason::BadSender);
        }
        Ok(())
    }

    /// Installs a route to every node of `path` (sender last) via the sender.
    /// `seq_of_first` is the known sequence number of `path[0]`.
    fn accumulate(&mut self, path: &[NodeId], seq_of_first: Option<u32>, min_snr_db: f64, now: SimTime) {
        let lifetime = self.expiry(now);
        for i in 0..path.len() {
            let route: Vec<NodeId> = path[i..].iter().rev().copied().collect();
            let seq = if i == 0 { seq_of_first } else { None };
            self.table.offer(RouteEntry::new(route, seq, min_snr_db, lifetime), now);
        }
    }

    /// `snr_db` is the SNR of the frame that carried `rreq`. The caller must
    /// already have folded it into `self.neighbors`.
    pub fn handle_rreq(&mut self, sender: NodeId, rreq: &Rreq, snr_db: f64, now: SimTime, registry: &TokenRegistry) -> RreqAction {
        if rreq.origin == self.id {
            return RreqAction::Drop(DropReason::OwnRequest);
        }
        if let Err(r) = self.screen(sender, &rreq.path, registry) {
            return RreqAction::Drop(r);
        }
        let mut copy = rreq.clone();
        copy.min_snr_db = rreq.min_snr_db.min(snr_db);
        self.accumulate(&copy.path, Some(copy.origin_seq), copy.min_snr_db, now);

        let expiry = now + self.config.rreq_buffer_lifetime;
        match self.rreqs.record(&copy, expiry) {
            Seen::New => {
                if copy.destination != self.id {
                    if let Some(e) = self.fresh_route(copy.destination, copy.dest_seq, &copy.path, now, registry) {
                        let rrep = self.intermediate_reply(&copy, e);
                        let r = self.rreqs.get_mut(copy.origin, copy.rreq_id).unwrap();
                        r.released = true;
                        r.replied_hops = Some(copy.path.len() as u32);
                        return RreqAction::Reply(rrep);
                    }
                }
                RreqAction::Hold {
                    origin: copy.origin,
                    rreq_id: copy.rreq_id,
                    release_at: now + self.config.rreq_hold,
                }
            }
            Seen::Better => {
                let rec = self.rreqs.get(copy.origin, copy.rreq_id).unwrap();
                let hops = copy.path.len() as u32;
                if copy.destination == self.id && rec.released && rec.replied_hops.is_some_and(|h| hops < h) {
                    self.rreqs.get_mut(copy.origin, copy.rreq_id).unwrap().replied_hops = Some(hops);
                    return RreqAction::Reply(self.destination_reply(&copy));
                }
                RreqAction::Absorbed
            }
            Seen::Duplicate => RreqAction::Drop(DropReason::Duplicate),
        }
    }

    /// Acts once on the best copy collected during the hold window.
    pub fn release_rreq(&mut self, origin: NodeId, rreq_id: u32, now: SimTime, registry: &TokenRegistry) -> ReleaseAction {
        let Some(rec) = self.rreqs.get(origin, rreq_id) else {
            return ReleaseAction::Nothing;
        };
        if rec.released || registry.is_red(self.id) {
            return ReleaseAction::Nothing;
        }
        let best = rec.best.clone();
        let hops = best.path.len() as u32;
        if best.destination == self.id {
            self.seq = self.seq.max(best.dest_seq.unwrap_or(0)).wrapping_add(1);
            let r = self.rreqs.get_mut(origin, rreq_id).unwrap();
            r.released = true;
            r.replied_hops = Some(hops);
            return ReleaseAction::Reply(self.destination_reply(&best));
        }
        if let Some(e) = self.fresh_route(best.destination, best.dest_seq, &best.path, now, registry) {
            let rrep = self.intermediate_reply(&best, e);
            let r = self.rreqs.get_mut(origin, rreq_id).unwrap();
            r.released = true;
            r.replied_hops = Some(hops);
            return ReleaseAction::Reply(rrep);
        }
        self.rreqs.get_mut(origin, rreq_id).unwrap().released = true;
        let mut out = best;
        out.path.push(self.id);
        out.hop_count = out.path.len() as u32 - 1;
        ReleaseAction::Rebroadcast(out)
    }

    fn destination_reply(&self, rreq: &Rreq) -> Rrep {
        Rrep {
            origin: rreq.origin,
            destination: self.id,
            dest_seq: self.seq,
            hop_count: 0,
            path: vec![self.id],
            min_snr_db: rreq.min_snr_db,
        }
    }

    fn intermediate_reply(&self, rreq: &Rreq, e: &RouteEntry) -> Rrep {
        let mut path: Vec<NodeId> = e.accumulated_path.iter().rev().copied().collect();
        path.push(self.id);
        Rrep {
            origin: rreq.origin,
            destination: rreq.destination,
            dest_seq: e.dest_seq.unwrap_or(0),
            hop_count: e.hop_count,
            path,
            min_snr_db: e.min_snr_db.min(rreq.min_snr_db),
        }
    }

    pub fn handle_rrep(&mut self, sender: NodeId, rrep: &Rrep, snr_db: f64, now: SimTime, registry: &TokenRegistry) -> RrepAction {
        if let Err(r) = self.screen(sender, &rrep.path, registry) {
            return RrepAction::Drop(r);
        }
        if rrep.path.first() != Some(&rrep.destination) {
            return RrepAction::Drop(DropReason::Malformed);
        }
        let min_snr = rrep.min_snr_db.min(snr_db);
        self.accumulate(&rrep.path, Some(rrep.dest_seq), min_snr, now);
        if rrep.origin == self.id {
            return match self.route(rrep.destination, now, registry) {
                Some(e) => RrepAction::Deliver(e.clone()),
                None => RrepAction::Drop(DropReason::Malformed),
            };
        }
        let Some(back) = self.route(rrep.origin, now, registry) else {
            return RrepAction::Drop(DropReason::NoReverseRoute);
        };
        let next_hop = back.next_hop;
        let mut fwd = rrep.clone();
        fwd.path.push(self.id);
        fwd.hop_count = fwd.path.len() as u32 - 1;
        fwd.min_snr_db = min_snr;
        RrepAction::Forward { rrep: fwd, next_hop }
    }

    /// Invalidates routes the sender reports as broken, where the sender is
    /// our next hop. Returns what was invalidated.
    pub fn handle_rerr(&mut self, sender: NodeId, rerr: &Rerr) -> Vec<(NodeId, u32)> {
        let mut out = Vec::new();
        for &(dest, seq) in &rerr.unreachable {
            let via_sender = self.table.get(dest).is_some_and(|e| e.valid && e.next_hop == sender);
            if via_sender {
                if let Some(bumped) = self.table.invalidate(dest) {
                    out.push((dest, bumped.max(seq)));
                }
            }
        }
        out
    }

    pub fn purge(&mut self, now: SimTime, registry: &TokenRegistry) -> usize {
        self.rreqs.purge(now);
        self.table.purge(now, registry)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    fn node(id: u32) -> RoutingNode {
        RoutingNode::new(NodeId(id), 10, RoutingConfig::default())
    }

    fn heard(n: &mut RoutingNode, from: u32, snr: f64) {
        n.neighbors.observe(NodeId(from), snr);
    }

    fn rreq_from(path: &[u32], dest: u32) -> Rreq {
        Rreq {
            origin: NodeId(path[0]),
            origin_seq: 1,
            rreq_id: 1,
            destination: NodeId(dest),
            dest_seq: None,
            hop_count: path.len() as u32 - 1,
            path: ids(path),
            min_snr_db: 30.0,
        }
    }

    #[test]
    fn originate_builds_single_entry_path() {
        let reg = TokenRegistry::new(10);
        let mut s = node(0);
        let Originate::Request(r) = s.originate_rreq(NodeId(9), SimTime(0), &reg) else {
            panic!()
        };
        assert_eq!(r.path, ids(&[0]));
        assert_eq!(r.rreq_id, 1);
        assert_eq!(r.origin_seq, 1);
    }

    #[test]
    fn red_node_cannot_originate() {
        let mut reg = TokenRegistry::new(10);
        reg.convict(NodeId(0), 0);
        assert_eq!(node(0).originate_rreq(NodeId(9), SimTime(0), &reg), Originate::Refused);
    }

    #[test]
    fn existing_route_short_circuits() {
        let reg = TokenRegistry::new(10);
        let mut s = node(0);
        s.table.offer(RouteEntry::new(ids(&[1, 9]), Some(3), 20.0, SimTime(1_000_000_000_000)), SimTime(0));
        assert!(matches!(s.originate_rreq(NodeId(9), SimTime(0), &reg), Originate::Route(_)));
    }

    #[test]
    fn intermediate_holds_then_appends_itself() {
        let reg = TokenRegistry::new(10);
        let mut b = node(2);
        heard(&mut b, 1, 25.0);
        let act = b.handle_rreq(NodeId(1), &rreq_from(&[0, 1], 9), 25.0, SimTime(0), &reg);
        let RreqAction::Hold { release_at, .. } = act else { panic!("{act:?}") };
        assert_eq!(b.handle_rreq(NodeId(1), &rreq_from(&[0, 1], 9), 25.0, SimTime(1), &reg), RreqAction::Drop(DropReason::Duplicate));
        let ReleaseAction::Rebroadcast(out) = b.release_rreq(NodeId(0), 1, release_at, &reg) else { panic!() };
        assert_eq!(out.path, ids(&[0, 1, 2]));
        assert_eq!(b.release_rreq(NodeId(0), 1, release_at, &reg), ReleaseAction::Nothing);
        // Reverse routes to the origin and the accumulated intermediate.
        assert_eq!(b.table.get(NodeId(0)).unwrap().accumulated_path, ids(&[1, 0]));
        assert_eq!(b.table.get(NodeId(1)).unwrap().hop_count, 1);
    }

    #[test]
    fn shorter_copy_during_hold_wins() {
        let reg = TokenRegistry::new(10);
        let mut b = node(5);
        heard(&mut b, 3, 25.0);
        heard(&mut b, 0, 25.0);
        b.handle_rreq(NodeId(3), &rreq_from(&[0, 2, 3], 9), 25.0, SimTime(0), &reg);
        assert_eq!(b.handle_rreq(NodeId(0), &rreq_from(&[0], 9), 25.0, SimTime(1), &reg), RreqAction::Absorbed);
        assert_eq!(b.table.get(NodeId(0)).unwrap().hop_count, 1);
        let ReleaseAction::Rebroadcast(out) = b.release_rreq(NodeId(0), 1, SimTime(2), &reg) else { panic!() };
        assert_eq!(out.path, ids(&[0, 5]));
    }

    #[test]
    fn bad_sender_is_ignored() {
        let reg = TokenRegistry::new(10);
        let mut b = node(2);
        heard(&mut b, 1, 5.0);
        assert_eq!(b.handle_rreq(NodeId(1), &rreq_from(&[0, 1], 9), 5.0, SimTime(0), &reg), RreqAction::Drop(DropReason::BadSender));
        assert!(b.table.get(NodeId(0)).is_none());
    }

    #[test]
    fn malformed_and_red_paths_dropped() {
        let mut reg = TokenRegistry::new(10);
        let mut b = node(2);
        heard(&mut b, 1, 25.0);
        assert_eq!(b.handle_rreq(NodeId(1), &rreq_from(&[0, 1, 0, 1], 9), 25.0, SimTime(0), &reg), RreqAction::Drop(DropReason::Malformed));
        assert_eq!(b.handle_rreq(NodeId(1), &rreq_from(&[0, 2, 1], 9), 25.0, SimTime(0), &reg), RreqAction::Drop(DropReason::Malformed));
        reg.convict(NodeId(4), 0);
        assert_eq!(b.handle_rreq(NodeId(1), &rreq_from(&[0, 4, 1], 9), 25.0, SimTime(0), &reg), RreqAction::Drop(DropReason::RedInPath));
        reg.convict(NodeId(1), 0);
        assert_eq!(b.handle_rreq(NodeId(1), &rreq_from(&[0, 1], 9), 25.0, SimTime(0), &reg), RreqAction::Drop(DropReason::RedSender));
    }

    #[test]
    fn destination_replies_and_rrep_travels_back() {
        let reg = TokenRegistry::new(10);
        let now = SimTime(0);
        let (mut s, mut a, mut d) = (node(0), node(1), node(9));
        heard(&mut a, 0, 25.0);
        heard(&mut d, 1, 25.0);
        heard(&mut a, 9, 25.0);
        heard(&mut s, 1, 25.0);
        let Originate::Request(r0) = s.originate_rreq(NodeId(9), now, &reg) else { panic!() };
        a.handle_rreq(NodeId(0), &r0, 25.0, now, &reg);
        let ReleaseAction::Rebroadcast(r1) = a.release_rreq(NodeId(0), r0.rreq_id, now, &reg) else { panic!() };
        d.handle_rreq(NodeId(1), &r1, 25.0, now, &reg);
        let ReleaseAction::Reply(rrep) = d.release_rreq(NodeId(0), r0.rreq_id, now, &reg) else { panic!() };
        assert_eq!(rrep.path, ids(&[9]));
        assert_eq!(d.route(NodeId(0), now, &reg).unwrap().next_hop, NodeId(1));
        let RrepAction::Forward { rrep: fwd, next_hop } = a.handle_rrep(NodeId(9), &rrep, 25.0, now, &reg) else { panic!() };
        assert_eq!(next_hop, NodeId(0));
        assert_eq!(fwd.path, ids(&[9, 1]));
        let RrepAction::Deliver(e) = s.handle_rrep(NodeId(1), &fwd, 25.0, now, &reg) else { panic!() };
        assert_eq!(e.accumulated_path, ids(&[1, 9]));
        assert_eq!(e.hop_count, 2);
        assert_eq!(e.dest_seq, Some(d.seq));
    }

    #[test]
    fn rrep_without_reverse_route_is_dropped() {
        let reg = TokenRegistry::new(10);
        let mut a = node(1);
        heard(&mut a, 9, 25.0);
        let rrep = Rrep { origin: NodeId(0), destination: NodeId(9), dest_seq: 1, hop_count: 0, path: ids(&[9]), min_snr_db: 25.0 };
        assert_eq!(a.handle_rrep(NodeId(9), &rrep, 25.0, SimTime(0), &reg), RrepAction::Drop(DropReason::NoReverseRoute));
    }

    #[test]
    fn destination_answers_strictly_shorter_late_copy() {
        let reg = TokenRegistry::new(10);
        let mut d = node(9);
        heard(&mut d, 3, 25.0);
        heard(&mut d, 4, 25.0);
        d.handle_rreq(NodeId(3), &rreq_from(&[0, 2, 3], 9), 25.0, SimTime(0), &reg);
        assert!(matches!(d.release_rreq(NodeId(0), 1, SimTime(1), &reg), ReleaseAction::Reply(_)));
        let seq = d.seq;
        assert_eq!(d.handle_rreq(NodeId(3), &rreq_from(&[0, 5, 3], 9), 25.0, SimTime(2), &reg), RreqAction::Drop(DropReason::Duplicate));
        assert!(matches!(d.handle_rreq(NodeId(4), &rreq_from(&[0, 4], 9), 25.0, SimTime(2), &reg), RreqAction::Reply(_)));
        assert_eq!(d.seq, seq);
    }

    #[test]
    fn intermediate_with_fresh_route_replies() {
        let reg = TokenRegistry::new(10);
        let mut b = node(2);
        heard(&mut b, 1, 25.0);
        b.table.offer(RouteEntry::new(ids(&[7, 9]), Some(4), 22.0, SimTime(u64::MAX)), SimTime(0));
        let mut r = rreq_from(&[0, 1], 9);
        r.dest_seq = Some(4);
        let RreqAction::Reply(rrep) = b.handle_rreq(NodeId(1), &r, 25.0, SimTime(0), &reg) else { panic!() };
        assert_eq!(rrep.path, ids(&[9, 7, 2]));
        assert_eq!(rrep.dest_seq, 4);
        let mut b2 = node(2);
        heard(&mut b2, 1, 25.0);
        b2.table.offer(RouteEntry::new(ids(&[7, 9]), Some(3), 22.0, SimTime(u64::MAX)), SimTime(0));
        assert!(matches!(b2.handle_rreq(NodeId(1), &r, 25.0, SimTime(0), &reg), RreqAction::Hold { .. }));
    }

    #[test]
    fn rerr_only_from_next_hop() {
        let mut a = node(1);
        a.table.offer(RouteEntry::new(ids(&[2, 9]), Some(1), 22.0, SimTime(u64::MAX)), SimTime(0));
        let rerr = Rerr { unreachable: vec![(NodeId(9), 2)], handoff_to: None, carried: vec![] };
        assert!(a.handle_rerr(NodeId(5), &rerr).is_empty());
        assert_eq!(a.handle_rerr(NodeId(2), &rerr), vec![(NodeId(9), 2)]);
    }
}
