use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::token::TokenRegistry;
use crate::time::SimTime;
use crate::NodeId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RouteEntry {
    pub destination: NodeId,
    pub next_hop: NodeId,
    pub hop_count: u32,
    pub dest_seq: Option<u32>,
    /// Absolute expiry time.
    pub lifetime: SimTime,
    /// `[next_hop, ..., destination]`.
    pub accumulated_path: Vec<NodeId>,
    pub min_snr_db: f64,
    pub valid: bool,
}

impl RouteEntry {
    pub fn new(accumulated_path: Vec<NodeId>, dest_seq: Option<u32>, min_snr_db: f64, lifetime: SimTime) -> Self {
        assert!(!accumulated_path.is_empty(), "route path must name at least the next hop");
        RouteEntry {
            destination: *accumulated_path.last().unwrap(),
            next_hop: accumulated_path[0],
            hop_count: accumulated_path.len() as u32,
            dest_seq,
            lifetime,
            accumulated_path,
            min_snr_db,
            valid: true,
        }
    }

    pub fn is_usable(&self, now: SimTime) -> bool {
        self.valid && self.lifetime > now
    }

    /// Fewer hops first, then higher weakest-link SNR, then lower next hop.
    fn quality_cmp(&self, other: &RouteEntry) -> Ordering {
        other
            .hop_count
            .cmp(&self.hop_count)
            .then(self.min_snr_db.total_cmp(&other.min_snr_db))
            .then(other.next_hop.cmp(&self.next_hop))
    }
}

/// What `RoutingTable::offer` did with a candidate route.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Offer {
    Installed,
    Refreshed,
    Rejected,
}

/// Routes indexed densely by destination id.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RoutingTable {
    entries: Vec<Option<RouteEntry>>,
}

impl RoutingTable {
    pub fn new(node_count: usize) -> Self {
        RoutingTable {
            entries: vec![None; node_count],
        }
    }

    fn slot(&mut self, dest: NodeId) -> &mut Option<RouteEntry> {
        let i = dest.index();
        if i >= self.entries.len() {
            self.entries.resize(i + 1, None);
        }
        &mut self.entries[i]
    }

    pub fn get(&self, dest: NodeId) -> Option<&RouteEntry> {
        self.entries.get(dest.index()).and_then(Option::as_ref)
    }

    /// Usable route whose next hop still holds a green token.
    pub fn lookup(&self, dest: NodeId, now: SimTime, registry: &TokenRegistry) -> Option<&RouteEntry> {
        self.get(dest)
            .filter(|e| e.is_usable(now) && !registry.is_red(e.next_hop))
    }

    /// Installs `cand` if it beats the current entry.
    ///
    /// A strictly newer destination sequence number always wins. Otherwise
    /// the comparison is fewer hops, higher weakest-link SNR, lower next-hop
    /// id. Invalid or expired entries are always replaced. An equally good
    /// candidate only extends the lifetime.
    pub fn offer(&mut self, cand: RouteEntry, now: SimTime) -> Offer {
        let slot = self.slot(cand.destination);
        let Some(cur) = slot.as_mut() else {
            *slot = Some(cand);
            return Offer::Installed;
        };
        let merged_seq = cur.dest_seq.max(cand.dest_seq);
        if !cur.is_usable(now) {
            *cur = RouteEntry { dest_seq: merged_seq, ..cand };
            return Offer::Installed;
        }
        let order = match (cand.dest_seq, cur.dest_seq) {
            (Some(a), Some(b)) if a != b => a.cmp(&b),
            _ => cand.quality_cmp(cur),
        };
        match order {
            Ordering::Greater => {
                *cur = RouteEntry { dest_seq: merged_seq, ..cand };
                Offer::Installed
            }
            Ordering::Equal if cand.accumulated_path == cur.accumulated_path => {
                cur.lifetime = cur.lifetime.max(cand.lifetime);
                cur.dest_seq = merged_seq;
                Offer::Refreshed
            }
            _ => Offer::Rejected,
        }
    }

    /// Extends the lifetime of an in-use route.
    pub fn touch(&mut self, dest: NodeId, until: SimTime) {
        if let Some(e) = self.slot(dest).as_mut() {
            if e.valid {
                e.lifetime = e.lifetime.max(until);
            }
        }
    }

    /// Marks the route invalid and bumps its sequence number. Returns the
    /// bumped number if a valid route existed.
    pub fn invalidate(&mut self, dest: NodeId) -> Option<u32> {
        let e = self.slot(dest).as_mut()?;
        if !e.valid {
            return None;
        }
        e.valid = false;
        let seq = e.dest_seq.map_or(1, |s| s.wrapping_add(1));
        e.dest_seq = Some(seq);
        Some(seq)
    }

    /// Invalidates every valid route whose next hop is `hop`; returns the
    /// affected destinations with their bumped sequence numbers.
    pub fn invalidate_via(&mut self, hop: NodeId) -> Vec<(NodeId, u32)> {
        let dests: Vec<NodeId> = self
            .entries
            .iter()
            .flatten()
            .filter(|e| e.valid && e.next_hop == hop)
            .map(|e| e.destination)
            .collect();
        dests
            .into_iter()
            .filter_map(|d| self.invalidate(d).map(|s| (d, s)))
            .collect()
    }

    /// Invalidates expired routes and routes through red nodes.
    pub fn purge(&mut self, now: SimTime, registry: &TokenRegistry) -> usize {
        let mut n = 0;
        for e in self.entries.iter_mut().flatten() {
            if e.valid && (e.lifetime <= now || e.accumulated_path.iter().any(|&h| registry.is_red(h))) {
                e.valid = false;
                e.dest_seq = Some(e.dest_seq.map_or(1, |s| s.wrapping_add(1)));
                n += 1;
            }
        }
        n
    }

    pub fn iter(&self) -> impl Iterator<Item = &RouteEntry> {
        self.entries.iter().flatten()
    }

    pub fn valid_entries(&self) -> impl Iterator<Item = &RouteEntry> {
        self.iter().filter(|e| e.valid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<NodeId> {
        v.iter().map(|&i| NodeId(i)).collect()
    }

    const LATER: SimTime = SimTime(10_000_000_000);

    #[test]
    fn keeps_smaller_hop_count() {
        let mut t = RoutingTable::new(8);
        let now = SimTime(0);
        assert_eq!(t.offer(RouteEntry::new(ids(&[3, 2, 0]), Some(1), 20.0, LATER), now), Offer::Installed);
        assert_eq!(t.offer(RouteEntry::new(ids(&[4, 0]), Some(1), 20.0, LATER), now), Offer::Installed);
        assert_eq!(t.get(NodeId(0)).unwrap().hop_count, 2);
        assert_eq!(t.offer(RouteEntry::new(ids(&[5, 6, 0]), Some(1), 30.0, LATER), now), Offer::Rejected);
        assert_eq!(t.get(NodeId(0)).unwrap().next_hop, NodeId(4));
    }

    #[test]
    fn newer_sequence_wins_over_hops() {
        let mut t = RoutingTable::new(8);
        let now = SimTime(0);
        t.offer(RouteEntry::new(ids(&[4, 0]), Some(1), 20.0, LATER), now);
        assert_eq!(t.offer(RouteEntry::new(ids(&[3, 2, 0]), Some(2), 20.0, LATER), now), Offer::Installed);
        assert_eq!(t.get(NodeId(0)).unwrap().hop_count, 3);
    }

    #[test]
    fn ties_broken_by_snr_then_next_hop() {
        let mut t = RoutingTable::new(8);
        let now = SimTime(0);
        t.offer(RouteEntry::new(ids(&[5, 0]), None, 20.0, LATER), now);
        assert_eq!(t.offer(RouteEntry::new(ids(&[6, 0]), None, 25.0, LATER), now), Offer::Installed);
        assert_eq!(t.offer(RouteEntry::new(ids(&[2, 0]), None, 25.0, LATER), now), Offer::Installed);
        assert_eq!(t.offer(RouteEntry::new(ids(&[3, 0]), None, 25.0, LATER), now), Offer::Rejected);
        assert_eq!(t.get(NodeId(0)).unwrap().next_hop, NodeId(2));
    }

    #[test]
    fn invalid_entries_are_replaced_and_seq_bumped() {
        let mut t = RoutingTable::new(8);
        let now = SimTime(0);
        t.offer(RouteEntry::new(ids(&[4, 0]), Some(7), 20.0, LATER), now);
        assert_eq!(t.invalidate_via(NodeId(4)), vec![(NodeId(0), 8)]);
        assert!(t.lookup(NodeId(0), now, &TokenRegistry::new(8)).is_none());
        assert_eq!(t.offer(RouteEntry::new(ids(&[3, 2, 0]), None, 20.0, LATER), now), Offer::Installed);
        assert_eq!(t.get(NodeId(0)).unwrap().dest_seq, Some(8));
    }

    #[test]
    fn purge_removes_red_and_expired() {
        let mut t = RoutingTable::new(8);
        let mut reg = TokenRegistry::new(8);
        t.offer(RouteEntry::new(ids(&[4, 5, 0]), None, 20.0, LATER), SimTime(0));
        t.offer(RouteEntry::new(ids(&[3]), None, 20.0, SimTime(5)), SimTime(0));
        reg.convict(NodeId(5), 1);
        assert_eq!(t.purge(SimTime(6), &reg), 2);
        assert_eq!(t.valid_entries().count(), 0);
    }

    #[test]
    fn lookup_skips_red_next_hop() {
        let mut t = RoutingTable::new(8);
        let mut reg = TokenRegistry::new(8);
        t.offer(RouteEntry::new(ids(&[4, 0]), None, 20.0, LATER), SimTime(0));
        reg.convict(NodeId(4), 1);
        assert!(t.lookup(NodeId(0), SimTime(1), &reg).is_none());
    }
}
