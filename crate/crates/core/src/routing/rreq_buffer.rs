//! Recently seen route requests, keyed by `(origin, rreq_id)`.
//!
//! Each node keeps the best copy of a request it has heard during a short
//! hold window and acts on it once, at release. Later copies only update the
//! stored best.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::packet::Rreq;
use crate::time::SimTime;
use crate::NodeId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RreqRecord {
    pub origin: NodeId,
    pub rreq_id: u32,
    pub expiry: SimTime,
    /// Best copy so far, as received (sender last in its path).
    pub best: Rreq,
    pub released: bool,
    /// Hop count of the copy this node last answered, if it answered.
    pub replied_hops: Option<u32>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Seen {
    /// First copy; a new record was created.
    New,
    /// Strictly better than the stored copy, which was replaced.
    Better,
    Duplicate,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct RreqBuffer {
    records: BTreeMap<(NodeId, u32), RreqRecord>,
}

fn better(a: &Rreq, b: &Rreq) -> bool {
    (a.path.len(), std::cmp::Reverse(ordered(a.min_snr_db))) < (b.path.len(), std::cmp::Reverse(ordered(b.min_snr_db)))
}

fn ordered(x: f64) -> i64 {
    // Millidecibel resolution is plenty for tie-breaking.
    (x * 1000.0).round() as i64
}

impl RreqBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, rreq: &Rreq, expiry: SimTime) -> Seen {
        let key = (rreq.origin, rreq.rreq_id);
        match self.records.get_mut(&key) {
            None => {
                self.records.insert(
                    key,
                    RreqRecord {
                        origin: rreq.origin,
                        rreq_id: rreq.rreq_id,
                        expiry,
                        best: rreq.clone(),
                        released: false,
                        replied_hops: None,
                    },
                );
                Seen::New
            }
            Some(r) if better(rreq, &r.best) => {
                r.best = rreq.clone();
                Seen::Better
            }
            Some(_) => Seen::Duplicate,
        }
    }

    pub fn get(&self, origin: NodeId, rreq_id: u32) -> Option<&RreqRecord> {
        self.records.get(&(origin, rreq_id))
    }

    pub fn get_mut(&mut self, origin: NodeId, rreq_id: u32) -> Option<&mut RreqRecord> {
        self.records.get_mut(&(origin, rreq_id))
    }

    pub fn contains(&self, origin: NodeId, rreq_id: u32) -> bool {
        self.records.contains_key(&(origin, rreq_id))
    }

    pub fn purge(&mut self, now: SimTime) {
        self.records.retain(|_, r| r.expiry > now);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rreq(path: &[u32], snr: f64) -> Rreq {
        Rreq {
            origin: NodeId(0),
            origin_seq: 1,
            rreq_id: 4,
            destination: NodeId(9),
            dest_seq: None,
            hop_count: path.len() as u32 - 1,
            path: path.iter().map(|&i| NodeId(i)).collect(),
            min_snr_db: snr,
        }
    }

    #[test]
    fn duplicates_and_improvements() {
        let mut b = RreqBuffer::new();
        assert_eq!(b.record(&rreq(&[0, 1, 2], 20.0), SimTime(100)), Seen::New);
        assert_eq!(b.record(&rreq(&[0, 3, 4], 20.0), SimTime(100)), Seen::Duplicate);
        assert_eq!(b.record(&rreq(&[0, 3, 4], 21.0), SimTime(100)), Seen::Better);
        assert_eq!(b.record(&rreq(&[0, 5], 15.0), SimTime(100)), Seen::Better);
        assert_eq!(b.get(NodeId(0), 4).unwrap().best.path, vec![NodeId(0), NodeId(5)]);
        b.purge(SimTime(100));
        assert!(b.is_empty());
    }
}
