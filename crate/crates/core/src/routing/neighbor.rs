use serde::{Deserialize, Serialize};

use crate::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LinkClass {
    Good,
    Bad,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborClass {
    pub neighbor: NodeId,
    pub snr_ewma: f64,
    pub class: LinkClass,
}

/// Folds one SNR sample into `record` (or starts a new one) and reclassifies.
/// Good iff the smoothed SNR is at least `threshold_db`.
pub fn classify_neighbor(
    record: Option<NeighborClass>,
    neighbor: NodeId,
    measured_snr_db: f64,
    alpha: f64,
    threshold_db: f64,
) -> NeighborClass {
    let snr_ewma = match record {
        None => measured_snr_db,
        Some(r) => alpha * measured_snr_db + (1.0 - alpha) * r.snr_ewma,
    };
    NeighborClass {
        neighbor,
        snr_ewma,
        class: if snr_ewma >= threshold_db {
            LinkClass::Good
        } else {
            LinkClass::Bad
        },
    }
}

/// SNR history of every neighbor this node has heard, indexed by node id.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NeighborTable {
    pub alpha: f64,
    pub threshold_db: f64,
    records: Vec<Option<NeighborClass>>,
}

impl NeighborTable {
    pub fn new(node_count: usize, alpha: f64, threshold_db: f64) -> Self {
        NeighborTable {
            alpha,
            threshold_db,
            records: vec![None; node_count],
        }
    }

    pub fn observe(&mut self, neighbor: NodeId, snr_db: f64) -> LinkClass {
        let i = neighbor.index();
        if i >= self.records.len() {
            self.records.resize(i + 1, None);
        }
        let r = classify_neighbor(self.records[i], neighbor, snr_db, self.alpha, self.threshold_db);
        self.records[i] = Some(r);
        r.class
    }

    pub fn get(&self, neighbor: NodeId) -> Option<&NeighborClass> {
        self.records.get(neighbor.index()).and_then(Option::as_ref)
    }

    pub fn is_good(&self, neighbor: NodeId) -> bool {
        self.get(neighbor).is_some_and(|r| r.class == LinkClass::Good)
    }

    pub fn good(&self) -> impl Iterator<Item = &NeighborClass> {
        self.records.iter().flatten().filter(|r| r.class == LinkClass::Good)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_is_inclusive() {
        assert_eq!(classify_neighbor(None, NodeId(1), 13.0, 0.25, 13.0).class, LinkClass::Good);
        assert_eq!(classify_neighbor(None, NodeId(1), 12.9, 0.25, 13.0).class, LinkClass::Bad);
    }

    /// Alternating 20/6 dB with alpha 0.25 settles into a two-point cycle.
    /// The fixed points solve x = a*s1 + (1-a)*(a*s2 + (1-a)*x).
    #[test]
    fn alternating_samples_cycle() {
        let (a, hi, lo): (f64, f64, f64) = (0.25, 20.0, 6.0);
        let b = 1.0 - a;
        let after_lo = (a * lo + b * a * hi) / (1.0 - b * b);
        let after_hi = (a * hi + b * a * lo) / (1.0 - b * b);
        assert!((after_lo - 12.0).abs() < 1e-12);
        assert!((after_hi - 14.0).abs() < 1e-12);

        let mut t = NeighborTable::new(2, a, 13.0);
        for _ in 0..200 {
            t.observe(NodeId(1), hi);
            t.observe(NodeId(1), lo);
        }
        assert!((t.get(NodeId(1)).unwrap().snr_ewma - after_lo).abs() < 1e-9);
        assert!(!t.is_good(NodeId(1)));
        assert_eq!(t.observe(NodeId(1), hi), LinkClass::Good);
    }
}
