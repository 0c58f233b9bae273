//! Watchdog-style umpiring.
//!
//! When a node hands a packet to a forwarder, up to three umpires listen for
//! the forwarder's retransmission. An umpire votes "misbehave" if it never
//! hears the retransmission, hears it too late, or hears a payload whose
//! digest differs from the one handed over. With three umpires two votes
//! convict; with fewer, conviction must be unanimous.

use serde::{Deserialize, Serialize};

use crate::time::{SimDuration, SimTime};
use crate::NodeId;

pub const MAX_UMPIRES: usize = 3;

/// What the forwarder was handed and must pass on.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectedForward {
    pub forwarder: NodeId,
    pub uid: u64,
    pub digest: u64,
    pub handed_at: SimTime,
    pub timeout: SimDuration,
}

/// One umpire's record of the forwarder's retransmission.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Overheard {
    pub at: SimTime,
    pub digest: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Vote {
    Honest,
    Misbehave,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub votes: Vec<Vote>,
    pub misbehave_votes: usize,
    pub convict: bool,
}

pub fn umpire_vote(expected: &ExpectedForward, overheard: Option<Overheard>) -> Vote {
    match overheard {
        Some(o) if o.at.since(expected.handed_at) <= expected.timeout && o.digest == expected.digest => Vote::Honest,
        _ => Vote::Misbehave,
    }
}

/// Majority of three, or unanimity below three. No umpires, no conviction.
pub fn conviction_rule(misbehave_votes: usize, umpires: usize) -> bool {
    match umpires {
        0 => false,
        n if n >= MAX_UMPIRES => misbehave_votes >= 2,
        n => misbehave_votes == n,
    }
}

/// Collects one vote per umpire observation.
pub fn umpire_observe(expected: &ExpectedForward, observations: &[Option<Overheard>]) -> Verdict {
    let votes: Vec<Vote> = observations.iter().map(|o| umpire_vote(expected, *o)).collect();
    let misbehave_votes = votes.iter().filter(|v| **v == Vote::Misbehave).count();
    Verdict {
        convict: conviction_rule(misbehave_votes, votes.len()),
        votes,
        misbehave_votes,
    }
}

/// The previous hop plus the two strongest other candidates by SNR (lower id
/// on ties). `candidates` should already exclude the forwarder.
pub fn select_umpires(previous_hop: Option<NodeId>, candidates: &[(NodeId, f64)]) -> Vec<NodeId> {
    let mut out: Vec<NodeId> = previous_hop.into_iter().collect();
    let mut ranked: Vec<(NodeId, f64)> = candidates
        .iter()
        .copied()
        .filter(|(n, _)| Some(*n) != previous_hop)
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    ranked.dedup_by_key(|c| c.0);
    out.extend(ranked.into_iter().map(|c| c.0).take(MAX_UMPIRES - out.len()));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn expected() -> ExpectedForward {
        ExpectedForward {
            forwarder: NodeId(5),
            uid: 1,
            digest: 77,
            handed_at: SimTime(1_000),
            timeout: SimDuration::from_millis(1_000),
        }
    }

    fn heard(at: u64, digest: u64) -> Option<Overheard> {
        Some(Overheard { at: SimTime(at), digest })
    }

    #[test]
    fn honest_forwarder_gets_no_votes() {
        let v = umpire_observe(&expected(), &[heard(2_000, 77), heard(3_000, 77), heard(2_500, 77)]);
        assert_eq!(v.misbehave_votes, 0);
        assert!(!v.convict);
    }

    #[test]
    fn dropper_seen_by_three_is_convicted() {
        let v = umpire_observe(&expected(), &[None, None, None]);
        assert_eq!(v.misbehave_votes, 3);
        assert!(v.convict);
    }

    #[test]
    fn two_of_three_convicts() {
        let v = umpire_observe(&expected(), &[None, heard(2_000, 77), None]);
        assert!(v.convict);
        let v = umpire_observe(&expected(), &[None, heard(2_000, 77), heard(2_000, 77)]);
        assert!(!v.convict);
    }

    #[test]
    fn late_or_altered_counts_as_misbehave() {
        let late = 1_000 + SimDuration::from_millis(1_000).as_nanos() + 1;
        assert_eq!(umpire_vote(&expected(), heard(late, 77)), Vote::Misbehave);
        assert_eq!(umpire_vote(&expected(), heard(2_000, 78)), Vote::Misbehave);
    }

    #[test]
    fn fewer_umpires_need_unanimity() {
        assert!(!conviction_rule(0, 0));
        assert!(conviction_rule(1, 1));
        assert!(!conviction_rule(1, 2));
        assert!(conviction_rule(2, 2));
    }

    #[test]
    fn umpire_selection() {
        let c = [(NodeId(4), 20.0), (NodeId(2), 25.0), (NodeId(3), 25.0), (NodeId(1), 30.0)];
        assert_eq!(select_umpires(Some(NodeId(1)), &c), vec![NodeId(1), NodeId(2), NodeId(3)]);
        assert_eq!(select_umpires(None, &c), vec![NodeId(1), NodeId(2), NodeId(3)]);
        assert_eq!(select_umpires(Some(NodeId(9)), &[]), vec![NodeId(9)]);
    }
}
