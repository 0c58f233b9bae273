//! Slotted CSMA/CA with binary exponential backoff.
//!
//! Every attempt waits DIFS plus a uniform number of slots from
//! `[0, cw)`. If the medium is busy when the wait ends, or a unicast frame
//! is not decoded by its addressee, the attempt fails and the window
//! doubles up to `cw_max`. After `retry_limit` retries the next failure
//! drops the frame.

use std::collections::VecDeque;

use rand::Rng;

use super::frame::Frame;
use super::scenario::MacParams;
use crate::time::SimDuration;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MacState {
    Idle,
    Contending,
    Transmitting,
}

#[derive(Clone, Debug)]
pub struct Mac {
    pub queue: VecDeque<Frame>,
    pub state: MacState,
    pub failures: u32,
    pub cw: u32,
    /// Bumped on every scheduled attempt so stale timers can be ignored.
    pub generation: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FailureOutcome {
    Retry,
    Dropped(Frame),
}

impl Mac {
    pub fn new(params: &MacParams) -> Self {
        Mac {
            queue: VecDeque::new(),
            state: MacState::Idle,
            failures: 0,
            cw: params.cw_min,
            generation: 0,
        }
    }

    /// Queues a frame; hands it back if the queue is full.
    pub fn push(&mut self, frame: Frame, params: &MacParams) -> Result<(), Frame> {
        if self.queue.len() >= params.queue_limit {
            return Err(frame);
        }
        self.queue.push_back(frame);
        Ok(())
    }

    /// Delay before the next attempt.
    pub fn backoff<R: Rng>(&mut self, params: &MacParams, rng: &mut R) -> SimDuration {
        self.generation += 1;
        self.state = MacState::Contending;
        let slots = rng.gen_range(0..self.cw);
        SimDuration(params.difs.as_nanos() + u64::from(slots) * params.slot.as_nanos())
    }

    pub fn on_success(&mut self, params: &MacParams) -> Option<Frame> {
        self.failures = 0;
        self.cw = params.cw_min;
        self.state = MacState::Idle;
        self.queue.pop_front()
    }

    pub fn on_failure(&mut self, params: &MacParams) -> FailureOutcome {
        self.failures += 1;
        self.state = MacState::Idle;
        if self.failures > params.retry_limit {
            self.failures = 0;
            self.cw = params.cw_min;
            match self.queue.pop_front() {
                Some(f) => FailureOutcome::Dropped(f),
                None => FailureOutcome::Retry,
            }
        } else {
            self.cw = (self.cw.saturating_mul(2)).min(params.cw_max);
            FailureOutcome::Retry
        }
    }

    pub fn clear(&mut self) -> Vec<Frame> {
        self.state = MacState::Idle;
        self.generation += 1;
        self.failures = 0;
        self.queue.drain(..).collect()
    }
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::routing::{Beacon, ControlPacket, Token};
    use crate::NodeId;

    fn frame() -> Frame {
        Frame {
            id: 0,
            src: NodeId(0),
            dst: Some(NodeId(1)),
            token: Token::green(NodeId(0)),
            tx_power_dbm: 0.0,
            packet: ControlPacket::Beacon(Beacon { feedback: vec![] }),
        }
    }

    #[test]
    fn eighth_failure_drops() {
        let p = MacParams::default();
        let mut m = Mac::new(&p);
        m.push(frame(), &p).unwrap();
        for i in 1..=7 {
            assert_eq!(m.on_failure(&p), FailureOutcome::Retry, "failure {i}");
        }
        assert_eq!(m.cw, 1024);
        assert!(matches!(m.on_failure(&p), FailureOutcome::Dropped(_)));
        assert!(m.queue.is_empty());
        assert_eq!(m.cw, 32);
    }

    #[test]
    fn idle_backoff_is_difs_plus_slots() {
        let p = MacParams::default();
        let mut m = Mac::new(&p);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let d = m.backoff(&p, &mut rng).as_nanos();
            assert!(d >= 50_000 && d < 50_000 + 32 * 20_000);
            assert_eq!((d - 50_000) % 20_000, 0);
        }
    }

    #[test]
    fn queue_limit() {
        let p = MacParams { queue_limit: 1, ..MacParams::default() };
        let mut m = Mac::new(&p);
        m.push(frame(), &p).unwrap();
        assert!(m.push(frame(), &p).is_err());
    }
}
