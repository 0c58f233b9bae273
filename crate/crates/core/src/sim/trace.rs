//! Machine-readable event trace: one JSON object per line with `t_ns`,
//! `node` and a tagged `event`.

use serde::{Deserialize, Serialize};

use crate::recovery::RecoveryDecision;
use crate::routing::DropReason;
use crate::time::SimTime;
use crate::NodeId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum TraceEvent {
    Tx {
        frame: u64,
        kind: String,
        dst: Option<NodeId>,
        power_dbm: f64,
        bytes: usize,
        airtime_ns: u64,
    },
    AppSend {
        uid: u64,
        destination: NodeId,
    },
    Deliver {
        uid: u64,
        delay_ns: u64,
        airtime_ns: u64,
        hops: usize,
        trail: Vec<NodeId>,
    },
    Duplicate {
        uid: u64,
    },
    RreqOriginated {
        destination: NodeId,
        rreq_id: u32,
        reason: String,
    },
    RouteReady {
        destination: NodeId,
        hop_count: u32,
        path: Vec<NodeId>,
    },
    RrepDropped {
        reason: DropReason,
    },
    Recovery {
        destination: NodeId,
        decision: RecoveryDecision,
        attempt_count: u8,
        trigger: String,
    },
    RepairTimeout {
        destination: NodeId,
        retry: usize,
        abandoned: usize,
    },
    UpperLayerNotify {
        uid: u64,
        attempts: u8,
    },
    RerrAtSource {
        from: NodeId,
        destinations: Vec<NodeId>,
    },
    Handoff {
        to: NodeId,
        destination: NodeId,
        packets: usize,
    },
    MacDrop {
        frame: u64,
        kind: String,
        dst: Option<NodeId>,
    },
    QueueDrop {
        uid: u64,
        reason: String,
    },
    BlackHoleDrop {
        uid: u64,
    },
    Convicted {
        forwarder: NodeId,
        umpires: Vec<NodeId>,
        misbehave_votes: usize,
    },
    LinkFault {
        a: NodeId,
        b: NodeId,
    },
    Death,
    Energy {
        tx_mwh: f64,
        rx_mwh: f64,
        idle_mwh: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub t_ns: u64,
    pub node: NodeId,
    #[serde(flatten)]
    pub event: TraceEvent,
}

#[derive(Clone, Debug, Default)]
pub struct Trace {
    enabled: bool,
    lines: Vec<String>,
}

impl Trace {
    pub fn new(enabled: bool) -> Self {
        Trace {
            enabled,
            lines: Vec::new(),
        }
    }

    #[inline]
    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn push(&mut self, now: SimTime, node: NodeId, event: TraceEvent) {
        if self.enabled {
            let rec = TraceRecord {
                t_ns: now.as_nanos(),
                node,
                event,
            };
            self.lines.push(serde_json::to_string(&rec).expect("trace records serialize"));
        }
    }

    pub fn into_lines(self) -> Vec<String> {
        self.lines
    }

    pub fn lines(&self) -> &[String] {
        &self.lines
    }
}

pub fn parse_line(line: &str) -> serde_json::Result<TraceRecord> {
    serde_json::from_str(line)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_shape() {
        let mut t = Trace::new(true);
        t.push(SimTime(5), NodeId(2), TraceEvent::AppSend { uid: 1, destination: NodeId(1) });
        assert_eq!(t.lines()[0], r#"{"t_ns":5,"node":2,"event":"app_send","uid":1,"destination":1}"#);
        assert_eq!(parse_line(&t.lines()[0]).unwrap().event, TraceEvent::AppSend { uid: 1, destination: NodeId(1) });
    }

    #[test]
    fn disabled_trace_records_nothing() {
        let mut t = Trace::new(false);
        t.push(SimTime(5), NodeId(2), TraceEvent::Death);
        assert!(t.lines().is_empty());
    }
}
