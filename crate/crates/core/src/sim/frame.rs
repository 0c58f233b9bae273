//! Link-layer frames and their trace encoding.
//!
//! Every frame carries a fixed header: sender, link destination (absent for
//! broadcast), the sender's token and the transmit power used. The routing
//! body follows, tagged by `type`:
//!
//! | type   | fields |
//! |--------|--------|
//! | rreq   | origin, origin_seq, rreq_id, destination, dest_seq, hop_count, path, min_snr_db |
//! | rrep   | origin, destination, dest_seq, hop_count, path, min_snr_db |
//! | rerr   | unreachable [(node, seq)], handoff_to, carried [data] |
//! | beacon | feedback [(neighbor, rssi_dbm, echoed_tx_dbm)] |
//! | data   | uid, source, destination, created, attempts, airtime_ns, trail, payload_len, digest |

use serde::{Deserialize, Serialize};

use crate::routing::{ControlPacket, Token};
use crate::time::SimDuration;
use crate::NodeId;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Frame {
    pub id: u64,
    pub src: NodeId,
    /// `None` for broadcast.
    pub dst: Option<NodeId>,
    pub token: Token,
    /// Filled in when the frame goes on the air.
    pub tx_power_dbm: f64,
    pub packet: ControlPacket,
}

impl Frame {
    pub fn is_broadcast(&self) -> bool {
        self.dst.is_none()
    }

    pub fn wire_bytes(&self, header_bytes: u32) -> usize {
        header_bytes as usize + self.packet.wire_bytes()
    }
}

/// Time on the air for `bytes` at `data_rate` bits/s, rounded up to whole ns.
pub fn airtime(bytes: usize, data_rate: f64) -> SimDuration {
    SimDuration((bytes as f64 * 8.0 / data_rate * 1e9).ceil() as u64)
}

pub fn encode(frame: &Frame) -> String {
    serde_json::to_string(frame).expect("frames contain only finite numbers")
}

pub fn decode(line: &str) -> serde_json::Result<Frame> {
    serde_json::from_str(line)
}
