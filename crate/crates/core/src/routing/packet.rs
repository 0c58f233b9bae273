//! Routing-layer packet bodies. Link-layer framing lives in `sim::frame`.

use serde::{Deserialize, Serialize};

use crate::time::SimTime;
use crate::NodeId;

/// Wire size of one node id inside an accumulated path.
pub const PATH_ENTRY_BYTES: usize = 4;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rreq {
    pub origin: NodeId,
    pub origin_seq: u32,
    pub rreq_id: u32,
    pub destination: NodeId,
    /// Last destination sequence number the origin knew, if any.
    pub dest_seq: Option<u32>,
    pub hop_count: u32,
    /// Nodes traversed so far, origin first, most recent sender last.
    pub path: Vec<NodeId>,
    /// Weakest per-link SNR seen along `path`.
    pub min_snr_db: f64,
}

impl Rreq {
    pub fn wire_bytes(&self) -> usize {
        24 + PATH_ENTRY_BYTES * self.path.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rrep {
    /// Node that asked for the route; the reply travels toward it.
    pub origin: NodeId,
    pub destination: NodeId,
    pub dest_seq: u32,
    pub hop_count: u32,
    /// Destination first, most recent sender last.
    pub path: Vec<NodeId>,
    pub min_snr_db: f64,
}

impl Rrep {
    pub fn wire_bytes(&self) -> usize {
        20 + PATH_ENTRY_BYTES * self.path.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rerr {
    /// Destinations that became unreachable through the sender, with the
    /// sequence number to invalidate at.
    pub unreachable: Vec<(NodeId, u32)>,
    /// When set, the named node (the sender's upstream hop) takes over repair
    /// of the carried packets.
    pub handoff_to: Option<NodeId>,
    pub carried: Vec<Data>,
}

impl Rerr {
    pub fn wire_bytes(&self) -> usize {
        12 + 8 * self.unreachable.len() + self.carried.iter().map(|d| 16 + d.wire_bytes()).sum::<usize>()
    }
}

/// One RSSI report inside a beacon.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Feedback {
    pub neighbor: NodeId,
    /// Smoothed received power from `neighbor`, normalized back to the power
    /// `neighbor` used on the reported frame (see `echoed_tx_dbm`).
    pub rssi_dbm: f64,
    pub echoed_tx_dbm: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Beacon {
    pub feedback: Vec<Feedback>,
}

impl Beacon {
    pub fn wire_bytes(&self) -> usize {
        8 + 12 * self.feedback.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Data {
    pub uid: u64,
    pub source: NodeId,
    pub destination: NodeId,
    pub created: SimTime,
    /// End-to-end delivery attempts spent so far (recovery re-routes).
    pub attempts: u8,
    /// Sum of airtimes of every hop that carried this packet.
    pub airtime_ns: u64,
    /// Nodes that have held the packet, source first.
    pub trail: Vec<NodeId>,
    pub payload_len: u32,
    pub digest: u64,
}

impl Data {
    pub fn new(uid: u64, source: NodeId, destination: NodeId, created: SimTime, payload_len: u32) -> Self {
        Data {
            uid,
            source,
            destination,
            created,
            attempts: 0,
            airtime_ns: 0,
            trail: vec![source],
            payload_len,
            digest: payload_digest(uid, source, destination, payload_len),
        }
    }

    /// Body size on the air. The routing fields ride in the fixed frame
    /// header, so a data frame body is just the payload.
    pub fn wire_bytes(&self) -> usize {
        self.payload_len as usize
    }

    pub fn hops(&self) -> usize {
        self.trail.len().saturating_sub(1)
    }
}

/// Deterministic stand-in for a payload checksum (FNV-1a over the header
/// fields that identify the payload).
pub fn payload_digest(uid: u64, source: NodeId, destination: NodeId, payload_len: u32) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut h = OFFSET;
    let bytes = uid
        .to_le_bytes()
        .into_iter()
        .chain(source.0.to_le_bytes())
        .chain(destination.0.to_le_bytes())
        .chain(payload_len.to_le_bytes());
    for b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(PRIME);
    }
    h
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ControlPacket {
    Rreq(Rreq),
    Rrep(Rrep),
    Rerr(Rerr),
    Beacon(Beacon),
    Data(Data),
}

impl ControlPacket {
    pub fn wire_bytes(&self) -> usize {
        match self {
            ControlPacket::Rreq(p) => p.wire_bytes(),
            ControlPacket::Rrep(p) => p.wire_bytes(),
            ControlPacket::Rerr(p) => p.wire_bytes(),
            ControlPacket::Beacon(p) => p.wire_bytes(),
            ControlPacket::Data(p) => p.wire_bytes(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            ControlPacket::Rreq(_) => "rreq",
            ControlPacket::Rrep(_) => "rrep",
            ControlPacket::Rerr(_) => "rerr",
            ControlPacket::Beacon(_) => "beacon",
            ControlPacket::Data(_) => "data",
        }
    }
}

/// True if `path` names no node twice.
pub fn path_is_simple(path: &[NodeId]) -> bool {
    let mut seen: Vec<NodeId> = path.to_vec();
    seen.sort_unstable();
    seen.windows(2).all(|w| w[0] != w[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digest_depends_on_every_field() {
        let base = payload_digest(1, NodeId(0), NodeId(1), 70);
        assert_ne!(base, payload_digest(2, NodeId(0), NodeId(1), 70));
        assert_ne!(base, payload_digest(1, NodeId(2), NodeId(1), 70));
        assert_ne!(base, payload_digest(1, NodeId(0), NodeId(2), 70));
        assert_ne!(base, payload_digest(1, NodeId(0), NodeId(1), 30));
        assert_eq!(base, payload_digest(1, NodeId(0), NodeId(1), 70));
    }

    #[test]
    fn data_wire_size() {
        let d = Data::new(0, NodeId(0), NodeId(1), SimTime(0), 70);
        assert_eq!(d.wire_bytes(), 70);
    }

    #[test]
    fn simple_path_detection() {
        assert!(path_is_simple(&[NodeId(0), NodeId(3), NodeId(1)]));
        assert!(!path_is_simple(&[NodeId(0), NodeId(3), NodeId(0)]));
        assert!(path_is_simple(&[]));
    }

    #[test]
    fn packet_json_is_tagged() {
        let p = ControlPacket::Beacon(Beacon { feedback: vec![] });
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(s, r#"{"type":"beacon","feedback":[]}"#);
    }
}
