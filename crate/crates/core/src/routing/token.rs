use serde::{Deserialize, Serialize};

use crate::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenStatus {
    Green,
    Red,
}

/// Identity plus a single status flag. Carried in every frame header.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Token {
    pub node_id: NodeId,
    pub status: TokenStatus,
}

impl Token {
    pub fn green(node_id: NodeId) -> Self {
        Token {
            node_id,
            status: TokenStatus::Green,
        }
    }

    pub fn is_red(&self) -> bool {
        self.status == TokenStatus::Red
    }
}

/// Network-wide token status, indexed by node id.
///
/// The simulator treats this as authoritative: a conviction is visible to
/// every node immediately. Status only ever moves from green to red.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TokenRegistry {
    status: Vec<TokenStatus>,
    convicted_at: Vec<Option<u64>>,
}

impl TokenRegistry {
    pub fn new(node_count: usize) -> Self {
        TokenRegistry {
            status: vec![TokenStatus::Green; node_count],
            convicted_at: vec![None; node_count],
        }
    }

    pub fn len(&self) -> usize {
        self.status.len()
    }

    pub fn is_empty(&self) -> bool {
        self.status.is_empty()
    }

    pub fn token(&self, id: NodeId) -> Token {
        Token {
            node_id: id,
            status: self.status(id),
        }
    }

    /// Unknown ids read as green.
    pub fn status(&self, id: NodeId) -> TokenStatus {
        self.status.get(id.index()).copied().unwrap_or(TokenStatus::Green)
    }

    pub fn is_red(&self, id: NodeId) -> bool {
        self.status(id) == TokenStatus::Red
    }

    /// Flips `id` to red. Returns `false` if it was already red.
    pub fn convict(&mut self, id: NodeId, at_ns: u64) -> bool {
        let i = id.index();
        if i >= self.status.len() {
            self.status.resize(i + 1, TokenStatus::Green);
            self.convicted_at.resize(i + 1, None);
        }
        if self.status[i] == TokenStatus::Red {
            return false;
        }
        self.status[i] = TokenStatus::Red;
        self.convicted_at[i] = Some(at_ns);
        true
    }

    pub fn convicted_at(&self, id: NodeId) -> Option<u64> {
        self.convicted_at.get(id.index()).copied().flatten()
    }

    pub fn red_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.status
            .iter()
            .enumerate()
            .filter(|(_, s)| **s == TokenStatus::Red)
            .map(|(i, _)| NodeId::from(i))
    }
}
