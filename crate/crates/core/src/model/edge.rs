use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Undirected edge between two distinct nodes, stored with `0 < 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge(usize, usize);

impl Edge {
    /// # Panics
    /// If `a == b`; self-loops are not edges.
    pub fn new(a: usize, b: usize) -> Self {
        assert_ne!(a, b, "self-loop is not an edge");
        if a < b {
            Edge(a, b)
        } else {
            Edge(b, a)
        }
    }

    pub fn low(self) -> usize {
        self.0
    }

    pub fn high(self) -> usize {
        self.1
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.0, self.1)
    }
}

pub type EdgeSet = BTreeSet<Edge>;

/// Every unique off-diagonal slot of a `p`-node network, in lexicographic order.
pub fn all_slots(p: usize) -> impl Iterator<Item = Edge> {
    (0..p).flat_map(move |i| ((i + 1)..p).map(move |j| Edge(i, j)))
}

pub fn slot_count(p: usize) -> usize {
    p * p.saturating_sub(1) / 2
}
