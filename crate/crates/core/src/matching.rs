use serde::{Deserialize, Serialize};

use crate::graph::{normalize, Edge, Vertex};

/// A set of edges, each stored as `(min, max)`.
///
/// Validity against a host graph is checked by
/// [`verify_matching`](crate::verify::verify_matching); the type itself does
/// not hold a graph reference.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Matching {
    edges: Vec<Edge>,
}

impl Matching {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_edges(edges: impl IntoIterator<Item = Edge>) -> Self {
        Self {
            edges: edges.into_iter().map(|(u, v)| normalize(u, v)).collect(),
        }
    }

    pub fn push(&mut self, u: Vertex, v: Vertex) {
        self.edges.push(normalize(u, v));
    }

    pub fn extend(&mut self, other: &Matching) {
        self.edges.extend_from_slice(&other.edges);
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vertex> + '_ {
        self.edges.iter().flat_map(|&(u, v)| [u, v])
    }

    /// Same edges in canonical (sorted) order.
    pub fn sorted(mut self) -> Self {
        self.edges.sort_unstable();
        self
    }
}
