use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::numkit::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Object,
    Attribute,
    Relationship,
}

impl fmt::Display for NodeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeKind::Object => "object",
            NodeKind::Attribute => "attribute",
            NodeKind::Relationship => "relationship",
        })
    }
}

/// Which source a graph came from. `Fused` graphs are CMSG outputs and are
/// held to a weaker edge contract.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Visual,
    Fused,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Node {
    pub id: usize,
    pub kind: NodeKind,
    pub label: String,
}

impl Node {
    /// Label is lowercased and NFC-normalized.
    pub fn new(id: usize, kind: NodeKind, label: &str) -> Self {
        Self {
            id,
            kind,
            label: normalize_label(label),
        }
    }
}

pub fn normalize_label(label: &str) -> String {
    label.to_lowercase().nfc().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub src: usize,
    pub dst: usize,
}

impl Edge {
    pub fn new(src: usize, dst: usize) -> Self {
        Self { src, dst }
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.src, self.dst)
    }
}

/// Typed scene graph: object, attribute and relationship nodes joined by
/// directed edges.
///
/// Nodes are kept sorted by id and edges sorted lexicographically, so two
/// graphs with the same content compare equal regardless of input order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SceneGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    modality: Modality,
    dummy: Option<usize>,
}

impl SceneGraph {
    pub fn new(mut nodes: Vec<Node>, mut edges: Vec<Edge>, modality: Modality) -> Self {
        nodes.sort_by_key(|n| n.id);
        edges.sort();
        Self {
            nodes,
            edges,
            modality,
            dummy: None,
        }
    }

    pub fn empty(modality: Modality) -> Self {
        Self::new(Vec::new(), Vec::new(), modality)
    }

    pub(crate) fn with_dummy(mut self, dummy: Option<usize>) -> Self {
        self.dummy = dummy;
        self
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    /// Index of the CMSG Type 1 dummy node, if this graph has one.
    pub fn dummy(&self) -> Option<usize> {
        self.dummy
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: usize) -> Option<&Node> {
        self.nodes.get(id).filter(|n| n.id == id)
    }

    pub fn to_plain_graph(&self) -> PlainGraph {
        PlainGraph::from_edges(self.nodes.len(), self.edges.iter().map(|e| (e.src, e.dst)))
    }

    /// Same graph with node ids renumbered by `perm` (`new_id = perm[old_id]`).
    pub fn relabeled(&self, perm: &[usize]) -> SceneGraph {
        let nodes = self
            .nodes
            .iter()
            .map(|n| Node {
                id: perm[n.id],
                ..n.clone()
            })
            .collect();
        let edges = self
            .edges
            .iter()
            .map(|e| Edge::new(perm[e.src], perm[e.dst]))
            .collect();
        SceneGraph::new(nodes, edges, self.modality).with_dummy(self.dummy.map(|d| perm[d]))
    }
}

/// Undirected simple graph: each directed edge contributes a symmetric
/// entry, parallel edges collapse and self-loops are dropped.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlainGraph {
    neighbors: Vec<BTreeSet<usize>>,
}

impl PlainGraph {
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut neighbors = vec![BTreeSet::new(); n];
        for (a, b) in edges {
            if a != b && a < n && b < n {
                neighbors[a].insert(b);
                neighbors[b].insert(a);
            }
        }
        Self { neighbors }
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn neighbors(&self, v: usize) -> &BTreeSet<usize> {
        &self.neighbors[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.neighbors[a].contains(&b)
    }

    /// Dense 0/1 adjacency without self-loops.
    pub fn adjacency(&self) -> Tensor {
        let n = self.len();
        let mut t = Tensor::zeros(&[n, n]);
        for (a, nb) in self.neighbors.iter().enumerate() {
            for &b in nb {
                t.data_mut()[a * n + b] = 1.0;
            }
        }
        t
    }
}
