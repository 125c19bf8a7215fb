//! Cross-modal scene graphs: three ways of fusing a textual and a visual
//! scene graph into one graph for a single GNN.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::graph::{Edge, Modality, Node, NodeKind, SceneGraph};
use super::GraphError;
use crate::embeddings::Featurizer;

pub const DUMMY_LABEL: &str = "<dummy>";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmsgVariant {
    Type1,
    Type2,
    Type3,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CmsgSpec {
    variant: CmsgVariant,
    threshold: Option<f64>,
}

impl CmsgSpec {
    /// `threshold` is required for Type 3 (and must lie in (0, 1]) and
    /// forbidden otherwise.
    pub fn new(variant: CmsgVariant, threshold: Option<f64>) -> Result<Self, GraphError> {
        match (variant, threshold) {
            (CmsgVariant::Type3, Some(t)) if t > 0.0 && t <= 1.0 => {}
            (CmsgVariant::Type3, t) => {
                return Err(GraphError::Config(format!(
                    "CMSG Type 3 needs a similarity threshold in (0, 1], got {t:?}"
                )))
            }
            (_, Some(_)) => {
                return Err(GraphError::Config(format!(
                    "{variant:?} does not take a similarity threshold"
                )))
            }
            (_, None) => {}
        }
        Ok(Self { variant, threshold })
    }

    pub fn variant(&self) -> CmsgVariant {
        self.variant
    }

    pub fn threshold(&self) -> Option<f64> {
        self.threshold
    }
}

/// Where a fused node came from. The Type 1 dummy has neither.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Origin {
    pub tsg: Option<usize>,
    pub vsg: Option<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FusedGraph {
    pub graph: SceneGraph,
    /// Indexed by fused node id.
    pub origins: Vec<Origin>,
    /// Number of TSG/VSG node pairs unified into one node.
    pub merges: usize,
    pub warnings: Vec<String>,
}

/// Type 1: disjoint union plus a dummy object node linked to every other
/// node. The dummy is the last node.
pub fn cmsg_type1(tsg: &SceneGraph, vsg: &SceneGraph) -> FusedGraph {
    let t = tsg.len();
    let v = vsg.len();
    let dummy = t + v;
    let mut nodes = Vec::with_capacity(dummy + 1);
    let mut origins = Vec::with_capacity(dummy + 1);
    for n in tsg.nodes() {
        nodes.push(Node {
            id: n.id,
            ..n.clone()
        });
        origins.push(Origin {
            tsg: Some(n.id),
            vsg: None,
        });
    }
    for n in vsg.nodes() {
        nodes.push(Node {
            id: t + n.id,
            ..n.clone()
        });
        origins.push(Origin {
            tsg: None,
            vsg: Some(n.id),
        });
    }
    nodes.push(Node::new(dummy, NodeKind::Object, DUMMY_LABEL));
    origins.push(Origin::default());

    let mut edges: Vec<Edge> = tsg.edges().to_vec();
    edges.extend(vsg.edges().iter().map(|e| Edge::new(t + e.src, t + e.dst)));
    edges.extend((0..dummy).map(|i| Edge::new(dummy, i)));

    FusedGraph {
        graph: SceneGraph::new(nodes, edges, Modality::Fused).with_dummy(Some(dummy)),
        origins,
        merges: 0,
        warnings: Vec::new(),
    }
}

/// Type 2: unify nodes whose `(kind, label)` appears in both graphs.
///
/// Each shared key merges exactly one pair, the lowest-id node on each side;
/// duplicates within one graph are left alone.
pub fn cmsg_type2(tsg: &SceneGraph, vsg: &SceneGraph) -> FusedGraph {
    fn first_by_key(g: &SceneGraph) -> BTreeMap<(NodeKind, &str), usize> {
        let mut m = BTreeMap::new();
        for n in g.nodes() {
            m.entry((n.kind, n.label.as_str())).or_insert(n.id);
        }
        m
    }
    let tk = first_by_key(tsg);
    let vk = first_by_key(vsg);
    let pairs: Vec<(usize, usize)> = tk
        .iter()
        .filter_map(|(k, &t)| vk.get(k).map(|&v| (t, v)))
        .collect();
    merge_pairs(tsg, vsg, &pairs, Vec::new())
}

/// Type 3: unify same-kind TSG/VSG node pairs whose feature cosine is at
/// least `threshold`.
///
/// Candidates are taken greedily in descending similarity, ties broken by
/// `(tsg id, vsg id)`, and each node merges at most once. A merged node
/// keeps its TSG label. Thresholds above 1 are accepted and merge nothing.
pub fn cmsg_type3(
    tsg: &SceneGraph,
    vsg: &SceneGraph,
    featurizer: &Featurizer,
    threshold: f64,
) -> Result<FusedGraph, GraphError> {
    if threshold.is_nan() || threshold <= 0.0 {
        return Err(GraphError::Config(format!(
            "similarity threshold must be positive, got {threshold}"
        )));
    }
    let tf: Vec<Vec<f64>> = tsg
        .nodes()
        .iter()
        .map(|n| featurizer.featurize(n))
        .collect();
    let vf: Vec<Vec<f64>> = vsg
        .nodes()
        .iter()
        .map(|n| featurizer.featurize(n))
        .collect();
    let mut warnings = Vec::new();
    let mut candidates = Vec::new();
    for t in tsg.nodes() {
        for v in vsg.nodes().iter().filter(|v| v.kind == t.kind) {
            match cosine(&tf[t.id], &vf[v.id]) {
                Some(s) if s >= threshold => candidates.push((s, t.id, v.id)),
                Some(_) => {}
                None => warnings.push(format!(
                    "skipped pair tsg {} ({:?}) / vsg {} ({:?}): zero-norm feature",
                    t.id, t.label, v.id, v.label
                )),
            }
        }
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2))));

    let mut t_used = vec![false; tsg.len()];
    let mut v_used = vec![false; vsg.len()];
    let mut pairs = Vec::new();
    for (_, t, v) in candidates {
        if !t_used[t] && !v_used[v] {
            t_used[t] = true;
            v_used[v] = true;
            pairs.push((t, v));
        }
    }
    Ok(merge_pairs(tsg, vsg, &pairs, warnings))
}

/// Cosine similarity, `None` when either vector has zero norm. Bitwise
/// identical vectors score exactly 1.
pub fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    if a == b {
        return Some(1.0);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Some((dot / (na * nb)).clamp(-1.0, 1.0))
}

pub fn build_cmsg(
    spec: &CmsgSpec,
    tsg: &SceneGraph,
    vsg: &SceneGraph,
    featurizer: &Featurizer,
) -> Result<FusedGraph, GraphError> {
    match spec.variant {
        CmsgVariant::Type1 => Ok(cmsg_type1(tsg, vsg)),
        CmsgVariant::Type2 => Ok(cmsg_type2(tsg, vsg)),
        CmsgVariant::Type3 => cmsg_type3(
            tsg,
            vsg,
            featurizer,
            spec.threshold.expect("Type 3 spec always has a threshold"),
        ),
    }
}

/// TSG nodes keep their ids; unmerged VSG nodes follow in id order. Edges
/// are remapped, sorted and deduplicated.
fn merge_pairs(
    tsg: &SceneGraph,
    vsg: &SceneGraph,
    pairs: &[(usize, usize)],
    warnings: Vec<String>,
) -> FusedGraph {
    let t = tsg.len();
    let mut vsg_to_fused = vec![usize::MAX; vsg.len()];
    let mut origins: Vec<Origin> = (0..t)
        .map(|i| Origin {
            tsg: Some(i),
            vsg: None,
        })
        .collect();
    for &(ti, vi) in pairs {
        vsg_to_fused[vi] = ti;
        origins[ti].vsg = Some(vi);
    }
    let mut nodes: Vec<Node> = tsg.nodes().to_vec();
    for n in vsg.nodes() {
        if vsg_to_fused[n.id] == usize::MAX {
            let id = nodes.len();
            vsg_to_fused[n.id] = id;
            nodes.push(Node { id, ..n.clone() });
            origins.push(Origin {
                tsg: None,
                vsg: Some(n.id),
            });
        }
    }
    let mut edges: Vec<Edge> = tsg.edges().to_vec();
    edges.extend(
        vsg.edges()
            .iter()
            .map(|e| Edge::new(vsg_to_fused[e.src], vsg_to_fused[e.dst])),
    );
    edges.sort();
    edges.dedup();
    FusedGraph {
        graph: SceneGraph::new(nodes, edges, Modality::Fused),
        origins,
        merges: pairs.len(),
        warnings,
    }
}
