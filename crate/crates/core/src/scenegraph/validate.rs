use std::fmt;

use super::graph::{Edge, Modality, NodeKind, SceneGraph};

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    DanglingEdge(Edge),
    InadmissibleEdge {
        edge: Edge,
        from: NodeKind,
        to: NodeKind,
    },
    /// Relationship node without an incoming edge from an object.
    MissingSubject {
        node: usize,
    },
    /// Relationship node without an outgoing edge to an object.
    MissingObject {
        node: usize,
    },
    BadLabel {
        node: usize,
        label: String,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DanglingEdge(e) => write!(f, "edge {e} references a missing node"),
            Violation::InadmissibleEdge { edge, from, to } => {
                write!(
                    f,
                    "edge {edge} goes {from} -> {to}, which is not admissible"
                )
            }
            Violation::MissingSubject { node } => {
                write!(
                    f,
                    "relationship node {node} has no incoming edge from an object"
                )
            }
            Violation::MissingObject { node } => {
                write!(
                    f,
                    "relationship node {node} has no outgoing edge to an object"
                )
            }
            Violation::BadLabel { node, label } => {
                write!(f, "node {node} has invalid label {label:?}")
            }
        }
    }
}

pub fn label_is_valid(label: &str) -> bool {
    !label.is_empty() && label.trim() == label
}

/// Admissible edges are object→relationship, relationship→object and
/// object→attribute, and every relationship node must sit inside at least
/// one object→relationship→object triple. Fused graphs only need edge
/// endpoints to exist.
pub fn validate_scene_graph(g: &SceneGraph) -> Result<(), Vec<Violation>> {
    use NodeKind::*;

    let mut out = Vec::new();
    for n in g.nodes() {
        if !label_is_valid(&n.label) {
            out.push(Violation::BadLabel {
                node: n.id,
                label: n.label.clone(),
            });
        }
    }
    let strict = g.modality() != Modality::Fused;
    let n = g.len();
    let mut has_subject = vec![false; n];
    let mut has_object = vec![false; n];
    for &e in g.edges() {
        let (Some(a), Some(b)) = (g.node(e.src), g.node(e.dst)) else {
            out.push(Violation::DanglingEdge(e));
            continue;
        };
        if !strict {
            continue;
        }
        match (a.kind, b.kind) {
            (Object, Relationship) => has_subject[e.dst] = true,
            (Relationship, Object) => has_object[e.src] = true,
            (Object, Attribute) => {}
            (from, to) => out.push(Violation::InadmissibleEdge { edge: e, from, to }),
        }
    }
    if strict {
        for node in g.nodes().iter().filter(|n| n.kind == Relationship) {
            if !has_subject[node.id] {
                out.push(Violation::MissingSubject { node: node.id });
            }
            if !has_object[node.id] {
                out.push(Violation::MissingObject { node: node.id });
            }
        }
    }
    if out.is_empty() {
        Ok(())
    } else {
        Err(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegraph::Node;

    fn graph(kinds: &[NodeKind], edges: &[(usize, usize)]) -> SceneGraph {
        let nodes = kinds
            .iter()
            .enumerate()
            .map(|(i, &k)| Node::new(i, k, &format!("n{i}")))
            .collect();
        let edges = edges.iter().map(|&(a, b)| Edge::new(a, b)).collect();
        SceneGraph::new(nodes, edges, Modality::Text)
    }

    #[test]
    fn triple_is_valid_and_empty_is_valid() {
        use NodeKind::*;
        assert!(
            validate_scene_graph(&graph(&[Object, Relationship, Object], &[(0, 1), (1, 2)]))
                .is_ok()
        );
        assert!(validate_scene_graph(&SceneGraph::empty(Modality::Visual)).is_ok());
    }

    /// Enumerates all nine (kind, kind) edge patterns on a two-node graph and
    /// checks that exactly the three admissible ones pass the per-edge rule.
    #[test]
    fn admissible_patterns_by_enumeration() {
        use NodeKind::*;
        let kinds = [Object, Attribute, Relationship];
        let mut admissible = Vec::new();
        for &a in &kinds {
            for &b in &kinds {
                let errs = validate_scene_graph(&graph(&[a, b], &[(0, 1)]))
                    .err()
                    .unwrap_or_default();
                let edge_ok = !errs
                    .iter()
                    .any(|v| matches!(v, Violation::InadmissibleEdge { .. }));
                if edge_ok {
                    admissible.push((a, b));
                }
            }
        }
        assert_eq!(
            admissible,
            vec![
                (Object, Attribute),
                (Object, Relationship),
                (Relationship, Object)
            ]
        );
    }

    #[test]
    fn isolated_relationship_is_a_violation() {
        use NodeKind::*;
        let errs = validate_scene_graph(&graph(&[Object, Relationship], &[])).unwrap_err();
        assert!(errs.contains(&Violation::MissingSubject { node: 1 }));
        assert!(errs.contains(&Violation::MissingObject { node: 1 }));
        // Half a triple is still incomplete.
        let errs = validate_scene_graph(&graph(&[Object, Relationship], &[(0, 1)])).unwrap_err();
        assert_eq!(errs, vec![Violation::MissingObject { node: 1 }]);
    }

    #[test]
    fn attribute_to_object_is_rejected_and_named() {
        use NodeKind::*;
        let errs = validate_scene_graph(&graph(&[Attribute, Object], &[(0, 1)])).unwrap_err();
        assert_eq!(errs.len(), 1);
        assert!(errs[0].to_string().contains("0->1"));
    }

    #[test]
    fn fused_graphs_only_need_endpoints() {
        use NodeKind::*;
        let g = graph(&[Object, Object], &[(0, 1)]);
        let fused = SceneGraph::new(g.nodes().to_vec(), g.edges().to_vec(), Modality::Fused);
        assert!(validate_scene_graph(&fused).is_ok());
        let dangling = SceneGraph::new(g.nodes().to_vec(), vec![Edge::new(0, 5)], Modality::Fused);
        assert_eq!(
            validate_scene_graph(&dangling).unwrap_err(),
            vec![Violation::DanglingEdge(Edge::new(0, 5))]
        );
    }
}
