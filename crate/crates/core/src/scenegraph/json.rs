//! Scene-graph JSON format.
//!
//! ```json
//! {
//!   "nodes": [{"id": 0, "kind": "object", "label": "man"}],
//!   "edges": [{"src": 0, "dst": 1}]
//! }
//! ```
//!
//! Fused graphs additionally carry `"modality": "fused"` and, for CMSG
//! Type 1, `"dummy": <node id>` after `"edges"`.

use serde::{Deserialize, Serialize};

use super::graph::{normalize_label, Edge, Modality, Node, NodeKind, SceneGraph};
use super::validate::{label_is_valid, validate_scene_graph};
use super::GraphError;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: usize,
    kind: NodeKind,
    label: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGraph {
    nodes: Vec<RawNode>,
    edges: Vec<Edge>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    modality: Option<Modality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dummy: Option<usize>,
}

/// Parses and then validates. `default_modality` applies when the document
/// has no `"modality"` key.
pub fn parse_scene_graph(
    bytes: &[u8],
    default_modality: Modality,
) -> Result<SceneGraph, GraphError> {
    if bytes.starts_with(&[0xEF, 0xBB, 0xBF]) {
        return Err(GraphError::Parse {
            offset: 0,
            message: "byte-order mark is not allowed".into(),
        });
    }
    let value: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| GraphError::Parse {
            offset: byte_offset(bytes, e.line(), e.column()),
            message: e.to_string(),
        })?;
    let raw: RawGraph =
        serde_json::from_value(value).map_err(|e| GraphError::Field(e.to_string()))?;

    let n = raw.nodes.len();
    let mut seen = vec![false; n];
    let mut nodes = Vec::with_capacity(n);
    for rn in raw.nodes {
        if rn.id >= n || seen[rn.id] {
            return Err(GraphError::Field(format!(
                "node ids must be unique and dense in [0, {n}); got {}",
                rn.id
            )));
        }
        seen[rn.id] = true;
        let label = normalize_label(&rn.label);
        if !label_is_valid(&label) {
            return Err(GraphError::Field(format!(
                "node {} has an empty or whitespace-padded label {:?}",
                rn.id, rn.label
            )));
        }
        nodes.push(Node {
            id: rn.id,
            kind: rn.kind,
            label,
        });
    }
    let modality = raw.modality.unwrap_or(default_modality);
    if let Some(d) = raw.dummy {
        if modality != Modality::Fused || d >= n {
            return Err(GraphError::Field(format!(
                "dummy marker {d} needs a fused graph containing that node"
            )));
        }
    }
    let g = SceneGraph::new(nodes, raw.edges, modality).with_dummy(raw.dummy);
    validate_scene_graph(&g).map_err(GraphError::Validation)?;
    Ok(g)
}

/// Canonical form: two-space indent, nodes by id, edges sorted, trailing
/// newline.
pub fn serialize_scene_graph(g: &SceneGraph) -> Vec<u8> {
    let fused = g.modality() == Modality::Fused;
    let raw = RawGraph {
        nodes: g
            .nodes()
            .iter()
            .map(|n| RawNode {
                id: n.id,
                kind: n.kind,
                label: n.label.clone(),
            })
            .collect(),
        edges: g.edges().to_vec(),
        modality: fused.then_some(Modality::Fused),
        dummy: g.dummy(),
    };
    let mut out = serde_json::to_vec_pretty(&raw).expect("graph serialization cannot fail");
    out.push(b'\n');
    out
}

/// serde_json reports 1-based line and column; columns count bytes.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    let mut current = 1;
    let mut start = 0;
    for (i, &b) in bytes.iter().enumerate() {
        if current == line {
            break;
        }
        if b == b'\n' {
            current += 1;
            start = i + 1;
        }
    }
    (start + column.saturating_sub(1)).min(bytes.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_node_document() {
        let g = parse_scene_graph(
            br#"{"nodes":[{"id":0,"kind":"object","label":"man"}],"edges":[]}"#,
            Modality::Text,
        )
        .unwrap();
        assert_eq!(g.len(), 1);
        assert_eq!(g.nodes()[0].label, "man");
    }

    #[test]
    fn object_attribute_accepted_reverse_rejected() {
        let ok = br#"{"nodes":[{"id":0,"kind":"object","label":"man"},{"id":1,"kind":"attribute","label":"tall"}],"edges":[{"src":0,"dst":1}]}"#;
        assert!(parse_scene_graph(ok, Modality::Text).is_ok());
        let bad = br#"{"nodes":[{"id":0,"kind":"object","label":"man"},{"id":1,"kind":"attribute","label":"tall"}],"edges":[{"src":1,"dst":0}]}"#;
        match parse_scene_graph(bad, Modality::Text) {
            Err(GraphError::Validation(v)) => assert!(v[0].to_string().contains("1->0")),
            other => panic!("expected validation error, got {other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_byte_offsets() {
        let doc = b"{\"nodes\": [\n  {\"id\": 0,, }\n]}";
        match parse_scene_graph(doc, Modality::Text) {
            Err(GraphError::Parse { offset, .. }) => assert_eq!(doc[offset], b','),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn schema_errors_are_field_errors() {
        let cases: [&[u8]; 5] = [
            br#"{"nodes":[]}"#,
            br#"{"nodes":[{"id":0,"kind":"thing","label":"x"}],"edges":[]}"#,
            br#"{"nodes":[{"id":1,"kind":"object","label":"x"}],"edges":[]}"#,
            br#"{"nodes":[{"id":0,"kind":"object","label":" x"}],"edges":[]}"#,
            br#"{"nodes":[],"edges":[],"extra":1}"#,
        ];
        for c in cases {
            assert!(
                matches!(
                    parse_scene_graph(c, Modality::Text),
                    Err(GraphError::Field(_))
                ),
                "{}",
                String::from_utf8_lossy(c)
            );
        }
    }

    #[test]
    fn rejects_bom() {
        let mut doc = vec![0xEF, 0xBB, 0xBF];
        doc.extend_from_slice(br#"{"nodes":[],"edges":[]}"#);
        assert!(matches!(
            parse_scene_graph(&doc, Modality::Text),
            Err(GraphError::Parse { offset: 0, .. })
        ));
    }

    #[test]
    fn canonical_text_is_exact() {
        let g = parse_scene_graph(
            br#"{"edges":[{"dst":1,"src":0}],"nodes":[{"label":"Tall","kind":"attribute","id":1},{"id":0,"kind":"object","label":"man"}]}"#,
            Modality::Text,
        )
        .unwrap();
        let expected = r#"{
  "nodes": [
    {
      "id": 0,
      "kind": "object",
      "label": "man"
    },
    {
      "id": 1,
      "kind": "attribute",
      "label": "tall"
    }
  ],
  "edges": [
    {
      "src": 0,
      "dst": 1
    }
  ]
}
"#;
        assert_eq!(
            String::from_utf8(serialize_scene_graph(&g)).unwrap(),
            expected
        );
    }
}
