//! Scene graphs: data model, JSON format, validation and cross-modal fusion.

mod cmsg;
mod graph;
mod json;
mod validate;

use thiserror::Error;

pub use cmsg::{
    build_cmsg, cmsg_type1, cmsg_type2, cmsg_type3, cosine, CmsgSpec, CmsgVariant, FusedGraph,
    Origin, DUMMY_LABEL,
};
pub use graph::{normalize_label, Edge, Modality, Node, NodeKind, PlainGraph, SceneGraph};
pub use json::{parse_scene_graph, serialize_scene_graph};
pub use validate::{validate_scene_graph, Violation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("malformed JSON at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("scene graph schema: {0}")]
    Field(String),
    #[error("invalid scene graph: {}", join(.0))]
    Validation(Vec<Violation>),
    #[error("{0}")]
    Config(String),
}

fn join(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
