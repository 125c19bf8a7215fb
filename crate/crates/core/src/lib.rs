//! Multimodal fake-news detection over text, images and scene graphs.
//!
//! The crate bundles a small reverse-mode autodiff engine (`numkit`), the
//! scene-graph data model (`scenegraph`), node featurization
//! (`embeddings`), the graph and transformer encoders (`gsgm`, `tem`), the
//! fusion classifier (`model`), Shapley attributions (`explain`) and the
//! experiment driver (`harness`).

pub mod embeddings;
pub mod error;
pub mod explain;
pub mod gsgm;
pub mod harness;
pub mod model;
pub mod numkit;
pub mod scenegraph;
pub mod tem;

pub use error::{Error, Result};

/// Whether stochastic layers are active.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}
