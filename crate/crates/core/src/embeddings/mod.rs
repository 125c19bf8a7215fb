//! Word vectors, scene-graph node features, and node2vec structural
//! embeddings.

mod node2vec;
mod wordvec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use node2vec::{
    node2vec_embed, node2vec_walks, skipgram_train, transition_probs, Node2VecConfig,
};
pub use wordvec::{featurize_node, load_word_vectors, Featurizer, WordVectorTable};

/// Bundled 50-dimensional word-vector fixture.
pub const FIXTURE_WORD_VECTORS: &str = include_str!("../../fixtures/wordvec50.txt");

pub fn fixture_table() -> WordVectorTable {
    load_word_vectors(FIXTURE_WORD_VECTORS.as_bytes()).expect("bundled fixture is well-formed")
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EmbedError {
    #[error("word-vector format error at line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("configuration error: {0}")]
    Config(String),
}

/// Which node features feed the GCN.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    /// Word-vector label features.
    #[default]
    Glove,
    /// node2vec structural features only.
    N2v,
    /// Word-vector features followed by node2vec features.
    Concat,
}

pub fn combine_features(
    glove: &[f64],
    n2v: Option<&[f64]>,
    mode: FeatureMode,
) -> Result<Vec<f64>, EmbedError> {
    match (mode, n2v) {
        (FeatureMode::Glove, _) => Ok(glove.to_vec()),
        (FeatureMode::N2v, Some(s)) => Ok(s.to_vec()),
        (FeatureMode::Concat, Some(s)) => Ok(glove.iter().chain(s).copied().collect()),
        (m, None) => Err(EmbedError::Config(format!(
            "feature mode {m:?} needs node2vec features"
        ))),
    }
}
