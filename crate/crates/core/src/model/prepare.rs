use super::{Ablation, Example, FusionVariant, ModelConfig, TrainConfig};
use crate::embeddings::{
    combine_features, node2vec_embed, FeatureMode, Featurizer, Node2VecConfig,
};
use crate::error::{Error, Result};
use crate::gsgm::GraphInput;
use crate::numkit::Tensor;
use crate::scenegraph::{build_cmsg, CmsgSpec, CmsgVariant, Origin, SceneGraph};
use crate::tem::{patchify, tokenize, Vocabulary, PATCH_SIZE};

/// Fused scene graph ready for the single-GNN path.
#[derive(Clone, Debug, PartialEq)]
pub struct FusedInput {
    pub input: GraphInput,
    pub origins: Vec<Origin>,
    pub merges: usize,
}

/// An example turned into tensors. Ablations recorded here have already
/// been applied to the encoder inputs; the graph flags are honored by the
/// forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedExample {
    pub id: String,
    pub label: u8,
    /// Tokens after truncation to the encoder's length budget.
    pub tokens: Vec<String>,
    pub token_ids: Vec<usize>,
    /// `[n_patches × patch_dim]`.
    pub patches: Tensor,
    /// Patch grid rows and columns.
    pub grid: (usize, usize),
    pub tsg: GraphInput,
    pub vsg: GraphInput,
    pub tsg_labels: Vec<String>,
    pub vsg_labels: Vec<String>,
    pub fused: Option<FusedInput>,
    pub ablation: Ablation,
}

/// Everything needed to turn raw examples into model inputs.
#[derive(Clone, Debug)]
pub struct Preprocessor<'a> {
    pub vocab: Vocabulary,
    pub featurizer: Featurizer<'a>,
    pub feature_mode: FeatureMode,
    pub node2vec: Node2VecConfig,
    pub fusion: FusionVariant,
    pub cmsg_threshold: Option<f64>,
    pub max_len: usize,
}

impl<'a> Preprocessor<'a> {
    pub fn new(
        vocab: Vocabulary,
        featurizer: Featurizer<'a>,
        model: &ModelConfig,
        train: &TrainConfig,
    ) -> Self {
        Self {
            vocab,
            featurizer,
            feature_mode: train.feature_mode,
            node2vec: model.node2vec,
            fusion: train.fusion,
            cmsg_threshold: train.cmsg_threshold,
            max_len: model.tem.max_len,
        }
    }

    /// Width of one node feature row.
    pub fn feature_dim(&self) -> usize {
        match self.feature_mode {
            FeatureMode::Glove => self.featurizer.dim(),
            FeatureMode::N2v => self.node2vec.embedding_dim,
            FeatureMode::Concat => self.featurizer.dim() + self.node2vec.embedding_dim,
        }
    }

    pub fn node_features(&self, g: &SceneGraph) -> Result<Vec<Vec<f64>>> {
        if g.is_empty() {
            return Ok(Vec::new());
        }
        let n2v = match self.feature_mode {
            FeatureMode::Glove => None,
            _ => Some(node2vec_embed(&g.to_plain_graph(), &self.node2vec)?),
        };
        g.nodes()
            .iter()
            .map(|n| {
                let glove = self.featurizer.featurize(n);
                let s = n2v.as_ref().map(|t| t.row(n.id));
                Ok(combine_features(&glove, s, self.feature_mode)?)
            })
            .collect()
    }

    fn graph_input(&self, g: &SceneGraph) -> Result<GraphInput> {
        GraphInput::new(g, self.node_features(g)?, self.feature_dim())
    }

    pub fn prepare(&self, ex: &Example) -> Result<PreparedExample> {
        let grid = patchify(&ex.image, PATCH_SIZE)?;
        let n_patches = grid.count();
        if n_patches > self.max_len {
            return Err(Error::Input(format!(
                "{}: {n_patches} patches exceed max_len {}",
                ex.id, self.max_len
            )));
        }
        let mut tokens = tokenize(&ex.text);
        tokens.truncate(self.max_len - n_patches);
        let token_ids = self.vocab.encode(&tokens);

        let fused = match self.fusion {
            FusionVariant::Base => None,
            v => {
                let spec = match v {
                    FusionVariant::Cmsg1 => CmsgSpec::new(CmsgVariant::Type1, None),
                    FusionVariant::Cmsg2 => CmsgSpec::new(CmsgVariant::Type2, None),
                    _ => CmsgSpec::new(CmsgVariant::Type3, self.cmsg_threshold),
                }?;
                let f = build_cmsg(&spec, &ex.tsg, &ex.vsg, &self.featurizer)?;
                Some(FusedInput {
                    input: self.graph_input(&f.graph)?,
                    origins: f.origins,
                    merges: f.merges,
                })
            }
        };
        let labels = |g: &SceneGraph| g.nodes().iter().map(|n| n.label.clone()).collect();
        Ok(PreparedExample {
            id: ex.id.clone(),
            label: ex.label,
            tokens,
            token_ids,
            patches: grid.patches,
            grid: (grid.rows, grid.cols),
            tsg: self.graph_input(&ex.tsg)?,
            vsg: self.graph_input(&ex.vsg)?,
            tsg_labels: labels(&ex.tsg),
            vsg_labels: labels(&ex.vsg),
            fused,
            ablation: Ablation::default(),
        })
    }
}

/// Returns `ex` with `flags` applied on top of any earlier ablation.
///
/// `no_text` empties the token sequence and `no_image` the patch sequence;
/// the scene graphs are untouched by either. `no_tsg`/`no_vsg` are recorded
/// for the forward pass, which zeroes that half of the graph embedding. On
/// a fused graph they zero the rows of nodes that came only from the
/// ablated graph.
pub fn apply_ablation(ex: &PreparedExample, flags: Ablation) -> Result<PreparedExample> {
    flags.validate()?;
    let mut out = ex.clone();
    if flags.no_text {
        out.tokens.clear();
        out.token_ids.clear();
    }
    if flags.no_image {
        out.patches = Tensor::zeros(&[0, ex.patches.shape()[1]]);
        out.grid = (0, 0);
    }
    if let Some(f) = out.fused.as_mut() {
        let rows: Vec<usize> = f
            .origins
            .iter()
            .enumerate()
            .filter(|(_, o)| match (o.tsg, o.vsg) {
                (Some(_), None) => flags.no_tsg,
                (None, Some(_)) => flags.no_vsg,
                _ => false,
            })
            .map(|(i, _)| i)
            .collect();
        f.input = f.input.with_zeroed_rows(&rows);
    }
    out.ablation = Ablation {
        no_vsg: ex.ablation.no_vsg || flags.no_vsg,
        no_tsg: ex.ablation.no_tsg || flags.no_tsg,
        no_image: ex.ablation.no_image || flags.no_image,
        no_text: ex.ablation.no_text || flags.no_text,
    };
    out.ablation.validate()?;
    Ok(out)
}
