//! Finite-difference check of the whole model on a tiny instance.

use super::{Ablation, FusionVariant, Model, ModelConfig, PreparedExample, Stochastic};
use crate::error::Result;
use crate::gsgm::{GraphInput, GsgmConfig};
use crate::numkit::gradcheck::{compare, numeric_grads, GroupReport};
use crate::numkit::rng::keyed_rng;
use crate::numkit::{Bound, DropoutKey, ParamStore, Tape, Tensor, Var};
use crate::scenegraph::{Edge, Modality, Node, NodeKind, SceneGraph};
use crate::tem::TemConfig;
use crate::Mode;
use rand::RngExt;

pub const GRADCHECK_EPS: f64 = 1e-5;
pub const GRADCHECK_TOL: f64 = 1e-4;

/// Reduced widths so every scalar can be perturbed in a few seconds.
pub fn gradcheck_config() -> ModelConfig {
    ModelConfig {
        tem: TemConfig {
            d_model: 8,
            n_heads: 2,
            n_layers: 2,
            ff_dim: 12,
            max_len: 8,
            patch_dim: 12,
            layernorm_eps: 1e-5,
        },
        gsgm: GsgmConfig {
            input_dim: 5,
            hidden_dim: 6,
            output_dim: 4,
            bias: true,
        },
        head_hidden: 6,
        ..ModelConfig::default()
    }
}

fn random_rows(n: usize, d: usize, seed: u64, label: &str) -> Vec<Vec<f64>> {
    let mut rng = keyed_rng(seed, label, 0);
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

/// Two tokens, one patch, and a three-node chain in each scene graph.
pub fn gradcheck_instance(cfg: &ModelConfig, seed: u64) -> Result<PreparedExample> {
    let chain = |m: Modality, labels: [&str; 3]| {
        SceneGraph::new(
            vec![
                Node::new(0, NodeKind::Object, labels[0]),
                Node::new(1, NodeKind::Relationship, labels[1]),
                Node::new(2, NodeKind::Object, labels[2]),
            ],
            vec![Edge::new(0, 1), Edge::new(1, 2)],
            m,
        )
    };
    let tsg = chain(Modality::Text, ["dog", "chasing", "car"]);
    let vsg = chain(Modality::Visual, ["man", "holding", "gun"]);
    let d = cfg.gsgm.input_dim;
    let patch = random_rows(1, cfg.tem.patch_dim, seed, "gradcheck.patch").concat();
    Ok(PreparedExample {
        id: "gradcheck".into(),
        label: 1,
        tokens: vec!["breaking".into(), "news".into()],
        token_ids: vec![4, 5],
        patches: Tensor::new(vec![1, cfg.tem.patch_dim], patch)?,
        grid: (1, 1),
        tsg: GraphInput::new(&tsg, random_rows(3, d, seed, "gradcheck.tsg"), d)?,
        vsg: GraphInput::new(&vsg, random_rows(3, d, seed, "gradcheck.vsg"), d)?,
        tsg_labels: tsg.nodes().iter().map(|n| n.label.clone()).collect(),
        vsg_labels: vsg.nodes().iter().map(|n| n.label.clone()).collect(),
        fused: None,
        ablation: Ablation::default(),
    })
}

/// Parameter group used in reports: the tensor name without a trailing
/// `weight`/`bias`/`gain`.
pub fn param_group(name: &str) -> String {
    match name.rsplit_once('.') {
        Some((head, "weight" | "bias" | "gain")) => head.to_string(),
        _ => name.to_string(),
    }
}

/// Autodiff against central differences for every parameter of a base
/// model, in train mode with dropout active under a fixed key.
pub fn model_gradcheck(seed: u64) -> Result<Vec<GroupReport>> {
    let cfg = gradcheck_config();
    let ex = gradcheck_instance(&cfg, seed)?;
    let model = Model::new(&cfg, FusionVariant::Base, 6, cfg.gsgm.input_dim, seed)?;
    let st = Stochastic {
        mode: Mode::Train,
        p: 0.3,
        head: true,
        key: DropoutKey::new(seed, 0, 0),
    };
    let loss_of = |params: &ParamStore, trainable: bool| -> Result<(Tape, f64, Bound, Var)> {
        let m = Model {
            config: model.config,
            fusion: model.fusion,
            params: params.clone(),
        };
        let mut tape = Tape::new();
        let bound = m.params.bind(&mut tape, trainable);
        let out = m.forward(&mut tape, &bound, &ex, st)?;
        let loss = tape.bce(out.prob, f64::from(ex.label))?;
        let v = tape.value(loss).item()?;
        Ok((tape, v, bound, loss))
    };
    let (mut tape, _, bound, loss) = loss_of(&model.params, true)?;
    tape.backward(loss)?;
    let analytic = bound.grads(&tape);
    let numeric = numeric_grads(&model.params, GRADCHECK_EPS, |p| {
        loss_of(p, false).map(|r| r.1)
    })?;
    Ok(compare(&analytic, &numeric, param_group))
}
