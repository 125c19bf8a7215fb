use super::{FusionVariant, ModelConfig, PreparedExample};
use crate::error::{Error, Result};
use crate::gsgm::{gsgm_forward, gsgm_forward_cmsg, init_gnn, GraphMask};
use crate::numkit::rng::uniform_init;
use crate::numkit::{Bound, DropoutKey, NumError, ParamStore, Tape, Tensor, Var};
use crate::tem::{init_tem, tem_forward, TemMask};
use crate::Mode;

/// Dropout layer id of the head's hidden activation; encoder layers use
/// their index.
pub const HEAD_DROPOUT_LAYER: u64 = 1000;

/// Dropout settings for one forward pass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stochastic {
    pub mode: Mode,
    pub p: f64,
    pub head: bool,
    pub key: DropoutKey,
}

impl Stochastic {
    pub fn eval() -> Self {
        Self {
            mode: Mode::Eval,
            p: 0.0,
            head: false,
            key: DropoutKey::new(0, 0, 0),
        }
    }
}

/// Architecture plus parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub config: ModelConfig,
    pub fusion: FusionVariant,
    pub params: ParamStore,
}

pub struct ForwardOutput {
    pub prob: Var,
    /// `[d_fused]`, encoder part first.
    pub fused: Var,
    pub flags: Vec<&'static str>,
}

impl Model {
    /// Fresh parameters. `feature_dim` replaces `config.gsgm.input_dim`.
    pub fn new(
        config: &ModelConfig,
        fusion: FusionVariant,
        vocab_size: usize,
        feature_dim: usize,
        seed: u64,
    ) -> Result<Self> {
        let mut config = *config;
        config.gsgm.input_dim = feature_dim;
        config.validate()?;
        let mut params = ParamStore::new();
        init_tem(&mut params, &config.tem, vocab_size, seed);
        if fusion.is_cmsg() {
            init_gnn(&mut params, "gsgm.cmsg", &config.gsgm, seed);
        } else {
            init_gnn(&mut params, "gsgm.tsg", &config.gsgm, seed);
            init_gnn(&mut params, "gsgm.vsg", &config.gsgm, seed);
        }
        let d_fused = Self::fused_dim(&config, fusion);
        let h = config.head_hidden;
        params.insert(
            "head.w1",
            uniform_init(&[d_fused, h], d_fused, seed, "head.w1"),
        );
        params.insert("head.b1", Tensor::zeros(&[h]));
        params.insert("head.w2", uniform_init(&[h, 1], h, seed, "head.w2"));
        params.insert("head.b2", Tensor::zeros(&[1]));
        Ok(Self {
            config,
            fusion,
            params,
        })
    }

    /// Wraps loaded parameters after checking every expected tensor is
    /// present with the right shape.
    pub fn from_params(
        config: &ModelConfig,
        fusion: FusionVariant,
        params: ParamStore,
    ) -> Result<Self> {
        let vocab = params
            .get("tem.token_embedding")
            .map(|t| t.shape()[0])
            .ok_or_else(|| {
                Error::Num(NumError::Checkpoint("missing tem.token_embedding".into()))
            })?;
        let feature_dim = params
            .get(if fusion.is_cmsg() {
                "gsgm.cmsg.gcn1.weight"
            } else {
                "gsgm.tsg.gcn1.weight"
            })
            .map(|t| t.shape()[0])
            .ok_or_else(|| Error::Num(NumError::Checkpoint("missing GCN weights".into())))?;
        let template = Self::new(config, fusion, vocab, feature_dim, 0)?;
        for (name, t) in template.params.iter() {
            match params.get(name) {
                Some(p) if p.shape() == t.shape() => {}
                Some(p) => {
                    return Err(Error::Num(NumError::Checkpoint(format!(
                        "{name}: checkpoint shape {:?}, model expects {:?}",
                        p.shape(),
                        t.shape()
                    ))))
                }
                None => return Err(Error::Num(NumError::Checkpoint(format!("missing {name}")))),
            }
        }
        if params.len() != template.params.len() {
            return Err(Error::Num(NumError::Checkpoint(
                "checkpoint has tensors this model does not use".into(),
            )));
        }
        Ok(Self {
            config: template.config,
            fusion,
            params,
        })
    }

    pub fn fused_dim(config: &ModelConfig, fusion: FusionVariant) -> usize {
        let g = config.gsgm.output_dim;
        config.tem.d_model + if fusion.is_cmsg() { g } else { 2 * g }
    }

    /// Probability that `ex` is fake, plus the fused embedding.
    pub fn forward(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        ex: &PreparedExample,
        st: Stochastic,
    ) -> Result<ForwardOutput> {
        let cfg = &self.config;
        let tem = tem_forward(
            tape,
            bound,
            &cfg.tem,
            &ex.token_ids,
            &ex.patches,
            TemMask::default(),
            st.mode,
            st.p,
            st.key,
        )?;
        let (e_sg, flags) = match (self.fusion, &ex.fused) {
            (FusionVariant::Base, _) => {
                let mask = GraphMask {
                    no_tsg: ex.ablation.no_tsg,
                    no_vsg: ex.ablation.no_vsg,
                };
                gsgm_forward(tape, bound, &cfg.gsgm, &ex.tsg, &ex.vsg, mask)?
            }
            (v, Some(f)) => {
                let e =
                    gsgm_forward_cmsg(tape, bound, &cfg.gsgm, &f.input, v == FusionVariant::Cmsg1)?;
                let flags = if f.input.is_empty() {
                    vec!["empty_cmsg"]
                } else {
                    vec![]
                };
                (e, flags)
            }
            (v, None) => {
                return Err(Error::Structure(format!(
                    "{}: {v:?} model needs a fused scene graph",
                    ex.id
                )))
            }
        };
        let fused = fuse(tape, tem.pooled, e_sg, Self::fused_dim(cfg, self.fusion))?;
        let prob = classify(tape, bound, fused, st)?;
        Ok(ForwardOutput { prob, fused, flags })
    }
}

/// `E_final = E_encoder ⊕ E_SG`.
pub fn fuse(tape: &mut Tape, e_encoder: Var, e_sg: Var, d_fused: usize) -> Result<Var> {
    let n = tape.value(e_encoder).numel() + tape.value(e_sg).numel();
    if n != d_fused {
        return Err(Error::Num(NumError::Shape(format!(
            "fused length {n}, head expects {d_fused}"
        ))));
    }
    Ok(tape.concat(&[e_encoder, e_sg], 0)?)
}

/// `sigmoid(W₂ · relu(W₁ · e + b₁) + b₂)` as a scalar.
pub fn classify(tape: &mut Tape, bound: &Bound, e_final: Var, st: Stochastic) -> Result<Var> {
    let d = tape.value(e_final).numel();
    let x = tape.reshape(e_final, &[1, d])?;
    let h = tape.matmul(x, bound.var("head.w1"))?;
    let h = tape.add(h, bound.var("head.b1"))?;
    let h = tape.relu(h);
    let h = if st.head {
        tape.dropout(
            h,
            st.p,
            st.key.with_layer(HEAD_DROPOUT_LAYER),
            st.mode == Mode::Train,
        )?
    } else {
        h
    };
    let z = tape.matmul(h, bound.var("head.w2"))?;
    let z = tape.add(z, bound.var("head.b2"))?;
    let z = tape.reshape(z, &[])?;
    Ok(tape.sigmoid(z))
}
