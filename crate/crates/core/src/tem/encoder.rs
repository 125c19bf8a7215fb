use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::rng::uniform_init;
use crate::numkit::{Bound, DropoutKey, ParamStore, Tape, Tensor, Var};
use crate::Mode;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TemConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub ff_dim: usize,
    pub max_len: usize,
    /// Flattened patch length, `patch_size² × 3`.
    pub patch_dim: usize,
    pub layernorm_eps: f64,
}

impl Default for TemConfig {
    fn default() -> Self {
        Self {
            d_model: 64,
            n_heads: 4,
            n_layers: 2,
            ff_dim: 128,
            max_len: 128,
            patch_dim: 768,
            layernorm_eps: 1e-5,
        }
    }
}

impl TemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::Config(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.d_model == 0 || self.ff_dim == 0 || self.max_len == 0 {
            return Err(Error::Config("TEM dimensions must be positive".into()));
        }
        Ok(())
    }
}

/// Which input segments the encoder drops.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TemMask {
    pub no_text: bool,
    pub no_image: bool,
}

pub(crate) fn layer_prefix(l: usize) -> String {
    format!("tem.layer{l}")
}

pub fn init_tem(store: &mut ParamStore, cfg: &TemConfig, vocab_size: usize, seed: u64) {
    let d = cfg.d_model;
    let emb_bound_fan = d;
    store.insert(
        "tem.token_embedding",
        uniform_init(&[vocab_size, d], emb_bound_fan, seed, "tem.token_embedding"),
    );
    store.insert(
        "tem.patch_proj.weight",
        uniform_init(
            &[cfg.patch_dim, d],
            cfg.patch_dim,
            seed,
            "tem.patch_proj.weight",
        ),
    );
    store.insert("tem.patch_proj.bias", Tensor::zeros(&[d]));
    store.insert(
        "tem.position",
        uniform_init(&[cfg.max_len, d], emb_bound_fan, seed, "tem.position"),
    );
    store.insert(
        "tem.modality",
        uniform_init(&[2, d], emb_bound_fan, seed, "tem.modality"),
    );
    for l in 0..cfg.n_layers {
        let p = layer_prefix(l);
        for proj in ["q", "k", "v", "o"] {
            let name = format!("{p}.attn.{proj}.weight");
            store.insert(&name, uniform_init(&[d, d], d, seed, &name));
            store.insert(&format!("{p}.attn.{proj}.bias"), Tensor::zeros(&[d]));
        }
        for ln in ["ln1", "ln2"] {
            store.insert(&format!("{p}.{ln}.gain"), Tensor::full(&[d], 1.0));
            store.insert(&format!("{p}.{ln}.bias"), Tensor::zeros(&[d]));
        }
        let w1 = format!("{p}.ffn.w1");
        let w2 = format!("{p}.ffn.w2");
        store.insert(&w1, uniform_init(&[d, cfg.ff_dim], d, seed, &w1));
        store.insert(&format!("{p}.ffn.b1"), Tensor::zeros(&[cfg.ff_dim]));
        store.insert(&w2, uniform_init(&[cfg.ff_dim, d], cfg.ff_dim, seed, &w2));
        store.insert(&format!("{p}.ffn.b2"), Tensor::zeros(&[d]));
    }
}

/// Pooled encoder output plus the per-layer, per-head attention matrices.
pub struct TemOutput {
    pub pooled: Var,
    pub attention: Vec<Vec<Var>>,
}

/// Encodes token ids followed by image patches into one `d_model` vector.
///
/// Each layer is multi-head self-attention → add & norm → FFN → add & norm
/// → dropout; the final hidden states are mean-pooled. Dropout keys use
/// the layer index as layer id.
#[allow(clippy::too_many_arguments)]
pub fn tem_forward(
    tape: &mut Tape,
    bound: &Bound,
    cfg: &TemConfig,
    tokens: &[usize],
    patches: &Tensor,
    mask: TemMask,
    mode: Mode,
    dropout: f64,
    key: DropoutKey,
) -> Result<TemOutput> {
    let d = cfg.d_model;
    let use_text = !mask.no_text && !tokens.is_empty();
    let n_patches = if mask.no_image { 0 } else { patches.shape()[0] };
    let len = if use_text { tokens.len() } else { 0 } + n_patches;
    if len == 0 {
        return Err(Error::Input("encoder input sequence is empty".into()));
    }
    if len > cfg.max_len {
        return Err(Error::Input(format!(
            "sequence length {len} exceeds max_len {}",
            cfg.max_len
        )));
    }

    let mut segments = Vec::with_capacity(2);
    let mut modality_ids = Vec::with_capacity(len);
    if use_text {
        segments.push(tape.gather_rows(bound.var("tem.token_embedding"), tokens)?);
        modality_ids.extend(std::iter::repeat_n(0, tokens.len()));
    }
    if n_patches > 0 {
        if patches.shape()[1] != cfg.patch_dim {
            return Err(Error::Input(format!(
                "patch length {} does not match configured {}",
                patches.shape()[1],
                cfg.patch_dim
            )));
        }
        let p = tape.constant(patches.clone());
        let proj = tape.matmul(p, bound.var("tem.patch_proj.weight"))?;
        segments.push(tape.add(proj, bound.var("tem.patch_proj.bias"))?);
        modality_ids.extend(std::iter::repeat_n(1, n_patches));
    }
    let x = if segments.len() == 1 {
        segments[0]
    } else {
        tape.concat(&segments, 0)?
    };
    let pos = tape.narrow(bound.var("tem.position"), 0, 0, len)?;
    let typ = tape.gather_rows(bound.var("tem.modality"), &modality_ids)?;
    let x = tape.add(x, pos)?;
    let mut h = tape.add(x, typ)?;

    let mut attention = Vec::with_capacity(cfg.n_layers);
    for l in 0..cfg.n_layers {
        let p = layer_prefix(l);
        let (attn_out, weights) = self_attention(tape, bound, &p, h, cfg.n_heads, d)?;
        attention.push(weights);
        let res = tape.add(h, attn_out)?;
        let h1 = layer_norm(tape, bound, &format!("{p}.ln1"), res, cfg.layernorm_eps)?;
        let f = linear(
            tape,
            bound,
            h1,
            &format!("{p}.ffn.w1"),
            &format!("{p}.ffn.b1"),
        )?;
        let f = tape.relu(f);
        let f = linear(
            tape,
            bound,
            f,
            &format!("{p}.ffn.w2"),
            &format!("{p}.ffn.b2"),
        )?;
        let res = tape.add(h1, f)?;
        let h2 = layer_norm(tape, bound, &format!("{p}.ln2"), res, cfg.layernorm_eps)?;
        h = tape.dropout(h2, dropout, key.with_layer(l as u64), mode == Mode::Train)?;
    }
    let pooled = tape.mean_pool(h)?;
    Ok(TemOutput { pooled, attention })
}

fn linear(tape: &mut Tape, bound: &Bound, x: Var, w: &str, b: &str) -> Result<Var> {
    let y = tape.matmul(x, bound.var(w))?;
    Ok(tape.add(y, bound.var(b))?)
}

fn layer_norm(tape: &mut Tape, bound: &Bound, prefix: &str, x: Var, eps: f64) -> Result<Var> {
    let n = tape.layernorm(x, eps)?;
    let g = tape.mul(n, bound.var(&format!("{prefix}.gain")))?;
    Ok(tape.add(g, bound.var(&format!("{prefix}.bias")))?)
}

/// Bidirectional multi-head attention over the rows of `x`.
pub(crate) fn self_attention(
    tape: &mut Tape,
    bound: &Bound,
    prefix: &str,
    x: Var,
    n_heads: usize,
    d: usize,
) -> Result<(Var, Vec<Var>)> {
    let q = linear(
        tape,
        bound,
        x,
        &format!("{prefix}.attn.q.weight"),
        &format!("{prefix}.attn.q.bias"),
    )?;
    let k = linear(
        tape,
        bound,
        x,
        &format!("{prefix}.attn.k.weight"),
        &format!("{prefix}.attn.k.bias"),
    )?;
    let v = linear(
        tape,
        bound,
        x,
        &format!("{prefix}.attn.v.weight"),
        &format!("{prefix}.attn.v.bias"),
    )?;
    let dh = d / n_heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut heads = Vec::with_capacity(n_heads);
    let mut weights = Vec::with_capacity(n_heads);
    for hd in 0..n_heads {
        let qh = tape.narrow(q, 1, hd * dh, dh)?;
        let kh = tape.narrow(k, 1, hd * dh, dh)?;
        let vh = tape.narrow(v, 1, hd * dh, dh)?;
        let kt = tape.transpose(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let scores = tape.scale(scores, scale);
        let a = tape.softmax(scores, 1)?;
        weights.push(a);
        heads.push(tape.matmul(a, vh)?);
    }
    let cat = if heads.len() == 1 {
        heads[0]
    } else {
        tape.concat(&heads, 1)?
    };
    let out = linear(
        tape,
        bound,
        cat,
        &format!("{prefix}.attn.o.weight"),
        &format!("{prefix}.attn.o.bias"),
    )?;
    Ok((out, weights))
}
