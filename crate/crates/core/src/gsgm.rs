//! Scene-graph encoders: two-layer GCNs with global mean pooling.
//!
//! The base model runs one GCN per modality and concatenates the pooled
//! outputs (`E_SG = E_TSG ⊕ E_VSG`). Cross-modal variants run a single GCN
//! over the fused graph.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkit::rng::uniform_init;
use crate::numkit::{Bound, ParamStore, Tape, Tensor, Var};
use crate::scenegraph::{PlainGraph, SceneGraph};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GsgmConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub output_dim: usize,
    pub bias: bool,
}

impl Default for GsgmConfig {
    fn default() -> Self {
        Self {
            input_dim: 50,
            hidden_dim: 64,
            output_dim: 64,
            bias: true,
        }
    }
}

/// `D̂^(−1/2) Â D̂^(−1/2)` with `Â = A + I`.
pub fn normalized_adjacency(g: &PlainGraph) -> Tensor {
    let n = g.len();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|v| 1.0 / ((g.degree(v) + 1) as f64).sqrt())
        .collect();
    let mut t = Tensor::zeros(&[n, n]);
    let d = t.data_mut();
    for v in 0..n {
        d[v * n + v] = inv_sqrt[v] * inv_sqrt[v];
        for &u in g.neighbors(v) {
            d[v * n + u] = inv_sqrt[v] * inv_sqrt[u];
        }
    }
    t
}

/// Graph ready for the GCN: normalized adjacency plus one feature row per
/// node.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphInput {
    pub adjacency: Tensor,
    pub features: Tensor,
    /// Row of the node whose representation is read out instead of the
    /// mean pool (CMSG Type 1).
    pub readout: Option<usize>,
}

impl GraphInput {
    pub fn new(g: &SceneGraph, features: Vec<Vec<f64>>, dim: usize) -> Result<Self> {
        if features.len() != g.len() {
            return Err(Error::Input(format!(
                "{} feature rows for {} nodes",
                features.len(),
                g.len()
            )));
        }
        if features.iter().any(|r| r.len() != dim) {
            return Err(Error::Input(format!("feature rows must have length {dim}")));
        }
        let features = Tensor::new(vec![g.len(), dim], features.concat())?;
        Ok(Self {
            adjacency: normalized_adjacency(&g.to_plain_graph()),
            features,
            readout: g.dummy(),
        })
    }

    pub fn len(&self) -> usize {
        self.features.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copy with the given feature rows set to zero.
    pub fn with_zeroed_rows(&self, rows: &[usize]) -> Self {
        let mut out = self.clone();
        let d = out.features.shape()[1];
        for &r in rows {
            out.features.data_mut()[r * d..(r + 1) * d].fill(0.0);
        }
        out
    }
}

/// Parameter names of one two-layer GCN under `prefix`.
#[derive(Clone, Debug)]
pub struct GnnNames {
    pub w1: String,
    pub b1: String,
    pub w2: String,
    pub b2: String,
}

impl GnnNames {
    pub fn new(prefix: &str) -> Self {
        Self {
            w1: format!("{prefix}.gcn1.weight"),
            b1: format!("{prefix}.gcn1.bias"),
            w2: format!("{prefix}.gcn2.weight"),
            b2: format!("{prefix}.gcn2.bias"),
        }
    }
}

pub fn init_gnn(store: &mut ParamStore, prefix: &str, cfg: &GsgmConfig, seed: u64) {
    let n = GnnNames::new(prefix);
    store.insert(
        &n.w1,
        uniform_init(&[cfg.input_dim, cfg.hidden_dim], cfg.input_dim, seed, &n.w1),
    );
    store.insert(
        &n.w2,
        uniform_init(
            &[cfg.hidden_dim, cfg.output_dim],
            cfg.hidden_dim,
            seed,
            &n.w2,
        ),
    );
    if cfg.bias {
        store.insert(&n.b1, Tensor::zeros(&[cfg.hidden_dim]));
        store.insert(&n.b2, Tensor::zeros(&[cfg.output_dim]));
    }
}

/// Tape handles for one GCN.
#[derive(Clone, Copy, Debug)]
pub struct GnnVars {
    pub w1: Var,
    pub b1: Option<Var>,
    pub w2: Var,
    pub b2: Option<Var>,
}

impl GnnVars {
    pub fn bind(bound: &Bound, prefix: &str) -> Self {
        let n = GnnNames::new(prefix);
        Self {
            w1: bound.var(&n.w1),
            b1: bound.try_var(&n.b1),
            w2: bound.var(&n.w2),
            b2: bound.try_var(&n.b2),
        }
    }
}

/// `Â_norm · X · W (+ b)`, no activation.
pub fn gcn_propagate(tape: &mut Tape, adj: Var, x: Var, w: Var, b: Option<Var>) -> Result<Var> {
    let n = tape.value(adj).dims2()?.0;
    let rows = tape.value(x).dims2()?.0;
    if rows != n {
        return Err(Error::Num(crate::numkit::NumError::Shape(format!(
            "{rows} feature rows for a {n}-node adjacency"
        ))));
    }
    let agg = tape.matmul(adj, x)?;
    let out = tape.matmul(agg, w)?;
    Ok(match b {
        Some(b) => tape.add(out, b)?,
        None => out,
    })
}

/// Node states after `ReLU(GCN₂(ReLU(GCN₁(X))))`. Requires at least one node.
pub fn gnn_node_states(tape: &mut Tape, input: &GraphInput, gnn: &GnnVars) -> Result<Var> {
    let adj = tape.constant(input.adjacency.clone());
    let x = tape.constant(input.features.clone());
    let h = gcn_propagate(tape, adj, x, gnn.w1, gnn.b1)?;
    let h = tape.relu(h);
    let h = gcn_propagate(tape, adj, h, gnn.w2, gnn.b2)?;
    Ok(tape.relu(h))
}

/// Pooled graph embedding and whether the graph was empty (in which case
/// the embedding is a zero vector).
#[derive(Clone, Copy, Debug)]
pub struct GraphEncoding {
    pub embedding: Var,
    pub empty: bool,
}

/// Mean-pooled GCN embedding of a graph, `[output_dim]`.
pub fn encode_graph(
    tape: &mut Tape,
    input: &GraphInput,
    gnn: &GnnVars,
    output_dim: usize,
) -> Result<GraphEncoding> {
    if input.is_empty() {
        let zero = tape.constant(Tensor::zeros(&[output_dim]));
        return Ok(GraphEncoding {
            embedding: zero,
            empty: true,
        });
    }
    let h = gnn_node_states(tape, input, gnn)?;
    let pooled = tape.mean_pool(h)?;
    Ok(GraphEncoding {
        embedding: pooled,
        empty: false,
    })
}

/// Which halves of `E_SG` are zeroed by ablation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct GraphMask {
    pub no_tsg: bool,
    pub no_vsg: bool,
}

/// `E_SG = E_TSG ⊕ E_VSG`, length `2 × output_dim`. An ablated half is
/// replaced by zeros of the same length.
pub fn gsgm_forward(
    tape: &mut Tape,
    bound: &Bound,
    cfg: &GsgmConfig,
    tsg: &GraphInput,
    vsg: &GraphInput,
    mask: GraphMask,
) -> Result<(Var, Vec<&'static str>)> {
    let mut flags = Vec::new();
    let mut half = |tape: &mut Tape, input: &GraphInput, prefix: &str, off: bool, flag| {
        if off {
            return Ok::<_, Error>(tape.constant(Tensor::zeros(&[cfg.output_dim])));
        }
        let enc = encode_graph(tape, input, &GnnVars::bind(bound, prefix), cfg.output_dim)?;
        if enc.empty {
            flags.push(flag);
        }
        Ok(enc.embedding)
    };
    let t = half(tape, tsg, "gsgm.tsg", mask.no_tsg, "empty_tsg")?;
    let v = half(tape, vsg, "gsgm.vsg", mask.no_vsg, "empty_vsg")?;
    Ok((tape.concat(&[t, v], 0)?, flags))
}

/// Single-GNN path over a fused graph: the dummy node's final state when the
/// graph has a readout node, the mean pool otherwise.
pub fn gsgm_forward_cmsg(
    tape: &mut Tape,
    bound: &Bound,
    cfg: &GsgmConfig,
    fused: &GraphInput,
    expect_readout: bool,
) -> Result<Var> {
    let gnn = GnnVars::bind(bound, "gsgm.cmsg");
    match (expect_readout, fused.readout) {
        (true, None) => Err(Error::Structure(
            "CMSG Type 1 graph has no recorded dummy node".into(),
        )),
        (true, Some(r)) => {
            let h = gnn_node_states(tape, fused, &gnn)?;
            let row = tape.narrow(h, 0, r, 1)?;
            Ok(tape.reshape(row, &[cfg.output_dim])?)
        }
        (false, _) => Ok(encode_graph(tape, fused, &gnn, cfg.output_dim)?.embedding),
    }
}
