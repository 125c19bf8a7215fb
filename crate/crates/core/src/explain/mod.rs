//! Shapley attributions over tokens, image patches and scene-graph nodes.
//!
//! A player outside the coalition is masked: tokens become `<mask>`,
//! patches become zero vectors, graph nodes get a zero feature row. φ > 0
//! pushes the prediction toward fake (label 1).

mod shapley;

use serde::{Deserialize, Serialize};

pub use shapley::{
    shapley_exact, shapley_permutation, FnGame, Game, Method, ShapleyValues, MAX_EXACT_PLAYERS,
};

use crate::error::Result;
use crate::model::{predict, Model, PreparedExample};
use crate::tem::MASK_ID;

/// Images with more patches than this are attributed per quadrant.
pub const MAX_PATCH_PLAYERS: usize = 16;
/// Samples used when an exact request has too many players.
pub const FALLBACK_SAMPLES: usize = 500;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlayerKind {
    Token,
    Patch,
    TsgNode,
    VsgNode,
}

/// One maskable unit: a token, a patch (or quadrant of patches), or a node.
#[derive(Clone, Debug, PartialEq)]
pub struct Player {
    pub kind: PlayerKind,
    /// Position within its segment.
    pub index: usize,
    /// Underlying token, patch or node indices.
    pub members: Vec<usize>,
    pub text_or_coords: String,
}

/// Players of `ex` in order tokens, patches, TSG nodes, VSG nodes.
/// Segments removed by an ablation contribute none.
pub fn players(ex: &PreparedExample) -> Vec<Player> {
    let mut out = Vec::new();
    for (i, t) in ex.tokens.iter().enumerate() {
        out.push(Player {
            kind: PlayerKind::Token,
            index: i,
            members: vec![i],
            text_or_coords: t.clone(),
        });
    }
    let (rows, cols) = ex.grid;
    let n_patches = rows * cols;
    if n_patches <= MAX_PATCH_PLAYERS {
        for i in 0..n_patches {
            out.push(Player {
                kind: PlayerKind::Patch,
                index: i,
                members: vec![i],
                text_or_coords: format!("r{}c{}", i / cols, i % cols),
            });
        }
    } else {
        let (hr, hc) = (rows.div_ceil(2), cols.div_ceil(2));
        for q in 0..4 {
            let (r0, c0) = ((q / 2) * hr, (q % 2) * hc);
            let (r1, c1) = (
                if q / 2 == 0 { hr } else { rows },
                if q % 2 == 0 { hc } else { cols },
            );
            let members: Vec<usize> = (r0..r1)
                .flat_map(|r| (c0..c1).map(move |c| r * cols + c))
                .collect();
            if !members.is_empty() {
                out.push(Player {
                    kind: PlayerKind::Patch,
                    index: q,
                    members,
                    text_or_coords: format!("r{r0}-{}c{c0}-{}", r1 - 1, c1 - 1),
                });
            }
        }
    }
    let graph_fused = ex.fused.is_some();
    if graph_fused || !ex.ablation.no_tsg {
        for (i, l) in ex.tsg_labels.iter().enumerate() {
            out.push(Player {
                kind: PlayerKind::TsgNode,
                index: i,
                members: vec![i],
                text_or_coords: l.clone(),
            });
        }
    }
    if graph_fused || !ex.ablation.no_vsg {
        for (i, l) in ex.vsg_labels.iter().enumerate() {
            out.push(Player {
                kind: PlayerKind::VsgNode,
                index: i,
                members: vec![i],
                text_or_coords: l.clone(),
            });
        }
    }
    out
}

/// `ex` with every player outside `coalition` masked. A fused-graph node
/// is zeroed once all of the source nodes it came from are masked.
pub fn mask_example(
    ex: &PreparedExample,
    players: &[Player],
    coalition: &[bool],
) -> PreparedExample {
    let mut out = ex.clone();
    let mut tsg_off = Vec::new();
    let mut vsg_off = Vec::new();
    let mut patch_off = Vec::new();
    for (p, _) in players.iter().zip(coalition).filter(|(_, &inside)| !inside) {
        match p.kind {
            PlayerKind::Token => p.members.iter().for_each(|&i| out.token_ids[i] = MASK_ID),
            PlayerKind::Patch => patch_off.extend_from_slice(&p.members),
            PlayerKind::TsgNode => tsg_off.extend_from_slice(&p.members),
            PlayerKind::VsgNode => vsg_off.extend_from_slice(&p.members),
        }
    }
    if !patch_off.is_empty() {
        let d = out.patches.shape()[1];
        let data = out.patches.data_mut();
        for &i in &patch_off {
            data[i * d..(i + 1) * d].fill(0.0);
        }
    }
    out.tsg = out.tsg.with_zeroed_rows(&tsg_off);
    out.vsg = out.vsg.with_zeroed_rows(&vsg_off);
    if let Some(f) = out.fused.as_mut() {
        let rows: Vec<usize> = f
            .origins
            .iter()
            .enumerate()
            .filter(|(_, o)| {
                (o.tsg.is_some() || o.vsg.is_some())
                    && o.tsg.is_none_or(|t| tsg_off.contains(&t))
                    && o.vsg.is_none_or(|v| vsg_off.contains(&v))
            })
            .map(|(i, _)| i)
            .collect();
        f.input = f.input.with_zeroed_rows(&rows);
    }
    out
}

/// The model's fake probability as a game over the players of one example.
pub struct ModelGame<'a> {
    pub model: &'a Model,
    pub example: &'a PreparedExample,
    pub players: Vec<Player>,
}

impl<'a> ModelGame<'a> {
    pub fn new(model: &'a Model, example: &'a PreparedExample) -> Self {
        Self {
            model,
            example,
            players: players(example),
        }
    }
}

impl Game for ModelGame<'_> {
    fn n_players(&self) -> usize {
        self.players.len()
    }

    fn value(&self, coalition: &[bool]) -> Result<f64> {
        Ok(predict(
            self.model,
            &mask_example(self.example, &self.players, coalition),
        )?
        .prob)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MethodRequest {
    Exact,
    Permutation { n_samples: usize, seed: u64 },
}

/// Sign-and-strength class used for highlighting. "Strong" means
/// `|φ| ≥ ½·max|φ|`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Highlight {
    None,
    Fake,
    StrongFake,
    Real,
    StrongReal,
}

fn highlight(phi: f64, max_abs: f64) -> Highlight {
    if phi == 0.0 || max_abs == 0.0 {
        return Highlight::None;
    }
    let strong = phi.abs() >= 0.5 * max_abs;
    match (phi > 0.0, strong) {
        (true, true) => Highlight::StrongFake,
        (true, false) => Highlight::Fake,
        (false, true) => Highlight::StrongReal,
        (false, false) => Highlight::Real,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlayerAttribution {
    pub kind: PlayerKind,
    pub index: usize,
    pub text_or_coords: String,
    pub phi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
    pub highlight: Highlight,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub id: String,
    pub base_value: f64,
    pub full_value: f64,
    pub method: Method,
    pub players: Vec<PlayerAttribution>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Builds the report from Shapley values computed over `players`.
pub fn build_report(
    id: &str,
    players: &[Player],
    values: ShapleyValues,
    warnings: Vec<String>,
) -> AttributionReport {
    let max_abs = values.phi.iter().fold(0.0f64, |m, p| m.max(p.abs()));
    let rows = players
        .iter()
        .enumerate()
        .map(|(i, p)| PlayerAttribution {
            kind: p.kind,
            index: p.index,
            text_or_coords: p.text_or_coords.clone(),
            phi: values.phi[i],
            stderr: values.stderr.as_ref().map(|s| s[i]),
            highlight: highlight(values.phi[i], max_abs),
        })
        .collect();
    AttributionReport {
        id: id.to_string(),
        base_value: values.base_value,
        full_value: values.full_value,
        method: values.method,
        players: rows,
        warnings,
    }
}

/// Attributes the model's prediction on `ex`. Exact requests with more
/// than [`MAX_EXACT_PLAYERS`] players fall back to permutation sampling
/// and say so in `warnings`.
pub fn explain(
    model: &Model,
    ex: &PreparedExample,
    request: MethodRequest,
) -> Result<AttributionReport> {
    let game = ModelGame::new(model, ex);
    let mut warnings = Vec::new();
    let values = match request {
        MethodRequest::Exact if game.n_players() <= MAX_EXACT_PLAYERS => shapley_exact(&game)?,
        MethodRequest::Exact => {
            warnings.push(format!(
                "{} players exceed the exact limit of {MAX_EXACT_PLAYERS}; used {FALLBACK_SAMPLES} sampled permutations",
                game.n_players()
            ));
            shapley_permutation(&game, FALLBACK_SAMPLES, 0)?
        }
        MethodRequest::Permutation { n_samples, seed } => {
            shapley_permutation(&game, n_samples, seed)?
        }
    };
    Ok(build_report(&ex.id, &game.players, values, warnings))
}

pub fn render_json(report: &AttributionReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("reports serialize");
    s.push('\n');
    s
}

fn marked(text: &str, h: Highlight) -> String {
    match h {
        Highlight::None => text.to_string(),
        Highlight::Fake => format!("<{text}>"),
        Highlight::StrongFake => format!("<<{text}>>"),
        Highlight::Real => format!("{{{text}}}"),
        Highlight::StrongReal => format!("{{{{{text}}}}}"),
    }
}

/// Plain-text view: the caption with per-token markers, then one line per
/// non-token player sorted by |φ|.
///
/// `<x>` / `<<x>>` support fake; `{x}` / `{{x}}` support real
pub fn render_text(report: &AttributionReport) -> String {
    let mut out = format!(
        "{}  p(fake) = {:.4}  base = {:.4}\n",
        report.id, report.full_value, report.base_value
    );
    let tokens: Vec<String> = report
        .players
        .iter()
        .filter(|p| p.kind == PlayerKind::Token)
        .map(|p| marked(&p.text_or_coords, p.highlight))
        .collect();
    out.push_str(&format!("text: {}\n", tokens.join(" ")));
    let mut rest: Vec<&PlayerAttribution> = report
        .players
        .iter()
        .filter(|p| p.kind != PlayerKind::Token)
        .collect();
    rest.sort_by(|a, b| b.phi.abs().total_cmp(&a.phi.abs()));
    for p in rest {
        let kind = match p.kind {
            PlayerKind::Patch => "patch",
            PlayerKind::TsgNode => "tsg",
            PlayerKind::VsgNode => "vsg",
            PlayerKind::Token => unreachable!(),
        };
        out.push_str(&format!(
            "{kind:>5} {:>3} {:<16} {:+.6}\n",
            p.index,
            marked(&p.text_or_coords, p.highlight),
            p.phi
        ));
    }
    for w in &report.warnings {
        out.push_str(&format!("warning: {w}\n"));
    }
    out
}
