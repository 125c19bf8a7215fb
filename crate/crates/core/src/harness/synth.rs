//! Planted-signal corpus. Real and fake records come from one distribution
//! except for the modality named by [`Signal`], where every fake record
//! carries a fixed pattern.

use std::fs;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::RngExt;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{write_manifest, Dataset, ManifestRecord, Split};
use crate::error::{Error, Result};
use crate::model::Example;
use crate::numkit::rng::keyed_rng;
use crate::scenegraph::{serialize_scene_graph, Edge, Modality, Node, NodeKind, SceneGraph};
use crate::tem::{RgbImage, PATCH_SIZE};

/// Subject, relationship, object planted in fake TSGs.
pub const TSG_SIGNAL: [&str; 3] = ["dog", "chasing", "car"];
/// Subject, relationship, object planted in fake VSGs.
pub const VSG_SIGNAL: [&str; 3] = ["man", "holding", "gun"];
/// One of these appears in every fake caption when text carries the signal.
pub const TEXT_MARKERS: [&str; 3] = ["shocking", "exclusive", "viral"];
const SIGNAL_RGB: [u8; 3] = [220, 30, 30];

const OBJECTS: &[&str] = &[
    "man",
    "woman",
    "boy",
    "girl",
    "child",
    "person",
    "officer",
    "soldier",
    "doctor",
    "politician",
    "dog",
    "cat",
    "horse",
    "bird",
    "car",
    "bus",
    "truck",
    "bike",
    "boat",
    "building",
    "tree",
    "flag",
    "table",
    "chair",
    "sign",
    "phone",
    "camera",
    "book",
    "ball",
    "gun",
    "bottle",
];
const ATTRIBUTES: &[&str] = &[
    "red", "blue", "green", "white", "black", "yellow", "tall", "small", "large", "old", "young",
    "wet", "empty", "broken", "burning",
];
const RELATIONS: &[&str] = &[
    "holding", "near", "on", "riding", "wearing", "behind", "next", "chasing", "carrying",
    "watching", "standing", "sitting", "under", "above",
];
const TEXT_WORDS: &[&str] = &[
    "the",
    "a",
    "of",
    "and",
    "is",
    "at",
    "with",
    "news",
    "report",
    "breaking",
    "claim",
    "video",
    "photo",
    "says",
    "shows",
    "official",
    "today",
    "city",
    "police",
    "government",
    "election",
    "vote",
    "man",
    "woman",
    "crowd",
    "president",
    "building",
    "street",
    "road",
    "flag",
    "podium",
    "people",
    "officer",
    "car",
    "bus",
    "fire",
    "smoke",
    "water",
    "sign",
    "screen",
];
const PALETTE: &[[u8; 3]] = &[
    [40, 160, 60],
    [40, 70, 200],
    [220, 200, 40],
    [40, 190, 200],
    [230, 230, 230],
    [120, 120, 120],
    [130, 80, 40],
    [230, 130, 40],
];
const NOISE: i32 = 25;
const TEXT_LEN: (usize, usize) = (8, 12);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Signal {
    Text,
    Image,
    Tsg,
    Vsg,
    /// Every modality at once.
    Mixed,
}

impl Signal {
    fn text(self) -> bool {
        matches!(self, Signal::Text | Signal::Mixed)
    }
    fn image(self) -> bool {
        matches!(self, Signal::Image | Signal::Mixed)
    }
    fn tsg(self) -> bool {
        matches!(self, Signal::Tsg | Signal::Mixed)
    }
    fn vsg(self) -> bool {
        matches!(self, Signal::Vsg | Signal::Mixed)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_train: usize,
    pub n_test: usize,
    /// Fraction of fake records in each split.
    pub balance: f64,
    pub seed: u64,
    pub signal: Signal,
    /// How many distinct filler words captions draw from.
    pub vocab_size: usize,
    /// Side length in pixels; a multiple of 16.
    pub image_size: usize,
    pub min_objects: usize,
    pub max_objects: usize,
    /// Probability that a real graph's extra triple is a near miss of the
    /// planted one.
    pub decoy_rate: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            n_train: 200,
            n_test: 50,
            balance: 0.5,
            seed: 0,
            signal: Signal::Mixed,
            vocab_size: TEXT_WORDS.len(),
            image_size: 32,
            min_objects: 2,
            max_objects: 4,
            decoy_rate: 0.5,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.image_size == 0 || !self.image_size.is_multiple_of(PATCH_SIZE) {
            return Err(Error::Config(format!(
                "image_size must be a positive multiple of {PATCH_SIZE}, got {}",
                self.image_size
            )));
        }
        if !(0.0..=1.0).contains(&self.balance) || !(0.0..=1.0).contains(&self.decoy_rate) {
            return Err(Error::Config(
                "balance and decoy_rate must be in [0, 1]".into(),
            ));
        }
        if self.min_objects < 2 || self.min_objects > self.max_objects {
            return Err(Error::Config(format!(
                "object range {}..={} must start at 2 or more and be non-empty",
                self.min_objects, self.max_objects
            )));
        }
        if self.vocab_size < 5 || self.vocab_size > TEXT_WORDS.len() {
            return Err(Error::Config(format!(
                "vocab_size must be in 5..={}, got {}",
                TEXT_WORDS.len(),
                self.vocab_size
            )));
        }
        if self.n_train == 0 {
            return Err(Error::Config("n_train must be positive".into()));
        }
        Ok(())
    }
}

/// `n` labels with `round(n·balance)` fakes, in a seeded random order.
fn split_labels(n: usize, balance: f64, seed: u64, split: &str) -> Vec<u8> {
    let fakes = (n as f64 * balance).round() as usize;
    let mut labels: Vec<u8> = (0..n).map(|i| u8::from(i < fakes)).collect();
    labels.shuffle(&mut keyed_rng(seed, split, 0));
    labels
}

fn caption(rng: &mut ChaCha8Rng, spec: &SynthSpec, plant: bool) -> String {
    let words = &TEXT_WORDS[..spec.vocab_size];
    let len = rng.random_range(TEXT_LEN.0..=TEXT_LEN.1);
    let mut out: Vec<&str> = (0..len)
        .map(|_| *words.choose(rng).expect("non-empty"))
        .collect();
    if plant {
        let at = rng.random_range(0..len);
        out[at] = TEXT_MARKERS.choose(rng).expect("non-empty");
    }
    let mut s = out.join(" ");
    if let Some(first) = s.get_mut(0..1) {
        first.make_ascii_uppercase();
    }
    s.push('.');
    s
}

fn image(rng: &mut ChaCha8Rng, size: usize, plant: bool) -> RgbImage {
    let cells = size / PATCH_SIZE;
    let mut colors: Vec<[u8; 3]> = (0..cells * cells)
        .map(|_| *PALETTE.choose(rng).expect("non-empty"))
        .collect();
    if plant {
        let at = rng.random_range(0..colors.len());
        colors[at] = SIGNAL_RGB;
    }
    let mut img = RgbImage::filled(size, size, [0, 0, 0]);
    for y in 0..size {
        for x in 0..size {
            let base = colors[(y / PATCH_SIZE) * cells + x / PATCH_SIZE];
            let mut px = [0u8; 3];
            for c in 0..3 {
                px[c] = (base[c] as i32 + rng.random_range(-NOISE..=NOISE)).clamp(0, 255) as u8;
            }
            img.put(x, y, px);
        }
    }
    img
}

struct GraphBuilder {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
}

impl GraphBuilder {
    fn add(&mut self, kind: NodeKind, label: &str) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::new(id, kind, label));
        id
    }

    fn relate(&mut self, s: usize, rel: &str, o: usize) {
        let r = self.add(NodeKind::Relationship, rel);
        self.edges.push(Edge::new(s, r));
        self.edges.push(Edge::new(r, o));
    }

    fn triple(&mut self, t: [&str; 3]) {
        let s = self.add(NodeKind::Object, t[0]);
        let o = self.add(NodeKind::Object, t[2]);
        self.relate(s, t[1], o);
    }
}

fn is_signal(s: &str, r: &str, o: &str, signal: [&str; 3]) -> bool {
    r == signal[1] && ((s == signal[0] && o == signal[2]) || (s == signal[2] && o == signal[0]))
}

fn pick_other(rng: &mut ChaCha8Rng, pool: &[&'static str], not: &str) -> &'static str {
    loop {
        let w = *pool.choose(rng).expect("non-empty");
        if w != not {
            return w;
        }
    }
}

/// Random objects with optional attributes, a chain of relationships, and
/// one extra triple: the planted one for `plant`, otherwise a random or
/// near-miss triple that never equals it.
fn graph(
    rng: &mut ChaCha8Rng,
    spec: &SynthSpec,
    modality: Modality,
    signal: [&str; 3],
    plant: bool,
) -> SceneGraph {
    let mut g = GraphBuilder {
        nodes: Vec::new(),
        edges: Vec::new(),
    };
    let n_obj = rng.random_range(spec.min_objects..=spec.max_objects);
    let objs: Vec<usize> = (0..n_obj)
        .map(|_| {
            let label = *OBJECTS.choose(rng).expect("non-empty");
            g.add(NodeKind::Object, label)
        })
        .collect();
    for &o in &objs {
        if rng.random::<f64>() < 0.4 {
            let a = g.add(
                NodeKind::Attribute,
                ATTRIBUTES.choose(rng).expect("non-empty"),
            );
            g.edges.push(Edge::new(o, a));
        }
    }
    for k in 1..n_obj {
        let j = rng.random_range(0..k);
        let (s, o) = if rng.random::<bool>() {
            (objs[k], objs[j])
        } else {
            (objs[j], objs[k])
        };
        let rel = loop {
            let r = *RELATIONS.choose(rng).expect("non-empty");
            if !is_signal(&g.nodes[s].label, r, &g.nodes[o].label, signal) {
                break r;
            }
        };
        g.relate(s, rel, o);
    }
    if plant {
        g.triple(signal);
    } else if rng.random::<f64>() < spec.decoy_rate {
        // Near misses: two of the three labels in place, or all three
        // present but not joined as one triple.
        match rng.random_range(0..4) {
            0 => g.triple([pick_other(rng, OBJECTS, signal[0]), signal[1], signal[2]]),
            1 => g.triple([signal[0], pick_other(rng, RELATIONS, signal[1]), signal[2]]),
            2 => g.triple([signal[0], signal[1], pick_other(rng, OBJECTS, signal[2])]),
            _ => {
                let other = pick_other(rng, OBJECTS, signal[2]);
                let other = if other == signal[0] { "tree" } else { other };
                g.triple([signal[0], signal[1], other]);
                let a = g.add(NodeKind::Object, signal[2]);
                let b = g.add(NodeKind::Object, pick_other(rng, OBJECTS, signal[0]));
                let rel = pick_other(rng, RELATIONS, signal[1]);
                g.relate(b, rel, a);
            }
        }
    } else {
        loop {
            let t = [
                *OBJECTS.choose(rng).expect("non-empty"),
                *RELATIONS.choose(rng).expect("non-empty"),
                *OBJECTS.choose(rng).expect("non-empty"),
            ];
            if !is_signal(t[0], t[1], t[2], signal) {
                g.triple(t);
                break;
            }
        }
    }
    SceneGraph::new(g.nodes, g.edges, modality)
}

/// Generates the corpus in memory: manifest records (with the paths
/// [`gen_synth`] would write) and the parsed examples.
pub fn synth_dataset(spec: &SynthSpec) -> Result<(Vec<ManifestRecord>, Dataset)> {
    spec.validate()?;
    let mut records = Vec::new();
    let mut ds = Dataset::default();
    let splits = [
        (
            Split::Train,
            split_labels(spec.n_train, spec.balance, spec.seed, "labels.train"),
        ),
        (
            Split::Test,
            split_labels(spec.n_test, spec.balance, spec.seed, "labels.test"),
        ),
    ];
    let mut index = 0u64;
    for (split, labels) in splits {
        for label in labels {
            let id = format!("s{index:04}");
            let mut rng = keyed_rng(spec.seed, "record", index);
            index += 1;
            let fake = label == 1;
            let sig = spec.signal;
            let text = caption(&mut rng, spec, fake && sig.text());
            let img = image(&mut rng, spec.image_size, fake && sig.image());
            let tsg = graph(
                &mut rng,
                spec,
                Modality::Text,
                TSG_SIGNAL,
                fake && sig.tsg(),
            );
            let vsg = graph(
                &mut rng,
                spec,
                Modality::Visual,
                VSG_SIGNAL,
                fake && sig.vsg(),
            );
            records.push(ManifestRecord {
                id: id.clone(),
                text: text.clone(),
                image_path: format!("images/{id}.ppm"),
                tsg_path: format!("graphs/{id}.tsg.json"),
                vsg_path: format!("graphs/{id}.vsg.json"),
                label,
                split,
            });
            let ex = Example {
                id,
                text,
                image: img,
                tsg,
                vsg,
                label,
            };
            match split {
                Split::Train => ds.train.push(ex),
                Split::Test => ds.test.push(ex),
            }
        }
    }
    Ok((records, ds))
}

/// Writes `manifest.jsonl`, `images/*.ppm` and `graphs/*.json` under `out`.
pub fn gen_synth(spec: &SynthSpec, out: &Path) -> Result<Vec<ManifestRecord>> {
    let (records, ds) = synth_dataset(spec)?;
    for sub in ["images", "graphs"] {
        let d = out.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let write = |rel: &str, bytes: &[u8]| {
        let p = out.join(rel);
        fs::write(&p, bytes).map_err(|e| Error::io(&p, e))
    };
    for (r, ex) in records.iter().zip(ds.train.iter().chain(&ds.test)) {
        write(&r.image_path, &ex.image.to_ppm())?;
        write(&r.tsg_path, &serialize_scene_graph(&ex.tsg))?;
        write(&r.vsg_path, &serialize_scene_graph(&ex.vsg))?;
    }
    write("manifest.jsonl", write_manifest(&records).as_bytes())?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenegraph::validate_scene_graph;

    fn has_triple(g: &SceneGraph, t: [&str; 3]) -> bool {
        g.nodes()
            .iter()
            .filter(|n| n.kind == NodeKind::Relationship && n.label == t[1])
            .any(|r| {
                let s = g
                    .edges()
                    .iter()
                    .filter(|e| e.dst == r.id)
                    .map(|e| &g.nodes()[e.src].label);
                let o: Vec<_> = g
                    .edges()
                    .iter()
                    .filter(|e| e.src == r.id)
                    .map(|e| &g.nodes()[e.dst].label)
                    .collect();
                s.into_iter()
                    .any(|s| o.iter().any(|o| is_signal(s, t[1], o, t)))
            })
    }

    #[test]
    fn counts_and_balance() {
        let (recs, ds) = synth_dataset(&SynthSpec::default()).unwrap();
        assert_eq!(recs.len(), 250);
        let fakes = recs.iter().filter(|r| r.label == 1).count();
        assert!((124..=126).contains(&fakes));
        assert_eq!((ds.train.len(), ds.test.len()), (200, 50));
    }

    #[test]
    fn graphs_are_valid_and_only_fakes_carry_the_triple() {
        let spec = SynthSpec {
            signal: Signal::Tsg,
            n_train: 60,
            n_test: 0,
            ..SynthSpec::default()
        };
        let (_, ds) = synth_dataset(&spec).unwrap();
        for ex in &ds.train {
            validate_scene_graph(&ex.tsg).unwrap();
            validate_scene_graph(&ex.vsg).unwrap();
            assert_eq!(has_triple(&ex.tsg, TSG_SIGNAL), ex.label == 1, "{}", ex.id);
            assert!(!has_triple(&ex.vsg, VSG_SIGNAL));
            assert!(!TEXT_MARKERS.iter().any(|m| ex.text.contains(m)));
        }
    }

    #[test]
    fn image_signal_is_a_red_patch() {
        let spec = SynthSpec {
            signal: Signal::Image,
            n_train: 20,
            n_test: 0,
            ..SynthSpec::default()
        };
        let (_, ds) = synth_dataset(&spec).unwrap();
        for ex in &ds.train {
            let red = (0..4).any(|p| {
                let px = ex.image.get((p % 2) * 16 + 8, (p / 2) * 16 + 8);
                px[0] > 180 && px[1] < 70 && px[2] < 70
            });
            assert_eq!(red, ex.label == 1);
        }
    }

    #[test]
    fn spec_validation() {
        for bad in [
            SynthSpec {
                image_size: 40,
                ..SynthSpec::default()
            },
            SynthSpec {
                balance: 1.5,
                ..SynthSpec::default()
            },
            SynthSpec {
                min_objects: 5,
                max_objects: 3,
                ..SynthSpec::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
