//! Helpers shared by the integration tests.
#![allow(dead_code)]

use proptest::prelude::*;
use sgfuse_core::scenegraph::{Edge, Modality, Node, NodeKind, SceneGraph};

pub const OBJECTS: [&str; 8] = ["man", "dog", "car", "gun", "tree", "café", "flag", "boat"];
pub const ATTRIBUTES: [&str; 4] = ["red", "tall", "old", "wet"];
pub const RELATIONS: [&str; 4] = ["holding", "chasing", "near", "on top of"];

/// Objects, attributes hung off objects, and subject→relation→object
/// triples. Indices into the object list are taken modulo its length.
pub fn build_graph(
    objects: &[usize],
    attributes: &[(usize, usize)],
    relations: &[(usize, usize, usize)],
    modality: Modality,
) -> SceneGraph {
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for &o in objects {
        nodes.push(Node::new(
            nodes.len(),
            NodeKind::Object,
            OBJECTS[o % OBJECTS.len()],
        ));
    }
    let n_obj = objects.len();
    for &(owner, a) in attributes {
        let id = nodes.len();
        nodes.push(Node::new(
            id,
            NodeKind::Attribute,
            ATTRIBUTES[a % ATTRIBUTES.len()],
        ));
        edges.push(Edge::new(owner % n_obj, id));
    }
    for &(s, o, r) in relations {
        let id = nodes.len();
        nodes.push(Node::new(
            id,
            NodeKind::Relationship,
            RELATIONS[r % RELATIONS.len()],
        ));
        edges.push(Edge::new(s % n_obj, id));
        edges.push(Edge::new(id, o % n_obj));
    }
    SceneGraph::new(nodes, edges, modality)
}

pub fn scene_graph(modality: Modality) -> impl Strategy<Value = SceneGraph> {
    (
        prop::collection::vec(0usize..8, 1..6),
        prop::collection::vec((0usize..6, 0usize..4), 0..4),
        prop::collection::vec((0usize..6, 0usize..6, 0usize..4), 0..4),
    )
        .prop_map(move |(o, a, r)| build_graph(&o, &a, &r, modality))
}

pub fn graph_pair() -> impl Strategy<Value = (SceneGraph, SceneGraph)> {
    (scene_graph(Modality::Text), scene_graph(Modality::Visual))
}

use sgfuse_core::embeddings::{Featurizer, WordVectorTable};
use sgfuse_core::harness::{synth_dataset, Signal, SynthSpec};
use sgfuse_core::model::{ModelConfig, PreparedExample, Preprocessor, TrainConfig};
use sgfuse_core::tem::Vocabulary;

/// Small synthetic corpus prepared for `train`, plus its vocabulary size
/// and node feature width.
pub fn prepared_corpus(
    n_train: usize,
    n_test: usize,
    signal: Signal,
    model: &ModelConfig,
    train: &TrainConfig,
    table: &WordVectorTable,
) -> (Vec<PreparedExample>, Vec<PreparedExample>, usize, usize) {
    let spec = SynthSpec {
        n_train,
        n_test,
        signal,
        ..SynthSpec::default()
    };
    let (_, ds) = synth_dataset(&spec).unwrap();
    let vocab = Vocabulary::build(ds.train.iter().map(|e| e.text.as_str()), model.max_vocab);
    let pre = Preprocessor::new(vocab.clone(), Featurizer::new(table, 0), model, train);
    let prep = |v: &[sgfuse_core::model::Example]| {
        v.iter()
            .map(|e| pre.prepare(e).unwrap())
            .collect::<Vec<_>>()
    };
    (
        prep(&ds.train),
        prep(&ds.test),
        vocab.len(),
        pre.feature_dim(),
    )
}

pub type Mat = Vec<Vec<f64>>;

pub fn mat(t: &sgfuse_core::numkit::Tensor) -> Mat {
    let (r, c) = t.dims2().unwrap();
    (0..r)
        .map(|i| t.data()[i * c..(i + 1) * c].to_vec())
        .collect()
}

pub fn mm(a: &Mat, b: &Mat) -> Mat {
    let (n, k, m) = (a.len(), b.len(), b[0].len());
    (0..n)
        .map(|i| {
            (0..m)
                .map(|j| (0..k).map(|l| a[i][l] * b[l][j]).sum())
                .collect()
        })
        .collect()
}

/// `relu(Â relu(Â X W₁ + b₁) W₂ + b₂)` averaged over rows, with
/// `Â = D^(-1/2)(A + I)D^(-1/2)` built from the undirected edge set.
pub fn dense_gcn(g: &SceneGraph, x: &Mat, store: &sgfuse_core::numkit::ParamStore) -> Vec<f64> {
    let n = g.len();
    let mut a = vec![vec![0.0; n]; n];
    for e in g.edges() {
        a[e.src][e.dst] = 1.0;
        a[e.dst][e.src] = 1.0;
    }
    for (i, row) in a.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|r| r.iter().sum()).collect();
    let norm: Mat = (0..n)
        .map(|i| (0..n).map(|j| a[i][j] / (deg[i] * deg[j]).sqrt()).collect())
        .collect();
    let layer = |h: &Mat, w: &str, b: &str| -> Mat {
        let z = mm(&mm(&norm, h), &mat(store.get(w).unwrap()));
        let bias = store.get(b).unwrap().data();
        z.into_iter()
            .map(|r| r.iter().zip(bias).map(|(v, b)| (v + b).max(0.0)).collect())
            .collect()
    };
    let h1 = layer(x, "g.gcn1.weight", "g.gcn1.bias");
    let h2 = layer(&h1, "g.gcn2.weight", "g.gcn2.bias");
    (0..h2[0].len())
        .map(|j| h2.iter().map(|r| r[j]).sum::<f64>() / n as f64)
        .collect()
}
