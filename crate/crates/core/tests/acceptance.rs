//! Acceptance checks. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fail.

mod common;

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use common::{dense_gcn, graph_pair, mat, scene_graph};
use proptest::strategy::{Strategy, ValueTree};
use proptest::test_runner::TestRunner;
use sgfuse_core::embeddings::{fixture_table, node2vec_embed, Featurizer, Node2VecConfig};
use sgfuse_core::explain::{shapley_exact, shapley_permutation, FnGame, Method};
use sgfuse_core::gsgm::{encode_graph, init_gnn, GnnVars, GraphInput, GsgmConfig};
use sgfuse_core::harness::{
    gen_synth, parse_manifest, run_experiment_with, synth_dataset, write_manifest,
    ExperimentConfig, RunSummary, Signal, Sweep, SynthSpec,
};
use sgfuse_core::model::{model_gradcheck, ModelConfig, TrainConfig, GRADCHECK_TOL};
use sgfuse_core::numkit::checkpoint;
use sgfuse_core::numkit::rng::{keyed_rng, uniform_init};
use sgfuse_core::numkit::{ParamStore, Tape};
use sgfuse_core::scenegraph::{
    cmsg_type1, cmsg_type3, cosine, parse_scene_graph, serialize_scene_graph, Edge, Modality,
    PlainGraph,
};

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(t: Instant, limit: Duration) -> (bool, String) {
    let e = t.elapsed();
    (
        e < limit,
        format!("{:.2}s (limit {}s)", e.as_secs_f64(), limit.as_secs()),
    )
}

fn sample<S: Strategy>(runner: &mut TestRunner, s: &S) -> S::Value {
    s.new_tree(runner).unwrap().current()
}

fn gradients() -> Outcome {
    let t = Instant::now();
    let reports = model_gradcheck(0).unwrap();
    let worst = reports
        .iter()
        .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
        .unwrap();
    let failing = reports
        .iter()
        .filter(|r| r.max_rel_err > GRADCHECK_TOL)
        .count();
    let (fast, time) = within(t, Duration::from_secs(30));
    outcome(
        failing == 0 && fast,
        format!(
            "{} groups, {failing} over 1e-4, worst {} at {:.2e}, {time}",
            reports.len(),
            worst.group,
            worst.max_rel_err
        ),
    )
}

fn gcn_oracle() -> Outcome {
    let t = Instant::now();
    let mut runner = TestRunner::deterministic();
    let graphs = scene_graph(Modality::Visual).prop_filter("at most 5 nodes", |g| g.len() <= 5);
    let cfg = GsgmConfig {
        input_dim: 6,
        hidden_dim: 5,
        output_dim: 4,
        bias: true,
    };
    let mut worst = 0.0f64;
    let cases = 200;
    for seed in 0..cases {
        let g = sample(&mut runner, &graphs);
        let mut store = ParamStore::new();
        init_gnn(&mut store, "g", &cfg, seed);
        for name in ["g.gcn1.bias", "g.gcn2.bias"] {
            let n = store.get(name).unwrap().numel();
            store.insert(name, uniform_init(&[n], 1, seed, name));
        }
        let x = uniform_init(&[g.len(), cfg.input_dim], 1, seed + 1, "x");
        let input = GraphInput::new(&g, mat(&x), cfg.input_dim).unwrap();
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, false);
        let enc = encode_graph(
            &mut tape,
            &input,
            &GnnVars::bind(&bound, "g"),
            cfg.output_dim,
        )
        .unwrap();
        let want = dense_gcn(&g, &mat(&x), &store);
        for (a, b) in tape.value(enc.embedding).data().iter().zip(&want) {
            worst = worst.max((a - b).abs());
        }
    }
    let (fast, time) = within(t, Duration::from_secs(5));
    outcome(
        worst <= 1e-10 && fast,
        format!("{cases} graphs, max abs diff {worst:.2e}, {time}"),
    )
}

fn experiment(dir: &Path, spec: &SynthSpec, sweep: Sweep) -> Vec<RunSummary> {
    gen_synth(spec, &dir.join("data")).unwrap();
    let cfg = ExperimentConfig {
        dataset: "data/manifest.jsonl".into(),
        output_dir: "out".into(),
        word_vectors: None,
        model: ModelConfig::default(),
        train: TrainConfig::desk(),
        sweep,
    };
    run_experiment_with(&cfg, dir).unwrap()
}

fn convergence() -> Outcome {
    let t = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        n_train: 200,
        n_test: 50,
        signal: Signal::Mixed,
        ..SynthSpec::default()
    };
    let runs = experiment(dir.path(), &spec, Sweep::default());
    let acc = runs[0].metrics.accuracy;
    let (fast, time) = within(t, Duration::from_secs(300));
    outcome(
        acc >= 0.95 && fast,
        format!("test accuracy {acc:.4}, {time}"),
    )
}

/// Gap between `full` and `target`, and whether `full` beats every other
/// sweep point.
fn sweep_check(signal: Signal, target: &str) -> (bool, String) {
    let dir = tempfile::tempdir().unwrap();
    let spec = SynthSpec {
        n_train: 200,
        n_test: 50,
        signal,
        ..SynthSpec::default()
    };
    let names = ["full", "no_vsg", "no_tsg", "no_image", "no_text"];
    let sweep = Sweep {
        ablations: names.map(String::from).to_vec(),
        ..Sweep::default()
    };
    let runs = experiment(dir.path(), &spec, sweep);
    let acc = |n: &str| runs.iter().find(|r| r.name == n).unwrap().metrics.accuracy;
    let full = acc("full");
    let gap = 100.0 * (full - acc(target));
    let strictly_first = names[1..].iter().all(|n| full > acc(n));
    let table: Vec<String> = names.iter().map(|n| format!("{n} {:.2}", acc(n))).collect();
    (
        gap >= 15.0 && strictly_first,
        format!(
            "{}: gap {gap:.1} pts, strictly first {strictly_first} [{}]",
            signal_name(signal),
            table.join(", ")
        ),
    )
}

fn signal_name(s: Signal) -> &'static str {
    match s {
        Signal::Tsg => "tsg",
        Signal::Image => "image",
        _ => "other",
    }
}

fn ablation() -> Outcome {
    let (a, da) = sweep_check(Signal::Tsg, "no_tsg");
    let (b, db) = sweep_check(Signal::Image, "no_image");
    outcome(a && b, format!("{da}; {db}"))
}

fn cmsg_algebra() -> Outcome {
    let mut runner = TestRunner::deterministic();
    let table = fixture_table();
    let feat = Featurizer::new(&table, 0);
    let (mut counts, mut monotone, mut union) = (0, 0, 0);
    let pairs = 100;
    for _ in 0..pairs {
        let (t, v) = sample(&mut runner, &graph_pair());
        let f = cmsg_type1(&t, &v);
        counts += usize::from(
            f.graph.len() == t.len() + v.len() + 1
                && f.graph.edges().len() == t.edges().len() + v.edges().len() + t.len() + v.len(),
        );
        let merges: Vec<usize> = [0.5, 0.6, 0.7, 0.8, 0.9]
            .iter()
            .map(|&th| cmsg_type3(&t, &v, &feat, th).unwrap().merges)
            .collect();
        monotone += usize::from(merges.windows(2).all(|w| w[0] >= w[1]));
        let f = cmsg_type3(&t, &v, &feat, 1.01).unwrap();
        let off = t.len();
        let mut edges: Vec<Edge> = t.edges().to_vec();
        edges.extend(
            v.edges()
                .iter()
                .map(|e| Edge::new(e.src + off, e.dst + off)),
        );
        edges.sort();
        let labels = t.nodes().iter().chain(v.nodes()).map(|n| &n.label);
        union += usize::from(
            f.merges == 0
                && f.graph.nodes().iter().map(|n| &n.label).eq(labels)
                && f.graph.edges() == &edges[..],
        );
    }
    outcome(
        counts == pairs && monotone == pairs && union == pairs,
        format!("of {pairs} pairs: type 1 counts {counts}, type 3 monotone {monotone}, disjoint union {union}"),
    )
}

fn shapley_axioms() -> Outcome {
    let t = Instant::now();
    let mut rng = keyed_rng(0, "acceptance.shapley", 0);
    let (mut eff, mut perm) = (0.0f64, 0.0f64);
    let (mut dummy_ok, mut sym_ok) = (true, true);
    let games = 200;
    for g in 0..games {
        use rand::RngExt;
        let n = 1 + g % 5;
        let w: Vec<f64> = (0..1 << n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let table = |s: &[bool]| {
            let m = s
                .iter()
                .enumerate()
                .fold(0, |m, (i, &b)| m | (usize::from(b) << i));
            if m == 0 {
                0.0
            } else {
                w[m]
            }
        };
        let game = FnGame { n, f: table };
        let e = shapley_exact(&game).unwrap();
        eff = eff.max((e.phi.iter().sum::<f64>() - (e.full_value - e.base_value)).abs());
        let p = shapley_permutation(&game, 120, g as u64).unwrap();
        assert!(matches!(
            p.method,
            Method::Permutation {
                enumerated: true,
                ..
            }
        ));
        for (a, b) in e.phi.iter().zip(&p.phi) {
            perm = perm.max((a - b).abs());
        }

        // Player 0 never changes the value; players 1 and 2 are swappable.
        let c: [f64; 4] = std::array::from_fn(|_| rng.random_range(-2.0..2.0));
        let sym = FnGame {
            n: 4,
            f: |s: &[bool]| {
                let k = usize::from(s[1]) + usize::from(s[2]);
                c[k] + if s[3] { c[3] * k as f64 } else { 0.0 }
            },
        };
        let e = shapley_exact(&sym).unwrap();
        dummy_ok &= e.phi[0].abs() <= 1e-12;
        sym_ok &= (e.phi[1] - e.phi[2]).abs() <= 1e-12;
    }
    let (fast, time) = within(t, Duration::from_secs(60));
    outcome(
        eff <= 1e-9 && perm <= 1e-9 && dummy_ok && sym_ok && fast,
        format!(
            "{games} games: efficiency {eff:.1e}, permutation vs exact {perm:.1e}, dummy {dummy_ok}, symmetry {sym_ok}, {time}"
        ),
    )
}

fn node2vec_structure() -> Outcome {
    let t = Instant::now();
    let mut edges = Vec::new();
    for base in [0, 4] {
        for a in 0..4 {
            for b in a + 1..4 {
                edges.push((base + a, base + b));
            }
        }
    }
    edges.push((3, 4));
    let emb = node2vec_embed(
        &PlainGraph::from_edges(8, edges),
        &Node2VecConfig::default(),
    )
    .unwrap();
    let cluster = |v: usize| v / 4;
    let (mut good, mut total) = (0, 0);
    for u in 0..8 {
        for v in (0..8).filter(|&v| v != u && cluster(v) == cluster(u)) {
            for w in (0..8).filter(|&w| cluster(w) != cluster(u)) {
                total += 1;
                good += usize::from(
                    cosine(emb.row(u), emb.row(v)).unwrap()
                        > cosine(emb.row(u), emb.row(w)).unwrap(),
                );
            }
        }
    }
    let share = good as f64 / total as f64;
    let (fast, time) = within(t, Duration::from_secs(30));
    outcome(
        share >= 0.9 && fast,
        format!(
            "{good}/{total} comparisons intra > inter ({:.1}%), {time}",
            100.0 * share
        ),
    )
}

fn determinism() -> Outcome {
    let spec = SynthSpec {
        n_train: 40,
        n_test: 20,
        signal: Signal::Mixed,
        ..SynthSpec::default()
    };
    let read = |d: &Path, f: &str| fs::read(d.join("out").join(f)).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let mut same = true;
    for d in [a.path(), b.path()] {
        gen_synth(&spec, &d.join("data")).unwrap();
        let cfg = ExperimentConfig {
            dataset: "data/manifest.jsonl".into(),
            output_dir: "out".into(),
            word_vectors: None,
            model: ModelConfig::default(),
            train: TrainConfig {
                epochs: 3,
                ..TrainConfig::desk()
            },
            sweep: Sweep::default(),
        };
        run_experiment_with(&cfg, d).unwrap();
    }
    for f in ["metrics.json", "checkpoint.sgmm", "train_log.jsonl"] {
        same &= read(a.path(), f) == read(b.path(), f);
    }
    outcome(
        same,
        format!("metrics, checkpoint and log identical: {same}"),
    )
}

fn format_closure() -> Outcome {
    let mut runner = TestRunner::deterministic();
    let graphs = scene_graph(Modality::Text);
    let n = 1000;
    let mut ok = 0;
    for _ in 0..n {
        let g = sample(&mut runner, &graphs);
        let bytes = serialize_scene_graph(&g);
        let back = parse_scene_graph(&bytes, Modality::Text).unwrap();
        ok += usize::from(back == g && serialize_scene_graph(&back) == bytes);
    }
    let (records, _) = synth_dataset(&SynthSpec::default()).unwrap();
    let manifest = parse_manifest(&write_manifest(&records)).unwrap() == records;
    let mut store = ParamStore::new();
    for (i, shape) in [vec![3, 4], vec![4], vec![], vec![0, 2]].iter().enumerate() {
        store.insert(&format!("p{i}"), uniform_init(shape, 1, i as u64, "p"));
    }
    let bytes = checkpoint::encode(&store);
    let back = checkpoint::decode(&bytes).unwrap();
    let ckpt = back == store && checkpoint::encode(&back) == bytes;
    outcome(
        ok == n && manifest && ckpt,
        format!("{ok}/{n} graphs round-trip, manifest {manifest}, checkpoint {ckpt}"),
    )
}

fn main() {
    // libtest flags such as --nocapture are accepted and ignored.
    let criteria: [Criterion; 9] = [
        ("gradient suite", gradients),
        ("gcn oracle", gcn_oracle),
        ("synthetic convergence", convergence),
        ("ablation direction", ablation),
        ("cmsg algebra", cmsg_algebra),
        ("shapley axioms", shapley_axioms),
        ("node2vec structure", node2vec_structure),
        ("determinism", determinism),
        ("format closure", format_closure),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        failed += usize::from(!o.pass);
        println!(
            "{} {}. {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            i + 1,
            o.detail
        );
    }
    println!(
        "acceptance: {} of {} criteria pass",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
