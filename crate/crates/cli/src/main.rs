use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sgfuse_core::embeddings::{
    fixture_table, load_word_vectors, node2vec_embed, Featurizer, Node2VecConfig,
};
use sgfuse_core::explain::{explain, render_json, render_text, MethodRequest};
use sgfuse_core::harness::{
    gen_synth, load_checkpoint, load_dataset, load_run, run_experiment, text_probe, Signal,
    SynthSpec,
};
use sgfuse_core::model::{evaluate, model_gradcheck, GRADCHECK_EPS, GRADCHECK_TOL};
use sgfuse_core::scenegraph::{
    build_cmsg, parse_scene_graph, serialize_scene_graph, CmsgSpec, CmsgVariant, Modality,
};
use sgfuse_core::Error;

/// `println!` that exits quietly when stdout is a closed pipe.
macro_rules! say {
    ($($t:tt)*) => {
        emit(&format!("{}\n", format_args!($($t)*)))
    };
}

fn emit(text: &str) {
    use std::io::{ErrorKind, Write};
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Ok(()) => {}
        Err(e) if e.kind() == ErrorKind::BrokenPipe => std::process::exit(0),
        Err(e) => {
            eprintln!("error: writing to stdout: {e}");
            std::process::exit(1);
        }
    }
}

#[derive(Parser)]
#[command(
    name = "sgfuse",
    version,
    about = "Scene-graph fusion misinformation classifier"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a seeded synthetic corpus.
    GenSynth(GenSynthArgs),
    /// Train and evaluate every run of an experiment config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Re-evaluate a trained run.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
    },
    /// Shapley attribution for one record.
    Explain(ExplainArgs),
    /// Fuse a textual and a visual scene graph.
    CmsgBuild(CmsgArgs),
    /// Structural node embeddings of one scene graph.
    Node2vec(Node2VecArgs),
    /// Finite-difference check of every parameter group.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct GenSynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    n_train: usize,
    #[arg(long, default_value_t = 50)]
    n_test: usize,
    #[arg(long, default_value_t = 0.5)]
    balance: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = SignalArg::Mixed)]
    signal: SignalArg,
    #[arg(long, default_value_t = 32)]
    image_size: usize,
    #[arg(long, default_value_t = 0.5)]
    decoy_rate: f64,
    /// Run the bag-of-words probe on the written corpus.
    #[arg(long)]
    self_test: bool,
}

#[derive(Args)]
struct ExplainArgs {
    /// Checkpoint file; `config.json` and `vocab.txt` are read from its directory.
    #[arg(long, conflicts_with = "run", required_unless_present = "run")]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    run: Option<PathBuf>,
    #[arg(long)]
    record: String,
    #[arg(long, value_enum, default_value_t = MethodArg::Exact)]
    method: MethodArg,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CmsgArgs {
    #[arg(long = "type", value_parser = clap::value_parser!(u8).range(1..=3))]
    kind: u8,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    tsg: PathBuf,
    #[arg(long)]
    vsg: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Word-vector file for Type 3 similarity; the bundled fixture otherwise.
    #[arg(long)]
    word_vectors: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    feature_seed: u64,
}

#[derive(Args)]
struct Node2VecArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    p: f64,
    #[arg(long, default_value_t = 1.0)]
    q: f64,
    #[arg(long, default_value_t = 32)]
    dim: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum SignalArg {
    Text,
    Image,
    Tsg,
    Vsg,
    Mixed,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Exact,
    Permutation,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Json,
    Text,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Runtime(e.to_string())
        }
    }
}

type CliResult = Result<(), Failure>;

fn read(path: &Path) -> Result<Vec<u8>, Failure> {
    fs::read(path).map_err(|e| Error::io(path, e).into())
}

fn write(path: &Path, bytes: &[u8]) -> CliResult {
    fs::write(path, bytes).map_err(|e| Error::io(path, e).into())
}

fn gen_synth_cmd(a: GenSynthArgs) -> CliResult {
    let signal = match a.signal {
        SignalArg::Text => Signal::Text,
        SignalArg::Image => Signal::Image,
        SignalArg::Tsg => Signal::Tsg,
        SignalArg::Vsg => Signal::Vsg,
        SignalArg::Mixed => Signal::Mixed,
    };
    let spec = SynthSpec {
        n_train: a.n_train,
        n_test: a.n_test,
        balance: a.balance,
        seed: a.seed,
        signal,
        image_size: a.image_size,
        decoy_rate: a.decoy_rate,
        ..SynthSpec::default()
    };
    let records = gen_synth(&spec, &a.out)?;
    let fake = records.iter().filter(|r| r.label == 1).count();
    say!(
        "wrote {} records ({fake} fake) to {}",
        records.len(),
        a.out.display()
    );
    if a.self_test {
        let ds = load_dataset(&a.out.join("manifest.jsonl"))?;
        let acc = text_probe(&ds)?;
        say!("bag-of-words probe accuracy: {acc:.4}");
        if matches!(signal, Signal::Text) && acc < 0.95 {
            return Err(Failure::Runtime(format!(
                "probe accuracy {acc:.4} below 0.95 on a text-signal corpus"
            )));
        }
    }
    Ok(())
}

fn train_cmd(config: &Path) -> CliResult {
    for s in run_experiment(config)? {
        say!(
            "{:<12} accuracy {:.4}  -> {}",
            s.name,
            s.metrics.accuracy,
            s.dir.display()
        );
    }
    Ok(())
}

fn eval_cmd(run_dir: &Path, split: SplitArg) -> CliResult {
    let run = load_run(run_dir)?;
    let ds = load_dataset(&run.config.dataset)?;
    let examples = match split {
        SplitArg::Train => &ds.train,
        SplitArg::Test => &ds.test,
    };
    let prepared = examples
        .iter()
        .map(|e| run.prepare(e))
        .collect::<Result<Vec<_>, _>>()?;
    let report = evaluate(&run.model, &prepared)?;
    say!(
        "{}",
        serde_json::to_string_pretty(&report).expect("reports serialize")
    );
    Ok(())
}

fn explain_cmd(a: ExplainArgs) -> CliResult {
    let run = match (&a.run, &a.checkpoint) {
        (Some(d), _) => load_run(d)?,
        (None, Some(c)) => load_checkpoint(c)?,
        (None, None) => unreachable!("clap requires one of them"),
    };
    let ds = load_dataset(&run.config.dataset)?;
    let ex = ds
        .find(&a.record)
        .ok_or_else(|| Failure::Usage(format!("no record with id {:?}", a.record)))?;
    let prepared = run.prepare(ex)?;
    let request = match a.method {
        MethodArg::Exact => MethodRequest::Exact,
        MethodArg::Permutation => MethodRequest::Permutation {
            n_samples: a.samples,
            seed: a.seed,
        },
    };
    let report = explain(&run.model, &prepared, request)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let text = match a.format {
        FormatArg::Json => render_json(&report),
        FormatArg::Text => render_text(&report),
    };
    match &a.out {
        Some(p) => write(p, text.as_bytes()),
        None => {
            emit(&text);
            Ok(())
        }
    }
}

fn cmsg_cmd(a: CmsgArgs) -> CliResult {
    let variant = match a.kind {
        1 => CmsgVariant::Type1,
        2 => CmsgVariant::Type2,
        _ => CmsgVariant::Type3,
    };
    let spec = CmsgSpec::new(variant, a.threshold).map_err(Error::from)?;
    let tsg = parse_scene_graph(&read(&a.tsg)?, Modality::Text).map_err(Error::from)?;
    let vsg = parse_scene_graph(&read(&a.vsg)?, Modality::Visual).map_err(Error::from)?;
    let table = match &a.word_vectors {
        Some(p) => load_word_vectors(&read(p)?).map_err(Error::from)?,
        None => fixture_table(),
    };
    let fused = build_cmsg(&spec, &tsg, &vsg, &Featurizer::new(&table, a.feature_seed))
        .map_err(Error::from)?;
    for w in &fused.warnings {
        eprintln!("warning: {w}");
    }
    write(&a.out, &serialize_scene_graph(&fused.graph))?;
    say!(
        "{} nodes, {} edges, {} merges",
        fused.graph.len(),
        fused.graph.edges().len(),
        fused.merges
    );
    Ok(())
}

fn node2vec_cmd(a: Node2VecArgs) -> CliResult {
    let g = parse_scene_graph(&read(&a.graph)?, Modality::Text).map_err(Error::from)?;
    let cfg = Node2VecConfig {
        p: a.p,
        q: a.q,
        embedding_dim: a.dim,
        seed: a.seed,
        ..Node2VecConfig::default()
    };
    let emb = node2vec_embed(&g.to_plain_graph(), &cfg).map_err(Error::from)?;
    let nodes: Vec<serde_json::Value> = g
        .nodes()
        .iter()
        .map(|n| serde_json::json!({"id": n.id, "label": n.label, "vector": emb.row(n.id)}))
        .collect();
    let mut text = serde_json::to_string_pretty(&serde_json::json!({"dim": a.dim, "nodes": nodes}))
        .expect("embeddings serialize");
    text.push('\n');
    write(&a.out, text.as_bytes())
}

fn gradcheck_cmd(seed: u64) -> CliResult {
    let reports = model_gradcheck(seed)?;
    say!("eps {GRADCHECK_EPS:e}, tolerance {GRADCHECK_TOL:e}");
    let mut worst: f64 = 0.0;
    for r in &reports {
        let ok = if r.max_rel_err <= GRADCHECK_TOL {
            "ok"
        } else {
            "FAIL"
        };
        say!(
            "{:<24} {:>6} {:.3e} {ok}",
            r.group,
            r.scalars,
            r.max_rel_err
        );
        worst = worst.max(r.max_rel_err);
    }
    if worst <= GRADCHECK_TOL {
        Ok(())
    } else {
        Err(Failure::Runtime(format!(
            "max relative error {worst:.3e} exceeds {GRADCHECK_TOL:e}"
        )))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenSynth(a) => gen_synth_cmd(a),
        Command::Train { config } => train_cmd(&config),
        Command::Eval { run, split } => eval_cmd(&run, split),
        Command::Explain(a) => explain_cmd(a),
        Command::CmsgBuild(a) => cmsg_cmd(a),
        Command::Node2vec(a) => node2vec_cmd(a),
        Command::Gradcheck { seed } => gradcheck_cmd(seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}
