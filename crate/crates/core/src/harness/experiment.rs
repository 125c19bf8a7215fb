use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::load_dataset;
use crate::embeddings::{fixture_table, load_word_vectors, Featurizer, WordVectorTable};
use crate::error::{Error, Result};
use crate::model::{
    apply_ablation, evaluate, train, Ablation, EpochLog, FusionVariant, MetricsReport, Model,
    ModelConfig, PreparedExample, Preprocessor, TrainConfig,
};
use crate::numkit::checkpoint;
use crate::tem::Vocabulary;

/// Environment variable that replaces `train.seed`.
pub const SEED_ENV: &str = "SGMM_SEED";

/// At most one of the two lists may be non-empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Sweep {
    /// Names from [`Ablation::NAMES`].
    pub ablations: Vec<String>,
    /// Each value trains a `cmsg3` model at that threshold.
    pub cmsg3_thresholds: Vec<f64>,
}

/// Experiment file. Relative paths resolve against the file's directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: PathBuf,
    pub output_dir: PathBuf,
    /// Word-vector text file; the bundled 50-d fixture when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_vectors: Option<PathBuf>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub sweep: Sweep,
}

/// Exact settings of one trained model, written as `config.json` next to
/// its checkpoint.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub word_vectors: Option<PathBuf>,
    pub model: ModelConfig,
    pub train: TrainConfig,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSummary {
    /// `"run"` for a single run, otherwise the sweep point.
    pub name: String,
    pub dir: PathBuf,
    pub metrics: MetricsReport,
    pub log: Vec<EpochLog>,
}

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|e| Error::io(path, e))
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("config types serialize");
    b.push(b'\n');
    b
}

fn word_table(path: Option<&Path>) -> Result<WordVectorTable> {
    match path {
        None => Ok(fixture_table()),
        Some(p) => Ok(load_word_vectors(&io(p, fs::read(p))?)?),
    }
}

/// Reads the config at `config_path`, applies [`SEED_ENV`], and runs it.
pub fn run_experiment(config_path: &Path) -> Result<Vec<RunSummary>> {
    let text = io(config_path, fs::read_to_string(config_path))?;
    let mut cfg: ExperimentConfig = serde_json::from_str(&text)
        .map_err(|e| Error::Json(format!("{}: {e}", config_path.display())))?;
    if let Ok(s) = std::env::var(SEED_ENV) {
        cfg.train.seed = s
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("{SEED_ENV}={s:?} is not an unsigned integer")))?;
    }
    // Absolute, so the dataset path saved with each run works from any
    // working directory.
    let base = match config_path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let base = io(base, std::path::absolute(base))?;
    run_experiment_with(&cfg, &base)
}

fn sweep_points(cfg: &ExperimentConfig) -> Result<Vec<(String, TrainConfig)>> {
    let s = &cfg.sweep;
    match (s.ablations.is_empty(), s.cmsg3_thresholds.is_empty()) {
        (false, false) => Err(Error::Config(
            "sweep may list ablations or cmsg3 thresholds, not both".into(),
        )),
        (false, true) => s
            .ablations
            .iter()
            .map(|name| {
                let ablation = Ablation::from_name(name)?;
                Ok((
                    name.clone(),
                    TrainConfig {
                        ablation,
                        ..cfg.train
                    },
                ))
            })
            .collect(),
        (true, false) => Ok(s
            .cmsg3_thresholds
            .iter()
            .map(|&t| {
                let tc = TrainConfig {
                    fusion: FusionVariant::Cmsg3,
                    cmsg_threshold: Some(t),
                    ..cfg.train
                };
                (format!("cmsg3_t{t}"), tc)
            })
            .collect()),
        (true, true) => Ok(vec![("run".into(), cfg.train)]),
    }
}

/// Trains and evaluates every run of `cfg`, writing `config.json`,
/// `checkpoint.sgmm`, `train_log.jsonl`, `metrics.json` and `vocab.txt`
/// per run. Sweep runs go to one subdirectory each plus a top-level
/// `summary.json`.
pub fn run_experiment_with(cfg: &ExperimentConfig, base: &Path) -> Result<Vec<RunSummary>> {
    cfg.model.validate()?;
    let points = sweep_points(cfg)?;
    for (_, tc) in &points {
        tc.validate()?;
    }
    let dataset_path = base.join(&cfg.dataset);
    let wv_path = cfg.word_vectors.as_ref().map(|p| base.join(p));
    let out_dir = base.join(&cfg.output_dir);
    let ds = load_dataset(&dataset_path)?;
    if ds.test.is_empty() {
        return Err(Error::Config(
            "dataset has no test split to evaluate".into(),
        ));
    }
    let table = word_table(wv_path.as_deref())?;
    let featurizer = Featurizer::new(&table, cfg.model.feature_seed);
    let vocab = Vocabulary::build(
        ds.train.iter().map(|e| e.text.as_str()),
        cfg.model.max_vocab,
    );

    let mut summaries = Vec::with_capacity(points.len());
    for (name, tc) in points {
        let dir = if cfg.sweep == Sweep::default() {
            out_dir.clone()
        } else {
            out_dir.join(&name)
        };
        io(&dir, fs::create_dir_all(&dir))?;
        let pre = Preprocessor::new(vocab.clone(), featurizer, &cfg.model, &tc);
        let prep = |v: &[crate::model::Example]| {
            v.iter()
                .map(|e| pre.prepare(e))
                .collect::<Result<Vec<PreparedExample>>>()
        };
        let (train_set, test_set) = (prep(&ds.train)?, prep(&ds.test)?);
        let mut model = Model::new(
            &cfg.model,
            tc.fusion,
            vocab.len(),
            pre.feature_dim(),
            tc.seed,
        )?;
        let log = train(&mut model, &train_set, &test_set, &tc)?;
        let test_set = test_set
            .iter()
            .map(|e| apply_ablation(e, tc.ablation))
            .collect::<Result<Vec<_>>>()?;
        let metrics = evaluate(&model, &test_set)?;

        let run_cfg = RunConfig {
            dataset: dataset_path.clone(),
            word_vectors: wv_path.clone(),
            model: model.config,
            train: tc,
        };
        let write =
            |file: &str, bytes: &[u8]| io(&dir.join(file), fs::write(dir.join(file), bytes));
        write("config.json", &json_bytes(&run_cfg))?;
        write("metrics.json", &json_bytes(&metrics))?;
        write("vocab.txt", vocab.to_text().as_bytes())?;
        let mut lines = String::new();
        for entry in &log {
            lines.push_str(&serde_json::to_string(entry).expect("log entries serialize"));
            lines.push('\n');
        }
        write("train_log.jsonl", lines.as_bytes())?;
        let ckpt = dir.join("checkpoint.sgmm");
        io(&ckpt, checkpoint::save(&model.params, &ckpt))?;
        summaries.push(RunSummary {
            name,
            dir,
            metrics,
            log,
        });
    }
    if cfg.sweep != Sweep::default() {
        let rows: Vec<serde_json::Value> = summaries
            .iter()
            .map(|s| serde_json::json!({"run": s.name, "accuracy": s.metrics.accuracy}))
            .collect();
        let p = out_dir.join("summary.json");
        io(&p, fs::write(&p, json_bytes(&rows)))?;
    }
    Ok(summaries)
}

/// A trained model reloaded from its run directory.
pub struct LoadedRun {
    pub config: RunConfig,
    pub model: Model,
    pub vocab: Vocabulary,
    pub table: WordVectorTable,
}

impl LoadedRun {
    pub fn preprocessor(&self) -> Preprocessor<'_> {
        let f = Featurizer::new(&self.table, self.config.model.feature_seed);
        Preprocessor::new(
            self.vocab.clone(),
            f,
            &self.config.model,
            &self.config.train,
        )
    }

    /// Prepares `ex` with the run's ablation applied.
    pub fn prepare(&self, ex: &crate::model::Example) -> Result<PreparedExample> {
        apply_ablation(
            &self.preprocessor().prepare(ex)?,
            self.config.train.ablation,
        )
    }
}

/// Loads `config.json`, `vocab.txt` and `checkpoint.sgmm` from `dir`.
pub fn load_run(dir: &Path) -> Result<LoadedRun> {
    load_checkpoint(&dir.join("checkpoint.sgmm"))
}

/// Loads parameters from `checkpoint` and the run's `config.json` and
/// `vocab.txt` from the same directory.
pub fn load_checkpoint(checkpoint: &Path) -> Result<LoadedRun> {
    let dir = checkpoint.parent().unwrap_or(Path::new(""));
    let cp = dir.join("config.json");
    let config: RunConfig = serde_json::from_str(&io(&cp, fs::read_to_string(&cp))?)
        .map_err(|e| Error::Json(format!("{}: {e}", cp.display())))?;
    let vp = dir.join("vocab.txt");
    let vocab = Vocabulary::from_text(&io(&vp, fs::read_to_string(&vp))?)?;
    let params = checkpoint::load(checkpoint)?;
    let model = Model::from_params(&config.model, config.train.fusion, params)?;
    let table = word_table(config.word_vectors.as_deref())?;
    Ok(LoadedRun {
        config,
        model,
        vocab,
        table,
    })
}
