//! Dataset manifests, the planted-signal synthetic corpus, and experiment
//! runs.

mod experiment;
mod probe;
mod synth;

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Example;
use crate::scenegraph::{parse_scene_graph, Modality, SceneGraph};
use crate::tem::{parse_ppm, RgbImage};

pub use experiment::{
    load_checkpoint, load_run, run_experiment, run_experiment_with, ExperimentConfig, LoadedRun,
    RunConfig, RunSummary, Sweep, SEED_ENV,
};
pub use probe::{bow_probe_accuracy, text_probe};
pub use synth::{
    gen_synth, synth_dataset, Signal, SynthSpec, TEXT_MARKERS, TSG_SIGNAL, VSG_SIGNAL,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// One manifest line. Paths are relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub id: String,
    pub text: String,
    pub image_path: String,
    pub tsg_path: String,
    pub vsg_path: String,
    pub label: u8,
    pub split: Split,
}

pub fn write_manifest(records: &[ManifestRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).expect("manifest records serialize"));
        out.push('\n');
    }
    out
}

/// Parses JSON-lines, collecting every bad line instead of stopping at the
/// first.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestRecord>> {
    let mut records = Vec::new();
    let mut errors = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<ManifestRecord>(line) {
            Ok(r) if r.label > 1 => errors.push(format!(
                "line {}: record {}: label must be 0 or 1, got {}",
                i + 1,
                r.id,
                r.label
            )),
            Ok(r) if !seen.insert(r.id.clone()) => {
                errors.push(format!("line {}: duplicate id {}", i + 1, r.id))
            }
            Ok(r) => records.push(r),
            Err(e) => errors.push(format!("line {}: {e}", i + 1)),
        }
    }
    if errors.is_empty() {
        Ok(records)
    } else {
        Err(Error::Dataset(errors))
    }
}

/// Examples in manifest order, grouped by split.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Dataset {
    pub train: Vec<Example>,
    pub test: Vec<Example>,
}

impl Dataset {
    pub fn find(&self, id: &str) -> Option<&Example> {
        self.train.iter().chain(&self.test).find(|e| e.id == id)
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn load_record(base: &Path, r: &ManifestRecord) -> Result<Example> {
    let image: RgbImage = parse_ppm(&read(&base.join(&r.image_path))?)?;
    let graph =
        |p: &str, m| -> Result<SceneGraph> { Ok(parse_scene_graph(&read(&base.join(p))?, m)?) };
    Ok(Example {
        id: r.id.clone(),
        text: r.text.clone(),
        image,
        tsg: graph(&r.tsg_path, Modality::Text)?,
        vsg: graph(&r.vsg_path, Modality::Visual)?,
        label: r.label,
    })
}

/// Reads and validates every record; fails with one error listing all bad
/// records if any.
pub fn load_dataset(manifest_path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    let records = parse_manifest(&text)?;
    let base = manifest_path
        .parent()
        .map(Path::to_path_buf)
        .unwrap_or_default();
    let mut ds = Dataset::default();
    let mut errors = Vec::new();
    for r in &records {
        match load_record(&base, r) {
            Ok(ex) => match r.split {
                Split::Train => ds.train.push(ex),
                Split::Test => ds.test.push(ex),
            },
            Err(e) => errors.push(format!("record {}: {e}", r.id)),
        }
    }
    if errors.is_empty() {
        Ok(ds)
    } else {
        Err(Error::Dataset(errors))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(id: &str, label: u8) -> ManifestRecord {
        ManifestRecord {
            id: id.into(),
            text: "a dog".into(),
            image_path: format!("images/{id}.ppm"),
            tsg_path: format!("graphs/{id}.tsg.json"),
            vsg_path: format!("graphs/{id}.vsg.json"),
            label,
            split: Split::Train,
        }
    }

    #[test]
    fn manifest_round_trip() {
        let rs = vec![rec("a", 0), rec("b", 1)];
        assert_eq!(parse_manifest(&write_manifest(&rs)).unwrap(), rs);
    }

    #[test]
    fn manifest_errors_are_aggregated() {
        let mut text = write_manifest(&[rec("a", 0), rec("a", 1), rec("c", 3)]);
        text.push_str("{not json}\n");
        match parse_manifest(&text) {
            Err(Error::Dataset(errs)) => {
                assert_eq!(errs.len(), 3);
                assert!(errs[0].contains("duplicate id a"));
                assert!(errs[1].contains("record c"));
            }
            other => panic!("{other:?}"),
        }
    }
}
