//! JSON run configuration. Relative paths resolve against the directory of
//! the config file.

use std::path::{Path, PathBuf};

use promptlab_core::distractor::{FeatureConfig, TrainConfig};
use promptlab_core::fixtures;
use promptlab_core::hash::{fnv1a64, hex64};
use promptlab_core::model::LabelSpace;
use promptlab_core::selection::SelectionConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

fn default_backend() -> String {
    "mock".into()
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_in_flight() -> usize {
    4
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Label-space name: an ICL task (`edos`, `sst`, `goemotions`) or a
    /// verbalizer dataset (`agnews`, `sst5`, ...).
    #[serde(default)]
    pub task: Option<String>,
    /// Explicit label ids; overrides the fixture space for `task`.
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    /// Instruction text; overrides the fixture definition for `task`.
    #[serde(default)]
    pub task_definition: Option<String>,
    #[serde(default)]
    pub train: Option<PathBuf>,
    #[serde(default)]
    pub dev: Option<PathBuf>,
    #[serde(default)]
    pub test: Option<PathBuf>,
    #[serde(default = "default_backend")]
    pub backend: String,
    /// Qualified pattern id such as `agnews/prompt-1`.
    #[serde(default)]
    pub pattern: Option<String>,
    /// Verbalizer set from the fixture table; defaults to `task`.
    #[serde(default)]
    pub verbalizer: Option<String>,
    #[serde(default)]
    pub selection: Option<SelectionConfig>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub vectors: Option<PathBuf>,
    #[serde(default)]
    pub features: FeatureConfig,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub model: Option<PathBuf>,
    /// LabelDesc dataset name for `labeldesc-build`.
    #[serde(default)]
    pub dataset: Option<String>,
    #[serde(default)]
    pub analyze: AnalyzeConfig,
    #[serde(default)]
    pub bootstrap: BootstrapConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

fn default_bins() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyzeConfig {
    /// Predictions JSONL written by `zero-shot` or `icl`.
    #[serde(default)]
    pub predictions: Option<PathBuf>,
    /// Features JSONL written by `distractor-extract`.
    #[serde(default)]
    pub features: Option<PathBuf>,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self { predictions: None, features: None, bins: default_bins() }
    }
}

fn default_resamples() -> usize {
    1000
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BootstrapMetricName {
    #[default]
    MacroF1,
    BinaryF1,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootstrapConfig {
    #[serde(default)]
    pub a: Option<PathBuf>,
    #[serde(default)]
    pub b: Option<PathBuf>,
    #[serde(default)]
    pub metric: BootstrapMetricName,
    /// Positive label id for binary F1.
    #[serde(default)]
    pub positive: Option<String>,
    #[serde(default = "default_resamples")]
    pub resamples: usize,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self { a: None, b: None, metric: BootstrapMetricName::MacroF1, positive: None, resamples: default_resamples() }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let raw = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            serde_json::from_str(&raw).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(path) = p {
                if path.is_relative() {
                    *path = base.join(&*path);
                }
            }
        };
        for p in [
            &mut self.train,
            &mut self.dev,
            &mut self.test,
            &mut self.out,
            &mut self.cache_dir,
            &mut self.vectors,
            &mut self.model,
            &mut self.analyze.predictions,
            &mut self.analyze.features,
            &mut self.bootstrap.a,
            &mut self.bootstrap.b,
        ] {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.seeds.is_empty() {
            return Err(CliError::config("seeds must not be empty"));
        }
        if self.max_in_flight == 0 {
            return Err(CliError::config("max_in_flight must be positive"));
        }
        if let Some(sel) = &self.selection {
            sel.validate()?;
        }
        Ok(())
    }

    /// Digest of the canonical JSON form, recorded in run manifests.
    pub fn digest(&self) -> String {
        hex64(fnv1a64(serde_json::to_string(self).expect("config serializes").as_bytes()))
    }

    pub fn task(&self) -> Result<&str, CliError> {
        self.task.as_deref().ok_or_else(|| CliError::config("task is required"))
    }

    pub fn label_space(&self) -> Result<LabelSpace, CliError> {
        if let Some(ids) = &self.labels {
            return LabelSpace::from_ids(ids).map_err(CliError::config);
        }
        let task = self.task()?;
        fixtures::label_space(task)
            .ok_or_else(|| CliError::config(format!("unknown task {task:?}")))?
            .map_err(CliError::config)
    }

    pub fn task_definition(&self) -> Result<String, CliError> {
        if let Some(def) = &self.task_definition {
            return Ok(def.clone());
        }
        let task = self.task()?;
        fixtures::task_definition(task)
            .map(String::from)
            .ok_or_else(|| CliError::config(format!("no task definition for {task:?}")))
    }

    pub fn require_path<'a>(&self, p: &'a Option<PathBuf>, name: &str) -> Result<&'a Path, CliError> {
        p.as_deref().ok_or_else(|| CliError::config(format!("{name} is required")))
    }

    pub fn out_dir(&self) -> Result<&Path, CliError> {
        self.out.as_deref().ok_or_else(|| CliError::config("output directory is required (--out or \"out\")"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_unknown_fields() {
        let cfg = RunConfig::default();
        assert_eq!(cfg.backend, "mock");
        assert_eq!(cfg.seeds, vec![0]);
        assert!(serde_json::from_str::<RunConfig>(r#"{"tsak": "agnews"}"#).is_err());
    }

    #[test]
    fn relative_paths_follow_config_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"task": "sst", "test": "data/test.jsonl", "out": "/abs/out"}"#).unwrap();
        let cfg = RunConfig::load(&path).unwrap();
        assert_eq!(cfg.test.unwrap(), dir.path().join("data/test.jsonl"));
        assert_eq!(cfg.out.unwrap(), PathBuf::from("/abs/out"));
    }

    #[test]
    fn digest_tracks_content() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        b.seeds = vec![1];
        assert_eq!(a.digest(), RunConfig::default().digest());
        assert_ne!(a.digest(), b.digest());
    }

    #[test]
    fn label_space_sources() {
        let mut cfg = RunConfig { task: Some("edos".into()), ..RunConfig::default() };
        assert_eq!(cfg.label_space().unwrap().len(), 4);
        cfg.labels = Some(vec!["x".into(), "y".into()]);
        assert_eq!(cfg.label_space().unwrap().len(), 2);
        cfg.task = Some("nope".into());
        cfg.labels = None;
        assert!(cfg.label_space().is_err());
    }
}
