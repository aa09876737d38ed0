//! Backend wiring, manifests and output writers shared by the subcommands.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use promptlab_client::HttpBackend;
use promptlab_core::fixtures;
use promptlab_core::gateway::{Backend, Gateway, MockBackend, ScoreCache};
use promptlab_core::model::{parse_classification, LabelSpace, TextExample};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::CliError;

pub const TOOLKIT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Everything a subcommand needs: the merged config and run-wide switches.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: RunConfig,
    /// Cache directory from the command line; beats the environment and the
    /// config file.
    pub cache_flag: Option<PathBuf>,
    pub verify: bool,
}

impl Context {
    pub fn new(cfg: RunConfig) -> Self {
        Self { cfg, cache_flag: None, verify: false }
    }

    pub fn cache(&self) -> Option<ScoreCache> {
        match &self.cache_flag {
            Some(dir) => Some(ScoreCache::new(dir.clone())),
            None => ScoreCache::from_env_or(self.cfg.cache_dir.clone()),
        }
    }

    pub fn gateway(&self) -> Result<Gateway, CliError> {
        let backend = open_backend(&self.cfg.backend)?;
        let mut gw = Gateway::new(backend).with_max_in_flight(self.cfg.max_in_flight);
        if let Some(cache) = self.cache() {
            log::debug!("score cache at {}", cache.root().display());
            gw = gw.with_cache(cache);
        }
        Ok(gw)
    }

    pub fn out_dir(&self) -> Result<PathBuf, CliError> {
        let dir = self.cfg.out_dir()?.to_path_buf();
        fs::create_dir_all(&dir).map_err(|e| CliError::config(format!("{}: {e}", dir.display())))?;
        Ok(dir)
    }
}

pub fn open_backend(target: &str) -> Result<Arc<dyn Backend>, CliError> {
    if target == "mock" {
        return Ok(Arc::new(MockBackend::new()));
    }
    if target.starts_with("http://") || target.starts_with("https://") {
        let b = HttpBackend::connect(target).map_err(|e| CliError::Backend(format!("{target}: {e}")))?;
        return Ok(Arc::new(b));
    }
    Err(CliError::config(format!("backend must be \"mock\" or an http(s) url, got {target:?}")))
}

/// Reads a classification JSONL file, checking labels against `space`.
pub fn load_examples(path: &Path, space: &LabelSpace) -> Result<Vec<TextExample>, CliError> {
    parse_classification(path, Some(space)).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Gold label index of every example; all examples must be labelled.
pub fn gold_indices(examples: &[TextExample], space: &LabelSpace) -> Result<Vec<usize>, CliError> {
    examples
        .iter()
        .map(|ex| {
            let g = ex.gold_label.as_deref().ok_or_else(|| CliError::config(format!("{} has no gold label", ex.id)))?;
            space.require(g).map_err(CliError::config)
        })
        .collect()
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub toolkit_version: &'a str,
    pub command: &'a str,
    pub config_digest: String,
    pub fixture_digests: Vec<(String, String)>,
    pub backend_id: String,
    pub seeds: &'a [u64],
}

/// Digest of the config without its location-dependent fields, so the same
/// run written to another directory keeps its digest.
pub fn portable_digest(cfg: &RunConfig) -> String {
    let mut c = cfg.clone();
    c.out = None;
    c.cache_dir = None;
    c.digest()
}

pub fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig, backend_id: String) -> Result<(), CliError> {
    let m = Manifest {
        toolkit_version: TOOLKIT_VERSION,
        command,
        config_digest: portable_digest(cfg),
        fixture_digests: fixtures::fixture_digests(),
        backend_id,
        seeds: &cfg.seeds,
    };
    write_json(&dir.join("manifest.json"), &m)
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::config(format!("{}: {e}", parent.display())))?;
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::config(format!("{}: {e}", path.display()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(io_at(path))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), CliError> {
    let mut w = create(path)?;
    for row in rows {
        serde_json::to_writer(&mut w, row).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        w.write_all(b"\n").map_err(io_at(path))?;
    }
    w.flush().map_err(io_at(path))
}

/// CSV with a header row; every record is a list of already formatted cells.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(create(path)?);
    let csv_err = |e: csv::Error| CliError::config(format!("{}: {e}", path.display()));
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.flush().map_err(io_at(path))
}

pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>, CliError> {
    let raw = fs::read_to_string(path).map_err(io_at(path))?;
    raw.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| CliError::config(format!("{}:{}: {e}", path.display(), i + 1))))
        .collect()
}
