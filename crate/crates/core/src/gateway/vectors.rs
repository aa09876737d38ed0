//! Word-vector files in the GloVe text layout: `token v1 ... vd` per line,
//! ordered by decreasing corpus frequency. A token's line number is its
//! frequency rank.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum VectorsError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
}

#[derive(Debug, Clone, Default)]
pub struct WordVectors {
    vectors: HashMap<String, Vec<f64>>,
    ranks: HashMap<String, usize>,
    size: usize,
    dim: usize,
}

impl WordVectors {
    /// Builds a table from `(token, vector)` pairs in frequency order.
    pub fn from_entries<S: Into<String>>(entries: impl IntoIterator<Item = (S, Vec<f64>)>) -> Result<Self, VectorsError> {
        let mut out = WordVectors::default();
        for (i, (tok, vec)) in entries.into_iter().enumerate() {
            out.push(i + 1, tok.into(), vec)?;
        }
        Ok(out)
    }

    fn push(&mut self, line: usize, token: String, vec: Vec<f64>) -> Result<(), VectorsError> {
        if self.size == 0 {
            self.dim = vec.len();
        } else if vec.len() != self.dim {
            return Err(VectorsError::Format {
                line,
                message: format!("expected {} components, found {}", self.dim, vec.len()),
            });
        }
        self.size += 1;
        if self.ranks.contains_key(&token) {
            log::warn!("line {line}: duplicate token {token:?} ignored, keeping first occurrence");
            return Ok(());
        }
        self.ranks.insert(token.clone(), line);
        self.vectors.insert(token, vec);
        Ok(())
    }

    /// Number of entries read; out-of-vocabulary tokens rank `size + 1`.
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn resolve<'a>(&self, token: &'a str) -> Option<std::borrow::Cow<'a, str>> {
        if self.ranks.contains_key(token) {
            return Some(token.into());
        }
        let lower = token.to_lowercase();
        self.ranks.contains_key(&lower).then_some(lower.into())
    }

    pub fn vector(&self, token: &str) -> Option<&[f64]> {
        let key = self.resolve(token)?;
        self.vectors.get(key.as_ref()).map(Vec::as_slice)
    }

    /// Frequency rank, with lowercase fallback; `size + 1` when unknown.
    pub fn rank(&self, token: &str) -> usize {
        self.resolve(token)
            .and_then(|k| self.ranks.get(k.as_ref()).copied())
            .unwrap_or(self.size + 1)
    }

    pub fn ranks(&self) -> &HashMap<String, usize> {
        &self.ranks
    }
}

pub fn load_word_vectors(path: &Path) -> Result<WordVectors, VectorsError> {
    let io_err = |source| VectorsError::Io { path: path.display().to_string(), source };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = WordVectors::default();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split(' ');
        let token = parts.next().unwrap_or_default().to_string();
        let vec = parts
            .filter(|p| !p.is_empty())
            .map(|p| p.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| VectorsError::Format { line: lineno, message: e.to_string() })?;
        if vec.is_empty() {
            return Err(VectorsError::Format { line: lineno, message: "no vector components".into() });
        }
        out.push(lineno, token, vec)?;
    }
    Ok(out)
}
