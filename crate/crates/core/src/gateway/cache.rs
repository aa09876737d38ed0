//! Content-addressed response cache.
//!
//! Layout: `<root>/<backend>/<kind>/<digest>.json`. Entries are written to a
//! temporary file in the same directory and renamed into place, so readers
//! only ever observe complete files.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::{GatewayError, RequestKind};
use crate::hash::{fnv1a64, hex64};

pub const CACHE_DIR_ENV: &str = "PROMPTLAB_CACHE_DIR";

static TMP_COUNTER: AtomicU64 = AtomicU64::new(0);

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub backend_id: String,
    pub request_kind: RequestKind,
    pub request_digest: u64,
}

impl CacheKey {
    pub fn new<R: Serialize>(backend_id: &str, kind: RequestKind, req: &R) -> Result<Self, GatewayError> {
        let bytes = serde_json::to_vec(req).map_err(|e| GatewayError::Cache(e.to_string()))?;
        Ok(Self { backend_id: backend_id.to_string(), request_kind: kind, request_digest: fnv1a64(&bytes) })
    }
}

#[derive(Debug, Clone)]
pub struct ScoreCache {
    root: PathBuf,
}

impl ScoreCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    /// `PROMPTLAB_CACHE_DIR` if set, else `fallback`.
    pub fn from_env_or(fallback: Option<PathBuf>) -> Option<Self> {
        std::env::var_os(CACHE_DIR_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .or(fallback)
            .map(Self::new)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        let safe: String = key
            .backend_id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect();
        let backend_dir = format!("{safe}-{}", &hex64(fnv1a64(key.backend_id.as_bytes()))[..8]);
        self.root
            .join(backend_dir)
            .join(key.request_kind.as_str())
            .join(format!("{}.json", hex64(key.request_digest)))
    }

    pub fn get<T: for<'de> Deserialize<'de>>(&self, key: &CacheKey) -> Result<Option<T>, GatewayError> {
        let path = self.path_for(key);
        match fs::read(&path) {
            Ok(bytes) => serde_json::from_slice(&bytes)
                .map(Some)
                .map_err(|e| GatewayError::Cache(format!("{}: {e}", path.display()))),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(GatewayError::Cache(format!("{}: {e}", path.display()))),
        }
    }

    pub fn put<T: Serialize>(&self, key: &CacheKey, value: &T) -> Result<(), GatewayError> {
        let path = self.path_for(key);
        let dir = path.parent().expect("cache path has a parent");
        let err = |e: std::io::Error| GatewayError::Cache(format!("{}: {e}", path.display()));
        fs::create_dir_all(dir).map_err(err)?;
        let bytes = serde_json::to_vec(value).map_err(|e| GatewayError::Cache(e.to_string()))?;
        let tmp = dir.join(format!(
            ".tmp-{}-{}",
            std::process::id(),
            TMP_COUNTER.fetch_add(1, Ordering::Relaxed)
        ));
        let mut f = fs::File::create(&tmp).map_err(err)?;
        f.write_all(&bytes).map_err(err)?;
        f.sync_all().map_err(err)?;
        drop(f);
        fs::rename(&tmp, &path).map_err(err)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ScoreRequest;

    #[test]
    fn equal_requests_give_equal_keys() {
        let a = ScoreRequest { prompt: "p".into(), candidates: vec!["x".into()] };
        let b = a.clone();
        let c = ScoreRequest { prompt: "q".into(), ..a.clone() };
        let ka = CacheKey::new("m", RequestKind::Score, &a).unwrap();
        assert_eq!(ka, CacheKey::new("m", RequestKind::Score, &b).unwrap());
        assert_ne!(ka, CacheKey::new("m", RequestKind::Score, &c).unwrap());
        assert_ne!(ka, CacheKey::new("other", RequestKind::Score, &a).unwrap());
    }

    #[test]
    fn roundtrip_and_no_tmp_left() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ScoreCache::new(dir.path());
        let key = CacheKey::new("http://x:1", RequestKind::Embed, &"req").unwrap();
        assert!(cache.get::<Vec<f64>>(&key).unwrap().is_none());
        cache.put(&key, &vec![0.1f64, -3.25e-7]).unwrap();
        assert_eq!(cache.get::<Vec<f64>>(&key).unwrap(), Some(vec![0.1, -3.25e-7]));
        let entries: Vec<_> = fs::read_dir(cache.path_for(&key).parent().unwrap()).unwrap().collect();
        assert_eq!(entries.len(), 1);
    }

    #[test]
    fn floats_come_back_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ScoreCache::new(dir.path());
        let key = CacheKey::new("m", RequestKind::Score, &"bits").unwrap();
        let mut rng = crate::rng::SplitMix64::new(3);
        let values: Vec<f64> = (0..2000).map(|_| (rng.next_f64() - 0.5) * 40.0).collect();
        cache.put(&key, &values).unwrap();
        let back: Vec<f64> = cache.get(&key).unwrap().unwrap();
        assert!(values.iter().zip(&back).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
