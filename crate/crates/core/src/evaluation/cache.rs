//! Disk cache for extracted feature vectors, keyed by content + parameter
//! hash. Entries are written atomically with write-once semantics, so
//! concurrent writers of the same key are harmless.

use crate::fsutil::write_atomic;
use std::path::PathBuf;

#[derive(Debug, Clone)]
pub struct FeatureCache {
    dir: PathBuf,
}

impl FeatureCache {
    pub fn new(dir: PathBuf) -> std::io::Result<Self> {
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get(&self, key: &str) -> Option<Vec<f64>> {
        let bytes = std::fs::read(self.entry_path(key)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }

    pub fn put(&self, key: &str, values: &[f64]) -> std::io::Result<()> {
        let path = self.entry_path(key);
        if path.exists() {
            return Ok(());
        }
        let bytes = serde_json::to_vec(values).expect("f64 slice serializes");
        write_atomic(&path, &bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trips_exact_f64() {
        let dir = tempfile::tempdir().unwrap();
        let cache = FeatureCache::new(dir.path().join("c")).unwrap();
        let values = vec![1.0 / 3.0, f64::MIN_POSITIVE, -0.0, 2.5e300];
        assert!(cache.get("k").is_none());
        cache.put("k", &values).unwrap();
        let back = cache.get("k").unwrap();
        assert_eq!(back.len(), values.len());
        for (a, b) in back.iter().zip(&values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
        // Write-once: a second put does not clobber.
        cache.put("k", &[9.0]).unwrap();
        assert_eq!(cache.get("k").unwrap().len(), values.len());
    }
}
