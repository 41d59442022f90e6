//! Content-addressed response cache shared by the LLM and embedding gateways.
//!
//! Values live in memory and, when a directory is configured, one file per
//! key named by the hex digest. Writes go through a temp file and a rename,
//! so concurrent writers of one key leave a complete value (last writer wins).

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::RwLock;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub fn content_hash(parts: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        // length prefix keeps ("ab","c") and ("a","bc") apart
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hex::encode(hasher.finalize())
}

#[derive(Debug, Default)]
pub struct ContentCache {
    dir: Option<PathBuf>,
    memory: RwLock<HashMap<String, String>>,
}

impl ContentCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            dir: Some(dir),
            memory: RwLock::default(),
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<String> {
        if let Some(v) = self.memory.read().expect("cache lock").get(key) {
            return Some(v.clone());
        }
        let path = self.dir.as_ref()?.join(key);
        let value = std::fs::read_to_string(path).ok()?;
        self.memory
            .write()
            .expect("cache lock")
            .insert(key.to_string(), value.clone());
        Some(value)
    }

    pub fn put(&self, key: &str, value: &str) -> Result<()> {
        if let Some(dir) = &self.dir {
            write_atomic(&dir.join(key), value.as_bytes())?;
        }
        self.memory
            .write()
            .expect("cache lock")
            .insert(key.to_string(), value.to_string());
        Ok(())
    }
}

/// Writes `bytes` to `path` via a sibling temp file and rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(parent).map_err(|e| Error::io(parent, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(tmp.path(), e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_separates_boundaries() {
        assert_ne!(content_hash(&[b"ab", b"c"]), content_hash(&[b"a", b"bc"]));
        assert_eq!(content_hash(&[b"x"]).len(), 64);
    }

    #[test]
    fn disk_values_survive_a_new_handle() {
        let dir = tempfile::tempdir().unwrap();
        let key = content_hash(&[b"k"]);
        ContentCache::on_disk(dir.path())
            .unwrap()
            .put(&key, "payload")
            .unwrap();
        let fresh = ContentCache::on_disk(dir.path()).unwrap();
        assert_eq!(fresh.get(&key).as_deref(), Some("payload"));
        assert!(dir.path().join(&key).exists());
    }

    #[test]
    fn concurrent_writers_leave_a_complete_value() {
        let dir = tempfile::tempdir().unwrap();
        let cache = ContentCache::on_disk(dir.path()).unwrap();
        std::thread::scope(|s| {
            for i in 0..8 {
                let cache = &cache;
                s.spawn(move || cache.put("same", &format!("value-{i}")).unwrap());
            }
        });
        let on_disk = std::fs::read_to_string(dir.path().join("same")).unwrap();
        assert!(on_disk.starts_with("value-"));
    }
}
