use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DescriptionRecord, GroundingError};

pub const CACHE_FILE: &str = "semantic_cache.jsonl";
pub const FAILURES_FILE: &str = "grounding_failures.jsonl";

/// Grounded descriptions keyed by `(item_id, prompt_hash)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SemanticCache {
    records: BTreeMap<(String, String), DescriptionRecord>,
}

impl SemanticCache {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Inserts or replaces the record for its `(item_id, prompt_hash)`.
    pub fn insert(&mut self, record: DescriptionRecord) -> Option<DescriptionRecord> {
        let key = (record.item_id.clone(), record.prompt_hash.clone());
        self.records.insert(key, record)
    }

    pub fn get(&self, item_id: &str, prompt_hash: &str) -> Option<&DescriptionRecord> {
        self.records
            .get(&(item_id.to_string(), prompt_hash.to_string()))
    }

    /// Records ordered by item id, then prompt hash.
    pub fn records(&self) -> impl Iterator<Item = &DescriptionRecord> {
        self.records.values()
    }

    /// The covered item set.
    pub fn covered_items(&self) -> BTreeSet<String> {
        self.records.keys().map(|(item, _)| item.clone()).collect()
    }

    /// Only the records produced under `prompt_hash`.
    pub fn for_prompt(&self, prompt_hash: &str) -> Self {
        Self {
            records: self
                .records
                .iter()
                .filter(|((_, h), _)| h == prompt_hash)
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    /// Covered item ids missing from `catalog`; empty when the cache is a
    /// subset of the catalog.
    pub fn unknown_items(&self, catalog: &BTreeSet<String>) -> Vec<String> {
        self.covered_items()
            .into_iter()
            .filter(|id| !catalog.contains(id))
            .collect()
    }

    /// Reads a cache file, later lines overriding earlier ones for the same key.
    pub fn load(path: &Path) -> Result<Self, GroundingError> {
        let file = File::open(path).map_err(|source| GroundingError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cache = Self::default();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|source| GroundingError::Io {
                path: path.to_path_buf(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let record: DescriptionRecord =
                serde_json::from_str(&line).map_err(|e| GroundingError::CacheParse {
                    path: path.to_path_buf(),
                    line: n + 1,
                    detail: e.to_string(),
                })?;
            if record.description.trim().is_empty() {
                return Err(GroundingError::CacheParse {
                    path: path.to_path_buf(),
                    line: n + 1,
                    detail: "empty description".into(),
                });
            }
            cache.insert(record);
        }
        Ok(cache)
    }

    /// Writes the compacted cache, one record per line in key order.
    pub fn write(&self, path: &Path) -> Result<(), GroundingError> {
        let io = |source| GroundingError::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        for record in self.records() {
            serde_json::to_writer(&mut out, record).expect("records serialize");
            out.write_all(b"\n").map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// A grounding attempt that failed permanently in the last build.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FailureRecord {
    pub item_id: String,
    pub image_ref: String,
    pub error: String,
}

/// A [`SemanticCache`] optionally backed by an append-only JSONL file.
#[derive(Debug)]
pub struct CacheStore {
    cache: SemanticCache,
    dir: Option<PathBuf>,
}

impl CacheStore {
    pub fn in_memory() -> Self {
        Self {
            cache: SemanticCache::default(),
            dir: None,
        }
    }

    /// Opens (or creates) the cache in `dir`, loading `semantic_cache.jsonl`
    /// if present.
    pub fn open(dir: &Path) -> Result<Self, GroundingError> {
        fs::create_dir_all(dir).map_err(|source| GroundingError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = dir.join(CACHE_FILE);
        let cache = if path.exists() {
            SemanticCache::load(&path)?
        } else {
            SemanticCache::default()
        };
        Ok(Self {
            cache,
            dir: Some(dir.to_path_buf()),
        })
    }

    pub fn cache(&self) -> &SemanticCache {
        &self.cache
    }

    pub fn into_cache(self) -> SemanticCache {
        self.cache
    }

    pub fn cache_path(&self) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(CACHE_FILE))
    }

    pub fn failures_path(&self) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(FAILURES_FILE))
    }

    /// Appends one record to the file (if any) and the in-memory map.
    pub fn append(&mut self, record: DescriptionRecord) -> Result<(), GroundingError> {
        if let Some(path) = self.cache_path() {
            let io = |source| GroundingError::Io {
                path: path.clone(),
                source,
            };
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map_err(io)?;
            let mut line = serde_json::to_vec(&record).expect("records serialize");
            line.push(b'\n');
            f.write_all(&line).map_err(io)?;
        }
        self.cache.insert(record);
        Ok(())
    }

    /// Replaces the failure sidecar with `failures`.
    pub fn write_failures(&self, failures: &[FailureRecord]) -> Result<(), GroundingError> {
        let Some(path) = self.failures_path() else {
            return Ok(());
        };
        let mut buf = Vec::new();
        for f in failures {
            serde_json::to_writer(&mut buf, f).expect("failures serialize");
            buf.push(b'\n');
        }
        fs::write(&path, buf).map_err(|source| GroundingError::Io { path, source })
    }

    /// Rewrites the backing file without superseded lines.
    pub fn compact(&self) -> Result<(), GroundingError> {
        match self.cache_path() {
            Some(path) => self.cache.write(&path),
            None => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(item: &str, hash: &str, text: &str) -> DescriptionRecord {
        DescriptionRecord {
            item_id: item.into(),
            description: text.into(),
            model_id: "stub-v1".into(),
            prompt_hash: hash.into(),
            created_at: 1,
            model_note: None,
        }
    }

    #[test]
    fn last_write_wins_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let mut store = CacheStore::open(dir.path()).unwrap();
        store.append(rec("a", "h", "first")).unwrap();
        store.append(rec("b", "h", "other")).unwrap();
        store.append(rec("a", "h", "second")).unwrap();
        let reopened = CacheStore::open(dir.path()).unwrap();
        assert_eq!(reopened.cache().len(), 2);
        assert_eq!(reopened.cache().get("a", "h").unwrap().description, "second");

        reopened.compact().unwrap();
        let text = fs::read_to_string(dir.path().join(CACHE_FILE)).unwrap();
        assert_eq!(text.lines().count(), 2);
    }

    #[test]
    fn one_record_per_item_and_prompt() {
        let mut cache = SemanticCache::default();
        cache.insert(rec("a", "h1", "x"));
        cache.insert(rec("a", "h2", "y"));
        cache.insert(rec("a", "h1", "z"));
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.covered_items().len(), 1);
        assert_eq!(cache.for_prompt("h2").len(), 1);
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(CACHE_FILE);
        let good = serde_json::to_string(&rec("a", "h", "ok")).unwrap();
        fs::write(&path, format!("{good}\n{{not json\n")).unwrap();
        match SemanticCache::load(&path) {
            Err(GroundingError::CacheParse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_items_against_catalog() {
        let mut cache = SemanticCache::default();
        cache.insert(rec("a", "h", "x"));
        cache.insert(rec("q", "h", "x"));
        let catalog: BTreeSet<String> = ["a", "b"].into_iter().map(String::from).collect();
        assert_eq!(cache.unknown_items(&catalog), vec!["q".to_string()]);
    }
}
