use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;

use schemars::JsonSchema;
use serde::{Deserialize, Serialize};

use super::{EvalError, Evaluator};
use crate::arch::FORMAT_VERSION;
use crate::fsio::{to_json_bytes, write_atomic};

type Key = (usize, Vec<u32>);

/// Memoizes an evaluator by `(subnet, genes)`, optionally persisted to a JSON
/// file. The file records the inner evaluator's fingerprint; a file written
/// for a different evaluator, or one that fails to parse, is discarded.
pub struct CachedEvaluator<E> {
    inner: E,
    entries: RwLock<HashMap<Key, f64>>,
    inner_calls: AtomicUsize,
    hits: AtomicUsize,
    path: Option<PathBuf>,
}

#[derive(Serialize, Deserialize, JsonSchema)]
struct CacheFile {
    format_version: u32,
    fingerprint: String,
    entries: Vec<CacheEntry>,
}

#[derive(Serialize, Deserialize, JsonSchema)]
struct CacheEntry {
    subnet: usize,
    genes: Vec<u32>,
    error: f64,
}

pub(crate) fn cache_file_schema() -> schemars::Schema {
    schemars::schema_for!(CacheFile)
}

impl<E: Evaluator> CachedEvaluator<E> {
    pub fn new(inner: E) -> Self {
        Self {
            inner,
            entries: RwLock::new(HashMap::new()),
            inner_calls: AtomicUsize::new(0),
            hits: AtomicUsize::new(0),
            path: None,
        }
    }

    /// Loads `path` if it holds a valid cache for this evaluator.
    pub fn with_file(inner: E, path: impl Into<PathBuf>) -> Self {
        let path = path.into();
        let mut cache = Self::new(inner);
        match fs::read(&path) {
            Ok(bytes) => match serde_json::from_slice::<CacheFile>(&bytes) {
                Ok(file) if file.format_version == FORMAT_VERSION && file.fingerprint == cache.inner.fingerprint() => {
                    let map = cache.entries.get_mut().expect("fresh lock");
                    for e in file.entries {
                        map.insert((e.subnet, e.genes), e.error);
                    }
                }
                Ok(_) => log::warn!(
                    "evaluation cache {} belongs to another evaluator; starting fresh",
                    path.display()
                ),
                Err(err) => log::warn!(
                    "evaluation cache {} is corrupt ({err}); rebuilding from scratch",
                    path.display()
                ),
            },
            Err(err) if err.kind() == io::ErrorKind::NotFound => {}
            Err(err) => log::warn!("cannot read evaluation cache {}: {err}", path.display()),
        }
        cache.path = Some(path);
        cache
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    /// Number of codings actually sent to the inner evaluator.
    pub fn inner_calls(&self) -> usize {
        self.inner_calls.load(Ordering::Relaxed)
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    /// Writes the cache file, entries sorted by `(subnet, genes)`.
    pub fn save(&self) -> io::Result<()> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let sorted: BTreeMap<Key, f64> = self
            .entries
            .read()
            .expect("cache lock")
            .iter()
            .map(|(k, v)| (k.clone(), *v))
            .collect();
        let file = CacheFile {
            format_version: FORMAT_VERSION,
            fingerprint: self.inner.fingerprint(),
            entries: sorted
                .into_iter()
                .map(|((subnet, genes), error)| CacheEntry { subnet, genes, error })
                .collect(),
        };
        write_atomic(path, &to_json_bytes(&file))
    }

    fn lookup(&self, subnet: usize, genes: &[u32]) -> Option<f64> {
        self.entries
            .read()
            .expect("cache lock")
            .get(&(subnet, genes.to_vec()))
            .copied()
    }
}

impl<E: Evaluator> Evaluator for CachedEvaluator<E> {
    fn evaluate(&self, subnet: usize, genes: &[u32]) -> Result<f64, EvalError> {
        if let Some(v) = self.lookup(subnet, genes) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(v);
        }
        self.inner_calls.fetch_add(1, Ordering::Relaxed);
        let v = self.inner.evaluate(subnet, genes)?;
        self.entries
            .write()
            .expect("cache lock")
            .insert((subnet, genes.to_vec()), v);
        Ok(v)
    }

    fn evaluate_batch(&self, subnet: usize, batch: &[Vec<u32>]) -> Vec<Result<f64, EvalError>> {
        let mut misses: Vec<Vec<u32>> = Vec::new();
        let mut miss_slot: HashMap<&[u32], usize> = HashMap::new();
        {
            let map = self.entries.read().expect("cache lock");
            for genes in batch {
                if !map.contains_key(&(subnet, genes.clone())) && !miss_slot.contains_key(genes.as_slice()) {
                    miss_slot.insert(genes, misses.len());
                    misses.push(genes.clone());
                }
            }
        }
        self.inner_calls.fetch_add(misses.len(), Ordering::Relaxed);
        let mut fresh: Vec<Option<Result<f64, EvalError>>> = self
            .inner
            .evaluate_batch(subnet, &misses)
            .into_iter()
            .map(Some)
            .collect();
        {
            let mut map = self.entries.write().expect("cache lock");
            for (genes, res) in misses.iter().zip(&fresh) {
                if let Some(Ok(v)) = res {
                    map.insert((subnet, genes.clone()), *v);
                }
            }
        }
        let map = self.entries.read().expect("cache lock");
        batch
            .iter()
            .map(|genes| {
                if let Some(&slot) = miss_slot.get(genes.as_slice()) {
                    match fresh[slot].take() {
                        Some(res) => res,
                        // second occurrence of a coding that failed
                        None => map
                            .get(&(subnet, genes.clone()))
                            .copied()
                            .ok_or_else(|| EvalError::Failed(format!("coding {genes:?} failed"))),
                    }
                } else {
                    self.hits.fetch_add(1, Ordering::Relaxed);
                    Ok(map[&(subnet, genes.clone())])
                }
            })
            .collect()
    }

    fn fingerprint(&self) -> String {
        self.inner.fingerprint()
    }
}
