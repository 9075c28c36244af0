//! Item embedding tables and the text-encoder clients that produce them.
//!
//! An [`EmbeddingTable`] keeps the raw `f32` rows exactly as loaded (so
//! load/save round-trips bit-exactly) next to a row-normalized `f64` copy
//! that every downstream consumer reads. Rows whose raw vector is all zero
//! are kept as zero and flagged as degenerate instead of being rejected.

mod format;
mod service;

use std::collections::{BTreeSet, HashMap};
use std::path::{Path, PathBuf};

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

pub use format::{index_path_for, read_index, read_vectors, write_index, write_vectors, MAGIC, VERSION};
pub use service::{encode_descriptions, HttpEncoder, StubEncoder, TextEncoder, DEFAULT_BATCH_SIZE, STUB_DIM};

/// Norms at or below this are treated as zero.
pub const NORM_EPSILON: f64 = 1e-12;

#[derive(Debug, thiserror::Error)]
pub enum EncodingError {
    #[error("{path}: bad magic, expected SEMV")]
    BadMagic { path: PathBuf },
    #[error("{path}: unsupported format version {version}")]
    UnsupportedVersion { path: PathBuf, version: u32 },
    #[error("{path}: truncated file ({detail})")]
    TruncatedFile { path: PathBuf, detail: String },
    #[error("index has {ids} ids but matrix has {rows} rows")]
    IndexMismatch { ids: usize, rows: usize },
    #[error("duplicate item id {0:?}")]
    DuplicateId(String),
    #[error("empty item id at row {0}")]
    EmptyId(usize),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("nothing to encode")]
    EmptyInput,
    #[error("embedding service unavailable: {0}")]
    EncodingUnavailable(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Scale `v` to unit L2 norm; vectors with norm ≤ 1e-12 are returned unchanged.
pub fn normalize(v: &[f64]) -> Vec<f64> {
    let norm = crate::util::l2_norm(v);
    if norm > NORM_EPSILON {
        v.iter().map(|x| x / norm).collect()
    } else {
        v.to_vec()
    }
}

/// Immutable id-indexed item matrix with its row-normalized view.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    ids: Vec<String>,
    index: HashMap<String, usize>,
    raw: Array2<f32>,
    norm: Array2<f64>,
    degenerate: Vec<bool>,
}

impl PartialEq for EmbeddingTable {
    fn eq(&self, other: &Self) -> bool {
        self.ids == other.ids
            && self.raw.shape() == other.raw.shape()
            && self
                .raw
                .iter()
                .zip(other.raw.iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl EmbeddingTable {
    pub fn new(ids: Vec<String>, raw: Array2<f32>) -> Result<Self, EncodingError> {
        if ids.len() != raw.nrows() {
            return Err(EncodingError::IndexMismatch {
                ids: ids.len(),
                rows: raw.nrows(),
            });
        }
        let mut index = HashMap::with_capacity(ids.len());
        for (row, id) in ids.iter().enumerate() {
            if id.is_empty() {
                return Err(EncodingError::EmptyId(row));
            }
            if index.insert(id.clone(), row).is_some() {
                return Err(EncodingError::DuplicateId(id.clone()));
            }
        }
        let mut norm = raw.mapv(f64::from);
        let mut degenerate = vec![false; ids.len()];
        for (row, mut r) in norm.axis_iter_mut(Axis(0)).enumerate() {
            let n = r.dot(&r).sqrt();
            if n > NORM_EPSILON {
                r.mapv_inplace(|x| x / n);
            } else {
                r.fill(0.0);
                degenerate[row] = true;
            }
        }
        Ok(Self {
            ids,
            index,
            raw,
            norm,
            degenerate,
        })
    }

    /// Builds a table from `f64` rows (stored as `f32`).
    pub fn from_rows(ids: Vec<String>, rows: &[Vec<f64>]) -> Result<Self, EncodingError> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut raw = Array2::<f32>::zeros((rows.len(), dim));
        for (i, row) in rows.iter().enumerate() {
            if row.len() != dim {
                return Err(EncodingError::DimMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            for (j, x) in row.iter().enumerate() {
                raw[[i, j]] = *x as f32;
            }
        }
        Self::new(ids, raw)
    }

    pub fn load(vector_path: &Path, index_path: &Path) -> Result<Self, EncodingError> {
        let raw = read_vectors(vector_path)?;
        let ids = read_index(index_path)?;
        Self::new(ids, raw)
    }

    /// Loads `path` with its `.ids` sidecar.
    pub fn load_with_sidecar(path: &Path) -> Result<Self, EncodingError> {
        Self::load(path, &index_path_for(path))
    }

    pub fn save(&self, vector_path: &Path, index_path: &Path) -> Result<(), EncodingError> {
        write_vectors(vector_path, &self.raw)?;
        write_index(index_path, &self.ids)
    }

    pub fn save_with_sidecar(&self, path: &Path) -> Result<(), EncodingError> {
        self.save(path, &index_path_for(path))
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.raw.ncols()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, row: usize) -> &str {
        &self.ids[row]
    }

    pub fn row_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn raw(&self) -> ArrayView2<'_, f32> {
        self.raw.view()
    }

    pub fn raw_row(&self, row: usize) -> ArrayView1<'_, f32> {
        self.raw.row(row)
    }

    /// The normalized matrix; degenerate rows are zero.
    pub fn norm_matrix(&self) -> ArrayView2<'_, f64> {
        self.norm.view()
    }

    pub fn norm_row(&self, row: usize) -> ArrayView1<'_, f64> {
        self.norm.row(row)
    }

    pub fn is_degenerate(&self, row: usize) -> bool {
        self.degenerate[row]
    }

    pub fn degenerate_ids(&self) -> BTreeSet<&str> {
        self.ids
            .iter()
            .zip(&self.degenerate)
            .filter(|(_, d)| **d)
            .map(|(id, _)| id.as_str())
            .collect()
    }

    /// Copy restricted to `keep` (in the given order). Unknown ids are skipped.
    pub fn select<'a>(&self, keep: impl IntoIterator<Item = &'a str>) -> Self {
        let rows: Vec<usize> = keep.into_iter().filter_map(|id| self.row_of(id)).collect();
        let ids = rows.iter().map(|&r| self.ids[r].clone()).collect();
        let raw = self.raw.select(Axis(0), &rows);
        Self::new(ids, raw).expect("subset of a valid table is valid")
    }

    /// Applies `f` to every raw row (as `f64`) producing a table of `out_dim`.
    pub fn map_rows<F>(&self, out_dim: usize, mut f: F) -> Self
    where
        F: FnMut(usize, &[f64]) -> Vec<f64>,
    {
        let mut raw = Array2::<f32>::zeros((self.len(), out_dim));
        let mut buf = vec![0.0; self.dim()];
        for (i, row) in self.raw.axis_iter(Axis(0)).enumerate() {
            for (b, x) in buf.iter_mut().zip(row.iter()) {
                *b = f64::from(*x);
            }
            let out = f(i, &buf);
            assert_eq!(out.len(), out_dim, "map_rows output dimension");
            for (j, x) in out.into_iter().enumerate() {
                raw[[i, j]] = x as f32;
            }
        }
        Self::new(self.ids.clone(), raw).expect("same ids as a valid table")
    }
}

/// A text table and a vision table over (possibly different) item sets.
#[derive(Debug, Clone)]
pub struct ModalityBundle {
    pub text: EmbeddingTable,
    pub vision: EmbeddingTable,
}

impl ModalityBundle {
    pub fn new(text: EmbeddingTable, vision: EmbeddingTable) -> Self {
        Self { text, vision }
    }

    /// Item ids present in both tables, in text-table order.
    pub fn intersection(&self) -> Vec<&str> {
        self.text
            .ids()
            .iter()
            .map(String::as_str)
            .filter(|id| self.vision.contains(id))
            .collect()
    }

    /// Item ids present in either table: text order first, then vision-only ids.
    pub fn union(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self.text.ids().iter().map(String::as_str).collect();
        out.extend(
            self.vision
                .ids()
                .iter()
                .map(String::as_str)
                .filter(|id| !self.text.contains(id)),
        );
        out
    }

    /// Raw text and vision rows for `id` as `f64`.
    pub fn rows(&self, id: &str) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
        let fetch = |t: &EmbeddingTable| {
            t.row_of(id)
                .map(|r| t.raw_row(r).iter().map(|&x| f64::from(x)).collect())
        };
        (fetch(&self.text), fetch(&self.vision))
    }
}
