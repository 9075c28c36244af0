//! Mean-pool profiles, matrix cosine scoring and masked top-K selection.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::corpus::{InteractionLog, Split, UserHistory};
use crate::encoding::{EmbeddingTable, NORM_EPSILON};

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("user {user_id:?} has no usable history rows")]
    ColdProfile { user_id: String },
    #[error("dimension mismatch: profile {profile}, table {table}")]
    DimMismatch { profile: usize, table: usize },
    #[error("mask covers every candidate for user {user_id:?}")]
    EmptyCandidateSet { user_id: String },
    #[error("K must be at least 1")]
    InvalidK,
    #[error("io error on {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Which items are removed from a user's candidate set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskPolicy {
    /// Only the truncated history used for the profile.
    #[default]
    History,
    /// Every training item of the user.
    FullTrain,
}

impl std::str::FromStr for MaskPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "history" => Ok(Self::History),
            "full-train" | "mask_full_train_history" => Ok(Self::FullTrain),
            other => Err(format!("unknown mask policy {other:?} (history | full-train)")),
        }
    }
}

/// The mask for `history` under `policy`.
pub fn build_mask(log: &InteractionLog, history: &UserHistory, policy: MaskPolicy) -> BTreeSet<String> {
    match policy {
        MaskPolicy::History => history.items.iter().cloned().collect(),
        MaskPolicy::FullTrain => log
            .items_of(&history.user_id, Split::Train)
            .into_iter()
            .map(String::from)
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UserProfile {
    pub user_id: String,
    /// Unit-norm preference vector.
    pub vector: Vec<f64>,
    /// History items that contributed a row.
    pub source_items: Vec<String>,
    /// History items absent from the table.
    pub missing_items: Vec<String>,
    /// History items present but with a zero row.
    pub degenerate_items: Vec<String>,
}

/// Normalized mean of the normalized rows of the usable history items.
pub fn build_profile(history: &UserHistory, table: &EmbeddingTable) -> Result<UserProfile, RetrievalError> {
    let mut acc = Array1::<f64>::zeros(table.dim());
    let mut source_items = Vec::new();
    let mut missing_items = Vec::new();
    let mut degenerate_items = Vec::new();
    for item in &history.items {
        match table.row_of(item) {
            None => missing_items.push(item.clone()),
            Some(r) if table.is_degenerate(r) => degenerate_items.push(item.clone()),
            Some(r) => {
                acc += &table.norm_row(r);
                source_items.push(item.clone());
            }
        }
    }
    let cold = || RetrievalError::ColdProfile {
        user_id: history.user_id.clone(),
    };
    if source_items.is_empty() {
        return Err(cold());
    }
    acc /= source_items.len() as f64;
    let norm = acc.dot(&acc).sqrt();
    if norm <= NORM_EPSILON {
        return Err(cold());
    }
    acc /= norm;
    Ok(UserProfile {
        user_id: history.user_id.clone(),
        vector: acc.to_vec(),
        source_items,
        missing_items,
        degenerate_items,
    })
}

/// Cosine score of every catalog row: the normalized table times the profile.
pub fn score_all(profile: &UserProfile, table: &EmbeddingTable) -> Result<Array1<f64>, RetrievalError> {
    if profile.vector.len() != table.dim() {
        return Err(RetrievalError::DimMismatch {
            profile: profile.vector.len(),
            table: table.dim(),
        });
    }
    Ok(table.norm_matrix().dot(&ArrayView1::from(&profile.vector)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Recommendation {
    pub user_id: String,
    pub ranked: Vec<(String, f64)>,
    pub k: usize,
}

impl Recommendation {
    pub fn items(&self) -> Vec<&str> {
        self.ranked.iter().map(|(id, _)| id.as_str()).collect()
    }
}

/// Descending score, then ascending item id.
pub fn rank_order(a: (&str, f64), b: (&str, f64)) -> Ordering {
    b.1.partial_cmp(&a.1)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.0.cmp(b.0))
}

/// The `k` best unmasked items for `profile`.
pub fn recommend_topk(
    profile: &UserProfile,
    table: &EmbeddingTable,
    mask: &BTreeSet<String>,
    k: usize,
) -> Result<Recommendation, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::InvalidK);
    }
    let scores = score_all(profile, table)?;
    let mut candidates: Vec<(usize, f64)> = scores
        .iter()
        .enumerate()
        .filter(|(row, _)| !mask.contains(table.id(*row)))
        .map(|(row, s)| (row, *s))
        .collect();
    if candidates.is_empty() {
        return Err(RetrievalError::EmptyCandidateSet {
            user_id: profile.user_id.clone(),
        });
    }
    let cmp = |a: &(usize, f64), b: &(usize, f64)| rank_order((table.id(a.0), a.1), (table.id(b.0), b.1));
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, cmp);
        candidates.truncate(k);
    }
    candidates.sort_by(cmp);
    Ok(Recommendation {
        user_id: profile.user_id.clone(),
        ranked: candidates
            .into_iter()
            .map(|(row, s)| (table.id(row).to_string(), s.clamp(-1.0, 1.0)))
            .collect(),
        k,
    })
}

/// One line of a recommendations JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationLine {
    pub user_id: String,
    pub items: Vec<String>,
    pub scores: Vec<f64>,
    pub k: usize,
    pub variant: String,
}

impl RecommendationLine {
    pub fn new(rec: &Recommendation, variant: &str) -> Self {
        Self {
            user_id: rec.user_id.clone(),
            items: rec.ranked.iter().map(|(i, _)| i.clone()).collect(),
            scores: rec.ranked.iter().map(|(_, s)| *s).collect(),
            k: rec.k,
            variant: variant.to_string(),
        }
    }
}

pub fn write_recommendations(path: &Path, recs: &[Recommendation], variant: &str) -> Result<(), RetrievalError> {
    let mut buf = Vec::new();
    for rec in recs {
        serde_json::to_writer(&mut buf, &RecommendationLine::new(rec, variant)).expect("serializable");
        buf.push(b'\n');
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(&buf))
        .map_err(|source| RetrievalError::Io {
            path: path.to_path_buf(),
            source,
        })
}

pub fn read_recommendations(path: &Path) -> Result<Vec<RecommendationLine>, RetrievalError> {
    let text = std::fs::read_to_string(path).map_err(|source| RetrievalError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            serde_json::from_str(l).map_err(|e| RetrievalError::Io {
                path: path.to_path_buf(),
                source: std::io::Error::new(std::io::ErrorKind::InvalidData, e),
            })
        })
        .collect()
}
