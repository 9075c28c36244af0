//! Fusion operators over a text table and a vision table, the kNN-graph
//! baseline, and their trainers.
//!
//! | kind        | output width         | trainable            |
//! |-------------|----------------------|----------------------|
//! | `concat`    | `d_text + d_vision`  | no                   |
//! | `average`   | `d` (default 384)    | no (fixed random projection of vision) |
//! | `gating`    | `d`                  | InfoNCE              |
//! | `attention` | `d`                  | InfoNCE              |
//! | `graph`     | `d_text + d_vision`  | BPR item deltas after kNN propagation |
//!
//! Gating computes `g = σ(W_g [W_t t; W_v v] + b)` and mixes
//! `g ⊙ W_t t + (1 − g) ⊙ W_v v`. Attention scores each projected modality
//! with `wᵀ tanh(W_m x_m)` and mixes the projections by the softmax of the
//! two scores.

mod gradcheck;
mod graph;
mod io;
mod loss;
mod model;
mod optim;
mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::encoding::{EmbeddingTable, ModalityBundle};

pub use gradcheck::{gradient_check, BprObjective, InfoNceObjective, LossKind, Objective};
pub use graph::{build_knn_graph, propagate, spectral_radius_estimate, KnnGraph, DEFAULT_K, DEFAULT_LAYERS};
pub use io::{load_model, save_model, ModelManifest};
pub use loss::{bpr_loss, infonce_loss, BprTriple, ItemInputs};
pub use model::{FusionModel, ParamSlice, DEFAULT_FUSED_DIM};
pub use optim::Adam;
pub use train::{
    contrastive_pairs, smore_lite, train_bpr, train_contrastive, GraphConfig, TrainConfig, TrainingLog,
};

#[derive(Debug, thiserror::Error)]
pub enum FusionError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimMismatch { expected: usize, got: usize },
    #[error("item has neither a text nor a vision vector")]
    MissingModalities,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("{kind} fusion cannot be trained with {trainer}")]
    NotTrainable { kind: FusionKind, trainer: &'static str },
    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss { epoch: usize, batch: usize, detail: String },
    #[error("kNN graph needs more than k={k} items, got {n}")]
    TooFewItems { n: usize, k: usize },
    #[error("no training signal: {0}")]
    NoTrainingData(String),
    #[error(transparent)]
    Encoding(#[from] crate::encoding::EncodingError),
    #[error("io error on {path}: {detail}")]
    Io { path: std::path::PathBuf, detail: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionKind {
    Concat,
    Average,
    Gating,
    Attention,
    Graph,
}

impl fmt::Display for FusionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FusionKind::Concat => "concat",
            FusionKind::Average => "average",
            FusionKind::Gating => "gating",
            FusionKind::Attention => "attention",
            FusionKind::Graph => "graph",
        })
    }
}

impl FromStr for FusionKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "concat" => FusionKind::Concat,
            "average" => FusionKind::Average,
            "gating" => FusionKind::Gating,
            "attention" => FusionKind::Attention,
            "graph" | "smore-lite" => FusionKind::Graph,
            other => return Err(format!("unknown fusion kind {other:?}")),
        })
    }
}

/// `F(v, t)` for one item.
pub fn fuse_forward(model: &FusionModel, t: Option<&[f64]>, v: Option<&[f64]>) -> Result<Vec<f64>, FusionError> {
    model.forward(t, v)
}

/// Counts reported by [`fuse_table`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct FuseReport {
    pub items: usize,
    pub missing_text: usize,
    pub missing_vision: usize,
}

/// Fuses every item of the bundle (union of both tables). Inputs are the
/// L2-normalized rows of each modality.
pub fn fuse_table(model: &FusionModel, bundle: &ModalityBundle) -> Result<(EmbeddingTable, FuseReport), FusionError> {
    let ids: Vec<String> = bundle.union().into_iter().map(String::from).collect();
    let inputs = ItemInputs::from_bundle(bundle, &ids);
    let mut report = FuseReport {
        items: ids.len(),
        ..FuseReport::default()
    };
    let mut rows = Vec::with_capacity(ids.len());
    for inp in &inputs {
        report.missing_text += usize::from(inp.text.is_none());
        report.missing_vision += usize::from(inp.vision.is_none());
        rows.push(model.forward(inp.text.as_deref(), inp.vision.as_deref())?);
    }
    Ok((EmbeddingTable::from_rows(ids, &rows)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fuse_table_covers_union_and_flags_missing() {
        let t = EmbeddingTable::from_rows(vec!["a".into(), "b".into()], &[vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        let v = EmbeddingTable::from_rows(vec!["b".into(), "c".into()], &[vec![3.0], vec![-1.0]]).unwrap();
        let m = FusionModel::new(FusionKind::Concat, 2, 1, 2, 0).unwrap();
        let (table, report) = fuse_table(&m, &ModalityBundle::new(t, v)).unwrap();
        assert_eq!(table.ids(), ["a", "b", "c"]);
        assert_eq!(report.missing_text, 1);
        assert_eq!(report.missing_vision, 1);
        assert_eq!(table.raw_row(1).to_vec(), vec![0.0, 1.0, 1.0]);
        assert_eq!(table.raw_row(2).to_vec(), vec![0.0, 0.0, -1.0]);
    }

    #[test]
    fn kind_round_trips_through_strings() {
        for k in [
            FusionKind::Concat,
            FusionKind::Average,
            FusionKind::Gating,
            FusionKind::Attention,
            FusionKind::Graph,
        ] {
            assert_eq!(k.to_string().parse::<FusionKind>().unwrap(), k);
        }
    }
}
