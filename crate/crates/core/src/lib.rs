//! Semantic item representations for retrieval-based recommendation.
//!
//! The crate covers the whole offline/online split of a content-based
//! recommender that ranks items by cosine similarity to a mean-pooled user
//! profile:
//!
//! - [`corpus`] loads implicit-feedback logs and builds truncated histories.
//! - [`grounding`] turns item images into text descriptions through a
//!   text-generation service and keeps them in a persistent cache.
//! - [`encoding`] turns descriptions (or precomputed vectors) into an
//!   immutable, L2-normalized [`encoding::EmbeddingTable`].
//! - [`fusion`] combines a text and a vision table (concat, average, gating,
//!   attention, kNN-graph propagation) and holds the InfoNCE/BPR trainers.
//! - [`retrieval`] builds profiles, scores the catalog and selects top-K.
//! - [`metrics`] computes Recall/NDCG/Hit at K.
//! - [`bench`] runs whole experiments from a config file, generates
//!   synthetic data and checks the engine against a brute-force oracle.
//!
//! All numeric work is deterministic for a fixed seed; parallel sections
//! never change any emitted byte.

pub mod bench;
pub mod corpus;
pub mod encoding;
pub mod fusion;
pub mod grounding;
pub mod metrics;
pub mod retrieval;
pub mod service;

pub(crate) mod util;

pub use corpus::{InteractionLog, Split, UserHistory};
pub use encoding::{normalize, EmbeddingTable, ModalityBundle};
pub use fusion::{FusionKind, FusionModel, TrainConfig};
pub use metrics::{GroundTruth, MetricReport};
pub use retrieval::{MaskPolicy, Recommendation, UserProfile};
