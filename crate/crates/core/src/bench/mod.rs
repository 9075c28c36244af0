//! Config-driven experiment runs, synthetic data, and the brute-force
//! reference ranker used to check the retrieval engine.

mod config;
mod oracle;
mod run;
mod synthetic;
mod variant;

pub use config::{
    DataConfig, EmbeddingSources, ExperimentConfig, RunConfig, TrainOverrides, TrainingSection, CONFIG_SCHEMA,
};
pub use oracle::{brute_force_oracle, degrade_representation, Degradation};
pub use run::{
    bars_csv, build_variant, evaluate_variant, evaluation_truth, heatmap_csv, profile_csv, recommend_users,
    run_experiment, variant_seed, Inputs, RunManifest, RunSummary, UserBatch, VariantTable,
};
pub use synthetic::{cluster_members, generate_multimodal, generate_synthetic, SyntheticSpec};
pub use variant::{Representation, TextSource, Variant};

/// Exit status for configuration problems.
pub const EXIT_CONFIG: i32 = 2;
/// Exit status for unreadable or inconsistent data.
pub const EXIT_DATA: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
}

impl BenchError {
    pub fn exit_code(&self) -> i32 {
        match self {
            BenchError::Config(_) => EXIT_CONFIG,
            BenchError::Data(_) => EXIT_DATA,
        }
    }
}
