//! Experiment configuration, read from TOML. Relative paths resolve against
//! the directory holding the config file.
//!
//! ```toml
//! [data]
//! interactions = "interactions.tsv"   # TSV or JSONL log
//! eval_split = "validation"           # optional, default validation
//!
//! [embeddings]                        # vector files with .ids sidecars
//! grounded = "grounded.semv"
//! title = "title.semv"
//! vision = "vision.semv"
//!
//! [run]
//! variants = ["text-grounded", "text-title", "vision-only"]
//! baseline = "text-title"
//! l_max = 10
//! ks = [5, 10, 20]
//! mask_policy = "history"             # or "full-train"
//! coverage_subset = true
//! fused_dim = 384
//! seed = 42
//! out = "out"
//!
//! [training.contrastive]              # any TrainConfig field
//! epochs = 15
//! [training.bpr]
//! epochs = 20
//! [training.graph]
//! k = 10
//! layers = 2
//! ```
//!
//! The machine-readable schema is [`CONFIG_SCHEMA`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::variant::{TextSource, Variant};
use super::BenchError;
use crate::corpus::{Split, DEFAULT_L_MAX};
use crate::fusion::{GraphConfig, TrainConfig, DEFAULT_FUSED_DIM};
use crate::metrics::DEFAULT_KS;
use crate::retrieval::MaskPolicy;
use crate::util::sha256_hex;

/// JSON schema of the config structure.
pub const CONFIG_SCHEMA: &str = include_str!("config.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub interactions: PathBuf,
    #[serde(default = "default_eval_split")]
    pub eval_split: Split,
}

fn default_eval_split() -> Split {
    Split::Validation
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSources {
    pub grounded: Option<PathBuf>,
    pub title: Option<PathBuf>,
    pub vision: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub variants: Vec<Variant>,
    pub baseline: Option<Variant>,
    pub l_max: usize,
    pub ks: Vec<usize>,
    pub mask_policy: MaskPolicy,
    /// Evaluate only users with grounded items in both train and the
    /// evaluation split.
    pub coverage_subset: bool,
    pub fused_dim: usize,
    pub seed: u64,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            variants: Variant::standard_twelve(),
            baseline: Some(Variant::TextTitle),
            l_max: DEFAULT_L_MAX,
            ks: DEFAULT_KS.to_vec(),
            mask_policy: MaskPolicy::History,
            coverage_subset: true,
            fused_dim: DEFAULT_FUSED_DIM,
            seed: 42,
            out: PathBuf::from("out"),
        }
    }
}

/// Partial [`TrainConfig`]; unset fields keep the trainer's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub epochs: Option<usize>,
    pub learning_rate: Option<f64>,
    pub batch_size: Option<usize>,
    pub temperature: Option<f64>,
    pub negatives_per_positive: Option<usize>,
}

impl TrainOverrides {
    pub fn apply(&self, mut base: TrainConfig) -> TrainConfig {
        if let Some(v) = self.epochs {
            base.epochs = v;
        }
        if let Some(v) = self.learning_rate {
            base.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            base.batch_size = v;
        }
        if let Some(v) = self.temperature {
            base.temperature = v;
        }
        if let Some(v) = self.negatives_per_positive {
            base.negatives_per_positive = v;
        }
        base
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub contrastive: TrainOverrides,
    pub bpr: TrainOverrides,
    pub graph: GraphConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub embeddings: EmbeddingSources,
    #[serde(default)]
    pub run: RunConfig,
    #[serde(default)]
    pub training: TrainingSection,
    /// Directory relative paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, BenchError> {
        let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| BenchError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, BenchError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BenchError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("")).to_path_buf();
        Self::from_toml_str(&text, &base).map_err(|e| match e {
            BenchError::Config(m) => BenchError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    pub fn out_dir(&self) -> PathBuf {
        self.resolve(&self.run.out)
    }

    pub fn text_path(&self, source: TextSource) -> Option<&Path> {
        match source {
            TextSource::Grounded => self.embeddings.grounded.as_deref(),
            TextSource::Title => self.embeddings.title.as_deref(),
        }
    }

    pub fn contrastive(&self) -> TrainConfig {
        let mut c = self.training.contrastive.apply(TrainConfig::contrastive());
        c.seed = self.run.seed;
        c.l_max = self.run.l_max;
        c
    }

    pub fn bpr(&self) -> TrainConfig {
        let mut c = self.training.bpr.apply(TrainConfig::bpr());
        c.seed = self.run.seed;
        c.l_max = self.run.l_max;
        c
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.run.variants.is_empty() {
            return bad("run.variants is empty".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for v in &self.run.variants {
            if !seen.insert(*v) {
                return bad(format!("variant {v} listed twice"));
            }
            if let Some(src) = v.text_source() {
                if self.text_path(src).is_none() {
                    return bad(format!("variant {v} needs embeddings.{}", source_key(src)));
                }
            }
            if v.uses_vision() && self.embeddings.vision.is_none() {
                return bad(format!("variant {v} needs embeddings.vision"));
            }
        }
        if self.run.coverage_subset && self.embeddings.grounded.is_none() {
            return bad("run.coverage_subset needs embeddings.grounded".into());
        }
        if self.run.l_max == 0 {
            return bad("run.l_max must be at least 1".into());
        }
        if self.run.ks.is_empty() || self.run.ks.contains(&0) {
            return bad("run.ks must be non-empty positive integers".into());
        }
        if self.run.fused_dim == 0 {
            return bad("run.fused_dim must be positive".into());
        }
        if self.training.graph.layers == 0 || self.training.graph.k == 0 {
            return bad("training.graph k and layers must be at least 1".into());
        }
        for (name, c) in [("contrastive", self.contrastive()), ("bpr", self.bpr())] {
            c.validate().or_else(|e| bad(format!("training.{name}: {e}")))?;
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form of the effective config. The
    /// output directory is not part of it.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.run.out = PathBuf::new();
        sha256_hex(serde_json::to_string(&c).expect("config serializes").as_bytes())
    }
}

fn source_key(s: TextSource) -> &'static str {
    match s {
        TextSource::Grounded => "grounded",
        TextSource::Title => "title",
    }
}
