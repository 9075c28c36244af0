use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{build_knn_graph, propagate, DEFAULT_K, DEFAULT_LAYERS};
use super::loss::{bpr_loss, infonce_loss, BprTriple, ItemInputs};
use super::model::FusionModel;
use super::optim::Adam;
use super::{fuse_table, FusionError, FusionKind};
use crate::corpus::{user_history, InteractionLog, Recency, Split, DEFAULT_L_MAX};
use crate::encoding::{EmbeddingTable, ModalityBundle};
use crate::util::{derive_seed, seeded_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub temperature: f64,
    pub negatives_per_positive: usize,
    pub seed: u64,
    /// History window used to build pairs and user vectors.
    pub l_max: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::contrastive()
    }
}

impl TrainConfig {
    pub fn contrastive() -> Self {
        Self {
            epochs: 15,
            learning_rate: 1e-3,
            batch_size: 256,
            temperature: 0.07,
            negatives_per_positive: 1,
            seed: 42,
            l_max: DEFAULT_L_MAX,
        }
    }

    pub fn bpr() -> Self {
        Self {
            epochs: 20,
            ..Self::contrastive()
        }
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        let bad = |msg: &str| Err(FusionError::InvalidConfig(msg.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return bad("temperature must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.negatives_per_positive == 0 {
            return bad("negatives_per_positive must be at least 1");
        }
        if self.l_max == 0 {
            return bad("l_max must be at least 1");
        }
        Ok(())
    }
}

/// Per-epoch mean batch loss plus the size of the training set.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainingLog {
    pub epoch_losses: Vec<f64>,
    pub examples: usize,
    pub skipped: usize,
    pub batches_per_epoch: usize,
}

impl TrainingLog {
    /// Share of consecutive epoch pairs where the loss did not go up.
    pub fn non_increasing_fraction(&self) -> f64 {
        let pairs = self.epoch_losses.len().saturating_sub(1);
        if pairs == 0 {
            return 1.0;
        }
        let ok = self.epoch_losses.windows(2).filter(|w| w[1] <= w[0]).count();
        ok as f64 / pairs as f64
    }
}

/// Consecutive items of each user's last-`l_max` training history, as
/// `(anchor, positive)` id pairs, users in ascending id order.
pub fn contrastive_pairs(log: &InteractionLog, l_max: usize) -> Result<Vec<(String, String)>, FusionError> {
    let mut pairs = Vec::new();
    for user in log.users_in(Split::Train) {
        let h = user_history(log, user, l_max, Recency::Timestamp)
            .map_err(|e| FusionError::InvalidConfig(e.to_string()))?;
        pairs.extend(h.items.windows(2).map(|w| (w[0].clone(), w[1].clone())));
    }
    Ok(pairs)
}

fn check_loss(loss: f64, epoch: usize, batch: usize, what: &str) -> Result<(), FusionError> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(FusionError::NonFiniteLoss {
            epoch,
            batch,
            detail: format!("{what} loss = {loss}"),
        })
    }
}

/// InfoNCE training of a gating or attention model. Pairs whose items lack
/// either modality are skipped and counted.
pub fn train_contrastive(
    model: &FusionModel,
    bundle: &ModalityBundle,
    log: &InteractionLog,
    cfg: &TrainConfig,
) -> Result<(FusionModel, TrainingLog), FusionError> {
    cfg.validate()?;
    if !matches!(model.kind, FusionKind::Gating | FusionKind::Attention) {
        return Err(FusionError::NotTrainable {
            kind: model.kind,
            trainer: "InfoNCE",
        });
    }
    let raw_pairs = contrastive_pairs(log, cfg.l_max)?;
    let both: BTreeSet<&str> = bundle.intersection().into_iter().collect();
    let mut index: BTreeMap<&str, usize> = BTreeMap::new();
    let mut ids: Vec<String> = Vec::new();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    let mut skipped = 0;
    for (a, p) in &raw_pairs {
        if !both.contains(a.as_str()) || !both.contains(p.as_str()) {
            skipped += 1;
            continue;
        }
        let mut slot = |id: &str| {
            *index.entry(both.get(id).copied().unwrap()).or_insert_with(|| {
                ids.push(id.to_string());
                ids.len() - 1
            })
        };
        let (ia, ip) = (slot(a), slot(p));
        pairs.push((ia, ip));
    }
    if pairs.is_empty() {
        return Err(FusionError::NoTrainingData(format!(
            "no co-interacted pairs with both modalities ({skipped} skipped)"
        )));
    }
    let inputs = ItemInputs::from_bundle(bundle, &ids);

    let mut params = model.params.clone();
    let mut opt = Adam::new(params.len(), cfg.learning_rate);
    let mut rng = seeded_rng(derive_seed(cfg.seed, "infonce-shuffle"));
    let mut log_out = TrainingLog {
        examples: pairs.len(),
        skipped,
        batches_per_epoch: pairs.len().div_ceil(cfg.batch_size),
        ..TrainingLog::default()
    };
    let mut order = pairs.clone();
    let mut grad = vec![0.0; params.len()];
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = infonce_loss(model, &params, &inputs, batch, cfg.temperature, Some(&mut grad));
            check_loss(loss, epoch, b, "InfoNCE")?;
            opt.step(&mut params, &grad);
            total += loss;
        }
        log_out.epoch_losses.push(total / log_out.batches_per_epoch as f64);
        log::debug!("infonce epoch {epoch}: {:.6}", log_out.epoch_losses[epoch]);
    }
    Ok((model.clone().with_params(params)?, log_out))
}

/// BPR training of additive item deltas on top of `table`'s normalized rows.
/// Negatives are drawn uniformly from catalog items outside the user's train
/// set.
pub fn train_bpr(
    table: &EmbeddingTable,
    log: &InteractionLog,
    cfg: &TrainConfig,
) -> Result<(EmbeddingTable, TrainingLog), FusionError> {
    cfg.validate()?;
    let n = table.len();
    let dim = table.dim();
    let base: Vec<f64> = table.norm_matrix().iter().copied().collect();

    let mut histories: Vec<Vec<usize>> = Vec::new();
    let mut positives: Vec<(usize, usize)> = Vec::new();
    let mut seen: Vec<BTreeSet<usize>> = Vec::new();
    let mut skipped = 0;
    for user in log.users_in(Split::Train) {
        let h = user_history(log, user, cfg.l_max, Recency::Timestamp)
            .map_err(|e| FusionError::InvalidConfig(e.to_string()))?;
        let hist: Vec<usize> = h.items.iter().filter_map(|id| table.row_of(id)).collect();
        let train: BTreeSet<usize> = log
            .items_of(user, Split::Train)
            .into_iter()
            .filter_map(|id| table.row_of(id))
            .collect();
        if hist.is_empty() || train.len() >= n {
            skipped += 1;
            continue;
        }
        let u = histories.len();
        positives.extend(train.iter().map(|&p| (u, p)));
        histories.push(hist);
        seen.push(train);
    }
    if positives.is_empty() {
        return Err(FusionError::NoTrainingData("no user has a trainable history".into()));
    }

    let mut delta = vec![0.0; n * dim];
    let mut opt = Adam::new(delta.len(), cfg.learning_rate);
    let mut rng = seeded_rng(derive_seed(cfg.seed, "bpr-sampling"));
    let n_triples = positives.len() * cfg.negatives_per_positive;
    let mut log_out = TrainingLog {
        examples: n_triples,
        skipped,
        batches_per_epoch: n_triples.div_ceil(cfg.batch_size),
        ..TrainingLog::default()
    };
    let mut grad = vec![0.0; delta.len()];
    for epoch in 0..cfg.epochs {
        let mut triples = Vec::with_capacity(n_triples);
        for &(user, pos) in &positives {
            for _ in 0..cfg.negatives_per_positive {
                let neg = loop {
                    let c = rng.random_range(0..n);
                    if !seen[user].contains(&c) {
                        break c;
                    }
                };
                triples.push(BprTriple { user, pos, neg });
            }
        }
        triples.shuffle(&mut rng);
        let mut total = 0.0;
        for (b, batch) in triples.chunks(cfg.batch_size).enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let loss = bpr_loss(&base, &delta, dim, &histories, batch, Some(&mut grad));
            check_loss(loss, epoch, b, "BPR")?;
            opt.step(&mut delta, &grad);
            total += loss;
        }
        log_out.epoch_losses.push(total / log_out.batches_per_epoch as f64);
        log::debug!("bpr epoch {epoch}: {:.6}", log_out.epoch_losses[epoch]);
    }
    let rows: Vec<Vec<f64>> = base
        .chunks_exact(dim)
        .zip(delta.chunks_exact(dim))
        .map(|(b, d)| b.iter().zip(d).map(|(x, y)| x + y).collect())
        .collect();
    Ok((EmbeddingTable::from_rows(table.ids().to_vec(), &rows)?, log_out))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GraphConfig {
    pub k: usize,
    pub layers: usize,
}

impl Default for GraphConfig {
    fn default() -> Self {
        Self {
            k: DEFAULT_K,
            layers: DEFAULT_LAYERS,
        }
    }
}

/// Graph baseline: concatenated normalized modalities, kNN propagation,
/// then BPR item deltas.
pub fn smore_lite(
    bundle: &ModalityBundle,
    log: &InteractionLog,
    graph: &GraphConfig,
    cfg: &TrainConfig,
) -> Result<(EmbeddingTable, TrainingLog), FusionError> {
    let concat = FusionModel::new(FusionKind::Concat, bundle.text.dim(), bundle.vision.dim(), 1, cfg.seed)?;
    let (base, _) = fuse_table(&concat, bundle)?;
    let g = build_knn_graph(&base, graph.k)?;
    let propagated = propagate(&base, &g, graph.layers)?;
    train_bpr(&propagated, log, cfg)
}
