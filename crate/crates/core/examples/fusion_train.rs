//! Trains gating and attention fusion with InfoNCE on clustered two-modality
//! data and compares retrieval against the untrained operators.
//!
//! cargo run --release --example fusion_train

use semrec::bench::{generate_multimodal, recommend_users, SyntheticSpec};
use semrec::fusion::{fuse_table, train_contrastive, FusionKind, FusionModel, TrainConfig};
use semrec::metrics::{evaluate_run, Metric};
use semrec::MaskPolicy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = SyntheticSpec { dim: 16, ..SyntheticSpec::default() };
    let (log, bundle, truth) = generate_multimodal(&spec, 24)?;
    let users: Vec<String> = truth.per_user.keys().cloned().collect();
    let cfg = TrainConfig { epochs: 10, learning_rate: 5e-3, batch_size: 64, ..TrainConfig::contrastive() };

    for kind in [FusionKind::Concat, FusionKind::Average, FusionKind::Gating, FusionKind::Attention] {
        let model = FusionModel::new(kind, bundle.text.dim(), bundle.vision.dim(), 16, 7)?;
        let (model, note) = if matches!(kind, FusionKind::Gating | FusionKind::Attention) {
            let (trained, log) = train_contrastive(&model, &bundle, &log, &cfg)?;
            let first = log.epoch_losses.first().copied().unwrap_or(f64::NAN);
            let last = log.epoch_losses.last().copied().unwrap_or(f64::NAN);
            (trained, format!("loss {first:.4} -> {last:.4} over {} pairs", log.examples))
        } else {
            (model, "no parameters trained".to_string())
        };
        let (table, _) = fuse_table(&model, &bundle)?;
        let batch = recommend_users(&log, &table, &users, 10, MaskPolicy::History, 10)?;
        let recall = evaluate_run(&kind.to_string(), &batch.recs, &truth, &[10]).mean(Metric::Recall, 10).unwrap();
        println!("{:<9} Recall@10 {recall:.4}  ({note})", kind.to_string());
    }
    Ok(())
}
