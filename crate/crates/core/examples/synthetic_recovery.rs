//! Mean-pool retrieval on clustered synthetic data, against a random ranker,
//! and under progressively truncated representations.
//!
//! cargo run --release --example synthetic_recovery -- [dim]

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use semrec::bench::{degrade_representation, generate_synthetic, recommend_users, Degradation, SyntheticSpec};
use semrec::metrics::{evaluate_run, Metric};
use semrec::retrieval::Recommendation;
use semrec::MaskPolicy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dim: usize = std::env::args().nth(1).map_or(Ok(SyntheticSpec::default().dim), |a| a.parse())?;
    let seeds = 0..5u64;
    let mut engine = 0.0;
    let mut random = 0.0;
    let levels = [dim, (dim / 4).max(1), (dim / 16).max(1)];
    let mut by_level = vec![0.0; levels.len()];
    for seed in seeds.clone() {
        let spec = SyntheticSpec { seed, dim, ..SyntheticSpec::default() };
        let (log, table, truth) = generate_synthetic(&spec)?;
        let users: Vec<String> = truth.per_user.keys().cloned().collect();
        let batch = recommend_users(&log, &table, &users, 10, MaskPolicy::History, 10)?;
        engine += evaluate_run("engine", &batch.recs, &truth, &[10]).mean(Metric::Recall, 10).unwrap();

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shuffled: Vec<Recommendation> = users
            .iter()
            .map(|u| {
                let mut ids = table.ids().to_vec();
                ids.shuffle(&mut rng);
                Recommendation { user_id: u.clone(), ranked: ids.into_iter().take(10).map(|i| (i, 0.0)).collect(), k: 10 }
            })
            .collect();
        random += evaluate_run("random", &shuffled, &truth, &[10]).mean(Metric::Recall, 10).unwrap();

        for (slot, &dims) in by_level.iter_mut().zip(&levels) {
            let t = degrade_representation(&table, Degradation::TruncateDims(dims), seed)?;
            let b = recommend_users(&log, &t, &users, 10, MaskPolicy::History, 10)?;
            *slot += evaluate_run("trunc", &b.recs, &truth, &[10]).mean(Metric::Recall, 10).unwrap();
        }
    }
    let n = seeds.count() as f64;
    println!("mean-pool Recall@10  {:.4}", engine / n);
    println!("random    Recall@10  {:.4}  (K/|I| = {:.4})", random / n, 10.0 / 300.0);
    for (dims, r) in levels.iter().zip(&by_level) {
        println!("truncated to {dims:>3} dims  Recall@10 {:.4}", r / n);
    }
    Ok(())
}
