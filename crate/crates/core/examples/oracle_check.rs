//! Checks the retrieval engine against the brute-force ranker on random
//! synthetic datasets with many exact score ties.
//!
//! cargo run --example oracle_check

use semrec::bench::{brute_force_oracle, generate_synthetic, recommend_users, SyntheticSpec};
use semrec::MaskPolicy;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for (seed, noise) in [(0, 0.05), (1, 0.0), (2, 0.5)] {
        let spec = SyntheticSpec { n_users: 50, n_items: 200, dim: 16, noise, seed, ..SyntheticSpec::default() };
        let (log, table, truth) = generate_synthetic(&spec)?;
        let users: Vec<String> = truth.per_user.keys().cloned().collect();
        for k in [1, 5, 10, 20] {
            let batch = recommend_users(&log, &table, &users, 10, MaskPolicy::History, k)?;
            let oracle = brute_force_oracle(&batch.profiles, &table, &batch.masks, k);
            let same = batch.recs.iter().zip(&oracle).filter(|(a, b)| a.items() == b.items()).count();
            println!("seed {seed} noise {noise:<4} K={k:<2} {same}/{} identical", batch.recs.len());
        }
    }
    Ok(())
}
