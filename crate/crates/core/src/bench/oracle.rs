use std::collections::BTreeSet;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::encoding::EmbeddingTable;
use crate::retrieval::{rank_order, Recommendation, UserProfile};
use crate::util::{derive_seed, seeded_rng};

/// Top-K by an explicit cosine loop over raw rows and a full sort.
/// `masks[u]` belongs to `profiles[u]`.
pub fn brute_force_oracle(
    profiles: &[UserProfile],
    table: &EmbeddingTable,
    masks: &[BTreeSet<String>],
    k: usize,
) -> Vec<Recommendation> {
    assert_eq!(profiles.len(), masks.len(), "one mask per profile");
    profiles
        .iter()
        .zip(masks)
        .map(|(p, mask)| {
            let p_norm = p.vector.iter().map(|x| x * x).sum::<f64>().sqrt();
            let mut scored: Vec<(String, f64)> = Vec::new();
            for row in 0..table.len() {
                let id = table.id(row);
                if mask.contains(id) {
                    continue;
                }
                let mut num = 0.0;
                let mut sq = 0.0;
                for (a, &b) in p.vector.iter().zip(table.raw_row(row).iter()) {
                    let b = f64::from(b);
                    num += a * b;
                    sq += b * b;
                }
                let denom = p_norm * sq.sqrt();
                let cos = if denom > 0.0 { num / denom } else { 0.0 };
                scored.push((id.to_string(), cos));
            }
            scored.sort_by(|a, b| rank_order((&a.0, a.1), (&b.0, b.1)));
            scored.truncate(k);
            Recommendation {
                user_id: p.user_id.clone(),
                ranked: scored,
                k,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode", content = "level")]
pub enum Degradation {
    /// Keep the leading `n` dimensions.
    TruncateDims(usize),
    /// Add i.i.d. Gaussian noise with this standard deviation to raw rows.
    AddNoise(f64),
}

pub fn degrade_representation(table: &EmbeddingTable, mode: Degradation, seed: u64) -> Result<EmbeddingTable, BenchError> {
    match mode {
        Degradation::TruncateDims(n) => {
            if n == 0 || n > table.dim() {
                return Err(BenchError::Config(format!(
                    "cannot truncate {}-dim table to {n} dims",
                    table.dim()
                )));
            }
            if n == table.dim() {
                return Ok(table.clone());
            }
            Ok(table.map_rows(n, |_, row| row[..n].to_vec()))
        }
        Degradation::AddNoise(sigma) => {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(BenchError::Config(format!("noise level must be >= 0, got {sigma}")));
            }
            if sigma == 0.0 {
                return Ok(table.clone());
            }
            let mut rng = seeded_rng(derive_seed(seed, "degrade-noise"));
            let normal = Normal::new(0.0, sigma).expect("checked sigma");
            Ok(table.map_rows(table.dim(), |_, row| {
                row.iter().map(|x| x + normal.sample(&mut rng)).collect()
            }))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> EmbeddingTable {
        EmbeddingTable::from_rows(
            vec!["a".into(), "b".into(), "c".into(), "d".into()],
            &[vec![1.0, 0.0, 0.5], vec![1.0, 0.0, 0.5], vec![0.0, 1.0, 0.0], vec![0.3, 0.3, 0.3]],
        )
        .unwrap()
    }

    fn profile(v: Vec<f64>) -> UserProfile {
        UserProfile {
            user_id: "u".into(),
            vector: v,
            source_items: vec![],
            missing_items: vec![],
            degenerate_items: vec![],
        }
    }

    #[test]
    fn k1_is_the_argmax() {
        let recs = brute_force_oracle(&[profile(vec![0.0, 1.0, 0.0])], &table(), &[BTreeSet::new()], 1);
        assert_eq!(recs[0].items(), ["c"]);
    }

    #[test]
    fn equal_scores_fall_back_to_id_order() {
        let t = EmbeddingTable::from_rows(
            vec!["z".into(), "m".into(), "a".into()],
            &[vec![1.0, 1.0], vec![2.0, 2.0], vec![0.5, 0.5]],
        )
        .unwrap();
        let recs = brute_force_oracle(&[profile(vec![1.0, 1.0])], &t, &[BTreeSet::new()], 3);
        assert_eq!(recs[0].items(), ["a", "m", "z"]);
    }

    #[test]
    fn identity_degradations() {
        let t = table();
        assert_eq!(degrade_representation(&t, Degradation::TruncateDims(3), 0).unwrap(), t);
        assert_eq!(degrade_representation(&t, Degradation::AddNoise(0.0), 0).unwrap(), t);
        assert_eq!(degrade_representation(&t, Degradation::TruncateDims(1), 0).unwrap().dim(), 1);
        assert!(degrade_representation(&t, Degradation::TruncateDims(4), 0).is_err());
        assert!(degrade_representation(&t, Degradation::AddNoise(-0.1), 0).is_err());
        assert_ne!(degrade_representation(&t, Degradation::AddNoise(0.1), 0).unwrap(), t);
    }
}
