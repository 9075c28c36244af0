//! Clustered synthetic catalogs with a known preference structure.
//!
//! Items are spread round-robin over `n_clusters` centers drawn uniformly on
//! the unit sphere; each item vector is its center plus per-coordinate
//! Gaussian noise, L2-normalized. Every user gets a home cluster and an
//! anchor item in it. The train history is the anchor's nearest
//! cluster-mates (ties by id, anchor included) in shuffled order, and the
//! held-out truth is the next nearest ones.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::BenchError;
use crate::corpus::{Interaction, InteractionLog, Split};
use crate::encoding::{normalize, EmbeddingTable, ModalityBundle};
use crate::metrics::GroundTruth;
use crate::retrieval::rank_order;
use crate::util::{derive_seed, dot, seeded_rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_users: usize,
    pub n_items: usize,
    pub n_clusters: usize,
    pub dim: usize,
    pub noise: f64,
    /// Train interactions per user.
    pub interactions_per_user: usize,
    /// Held-out (validation) items per user.
    pub holdout_per_user: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_users: 100,
            n_items: 300,
            n_clusters: 3,
            dim: 16,
            noise: 0.05,
            interactions_per_user: 5,
            holdout_per_user: 5,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: String| Err(BenchError::Config(m));
        if self.n_clusters == 0 || self.n_clusters > self.n_items {
            return bad(format!("need 1 <= n_clusters <= n_items, got {} and {}", self.n_clusters, self.n_items));
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad(format!("noise must be >= 0, got {}", self.noise));
        }
        if self.dim == 0 || self.n_users == 0 {
            return bad("dim and n_users must be positive".into());
        }
        if self.interactions_per_user == 0 || self.holdout_per_user == 0 {
            return bad("every user needs at least one train and one held-out item".into());
        }
        let smallest = self.n_items / self.n_clusters;
        if self.interactions_per_user + self.holdout_per_user > smallest {
            return bad(format!(
                "{} interactions per user do not fit in clusters of {smallest} items",
                self.interactions_per_user + self.holdout_per_user
            ));
        }
        Ok(())
    }

    pub fn item_id(i: usize) -> String {
        format!("item{i:05}")
    }

    pub fn user_id(u: usize) -> String {
        format!("user{u:04}")
    }

    pub fn cluster_of(&self, item: usize) -> usize {
        item % self.n_clusters
    }
}

fn unit_gaussian(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        if dot(&v, &v) > 0.0 {
            return normalize(&v);
        }
    }
}

fn cluster_centers(spec: &SyntheticSpec, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeded_rng(seed);
    (0..spec.n_clusters).map(|_| unit_gaussian(spec.dim, &mut rng)).collect()
}

fn noisy_items(spec: &SyntheticSpec, centers: &[Vec<f64>], seed: u64) -> Vec<Vec<f64>> {
    let mut rng = seeded_rng(seed);
    let noise = Normal::new(0.0, spec.noise).expect("validated sigma");
    (0..spec.n_items)
        .map(|i| {
            let c = &centers[spec.cluster_of(i)];
            normalize(&c.iter().map(|x| x + noise.sample(&mut rng)).collect::<Vec<_>>())
        })
        .collect()
}

fn interactions(spec: &SyntheticSpec, items: &[Vec<f64>]) -> Vec<Interaction> {
    let mut rng = seeded_rng(derive_seed(spec.seed, "synthetic-users"));
    let ids: Vec<String> = (0..spec.n_items).map(SyntheticSpec::item_id).collect();
    let per_user = spec.interactions_per_user + spec.holdout_per_user;
    let mut raw = Vec::with_capacity(spec.n_users * per_user);
    for u in 0..spec.n_users {
        let home = rng.random_range(0..spec.n_clusters);
        let members: Vec<usize> = (0..spec.n_items).filter(|&i| spec.cluster_of(i) == home).collect();
        let anchor = members[rng.random_range(0..members.len())];
        let mut near: Vec<(usize, f64)> = members.iter().map(|&i| (i, dot(&items[anchor], &items[i]))).collect();
        near.sort_by(|a, b| rank_order((&ids[a.0], a.1), (&ids[b.0], b.1)));
        let mut chosen: Vec<usize> = near.iter().take(per_user).map(|&(i, _)| i).collect();
        chosen[..spec.interactions_per_user].shuffle(&mut rng);
        for (step, &item) in chosen.iter().enumerate() {
            raw.push(Interaction {
                user_id: SyntheticSpec::user_id(u),
                item_id: ids[item].clone(),
                timestamp: Some(step as i64),
                split: if step < spec.interactions_per_user {
                    Split::Train
                } else {
                    Split::Validation
                },
                seq: raw.len(),
            });
        }
    }
    raw
}

/// A clustered dataset; truth is the validation split.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<(InteractionLog, EmbeddingTable, GroundTruth), BenchError> {
    spec.validate()?;
    let centers = cluster_centers(spec, derive_seed(spec.seed, "synthetic-centers"));
    let items = noisy_items(spec, &centers, derive_seed(spec.seed, "synthetic-items"));
    let log = InteractionLog::from_interactions(interactions(spec, &items)).map_err(|e| BenchError::Data(e.to_string()))?;
    let ids = (0..spec.n_items).map(SyntheticSpec::item_id).collect();
    let table = EmbeddingTable::from_rows(ids, &items).map_err(|e| BenchError::Data(e.to_string()))?;
    let truth = GroundTruth::from_log(&log, Split::Validation);
    Ok((log, table, truth))
}

/// The same users and clusters seen through two modalities: the text view is
/// the table of [`generate_synthetic`], the vision view (width `vision_dim`)
/// has its own cluster centers and independent noise.
pub fn generate_multimodal(
    spec: &SyntheticSpec,
    vision_dim: usize,
) -> Result<(InteractionLog, ModalityBundle, GroundTruth), BenchError> {
    let (log, text, truth) = generate_synthetic(spec)?;
    let vspec = SyntheticSpec {
        dim: vision_dim,
        ..spec.clone()
    };
    vspec.validate()?;
    let centers = cluster_centers(&vspec, derive_seed(spec.seed, "synthetic-vision-centers"));
    let rows = noisy_items(&vspec, &centers, derive_seed(spec.seed, "synthetic-vision-items"));
    let vision = EmbeddingTable::from_rows(text.ids().to_vec(), &rows).map_err(|e| BenchError::Data(e.to_string()))?;
    Ok((log, ModalityBundle::new(text, vision), truth))
}

/// Item ids of one cluster.
pub fn cluster_members(spec: &SyntheticSpec, cluster: usize) -> BTreeSet<String> {
    (0..spec.n_items)
        .filter(|&i| spec.cluster_of(i) == cluster)
        .map(SyntheticSpec::item_id)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_clusters_share_one_vector() {
        let spec = SyntheticSpec {
            noise: 0.0,
            n_items: 30,
            n_users: 5,
            ..SyntheticSpec::default()
        };
        let (_, table, _) = generate_synthetic(&spec).unwrap();
        for i in 0..30 {
            let j = (i + 3) % 30;
            assert_eq!(table.raw_row(i), table.raw_row(j));
        }
        assert_ne!(table.raw_row(0), table.raw_row(1));
    }

    #[test]
    fn same_seed_same_dataset() {
        let spec = SyntheticSpec::default();
        let (la, ta, ga) = generate_synthetic(&spec).unwrap();
        let (lb, tb, gb) = generate_synthetic(&spec).unwrap();
        assert_eq!(la.interactions(), lb.interactions());
        assert_eq!(ta, tb);
        assert_eq!(ga, gb);
        let (_, tc, _) = generate_synthetic(&SyntheticSpec { seed: 1, ..spec }).unwrap();
        assert_ne!(ta, tc);
    }

    #[test]
    fn users_stay_in_their_home_cluster() {
        let spec = SyntheticSpec::default();
        let (log, _, truth) = generate_synthetic(&spec).unwrap();
        for (user, items) in &truth.per_user {
            assert_eq!(items.len(), spec.holdout_per_user);
            let train = log.items_of(user, Split::Train);
            assert_eq!(train.len(), spec.interactions_per_user);
            let cluster = (0..spec.n_clusters)
                .find(|&c| cluster_members(&spec, c).contains(*train.iter().next().unwrap()))
                .unwrap();
            let members = cluster_members(&spec, cluster);
            assert!(items.iter().all(|i| members.contains(i)));
            assert!(train.iter().all(|i| members.contains(*i)));
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let s = SyntheticSpec {
            n_clusters: 400,
            ..SyntheticSpec::default()
        };
        assert!(generate_synthetic(&s).is_err());
        let s = SyntheticSpec {
            noise: -1.0,
            ..SyntheticSpec::default()
        };
        assert!(generate_synthetic(&s).is_err());
    }
}
