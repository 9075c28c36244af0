use std::cmp::Ordering;

use ndarray::Array2;
use rayon::prelude::*;
use serde::Serialize;

use super::FusionError;
use crate::encoding::EmbeddingTable;
use crate::util::dot;

pub const DEFAULT_K: usize = 10;
pub const DEFAULT_LAYERS: usize = 2;

/// Item-item cosine kNN graph with symmetric degree-normalized weights.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KnnGraph {
    pub k: usize,
    /// The k nearest rows of each row, nearest first.
    pub neighbors: Vec<Vec<usize>>,
    /// Row-wise sparse `D^{-1/2} A' D^{-1/2}`, columns ascending.
    pub adjacency: Vec<Vec<(usize, f64)>>,
}

impl KnnGraph {
    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[i]
            .binary_search_by_key(&j, |&(c, _)| c)
            .map_or(0.0, |p| self.adjacency[i][p].1)
    }

    pub fn is_symmetric(&self) -> bool {
        self.adjacency
            .iter()
            .enumerate()
            .all(|(i, row)| row.iter().all(|&(j, w)| self.weight(j, i) == w))
    }

    /// `y = Â x` on row-major `n x dim` data.
    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut y = Array2::zeros(x.raw_dim());
        for (i, row) in self.adjacency.iter().enumerate() {
            let mut out = y.row_mut(i);
            for &(j, w) in row {
                out.scaled_add(w, &x.row(j));
            }
        }
        y
    }
}

pub fn build_knn_graph(table: &EmbeddingTable, k: usize) -> Result<KnnGraph, FusionError> {
    let n = table.len();
    if k == 0 {
        return Err(FusionError::InvalidConfig("k must be at least 1".into()));
    }
    if n <= k {
        return Err(FusionError::TooFewItems { n, k });
    }
    let rows: Vec<&[f64]> = (0..n).map(|i| table.norm_row(i).to_slice().expect("contiguous")).collect();
    let ids = table.ids();

    let neighbors: Vec<Vec<usize>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut cand: Vec<(usize, f64)> = (0..n).filter(|&j| j != i).map(|j| (j, dot(rows[i], rows[j]))).collect();
            let by_rank = |a: &(usize, f64), b: &(usize, f64)| {
                b.1.partial_cmp(&a.1)
                    .unwrap_or(Ordering::Equal)
                    .then_with(|| ids[a.0].cmp(&ids[b.0]))
            };
            cand.select_nth_unstable_by(k - 1, by_rank);
            cand.truncate(k);
            cand.sort_by(by_rank);
            cand.into_iter().map(|(j, _)| j).collect()
        })
        .collect();

    let mut linked: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (i, nb) in neighbors.iter().enumerate() {
        for &j in nb {
            linked[i].push(j);
            linked[j].push(i);
        }
    }
    for row in &mut linked {
        row.sort_unstable();
        row.dedup();
    }
    let inv_sqrt: Vec<f64> = linked.iter().map(|r| 1.0 / (r.len() as f64).sqrt()).collect();
    let adjacency = linked
        .iter()
        .enumerate()
        .map(|(i, row)| row.iter().map(|&j| (j, inv_sqrt[i] * inv_sqrt[j])).collect())
        .collect();
    Ok(KnnGraph { k, neighbors, adjacency })
}

/// Linear propagation over the normalized rows; the result is the mean of
/// the `layers` propagated matrices, re-normalized per row.
pub fn propagate(table: &EmbeddingTable, graph: &KnnGraph, layers: usize) -> Result<EmbeddingTable, FusionError> {
    if layers == 0 {
        return Err(FusionError::InvalidConfig("propagation needs at least one layer".into()));
    }
    if graph.len() != table.len() {
        return Err(FusionError::DimMismatch {
            expected: table.len(),
            got: graph.len(),
        });
    }
    let mut e = table.norm_matrix().to_owned();
    let mut sum = Array2::<f64>::zeros(e.raw_dim());
    for _ in 0..layers {
        e = graph.apply(&e);
        sum += &e;
    }
    sum /= layers as f64;
    let rows: Vec<Vec<f64>> = sum.rows().into_iter().map(|r| crate::encoding::normalize(&r.to_vec())).collect();
    Ok(EmbeddingTable::from_rows(table.ids().to_vec(), &rows)?)
}

/// Power-iteration estimate of the spectral radius of the normalized
/// adjacency, as the norm ratio `|Â x| / |x|` after `iterations` steps.
pub fn spectral_radius_estimate(graph: &KnnGraph, iterations: usize) -> f64 {
    let n = graph.len();
    if n == 0 {
        return 0.0;
    }
    // A non-uniform start so bipartite or symmetric structure is not missed.
    let mut x = Array2::from_shape_fn((n, 1), |(i, _)| 1.0 + (i as f64 + 1.0).sqrt().fract());
    let mut ratio = 0.0;
    for _ in 0..iterations.max(1) {
        let y = graph.apply(&x);
        let (nx, ny) = (x.iter().map(|v| v * v).sum::<f64>().sqrt(), y.iter().map(|v| v * v).sum::<f64>().sqrt());
        if ny == 0.0 {
            return 0.0;
        }
        ratio = ny / nx;
        x = y / ny;
    }
    ratio
}
