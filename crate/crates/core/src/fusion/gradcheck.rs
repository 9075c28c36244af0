//! Central-difference verification of the analytic trainer gradients.

use super::loss::{bpr_loss, infonce_loss, BprTriple, ItemInputs};
use super::model::FusionModel;
use super::FusionError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossKind {
    InfoNce,
    Bpr,
}

/// A scalar loss over a flat parameter vector with an analytic gradient.
pub trait Objective {
    fn kind(&self) -> LossKind;
    fn loss(&self, params: &[f64]) -> f64;
    fn loss_and_grad(&self, params: &[f64]) -> (f64, Vec<f64>);
}

/// InfoNCE over a fixed batch of `(anchor, positive)` pairs.
pub struct InfoNceObjective<'a> {
    pub model: &'a FusionModel,
    pub inputs: &'a [ItemInputs],
    pub pairs: &'a [(usize, usize)],
    pub temperature: f64,
}

impl Objective for InfoNceObjective<'_> {
    fn kind(&self) -> LossKind {
        LossKind::InfoNce
    }

    fn loss(&self, params: &[f64]) -> f64 {
        infonce_loss(self.model, params, self.inputs, self.pairs, self.temperature, None)
    }

    fn loss_and_grad(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; params.len()];
        let loss = infonce_loss(self.model, params, self.inputs, self.pairs, self.temperature, Some(&mut grad));
        (loss, grad)
    }
}

/// BPR over item deltas for a fixed batch of triples.
pub struct BprObjective<'a> {
    pub base: &'a [f64],
    pub dim: usize,
    pub histories: &'a [Vec<usize>],
    pub triples: &'a [BprTriple],
}

impl Objective for BprObjective<'_> {
    fn kind(&self) -> LossKind {
        LossKind::Bpr
    }

    fn loss(&self, params: &[f64]) -> f64 {
        bpr_loss(self.base, params, self.dim, self.histories, self.triples, None)
    }

    fn loss_and_grad(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; params.len()];
        let loss = bpr_loss(self.base, params, self.dim, self.histories, self.triples, Some(&mut grad));
        (loss, grad)
    }
}

/// Max over parameters of `|analytic − central| / max(1, |central|)`.
pub fn gradient_check(objective: &dyn Objective, params: &[f64], epsilon: f64) -> Result<f64, FusionError> {
    if !(1e-7..=1e-3).contains(&epsilon) {
        return Err(FusionError::InvalidConfig(format!(
            "finite-difference step {epsilon} outside [1e-7, 1e-3]"
        )));
    }
    let (_, analytic) = objective.loss_and_grad(params);
    let mut probe = params.to_vec();
    let mut worst = 0.0f64;
    for i in 0..params.len() {
        probe[i] = params[i] + epsilon;
        let up = objective.loss(&probe);
        probe[i] = params[i] - epsilon;
        let down = objective.loss(&probe);
        probe[i] = params[i];
        let numeric = (up - down) / (2.0 * epsilon);
        worst = worst.max((analytic[i] - numeric).abs() / numeric.abs().max(1.0));
    }
    Ok(worst)
}
