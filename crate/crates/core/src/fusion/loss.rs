use super::model::{FusionModel, ForwardTrace};
use crate::encoding::ModalityBundle;
use crate::util::{dot, log_sum_exp, sigmoid, softplus};

/// Normalized modality rows of one item.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemInputs {
    pub text: Option<Vec<f64>>,
    pub vision: Option<Vec<f64>>,
}

impl ItemInputs {
    pub fn from_bundle(bundle: &ModalityBundle, ids: &[String]) -> Vec<Self> {
        let fetch = |t: &crate::encoding::EmbeddingTable, id: &str| t.row_of(id).map(|r| t.norm_row(r).to_vec());
        ids.iter()
            .map(|id| ItemInputs {
                text: fetch(&bundle.text, id),
                vision: fetch(&bundle.vision, id),
            })
            .collect()
    }
}

struct Embedded {
    unit: Vec<f64>,
    norm: f64,
    trace: ForwardTrace,
}

fn embed(model: &FusionModel, params: &[f64], inp: &ItemInputs) -> Embedded {
    let (z, trace) = model.forward_with(params, inp.text.as_deref(), inp.vision.as_deref());
    let norm = dot(&z, &z).sqrt();
    let unit = if norm > crate::encoding::NORM_EPSILON {
        z.iter().map(|x| x / norm).collect()
    } else {
        vec![0.0; z.len()]
    };
    Embedded { unit, norm, trace }
}

/// Backprop through `z / |z|` and then the fusion forward.
fn backprop_unit(model: &FusionModel, params: &[f64], inp: &ItemInputs, e: &Embedded, g_unit: &[f64], grad: &mut [f64]) {
    if e.norm <= crate::encoding::NORM_EPSILON {
        return;
    }
    let proj = dot(&e.unit, g_unit);
    let dz: Vec<f64> = g_unit
        .iter()
        .zip(&e.unit)
        .map(|(g, u)| (g - u * proj) / e.norm)
        .collect();
    model.backward(params, inp.text.as_deref(), inp.vision.as_deref(), &e.trace, &dz, grad);
}

/// Mean InfoNCE loss of `(anchor, positive)` index pairs with in-batch
/// negatives: `S_ij = cos(anchor_i, positive_j) / τ`,
/// `L = mean_i [logsumexp_j S_ij − S_ii]`. When `grad` is given the
/// gradient with respect to `params` is accumulated into it.
pub fn infonce_loss(
    model: &FusionModel,
    params: &[f64],
    inputs: &[ItemInputs],
    pairs: &[(usize, usize)],
    temperature: f64,
    grad: Option<&mut [f64]>,
) -> f64 {
    let b = pairs.len();
    if b == 0 {
        return 0.0;
    }
    let anchors: Vec<Embedded> = pairs.iter().map(|&(a, _)| embed(model, params, &inputs[a])).collect();
    let positives: Vec<Embedded> = pairs.iter().map(|&(_, p)| embed(model, params, &inputs[p])).collect();
    let mut logits = vec![vec![0.0; b]; b];
    for (i, a) in anchors.iter().enumerate() {
        for (j, p) in positives.iter().enumerate() {
            logits[i][j] = dot(&a.unit, &p.unit) / temperature;
        }
    }
    let mut loss = 0.0;
    let mut d_logits = vec![vec![0.0; b]; b];
    for i in 0..b {
        let lse = log_sum_exp(&logits[i]);
        loss += lse - logits[i][i];
        for j in 0..b {
            d_logits[i][j] = ((logits[i][j] - lse).exp() - f64::from(u8::from(i == j))) / b as f64;
        }
    }
    loss /= b as f64;

    if let Some(grad) = grad {
        let dim = anchors[0].unit.len();
        for i in 0..b {
            let mut g_anchor = vec![0.0; dim];
            let mut g_pos = vec![0.0; dim];
            for j in 0..b {
                let (wa, wp) = (d_logits[i][j] / temperature, d_logits[j][i] / temperature);
                for k in 0..dim {
                    g_anchor[k] += wa * positives[j].unit[k];
                    g_pos[k] += wp * anchors[j].unit[k];
                }
            }
            backprop_unit(model, params, &inputs[pairs[i].0], &anchors[i], &g_anchor, grad);
            backprop_unit(model, params, &inputs[pairs[i].1], &positives[i], &g_pos, grad);
        }
    }
    loss
}

/// A (user, positive item, negative item) training triple; `user` indexes
/// the history list passed to [`bpr_loss`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BprTriple {
    pub user: usize,
    pub pos: usize,
    pub neg: usize,
}

/// Mean BPR loss `−log σ(s(u,i⁺) − s(u,i⁻))` where items are
/// `base + delta` rows (row-major, width `dim`) and the user vector is the
/// mean of the user's history rows. Accumulates the gradient with respect
/// to `delta` when `grad` is given.
pub fn bpr_loss(
    base: &[f64],
    delta: &[f64],
    dim: usize,
    histories: &[Vec<usize>],
    triples: &[BprTriple],
    mut grad: Option<&mut [f64]>,
) -> f64 {
    if triples.is_empty() {
        return 0.0;
    }
    let row = |i: usize| -> Vec<f64> {
        base[i * dim..(i + 1) * dim]
            .iter()
            .zip(&delta[i * dim..(i + 1) * dim])
            .map(|(a, b)| a + b)
            .collect()
    };
    let scale = 1.0 / triples.len() as f64;
    let mut total = 0.0;
    for t in triples {
        let hist = &histories[t.user];
        let mut user = vec![0.0; dim];
        for &h in hist {
            for (u, x) in user.iter_mut().zip(row(h)) {
                *u += x;
            }
        }
        let inv = 1.0 / hist.len() as f64;
        user.iter_mut().for_each(|u| *u *= inv);
        let (pos, neg) = (row(t.pos), row(t.neg));
        let margin = dot(&user, &pos) - dot(&user, &neg);
        total += softplus(-margin);

        if let Some(grad) = grad.as_deref_mut() {
            // d/d(margin) of −log σ(margin)
            let g = -sigmoid(-margin) * scale;
            for k in 0..dim {
                grad[t.pos * dim + k] += g * user[k];
                grad[t.neg * dim + k] -= g * user[k];
            }
            for &h in hist {
                for k in 0..dim {
                    grad[h * dim + k] += g * (pos[k] - neg[k]) * inv;
                }
            }
        }
    }
    total * scale
}
