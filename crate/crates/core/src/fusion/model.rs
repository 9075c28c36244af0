use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{FusionError, FusionKind};
use crate::util::{derive_seed, dot, seeded_rng, sigmoid};

/// Width of the fused space for the projecting operators.
pub const DEFAULT_FUSED_DIM: usize = 384;

/// A named window into the flat parameter vector (row-major matrix).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamSlice {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamSlice {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// One fusion operator with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionModel {
    pub kind: FusionKind,
    pub text_dim: usize,
    pub vision_dim: usize,
    pub output_dim: usize,
    pub seed: u64,
    pub params: Vec<f64>,
    pub slices: Vec<ParamSlice>,
    /// Seed-derived, untrained projections used by `Average` (vision, then
    /// text when its width differs from the output).
    fixed_vision: Vec<f64>,
    fixed_text: Option<Vec<f64>>,
}

fn gaussian(len: usize, std: f64, seed: u64) -> Vec<f64> {
    let mut rng = seeded_rng(seed);
    let normal = Normal::new(0.0, std).expect("finite std");
    (0..len).map(|_| normal.sample(&mut rng)).collect()
}

pub(crate) fn matvec(m: &[f64], rows: usize, cols: usize, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(m.len(), rows * cols);
    m.chunks_exact(cols).map(|r| dot(r, x)).collect()
}

/// `grad += outer(dy, x)` for a `dy.len() x x.len()` row-major block.
fn add_outer(grad: &mut [f64], dy: &[f64], x: &[f64]) {
    for (g, row) in dy.iter().zip(grad.chunks_exact_mut(x.len())) {
        if *g == 0.0 {
            continue;
        }
        for (gi, xi) in row.iter_mut().zip(x) {
            *gi += g * xi;
        }
    }
}

/// `out += Mᵀ dy`.
fn add_matvec_t(out: &mut [f64], m: &[f64], cols: usize, dy: &[f64]) {
    for (row, g) in m.chunks_exact(cols).zip(dy) {
        for (o, w) in out.iter_mut().zip(row) {
            *o += g * w;
        }
    }
}

/// Intermediate values of one forward pass, kept for backprop.
#[derive(Debug, Clone, Default)]
pub(crate) struct ForwardTrace {
    t_proj: Option<Vec<f64>>,
    v_proj: Option<Vec<f64>>,
    gate: Vec<f64>,
    /// tanh activations per modality (attention).
    act_t: Vec<f64>,
    act_v: Vec<f64>,
    /// Softmax weights (text, vision).
    alpha: (f64, f64),
}

impl FusionModel {
    pub fn new(
        kind: FusionKind,
        text_dim: usize,
        vision_dim: usize,
        output_dim: usize,
        seed: u64,
    ) -> Result<Self, FusionError> {
        if text_dim == 0 || vision_dim == 0 || output_dim == 0 {
            return Err(FusionError::InvalidConfig("dimensions must be positive".into()));
        }
        let d = output_dim;
        let mut slices = Vec::new();
        let mut params = Vec::new();
        let mut push = |name: &str, rows: usize, cols: usize, init: Vec<f64>| {
            debug_assert_eq!(init.len(), rows * cols);
            slices.push(ParamSlice {
                name: name.to_string(),
                offset: params.len(),
                rows,
                cols,
            });
            params.extend(init);
        };
        let init = |label: &str, len: usize, std: f64| gaussian(len, std, derive_seed(seed, label));
        let text_proj_init = || {
            let mut w = init("w_text", d * text_dim, 0.01 / (text_dim as f64).sqrt());
            if text_dim == d {
                for i in 0..d {
                    w[i * d + i] += 1.0;
                }
            } else {
                let scale = 1.0 / (text_dim as f64).sqrt();
                let extra = init("w_text_dense", d * text_dim, scale);
                for (a, b) in w.iter_mut().zip(extra) {
                    *a += b;
                }
            }
            w
        };
        let vision_init = || init("w_vision", d * vision_dim, 1.0 / (vision_dim as f64).sqrt());

        let output_dim = match kind {
            FusionKind::Concat | FusionKind::Graph => text_dim + vision_dim,
            FusionKind::Average => d,
            FusionKind::Gating => {
                push("w_text", d, text_dim, text_proj_init());
                push("w_vision", d, vision_dim, vision_init());
                push("w_gate", d, 2 * d, init("w_gate", 2 * d * d, 0.1 / ((2 * d) as f64).sqrt()));
                push("b_gate", d, 1, vec![0.0; d]);
                d
            }
            FusionKind::Attention => {
                push("w_text", d, text_dim, text_proj_init());
                push("w_vision", d, vision_dim, vision_init());
                push("w_attn", d, 1, init("w_attn", d, 0.1 / (d as f64).sqrt()));
                d
            }
        };
        let (fixed_vision, fixed_text) = if kind == FusionKind::Average {
            let fv = gaussian(
                d * vision_dim,
                1.0 / (vision_dim as f64).sqrt(),
                derive_seed(seed, "avg_vision"),
            );
            let ft = (text_dim != d)
                .then(|| gaussian(d * text_dim, 1.0 / (text_dim as f64).sqrt(), derive_seed(seed, "avg_text")));
            (fv, ft)
        } else {
            (Vec::new(), None)
        };
        Ok(Self {
            kind,
            text_dim,
            vision_dim,
            output_dim,
            seed,
            params,
            slices,
            fixed_vision,
            fixed_text,
        })
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn slice(&self, name: &str) -> Option<&ParamSlice> {
        self.slices.iter().find(|s| s.name == name)
    }

    fn block<'p>(&self, params: &'p [f64], name: &str) -> &'p [f64] {
        &params[self.slice(name).expect("slice exists for kind").range()]
    }

    fn check(&self, t: Option<&[f64]>, v: Option<&[f64]>) -> Result<(), FusionError> {
        if let Some(t) = t {
            if t.len() != self.text_dim {
                return Err(FusionError::DimMismatch {
                    expected: self.text_dim,
                    got: t.len(),
                });
            }
        }
        if let Some(v) = v {
            if v.len() != self.vision_dim {
                return Err(FusionError::DimMismatch {
                    expected: self.vision_dim,
                    got: v.len(),
                });
            }
        }
        if t.is_none() && v.is_none() {
            return Err(FusionError::MissingModalities);
        }
        Ok(())
    }

    /// Projection of the vision vector used by `Average`.
    pub fn average_vision_projection(&self, v: &[f64]) -> Vec<f64> {
        matvec(&self.fixed_vision, self.output_dim, self.vision_dim, v)
    }

    fn average_text_projection(&self, t: &[f64]) -> Vec<f64> {
        match &self.fixed_text {
            Some(m) => matvec(m, self.output_dim, self.text_dim, t),
            None => t.to_vec(),
        }
    }

    /// Fused vector for one item. A missing modality falls back to the
    /// other one (zero-filled for concat).
    pub fn forward(&self, t: Option<&[f64]>, v: Option<&[f64]>) -> Result<Vec<f64>, FusionError> {
        self.check(t, v)?;
        Ok(self.forward_with(&self.params, t, v).0)
    }

    pub(crate) fn forward_with(&self, params: &[f64], t: Option<&[f64]>, v: Option<&[f64]>) -> (Vec<f64>, ForwardTrace) {
        let mut trace = ForwardTrace::default();
        let d = self.output_dim;
        let out = match self.kind {
            FusionKind::Concat | FusionKind::Graph => {
                let mut out = Vec::with_capacity(self.text_dim + self.vision_dim);
                match t {
                    Some(t) => out.extend_from_slice(t),
                    None => out.resize(self.text_dim, 0.0),
                }
                match v {
                    Some(v) => out.extend_from_slice(v),
                    None => out.resize(self.text_dim + self.vision_dim, 0.0),
                }
                out
            }
            FusionKind::Average => match (t, v) {
                (Some(t), Some(v)) => {
                    let pt = self.average_text_projection(t);
                    let pv = self.average_vision_projection(v);
                    pt.iter().zip(&pv).map(|(a, b)| 0.5 * (a + b)).collect()
                }
                (Some(t), None) => self.average_text_projection(t),
                (None, Some(v)) => self.average_vision_projection(v),
                (None, None) => unreachable!("checked"),
            },
            FusionKind::Gating => {
                let tp = t.map(|t| matvec(self.block(params, "w_text"), d, self.text_dim, t));
                let vp = v.map(|v| matvec(self.block(params, "w_vision"), d, self.vision_dim, v));
                let out = match (&tp, &vp) {
                    (Some(tp), Some(vp)) => {
                        let wg = self.block(params, "w_gate");
                        let bg = self.block(params, "b_gate");
                        let mut joint = tp.clone();
                        joint.extend_from_slice(vp);
                        let h = matvec(wg, d, 2 * d, &joint);
                        trace.gate = h.iter().zip(bg).map(|(h, b)| sigmoid(h + b)).collect();
                        trace
                            .gate
                            .iter()
                            .zip(tp.iter().zip(vp))
                            .map(|(g, (a, b))| g * a + (1.0 - g) * b)
                            .collect()
                    }
                    (Some(p), None) | (None, Some(p)) => p.clone(),
                    (None, None) => unreachable!("checked"),
                };
                trace.t_proj = tp;
                trace.v_proj = vp;
                out
            }
            FusionKind::Attention => {
                let tp = t.map(|t| matvec(self.block(params, "w_text"), d, self.text_dim, t));
                let vp = v.map(|v| matvec(self.block(params, "w_vision"), d, self.vision_dim, v));
                let out = match (&tp, &vp) {
                    (Some(tp), Some(vp)) => {
                        let w = self.block(params, "w_attn");
                        trace.act_t = tp.iter().map(|x| x.tanh()).collect();
                        trace.act_v = vp.iter().map(|x| x.tanh()).collect();
                        let (at, av) = (dot(w, &trace.act_t), dot(w, &trace.act_v));
                        let m = at.max(av);
                        let (et, ev) = ((at - m).exp(), (av - m).exp());
                        trace.alpha = (et / (et + ev), ev / (et + ev));
                        tp.iter()
                            .zip(vp)
                            .map(|(a, b)| trace.alpha.0 * a + trace.alpha.1 * b)
                            .collect()
                    }
                    (Some(p), None) | (None, Some(p)) => p.clone(),
                    (None, None) => unreachable!("checked"),
                };
                trace.t_proj = tp;
                trace.v_proj = vp;
                out
            }
        };
        (out, trace)
    }

    /// Accumulates `d(loss)/d(params)` into `grad` given `d(loss)/d(output)`.
    pub(crate) fn backward(
        &self,
        params: &[f64],
        t: Option<&[f64]>,
        v: Option<&[f64]>,
        trace: &ForwardTrace,
        d_out: &[f64],
        grad: &mut [f64],
    ) {
        let d = self.output_dim;
        let mut d_tp = vec![0.0; d];
        let mut d_vp = vec![0.0; d];
        match self.kind {
            FusionKind::Concat | FusionKind::Graph | FusionKind::Average => return,
            FusionKind::Gating => match (&trace.t_proj, &trace.v_proj) {
                (Some(tp), Some(vp)) => {
                    let g = &trace.gate;
                    let mut dh = vec![0.0; d];
                    for i in 0..d {
                        d_tp[i] = d_out[i] * g[i];
                        d_vp[i] = d_out[i] * (1.0 - g[i]);
                        dh[i] = d_out[i] * (tp[i] - vp[i]) * g[i] * (1.0 - g[i]);
                    }
                    let mut joint = tp.clone();
                    joint.extend_from_slice(vp);
                    let sg = self.slice("w_gate").unwrap().range();
                    let wg = &params[sg.clone()];
                    add_outer(&mut grad[sg], &dh, &joint);
                    let sb = self.slice("b_gate").unwrap().range();
                    for (gb, x) in grad[sb].iter_mut().zip(&dh) {
                        *gb += x;
                    }
                    let mut d_joint = vec![0.0; 2 * d];
                    add_matvec_t(&mut d_joint, wg, 2 * d, &dh);
                    for i in 0..d {
                        d_tp[i] += d_joint[i];
                        d_vp[i] += d_joint[d + i];
                    }
                }
                (Some(_), None) => d_tp.copy_from_slice(d_out),
                (None, Some(_)) => d_vp.copy_from_slice(d_out),
                (None, None) => return,
            },
            FusionKind::Attention => match (&trace.t_proj, &trace.v_proj) {
                (Some(tp), Some(vp)) => {
                    let (at, av) = trace.alpha;
                    let w = self.block(params, "w_attn");
                    let dat = dot(d_out, tp);
                    let dav = dot(d_out, vp);
                    let mean = at * dat + av * dav;
                    let (dlt, dlv) = (at * (dat - mean), av * (dav - mean));
                    let sw = self.slice("w_attn").unwrap().range();
                    for (i, gw) in grad[sw].iter_mut().enumerate() {
                        *gw += dlt * trace.act_t[i] + dlv * trace.act_v[i];
                    }
                    for i in 0..d {
                        d_tp[i] = at * d_out[i] + dlt * w[i] * (1.0 - trace.act_t[i] * trace.act_t[i]);
                        d_vp[i] = av * d_out[i] + dlv * w[i] * (1.0 - trace.act_v[i] * trace.act_v[i]);
                    }
                }
                (Some(_), None) => d_tp.copy_from_slice(d_out),
                (None, Some(_)) => d_vp.copy_from_slice(d_out),
                (None, None) => return,
            },
        }
        if let Some(t) = t {
            let s = self.slice("w_text").unwrap().range();
            add_outer(&mut grad[s], &d_tp, t);
        }
        if let Some(v) = v {
            let s = self.slice("w_vision").unwrap().range();
            add_outer(&mut grad[s], &d_vp, v);
        }
    }

    /// Rebuild a model from stored parameters.
    pub fn with_params(mut self, params: Vec<f64>) -> Result<Self, FusionError> {
        if params.len() != self.params.len() {
            return Err(FusionError::DimMismatch {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        self.params = params;
        Ok(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn randv(n: usize, seed: u64) -> Vec<f64> {
        gaussian(n, 1.0, seed)
    }

    #[test]
    fn concat_has_no_params_and_is_lossless() {
        let m = FusionModel::new(FusionKind::Concat, 384, 768, DEFAULT_FUSED_DIM, 1).unwrap();
        assert_eq!(m.n_params(), 0);
        assert_eq!(m.output_dim, 1152);
        let (t, v) = (randv(384, 1), randv(768, 2));
        let out = m.forward(Some(&t), Some(&v)).unwrap();
        assert_eq!(out.len(), 1152);
        assert_eq!(&out[..384], t.as_slice());
        assert_eq!(&out[384..], v.as_slice());
    }

    #[test]
    fn projecting_kinds_output_384() {
        for kind in [FusionKind::Average, FusionKind::Gating, FusionKind::Attention] {
            let m = FusionModel::new(kind, 384, 768, DEFAULT_FUSED_DIM, 3).unwrap();
            assert_eq!(m.output_dim, 384);
            let out = m.forward(Some(&randv(384, 4)), Some(&randv(768, 5))).unwrap();
            assert_eq!(out.len(), 384);
        }
    }

    #[test]
    fn average_of_matching_projection_is_identity() {
        let m = FusionModel::new(FusionKind::Average, 8, 12, 8, 9).unwrap();
        let v = randv(12, 10);
        let t = m.average_vision_projection(&v);
        let out = m.forward(Some(&t), Some(&v)).unwrap();
        for (a, b) in out.iter().zip(&t) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn saturated_gate_passes_projected_text() {
        let mut m = FusionModel::new(FusionKind::Gating, 6, 5, 4, 11).unwrap();
        let sb = m.slice("b_gate").unwrap().range();
        for b in &mut m.params[sb] {
            *b = 30.0;
        }
        let (t, v) = (randv(6, 12), randv(5, 13));
        let out = m.forward(Some(&t), Some(&v)).unwrap();
        let tp = matvec(m.block(&m.params, "w_text"), 4, 6, &t);
        for (a, b) in out.iter().zip(&tp) {
            assert!((a - b).abs() < 1e-9, "{a} vs {b}");
        }
    }

    #[test]
    fn missing_modality_falls_back() {
        let m = FusionModel::new(FusionKind::Attention, 3, 4, 3, 2).unwrap();
        let t = randv(3, 1);
        let only_t = m.forward(Some(&t), None).unwrap();
        let tp = matvec(m.block(&m.params, "w_text"), 3, 3, &t);
        assert_eq!(only_t, tp);
        assert!(matches!(m.forward(None, None), Err(FusionError::MissingModalities)));
        assert!(matches!(
            m.forward(Some(&[1.0]), None),
            Err(FusionError::DimMismatch { expected: 3, got: 1 })
        ));
        let c = FusionModel::new(FusionKind::Concat, 2, 2, 2, 0).unwrap();
        assert_eq!(c.forward(None, Some(&[1.0, 2.0])).unwrap(), vec![0.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn forward_is_deterministic_in_seed() {
        let a = FusionModel::new(FusionKind::Gating, 5, 7, 4, 42).unwrap();
        let b = FusionModel::new(FusionKind::Gating, 5, 7, 4, 42).unwrap();
        assert_eq!(a, b);
        let (t, v) = (randv(5, 1), randv(7, 2));
        assert_eq!(a.forward(Some(&t), Some(&v)).unwrap(), b.forward(Some(&t), Some(&v)).unwrap());
        let c = FusionModel::new(FusionKind::Gating, 5, 7, 4, 43).unwrap();
        assert_ne!(a.params, c.params);
    }
}
