//! The sparse autoencoder: parameters, forward pass and backpropagation.
//!
//! Layer stack, rows as examples:
//!
//! | layer          | operation                          | width  |
//! |----------------|------------------------------------|--------|
//! | hidden         | `max(x W_h + b_h, 0)`              | `8 d`  |
//! | pre-binary     | `h W_l + b_l`                      | `k`    |
//! | batch norm     | `gain * (l - mean) / std + shift`  | `k`    |
//! | rectification  | `max(., 0)`                        | `k`    |
//! | noise (train)  | `+ N(0, beta_t)`                   | `k`    |
//! | top-α          | per-column winner-take-all         | `k`    |
//! | output         | `a W_f + b_f`                      | `d`    |

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::hurdle::wta_sparsify;
use super::schedule::ScheduleState;
use crate::error::{Error, Result};

pub const BN_EPSILON: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.9;

pub const PARAM_NAMES: [&str; 8] = [
    "w_h", "b_h", "w_l", "b_l", "bn_gain", "bn_shift", "w_f", "b_f",
];

/// Learnable tensors; also used for gradients and optimizer moments.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet {
    pub w_h: Array2<f64>,
    pub b_h: Array1<f64>,
    pub w_l: Array2<f64>,
    pub b_l: Array1<f64>,
    pub bn_gain: Array1<f64>,
    pub bn_shift: Array1<f64>,
    pub w_f: Array2<f64>,
    pub b_f: Array1<f64>,
}

impl ParamSet {
    pub fn zeros(d: usize, hidden: usize, k: usize) -> Self {
        Self {
            w_h: Array2::zeros((d, hidden)),
            b_h: Array1::zeros(hidden),
            w_l: Array2::zeros((hidden, k)),
            b_l: Array1::zeros(k),
            bn_gain: Array1::zeros(k),
            bn_shift: Array1::zeros(k),
            w_f: Array2::zeros((k, d)),
            b_f: Array1::zeros(d),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(self.w_h.nrows(), self.w_h.ncols(), self.w_l.ncols())
    }

    /// Flat views in [`PARAM_NAMES`] order.
    pub fn slices(&self) -> [&[f64]; 8] {
        [
            self.w_h.as_slice().expect("standard layout"),
            self.b_h.as_slice().expect("standard layout"),
            self.w_l.as_slice().expect("standard layout"),
            self.b_l.as_slice().expect("standard layout"),
            self.bn_gain.as_slice().expect("standard layout"),
            self.bn_shift.as_slice().expect("standard layout"),
            self.w_f.as_slice().expect("standard layout"),
            self.b_f.as_slice().expect("standard layout"),
        ]
    }

    pub fn slices_mut(&mut self) -> [&mut [f64]; 8] {
        [
            self.w_h.as_slice_mut().expect("standard layout"),
            self.b_h.as_slice_mut().expect("standard layout"),
            self.w_l.as_slice_mut().expect("standard layout"),
            self.b_l.as_slice_mut().expect("standard layout"),
            self.bn_gain.as_slice_mut().expect("standard layout"),
            self.bn_shift.as_slice_mut().expect("standard layout"),
            self.w_f.as_slice_mut().expect("standard layout"),
            self.b_f.as_slice_mut().expect("standard layout"),
        ]
    }

    pub fn shapes(&self) -> [Vec<usize>; 8] {
        [
            self.w_h.shape().to_vec(),
            self.b_h.shape().to_vec(),
            self.w_l.shape().to_vec(),
            self.b_l.shape().to_vec(),
            self.bn_gain.shape().to_vec(),
            self.bn_shift.shape().to_vec(),
            self.w_f.shape().to_vec(),
            self.b_f.shape().to_vec(),
        ]
    }

    pub fn all_finite(&self) -> bool {
        self.slices()
            .iter()
            .all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// Learnable tensors plus batch-norm running statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub weights: ParamSet,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl ModelParams {
    /// All-zero weights, unit batch-norm gain and unit running variance.
    pub fn zeros(d: usize, hidden: usize, k: usize) -> Self {
        let mut weights = ParamSet::zeros(d, hidden, k);
        weights.bn_gain.fill(1.0);
        Self {
            weights,
            running_mean: Array1::zeros(k),
            running_var: Array1::ones(k),
        }
    }

    /// Fan-in scaled uniform weights `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`,
    /// zero biases.
    pub fn init<R: Rng + ?Sized>(d: usize, hidden: usize, k: usize, rng: &mut R) -> Self {
        let mut p = Self::zeros(d, hidden, k);
        fill_uniform(&mut p.weights.w_h, d, rng);
        fill_uniform(&mut p.weights.w_l, hidden, rng);
        fill_uniform(&mut p.weights.w_f, k, rng);
        p
    }

    pub fn input_dim(&self) -> usize {
        self.weights.w_h.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.weights.w_h.ncols()
    }

    pub fn code_dim(&self) -> usize {
        self.weights.w_l.ncols()
    }

    pub fn all_finite(&self) -> bool {
        self.weights.all_finite()
            && self.running_mean.iter().all(|v| v.is_finite())
            && self.running_var.iter().all(|v| v.is_finite())
    }

    /// Exponential moving average of batch statistics (unbiased variance).
    pub fn update_running_stats(
        &mut self,
        batch_mean: &Array1<f64>,
        batch_var: &Array1<f64>,
        batch: usize,
    ) {
        let unbias = if batch > 1 {
            batch as f64 / (batch - 1) as f64
        } else {
            1.0
        };
        Zip::from(&mut self.running_mean)
            .and(batch_mean)
            .for_each(|r, &m| *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * m);
        Zip::from(&mut self.running_var)
            .and(batch_var)
            .for_each(|r, &v| *r = BN_MOMENTUM * *r + (1.0 - BN_MOMENTUM) * v * unbias);
    }
}

fn fill_uniform<R: Rng + ?Sized>(w: &mut Array2<f64>, fan_in: usize, rng: &mut R) {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    w.iter_mut().for_each(|v| *v = dist.sample(rng));
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics, noise on.
    Train,
    /// Running statistics, noise off; deterministic.
    Infer,
}

/// How the top-α layer picks survivors.
#[derive(Debug, Clone, Copy)]
pub enum Selection<'a> {
    /// Bisection hurdle per column at the given fraction.
    TopAlpha { alpha: f64, iters: usize },
    /// A fixed 0/1 mask, used for gradient checking.
    Frozen(&'a Array2<f64>),
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    pub input: Array2<f64>,
    pub hidden_pre: Array2<f64>,
    pub hidden: Array2<f64>,
    pub normalized: Array2<f64>,
    pub bn_out: Array2<f64>,
    pub inv_std: Array1<f64>,
    pub batch_mean: Array1<f64>,
    pub batch_var: Array1<f64>,
    pub mask: Array2<f64>,
    pub codes: Array2<f64>,
    pub recon: Array2<f64>,
}

impl ForwardPass {
    pub fn survivor_fraction(&self) -> f64 {
        self.mask.mean().unwrap_or(0.0)
    }
}

/// Everything up to and including rectification. Returns
/// `(hidden_pre, hidden, normalized, bn_out, inv_std, mean, var)`.
#[allow(clippy::type_complexity)]
fn encode_dense(
    p: &ModelParams,
    x: ArrayView2<'_, f64>,
    mode: Mode,
) -> (
    Array2<f64>,
    Array2<f64>,
    Array2<f64>,
    Array2<f64>,
    Array1<f64>,
    Array1<f64>,
    Array1<f64>,
) {
    let w = &p.weights;
    let mut hidden_pre = x.dot(&w.w_h);
    hidden_pre += &w.b_h;
    let hidden = hidden_pre.mapv(|v| v.max(0.0));
    let mut linear = hidden.dot(&w.w_l);
    linear += &w.b_l;

    let (mean, var) = match mode {
        Mode::Train => {
            let mean = linear.mean_axis(Axis(0)).expect("non-empty batch");
            let var = linear.var_axis(Axis(0), 0.0);
            (mean, var)
        }
        Mode::Infer => (p.running_mean.clone(), p.running_var.clone()),
    };
    let inv_std = var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt());
    let mut normalized = linear;
    normalized -= &mean;
    normalized *= &inv_std;
    let mut bn_out = &normalized * &w.bn_gain;
    bn_out += &w.bn_shift;
    (hidden_pre, hidden, normalized, bn_out, inv_std, mean, var)
}

/// Rectified pre-sparsity activations for a batch (no noise).
pub fn rectified_codes(p: &ModelParams, x: ArrayView2<'_, f64>, mode: Mode) -> Array2<f64> {
    encode_dense(p, x, mode).3.mapv(|v| v.max(0.0))
}

/// Output layer: `codes W_f + b_f`.
pub fn decode(p: &ModelParams, codes: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut recon = codes.dot(&p.weights.w_f);
    recon += &p.weights.b_f;
    recon
}

/// Runs the full stack. `noise` supplies the random source in train mode;
/// pass `None` to switch the noise layer off.
pub fn forward_with<R: Rng + ?Sized>(
    p: &ModelParams,
    x: ArrayView2<'_, f64>,
    mode: Mode,
    beta: f64,
    selection: Selection<'_>,
    noise: Option<&mut R>,
) -> Result<ForwardPass> {
    if x.ncols() != p.input_dim() {
        return Err(Error::Shape(format!(
            "batch width {} for input dimension {}",
            x.ncols(),
            p.input_dim()
        )));
    }
    if x.nrows() == 0 {
        return Err(Error::EmptyInput);
    }
    let (hidden_pre, hidden, normalized, bn_out, inv_std, batch_mean, batch_var) =
        encode_dense(p, x, mode);
    let mut noisy = bn_out.mapv(|v| v.max(0.0));
    if let (Mode::Train, Some(rng)) = (mode, noise) {
        if beta > 0.0 {
            let dist = Normal::new(0.0, beta).map_err(|e| Error::Config(e.to_string()))?;
            noisy.iter_mut().for_each(|v| *v += dist.sample(rng));
        }
    }
    let (codes, mask) = match selection {
        Selection::TopAlpha { alpha, iters } => {
            let s = wta_sparsify(noisy.view(), alpha, iters);
            (s.values, s.mask)
        }
        Selection::Frozen(mask) => (&noisy * mask, mask.clone()),
    };
    let recon = decode(p, codes.view());
    if !recon.iter().all(|v| v.is_finite()) || !codes.iter().all(|v| v.is_finite()) {
        let bad = bn_out.iter().filter(|v| !v.is_finite()).count();
        return Err(Error::NonFinite(format!(
            "forward pass produced non-finite activations ({bad} non-finite batch-norm outputs)"
        )));
    }
    Ok(ForwardPass {
        input: x.to_owned(),
        hidden_pre,
        hidden,
        normalized,
        bn_out,
        inv_std,
        batch_mean,
        batch_var,
        mask,
        codes,
        recon,
    })
}

/// Forward pass at the schedule's current sparsity and noise level.
pub fn forward<R: Rng + ?Sized>(
    p: &ModelParams,
    x: ArrayView2<'_, f64>,
    state: &ScheduleState,
    mode: Mode,
    bisect_iters: usize,
    rng: &mut R,
) -> Result<ForwardPass> {
    forward_with(
        p,
        x,
        mode,
        state.beta_t,
        Selection::TopAlpha {
            alpha: state.alpha_t,
            iters: bisect_iters,
        },
        Some(rng),
    )
}

/// Mean squared error over every element.
pub fn loss(recon: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> f64 {
    assert_eq!(recon.dim(), target.dim(), "loss shape mismatch");
    let n = recon.len() as f64;
    Zip::from(recon)
        .and(target)
        .fold(0.0, |acc, &r, &t| acc + (r - t) * (r - t))
        / n
}

/// Gradient of [`loss`] with respect to `recon`.
pub fn loss_grad(recon: ArrayView2<'_, f64>, target: ArrayView2<'_, f64>) -> Array2<f64> {
    let scale = 2.0 / recon.len() as f64;
    let mut g = &recon - &target;
    g *= scale;
    g
}

/// Backpropagates `grad_recon` through the cached pass (train-mode batch
/// norm). Gradients flow only through surviving top-α entries.
pub fn backward(p: &ModelParams, fp: &ForwardPass, grad_recon: ArrayView2<'_, f64>) -> ParamSet {
    let w = &p.weights;
    let batch = fp.input.nrows() as f64;

    let g_w_f = fp.codes.t().dot(&grad_recon);
    let g_b_f = grad_recon.sum_axis(Axis(0));

    let mut g_pre_wta = grad_recon.dot(&w.w_f.t());
    g_pre_wta *= &fp.mask;
    // rectification before the noise layer
    Zip::from(&mut g_pre_wta).and(&fp.bn_out).for_each(|g, &y| {
        if y <= 0.0 {
            *g = 0.0;
        }
    });
    let g_bn_out = g_pre_wta;

    let g_gain = (&g_bn_out * &fp.normalized).sum_axis(Axis(0));
    let g_shift = g_bn_out.sum_axis(Axis(0));

    let g_norm = &g_bn_out * &w.bn_gain;
    let sum_g = g_norm.sum_axis(Axis(0));
    let sum_gx = (&g_norm * &fp.normalized).sum_axis(Axis(0));
    let mut g_linear = &g_norm * batch;
    g_linear -= &sum_g;
    g_linear -= &(&fp.normalized * &sum_gx);
    g_linear *= &(&fp.inv_std / batch);

    let g_w_l = fp.hidden.t().dot(&g_linear);
    let g_b_l = g_linear.sum_axis(Axis(0));

    let mut g_hidden = g_linear.dot(&w.w_l.t());
    Zip::from(&mut g_hidden)
        .and(&fp.hidden_pre)
        .for_each(|g, &pre| {
            if pre <= 0.0 {
                *g = 0.0;
            }
        });
    let g_w_h = fp.input.t().dot(&g_hidden);
    let g_b_h = g_hidden.sum_axis(Axis(0));

    ParamSet {
        w_h: g_w_h,
        b_h: g_b_h,
        w_l: g_w_l,
        b_l: g_b_l,
        bn_gain: g_gain,
        bn_shift: g_shift,
        w_f: g_w_f,
        b_f: g_b_f,
    }
}
