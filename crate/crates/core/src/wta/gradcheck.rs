//! Finite-difference validation of [`backward`](super::model::backward).

use ndarray::{Array2, ArrayView2};

use super::model::{
    backward, forward_with, loss, loss_grad, Mode, ModelParams, Selection, PARAM_NAMES,
};
use crate::error::{Error, Result};

/// Central-difference step.
pub const FD_STEP: f64 = 1e-4;
/// Default acceptance bound on the relative deviation.
pub const FD_TOLERANCE: f64 = 1e-4;
/// Per-tensor scales are floored at this fraction of the largest gradient
/// anywhere in the model. Batch norm makes the pre-normalization bias
/// gradients exactly zero, and their finite differences are pure rounding
/// noise; without a floor that noise would read as a 100% deviation.
pub const GRAD_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// `(parameter name, relative deviation)` in parameter order.
    pub deviations: Vec<(&'static str, f64)>,
}

impl GradCheckReport {
    pub fn max_deviation(&self) -> f64 {
        self.deviations.iter().map(|d| d.1).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> (&'static str, f64) {
        self.deviations
            .iter()
            .copied()
            .fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a })
    }
}

fn masked_loss(
    p: &ModelParams,
    x: ArrayView2<'_, f64>,
    target: ArrayView2<'_, f64>,
    mask: &Array2<f64>,
) -> f64 {
    let fp = forward_with::<rand_chacha::ChaCha8Rng>(
        p,
        x,
        Mode::Train,
        0.0,
        Selection::Frozen(mask),
        None,
    )
    .expect("finite forward pass");
    loss(fp.recon.view(), target)
}

/// Compares analytic gradients of the reconstruction loss against central
/// differences, with noise off, batch statistics on, and the top-α mask
/// frozen to `mask`.
///
/// The deviation for a tensor is `max |analytic - numeric|` divided by the
/// larger of the two gradients' max magnitudes, floored at [`GRAD_FLOOR`]
/// times the largest analytic gradient entry over all tensors.
pub fn gradient_check_masked(
    params: &ModelParams,
    batch: ArrayView2<'_, f64>,
    mask: &Array2<f64>,
) -> Result<GradCheckReport> {
    let target = batch;
    let fp = forward_with::<rand_chacha::ChaCha8Rng>(
        params,
        batch,
        Mode::Train,
        0.0,
        Selection::Frozen(mask),
        None,
    )?;
    let analytic = backward(params, &fp, loss_grad(fp.recon.view(), target).view());

    let global = analytic
        .slices()
        .iter()
        .flat_map(|s| s.iter())
        .map(|v| v.abs())
        .fold(f64::MIN_POSITIVE, f64::max);
    let floor = GRAD_FLOOR * global;

    let mut probe = params.clone();
    let mut deviations = Vec::with_capacity(PARAM_NAMES.len());
    for (t, name) in PARAM_NAMES.iter().enumerate() {
        let len = analytic.slices()[t].len();
        let mut numeric = vec![0.0; len];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let orig = probe.weights.slices()[t][i];
            probe.weights.slices_mut()[t][i] = orig + FD_STEP;
            let up = masked_loss(&probe, batch, target, mask);
            probe.weights.slices_mut()[t][i] = orig - FD_STEP;
            let down = masked_loss(&probe, batch, target, mask);
            probe.weights.slices_mut()[t][i] = orig;
            *slot = (up - down) / (2.0 * FD_STEP);
        }
        let a = analytic.slices()[t];
        let scale = a
            .iter()
            .chain(&numeric)
            .map(|v| v.abs())
            .fold(floor, f64::max);
        let worst = a
            .iter()
            .zip(&numeric)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        deviations.push((*name, worst / scale));
    }
    Ok(GradCheckReport { deviations })
}

/// Freezes the mask from one noise-free forward pass at `alpha`, then runs
/// [`gradient_check_masked`]. Fails naming the worst tensor when any
/// deviation exceeds `tolerance`.
pub fn gradient_check(
    params: &ModelParams,
    batch: ArrayView2<'_, f64>,
    alpha: f64,
    bisect_iters: usize,
    tolerance: f64,
) -> Result<GradCheckReport> {
    let fp = forward_with::<rand_chacha::ChaCha8Rng>(
        params,
        batch,
        Mode::Train,
        0.0,
        Selection::TopAlpha {
            alpha,
            iters: bisect_iters,
        },
        None,
    )?;
    let report = gradient_check_masked(params, batch, &fp.mask)?;
    let (parameter, deviation) = report.worst();
    if deviation > tolerance {
        return Err(Error::GradientCheck {
            parameter: parameter.to_string(),
            deviation,
        });
    }
    Ok(report)
}
