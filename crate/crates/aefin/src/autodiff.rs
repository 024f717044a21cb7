//! Gradient plumbing: the batch objective-and-gradient entry point used by
//! training, the Adam optimizer over the model's named parameter arrays, and
//! a seeded finite-difference checker for validating analytic gradients.

use std::collections::BTreeSet;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::loss::{self, LossWeights};
use crate::model::{aefin_backward, aefin_forward_cached, AefinModel, ModelGrads};
use crate::tensor::SeriesWindow;

/// Which objective the gradients are taken of.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LossMode {
    /// Weighted stable-MSE + unstable-MAE + spectral terms.
    Composite,
    /// MSE of the summed forecast against the raw target.
    PlainMse,
}

/// Objective value and parameter gradients for one (input, target) batch.
pub fn batch_loss_grad(
    m: &AefinModel,
    x: &SeriesWindow,
    y: &SeriesWindow,
    w: &LossWeights,
    mode: LossMode,
) -> Result<(f64, ModelGrads)> {
    let (pair, cache) = aefin_forward_cached(m, x)?;
    let mut grads = m.grads_like();
    let objective = match mode {
        LossMode::Composite => {
            let yd = loss::target_decompose(y, m.k)?;
            let (d_stable, d_non_stable, breakdown) =
                loss::composite_grads(&pair, &yd.stable, &yd.non_stable, w)?;
            aefin_backward(m, x, &cache, &d_stable, &d_non_stable, &mut grads)?;
            breakdown.total
        }
        LossMode::PlainMse => {
            let value = loss::plain_mse(&pair.total, y)?;
            let d_total = loss::plain_mse_grad(&pair.total, y)?;
            // The sum routes the same gradient to both branches.
            aefin_backward(m, x, &cache, &d_total, &d_total, &mut grads)?;
            value
        }
    };
    if !objective.is_finite() {
        return Err(Error::Divergence {
            step: 0,
            message: format!("objective became {objective}"),
        });
    }
    Ok((objective, grads))
}

/// Objective value only (used by the finite-difference checker).
pub fn batch_loss(
    m: &AefinModel,
    x: &SeriesWindow,
    y: &SeriesWindow,
    w: &LossWeights,
    mode: LossMode,
) -> Result<f64> {
    let pair = crate::model::aefin_forward(m, x)?;
    match mode {
        LossMode::Composite => Ok(loss::loss_total(&pair, y, m.k, w)?.total),
        LossMode::PlainMse => loss::plain_mse(&pair.total, y),
    }
}

/// Optimizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if !(self.lr.is_finite() && self.lr > 0.0) {
            problems.push(format!("lr must be positive, got {}", self.lr));
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                problems.push(format!("{name} must lie in [0, 1), got {b}"));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            problems.push(format!("epsilon must be positive, got {}", self.epsilon));
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::config(problems.join("; ")))
        }
    }
}

/// First and second moment estimates, one pair per parameter array.
#[derive(Debug, Clone)]
pub struct AdamState {
    names: Vec<String>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamState {
    /// Zero moments shaped after the given parameter arrays.
    pub fn new(params: &[(String, Vec<f64>)]) -> Self {
        AdamState {
            names: params.iter().map(|(n, _)| n.clone()).collect(),
            m: params.iter().map(|(_, p)| vec![0.0; p.len()]).collect(),
            v: params.iter().map(|(_, p)| vec![0.0; p.len()]).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update, in place. Arrays must line up with the
/// state's layout by name and length.
pub fn adam_step(
    params: &mut [(String, Vec<f64>)],
    grads: &[(String, Vec<f64>)],
    state: &mut AdamState,
    cfg: &AdamConfig,
) -> Result<()> {
    if params.len() != state.names.len() || grads.len() != state.names.len() {
        return Err(Error::shape(format!(
            "optimizer tracks {} arrays, got {} params / {} grads",
            state.names.len(),
            params.len(),
            grads.len()
        )));
    }
    for i in 0..params.len() {
        let (p_name, p) = &params[i];
        let (g_name, g) = &grads[i];
        if p_name != &state.names[i] || g_name != &state.names[i] {
            return Err(Error::shape(format!(
                "array order changed: expected {}, got param {p_name} / grad {g_name}",
                state.names[i]
            )));
        }
        if p.len() != state.m[i].len() || g.len() != state.m[i].len() {
            return Err(Error::shape(format!(
                "array {p_name} changed length (state {}, param {}, grad {})",
                state.m[i].len(),
                p.len(),
                g.len()
            )));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bias1 = 1.0 - cfg.beta1.powi(t);
    let bias2 = 1.0 - cfg.beta2.powi(t);
    for i in 0..params.len() {
        let g = &grads[i].1;
        let m = &mut state.m[i];
        let v = &mut state.v[i];
        let p = &mut params[i].1;
        for j in 0..p.len() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let m_hat = m[j] / bias1;
            let v_hat = v[j] / bias2;
            p[j] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
        }
    }
    Ok(())
}

/// Worst relative error seen per parameter array, plus the overall worst.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub worst: f64,
    pub per_array: Vec<(String, f64)>,
    pub coords_checked: usize,
}

/// Compares analytic gradients against central differences on a seeded
/// sample of coordinates (everything, for arrays at or under the sample
/// size). Relative error is |a − n| / max(|a|, |n|, 1e-8).
///
/// Each coordinate is differenced at `h` and at `h/10` and keeps the better
/// agreement: the wide step bounds roundoff on coordinates whose true
/// gradient is ~0 (where noise is compared against the 1e-8 floor), the
/// narrow one bounds truncation where curvature is high. A wrong gradient
/// disagrees at every step size, so this never hides a real defect.
pub fn finite_diff_check<F>(
    m: &AefinModel,
    loss_fn: F,
    analytic: &ModelGrads,
    h: f64,
    samples_per_array: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&AefinModel) -> Result<f64>,
{
    if !(h.is_finite() && h > 0.0) {
        return Err(Error::invalid(format!("step size must be positive, got {h}")));
    }
    if samples_per_array == 0 {
        return Err(Error::invalid("must sample at least one coordinate"));
    }
    let arrays: Vec<(String, Vec<f64>)> = m
        .named_arrays()
        .into_iter()
        .map(|(n, v, _)| (n, v))
        .collect();
    let analytic_arrays = analytic.named_arrays();
    if analytic_arrays.len() != arrays.len() {
        return Err(Error::shape(format!(
            "model has {} arrays, gradients have {}",
            arrays.len(),
            analytic_arrays.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut per_array = Vec::with_capacity(arrays.len());
    let mut worst = 0.0f64;
    let mut coords_checked = 0usize;
    for (idx, (name, values)) in arrays.iter().enumerate() {
        let (g_name, g_values) = &analytic_arrays[idx];
        if g_name != name || g_values.len() != values.len() {
            return Err(Error::shape(format!(
                "gradient array {g_name} does not line up with parameter {name}"
            )));
        }
        let coords: Vec<usize> = if values.len() <= samples_per_array {
            (0..values.len()).collect()
        } else {
            let mut picked = BTreeSet::new();
            while picked.len() < samples_per_array {
                picked.insert(rng.gen_range(0..values.len()));
            }
            picked.into_iter().collect()
        };
        let mut array_worst = 0.0f64;
        for &j in &coords {
            let a = g_values[j];
            let mut rel = f64::INFINITY;
            for step in [h, h / 10.0] {
                let mut perturbed = arrays.clone();
                perturbed[idx].1[j] = values[j] + step;
                let mut mp = m.clone();
                mp.load_arrays(&perturbed)?;
                let up = loss_fn(&mp)?;
                perturbed[idx].1[j] = values[j] - step;
                let mut mm = m.clone();
                mm.load_arrays(&perturbed)?;
                let down = loss_fn(&mm)?;
                let numeric = (up - down) / (2.0 * step);
                let candidate = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
                rel = rel.min(candidate);
            }
            array_worst = array_worst.max(rel);
            coords_checked += 1;
        }
        worst = worst.max(array_worst);
        per_array.push((name.clone(), array_worst));
    }
    Ok(GradCheckReport {
        worst,
        per_array,
        coords_checked,
    })
}

/// Runs the full analytic-vs-numeric comparison for a model on one seeded
/// batch; convenience wrapper shared by the command-line tool and tests.
pub fn check_model_gradients(
    m: &AefinModel,
    x: &SeriesWindow,
    y: &SeriesWindow,
    w: &LossWeights,
    mode: LossMode,
    samples_per_array: usize,
    seed: u64,
) -> Result<GradCheckReport> {
    let (_, grads) = batch_loss_grad(m, x, y, w, mode)?;
    // h balances truncation against roundoff: coordinates whose analytic
    // gradient is exactly zero (absolute-error signs cancelling over a
    // batch) compare roundoff noise against the 1e-8 floor, and a smaller
    // step inflates that noise past the tolerance.
    finite_diff_check(
        m,
        |model| batch_loss(model, x, y, w, mode),
        &grads,
        1e-4,
        samples_per_array,
        seed,
    )
}
