//! Composite training objective: squared error on the stable branch,
//! absolute error on the unstable branch, and a spectral-magnitude penalty
//! tying the stable forecast to the target's amplitude spectrum — plus the
//! gradients of each term with respect to the predictions.

use crate::error::{Error, Result};
use crate::model::ForecastPair;
use crate::spectral::{self, WindowDecomposition};
use crate::tensor::SeriesWindow;

/// Decomposes the target horizon into its own stable/unstable parts. The
/// result is a constant label: no gradient flows through it.
pub fn target_decompose(y: &SeriesWindow, k: usize) -> Result<WindowDecomposition> {
    spectral::decompose_window(y, k)
}

fn check_pair(pred: &SeriesWindow, target: &SeriesWindow) -> Result<()> {
    if !pred.same_shape(target) {
        return Err(Error::shape(format!(
            "prediction {} and target {} differ",
            pred.shape_str(),
            target.shape_str()
        )));
    }
    if pred.as_slice().is_empty() {
        return Err(Error::invalid("loss over an empty window"));
    }
    Ok(())
}

/// Mean squared error over every element.
pub fn loss_stable(pred: &SeriesWindow, target: &SeriesWindow) -> Result<f64> {
    check_pair(pred, target)?;
    let n = pred.as_slice().len() as f64;
    Ok(pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / n)
}

/// ∂MSE/∂pred.
pub fn loss_stable_grad(pred: &SeriesWindow, target: &SeriesWindow) -> Result<SeriesWindow> {
    check_pair(pred, target)?;
    let n = pred.as_slice().len() as f64;
    let mut out = SeriesWindow::zeros(pred.batch, pred.channels, pred.len);
    for ((o, p), t) in out
        .as_mut_slice()
        .iter_mut()
        .zip(pred.as_slice())
        .zip(target.as_slice())
    {
        *o = 2.0 * (p - t) / n;
    }
    Ok(out)
}

/// Mean absolute error over every element.
pub fn loss_non_stable(pred: &SeriesWindow, target: &SeriesWindow) -> Result<f64> {
    check_pair(pred, target)?;
    let n = pred.as_slice().len() as f64;
    Ok(pred
        .as_slice()
        .iter()
        .zip(target.as_slice())
        .map(|(p, t)| (p - t).abs())
        .sum::<f64>()
        / n)
}

/// ∂MAE/∂pred: the sign of the residual, with the subgradient 0 exactly at
/// zero (`f64::signum` maps ±0.0 to ±1, which would bias ties).
pub fn loss_non_stable_grad(pred: &SeriesWindow, target: &SeriesWindow) -> Result<SeriesWindow> {
    check_pair(pred, target)?;
    let n = pred.as_slice().len() as f64;
    let mut out = SeriesWindow::zeros(pred.batch, pred.channels, pred.len);
    for ((o, p), t) in out
        .as_mut_slice()
        .iter_mut()
        .zip(pred.as_slice())
        .zip(target.as_slice())
    {
        let d = p - t;
        *o = if d == 0.0 { 0.0 } else { d.signum() / n };
    }
    Ok(out)
}

/// Mean squared difference between the amplitude spectra of prediction and
/// target rows, averaged over rows and one-sided bins. Phase-blind: shifting
/// a signal in time does not change this term.
pub fn loss_freq(pred: &SeriesWindow, target: &SeriesWindow) -> Result<f64> {
    check_pair(pred, target)?;
    let rows = pred.rows();
    let mut acc = 0.0;
    let mut count = 0usize;
    for i in 0..rows {
        let mp = spectral::amplitude_spectrum(pred.flat_row(i))?;
        let mt = spectral::amplitude_spectrum(target.flat_row(i))?;
        for (a, b) in mp.iter().zip(&mt) {
            acc += (a - b) * (a - b);
            count += 1;
        }
    }
    Ok(acc / count as f64)
}

/// ∂loss_freq/∂pred via the amplitude-spectrum adjoint, row by row.
pub fn loss_freq_grad(pred: &SeriesWindow, target: &SeriesWindow) -> Result<SeriesWindow> {
    check_pair(pred, target)?;
    let rows = pred.rows();
    let bins = pred.len / 2 + 1;
    let scale = 1.0 / (rows * bins) as f64;
    let mut out = SeriesWindow::zeros(pred.batch, pred.channels, pred.len);
    for i in 0..rows {
        let mp = spectral::amplitude_spectrum(pred.flat_row(i))?;
        let mt = spectral::amplitude_spectrum(target.flat_row(i))?;
        let g: Vec<f64> = mp
            .iter()
            .zip(&mt)
            .map(|(a, b)| 2.0 * (a - b) * scale)
            .collect();
        let d_row = spectral::amplitude_spectrum_vjp(pred.flat_row(i), &g)?;
        out.row_mut(i / pred.channels, i % pred.channels)
            .copy_from_slice(&d_row);
    }
    Ok(out)
}

/// Mixing coefficients for the three terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub stable: f64,
    pub non_stable: f64,
    pub freq: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            stable: 0.5,
            non_stable: 0.2,
            freq: 0.3,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("stable", self.stable),
            ("non_stable", self.non_stable),
            ("freq", self.freq),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::config(format!(
                    "loss weight `{name}` must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// The three raw terms and their weighted sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub stable: f64,
    pub non_stable: f64,
    pub freq: f64,
    pub total: f64,
}

/// Weighted sum of already-computed terms.
pub fn combine(stable: f64, non_stable: f64, freq: f64, w: &LossWeights) -> LossBreakdown {
    LossBreakdown {
        stable,
        non_stable,
        freq,
        total: w.stable * stable + w.non_stable * non_stable + w.freq * freq,
    }
}

/// Full composite loss: decomposes the target with the model's `k`, then
/// scores the stable forecast against the target's stable part (squared and
/// spectral) and the unstable forecast against the unstable part (absolute).
pub fn loss_total(
    pair: &ForecastPair,
    y: &SeriesWindow,
    k: usize,
    w: &LossWeights,
) -> Result<LossBreakdown> {
    let yd = target_decompose(y, k)?;
    let l_stable = loss_stable(&pair.stable_pred, &yd.stable)?;
    let l_non_stable = loss_non_stable(&pair.nonstable_pred, &yd.non_stable)?;
    let l_freq = loss_freq(&pair.stable_pred, &yd.stable)?;
    Ok(combine(l_stable, l_non_stable, l_freq, w))
}

/// Composite loss plus its gradients on the two prediction branches, given a
/// target decomposition computed once per batch.
pub fn composite_grads(
    pair: &ForecastPair,
    y_stable: &SeriesWindow,
    y_non_stable: &SeriesWindow,
    w: &LossWeights,
) -> Result<(SeriesWindow, SeriesWindow, LossBreakdown)> {
    let l_stable = loss_stable(&pair.stable_pred, y_stable)?;
    let l_non_stable = loss_non_stable(&pair.nonstable_pred, y_non_stable)?;
    let l_freq = loss_freq(&pair.stable_pred, y_stable)?;
    let breakdown = combine(l_stable, l_non_stable, l_freq, w);

    let g_mse = loss_stable_grad(&pair.stable_pred, y_stable)?;
    let g_freq = loss_freq_grad(&pair.stable_pred, y_stable)?;
    let mut d_stable = SeriesWindow::zeros(g_mse.batch, g_mse.channels, g_mse.len);
    for ((o, a), b) in d_stable
        .as_mut_slice()
        .iter_mut()
        .zip(g_mse.as_slice())
        .zip(g_freq.as_slice())
    {
        *o = w.stable * a + w.freq * b;
    }

    let g_mae = loss_non_stable_grad(&pair.nonstable_pred, y_non_stable)?;
    let mut d_non_stable = SeriesWindow::zeros(g_mae.batch, g_mae.channels, g_mae.len);
    for (o, a) in d_non_stable.as_mut_slice().iter_mut().zip(g_mae.as_slice()) {
        *o = w.non_stable * a;
    }
    Ok((d_stable, d_non_stable, breakdown))
}

/// Single-term objective for the plain-loss ablation: MSE of the summed
/// forecast against the raw target.
pub fn plain_mse(total: &SeriesWindow, y: &SeriesWindow) -> Result<f64> {
    loss_stable(total, y)
}

/// ∂plain_mse/∂total. Both branches receive this same gradient because the
/// sum routes it through unchanged.
pub fn plain_mse_grad(total: &SeriesWindow, y: &SeriesWindow) -> Result<SeriesWindow> {
    loss_stable_grad(total, y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn window_from(values: &[f64]) -> SeriesWindow {
        SeriesWindow::from_vec(1, 1, values.len(), values.to_vec()).unwrap()
    }

    fn random_window(seed: u64, b: usize, c: usize, l: usize) -> SeriesWindow {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        SeriesWindow::from_fn(b, c, l, |_, _, _| rng.gen_range(-1.0..1.0))
    }

    #[test]
    fn combine_is_the_stated_weighted_sum() {
        let w = LossWeights::default();
        assert_eq!(combine(1.0, 1.0, 1.0, &w).total, 1.0);
        assert_eq!(combine(2.0, 5.0, 10.0, &w).total, 5.0);
    }

    #[test]
    fn mse_and_mae_hand_values() {
        let pred = window_from(&[1.0, 2.0]);
        let target = window_from(&[0.0, 0.0]);
        assert!((loss_stable(&pred, &target).unwrap() - 2.5).abs() < 1e-15);
        assert!((loss_non_stable(&pred, &target).unwrap() - 1.5).abs() < 1e-15);
    }

    #[test]
    fn losses_vanish_when_prediction_equals_target() {
        let x = random_window(1, 2, 2, 8);
        assert_eq!(loss_stable(&x, &x).unwrap(), 0.0);
        assert_eq!(loss_non_stable(&x, &x).unwrap(), 0.0);
        assert!(loss_freq(&x, &x).unwrap() < 1e-24);
    }

    #[test]
    fn freq_loss_zero_pred_vs_constant_one() {
        let pred = window_from(&[0.0; 4]);
        let target = window_from(&[1.0; 4]);
        // Target spectrum magnitudes are (4, 0, 0); mean square = 16/3.
        let got = loss_freq(&pred, &target).unwrap();
        assert!((got - 16.0 / 3.0).abs() < 1e-9, "got {got}");
    }

    #[test]
    fn freq_loss_is_blind_to_time_shift() {
        let l = 32;
        let base: Vec<f64> = (0..l)
            .map(|t| (2.0 * std::f64::consts::PI * 3.0 * t as f64 / l as f64).sin())
            .collect();
        let shifted: Vec<f64> = (0..l)
            .map(|t| (2.0 * std::f64::consts::PI * 3.0 * ((t + 5) % l) as f64 / l as f64).sin())
            .collect();
        let got = loss_freq(&window_from(&base), &window_from(&shifted)).unwrap();
        assert!(got <= 1e-9, "got {got}");
    }

    #[test]
    fn mae_subgradient_is_zero_on_ties() {
        let pred = window_from(&[1.0, 2.0, 3.0, 4.0]);
        let target = window_from(&[1.0, 5.0, 3.0, 0.0]);
        let g = loss_non_stable_grad(&pred, &target).unwrap();
        assert_eq!(g.as_slice(), &[0.0, -0.25, 0.0, 0.25]);
    }

    #[test]
    fn mse_gradient_matches_central_differences() {
        let pred = random_window(10, 2, 1, 8);
        let target = random_window(11, 2, 1, 8);
        let g = loss_stable_grad(&pred, &target).unwrap();
        let h = 1e-6;
        for i in 0..pred.as_slice().len() {
            let mut plus = pred.clone();
            plus.as_mut_slice()[i] += h;
            let mut minus = pred.clone();
            minus.as_mut_slice()[i] -= h;
            let numeric = (loss_stable(&plus, &target).unwrap()
                - loss_stable(&minus, &target).unwrap())
                / (2.0 * h);
            assert!((g.as_slice()[i] - numeric).abs() < 1e-8, "coordinate {i}");
        }
    }

    #[test]
    fn mae_gradient_matches_central_differences_away_from_kinks() {
        let target = random_window(21, 2, 1, 8);
        let mut pred = target.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for v in pred.as_mut_slice() {
            // Keep every residual well away from the non-differentiable point.
            let sign = if rng.gen_range(0..2) == 0 { -1.0 } else { 1.0 };
            *v += sign * rng.gen_range(0.5..1.0);
        }
        let g = loss_non_stable_grad(&pred, &target).unwrap();
        let h = 1e-6;
        for i in 0..pred.as_slice().len() {
            let mut plus = pred.clone();
            plus.as_mut_slice()[i] += h;
            let mut minus = pred.clone();
            minus.as_mut_slice()[i] -= h;
            let numeric = (loss_non_stable(&plus, &target).unwrap()
                - loss_non_stable(&minus, &target).unwrap())
                / (2.0 * h);
            assert!((g.as_slice()[i] - numeric).abs() < 1e-8, "coordinate {i}");
        }
    }

    #[test]
    fn freq_gradient_matches_central_differences() {
        let pred = random_window(30, 2, 1, 8);
        let target = random_window(31, 2, 1, 8);
        let g = loss_freq_grad(&pred, &target).unwrap();
        let h = 1e-6;
        for i in 0..pred.as_slice().len() {
            let mut plus = pred.clone();
            plus.as_mut_slice()[i] += h;
            let mut minus = pred.clone();
            minus.as_mut_slice()[i] -= h;
            let numeric = (loss_freq(&plus, &target).unwrap()
                - loss_freq(&minus, &target).unwrap())
                / (2.0 * h);
            let denom = g.as_slice()[i].abs().max(numeric.abs()).max(1e-8);
            assert!(
                (g.as_slice()[i] - numeric).abs() / denom < 1e-4,
                "coordinate {i}: analytic {} vs numeric {numeric}",
                g.as_slice()[i]
            );
        }
    }

    #[test]
    fn doubling_weights_doubles_the_total() {
        let w = LossWeights::default();
        let doubled = LossWeights {
            stable: 1.0,
            non_stable: 0.4,
            freq: 0.6,
        };
        let a = combine(1.3, 0.7, 2.1, &w);
        let b = combine(1.3, 0.7, 2.1, &doubled);
        assert!((b.total - 2.0 * a.total).abs() < 1e-12);
        assert_eq!(a.stable, b.stable, "raw terms are weight-independent");
    }

    #[test]
    fn loss_total_combines_terms_from_the_target_decomposition() {
        use crate::model::{aefin_forward, AefinModel, ModelConfig};
        let cfg = ModelConfig {
            l_in: 8,
            l_pred: 8,
            k: 2,
            channels: 1,
            seed: 5,
            ..ModelConfig::default()
        };
        let m = AefinModel::init(&cfg).unwrap();
        let x = random_window(40, 2, 1, 8);
        let y = random_window(41, 2, 1, 8);
        let pair = aefin_forward(&m, &x).unwrap();
        let w = LossWeights::default();
        let b = loss_total(&pair, &y, cfg.k, &w).unwrap();
        let yd = target_decompose(&y, cfg.k).unwrap();
        let expect = combine(
            loss_stable(&pair.stable_pred, &yd.stable).unwrap(),
            loss_non_stable(&pair.nonstable_pred, &yd.non_stable).unwrap(),
            loss_freq(&pair.stable_pred, &yd.stable).unwrap(),
            &w,
        );
        assert_eq!(b, expect);
        assert!(b.total >= 0.0);
    }

    #[test]
    fn composite_grads_are_the_weighted_sums_of_term_gradients() {
        use crate::model::{aefin_forward, AefinModel, ModelConfig};
        let cfg = ModelConfig {
            l_in: 8,
            l_pred: 8,
            k: 2,
            channels: 1,
            seed: 6,
            ..ModelConfig::default()
        };
        let m = AefinModel::init(&cfg).unwrap();
        let x = random_window(50, 2, 1, 8);
        let y = random_window(51, 2, 1, 8);
        let pair = aefin_forward(&m, &x).unwrap();
        let yd = target_decompose(&y, cfg.k).unwrap();
        let w = LossWeights::default();
        let (d_stable, d_ns, _) = composite_grads(&pair, &yd.stable, &yd.non_stable, &w).unwrap();

        let g_mse = loss_stable_grad(&pair.stable_pred, &yd.stable).unwrap();
        let g_freq = loss_freq_grad(&pair.stable_pred, &yd.stable).unwrap();
        for ((d, a), b) in d_stable
            .as_slice()
            .iter()
            .zip(g_mse.as_slice())
            .zip(g_freq.as_slice())
        {
            assert!((d - (0.5 * a + 0.3 * b)).abs() < 1e-15);
        }
        let g_mae = loss_non_stable_grad(&pair.nonstable_pred, &yd.non_stable).unwrap();
        for (d, a) in d_ns.as_slice().iter().zip(g_mae.as_slice()) {
            assert!((d - 0.2 * a).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_mismatched_shapes_and_negative_weights() {
        let a = random_window(60, 1, 1, 8);
        let b = random_window(61, 1, 1, 6);
        assert!(loss_stable(&a, &b).is_err());
        assert!(LossWeights {
            stable: -0.1,
            ..LossWeights::default()
        }
        .validate()
        .is_err());
    }
}
