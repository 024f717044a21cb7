//! Forecasting heads for the unstable component: a Fourier analysis layer
//! whose output concatenates cos/sin of one linear map with a GELU-activated
//! second map, and a two-layer trend MLP over the concatenation of that
//! seasonal output with the raw input window.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::parallel;
use crate::tensor::{axpy, Mat, SeriesWindow};

/// GELU variant used throughout: 0.5·x·(1 + tanh(x/√2 + 0.04475·x³)).
/// Note the inner term differs from the common √(2/π)·(x + 0.044715·x³)
/// approximation; this exact form is part of the model definition.
pub fn gelu(x: f64) -> f64 {
    let u = x / std::f64::consts::SQRT_2 + 0.04475 * x * x * x;
    0.5 * x * (1.0 + u.tanh())
}

/// d gelu / dx for the variant above.
pub fn gelu_grad(x: f64) -> f64 {
    let u = x / std::f64::consts::SQRT_2 + 0.04475 * x * x * x;
    let t = u.tanh();
    let du = 1.0 / std::f64::consts::SQRT_2 + 3.0 * 0.04475 * x * x;
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du
}

/// Uniform init in ±1/√fan_in; biases stay zero.
fn init_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize, fan_in: usize) -> Mat {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let mut m = Mat::zeros(rows, cols);
    for v in m.data.iter_mut() {
        *v = rng.gen_range(-bound..bound);
    }
    m
}

/// Parameters of the Fourier analysis head. The first map feeds cos/sin
/// (a quarter of the horizon each), the second a GELU branch (half of it).
#[derive(Debug, Clone, PartialEq)]
pub struct FanParams {
    /// (L_pred/4) × L_in.
    pub w1: Mat,
    pub b1: Vec<f64>,
    /// (L_pred/2) × L_in.
    pub w2: Mat,
    pub b2: Vec<f64>,
    pub l_in: usize,
    pub l_pred: usize,
}

impl FanParams {
    fn check_sizes(l_in: usize, l_pred: usize) -> Result<()> {
        if l_in == 0 || l_pred == 0 || l_pred % 4 != 0 {
            return Err(Error::config(format!(
                "Fourier head needs positive sizes with horizon divisible by 4, got L_in {l_in}, L_pred {l_pred}"
            )));
        }
        Ok(())
    }

    pub fn zeros(l_in: usize, l_pred: usize) -> Result<Self> {
        Self::check_sizes(l_in, l_pred)?;
        Ok(FanParams {
            w1: Mat::zeros(l_pred / 4, l_in),
            b1: vec![0.0; l_pred / 4],
            w2: Mat::zeros(l_pred / 2, l_in),
            b2: vec![0.0; l_pred / 2],
            l_in,
            l_pred,
        })
    }

    pub fn init(l_in: usize, l_pred: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Self::check_sizes(l_in, l_pred)?;
        Ok(FanParams {
            w1: init_mat(rng, l_pred / 4, l_in, l_in),
            b1: vec![0.0; l_pred / 4],
            w2: init_mat(rng, l_pred / 2, l_in, l_in),
            b2: vec![0.0; l_pred / 2],
            l_in,
            l_pred,
        })
    }

    pub fn zeros_like(&self) -> Self {
        FanParams::zeros(self.l_in, self.l_pred).expect("shape already validated")
    }

    pub fn param_count(&self) -> usize {
        self.w1.data.len() + self.b1.len() + self.w2.data.len() + self.b2.len()
    }
}

/// Parameters of the trend MLP: input length L_pred+L_in, hidden three times
/// that, output L_pred. Weights are laid out for row-vector application
/// (hidden = ReLU(z·W1 + b1), out = hidden·W2 + b2).
#[derive(Debug, Clone, PartialEq)]
pub struct TrendParams {
    /// (L_pred+L_in) × 3(L_pred+L_in).
    pub w1: Mat,
    pub b1: Vec<f64>,
    /// 3(L_pred+L_in) × L_pred.
    pub w2: Mat,
    pub b2: Vec<f64>,
    pub l_in: usize,
    pub l_pred: usize,
}

impl TrendParams {
    fn check_sizes(l_in: usize, l_pred: usize) -> Result<()> {
        if l_in == 0 || l_pred == 0 {
            return Err(Error::config(format!(
                "trend MLP needs positive sizes, got L_in {l_in}, L_pred {l_pred}"
            )));
        }
        Ok(())
    }

    pub fn zeros(l_in: usize, l_pred: usize) -> Result<Self> {
        Self::check_sizes(l_in, l_pred)?;
        let n = l_pred + l_in;
        Ok(TrendParams {
            w1: Mat::zeros(n, 3 * n),
            b1: vec![0.0; 3 * n],
            w2: Mat::zeros(3 * n, l_pred),
            b2: vec![0.0; l_pred],
            l_in,
            l_pred,
        })
    }

    pub fn init(l_in: usize, l_pred: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Self::check_sizes(l_in, l_pred)?;
        let n = l_pred + l_in;
        Ok(TrendParams {
            w1: init_mat(rng, n, 3 * n, n),
            b1: vec![0.0; 3 * n],
            w2: init_mat(rng, 3 * n, l_pred, 3 * n),
            b2: vec![0.0; l_pred],
            l_in,
            l_pred,
        })
    }

    pub fn zeros_like(&self) -> Self {
        TrendParams::zeros(self.l_in, self.l_pred).expect("shape already validated")
    }

    pub fn param_count(&self) -> usize {
        self.w1.data.len() + self.b1.len() + self.w2.data.len() + self.b2.len()
    }
}

/// Pre-activations saved by a cached FAN forward pass, one row.
#[derive(Debug, Clone)]
pub struct FanRowCache {
    /// o1 = W1·x + b1 (feeds cos and sin).
    pub o1: Vec<f64>,
    /// z = W2·x + b2 (feeds GELU).
    pub z: Vec<f64>,
}

/// One row of the Fourier head: concat(cos(o1), sin(o1), gelu(z)).
pub fn fan_forward_row(p: &FanParams, x: &[f64]) -> (Vec<f64>, FanRowCache) {
    debug_assert_eq!(x.len(), p.l_in);
    let mut o1 = p.w1.matvec(x);
    axpy(&mut o1, 1.0, &p.b1);
    let mut z = p.w2.matvec(x);
    axpy(&mut z, 1.0, &p.b2);
    let mut out = Vec::with_capacity(p.l_pred);
    out.extend(o1.iter().map(|v| v.cos()));
    out.extend(o1.iter().map(|v| v.sin()));
    out.extend(z.iter().map(|&v| gelu(v)));
    (out, FanRowCache { o1, z })
}

/// Backward of one FAN row: accumulates parameter gradients into `grads`
/// and returns ∂loss/∂x.
pub fn fan_backward_row(
    p: &FanParams,
    x: &[f64],
    cache: &FanRowCache,
    d_out: &[f64],
    grads: &mut FanParams,
) -> Vec<f64> {
    let q = p.l_pred / 4;
    let (d_cos, rest) = d_out.split_at(q);
    let (d_sin, d_g) = rest.split_at(q);
    // out = [cos o1 | sin o1 | gelu z]
    let d_o1: Vec<f64> = (0..q)
        .map(|i| -cache.o1[i].sin() * d_cos[i] + cache.o1[i].cos() * d_sin[i])
        .collect();
    let d_z: Vec<f64> = cache
        .z
        .iter()
        .zip(d_g)
        .map(|(&z, &g)| gelu_grad(z) * g)
        .collect();
    grads.w1.add_outer(&d_o1, x);
    axpy(&mut grads.b1, 1.0, &d_o1);
    grads.w2.add_outer(&d_z, x);
    axpy(&mut grads.b2, 1.0, &d_z);
    let mut d_x = p.w1.matvec_t(&d_o1);
    axpy(&mut d_x, 1.0, &p.w2.matvec_t(&d_z));
    d_x
}

/// FAN over a batch of rows (B×L_in -> B×L_pred).
pub fn fan_forward(p: &FanParams, x: &Mat) -> Result<Mat> {
    if x.cols != p.l_in {
        return Err(Error::shape(format!(
            "Fourier head expects width {}, got {}",
            p.l_in, x.cols
        )));
    }
    let rows: Vec<Vec<f64>> = (0..x.rows)
        .map(|r| fan_forward_row(p, x.row(r)).0)
        .collect();
    Mat::from_rows(&rows)
}

/// FAN applied to every (batch, channel) row of a window with shared
/// parameters: B×C×L_in -> B×C×L_pred.
pub fn fan_forward_window(p: &FanParams, w: &SeriesWindow) -> Result<SeriesWindow> {
    if w.len != p.l_in {
        return Err(Error::shape(format!(
            "Fourier head expects window length {}, got {}",
            p.l_in, w.len
        )));
    }
    let rows = parallel::map_indexed(w.rows(), |i| fan_forward_row(p, w.flat_row(i)).0);
    SeriesWindow::from_rows(w.batch, w.channels, rows)
}

/// Hidden pre-activation saved by a cached trend forward pass, one row.
#[derive(Debug, Clone)]
pub struct TrendRowCache {
    /// pre = z·W1 + b1, before ReLU.
    pub pre: Vec<f64>,
}

/// One row of the trend MLP: ReLU(z·W1 + b1)·W2 + b2.
pub fn trend_forward_row(p: &TrendParams, z: &[f64]) -> (Vec<f64>, TrendRowCache) {
    debug_assert_eq!(z.len(), p.l_in + p.l_pred);
    let mut pre = p.w1.matvec_t(z);
    axpy(&mut pre, 1.0, &p.b1);
    let hidden: Vec<f64> = pre.iter().map(|&v| v.max(0.0)).collect();
    let mut out = p.w2.matvec_t(&hidden);
    axpy(&mut out, 1.0, &p.b2);
    (out, TrendRowCache { pre })
}

/// Backward of one trend row: accumulates parameter gradients and returns
/// ∂loss/∂z. The ReLU subgradient at exactly zero is taken as zero.
pub fn trend_backward_row(
    p: &TrendParams,
    z: &[f64],
    cache: &TrendRowCache,
    d_out: &[f64],
    grads: &mut TrendParams,
) -> Vec<f64> {
    let hidden: Vec<f64> = cache.pre.iter().map(|&v| v.max(0.0)).collect();
    grads.w2.add_outer(&hidden, d_out);
    axpy(&mut grads.b2, 1.0, d_out);
    let d_hidden = p.w2.matvec(d_out);
    let d_pre: Vec<f64> = cache
        .pre
        .iter()
        .zip(&d_hidden)
        .map(|(&pre, &g)| if pre > 0.0 { g } else { 0.0 })
        .collect();
    grads.w1.add_outer(z, &d_pre);
    axpy(&mut grads.b1, 1.0, &d_pre);
    p.w1.matvec(&d_pre)
}

/// Trend MLP over every (batch, channel) row: B×C×(L_pred+L_in) -> B×C×L_pred.
pub fn trend_mlp(p: &TrendParams, w: &SeriesWindow) -> Result<SeriesWindow> {
    if w.len != p.l_in + p.l_pred {
        return Err(Error::shape(format!(
            "trend MLP expects window length {}, got {}",
            p.l_in + p.l_pred,
            w.len
        )));
    }
    let rows = parallel::map_indexed(w.rows(), |i| trend_forward_row(p, w.flat_row(i)).0);
    SeriesWindow::from_rows(w.batch, w.channels, rows)
}

/// Seasonal output concatenated with the raw input, one row: [Z1 | x_raw].
/// With the Fourier head disabled, Z1 is a zero block of the same length.
pub fn concat_seasonal_raw(z1: &[f64], x_raw: &[f64]) -> Vec<f64> {
    let mut z2 = Vec::with_capacity(z1.len() + x_raw.len());
    z2.extend_from_slice(z1);
    z2.extend_from_slice(x_raw);
    z2
}

/// Unstable-component forecast: FAN on the non-stable part (or zeros when the
/// head is disabled), concatenated with the raw window, through the trend MLP.
pub fn nonstationary_head(
    x_non_stable: &SeriesWindow,
    x_original: &SeriesWindow,
    fan: Option<&FanParams>,
    trend: &TrendParams,
) -> Result<SeriesWindow> {
    if !x_non_stable.same_shape(x_original) {
        return Err(Error::shape(format!(
            "component window {} vs raw window {}",
            x_non_stable.shape_str(),
            x_original.shape_str()
        )));
    }
    if x_non_stable.len != trend.l_in {
        return Err(Error::shape(format!(
            "head expects input length {}, got {}",
            trend.l_in, x_non_stable.len
        )));
    }
    let l_pred = trend.l_pred;
    let rows = parallel::map_indexed(x_non_stable.rows(), |i| {
        let z1 = match fan {
            Some(p) => fan_forward_row(p, x_non_stable.flat_row(i)).0,
            None => vec![0.0; l_pred],
        };
        let z2 = concat_seasonal_raw(&z1, x_original.flat_row(i));
        trend_forward_row(trend, &z2).0
    });
    SeriesWindow::from_rows(x_non_stable.batch, x_non_stable.channels, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn gelu_anchor_values() {
        assert_eq!(gelu(0.0), 0.0);
        assert!((gelu(10.0) - 10.0).abs() < 1e-6, "tanh saturates for large x");
        assert!((gelu(1.0) - 0.8181).abs() < 1e-3);
    }

    #[test]
    fn gelu_monotone_on_low_range_and_asymptotic() {
        let mut prev = gelu(0.0);
        for i in 1..=300 {
            let x = i as f64 * 0.01;
            let y = gelu(x);
            assert!(y >= prev, "not monotone at x = {x}");
            prev = y;
        }
        assert!((gelu(10.0) / 10.0 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn gelu_grad_matches_central_differences() {
        let h = 1e-6;
        for &x in &[-3.0, -1.0, -0.1, 0.0, 0.1, 0.7, 1.0, 2.5] {
            let numeric = (gelu(x + h) - gelu(x - h)) / (2.0 * h);
            let analytic = gelu_grad(x);
            assert!(
                (numeric - analytic).abs() < 1e-7,
                "x = {x}: {analytic} vs {numeric}"
            );
        }
    }

    #[test]
    fn zero_fan_params_emit_ones_then_zeros() {
        let p = FanParams::zeros(8, 8).unwrap();
        let (out, _) = fan_forward_row(&p, &[1.0; 8]);
        assert_eq!(&out[..2], &[1.0, 1.0], "cos(0) block");
        assert!(out[2..].iter().all(|&v| v == 0.0), "sin(0) and gelu(0) blocks");
    }

    #[test]
    fn fan_trig_block_stays_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let p = FanParams::init(8, 8, &mut rng).unwrap();
        let x: Vec<f64> = (0..8).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let (out, _) = fan_forward_row(&p, &x);
        assert!(out[..4].iter().all(|v| (-1.0..=1.0).contains(v)));
    }

    #[test]
    fn fan_rejects_bad_horizon() {
        assert!(FanParams::zeros(8, 6).is_err());
        assert!(FanParams::zeros(8, 0).is_err());
    }

    #[test]
    fn fan_window_shares_weights_across_channels() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let p = FanParams::init(8, 4, &mut rng).unwrap();
        // Both channels carry the same row, so both outputs must match.
        let w = SeriesWindow::from_fn(1, 2, 8, |_, _, t| (t as f64 * 0.3).sin());
        let out = fan_forward_window(&p, &w).unwrap();
        assert_eq!(out.row(0, 0), out.row(0, 1));
        assert_eq!(out.len, 4);
    }

    #[test]
    fn zero_trend_weights_broadcast_bias() {
        let mut p = TrendParams::zeros(4, 4).unwrap();
        p.b2 = vec![1.5, -2.0, 0.0, 7.0];
        let w = SeriesWindow::from_fn(2, 2, 8, |b, c, t| (b + c + t) as f64);
        let out = trend_mlp(&p, &w).unwrap();
        for b in 0..2 {
            for c in 0..2 {
                assert_eq!(out.row(b, c), p.b2.as_slice());
            }
        }
    }

    #[test]
    fn relu_gate_blocks_negative_bias() {
        let mut p = TrendParams::zeros(4, 4).unwrap();
        p.b1 = vec![-1.0; p.b1.len()];
        for v in p.w2.data.iter_mut() {
            *v = 3.0;
        }
        let (out, _) = trend_forward_row(&p, &[5.0; 8]);
        assert!(out.iter().all(|&v| v == 0.0), "hidden should be gated to zero");
    }

    #[test]
    fn head_output_shape_and_no_fan_variant() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let fan = FanParams::init(8, 8, &mut rng).unwrap();
        let trend = TrendParams::init(8, 8, &mut rng).unwrap();
        let ns = SeriesWindow::from_fn(3, 2, 8, |b, c, t| (b * c + t) as f64 * 0.1);
        let raw = SeriesWindow::from_fn(3, 2, 8, |b, c, t| (b + c * t) as f64 * 0.1);
        let out = nonstationary_head(&ns, &raw, Some(&fan), &trend).unwrap();
        assert_eq!((out.batch, out.channels, out.len), (3, 2, 8));

        // Disabling the Fourier head must change the output (Z1 -> zeros).
        let out_no_fan = nonstationary_head(&ns, &raw, None, &trend).unwrap();
        assert_ne!(out.as_slice(), out_no_fan.as_slice());
    }

    #[test]
    fn head_with_zero_params_broadcasts_trend_bias() {
        let fan = FanParams::zeros(8, 8).unwrap();
        let mut trend = TrendParams::zeros(8, 8).unwrap();
        trend.b2 = (0..8).map(|i| i as f64).collect();
        let ns = SeriesWindow::from_fn(2, 1, 8, |_, _, t| t as f64);
        let out = nonstationary_head(&ns, &ns, Some(&fan), &trend).unwrap();
        for b in 0..2 {
            assert_eq!(out.row(b, 0), trend.b2.as_slice());
        }
    }

    #[test]
    fn channel_permutation_permutes_head_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let fan = FanParams::init(8, 8, &mut rng).unwrap();
        let trend = TrendParams::init(8, 8, &mut rng).unwrap();
        let ns = SeriesWindow::from_fn(1, 3, 8, |_, c, t| ((c + 1) * t) as f64 * 0.05);
        let raw = SeriesWindow::from_fn(1, 3, 8, |_, c, t| ((c + 2) * t) as f64 * 0.05);
        let perm = [2usize, 0, 1];
        let ns_p = SeriesWindow::from_fn(1, 3, 8, |_, c, t| ns.row(0, perm[c])[t]);
        let raw_p = SeriesWindow::from_fn(1, 3, 8, |_, c, t| raw.row(0, perm[c])[t]);
        let out = nonstationary_head(&ns, &raw, Some(&fan), &trend).unwrap();
        let out_p = nonstationary_head(&ns_p, &raw_p, Some(&fan), &trend).unwrap();
        for c in 0..3 {
            assert_eq!(out_p.row(0, c), out.row(0, perm[c]));
        }
    }

    #[test]
    fn fan_backward_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let p = FanParams::init(6, 8, &mut rng).unwrap();
        let x: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let d_out: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |p: &FanParams| -> f64 {
            let (out, _) = fan_forward_row(p, &x);
            out.iter().zip(&d_out).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = fan_forward_row(&p, &x);
        let mut grads = p.zeros_like();
        let d_x = fan_backward_row(&p, &x, &cache, &d_out, &mut grads);
        let h = 1e-5;
        let check = |get: &dyn Fn(&FanParams) -> &[f64],
                     get_mut: &dyn Fn(&mut FanParams) -> &mut [f64],
                     grad: &[f64],
                     name: &str| {
            for i in 0..grad.len() {
                let mut pp = p.clone();
                get_mut(&mut pp)[i] += h;
                let mut pm = p.clone();
                get_mut(&mut pm)[i] -= h;
                let numeric = (loss(&pp) - loss(&pm)) / (2.0 * h);
                let denom = grad[i].abs().max(numeric.abs()).max(1e-8);
                assert!(
                    (grad[i] - numeric).abs() / denom < 1e-4,
                    "{name}[{i}]: {} vs {numeric} (value {})",
                    grad[i],
                    get(&p)[i]
                );
            }
        };
        check(&|p| &p.w1.data, &|p| &mut p.w1.data, &grads.w1.data, "dW1");
        check(&|p| &p.b1, &|p| &mut p.b1, &grads.b1, "db1");
        check(&|p| &p.w2.data, &|p| &mut p.w2.data, &grads.w2.data, "dW2");
        check(&|p| &p.b2, &|p| &mut p.b2, &grads.b2, "db2");

        // Input gradient too.
        for i in 0..x.len() {
            let mut xp = x.clone();
            xp[i] += h;
            let mut xm = x.clone();
            xm[i] -= h;
            let f = |xv: &[f64]| -> f64 {
                let (out, _) = fan_forward_row(&p, xv);
                out.iter().zip(&d_out).map(|(a, b)| a * b).sum()
            };
            let numeric = (f(&xp) - f(&xm)) / (2.0 * h);
            let denom = d_x[i].abs().max(numeric.abs()).max(1e-8);
            assert!((d_x[i] - numeric).abs() / denom < 1e-4, "dx[{i}]");
        }
    }

    #[test]
    fn trend_backward_matches_central_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(36);
        let p = TrendParams::init(4, 4, &mut rng).unwrap();
        let z: Vec<f64> = (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let d_out: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let loss = |p: &TrendParams, z: &[f64]| -> f64 {
            let (out, _) = trend_forward_row(p, z);
            out.iter().zip(&d_out).map(|(a, b)| a * b).sum()
        };
        let (_, cache) = trend_forward_row(&p, &z);
        let mut grads = p.zeros_like();
        let d_z = trend_backward_row(&p, &z, &cache, &d_out, &mut grads);
        let h = 1e-5;

        let flat_param =
            |p: &TrendParams, i: usize| -> (usize, usize) {
                // Order: w1, b1, w2, b2.
                let s1 = p.w1.data.len();
                let s2 = s1 + p.b1.len();
                let s3 = s2 + p.w2.data.len();
                if i < s1 {
                    (0, i)
                } else if i < s2 {
                    (1, i - s1)
                } else if i < s3 {
                    (2, i - s2)
                } else {
                    (3, i - s3)
                }
            };
        let total = p.w1.data.len() + p.b1.len() + p.w2.data.len() + p.b2.len();
        let grad_at = |i: usize| -> f64 {
            match flat_param(&p, i) {
                (0, j) => grads.w1.data[j],
                (1, j) => grads.b1[j],
                (2, j) => grads.w2.data[j],
                (_, j) => grads.b2[j],
            }
        };
        let perturb = |i: usize, delta: f64| -> TrendParams {
            let mut q = p.clone();
            match flat_param(&p, i) {
                (0, j) => q.w1.data[j] += delta,
                (1, j) => q.b1[j] += delta,
                (2, j) => q.w2.data[j] += delta,
                (_, j) => q.b2[j] += delta,
            }
            q
        };
        // Sample a spread of coordinates; the full set is large.
        for i in (0..total).step_by(97) {
            let numeric = (loss(&perturb(i, h), &z) - loss(&perturb(i, -h), &z)) / (2.0 * h);
            let analytic = grad_at(i);
            let denom = analytic.abs().max(numeric.abs()).max(1e-8);
            assert!(
                (analytic - numeric).abs() / denom < 1e-4,
                "param {i}: {analytic} vs {numeric}"
            );
        }
        for i in 0..z.len() {
            let mut zp = z.clone();
            zp[i] += h;
            let mut zm = z.clone();
            zm[i] -= h;
            let numeric = (loss(&p, &zp) - loss(&p, &zm)) / (2.0 * h);
            let denom = d_z[i].abs().max(numeric.abs()).max(1e-8);
            assert!((d_z[i] - numeric).abs() / denom < 1e-4, "dz[{i}]");
        }
    }
}
