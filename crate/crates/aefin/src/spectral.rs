//! Frequency residual learning: one-sided real DFT, inverse, dominant-bin
//! selection, and the stable/non-stable split of an input window.
//!
//! Conventions (fixed project-wide): unnormalized forward transform
//! `bins[k] = Σ_n x[n]·e^{−i2πkn/L}` over the one-sided range k = 0..⌊L/2⌋,
//! 1/L inverse with the conjugate mirror applied implicitly so outputs are
//! exactly real. Power-of-two lengths go through a radix-2 FFT; other lengths
//! use a table-driven naive DFT.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::parallel;
use crate::tensor::SeriesWindow;

/// Smoothing floor inside magnitudes: |bin| = √(re² + im² + ε²), keeping the
/// amplitude spectrum differentiable at zero.
pub const MAG_EPS: f64 = 1e-12;

/// One-sided spectrum of a real signal of length `len`: bins k = 0..=⌊len/2⌋.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Original signal length; fixes bin count and the Nyquist position.
    pub len: usize,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

impl Spectrum {
    /// Number of one-sided bins, ⌊len/2⌋ + 1.
    pub fn bins(&self) -> usize {
        self.len / 2 + 1
    }

    /// ε-smoothed magnitude of bin k.
    pub fn magnitude(&self, k: usize) -> f64 {
        (self.re[k] * self.re[k] + self.im[k] * self.im[k] + MAG_EPS * MAG_EPS).sqrt()
    }

    fn validate(&self) -> Result<()> {
        if self.len < 2 || self.re.len() != self.bins() || self.im.len() != self.bins() {
            return Err(Error::invalid(format!(
                "malformed spectrum: len {} with {}/{} bins",
                self.len,
                self.re.len(),
                self.im.len()
            )));
        }
        Ok(())
    }
}

/// Indices of the dominant (largest-magnitude) one-sided bins, ascending,
/// with their smoothed magnitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct DominantSet {
    pub bins: Vec<usize>,
    pub magnitudes: Vec<f64>,
}

/// Stable/non-stable split of one window row. The two parts sum back to the
/// input exactly (up to float64 arithmetic).
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub stable: Vec<f64>,
    pub non_stable: Vec<f64>,
    pub dominant: DominantSet,
}

/// Per-row decomposition of a whole B×C×L window.
#[derive(Debug, Clone)]
pub struct WindowDecomposition {
    pub stable: SeriesWindow,
    pub non_stable: SeriesWindow,
    /// Dominant set per flat row (batch-major: row = b·C + c).
    pub dominant: Vec<DominantSet>,
}

/// cos/sin of 2πm/L for m = 0..L; shared by the naive DFT and the inverse.
fn trig_tables(l: usize) -> (Vec<f64>, Vec<f64>) {
    let mut cos_t = Vec::with_capacity(l);
    let mut sin_t = Vec::with_capacity(l);
    for m in 0..l {
        let ang = 2.0 * PI * m as f64 / l as f64;
        cos_t.push(ang.cos());
        sin_t.push(ang.sin());
    }
    (cos_t, sin_t)
}

/// Iterative radix-2 Cooley-Tukey, in place; `re.len()` must be a power of two.
fn fft_in_place(re: &mut [f64], im: &mut [f64]) {
    let n = re.len();
    debug_assert!(n.is_power_of_two());
    // Bit-reversal permutation.
    let mut j = 0;
    for i in 1..n {
        let mut bit = n >> 1;
        while j & bit != 0 {
            j ^= bit;
            bit >>= 1;
        }
        j |= bit;
        if i < j {
            re.swap(i, j);
            im.swap(i, j);
        }
    }
    // Twiddles e^{−i2πm/n} for m = 0..n/2.
    let half = n / 2;
    let mut wre = Vec::with_capacity(half.max(1));
    let mut wim = Vec::with_capacity(half.max(1));
    for m in 0..half {
        let ang = -2.0 * PI * m as f64 / n as f64;
        wre.push(ang.cos());
        wim.push(ang.sin());
    }
    let mut size = 2;
    while size <= n {
        let halfsize = size / 2;
        let step = n / size;
        let mut start = 0;
        while start < n {
            let mut t = 0;
            for a in start..start + halfsize {
                let b = a + halfsize;
                let tr = re[b] * wre[t] - im[b] * wim[t];
                let ti = re[b] * wim[t] + im[b] * wre[t];
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                t += step;
            }
            start += size;
        }
        size <<= 1;
    }
}

/// Table-driven O(L·bins) DFT for non-power-of-two lengths.
fn dft_table(x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let l = x.len();
    let bins = l / 2 + 1;
    let (cos_t, sin_t) = trig_tables(l);
    let mut re = vec![0.0; bins];
    let mut im = vec![0.0; bins];
    for k in 0..bins {
        let mut sr = 0.0;
        let mut si = 0.0;
        let mut m = 0;
        for &v in x {
            // e^{−i2πkn/L} = cos(2πkn/L) − i·sin(2πkn/L); m tracks kn mod L.
            sr += v * cos_t[m];
            si -= v * sin_t[m];
            m += k;
            if m >= l {
                m -= l;
            }
        }
        re[k] = sr;
        im[k] = si;
    }
    (re, im)
}

/// One-sided unnormalized forward DFT of a real signal.
pub fn dft_real(x: &[f64]) -> Result<Spectrum> {
    let l = x.len();
    if l < 2 {
        return Err(Error::invalid(format!("dft_real needs length ≥ 2, got {l}")));
    }
    let bins = l / 2 + 1;
    let (re, im) = if l.is_power_of_two() {
        let mut fr = x.to_vec();
        let mut fi = vec![0.0; l];
        fft_in_place(&mut fr, &mut fi);
        fr.truncate(bins);
        fi.truncate(bins);
        (fr, fi)
    } else {
        dft_table(x)
    };
    Ok(Spectrum { len: l, re, im })
}

/// Inverse DFT restricted to a subset of one-sided bins. Mirror bins are
/// applied implicitly: interior bins are doubled, DC and (even-L) Nyquist are
/// not, and the whole sum carries the 1/L normalization.
pub fn idft_selected(s: &Spectrum, selected: &[usize]) -> Result<Vec<f64>> {
    s.validate()?;
    let l = s.len;
    let nyquist = if l % 2 == 0 { Some(l / 2) } else { None };
    let (cos_t, sin_t) = trig_tables(l);
    let mut out = vec![0.0; l];
    for &k in selected {
        if k >= s.bins() {
            return Err(Error::invalid(format!(
                "bin {k} out of range for {} one-sided bins",
                s.bins()
            )));
        }
        let scale = if k == 0 || Some(k) == nyquist { 1.0 } else { 2.0 };
        let rk = scale * s.re[k] / l as f64;
        let ik = scale * s.im[k] / l as f64;
        // Re(X_k·e^{+i2πkn/L}) = re·cos − im·sin; m tracks kn mod L.
        let mut m = 0;
        for o in out.iter_mut() {
            *o += rk * cos_t[m] - ik * sin_t[m];
            m += k;
            if m >= l {
                m -= l;
            }
        }
    }
    Ok(out)
}

/// Full inverse DFT: exact left inverse of `dft_real` up to float64 rounding.
pub fn idft_real(s: &Spectrum) -> Result<Vec<f64>> {
    s.validate()?;
    let all: Vec<usize> = (0..s.bins()).collect();
    idft_selected(s, &all)
}

/// The k one-sided bins with largest smoothed magnitude; ties broken toward
/// the lower bin index. DC is an eligible candidate.
pub fn topk_dominant(s: &Spectrum, k: usize) -> Result<DominantSet> {
    s.validate()?;
    let bins = s.bins();
    if k < 1 || k > bins {
        return Err(Error::invalid(format!(
            "k = {k} outside valid range 1..={bins}"
        )));
    }
    let mut order: Vec<usize> = (0..bins).collect();
    order.sort_by(|&a, &b| {
        s.magnitude(b)
            .total_cmp(&s.magnitude(a))
            .then(a.cmp(&b))
    });
    let mut chosen: Vec<usize> = order[..k].to_vec();
    chosen.sort_unstable();
    let magnitudes = chosen.iter().map(|&i| s.magnitude(i)).collect();
    Ok(DominantSet {
        bins: chosen,
        magnitudes,
    })
}

/// Splits x into its non-stable part (inverse DFT of the k dominant bins) and
/// the stable remainder x − non_stable, which reconstruct x exactly.
pub fn decompose(x: &[f64], k: usize) -> Result<Decomposition> {
    let spec = dft_real(x)?;
    let dominant = topk_dominant(&spec, k)?;
    let non_stable = idft_selected(&spec, &dominant.bins)?;
    let stable = x
        .iter()
        .zip(&non_stable)
        .map(|(a, b)| a - b)
        .collect();
    Ok(Decomposition {
        stable,
        non_stable,
        dominant,
    })
}

/// Applies `decompose` independently to every (batch, channel) row of a
/// window; dominant sets may differ per row.
pub fn decompose_window(w: &SeriesWindow, k: usize) -> Result<WindowDecomposition> {
    let rows = w.rows();
    let parts = parallel::map_indexed(rows, |i| decompose(w.flat_row(i), k));
    let mut stable_rows = Vec::with_capacity(rows);
    let mut non_stable_rows = Vec::with_capacity(rows);
    let mut dominant = Vec::with_capacity(rows);
    for part in parts {
        let d = part?;
        stable_rows.push(d.stable);
        non_stable_rows.push(d.non_stable);
        dominant.push(d.dominant);
    }
    Ok(WindowDecomposition {
        stable: SeriesWindow::from_rows(w.batch, w.channels, stable_rows)?,
        non_stable: SeriesWindow::from_rows(w.batch, w.channels, non_stable_rows)?,
        dominant,
    })
}

/// One-sided ε-smoothed magnitude spectrum of a real signal.
pub fn amplitude_spectrum(x: &[f64]) -> Result<Vec<f64>> {
    let spec = dft_real(x)?;
    Ok((0..spec.bins()).map(|k| spec.magnitude(k)).collect())
}

/// Vector-Jacobian product of `amplitude_spectrum`: given ∂l/∂magnitudes,
/// returns ∂l/∂x. Uses ∂m_k/∂re = re/m_k, ∂m_k/∂im = im/m_k and the forward
/// transform's ∂re_k/∂x[n] = cos(2πkn/L), ∂im_k/∂x[n] = −sin(2πkn/L).
pub fn amplitude_spectrum_vjp(x: &[f64], grad_mag: &[f64]) -> Result<Vec<f64>> {
    let spec = dft_real(x)?;
    if grad_mag.len() != spec.bins() {
        return Err(Error::shape(format!(
            "gradient length {} != {} bins",
            grad_mag.len(),
            spec.bins()
        )));
    }
    let l = spec.len;
    let (cos_t, sin_t) = trig_tables(l);
    let mut out = vec![0.0; l];
    for k in 0..spec.bins() {
        let m = spec.magnitude(k);
        let a = grad_mag[k] * spec.re[k] / m;
        let b = grad_mag[k] * spec.im[k] / m;
        if a == 0.0 && b == 0.0 {
            continue;
        }
        let mut idx = 0;
        for o in out.iter_mut() {
            *o += a * cos_t[idx] - b * sin_t[idx];
            idx += k;
            if idx >= l {
                idx -= l;
            }
        }
    }
    Ok(out)
}
