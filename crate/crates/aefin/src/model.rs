//! End-to-end model: decompose the input window, fuse the components with
//! cross-attention, forecast the stable part through a pluggable backbone and
//! the unstable part through the Fourier/trend heads, and sum the two.
//! Also: parameter counting and checkpoint persistence.

use std::io::Write as _;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::attention;
use crate::data::{mix_seed, NormStats};
use crate::error::{Error, Result};
use crate::heads::{
    concat_seasonal_raw, fan_backward_row, fan_forward_row, trend_backward_row, trend_forward_row,
    FanParams, FanRowCache, TrendParams, TrendRowCache,
};
use crate::parallel;
use crate::spectral;
use crate::tensor::{axpy, Mat, SeriesWindow};

/// Anything that can forecast a horizon from the fused stable component.
pub trait Backbone {
    /// B×C×L_in -> B×C×L_pred.
    fn forecast(&self, w: &SeriesWindow) -> Result<SeriesWindow>;
    fn param_count(&self) -> usize;
}

/// One shared affine map along the time axis, applied per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearBackbone {
    /// L_in × L_pred (applied as out = x·W + b for a time-row x).
    pub w: Mat,
    pub b: Vec<f64>,
    pub l_in: usize,
    pub l_pred: usize,
}

impl LinearBackbone {
    pub fn zeros(l_in: usize, l_pred: usize) -> Self {
        LinearBackbone {
            w: Mat::zeros(l_in, l_pred),
            b: vec![0.0; l_pred],
            l_in,
            l_pred,
        }
    }

    pub fn init(l_in: usize, l_pred: usize, rng: &mut ChaCha8Rng) -> Self {
        use rand::Rng;
        let bound = 1.0 / (l_in as f64).sqrt();
        let mut w = Mat::zeros(l_in, l_pred);
        for v in w.data.iter_mut() {
            *v = rng.gen_range(-bound..bound);
        }
        LinearBackbone {
            w,
            b: vec![0.0; l_pred],
            l_in,
            l_pred,
        }
    }

    pub fn zeros_like(&self) -> Self {
        LinearBackbone::zeros(self.l_in, self.l_pred)
    }

    pub fn forecast_row(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.w.matvec_t(x);
        axpy(&mut out, 1.0, &self.b);
        out
    }

    /// Accumulates parameter gradients for one row and returns ∂loss/∂x.
    pub fn backward_row(&self, x: &[f64], d_out: &[f64], grads: &mut LinearBackbone) -> Vec<f64> {
        grads.w.add_outer(x, d_out);
        axpy(&mut grads.b, 1.0, d_out);
        self.w.matvec(d_out)
    }
}

impl Backbone for LinearBackbone {
    fn forecast(&self, w: &SeriesWindow) -> Result<SeriesWindow> {
        if w.len != self.l_in {
            return Err(Error::shape(format!(
                "backbone expects input length {}, got {}",
                self.l_in, w.len
            )));
        }
        let rows = parallel::map_indexed(w.rows(), |i| self.forecast_row(w.flat_row(i)));
        SeriesWindow::from_rows(w.batch, w.channels, rows)
    }

    fn param_count(&self) -> usize {
        self.w.data.len() + self.b.len()
    }
}

/// Optional learned channel-space projections for attention queries, keys,
/// and values. Identity-initialized so enabling the flag starts from the
/// parameter-free behavior.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionParams {
    pub wq: Mat,
    pub wk: Mat,
    pub wv: Mat,
    pub channels: usize,
}

impl ProjectionParams {
    pub fn identity(channels: usize) -> Self {
        ProjectionParams {
            wq: Mat::identity(channels),
            wk: Mat::identity(channels),
            wv: Mat::identity(channels),
            channels,
        }
    }

    pub fn zeros_like(&self) -> Self {
        ProjectionParams {
            wq: Mat::zeros(self.channels, self.channels),
            wk: Mat::zeros(self.channels, self.channels),
            wv: Mat::zeros(self.channels, self.channels),
            channels: self.channels,
        }
    }

    pub fn param_count(&self) -> usize {
        3 * self.channels * self.channels
    }
}

/// Construction-time description of a model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub l_in: usize,
    pub l_pred: usize,
    pub k: usize,
    pub channels: usize,
    pub use_cross_attention: bool,
    pub use_fan: bool,
    pub use_learned_projection: bool,
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            l_in: 96,
            l_pred: 96,
            k: 1,
            channels: 1,
            use_cross_attention: true,
            use_fan: true,
            use_learned_projection: false,
            seed: 1,
        }
    }
}

impl ModelConfig {
    fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.l_in < 2 {
            problems.push(format!("l_in must be ≥ 2, got {}", self.l_in));
        }
        if self.l_pred == 0 {
            problems.push("l_pred must be positive".to_string());
        }
        if self.use_fan && self.l_pred % 4 != 0 {
            problems.push(format!(
                "l_pred must be divisible by 4 with the Fourier head enabled, got {}",
                self.l_pred
            ));
        }
        let max_k = self.l_in / 2 + 1;
        if self.k < 1 || self.k > max_k {
            problems.push(format!(
                "k = {} outside 1..={max_k} for l_in = {}",
                self.k, self.l_in
            ));
        }
        // The loss decomposes the target horizon with the same k.
        let max_k_pred = self.l_pred / 2 + 1;
        if self.l_pred >= 2 && self.k > max_k_pred {
            problems.push(format!(
                "k = {} exceeds the {} one-sided bins of the horizon",
                self.k, max_k_pred
            ));
        }
        if self.channels == 0 {
            problems.push("channels must be ≥ 1".to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::config(problems.join("; ")))
        }
    }
}

/// The assembled model. `fan = None` is the no-Fourier-head ablation (the
/// seasonal block entering the trend MLP becomes zeros).
#[derive(Debug, Clone, PartialEq)]
pub struct AefinModel {
    pub k: usize,
    pub fan: Option<FanParams>,
    pub trend: TrendParams,
    pub backbone: LinearBackbone,
    pub use_cross_attention: bool,
    pub projection: Option<ProjectionParams>,
    pub seed: u64,
}

impl AefinModel {
    /// All-zero parameters; used as a gradient accumulator and by the loader.
    pub fn zeros(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(AefinModel {
            k: cfg.k,
            fan: if cfg.use_fan {
                Some(FanParams::zeros(cfg.l_in, cfg.l_pred)?)
            } else {
                None
            },
            trend: TrendParams::zeros(cfg.l_in, cfg.l_pred)?,
            backbone: LinearBackbone::zeros(cfg.l_in, cfg.l_pred),
            use_cross_attention: cfg.use_cross_attention,
            projection: if cfg.use_learned_projection {
                Some(ProjectionParams {
                    wq: Mat::zeros(cfg.channels, cfg.channels),
                    wk: Mat::zeros(cfg.channels, cfg.channels),
                    wv: Mat::zeros(cfg.channels, cfg.channels),
                    channels: cfg.channels,
                })
            } else {
                None
            },
            seed: cfg.seed,
        })
    }

    /// Seeded initialization. Each component draws from its own stream, so
    /// toggling one ablation flag does not shift the others' weights.
    pub fn init(cfg: &ModelConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng_backbone = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 1));
        let mut rng_fan = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 2));
        let mut rng_trend = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, 3));
        Ok(AefinModel {
            k: cfg.k,
            fan: if cfg.use_fan {
                Some(FanParams::init(cfg.l_in, cfg.l_pred, &mut rng_fan)?)
            } else {
                None
            },
            trend: TrendParams::init(cfg.l_in, cfg.l_pred, &mut rng_trend)?,
            backbone: LinearBackbone::init(cfg.l_in, cfg.l_pred, &mut rng_backbone),
            use_cross_attention: cfg.use_cross_attention,
            projection: if cfg.use_learned_projection {
                Some(ProjectionParams::identity(cfg.channels))
            } else {
                None
            },
            seed: cfg.seed,
        })
    }

    pub fn l_in(&self) -> usize {
        self.trend.l_in
    }

    pub fn l_pred(&self) -> usize {
        self.trend.l_pred
    }

    pub fn use_fan(&self) -> bool {
        self.fan.is_some()
    }

    /// The config this model was built from (channel count only known with
    /// projections; otherwise reported as `fallback_channels`).
    pub fn config(&self, fallback_channels: usize) -> ModelConfig {
        ModelConfig {
            l_in: self.l_in(),
            l_pred: self.l_pred(),
            k: self.k,
            channels: self
                .projection
                .as_ref()
                .map_or(fallback_channels, |p| p.channels),
            use_cross_attention: self.use_cross_attention,
            use_fan: self.use_fan(),
            use_learned_projection: self.projection.is_some(),
            seed: self.seed,
        }
    }

    /// Total learnable scalar count. Attention contributes zero unless the
    /// learned-projection flag is on.
    pub fn param_count(&self) -> usize {
        self.backbone.param_count()
            + self.fan.as_ref().map_or(0, |f| f.param_count())
            + self.trend.param_count()
            + self.projection.as_ref().map_or(0, |p| p.param_count())
    }

    /// Gradient accumulator with this model's exact shapes, all zeros.
    pub fn grads_like(&self) -> ModelGrads {
        ModelGrads {
            backbone: self.backbone.zeros_like(),
            fan: self.fan.as_ref().map(|f| f.zeros_like()),
            trend: self.trend.zeros_like(),
            projection: self.projection.as_ref().map(|p| p.zeros_like()),
        }
    }

    /// Canonical (name, values, dims) listing of every learnable array.
    /// The order is fixed and shared by checkpoints, Adam state, and
    /// gradient flattening.
    pub fn named_arrays(&self) -> Vec<(String, Vec<f64>, Vec<usize>)> {
        let mut out = vec![
            (
                "backbone.w".to_string(),
                self.backbone.w.data.clone(),
                vec![self.backbone.w.rows, self.backbone.w.cols],
            ),
            (
                "backbone.b".to_string(),
                self.backbone.b.clone(),
                vec![self.backbone.b.len()],
            ),
        ];
        if let Some(f) = &self.fan {
            out.push(("fan.w1".to_string(), f.w1.data.clone(), vec![f.w1.rows, f.w1.cols]));
            out.push(("fan.b1".to_string(), f.b1.clone(), vec![f.b1.len()]));
            out.push(("fan.w2".to_string(), f.w2.data.clone(), vec![f.w2.rows, f.w2.cols]));
            out.push(("fan.b2".to_string(), f.b2.clone(), vec![f.b2.len()]));
        }
        let t = &self.trend;
        out.push(("trend.w1".to_string(), t.w1.data.clone(), vec![t.w1.rows, t.w1.cols]));
        out.push(("trend.b1".to_string(), t.b1.clone(), vec![t.b1.len()]));
        out.push(("trend.w2".to_string(), t.w2.data.clone(), vec![t.w2.rows, t.w2.cols]));
        out.push(("trend.b2".to_string(), t.b2.clone(), vec![t.b2.len()]));
        if let Some(p) = &self.projection {
            for (name, m) in [("proj.wq", &p.wq), ("proj.wk", &p.wk), ("proj.wv", &p.wv)] {
                out.push((name.to_string(), m.data.clone(), vec![m.rows, m.cols]));
            }
        }
        out
    }

    /// Writes flat arrays back in `named_arrays` order; shapes must match.
    pub fn load_arrays(&mut self, arrays: &[(String, Vec<f64>)]) -> Result<()> {
        let expected = self.named_arrays();
        if arrays.len() != expected.len() {
            return Err(Error::shape(format!(
                "expected {} parameter arrays, got {}",
                expected.len(),
                arrays.len()
            )));
        }
        for ((name, values), (want_name, want_values, _)) in arrays.iter().zip(&expected) {
            if name != want_name || values.len() != want_values.len() {
                return Err(Error::shape(format!(
                    "array {name} ({} values) does not match expected {want_name} ({})",
                    values.len(),
                    want_values.len()
                )));
            }
        }
        let mut it = arrays.iter();
        let mut next = || it.next().expect("length checked").1.clone();
        self.backbone.w.data = next();
        self.backbone.b = next();
        if let Some(f) = &mut self.fan {
            f.w1.data = next();
            f.b1 = next();
            f.w2.data = next();
            f.b2 = next();
        }
        self.trend.w1.data = next();
        self.trend.b1 = next();
        self.trend.w2.data = next();
        self.trend.b2 = next();
        if let Some(p) = &mut self.projection {
            p.wq.data = next();
            p.wk.data = next();
            p.wv.data = next();
        }
        Ok(())
    }
}

/// Stable/unstable forecasts and their sum.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastPair {
    pub stable_pred: SeriesWindow,
    pub nonstable_pred: SeriesWindow,
    pub total: SeriesWindow,
}

/// Per-batch attention tensors kept for the learned-projection backward pass.
#[derive(Debug, Clone)]
pub struct AttnCache {
    pub q: Mat,
    pub k: Mat,
    pub v: Mat,
    pub weights: Mat,
}

/// Intermediate activations of one forward pass, consumed by `aefin_backward`.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub non_stable: SeriesWindow,
    pub stable: SeriesWindow,
    /// Backbone input: attention output, or the stable part when attention is off.
    pub fused: SeriesWindow,
    pub fan_caches: Option<Vec<FanRowCache>>,
    /// Trend-MLP input per flat row: [Z1 | raw window].
    pub z2_rows: Vec<Vec<f64>>,
    pub trend_caches: Vec<TrendRowCache>,
    pub attn: Option<Vec<AttnCache>>,
}

/// Parameter gradients, shaped exactly like the model.
#[derive(Debug, Clone)]
pub struct ModelGrads {
    pub backbone: LinearBackbone,
    pub fan: Option<FanParams>,
    pub trend: TrendParams,
    pub projection: Option<ProjectionParams>,
}

impl ModelGrads {
    /// Flat arrays in the model's canonical order.
    pub fn named_arrays(&self) -> Vec<(String, Vec<f64>)> {
        let as_model = AefinModel {
            k: 1,
            fan: self.fan.clone(),
            trend: self.trend.clone(),
            backbone: self.backbone.clone(),
            use_cross_attention: true,
            projection: self.projection.clone(),
            seed: 0,
        };
        as_model
            .named_arrays()
            .into_iter()
            .map(|(n, v, _)| (n, v))
            .collect()
    }
}

fn fuse_components(
    m: &AefinModel,
    decomp: &spectral::WindowDecomposition,
    want_cache: bool,
) -> Result<(SeriesWindow, Option<Vec<AttnCache>>)> {
    if !m.use_cross_attention {
        return Ok((decomp.stable.clone(), None));
    }
    match &m.projection {
        None => Ok((
            attention::cross_attention_batched(&decomp.non_stable, &decomp.stable)?,
            None,
        )),
        Some(p) => {
            let batch = decomp.stable.batch;
            let per_batch = parallel::map_indexed(batch, |b| -> Result<(Mat, AttnCache)> {
                let q = decomp.non_stable.batch_mat(b).matmul(&p.wq);
                let k = decomp.stable.batch_mat(b).matmul(&p.wk);
                let v = decomp.stable.batch_mat(b).matmul(&p.wv);
                let mats = attention::attention_matrices(&q, &k)?;
                let out = mats.weights.matmul(&v);
                Ok((
                    out,
                    AttnCache {
                        q,
                        k,
                        v,
                        weights: mats.weights,
                    },
                ))
            });
            let mut fused =
                SeriesWindow::zeros(batch, decomp.stable.channels, decomp.stable.len);
            let mut caches = Vec::with_capacity(batch);
            for (b, item) in per_batch.into_iter().enumerate() {
                let (out, cache) = item?;
                fused.set_batch_mat(b, &out);
                caches.push(cache);
            }
            Ok((fused, if want_cache { Some(caches) } else { None }))
        }
    }
}

/// Forward pass returning the forecast plus everything the backward pass needs.
pub fn aefin_forward_cached(
    m: &AefinModel,
    x: &SeriesWindow,
) -> Result<(ForecastPair, ForwardCache)> {
    if x.len != m.l_in() {
        return Err(Error::shape(format!(
            "model expects input length {}, got {}",
            m.l_in(),
            x.len
        )));
    }
    let decomp = spectral::decompose_window(x, m.k)?;
    let (fused, attn) = fuse_components(m, &decomp, true)?;

    // Stable branch: backbone on the fused component.
    let stable_rows = parallel::map_indexed(fused.rows(), |i| m.backbone.forecast_row(fused.flat_row(i)));
    let stable_pred = SeriesWindow::from_rows(x.batch, x.channels, stable_rows)?;

    // Unstable branch: FAN (or zeros) concatenated with the raw input, trend MLP.
    let l_pred = m.l_pred();
    struct HeadRow {
        fan_cache: Option<FanRowCache>,
        z2: Vec<f64>,
        trend_cache: TrendRowCache,
        out: Vec<f64>,
    }
    let head_rows: Vec<HeadRow> = parallel::map_indexed(x.rows(), |i| {
        let (z1, fan_cache) = match &m.fan {
            Some(p) => {
                let (z1, c) = fan_forward_row(p, decomp.non_stable.flat_row(i));
                (z1, Some(c))
            }
            None => (vec![0.0; l_pred], None),
        };
        let z2 = concat_seasonal_raw(&z1, x.flat_row(i));
        let (out, trend_cache) = trend_forward_row(&m.trend, &z2);
        HeadRow {
            fan_cache,
            z2,
            trend_cache,
            out,
        }
    });
    let mut fan_caches = m.fan.as_ref().map(|_| Vec::with_capacity(head_rows.len()));
    let mut z2_rows = Vec::with_capacity(head_rows.len());
    let mut trend_caches = Vec::with_capacity(head_rows.len());
    let mut out_rows = Vec::with_capacity(head_rows.len());
    for r in head_rows {
        if let Some(list) = fan_caches.as_mut() {
            list.push(r.fan_cache.expect("fan enabled implies per-row cache"));
        }
        z2_rows.push(r.z2);
        trend_caches.push(r.trend_cache);
        out_rows.push(r.out);
    }
    let nonstable_pred = SeriesWindow::from_rows(x.batch, x.channels, out_rows)?;

    let total = stable_pred.add(&nonstable_pred)?;
    Ok((
        ForecastPair {
            stable_pred,
            nonstable_pred,
            total,
        },
        ForwardCache {
            non_stable: decomp.non_stable,
            stable: decomp.stable,
            fused,
            fan_caches,
            z2_rows,
            trend_caches,
            attn,
        },
    ))
}

/// Forward pass without gradient bookkeeping.
pub fn aefin_forward(m: &AefinModel, x: &SeriesWindow) -> Result<ForecastPair> {
    aefin_forward_cached(m, x).map(|(pair, _)| pair)
}

/// Accumulates parameter gradients given upstream gradients on the two
/// forecast branches. Input windows are data, so their gradients are dropped;
/// the attention backward runs only when learned projections exist.
pub fn aefin_backward(
    m: &AefinModel,
    x: &SeriesWindow,
    cache: &ForwardCache,
    d_stable_pred: &SeriesWindow,
    d_nonstable_pred: &SeriesWindow,
    grads: &mut ModelGrads,
) -> Result<()> {
    if !d_stable_pred.same_shape(d_nonstable_pred) {
        return Err(Error::shape(
            "branch gradients must share one shape".to_string(),
        ));
    }
    // Stable branch: backbone rows; the fused input only needs a gradient
    // when projections are learnable.
    let needs_input_grad = m.use_cross_attention && m.projection.is_some();
    let mut d_fused = needs_input_grad
        .then(|| SeriesWindow::zeros(x.batch, x.channels, m.l_in()));
    for i in 0..cache.fused.rows() {
        let d_row = m.backbone.backward_row(
            cache.fused.flat_row(i),
            d_stable_pred.flat_row(i),
            &mut grads.backbone,
        );
        if let Some(df) = d_fused.as_mut() {
            df.row_mut(i / x.channels, i % x.channels).copy_from_slice(&d_row);
        }
    }
    if let (Some(df), Some(caches)) = (&d_fused, &cache.attn) {
        let g = grads
            .projection
            .as_mut()
            .expect("grads built from the same model");
        for (b, c) in caches.iter().enumerate() {
            let d_out = df.batch_mat(b);
            let (d_q, d_k, d_v) = attention::attention_backward(&c.q, &c.k, &c.v, &c.weights, &d_out);
            let ns = cache.non_stable.batch_mat(b);
            let st = cache.stable.batch_mat(b);
            // Q = ns·Wq, so dWq = nsᵀ·dQ (likewise for keys and values).
            g.wq.add_assign(&ns.transpose().matmul(&d_q));
            g.wk.add_assign(&st.transpose().matmul(&d_k));
            g.wv.add_assign(&st.transpose().matmul(&d_v));
        }
    }

    // Unstable branch: trend MLP rows, then the Fourier head.
    let l_pred = m.l_pred();
    for i in 0..x.rows() {
        let d_z2 = trend_backward_row(
            &m.trend,
            &cache.z2_rows[i],
            &cache.trend_caches[i],
            d_nonstable_pred.flat_row(i),
            &mut grads.trend,
        );
        if let (Some(fan), Some(fan_caches)) = (&m.fan, &cache.fan_caches) {
            let g_fan = grads.fan.as_mut().expect("grads built from the same model");
            fan_backward_row(
                fan,
                cache.non_stable.flat_row(i),
                &fan_caches[i],
                &d_z2[..l_pred],
                g_fan,
            );
        }
    }
    Ok(())
}

// --- checkpoint format ---------------------------------------------------

const CHECKPOINT_MAGIC: &str = "aefin-checkpoint";
const CHECKPOINT_VERSION: u32 = 1;
const PAYLOAD_MARKER: &[u8] = b"\npayload\n";

/// Serializes the model plus the normalization statistics it was trained
/// with: a text manifest (version, config, array shapes) followed by every
/// array as little-endian f64 in manifest order.
pub fn save_checkpoint(m: &AefinModel, stats: &NormStats, path: &Path) -> Result<()> {
    let mut manifest = String::new();
    manifest.push_str(&format!("{CHECKPOINT_MAGIC} format_version {CHECKPOINT_VERSION}\n"));
    manifest.push_str(&format!("k {}\n", m.k));
    manifest.push_str(&format!("l_in {}\n", m.l_in()));
    manifest.push_str(&format!("l_pred {}\n", m.l_pred()));
    manifest.push_str(&format!("channels {}\n", stats.mean.len()));
    manifest.push_str(&format!("seed {}\n", m.seed));
    manifest.push_str(&format!("use_cross_attention {}\n", m.use_cross_attention));
    manifest.push_str(&format!("use_fan {}\n", m.use_fan()));
    manifest.push_str(&format!(
        "use_learned_projection {}\n",
        m.projection.is_some()
    ));
    let arrays = m.named_arrays();
    let mut payload: Vec<f64> = Vec::new();
    for (name, values, dims) in &arrays {
        let dims_str: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
        manifest.push_str(&format!("array {name} {}\n", dims_str.join(" ")));
        payload.extend_from_slice(values);
    }
    manifest.push_str(&format!("array norm.mean {}\n", stats.mean.len()));
    payload.extend_from_slice(&stats.mean);
    manifest.push_str(&format!("array norm.std {}\n", stats.std.len()));
    payload.extend_from_slice(&stats.std);
    manifest.push_str("payload\n");

    let mut bytes = manifest.into_bytes();
    bytes.reserve(payload.len() * 8);
    for v in payload {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&bytes)?;
    Ok(())
}

fn manifest_field<'a>(
    fields: &'a std::collections::HashMap<String, String>,
    key: &str,
) -> Result<&'a str> {
    fields
        .get(key)
        .map(|s| s.as_str())
        .ok_or_else(|| Error::CorruptCheckpoint(format!("manifest is missing `{key}`")))
}

fn parse_field<T: std::str::FromStr>(
    fields: &std::collections::HashMap<String, String>,
    key: &str,
) -> Result<T> {
    manifest_field(fields, key)?
        .parse::<T>()
        .map_err(|_| Error::CorruptCheckpoint(format!("manifest field `{key}` is unreadable")))
}

/// Loads a checkpoint written by `save_checkpoint`. Fails with distinct
/// errors for unknown versions, structural corruption, and shape conflicts;
/// never partially initializes the model.
pub fn load_checkpoint(path: &Path) -> Result<(AefinModel, NormStats)> {
    let bytes = std::fs::read(path)?;
    let marker_at = bytes
        .windows(PAYLOAD_MARKER.len())
        .position(|w| w == PAYLOAD_MARKER)
        .ok_or_else(|| Error::CorruptCheckpoint("no payload marker".to_string()))?;
    let text = std::str::from_utf8(&bytes[..marker_at])
        .map_err(|_| Error::CorruptCheckpoint("manifest is not UTF-8".to_string()))?;
    let payload = &bytes[marker_at + PAYLOAD_MARKER.len()..];

    let mut lines = text.lines();
    let head = lines
        .next()
        .ok_or_else(|| Error::CorruptCheckpoint("empty manifest".to_string()))?;
    let head_parts: Vec<&str> = head.split_whitespace().collect();
    if head_parts.len() != 3 || head_parts[0] != CHECKPOINT_MAGIC || head_parts[1] != "format_version"
    {
        return Err(Error::CorruptCheckpoint(format!(
            "unrecognized header: {head:?}"
        )));
    }
    let version: u32 = head_parts[2]
        .parse()
        .map_err(|_| Error::CorruptCheckpoint("unreadable format version".to_string()))?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::VersionMismatch(format!(
            "file is format {version}, this build reads {CHECKPOINT_VERSION}"
        )));
    }

    let mut fields = std::collections::HashMap::new();
    let mut declared: Vec<(String, Vec<usize>)> = Vec::new();
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        match parts.as_slice() {
            [] => {}
            ["array", name, dims @ ..] => {
                let mut parsed = Vec::with_capacity(dims.len());
                for d in dims {
                    parsed.push(d.parse::<usize>().map_err(|_| {
                        Error::CorruptCheckpoint(format!("bad dimension in array {name}"))
                    })?);
                }
                if parsed.is_empty() {
                    return Err(Error::CorruptCheckpoint(format!(
                        "array {name} declares no dimensions"
                    )));
                }
                declared.push((name.to_string(), parsed));
            }
            [key, value] => {
                fields.insert(key.to_string(), value.to_string());
            }
            _ => {
                return Err(Error::CorruptCheckpoint(format!(
                    "unparsable manifest line: {line:?}"
                )))
            }
        }
    }

    let cfg = ModelConfig {
        l_in: parse_field(&fields, "l_in")?,
        l_pred: parse_field(&fields, "l_pred")?,
        k: parse_field(&fields, "k")?,
        channels: parse_field(&fields, "channels")?,
        use_cross_attention: parse_field(&fields, "use_cross_attention")?,
        use_fan: parse_field(&fields, "use_fan")?,
        use_learned_projection: parse_field(&fields, "use_learned_projection")?,
        seed: parse_field(&fields, "seed")?,
    };
    let mut model = AefinModel::zeros(&cfg).map_err(|e| Error::CorruptCheckpoint(e.to_string()))?;

    // Expected layout: model arrays in canonical order, then the norm stats.
    let mut expected: Vec<(String, Vec<usize>)> = model
        .named_arrays()
        .into_iter()
        .map(|(n, _, dims)| (n, dims))
        .collect();
    expected.push(("norm.mean".to_string(), vec![cfg.channels]));
    expected.push(("norm.std".to_string(), vec![cfg.channels]));
    if declared.len() != expected.len() {
        return Err(Error::shape(format!(
            "manifest declares {} arrays, expected {}",
            declared.len(),
            expected.len()
        )));
    }
    for ((got_name, got_dims), (want_name, want_dims)) in declared.iter().zip(&expected) {
        if got_name != want_name || got_dims != want_dims {
            return Err(Error::shape(format!(
                "array {got_name} {got_dims:?} does not match expected {want_name} {want_dims:?}"
            )));
        }
    }

    let total: usize = expected
        .iter()
        .map(|(_, dims)| dims.iter().product::<usize>())
        .sum();
    if payload.len() != total * 8 {
        return Err(Error::CorruptCheckpoint(format!(
            "payload holds {} bytes, expected {}",
            payload.len(),
            total * 8
        )));
    }
    let mut values = Vec::with_capacity(total);
    for chunk in payload.chunks_exact(8) {
        values.push(f64::from_le_bytes(chunk.try_into().expect("chunk of 8")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::CorruptCheckpoint(
            "payload contains non-finite values".to_string(),
        ));
    }

    let mut offset = 0;
    let mut arrays: Vec<(String, Vec<f64>)> = Vec::new();
    for (name, dims) in &expected {
        let numel: usize = dims.iter().product();
        arrays.push((name.clone(), values[offset..offset + numel].to_vec()));
        offset += numel;
    }
    let stats = NormStats {
        mean: arrays[arrays.len() - 2].1.clone(),
        std: arrays[arrays.len() - 1].1.clone(),
    };
    arrays.truncate(arrays.len() - 2);
    model.load_arrays(&arrays)?;
    Ok((model, stats))
}
