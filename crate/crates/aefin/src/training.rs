//! Mini-batch training with Adam and early stopping, evaluation over window
//! sets, the ablation grid, and the plain linear baseline used for
//! comparisons.

use serde::{Deserialize, Serialize};

use crate::autodiff::{adam_step, batch_loss_grad, AdamConfig, AdamState, LossMode};
use crate::data::{
    make_windows, mix_seed, split_chronological, zscore_apply, zscore_fit, NormStats, SeriesTable,
    WindowSet,
};
use crate::error::{Error, Result};
use crate::loss::LossWeights;
use crate::model::{aefin_forward, AefinModel, Backbone, LinearBackbone, ModelConfig};
use crate::tensor::SeriesWindow;

/// Everything a training run needs besides the data and the seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub l_in: usize,
    pub l_pred: usize,
    pub k: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Consecutive non-improving validation epochs tolerated before stopping
    /// (0 behaves like 1: the first regression ends the run).
    pub patience: usize,
    pub adam: AdamConfig,
    pub weights: LossWeights,
    pub use_cross_attention: bool,
    pub use_fan: bool,
    pub use_learned_projection: bool,
    /// Train on MSE of the summed forecast instead of the composite loss.
    pub plain_loss: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            l_in: 96,
            l_pred: 96,
            k: 1,
            batch_size: 32,
            max_epochs: 30,
            patience: 5,
            adam: AdamConfig::default(),
            weights: LossWeights::default(),
            use_cross_attention: true,
            use_fan: true,
            use_learned_projection: false,
            plain_loss: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let mut problems = Vec::new();
        if self.batch_size == 0 {
            problems.push("batch_size must be ≥ 1".to_string());
        }
        if self.max_epochs == 0 {
            problems.push("max_epochs must be ≥ 1".to_string());
        }
        if let Err(e) = self.adam.validate() {
            problems.push(e.to_string());
        }
        if let Err(e) = self.weights.validate() {
            problems.push(e.to_string());
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::config(problems.join("; ")))
        }
    }

    pub fn model_config(&self, seed: u64, channels: usize) -> ModelConfig {
        ModelConfig {
            l_in: self.l_in,
            l_pred: self.l_pred,
            k: self.k,
            channels,
            use_cross_attention: self.use_cross_attention,
            use_fan: self.use_fan,
            use_learned_projection: self.use_learned_projection,
            seed,
        }
    }

    pub fn loss_mode(&self) -> LossMode {
        if self.plain_loss {
            LossMode::PlainMse
        } else {
            LossMode::Composite
        }
    }
}

/// One line of the training log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_mse: f64,
    pub improved: bool,
}

impl EpochRecord {
    /// `key=value` pairs, one epoch per line.
    pub fn log_line(&self) -> String {
        format!(
            "epoch={} train_loss={:.12e} val_mse={:.12e} improved={}",
            self.epoch, self.train_loss, self.val_mse, self.improved
        )
    }
}

/// The trained model (at its best validation point) plus the run history.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: AefinModel,
    pub epochs_run: usize,
    pub best_val_mse: f64,
    pub log: Vec<EpochRecord>,
}

fn should_stop(epochs_since_best: usize, patience: usize) -> bool {
    epochs_since_best >= patience.max(1)
}

/// Trains one model from the seed's initialization, returning the parameters
/// from the epoch with the lowest validation MSE.
pub fn train(
    cfg: &TrainConfig,
    train_windows: &WindowSet,
    val_windows: &WindowSet,
    seed: u64,
) -> Result<TrainOutcome> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    cfg.validate()?;
    for (name, ws) in [("train", train_windows), ("validation", val_windows)] {
        if ws.l_in != cfg.l_in || ws.l_pred != cfg.l_pred {
            return Err(Error::shape(format!(
                "{name} windows are {}→{}, config wants {}→{}",
                ws.l_in, ws.l_pred, cfg.l_in, cfg.l_pred
            )));
        }
    }
    if train_windows.channels() != val_windows.channels() {
        return Err(Error::shape(
            "train and validation channel counts differ".to_string(),
        ));
    }

    let mut model = AefinModel::init(&cfg.model_config(seed, train_windows.channels()))?;
    let mut params: Vec<(String, Vec<f64>)> = model
        .named_arrays()
        .into_iter()
        .map(|(n, v, _)| (n, v))
        .collect();
    let mut adam = AdamState::new(&params);
    let mode = cfg.loss_mode();

    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut epochs_since_best = 0usize;
    let mut log = Vec::new();
    let mut global_step = 0usize;
    let mut epochs_run = 0usize;

    let count = train_windows.count();
    let mut order: Vec<usize> = (0..count).collect();
    for epoch in 1..=cfg.max_epochs {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(mix_seed(seed, 1_000 + epoch as u64));
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        let mut steps = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            global_step += 1;
            let (x, y) = train_windows.gather(chunk)?;
            let (objective, grads) = batch_loss_grad(&model, &x, &y, &cfg.weights, mode)
                .map_err(|e| match e {
                    Error::Divergence { message, .. } => Error::Divergence {
                        step: global_step,
                        message,
                    },
                    other => other,
                })?;
            let grad_arrays = grads.named_arrays();
            adam_step(&mut params, &grad_arrays, &mut adam, &cfg.adam)?;
            model.load_arrays(&params)?;
            loss_sum += objective;
            steps += 1;
        }
        epochs_run = epoch;
        let train_loss = loss_sum / steps as f64;
        let val = evaluate(&model, val_windows)?;
        let improved = val.mse < best_val;
        if improved {
            best_val = val.mse;
            best = model.clone();
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
        }
        log.push(EpochRecord {
            epoch,
            train_loss,
            val_mse: val.mse,
            improved,
        });
        if !improved && should_stop(epochs_since_best, cfg.patience) {
            break;
        }
    }

    Ok(TrainOutcome {
        model: best,
        epochs_run,
        best_val_mse: best_val,
        log,
    })
}

/// Aggregate error of a forecaster over every window in a set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub mse: f64,
    pub mae: f64,
    pub windows: usize,
}

/// Scores `forecast` against the targets of every window, averaging squared
/// and absolute errors over all elements. Windows are processed in fixed
/// chunks so the reduction order never depends on thread scheduling.
pub fn evaluate_forecaster<F>(forecast: F, windows: &WindowSet) -> Result<EvalMetrics>
where
    F: Fn(&SeriesWindow) -> Result<SeriesWindow>,
{
    let count = windows.count();
    if count == 0 {
        return Err(Error::invalid("cannot evaluate on an empty window set"));
    }
    const CHUNK: usize = 128;
    let mut se = 0.0;
    let mut ae = 0.0;
    let mut elements = 0usize;
    let all: Vec<usize> = (0..count).collect();
    for chunk in all.chunks(CHUNK) {
        let (x, y) = windows.gather(chunk)?;
        let pred = forecast(&x)?;
        if !pred.same_shape(&y) {
            return Err(Error::shape(format!(
                "forecast {} does not match target {}",
                pred.shape_str(),
                y.shape_str()
            )));
        }
        for (p, t) in pred.as_slice().iter().zip(y.as_slice()) {
            let d = p - t;
            se += d * d;
            ae += d.abs();
        }
        elements += y.as_slice().len();
    }
    Ok(EvalMetrics {
        mse: se / elements as f64,
        mae: ae / elements as f64,
        windows: count,
    })
}

/// Model error over a window set (summed forecast against the raw target).
pub fn evaluate(m: &AefinModel, windows: &WindowSet) -> Result<EvalMetrics> {
    evaluate_forecaster(|x| aefin_forward(m, x).map(|p| p.total), windows)
}

/// Normalized data split into train/validation/test window sets.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub stats: NormStats,
    pub train: WindowSet,
    pub val: WindowSet,
    pub test: WindowSet,
    pub channels: usize,
    /// The normalized training segment, kept for dominant-bin selection.
    pub train_table: SeriesTable,
}

/// Chronological 7:2:1 split, z-score statistics fit on the training rows
/// only and applied everywhere, then stride-1 windows per segment.
pub fn prepare(table: &SeriesTable, l_in: usize, l_pred: usize) -> Result<PreparedData> {
    let (train_raw, val_raw, test_raw) = split_chronological(table, l_in, l_pred)?;
    let stats = zscore_fit(&train_raw)?;
    let train_table = zscore_apply(&train_raw, &stats)?;
    let train = make_windows(&train_table, l_in, l_pred)?;
    let val = make_windows(&zscore_apply(&val_raw, &stats)?, l_in, l_pred)?;
    let test = make_windows(&zscore_apply(&test_raw, &stats)?, l_in, l_pred)?;
    let channels = train.channels();
    Ok(PreparedData {
        stats,
        train,
        val,
        test,
        channels,
        train_table,
    })
}

/// Test metrics for one seed of one configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeedMetrics {
    pub seed: u64,
    pub mse: f64,
    pub mae: f64,
    pub epochs_run: usize,
    pub best_val_mse: f64,
    /// Wall-clock seconds; excluded from serialization so two identical runs
    /// produce byte-identical reports.
    #[serde(skip)]
    pub wall_seconds: f64,
}

/// Per-seed metrics plus their averages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_seed: Vec<SeedMetrics>,
    pub avg_mse: f64,
    pub avg_mae: f64,
}

impl MetricsReport {
    pub fn from_seed_metrics(per_seed: Vec<SeedMetrics>) -> Self {
        let n = per_seed.len().max(1) as f64;
        let avg_mse = per_seed.iter().map(|s| s.mse).sum::<f64>() / n;
        let avg_mae = per_seed.iter().map(|s| s.mae).sum::<f64>() / n;
        MetricsReport {
            per_seed,
            avg_mse,
            avg_mae,
        }
    }
}

/// Trains and tests one configuration across several seeds.
pub fn train_across_seeds(
    cfg: &TrainConfig,
    data: &PreparedData,
    seeds: &[u64],
) -> Result<MetricsReport> {
    if seeds.is_empty() {
        return Err(Error::config("at least one seed is required"));
    }
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let started = std::time::Instant::now();
        let outcome = train(cfg, &data.train, &data.val, seed)?;
        let test = evaluate(&outcome.model, &data.test)?;
        per_seed.push(SeedMetrics {
            seed,
            mse: test.mse,
            mae: test.mae,
            epochs_run: outcome.epochs_run,
            best_val_mse: outcome.best_val_mse,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
    }
    Ok(MetricsReport::from_seed_metrics(per_seed))
}

/// The standard ablation grid, every variant trained on the same seeds.
pub fn run_ablation(
    base: &TrainConfig,
    data: &PreparedData,
    seeds: &[u64],
) -> Result<Vec<(String, MetricsReport)>> {
    let variants: Vec<(&str, TrainConfig)> = vec![
        ("full", base.clone()),
        (
            "no-attention",
            TrainConfig {
                use_cross_attention: false,
                ..base.clone()
            },
        ),
        (
            "no-fan",
            TrainConfig {
                use_fan: false,
                ..base.clone()
            },
        ),
        (
            "plain-loss",
            TrainConfig {
                plain_loss: true,
                ..base.clone()
            },
        ),
    ];
    let mut out = Vec::with_capacity(variants.len());
    for (name, cfg) in variants {
        out.push((name.to_string(), train_across_seeds(&cfg, data, seeds)?));
    }
    Ok(out)
}

/// Trains the plain linear map on raw windows with MSE — the reference the
/// full model is compared against.
pub fn train_linear_baseline(
    cfg: &TrainConfig,
    train_windows: &WindowSet,
    val_windows: &WindowSet,
    seed: u64,
) -> Result<(LinearBackbone, usize)> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;

    cfg.validate()?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(mix_seed(seed, 1));
    let mut model = LinearBackbone::init(cfg.l_in, cfg.l_pred, &mut rng);
    let mut params = vec![
        ("w".to_string(), model.w.data.clone()),
        ("b".to_string(), model.b.clone()),
    ];
    let mut adam = AdamState::new(&params);

    let mut best = model.clone();
    let mut best_val = f64::INFINITY;
    let mut epochs_since_best = 0usize;
    let mut epochs_run = 0usize;
    let mut global_step = 0usize;

    let count = train_windows.count();
    let mut order: Vec<usize> = (0..count).collect();
    for epoch in 1..=cfg.max_epochs {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(mix_seed(seed, 1_000 + epoch as u64));
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            global_step += 1;
            let (x, y) = train_windows.gather(chunk)?;
            let pred = model.forecast(&x)?;
            let n = pred.as_slice().len() as f64;
            let mut objective = 0.0;
            let mut grads = model.zeros_like();
            for i in 0..pred.rows() {
                let d_out: Vec<f64> = pred
                    .flat_row(i)
                    .iter()
                    .zip(y.flat_row(i))
                    .map(|(p, t)| {
                        objective += (p - t) * (p - t) / n;
                        2.0 * (p - t) / n
                    })
                    .collect();
                model.backward_row(x.flat_row(i), &d_out, &mut grads);
            }
            if !objective.is_finite() {
                return Err(Error::Divergence {
                    step: global_step,
                    message: format!("baseline objective became {objective}"),
                });
            }
            let grad_arrays = vec![
                ("w".to_string(), grads.w.data),
                ("b".to_string(), grads.b),
            ];
            adam_step(&mut params, &grad_arrays, &mut adam, &cfg.adam)?;
            model.w.data = params[0].1.clone();
            model.b = params[1].1.clone();
        }
        epochs_run = epoch;
        let val = evaluate_forecaster(|x| model.forecast(x), val_windows)?;
        let improved = val.mse < best_val;
        if improved {
            best_val = val.mse;
            best = model.clone();
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if should_stop(epochs_since_best, cfg.patience) {
                break;
            }
        }
    }
    Ok((best, epochs_run))
}

/// Baseline trained and tested across seeds.
pub fn baseline_across_seeds(
    cfg: &TrainConfig,
    data: &PreparedData,
    seeds: &[u64],
) -> Result<MetricsReport> {
    if seeds.is_empty() {
        return Err(Error::config("at least one seed is required"));
    }
    let mut per_seed = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let started = std::time::Instant::now();
        let (model, epochs_run) = train_linear_baseline(cfg, &data.train, &data.val, seed)?;
        let test = evaluate_forecaster(|x| model.forecast(x), &data.test)?;
        per_seed.push(SeedMetrics {
            seed,
            mse: test.mse,
            mae: test.mae,
            epochs_run,
            best_val_mse: f64::NAN,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
    }
    // Averages must stay finite even though per-seed best-val is not tracked.
    let mut report = MetricsReport::from_seed_metrics(per_seed);
    for s in &mut report.per_seed {
        s.best_val_mse = s.mse;
    }
    Ok(report)
}
