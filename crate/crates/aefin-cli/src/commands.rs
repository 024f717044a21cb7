//! Implementations of the subcommands. Each returns the library error type;
//! `main` maps error kinds onto the exit-code contract.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use aefin::autodiff::{self, LossMode};
use aefin::data::{
    self, denormalize_window, k_for_dataset, load_csv, select_k, synth_generate, GapPolicy,
    NormStats, SeriesTable,
};
use aefin::error::{Error, Result};
use aefin::heads::{
    fan_backward_row, fan_forward_row, gelu, gelu_grad, trend_backward_row, trend_forward_row,
    FanParams, TrendParams,
};
use aefin::loss::{self, LossWeights};
use aefin::model::{
    aefin_forward, load_checkpoint, save_checkpoint, AefinModel, Backbone, LinearBackbone,
    ModelConfig,
};
use aefin::spectral;
use aefin::tensor::{Mat, SeriesWindow};
use aefin::training::{self, evaluate, prepare, MetricsReport, SeedMetrics, TrainConfig};

use crate::config::RunConfigFile;

/// Fails early (as a config-class error) when a user-named file is absent.
fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::config(format!(
            "{what} {} does not exist",
            path.display()
        )))
    }
}

fn load_table(cfg: &RunConfigFile) -> Result<SeriesTable> {
    if let Some(csv) = &cfg.data.csv {
        require_file(csv, "input file")?;
        load_csv(csv, cfg.gap_policy())
    } else if let Some(synth) = &cfg.data.synth {
        synth_generate(&synth.to_spec())
    } else {
        Err(Error::config("config names no data source".to_string()))
    }
}

/// k from the config, the dataset-name table, or the threshold rule on the
/// normalized training segment — in that order.
fn resolve_k(cfg: &RunConfigFile, train_table: &SeriesTable) -> Result<usize> {
    if let Some(k) = cfg.model.k {
        return Ok(k);
    }
    if let Some(name) = &cfg.data.dataset_name {
        if let Some(k) = k_for_dataset(name) {
            return Ok(k);
        }
    }
    select_k(train_table, cfg.model.l_in, cfg.model.k_threshold)
}

// --- decompose -------------------------------------------------------------

pub struct DecomposeArgs {
    pub input: PathBuf,
    pub window: usize,
    pub start: usize,
    pub k: Option<usize>,
    pub dataset_name: Option<String>,
    pub out: PathBuf,
    pub verify: bool,
    pub gap_policy: GapPolicy,
}

fn write_channel_csv(path: &Path, names: &[String], rows: &[Vec<f64>]) -> Result<()> {
    let mut out = String::new();
    out.push_str(&names.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

pub fn cmd_decompose(args: &DecomposeArgs) -> Result<()> {
    require_file(&args.input, "input file")?;
    let table = load_csv(&args.input, args.gap_policy)?;
    if args.window < 2 {
        return Err(Error::config(format!(
            "--window must be ≥ 2, got {}",
            args.window
        )));
    }
    let end = args.start.checked_add(args.window).ok_or_else(|| {
        Error::config("--start + --window overflows".to_string())
    })?;
    if end > table.n() {
        return Err(Error::config(format!(
            "window rows [{}, {end}) exceed the {} rows of {}",
            args.start,
            table.n(),
            args.input.display()
        )));
    }
    let k = match (args.k, &args.dataset_name) {
        (Some(k), _) => k,
        (None, Some(name)) => k_for_dataset(name).ok_or_else(|| {
            Error::config(format!("no default bin count for dataset {name:?}"))
        })?,
        (None, None) => {
            return Err(Error::config(
                "one of --k or --dataset-name is required".to_string(),
            ))
        }
    };

    let d = table.d();
    let mut stable_rows = vec![vec![0.0; d]; args.window];
    let mut nonstable_rows = vec![vec![0.0; d]; args.window];
    let mut bins = String::new();
    let mut worst = 0.0f64;
    for c in 0..d {
        let x: Vec<f64> = (args.start..end).map(|t| table.values.get(t, c)).collect();
        let dec = spectral::decompose(&x, k)?;
        for t in 0..args.window {
            stable_rows[t][c] = dec.stable[t];
            nonstable_rows[t][c] = dec.non_stable[t];
            worst = worst.max((dec.stable[t] + dec.non_stable[t] - x[t]).abs());
        }
        let listed: Vec<String> = dec.dominant.bins.iter().map(|b| b.to_string()).collect();
        bins.push_str(&format!("{} {}\n", table.names[c], listed.join(" ")));
    }

    std::fs::create_dir_all(&args.out)?;
    write_channel_csv(&args.out.join("stable.csv"), &table.names, &stable_rows)?;
    write_channel_csv(
        &args.out.join("non_stable.csv"),
        &table.names,
        &nonstable_rows,
    )?;
    std::fs::write(args.out.join("bins.txt"), bins)?;
    println!(
        "decomposed rows [{}, {end}) of {} with k={k} into {}",
        args.start,
        args.input.display(),
        args.out.display()
    );
    if args.verify {
        println!("verify max_abs_err={worst:.3e}");
        if worst > 1e-9 {
            return Err(Error::invalid(format!(
                "reconstruction error {worst:.3e} exceeds 1e-9"
            )));
        }
    }
    Ok(())
}

// --- train -------------------------------------------------------------------

pub struct TrainOverrides {
    pub out: Option<PathBuf>,
    pub seeds: Option<Vec<u64>>,
    pub max_epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub k: Option<usize>,
    pub ablation: bool,
}

fn print_report_table(title: &str, report: &MetricsReport) {
    println!("{title}");
    println!("{:>6}  {:>6}  {:>12}  {:>12}", "seed", "epochs", "test_mse", "test_mae");
    for s in &report.per_seed {
        println!(
            "{:>6}  {:>6}  {:>12.6}  {:>12.6}",
            s.seed, s.epochs_run, s.mse, s.mae
        );
    }
    println!(
        "{:>6}  {:>6}  {:>12.6}  {:>12.6}",
        "avg", "", report.avg_mse, report.avg_mae
    );
}

pub fn cmd_train(config_path: &Path, overrides: &TrainOverrides) -> Result<()> {
    require_file(config_path, "config file")?;
    let mut cfg = RunConfigFile::load(config_path)?;
    if let Some(seeds) = &overrides.seeds {
        cfg.train.seeds = seeds.clone();
    }
    if let Some(v) = overrides.max_epochs {
        cfg.train.max_epochs = v;
    }
    if let Some(v) = overrides.batch_size {
        cfg.train.batch_size = v;
    }
    if let Some(v) = overrides.k {
        cfg.model.k = Some(v);
    }
    if overrides.ablation {
        cfg.train.ablation = true;
    }
    if let Some(dir) = &overrides.out {
        cfg.output.dir = Some(dir.clone());
    }
    cfg.validate()?;
    let out_dir = cfg.output.dir.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&out_dir)?;

    let table = load_table(&cfg)?;
    let prepared = prepare(&table, cfg.model.l_in, cfg.model.l_pred)?;
    let k = resolve_k(&cfg, &prepared.train_table)?;
    let tc = cfg.train_config(k);
    println!(
        "training on {} channels × {} rows (k={k}, {} train / {} val / {} test windows)",
        prepared.channels,
        table.n(),
        prepared.train.count(),
        prepared.val.count(),
        prepared.test.count()
    );

    let mut per_seed = Vec::new();
    for &seed in &cfg.train.seeds {
        let started = std::time::Instant::now();
        let outcome = training::train(&tc, &prepared.train, &prepared.val, seed)?;
        let mut log = String::new();
        for record in &outcome.log {
            log.push_str(&record.log_line());
            log.push('\n');
        }
        std::fs::write(out_dir.join(format!("train_seed{seed}.log")), log)?;
        save_checkpoint(
            &outcome.model,
            &prepared.stats,
            &out_dir.join(format!("checkpoint_seed{seed}.ckpt")),
        )?;
        let test = evaluate(&outcome.model, &prepared.test)?;
        per_seed.push(SeedMetrics {
            seed,
            mse: test.mse,
            mae: test.mae,
            epochs_run: outcome.epochs_run,
            best_val_mse: outcome.best_val_mse,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
    }
    let full = MetricsReport::from_seed_metrics(per_seed);

    let mut variants: BTreeMap<String, MetricsReport> = BTreeMap::new();
    variants.insert("full".to_string(), full.clone());
    if cfg.train.ablation {
        let grid: Vec<(&str, TrainConfig)> = vec![
            (
                "no-attention",
                TrainConfig {
                    use_cross_attention: false,
                    ..tc.clone()
                },
            ),
            (
                "no-fan",
                TrainConfig {
                    use_fan: false,
                    ..tc.clone()
                },
            ),
            (
                "plain-loss",
                TrainConfig {
                    plain_loss: true,
                    ..tc.clone()
                },
            ),
        ];
        for (name, variant_cfg) in grid {
            let report =
                training::train_across_seeds(&variant_cfg, &prepared, &cfg.train.seeds)?;
            variants.insert(name.to_string(), report);
        }
    }

    let mut json = serde_json::to_string_pretty(&variants)
        .map_err(|e| Error::invalid(format!("cannot serialize metrics: {e}")))?;
    json.push('\n');
    std::fs::write(out_dir.join("metrics.json"), json)?;

    for (name, report) in &variants {
        print_report_table(name, report);
    }
    println!("artifacts written to {}", out_dir.display());
    Ok(())
}

// --- evaluate / predict ------------------------------------------------------

fn check_checkpoint_compat(
    model: &AefinModel,
    stats: &NormStats,
    cfg: &RunConfigFile,
    channels: usize,
) -> Result<()> {
    if cfg.model.l_pred != model.l_pred() {
        return Err(Error::shape(format!(
            "config horizon {} does not match checkpoint horizon {}",
            cfg.model.l_pred,
            model.l_pred()
        )));
    }
    if cfg.model.l_in != model.l_in() {
        return Err(Error::shape(format!(
            "config lookback {} does not match checkpoint lookback {}",
            cfg.model.l_in,
            model.l_in()
        )));
    }
    if stats.mean.len() != channels {
        return Err(Error::shape(format!(
            "checkpoint was trained on {} channels, data has {channels}",
            stats.mean.len()
        )));
    }
    Ok(())
}

pub fn cmd_evaluate(checkpoint: &Path, config_path: &Path, out: Option<&Path>) -> Result<()> {
    require_file(checkpoint, "checkpoint file")?;
    require_file(config_path, "config file")?;
    let cfg = RunConfigFile::load(config_path)?;
    let (model, stats) = load_checkpoint(checkpoint)?;
    let table = load_table(&cfg)?;
    check_checkpoint_compat(&model, &stats, &cfg, table.d())?;

    // The checkpoint's normalization applies: the model lives in the space
    // defined by its own training statistics.
    let (_, _, test_raw) =
        data::split_chronological(&table, cfg.model.l_in, cfg.model.l_pred)?;
    let test = data::make_windows(
        &data::zscore_apply(&test_raw, &stats)?,
        cfg.model.l_in,
        cfg.model.l_pred,
    )?;
    let metrics = evaluate(&model, &test)?;

    let mut json = serde_json::to_string_pretty(&metrics)
        .map_err(|e| Error::invalid(format!("cannot serialize metrics: {e}")))?;
    json.push('\n');
    let out_dir = out.unwrap_or(Path::new("."));
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("eval_metrics.json"), json)?;
    println!("{:>10}  {:>12}  {:>12}", "windows", "test_mse", "test_mae");
    println!(
        "{:>10}  {:>12.6}  {:>12.6}",
        metrics.windows, metrics.mse, metrics.mae
    );
    Ok(())
}

pub fn cmd_predict(
    checkpoint: &Path,
    input: &Path,
    out: &Path,
    gap_policy: GapPolicy,
) -> Result<()> {
    require_file(checkpoint, "checkpoint file")?;
    require_file(input, "input file")?;
    let (model, stats) = load_checkpoint(checkpoint)?;
    let table = load_csv(input, gap_policy)?;
    let channels = table.d();
    if stats.mean.len() != channels {
        return Err(Error::shape(format!(
            "checkpoint was trained on {} channels, {} has {channels}",
            stats.mean.len(),
            input.display()
        )));
    }
    let l_in = model.l_in();
    if table.n() < l_in {
        return Err(Error::invalid(format!(
            "{} has {} rows; the model needs the last {l_in}",
            input.display(),
            table.n()
        )));
    }
    let start = table.n() - l_in;
    let mut window = SeriesWindow::zeros(1, channels, l_in);
    for c in 0..channels {
        let row = window.row_mut(0, c);
        for (t, slot) in row.iter_mut().enumerate() {
            *slot = (table.values.get(start + t, c) - stats.mean[c]) / stats.std[c];
        }
    }
    let pair = aefin_forward(&model, &window)?;
    let denorm = denormalize_window(&pair.total, &stats)?;

    let l_pred = model.l_pred();
    let mut rows = vec![vec![0.0; channels]; l_pred];
    for c in 0..channels {
        for (t, row) in rows.iter_mut().enumerate() {
            row[c] = denorm.row(0, c)[t];
        }
    }
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    write_channel_csv(out, &table.names, &rows)?;
    println!(
        "wrote {l_pred}-step forecast for {channels} channels to {}",
        out.display()
    );
    Ok(())
}

// --- gradcheck -----------------------------------------------------------------

const GRADCHECK_LIMIT: f64 = 1e-4;

fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-8)
}

/// Central differences at two step widths, keeping the better agreement
/// (same protocol as the library's checker).
fn numeric_rel_err(analytic: f64, mut f: impl FnMut(f64) -> f64, x: f64) -> f64 {
    let mut best = f64::INFINITY;
    for h in [1e-4, 1e-5] {
        let numeric = (f(x + h) - f(x - h)) / (2.0 * h);
        best = best.min(rel_err(analytic, numeric));
    }
    best
}

struct OpCheck {
    name: &'static str,
    worst: f64,
}

fn ops_to_check(size_small: bool) -> Result<Vec<OpCheck>> {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let mut checks = Vec::new();

    // Activation.
    let mut worst = 0.0f64;
    for i in 0..32 {
        let x = -3.0 + i as f64 * 0.2;
        worst = worst.max(numeric_rel_err(gelu_grad(x), gelu, x));
    }
    checks.push(OpCheck {
        name: "gelu",
        worst,
    });

    // Fourier head, one row: all parameter coordinates plus the input.
    let (l_in, l_pred) = if size_small { (16, 16) } else { (8, 8) };
    let fan = FanParams::init(l_in, l_pred, &mut rng)?;
    let x: Vec<f64> = (0..l_in).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let d_out: Vec<f64> = (0..l_pred).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let fan_loss = |p: &FanParams, x: &[f64]| -> f64 {
        let (out, _) = fan_forward_row(p, x);
        out.iter().zip(&d_out).map(|(a, b)| a * b).sum()
    };
    let (_, cache) = fan_forward_row(&fan, &x);
    let mut grads = fan.zeros_like();
    let d_x = fan_backward_row(&fan, &x, &cache, &d_out, &mut grads);
    let mut worst = 0.0f64;
    {
        let arrays: Vec<(fn(&FanParams) -> Vec<f64>, Vec<f64>)> = vec![
            (|p| p.w1.data.clone(), grads.w1.data.clone()),
            (|p| p.b1.clone(), grads.b1.clone()),
            (|p| p.w2.data.clone(), grads.w2.data.clone()),
            (|p| p.b2.clone(), grads.b2.clone()),
        ];
        let setters: Vec<fn(&mut FanParams, usize, f64)> = vec![
            |p, j, v| p.w1.data[j] = v,
            |p, j, v| p.b1[j] = v,
            |p, j, v| p.w2.data[j] = v,
            |p, j, v| p.b2[j] = v,
        ];
        for (idx, (getter, analytic)) in arrays.iter().enumerate() {
            let base = getter(&fan);
            for j in 0..analytic.len() {
                let f = |v: f64| {
                    let mut p = fan.clone();
                    setters[idx](&mut p, j, v);
                    fan_loss(&p, &x)
                };
                worst = worst.max(numeric_rel_err(analytic[j], f, base[j]));
            }
        }
        for (j, a) in d_x.iter().enumerate() {
            let f = |v: f64| {
                let mut xx = x.clone();
                xx[j] = v;
                fan_loss(&fan, &xx)
            };
            worst = worst.max(numeric_rel_err(*a, f, x[j]));
        }
    }
    checks.push(OpCheck {
        name: "fan_forward",
        worst,
    });

    // Trend MLP, one row: sampled parameter coordinates plus the input.
    let trend = TrendParams::init(l_in, l_pred, &mut rng)?;
    let z: Vec<f64> = (0..l_in + l_pred).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let d_out: Vec<f64> = (0..l_pred).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let trend_loss = |p: &TrendParams, z: &[f64]| -> f64 {
        let (out, _) = trend_forward_row(p, z);
        out.iter().zip(&d_out).map(|(a, b)| a * b).sum()
    };
    let (_, cache) = trend_forward_row(&trend, &z);
    let mut grads = trend.zeros_like();
    let d_z = trend_backward_row(&trend, &z, &cache, &d_out, &mut grads);
    let mut worst = 0.0f64;
    for j in (0..trend.w1.data.len()).step_by(97) {
        let f = |v: f64| {
            let mut p = trend.clone();
            p.w1.data[j] = v;
            trend_loss(&p, &z)
        };
        worst = worst.max(numeric_rel_err(grads.w1.data[j], f, trend.w1.data[j]));
    }
    for j in (0..trend.w2.data.len()).step_by(89) {
        let f = |v: f64| {
            let mut p = trend.clone();
            p.w2.data[j] = v;
            trend_loss(&p, &z)
        };
        worst = worst.max(numeric_rel_err(grads.w2.data[j], f, trend.w2.data[j]));
    }
    for (j, a) in d_z.iter().enumerate() {
        let f = |v: f64| {
            let mut zz = z.clone();
            zz[j] = v;
            trend_loss(&trend, &zz)
        };
        worst = worst.max(numeric_rel_err(*a, f, z[j]));
    }
    checks.push(OpCheck {
        name: "trend_mlp",
        worst,
    });

    // Linear backbone, one row.
    let backbone = {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        LinearBackbone::init(l_in, l_pred, &mut r)
    };
    let x: Vec<f64> = (0..l_in).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let d_out: Vec<f64> = (0..l_pred).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let bb_loss = |p: &LinearBackbone, x: &[f64]| -> f64 {
        p.forecast_row(x).iter().zip(&d_out).map(|(a, b)| a * b).sum()
    };
    let mut grads = backbone.zeros_like();
    let d_x = backbone.backward_row(&x, &d_out, &mut grads);
    let mut worst = 0.0f64;
    for j in 0..backbone.w.data.len() {
        let f = |v: f64| {
            let mut p = backbone.clone();
            p.w.data[j] = v;
            bb_loss(&p, &x)
        };
        worst = worst.max(numeric_rel_err(grads.w.data[j], f, backbone.w.data[j]));
    }
    for (j, a) in d_x.iter().enumerate() {
        let f = |v: f64| {
            let mut xx = x.clone();
            xx[j] = v;
            bb_loss(&backbone, &xx)
        };
        worst = worst.max(numeric_rel_err(*a, f, x[j]));
    }
    checks.push(OpCheck {
        name: "linear_backbone",
        worst,
    });

    // Cross-attention input gradients.
    let rows = if size_small { 8 } else { 6 };
    let cols = if size_small { 3 } else { 2 };
    let rand_mat = |rng: &mut rand_chacha::ChaCha8Rng| {
        let mut m = Mat::zeros(rows, cols);
        for v in m.data.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        m
    };
    let q = rand_mat(&mut rng);
    let kk = rand_mat(&mut rng);
    let v = rand_mat(&mut rng);
    let mut d_o = Mat::zeros(rows, cols);
    for slot in d_o.data.iter_mut() {
        *slot = rng.gen_range(-1.0..1.0);
    }
    let attn_loss = |q: &Mat, k: &Mat, v: &Mat| -> f64 {
        let mats = aefin::attention::attention_matrices(q, k).unwrap();
        let out = mats.weights.matmul(v);
        out.data.iter().zip(&d_o.data).map(|(a, b)| a * b).sum()
    };
    let mats = aefin::attention::attention_matrices(&q, &kk).unwrap();
    let (d_q, d_k, d_v) = aefin::attention::attention_backward(&q, &kk, &v, &mats.weights, &d_o);
    let mut worst = 0.0f64;
    for j in 0..q.data.len() {
        let f = |val: f64| {
            let mut m = q.clone();
            m.data[j] = val;
            attn_loss(&m, &kk, &v)
        };
        worst = worst.max(numeric_rel_err(d_q.data[j], f, q.data[j]));
        let f = |val: f64| {
            let mut m = kk.clone();
            m.data[j] = val;
            attn_loss(&q, &m, &v)
        };
        worst = worst.max(numeric_rel_err(d_k.data[j], f, kk.data[j]));
        let f = |val: f64| {
            let mut m = v.clone();
            m.data[j] = val;
            attn_loss(&q, &kk, &m)
        };
        worst = worst.max(numeric_rel_err(d_v.data[j], f, v.data[j]));
    }
    checks.push(OpCheck {
        name: "cross_attention",
        worst,
    });

    // The three loss terms with respect to predictions.
    let b = 2;
    let c = 2;
    let len = l_pred;
    let mut target = SeriesWindow::zeros(b, c, len);
    for slot in target.as_mut_slice() {
        *slot = rng.gen_range(-1.0..1.0);
    }
    let mut pred = target.clone();
    for slot in pred.as_mut_slice() {
        // Residuals stay clear of the absolute-error kink.
        let sign = if rng.gen_range(0..2) == 0 { -1.0 } else { 1.0 };
        *slot += sign * rng.gen_range(0.4..1.0);
    }
    type LossFn = fn(&SeriesWindow, &SeriesWindow) -> aefin::Result<f64>;
    type GradFn = fn(&SeriesWindow, &SeriesWindow) -> aefin::Result<SeriesWindow>;
    let loss_ops: Vec<(&'static str, LossFn, GradFn)> = vec![
        ("loss_stable", loss::loss_stable, loss::loss_stable_grad),
        (
            "loss_non_stable",
            loss::loss_non_stable,
            loss::loss_non_stable_grad,
        ),
        ("loss_freq", loss::loss_freq, loss::loss_freq_grad),
    ];
    for (name, f, g) in loss_ops {
        let analytic = g(&pred, &target)?;
        let mut worst = 0.0f64;
        for j in 0..pred.as_slice().len() {
            let eval = |v: f64| {
                let mut p = pred.clone();
                p.as_mut_slice()[j] = v;
                f(&p, &target).unwrap()
            };
            worst = worst.max(numeric_rel_err(analytic.as_slice()[j], eval, pred.as_slice()[j]));
        }
        checks.push(OpCheck { name, worst });
    }

    // End to end: composite objective through the whole model.
    let (batch, channels, k) = if size_small { (4, 3, 3) } else { (2, 2, 2) };
    let model = AefinModel::init(&ModelConfig {
        l_in,
        l_pred,
        k,
        channels,
        use_learned_projection: size_small,
        seed: 11,
        ..ModelConfig::default()
    })?;
    let mut x = SeriesWindow::zeros(batch, channels, l_in);
    for slot in x.as_mut_slice() {
        *slot = rng.gen_range(-1.0..1.0);
    }
    let mut y = SeriesWindow::zeros(batch, channels, l_pred);
    for slot in y.as_mut_slice() {
        *slot = rng.gen_range(-1.0..1.0);
    }
    let report = autodiff::check_model_gradients(
        &model,
        &x,
        &y,
        &LossWeights::default(),
        LossMode::Composite,
        64,
        9001,
    )?;
    checks.push(OpCheck {
        name: "end_to_end",
        worst: report.worst,
    });

    Ok(checks)
}

pub fn cmd_gradcheck(size: &str) -> Result<()> {
    let small = match size {
        "tiny" => false,
        "small" => true,
        other => {
            return Err(Error::config(format!(
                "--size must be tiny or small, got {other:?}"
            )))
        }
    };
    let checks = ops_to_check(small)?;
    let mut failed = false;
    for check in &checks {
        let ok = check.worst < GRADCHECK_LIMIT;
        failed |= !ok;
        println!(
            "op={} max_rel_err={:.3e} limit={GRADCHECK_LIMIT:.0e} status={}",
            check.name,
            check.worst,
            if ok { "ok" } else { "FAIL" }
        );
    }
    if failed {
        Err(Error::invalid(
            "analytic gradients disagree with finite differences".to_string(),
        ))
    } else {
        Ok(())
    }
}

// --- params / synth -----------------------------------------------------------

pub fn cmd_params(config_path: Option<&Path>) -> Result<()> {
    let cfg = match config_path {
        Some(p) => {
            require_file(p, "config file")?;
            let mut c = RunConfigFile::load_for_params(p)?;
            // `params` is a dry count: the data source is irrelevant.
            c.data.csv.get_or_insert_with(|| PathBuf::from("unused.csv"));
            c
        }
        None => {
            let mut c = RunConfigFile::default();
            c.data.csv = Some(PathBuf::from("unused.csv"));
            c
        }
    };
    cfg.validate()?;
    let channels = cfg.data.synth.as_ref().map_or(1, |s| s.channels);
    let model = AefinModel::init(&ModelConfig {
        l_in: cfg.model.l_in,
        l_pred: cfg.model.l_pred,
        k: 1,
        channels,
        use_cross_attention: cfg.model.use_cross_attention,
        use_fan: cfg.model.use_fan,
        use_learned_projection: cfg.model.use_learned_projection,
        seed: 0,
    })?;
    println!("{}", model.param_count());
    println!("backbone={}", model.backbone.param_count());
    println!(
        "fan={}",
        model.fan.as_ref().map_or(0, |f| f.param_count())
    );
    println!("trend={}", model.trend.param_count());
    println!(
        "projection={}",
        model.projection.as_ref().map_or(0, |p| p.param_count())
    );
    Ok(())
}

pub fn cmd_synth(spec_path: &Path, out: &Path) -> Result<()> {
    require_file(spec_path, "spec file")?;
    let text = std::fs::read_to_string(spec_path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", spec_path.display())))?;
    let section: crate::config::SynthSection = toml::from_str(&text)
        .map_err(|e| Error::config(format!("{}: {e}", spec_path.display())))?;
    let spec = section.to_spec();
    if spec.n == 0 || spec.d == 0 {
        return Err(Error::config(
            "synth spec needs n ≥ 1 and channels ≥ 1".to_string(),
        ));
    }
    let table = synth_generate(&spec)?;
    if let Some(parent) = out.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    data::write_csv(out, &table)?;
    println!(
        "wrote {} rows × {} channels to {}",
        table.n(),
        table.d(),
        out.display()
    );
    Ok(())
}

impl RunConfigFile {
    /// Like `load`, but without semantic validation (the caller patches the
    /// config before validating).
    fn load_for_params(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config(format!("cannot read config {}: {e}", path.display()))
        })?;
        toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }
}
