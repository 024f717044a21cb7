//! Data plumbing: CSV ingestion, z-score normalization, chronological
//! splitting, sliding-window batching, dominant-bin-count selection, and a
//! synthetic non-stationary series generator for desk-scale experiments.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::spectral;
use crate::tensor::{Mat, SeriesWindow};

/// A multivariate series: N time steps × D variables, oldest first.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTable {
    pub names: Vec<String>,
    /// N×D value matrix; guaranteed finite after ingestion.
    pub values: Mat,
}

impl SeriesTable {
    pub fn n(&self) -> usize {
        self.values.rows
    }

    pub fn d(&self) -> usize {
        self.values.cols
    }

    /// Contiguous row range [start, end) as a new table.
    pub fn slice_rows(&self, start: usize, end: usize) -> SeriesTable {
        let d = self.d();
        SeriesTable {
            names: self.names.clone(),
            values: Mat {
                rows: end - start,
                cols: d,
                data: self.values.data[start * d..end * d].to_vec(),
            },
        }
    }
}

/// What to do with empty or non-finite cells.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapPolicy {
    /// Fail with a located parse error.
    Reject,
    /// Repeat the previous row's value; a gap in the first data row still fails.
    ForwardFill,
}

/// Splitmix64-style seed mixing, used to derive independent streams
/// (per channel, per epoch, per seed) from one run seed.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(salt.wrapping_mul(0xBF58_476D_1CE4_E5B9));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Loads a headered CSV of float64 columns. A first column named "date" or
/// "timestamp" (case-insensitive) is treated as an index and excluded from
/// the values. Row/column positions in errors are 1-based file coordinates.
pub fn load_csv(path: &Path, gap: GapPolicy) -> Result<SeriesTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::invalid(format!("cannot open {}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::invalid(format!("cannot read header of {}: {e}", path.display())))?
        .clone();
    if headers.is_empty() {
        return Err(Error::invalid(format!("{}: empty header row", path.display())));
    }
    let first = headers.get(0).unwrap_or("").trim().to_ascii_lowercase();
    let skip_first = matches!(first.as_str(), "date" | "timestamp");
    let col_offset = usize::from(skip_first);
    let names: Vec<String> = headers
        .iter()
        .skip(col_offset)
        .map(|s| s.trim().to_string())
        .collect();
    if names.is_empty() {
        return Err(Error::invalid(format!(
            "{}: no value columns beside the index",
            path.display()
        )));
    }

    let d = names.len();
    let mut data: Vec<f64> = Vec::new();
    let mut rows = 0usize;
    for record in reader.records() {
        let record =
            record.map_err(|e| Error::invalid(format!("{}: malformed CSV: {e}", path.display())))?;
        let line = record
            .position()
            .map(|p| p.line() as usize)
            .unwrap_or(rows + 2);
        if record.len() != d + col_offset {
            return Err(Error::Parse {
                row: line,
                col: record.len(),
                message: format!("expected {} fields, found {}", d + col_offset, record.len()),
            });
        }
        for (j, cell) in record.iter().skip(col_offset).enumerate() {
            let col = j + col_offset + 1;
            let trimmed = cell.trim();
            let parsed: Option<f64> = if trimmed.is_empty() {
                None
            } else {
                match trimmed.parse::<f64>() {
                    Ok(v) if v.is_finite() => Some(v),
                    Ok(_) => None,
                    Err(_) => {
                        return Err(Error::Parse {
                            row: line,
                            col,
                            message: format!("cannot parse {trimmed:?} as a number"),
                        })
                    }
                }
            };
            match parsed {
                Some(v) => data.push(v),
                None => match gap {
                    GapPolicy::Reject => {
                        return Err(Error::Parse {
                            row: line,
                            col,
                            message: "missing or non-finite value".to_string(),
                        })
                    }
                    GapPolicy::ForwardFill => {
                        if rows == 0 {
                            return Err(Error::Parse {
                                row: line,
                                col,
                                message: "gap in the first data row cannot be forward-filled"
                                    .to_string(),
                            });
                        }
                        let prev = data[(rows - 1) * d + j];
                        data.push(prev);
                    }
                },
            }
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::invalid(format!("{}: no data rows", path.display())));
    }
    Ok(SeriesTable {
        names,
        values: Mat {
            rows,
            cols: d,
            data,
        },
    })
}

/// Writes a table back to CSV (header + rows), used by the synth command.
pub fn write_csv(path: &Path, t: &SeriesTable) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::invalid(format!("cannot create {}: {e}", path.display())))?;
    writer
        .write_record(&t.names)
        .map_err(|e| Error::invalid(format!("write failed: {e}")))?;
    for r in 0..t.n() {
        let row: Vec<String> = t.values.row(r).iter().map(|v| format!("{v}")).collect();
        writer
            .write_record(&row)
            .map_err(|e| Error::invalid(format!("write failed: {e}")))?;
    }
    writer
        .flush()
        .map_err(|e| Error::invalid(format!("flush failed: {e}")))?;
    Ok(())
}

/// Per-column mean and standard deviation, fit on the training split only.
#[derive(Debug, Clone, PartialEq)]
pub struct NormStats {
    pub mean: Vec<f64>,
    /// Population standard deviation, floored at 1e-8.
    pub std: Vec<f64>,
}

/// Floor applied to standard deviations so constant columns stay finite.
pub const STD_FLOOR: f64 = 1e-8;

/// Fits per-column mean and population standard deviation.
pub fn zscore_fit(train: &SeriesTable) -> Result<NormStats> {
    let n = train.n();
    if n == 0 {
        return Err(Error::invalid("cannot fit normalization on an empty table"));
    }
    let d = train.d();
    let mut mean = vec![0.0; d];
    for r in 0..n {
        for (m, v) in mean.iter_mut().zip(train.values.row(r)) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n as f64;
    }
    let mut var = vec![0.0; d];
    for r in 0..n {
        for j in 0..d {
            let diff = train.values.get(r, j) - mean[j];
            var[j] += diff * diff;
        }
    }
    let std = var
        .iter()
        .map(|v| (v / n as f64).sqrt().max(STD_FLOOR))
        .collect();
    Ok(NormStats { mean, std })
}

fn transform(t: &SeriesTable, stats: &NormStats, invert: bool) -> Result<SeriesTable> {
    if t.d() != stats.mean.len() {
        return Err(Error::shape(format!(
            "table has {} columns, stats have {}",
            t.d(),
            stats.mean.len()
        )));
    }
    let mut out = t.clone();
    for r in 0..out.n() {
        let row = out.values.row_mut(r);
        for (j, v) in row.iter_mut().enumerate() {
            *v = if invert {
                *v * stats.std[j] + stats.mean[j]
            } else {
                (*v - stats.mean[j]) / stats.std[j]
            };
        }
    }
    Ok(out)
}

/// (x − mean) / std per column.
pub fn zscore_apply(t: &SeriesTable, stats: &NormStats) -> Result<SeriesTable> {
    transform(t, stats, false)
}

/// x·std + mean per column; exact inverse of `zscore_apply` within 1e-12.
pub fn zscore_invert(t: &SeriesTable, stats: &NormStats) -> Result<SeriesTable> {
    transform(t, stats, true)
}

/// Denormalizes a forecast window channel-wise (channel c uses column c's stats).
pub fn denormalize_window(w: &SeriesWindow, stats: &NormStats) -> Result<SeriesWindow> {
    if w.channels != stats.mean.len() {
        return Err(Error::shape(format!(
            "window has {} channels, stats have {}",
            w.channels,
            stats.mean.len()
        )));
    }
    let mut out = w.clone();
    for b in 0..w.batch {
        for c in 0..w.channels {
            for v in out.row_mut(b, c) {
                *v = *v * stats.std[c] + stats.mean[c];
            }
        }
    }
    Ok(out)
}

/// Chronological 7:2:1 split: ⌊0.7N⌋ / ⌊0.2N⌋ / remainder. Fails if any
/// segment is too short to host a single (L_in, L_pred) window.
pub fn split_chronological(
    t: &SeriesTable,
    l_in: usize,
    l_pred: usize,
) -> Result<(SeriesTable, SeriesTable, SeriesTable)> {
    let n = t.n();
    let n_train = (n as f64 * 0.7).floor() as usize;
    let n_valid = (n as f64 * 0.2).floor() as usize;
    let n_test = n - n_train - n_valid;
    let min = l_in + l_pred;
    if n_train < min || n_valid < min || n_test < min {
        return Err(Error::invalid(format!(
            "split sizes {n_train}/{n_valid}/{n_test} cannot all host one {l_in}+{l_pred} window"
        )));
    }
    Ok((
        t.slice_rows(0, n_train),
        t.slice_rows(n_train, n_train + n_valid),
        t.slice_rows(n_train + n_valid, n),
    ))
}

/// Stride-1 sliding windows over one split segment. Windows are views into
/// the segment, materialized on `gather`.
#[derive(Debug, Clone)]
pub struct WindowSet {
    segment: SeriesTable,
    pub l_in: usize,
    pub l_pred: usize,
}

impl WindowSet {
    pub fn count(&self) -> usize {
        self.segment.n() - (self.l_in + self.l_pred) + 1
    }

    pub fn channels(&self) -> usize {
        self.segment.d()
    }

    /// Materializes the chosen windows as (inputs B×C×L_in, targets B×C×L_pred).
    /// Window i covers rows [i, i+L_in) and targets [i+L_in, i+L_in+L_pred).
    pub fn gather(&self, indices: &[usize]) -> Result<(SeriesWindow, SeriesWindow)> {
        let count = self.count();
        let d = self.segment.d();
        let mut inputs = SeriesWindow::zeros(indices.len(), d, self.l_in);
        let mut targets = SeriesWindow::zeros(indices.len(), d, self.l_pred);
        for (b, &i) in indices.iter().enumerate() {
            if i >= count {
                return Err(Error::invalid(format!(
                    "window index {i} out of range for {count} windows"
                )));
            }
            for c in 0..d {
                let row_in = inputs.row_mut(b, c);
                for (t, slot) in row_in.iter_mut().enumerate() {
                    *slot = self.segment.values.get(i + t, c);
                }
                let row_tg = targets.row_mut(b, c);
                for (t, slot) in row_tg.iter_mut().enumerate() {
                    *slot = self.segment.values.get(i + self.l_in + t, c);
                }
            }
        }
        Ok((inputs, targets))
    }
}

/// Builds the stride-1 window set for a segment; needs at least one window.
pub fn make_windows(segment: &SeriesTable, l_in: usize, l_pred: usize) -> Result<WindowSet> {
    if l_in == 0 || l_pred == 0 {
        return Err(Error::config("window lengths must be positive".to_string()));
    }
    if segment.n() < l_in + l_pred {
        return Err(Error::invalid(format!(
            "segment of {} rows cannot host a {l_in}+{l_pred} window",
            segment.n()
        )));
    }
    Ok(WindowSet {
        segment: segment.clone(),
        l_in,
        l_pred,
    })
}

/// Number of dominant bins to keep: the count of one-sided bins whose mean
/// amplitude (averaged over every stride-1 training input window and every
/// channel) reaches `threshold` × the maximum mean amplitude. At least 1.
pub fn select_k(train: &SeriesTable, l_in: usize, threshold: f64) -> Result<usize> {
    if l_in < 2 {
        return Err(Error::config(format!("L_in must be ≥ 2, got {l_in}")));
    }
    if train.n() < l_in {
        return Err(Error::invalid(format!(
            "training split of {} rows has no {l_in}-step window",
            train.n()
        )));
    }
    let bins = l_in / 2 + 1;
    let d = train.d();
    let n_windows = train.n() - l_in + 1;
    let mut mean_amp = vec![0.0; bins];
    let mut row = vec![0.0; l_in];
    for start in 0..n_windows {
        for c in 0..d {
            for (t, slot) in row.iter_mut().enumerate() {
                *slot = train.values.get(start + t, c);
            }
            let amp = spectral::amplitude_spectrum(&row)?;
            for (m, a) in mean_amp.iter_mut().zip(&amp) {
                *m += a;
            }
        }
    }
    let scale = 1.0 / (n_windows * d) as f64;
    for m in mean_amp.iter_mut() {
        *m *= scale;
    }
    let max = mean_amp.iter().fold(0.0f64, |a, &b| a.max(b));
    let k = mean_amp.iter().filter(|&&a| a >= threshold * max).count();
    Ok(k.max(1))
}

/// Dominant-bin counts published for the benchmark datasets, by name
/// (case-insensitive, separators ignored).
pub fn k_for_dataset(name: &str) -> Option<usize> {
    let key: String = name
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase();
    match key.as_str() {
        "etth1" => Some(4),
        "etth2" => Some(3),
        "ettm1" => Some(11),
        "ettm2" => Some(5),
        "electricity" => Some(3),
        "exchangerate" => Some(2),
        "traffic" => Some(30),
        "weather" => Some(2),
        _ => None,
    }
}

/// Recipe for a synthetic non-stationary series: linear trend, fixed seasonal
/// sinusoids with channel-specific phases, one slow full-length drift cycle,
/// and Gaussian noise.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n: usize,
    pub d: usize,
    pub trend_slope: f64,
    /// (period, amplitude) pairs.
    pub seasonal: Vec<(f64, f64)>,
    pub drift_amplitude: f64,
    pub noise_std: f64,
    pub seed: u64,
}

/// x_c[t] = slope·t + Σ_j a_j·sin(2πt/p_j + φ_{c,j}) + drift·sin(2πt/n + ψ_c)
/// + N(0, σ²), with phases and noise drawn from a per-channel seeded stream.
pub fn synth_generate(spec: &SynthSpec) -> Result<SeriesTable> {
    if spec.n == 0 || spec.d == 0 {
        return Err(Error::config("synth series needs n > 0 and d > 0".to_string()));
    }
    if spec.noise_std < 0.0 {
        return Err(Error::config("noise_std must be non-negative".to_string()));
    }
    let mut values = Mat::zeros(spec.n, spec.d);
    for c in 0..spec.d {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(spec.seed, c as u64));
        let phases: Vec<f64> = spec
            .seasonal
            .iter()
            .map(|_| rng.gen_range(0.0..(2.0 * PI)))
            .collect();
        let drift_phase = rng.gen_range(0.0..(2.0 * PI));
        let noise = Normal::new(0.0, spec.noise_std.max(f64::MIN_POSITIVE))
            .map_err(|e| Error::config(format!("bad noise distribution: {e}")))?;
        for t in 0..spec.n {
            let tf = t as f64;
            let mut v = spec.trend_slope * tf;
            for ((period, amplitude), phase) in spec.seasonal.iter().zip(&phases) {
                v += amplitude * (2.0 * PI * tf / period + phase).sin();
            }
            v += spec.drift_amplitude * (2.0 * PI * tf / spec.n as f64 + drift_phase).sin();
            if spec.noise_std > 0.0 {
                v += noise.sample(&mut rng);
            }
            values.set(t, c, v);
        }
    }
    Ok(SeriesTable {
        names: (0..spec.d).map(|c| format!("ch{c}")).collect(),
        values,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write as _;

    fn write_temp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f.flush().unwrap();
        f
    }

    fn table(cols: usize, rows: &[&[f64]]) -> SeriesTable {
        let mut values = Mat::zeros(rows.len(), cols);
        for (r, row) in rows.iter().enumerate() {
            values.row_mut(r).copy_from_slice(row);
        }
        SeriesTable {
            names: (0..cols).map(|c| format!("v{c}")).collect(),
            values,
        }
    }

    #[test]
    fn loads_plain_numeric_csv() {
        let f = write_temp("a,b\n1,2\n3,4\n5,6\n");
        let t = load_csv(f.path(), GapPolicy::Reject).unwrap();
        assert_eq!((t.n(), t.d()), (3, 2));
        assert_eq!(t.names, vec!["a", "b"]);
        assert_eq!(t.values.row(2), &[5.0, 6.0]);
    }

    #[test]
    fn timestamp_column_is_excluded() {
        let f = write_temp("date,x,y\n2020-01-01,1,2\n2020-01-02,3,4\n");
        let t = load_csv(f.path(), GapPolicy::Reject).unwrap();
        assert_eq!(t.d(), 2);
        assert_eq!(t.names, vec!["x", "y"]);
    }

    #[test]
    fn parse_error_names_file_row() {
        // "abc" sits on the fifth physical line of the file.
        let f = write_temp("a\n1\n2\n3\nabc\n");
        let err = load_csv(f.path(), GapPolicy::Reject).unwrap_err();
        match err {
            Error::Parse { row, .. } => assert_eq!(row, 5),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn gap_policies_differ() {
        let csv = "a,b\n1,2\n,4\n";
        let f = write_temp(csv);
        assert!(load_csv(f.path(), GapPolicy::Reject).is_err());
        let t = load_csv(f.path(), GapPolicy::ForwardFill).unwrap();
        assert_eq!(t.values.row(1), &[1.0, 4.0], "gap takes previous row's value");

        let first_gap = write_temp("a,b\n,2\n3,4\n");
        assert!(load_csv(first_gap.path(), GapPolicy::ForwardFill).is_err());
    }

    #[test]
    fn zscore_example_and_floor() {
        let t = table(2, &[&[0.0, 5.0], &[2.0, 5.0]]);
        let s = zscore_fit(&t).unwrap();
        assert_eq!(s.mean, vec![1.0, 5.0]);
        assert_eq!(s.std[0], 1.0, "population std of [0,2]");
        assert_eq!(s.std[1], STD_FLOOR, "constant column is floored");
        let normed = zscore_apply(&t, &s).unwrap();
        assert_eq!(normed.values.get(0, 1), 0.0);
        assert_eq!(normed.values.get(1, 1), 0.0);
    }

    #[test]
    fn zscore_round_trips() {
        let t = table(2, &[&[1.0, -2.0], &[4.0, 8.0], &[-3.0, 0.5]]);
        let s = zscore_fit(&t).unwrap();
        let back = zscore_invert(&zscore_apply(&t, &s).unwrap(), &s).unwrap();
        for (a, b) in t.values.data.iter().zip(&back.values.data) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn stats_come_from_train_only() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let t = table(1, &refs);
        let (train, _, _) = split_chronological(&t, 3, 2).unwrap();
        let s = zscore_fit(&train).unwrap();
        // Perturbing later rows must not move training statistics.
        let mut t2 = t.clone();
        for r in 70..100 {
            t2.values.set(r, 0, 1e9);
        }
        let (train2, _, _) = split_chronological(&t2, 3, 2).unwrap();
        assert_eq!(zscore_fit(&train2).unwrap(), s);
    }

    #[test]
    fn split_sizes_and_concatenation() {
        let rows: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let t = table(1, &refs);
        let (train, valid, test) = split_chronological(&t, 3, 2).unwrap();
        assert_eq!((train.n(), valid.n(), test.n()), (70, 20, 10));
        let mut all = train.values.data.clone();
        all.extend(&valid.values.data);
        all.extend(&test.values.data);
        assert_eq!(all, t.values.data);
    }

    #[test]
    fn split_rejects_short_series() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        assert!(split_chronological(&table(1, &refs), 96, 96).is_err());
    }

    #[test]
    fn window_counts() {
        let rows: Vec<Vec<f64>> = (0..200).map(|i| vec![i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let t = table(1, &refs);
        assert_eq!(make_windows(&t, 96, 96).unwrap().count(), 9);
        let exact = t.slice_rows(0, 192);
        assert_eq!(make_windows(&exact, 96, 96).unwrap().count(), 1);
        assert!(make_windows(&t.slice_rows(0, 191), 96, 96).is_err());
    }

    #[test]
    fn windows_are_contiguous() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let ws = make_windows(&table(1, &refs), 4, 3).unwrap();
        let (inputs, targets) = ws.gather(&[5]).unwrap();
        assert_eq!(inputs.row(0, 0), &[5.0, 6.0, 7.0, 8.0]);
        assert_eq!(targets.row(0, 0), &[9.0, 10.0, 11.0]);
    }

    #[test]
    fn gather_rejects_out_of_range() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        let ws = make_windows(&table(1, &refs), 4, 3).unwrap();
        assert!(ws.gather(&[ws.count()]).is_err());
    }

    #[test]
    fn select_k_finds_single_sinusoid() {
        let t = synth_generate(&SynthSpec {
            n: 128,
            d: 1,
            trend_slope: 0.0,
            seasonal: vec![(16.0, 2.0)],
            drift_amplitude: 0.0,
            noise_std: 0.0,
            seed: 7,
        })
        .unwrap();
        assert_eq!(select_k(&t, 64, 0.9).unwrap(), 1);
    }

    #[test]
    fn select_k_on_constant_is_dc_only() {
        let rows: Vec<Vec<f64>> = (0..40).map(|_| vec![3.0]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(|r| r.as_slice()).collect();
        assert_eq!(select_k(&table(1, &refs), 16, 0.9).unwrap(), 1);
    }

    #[test]
    fn select_k_monotone_in_threshold() {
        let t = synth_generate(&SynthSpec {
            n: 200,
            d: 2,
            trend_slope: 0.01,
            seasonal: vec![(16.0, 1.0), (32.0, 0.5)],
            drift_amplitude: 0.5,
            noise_std: 0.05,
            seed: 9,
        })
        .unwrap();
        let mut prev = usize::MAX;
        for threshold in [0.2, 0.5, 0.8, 0.95] {
            let k = select_k(&t, 64, threshold).unwrap();
            assert!(k <= prev, "K should not grow as the threshold rises");
            assert!(k >= 1);
            prev = k;
        }
    }

    #[test]
    fn dataset_defaults_match_published_table() {
        let expected = [
            ("ETTh1", 4),
            ("ETTh2", 3),
            ("ETTm1", 11),
            ("ETTm2", 5),
            ("Electricity", 3),
            ("ExchangeRate", 2),
            ("Traffic", 30),
            ("Weather", 2),
        ];
        for (name, k) in expected {
            assert_eq!(k_for_dataset(name), Some(k), "{name}");
        }
        assert_eq!(k_for_dataset("exchange_rate"), Some(2), "separator-insensitive");
        assert_eq!(k_for_dataset("unknown"), None);
    }

    #[test]
    fn synth_is_deterministic() {
        let spec = SynthSpec {
            n: 64,
            d: 3,
            trend_slope: 0.02,
            seasonal: vec![(12.0, 1.0)],
            drift_amplitude: 0.3,
            noise_std: 0.1,
            seed: 42,
        };
        assert_eq!(synth_generate(&spec).unwrap(), synth_generate(&spec).unwrap());
        let mut other = spec.clone();
        other.seed = 43;
        assert_ne!(synth_generate(&other).unwrap(), synth_generate(&spec).unwrap());
    }

    #[test]
    fn pure_trend_recovers_slope() {
        let t = synth_generate(&SynthSpec {
            n: 100,
            d: 1,
            trend_slope: 0.37,
            seasonal: vec![],
            drift_amplitude: 0.0,
            noise_std: 0.0,
            seed: 1,
        })
        .unwrap();
        // Least-squares slope of an exactly linear series.
        let n = t.n() as f64;
        let t_mean = (n - 1.0) / 2.0;
        let y_mean: f64 = t.values.data.iter().sum::<f64>() / n;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..t.n() {
            let dt = i as f64 - t_mean;
            num += dt * (t.values.get(i, 0) - y_mean);
            den += dt * dt;
        }
        assert!((num / den - 0.37).abs() < 1e-9);
    }

    #[test]
    fn noiseless_seasonal_is_fully_dominant() {
        let t = synth_generate(&SynthSpec {
            n: 64,
            d: 1,
            trend_slope: 0.0,
            seasonal: vec![(16.0, 2.0)],
            drift_amplitude: 0.0,
            noise_std: 0.0,
            seed: 5,
        })
        .unwrap();
        let col: Vec<f64> = (0..64).map(|r| t.values.get(r, 0)).collect();
        let d = spectral::decompose(&col, 1).unwrap();
        assert_eq!(d.dominant.bins, vec![4], "period 16 in a 64-window is bin 4");
        assert!(d.stable.iter().all(|v| v.abs() < 1e-9));
    }
}
