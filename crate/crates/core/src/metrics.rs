//! Evaluation metrics for generated signals.

use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

/// Symmetric integer shift range `{-max_shift, ..., +max_shift}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShiftSet {
    pub max_shift: usize,
}

impl ShiftSet {
    pub fn new(max_shift: usize) -> Self {
        Self { max_shift }
    }

    /// One second of shifts at sampling rate `fs`.
    pub fn one_second(fs: f64) -> Self {
        Self {
            max_shift: fs.round().max(0.0) as usize,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = isize> {
        let s = self.max_shift as isize;
        -s..=s
    }
}

/// Reported when the residual has zero power.
pub const SNR_CAP_DB: f64 = 300.0;

fn nonempty_pair(x_hat: &[f64], x: &[f64]) -> Result<()> {
    check_len(x.len(), x_hat.len())?;
    if x.is_empty() {
        return Err(Error::param("metrics need nonempty inputs"));
    }
    Ok(())
}

pub fn rmse(x_hat: &[f64], x: &[f64]) -> Result<f64> {
    nonempty_pair(x_hat, x)?;
    let ss: f64 = x_hat.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((ss / x.len() as f64).sqrt())
}

pub fn mae(x_hat: &[f64], x: &[f64]) -> Result<f64> {
    nonempty_pair(x_hat, x)?;
    let s: f64 = x_hat.iter().zip(x).map(|(a, b)| (a - b).abs()).sum();
    Ok(s / x.len() as f64)
}

/// Overlapping views after shifting `x_hat` by `tau`: pairs `x_hat[i + tau]`
/// with `x[i]`.
fn overlap<'a>(x_hat: &'a [f64], x: &'a [f64], tau: isize) -> (&'a [f64], &'a [f64]) {
    let n = x.len();
    let k = tau.unsigned_abs();
    if tau >= 0 {
        (&x_hat[k..], &x[..n - k])
    } else {
        (&x_hat[..n - k], &x[k..])
    }
}

fn min_over_shifts(
    x_hat: &[f64],
    x: &[f64],
    shifts: ShiftSet,
    metric: fn(&[f64], &[f64]) -> Result<f64>,
) -> Result<(f64, isize)> {
    nonempty_pair(x_hat, x)?;
    if shifts.max_shift >= x.len() {
        return Err(Error::param(format!(
            "shift {} leaves no overlap for length {}",
            shifts.max_shift,
            x.len()
        )));
    }
    let mut best: (f64, isize) = (f64::INFINITY, 0);
    for tau in shifts.iter() {
        let (a, b) = overlap(x_hat, x, tau);
        let v = metric(a, b)?;
        if v < best.0 || (v == best.0 && tau.abs() < best.1.abs()) {
            best = (v, tau);
        }
    }
    Ok(best)
}

/// Lowest RMSE over the shift set, computed on the truncated overlap, with
/// the minimizing shift.
pub fn min_rmse_with_shift(x_hat: &[f64], x: &[f64], shifts: ShiftSet) -> Result<(f64, isize)> {
    min_over_shifts(x_hat, x, shifts, rmse)
}

pub fn min_rmse(x_hat: &[f64], x: &[f64], shifts: ShiftSet) -> Result<f64> {
    min_rmse_with_shift(x_hat, x, shifts).map(|v| v.0)
}

pub fn min_mae(x_hat: &[f64], x: &[f64], shifts: ShiftSet) -> Result<f64> {
    min_over_shifts(x_hat, x, shifts, mae).map(|v| v.0)
}

/// Two-sample Kolmogorov-Smirnov statistic: the largest gap between the
/// empirical CDFs.
pub fn ks_test(x_hat: &[f64], x: &[f64]) -> Result<f64> {
    if x_hat.is_empty() || x.is_empty() {
        return Err(Error::param("KS statistic needs nonempty samples"));
    }
    if x_hat.iter().chain(x).any(|v| v.is_nan()) {
        return Err(Error::NonFinite("NaN in KS input".into()));
    }
    let mut a = x_hat.to_vec();
    let mut b = x.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(d)
}

/// `10 log10(P_x / P_residual)`; [`SNR_CAP_DB`] when the residual is zero.
pub fn snr_db(x: &[f64], residual: &[f64]) -> Result<f64> {
    nonempty_pair(residual, x)?;
    let px = x.iter().map(|v| v * v).sum::<f64>();
    let pr = residual.iter().map(|v| v * v).sum::<f64>();
    if px == 0.0 {
        return Err(Error::param("signal has zero power"));
    }
    if pr == 0.0 {
        return Ok(SNR_CAP_DB);
    }
    Ok((10.0 * (px / pr).log10()).min(SNR_CAP_DB))
}

/// `None` marks a metric whose denominator is zero.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub accuracy: Option<f64>,
    pub specificity: Option<f64>,
    pub sensitivity: Option<f64>,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

pub fn classification_metrics(tp: u64, tn: u64, fp: u64, fn_: u64) -> Classification {
    Classification {
        accuracy: ratio(tp + tn, tp + tn + fp + fn_),
        specificity: ratio(tn, tn + fp),
        sensitivity: ratio(tp, tp + fn_),
    }
}

/// One line of an evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub task: String,
    pub metric: String,
    pub mean: f64,
    /// Standard error of the mean over trials; 0 for a single trial.
    pub stderr: f64,
    pub n: usize,
}

impl EvalRow {
    pub const CSV_HEADER: &'static str = "task,metric,mean,stderr,n";

    pub fn from_values(task: &str, metric: &str, values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::param(format!("no values for {metric}")));
        }
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Ok(Self {
            task: task.to_string(),
            metric: metric.to_string(),
            mean,
            stderr,
            n,
        })
    }

    pub fn csv_row(&self) -> String {
        format!("\"{}\",{},{},{},{}", self.task, self.metric, self.mean, self.stderr, self.n)
    }
}
