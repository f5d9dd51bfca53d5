//! Accuracy and group-unfairness metrics. Unfairness compares the prediction
//! samples of the two true sensitive groups.

use crate::domain::{FairnessReport, Group};
use crate::error::{Error, Result};

/// Bin count for [`tv_binned`] and grid size for [`ks_grid`] in reports.
pub const DEFAULT_BINS: usize = 50;

fn nonempty(x: &[f64], what: &'static str) -> Result<()> {
    if x.is_empty() {
        return Err(Error::Empty(what));
    }
    Ok(())
}

fn sorted(x: &[f64]) -> Vec<f64> {
    let mut v = x.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

pub fn mse(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    nonempty(predictions, "predictions")?;
    if predictions.len() != targets.len() {
        return Err(Error::Dimension {
            row: None,
            expected: predictions.len(),
            found: targets.len(),
        });
    }
    let sum: f64 = predictions.iter().zip(targets).map(|(p, t)| (p - t).powi(2)).sum();
    Ok(sum / predictions.len() as f64)
}

/// Wasserstein-2 distance between two empirical measures with uniform
/// weights. The monotone coupling is walked in integer units of
/// `1 / (na * nb)` so the quantile grid is merged exactly.
pub fn w2_empirical(samples_a: &[f64], samples_b: &[f64]) -> Result<f64> {
    nonempty(samples_a, "first sample")?;
    nonempty(samples_b, "second sample")?;
    let a = sorted(samples_a);
    let b = sorted(samples_b);
    let (na, nb) = (a.len() as u64, b.len() as u64);
    let (mut i, mut j) = (0usize, 0usize);
    let (mut ra, mut rb) = (nb, na);
    let mut total = 0.0;
    while i < a.len() && j < b.len() {
        let q = ra.min(rb);
        total += q as f64 * (a[i] - b[j]).powi(2);
        ra -= q;
        rb -= q;
        if ra == 0 {
            i += 1;
            ra = nb;
        }
        if rb == 0 {
            j += 1;
            rb = na;
        }
    }
    Ok((total / (na as f64 * nb as f64)).sqrt())
}

/// Half the L1 distance between equal-width histograms over the pooled
/// range. Zero when every pooled value is equal.
pub fn tv_binned(samples_a: &[f64], samples_b: &[f64], n_bins: usize) -> Result<f64> {
    nonempty(samples_a, "first sample")?;
    nonempty(samples_b, "second sample")?;
    if n_bins == 0 {
        return Err(Error::param("n_bins", "must be at least 1"));
    }
    let (lo, hi) = pooled_range(samples_a, samples_b);
    if !(hi > lo) {
        return Ok(0.0);
    }
    let width = hi - lo;
    let histogram = |x: &[f64]| {
        let mut counts = vec![0.0; n_bins];
        for v in x {
            let idx = (((v - lo) / width) * n_bins as f64).floor() as usize;
            counts[idx.min(n_bins - 1)] += 1.0;
        }
        let n = x.len() as f64;
        counts.iter_mut().for_each(|c| *c /= n);
        counts
    };
    let pa = histogram(samples_a);
    let pb = histogram(samples_b);
    let l1: f64 = pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).sum();
    Ok((0.5 * l1).min(1.0))
}

fn pooled_range(a: &[f64], b: &[f64]) -> (f64, f64) {
    a.iter().chain(b).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
        (lo.min(v), hi.max(v))
    })
}

fn ecdf(sorted: &[f64], y: f64) -> f64 {
    sorted.partition_point(|&v| v <= y) as f64 / sorted.len() as f64
}

/// Kolmogorov-Smirnov statistic over the pooled sample points.
pub fn ks(samples_a: &[f64], samples_b: &[f64]) -> Result<f64> {
    nonempty(samples_a, "first sample")?;
    nonempty(samples_b, "second sample")?;
    let a = sorted(samples_a);
    let b = sorted(samples_b);
    let best = a
        .iter()
        .chain(&b)
        .map(|&y| (ecdf(&a, y) - ecdf(&b, y)).abs())
        .fold(0.0, f64::max);
    Ok(best)
}

/// Largest CDF gap over `n_grid` equally spaced points spanning the pooled
/// range.
pub fn ks_grid(samples_a: &[f64], samples_b: &[f64], n_grid: usize) -> Result<f64> {
    nonempty(samples_a, "first sample")?;
    nonempty(samples_b, "second sample")?;
    if n_grid == 0 {
        return Err(Error::param("n_grid", "must be at least 1"));
    }
    let a = sorted(samples_a);
    let b = sorted(samples_b);
    let (lo, hi) = pooled_range(&a, &b);
    let steps = (n_grid - 1).max(1) as f64;
    let best = (0..n_grid)
        .map(|t| {
            let y = if t + 1 == n_grid && n_grid > 1 { hi } else { lo + (hi - lo) * t as f64 / steps };
            (ecdf(&a, y) - ecdf(&b, y)).abs()
        })
        .fold(0.0, f64::max);
    Ok(best)
}

/// Population variance.
pub fn variance(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
}

/// Splits values by group, keeping order.
pub fn split_by_group(values: &[f64], sensitive: &[Group]) -> (Vec<f64>, Vec<f64>) {
    let mut plus = Vec::new();
    let mut minus = Vec::new();
    for (&v, &g) in values.iter().zip(sensitive) {
        match g {
            Group::Plus => plus.push(v),
            Group::Minus => minus.push(v),
        }
    }
    (plus, minus)
}

pub fn build_report(predictions: &[f64], targets: &[f64], sensitive: &[Group]) -> Result<FairnessReport> {
    if predictions.len() != sensitive.len() {
        return Err(Error::Dimension {
            row: None,
            expected: predictions.len(),
            found: sensitive.len(),
        });
    }
    let mse = mse(predictions, targets)?;
    let (plus, minus) = split_by_group(predictions, sensitive);
    if plus.is_empty() || minus.is_empty() {
        return Err(Error::SingleClass);
    }
    let report = FairnessReport {
        mse,
        w2: w2_empirical(&plus, &minus)?,
        tv: tv_binned(&plus, &minus, DEFAULT_BINS)?,
        ks: ks(&plus, &minus)?,
        ks_grid: ks_grid(&plus, &minus, DEFAULT_BINS)?,
        var_plus: variance(&plus),
        var_minus: variance(&minus),
    };
    report.validate()?;
    Ok(report)
}
