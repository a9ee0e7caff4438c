//! Small numerical helpers: compensated sums, moments, percentile bootstrap.

use rand::{Rng, SeedableRng};
use rand_pcg::Pcg64;
use rayon::prelude::*;

use crate::policy::derive_seed;

/// Neumaier-compensated sum.
pub fn neumaier_sum<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            comp += (sum - t) + x;
        } else {
            comp += (x - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    neumaier_sum(xs.iter().copied()) / xs.len() as f64
}

/// Unbiased (n − 1) sample variance.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return f64::NAN;
    }
    let m = mean(xs);
    neumaier_sum(xs.iter().map(|x| (x - m) * (x - m))) / (xs.len() - 1) as f64
}

/// Population (n) variance.
pub fn population_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    neumaier_sum(xs.iter().map(|x| (x - m) * (x - m))) / xs.len() as f64
}

/// Linear-interpolated quantile of sorted data, `q ∈ [0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// Per-coordinate sample variances of a set of equal-length vectors.
pub fn coordinate_variances(samples: &[Vec<f64>]) -> Vec<f64> {
    let n = samples.len();
    let dim = samples.first().map_or(0, Vec::len);
    if n < 2 {
        return vec![f64::NAN; dim];
    }
    let mut means = vec![0.0; dim];
    for s in samples {
        for (m, x) in means.iter_mut().zip(s) {
            *m += x;
        }
    }
    means.iter_mut().for_each(|m| *m /= n as f64);
    let mut vars = vec![0.0; dim];
    for s in samples {
        for ((v, x), m) in vars.iter_mut().zip(s).zip(&means) {
            let d = x - m;
            *v += d * d;
        }
    }
    vars.iter_mut().for_each(|v| *v /= (n - 1) as f64);
    vars
}

/// Trace of the sample covariance of vectors selected by `idx`.
fn trace_of(samples: &[Vec<f64>], idx: &[usize]) -> f64 {
    let n = idx.len();
    let dim = samples[0].len();
    let mut s1 = vec![0.0; dim];
    let mut s2 = vec![0.0; dim];
    for &i in idx {
        for (k, &x) in samples[i].iter().enumerate() {
            s1[k] += x;
            s2[k] += x * x;
        }
    }
    let nf = n as f64;
    s1.iter()
        .zip(&s2)
        .map(|(a, b)| ((b - a * a / nf) / (nf - 1.0)).max(0.0))
        .sum()
}

/// Percentile bootstrap interval for the covariance trace of `samples`.
/// Resample `b` draws from a stream derived from `(seed, b)`, so the result
/// does not depend on thread count.
pub fn bootstrap_trace_ci(
    samples: &[Vec<f64>],
    resamples: usize,
    level: f64,
    seed: u64,
) -> (f64, f64) {
    let n = samples.len();
    assert!(n >= 2, "bootstrap needs at least two samples");
    let mut traces: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = Pcg64::seed_from_u64(derive_seed(seed, b as u64));
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            trace_of(samples, &idx)
        })
        .collect();
    traces.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    (
        quantile_sorted(&traces, alpha),
        quantile_sorted(&traces, 1.0 - alpha),
    )
}

/// Percentile bootstrap interval for the mean of scalars.
pub fn bootstrap_mean_ci(xs: &[f64], resamples: usize, level: f64, seed: u64) -> (f64, f64) {
    let n = xs.len();
    assert!(n >= 1);
    let mut means: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(|b| {
            let mut rng = Pcg64::seed_from_u64(derive_seed(seed, b as u64));
            (0..n).map(|_| xs[rng.random_range(0..n)]).sum::<f64>() / n as f64
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    (
        quantile_sorted(&means, alpha),
        quantile_sorted(&means, 1.0 - alpha),
    )
}

/// Least-squares slope of `ys` against `0, 1, 2, …`.
pub fn ls_slope(ys: &[f64]) -> f64 {
    let n = ys.len() as f64;
    if ys.len() < 2 {
        return 0.0;
    }
    let xm = (n - 1.0) / 2.0;
    let ym = mean(ys);
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, y) in ys.iter().enumerate() {
        let dx = i as f64 - xm;
        sxy += dx * (y - ym);
        sxx += dx * dx;
    }
    sxy / sxx
}
