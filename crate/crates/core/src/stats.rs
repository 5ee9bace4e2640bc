//! Weighted empirical distributions and the two-sample machinery used by the
//! verification battery: Kolmogorov–Smirnov distances with asymptotic
//! p-values and 1-d Wasserstein via the sorted coupling.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// A weighted sample cloud over `R^k` (state indices are stored as floats in
/// their own column). Weights are kept normalized to total mass one.
#[derive(Debug, Clone)]
pub struct EmpiricalDist {
    /// Row-major samples; every row has the same arity.
    pub samples: Vec<Vec<f64>>,
    /// Nonnegative weights summing to one.
    pub weights: Vec<f64>,
}

impl EmpiricalDist {
    pub fn new(samples: Vec<Vec<f64>>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySample);
        }
        let n = samples.len();
        let k = samples[0].len();
        if samples.iter().any(|row| row.len() != k) {
            return Err(Error::DimensionMismatch("ragged sample rows".into()));
        }
        Ok(EmpiricalDist {
            samples,
            weights: vec![1.0 / n as f64; n],
        })
    }

    pub fn with_weights(samples: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptySample);
        }
        if samples.len() != weights.len() {
            return Err(Error::DimensionMismatch(
                "weights and samples differ in length".into(),
            ));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 || weights.iter().any(|w| *w < 0.0) {
            return Err(Error::DimensionMismatch(
                "weights must be nonnegative with positive total".into(),
            ));
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(EmpiricalDist { samples, weights })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.samples[0].len()
    }

    /// 1-d marginal as (value, weight) pairs sorted by value. Marginalization
    /// preserves total mass.
    pub fn marginal(&self, col: usize) -> Result<Vec<(f64, f64)>> {
        if col >= self.arity() {
            return Err(Error::DimensionMismatch(format!(
                "column {col} out of range (arity {})",
                self.arity()
            )));
        }
        let mut pairs: Vec<(f64, f64)> = self
            .samples
            .iter()
            .zip(&self.weights)
            .map(|(row, w)| (row[col], *w))
            .collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        Ok(pairs)
    }

    /// Effective sample size (Kish), used in the asymptotic KS p-value.
    pub fn effective_len(&self) -> f64 {
        let s2: f64 = self.weights.iter().map(|w| w * w).sum();
        if s2 > 0.0 {
            1.0 / s2
        } else {
            0.0
        }
    }
}

/// Sup distance between the weighted ECDFs of two sorted (value, weight)
/// marginals. Both inputs must be normalized; ties are handled by comparing
/// the ECDFs only after all equal values on both sides are consumed.
pub fn ks_distance_sorted(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut i = 0;
    let mut j = 0;
    let mut fa = 0.0;
    let mut fb = 0.0;
    let mut d: f64 = 0.0;
    while i < a.len() || j < b.len() {
        let va = if i < a.len() { a[i].0 } else { f64::INFINITY };
        let vb = if j < b.len() { b[j].0 } else { f64::INFINITY };
        let v = va.min(vb);
        while i < a.len() && a[i].0 == v {
            fa += a[i].1;
            i += 1;
        }
        while j < b.len() && b[j].0 == v {
            fb += b[j].1;
            j += 1;
        }
        d = d.max((fa - fb).abs());
    }
    Ok(d)
}

/// Two-sample KS statistic between 1-d marginals of two clouds.
pub fn ks_distance(d1: &EmpiricalDist, d2: &EmpiricalDist, col: usize) -> Result<f64> {
    if d1.arity() != d2.arity() {
        return Err(Error::DimensionMismatch(format!(
            "arity {} vs {}",
            d1.arity(),
            d2.arity()
        )));
    }
    ks_distance_sorted(&d1.marginal(col)?, &d2.marginal(col)?)
}

/// One-sample KS statistic of a sorted weighted marginal against a CDF.
pub fn ks_distance_cdf<F: Fn(f64) -> f64>(a: &[(f64, f64)], cdf: F) -> Result<f64> {
    if a.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut acc = 0.0;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < a.len() {
        let v = a[i].0;
        let below = acc;
        while i < a.len() && a[i].0 == v {
            acc += a[i].1;
            i += 1;
        }
        let f = cdf(v);
        d = d.max((below - f).abs()).max((acc - f).abs());
    }
    Ok(d)
}

/// Kolmogorov tail function Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
pub fn kolmogorov_q(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64).powi(2) * lambda * lambda).exp();
        sum += sign * term;
        sign = -sign;
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic two-sample p-value with effective sizes `n` and `m`. With
/// atoms present the statistic is stochastically smaller than the continuous
/// null, so the p-value is conservative.
pub fn ks_p_value(d: f64, n: f64, m: f64) -> f64 {
    let ne = n * m / (n + m);
    let lambda = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    kolmogorov_q(lambda)
}

/// One-sample p-value at effective size `n`.
pub fn ks_p_value_one_sample(d: f64, n: f64) -> f64 {
    let lambda = (n.sqrt() + 0.12 + 0.11 / n.sqrt()) * d;
    kolmogorov_q(lambda)
}

/// Critical KS distance at level `alpha` for effective sizes `n`, `m`:
/// c(alpha) * sqrt((n+m)/(n m)).
pub fn ks_critical(alpha: f64, n: f64, m: f64) -> f64 {
    // invert Q(c) = alpha by bisection; Q is monotone decreasing
    let mut lo = 0.0;
    let mut hi = 4.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if kolmogorov_q(mid) > alpha {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let c = 0.5 * (lo + hi);
    c * ((n + m) / (n * m)).sqrt()
}

/// 1-d earth-mover distance via the quantile coupling of two sorted weighted
/// marginals: integral of |F1 - F2|.
pub fn wasserstein1_sorted(a: &[(f64, f64)], b: &[(f64, f64)]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptySample);
    }
    // merge the support points and integrate |F1 - F2| between consecutive ones
    let mut grid: Vec<f64> = a.iter().map(|p| p.0).chain(b.iter().map(|p| p.0)).collect();
    grid.sort_by(|x, y| x.partial_cmp(y).unwrap());
    grid.dedup();
    let mut i = 0;
    let mut j = 0;
    let mut fa = 0.0;
    let mut fb = 0.0;
    let mut total = 0.0;
    for w in grid.windows(2) {
        let (v, next) = (w[0], w[1]);
        while i < a.len() && a[i].0 <= v {
            fa += a[i].1;
            i += 1;
        }
        while j < b.len() && b[j].0 <= v {
            fb += b[j].1;
            j += 1;
        }
        total += (fa - fb).abs() * (next - v);
    }
    Ok(total)
}

pub fn wasserstein1(d1: &EmpiricalDist, d2: &EmpiricalDist, col: usize) -> Result<f64> {
    if d1.arity() != d2.arity() {
        return Err(Error::DimensionMismatch(format!(
            "arity {} vs {}",
            d1.arity(),
            d2.arity()
        )));
    }
    wasserstein1_sorted(&d1.marginal(col)?, &d2.marginal(col)?)
}

/// Distance between two sample clouds of the same arity: the maximum of the
/// per-column KS distances. Used by the level-convergence diagnostics.
pub fn max_marginal_ks(d1: &EmpiricalDist, d2: &EmpiricalDist) -> Result<f64> {
    let mut d: f64 = 0.0;
    for col in 0..d1.arity() {
        d = d.max(ks_distance(d1, d2, col)?);
    }
    Ok(d)
}

/// Mean, standard error pair of a sample.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    (mean, (var / n).sqrt())
}

/// Pearson correlation of two equal-length samples.
pub fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx).powi(2);
        vy += (y - my).powi(2);
    }
    cov / (vx.sqrt() * vy.sqrt()).max(f64::MIN_POSITIVE)
}

/// Outcome of one named check. `pass` always reflects the declared relation
/// between `value` and `threshold`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: String,
    pub value: f64,
    pub threshold: f64,
    /// "<", ">", "<=", ">=" — how value relates to threshold on a pass.
    pub relation: String,
    pub pass: bool,
    pub sample_sizes: Vec<usize>,
    pub seed: u64,
}

impl TestReport {
    pub fn check(
        name: &str,
        statistic: &str,
        value: f64,
        threshold: f64,
        relation: &str,
        sample_sizes: Vec<usize>,
        seed: u64,
    ) -> Self {
        let pass = match relation {
            "<" => value < threshold,
            "<=" => value <= threshold,
            ">" => value > threshold,
            ">=" => value >= threshold,
            other => panic!("unknown relation {other}"),
        };
        TestReport {
            name: name.to_string(),
            statistic: statistic.to_string(),
            value,
            threshold,
            relation: relation.to_string(),
            pass,
            sample_sizes,
            seed,
        }
    }
}
