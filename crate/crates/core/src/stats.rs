//! Small statistics toolkit: compensated sums, sample moments, Monte Carlo
//! estimates with provenance, and the goodness-of-fit statistics used by
//! the experiments.

use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Neumaier compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Running first and second moments, accumulated in insertion order so
/// that a fixed input order gives bitwise identical output.
#[derive(Debug, Clone, Copy, Default)]
pub struct Moments {
    count: u64,
    sum: CompensatedSum,
    sum_sq: CompensatedSum,
}

impl Moments {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.count += 1;
        self.sum.add(x);
        self.sum_sq.add(x * x);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        self.sum.value() / self.count as f64
    }

    /// Unbiased sample variance (zero for fewer than two samples).
    pub fn variance(&self) -> f64 {
        if self.count < 2 {
            return 0.0;
        }
        let n = self.count as f64;
        let mean = self.mean();
        ((self.sum_sq.value() - n * mean * mean) / (n - 1.0)).max(0.0)
    }

    pub fn stderr(&self) -> f64 {
        if self.count == 0 {
            return f64::NAN;
        }
        (self.variance() / self.count as f64).sqrt()
    }
}

impl FromIterator<f64> for Moments {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut m = Moments::new();
        for x in iter {
            m.push(x);
        }
        m
    }
}

/// Where a Monte Carlo number came from.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct Provenance {
    pub master_seed: u64,
    /// Substreams `[first_stream, first_stream + streams)` were consumed.
    pub first_stream: u64,
    pub streams: u64,
    pub config_hash: Option<String>,
}

impl Provenance {
    pub fn new(master_seed: u64, streams: u64) -> Self {
        Provenance {
            master_seed,
            first_stream: 0,
            streams,
            config_hash: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub count: u64,
    pub mean: f64,
    pub stderr: f64,
    pub provenance: Provenance,
}

impl EstimateResult {
    pub fn from_moments(m: &Moments, provenance: Provenance) -> Self {
        EstimateResult {
            count: m.count(),
            mean: m.mean(),
            stderr: m.stderr(),
            provenance,
        }
    }

    /// Bernoulli proportion `hits / trials` with its binomial standard error.
    pub fn proportion(hits: u64, trials: u64, provenance: Provenance) -> Self {
        let p = if trials == 0 {
            f64::NAN
        } else {
            hits as f64 / trials as f64
        };
        let stderr = if trials == 0 {
            f64::NAN
        } else {
            (p * (1.0 - p) / trials as f64).sqrt()
        };
        EstimateResult {
            count: trials,
            mean: p,
            stderr,
            provenance,
        }
    }

    pub fn within(&self, target: f64, sigmas: f64) -> bool {
        (self.mean - target).abs() <= sigmas * self.stderr
    }
}

/// Two-sample Kolmogorov–Smirnov distance `sup |F_a - F_b|`.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    assert!(!a.is_empty() && !b.is_empty(), "KS needs nonempty samples");
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic critical value of the two-sample KS distance at `level`.
pub fn ks_critical(n1: usize, n2: usize, level: f64) -> f64 {
    let c = (-(level / 2.0).ln() / 2.0).sqrt();
    c * ((n1 + n2) as f64 / (n1 as f64 * n2 as f64)).sqrt()
}

/// Ordinary least squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::DegenerateGrid(format!(
            "need at least two paired points, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return Err(Error::DegenerateGrid("abscissae are all equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Ok(sxy / sxx)
}

/// Empirical quantile with linear interpolation (type 7).
pub fn quantile(values: &[f64], q: f64) -> f64 {
    assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * q.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Pearson chi-square statistic and p-value for observed counts against
/// expected probabilities. Cells with expectation below `min_expected` are
/// pooled into one bin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

pub fn chi_square(observed: &[u64], expected_prob: &[f64], min_expected: f64) -> ChiSquareTest {
    assert_eq!(observed.len(), expected_prob.len());
    let total: u64 = observed.iter().sum();
    let total = total as f64;
    let mut statistic = 0.0;
    let mut cells = 0usize;
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (&o, &p) in observed.iter().zip(expected_prob) {
        let e = p * total;
        if e < min_expected {
            pooled_obs += o as f64;
            pooled_exp += e;
        } else {
            statistic += (o as f64 - e).powi(2) / e;
            cells += 1;
        }
    }
    if pooled_exp > 0.0 {
        statistic += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        cells += 1;
    }
    let dof = cells.saturating_sub(1).max(1);
    let dist = ChiSquared::new(dof as f64).expect("positive dof");
    ChiSquareTest {
        statistic,
        dof,
        p_value: 1.0 - dist.cdf(statistic),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1.0);
        for _ in 0..10_000 {
            s.add(1e-16);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-12).abs() < 1e-20);
    }

    #[test]
    fn moments_of_known_sample() {
        let m: Moments = [1.0, 2.0, 3.0, 4.0].into_iter().collect();
        assert_eq!(m.count(), 4);
        assert!((m.mean() - 2.5).abs() < 1e-15);
        assert!((m.variance() - 5.0 / 3.0).abs() < 1e-12);
        assert!((m.stderr() - (5.0f64 / 12.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ks_distance_edge_cases() {
        assert_eq!(ks_two_sample(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(ks_two_sample(&[0.0, 0.0], &[5.0]), 1.0);
        // brute force against the definition on a mixed sample
        let a = [0.1, 0.4, 0.4, 0.9];
        let b = [0.2, 0.4, 0.5];
        let ecdf =
            |s: &[f64], x: f64| s.iter().filter(|&&v| v <= x).count() as f64 / s.len() as f64;
        let brute = a
            .iter()
            .chain(&b)
            .map(|&x| (ecdf(&a, x) - ecdf(&b, x)).abs())
            .fold(0.0, f64::max);
        assert!((ks_two_sample(&a, &b) - brute).abs() < 1e-15);
    }

    #[test]
    fn ks_critical_matches_table() {
        // c(0.01) = 1.628
        let c = ks_critical(100, 100, 0.01);
        assert!((c - 1.6276 * (0.02f64).sqrt()).abs() < 1e-3);
    }

    #[test]
    fn ols_recovers_exact_line_and_rejects_degenerate() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys: Vec<f64> = xs.iter().map(|x| 1.5 * x - 2.0).collect();
        assert!((ols_slope(&xs, &ys).unwrap() - 1.5).abs() < 1e-12);
        assert!(ols_slope(&[1.0, 1.0], &[0.0, 1.0]).is_err());
        assert!(ols_slope(&[1.0], &[0.0]).is_err());
    }

    #[test]
    fn quantile_interpolates() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile(&v, 0.0), 1.0);
        assert_eq!(quantile(&v, 1.0), 4.0);
        assert!((quantile(&v, 0.5) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn chi_square_perfect_fit_has_unit_p_value() {
        let t = chi_square(&[25, 25, 25, 25], &[0.25; 4], 5.0);
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.dof, 3);
        assert!((t.p_value - 1.0).abs() < 1e-12);
        let bad = chi_square(&[100, 0, 0, 0], &[0.25; 4], 5.0);
        assert!(bad.p_value < 1e-10);
    }

    #[test]
    fn proportion_estimate() {
        let e = EstimateResult::proportion(25, 100, Provenance::new(1, 100));
        assert_eq!(e.mean, 0.25);
        assert!((e.stderr - (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
        assert!(e.within(0.3, 2.0));
    }
}
