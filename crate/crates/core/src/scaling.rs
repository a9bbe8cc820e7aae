//! Mean-square displacement across memory parameters and the stability of
//! the rescaled counts `D_n/√n`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{out_of_range, Error, Result};
use crate::rng::{derive_seed_path, substream};
use crate::stats::{ks_critical, ks_two_sample, ols_slope, EstimateResult, Moments, Provenance};
use crate::walk::{Alpha, Direction, Walker};

/// Distance from `α_c = 1/2` inside which cells are only reported.
pub const CRITICAL_MARGIN: f64 = 0.05;

pub fn is_near_critical(alpha: Alpha) -> bool {
    (alpha.value() - Alpha::CRITICAL).abs() < CRITICAL_MARGIN
}

/// Roughly geometric integer grid from `lo` to `hi` inclusive.
pub fn geometric_grid(lo: u64, hi: u64, points: usize) -> Vec<u64> {
    assert!(lo >= 1 && hi >= lo && points >= 1);
    if points == 1 {
        return vec![hi];
    }
    let ratio = (hi as f64 / lo as f64).powf(1.0 / (points - 1) as f64);
    let mut grid: Vec<u64> = (0..points)
        .map(|i| (lo as f64 * ratio.powi(i as i32)).round() as u64)
        .collect();
    *grid.last_mut().unwrap() = hi;
    grid.dedup();
    grid
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScalingSweepConfig {
    pub alphas: Vec<Alpha>,
    pub n_grid: Vec<u64>,
    pub walks_per_cell: usize,
    pub seed: u64,
}

impl ScalingSweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.alphas.is_empty() || self.n_grid.is_empty() {
            return Err(Error::DegenerateGrid("empty alpha list or n grid".into()));
        }
        if self.n_grid[0] == 0 || self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::DegenerateGrid(format!(
                "n grid must be positive and strictly increasing: {:?}",
                self.n_grid
            )));
        }
        if self.walks_per_cell < 2 {
            return Err(out_of_range("walks_per_cell", self.walks_per_cell, ">= 2"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentCell {
    pub alpha: f64,
    pub n: u64,
    pub samples: u64,
    pub mean_msd: f64,
    pub msd_stderr: f64,
    /// Mean of `D_n(e_i)/√n`, in direction order E, N, W, S.
    pub d_mean: [f64; 4],
    pub d_var: [f64; 4],
    /// Largest `|4·Σ_i D_n(e_i)|` seen; zero for consistent counts.
    pub max_abs_sum_x4: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentCurve {
    pub cells: Vec<MomentCell>,
}

impl MomentCurve {
    pub fn for_alpha(&self, alpha: Alpha) -> Vec<&MomentCell> {
        self.cells
            .iter()
            .filter(|c| c.alpha == alpha.value())
            .collect()
    }
}

/// Per-walker record at one checkpoint: `‖X‖²`, `D/√n` and `4·ΣD`.
type Checkpoint = (f64, [f64; 4], i64);

/// Every walker is run once to the largest horizon and observed at each
/// grid point, so cells at the same `α` share walks.
pub fn msd_sweep(cfg: &ScalingSweepConfig) -> Result<MomentCurve> {
    cfg.validate()?;
    let mut cells = Vec::new();
    for &alpha in &cfg.alphas {
        let master = derive_seed_path(cfg.seed, &[alpha.value().to_bits()]);
        let walks: Vec<Vec<Checkpoint>> = (0..cfg.walks_per_cell as u64)
            .into_par_iter()
            .map(|w| {
                let mut walker = Walker::with_rng(alpha, substream(master, w));
                let mut done = 0;
                cfg.n_grid
                    .iter()
                    .map(|&n| {
                        walker.run(n - done);
                        done = n;
                        let c = walker.counts();
                        let scale = (n as f64).sqrt();
                        let d = Direction::ALL.map(|e| c.centered(e) / scale);
                        (walker.position().norm_sq() as f64, d, c.centered_sum_x4())
                    })
                    .collect()
            })
            .collect();
        for (g, &n) in cfg.n_grid.iter().enumerate() {
            let msd: Moments = walks.iter().map(|w| w[g].0).collect();
            let d: [Moments; 4] =
                std::array::from_fn(|i| walks.iter().map(|w| w[g].1[i]).collect());
            cells.push(MomentCell {
                alpha: alpha.value(),
                n,
                samples: msd.count(),
                mean_msd: msd.mean(),
                msd_stderr: msd.stderr(),
                d_mean: d.map(|m| m.mean()),
                d_var: d.map(|m| m.variance()),
                max_abs_sum_x4: walks.iter().map(|w| w[g].2.abs()).max().unwrap_or(0),
            });
        }
    }
    Ok(MomentCurve { cells })
}

/// Least-squares slope of `log E‖X_n‖²` on `log n` over the top half of
/// the grid.
pub fn fit_scaling_exponent(curve: &MomentCurve, alpha: Alpha) -> Result<f64> {
    let cells = curve.for_alpha(alpha);
    if cells.len() < 4 {
        return Err(Error::DegenerateGrid(format!(
            "{} grid points for alpha = {alpha}, need at least 4",
            cells.len()
        )));
    }
    let top = &cells[cells.len() / 2..];
    let xs: Vec<f64> = top.iter().map(|c| (c.n as f64).ln()).collect();
    let ys: Vec<f64> = top.iter().map(|c| c.mean_msd.ln()).collect();
    ols_slope(&xs, &ys)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Normalization {
    /// `D_n/√n`.
    Sqrt,
    /// `D_n/n^α`.
    Alpha,
}

impl Normalization {
    fn scale(self, n: u64, alpha: Alpha) -> f64 {
        match self {
            Normalization::Sqrt => (n as f64).sqrt(),
            Normalization::Alpha => (n as f64).powf(alpha.value()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub alpha: f64,
    pub n: u64,
    pub walks: usize,
    pub normalization: Normalization,
    pub ks_distance: f64,
    pub critical_1pct: f64,
    pub stable: bool,
    /// Whether the verdict is a pass/fail check (diffusive regime) or only
    /// reported.
    pub asserted: bool,
}

fn rescaled_first_count(
    alpha: Alpha,
    n: u64,
    walks: usize,
    norm: Normalization,
    seed: u64,
) -> Vec<f64> {
    let scale = norm.scale(n, alpha);
    (0..walks as u64)
        .into_par_iter()
        .map(|w| {
            let mut walker = Walker::with_rng(alpha, substream(seed, w));
            walker.run(n);
            walker.counts().centered(Direction::East) / scale
        })
        .collect()
}

/// Two-sample KS distance between independent samples of the rescaled
/// `D(e_1)` at `n` and at `2n`.
pub fn count_limit_stability(
    alpha: Alpha,
    n: u64,
    walks: usize,
    normalization: Normalization,
    seed: u64,
) -> Result<StabilityReport> {
    if n == 0 || walks == 0 {
        return Err(out_of_range("n and walks", format!("{n}, {walks}"), ">= 1"));
    }
    let at_n = rescaled_first_count(alpha, n, walks, normalization, derive_seed_path(seed, &[0]));
    let at_2n = rescaled_first_count(
        alpha,
        2 * n,
        walks,
        normalization,
        derive_seed_path(seed, &[1]),
    );
    let ks_distance = ks_two_sample(&at_n, &at_2n);
    let critical_1pct = ks_critical(walks, walks, 0.01);
    Ok(StabilityReport {
        alpha: alpha.value(),
        n,
        walks,
        normalization,
        ks_distance,
        critical_1pct,
        stable: ks_distance < critical_1pct,
        asserted: alpha.is_diffusive(),
    })
}

/// `max_i |D_n(e_i)|/√n` for independent walks.
fn scaled_max_counts(alpha: Alpha, n: u64, walks: usize, seed: u64) -> Vec<f64> {
    let scale = (n as f64).sqrt();
    (0..walks as u64)
        .into_par_iter()
        .map(|w| {
            let mut walker = Walker::with_rng(alpha, substream(seed, w));
            walker.run(n);
            walker.counts().max_abs_centered() / scale
        })
        .collect()
}

/// `P(max_i |D_n(e_i)| <= A√n)`.
pub fn conditioning_mass(
    alpha: Alpha,
    n: u64,
    a: f64,
    walks: usize,
    seed: u64,
) -> Result<EstimateResult> {
    Ok(conditioning_mass_curve(alpha, n, &[a], walks, seed)?
        .remove(0)
        .1)
}

/// [`conditioning_mass`] on an `A` grid, all evaluated on the same walks.
pub fn conditioning_mass_curve(
    alpha: Alpha,
    n: u64,
    a_grid: &[f64],
    walks: usize,
    seed: u64,
) -> Result<Vec<(f64, EstimateResult)>> {
    if n == 0 || walks == 0 {
        return Err(out_of_range("n and walks", format!("{n}, {walks}"), ">= 1"));
    }
    let m = scaled_max_counts(alpha, n, walks, seed);
    Ok(a_grid
        .iter()
        .map(|&a| {
            let hits = m.iter().filter(|&&v| v <= a).count() as u64;
            (
                a,
                EstimateResult::proportion(hits, walks as u64, Provenance::new(seed, walks as u64)),
            )
        })
        .collect())
}
