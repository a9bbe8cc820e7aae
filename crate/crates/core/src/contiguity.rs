//! Change of measure between the elephant walk and the simple random walk
//! over a window `[n, 2n)`.
//!
//! Given the counts at time `n`, the likelihood ratio of a window path is
//! the product of one-step ratios `1 + 4α·D_{n+k}(ΔX_{n+k})/(n+k)`, each
//! evaluated on the counts *before* the step. Its logarithm is controlled by
//! the martingale `M_j = Σ_{k<j} D_{n+k}(ΔX_{n+k})/(n+k)` whose conditional
//! quadratic variation is `(1/4)·Σ_i D_{n+j}(e_i)²/(n+j)²`.
//!
//! Good events on a window:
//! * `G_n`: every window counting process stays within `A_ε·√n`;
//! * `H_n`: `|M_n|·1_{G_n} < (A + A_ε)/√ε`;
//! * `E_n = G_n ∩ H_n`, on which the likelihood ratio is bounded below by
//!   [`contiguity_constant`].

use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{out_of_range, Error, Result};
use crate::rng::{derive_seed_path, substream, WalkRng};
use crate::srw::SrwStepper;
use crate::stats::{quantile, CompensatedSum, EstimateResult, Moments, Provenance};
use crate::walk::{Alpha, Direction, DirectionCounts, Trajectory, Walker};

/// Minimum number of accepted conditioned prefixes for an estimate.
pub const MIN_CONDITIONED: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContiguityConfig {
    pub epsilon: f64,
    /// Bound on `|D_n(e_i)|/√n` at the conditioning time.
    pub a: f64,
    /// Bound on the window counting processes, in units of `√n`.
    pub a_eps: f64,
    pub n: usize,
}

impl ContiguityConfig {
    pub fn new(epsilon: f64, a: f64, a_eps: f64, n: usize) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon < 1.0) {
            return Err(out_of_range("epsilon", epsilon, "(0, 1)"));
        }
        if !(a > 0.0) {
            return Err(out_of_range("A", a, "> 0"));
        }
        if !(a_eps > 0.0) {
            return Err(out_of_range("A_eps", a_eps, "> 0"));
        }
        if n == 0 {
            return Err(out_of_range("n", n, ">= 1"));
        }
        Ok(ContiguityConfig {
            epsilon,
            a,
            a_eps,
            n,
        })
    }

    /// `A + A_ε`.
    pub fn total_bound(&self) -> f64 {
        self.a + self.a_eps
    }

    /// Threshold of `H_n`: `(A + A_ε)/√ε`.
    pub fn h_threshold(&self) -> f64 {
        self.total_bound() / self.epsilon.sqrt()
    }
}

/// One-step likelihood ratio `1 + 4α·D_k(dir)/k` (1 when `k = 0`).
#[inline]
pub fn rnd_factor(counts: &DirectionCounts, dir: Direction, alpha: Alpha) -> f64 {
    let k = counts.steps();
    if k == 0 {
        return 1.0;
    }
    1.0 + alpha.value() * counts.centered_x4(dir) as f64 / k as f64
}

/// Log likelihood ratio of `steps` taken after `start`, ERW against SRW.
pub fn log_rnd(start: &DirectionCounts, steps: &[Direction], alpha: Alpha) -> Result<f64> {
    let mut counts = *start;
    let mut acc = CompensatedSum::new();
    for (step, &d) in steps.iter().enumerate() {
        let f = rnd_factor(&counts, d, alpha);
        if f <= 0.0 {
            return Err(Error::NonpositiveFactor { step, factor: f });
        }
        acc.add(f.ln());
        counts.record(d);
    }
    Ok(acc.value())
}

/// `(1/4)·Σ_i D_k(e_i)²/k²`, taken as 0 at `k = 0`.
pub fn martingale_qv_increment(counts: &DirectionCounts) -> f64 {
    let k = counts.steps();
    if k == 0 {
        return 0.0;
    }
    let s: i64 = Direction::ALL
        .iter()
        .map(|&d| counts.centered_x4(d).pow(2))
        .sum();
    // D = c/4, so (1/4)·Σ D² = Σ c²/64
    s as f64 / (64.0 * (k as f64) * (k as f64))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowReweighting {
    pub n: usize,
    pub log_rnd: f64,
    /// `M_0, ..., M_len`.
    pub m_path: Vec<f64>,
    /// Conditional QV increments for steps `0..len`.
    pub qv_path: Vec<f64>,
    pub d_at_n: DirectionCounts,
}

impl WindowReweighting {
    pub fn rnd(&self) -> f64 {
        self.log_rnd.exp()
    }

    pub fn m_final(&self) -> f64 {
        *self.m_path.last().unwrap_or(&0.0)
    }
}

/// Likelihood ratio, martingale path and QV increments of a window of
/// length `n` following a prefix with counts `d_at_n`.
pub fn window_rnd(
    window: &Trajectory,
    d_at_n: &DirectionCounts,
    alpha: Alpha,
    n: usize,
) -> Result<WindowReweighting> {
    if d_at_n.steps() != n as u64 {
        return Err(out_of_range("d_at_n step count", d_at_n.steps(), n));
    }
    if window.len() != n {
        return Err(out_of_range("window length", window.len(), n));
    }
    let mut counts = *d_at_n;
    let mut log = CompensatedSum::new();
    let mut m = CompensatedSum::new();
    let mut m_path = Vec::with_capacity(n + 1);
    let mut qv_path = Vec::with_capacity(n);
    m_path.push(0.0);
    for (step, &d) in window.steps.iter().enumerate() {
        let f = rnd_factor(&counts, d, alpha);
        if f <= 0.0 {
            return Err(Error::NonpositiveFactor { step, factor: f });
        }
        log.add(f.ln());
        qv_path.push(martingale_qv_increment(&counts));
        let k = counts.steps();
        if k > 0 {
            m.add(counts.centered_x4(d) as f64 / (4.0 * k as f64));
        }
        m_path.push(m.value());
        counts.record(d);
    }
    Ok(WindowReweighting {
        n,
        log_rnd: log.value(),
        m_path,
        qv_path,
        d_at_n: *d_at_n,
    })
}

/// First `j` at which some window counting process exceeds `A_ε·√n` in
/// absolute value.
pub fn first_exceedance(window: &Trajectory, a_eps: f64, n: usize) -> Option<usize> {
    let threshold_x4 = 4.0 * a_eps * (n as f64).sqrt();
    let mut counts = DirectionCounts::new();
    window.steps.iter().enumerate().find_map(|(j, &d)| {
        counts.record(d);
        let worst = Direction::ALL
            .iter()
            .map(|&e| counts.centered_x4(e).abs())
            .max()
            .unwrap_or(0);
        (worst as f64 > threshold_x4).then_some(j + 1)
    })
}

/// The stopping time `ϑ`: [`first_exceedance`], or `n` when the window
/// never leaves the `A_ε·√n` band.
pub fn stopping_time_theta(window: &Trajectory, a_eps: f64, n: usize) -> usize {
    first_exceedance(window, a_eps, n).unwrap_or(n)
}

/// `c_{ε,A} = exp(-4|α|(A+A_ε)/√ε - (4α)²(A+A_ε)²)`.
pub fn contiguity_constant(cfg: &ContiguityConfig, alpha: Alpha) -> f64 {
    let a = alpha.value();
    let b = cfg.total_bound();
    (-4.0 * a.abs() * b / cfg.epsilon.sqrt() - (4.0 * a).powi(2) * b * b).exp()
}

/// Counts of `n` SRW steps: a Multinomial(n; 1/4, 1/4, 1/4, 1/4) draw.
pub fn sample_srw_counts(n: u64, rng: &mut WalkRng) -> DirectionCounts {
    let mut left = n;
    let mut raw = [0u64; 4];
    for (i, p) in [0.25, 1.0 / 3.0, 0.5].into_iter().enumerate() {
        raw[i] = if left == 0 {
            0
        } else {
            Binomial::new(left, p).expect("valid binomial").sample(rng)
        };
        left -= raw[i];
    }
    raw[3] = left;
    DirectionCounts::from_raw(raw)
}

/// Summary of one simulated SRW window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowSample {
    /// `max_i sup_{k<=n} |D_k^window(e_i)| / √n`.
    pub sup_deviation: f64,
    pub in_g: bool,
    pub theta: usize,
    pub m_final: f64,
    /// `M_{n∧ϑ}`.
    pub m_stopped: f64,
    /// `Σ_{j < n∧ϑ}` of the conditional QV increments.
    pub qv_stopped: f64,
    pub qv_total: f64,
    /// Largest single QV increment on `[0, n∧ϑ)`.
    pub qv_max_stopped: f64,
    /// `M_j` at the requested checkpoints.
    pub m_checkpoints: Vec<f64>,
    /// ERW/SRW log likelihood ratio, if an α was supplied.
    pub log_rnd: Option<f64>,
}

/// Streams SRW windows without materializing them. QV sums use the exact
/// integer identity `Σ_i c_i² → Σ_i c_i² + 8·c_d + 12` for a step in
/// direction `d`, where `c_i = 4·D(e_i)`.
#[derive(Debug, Clone)]
pub struct WindowSimulator {
    n: usize,
    a_eps: f64,
    checkpoints: Vec<usize>,
    alpha: Option<Alpha>,
}

impl WindowSimulator {
    pub fn new(n: usize, a_eps: f64) -> Self {
        WindowSimulator {
            n,
            a_eps,
            checkpoints: Vec::new(),
            alpha: None,
        }
    }

    pub fn with_checkpoints(mut self, mut checkpoints: Vec<usize>) -> Self {
        checkpoints.retain(|&j| j <= self.n);
        checkpoints.sort_unstable();
        checkpoints.dedup();
        self.checkpoints = checkpoints;
        self
    }

    pub fn with_alpha(mut self, alpha: Alpha) -> Self {
        self.alpha = Some(alpha);
        self
    }

    pub fn checkpoints(&self) -> &[usize] {
        &self.checkpoints
    }

    pub fn simulate(&self, d_at_n: &DirectionCounts, rng: &mut WalkRng) -> WindowSample {
        let n = self.n;
        let threshold_x4 = 4.0 * self.a_eps * (n as f64).sqrt();
        let mut total = *d_at_n;
        let mut window = [0i64; 4];
        let mut sum_sq: i64 = Direction::ALL
            .iter()
            .map(|&d| total.centered_x4(d).pow(2))
            .sum();
        let mut worst: i64 = 0;
        let mut theta = n;
        let mut exceeded = false;
        let mut m = CompensatedSum::new();
        let mut m_stopped = 0.0;
        let mut qv = CompensatedSum::new();
        let mut qv_stopped = 0.0;
        let mut qv_max: f64 = 0.0;
        let mut log = CompensatedSum::new();
        let mut m_checkpoints = Vec::with_capacity(self.checkpoints.len());
        let mut next_cp = self.checkpoints.iter().peekable();
        let mut stepper = SrwStepper::new();

        for j in 0..n {
            while next_cp.peek() == Some(&&j) {
                m_checkpoints.push(m.value());
                next_cp.next();
            }
            if exceeded && j == theta {
                m_stopped = m.value();
                qv_stopped = qv.value();
            }
            let d = stepper.next(rng);
            let k = total.steps();
            let c = total.centered_x4(d);
            if k > 0 {
                let kf = k as f64;
                let inc_qv = sum_sq as f64 / (64.0 * kf * kf);
                qv.add(inc_qv);
                if j < theta {
                    qv_max = qv_max.max(inc_qv);
                }
                m.add(c as f64 / (4.0 * kf));
                if let Some(a) = self.alpha {
                    log.add((1.0 + a.value() * c as f64 / kf).ln());
                }
            }
            sum_sq += 8 * c + 12;
            total.record(d);
            for (i, w) in window.iter_mut().enumerate() {
                *w += if i == d.code() as usize { 3 } else { -1 };
            }
            worst = worst.max(window.iter().map(|w| w.abs()).max().unwrap_or(0));
            if !exceeded && worst as f64 > threshold_x4 {
                exceeded = true;
                theta = j + 1;
            }
        }
        for _ in next_cp {
            m_checkpoints.push(m.value());
        }
        if theta == n {
            m_stopped = m.value();
            qv_stopped = qv.value();
        }
        WindowSample {
            sup_deviation: worst as f64 / 4.0 / (n as f64).sqrt(),
            in_g: !exceeded,
            theta,
            m_final: m.value(),
            m_stopped,
            qv_stopped,
            qv_total: qv.value(),
            qv_max_stopped: qv_max,
            m_checkpoints,
            log_rnd: self.alpha.map(|_| log.value()),
        }
    }
}

/// SRW prefix counts at time `n` conditioned on `max_i |D_n(e_i)| <= A√n`,
/// by rejection. Returns the counts and the number of draws used.
pub fn sample_conditioned_srw_counts(
    n: usize,
    a: f64,
    max_draws: usize,
    rng: &mut WalkRng,
) -> Option<(DirectionCounts, usize)> {
    let bound = a * (n as f64).sqrt();
    (1..=max_draws).find_map(|draw| {
        let c = sample_srw_counts(n as u64, rng);
        c.within(bound).then_some((c, draw))
    })
}

/// Simulate `n_samples` SRW windows after conditioned SRW prefixes.
pub fn simulate_srw_windows(
    cfg: &ContiguityConfig,
    sim: &WindowSimulator,
    n_samples: usize,
    seed: u64,
) -> Vec<WindowSample> {
    (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i);
            let (d, _) = sample_conditioned_srw_counts(cfg.n, cfg.a, 1_000_000, &mut rng)
                .expect("conditioning event has positive probability");
            sim.simulate(&d, &mut rng)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Calibration {
    pub a_eps: f64,
    pub p_g: f64,
    pub p_g_stderr: f64,
    pub samples: usize,
}

/// Smallest `A_ε` with `P̂(G_n) >= 1 - ε` plus one binomial standard error.
pub fn calibrate_a_eps(n: usize, epsilon: f64, n_samples: usize, seed: u64) -> Result<Calibration> {
    if n_samples < 2 {
        return Err(out_of_range("calibration samples", n_samples, ">= 2"));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(out_of_range("epsilon", epsilon, "(0, 1)"));
    }
    let sim = WindowSimulator::new(n, f64::INFINITY);
    let sups: Vec<f64> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, i);
            let d = sample_srw_counts(n as u64, &mut rng);
            sim.simulate(&d, &mut rng).sup_deviation
        })
        .collect();
    let se = (epsilon * (1.0 - epsilon) / n_samples as f64).sqrt();
    let level = (1.0 - epsilon + se).min(1.0);
    let mut sorted = sups.clone();
    sorted.sort_by(f64::total_cmp);
    let idx = ((level * n_samples as f64).ceil() as usize).clamp(1, n_samples) - 1;
    let a_eps = sorted[idx].max(f64::MIN_POSITIVE);
    let inside = sups.iter().filter(|&&s| s <= a_eps).count();
    let p_g = inside as f64 / n_samples as f64;
    Ok(Calibration {
        a_eps,
        p_g,
        p_g_stderr: (p_g * (1.0 - p_g) / n_samples as f64).sqrt(),
        samples: n_samples,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GoodEventReport {
    pub p_g: EstimateResult,
    pub p_h: EstimateResult,
    pub p_e: EstimateResult,
    pub c_lower: f64,
    /// `P̂(E_n) >= 1 - ε` (statement level).
    pub meets_statement_level: bool,
    /// `P̂(E_n) >= 1 - 2ε` (proof level).
    pub meets_proof_level: bool,
    pub calibration: Option<Calibration>,
}

impl GoodEventReport {
    pub fn from_samples(
        cfg: &ContiguityConfig,
        alpha: Alpha,
        samples: &[WindowSample],
        provenance: Provenance,
    ) -> Self {
        let h = cfg.h_threshold();
        let trials = samples.len() as u64;
        let g = samples.iter().filter(|s| s.in_g).count() as u64;
        let in_h = |s: &WindowSample| (if s.in_g { s.m_final.abs() } else { 0.0 }) < h;
        let hh = samples.iter().filter(|s| in_h(s)).count() as u64;
        let e = samples.iter().filter(|s| s.in_g && in_h(s)).count() as u64;
        let p_e = EstimateResult::proportion(e, trials, provenance.clone());
        GoodEventReport {
            p_g: EstimateResult::proportion(g, trials, provenance.clone()),
            p_h: EstimateResult::proportion(hh, trials, provenance),
            meets_statement_level: p_e.mean >= 1.0 - cfg.epsilon,
            meets_proof_level: p_e.mean >= 1.0 - 2.0 * cfg.epsilon,
            p_e,
            c_lower: contiguity_constant(cfg, alpha),
            calibration: None,
        }
    }
}

/// Estimate the probabilities of `G_n`, `H_n` and `E_n` under the SRW
/// window law. With `calibrate = Some(samples)`, `A_ε` is first replaced by
/// the calibrated value.
pub fn estimate_good_events(
    cfg: &ContiguityConfig,
    alpha: Alpha,
    n_samples: usize,
    calibrate: Option<usize>,
    seed: u64,
) -> Result<GoodEventReport> {
    let mut cfg = *cfg;
    let calibration = match calibrate {
        Some(k) => {
            let c = calibrate_a_eps(cfg.n, cfg.epsilon, k, derive_seed_path(seed, &[1]))?;
            cfg.a_eps = c.a_eps;
            Some(c)
        }
        None => None,
    };
    let sim = WindowSimulator::new(cfg.n, cfg.a_eps);
    let samples = simulate_srw_windows(&cfg, &sim, n_samples, derive_seed_path(seed, &[2]));
    let mut report = GoodEventReport::from_samples(
        &cfg,
        alpha,
        &samples,
        Provenance::new(seed, n_samples as u64),
    );
    report.calibration = calibration;
    Ok(report)
}

/// Martingale diagnostics over SRW windows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MartingaleReport {
    pub checkpoints: Vec<usize>,
    /// Mean and standard error of `M_j` at each checkpoint.
    pub m_mean: Vec<EstimateResult>,
    /// `E[M_{n∧ϑ}²]`.
    pub m_stopped_sq: EstimateResult,
    /// Expected QV of the stopped process.
    pub qv_stopped: EstimateResult,
    /// `E[M_n² 1_{G_n}]`.
    pub m_sq_on_g: EstimateResult,
    /// `(A + A_ε)²`.
    pub bound: f64,
    /// Largest single QV increment before `ϑ`, times `n`.
    pub max_scaled_qv_increment: f64,
}

impl MartingaleReport {
    pub fn from_samples(
        cfg: &ContiguityConfig,
        checkpoints: &[usize],
        samples: &[WindowSample],
        provenance: Provenance,
    ) -> Self {
        let m_mean = (0..checkpoints.len())
            .map(|c| {
                let m: Moments = samples.iter().map(|s| s.m_checkpoints[c]).collect();
                EstimateResult::from_moments(&m, provenance.clone())
            })
            .collect();
        let stopped: Moments = samples.iter().map(|s| s.m_stopped * s.m_stopped).collect();
        let qv: Moments = samples.iter().map(|s| s.qv_stopped).collect();
        let on_g: Moments = samples
            .iter()
            .map(|s| if s.in_g { s.m_final * s.m_final } else { 0.0 })
            .collect();
        MartingaleReport {
            checkpoints: checkpoints.to_vec(),
            m_mean,
            m_stopped_sq: EstimateResult::from_moments(&stopped, provenance.clone()),
            qv_stopped: EstimateResult::from_moments(&qv, provenance.clone()),
            m_sq_on_g: EstimateResult::from_moments(&on_g, provenance),
            bound: cfg.total_bound().powi(2),
            max_scaled_qv_increment: samples.iter().map(|s| s.qv_max_stopped).fold(0.0, f64::max)
                * cfg.n as f64,
        }
    }

    /// Every checkpoint mean within `sigmas` standard errors of zero.
    pub fn mean_zero(&self, sigmas: f64) -> bool {
        self.m_mean.iter().all(|e| e.within(0.0, sigmas))
    }
}

/// Evaluate `G_n`, `H_n` and `M_n` on an explicit window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowEvents {
    pub in_g: bool,
    pub in_h: bool,
    pub m_n: f64,
    pub theta: usize,
    pub log_rnd: f64,
}

impl WindowEvents {
    pub fn in_e(&self) -> bool {
        self.in_g && self.in_h
    }
}

pub fn window_events(
    window: &Trajectory,
    d_at_n: &DirectionCounts,
    cfg: &ContiguityConfig,
    alpha: Alpha,
) -> Result<WindowEvents> {
    let rw = window_rnd(window, d_at_n, alpha, cfg.n)?;
    let exceedance = first_exceedance(window, cfg.a_eps, cfg.n);
    let in_g = exceedance.is_none();
    let theta = exceedance.unwrap_or(cfg.n);
    let m_n = rw.m_final();
    Ok(WindowEvents {
        in_g,
        in_h: (if in_g { m_n.abs() } else { 0.0 }) < cfg.h_threshold(),
        m_n,
        theta,
        log_rnd: rw.log_rnd,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContiguityCheck {
    pub c_lower: f64,
    /// `E_ERW[f(X^(n)) 1_{E_n} | F_n, |D_n| <= A√n]`.
    pub lhs: EstimateResult,
    /// `E_SRW[f(X) 1_{E_n}]` with the same conditioning counts.
    pub rhs: EstimateResult,
    pub combined_stderr: f64,
    pub holds: bool,
    pub accepted: usize,
    pub attempts: usize,
    /// Fraction of SRW windows in `E_n` whose likelihood ratio is at least
    /// `c_lower`.
    pub rnd_floor_fraction: f64,
    /// `min over SRW windows in E_n of log RND - log c_lower`.
    pub min_log_margin: f64,
}

/// Estimate both sides of the contiguity inequality for a nonnegative
/// window statistic `f`. ERW prefixes are conditioned by rejection; each
/// accepted prefix is followed by one ERW window and one SRW window.
pub fn verify_contiguity_bound<F>(
    cfg: &ContiguityConfig,
    alpha: Alpha,
    statistic: F,
    n_samples: usize,
    seed: u64,
) -> Result<ContiguityCheck>
where
    F: Fn(&Trajectory) -> f64 + Sync,
{
    let n = cfg.n;
    let bound = cfg.a * (n as f64).sqrt();
    let c = contiguity_constant(cfg, alpha);
    let draws: Vec<Option<(f64, f64, Option<f64>)>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| -> Result<Option<(f64, f64, Option<f64>)>> {
            let mut walker = Walker::with_rng(alpha, substream(seed, i));
            walker.run(n as u64);
            let d = *walker.counts();
            if !d.within(bound) {
                return Ok(None);
            }
            let erw = Trajectory::new((0..n).map(|_| walker.step()).collect());
            let rng = walker.rng_mut();
            let mut stepper = SrwStepper::new();
            let srw = Trajectory::new((0..n).map(|_| stepper.next(rng)).collect());
            let ev_erw = window_events(&erw, &d, cfg, alpha)?;
            let ev_srw = window_events(&srw, &d, cfg, alpha)?;
            let lhs = if ev_erw.in_e() { statistic(&erw) } else { 0.0 };
            let rhs = if ev_srw.in_e() { statistic(&srw) } else { 0.0 };
            let margin = ev_srw.in_e().then(|| ev_srw.log_rnd - c.ln());
            Ok(Some((lhs, rhs, margin)))
        })
        .collect::<Result<_>>()?;
    let accepted: Vec<_> = draws.into_iter().flatten().collect();
    if accepted.len() < MIN_CONDITIONED {
        return Err(Error::InsufficientConditioningSamples {
            accepted: accepted.len(),
            required: MIN_CONDITIONED,
        });
    }
    let prov = Provenance::new(seed, n_samples as u64);
    let lhs: Moments = accepted.iter().map(|a| a.0).collect();
    let rhs: Moments = accepted.iter().map(|a| a.1).collect();
    let margins: Vec<f64> = accepted.iter().filter_map(|a| a.2).collect();
    let combined = (lhs.stderr().powi(2) + (c * rhs.stderr()).powi(2)).sqrt();
    Ok(ContiguityCheck {
        c_lower: c,
        holds: lhs.mean() >= c * rhs.mean() - 4.0 * combined,
        lhs: EstimateResult::from_moments(&lhs, prov.clone()),
        rhs: EstimateResult::from_moments(&rhs, prov),
        combined_stderr: combined,
        accepted: accepted.len(),
        attempts: n_samples,
        rnd_floor_fraction: if margins.is_empty() {
            f64::NAN
        } else {
            margins.iter().filter(|&&m| m >= 0.0).count() as f64 / margins.len() as f64
        },
        min_log_margin: margins.iter().copied().fold(f64::INFINITY, f64::min),
    })
}

/// Smallest `n` in `grid` from which on every fraction of `E_n` windows
/// with likelihood ratio at least `c_{ε,A}` reaches `target`.
#[allow(clippy::too_many_arguments)]
pub fn smallest_valid_n(
    grid: &[usize],
    epsilon: f64,
    a: f64,
    a_eps: f64,
    alpha: Alpha,
    n_samples: usize,
    target: f64,
    seed: u64,
) -> Result<Option<usize>> {
    let mut fractions = Vec::with_capacity(grid.len());
    for &n in grid {
        let cfg = ContiguityConfig::new(epsilon, a, a_eps, n)?;
        let check = verify_contiguity_bound(
            &cfg,
            alpha,
            |_| 1.0,
            n_samples,
            derive_seed_path(seed, &[n as u64]),
        )?;
        fractions.push(check.rnd_floor_fraction);
    }
    Ok((0..grid.len())
        .find(|&i| fractions[i..].iter().all(|&f| f >= target))
        .map(|i| grid[i]))
}

/// Empirical `(1 - ε)`-quantile of the window sup-deviation, without the
/// one-standard-error inflation of [`calibrate_a_eps`].
pub fn sup_deviation_quantile(samples: &[WindowSample], epsilon: f64) -> f64 {
    let s: Vec<f64> = samples.iter().map(|w| w.sup_deviation).collect();
    quantile(&s, 1.0 - epsilon)
}
