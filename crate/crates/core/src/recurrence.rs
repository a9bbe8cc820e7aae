//! Return statistics: the window visit count and its moments, conditioned
//! window-return probabilities, and the triadic sequence `P_{3^j}`.

use rayon::prelude::*;
use serde::Serialize;
use statrs::function::factorial::ln_factorial;

use crate::contiguity::MIN_CONDITIONED;
use crate::error::{out_of_range, Error, Result};
use crate::rng::{derive_seed_path, substream};
use crate::srw::{expected_visits, EventPredicate, HeatKernelTable, SrwStepper};
use crate::stats::{ols_slope, quantile, EstimateResult, Provenance};
use crate::walk::{Alpha, Direction, DirectionCounts, LatticePoint, Trajectory, Walker};

/// `[⌈3n/2⌉, 2n]`.
pub fn lemma_window(n: usize) -> (usize, usize) {
    ((3 * n).div_ceil(2), 2 * n)
}

/// `[⌈5n/2⌉, 3n]`.
pub fn return_window(n: usize) -> (usize, usize) {
    ((5 * n).div_ceil(2), 3 * n)
}

/// Largest ratio `max/min` of `E[N²]/log n` across scales that still
/// counts as bounded.
pub const RATIO_SPREAD_LIMIT: f64 = 3.0;

#[derive(Debug, Clone)]
pub struct ReturnCountConfig {
    pub n: usize,
    pub target: LatticePoint,
    pub a: f64,
    pub predicate: EventPredicate,
}

impl ReturnCountConfig {
    pub fn new(n: usize, target: LatticePoint, a: f64, predicate: EventPredicate) -> Result<Self> {
        if n == 0 {
            return Err(out_of_range("n", n, ">= 1"));
        }
        if !(a > 0.0) {
            return Err(out_of_range("A", a, "> 0"));
        }
        if target.norm() > a * (n as f64).sqrt() {
            return Err(out_of_range(
                "target",
                target,
                format!("norm <= {a}·sqrt({n})"),
            ));
        }
        Ok(ReturnCountConfig {
            n,
            target,
            a,
            predicate,
        })
    }

    pub fn window(&self) -> (usize, usize) {
        lemma_window(self.n)
    }
}

/// Visits to `-x_n` during `[⌈3n/2⌉, 2n]`, zeroed unless both the first
/// `n` steps and the next `n` steps satisfy the predicate.
pub fn return_count_statistic(traj: &Trajectory, cfg: &ReturnCountConfig) -> Result<u64> {
    let n = cfg.n;
    if traj.len() < 2 * n {
        return Err(out_of_range(
            "trajectory length",
            traj.len(),
            format!(">= {}", 2 * n),
        ));
    }
    if !cfg.predicate.test(&traj.steps[..n]) || !cfg.predicate.test(&traj.steps[n..2 * n]) {
        return Ok(0);
    }
    let (lo, hi) = cfg.window();
    let goal = traj.origin - cfg.target;
    Ok(traj
        .positions()
        .take(hi + 1)
        .skip(lo)
        .filter(|&p| p == goal)
        .count() as u64)
}

/// Power sums of an integer sample, kept exact.
#[derive(Debug, Clone, Copy, Default)]
struct PowerSums {
    count: u64,
    s: [u128; 4],
    positive: u64,
}

impl PowerSums {
    fn push(&mut self, v: u64) {
        self.count += 1;
        let v = v as u128;
        let mut p = v;
        for s in &mut self.s {
            *s += p;
            p *= v;
        }
        self.positive += (v > 0) as u64;
    }

    fn moment(&self, k: usize) -> f64 {
        self.s[k - 1] as f64 / self.count as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondMomentCell {
    pub n: usize,
    pub target: LatticePoint,
    pub samples: u64,
    /// Fraction of walks where both halves satisfy the predicate.
    pub event_fraction: f64,
    pub mean: f64,
    pub mean_stderr: f64,
    pub second_moment: f64,
    pub second_moment_stderr: f64,
    pub p_positive: f64,
    pub p_positive_stderr: f64,
    /// `Ê[N]² / Ê[N²]`.
    pub pz_bound: f64,
    pub pz_stderr: f64,
    /// `E[N]` for the unrestricted SRW, from the closed-form kernel.
    pub exact_unrestricted_mean: f64,
}

impl SecondMomentCell {
    fn from_sums(n: usize, target: LatticePoint, sums: &PowerSums, event_hits: u64) -> Self {
        let s = sums.count as f64;
        let (m1, m2, m3, m4) = (
            sums.moment(1),
            sums.moment(2),
            sums.moment(3),
            sums.moment(4),
        );
        let var1 = (m2 - m1 * m1).max(0.0);
        let var2 = (m4 - m2 * m2).max(0.0);
        let cov = m3 - m1 * m2;
        let p = sums.positive as f64 / s;
        let (pz_bound, pz_stderr) = if m2 > 0.0 {
            // delta method for m1²/m2
            let (g1, g2) = (2.0 * m1 / m2, -m1 * m1 / (m2 * m2));
            let var = g1 * g1 * var1 + g2 * g2 * var2 + 2.0 * g1 * g2 * cov;
            (m1 * m1 / m2, (var.max(0.0) / s).sqrt())
        } else {
            (0.0, 0.0)
        };
        let (lo, hi) = lemma_window(n);
        SecondMomentCell {
            n,
            target,
            samples: sums.count,
            event_fraction: event_hits as f64 / s,
            mean: m1,
            mean_stderr: (var1 / s).sqrt(),
            second_moment: m2,
            second_moment_stderr: (var2 / s).sqrt(),
            p_positive: p,
            p_positive_stderr: (p * (1.0 - p) / s).sqrt(),
            pz_bound,
            pz_stderr,
            exact_unrestricted_mean: expected_visits(-target, lo as u64, hi as u64),
        }
    }

    /// `P̂(N > 0) >= Ê[N]²/Ê[N²] - sigmas·stderr`.
    pub fn pz_holds(&self, sigmas: f64) -> bool {
        let se = self.p_positive_stderr.hypot(self.pz_stderr);
        self.p_positive >= self.pz_bound - sigmas * se
    }
}

/// One SRW walk of length `2n` per sample; every target is evaluated on
/// the same walk.
pub fn second_moment_cells(
    n: usize,
    targets: &[LatticePoint],
    predicate: &EventPredicate,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<SecondMomentCell>> {
    if n == 0 || targets.is_empty() || n_samples == 0 {
        return Err(Error::DegenerateGrid(
            "second moment needs n >= 1, a target and samples".into(),
        ));
    }
    let (lo, hi) = lemma_window(n);
    let per_walk: Vec<Option<Vec<u64>>> = (0..n_samples as u64)
        .into_par_iter()
        .map_init(
            || (Vec::with_capacity(2 * n), Vec::with_capacity(hi + 1 - lo)),
            |(steps, window), i| {
                let mut rng = substream(seed, i);
                let mut stepper = SrwStepper::new();
                steps.clear();
                steps.extend((0..2 * n).map(|_| stepper.next(&mut rng)));
                if !predicate.test(&steps[..n]) || !predicate.test(&steps[n..]) {
                    return None;
                }
                window.clear();
                let mut pos = LatticePoint::ORIGIN;
                for (t, &d) in steps.iter().enumerate() {
                    if t >= lo {
                        window.push(pos);
                    }
                    pos = pos.step(d);
                }
                window.push(pos);
                Some(
                    targets
                        .iter()
                        .map(|&x| window.iter().filter(|&&p| p == -x).count() as u64)
                        .collect(),
                )
            },
        )
        .collect();
    let mut sums = vec![PowerSums::default(); targets.len()];
    let mut event_hits = 0u64;
    for walk in &per_walk {
        match walk {
            Some(counts) => {
                event_hits += 1;
                for (s, &c) in sums.iter_mut().zip(counts) {
                    s.push(c);
                }
            }
            None => sums.iter_mut().for_each(|s| s.push(0)),
        }
    }
    Ok(targets
        .iter()
        .zip(&sums)
        .map(|(&x, s)| SecondMomentCell::from_sums(n, x, s, event_hits))
        .collect())
}

/// Targets at radii `f·A√n` along the axis and the diagonal, rounded
/// toward the origin so that `‖x‖ <= A√n` holds exactly.
pub fn target_grid(n: usize, a: f64, fractions: &[f64]) -> Vec<LatticePoint> {
    let r = a * (n as f64).sqrt();
    let diag = std::f64::consts::FRAC_1_SQRT_2;
    let mut out = Vec::new();
    for &f in fractions {
        for (cx, cy) in [(1.0, 0.0), (diag, diag)] {
            let p = LatticePoint::new((f * r * cx).trunc() as i64, (f * r * cy).trunc() as i64);
            if !out.contains(&p) {
                out.push(p);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondMomentSweep {
    pub ns: Vec<usize>,
    pub a: f64,
    pub fractions: Vec<f64>,
    /// Predicate `sup |D| <= band·√n` on both halves; `None` is vacuous.
    pub band: Option<f64>,
    pub n_samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScaleSummary {
    pub n: usize,
    pub log_n: f64,
    /// `max_x Ê[N²] / log n`.
    pub max_ratio: f64,
    pub min_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecondMomentReport {
    pub cells: Vec<SecondMomentCell>,
    pub scales: Vec<ScaleSummary>,
    /// Empirical `C'`: the largest `Ê[N²]/log n`.
    pub c_prime: f64,
    /// Empirical `c_A`: the smallest exact unrestricted `E[N]`.
    pub c_a: f64,
    pub ratio_spread: f64,
    pub ratio_bounded: bool,
    pub mean_bounded_below: bool,
    pub pz_all: bool,
}

impl SecondMomentSweep {
    pub fn predicate(&self, n: usize) -> EventPredicate {
        match self.band {
            Some(b) => EventPredicate::count_band(b * (n as f64).sqrt()),
            None => EventPredicate::always(),
        }
    }

    pub fn run(&self) -> Result<SecondMomentReport> {
        if self.ns.is_empty() || self.ns.contains(&1) {
            return Err(Error::DegenerateGrid("need scales n >= 2".into()));
        }
        let mut cells = Vec::new();
        let mut scales = Vec::new();
        for (i, &n) in self.ns.iter().enumerate() {
            let targets = target_grid(n, self.a, &self.fractions);
            let seed = derive_seed_path(self.seed, &[i as u64]);
            let c = second_moment_cells(n, &targets, &self.predicate(n), self.n_samples, seed)?;
            let log_n = (n as f64).ln();
            scales.push(ScaleSummary {
                n,
                log_n,
                max_ratio: c
                    .iter()
                    .map(|c| c.second_moment / log_n)
                    .fold(0.0, f64::max),
                min_mean: c.iter().map(|c| c.mean).fold(f64::INFINITY, f64::min),
            });
            cells.extend(c);
        }
        let c_prime = scales.iter().map(|s| s.max_ratio).fold(0.0, f64::max);
        let min_ratio = scales
            .iter()
            .map(|s| s.max_ratio)
            .fold(f64::INFINITY, f64::min);
        let c_a = cells
            .iter()
            .map(|c| c.exact_unrestricted_mean)
            .fold(f64::INFINITY, f64::min);
        let ratio_spread = c_prime / min_ratio;
        Ok(SecondMomentReport {
            ratio_bounded: min_ratio > 0.0 && ratio_spread <= RATIO_SPREAD_LIMIT,
            mean_bounded_below: c_a > 0.0 && cells.iter().all(|c| c.mean > c_a / 2.0),
            pz_all: cells.iter().all(|c| c.pz_holds(4.0)),
            cells,
            scales,
            c_prime,
            c_a,
            ratio_spread,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowReturnEstimate {
    pub alpha: Alpha,
    pub n: usize,
    pub a: f64,
    pub window: (usize, usize),
    pub draws: u64,
    pub accepted: u64,
    /// Conditional probability of visiting the origin in the window.
    pub estimate: EstimateResult,
    /// `(log n)·p̂`.
    pub scaled: f64,
    pub scaled_stderr: f64,
}

/// `P(∃ k ∈ [⌈5n/2⌉, 3n] : X_k = 0 | max_i |D_n(e_i)| <= A√n)` for the ERW,
/// with the conditioning realized by rejection over `n_samples` draws.
pub fn window_return_probability_erw(
    alpha: Alpha,
    n: usize,
    a: f64,
    n_samples: usize,
    seed: u64,
) -> Result<WindowReturnEstimate> {
    if n < 2 {
        return Err(out_of_range("n", n, ">= 2"));
    }
    let window = return_window(n);
    let bound = a * (n as f64).sqrt();
    let outcomes: Vec<Option<bool>> = (0..n_samples as u64)
        .into_par_iter()
        .map(|i| {
            let mut w = Walker::with_rng(alpha, substream(seed, i));
            w.run(n as u64);
            if !w.counts().within(bound) {
                return None;
            }
            let mut t = n;
            let mut hit = false;
            w.run_while((window.1 - n) as u64, |p| {
                t += 1;
                hit = t >= window.0 && p.is_origin();
                !hit
            });
            Some(hit)
        })
        .collect();
    let accepted = outcomes.iter().flatten().count() as u64;
    if accepted < MIN_CONDITIONED as u64 {
        return Err(Error::InsufficientConditioningSamples {
            accepted: accepted as usize,
            required: MIN_CONDITIONED,
        });
    }
    let hits = outcomes.iter().flatten().filter(|&&h| h).count() as u64;
    let estimate =
        EstimateResult::proportion(hits, accepted, Provenance::new(seed, n_samples as u64));
    let log_n = (n as f64).ln();
    Ok(WindowReturnEstimate {
        alpha,
        n,
        a,
        window,
        draws: n_samples as u64,
        accepted,
        scaled: log_n * estimate.mean,
        scaled_stderr: log_n * estimate.stderr,
        estimate,
    })
}

/// Cap on `n` for [`srw_window_return_exact`].
pub const EXACT_WINDOW_CAP: usize = 256;

/// Exact SRW counterpart of [`window_return_probability_erw`] at `α = 0`:
/// the law of `X_n` on the conditioning event is assembled from the
/// multinomial count law, then propagated with the origin absorbing
/// inside the window.
pub fn srw_window_return_exact(n: usize, a: f64) -> Result<f64> {
    if n < 2 {
        return Err(out_of_range("n", n, ">= 2"));
    }
    if n > EXACT_WINDOW_CAP {
        return Err(Error::ResourceLimit(format!(
            "exact window return at n = {n} exceeds cap {EXACT_WINDOW_CAP}"
        )));
    }
    let bound = a * (n as f64).sqrt();
    let ln_norm = ln_factorial(n as u64) - n as f64 * 4f64.ln();
    let mut measure = HeatKernelTable::zeros(n);
    let mut conditioned = 0.0;
    for e in 0..=n {
        for w in 0..=n - e {
            for north in 0..=n - e - w {
                let s = n - e - w - north;
                let raw = [e as u64, north as u64, w as u64, s as u64];
                let counts = DirectionCounts::from_raw(raw);
                if !counts.within(bound) {
                    continue;
                }
                let p = (ln_norm - raw.iter().map(|&r| ln_factorial(r)).sum::<f64>()).exp();
                conditioned += p;
                measure.add(counts.position(), p)?;
            }
        }
    }
    if conditioned == 0.0 {
        return Err(Error::InsufficientConditioningSamples {
            accepted: 0,
            required: 1,
        });
    }
    let (lo, hi) = return_window(n);
    for _ in n..lo {
        measure = measure.step();
    }
    let mut absorbed = measure.take(LatticePoint::ORIGIN);
    for _ in lo..hi {
        measure = measure.step();
        absorbed += measure.take(LatticePoint::ORIGIN);
    }
    Ok(absorbed / conditioned)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriadicScanConfig {
    pub alpha: Alpha,
    pub j_min: u32,
    pub j_max: u32,
    /// Scale at which `δ` is fixed.
    pub j_delta: u32,
    pub prefixes: usize,
    pub pilot_continuations: usize,
    pub delta_quantile: f64,
    /// Continuations per prefix are at least `resolution·j/δ`.
    pub resolution: f64,
    pub max_continuations: usize,
    pub seed: u64,
}

pub const MAX_TRIADIC_J: u32 = 10;

impl TriadicScanConfig {
    pub fn new(alpha: Alpha, seed: u64) -> Self {
        TriadicScanConfig {
            alpha,
            j_min: 4,
            j_max: 8,
            j_delta: 4,
            prefixes: 100,
            pilot_continuations: 400,
            delta_quantile: 0.05,
            resolution: 30.0,
            max_continuations: 1_000_000,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.j_max > MAX_TRIADIC_J {
            return Err(Error::ResourceLimit(format!(
                "j_max = {} exceeds {MAX_TRIADIC_J}",
                self.j_max
            )));
        }
        if self.j_delta == 0 || self.j_min == 0 || self.j_min > self.j_max {
            return Err(out_of_range(
                "triadic range",
                format!(
                    "j_delta={} j_min={} j_max={}",
                    self.j_delta, self.j_min, self.j_max
                ),
                "1 <= j_min <= j_max, j_delta >= 1",
            ));
        }
        if self.prefixes == 0 || self.pilot_continuations == 0 {
            return Err(out_of_range("prefixes/continuations", 0, ">= 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriadicRecord {
    pub alpha: f64,
    pub j: u32,
    pub window: (u64, u64),
    pub prefix_id: u64,
    pub hits: u64,
    pub trials: u64,
    /// Whether the prefix stopped before its full continuation budget.
    pub stopped: bool,
    pub p_hat: f64,
}

fn pow3(j: u32) -> u64 {
    3u64.pow(j)
}

/// A prefix stops drawing continuations once its hit count reaches this
/// multiple of the threshold count `⌈R·δ/j⌉`. Past that point the verdict
/// `j·P̂ > δ` of the full run is already decided.
pub const STOP_FACTOR: u64 = 4;

/// Estimate `P_{3^j}` for each of `prefixes` independent prefixes with up
/// to `continuations` runs each, stopping a prefix early at `stop_hits`
/// hits. Hits are detected while stepping.
///
/// A prefix that ran all continuations reports `h/R`; one stopped at `t`
/// trials reports the inverse-sampling estimate `(h-1)/(t-1)`.
fn triadic_level(
    alpha: Alpha,
    j: u32,
    prefixes: usize,
    continuations: usize,
    stop_hits: u64,
    seed: u64,
) -> Vec<TriadicRecord> {
    let (start, end) = (pow3(j), pow3(j + 1));
    let prefix_master = derive_seed_path(seed, &[j as u64]);
    (0..prefixes as u64)
        .into_par_iter()
        .map(|p| {
            let mut prefix = Walker::with_rng(alpha, substream(prefix_master, p));
            prefix.run(start);
            let (mut hits, mut trials) = (0u64, 0u64);
            if prefix.position().is_origin() {
                hits = continuations as u64;
                trials = hits;
            } else {
                let cont_master = derive_seed_path(seed, &[j as u64, p]);
                while trials < continuations as u64 && hits < stop_hits {
                    let mut w = prefix.clone();
                    *w.rng_mut() = substream(cont_master, trials);
                    let hit = w.run_while(end - start, |p| !p.is_origin()) < end - start
                        || w.position().is_origin();
                    hits += hit as u64;
                    trials += 1;
                }
            }
            let stopped = trials < continuations as u64;
            TriadicRecord {
                alpha: alpha.value(),
                j,
                window: (start, end),
                prefix_id: p,
                hits,
                trials,
                stopped,
                p_hat: if stopped {
                    (hits - 1) as f64 / (trials - 1) as f64
                } else {
                    hits as f64 / trials as f64
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TriadicScan {
    pub config: TriadicScanConfig,
    pub delta: f64,
    pub pilot: Vec<TriadicRecord>,
    /// Continuation budget the pilot needed to resolve `δ`.
    pub pilot_continuations: usize,
    pub records: Vec<TriadicRecord>,
    /// `(j, continuations per prefix)`.
    pub continuations: Vec<(u32, usize)>,
}

impl TriadicScan {
    pub fn levels(&self) -> impl Iterator<Item = u32> + '_ {
        self.continuations.iter().map(|&(j, _)| j)
    }

    pub fn level(&self, j: u32) -> impl Iterator<Item = &TriadicRecord> {
        self.records.iter().filter(move |r| r.j == j)
    }

    /// `P̂(j·P_{3^j} > δ)` over prefixes.
    pub fn exceedance(&self, j: u32) -> EstimateResult {
        let (hits, total) = self.level(j).fold((0u64, 0u64), |(h, t), r| {
            (h + (j as f64 * r.p_hat > self.delta) as u64, t + 1)
        });
        EstimateResult::proportion(hits, total, Provenance::new(self.config.seed, total))
    }
}

/// Two-level estimate of the law of `P_{3^j}`. A pilot at `j_delta` fixes
/// `δ` as a low quantile of `j·P̂_{3^j}`; the main levels then use fresh
/// prefixes with enough continuations to resolve `δ/j`.
pub fn triadic_return_scan(cfg: &TriadicScanConfig) -> Result<TriadicScan> {
    cfg.validate()?;
    let pilot_seed = derive_seed_path(cfg.seed, &[0]);
    let main_seed = derive_seed_path(cfg.seed, &[1]);
    let jd = cfg.j_delta as f64;
    let pilot_stop = STOP_FACTOR * cfg.resolution.ceil() as u64;
    let mut r = cfg.pilot_continuations;
    let (pilot, delta) = loop {
        let pilot = triadic_level(
            cfg.alpha,
            cfg.j_delta,
            cfg.prefixes,
            r,
            pilot_stop,
            pilot_seed,
        );
        let scaled: Vec<f64> = pilot.iter().map(|rec| jd * rec.p_hat).collect();
        let delta = quantile(&scaled, cfg.delta_quantile);
        if delta > 0.0 && r as f64 >= cfg.resolution * jd / delta {
            break (pilot, delta);
        }
        let next = if delta > 0.0 {
            (2 * r).max((cfg.resolution * jd / delta).ceil() as usize)
        } else {
            4 * r
        };
        if next > cfg.max_continuations {
            return Err(Error::ResourceLimit(format!(
                "pilot at j = {} needs {next} continuations to resolve delta, cap {}",
                cfg.j_delta, cfg.max_continuations
            )));
        }
        r = next;
    };
    let mut records = Vec::new();
    let mut continuations = Vec::new();
    for j in cfg.j_min..=cfg.j_max {
        let r = cfg
            .pilot_continuations
            .max((cfg.resolution * j as f64 / delta).ceil() as usize);
        if r > cfg.max_continuations {
            return Err(Error::ResourceLimit(format!(
                "{r} continuations needed at j = {j}, cap {}",
                cfg.max_continuations
            )));
        }
        let stop = STOP_FACTOR * (r as f64 * delta / j as f64).ceil() as u64;
        records.extend(triadic_level(
            cfg.alpha,
            j,
            cfg.prefixes,
            r,
            stop,
            main_seed,
        ));
        continuations.push((j, r));
    }
    Ok(TriadicScan {
        config: cfg.clone(),
        delta,
        pilot,
        pilot_continuations: r,
        records,
        continuations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceRow {
    pub j: u32,
    /// Mean of `P̂_{3^j}` over prefixes.
    pub p_mean: f64,
    pub p_stderr: f64,
    pub partial_sum: f64,
    /// `δ/(2j)`.
    pub increment_floor: f64,
    pub exceedance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub delta: f64,
    pub rows: Vec<DivergenceRow>,
    /// Slope of the partial sums against `log j`.
    pub log_slope: f64,
    pub increments_ok: bool,
    pub min_exceedance: f64,
}

pub fn cumulative_return_divergence(scan: &TriadicScan) -> Result<DivergenceReport> {
    let mut rows = Vec::new();
    let mut partial = 0.0;
    for j in scan.levels() {
        let m: crate::stats::Moments = scan.level(j).map(|r| r.p_hat).collect();
        partial += m.mean();
        rows.push(DivergenceRow {
            j,
            p_mean: m.mean(),
            p_stderr: m.stderr(),
            partial_sum: partial,
            increment_floor: scan.delta / (2.0 * j as f64),
            exceedance: scan.exceedance(j).mean,
        });
    }
    let xs: Vec<f64> = rows.iter().map(|r| (r.j as f64).ln()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.partial_sum).collect();
    Ok(DivergenceReport {
        delta: scan.delta,
        log_slope: ols_slope(&xs, &ys)?,
        increments_ok: rows.iter().all(|r| r.p_mean >= r.increment_floor),
        min_exceedance: rows
            .iter()
            .map(|r| r.exceedance)
            .fold(f64::INFINITY, f64::min),
        rows,
    })
}

/// Whether the steps ever visit `target` at a time in `[lo, hi]`.
pub fn visits_in_window(steps: &[Direction], target: LatticePoint, lo: usize, hi: usize) -> bool {
    let mut pos = LatticePoint::ORIGIN;
    (lo == 0 && pos == target)
        || steps.iter().take(hi).enumerate().any(|(t, &d)| {
            pos = pos.step(d);
            t + 1 >= lo && pos == target
        })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{decode_path, exact_erw_law};
    use crate::srw::heat_kernel_closed_form;
    use Direction::*;

    fn pt(x: i64, y: i64) -> LatticePoint {
        LatticePoint::new(x, y)
    }

    #[test]
    fn windows_round_up() {
        assert_eq!(lemma_window(4), (6, 8));
        assert_eq!(lemma_window(5), (8, 10));
        assert_eq!(return_window(4), (10, 12));
        assert_eq!(return_window(3), (8, 9));
    }

    #[test]
    fn config_validation() {
        assert!(ReturnCountConfig::new(16, pt(4, 0), 1.0, EventPredicate::always()).is_ok());
        assert!(ReturnCountConfig::new(16, pt(4, 1), 1.0, EventPredicate::always()).is_err());
        assert!(ReturnCountConfig::new(0, pt(0, 0), 1.0, EventPredicate::always()).is_err());
    }

    #[test]
    fn statistic_trivial_cases() {
        let traj = Trajectory::new(vec![East; 8]);
        let cfg = ReturnCountConfig::new(4, pt(0, 0), 1.0, EventPredicate::always()).unwrap();
        assert_eq!(return_count_statistic(&traj, &cfg).unwrap(), 0);
        let back = Trajectory::new(vec![East, West, East, West, East, West, East, West]);
        let never = ReturnCountConfig::new(4, pt(0, 0), 1.0, EventPredicate::never()).unwrap();
        assert_eq!(return_count_statistic(&back, &never).unwrap(), 0);
        // visits at 6 and 8
        assert_eq!(return_count_statistic(&back, &cfg).unwrap(), 2);
        assert!(return_count_statistic(&Trajectory::new(vec![East; 7]), &cfg).is_err());
    }

    #[test]
    fn statistic_matches_brute_force_on_all_short_paths() {
        let n = 4;
        let pred = EventPredicate::count_band(1.0);
        for target in [pt(0, 0), pt(1, 1), pt(-2, 0)] {
            let cfg = ReturnCountConfig::new(n, target, 1.5, pred.clone()).unwrap();
            for code in (0..1usize << 16).step_by(7) {
                let steps = decode_path(code, 2 * n);
                // independent recount: explicit positions and explicit band test
                let band_ok = |s: &[Direction]| {
                    let mut c = [0i64; 4];
                    s.iter().enumerate().all(|(k, &d)| {
                        c[d.code() as usize] += 4;
                        c.iter().all(|&v| (v - (k as i64 + 1)).abs() <= 4)
                    })
                };
                let mut xs = vec![pt(0, 0)];
                for &d in &steps {
                    let last = *xs.last().unwrap();
                    xs.push(last + d.vector());
                }
                let expect = if band_ok(&steps[..n]) && band_ok(&steps[n..]) {
                    (6..=8).filter(|&k| xs[k] == -target).count() as u64
                } else {
                    0
                };
                let got = return_count_statistic(&Trajectory::new(steps), &cfg).unwrap();
                assert_eq!(got, expect, "code {code}");
            }
        }
    }

    #[test]
    fn target_grid_stays_in_ball() {
        for n in [256usize, 1000, 8192] {
            let g = target_grid(n, 1.0, &[0.0, 0.5, 1.0]);
            assert_eq!(g.len(), 5);
            assert!(g.iter().all(|p| p.norm() <= (n as f64).sqrt()));
            assert!(g.contains(&LatticePoint::ORIGIN));
        }
    }

    #[test]
    fn vacuous_mean_matches_exact_visits() {
        let n = 128;
        let targets = [pt(0, 0), pt(5, 3)];
        let cells = second_moment_cells(n, &targets, &EventPredicate::always(), 40_000, 5).unwrap();
        for c in &cells {
            let exact: f64 = (192..=256)
                .map(|k| heat_kernel_closed_form(k, -c.target))
                .sum();
            assert!((c.exact_unrestricted_mean - exact).abs() < 1e-14);
            assert!((c.mean - exact).abs() <= 4.0 * c.mean_stderr, "{c:?}");
            assert_eq!(c.event_fraction, 1.0);
            assert!(c.pz_holds(0.0));
        }
    }

    #[test]
    fn second_moment_sweep_shape() {
        let sweep = SecondMomentSweep {
            ns: vec![64, 128, 256],
            a: 1.0,
            fractions: vec![0.0, 1.0],
            band: Some(2.0),
            n_samples: 10_000,
            seed: 8,
        };
        let r = sweep.run().unwrap();
        assert_eq!(r.scales.len(), 3);
        assert!(r.pz_all && r.mean_bounded_below && r.ratio_bounded, "{r:?}");
        assert!(r
            .cells
            .iter()
            .all(|c| c.event_fraction > 0.9
                && c.mean <= c.exact_unrestricted_mean + 4.0 * c.mean_stderr));
    }

    #[test]
    fn exact_window_return_matches_path_enumeration() {
        // n = 2: window [5, 6], conditioning |D_2| <= A·√2
        for a in [0.4, 2.0] {
            let law = exact_erw_law(Alpha::SRW, 6).unwrap();
            let bound = a * 2f64.sqrt();
            let (mut num, mut den) = (0.0, 0.0);
            for (path, p) in law.iter() {
                let mut c = DirectionCounts::new();
                path[..2].iter().for_each(|&d| c.record(d));
                if c.within(bound) {
                    den += p;
                    if visits_in_window(&path, LatticePoint::ORIGIN, 5, 6) {
                        num += p;
                    }
                }
            }
            let exact = srw_window_return_exact(2, a).unwrap();
            assert!(
                (exact - num / den).abs() < 1e-12,
                "A={a}: {exact} vs {}",
                num / den
            );
        }
        assert!(srw_window_return_exact(EXACT_WINDOW_CAP + 1, 1.0).is_err());
    }

    #[test]
    fn erw_at_zero_matches_exact_srw() {
        let n = 64;
        let exact = srw_window_return_exact(n, 1.0).unwrap();
        let est = window_return_probability_erw(Alpha::SRW, n, 1.0, 40_000, 17).unwrap();
        assert!(est.accepted < est.draws);
        assert!(
            est.estimate.within(exact, 4.0),
            "{exact} vs {:?}",
            est.estimate
        );
    }

    #[test]
    fn vacuous_conditioning_accepts_everything() {
        let a = Alpha::new(0.3).unwrap();
        let cond = window_return_probability_erw(a, 50, 1e9, 2000, 4).unwrap();
        assert_eq!(cond.accepted, 2000);
        // same seed and same walks: identical to an unconditioned recount
        let hits = (0..2000u64)
            .filter(|&i| {
                let mut w = Walker::with_rng(a, substream(4, i));
                let steps: Vec<_> = (0..150).map(|_| w.step()).collect();
                visits_in_window(&steps, LatticePoint::ORIGIN, 125, 150)
            })
            .count() as f64;
        assert_eq!(cond.estimate.mean, hits / 2000.0);
    }

    #[test]
    fn insufficient_conditioning() {
        let r = window_return_probability_erw(Alpha::SRW, 100, 1e-3, 500, 1);
        assert!(matches!(
            r,
            Err(Error::InsufficientConditioningSamples { .. })
        ));
    }

    #[test]
    fn visits_in_window_edges() {
        assert!(visits_in_window(&[], LatticePoint::ORIGIN, 0, 0));
        assert!(visits_in_window(&[East, West], LatticePoint::ORIGIN, 2, 2));
        assert!(!visits_in_window(&[East, West], LatticePoint::ORIGIN, 1, 1));
        assert!(!visits_in_window(
            &[East, West, East, West],
            LatticePoint::ORIGIN,
            1,
            1
        ));
    }

    #[test]
    fn triadic_scan_small() {
        let mut cfg = TriadicScanConfig::new(Alpha::new(0.3).unwrap(), 21);
        cfg.j_min = 2;
        cfg.j_max = 4;
        cfg.j_delta = 3;
        cfg.prefixes = 40;
        cfg.pilot_continuations = 200;
        let scan = triadic_return_scan(&cfg).unwrap();
        assert!(scan.delta > 0.0);
        assert_eq!(scan.records.len(), 3 * 40);
        for &(j, r) in &scan.continuations {
            assert!(r as f64 >= 30.0 * j as f64 / scan.delta);
        }
        assert!(scan.pilot_continuations as f64 >= 30.0 * 3.0 / scan.delta);
        assert!(scan
            .records
            .iter()
            .all(|r| r.p_hat >= 0.0 && r.p_hat <= 1.0));
        assert!(scan
            .records
            .iter()
            .filter(|r| r.stopped)
            .all(|r| r.j as f64 * r.p_hat > scan.delta));
        assert_eq!(scan.records[0].window, (9, 27));
        let again = triadic_return_scan(&cfg).unwrap();
        assert_eq!(scan, again);
        let div = cumulative_return_divergence(&scan).unwrap();
        assert_eq!(div.rows.len(), 3);
        assert!(div
            .rows
            .windows(2)
            .all(|w| w[1].partial_sum > w[0].partial_sum));
        assert!(div.log_slope > 0.0);
    }

    #[test]
    fn triadic_hit_rate_matches_direct_simulation() {
        // j = 1 with a single prefix: continuation hit rate equals the
        // conditional return frequency over [3, 9] from that prefix
        let alpha = Alpha::new(0.3).unwrap();
        let rec = &triadic_level(alpha, 1, 1, 20_000, u64::MAX, 77)[0];
        let mut prefix = Walker::with_rng(alpha, substream(derive_seed_path(77, &[1]), 0));
        prefix.run(3);
        let hits = (0..20_000u64)
            .filter(|&r| {
                let mut w = prefix.clone();
                *w.rng_mut() = substream(derive_seed_path(77, &[1, 0]), r);
                let steps: Vec<_> = (0..6).map(|_| w.step()).collect();
                let mut pos = prefix.position();
                steps.iter().any(|&d| {
                    pos = pos.step(d);
                    pos.is_origin()
                })
            })
            .count() as u64;
        assert_eq!(rec.hits, hits);
        assert_eq!(rec.trials, 20_000);
        assert!(!rec.stopped);
        // early stop keeps the same continuation stream
        let early = &triadic_level(alpha, 1, 1, 20_000, 50, 77)[0];
        assert!(early.stopped && early.hits == 50 && early.trials < 20_000);
        assert!((early.p_hat - rec.p_hat).abs() < 0.1);
    }

    #[test]
    fn triadic_config_checks() {
        let mut cfg = TriadicScanConfig::new(Alpha::new(0.3).unwrap(), 1);
        cfg.j_max = 11;
        assert!(matches!(
            triadic_return_scan(&cfg),
            Err(Error::ResourceLimit(_))
        ));
        cfg.j_max = 3;
        assert!(triadic_return_scan(&cfg).is_err());
    }
}
