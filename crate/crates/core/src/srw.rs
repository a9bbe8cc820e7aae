//! Exact and Monte Carlo quantities for the plane simple random walk.
//!
//! Heat kernels are computed by dynamic programming on the diamond
//! `|x| + |y| <= k`, storing only the parity class `x + y ≡ k (mod 2)`.
//! In the rotated coordinates `a = (x + y + k)/2`, `b = (x - y + k)/2` that
//! class is exactly the square `[0, k]²`, and one SRW step is a half-half
//! shift in `a` followed by a half-half shift in `b`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;
use statrs::function::factorial::ln_binomial;

use crate::error::{out_of_range, Error, Result};
use crate::rng::{substream, WalkRng};
use crate::stats::{EstimateResult, Provenance};
use crate::walk::{Direction, DirectionCounts, LatticePoint};

pub const DEFAULT_DP_CAP: usize = 4096;

/// Uniform SRW steps, 32 per generator call.
#[derive(Debug, Clone, Copy, Default)]
pub struct SrwStepper {
    bits: u64,
    left: u32,
}

impl SrwStepper {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn next(&mut self, rng: &mut WalkRng) -> Direction {
        if self.left == 0 {
            self.bits = rng.next_u64();
            self.left = 32;
        }
        let d = Direction::from_code((self.bits & 3) as u8);
        self.bits >>= 2;
        self.left -= 1;
        d
    }
}

/// A measure at time `k` supported on the parity class of the diamond
/// `|x| + |y| <= k`. Heat kernels are the special case started from `δ_0`.
#[derive(Clone, PartialEq)]
pub struct HeatKernelTable {
    k: usize,
    cells: Vec<f64>,
}

impl fmt::Debug for HeatKernelTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HeatKernelTable")
            .field("k", &self.k)
            .field("total", &self.total())
            .finish()
    }
}

impl HeatKernelTable {
    /// `p_0 = δ_0`.
    pub fn delta() -> Self {
        HeatKernelTable {
            k: 0,
            cells: vec![1.0],
        }
    }

    /// Zero measure at time `k`.
    pub fn zeros(k: usize) -> Self {
        HeatKernelTable {
            k,
            cells: vec![0.0; (k + 1) * (k + 1)],
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    #[inline]
    fn index(&self, p: LatticePoint) -> Option<usize> {
        let k = self.k as i64;
        if p.l1() > k || (p.x + p.y + k).rem_euclid(2) != 0 {
            return None;
        }
        let a = ((p.x + p.y + k) / 2) as usize;
        let b = ((p.x - p.y + k) / 2) as usize;
        Some(a * (self.k + 1) + b)
    }

    #[inline]
    fn point(&self, idx: usize) -> LatticePoint {
        let k = self.k as i64;
        let a = (idx / (self.k + 1)) as i64;
        let b = (idx % (self.k + 1)) as i64;
        LatticePoint::new(a + b - k, a - b)
    }

    /// Value at `p`; zero off the support and off the parity class.
    pub fn get(&self, p: LatticePoint) -> f64 {
        self.index(p).map_or(0.0, |i| self.cells[i])
    }

    pub fn set(&mut self, p: LatticePoint, value: f64) -> Result<()> {
        match self.index(p) {
            Some(i) => {
                self.cells[i] = value;
                Ok(())
            }
            None => Err(out_of_range(
                "lattice point",
                p,
                format!("parity class of the radius-{} diamond", self.k),
            )),
        }
    }

    pub fn add(&mut self, p: LatticePoint, value: f64) -> Result<()> {
        let v = self.get(p);
        self.set(p, v + value)
    }

    /// Remove and return the mass at `p`.
    pub fn take(&mut self, p: LatticePoint) -> f64 {
        match self.index(p) {
            Some(i) => std::mem::take(&mut self.cells[i]),
            None => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (LatticePoint, f64)> + '_ {
        self.cells
            .iter()
            .enumerate()
            .map(move |(i, &v)| (self.point(i), v))
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().sum()
    }

    pub fn max_value(&self) -> f64 {
        self.cells.iter().copied().fold(0.0, f64::max)
    }

    /// Advance one SRW step: `p_{k+1}(x) = (1/4)·Σ_e p_k(x - e)`.
    pub fn step(&self) -> HeatKernelTable {
        let k = self.k;
        let (w, w2) = (k + 1, k + 2);
        // half-shift along a
        let mut tmp = vec![0.0; w2 * w];
        for a in 0..w2 {
            for b in 0..w {
                let lo = if a > 0 {
                    self.cells[(a - 1) * w + b]
                } else {
                    0.0
                };
                let hi = if a < w { self.cells[a * w + b] } else { 0.0 };
                tmp[a * w + b] = 0.5 * (lo + hi);
            }
        }
        // half-shift along b
        let mut cells = vec![0.0; w2 * w2];
        for a in 0..w2 {
            let row = &tmp[a * w..(a + 1) * w];
            let out = &mut cells[a * w2..(a + 1) * w2];
            out[0] = 0.5 * row[0];
            for b in 1..w {
                out[b] = 0.5 * (row[b - 1] + row[b]);
            }
            out[w] = 0.5 * row[w - 1];
        }
        HeatKernelTable { k: k + 1, cells }
    }
}

/// Successive heat kernels `p_0, p_1, ...`.
pub fn heat_kernels() -> impl Iterator<Item = HeatKernelTable> {
    std::iter::successors(Some(HeatKernelTable::delta()), |t| Some(t.step()))
}

pub fn heat_kernel_capped(k: usize, cap: usize) -> Result<HeatKernelTable> {
    if k > cap {
        return Err(Error::ResourceLimit(format!(
            "heat kernel at k = {k} exceeds DP cap {cap}"
        )));
    }
    Ok(heat_kernels().nth(k).expect("infinite iterator"))
}

pub fn heat_kernel(k: usize) -> Result<HeatKernelTable> {
    heat_kernel_capped(k, DEFAULT_DP_CAP)
}

/// `P(S_k = u)` for the one-dimensional ±1 walk.
fn one_dim_kernel(k: u64, u: i64) -> f64 {
    if u.unsigned_abs() > k || (k as i64 + u) % 2 != 0 {
        return 0.0;
    }
    let j = ((k as i64 + u) / 2) as u64;
    (ln_binomial(k, j) - k as f64 * std::f64::consts::LN_2).exp()
}

/// Closed form of `p_k(x, y)`: in the coordinates `x + y` and `x - y` the
/// plane walk is a pair of independent ±1 walks.
pub fn heat_kernel_closed_form(k: u64, p: LatticePoint) -> f64 {
    one_dim_kernel(k, p.x + p.y) * one_dim_kernel(k, p.x - p.y)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KernelBound {
    pub k_max: usize,
    /// `max_{1<=k<=k_max} k·max_y p_k(y)`.
    pub constant: f64,
    pub argmax_k: usize,
    /// `k·max_y p_k(y)` for `k = 1..=k_max`.
    pub profile: Vec<f64>,
}

impl KernelBound {
    /// Relative spread `(max - min)/max` of the profile over `[lo, hi]`.
    pub fn spread(&self, lo: usize, hi: usize) -> f64 {
        let vals = &self.profile[lo - 1..hi];
        let max = vals.iter().copied().fold(f64::MIN, f64::max);
        let min = vals.iter().copied().fold(f64::MAX, f64::min);
        (max - min) / max
    }
}

pub fn heat_kernel_bound_constant(k_max: usize) -> Result<KernelBound> {
    if k_max == 0 {
        return Err(out_of_range("k_max", k_max, ">= 1"));
    }
    if k_max > DEFAULT_DP_CAP {
        return Err(Error::ResourceLimit(format!(
            "k_max = {k_max} exceeds DP cap {DEFAULT_DP_CAP}"
        )));
    }
    let profile: Vec<f64> = heat_kernels()
        .skip(1)
        .take(k_max)
        .map(|t| t.k() as f64 * t.max_value())
        .collect();
    let (argmax, constant) =
        profile.iter().enumerate().fold(
            (0, f64::MIN),
            |best, (i, &v)| if v > best.1 { (i, v) } else { best },
        );
    Ok(KernelBound {
        k_max,
        constant,
        argmax_k: argmax + 1,
        profile,
    })
}

/// Lower end of the Green window: `⌈n/2⌉`.
pub fn green_window(n: usize) -> (usize, usize) {
    (n.div_ceil(2), n)
}

/// Truncated Green function `g(y) = Σ_{k=⌈n/2⌉}^{n} p_k(y)`.
#[derive(Clone, PartialEq)]
pub struct GreenFunctionTable {
    n: usize,
    values: Vec<f64>,
}

impl fmt::Debug for GreenFunctionTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("GreenFunctionTable")
            .field("n", &self.n)
            .field("total", &self.total())
            .finish()
    }
}

impl GreenFunctionTable {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn window(&self) -> (usize, usize) {
        green_window(self.n)
    }

    fn index(&self, p: LatticePoint) -> Option<usize> {
        let r = self.n as i64;
        (p.l1() <= r).then(|| ((p.x + r) * (2 * r + 1) + (p.y + r)) as usize)
    }

    pub fn get(&self, p: LatticePoint) -> f64 {
        self.index(p).map_or(0.0, |i| self.values[i])
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn iter(&self) -> impl Iterator<Item = (LatticePoint, f64)> + '_ {
        let r = self.n as i64;
        let w = 2 * r + 1;
        self.values.iter().enumerate().filter_map(move |(i, &v)| {
            let p = LatticePoint::new(i as i64 / w - r, i as i64 % w - r);
            (p.l1() <= r).then_some((p, v))
        })
    }
}

pub fn green_function_capped(n: usize, cap: usize) -> Result<GreenFunctionTable> {
    if n > cap {
        return Err(Error::ResourceLimit(format!(
            "green function at n = {n} exceeds DP cap {cap}"
        )));
    }
    let r = n as i64;
    let w = 2 * n + 1;
    let mut values = vec![0.0; w * w];
    let (lo, hi) = green_window(n);
    for table in heat_kernels().skip(lo).take(hi + 1 - lo) {
        for (p, v) in table.iter() {
            values[((p.x + r) as usize) * w + (p.y + r) as usize] += v;
        }
    }
    Ok(GreenFunctionTable { n, values })
}

pub fn green_function(n: usize) -> Result<GreenFunctionTable> {
    green_function_capped(n, DEFAULT_DP_CAP)
}

/// `Σ_y p_n(y)·g(-y - x)`: the expected number of visits to `-x` during
/// `[n + ⌈n/2⌉, 2n]`.
pub fn green_pairing(p_n: &HeatKernelTable, g: &GreenFunctionTable, x: LatticePoint) -> f64 {
    p_n.iter()
        .filter(|&(_, v)| v > 0.0)
        .map(|(y, v)| v * g.get(-y - x))
        .sum()
}

/// `Σ_{k=lo}^{hi} p_k(target)` from the closed form.
pub fn expected_visits(target: LatticePoint, lo: u64, hi: u64) -> f64 {
    (lo..=hi).map(|k| heat_kernel_closed_form(k, target)).sum()
}

/// A deterministic event on walks of a fixed length, given as step
/// sequences from the origin.
#[derive(Clone)]
pub struct EventPredicate {
    pub name: String,
    test: Arc<dyn Fn(&[Direction]) -> bool + Send + Sync>,
    pub target_probability: Option<f64>,
}

impl fmt::Debug for EventPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EventPredicate")
            .field("name", &self.name)
            .field("target_probability", &self.target_probability)
            .finish()
    }
}

impl EventPredicate {
    pub fn new<F>(name: impl Into<String>, test: F) -> Self
    where
        F: Fn(&[Direction]) -> bool + Send + Sync + 'static,
    {
        EventPredicate {
            name: name.into(),
            test: Arc::new(test),
            target_probability: None,
        }
    }

    pub fn with_target(mut self, p: f64) -> Self {
        self.target_probability = Some(p);
        self
    }

    pub fn always() -> Self {
        Self::new("always", |_| true).with_target(1.0)
    }

    pub fn never() -> Self {
        Self::new("never", |_| false).with_target(0.0)
    }

    /// `sup_k max_i |D_k(e_i)| <= bound`.
    pub fn count_band(bound: f64) -> Self {
        let bound_x4 = 4.0 * bound;
        Self::new(format!("count_band({bound})"), move |steps| {
            let mut c = DirectionCounts::new();
            steps.iter().all(|&d| {
                c.record(d);
                Direction::ALL
                    .iter()
                    .all(|&e| c.centered_x4(e).abs() as f64 <= bound_x4)
            })
        })
    }

    #[inline]
    pub fn test(&self, steps: &[Direction]) -> bool {
        (self.test)(steps)
    }
}

/// Monte Carlo estimate of `p_k^E(y) = E[1_{X_k = y} 1_{X_[0,n] ∈ E}]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RestrictedKernel {
    pub k: usize,
    pub n: usize,
    pub samples: u64,
    pub event_hits: u64,
    pub counts: BTreeMap<LatticePoint, u64>,
}

impl RestrictedKernel {
    pub fn value(&self, p: LatticePoint) -> f64 {
        self.counts.get(&p).copied().unwrap_or(0) as f64 / self.samples as f64
    }

    pub fn stderr(&self, p: LatticePoint) -> f64 {
        let v = self.value(p);
        (v * (1.0 - v) / self.samples as f64).sqrt()
    }

    pub fn values(&self) -> BTreeMap<LatticePoint, f64> {
        self.counts
            .iter()
            .map(|(&p, &c)| (p, c as f64 / self.samples as f64))
            .collect()
    }

    pub fn mass(&self) -> f64 {
        self.event_hits as f64 / self.samples as f64
    }
}

fn simulate_srw_path(n: usize, rng: &mut WalkRng, buf: &mut Vec<Direction>) {
    let mut stepper = SrwStepper::new();
    buf.clear();
    buf.extend((0..n).map(|_| stepper.next(rng)));
}

pub fn restricted_kernel(
    k: usize,
    n: usize,
    predicate: &EventPredicate,
    n_samples: usize,
    seed: u64,
) -> Result<RestrictedKernel> {
    if k > n {
        return Err(out_of_range("k", k, format!("<= n = {n}")));
    }
    let draws: Vec<Option<LatticePoint>> = (0..n_samples as u64)
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            simulate_srw_path(n, &mut substream(seed, i), buf);
            predicate.test(buf).then(|| {
                buf[..k]
                    .iter()
                    .fold(LatticePoint::ORIGIN, |p, &d| p.step(d))
            })
        })
        .collect();
    let mut counts = BTreeMap::new();
    let mut event_hits = 0;
    for p in draws.into_iter().flatten() {
        *counts.entry(p).or_insert(0) += 1;
        event_hits += 1;
    }
    Ok(RestrictedKernel {
        k,
        n,
        samples: n_samples as u64,
        event_hits,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct L1Deficits {
    pub n: usize,
    pub p_event: EstimateResult,
    /// `Σ_y p_n(y) - p̂_n^E(y)`.
    pub kernel_deficit: f64,
    /// `Σ_y g(y) - ĝ^E(y)`.
    pub green_deficit: f64,
    /// `Σ_y |p_n(y) - p̂_n^E(y)|`, including sampling noise.
    pub kernel_abs: f64,
    pub green_abs: f64,
    /// `kernel_deficit <= 1 - P̂(E) + 4·stderr`.
    pub kernel_ok: bool,
    /// `green_deficit <= n·kernel_deficit`.
    pub green_ok: bool,
}

/// L1 gaps between the exact SRW kernel and Green function and their
/// Monte Carlo restrictions to the event.
pub fn l1_deficits(
    n: usize,
    predicate: &EventPredicate,
    n_samples: usize,
    seed: u64,
) -> Result<L1Deficits> {
    if n == 0 || n > DEFAULT_DP_CAP {
        return Err(out_of_range("n", n, format!("1..={DEFAULT_DP_CAP}")));
    }
    let (lo, hi) = green_window(n);
    let draws: Vec<Option<Vec<LatticePoint>>> = (0..n_samples as u64)
        .into_par_iter()
        .map_init(Vec::new, |buf, i| {
            simulate_srw_path(n, &mut substream(seed, i), buf);
            predicate.test(buf).then(|| {
                let mut pos = LatticePoint::ORIGIN;
                let mut out = Vec::with_capacity(hi + 1 - lo);
                for (t, &d) in buf.iter().enumerate() {
                    if t >= lo {
                        out.push(pos);
                    }
                    pos = pos.step(d);
                }
                out.push(pos);
                out
            })
        })
        .collect();
    let weight = 1.0 / n_samples as f64;
    let mut kernel_hat: BTreeMap<LatticePoint, f64> = BTreeMap::new();
    let mut green_hat: BTreeMap<LatticePoint, f64> = BTreeMap::new();
    let mut hits = 0u64;
    for visits in draws.into_iter().flatten() {
        hits += 1;
        *kernel_hat
            .entry(*visits.last().expect("nonempty"))
            .or_insert(0.0) += weight;
        for p in visits {
            *green_hat.entry(p).or_insert(0.0) += weight;
        }
    }
    let p_n = heat_kernel(n)?;
    let g = green_function(n)?;
    let kernel_deficit = p_n.total() - kernel_hat.values().sum::<f64>();
    let green_deficit = g.total() - green_hat.values().sum::<f64>();
    let kernel_abs = p_n
        .iter()
        .map(|(y, v)| (v - kernel_hat.get(&y).copied().unwrap_or(0.0)).abs())
        .sum::<f64>();
    let green_abs = g
        .iter()
        .map(|(y, v)| (v - green_hat.get(&y).copied().unwrap_or(0.0)).abs())
        .sum::<f64>();
    let p_event = EstimateResult::proportion(
        hits,
        n_samples as u64,
        Provenance::new(seed, n_samples as u64),
    );
    Ok(L1Deficits {
        n,
        kernel_ok: kernel_deficit <= 1.0 - p_event.mean + 4.0 * p_event.stderr + 1e-12,
        green_ok: green_deficit <= n as f64 * kernel_deficit.max(0.0) + 1e-9,
        p_event,
        kernel_deficit,
        green_deficit,
        kernel_abs,
        green_abs,
    })
}
