//! The elephant random walk on Z^2.
//!
//! The walk's conditional step law depends on the past only through the four
//! direction counts, so the production sampler ([`Sampler::Counting`]) keeps
//! O(1) state. The replay construction ([`Sampler::Replay`]) picks a uniform
//! past step and repeats it with probability `p = (3α + 1)/4`; it needs the
//! whole history and is capped accordingly.

use std::fmt;
use std::ops::{Add, Neg, Sub};

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{out_of_range, Error, Result};
use crate::rng::{below, substream, uniform01, WalkRng};

/// One of the four unit steps of the square lattice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[repr(u8)]
pub enum Direction {
    /// e_1 = (1, 0)
    East = 0,
    /// e_2 = (0, 1)
    North = 1,
    /// e_3 = (-1, 0)
    West = 2,
    /// e_4 = (0, -1)
    South = 3,
}

impl Direction {
    pub const ALL: [Direction; 4] = [
        Direction::East,
        Direction::North,
        Direction::West,
        Direction::South,
    ];

    /// 2-bit code, 0..=3.
    #[inline]
    pub fn code(self) -> u8 {
        self as u8
    }

    #[inline]
    pub fn from_code(code: u8) -> Direction {
        Direction::ALL[(code & 3) as usize]
    }

    /// Conventional 1-based index: e_1..e_4.
    pub fn index(self) -> u8 {
        self.code() + 1
    }

    pub fn from_index(index: u8) -> Result<Direction> {
        match index {
            1..=4 => Ok(Direction::from_code(index - 1)),
            _ => Err(out_of_range("direction index", index, "1..=4")),
        }
    }

    #[inline]
    pub fn opposite(self) -> Direction {
        Direction::from_code(self.code() ^ 2)
    }

    #[inline]
    pub fn vector(self) -> LatticePoint {
        const V: [LatticePoint; 4] = [
            LatticePoint::new(1, 0),
            LatticePoint::new(0, 1),
            LatticePoint::new(-1, 0),
            LatticePoint::new(0, -1),
        ];
        V[self as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize)]
pub struct LatticePoint {
    pub x: i64,
    pub y: i64,
}

impl LatticePoint {
    pub const ORIGIN: LatticePoint = LatticePoint { x: 0, y: 0 };

    pub const fn new(x: i64, y: i64) -> Self {
        LatticePoint { x, y }
    }

    #[inline]
    pub fn step(self, dir: Direction) -> Self {
        self + dir.vector()
    }

    pub fn norm_sq(self) -> i64 {
        self.x * self.x + self.y * self.y
    }

    pub fn norm(self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    pub fn l1(self) -> i64 {
        self.x.abs() + self.y.abs()
    }

    pub fn is_origin(self) -> bool {
        self.x == 0 && self.y == 0
    }
}

impl Add for LatticePoint {
    type Output = LatticePoint;
    #[inline]
    fn add(self, o: LatticePoint) -> LatticePoint {
        LatticePoint::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for LatticePoint {
    type Output = LatticePoint;
    fn sub(self, o: LatticePoint) -> LatticePoint {
        LatticePoint::new(self.x - o.x, self.y - o.y)
    }
}

impl Neg for LatticePoint {
    type Output = LatticePoint;
    fn neg(self) -> LatticePoint {
        LatticePoint::new(-self.x, -self.y)
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Raw step counts `N_k(e_i)`.
///
/// The centered counts `D_k(e_i) = N_k(e_i) - k/4` are derived on demand.
/// [`centered_x4`](Self::centered_x4) returns `4·D_k(e_i)` as an exact
/// integer, so `Σ_i D_k(e_i) = 0` can be checked without rounding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize)]
pub struct DirectionCounts {
    raw: [u64; 4],
    steps: u64,
}

impl DirectionCounts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_raw(raw: [u64; 4]) -> Self {
        DirectionCounts {
            raw,
            steps: raw.iter().sum(),
        }
    }

    #[inline]
    pub fn record(&mut self, dir: Direction) {
        self.raw[dir.code() as usize] += 1;
        self.steps += 1;
    }

    #[inline]
    pub fn raw(&self, dir: Direction) -> u64 {
        self.raw[dir.code() as usize]
    }

    pub fn raw_counts(&self) -> [u64; 4] {
        self.raw
    }

    #[inline]
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// `4·D_k(dir) = 4·N_k(dir) - k`.
    #[inline]
    pub fn centered_x4(&self, dir: Direction) -> i64 {
        4 * self.raw[dir.code() as usize] as i64 - self.steps as i64
    }

    #[inline]
    pub fn centered(&self, dir: Direction) -> f64 {
        self.centered_x4(dir) as f64 / 4.0
    }

    /// `4·Σ_i D_k(e_i)`; zero for every consistent count vector.
    pub fn centered_sum_x4(&self) -> i64 {
        Direction::ALL.iter().map(|&d| self.centered_x4(d)).sum()
    }

    /// `max_i |D_k(e_i)|`.
    pub fn max_abs_centered(&self) -> f64 {
        Direction::ALL
            .iter()
            .map(|&d| self.centered_x4(d).abs())
            .max()
            .unwrap_or(0) as f64
            / 4.0
    }

    /// Whether `|D_k(e_i)| <= bound` for all four directions.
    pub fn within(&self, bound: f64) -> bool {
        self.max_abs_centered() <= bound
    }

    /// Position reached by any walk with these counts.
    pub fn position(&self) -> LatticePoint {
        LatticePoint::new(
            self.raw[0] as i64 - self.raw[2] as i64,
            self.raw[1] as i64 - self.raw[3] as i64,
        )
    }

    /// Count vector of the concatenation of two walks.
    pub fn combined(&self, other: &DirectionCounts) -> DirectionCounts {
        let mut raw = self.raw;
        for (r, o) in raw.iter_mut().zip(other.raw) {
            *r += o;
        }
        DirectionCounts::from_raw(raw)
    }
}

/// Memory parameter α, validated to lie in the open interval (-1/3, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
pub struct Alpha(f64);

impl Alpha {
    pub const SRW: Alpha = Alpha(0.0);
    pub const LOWER: f64 = -1.0 / 3.0;
    pub const UPPER: f64 = 1.0;
    pub const CRITICAL: f64 = 0.5;

    pub fn new(alpha: f64) -> Result<Alpha> {
        if alpha.is_finite() && alpha > Self::LOWER && alpha < Self::UPPER {
            Ok(Alpha(alpha))
        } else {
            Err(Error::InvalidAlpha(alpha))
        }
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// Replay probability `p = (3α + 1)/4`.
    pub fn replay_probability(self) -> f64 {
        (3.0 * self.0 + 1.0) / 4.0
    }

    pub fn is_diffusive(self) -> bool {
        self.0 < Self::CRITICAL
    }
}

impl fmt::Display for Alpha {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

/// `α = (4p - 1)/3` for a replay probability `p ∈ [0, 1]`.
///
/// The endpoints map to α = -1/3 and α = 1, which [`Alpha::new`] rejects.
pub fn memory_param_to_alpha(p: f64) -> Result<f64> {
    if (0.0..=1.0).contains(&p) {
        Ok((4.0 * p - 1.0) / 3.0)
    } else {
        Err(Error::InvalidMemoryParam(p))
    }
}

/// Conditional law of the next step given the current counts:
/// `q_i = 1/4 + α·D_k(e_i)/k`, uniform when `k = 0`.
pub fn step_probabilities(counts: &DirectionCounts, alpha: Alpha) -> [f64; 4] {
    let k = counts.steps();
    if k == 0 {
        return [0.25; 4];
    }
    let scale = alpha.value() / (4.0 * k as f64);
    Direction::ALL.map(|d| 0.25 + scale * counts.centered_x4(d) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum Sampler {
    #[default]
    Counting,
    Replay,
}

/// Default cap on stored steps (one byte each).
pub const DEFAULT_HISTORY_CAP: usize = 1 << 28;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WalkParams {
    pub alpha: Alpha,
    pub sampler: Sampler,
    pub seed: u64,
    pub walker_id: u64,
    pub history_cap: usize,
}

impl WalkParams {
    pub fn new(alpha: Alpha, seed: u64) -> Self {
        WalkParams {
            alpha,
            sampler: Sampler::Counting,
            seed,
            walker_id: 0,
            history_cap: DEFAULT_HISTORY_CAP,
        }
    }

    pub fn with_sampler(mut self, sampler: Sampler) -> Self {
        self.sampler = sampler;
        self
    }

    pub fn with_walker(mut self, walker_id: u64) -> Self {
        self.walker_id = walker_id;
        self
    }

    pub fn rng(&self) -> WalkRng {
        substream(self.seed, self.walker_id)
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct WalkState {
    pub position: LatticePoint,
    pub counts: DirectionCounts,
    pub history: Option<Vec<Direction>>,
}

impl WalkState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_history() -> Self {
        WalkState {
            history: Some(Vec::new()),
            ..Self::default()
        }
    }

    pub fn steps(&self) -> u64 {
        self.counts.steps()
    }

    #[inline]
    pub fn apply(&mut self, dir: Direction) {
        self.position = self.position.step(dir);
        self.counts.record(dir);
        if let Some(h) = self.history.as_mut() {
            h.push(dir);
        }
    }

    /// Draw the next step with `sampler` and apply it.
    ///
    /// Panics if the replay sampler is asked to advance a state without
    /// history.
    #[inline]
    pub fn advance(&mut self, alpha: Alpha, sampler: Sampler, rng: &mut WalkRng) -> Direction {
        let dir = match sampler {
            Sampler::Counting => draw_counting(&self.counts, alpha, rng),
            Sampler::Replay => {
                let history = self
                    .history
                    .as_deref()
                    .expect("replay sampler requires a walk history");
                draw_replay(history, alpha, rng)
            }
        };
        self.apply(dir);
        dir
    }
}

/// Inverse-CDF draw from [`step_probabilities`], scaled by `4k`: the
/// cumulative threshold after direction `d` is `(d+1)·k·(1-α) + 4α·Σ_{i<=d} N_i`.
/// The comparison is branchless since the outcome is unpredictable.
#[inline]
pub fn draw_counting(counts: &DirectionCounts, alpha: Alpha, rng: &mut WalkRng) -> Direction {
    let k = counts.steps();
    if k == 0 {
        return Direction::from_code((rng.next_u64() >> 62) as u8);
    }
    let kf = k as f64;
    let a = alpha.value();
    let base = kf * (1.0 - a);
    let s = 4.0 * a;
    let [n0, n1, n2, _] = counts.raw_counts();
    let t = uniform01(rng) * 4.0 * kf;
    let c0 = base + s * n0 as f64;
    let c1 = 2.0 * base + s * (n0 + n1) as f64;
    let c2 = 3.0 * base + s * (n0 + n1 + n2) as f64;
    let code = (t >= c0) as u8 + (t >= c1) as u8 + (t >= c2) as u8;
    Direction::from_code(code)
}

#[inline]
pub fn draw_replay(history: &[Direction], alpha: Alpha, rng: &mut WalkRng) -> Direction {
    if history.is_empty() {
        return Direction::from_code(below(rng, 4) as u8);
    }
    let past = history[below(rng, history.len() as u64) as usize];
    if uniform01(rng) < alpha.replay_probability() {
        past
    } else {
        // one of the other three, uniformly
        Direction::from_code(past.code() + 1 + below(rng, 3) as u8)
    }
}

/// Streaming walker: a state, its parameters and its private RNG.
#[derive(Debug, Clone)]
pub struct Walker {
    state: WalkState,
    alpha: Alpha,
    sampler: Sampler,
    rng: WalkRng,
}

impl Walker {
    pub fn new(params: &WalkParams) -> Self {
        let state = match params.sampler {
            Sampler::Counting => WalkState::new(),
            Sampler::Replay => WalkState::with_history(),
        };
        Walker {
            state,
            alpha: params.alpha,
            sampler: params.sampler,
            rng: params.rng(),
        }
    }

    /// Counting-sampler walker on an explicit generator.
    pub fn with_rng(alpha: Alpha, rng: WalkRng) -> Self {
        Walker {
            state: WalkState::new(),
            alpha,
            sampler: Sampler::Counting,
            rng,
        }
    }

    #[inline]
    pub fn step(&mut self) -> Direction {
        self.state.advance(self.alpha, self.sampler, &mut self.rng)
    }

    pub fn run(&mut self, steps: u64) {
        self.run_while(steps, |_| true);
    }

    /// Take up to `steps` steps, calling `visit` with the new position after
    /// each one and stopping early when it returns `false`. Returns the
    /// number of steps taken.
    ///
    /// The counting sampler runs with the counts held in registers; the
    /// draws are bit-identical to [`draw_counting`].
    #[inline]
    pub fn run_while<F: FnMut(LatticePoint) -> bool>(&mut self, steps: u64, mut visit: F) -> u64 {
        if self.sampler == Sampler::Replay || self.state.history.is_some() {
            for t in 0..steps {
                self.step();
                if !visit(self.state.position) {
                    return t + 1;
                }
            }
            return steps;
        }
        let mut taken = 0;
        if steps > 0 && self.state.counts.steps() == 0 {
            self.step();
            taken = 1;
            if !visit(self.state.position) {
                return 1;
            }
        }
        let a = self.alpha.value();
        let (one_minus_a, s) = (1.0 - a, 4.0 * a);
        let raw = self.state.counts.raw_counts();
        // cumulative counts N_0, N_0+N_1, N_0+N_1+N_2 as exact floats
        let mut m0 = raw[0] as f64;
        let mut m1 = (raw[0] + raw[1]) as f64;
        let mut m2 = (raw[0] + raw[1] + raw[2]) as f64;
        let mut kf = self.state.counts.steps() as f64;
        let LatticePoint { mut x, mut y } = self.state.position;
        let rng = &mut self.rng;
        while taken < steps {
            let base = kf * one_minus_a;
            let t = uniform01(rng) * 4.0 * kf;
            let b0 = t >= base + s * m0;
            let b1 = t >= 2.0 * base + s * m1;
            let b2 = t >= 3.0 * base + s * m2;
            // b2 implies b1 implies b0
            m0 += if b0 { 0.0 } else { 1.0 };
            m1 += if b1 { 0.0 } else { 1.0 };
            m2 += if b2 { 0.0 } else { 1.0 };
            x += (!b0) as i64 - (b1 & !b2) as i64;
            y += (b0 & !b1) as i64 - b2 as i64;
            kf += 1.0;
            taken += 1;
            if !visit(LatticePoint::new(x, y)) {
                break;
            }
        }
        let (n0, n1, n2) = (m0 as u64, m1 as u64, m2 as u64);
        self.state.counts = DirectionCounts::from_raw([n0, n1 - n0, n2 - n1, kf as u64 - n2]);
        self.state.position = LatticePoint::new(x, y);
        taken
    }

    pub fn state(&self) -> &WalkState {
        &self.state
    }

    pub fn position(&self) -> LatticePoint {
        self.state.position
    }

    pub fn counts(&self) -> &DirectionCounts {
        &self.state.counts
    }

    pub fn rng_mut(&mut self) -> &mut WalkRng {
        &mut self.rng
    }
}

/// A finite step sequence from an origin; positions and counts are
/// reconstructed on demand.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Trajectory {
    pub origin: LatticePoint,
    pub steps: Vec<Direction>,
}

impl Trajectory {
    pub fn new(steps: Vec<Direction>) -> Self {
        Trajectory {
            origin: LatticePoint::ORIGIN,
            steps,
        }
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    /// `X_0, X_1, ..., X_len`.
    pub fn positions(&self) -> impl Iterator<Item = LatticePoint> + '_ {
        std::iter::once(self.origin).chain(self.steps.iter().scan(self.origin, |p, &d| {
            *p = p.step(d);
            Some(*p)
        }))
    }

    pub fn position_at(&self, k: usize) -> Option<LatticePoint> {
        (k <= self.len()).then(|| self.steps[..k].iter().fold(self.origin, |p, &d| p.step(d)))
    }

    pub fn end(&self) -> LatticePoint {
        self.position_at(self.len()).unwrap_or(self.origin)
    }

    pub fn counts_at(&self, k: usize) -> Option<DirectionCounts> {
        (k <= self.len()).then(|| counts_of(&self.steps[..k]))
    }

    /// `N_0, N_1, ..., N_len`.
    pub fn counts_iter(&self) -> impl Iterator<Item = DirectionCounts> + '_ {
        std::iter::once(DirectionCounts::new()).chain(self.steps.iter().scan(
            DirectionCounts::new(),
            |c, &d| {
                c.record(d);
                Some(*c)
            },
        ))
    }

    /// The shifted process `X^(θ)_k = X_{θ+k} - X_θ`.
    pub fn shift_window(&self, theta: usize) -> Result<Trajectory> {
        if theta > self.len() {
            return Err(out_of_range(
                "shift theta",
                theta,
                format!("0..={}", self.len()),
            ));
        }
        Ok(Trajectory::new(self.steps[theta..].to_vec()))
    }

    /// `X^(start)_{[0, len]}` as a trajectory from the origin.
    pub fn segment(&self, start: usize, len: usize) -> Result<Trajectory> {
        if start + len > self.len() {
            return Err(out_of_range(
                "segment end",
                start + len,
                format!("<= {}", self.len()),
            ));
        }
        Ok(Trajectory::new(self.steps[start..start + len].to_vec()))
    }
}

pub fn counts_of(steps: &[Direction]) -> DirectionCounts {
    let mut c = DirectionCounts::new();
    for &d in steps {
        c.record(d);
    }
    c
}

/// Simulate `n_steps` steps from the origin and keep every step.
pub fn run_walk(params: &WalkParams, n_steps: u64) -> Result<Trajectory> {
    if n_steps as u128 > params.history_cap as u128 {
        return Err(Error::ResourceLimit(format!(
            "{} steps requested, history cap is {}",
            n_steps, params.history_cap
        )));
    }
    let mut walker = Walker::new(params);
    let mut steps = Vec::with_capacity(n_steps as usize);
    for _ in 0..n_steps {
        steps.push(walker.step());
    }
    Ok(Trajectory::new(steps))
}

/// State of one walker at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct CheckpointRecord {
    pub walker: u64,
    pub position: LatticePoint,
    pub counts: DirectionCounts,
}

/// Run walkers `0..walkers` of `params` (its `walker_id` is ignored) and
/// record each at the given increasing checkpoints. Output is indexed
/// `[walker][checkpoint]`.
pub fn simulate_checkpoints(
    params: &WalkParams,
    walkers: u64,
    checkpoints: &[u64],
) -> Result<Vec<Vec<CheckpointRecord>>> {
    if checkpoints.windows(2).any(|w| w[0] >= w[1]) {
        return Err(out_of_range(
            "checkpoints",
            format!("{checkpoints:?}"),
            "strictly increasing",
        ));
    }
    let last = checkpoints.last().copied().unwrap_or(0);
    if params.sampler == Sampler::Replay && last as u128 > params.history_cap as u128 {
        return Err(Error::ResourceLimit(format!(
            "replay sampler needs {last} steps of history, cap is {}",
            params.history_cap
        )));
    }
    Ok((0..walkers)
        .into_par_iter()
        .map(|w| {
            let mut walker = Walker::new(&params.with_walker(w));
            let mut done = 0;
            checkpoints
                .iter()
                .map(|&k| {
                    walker.run(k - done);
                    done = k;
                    CheckpointRecord {
                        walker: w,
                        position: walker.position(),
                        counts: *walker.counts(),
                    }
                })
                .collect()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn checkpoints_match_full_runs() {
        let params = WalkParams::new(Alpha::new(0.6).unwrap(), 8);
        for sampler in [Sampler::Counting, Sampler::Replay] {
            let p = params.with_sampler(sampler);
            let recs = simulate_checkpoints(&p, 5, &[0, 3, 50, 200]).unwrap();
            for (w, row) in recs.iter().enumerate() {
                let traj = run_walk(&p.with_walker(w as u64), 200).unwrap();
                for r in row {
                    let k = r.counts.steps() as usize;
                    assert_eq!(Some(r.position), traj.position_at(k));
                    assert_eq!(Some(r.counts), traj.counts_at(k));
                    assert_eq!(r.counts.centered_sum_x4(), 0);
                }
            }
        }
        assert!(simulate_checkpoints(&params, 1, &[5, 5]).is_err());
        let mut capped = params.with_sampler(Sampler::Replay);
        capped.history_cap = 10;
        assert!(matches!(
            simulate_checkpoints(&capped, 1, &[11]),
            Err(Error::ResourceLimit(_))
        ));
    }

    fn alpha(a: f64) -> Alpha {
        Alpha::new(a).unwrap()
    }

    #[test]
    fn direction_negation_and_codes() {
        use Direction::*;
        assert_eq!(East.opposite(), West);
        assert_eq!(North.opposite(), South);
        for d in Direction::ALL {
            assert_eq!(d.opposite().opposite(), d);
            assert_eq!(d.vector() + d.opposite().vector(), LatticePoint::ORIGIN);
            assert_eq!(Direction::from_index(d.index()).unwrap(), d);
        }
        assert!(Direction::from_index(0).is_err());
        assert!(Direction::from_index(5).is_err());
        assert_eq!(
            Direction::from_index(2).unwrap().vector(),
            LatticePoint::new(0, 1)
        );
    }

    #[test]
    fn step_law_at_time_zero_is_uniform() {
        for a in [-0.3, 0.0, 0.5, 0.99] {
            assert_eq!(
                step_probabilities(&DirectionCounts::new(), alpha(a)),
                [0.25; 4]
            );
        }
    }

    #[test]
    fn step_law_after_one_east_step() {
        let c = DirectionCounts::from_raw([1, 0, 0, 0]);
        assert_eq!(step_probabilities(&c, alpha(0.0)), [0.25; 4]);
        let q = step_probabilities(&c, alpha(0.25));
        assert_eq!(q, [0.4375, 0.1875, 0.1875, 0.1875]);
    }

    #[test]
    fn alpha_range_is_open() {
        assert!(Alpha::new(-1.0 / 3.0).is_err());
        assert!(Alpha::new(1.0).is_err());
        assert!(Alpha::new(f64::NAN).is_err());
        assert!(Alpha::new(-0.33).is_ok());
        assert!(Alpha::new(0.999).is_ok());
    }

    #[test]
    fn memory_param_conversion() {
        assert_eq!(memory_param_to_alpha(1.0).unwrap(), 1.0);
        assert_eq!(memory_param_to_alpha(0.25).unwrap(), 0.0);
        assert_eq!(memory_param_to_alpha(0.0).unwrap(), -1.0 / 3.0);
        assert!(memory_param_to_alpha(-0.01).is_err());
        assert!(memory_param_to_alpha(1.01).is_err());
        let a = alpha(0.4);
        assert!((memory_param_to_alpha(a.replay_probability()).unwrap() - 0.4).abs() < 1e-15);
    }

    #[test]
    fn shift_window_cases() {
        use Direction::*;
        let t = Trajectory::new(vec![East, North]);
        assert_eq!(t.shift_window(0).unwrap(), t);
        let s = t.shift_window(1).unwrap();
        assert_eq!(s.steps, vec![North]);
        assert_eq!(s.origin, LatticePoint::ORIGIN);
        assert!(t.shift_window(2).unwrap().is_empty());
        assert!(t.shift_window(3).is_err());
    }

    #[test]
    fn trajectory_reconstruction() {
        use Direction::*;
        let t = Trajectory::new(vec![East, East, North, West, South]);
        let pos: Vec<_> = t.positions().collect();
        assert_eq!(pos.len(), 6);
        assert_eq!(pos[2], LatticePoint::new(2, 0));
        assert_eq!(t.end(), LatticePoint::new(1, 0));
        assert_eq!(t.position_at(3), Some(LatticePoint::new(2, 1)));
        assert_eq!(t.counts_at(5).unwrap().raw_counts(), [2, 1, 1, 1]);
        assert_eq!(t.counts_iter().last().unwrap(), t.counts_at(5).unwrap());
        assert!(t.position_at(6).is_none());
        assert_eq!(t.segment(1, 2).unwrap().steps, vec![East, North]);
        assert!(t.segment(4, 2).is_err());
    }

    #[test]
    fn run_walk_is_deterministic_and_capped() {
        let p = WalkParams::new(alpha(0.3), 42).with_walker(5);
        assert_eq!(run_walk(&p, 500).unwrap(), run_walk(&p, 500).unwrap());
        let other = p.with_walker(6);
        assert_ne!(run_walk(&p, 500).unwrap(), run_walk(&other, 500).unwrap());
        let mut capped = p;
        capped.history_cap = 10;
        assert!(matches!(
            run_walk(&capped, 11),
            Err(Error::ResourceLimit(_))
        ));
        assert_eq!(run_walk(&capped, 10).unwrap().len(), 10);
    }

    #[test]
    fn replay_sampler_keeps_state_consistent() {
        let p = WalkParams::new(alpha(0.5), 3).with_sampler(Sampler::Replay);
        let mut w = Walker::new(&p);
        w.run(300);
        let s = w.state();
        let h = s.history.as_ref().unwrap();
        assert_eq!(h.len() as u64, s.counts.steps());
        assert_eq!(counts_of(h), s.counts);
        assert_eq!(Trajectory::new(h.clone()).end(), s.position);
    }

    #[test]
    #[should_panic(expected = "history")]
    fn replay_without_history_panics() {
        let mut s = WalkState::new();
        s.advance(alpha(0.2), Sampler::Replay, &mut substream(0, 0));
    }

    #[test]
    fn srw_single_step_frequencies_are_uniform() {
        // alpha = 0: each step is uniform whatever the history
        let mut counts = [0u64; 4];
        let mut w = Walker::new(&WalkParams::new(Alpha::SRW, 11));
        for _ in 0..40_000 {
            counts[w.step().code() as usize] += 1;
        }
        let t = crate::stats::chi_square(&counts, &[0.25; 4], 5.0);
        assert!(t.p_value > 0.001, "{t:?}");
    }

    proptest! {
        #[test]
        fn centered_counts_sum_to_zero(raw in prop::array::uniform4(0u64..1_000_000)) {
            let c = DirectionCounts::from_raw(raw);
            prop_assert_eq!(c.centered_sum_x4(), 0);
        }

        #[test]
        fn step_law_is_a_probability_vector(
            raw in prop::array::uniform4(0u64..10_000),
            a in -0.3333f64..0.9999,
        ) {
            let q = step_probabilities(&DirectionCounts::from_raw(raw), alpha(a));
            let s: f64 = q.iter().sum();
            prop_assert!((s - 1.0).abs() <= 4.0 * f64::EPSILON);
            for qi in q {
                prop_assert!((0.0..=1.0).contains(&qi), "{:?}", q);
            }
        }

        #[test]
        fn position_tracks_counts(seed in any::<u64>(), a in -0.3f64..0.95, n in 0u64..400) {
            let mut w = Walker::new(&WalkParams::new(alpha(a), seed));
            w.run(n);
            prop_assert_eq!(w.counts().position(), w.position());
            prop_assert_eq!(w.counts().steps(), n);
            prop_assert_eq!(w.counts().centered_sum_x4(), 0);
        }

        #[test]
        fn fast_path_matches_single_steps(
            seed in any::<u64>(),
            a in -0.3333f64..0.9999,
            n in 0u64..600,
            pre in 0u64..3,
        ) {
            let alpha = alpha(a);
            let mut fast = Walker::with_rng(alpha, substream(seed, 0));
            let mut slow = fast.clone();
            fast.run(pre);
            let mut seen = Vec::new();
            fast.run_while(n, |p| { seen.push(p); true });
            let mut expect = Vec::new();
            for _ in 0..pre + n {
                let s = slow.state.clone();
                let mut st = s;
                let d = draw_counting(&st.counts, alpha, &mut slow.rng);
                st.apply(d);
                slow.state = st;
                expect.push(slow.position());
            }
            prop_assert_eq!(&seen[..], &expect[pre as usize..]);
            prop_assert_eq!(fast.counts(), slow.counts());
        }

        #[test]
        fn run_while_stops_on_request(seed in any::<u64>(), stop in 1u64..50) {
            let mut w = Walker::with_rng(alpha(0.4), substream(seed, 1));
            let mut calls = 0;
            let taken = w.run_while(100, |_| { calls += 1; calls < stop });
            prop_assert_eq!(taken, stop);
            prop_assert_eq!(w.counts().steps(), stop);
            prop_assert_eq!(w.counts().position(), w.position());
        }
    }
}
