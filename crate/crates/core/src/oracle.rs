//! Exhaustive path enumeration for short walks.
//!
//! Paths of length `m` are coded as base-4 integers, first step most
//! significant, so a law over all `4^m` paths is a dense vector.

use crate::contiguity::log_rnd;
use crate::error::{Error, Result};
use crate::walk::{step_probabilities, Alpha, Direction, DirectionCounts, LatticePoint};

pub const MAX_PATH_LEN: usize = 10;

fn check_len(m: usize) -> Result<()> {
    if m > MAX_PATH_LEN {
        return Err(Error::ResourceLimit(format!(
            "path length {m} exceeds enumeration cap {MAX_PATH_LEN}"
        )));
    }
    Ok(())
}

pub fn encode_path(steps: &[Direction]) -> usize {
    steps
        .iter()
        .fold(0usize, |acc, d| acc * 4 + d.code() as usize)
}

pub fn decode_path(code: usize, m: usize) -> Vec<Direction> {
    (0..m)
        .rev()
        .map(|t| Direction::from_code(((code >> (2 * t)) & 3) as u8))
        .collect()
}

/// Exact probability of every path of length `m`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathLaw {
    pub m: usize,
    pub probabilities: Vec<f64>,
}

impl PathLaw {
    pub fn probability(&self, steps: &[Direction]) -> f64 {
        assert_eq!(steps.len(), self.m);
        self.probabilities[encode_path(steps)]
    }

    pub fn total(&self) -> f64 {
        self.probabilities.iter().sum()
    }

    /// Mass of the paths satisfying `event`.
    pub fn mass<F: Fn(&[Direction]) -> bool>(&self, event: F) -> f64 {
        let mut buf = Vec::with_capacity(self.m);
        self.probabilities
            .iter()
            .enumerate()
            .filter(|&(code, _)| {
                buf.clear();
                buf.extend(decode_path(code, self.m));
                event(&buf)
            })
            .map(|(_, p)| p)
            .sum()
    }

    pub fn max_abs_diff(&self, other: &PathLaw) -> f64 {
        assert_eq!(self.m, other.m);
        self.probabilities
            .iter()
            .zip(&other.probabilities)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Vec<Direction>, f64)> + '_ {
        self.probabilities
            .iter()
            .enumerate()
            .map(move |(code, &p)| (decode_path(code, self.m), p))
    }
}

/// Depth-first enumeration; `next_law(prefix)` gives the conditional law of
/// the next step.
fn enumerate<F>(m: usize, next_law: F) -> PathLaw
where
    F: Fn(&[Direction]) -> [f64; 4],
{
    fn go<F: Fn(&[Direction]) -> [f64; 4]>(
        m: usize,
        prefix: &mut Vec<Direction>,
        code: usize,
        prob: f64,
        next_law: &F,
        out: &mut [f64],
    ) {
        if prefix.len() == m {
            out[code] = prob;
            return;
        }
        let q = next_law(prefix);
        for d in Direction::ALL {
            prefix.push(d);
            go(
                m,
                prefix,
                code * 4 + d.code() as usize,
                prob * q[d.code() as usize],
                next_law,
                out,
            );
            prefix.pop();
        }
    }
    let mut probabilities = vec![0.0; 1 << (2 * m)];
    go(
        m,
        &mut Vec::with_capacity(m),
        0,
        1.0,
        &next_law,
        &mut probabilities,
    );
    PathLaw { m, probabilities }
}

/// Path law of the count-driven step rule.
pub fn exact_erw_law(alpha: Alpha, m: usize) -> Result<PathLaw> {
    check_len(m)?;
    Ok(enumerate(m, |prefix| {
        let mut c = DirectionCounts::new();
        for &d in prefix {
            c.record(d);
        }
        step_probabilities(&c, alpha)
    }))
}

/// Path law of the replay construction: choose a past step uniformly,
/// repeat it with probability `p`, otherwise move in one of the three other
/// directions uniformly. Computed by summing over the chosen past index.
pub fn exact_replay_law(alpha: Alpha, m: usize) -> Result<PathLaw> {
    check_len(m)?;
    let p = alpha.replay_probability();
    Ok(enumerate(m, |prefix| {
        if prefix.is_empty() {
            return [0.25; 4];
        }
        let pick = 1.0 / prefix.len() as f64;
        let mut q = [0.0; 4];
        for &past in prefix {
            for d in Direction::ALL {
                q[d.code() as usize] += pick * if d == past { p } else { (1.0 - p) / 3.0 };
            }
        }
        q
    }))
}

/// Both sides of the change-of-measure identity over an event:
/// `lhs = Σ_{paths ∈ event} RND(path)·4^{-m}` and `rhs = P_ERW(event)`.
pub fn exact_rnd_identity<F>(alpha: Alpha, m: usize, event: F) -> Result<(f64, f64)>
where
    F: Fn(&[Direction]) -> bool,
{
    let law = exact_erw_law(alpha, m)?;
    let uniform = 0.25f64.powi(m as i32);
    let start = DirectionCounts::new();
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for (path, p) in law.iter() {
        if event(&path) {
            lhs += log_rnd(&start, &path, alpha)?.exp() * uniform;
            rhs += p;
        }
    }
    Ok((lhs, rhs))
}

/// `P_ERW(∃ 1 <= k <= m : X_k = 0)`.
pub fn exact_return_probability(alpha: Alpha, m: usize) -> Result<f64> {
    let law = exact_erw_law(alpha, m)?;
    Ok(law.mass(|path| {
        let mut pos = LatticePoint::ORIGIN;
        path.iter().any(|&d| {
            pos = pos.step(d);
            pos.is_origin()
        })
    }))
}
