//! The three-state Waiting/Beeping/Frozen chain followed by a single leader
//! that never hears anything, and the statistics of its beep count.
//!
//! Transition matrix (rows W, B, F):
//!
//! ```text
//!     W    B    F
//! W [ 1-p  p    0 ]
//! B [ 0    0    1 ]
//! F [ 1    0    0 ]
//! ```
//!
//! Time starts at 1: `X_1` is the start state and `N_t(x)` counts the visits
//! to `x` among `X_1..=X_t`.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::engine::{derive_seed, rng_from_seed, SimRng};

/// Smallest trial count accepted by [`anticoncentration_sup`]. At this size
/// the standard error of any window mass is at most `0.016`.
pub const MIN_ANTICONC_TRIALS: usize = 1000;

/// Largest `n` or `k` accepted by [`geom_binom_identity`].
pub const IDENTITY_LIMIT: u64 = 2000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarkovError {
    #[error("chain probability {0} must lie in (0, 1)")]
    InvalidP(f64),
    #[error("{trials} trials are too few for a window-mass estimate (need at least {min})")]
    TooFewTrials { trials: usize, min: usize },
    #[error("invalid argument: {0}")]
    BadArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum ChainState {
    W = 0,
    B = 1,
    F = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainStart {
    State(ChainState),
    /// `X_1` drawn from the stationary distribution.
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainSpec {
    p: f64,
    start: ChainStart,
}

impl ChainSpec {
    /// Chain started in `W`.
    pub fn new(p: f64) -> Result<Self, MarkovError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(MarkovError::InvalidP(p));
        }
        Ok(ChainSpec {
            p,
            start: ChainStart::State(ChainState::W),
        })
    }

    pub fn with_start(mut self, start: ChainStart) -> Self {
        self.start = start;
        self
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn start(&self) -> ChainStart {
        self.start
    }

    pub fn transition_matrix(&self) -> [[f64; 3]; 3] {
        let p = self.p;
        [[1.0 - p, p, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]
    }

    fn initial<R: Rng + ?Sized>(&self, rng: &mut R) -> ChainState {
        match self.start {
            ChainStart::State(s) => s,
            ChainStart::Stationary => {
                let pi = stationary_pi(self.p);
                let draw: f64 = rng.gen();
                if draw < pi[0] {
                    ChainState::W
                } else if draw < pi[0] + pi[1] {
                    ChainState::B
                } else {
                    ChainState::F
                }
            }
        }
    }

    /// One transition; a uniform draw is consumed only from `W`.
    #[inline]
    fn next<R: Rng + ?Sized>(&self, s: ChainState, rng: &mut R) -> ChainState {
        match s {
            ChainState::W => {
                if rng.gen::<f64>() < self.p {
                    ChainState::B
                } else {
                    ChainState::W
                }
            }
            ChainState::B => ChainState::F,
            ChainState::F => ChainState::W,
        }
    }
}

fn stationary_pi(p: f64) -> [f64; 3] {
    let z = 2.0 * p + 1.0;
    [1.0 / z, p / z, p / z]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stationary {
    /// `(pi_W, pi_B, pi_F)`.
    pub pi: [f64; 3],
    /// `max |(pi P)_j - pi_j|`.
    pub residual: f64,
}

/// Closed-form stationary law, checked against `pi P = pi`.
pub fn stationary(spec: &ChainSpec) -> Stationary {
    let pi = stationary_pi(spec.p);
    let m = spec.transition_matrix();
    let residual = (0..3)
        .map(|j| ((0..3).map(|i| pi[i] * m[i][j]).sum::<f64>() - pi[j]).abs())
        .fold(0.0, f64::max);
    assert!(residual <= 1e-12, "pi P != pi (residual {residual})");
    Stationary { pi, residual }
}

/// Visit counts of every trial plus their per-state mean and variance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChainStats {
    pub p: f64,
    pub t: u64,
    pub trials: usize,
    /// `[N_t(W), N_t(B), N_t(F)]` per trial, in trial order.
    #[serde(skip)]
    pub visits: Vec<[u32; 3]>,
    pub mean: [f64; 3],
    /// Unbiased sample variance (0 for a single trial).
    pub var: [f64; 3],
}

impl ChainStats {
    /// `hist[m]` = number of trials with `N_t(state) = m`, for `m` in `0..=t`.
    pub fn histogram(&self, state: ChainState) -> Vec<u64> {
        let mut hist = vec![0u64; self.t as usize + 1];
        for v in &self.visits {
            hist[v[state as usize] as usize] += 1;
        }
        hist
    }

    /// Visit fractions `mean / t`.
    pub fn fractions(&self) -> [f64; 3] {
        self.mean.map(|m| m / self.t as f64)
    }

    /// Standard error of each mean.
    pub fn std_error(&self) -> [f64; 3] {
        self.var.map(|v| (v / self.trials as f64).sqrt())
    }
}

fn run_visits(spec: &ChainSpec, t: u64, rng: &mut SimRng) -> [u32; 3] {
    let mut counts = [0u32; 3];
    let mut s = spec.initial(rng);
    counts[s as usize] += 1;
    for _ in 1..t {
        s = spec.next(s, rng);
        counts[s as usize] += 1;
    }
    counts
}

/// Simulates `trials` independent chains for `t` steps each. Trial `i` uses
/// the seed derived from `(seed, i)`, so the result does not depend on the
/// thread count.
pub fn simulate_chain(spec: &ChainSpec, t: u64, seed: u64, trials: usize) -> Result<ChainStats, MarkovError> {
    if t == 0 || trials == 0 {
        return Err(MarkovError::BadArgument("t and trials must be at least 1".into()));
    }
    if t > u32::MAX as u64 {
        return Err(MarkovError::BadArgument("t exceeds 2^32 - 1".into()));
    }
    let visits: Vec<[u32; 3]> = (0..trials)
        .into_par_iter()
        .map(|i| run_visits(spec, t, &mut rng_from_seed(derive_seed(seed, i as u64))))
        .collect();
    let mut mean = [0.0; 3];
    let mut var = [0.0; 3];
    for x in 0..3 {
        let values: Vec<f64> = visits.iter().map(|v| v[x] as f64).collect();
        mean[x] = neumaier_sum(values.iter().copied()) / trials as f64;
        if trials > 1 {
            var[x] = neumaier_sum(values.iter().map(|v| (v - mean[x]).powi(2))) / (trials - 1) as f64;
        }
    }
    Ok(ChainStats {
        p: spec.p,
        t,
        trials,
        visits,
        mean,
        var,
    })
}

/// Compensated summation in iteration order.
pub(crate) fn neumaier_sum(values: impl Iterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AntiConcentration {
    /// `max_m P(|N_t(B) - m| <= width)`, estimated from the histogram.
    pub estimate: f64,
    /// A window center attaining the maximum.
    pub center: u64,
    pub width: u64,
    pub trials: usize,
}

/// Largest empirical mass of any window `[m - width, m + width]` of beep
/// counts after `t` steps.
pub fn anticoncentration_sup(
    spec: &ChainSpec,
    t: u64,
    seed: u64,
    trials: usize,
    width: u64,
) -> Result<AntiConcentration, MarkovError> {
    if trials < MIN_ANTICONC_TRIALS {
        return Err(MarkovError::TooFewTrials {
            trials,
            min: MIN_ANTICONC_TRIALS,
        });
    }
    let stats = simulate_chain(spec, t, seed, trials)?;
    let (estimate, center) = max_window_mass(&stats.histogram(ChainState::B), width, trials);
    Ok(AntiConcentration {
        estimate,
        center,
        width,
        trials,
    })
}

/// Returns `(mass, center)` of the heaviest window of radius `width` over a
/// histogram indexed by value.
pub fn max_window_mass(hist: &[u64], width: u64, total: usize) -> (f64, u64) {
    let len = hist.len();
    let mut prefix = vec![0u64; len + 1];
    for (i, &h) in hist.iter().enumerate() {
        prefix[i + 1] = prefix[i] + h;
    }
    let w = width.min(len as u64) as usize;
    let mut best = (0u64, 0u64);
    for m in 0..len {
        let lo = m.saturating_sub(w);
        let hi = (m + w).min(len - 1);
        let mass = prefix[hi + 1] - prefix[lo];
        if mass > best.0 {
            best = (mass, m as u64);
        }
    }
    (best.0 as f64 / total as f64, best.1)
}

/// Per trial: the first `t` at which the beep counts of two independent
/// chains differ by more than `d`, or `None` if that has not happened by
/// `cap`.
pub fn sigma_hitting(spec: &ChainSpec, d: u64, seed: u64, trials: usize, cap: u64) -> Result<Vec<Option<u64>>, MarkovError> {
    if cap == 0 || trials == 0 {
        return Err(MarkovError::BadArgument("cap and trials must be at least 1".into()));
    }
    Ok((0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed(seed, i as u64));
            let mut a = spec.initial(&mut rng);
            let mut b = spec.initial(&mut rng);
            let mut gap: i64 = (a == ChainState::B) as i64 - (b == ChainState::B) as i64;
            let mut t = 1;
            loop {
                if gap.unsigned_abs() > d {
                    return Some(t);
                }
                if t >= cap {
                    return None;
                }
                a = spec.next(a, &mut rng);
                b = spec.next(b, &mut rng);
                gap += (a == ChainState::B) as i64 - (b == ChainState::B) as i64;
                t += 1;
            }
        })
        .collect())
}

/// First-return times to `B` for chains started in `B`.
pub fn return_times(spec: &ChainSpec, seed: u64, trials: usize) -> Vec<u64> {
    (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from_seed(derive_seed(seed, i as u64));
            let mut s = ChainState::B;
            let mut steps = 0;
            loop {
                s = spec.next(s, &mut rng);
                steps += 1;
                if s == ChainState::B {
                    return steps;
                }
            }
        })
        .collect()
}

/// Both sides of the geometric-sum / binomial-tail identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub n: u64,
    pub k: u64,
    pub p: f64,
    /// `P(W_1 + ... + W_n >= k)` with `W_i ~ Geom(p)` on `{1, 2, ...}`,
    /// by dynamic programming over the sum's mass function.
    pub lhs: f64,
    /// `P(Bin(k - 1, p) <= n - 1)`.
    pub rhs: f64,
    /// `|lhs - rhs| <= 1e-10`.
    pub equal: bool,
    /// `P(Bin(k, p) <= n)`, the unshifted form.
    pub unshifted_rhs: f64,
    pub unshifted_equal: bool,
}

pub const IDENTITY_TOLERANCE: f64 = 1e-10;

pub fn geom_binom_identity(n: u64, k: u64, p: f64) -> Result<IdentityCheck, MarkovError> {
    if n == 0 || k == 0 {
        return Err(MarkovError::BadArgument("n and k must be at least 1".into()));
    }
    if n > IDENTITY_LIMIT || k > IDENTITY_LIMIT {
        return Err(MarkovError::BadArgument(format!("n and k are limited to {IDENTITY_LIMIT}")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(MarkovError::InvalidP(p));
    }
    let lhs = geometric_sum_tail(n as usize, k as usize, p);
    let rhs = binomial_cdf(k - 1, n - 1, p);
    let unshifted_rhs = binomial_cdf(k, n, p);
    Ok(IdentityCheck {
        n,
        k,
        p,
        lhs,
        rhs,
        equal: (lhs - rhs).abs() <= IDENTITY_TOLERANCE,
        unshifted_rhs,
        unshifted_equal: (lhs - unshifted_rhs).abs() <= IDENTITY_TOLERANCE,
    })
}

/// `P(S_n >= k)` for a sum of `n` geometric variables on `{1, 2, ...}`.
fn geometric_sum_tail(n: usize, k: usize, p: f64) -> f64 {
    // mass[s] = P(S_i = s) for s < k; only the part below k matters.
    let q = 1.0 - p;
    let geom: Vec<f64> = (0..k).map(|j| if j == 0 { 0.0 } else { p * q.powi(j as i32 - 1) }).collect();
    let mut mass = vec![0.0; k];
    mass[0] = 1.0;
    for _ in 0..n {
        let mut next = vec![0.0; k];
        for (s, slot) in next.iter_mut().enumerate() {
            *slot = neumaier_sum((1..=s).map(|j| mass[s - j] * geom[j]));
        }
        mass = next;
    }
    1.0 - neumaier_sum(mass.into_iter())
}

/// `P(Bin(trials, p) <= at_most)`, summing mass terms computed in log space.
fn binomial_cdf(trials: u64, at_most: u64, p: f64) -> f64 {
    let (lp, lq) = (p.ln(), (1.0 - p).ln());
    let mut log_choose = 0.0;
    let mut terms = Vec::new();
    for j in 0..=at_most.min(trials) {
        if j > 0 {
            log_choose += ((trials - j + 1) as f64).ln() - (j as f64).ln();
        }
        terms.push((log_choose + j as f64 * lp + (trials - j) as f64 * lq).exp());
    }
    neumaier_sum(terms.into_iter()).min(1.0)
}
