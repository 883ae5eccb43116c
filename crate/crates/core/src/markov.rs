//! The truncated drifted walk M_K on `{0, …, K}`.
//!
//! From state `i` the chain moves up with probability α and down with
//! probability 1−α; at 0 a down move stays put, and at K an up move stays put.
//! With β = α/(1−α) its stationary law is `π(i) = (1−β)β^i / (1−β^(K+1))`.
//!
//! Closed forms are generic over [`Scalar`] so they can be evaluated exactly
//! with [`crate::scalar::Rational`]; the spectral computation needs
//! [`RealScalar`]; simulation runs in `f64`.

use rand::Rng;
use rayon::prelude::*;

use crate::analysis::stats::{wilson_interval, Z95};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::{powi, RealScalar, Scalar};

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ChainSpec<T> {
    /// Largest state.
    pub k: usize,
    /// Up-move probability.
    pub alpha: T,
}

impl<T: Scalar> ChainSpec<T> {
    pub fn new(k: usize, alpha: T) -> Result<ChainSpec<T>> {
        let half = T::one() / (T::one() + T::one());
        if k < 1 {
            return Err(Error::InvalidConfig("K must be at least 1".into()));
        }
        if !(alpha > T::zero() && alpha < half) {
            return Err(Error::InvalidConfig(format!(
                "α = {alpha:?} not in (0, 1/2)"
            )));
        }
        Ok(ChainSpec { k, alpha })
    }

    pub fn beta(&self) -> T {
        self.alpha.clone() / (T::one() - self.alpha.clone())
    }

    /// `(P(i,i−1), P(i,i), P(i,i+1))`.
    pub fn transition(&self, i: usize) -> (T, T, T) {
        let a = self.alpha.clone();
        let b = T::one() - a.clone();
        match i {
            0 => (T::zero(), b, a),
            i if i == self.k => (b, a, T::zero()),
            _ => (b, T::zero(), a),
        }
    }

    /// The closed-form stationary law.
    pub fn stationary(&self) -> Vec<T> {
        let beta = self.beta();
        let norm = (T::one() - beta.clone()) / (T::one() - powi(&beta, self.k as u32 + 1));
        let mut out = Vec::with_capacity(self.k + 1);
        let mut w = norm;
        for _ in 0..=self.k {
            out.push(w.clone());
            w = w * beta.clone();
        }
        out
    }

    /// `|π(i)·α − π(i+1)·(1−α)|` for `i < K`.
    pub fn detailed_balance_residuals(&self, pi: &[T]) -> Vec<T> {
        let a = self.alpha.clone();
        let b = T::one() - a.clone();
        pi.windows(2)
            .map(|w| {
                let d = w[0].clone() * a.clone() - w[1].clone() * b.clone();
                if d < T::zero() {
                    T::zero() - d
                } else {
                    d
                }
            })
            .collect()
    }

    /// `π(V_φ) = Σ_{i≥φ} π(i)`.
    pub fn stationary_tail(&self, phi: usize) -> T {
        self.stationary()
            .into_iter()
            .skip(phi)
            .fold(T::zero(), |acc, p| acc + p)
    }

    pub fn to_f64(&self) -> ChainSpec<f64> {
        ChainSpec {
            k: self.k,
            alpha: self.alpha.to_f64_lossy(),
        }
    }
}

/// Largest K for which the spectral computation is attempted.
pub const MAX_SPECTRAL_K: usize = 10_000;

impl<T: RealScalar> ChainSpec<T> {
    /// Diagonal and off-diagonal of `D^{1/2} P D^{−1/2}` with `D = diag(π)`.
    /// The chain is reversible, so this matrix is symmetric and has the same
    /// spectrum as `P`.
    pub fn symmetrized(&self) -> (Vec<T>, Vec<T>) {
        let diag = (0..=self.k).map(|i| self.transition(i).1).collect();
        let off = (T::one() - self.alpha) * self.alpha;
        (diag, vec![off.sqrt(); self.k])
    }

    /// The second largest absolute eigenvalue of the transition matrix.
    ///
    /// The top eigenvalue is 1; λ is the larger of the next eigenvalue and
    /// the magnitude of the smallest, each found by Sturm-sequence bisection
    /// on the symmetrized tridiagonal matrix.
    pub fn spectral_expansion(&self) -> Result<T> {
        if self.k > MAX_SPECTRAL_K {
            return Err(Error::InvalidConfig(format!(
                "K = {} exceeds the spectral limit {MAX_SPECTRAL_K}",
                self.k
            )));
        }
        let (diag, off) = self.symmetrized();
        let size = diag.len();
        let second = kth_eigenvalue(&diag, &off, size - 2)?;
        let smallest = kth_eigenvalue(&diag, &off, 0)?;
        Ok(second.abs().max(smallest.abs()))
    }
}

/// Number of eigenvalues of the symmetric tridiagonal matrix below `x`.
fn sturm_count<T: RealScalar>(diag: &[T], off: &[T], x: T) -> usize {
    let tiny = T::min_positive_value().sqrt();
    let mut count = 0;
    let mut q = T::one();
    for (i, &d) in diag.iter().enumerate() {
        let coupling = if i == 0 {
            T::zero()
        } else {
            off[i - 1] * off[i - 1] / q
        };
        q = d - x - coupling;
        if q.abs() < tiny {
            q = -tiny;
        }
        if q < T::zero() {
            count += 1;
        }
    }
    count
}

/// Iteration cap for bisection; far more than any float format needs.
const MAX_BISECTIONS: usize = 400;

/// The `k`-th smallest eigenvalue (0-based).
fn kth_eigenvalue<T: RealScalar>(diag: &[T], off: &[T], k: usize) -> Result<T> {
    // Gershgorin bounds
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for (i, &d) in diag.iter().enumerate() {
        let left = if i > 0 { off[i - 1].abs() } else { T::zero() };
        let right = off.get(i).map_or(T::zero(), |e| e.abs());
        lo = lo.min(d - left - right);
        hi = hi.max(d + left + right);
    }
    let two = T::one() + T::one();
    let tol = T::epsilon() * (lo.abs().max(hi.abs()) + T::one());
    for _ in 0..MAX_BISECTIONS {
        if hi - lo <= tol {
            return Ok((lo + hi) / two);
        }
        let mid = (lo + hi) / two;
        if sturm_count(diag, off, mid) > k {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Err(Error::NoConvergence(MAX_BISECTIONS))
}

/// Steps `1 = T₀ ≤ T₁ ≤ … ≤ T_D` at which the walk is redrawn from π, over
/// a horizon of `T` steps.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct ResetSchedule {
    pub horizon: u64,
    /// `T₁, …, T_D`; step 1 is always a draw from π.
    pub resets: Vec<u64>,
}

impl ResetSchedule {
    pub fn new(horizon: u64, mut resets: Vec<u64>) -> Result<ResetSchedule> {
        resets.sort_unstable();
        if resets.iter().any(|&t| t < 1 || t > horizon) {
            return Err(Error::InvalidConfig(format!(
                "reset outside [1, {horizon}]"
            )));
        }
        Ok(ResetSchedule { horizon, resets })
    }

    /// No resets after the initial draw.
    pub fn none(horizon: u64) -> ResetSchedule {
        ResetSchedule {
            horizon,
            resets: Vec::new(),
        }
    }

    /// `count` resets spread evenly over the horizon.
    pub fn evenly(horizon: u64, count: u64) -> ResetSchedule {
        let resets = (1..=count).map(|j| 1 + j * horizon / (count + 1)).collect();
        ResetSchedule { horizon, resets }
    }

    /// A reset at every step.
    pub fn every_step(horizon: u64) -> ResetSchedule {
        ResetSchedule {
            horizon,
            resets: (2..=horizon).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct WalkResult {
    /// Steps spent in `V_φ = {i ≥ φ}`.
    pub visits: u64,
    pub steps: u64,
    pub final_state: usize,
    /// Per-state visit counts, when requested.
    #[serde(skip)]
    pub occupancy: Option<Vec<u64>>,
}

/// Precomputed sampler for one chain in `f64`.
#[derive(Debug, Clone)]
pub struct Walker {
    k: usize,
    alpha: f64,
    cdf: Vec<f64>,
}

impl Walker {
    pub fn new<T: Scalar>(spec: &ChainSpec<T>) -> Walker {
        let pi = spec.to_f64().stationary();
        let cdf = pi
            .iter()
            .scan(0.0, |acc, p| {
                *acc += p;
                Some(*acc)
            })
            .collect();
        Walker {
            k: spec.k,
            alpha: spec.alpha.to_f64_lossy(),
            cdf,
        }
    }

    pub fn draw_stationary<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cdf.partition_point(|&c| c <= u).min(self.k)
    }

    pub fn step<R: Rng + ?Sized>(&self, state: usize, rng: &mut R) -> usize {
        if rng.random::<f64>() < self.alpha {
            (state + 1).min(self.k)
        } else {
            state.saturating_sub(1)
        }
    }

    /// One walk over the schedule's horizon.
    pub fn walk<R: Rng + ?Sized>(
        &self,
        schedule: &ResetSchedule,
        phi: usize,
        rng: &mut R,
        record_occupancy: bool,
    ) -> WalkResult {
        let mut occupancy = record_occupancy.then(|| vec![0u64; self.k + 1]);
        let mut next_reset = schedule.resets.iter().peekable();
        let mut state = 0;
        let mut visits = 0;
        for t in 1..=schedule.horizon {
            let mut reset = t == 1;
            while next_reset.peek().is_some_and(|&&r| r == t) {
                next_reset.next();
                reset = true;
            }
            state = if reset {
                self.draw_stationary(rng)
            } else {
                self.step(state, rng)
            };
            visits += (state >= phi) as u64;
            if let Some(o) = occupancy.as_mut() {
                o[state] += 1;
            }
        }
        WalkResult {
            visits,
            steps: schedule.horizon,
            final_state: state,
            occupancy,
        }
    }
}

/// A walk on `spec` with resets from π; `X` counts steps in `V_φ`.
pub fn walk_with_resets<T: Scalar, R: Rng + ?Sized>(
    spec: &ChainSpec<T>,
    schedule: &ResetSchedule,
    phi: usize,
    rng: &mut R,
) -> WalkResult {
    Walker::new(spec).walk(schedule, phi, rng, false)
}

/// Empirical occupancy of a walk without resets, normalised.
pub fn empirical_occupancy<T: Scalar>(spec: &ChainSpec<T>, steps: u64, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, rng::STREAM_MARKOV, 0);
    let w = Walker::new(spec).walk(&ResetSchedule::none(steps), 0, &mut rng, true);
    w.occupancy
        .expect("requested")
        .into_iter()
        .map(|c| c as f64 / steps as f64)
        .collect()
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct ExceedanceRow {
    /// Number of resets in the schedule.
    pub resets: usize,
    pub horizon: u64,
    pub delta: f64,
    /// `(1+δ)·μ·T`.
    pub threshold: f64,
    pub exceed: u64,
    pub trials: u64,
    pub freq: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

pub const MIN_TRIALS: u64 = 200;

/// For each schedule and δ, the fraction of trials with `X ≥ (1+δ)·μ·T`,
/// `μ = π(V_φ)`. Trial `t` of every schedule uses the same random stream,
/// so schedules are compared on paired randomness and exceedance is
/// monotone in δ by construction.
pub fn reset_tail_experiment<T: Scalar>(
    spec: &ChainSpec<T>,
    schedules: &[ResetSchedule],
    phi: usize,
    deltas: &[f64],
    trials: u64,
    seed: u64,
) -> Result<Vec<ExceedanceRow>> {
    if trials < MIN_TRIALS {
        return Err(Error::InsufficientSamples {
            needed: MIN_TRIALS,
            got: trials,
        });
    }
    let walker = Walker::new(spec);
    let mu = spec.to_f64().stationary_tail(phi);
    let mut rows = Vec::new();
    for schedule in schedules {
        let xs: Vec<u64> = (0..trials)
            .into_par_iter()
            .map(|t| {
                let mut rng = rng::stream(seed, rng::STREAM_MARKOV, t);
                walker.walk(schedule, phi, &mut rng, false).visits
            })
            .collect();
        for &delta in deltas {
            let threshold = (1.0 + delta) * mu * schedule.horizon as f64;
            let exceed = xs.iter().filter(|&&x| x as f64 >= threshold).count() as u64;
            let (ci_lo, ci_hi) = wilson_interval(exceed, trials, Z95);
            rows.push(ExceedanceRow {
                resets: schedule.resets.len(),
                horizon: schedule.horizon,
                delta,
                threshold,
                exceed,
                trials,
                freq: exceed as f64 / trials as f64,
                ci_lo,
                ci_hi,
            });
        }
    }
    Ok(rows)
}
