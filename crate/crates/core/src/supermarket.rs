//! The discrete-time supermarket process with one choice per customer.
//!
//! Each step is an arrival with probability α (the customer joins a uniform
//! cashier) and otherwise a service at a uniform cashier, which does nothing
//! if that queue is empty. A customer is upset if the queue they join already
//! holds at least φ customers (or more than φ, under
//! [`UpsetRule::Exceeds`]).

use rand::Rng;
use rayon::prelude::*;

use crate::analysis::stats::{wilson_interval, Z95};
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::{powi, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub enum UpsetRule {
    /// Upset when the queue holds `≥ φ` before joining.
    #[default]
    AtLeast,
    /// Upset when the queue holds `> φ` before joining.
    Exceeds,
}

impl UpsetRule {
    pub fn is_upset(self, len: u64, phi: u64) -> bool {
        match self {
            UpsetRule::AtLeast => len >= phi,
            UpsetRule::Exceeds => len > phi,
        }
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct SupermarketConfig {
    pub cashiers: usize,
    pub arrival_prob: f64,
    pub phi: u64,
    pub horizon: u64,
    pub trials: u64,
    pub seed: u64,
    pub upset_rule: UpsetRule,
}

impl SupermarketConfig {
    pub fn new(cashiers: usize, arrival_prob: f64, phi: u64, horizon: u64) -> SupermarketConfig {
        SupermarketConfig {
            cashiers,
            arrival_prob,
            phi,
            horizon,
            trials: 1,
            seed: 0,
            upset_rule: UpsetRule::default(),
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_trials(mut self, trials: u64) -> Self {
        self.trials = trials;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.cashiers < 1 {
            return Err(Error::InvalidConfig(
                "at least one cashier is needed".into(),
            ));
        }
        if !(self.arrival_prob > 0.0 && self.arrival_prob < 0.5) {
            return Err(Error::InvalidConfig(format!(
                "arrival probability {} not in (0, 1/2)",
                self.arrival_prob
            )));
        }
        if self.phi < 1 {
            return Err(Error::InvalidConfig("φ must be at least 1".into()));
        }
        Ok(())
    }

    /// `(α/(1−α))^φ · T`, the stationary bound on the expected upset count.
    pub fn expected_upset_bound(&self) -> f64 {
        upset_rate_bound(self.arrival_prob, self.phi) * self.horizon as f64
    }
}

/// `(α/(1−α))^φ`, generic over the scalar type.
pub fn upset_rate_bound<T: Scalar>(alpha: T, phi: u64) -> T {
    let beta = alpha.clone() / (T::one() - alpha);
    powi(&beta, phi as u32)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SupermarketState {
    pub lengths: Vec<u64>,
    pub upset: u64,
    pub step: u64,
    /// `by_length[i]` = number of cashiers whose queue has length `i`.
    by_length: Vec<u64>,
}

impl SupermarketState {
    pub fn new(cashiers: usize) -> SupermarketState {
        SupermarketState {
            lengths: vec![0; cashiers],
            upset: 0,
            step: 0,
            by_length: vec![cashiers as u64],
        }
    }

    pub fn cashiers(&self) -> usize {
        self.lengths.len()
    }

    fn relabel(&mut self, from: u64, to: u64) {
        self.by_length[from as usize] -= 1;
        if self.by_length.len() <= to as usize {
            self.by_length.resize(to as usize + 1, 0);
        }
        self.by_length[to as usize] += 1;
    }

    /// A customer joins `cashier`; returns whether they are upset.
    pub fn arrive(&mut self, cashier: usize, phi: u64, rule: UpsetRule) -> bool {
        let len = self.lengths[cashier];
        let upset = rule.is_upset(len, phi);
        self.upset += upset as u64;
        self.lengths[cashier] = len + 1;
        self.relabel(len, len + 1);
        upset
    }

    /// `cashier` serves one customer, if any.
    pub fn serve(&mut self, cashier: usize) {
        let len = self.lengths[cashier];
        if len > 0 {
            self.lengths[cashier] = len - 1;
            self.relabel(len, len - 1);
        }
    }

    /// One step of the process with its own coin flips.
    pub fn step<R: Rng + ?Sized>(
        &mut self,
        arrival_prob: f64,
        phi: u64,
        rule: UpsetRule,
        rng: &mut R,
    ) {
        let arrival = rng.random_bool(arrival_prob);
        let cashier = rng.random_range(0..self.lengths.len());
        if arrival {
            self.arrive(cashier, phi, rule);
        } else {
            self.serve(cashier);
        }
        self.step += 1;
    }

    /// Current count of cashiers per queue length.
    pub fn length_counts(&self) -> &[u64] {
        &self.by_length
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RunSummary {
    pub upset: u64,
    pub steps: u64,
    pub max_length: u64,
    /// Queue-length histogram over all cashiers, accumulated every
    /// `cashiers` steps.
    pub occupancy: Vec<u64>,
    /// Upset count after each checkpoint requested by the caller.
    pub upset_at: Vec<u64>,
}

/// Runs `horizon` steps from empty queues, recording the upset count at each
/// step listed in `checkpoints`.
pub fn sm_run_with_checkpoints(
    config: &SupermarketConfig,
    stream: u64,
    checkpoints: &[u64],
) -> Result<RunSummary> {
    config.validate()?;
    let mut rng = rng::stream(config.seed, rng::STREAM_SUPERMARKET, stream);
    let mut s = SupermarketState::new(config.cashiers);
    let sample_every = config.cashiers as u64;
    let mut occupancy: Vec<u64> = Vec::new();
    let mut max_length = 0;
    let mut upset_at = Vec::with_capacity(checkpoints.len());
    let mut next = checkpoints.iter().peekable();
    while next.peek().is_some_and(|&&c| c == 0) {
        next.next();
        upset_at.push(0);
    }
    for t in 1..=config.horizon {
        s.step(config.arrival_prob, config.phi, config.upset_rule, &mut rng);
        max_length = max_length.max(s.by_length.len() as u64 - 1);
        if t % sample_every == 0 {
            if occupancy.len() < s.by_length.len() {
                occupancy.resize(s.by_length.len(), 0);
            }
            for (o, &c) in occupancy.iter_mut().zip(&s.by_length) {
                *o += c;
            }
        }
        while next.peek().is_some_and(|&&c| c == t) {
            next.next();
            upset_at.push(s.upset);
        }
    }
    Ok(RunSummary {
        upset: s.upset,
        steps: config.horizon,
        max_length,
        occupancy,
        upset_at,
    })
}

/// One run of the process from empty queues.
pub fn sm_run(config: &SupermarketConfig) -> Result<RunSummary> {
    sm_run_with_checkpoints(config, 0, &[])
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TailRow {
    pub horizon: u64,
    pub delta: f64,
    /// `(1+δ)·(α/(1−α))^φ·T`.
    pub threshold: f64,
    pub exceed: u64,
    pub trials: u64,
    pub freq: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

pub const MIN_TAIL_TRIALS: u64 = 200;

fn tail_rows(
    counts: &[u64],
    horizon: u64,
    config: &SupermarketConfig,
    deltas: &[f64],
) -> Vec<TailRow> {
    let rate = upset_rate_bound(config.arrival_prob, config.phi);
    let trials = counts.len() as u64;
    deltas
        .iter()
        .map(|&delta| {
            let threshold = (1.0 + delta) * rate * horizon as f64;
            let exceed = counts.iter().filter(|&&f| f as f64 >= threshold).count() as u64;
            let (ci_lo, ci_hi) = wilson_interval(exceed, trials, Z95);
            TailRow {
                horizon,
                delta,
                threshold,
                exceed,
                trials,
                freq: exceed as f64 / trials as f64,
                ci_lo,
                ci_hi,
            }
        })
        .collect()
}

/// Empirical `Pr[F ≥ (1+δ)(α/(1−α))^φ T]` for each δ, at each horizon in
/// `horizons`. Every horizon is read off the same trajectory per trial, so
/// both δ and T are compared on shared randomness.
pub fn sm_tail_experiment(
    config: &SupermarketConfig,
    horizons: &[u64],
    deltas: &[f64],
) -> Result<Vec<TailRow>> {
    config.validate()?;
    if config.trials < MIN_TAIL_TRIALS {
        return Err(Error::InsufficientSamples {
            needed: MIN_TAIL_TRIALS,
            got: config.trials,
        });
    }
    let mut checkpoints = horizons.to_vec();
    checkpoints.sort_unstable();
    let last = *checkpoints.last().unwrap_or(&config.horizon);
    let run_cfg = SupermarketConfig {
        horizon: last,
        ..config.clone()
    };
    let per_trial: Vec<Vec<u64>> = (0..config.trials)
        .into_par_iter()
        .map(|t| sm_run_with_checkpoints(&run_cfg, t, &checkpoints).map(|r| r.upset_at))
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for (j, &h) in checkpoints.iter().enumerate() {
        let counts: Vec<u64> = per_trial.iter().map(|u| u[j]).collect();
        rows.extend(tail_rows(&counts, h, config, deltas));
    }
    Ok(rows)
}

/// Exceedance at `T` and `2T` for one δ, and their ratio.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TailDecay {
    pub at_t: TailRow,
    pub at_2t: TailRow,
    /// `freq(2T)/freq(T)`; `None` when nothing exceeded at `T`.
    pub ratio: Option<f64>,
}

pub fn sm_tail_decay(config: &SupermarketConfig, delta: f64) -> Result<TailDecay> {
    let t = config.horizon;
    let rows = sm_tail_experiment(config, &[t, 2 * t], &[delta])?;
    let (at_t, at_2t) = (rows[0].clone(), rows[1].clone());
    let ratio = (at_t.exceed > 0).then(|| at_2t.freq / at_t.freq);
    Ok(TailDecay { at_t, at_2t, ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rational;
    use rand::SeedableRng;

    #[test]
    fn validation() {
        assert!(SupermarketConfig::new(0, 0.3, 2, 10).validate().is_err());
        assert!(SupermarketConfig::new(1, 0.5, 2, 10).validate().is_err());
        assert!(SupermarketConfig::new(1, 0.3, 0, 10).validate().is_err());
    }

    #[test]
    fn forced_arrivals_upset_at_phi_plus_one() {
        let phi = 4;
        let mut s = SupermarketState::new(1);
        for t in 1..=phi + 1 {
            let upset = s.arrive(0, phi, UpsetRule::AtLeast);
            assert_eq!(upset, t == phi + 1);
        }
        assert_eq!(s.upset, 1);
        let mut s = SupermarketState::new(1);
        for _ in 0..=phi + 1 {
            s.arrive(0, phi, UpsetRule::Exceeds);
        }
        assert_eq!(s.upset, 1);
    }

    #[test]
    fn no_arrivals_stays_empty() {
        let mut s = SupermarketState::new(4);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        for _ in 0..1000 {
            s.step(0.0, 1, UpsetRule::AtLeast, &mut rng);
        }
        assert!(s.lengths.iter().all(|&l| l == 0));
        assert_eq!(s.upset, 0);
        s.serve(2);
        assert_eq!(s.lengths[2], 0);
    }

    #[test]
    fn zero_horizon_and_determinism() {
        let c = SupermarketConfig::new(8, 0.3, 2, 0);
        assert_eq!(sm_run(&c).unwrap().upset, 0);
        let c = SupermarketConfig::new(8, 0.4, 2, 50_000).with_seed(3);
        assert_eq!(sm_run(&c).unwrap(), sm_run(&c).unwrap());
    }

    #[test]
    fn length_counts_track_lengths() {
        let mut s = SupermarketState::new(16);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10_000 {
            s.step(0.45, 3, UpsetRule::AtLeast, &mut rng);
        }
        let mut want = vec![0u64; s.length_counts().len()];
        for &l in &s.lengths {
            want[l as usize] += 1;
        }
        assert_eq!(s.length_counts(), want.as_slice());
    }

    #[test]
    fn upsets_monotone_in_phi() {
        let base = SupermarketConfig::new(16, 0.4, 5, 100_000).with_seed(8);
        let mut prev = u64::MAX;
        for phi in 1..8 {
            let f = sm_run(&SupermarketConfig {
                phi,
                ..base.clone()
            })
            .unwrap()
            .upset;
            assert!(f <= prev);
            prev = f;
        }
    }

    #[test]
    fn occupancy_is_geometric() {
        let c = SupermarketConfig::new(64, 1.0 / 3.0, 5, 4_000_000).with_seed(1);
        let r = sm_run(&c).unwrap();
        let total: u64 = r.occupancy.iter().sum();
        let emp: Vec<f64> = r
            .occupancy
            .iter()
            .map(|&o| o as f64 / total as f64)
            .collect();
        let law: Vec<f64> = (0..emp.len()).map(|i| 0.5f64.powi(i as i32 + 1)).collect();
        let tv = crate::analysis::stats::total_variation(&emp, &law);
        assert!(tv < 0.02, "tv={tv}");
    }

    #[test]
    fn rate_bound_exact() {
        assert_eq!(upset_rate_bound(rational(1, 3), 10), rational(1, 1024));
        assert!((upset_rate_bound(1.0f64 / 3.0, 10) - 1.0 / 1024.0).abs() < 1e-15);
    }

    #[test]
    fn tail_table_properties() {
        let c = SupermarketConfig::new(1, 1.0 / 3.0, 3, 2000)
            .with_seed(2)
            .with_trials(200);
        let deltas = [-1.0, 0.0, 1.0, 3.0];
        let rows = sm_tail_experiment(&c, &[2000], &deltas).unwrap();
        assert_eq!(rows[0].freq, 1.0);
        assert!(rows.windows(2).all(|w| w[0].exceed >= w[1].exceed));
        assert!(sm_tail_experiment(&c.clone().with_trials(10), &[2000], &deltas).is_err());
    }
}
