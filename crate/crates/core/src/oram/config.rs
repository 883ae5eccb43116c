use crate::error::{Error, Result};
use crate::tree::TraceMode;

/// When a side of an internal bucket counts as overflowing during a flush.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub enum OverflowRule {
    /// `count ≥ ℓ/2`.
    #[default]
    AtLeastHalf,
    /// `count > ℓ/2`, a stricter trigger that overflows less often.
    MoreThanHalf,
}

impl OverflowRule {
    pub fn triggers(self, count: usize, bucket_capacity: usize) -> bool {
        let half = bucket_capacity / 2;
        match self {
            OverflowRule::AtLeastHalf => count >= half,
            OverflowRule::MoreThanHalf => count > half,
        }
    }
}

/// Deliberately broken variants, used to check that the statistical tests
/// have power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Mutation {
    /// Fetch keeps the block's old position instead of drawing a fresh one.
    ReusePosition,
    /// Every dequeue performs exactly two flushes.
    FixedFlushCount,
    /// The flush leaf is derived from the accessed block index.
    AddressDerivedFlushPath,
    /// Flush carries the block that travels the shortest distance.
    ShallowCarry,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct OramConfig {
    /// Memory size in words.
    pub n: u64,
    /// Block size in words.
    pub alpha: usize,
    /// ℓ: capacity of internal buckets (even, at least 4).
    pub bucket_capacity: usize,
    /// ℓ': capacity of leaf buckets.
    pub leaf_capacity: usize,
    pub q_max: usize,
    /// Probability that the flush coin comes up 1.
    pub flush_continue_prob: f64,
    pub seed: u64,
    pub overflow_rule: OverflowRule,
    pub trace_mode: TraceMode,
    pub mutation: Option<Mutation>,
}

pub const DEFAULT_ALPHA: usize = 16;
pub const DEFAULT_FLUSH_CONTINUE_PROB: f64 = 2.0 / 3.0;

fn log2_clamped(n: u64) -> (f64, f64) {
    let lg = (n as f64).log2().max(1.0);
    (lg, lg.log2().max(1.0))
}

/// ℓ = 2·max(2, ⌈log₂log₂n⌉)
pub fn default_bucket_capacity(n: u64) -> usize {
    let (_, lglg) = log2_clamped(n);
    2 * (lglg.ceil() as usize).max(2)
}

/// ℓ' = ⌈6·log₂n·log₂log₂n⌉
pub fn default_leaf_capacity(n: u64) -> usize {
    let (lg, lglg) = log2_clamped(n);
    (6.0 * lg * lglg).ceil() as usize
}

/// q_max = ⌈(log₂n)^2.2⌉
pub fn default_q_max(n: u64) -> usize {
    let (lg, _) = log2_clamped(n);
    lg.powf(2.2).ceil() as usize
}

impl OramConfig {
    /// Default parameters for a memory of `n` words with block size `alpha`.
    pub fn for_memory(n: u64, alpha: usize) -> OramConfig {
        OramConfig {
            n,
            alpha,
            bucket_capacity: default_bucket_capacity(n),
            leaf_capacity: default_leaf_capacity(n),
            q_max: default_q_max(n),
            flush_continue_prob: DEFAULT_FLUSH_CONTINUE_PROB,
            seed: 0,
            overflow_rule: OverflowRule::default(),
            trace_mode: TraceMode::CountOnly,
            mutation: None,
        }
    }

    pub fn new(n: u64) -> OramConfig {
        OramConfig::for_memory(n, DEFAULT_ALPHA)
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_trace_mode(mut self, mode: TraceMode) -> Self {
        self.trace_mode = mode;
        self
    }

    pub fn with_mutation(mut self, mutation: Mutation) -> Self {
        self.mutation = Some(mutation);
        self
    }

    /// Number of blocks, `⌈n/α⌉`.
    pub fn blocks(&self) -> u64 {
        self.n.div_ceil(self.alpha as u64)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.alpha < 1 {
            return bad("block size must be at least 1".into());
        }
        if self.n < self.alpha as u64 {
            return bad(format!(
                "n = {} is smaller than a block of {}",
                self.n, self.alpha
            ));
        }
        if self.bucket_capacity < 4 || !self.bucket_capacity.is_multiple_of(2) {
            return bad(format!(
                "bucket capacity {} must be even and ≥ 4",
                self.bucket_capacity
            ));
        }
        if self.leaf_capacity < self.bucket_capacity {
            return bad(format!(
                "leaf capacity {} is below bucket capacity {}",
                self.leaf_capacity, self.bucket_capacity
            ));
        }
        if !(self.flush_continue_prob > 0.0 && self.flush_continue_prob < 1.0) {
            return bad(format!(
                "flush probability {} not in (0,1)",
                self.flush_continue_prob
            ));
        }
        if self.q_max < 1 {
            return bad("q_max must be at least 1".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_at_2_14() {
        let c = OramConfig::new(1 << 14);
        // log₂log₂ 2^14 = log₂14 ≈ 3.807
        assert_eq!(c.bucket_capacity, 8);
        assert_eq!(c.leaf_capacity, (6.0 * 14.0 * 14f64.log2()).ceil() as usize);
        assert_eq!(c.leaf_capacity, 320);
        // 14^2.2 ≈ 332.4
        assert_eq!(c.q_max, 333);
        c.validate().unwrap();
    }

    #[test]
    fn small_memories_stay_valid() {
        for n in [16u64, 32, 64, 256, 1 << 10] {
            OramConfig::new(n).validate().unwrap();
        }
    }

    #[test]
    fn validation() {
        let ok = OramConfig::new(1 << 12);
        let mut c = ok.clone();
        c.bucket_capacity = 5;
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.leaf_capacity = 4;
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.flush_continue_prob = 1.0;
        assert!(c.validate().is_err());
        let mut c = ok.clone();
        c.q_max = 0;
        assert!(c.validate().is_err());
        let mut c = ok;
        c.n = 8;
        assert!(c.validate().is_err());
    }

    #[test]
    fn overflow_rules() {
        assert!(OverflowRule::AtLeastHalf.triggers(4, 8));
        assert!(!OverflowRule::MoreThanHalf.triggers(4, 8));
        assert!(OverflowRule::MoreThanHalf.triggers(5, 8));
    }
}
