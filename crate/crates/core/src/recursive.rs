//! Recursive position map: each level's map lives in a smaller ORAM.
//!
//! Level `j+1` stores level `j`'s positions, one word per block index, so its
//! memory is `⌈n_j/α⌉` words and sizes shrink by a factor α per level. A
//! stored word is `position + 1`, with 0 meaning "never assigned"; this keeps
//! the fresh-cell zero payload meaningful. Once a map has at most `cutoff`
//! entries it is held directly in the cache.

use crate::error::{Error, Result};
use crate::oram::{
    ActionObserver, DirectPositionMap, NoObserver, Op, OramConfig, OramLevel, PositionMap,
};
use crate::rng;
use crate::tree::{BlockIndex, Leaf, TraceEvent, TraceMode, Word};

pub const DEFAULT_CUTOFF: u64 = 4096;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RecursiveConfig {
    /// Parameters of the data level. Inner levels re-derive ℓ, ℓ', q_max
    /// from their own sizes but inherit everything else.
    pub data: OramConfig,
    /// Largest position map kept directly in the cache.
    pub cutoff: u64,
}

impl RecursiveConfig {
    pub fn new(data: OramConfig) -> RecursiveConfig {
        RecursiveConfig {
            data,
            cutoff: DEFAULT_CUTOFF,
        }
    }

    pub fn with_cutoff(mut self, cutoff: u64) -> Self {
        self.cutoff = cutoff;
        self
    }

    /// Memory sizes (words) of the ORAM levels, largest first, followed by the
    /// entry count of the in-cache base map.
    pub fn level_sizes(&self) -> (Vec<u64>, u64) {
        let alpha = self.data.alpha as u64;
        let mut sizes = vec![self.data.n];
        loop {
            let entries = sizes.last().unwrap().div_ceil(alpha);
            if entries <= self.cutoff {
                return (sizes, entries);
            }
            sizes.push(entries);
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.data.validate()?;
        if self.cutoff < self.data.alpha as u64 {
            return Err(Error::InvalidConfig(format!(
                "cutoff {} is below the block size {}",
                self.cutoff, self.data.alpha
            )));
        }
        Ok(())
    }

    fn level_config(&self, j: usize, n: u64) -> OramConfig {
        let seed = rng::child_seed(self.data.seed, rng::STREAM_ORAM, j as u64);
        if j == 0 {
            return self.data.clone().with_seed(seed);
        }
        let mut c = OramConfig::for_memory(n, self.data.alpha).with_seed(seed);
        c.flush_continue_prob = self.data.flush_continue_prob;
        c.overflow_rule = self.data.overflow_rule;
        c.trace_mode = self.data.trace_mode;
        c
    }
}

/// The position map seen by level `j`: the levels below it plus the base map.
struct Tail<'a> {
    levels: &'a mut [OramLevel],
    base: &'a mut DirectPositionMap,
}

impl PositionMap for Tail<'_> {
    fn read_and_update(&mut self, index: BlockIndex, new_pos: Leaf) -> Result<Option<Leaf>> {
        match self.levels.split_first_mut() {
            None => self.base.read_and_update(index, new_pos),
            Some((level, rest)) => {
                let mut inner = Tail {
                    levels: rest,
                    base: self.base,
                };
                let old = level.access(Op::Write(index, new_pos as Word + 1), &mut inner)?;
                Ok(old.checked_sub(1).map(|p| p as Leaf))
            }
        }
    }
}

/// A data ORAM whose position map is recursively stored in smaller ORAMs.
#[derive(Debug, Clone)]
pub struct OramStack {
    config: RecursiveConfig,
    levels: Vec<OramLevel>,
    base: DirectPositionMap,
    peak_cache_words: u64,
}

impl OramStack {
    pub fn build(config: RecursiveConfig) -> Result<OramStack> {
        config.validate()?;
        let (sizes, base_entries) = config.level_sizes();
        let levels = sizes
            .iter()
            .enumerate()
            .map(|(j, &n)| OramLevel::new(config.level_config(j, n)))
            .collect::<Result<Vec<_>>>()?;
        Ok(OramStack {
            config,
            levels,
            base: DirectPositionMap::new(base_entries),
            peak_cache_words: 0,
        })
    }

    /// A stack with default parameters for `n` words.
    pub fn for_memory(n: u64, seed: u64, trace_mode: TraceMode) -> Result<OramStack> {
        let data = OramConfig::new(n)
            .with_seed(seed)
            .with_trace_mode(trace_mode);
        OramStack::build(RecursiveConfig::new(data))
    }

    pub fn config(&self) -> &RecursiveConfig {
        &self.config
    }

    pub fn levels(&self) -> &[OramLevel] {
        &self.levels
    }

    pub fn data_level(&self) -> &OramLevel {
        &self.levels[0]
    }

    /// Takes the data level's recorded trace events.
    pub fn drain_data_trace(&mut self) -> Vec<TraceEvent> {
        self.levels[0].tree_mut().trace_mut().take_events()
    }

    pub fn base_map(&self) -> &DirectPositionMap {
        &self.base
    }

    pub fn read(&mut self, addr: u64) -> Result<Word> {
        self.access(Op::Read(addr))
    }

    pub fn write(&mut self, addr: u64, value: Word) -> Result<Word> {
        self.access(Op::Write(addr, value))
    }

    pub fn access(&mut self, op: Op) -> Result<Word> {
        self.access_observed(op, &mut NoObserver)
    }

    /// One user operation; `obs` sees the data level's actions only.
    pub fn access_observed(&mut self, op: Op, obs: &mut dyn ActionObserver) -> Result<Word> {
        let (data, rest) = self.levels.split_first_mut().expect("at least one level");
        let mut tail = Tail {
            levels: rest,
            base: &mut self.base,
        };
        let out = data.access_observed(op, &mut tail, obs);
        self.peak_cache_words = self.peak_cache_words.max(self.cache_words());
        out
    }

    /// The data level's position for block `i`, read without touching any
    /// tree. For checks only.
    pub fn position_of(&self, level: usize, index: BlockIndex) -> Option<Leaf> {
        if level + 1 == self.levels.len() {
            return self.base.get(index);
        }
        let inner = &self.levels[level + 1];
        let alpha = inner.config().alpha as u64;
        let (bi, off) = (index / alpha, (index % alpha) as usize);
        inner
            .live_blocks()
            .find(|b| b.index == bi)
            .and_then(|b| b.payload[off].checked_sub(1))
            .map(|w| w as Leaf)
    }

    /// Block-path invariance at every level.
    pub fn check_invariants(&self) -> Result<()> {
        for (j, level) in self.levels.iter().enumerate() {
            level.check_invariants(&|i| self.position_of(j, i))?;
        }
        Ok(())
    }

    /// Physical bucket accesses (reads plus writes) over all levels so far.
    pub fn physical_accesses(&self) -> u64 {
        self.levels.iter().map(|l| l.tree().trace().len()).sum()
    }

    /// Words of external memory over all trees.
    pub fn external_words(&self) -> u64 {
        self.levels.iter().map(|l| l.tree().memory_words()).sum()
    }

    /// Words currently held in the cache: live queue blocks plus the base map.
    pub fn cache_words(&self) -> u64 {
        let queued: u64 = self
            .levels
            .iter()
            .map(|l| l.queue().live_size() as u64 * (l.config().alpha as u64 + 2))
            .sum();
        queued + self.base.len() as u64
    }

    pub fn peak_cache_words(&self) -> u64 {
        self.peak_cache_words
    }
}
