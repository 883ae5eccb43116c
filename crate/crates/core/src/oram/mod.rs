//! The base tree ORAM.
//!
//! Each user operation is one [`OramLevel::fetch`] followed by two
//! dequeues; a dequeue is one put-back and a geometric number of flushes.
//! The level does not own its position map: callers pass one in, which lets
//! [`crate::recursive::OramStack`] plug a smaller ORAM in its place.

mod config;
mod posmap;

use std::collections::HashSet;

use rand::Rng;

pub use config::{
    default_bucket_capacity, default_leaf_capacity, default_q_max, Mutation, OramConfig,
    OverflowRule, DEFAULT_ALPHA, DEFAULT_FLUSH_CONTINUE_PROB,
};
pub use posmap::{DirectPositionMap, PositionMap};

use crate::error::{AbortEvent, AbortKind, Error, Result};
use crate::rng::{self, OramRng};
use crate::stash::StashQueue;
use crate::tree::{
    common_prefix_len, leaf_bit, Block, BlockIndex, Leaf, NodeId, Phase, Tree, Word,
};

/// A user-level memory operation on a word address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Op {
    Read(u64),
    Write(u64, Word),
}

impl Op {
    pub fn addr(self) -> u64 {
        match self {
            Op::Read(a) | Op::Write(a, _) => a,
        }
    }
}

/// One entry of the merged put-back/flush stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum Action {
    PutBack,
    Flush,
}

/// Callback hooks fired after each put-back and flush, with the tree in its
/// post-action state.
pub trait ActionObserver {
    /// `placed` is the position of the block moved into the root, or `None`
    /// when no block reached the tree.
    fn on_put_back(&mut self, _placed: Option<Leaf>, _tree: &Tree) {}
    fn on_flush(&mut self, _leaf: Leaf, _tree: &Tree) {}
}

pub struct NoObserver;

impl ActionObserver for NoObserver {}

/// Event counters maintained by a level.
#[derive(Debug, Clone, Default, serde::Serialize)]
pub struct Counters {
    pub accesses: u64,
    pub put_backs: u64,
    /// Put-backs whose pop returned nothing (empty queue or stale head).
    pub empty_put_backs: u64,
    /// Put-backs that found the root full and returned the block to the queue.
    pub root_full_bounces: u64,
    pub flushes: u64,
    pub path_scans: u64,
    pub overflows: u64,
    /// Overflows by tree level of the overflowing bucket.
    pub overflows_per_level: Vec<u64>,
    /// `flush_count_histogram[k]` = number of dequeues that ran `k` flushes.
    pub flush_count_histogram: Vec<u64>,
    pub max_queue: usize,
    pub max_leaf_load: usize,
    /// Largest internal bucket load seen, including transient flush states.
    pub max_internal_load: usize,
    #[serde(skip)]
    pub actions: Vec<Action>,
}

/// Draws the number of flushes for one dequeue: repeat while a coin with
/// `Pr[1] = continue_prob` comes up 1.
pub fn sample_flush_count<R: Rng + ?Sized>(rng: &mut R, continue_prob: f64) -> u32 {
    let mut k = 0;
    while rng.random_bool(continue_prob) {
        k += 1;
    }
    k
}

/// One ORAM tree with its queue, RNG and counters.
#[derive(Debug, Clone)]
pub struct OramLevel {
    config: OramConfig,
    tree: Tree,
    queue: StashQueue,
    rng: OramRng,
    op_serial: u64,
    counters: Counters,
    halted: Option<AbortEvent>,
    current_index: BlockIndex,
}

impl OramLevel {
    pub fn new(config: OramConfig) -> Result<OramLevel> {
        config.validate()?;
        let tree = Tree::build(
            config.n,
            config.alpha,
            config.bucket_capacity,
            config.leaf_capacity,
            config.trace_mode,
        )?;
        OramLevel::with_tree(config, tree)
    }

    /// A level whose tree depth is fixed by the caller instead of derived
    /// from `n`; for micro-instances.
    pub fn with_depth(config: OramConfig, depth: u8) -> Result<OramLevel> {
        config.validate()?;
        let tree = Tree::with_depth(
            depth,
            config.bucket_capacity,
            config.leaf_capacity,
            config.alpha,
            config.trace_mode,
        )?;
        OramLevel::with_tree(config, tree)
    }

    fn with_tree(config: OramConfig, tree: Tree) -> Result<OramLevel> {
        let counters = Counters {
            overflows_per_level: vec![0; tree.depth() as usize],
            ..Counters::default()
        };
        Ok(OramLevel {
            queue: StashQueue::new(config.q_max),
            rng: rng::stream(config.seed, rng::STREAM_ORAM, 0),
            tree,
            op_serial: 0,
            counters,
            halted: None,
            current_index: 0,
            config,
        })
    }

    pub fn config(&self) -> &OramConfig {
        &self.config
    }

    pub fn tree(&self) -> &Tree {
        &self.tree
    }

    pub fn tree_mut(&mut self) -> &mut Tree {
        &mut self.tree
    }

    pub fn queue(&self) -> &StashQueue {
        &self.queue
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn op_serial(&self) -> u64 {
        self.op_serial
    }

    pub fn halted(&self) -> Option<AbortEvent> {
        self.halted
    }

    pub fn leaves(&self) -> u64 {
        self.tree.leaves()
    }

    pub fn access(&mut self, op: Op, posmap: &mut dyn PositionMap) -> Result<Word> {
        self.access_observed(op, posmap, &mut NoObserver)
    }

    /// Executes one Read/Write. Returns the word at the address before the
    /// operation.
    pub fn access_observed(
        &mut self,
        op: Op,
        posmap: &mut dyn PositionMap,
        obs: &mut dyn ActionObserver,
    ) -> Result<Word> {
        if let Some(ev) = self.halted {
            return Err(Error::Halted(ev));
        }
        if op.addr() >= self.config.n {
            return Err(Error::AddressOutOfRange {
                addr: op.addr(),
                n: self.config.n,
            });
        }
        self.op_serial += 1;
        self.counters.accesses += 1;
        let result = self
            .fetch(op, posmap)
            .and_then(|v| {
                self.dequeue(posmap, obs)?;
                Ok(v)
            })
            .and_then(|v| {
                self.dequeue(posmap, obs)?;
                Ok(v)
            });
        match result {
            Err(e) => match e.abort_event() {
                // an abort inside a recursive position map halts this level
                // too, reported against this level's operation
                Some(ev) => {
                    let ev = AbortEvent {
                        kind: ev.kind,
                        op_serial: self.op_serial,
                    };
                    self.halted = Some(ev);
                    Err(Error::Abort(ev))
                }
                None => Err(e),
            },
            ok => ok,
        }
    }

    fn abort(&self, kind: AbortKind) -> Error {
        Error::Abort(AbortEvent {
            kind,
            op_serial: self.op_serial,
        })
    }

    fn random_leaf(&mut self) -> Leaf {
        self.rng.random_range(0..self.tree.leaves()) as Leaf
    }

    fn enqueue(&mut self, block: Block) -> Result<()> {
        self.queue.insert(block)?;
        self.counters.max_queue = self.counters.max_queue.max(self.queue.live_size());
        if self.queue.at_limit() {
            return Err(self.abort(AbortKind::AbortQueue));
        }
        Ok(())
    }

    /// Reads and rewrites every bucket on the path to `leaf`, removing the
    /// block with the wanted index if it is found there.
    fn scan_path(&mut self, leaf: Leaf, want: Option<(BlockIndex, Leaf)>) -> Result<Option<Block>> {
        let path = self.tree.path_to_leaf(leaf)?;
        let mut found = None;
        for node in path {
            let mut blocks = self.tree.load(node)?;
            if let (None, Some((index, pos))) = (&found, want) {
                if let Some(j) = blocks.iter().position(|b| b.index == index) {
                    if blocks[j].position != pos {
                        return Err(Error::InvariantViolation(format!(
                            "block {index} at {node} carries position {} but the map says {pos}",
                            blocks[j].position
                        )));
                    }
                    found = Some(blocks.remove(j));
                }
            }
            self.tree.store(node, blocks)?;
        }
        self.counters.path_scans += 1;
        Ok(found)
    }

    /// Moves the block holding `op`'s address into the queue under a fresh
    /// position, applying the write if any.
    pub fn fetch(&mut self, op: Op, posmap: &mut dyn PositionMap) -> Result<Word> {
        self.tree
            .trace_mut()
            .set_context(self.op_serial, Phase::Fetch);
        let alpha = self.config.alpha as u64;
        let index = op.addr() / alpha;
        let offset = (op.addr() % alpha) as usize;
        self.current_index = index;

        let mut new_pos = self.random_leaf();
        let old = posmap.read_and_update(index, new_pos)?;
        if let (Some(Mutation::ReusePosition), Some(p)) = (self.config.mutation, old) {
            posmap.read_and_update(index, p)?;
            new_pos = p;
        }

        let mut block = match old {
            None => {
                // first touch: scan a random path so the trace has the same shape
                let dummy = self.random_leaf();
                self.scan_path(dummy, None)?;
                Block::zeroed(index, new_pos, self.config.alpha)
            }
            Some(p) => match self.scan_path(p, Some((index, p)))? {
                Some(b) => b,
                None => self.queue.find(index, p).ok_or_else(|| {
                    Error::InvariantViolation(format!(
                        "block {index} with position {p} is neither on its path nor in the queue"
                    ))
                })?,
            },
        };
        block.position = new_pos;
        let previous = block.payload[offset];
        if let Op::Write(_, v) = op {
            block.payload[offset] = v;
        }
        self.enqueue(block)?;
        Ok(previous)
    }

    /// One put-back followed by a geometric number of flushes.
    pub fn dequeue(
        &mut self,
        posmap: &mut dyn PositionMap,
        obs: &mut dyn ActionObserver,
    ) -> Result<()> {
        self.put_back(obs)?;
        let flushes = match self.config.mutation {
            Some(Mutation::FixedFlushCount) => 2,
            _ => sample_flush_count(&mut self.rng, self.config.flush_continue_prob),
        };
        let hist = &mut self.counters.flush_count_histogram;
        if hist.len() <= flushes as usize {
            hist.resize(flushes as usize + 1, 0);
        }
        hist[flushes as usize] += 1;
        for _ in 0..flushes {
            self.flush(posmap, obs)?;
        }
        Ok(())
    }

    /// Moves the queue head, if any, into the root bucket. The root is always
    /// read and rewritten, whether or not a block moves.
    pub fn put_back(&mut self, obs: &mut dyn ActionObserver) -> Result<()> {
        self.tree
            .trace_mut()
            .set_context(self.op_serial, Phase::PutBack);
        self.counters.put_backs += 1;
        self.counters.actions.push(Action::PutBack);
        let popped = self.queue.pop_front();
        let capacity = self.tree.capacity_of(NodeId::ROOT);
        let mut root = self.tree.load(NodeId::ROOT)?;
        let placed = match popped {
            Some(b) if root.len() < capacity => {
                let p = b.position;
                root.push(b);
                Some(p)
            }
            Some(b) => {
                self.counters.root_full_bounces += 1;
                self.queue.push_front(b)?;
                None
            }
            None => {
                self.counters.empty_put_backs += 1;
                None
            }
        };
        let root_is_leaf = self.tree.depth() == 0;
        let load = root.len();
        self.tree.store(NodeId::ROOT, root)?;
        if root_is_leaf {
            self.counters.max_leaf_load = self.counters.max_leaf_load.max(load);
            if load >= self.config.leaf_capacity {
                return Err(self.abort(AbortKind::AbortLeaf));
            }
        } else {
            self.counters.max_internal_load = self.counters.max_internal_load.max(load);
        }
        obs.on_put_back(placed, &self.tree);
        Ok(())
    }

    fn flush_target(&mut self) -> Leaf {
        match self.config.mutation {
            Some(Mutation::AddressDerivedFlushPath) => {
                (self.current_index % self.tree.leaves()) as Leaf
            }
            _ => self.random_leaf(),
        }
    }

    /// Pushes blocks down a random path, carrying at each edge the block
    /// that can travel furthest, and overflows any side of an internal bucket
    /// that reaches the threshold.
    pub fn flush(
        &mut self,
        posmap: &mut dyn PositionMap,
        obs: &mut dyn ActionObserver,
    ) -> Result<()> {
        self.tree
            .trace_mut()
            .set_context(self.op_serial, Phase::Flush);
        self.counters.flushes += 1;
        self.counters.actions.push(Action::Flush);
        let target = self.flush_target();
        self.flush_along(target, posmap, obs)
    }

    /// The flush walk along a given leaf. [`OramLevel::flush`] calls this
    /// with a uniform leaf; scripted scenarios may call it directly.
    pub fn flush_along(
        &mut self,
        target: Leaf,
        posmap: &mut dyn PositionMap,
        obs: &mut dyn ActionObserver,
    ) -> Result<()> {
        let depth = self.tree.depth();
        let path = self.tree.path_to_leaf(target)?;
        let shallow = self.config.mutation == Some(Mutation::ShallowCarry);
        let mut carried: Option<Block> = None;

        for (level, &node) in path.iter().enumerate().take(depth as usize) {
            let level = level as u8;
            let mut bucket = self.tree.load(node)?;
            if let Some(b) = carried.take() {
                bucket.push(b);
            }
            self.counters.max_internal_load = self.counters.max_internal_load.max(bucket.len());

            let mut pick: Option<(usize, u8)> = None;
            for (j, b) in bucket.iter().enumerate() {
                let reach = common_prefix_len(b.position, target, depth);
                if reach <= level {
                    continue;
                }
                let better = match pick {
                    None => true,
                    Some((_, r)) if shallow => reach < r,
                    Some((_, r)) => reach > r,
                };
                if better {
                    pick = Some((j, reach));
                }
            }
            carried = pick.map(|(j, _)| bucket.remove(j));

            for side in 0..2u8 {
                let count = bucket
                    .iter()
                    .filter(|b| leaf_bit(b.position, level, depth) == side)
                    .count();
                if self
                    .config
                    .overflow_rule
                    .triggers(count, self.config.bucket_capacity)
                {
                    let j = bucket
                        .iter()
                        .position(|b| leaf_bit(b.position, level, depth) == side)
                        .expect("count is positive");
                    let victim = bucket.remove(j);
                    self.counters.overflows_per_level[level as usize] += 1;
                    self.overflow(victim, posmap)?;
                }
            }
            self.tree.store(node, bucket)?;
        }

        let leaf = path[depth as usize];
        let mut bucket = self.tree.load(leaf)?;
        if let Some(b) = carried {
            bucket.push(b);
        }
        self.counters.max_leaf_load = self.counters.max_leaf_load.max(bucket.len());
        if bucket.len() >= self.config.leaf_capacity {
            return Err(self.abort(AbortKind::AbortLeaf));
        }
        self.tree.store(leaf, bucket)?;
        self.counters.path_scans += 1;
        obs.on_flush(target, &self.tree);
        Ok(())
    }

    /// Gives an evicted block a fresh position and sends it back to the queue.
    pub fn overflow(&mut self, mut block: Block, posmap: &mut dyn PositionMap) -> Result<()> {
        let new_pos = self.random_leaf();
        posmap.read_and_update(block.index, new_pos)?;
        block.position = new_pos;
        self.counters.overflows += 1;
        self.enqueue(block)
    }

    /// Live blocks in the tree and the queue, read without tracing.
    pub fn live_blocks(&self) -> impl Iterator<Item = &Block> {
        self.tree
            .iter_nodes()
            .flat_map(|(_, bs)| bs.iter())
            .chain(self.queue.blocks())
    }

    /// Full-scan check of block-path invariance against a position lookup.
    pub fn check_invariants(&self, position_of: &dyn Fn(BlockIndex) -> Option<Leaf>) -> Result<()> {
        let fail = |m: String| Err(Error::InvariantViolation(m));
        let mut seen = HashSet::new();
        let depth = self.tree.depth();
        for (node, blocks) in self.tree.iter_nodes() {
            if blocks.len() > self.tree.capacity_of(node) {
                return fail(format!("bucket {node} over capacity"));
            }
            for b in blocks {
                if !seen.insert(b.index) {
                    return fail(format!("block {} appears twice", b.index));
                }
                if position_of(b.index) != Some(b.position) {
                    return fail(format!("block {} at {node} has a stale position", b.index));
                }
                let leaf = NodeId::new(b.position, depth).map_err(|_| {
                    Error::InvariantViolation(format!(
                        "block {} has position out of range",
                        b.index
                    ))
                })?;
                if !node.is_prefix_of(leaf) {
                    return fail(format!("block {} at {node} is off its path", b.index));
                }
            }
        }
        for b in self.queue.blocks() {
            if !seen.insert(b.index) {
                return fail(format!("block {} appears twice", b.index));
            }
            if position_of(b.index) != Some(b.position) {
                return fail(format!("queued block {} has a stale position", b.index));
            }
        }
        Ok(())
    }
}

/// A single ORAM level with its position map held in the cache.
#[derive(Debug, Clone)]
pub struct Oram {
    level: OramLevel,
    posmap: DirectPositionMap,
}

impl Oram {
    pub fn new(config: OramConfig) -> Result<Oram> {
        let posmap = DirectPositionMap::new(config.blocks());
        Ok(Oram {
            level: OramLevel::new(config)?,
            posmap,
        })
    }

    pub fn with_depth(config: OramConfig, depth: u8) -> Result<Oram> {
        let posmap = DirectPositionMap::new(config.blocks());
        Ok(Oram {
            level: OramLevel::with_depth(config, depth)?,
            posmap,
        })
    }

    pub fn read(&mut self, addr: u64) -> Result<Word> {
        self.access(Op::Read(addr))
    }

    /// Writes `value`, returning the previous word.
    pub fn write(&mut self, addr: u64, value: Word) -> Result<Word> {
        self.access(Op::Write(addr, value))
    }

    pub fn access(&mut self, op: Op) -> Result<Word> {
        self.level.access(op, &mut self.posmap)
    }

    pub fn access_observed(&mut self, op: Op, obs: &mut dyn ActionObserver) -> Result<Word> {
        self.level.access_observed(op, &mut self.posmap, obs)
    }

    pub fn level(&self) -> &OramLevel {
        &self.level
    }

    pub fn level_mut(&mut self) -> &mut OramLevel {
        &mut self.level
    }

    /// Runs single actions directly, for tests and scripted scenarios.
    pub fn parts_mut(&mut self) -> (&mut OramLevel, &mut DirectPositionMap) {
        (&mut self.level, &mut self.posmap)
    }

    pub fn posmap(&self) -> &DirectPositionMap {
        &self.posmap
    }

    pub fn check_invariants(&self) -> Result<()> {
        let map = &self.posmap;
        self.level.check_invariants(&|i| map.get(i))
    }
}

#[cfg(test)]
mod tests;
