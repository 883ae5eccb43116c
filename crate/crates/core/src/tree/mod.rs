//! The untrusted external memory: a full binary tree of fixed-capacity buckets.
//!
//! Every node read or write goes through [`Tree`] and is appended to its
//! [`AccessTrace`], which is what an observer of the memory bus sees.

mod snapshot;
mod trace;

use std::fmt;
use std::str::FromStr;

pub use snapshot::{read_snapshot, write_snapshot, SNAPSHOT_MAGIC, SNAPSHOT_VERSION};
pub use trace::{
    read_trace_binary, read_trace_text, write_trace_binary, write_trace_text, AccessTrace, Mode,
    Phase, TraceEvent, TraceMode, TRACE_MAGIC, TRACE_VERSION,
};

use crate::error::{Error, Result};

/// Leaf identifier in `[0, L)`.
pub type Leaf = u32;
/// Block index in `[0, n/α)`.
pub type BlockIndex = u64;
/// One memory word. Fresh words read as 0.
pub type Word = u64;

/// Maximum supported tree depth.
pub const MAX_DEPTH: u8 = 31;

/// A node addressed by the binary string leading to it from the root.
///
/// `bits` holds the string most-significant-first in its low `len` bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId {
    bits: u32,
    len: u8,
}

impl NodeId {
    pub const ROOT: NodeId = NodeId { bits: 0, len: 0 };

    pub fn new(bits: u32, len: u8) -> Result<NodeId> {
        if len > MAX_DEPTH || (len < 32 && bits >> len != 0) {
            return Err(Error::InvalidNode(NodeId { bits, len }));
        }
        Ok(NodeId { bits, len })
    }

    pub fn bits(self) -> u32 {
        self.bits
    }

    /// Depth of the node; the root has level 0.
    pub fn level(self) -> u8 {
        self.len
    }

    pub fn is_root(self) -> bool {
        self.len == 0
    }

    pub fn child(self, side: u8) -> NodeId {
        debug_assert!(side < 2 && self.len < MAX_DEPTH);
        NodeId {
            bits: (self.bits << 1) | side as u32,
            len: self.len + 1,
        }
    }

    pub fn parent(self) -> Option<NodeId> {
        (self.len > 0).then(|| NodeId {
            bits: self.bits >> 1,
            len: self.len - 1,
        })
    }

    /// The ancestor at `level` (itself when `level == self.level()`).
    pub fn ancestor(self, level: u8) -> NodeId {
        debug_assert!(level <= self.len);
        NodeId {
            bits: self.bits >> (self.len - level),
            len: level,
        }
    }

    pub fn is_prefix_of(self, other: NodeId) -> bool {
        self.len <= other.len && other.ancestor(self.len) == self
    }

    /// Breadth-first (heap) slot of the node.
    pub fn heap_index(self) -> usize {
        ((1usize << self.len) - 1) + self.bits as usize
    }

    pub fn from_heap_index(idx: usize) -> NodeId {
        let len = (usize::BITS - (idx + 1).leading_zeros() - 1) as u8;
        NodeId {
            bits: (idx + 1 - (1usize << len)) as u32,
            len,
        }
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.len == 0 {
            return f.write_str("-");
        }
        for i in (0..self.len).rev() {
            f.write_str(if (self.bits >> i) & 1 == 1 { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for NodeId {
    type Err = Error;

    fn from_str(s: &str) -> Result<NodeId> {
        if s == "-" {
            return Ok(NodeId::ROOT);
        }
        if s.is_empty() || s.len() > MAX_DEPTH as usize {
            return Err(Error::MalformedTrace(format!("bad node id {s:?}")));
        }
        let mut bits = 0u32;
        for c in s.chars() {
            bits = (bits << 1)
                | match c {
                    '0' => 0,
                    '1' => 1,
                    _ => return Err(Error::MalformedTrace(format!("bad node id {s:?}"))),
                };
        }
        Ok(NodeId {
            bits,
            len: s.len() as u8,
        })
    }
}

/// The `(i, p, val)` triple: `payload` holds α words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub index: BlockIndex,
    pub position: Leaf,
    pub payload: Box<[Word]>,
}

impl Block {
    pub fn zeroed(index: BlockIndex, position: Leaf, alpha: usize) -> Block {
        Block {
            index,
            position,
            payload: vec![0; alpha].into_boxed_slice(),
        }
    }
}

/// Length of the common most-significant-bit prefix of two depth-`depth` leaves.
pub fn common_prefix_len(a: Leaf, b: Leaf, depth: u8) -> u8 {
    if depth == 0 {
        return 0;
    }
    let diff = (a ^ b) << (32 - depth as u32);
    if diff == 0 {
        depth
    } else {
        diff.leading_zeros() as u8
    }
}

/// Bit `level` (counted from the root) of a depth-`depth` leaf id.
pub fn leaf_bit(leaf: Leaf, level: u8, depth: u8) -> u8 {
    ((leaf >> (depth - 1 - level)) & 1) as u8
}

/// Contents of one node. Empty slots are not materialised.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Bucket {
    pub capacity: usize,
    pub blocks: Vec<Block>,
}

impl Bucket {
    pub fn empty(capacity: usize) -> Bucket {
        Bucket {
            capacity,
            blocks: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.blocks.len() >= self.capacity
    }
}

/// Number of leaves for a memory of `n` words in blocks of `alpha`: the
/// smallest power of two at least `2(n/α) / (log₂n · log₂log₂n)`, with both
/// logarithms clamped to at least 1.
pub fn leaf_count(n: u64, alpha: usize) -> u64 {
    let blocks = n.div_ceil(alpha as u64) as f64;
    let lg = (n as f64).log2().max(1.0);
    let lglg = lg.log2().max(1.0);
    let target = 2.0 * blocks / (lg * lglg);
    let mut leaves = 1u64;
    while (leaves as f64) < target {
        leaves <<= 1;
    }
    leaves
}

/// The external memory tree.
#[derive(Debug, Clone)]
pub struct Tree {
    depth: u8,
    bucket_capacity: usize,
    leaf_capacity: usize,
    alpha: usize,
    nodes: Vec<Vec<Block>>,
    trace: AccessTrace,
}

impl Tree {
    /// An empty tree of the given depth.
    pub fn with_depth(
        depth: u8,
        bucket_capacity: usize,
        leaf_capacity: usize,
        alpha: usize,
        trace_mode: TraceMode,
    ) -> Result<Tree> {
        if depth > MAX_DEPTH {
            return Err(Error::InvalidConfig(format!(
                "depth {depth} exceeds {MAX_DEPTH}"
            )));
        }
        if alpha == 0 || bucket_capacity == 0 || leaf_capacity == 0 {
            return Err(Error::InvalidConfig("zero capacity or block size".into()));
        }
        let node_count = (1usize << (depth as u32 + 1)) - 1;
        Ok(Tree {
            depth,
            bucket_capacity,
            leaf_capacity,
            alpha,
            nodes: vec![Vec::new(); node_count],
            trace: AccessTrace::new(trace_mode),
        })
    }

    /// Sizes the tree for a memory of `n` words (see [`leaf_count`]).
    pub fn build(
        n: u64,
        alpha: usize,
        bucket_capacity: usize,
        leaf_capacity: usize,
        trace_mode: TraceMode,
    ) -> Result<Tree> {
        if alpha == 0 || n < alpha as u64 {
            return Err(Error::InvalidConfig(format!(
                "memory of {n} words cannot hold a block of {alpha} words"
            )));
        }
        let leaves = leaf_count(n, alpha);
        let depth = leaves.trailing_zeros() as u8;
        Tree::with_depth(depth, bucket_capacity, leaf_capacity, alpha, trace_mode)
    }

    pub fn depth(&self) -> u8 {
        self.depth
    }

    pub fn leaves(&self) -> u64 {
        1u64 << self.depth
    }

    pub fn alpha(&self) -> usize {
        self.alpha
    }

    pub fn bucket_capacity(&self) -> usize {
        self.bucket_capacity
    }

    pub fn leaf_capacity(&self) -> usize {
        self.leaf_capacity
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn capacity_of(&self, node: NodeId) -> usize {
        if node.level() == self.depth {
            self.leaf_capacity
        } else {
            self.bucket_capacity
        }
    }

    pub fn contains(&self, node: NodeId) -> bool {
        node.level() <= self.depth
    }

    fn slot(&self, node: NodeId) -> Result<usize> {
        if self.contains(node) {
            Ok(node.heap_index())
        } else {
            Err(Error::InvalidNode(node))
        }
    }

    pub fn leaf_node(&self, leaf: Leaf) -> Result<NodeId> {
        if leaf as u64 >= self.leaves() {
            return Err(Error::LeafOutOfRange {
                leaf: leaf as u64,
                leaves: self.leaves(),
            });
        }
        Ok(NodeId {
            bits: leaf,
            len: self.depth,
        })
    }

    /// Root-to-leaf path `p_0 … p_d`, extending one leaf bit at a time.
    pub fn path_to_leaf(&self, leaf: Leaf) -> Result<Vec<NodeId>> {
        let node = self.leaf_node(leaf)?;
        Ok((0..=self.depth).map(|l| node.ancestor(l)).collect())
    }

    /// Physical read: returns a copy of the bucket and logs the access.
    pub fn read_node(&mut self, node: NodeId) -> Result<Bucket> {
        let slot = self.slot(node)?;
        self.trace.record(node, Mode::Read);
        Ok(Bucket {
            capacity: self.capacity_of(node),
            blocks: self.nodes[slot].clone(),
        })
    }

    /// Physical write: replaces the bucket and logs the access.
    pub fn write_node(&mut self, node: NodeId, bucket: Bucket) -> Result<()> {
        self.store(node, bucket.blocks)
    }

    /// Physical read that moves the contents into the cache instead of
    /// copying them. Must be followed by [`Tree::store`] on the same node.
    pub(crate) fn load(&mut self, node: NodeId) -> Result<Vec<Block>> {
        let slot = self.slot(node)?;
        self.trace.record(node, Mode::Read);
        Ok(std::mem::take(&mut self.nodes[slot]))
    }

    pub(crate) fn store(&mut self, node: NodeId, blocks: Vec<Block>) -> Result<()> {
        let slot = self.slot(node)?;
        let capacity = self.capacity_of(node);
        if blocks.len() > capacity {
            return Err(Error::CapacityExceeded {
                node,
                len: blocks.len(),
                capacity,
            });
        }
        debug_assert!(
            {
                let mut idx: Vec<_> = blocks.iter().map(|b| b.index).collect();
                idx.sort_unstable();
                idx.windows(2).all(|w| w[0] != w[1])
            },
            "duplicate block index in bucket at {node}"
        );
        self.trace.record(node, Mode::Write);
        self.nodes[slot] = blocks;
        Ok(())
    }

    /// Cache-side inspection of a bucket without a physical access. Used by
    /// invariant checkers and the coupling harness; never by the ORAM itself.
    pub fn peek(&self, node: NodeId) -> &[Block] {
        &self.nodes[node.heap_index()]
    }

    /// All nodes with their contents, in heap order, without tracing.
    pub fn iter_nodes(&self) -> impl Iterator<Item = (NodeId, &[Block])> {
        self.nodes
            .iter()
            .enumerate()
            .map(|(i, b)| (NodeId::from_heap_index(i), b.as_slice()))
    }

    pub fn block_count(&self) -> usize {
        self.nodes.iter().map(Vec::len).sum()
    }

    pub fn trace(&self) -> &AccessTrace {
        &self.trace
    }

    pub fn trace_mut(&mut self) -> &mut AccessTrace {
        &mut self.trace
    }

    /// External memory footprint in words, counting every slot at its fixed
    /// serialized size (index, position and α payload words).
    pub fn memory_words(&self) -> u64 {
        let internal = (1u64 << self.depth) - 1;
        let slots =
            internal * self.bucket_capacity as u64 + self.leaves() * self.leaf_capacity as u64;
        slots * (self.alpha as u64 + 2)
    }
}
