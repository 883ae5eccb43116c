//! The cache-side queue: a FIFO of block handles plus a hash index.
//!
//! `find` removes a block from the index only; its FIFO entry goes stale and
//! is discarded when it reaches the head. `pop_front` pops exactly one FIFO
//! entry per call and returns nothing on a stale head, so every operation does
//! bounded work.

use std::collections::{HashMap, VecDeque};

use crate::error::{Error, Result};
use crate::tree::{Block, BlockIndex, Leaf};

#[derive(Debug, Clone, Copy)]
struct Ticket {
    index: BlockIndex,
    serial: u64,
}

#[derive(Debug, Clone)]
pub struct StashQueue {
    fifo: VecDeque<Ticket>,
    live: HashMap<BlockIndex, (u64, Block)>,
    next_serial: u64,
    q_max: usize,
}

impl StashQueue {
    pub fn new(q_max: usize) -> StashQueue {
        StashQueue {
            fifo: VecDeque::new(),
            live: HashMap::new(),
            next_serial: 0,
            q_max,
        }
    }

    pub fn q_max(&self) -> usize {
        self.q_max
    }

    fn admit(&mut self, block: Block) -> Result<Ticket> {
        if self.live.contains_key(&block.index) {
            return Err(Error::DuplicateIndex(block.index));
        }
        let ticket = Ticket {
            index: block.index,
            serial: self.next_serial,
        };
        self.next_serial += 1;
        self.live.insert(block.index, (ticket.serial, block));
        Ok(ticket)
    }

    /// Appends a block at the tail.
    pub fn insert(&mut self, block: Block) -> Result<()> {
        let ticket = self.admit(block)?;
        self.fifo.push_back(ticket);
        Ok(())
    }

    /// Returns a block to the head, ahead of everything else.
    pub fn push_front(&mut self, block: Block) -> Result<()> {
        let ticket = self.admit(block)?;
        self.fifo.push_front(ticket);
        Ok(())
    }

    /// Pops the FIFO head. A stale head (already taken by `find`) yields `None`.
    pub fn pop_front(&mut self) -> Option<Block> {
        let ticket = self.fifo.pop_front()?;
        match self.live.get(&ticket.index) {
            Some((serial, _)) if *serial == ticket.serial => {
                self.live.remove(&ticket.index).map(|(_, b)| b)
            }
            _ => None,
        }
    }

    /// Removes and returns the live block with this index and position.
    pub fn find(&mut self, index: BlockIndex, position: Leaf) -> Option<Block> {
        match self.live.get(&index) {
            Some((_, b)) if b.position == position => self.live.remove(&index).map(|(_, b)| b),
            _ => None,
        }
    }

    /// Number of live blocks; stale FIFO entries are not counted.
    pub fn live_size(&self) -> usize {
        self.live.len()
    }

    pub fn is_empty(&self) -> bool {
        self.live.is_empty()
    }

    /// FIFO length including stale entries.
    pub fn fifo_len(&self) -> usize {
        self.fifo.len()
    }

    /// Whether the abort threshold has been reached.
    pub fn at_limit(&self) -> bool {
        self.live.len() >= self.q_max
    }

    /// Live blocks in no particular order.
    pub fn blocks(&self) -> impl Iterator<Item = &Block> {
        self.live.values().map(|(_, b)| b)
    }

    /// Live blocks in FIFO order.
    pub fn blocks_in_order(&self) -> Vec<&Block> {
        self.fifo
            .iter()
            .filter_map(|t| match self.live.get(&t.index) {
                Some((s, b)) if *s == t.serial => Some(b),
                _ => None,
            })
            .collect()
    }
}
