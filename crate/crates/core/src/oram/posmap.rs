use crate::error::{Error, Result};
use crate::tree::{BlockIndex, Leaf};

/// The block-to-leaf table. A single call returns the stored position and
/// replaces it, so a recursive implementation costs one inner access.
pub trait PositionMap {
    fn read_and_update(&mut self, index: BlockIndex, new_pos: Leaf) -> Result<Option<Leaf>>;
}

/// A position map held entirely in the cache.
#[derive(Debug, Clone)]
pub struct DirectPositionMap {
    slots: Vec<Option<Leaf>>,
}

impl DirectPositionMap {
    pub fn new(entries: u64) -> DirectPositionMap {
        DirectPositionMap {
            slots: vec![None; entries as usize],
        }
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn get(&self, index: BlockIndex) -> Option<Leaf> {
        self.slots.get(index as usize).copied().flatten()
    }
}

impl PositionMap for DirectPositionMap {
    fn read_and_update(&mut self, index: BlockIndex, new_pos: Leaf) -> Result<Option<Leaf>> {
        let len = self.slots.len() as u64;
        let slot = self
            .slots
            .get_mut(index as usize)
            .ok_or(Error::AddressOutOfRange {
                addr: index,
                n: len,
            })?;
        Ok(slot.replace(new_pos))
    }
}
