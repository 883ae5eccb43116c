//! Versioned little-endian tree snapshots.
//!
//! Layout: magic `ORSN`, version (u16), depth (u8), α (u32), ℓ (u32), ℓ'
//! (u32). Then every node in heap order: occupancy (u32) followed by exactly
//! `capacity` slots of index (u64), position (u32) and α payload words
//! (u64 each). Unused slots are zero-filled, so a node's record size depends
//! only on its level.

use std::io::{Read, Write};

use super::{Block, TraceMode, Tree};
use crate::error::{Error, Result};

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"ORSN";
pub const SNAPSHOT_VERSION: u16 = 1;

pub fn write_snapshot<W: Write>(mut w: W, tree: &Tree) -> Result<()> {
    w.write_all(&SNAPSHOT_MAGIC)?;
    w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
    w.write_all(&[tree.depth()])?;
    w.write_all(&(tree.alpha() as u32).to_le_bytes())?;
    w.write_all(&(tree.bucket_capacity() as u32).to_le_bytes())?;
    w.write_all(&(tree.leaf_capacity() as u32).to_le_bytes())?;
    let zero_slot = vec![0u8; 12 + 8 * tree.alpha()];
    for (node, blocks) in tree.iter_nodes() {
        let cap = tree.capacity_of(node);
        w.write_all(&(blocks.len() as u32).to_le_bytes())?;
        for b in blocks {
            w.write_all(&b.index.to_le_bytes())?;
            w.write_all(&b.position.to_le_bytes())?;
            for word in b.payload.iter() {
                w.write_all(&word.to_le_bytes())?;
            }
        }
        for _ in blocks.len()..cap {
            w.write_all(&zero_slot)?;
        }
    }
    Ok(())
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

/// Restores a tree; the returned tree has an empty trace.
pub fn read_snapshot<R: Read>(mut r: R, trace_mode: TraceMode) -> Result<Tree> {
    let mut head = [0u8; 7];
    r.read_exact(&mut head)?;
    if head[0..4] != SNAPSHOT_MAGIC {
        return Err(Error::InvalidConfig("not a tree snapshot".into()));
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != SNAPSHOT_VERSION {
        return Err(Error::InvalidConfig(format!(
            "unsupported snapshot version {version}"
        )));
    }
    let depth = head[6];
    let alpha = read_u32(&mut r)? as usize;
    let bucket_capacity = read_u32(&mut r)? as usize;
    let leaf_capacity = read_u32(&mut r)? as usize;
    let mut tree = Tree::with_depth(depth, bucket_capacity, leaf_capacity, alpha, trace_mode)?;
    for slot in 0..tree.node_count() {
        let node = super::NodeId::from_heap_index(slot);
        let cap = tree.capacity_of(node);
        let occupancy = read_u32(&mut r)? as usize;
        if occupancy > cap {
            return Err(Error::CapacityExceeded {
                node,
                len: occupancy,
                capacity: cap,
            });
        }
        let mut blocks = Vec::with_capacity(occupancy);
        for i in 0..cap {
            let index = read_u64(&mut r)?;
            let position = read_u32(&mut r)?;
            let payload = (0..alpha)
                .map(|_| read_u64(&mut r))
                .collect::<Result<Vec<_>>>()?;
            if i < occupancy {
                blocks.push(Block {
                    index,
                    position,
                    payload: payload.into_boxed_slice(),
                });
            }
        }
        tree.nodes[slot] = blocks;
    }
    Ok(tree)
}
