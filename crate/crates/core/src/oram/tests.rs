use super::*;
use crate::tree::{Mode, TraceMode};
use rand::SeedableRng;

fn traced(n: u64, seed: u64) -> Oram {
    Oram::new(
        OramConfig::new(n)
            .with_seed(seed)
            .with_trace_mode(TraceMode::Record),
    )
    .unwrap()
}

#[test]
fn fresh_cells_read_zero() {
    let mut o = traced(1 << 10, 1);
    assert_eq!(o.read(17).unwrap(), 0);
    assert_eq!(o.read(17).unwrap(), 0);
}

#[test]
fn read_your_write() {
    let mut o = traced(1 << 10, 2);
    assert_eq!(o.write(5, 7).unwrap(), 0);
    assert_eq!(o.read(5).unwrap(), 7);
    assert_eq!(o.write(5, 9).unwrap(), 7);
    assert_eq!(o.read(4).unwrap(), 0);
    assert_eq!(o.read(5).unwrap(), 9);
    assert!(matches!(
        o.read(1 << 10),
        Err(Error::AddressOutOfRange { .. })
    ));
}

#[test]
fn matches_plain_array() {
    let n = 1u64 << 12;
    let mut o = Oram::new(OramConfig::new(n).with_seed(3)).unwrap();
    let mut reference = vec![0u64; n as usize];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
    for step in 0..20_000 {
        let addr = rng.random_range(0..n);
        if rng.random_bool(0.5) {
            let v = rng.random();
            assert_eq!(o.write(addr, v).unwrap(), reference[addr as usize]);
            reference[addr as usize] = v;
        } else {
            assert_eq!(o.read(addr).unwrap(), reference[addr as usize]);
        }
        if step % 2000 == 0 {
            o.check_invariants().unwrap();
        }
    }
    o.check_invariants().unwrap();
}

#[test]
fn fetch_moves_root_block_to_queue() {
    let mut o = traced(1 << 10, 5);
    let (level, map) = o.parts_mut();
    let old = level.random_leaf();
    map.read_and_update(0, old).unwrap();
    level
        .tree
        .write_node(
            NodeId::ROOT,
            crate::tree::Bucket {
                capacity: 8,
                blocks: vec![Block::zeroed(0, old, 16)],
            },
        )
        .unwrap();
    level.fetch(Op::Read(3), map).unwrap();
    assert!(level.tree.peek(NodeId::ROOT).is_empty());
    let queued: Vec<_> = level.queue.blocks().collect();
    assert_eq!(queued.len(), 1);
    assert_eq!(Some(queued[0].position), map.get(0));
    o.check_invariants().unwrap();
}

#[test]
fn fetch_from_queue_still_scans_full_path() {
    let mut o = traced(1 << 12, 6);
    let (level, map) = o.parts_mut();
    level.fetch(Op::Write(0, 1), map).unwrap();
    let before = level.tree.trace().len();
    level.fetch(Op::Read(0), map).unwrap();
    let d = level.tree.depth() as u64;
    assert_eq!(level.tree.trace().len() - before, 2 * (d + 1));
    assert_eq!(level.queue.live_size(), 1);
}

/// Every placement of one block in a depth-1 tree: on either node of its
/// path, or in the queue, for both positions.
#[test]
fn exhaustive_single_block_placements() {
    let cfg = OramConfig::for_memory(64, 16).with_trace_mode(TraceMode::Record);
    for pos in 0..2u32 {
        for place in 0..3 {
            let mut o = Oram::with_depth(cfg.clone(), 1).unwrap();
            let (level, map) = o.parts_mut();
            map.read_and_update(1, pos).unwrap();
            let mut b = Block::zeroed(1, pos, 16);
            b.payload[2] = 42;
            match place {
                0 => level.tree.store(NodeId::ROOT, vec![b]).unwrap(),
                1 => level
                    .tree
                    .store(level.tree.leaf_node(pos).unwrap(), vec![b])
                    .unwrap(),
                _ => level.queue.insert(b).unwrap(),
            }
            assert_eq!(level.fetch(Op::Read(18), map).unwrap(), 42);
            assert_eq!(level.tree.block_count(), 0);
            let q: Vec<_> = level.queue.blocks().collect();
            assert_eq!(q.len(), 1);
            assert!(q[0].position < 2);
            assert_eq!(map.get(1), Some(q[0].position));
            o.check_invariants().unwrap();
        }
    }
}

#[test]
fn flush_count_distribution() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let samples = 1_000_000;
    let mut zeros = 0u64;
    let mut ones = 0u64;
    let mut total = 0u64;
    for _ in 0..samples {
        let k = sample_flush_count(&mut rng, 2.0 / 3.0);
        zeros += (k == 0) as u64;
        ones += (k == 1) as u64;
        total += k as u64;
    }
    let f = samples as f64;
    assert!((zeros as f64 / f - 1.0 / 3.0).abs() < 0.003);
    assert!((ones as f64 / f - 2.0 / 9.0).abs() < 0.003);
    assert!((total as f64 / f - 2.0).abs() < 0.01);
}

#[test]
fn put_back_on_empty_queue_touches_root_only() {
    let mut o = traced(1 << 10, 7);
    let level = o.level_mut();
    level.put_back(&mut NoObserver).unwrap();
    let ev = level.tree.trace().events();
    assert_eq!(ev.len(), 2);
    assert!(ev
        .iter()
        .all(|e| e.node.is_root() && e.phase == Phase::PutBack));
    assert_eq!((ev[0].mode, ev[1].mode), (Mode::Read, Mode::Write));
    assert_eq!(level.counters.empty_put_backs, 1);
    assert_eq!(level.tree.block_count(), 0);
}

#[test]
fn put_back_moves_block_to_root() {
    let mut o = traced(1 << 10, 8);
    let level = o.level_mut();
    level.queue.insert(Block::zeroed(2, 1, 16)).unwrap();
    level.put_back(&mut NoObserver).unwrap();
    assert_eq!(level.tree.peek(NodeId::ROOT).len(), 1);
    assert!(level.queue.is_empty());
}

#[test]
fn put_back_skips_stale_head() {
    let mut o = traced(1 << 10, 9);
    let level = o.level_mut();
    level.queue.insert(Block::zeroed(2, 1, 16)).unwrap();
    level.queue.insert(Block::zeroed(3, 1, 16)).unwrap();
    level.queue.find(2, 1).unwrap();
    level.put_back(&mut NoObserver).unwrap();
    assert!(level.tree.peek(NodeId::ROOT).is_empty());
    assert_eq!(level.queue.live_size(), 1);
    level.put_back(&mut NoObserver).unwrap();
    assert_eq!(level.tree.peek(NodeId::ROOT)[0].index, 3);
}

#[test]
fn put_back_bounces_when_root_full() {
    let mut o = traced(1 << 10, 10);
    let level = o.level_mut();
    let cap = level.config.bucket_capacity;
    for i in 0..=cap as u64 {
        level.queue.insert(Block::zeroed(i, 0, 16)).unwrap();
    }
    for _ in 0..cap {
        level.put_back(&mut NoObserver).unwrap();
    }
    assert_eq!(level.tree.peek(NodeId::ROOT).len(), cap);
    level.put_back(&mut NoObserver).unwrap();
    assert_eq!(level.counters.root_full_bounces, 1);
    assert_eq!(level.queue.live_size(), 1);
    assert_eq!(level.queue.blocks_in_order()[0].index, cap as u64);
}

#[test]
fn flush_on_empty_tree() {
    let mut o = traced(1 << 12, 12);
    let (level, map) = o.parts_mut();
    level.flush(map, &mut NoObserver).unwrap();
    let d = level.tree.depth() as u64;
    assert_eq!(level.tree.trace().len(), 2 * (d + 1));
    assert_eq!(level.tree.block_count(), 0);
}

#[test]
fn flush_lands_block_on_its_leaf() {
    let cfg = OramConfig::new(1 << 14).with_trace_mode(TraceMode::Record);
    let mut o = Oram::with_depth(cfg, 4).unwrap();
    let (level, map) = o.parts_mut();
    map.read_and_update(0, 0b1011).unwrap();
    level
        .tree
        .store(NodeId::ROOT, vec![Block::zeroed(0, 0b1011, 16)])
        .unwrap();
    level.flush_along(0b1011, map, &mut NoObserver).unwrap();
    assert_eq!(level.tree.peek(NodeId::new(0b1011, 4).unwrap()).len(), 1);
    assert_eq!(level.tree.block_count(), 1);
    o.check_invariants().unwrap();
}

#[test]
fn flush_carries_furthest_block() {
    // p* = 0000; a diverges after 1 bit, b after 3
    let cfg = OramConfig::new(1 << 14).with_trace_mode(TraceMode::Record);
    let mut o = Oram::with_depth(cfg, 4).unwrap();
    let (level, map) = o.parts_mut();
    let a = Block::zeroed(1, 0b0100, 16);
    let b = Block::zeroed(2, 0b0001, 16);
    map.read_and_update(1, a.position).unwrap();
    map.read_and_update(2, b.position).unwrap();
    level.tree.store(NodeId::ROOT, vec![a, b]).unwrap();
    level.flush_along(0, map, &mut NoObserver).unwrap();
    assert_eq!(level.tree.peek(NodeId::ROOT)[0].index, 1);
    assert_eq!(level.tree.peek(NodeId::new(0b000, 3).unwrap())[0].index, 2);
    o.check_invariants().unwrap();
}

#[test]
fn shallow_carry_mutant_carries_nearest() {
    let cfg = OramConfig::new(1 << 14).with_mutation(Mutation::ShallowCarry);
    let mut o = Oram::with_depth(cfg, 4).unwrap();
    let (level, map) = o.parts_mut();
    map.read_and_update(1, 0b0100).unwrap();
    map.read_and_update(2, 0b0001).unwrap();
    level
        .tree
        .store(
            NodeId::ROOT,
            vec![Block::zeroed(1, 0b0100, 16), Block::zeroed(2, 0b0001, 16)],
        )
        .unwrap();
    level.flush_along(0, map, &mut NoObserver).unwrap();
    assert_eq!(level.tree.peek(NodeId::ROOT)[0].index, 2);
    assert_eq!(level.tree.peek(NodeId::new(0, 1).unwrap())[0].index, 1);
}

#[test]
fn overflow_resamples_and_requeues() {
    let mut o = traced(1 << 12, 13);
    let (level, map) = o.parts_mut();
    map.read_and_update(4, 0).unwrap();
    level.overflow(Block::zeroed(4, 0, 16), map).unwrap();
    assert_eq!(level.queue.live_size(), 1);
    let b = level.queue.blocks().next().unwrap();
    assert_eq!(map.get(4), Some(b.position));
    assert_eq!(level.counters.overflows, 1);
}

#[test]
fn overflow_fires_at_half_capacity() {
    // four blocks on side 0 of the root, ℓ = 8
    let cfg = OramConfig::new(1 << 14);
    let mut o = Oram::with_depth(cfg, 4).unwrap();
    let (level, map) = o.parts_mut();
    let blocks: Vec<_> = (0..4).map(|i| Block::zeroed(i, 0b0111, 16)).collect();
    for b in &blocks {
        map.read_and_update(b.index, b.position).unwrap();
    }
    level.tree.store(NodeId::ROOT, blocks).unwrap();
    // p* on side 1: nothing can be carried, side 0 holds 4 ≥ ℓ/2
    level.flush_along(0b1000, map, &mut NoObserver).unwrap();
    assert_eq!(level.counters.overflows_per_level[0], 1);
    assert_eq!(level.tree.peek(NodeId::ROOT).len(), 3);
    assert_eq!(level.queue.live_size(), 1);
    o.check_invariants().unwrap();

    let mut cfg = OramConfig::new(1 << 14);
    cfg.overflow_rule = OverflowRule::MoreThanHalf;
    let mut o = Oram::with_depth(cfg, 4).unwrap();
    let (level, map) = o.parts_mut();
    let blocks: Vec<_> = (0..4).map(|i| Block::zeroed(i, 0b0111, 16)).collect();
    for b in &blocks {
        map.read_and_update(b.index, b.position).unwrap();
    }
    level.tree.store(NodeId::ROOT, blocks).unwrap();
    level.flush_along(0b1000, map, &mut NoObserver).unwrap();
    assert_eq!(level.counters.overflows, 0);
}

#[test]
fn queue_abort_halts_instance() {
    let mut cfg = OramConfig::new(1 << 10);
    cfg.q_max = 1;
    let mut o = Oram::new(cfg).unwrap();
    let err = o.read(0).unwrap_err();
    let ev = err.abort_event().unwrap();
    assert_eq!(ev.kind, AbortKind::AbortQueue);
    assert_eq!(ev.op_serial, 1);
    assert!(matches!(o.read(0), Err(Error::Halted(_))));
}

#[test]
fn leaf_abort() {
    let mut cfg = OramConfig::new(1 << 10);
    cfg.bucket_capacity = 4;
    cfg.leaf_capacity = 4;
    let mut o = Oram::new(cfg).unwrap();
    let mut result = Ok(0);
    for i in 0..5000 {
        result = o.write(i % (1 << 10), i);
        if result.is_err() {
            break;
        }
    }
    let ev = result.unwrap_err().abort_event().unwrap();
    assert!(matches!(
        ev.kind,
        AbortKind::AbortLeaf | AbortKind::AbortQueue
    ));
}

#[test]
fn every_access_scans_one_plus_flush_count_paths() {
    let mut o = traced(1 << 12, 14);
    for i in 0..300 {
        o.write(i * 7 % 4096, i).unwrap();
    }
    let c = o.level().counters();
    let flushes: u64 = c
        .flush_count_histogram
        .iter()
        .enumerate()
        .map(|(k, &m)| k as u64 * m)
        .sum();
    assert_eq!(c.flushes, flushes);
    assert_eq!(c.path_scans, c.accesses + c.flushes);
    assert_eq!(c.put_backs, 2 * c.accesses);
    let d = o.level().tree().depth() as u64;
    assert_eq!(
        o.level().tree().trace().len(),
        c.path_scans * 2 * (d + 1) + 2 * c.put_backs
    );
    assert_eq!(c.actions.len() as u64, c.put_backs + c.flushes);
}

#[test]
fn quiescent_internal_occupancy_bound() {
    let mut o = Oram::new(OramConfig::new(1 << 14).with_seed(15)).unwrap();
    let cap = o.level().config().bucket_capacity;
    for i in 0..20_000u64 {
        o.write(i.wrapping_mul(2654435761) % (1 << 14), i).unwrap();
        if i % 500 == 0 {
            let t = o.level().tree();
            for (node, blocks) in t.iter_nodes() {
                if !node.is_root() && node.level() < t.depth() {
                    assert!(blocks.len() <= cap - 2, "{node} holds {}", blocks.len());
                }
            }
        }
    }
    assert!(o.level().counters().max_internal_load <= cap);
}

#[test]
fn same_seed_same_run() {
    let run = |seed| {
        let mut o = traced(1 << 10, seed);
        for i in 0..100 {
            o.write(i, i).unwrap();
        }
        o.level().tree().trace().events().to_vec()
    };
    assert_eq!(run(3), run(3));
    assert_ne!(run(3), run(4));
}
