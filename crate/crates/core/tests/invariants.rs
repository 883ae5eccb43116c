//! Property tests: the queue against a linear-scan model, and the
//! recursive ORAM against a plain array with invariants checked throughout.

use std::collections::VecDeque;

use proptest::prelude::*;

use tree_oram::oram::{Op, OramConfig};
use tree_oram::recursive::{OramStack, RecursiveConfig};
use tree_oram::tree::Block;
use tree_oram::workload::ReferenceRam;
use tree_oram::StashQueue;

#[derive(Debug, Clone)]
enum QueueOp {
    Insert(u64, u32),
    PushFront(u64, u32),
    Pop,
    Find(u64, u32),
}

fn queue_op() -> impl Strategy<Value = QueueOp> {
    prop_oneof![
        (0u64..8, 0u32..4).prop_map(|(i, p)| QueueOp::Insert(i, p)),
        (0u64..8, 0u32..4).prop_map(|(i, p)| QueueOp::PushFront(i, p)),
        Just(QueueOp::Pop),
        (0u64..8, 0u32..4).prop_map(|(i, p)| QueueOp::Find(i, p)),
    ]
}

/// FIFO slots; a slot emptied by `find` stays in line until popped.
#[derive(Default)]
struct Model {
    slots: VecDeque<Option<(u64, u32)>>,
}

impl Model {
    fn live(&self) -> impl Iterator<Item = &(u64, u32)> {
        self.slots.iter().flatten()
    }

    fn contains(&self, i: u64) -> bool {
        self.live().any(|&(j, _)| j == i)
    }
}

fn op_strategy(n: u64) -> impl Strategy<Value = Op> {
    prop_oneof![
        (0..n).prop_map(Op::Read),
        (0..n, 1u64..1000).prop_map(|(a, v)| Op::Write(a, v)),
    ]
}

proptest! {
    #[test]
    fn queue_matches_model(ops in proptest::collection::vec(queue_op(), 0..200)) {
        let mut q = StashQueue::new(usize::MAX);
        let mut m = Model::default();
        for op in ops {
            match op {
                QueueOp::Insert(i, p) | QueueOp::PushFront(i, p) => {
                    let front = matches!(op, QueueOp::PushFront(..));
                    let block = Block::zeroed(i, p, 1);
                    let r = if front { q.push_front(block) } else { q.insert(block) };
                    prop_assert_eq!(r.is_err(), m.contains(i));
                    if r.is_ok() {
                        if front {
                            m.slots.push_front(Some((i, p)));
                        } else {
                            m.slots.push_back(Some((i, p)));
                        }
                    }
                }
                QueueOp::Pop => {
                    let got = q.pop_front().map(|b| (b.index, b.position));
                    prop_assert_eq!(got, m.slots.pop_front().flatten());
                }
                QueueOp::Find(i, p) => {
                    let got = q.find(i, p).map(|b| (b.index, b.position));
                    let slot = m.slots.iter_mut().find(|s| **s == Some((i, p)));
                    prop_assert_eq!(got, slot.and_then(|s| s.take()));
                }
            }
            prop_assert_eq!(q.live_size(), m.live().count());
            prop_assert_eq!(q.fifo_len(), m.slots.len());
            let order: Vec<(u64, u32)> = q.blocks_in_order().iter().map(|b| (b.index, b.position)).collect();
            prop_assert_eq!(order, m.live().copied().collect::<Vec<_>>());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn recursive_oram_is_a_ram(
        seed in any::<u64>(),
        ops in proptest::collection::vec(op_strategy(4096), 1..400),
    ) {
        let n = 4096;
        let cfg = RecursiveConfig::new(OramConfig::new(n).with_seed(seed)).with_cutoff(16);
        let mut stack = OramStack::build(cfg).unwrap();
        prop_assert_eq!(stack.levels().len(), 2);
        let mut reference = ReferenceRam::new(n);
        for (i, &op) in ops.iter().enumerate() {
            prop_assert_eq!(stack.access(op).unwrap(), reference.apply(op));
            if i % 50 == 0 {
                stack.check_invariants().unwrap();
            }
        }
        stack.check_invariants().unwrap();
        for level in stack.levels() {
            let c = level.counters();
            prop_assert!(c.max_queue < level.config().q_max);
            prop_assert!(c.max_leaf_load <= level.config().leaf_capacity);
            prop_assert_eq!(c.put_backs, 2 * c.accesses);
        }
    }
}
