//! Runs an ORAM level alongside a supermarket driven by the same actions.
//!
//! Fix a tree level `k`. Cashiers are the `2^(k+1)` nodes at level `k+1`. A
//! put-back that places a block with position `p` is an arrival at the
//! cashier on `p`'s path; a put-back that places nothing is an arrival at a
//! uniformly random cashier; a flush towards leaf `p*` is a service at the
//! cashier on `p*`'s path; fetches are not events. With furthest-first
//! carrying, the load of every bucket `γ` at level `k` never exceeds the
//! customers at cashiers `γ0` and `γ1` together.

use rand::Rng;

use crate::error::{Error, Result};
use crate::oram::{ActionObserver, Oram, OramConfig};
use crate::rng::{self, OramRng};
use crate::supermarket::{SupermarketState, UpsetRule};
use crate::tree::{Leaf, NodeId, Tree};
use crate::workload::Workload;

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct CouplingReport {
    pub ops: u64,
    pub level: u8,
    pub cashiers: usize,
    pub arrivals: u64,
    pub services: u64,
    pub checks: u64,
    pub violations: u64,
    pub first_violation: Option<String>,
    /// Upset customers with `φ = ℓ/2`.
    pub upsets: u64,
    /// Overflows from buckets at level `k`.
    pub overflows_at_level: u64,
    pub max_bucket_load: usize,
    pub max_queue_length: u64,
}

struct Coupler {
    level: u8,
    depth: u8,
    phi: u64,
    market: SupermarketState,
    rng: OramRng,
    report: CouplingReport,
}

impl Coupler {
    fn cashier(&self, leaf: Leaf) -> usize {
        (leaf >> (self.depth - self.level - 1)) as usize
    }

    fn check(&mut self, tree: &Tree) {
        self.report.checks += 1;
        for g in 0..(1u32 << self.level) {
            let node = NodeId::new(g, self.level).expect("level within depth");
            let load = tree.peek(node).len();
            self.report.max_bucket_load = self.report.max_bucket_load.max(load);
            let customers =
                self.market.lengths[2 * g as usize] + self.market.lengths[2 * g as usize + 1];
            if load as u64 > customers {
                self.report.violations += 1;
                if self.report.first_violation.is_none() {
                    self.report.first_violation = Some(format!(
                        "check {}: bucket {node} holds {load} blocks, cashiers hold {customers}",
                        self.report.checks
                    ));
                }
            }
        }
        let longest = self.market.lengths.iter().copied().max().unwrap_or(0);
        self.report.max_queue_length = self.report.max_queue_length.max(longest);
    }
}

impl ActionObserver for Coupler {
    fn on_put_back(&mut self, placed: Option<Leaf>, tree: &Tree) {
        let cashier = match placed {
            Some(p) => self.cashier(p),
            None => self.rng.random_range(0..self.market.cashiers()),
        };
        self.market.arrive(cashier, self.phi, UpsetRule::AtLeast);
        self.report.arrivals += 1;
        self.check(tree);
    }

    fn on_flush(&mut self, leaf: Leaf, tree: &Tree) {
        self.market.serve(self.cashier(leaf));
        self.report.services += 1;
        self.check(tree);
    }
}

/// Runs `ops` uniform random operations on an ORAM built from `config`,
/// checking dominance at level `k` after every put-back and flush. The tree
/// must have depth at least `k+1`.
pub fn coupled_run(config: OramConfig, k: u8, ops: u64) -> Result<CouplingReport> {
    let seed = config.seed;
    let phi = config.bucket_capacity as u64 / 2;
    let mut oram = Oram::new(config)?;
    let depth = oram.level().tree().depth();
    if depth < k + 1 {
        return Err(Error::InvalidConfig(format!(
            "coupling at level {k} needs depth ≥ {}, tree has depth {depth}",
            k + 1
        )));
    }
    let cashiers = 1usize << (k + 1);
    let mut coupler = Coupler {
        level: k,
        depth,
        phi,
        market: SupermarketState::new(cashiers),
        rng: rng::stream(seed, rng::STREAM_COUPLING, 0),
        report: CouplingReport {
            ops,
            level: k,
            cashiers,
            arrivals: 0,
            services: 0,
            checks: 0,
            violations: 0,
            first_violation: None,
            upsets: 0,
            overflows_at_level: 0,
            max_bucket_load: 0,
            max_queue_length: 0,
        },
    };
    coupler.check(oram.level().tree());
    let n = oram.level().config().n;
    for op in Workload::UniformRandom.generate(n, ops, seed) {
        oram.access_observed(op, &mut coupler)?;
    }
    let mut report = coupler.report;
    report.upsets = coupler.market.upset;
    report.overflows_at_level = oram.level().counters().overflows_per_level[k as usize];
    Ok(report)
}
