//! Statistical checks on access traces: path extraction, leaf uniformity,
//! the paths-per-operation law, the put-back/flush action stream, and
//! two-workload indistinguishability.

pub mod stats;

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::harness::{run_recorded, RecordedRun};
use crate::oram::{Action, OramConfig};
use crate::rng;
use crate::tree::{Leaf, Mode, NodeId, Phase, TraceEvent};
use crate::workload::Workload;

/// Significance level used by every test.
pub const ALPHA_LEVEL: f64 = 0.01;

/// One root-to-leaf scan found in a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct PathRecord {
    pub op_serial: u64,
    pub phase: Phase,
    pub leaf: Leaf,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    /// The p-value or other quantity compared against `threshold`.
    pub p_value: f64,
    pub threshold: f64,
    pub pass: bool,
    pub samples: u64,
    pub seed: u64,
    pub detail: String,
}

impl TestReport {
    fn from_chi(
        name: &str,
        chi: stats::ChiSquare,
        samples: u64,
        seed: u64,
        detail: String,
    ) -> TestReport {
        TestReport {
            name: name.into(),
            statistic: chi.statistic,
            p_value: chi.p_value,
            threshold: ALPHA_LEVEL,
            pass: chi.p_value > ALPHA_LEVEL,
            samples,
            seed,
            detail,
        }
    }
}

/// Splits a trace into path scans. A put-back is a root read+write and
/// yields nothing; a fetch or flush scan is a read+write of every node from
/// the root to a leaf at `depth`, each node extending the previous by a bit.
pub fn extract_op_paths(events: &[TraceEvent], depth: u8) -> Result<Vec<PathRecord>> {
    let bad = |i: usize, m: &str| Err(Error::MalformedTrace(format!("event {i}: {m}")));
    let mut out = Vec::new();
    let mut i = 0;
    while i < events.len() {
        let head = events[i];
        let len = match head.phase {
            Phase::PutBack => 1,
            Phase::Fetch | Phase::Flush => depth as usize + 1,
        };
        if i + 2 * len > events.len() {
            return bad(i, "truncated scan");
        }
        let mut prev: Option<NodeId> = None;
        for k in 0..len {
            let (r, w) = (events[i + 2 * k], events[i + 2 * k + 1]);
            if r.mode != Mode::Read || w.mode != Mode::Write || r.node != w.node {
                return bad(i + 2 * k, "expected a read and write of the same node");
            }
            for e in [r, w] {
                if e.op_serial != head.op_serial || e.phase != head.phase {
                    return bad(i + 2 * k, "scan interrupted");
                }
            }
            let ok = match prev {
                None => r.node.is_root(),
                Some(p) => r.node.level() == p.level() + 1 && p.is_prefix_of(r.node),
            };
            if !ok {
                return bad(i + 2 * k, "node does not extend the path");
            }
            prev = Some(r.node);
        }
        if head.phase != Phase::PutBack {
            out.push(PathRecord {
                op_serial: head.op_serial,
                phase: head.phase,
                leaf: prev.expect("nonempty path").bits(),
            });
        }
        i += 2 * len;
    }
    Ok(out)
}

pub fn leaf_histogram(paths: &[PathRecord], leaves: u64) -> Vec<u64> {
    let mut h = vec![0u64; leaves as usize];
    for p in paths {
        h[p.leaf as usize] += 1;
    }
    h
}

/// `h[k]` = number of operations that scanned `k` paths.
pub fn paths_per_op_histogram(paths: &[PathRecord]) -> Vec<u64> {
    let mut per_op: BTreeMap<u64, usize> = BTreeMap::new();
    for p in paths {
        *per_op.entry(p.op_serial).or_default() += 1;
    }
    let mut h = Vec::new();
    for &k in per_op.values() {
        if h.len() <= k {
            h.resize(k + 1, 0);
        }
        h[k] += 1;
    }
    h
}

/// `Pr[1 + N₁ + N₂ = k]` for `N_i` geometric with continue probability `p`:
/// `k·p^(k−1)·(1−p)²` for `k ≥ 1`.
pub fn paths_per_op_pmf(k: usize, p: f64) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let j = (k - 1) as f64;
    (j + 1.0) * p.powf(j) * (1.0 - p).powi(2)
}

/// Chi-square fit of leaf frequencies to the uniform law on `leaves` leaves.
pub fn uniformity_test(paths: &[PathRecord], leaves: u64, seed: u64) -> Result<TestReport> {
    let needed = 50 * leaves;
    if (paths.len() as u64) < needed {
        return Err(Error::InsufficientSamples {
            needed,
            got: paths.len() as u64,
        });
    }
    let h = leaf_histogram(paths, leaves);
    let chi = stats::goodness_of_fit(&h, &vec![1.0 / leaves as f64; leaves as usize]);
    let detail = format!("leaves={leaves} dof={}", chi.dof);
    Ok(TestReport::from_chi(
        "uniformity",
        chi,
        paths.len() as u64,
        seed,
        detail,
    ))
}

/// Independence of consecutive path leaves, on the leaves' top bits (at
/// most 8 classes) so that the table stays well populated.
pub fn serial_independence_test(
    paths: &[PathRecord],
    leaves: u64,
    seed: u64,
) -> Result<TestReport> {
    let depth = leaves.trailing_zeros();
    let bits = depth.min(3);
    let classes = 1usize << bits;
    let needed = 50 * (classes * classes) as u64;
    if (paths.len() as u64) < needed {
        return Err(Error::InsufficientSamples {
            needed,
            got: paths.len() as u64,
        });
    }
    let class = |l: Leaf| (l >> (depth - bits)) as usize;
    let mut table = vec![vec![0u64; classes]; classes];
    for w in paths.windows(2) {
        table[class(w[0].leaf)][class(w[1].leaf)] += 1;
    }
    let chi = stats::independence(&table);
    let detail = format!("classes={classes}");
    Ok(TestReport::from_chi(
        "serial-independence",
        chi,
        paths.len() as u64 - 1,
        seed,
        detail,
    ))
}

/// Fits the per-operation path count to `1 + N₁ + N₂`.
pub fn paths_per_op_test(
    paths: &[PathRecord],
    continue_prob: f64,
    seed: u64,
) -> Result<TestReport> {
    let h = paths_per_op_histogram(paths);
    let ops: u64 = h.iter().sum();
    if ops < 100 {
        return Err(Error::InsufficientSamples {
            needed: 100,
            got: ops,
        });
    }
    let probs: Vec<f64> = (0..h.len())
        .map(|k| paths_per_op_pmf(k, continue_prob))
        .collect();
    let chi = stats::goodness_of_fit(&h, &probs);
    let mean = h
        .iter()
        .enumerate()
        .map(|(k, &c)| k as f64 * c as f64)
        .sum::<f64>()
        / ops as f64;
    let detail = format!(
        "mean_paths={mean:.4} expected={:.4}",
        1.0 + 2.0 * continue_prob / (1.0 - continue_prob)
    );
    Ok(TestReport::from_chi("paths-per-op", chi, ops, seed, detail))
}

pub const MIN_ACTIONS: u64 = 100_000;

/// Put-back frequency within three binomial standard deviations of 1/3, and
/// lag-1 independence by a 2×2 contingency test.
pub fn action_sequence_test(actions: &[Action], seed: u64) -> Result<TestReport> {
    let n = actions.len() as u64;
    if n < MIN_ACTIONS {
        return Err(Error::InsufficientSamples {
            needed: MIN_ACTIONS,
            got: n,
        });
    }
    let put_backs = actions.iter().filter(|&&a| a == Action::PutBack).count() as f64;
    let freq = put_backs / n as f64;
    let sigma = (1.0 / 3.0 * 2.0 / 3.0 / n as f64).sqrt();
    let freq_ok = (freq - 1.0 / 3.0).abs() <= 3.0 * sigma;

    let code = |a: Action| (a == Action::Flush) as usize;
    let mut table = vec![vec![0u64; 2]; 2];
    for w in actions.windows(2) {
        table[code(w[0])][code(w[1])] += 1;
    }
    let chi = stats::independence(&table);
    let mut report = TestReport::from_chi(
        "action-sequence",
        chi,
        n,
        seed,
        format!("putback_freq={freq:.5} sigma={sigma:.5} freq_ok={freq_ok}"),
    );
    report.pass &= freq_ok;
    Ok(report)
}

/// One side of a comparison: a workload run on ORAMs built from `config`.
#[derive(Debug, Clone)]
pub struct Arm {
    pub workload: Workload,
    pub config: OramConfig,
}

/// Leaf and paths-per-op histograms pooled over trials.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TraceSummary {
    pub leaves: Vec<u64>,
    pub paths_per_op: Vec<u64>,
}

fn add_into(acc: &mut Vec<u64>, h: &[u64]) {
    if acc.len() < h.len() {
        acc.resize(h.len(), 0);
    }
    for (a, &x) in acc.iter_mut().zip(h) {
        *a += x;
    }
}

impl TraceSummary {
    fn absorb(&mut self, run: &RecordedRun) {
        add_into(&mut self.leaves, &leaf_histogram(&run.paths, run.leaves));
        add_into(&mut self.paths_per_op, &paths_per_op_histogram(&run.paths));
    }
}

/// Runs `trials` fresh ORAMs per arm and pools their summaries. Trial `t` of
/// either arm gets the ORAM seed derived from `(seed, arm, t)`.
pub fn summarize_arm(
    arm: &Arm,
    ops: u64,
    trials: u64,
    seed: u64,
    arm_id: u64,
) -> Result<TraceSummary> {
    let runs: Vec<RecordedRun> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = rng::child_seed(seed, 100 + arm_id, t);
            let script = arm.workload.generate(arm.config.n, ops, s);
            run_recorded(arm.config.clone().with_seed(s), &script)
        })
        .collect::<Result<_>>()?;
    let mut summary = TraceSummary::default();
    for r in &runs {
        summary.absorb(r);
    }
    Ok(summary)
}

/// Two-sample chi-square on the pooled leaf and paths-per-op histograms of
/// two arms. Passes iff neither test rejects at [`ALPHA_LEVEL`].
pub fn trace_compare(a: &Arm, b: &Arm, ops: u64, trials: u64, seed: u64) -> Result<TestReport> {
    let len_a = a.workload.generate(a.config.n, ops, seed).len();
    let len_b = b.workload.generate(b.config.n, ops, seed).len();
    if len_a != len_b {
        return Err(Error::UnequalLengths(len_a, len_b));
    }
    let sa = summarize_arm(a, ops, trials, seed, 0)?;
    let sb = summarize_arm(b, ops, trials, seed, 1)?;
    let leaves = stats::two_sample(&sa.leaves, &sb.leaves);
    let ppo = stats::two_sample(&sa.paths_per_op, &sb.paths_per_op);
    let worst = if leaves.p_value <= ppo.p_value {
        leaves
    } else {
        ppo
    };
    let detail = format!(
        "{} vs {}: leaves p={:.4}, paths-per-op p={:.4}",
        a.workload, b.workload, leaves.p_value, ppo.p_value
    );
    Ok(TestReport::from_chi(
        "trace-compare",
        worst,
        len_a as u64 * trials,
        seed,
        detail,
    ))
}
