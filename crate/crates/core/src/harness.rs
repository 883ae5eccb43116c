//! Drivers that push an operation stream through an ORAM, check every answer
//! against the reference RAM, and collect the measurements the experiments
//! need.

use crate::analysis::{extract_op_paths, PathRecord};
use crate::error::{AbortEvent, Error, Result};
use crate::oram::{Counters, Op, Oram, OramConfig};
use crate::recursive::{OramStack, RecursiveConfig};
use crate::tree::{TraceEvent, TraceMode, Word};
use crate::workload::ReferenceRam;

/// Operations between drains of the recorded trace.
const CHUNK: usize = 4096;

/// A single-level run with its path scans extracted.
#[derive(Debug, Clone)]
pub struct RecordedRun {
    pub paths: Vec<PathRecord>,
    pub leaves: u64,
    pub counters: Counters,
    pub mismatches: u64,
}

/// Runs `ops` on a fresh single-level ORAM, recording the trace in chunks so
/// that only the extracted paths are kept. Aborts are returned as errors.
pub fn run_recorded(config: OramConfig, ops: &[Op]) -> Result<RecordedRun> {
    let mut reference = ReferenceRam::new(config.n);
    let mut oram = Oram::new(config.with_trace_mode(TraceMode::Record))?;
    let depth = oram.level().tree().depth();
    let mut paths = Vec::new();
    let mut mismatches = 0;
    for chunk in ops.chunks(CHUNK) {
        for &op in chunk {
            if oram.access(op)? != reference.apply(op) {
                mismatches += 1;
            }
        }
        let events = oram.level_mut().tree_mut().trace_mut().take_events();
        paths.extend(extract_op_paths(&events, depth)?);
    }
    Ok(RecordedRun {
        paths,
        leaves: oram.level().leaves(),
        counters: oram.level().counters().clone(),
        mismatches,
    })
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Extract data-level path scans (forces trace recording).
    pub record_paths: bool,
    /// Keep the value returned by every operation.
    pub keep_results: bool,
    /// Keep the data level's raw trace events (forces trace recording).
    pub keep_events: bool,
    /// Run the full invariant check every this many operations.
    pub check_every: Option<u64>,
}

/// What happened during a run on the recursive stack.
#[derive(Debug, Clone, serde::Serialize)]
pub struct RunOutcome {
    pub ops_done: u64,
    pub mismatches: u64,
    pub abort: Option<AbortEvent>,
    pub levels: usize,
    /// Leaves of the data level's tree.
    pub leaves: u64,
    /// Bucket reads plus writes over all levels.
    pub physical_accesses: u64,
    pub external_words: u64,
    pub peak_cache_words: u64,
    pub data_counters: Counters,
    #[serde(skip)]
    pub paths: Vec<PathRecord>,
    #[serde(skip)]
    pub results: Vec<Word>,
    #[serde(skip)]
    pub events: Vec<TraceEvent>,
}

impl RunOutcome {
    pub fn accesses_per_op(&self) -> f64 {
        self.physical_accesses as f64 / self.ops_done.max(1) as f64
    }
}

/// Runs `ops` on a fresh recursive stack. An abort stops the run and is
/// reported in the outcome; any other error is returned.
pub fn run_workload(
    mut config: RecursiveConfig,
    ops: &[Op],
    opts: RunOptions,
) -> Result<RunOutcome> {
    if opts.record_paths || opts.keep_events {
        config.data.trace_mode = TraceMode::Record;
    }
    let mut reference = ReferenceRam::new(config.data.n);
    let mut stack = OramStack::build(config)?;
    let depth = stack.data_level().tree().depth();
    let mut out = RunOutcome {
        ops_done: 0,
        mismatches: 0,
        abort: None,
        levels: stack.levels().len(),
        leaves: stack.data_level().leaves(),
        physical_accesses: 0,
        external_words: stack.external_words(),
        peak_cache_words: 0,
        data_counters: Counters::default(),
        paths: Vec::new(),
        results: Vec::new(),
        events: Vec::new(),
    };
    for chunk in ops.chunks(CHUNK) {
        for &op in chunk {
            match stack.access(op) {
                Ok(v) => {
                    out.ops_done += 1;
                    if v != reference.apply(op) {
                        out.mismatches += 1;
                    }
                    if opts.keep_results {
                        out.results.push(v);
                    }
                }
                Err(e) => match e.abort_event() {
                    Some(ev) => {
                        out.abort = Some(ev);
                        break;
                    }
                    None => return Err(e),
                },
            }
            if let Some(every) = opts.check_every {
                if out.ops_done.is_multiple_of(every) {
                    stack.check_invariants()?;
                }
            }
        }
        if opts.record_paths || opts.keep_events {
            let mut events = stack.drain_data_trace();
            if let Some(ev) = out.abort {
                // the aborted operation's scans are incomplete
                events.retain(|e| e.op_serial < ev.op_serial);
            }
            if opts.record_paths {
                out.paths.extend(extract_op_paths(&events, depth)?);
            }
            if opts.keep_events {
                out.events.extend(events);
            }
        }
        if out.abort.is_some() {
            break;
        }
    }
    out.physical_accesses = stack.physical_accesses();
    out.peak_cache_words = stack.peak_cache_words();
    out.data_counters = stack.data_level().counters().clone();
    Ok(out)
}

/// Convenience for tests and the CLI: an error unless the outcome is clean.
pub fn expect_clean(out: &RunOutcome) -> Result<()> {
    if let Some(ev) = out.abort {
        return Err(Error::Abort(ev));
    }
    if out.mismatches > 0 {
        return Err(Error::InvariantViolation(format!(
            "{} answers differ from the reference RAM",
            out.mismatches
        )));
    }
    Ok(())
}
