//! `tree-oram run`: a workload on a recursive ORAM, checked against a plain
//! array.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};

use anyhow::Context;
use serde::Serialize;

use tree_oram::analysis::{paths_per_op_test, serial_independence_test, uniformity_test};
use tree_oram::harness::{run_workload, RunOptions, RunOutcome};
use tree_oram::oram::Op;
use tree_oram::recursive::RecursiveConfig;
use tree_oram::tree::{write_trace_binary, write_trace_text};
use tree_oram::workload::{parse_script, Workload};
use tree_oram::Error;

use crate::args::{RunArgs, TraceFormat, WorkloadArg};
use crate::output::{out_dir, Table};
use crate::Status;

#[derive(Serialize)]
struct Summary {
    workload: &'static str,
    ops: usize,
    ops_done: u64,
    mismatches: u64,
    abort: Option<String>,
    levels: usize,
    physical_accesses: u64,
    accesses_per_op: f64,
    external_words: u64,
    peak_cache_words: u64,
    put_backs: u64,
    flushes: u64,
    overflows: u64,
    root_full_bounces: u64,
    max_queue: usize,
    q_max: usize,
    max_leaf_load: usize,
    leaf_capacity: usize,
}

#[derive(Serialize)]
struct ResultRow {
    serial: usize,
    op: &'static str,
    addr: u64,
    value: Option<u64>,
    returned: u64,
}

fn workload_ops(args: &RunArgs, n: u64) -> anyhow::Result<(Workload, Vec<Op>)> {
    let workload = match args.workload {
        WorkloadArg::UniformRandom => Workload::UniformRandom,
        WorkloadArg::Sequential => Workload::Sequential,
        WorkloadArg::HotSpot => Workload::HotSpot,
        WorkloadArg::ScriptedFile => {
            let path = args
                .script
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("scripted-file needs --script".into()))?;
            let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
            Workload::Scripted(parse_script(BufReader::new(file))?)
        }
    };
    let ops = workload.generate(n, args.ops, args.seed);
    if let Some(op) = ops.iter().find(|op| op.addr() >= n) {
        return Err(Error::AddressOutOfRange { addr: op.addr(), n }.into());
    }
    Ok((workload, ops))
}

pub fn run(args: &RunArgs) -> anyhow::Result<Status> {
    let data = args.oram.config(1 << 14, args.seed);
    let (n, q_max, leaf_capacity) = (data.n, data.q_max, data.leaf_capacity);
    let config = RecursiveConfig::new(data).with_cutoff(args.cutoff);
    config.validate()?;
    let (workload, ops) = workload_ops(args, n)?;
    let dir = out_dir(args.out_dir.as_deref());
    let opts = RunOptions {
        record_paths: args.analyze,
        keep_results: dir.is_some(),
        keep_events: args.trace.is_some() && dir.is_some(),
        check_every: args.check_every,
    };
    let out = run_workload(config, &ops, opts)?;

    let c = &out.data_counters;
    let mut summary = Table::new("run", args)?;
    summary.push(&Summary {
        workload: workload.name(),
        ops: ops.len(),
        ops_done: out.ops_done,
        mismatches: out.mismatches,
        abort: out.abort.map(|a| a.to_string()),
        levels: out.levels,
        physical_accesses: out.physical_accesses,
        accesses_per_op: out.accesses_per_op(),
        external_words: out.external_words,
        peak_cache_words: out.peak_cache_words,
        put_backs: c.put_backs,
        flushes: c.flushes,
        overflows: c.overflows,
        root_full_bounces: c.root_full_bounces,
        max_queue: c.max_queue,
        q_max,
        max_leaf_load: c.max_leaf_load,
        leaf_capacity,
    })?;

    let format = args.output.format;
    let ext = format.extension();
    match &dir {
        None => summary.write(None, format)?,
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            summary.write(Some(&dir.join(format!("summary.{ext}"))), format)?;
            write_results(args, &ops, &out, &dir.join(format!("results.{ext}")))?;
            if args.analyze {
                reports(args, &out)?.write(Some(&dir.join(format!("reports.{ext}"))), format)?;
            }
            if let Some(tf) = args.trace {
                write_trace(tf, &out, dir)?;
            }
        }
    }

    if let Some(ev) = out.abort {
        eprintln!("aborted: {ev} after {} operations", out.ops_done);
        return Ok(Status::Aborted);
    }
    if out.mismatches > 0 {
        eprintln!("{} results differ from the reference array", out.mismatches);
        return Ok(Status::Failed);
    }
    Ok(Status::Ok)
}

fn write_results(
    args: &RunArgs,
    ops: &[Op],
    out: &RunOutcome,
    path: &std::path::Path,
) -> anyhow::Result<()> {
    let mut t = Table::new("run", args)?;
    for (serial, (&op, &returned)) in ops.iter().zip(&out.results).enumerate() {
        let (op, addr, value) = match op {
            Op::Read(a) => ("r", a, None),
            Op::Write(a, v) => ("w", a, Some(v)),
        };
        t.push(&ResultRow {
            serial,
            op,
            addr,
            value,
            returned,
        })?;
    }
    t.write(Some(path), args.output.format)
}

/// Trace tests on the recorded data-level paths; tests without enough
/// samples are skipped with a note on stderr.
fn reports(args: &RunArgs, out: &RunOutcome) -> anyhow::Result<Table> {
    let leaves = out.leaves;
    let mut t = Table::new("run", args)?;
    let tests = [
        uniformity_test(&out.paths, leaves, args.seed),
        serial_independence_test(&out.paths, leaves, args.seed),
        paths_per_op_test(&out.paths, args.oram.flush_prob, args.seed),
    ];
    for r in tests {
        match r {
            Ok(report) => t.push(&report)?,
            Err(e @ Error::InsufficientSamples { .. }) => eprintln!("skipped a trace test: {e}"),
            Err(e) => return Err(e.into()),
        }
    }
    Ok(t)
}

fn write_trace(format: TraceFormat, out: &RunOutcome, dir: &std::path::Path) -> anyhow::Result<()> {
    let (name, binary) = match format {
        TraceFormat::Text => ("trace.txt", false),
        TraceFormat::Binary => ("trace.bin", true),
    };
    let path = dir.join(name);
    let w = BufWriter::new(
        File::create(&path).with_context(|| format!("creating {}", path.display()))?,
    );
    if binary {
        write_trace_binary(w, &out.events)?;
    } else {
        write_trace_text(w, &out.events)?;
    }
    Ok(())
}
