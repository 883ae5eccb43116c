//! Command-line definitions and config-file expansion.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use tree_oram::oram::{Mutation, OramConfig, OverflowRule};
use tree_oram::supermarket::UpsetRule;

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "TREE_ORAM_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "tree-oram",
    version,
    about = "Statistically secure tree ORAM: runner and experiments"
)]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)] // parsed once per process
pub enum Command {
    /// Run a workload against a recursive ORAM and verify every result.
    Run(RunArgs),
    /// Run one experiment and check its acceptance predicate.
    Experiment(ExperimentArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Jsonl,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WorkloadArg {
    UniformRandom,
    Sequential,
    HotSpot,
    ScriptedFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationArg {
    ReusePosition,
    FixedFlushCount,
    AddressDerivedFlushPath,
    ShallowCarry,
}

impl From<MutationArg> for Mutation {
    fn from(m: MutationArg) -> Mutation {
        match m {
            MutationArg::ReusePosition => Mutation::ReusePosition,
            MutationArg::FixedFlushCount => Mutation::FixedFlushCount,
            MutationArg::AddressDerivedFlushPath => Mutation::AddressDerivedFlushPath,
            MutationArg::ShallowCarry => Mutation::ShallowCarry,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverflowArg {
    AtLeastHalf,
    MoreThanHalf,
}

impl From<OverflowArg> for OverflowRule {
    fn from(o: OverflowArg) -> OverflowRule {
        match o {
            OverflowArg::AtLeastHalf => OverflowRule::AtLeastHalf,
            OverflowArg::MoreThanHalf => OverflowRule::MoreThanHalf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpsetArg {
    AtLeast,
    Exceeds,
}

impl From<UpsetArg> for UpsetRule {
    fn from(u: UpsetArg) -> UpsetRule {
        match u {
            UpsetArg::AtLeast => UpsetRule::AtLeast,
            UpsetArg::Exceeds => UpsetRule::Exceeds,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum TraceFormat {
    Text,
    Binary,
}

/// ORAM parameters shared by `run` and the ORAM experiments. Unset
/// capacities take their size-derived defaults.
#[derive(Debug, Clone, Args, Serialize)]
pub struct OramArgs {
    /// Memory size in words [default: 16384; 4096 for compare and coupling].
    #[arg(long)]
    pub n: Option<u64>,
    /// Block size α in words.
    #[arg(long, default_value_t = 16)]
    pub block_size: usize,
    /// Internal bucket capacity ℓ.
    #[arg(long)]
    pub bucket_capacity: Option<usize>,
    /// Leaf bucket capacity ℓ'.
    #[arg(long)]
    pub leaf_capacity: Option<usize>,
    /// Queue bound; reaching it aborts.
    #[arg(long)]
    pub q_max: Option<usize>,
    /// Probability that another flush follows.
    #[arg(long, default_value_t = 2.0 / 3.0)]
    pub flush_prob: f64,
    #[arg(long, value_enum, default_value_t = OverflowArg::AtLeastHalf)]
    pub overflow_rule: OverflowArg,
    /// Deliberately broken variant, for checking test power.
    #[arg(long, value_enum)]
    pub mutation: Option<MutationArg>,
}

impl OramArgs {
    /// The data-level configuration, with `default_n` when `--n` is unset.
    pub fn config(&self, default_n: u64, seed: u64) -> OramConfig {
        let n = self.n.unwrap_or(default_n);
        let mut c = OramConfig::for_memory(n, self.block_size).with_seed(seed);
        if let Some(b) = self.bucket_capacity {
            c.bucket_capacity = b;
        }
        if let Some(l) = self.leaf_capacity {
            c.leaf_capacity = l;
        }
        if let Some(q) = self.q_max {
            c.q_max = q;
        }
        c.flush_continue_prob = self.flush_prob;
        c.overflow_rule = self.overflow_rule.into();
        c.mutation = self.mutation.map(Into::into);
        c
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    /// Output format for tables.
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    /// Flat `key=value` file of defaults; flags given on the command line win.
    /// Its values are echoed through the other fields, not its path.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RunArgs {
    #[command(flatten)]
    pub oram: OramArgs,
    /// Number of operations (ignored for scripted workloads).
    #[arg(long, default_value_t = 100_000)]
    pub ops: u64,
    #[arg(long, value_enum, default_value_t = WorkloadArg::UniformRandom)]
    pub workload: WorkloadArg,
    /// Script for the scripted-file workload: `r ADDR` / `w ADDR VALUE` lines.
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Largest position map held directly in the cache.
    #[arg(long, default_value_t = tree_oram::recursive::DEFAULT_CUTOFF)]
    pub cutoff: u64,
    /// Record the data level's trace and run the trace tests on it.
    #[arg(long)]
    pub analyze: bool,
    /// Also write the data level's raw trace.
    #[arg(long, value_enum)]
    pub trace: Option<TraceFormat>,
    /// Check block-path invariants every this many operations.
    #[arg(long)]
    pub check_every: Option<u64>,
    /// Directory for output files; defaults to $TREE_ORAM_OUT_DIR. Without
    /// either, only the summary is printed.
    #[arg(long)]
    #[serde(skip)]
    pub out_dir: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Leaf uniformity, serial independence and paths per operation.
    Uniformity,
    /// Put-back frequency and lag-1 independence of the action stream.
    Actions,
    /// Two-sample comparison of two workloads' traces.
    Compare,
    /// Upset rate of a supermarket against its bound.
    Supermarket,
    /// Supermarket upset-count tails at T and 2T.
    SmTail,
    /// ORAM/supermarket dominance at one tree level.
    Coupling,
    /// Empirical occupancy of the birth–death chain against π.
    Stationary,
    /// Spectral expansion of the chain.
    Spectral,
    /// Tail of visits to the upper states with and without resets.
    ResetTail,
    /// Physical accesses per operation as n grows.
    OverheadSweep,
}

impl ExperimentKind {
    pub fn name(self) -> String {
        self.to_possible_value()
            .expect("no skipped variants")
            .get_name()
            .to_string()
    }
}

/// Every experiment's knobs; each kind reads the ones it needs and fills
/// unset ones with its own defaults.
#[derive(Debug, Clone, Args, Serialize)]
pub struct ExperimentArgs {
    #[arg(value_enum)]
    pub kind: ExperimentKind,
    #[command(flatten)]
    pub oram: OramArgs,
    #[arg(long)]
    pub ops: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Independent seeds (uniformity); a majority must pass.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
    pub seeds: Vec<u64>,
    /// Trials per arm or per horizon.
    #[arg(long)]
    pub trials: Option<u64>,
    /// Actions to test (actions).
    #[arg(long)]
    pub actions: Option<u64>,
    /// Workloads for the two arms (compare).
    #[arg(long, default_value = "sequential")]
    pub workload_a: String,
    #[arg(long, default_value = "hot-spot")]
    pub workload_b: String,
    /// Tree level k whose buckets are checked (coupling).
    #[arg(long, default_value_t = 3)]
    pub level: u8,
    /// Number of cashiers D (supermarket, sm-tail).
    #[arg(long)]
    pub cashiers: Option<usize>,
    /// Arrival probability α (supermarket, sm-tail) or the chain's α.
    #[arg(long, alias = "arrival")]
    pub alpha: Option<f64>,
    /// Upset threshold φ.
    #[arg(long)]
    pub phi: Option<u64>,
    /// Horizon T (steps).
    #[arg(long)]
    pub steps: Option<u64>,
    #[arg(long, value_enum, default_value_t = UpsetArg::AtLeast)]
    pub upset_rule: UpsetArg,
    /// Tail deviations δ.
    #[arg(long, value_delimiter = ',')]
    pub deltas: Option<Vec<f64>>,
    /// δ whose exceedance must fall from T to 2T (sm-tail).
    #[arg(long, default_value_t = 1.0)]
    pub decay_delta: f64,
    /// Chain length K (stationary, spectral, reset-tail).
    #[arg(long = "K", alias = "k")]
    pub k: Option<usize>,
    /// Reset counts to compare (reset-tail).
    #[arg(long, value_delimiter = ',')]
    pub resets: Option<Vec<u64>>,
    /// Memory sizes `LO..HI` growing by ×4 (overhead-sweep).
    #[arg(long)]
    pub sizes: Option<String>,
    /// Position-map cutoff; the sweep defaults to (log₂ n)².
    #[arg(long)]
    pub cutoff: Option<u64>,
    /// Output file; defaults to $TREE_ORAM_OUT_DIR/<kind>.<ext>, else stdout.
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub output: OutputArgs,
}

/// Parses a flat `key=value` file into `--key value` arguments. Blank lines
/// and `#` comments are skipped; `key=true` becomes a bare flag and
/// `key=false` is dropped.
pub fn config_file_args(path: &Path) -> anyhow::Result<Vec<String>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let mut args = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            bail!("{}:{}: expected key=value", path.display(), i + 1);
        };
        let key = key.trim().replace('_', "-");
        match value.trim() {
            "true" => args.push(format!("--{key}")),
            "false" => {}
            v => {
                args.push(format!("--{key}"));
                args.push(v.to_string());
            }
        }
    }
    Ok(args)
}

/// Splices the arguments of any `--config FILE` in `argv` in front of the
/// command-line flags, so that explicit flags override file values.
pub fn expand_config(argv: Vec<String>) -> anyhow::Result<Vec<String>> {
    let mut rest = Vec::with_capacity(argv.len());
    let mut config = None;
    let mut it = argv.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            config = it.next();
        } else if let Some(p) = a.strip_prefix("--config=") {
            config = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else {
        return Ok(rest);
    };
    let file_args = config_file_args(Path::new(&path))?;
    // program name, subcommand, and the experiment kind if present
    let positional = rest
        .iter()
        .skip(1)
        .take(2)
        .take_while(|a| !a.starts_with('-'))
        .count();
    let split = 1 + positional;
    let mut out: Vec<String> = rest[..split].to_vec();
    out.push("--config".into());
    out.push(path);
    out.extend(file_args);
    out.extend_from_slice(&rest[split..]);
    Ok(out)
}
