//! Operation streams and the plain-array reference RAM.

use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::oram::Op;
use crate::rng;
use crate::tree::Word;

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub enum Workload {
    /// Uniform addresses, reads and writes with equal probability.
    UniformRandom,
    /// Addresses 0, 1, 2, … wrapping at n, alternating write and read.
    Sequential,
    /// Every operation touches address 0.
    HotSpot,
    /// A fixed list of operations.
    Scripted(Vec<Op>),
}

impl Workload {
    pub fn name(&self) -> &'static str {
        match self {
            Workload::UniformRandom => "uniform-random",
            Workload::Sequential => "sequential",
            Workload::HotSpot => "hot-spot",
            Workload::Scripted(_) => "scripted-file",
        }
    }

    /// The first `ops` operations on a memory of `n` words. Scripted
    /// workloads ignore `ops` and return the script.
    pub fn generate(&self, n: u64, ops: u64, seed: u64) -> Vec<Op> {
        let mut rng = rng::stream(seed, rng::STREAM_WORKLOAD, 0);
        match self {
            Workload::UniformRandom => (0..ops)
                .map(|_| {
                    let addr = rng.random_range(0..n);
                    if rng.random_bool(0.5) {
                        Op::Write(addr, rng.random())
                    } else {
                        Op::Read(addr)
                    }
                })
                .collect(),
            Workload::Sequential => (0..ops)
                .map(|t| {
                    let addr = t % n;
                    if t % 2 == 0 {
                        Op::Write(addr, t)
                    } else {
                        Op::Read(addr)
                    }
                })
                .collect(),
            Workload::HotSpot => (0..ops)
                .map(|t| {
                    if t % 2 == 0 {
                        Op::Write(0, t)
                    } else {
                        Op::Read(0)
                    }
                })
                .collect(),
            Workload::Scripted(script) => script.clone(),
        }
    }
}

impl fmt::Display for Workload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Workload {
    type Err = Error;

    fn from_str(s: &str) -> Result<Workload> {
        match s {
            "uniform-random" => Ok(Workload::UniformRandom),
            "sequential" => Ok(Workload::Sequential),
            "hot-spot" => Ok(Workload::HotSpot),
            _ => Err(Error::InvalidConfig(format!("unknown workload {s:?}"))),
        }
    }
}

/// Parses a script with one operation per line: `r ADDR` or `w ADDR VALUE`.
/// Blank lines and lines starting with `#` are ignored.
pub fn parse_script<R: BufRead>(r: R) -> Result<Vec<Op>> {
    let mut ops = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = || Error::InvalidConfig(format!("script line {}: {line:?}", lineno + 1));
        let fields: Vec<&str> = line.split_whitespace().collect();
        let num = |s: &str| s.parse::<u64>().map_err(|_| bad());
        let op = match fields.as_slice() {
            ["r", a] => Op::Read(num(a)?),
            ["w", a, v] => Op::Write(num(a)?, num(v)?),
            _ => return Err(bad()),
        };
        ops.push(op);
    }
    Ok(ops)
}

/// The non-oblivious RAM every ORAM run is checked against.
#[derive(Debug, Clone)]
pub struct ReferenceRam {
    words: Vec<Word>,
}

impl ReferenceRam {
    pub fn new(n: u64) -> ReferenceRam {
        ReferenceRam {
            words: vec![0; n as usize],
        }
    }

    /// Applies `op` and returns the word before it, like the ORAM does.
    pub fn apply(&mut self, op: Op) -> Word {
        match op {
            Op::Read(a) => self.words[a as usize],
            Op::Write(a, v) => std::mem::replace(&mut self.words[a as usize], v),
        }
    }
}
