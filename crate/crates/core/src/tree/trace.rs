use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use super::NodeId;
use crate::error::{Error, Result};

/// Which ORAM action a physical access belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
pub enum Phase {
    Fetch,
    PutBack,
    Flush,
}

impl Phase {
    fn code(self) -> u8 {
        match self {
            Phase::Fetch => 0,
            Phase::PutBack => 1,
            Phase::Flush => 2,
        }
    }

    fn from_code(c: u8) -> Result<Phase> {
        match c {
            0 => Ok(Phase::Fetch),
            1 => Ok(Phase::PutBack),
            2 => Ok(Phase::Flush),
            _ => Err(Error::MalformedTrace(format!("unknown phase code {c}"))),
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Fetch => "fetch",
            Phase::PutBack => "putback",
            Phase::Flush => "flush",
        })
    }
}

impl FromStr for Phase {
    type Err = Error;
    fn from_str(s: &str) -> Result<Phase> {
        match s {
            "fetch" => Ok(Phase::Fetch),
            "putback" => Ok(Phase::PutBack),
            "flush" => Ok(Phase::Flush),
            _ => Err(Error::MalformedTrace(format!("unknown phase {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize)]
pub enum Mode {
    Read,
    Write,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Read => "read",
            Mode::Write => "write",
        })
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Mode> {
        match s {
            "read" => Ok(Mode::Read),
            "write" => Ok(Mode::Write),
            _ => Err(Error::MalformedTrace(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceEvent {
    pub op_serial: u64,
    pub phase: Phase,
    pub node: NodeId,
    pub mode: Mode,
}

/// Whether events are stored or only counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize)]
pub enum TraceMode {
    /// Keep every event.
    Record,
    /// Keep only the event count; for long runs where the log would not fit.
    #[default]
    CountOnly,
}

/// Append-only log of physical node accesses.
#[derive(Debug, Clone)]
pub struct AccessTrace {
    mode: TraceMode,
    events: Vec<TraceEvent>,
    len: u64,
    op_serial: u64,
    phase: Phase,
}

impl AccessTrace {
    pub fn new(mode: TraceMode) -> AccessTrace {
        AccessTrace {
            mode,
            events: Vec::new(),
            len: 0,
            op_serial: 0,
            phase: Phase::Fetch,
        }
    }

    pub fn mode(&self) -> TraceMode {
        self.mode
    }

    /// Tags subsequent events with this operation and phase.
    pub fn set_context(&mut self, op_serial: u64, phase: Phase) {
        self.op_serial = op_serial;
        self.phase = phase;
    }

    pub(crate) fn record(&mut self, node: NodeId, mode: Mode) {
        self.len += 1;
        if self.mode == TraceMode::Record {
            self.events.push(TraceEvent {
                op_serial: self.op_serial,
                phase: self.phase,
                node,
                mode,
            });
        }
    }

    /// Total number of events appended, recorded or not.
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Stored events; empty in [`TraceMode::CountOnly`].
    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn take_events(&mut self) -> Vec<TraceEvent> {
        std::mem::take(&mut self.events)
    }
}

/// Writes `op_serial,phase,node_bits,mode` lines.
pub fn write_trace_text<W: Write>(mut w: W, events: &[TraceEvent]) -> Result<()> {
    for e in events {
        writeln!(w, "{},{},{},{}", e.op_serial, e.phase, e.node, e.mode)?;
    }
    Ok(())
}

pub fn read_trace_text<R: BufRead>(r: R) -> Result<Vec<TraceEvent>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::MalformedTrace(format!(
                "line {}: expected 4 fields",
                lineno + 1
            )));
        }
        let op_serial = fields[0]
            .parse()
            .map_err(|_| Error::MalformedTrace(format!("line {}: bad op serial", lineno + 1)))?;
        out.push(TraceEvent {
            op_serial,
            phase: fields[1].parse()?,
            node: fields[2].parse()?,
            mode: fields[3].parse()?,
        });
    }
    Ok(out)
}

pub const TRACE_MAGIC: [u8; 4] = *b"ORTR";
pub const TRACE_VERSION: u16 = 1;
const RECORD_BYTES: usize = 15;

/// Compact binary form: magic `ORTR`, version (u16 LE), record count (u64
/// LE), then 15-byte records of op_serial (u64 LE), phase (u8), mode (u8),
/// node depth (u8) and node bits (u32 LE).
pub fn write_trace_binary<W: Write>(mut w: W, events: &[TraceEvent]) -> Result<()> {
    w.write_all(&TRACE_MAGIC)?;
    w.write_all(&TRACE_VERSION.to_le_bytes())?;
    w.write_all(&(events.len() as u64).to_le_bytes())?;
    let mut rec = [0u8; RECORD_BYTES];
    for e in events {
        rec[0..8].copy_from_slice(&e.op_serial.to_le_bytes());
        rec[8] = e.phase.code();
        rec[9] = match e.mode {
            Mode::Read => 0,
            Mode::Write => 1,
        };
        rec[10] = e.node.level();
        rec[11..15].copy_from_slice(&e.node.bits().to_le_bytes());
        w.write_all(&rec)?;
    }
    Ok(())
}

pub fn read_trace_binary<R: Read>(mut r: R) -> Result<Vec<TraceEvent>> {
    let mut head = [0u8; 14];
    r.read_exact(&mut head)?;
    if head[0..4] != TRACE_MAGIC {
        return Err(Error::MalformedTrace("bad magic".into()));
    }
    let version = u16::from_le_bytes([head[4], head[5]]);
    if version != TRACE_VERSION {
        return Err(Error::MalformedTrace(format!(
            "unsupported version {version}"
        )));
    }
    let count = u64::from_le_bytes(head[6..14].try_into().unwrap());
    let mut out = Vec::with_capacity(count.min(1 << 24) as usize);
    let mut rec = [0u8; RECORD_BYTES];
    for _ in 0..count {
        r.read_exact(&mut rec)?;
        let mode = match rec[9] {
            0 => Mode::Read,
            1 => Mode::Write,
            m => return Err(Error::MalformedTrace(format!("unknown mode code {m}"))),
        };
        out.push(TraceEvent {
            op_serial: u64::from_le_bytes(rec[0..8].try_into().unwrap()),
            phase: Phase::from_code(rec[8])?,
            node: NodeId::new(u32::from_le_bytes(rec[11..15].try_into().unwrap()), rec[10])
                .map_err(|e| Error::MalformedTrace(e.to_string()))?,
            mode,
        });
    }
    Ok(out)
}
