use std::fmt;

use crate::tree::NodeId;

/// Which of the two abort conditions fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum AbortKind {
    AbortQueue,
    AbortLeaf,
}

/// An abort raised by an ORAM instance. Once raised the instance is halted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub struct AbortEvent {
    pub kind: AbortKind,
    pub op_serial: u64,
}

impl fmt::Display for AbortEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at op {}", self.kind, self.op_serial)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid node {0}")]
    InvalidNode(NodeId),
    #[error("bucket at {node} would hold {len} blocks, capacity is {capacity}")]
    CapacityExceeded {
        node: NodeId,
        len: usize,
        capacity: usize,
    },
    #[error("leaf {leaf} out of range ({leaves} leaves)")]
    LeafOutOfRange { leaf: u64, leaves: u64 },
    #[error("block {0} is already live in the queue")]
    DuplicateIndex(u64),
    #[error("address {addr} out of range for a memory of {n} words")]
    AddressOutOfRange { addr: u64, n: u64 },
    #[error("{0}")]
    Abort(AbortEvent),
    #[error("instance halted by an earlier abort ({0})")]
    Halted(AbortEvent),
    #[error("block-path invariant violated: {0}")]
    InvariantViolation(String),
    #[error("malformed trace: {0}")]
    MalformedTrace(String),
    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: u64, got: u64 },
    #[error("sequences differ in length ({0} vs {1})")]
    UnequalLengths(usize, usize),
    #[error("no convergence after {0} iterations")]
    NoConvergence(usize),
    #[error("coupling violated: {0}")]
    CouplingViolation(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// The abort carried by this error, if it is one.
    pub fn abort_event(&self) -> Option<AbortEvent> {
        match self {
            Error::Abort(ev) | Error::Halted(ev) => Some(*ev),
            _ => None,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
