//! A statistically secure tree ORAM with a cache-side queue and a recursive
//! position map, together with the tooling used to check its behaviour
//! empirically: trace statistics, a supermarket queueing simulator coupled to
//! the tree, and a lab for the truncated birth-death chain behind the queue
//! bound.
//!
//! The analytic parts are generic over the scalar type (see [`scalar`]); the
//! aliases below fix the common choices.

pub mod analysis;
pub mod coupling;
pub mod error;
pub mod harness;
pub mod markov;
pub mod oram;
pub mod recursive;
pub mod rng;
pub mod scalar;
pub mod stash;
pub mod supermarket;
pub mod tree;
pub mod workload;

pub use error::{AbortEvent, AbortKind, Error, Result};
pub use oram::{Op, Oram, OramConfig, OramLevel};
pub use recursive::{OramStack, RecursiveConfig};
pub use stash::StashQueue;
pub use tree::{Block, Bucket, NodeId, Tree};

/// Birth-death chain over `f64`.
pub type ChainSpecF64 = markov::ChainSpec<f64>;
/// Birth-death chain over `f32`.
pub type ChainSpecF32 = markov::ChainSpec<f32>;
/// Birth-death chain with exact rational arithmetic.
pub type ExactChainSpec = markov::ChainSpec<scalar::Rational>;
