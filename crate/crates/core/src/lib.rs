//! Round-compressed approximate maximum matching on a simulated MPC cluster.
//!
//! The crate is organised bottom-up:
//!
//! * [`graph`]: immutable undirected graphs, vertex sets, generators and the
//!   edge-list text format.
//! * [`params`]: the threshold functions and constants, generic over the
//!   floating-point scalar.
//! * [`global`]: the sequential peeling matcher and its star-matching
//!   subroutine.
//! * [`emulate`]: the reference-set based local phase and the partitioned
//!   phase emulation.
//! * [`mpc`]: the MPC cluster simulator with round and space accounting.
//! * [`parallel`]: the round-compression driver and the repeated-run wrapper.
//! * [`verify`]: matching verification, exact oracles and diagnostics.

pub mod emulate;
pub mod error;
pub mod global;
pub mod graph;
pub mod matching;
pub mod mpc;
pub mod parallel;
pub mod params;
pub mod rng;
pub mod verify;

pub use error::{Error, Result};
pub use graph::{Edge, Graph, Subgraph, Vertex, VertexSet};
pub use matching::Matching;
pub use mpc::{Cluster, RoundLedger};
pub use parallel::{parallel_alg, repeat_for_two_plus_eps, RunResult};
pub use rng::{RandomSource, ScriptedTape};

/// Parameter profile over `f64`, the scalar every algorithm runs on.
pub type Profile = params::ParamProfile<f64>;
/// Parameter profile over `f32`.
pub type Profile32 = params::ParamProfile<f32>;

/// Seeded generator used for every randomized step.
pub type StreamRng = rand_chacha::ChaCha8Rng;

/// Builds the deterministic stream for a master seed.
pub fn stream(seed: u64) -> StreamRng {
    use rand::SeedableRng;
    StreamRng::seed_from_u64(seed)
}
