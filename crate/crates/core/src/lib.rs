//! Bayesian Poisson Tucker decomposition for dyadic event count tensors.
//!
//! The crate is `no_std` (it needs `alloc`) and holds every numerical piece:
//! the event store types, seeded variate generation, the BPTD model and its
//! Gibbs sampler (compositional and exact-joint token allocation), the three
//! baseline models, the Geweke harness and the held-out evaluation protocol.
//! File formats, threading and the command line live in the `bptd` crate.
#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod baselines;
pub mod distributions;
pub mod error;
pub mod evaluation;
pub mod events;
pub mod geweke;
pub mod gibbs;
pub mod linalg;
pub(crate) mod math;
pub mod model;
pub mod rng;
pub mod sampler;

pub use error::{Error, Result};
pub use events::{CountTensor, EventToken, QuadClass, Vocabulary};
pub use gibbs::{AllocationMode, BptdChain, LatentSources, TokenAssignment};
pub use model::{BptdState, Hyperparams, ModelDims, TuckerParams};
pub use rng::RngStream;
pub use sampler::{ModelKind, Sampler};
