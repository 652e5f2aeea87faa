//! Decentralized online multiple kernel learning.
//!
//! A network of `K` learners, connected by an undirected graph, each receive
//! a private stream of labeled samples. Every learner fits `P` kernel
//! functions over shared random Fourier feature maps with online consensus
//! ADMM, and combines them with Hedge weights that are shared with its
//! neighbors. Only parameters and cumulative losses cross the network.
//!
//! The crate is `no_std` (it needs `alloc`) and contains no IO. The
//! `domkl-sim` crate carries file formats, the trial runner and the CLI.
//!
//! Module map:
//! - [`graph`]: communication topology, Erdős–Rényi sampling.
//! - [`features`]: Gaussian kernels and random Fourier feature maps.
//! - [`dokl`]: single-kernel online ADMM learner and network.
//! - [`hedge`]: kernel combination weights (neighbor product, message passing).
//! - [`domkl`]: the multi-kernel learner node and network.
//! - [`baselines`]: centralized mini-batch OMKL and diffusion OGD.
//! - [`data`]: normalization, partitioning, AR embedding, synthetic generators.
//! - [`metrics`]: MSE/CV curves and regret quantities over run traces.
//! - [`oracle`]: brute-force references used by tests and regret computation.
//! - [`validate`]: the fast invariant suite.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod baselines;
pub mod data;
pub mod dokl;
pub mod domkl;
pub mod engine;
mod error;
pub mod features;
pub mod graph;
pub mod hedge;
pub mod linalg;
pub mod metrics;
pub mod oracle;
pub mod validate;

pub use error::{Error, Result};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The generator used for every seeded draw in the crate.
pub type Rng = ChaCha8Rng;

/// Seeded generator; identical seeds give identical streams on every platform.
pub fn seeded_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
