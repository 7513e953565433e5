//! Decay-based clustering of dynamic graphs.
//!
//! The crate generates dynamic stochastic block model instances
//! ([`dsbm`]), smooths their edge history with scalar or per-cluster decay
//! rates ([`smoothing`]), clusters the result spectrally ([`spectral`]) or
//! with small recurrent GCN classifiers ([`neural`]), and scores the output
//! ([`metrics`]). [`experiment`] wires these into the runs behind the
//! command-line tool; [`graph_io`] holds the on-disk formats.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dsbm;
pub mod error;
pub mod experiment;
pub mod graph_io;
pub mod membership;
pub mod metrics;
pub mod neural;
pub mod rng;
pub mod smoothing;
pub mod spectral;
pub mod svg;

pub use error::{Error, Result};
pub use membership::MembershipMatrix;
