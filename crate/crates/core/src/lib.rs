//! Affine ensembles of physics-informed weak-learners, with ensemble
//! weights chosen by minimising a QUBO.
//!
//! The pipeline trains small networks on collocation residuals of the
//! viscous Burgers' equation ([`trainer`]), turns the ensemble's
//! least-squares fit into a binary quadratic model over fixed-point weight
//! bits ([`qubo`]), minimises it ([`solvers`]) and scores the result
//! ([`eval`]).

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod burgers;
pub mod config;
pub mod error;
pub mod eval;
pub mod jet;
pub mod nn;
pub mod par;
pub mod pipeline;
pub mod qubo;
pub mod seed;
pub mod solvers;
pub mod trainer;

pub use error::{Error, Result};
