#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod calibration;
pub mod config;
pub mod error;
pub mod fmt;
pub mod lattice;
pub mod propagation;
pub mod runner;
mod schur;
pub mod spectral;
pub mod symmetry;
pub mod topology;

pub use error::{Error, Result};
