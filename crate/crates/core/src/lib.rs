//! Differentially private synthetic attributed random graphs.
//!
//! A dataset of attributes in `[0,1]^d` is summarised by noisy per-cell
//! counts, projected onto the probability simplex in total variation, and
//! used to generate a synthetic random connection graph jointly with the
//! "true" graph drawn from the data. The crate also evaluates the fused
//! Gromov-Wasserstein utility of such pairs and the closed-form error bounds.

pub mod bounds;
pub mod error;
pub mod experiment;
pub mod fgw;
pub mod graphmodel;
pub mod metric;
pub mod noise;
pub mod psgg;
pub mod psmm;
pub mod seed;
pub mod stats;

pub use error::{Error, Result};
