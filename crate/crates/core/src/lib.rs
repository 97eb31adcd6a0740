//! Percolation laboratory: lattice geometry, lazily sampled bond percolation,
//! cluster analysis, positive-kernel contraction and the experiment drivers
//! built on top of them.

pub mod cli;
pub mod clusters;
pub mod config;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod kernels;
pub mod lattice;
pub mod scales;
pub mod world;

pub use error::{Error, Result};
pub use lattice::{EdgeId, EdgeMode, LatticeSpec, Region, Site};
