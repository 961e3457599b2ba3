//! Multicontinuum homogenization for 2D scalar elliptic problems with
//! high-contrast coefficients, and its hierarchical macrogrid variant.
//!
//! The pipeline: a medium is split into continua by characteristic masks;
//! constrained cell problems on oversampled regions extract per-block local
//! functions; energy inner products of those functions form effective
//! coefficient tensors; a small upscaled system is solved on the coarse grid
//! and compared against the fine reference through per-block continuum
//! averages. The hierarchical variant solves most cell problems as cheap
//! corrections on coarser nested grids, interpolating from a sparse set of
//! fully resolved macropoints.

pub mod cell;
pub mod config;
pub mod error;
pub mod fem;
pub mod media;
pub mod mesh;

pub use error::{Error, Result};
