//! Separable physics-informed neural networks.
//!
//! Per-axis body networks produce rank-`r` feature vectors whose derivatives
//! are propagated with truncated Taylor jets; a low-rank merge turns them
//! into solution values and partial derivatives on factorized grids.

#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod fd;
pub mod flops;
pub mod jet;
pub mod linalg;
pub mod nets;
pub mod params;
pub mod tape;
pub mod pde;
pub mod separable;
pub mod trainer;
