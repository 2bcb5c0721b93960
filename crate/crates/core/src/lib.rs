//! Point cloud denoising by graph Laplacian regularization on the patch
//! manifold.
//!
//! The pipeline: farthest-point-sampled patch centers, k-nearest-neighbor
//! patches, PCA reference planes, a projection-based patch distance, a
//! Gaussian-weighted patch graph, and per-coordinate sparse solves of
//! `(SᵀL_pS + μI) u = μ u_prev + SᵀL_pC`.

// Parameter checks use `!(x > 0.0)` so NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cloud;
pub mod config;
pub mod error;
pub mod eval;
pub mod graph;
pub mod normals;
pub mod patch;
pub mod patchdist;
pub mod solver;
pub mod spatial;
pub mod synthetic;

pub use cloud::{Point, PointCloud, Vector};
pub use config::{DenoiseConfig, LaplacianKind};
pub use error::{Error, Result};
pub use eval::{add_gaussian_noise, evaluate, mcd, mse, snr, MetricsResult};
pub use solver::{denoise, DenoiseReport, IterationStats};
