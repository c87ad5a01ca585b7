//! Executable geometry of the linear and affine Grassmannians together with
//! δ-discretized incidence counting for families of planes.
//!
//! Modules, bottom-up:
//! - [`linalg`]: small dense SVD, orthonormalization, Gram volumes.
//! - [`grassmann`]: principal angles, distance, geodesics, projections in G(l, n).
//! - [`affine`]: affine planes, the local chart of transverse l-planes, incidence.
//! - [`discretize`]: nets, slab neighborhoods, box counting, spacing checks.
//! - [`engine`]: sharp examples, broad/narrow classification, Brascamp–Lieb
//!   functional, L^p counting norms.
//! - [`experiment`]: config-driven, seeded experiment runs used by the CLI.

pub mod affine;
pub mod discretize;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod grassmann;
pub mod linalg;
pub mod selftest;

pub use error::{GkError, Result};
pub use grassmann::Subspace;
pub use linalg::Matrix;
