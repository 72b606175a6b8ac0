//! Virtual nodes in message-passing networks, checked numerically.
//!
//! The crate is organised by concern:
//!
//! - [`graph`]: dense undirected graphs, generators, edge-list ingestion and
//!   virtual-node augmentation.
//! - [`spectral`]: Laplacian eigendecomposition, effective resistance, commute
//!   time and the closed-form change in commute time caused by a virtual node.
//! - [`nn`]: dense forward evaluation and gradient-descent training for the
//!   linear, GCN, GatedGCN, VN, VN_G and attention layers.
//! - [`sensitivity`]: analytic layer Jacobians with finite-difference oracles,
//!   attention statistics and the mixing estimator.
//! - [`filters`]: graph-level polynomial filters and the expressivity results
//!   for linear models.
//!
//! Every formula with a closed form is paired with an independent brute-force
//! route in the test suite.

pub mod error;
pub mod filters;
pub mod graph;
pub mod linalg;
pub mod nn;
pub mod sensitivity;
pub mod spectral;

pub use error::{Error, Result};
pub use graph::{GenKind, GenSpec, Graph};
pub use linalg::{Mat, Vector};
