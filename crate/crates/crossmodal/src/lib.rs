//! Cross-modal learning with pairwise constraints.
//!
//! Web documents pair several feature views ("modalities") of the same
//! underlying item — e.g. text features and image features of one article.
//! Column `i` of every modality describes the same document, which is the
//! pairwise constraint this crate is built around. Two learners exploit it:
//!
//! - [`csc`]: unsupervised cross-modal subspace clustering. Each modality
//!   learns a self-expressive coefficient matrix `Z_I` (with `X_I ≈ X_I Z_I`,
//!   zero diagonal) while a consensus graph `Z` pulls the per-modality
//!   structures together. The consensus affinity feeds normalized-cut
//!   spectral clustering ([`spectral`]).
//! - [`cmmp`]: supervised cross-modal matching. Two projections `U_A`, `U_B`
//!   map both modalities into a shared class-indicator space, regularized by
//!   a graph-weighted structure term and an l21 penalty on projected pair
//!   residuals that tolerates corrupted pairs. Solved by an iteratively
//!   reweighted (half-quadratic) scheme that converges to the global optimum
//!   of the jointly convex objective.
//!
//! [`eval`] provides the measurement stack: Hungarian-matched clustering
//! accuracy, NMI, 11-point interpolated mean average precision, and KNN
//! recognition rate, plus the cross-modal retrieval harness.
//!
//! Heavy inner loops (per-column solves, pairwise distances, per-query
//! ranking) run data-parallel on rayon when the `parallel` feature is
//! enabled (default); disabling it yields a dependency-light sequential
//! build with bit-identical results.

pub mod cmmp;
pub mod csc;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod exec;
pub mod linalg;
pub mod spectral;

pub use error::{Error, Result};
pub use exec::ExecMode;
pub use linalg::{DistanceMetric, Mat};
