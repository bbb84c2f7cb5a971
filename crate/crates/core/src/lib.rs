//! Balancing-based model order reduction for bilinear control systems with
//! non-zero initial conditions.
//!
//! The system `ẋ = Ax + Bu + Σ N_k x u_k`, `x(0) = X₀v₀`, `y = Cx` is split
//! into a homogeneous part (initial condition, no `B`) and an inhomogeneous
//! part (`B`, zero initial state). Each part is balanced with its own Gramian
//! pair, reduced by balanced truncation (BT) or singular perturbation (SPA),
//! and equipped with an `L²` output error bound.

pub mod balancing;
pub mod benchmarks;
pub mod bounds;
pub mod error;
pub mod gramians;
pub mod linalg;
pub mod lmi;
pub mod matrixeq;
pub mod model;
pub mod pipeline;
pub mod reduction;
pub mod sim;
mod serde_mat;

pub use error::{MorError, Result};
pub use linalg::Mat;
