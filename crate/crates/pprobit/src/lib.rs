//! p-generalized probit regression with coreset acceleration.
//!
//! The crate fits binary-response probit models whose link function is the
//! cdf of a p-generalized normal distribution (Laplace for p=1, Gaussian for
//! p=2, approaching uniform as p grows). Fitting minimizes the convex loss
//! `f_w(Xβ) = Σ w_i · g(x_i β)` with `g(r) = −ln Φ_p(−r)` by damped
//! Newton-Raphson.
//!
//! For large n the crate builds small weighted coresets in two streaming
//! passes: a sketch of the data yields a well-conditioned basis, whose row
//! norms approximate ℓp leverage scores, which drive weighted reservoir
//! sampling. Solving on the coreset approximates the full maximum likelihood
//! estimate. A single-pass online variant is available for p=2.

pub mod conditioning;
pub mod data;
pub mod error;
pub mod experiment;
pub mod gennorm;
pub mod linalg;
pub mod objective;
pub mod online;
pub mod pipeline;
pub mod rng;
pub mod sampling;
pub mod sketch;
pub mod solver;
pub mod special;
pub mod stream;

pub use error::{Error, Result};
pub use gennorm::ShapeP;
pub use objective::FoldedDesignMatrix;
pub use sampling::WeightedCoreset;
