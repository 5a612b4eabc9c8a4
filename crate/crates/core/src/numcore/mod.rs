//! Numeric foundations: flat parameter vectors with named layouts,
//! deterministic RNG streams, vector helpers, and a finite-difference
//! gradient checker.

mod grad;
mod ops;
mod param;
mod rng;

pub use grad::{finite_diff_check, GradResult};
pub use ops::{axpy, cosine_sim, cosine_with_grads, dot, l2_norm_slice};
pub use param::{axpy_params, l2_norm, Layout, ParamVector, TensorSpec};
pub use rng::{streams, Rng64, RngStream};
