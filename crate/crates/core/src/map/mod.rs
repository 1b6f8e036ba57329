//! Maximum a posteriori estimators.
//!
//! Under `x ~ N(0, X)` (stacked states) and independent Laplace noise, the
//! negative log posterior is, up to constants,
//!
//! ```text
//! ½ xᵀ X⁻¹ x + Σ_i √2 |y_i − (C x)_i| / √V_ii
//! ```
//!
//! [`batch`] minimizes this over the whole history; [`window1`] keeps a
//! Gaussian summary of the past and solves the one-step problem in closed
//! form for scalar measurements.

pub mod batch;
pub mod window1;

pub use batch::{
    build_batch_problem, solve_batch_map, BatchMapFilter, BatchMapPlan, BatchMapPlans,
    BatchMapProblem, BatchMapSolution, BatchStructure,
};
pub use window1::{window1_init, window1_step, Window1Case, Window1MapState, Window1Step};

/// Soft-thresholding `sign(v)·max(|v| − t, 0)`.
pub fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}
