//! Streaming completion on the tensor Grassmannian.
//!
//! The estimate is an orthonormal basis `U` of an `r`-dimensional free
//! submodule, stored as its Fourier slices. Each incoming lateral slice `v`
//! with observed set `Omega` triggers one stochastic step:
//!
//! 1. fit weights `w` by least squares on the observed entries,
//! 2. form the residual on `Omega` and project it off the current span,
//! 3. rotate every Fourier slice of the basis along a geodesic towards the
//!    residual, with the greedy angle `atan(|rho| / |w|)`.
//!
//! With arbitrary missing entries the weight fit couples all Fourier slices
//! and is solved matrix-free by conjugate gradients ([`solve_weights_cgd`]).
//! When whole tubes are missing the problem separates per slice and is
//! solved exactly with pseudo-inverses ([`solve_weights_pinv`]).

mod bound;
mod cgd;
mod fsm;
mod gradient;
mod step;
mod stream;

use nalgebra::DVector;
use num_complex::Complex64;

pub use bound::{
    basis_coherence, calibrate_coherence_constant, cgd_iteration_bound, coherence,
    condition_number, empirical_condition_bound, sampled_operator, BoundParams, ConditionBound,
    IterationBound,
};
pub use cgd::{apply_sampled_gram, normal_rhs, solve_weights_cgd, CgdConfig, CgdOutcome};
pub use fsm::{CheckpointMeta, FsmEstimate, REPAIR_TOL};
pub use gradient::{
    compute_gradient_terms, directional_derivative, gradient_blocks, sampled_loss, GradientTerms,
};
pub use step::{
    geodesic_update, solve_weights_pinv, toucan_step, toucan_tube_step, StepOutput, StepReport,
    Tracker, WeightSlice,
};
pub use stream::{
    complete_with_basis, run_batch, run_batch_with, run_stream, BatchOptions, BatchRun, PassSummary, SliceOrder,
    StreamRun,
};

/// One complex vector per stored Fourier slice.
pub type SpectralVec = Vec<DVector<Complex64>>;
