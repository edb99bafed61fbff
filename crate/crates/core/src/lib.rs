//! Streaming completion of low-tubal-rank 3-way tensors.
//!
//! The crate is organised around the t-product algebra: tensors are
//! multiplied as block-circulant matrices, which the mode-3 DFT turns into
//! independent per-frequency matrix products. On top of that algebra sit
//!
//! * [`tsvd`]: the batch t-SVD, tubal rank and truncation,
//! * [`toucan`]: the streaming solver that tracks a free submodule one
//!   lateral slice at a time (entry-sampled and tube-sampled variants),
//! * [`synth`] and [`metrics`]: reproducible synthetic workloads and the
//!   quantities used to score them.
//!
//! Real tensors only keep the non-redundant half of their spectrum
//! (`n3 / 2 + 1` frontal slices); the remaining slices are complex
//! conjugates and are never materialized.

pub mod error;
pub mod io;
mod linalg;
pub mod metrics;
pub mod par;
pub mod synth;
pub mod tensor;
pub mod toucan;
pub mod tsvd;

pub use error::{Error, Result};
pub use metrics::{fsm_tracking_error, nrmse, MetricRecord};
pub use synth::{MaskKind, SampleMask, StreamSpec};
pub use tensor::{SpectralTensor, Tensor3};
pub use toucan::{CgdConfig, FsmEstimate, StepReport, WeightSlice};
pub use tsvd::TsvdFactors;
