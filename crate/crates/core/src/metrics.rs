//! Error measures for completion and tracking runs.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::tensor::slice_multiplicity;
use crate::toucan::FsmEstimate;
use crate::{Error, Result, Tensor3};

/// `||estimate - truth||_F / ||truth||_F`.
pub fn nrmse(estimate: &Tensor3, truth: &Tensor3) -> Result<f64> {
    let diff = estimate.sub(truth)?;
    let denom = truth.frobenius_norm();
    if denom == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok(diff.frobenius_norm() / denom)
}

fn projector(u: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    u * u.adjoint()
}

/// Normalized distance between the projectors `U * U'` of two bases,
/// evaluated slice by slice in the Fourier domain.
pub fn fsm_tracking_error(est: &FsmEstimate, truth: &FsmEstimate) -> Result<f64> {
    if est.n1() != truth.n1() || est.n3() != truth.n3() {
        return Err(Error::DimensionMismatch(format!(
            "bases with (n1, n3) = ({}, {}) and ({}, {})",
            est.n1(),
            est.n3(),
            truth.n1(),
            truth.n3()
        )));
    }
    let n3 = est.n3();
    let (mut num, mut den) = (0.0, 0.0);
    for (l, (a, b)) in est.slices().iter().zip(truth.slices()).enumerate() {
        let m = slice_multiplicity(l, n3);
        let pb = projector(b);
        num += m * (projector(a) - &pb).norm_squared();
        den += m * pb.norm_squared();
    }
    if den == 0.0 {
        return Err(Error::ZeroReference);
    }
    Ok((num / den).sqrt())
}

/// One row of a metrics table.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricRecord {
    pub t: u64,
    pub nrmse_slice: f64,
    pub fsm_error: Option<f64>,
    pub cg_iters: usize,
    pub wall_ms: Option<f64>,
}

impl MetricRecord {
    pub fn new(t: u64, nrmse_slice: f64) -> Self {
        Self {
            t,
            nrmse_slice,
            fsm_error: None,
            cg_iters: 0,
            wall_ms: None,
        }
    }
}

/// Per-lateral-slice NRMSE of an imputed tensor. A slice whose truth is
/// zero reports the absolute error instead.
pub fn slice_nrmse_curve(imputed: &Tensor3, truth: &Tensor3) -> Result<Vec<MetricRecord>> {
    if imputed.dims() != truth.dims() {
        return Err(Error::DimensionMismatch(format!(
            "imputed {:?} vs truth {:?}",
            imputed.dims(),
            truth.dims()
        )));
    }
    Ok((0..truth.n2())
        .map(|j| {
            let (a, b) = (imputed.lateral(j), truth.lateral(j));
            let e = nrmse(&a, &b).unwrap_or_else(|_| a.frobenius_norm());
            MetricRecord::new(j as u64, e)
        })
        .collect())
}

pub const METRICS_HEADER: &str = "t,nrmse,fsm_error,cg_iters,wall_ms";

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:e}")).unwrap_or_default()
}

/// Writes records as CSV under [`METRICS_HEADER`]; absent values are empty.
pub fn write_metrics_csv<W: Write>(w: &mut W, records: &[MetricRecord]) -> Result<()> {
    writeln!(w, "{METRICS_HEADER}")?;
    for r in records {
        writeln!(
            w,
            "{},{:e},{},{},{}",
            r.t,
            r.nrmse_slice,
            opt(r.fsm_error),
            r.cg_iters,
            opt(r.wall_ms)
        )?;
    }
    Ok(())
}
