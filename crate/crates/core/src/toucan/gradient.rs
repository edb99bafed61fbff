use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::cgd::{check_mask, check_slice};
use super::{FsmEstimate, SpectralVec};
use crate::synth::SampleMask;
use crate::tensor::{slice_multiplicity, Tensor3, TubeFft};
use crate::{Error, Result};

/// Quantities entering the Grassmannian gradient for one slice.
#[derive(Debug, Clone)]
pub struct GradientTerms {
    /// `(I - U_l U_l') r_l` per stored slice.
    pub rho: SpectralVec,
    /// Transform of the zero-filled residual, per stored slice.
    pub r_omega: SpectralVec,
    /// Canonical residual restricted to the observed entries.
    pub residual: Tensor3,
    /// Canonical prediction `U * W` before the update.
    pub prediction: Tensor3,
}

pub(crate) fn check_weights(u: &FsmEstimate, w: &[DVector<Complex64>]) -> Result<()> {
    if w.len() != u.slices().len() || w.iter().any(|x| x.len() != u.rank()) {
        return Err(Error::DimensionMismatch(format!(
            "weights do not match a rank-{} basis with {} Fourier slices",
            u.rank(),
            u.slices().len()
        )));
    }
    Ok(())
}

pub(crate) fn predict(u: &FsmEstimate, plan: &TubeFft, w: &[DVector<Complex64>]) -> Vec<f64> {
    let p: SpectralVec = u.slices().iter().zip(w).map(|(u, w)| u * w).collect();
    plan.inverse_lateral(&p)
}

pub(crate) fn terms_with(
    u: &FsmEstimate,
    plan: &TubeFft,
    v: &Tensor3,
    observed: &[bool],
    w: &[DVector<Complex64>],
) -> GradientTerms {
    let (n1, n3) = (u.n1(), u.n3());
    let pred = predict(u, plan, w);
    let resid: Vec<f64> = v
        .as_slice()
        .iter()
        .zip(&pred)
        .zip(observed)
        .map(|((&x, &p), &o)| if o { x - p } else { 0.0 })
        .collect();
    let r_omega = plan.forward_lateral(&resid, n1);
    let rho = u
        .slices()
        .iter()
        .zip(&r_omega)
        .map(|(u, r)| r - u * u.ad_mul(r))
        .collect();
    GradientTerms {
        rho,
        r_omega,
        residual: Tensor3::from_vec(n1, 1, n3, resid).expect("slice shape"),
        prediction: Tensor3::from_vec(n1, 1, n3, pred).expect("slice shape"),
    }
}

/// Residual and projected-residual terms for weights `w`.
pub fn compute_gradient_terms(
    u: &FsmEstimate,
    v: &Tensor3,
    mask: &SampleMask,
    w: &[DVector<Complex64>],
) -> Result<GradientTerms> {
    check_slice(u, v)?;
    check_mask(u, mask)?;
    check_weights(u, w)?;
    Ok(terms_with(u, &TubeFft::new(u.n3()), v, &mask.indicator(), w))
}

/// Per-slice blocks `-rho_l w_l'` of the Grassmannian gradient.
pub fn gradient_blocks(terms: &GradientTerms, w: &[DVector<Complex64>]) -> Vec<DMatrix<Complex64>> {
    terms
        .rho
        .iter()
        .zip(w)
        .map(|(rho, w)| -(rho * w.adjoint()))
        .collect()
}

/// Rate of change of [`sampled_loss`] when every Fourier slice moves as
/// `U_l + h D_l`, predicted from the gradient blocks.
///
/// The forward DFT is unnormalized, so the canonical-domain loss changes at
/// `1/n3` times the Fourier-domain inner product (summed over the full
/// spectrum).
pub fn directional_derivative(
    blocks: &[DMatrix<Complex64>],
    direction: &[DMatrix<Complex64>],
    n3: usize,
) -> f64 {
    let s: f64 = blocks
        .iter()
        .zip(direction)
        .enumerate()
        .map(|(l, (g, d))| slice_multiplicity(l, n3) * g.dotc(d).re)
        .sum();
    s / n3 as f64
}

/// `1/2 ||P_Omega (v - U * W)||^2` in the canonical domain.
pub fn sampled_loss(
    u: &FsmEstimate,
    v: &Tensor3,
    mask: &SampleMask,
    w: &[DVector<Complex64>],
) -> Result<f64> {
    check_slice(u, v)?;
    check_mask(u, mask)?;
    check_weights(u, w)?;
    let pred = predict(u, &TubeFft::new(u.n3()), w);
    Ok(0.5
        * v.as_slice()
            .iter()
            .zip(&pred)
            .zip(mask.indicator())
            .filter(|(_, o)| *o)
            .map(|((x, p), _)| (x - p).powi(2))
            .sum::<f64>())
}
