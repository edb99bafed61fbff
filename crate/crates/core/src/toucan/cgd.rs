use nalgebra::DVector;
use num_complex::Complex64;

use super::{FsmEstimate, SpectralVec};
use crate::synth::SampleMask;
use crate::tensor::{slice_multiplicity, Tensor3, TubeFft};
use crate::{Error, Result};

/// Stopping rule for the inner conjugate-gradient solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgdConfig {
    /// Relative normal-equation residual at which to stop.
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for CgdConfig {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iters: 300,
        }
    }
}

impl CgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iters == 0 {
            return Err(Error::InvalidArgument(format!(
                "CG tolerance {} / max_iters {}",
                self.tol, self.max_iters
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CgdOutcome {
    pub weights: SpectralVec,
    pub iters: usize,
    /// Final relative residual of the normal equations.
    pub rel_residual: f64,
}

/// Real inner product of two conjugate-symmetric spectra, summed over the
/// full spectrum (implied slices included).
pub(crate) fn spectral_dot(x: &[DVector<Complex64>], y: &[DVector<Complex64>], n3: usize) -> f64 {
    x.iter()
        .zip(y)
        .enumerate()
        .map(|(l, (a, b))| slice_multiplicity(l, n3) * a.dotc(b).re)
        .sum()
}

pub(crate) fn check_slice(u: &FsmEstimate, v: &Tensor3) -> Result<()> {
    if v.dims() != (u.n1(), 1, u.n3()) {
        return Err(Error::DimensionMismatch(format!(
            "lateral slice {:?} for a {}x{}x{} basis",
            v.dims(),
            u.n1(),
            u.rank(),
            u.n3()
        )));
    }
    Ok(())
}

pub(crate) fn check_mask(u: &FsmEstimate, mask: &SampleMask) -> Result<()> {
    if mask.dims() != (u.n1(), u.n3()) {
        return Err(Error::DimensionMismatch(format!(
            "mask {:?} for n1 = {}, n3 = {}",
            mask.dims(),
            u.n1(),
            u.n3()
        )));
    }
    Ok(())
}

/// `U' F' P' P F^-1 U x` evaluated with tube FFTs; the sampled operator is
/// never formed.
pub(crate) struct SampledGram<'a> {
    pub u: &'a FsmEstimate,
    pub plan: &'a TubeFft,
    pub observed: &'a [bool],
}

impl SampledGram<'_> {
    pub fn apply(&self, x: &[DVector<Complex64>]) -> SpectralVec {
        let ys: SpectralVec = self.u.slices().iter().zip(x).map(|(u, x)| u * x).collect();
        let mut canon = self.plan.inverse_lateral(&ys);
        for (c, &o) in canon.iter_mut().zip(self.observed) {
            if !o {
                *c = 0.0;
            }
        }
        let z = self.plan.forward_lateral(&canon, self.u.n1());
        self.u
            .slices()
            .iter()
            .zip(&z)
            .map(|(u, z)| u.ad_mul(z))
            .collect()
    }
}

/// Matrix-free Gram operator of the sampled least-squares weight problem.
pub fn apply_sampled_gram(
    u: &FsmEstimate,
    mask: &SampleMask,
    x: &[DVector<Complex64>],
) -> Result<SpectralVec> {
    check_mask(u, mask)?;
    let plan = TubeFft::new(u.n3());
    let observed = mask.indicator();
    Ok(SampledGram {
        u,
        plan: &plan,
        observed: &observed,
    }
    .apply(x))
}

pub(crate) fn rhs_with(
    u: &FsmEstimate,
    plan: &TubeFft,
    v: &Tensor3,
    observed: &[bool],
) -> SpectralVec {
    let filled: Vec<f64> = v
        .as_slice()
        .iter()
        .zip(observed)
        .map(|(&x, &o)| if o { x } else { 0.0 })
        .collect();
    let vbar = plan.forward_lateral(&filled, u.n1());
    u.slices().iter().zip(&vbar).map(|(u, v)| u.ad_mul(v)).collect()
}

/// Right-hand side `U' F' P' P v` of the normal equations: zero-fill,
/// transform, project onto each basis slice.
pub fn normal_rhs(u: &FsmEstimate, v: &Tensor3, mask: &SampleMask) -> Result<SpectralVec> {
    check_slice(u, v)?;
    check_mask(u, mask)?;
    Ok(rhs_with(u, &TubeFft::new(u.n3()), v, &mask.indicator()))
}

pub(crate) fn zero_weights(u: &FsmEstimate) -> SpectralVec {
    u.slices()
        .iter()
        .map(|_| DVector::zeros(u.rank()))
        .collect()
}

/// Conjugate gradients on `G x = b` over conjugate-symmetric spectra.
pub(crate) fn cg_solve(op: &SampledGram<'_>, b: SpectralVec, cfg: &CgdConfig) -> CgdOutcome {
    let n3 = op.u.n3();
    let mut x = zero_weights(op.u);
    let bnorm = spectral_dot(&b, &b, n3).sqrt();
    if bnorm == 0.0 {
        return CgdOutcome {
            weights: x,
            iters: 0,
            rel_residual: 0.0,
        };
    }
    let mut r = b;
    let mut p = r.clone();
    let mut rs = bnorm * bnorm;
    let mut iters = 0;
    while iters < cfg.max_iters {
        let ap = op.apply(&p);
        let pap = spectral_dot(&p, &ap, n3);
        if !(pap > 0.0) {
            break;
        }
        let alpha = rs / pap;
        let ac = Complex64::new(alpha, 0.0);
        for ((x, r), (p, ap)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&ap)) {
            x.axpy(ac, p, Complex64::new(1.0, 0.0));
            r.axpy(-ac, ap, Complex64::new(1.0, 0.0));
        }
        iters += 1;
        let rs_new = spectral_dot(&r, &r, n3);
        if rs_new.sqrt() <= cfg.tol * bnorm {
            rs = rs_new;
            break;
        }
        let beta = Complex64::new(rs_new / rs, 0.0);
        for (p, r) in p.iter_mut().zip(&r) {
            p.axpy(Complex64::new(1.0, 0.0), r, beta);
        }
        rs = rs_new;
    }
    CgdOutcome {
        weights: x,
        iters,
        rel_residual: rs.sqrt() / bnorm,
    }
}

/// Weights minimizing the squared error on the observed entries of `v`,
/// by conjugate gradients on the normal equations.
pub fn solve_weights_cgd(
    u: &FsmEstimate,
    v: &Tensor3,
    mask: &SampleMask,
    cfg: &CgdConfig,
) -> Result<CgdOutcome> {
    check_slice(u, v)?;
    check_mask(u, mask)?;
    let plan = TubeFft::new(u.n3());
    let observed = mask.indicator();
    if mask.is_empty() {
        return Ok(CgdOutcome {
            weights: zero_weights(u),
            iters: 0,
            rel_residual: 0.0,
        });
    }
    let b = rhs_with(u, &plan, v, &observed);
    let op = SampledGram {
        u,
        plan: &plan,
        observed: &observed,
    };
    Ok(cg_solve(&op, b, cfg))
}
