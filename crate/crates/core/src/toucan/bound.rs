use std::f64::consts::PI;

use nalgebra::{ComplexField, DMatrix};
use num_complex::Complex64;

use super::cgd::check_mask;
use super::FsmEstimate;
use crate::par;
use crate::synth::rng::{self, STREAM_INIT};
use crate::synth::SampleMask;
use crate::tensor::slice_multiplicity;
use crate::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-8;

/// Constants of the iteration bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundParams {
    pub c1: f64,
    pub delta: f64,
    /// Target CG precision.
    pub epsilon: f64,
}

impl Default for BoundParams {
    fn default() -> Self {
        Self {
            c1: 1.0,
            delta: 0.1,
            epsilon: 1e-9,
        }
    }
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c1 > 0.0) || !(self.delta > 0.0 && self.delta < 1.0) || !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::InvalidArgument(format!("bound parameters {self:?}")));
        }
        Ok(())
    }

    /// `1/2 log(2 / epsilon)`: iterations per unit of `sqrt(cond)`.
    fn base(&self) -> f64 {
        0.5 * (2.0 / self.epsilon).ln()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum IterationBound {
    Feasible { tau: f64, k_max: f64 },
    /// `tau / delta >= 1`: the bound says nothing.
    Infeasible { tau: f64 },
}

impl IterationBound {
    pub fn k_max(&self) -> Option<f64> {
        match *self {
            Self::Feasible { k_max, .. } => Some(k_max),
            Self::Infeasible { .. } => None,
        }
    }

    pub fn tau(&self) -> f64 {
        match *self {
            Self::Feasible { tau, .. } | Self::Infeasible { tau } => tau,
        }
    }
}

/// Largest squared row norm of a matrix with orthonormal columns, i.e.
/// `max_i ||P_U e_i||^2`.
pub fn coherence<T>(basis: &DMatrix<T>) -> Result<f64>
where
    T: ComplexField<RealField = f64>,
{
    let r = basis.ncols();
    let dev = (basis.adjoint() * basis - DMatrix::<T>::identity(r, r)).norm();
    if !(dev <= ORTHONORMAL_TOL) {
        return Err(Error::NotOrthonormal(dev));
    }
    Ok(basis
        .row_iter()
        .map(|row| row.norm_squared())
        .fold(0.0, f64::max))
}

/// Coherence of the full operator mapping spectral weights to the canonical
/// lateral slice, with columns normalized to unit length.
///
/// Row `(i, k)` has squared norm `(1/n3) sum_l ||U_l(i, :)||^2` over the
/// full spectrum, independent of `k`.
pub fn basis_coherence(u: &FsmEstimate) -> f64 {
    let n3 = u.n3();
    (0..u.n1())
        .map(|i| {
            u.slices()
                .iter()
                .enumerate()
                .map(|(l, s)| slice_multiplicity(l, n3) * s.row(i).norm_squared())
                .sum::<f64>()
                / n3 as f64
        })
        .fold(0.0, f64::max)
}

/// Dense sampled operator: rows are the observed entries `(i, k)` in mask
/// order, columns `(j, l)` run over all `n3` frequencies (`l` major).
///
/// Entry `((i, k), (j, l)) = e^{2 pi i k l / n3} U_l(i, j) / sqrt(n3)`, so
/// the columns are orthonormal under a full mask. Desk scale only.
pub fn sampled_operator(u: &FsmEstimate, mask: &SampleMask) -> Result<DMatrix<Complex64>> {
    check_mask(u, mask)?;
    let (r, n3) = (u.rank(), u.n3());
    let full = u.spectral().expand();
    let entries = mask.to_entries();
    let entries = entries.entry_list().expect("entry mask");
    let scale = 1.0 / (n3 as f64).sqrt();
    let mut a = DMatrix::zeros(entries.len(), r * n3);
    for (row, &(i, k)) in entries.iter().enumerate() {
        for (l, ul) in full.iter().enumerate() {
            let phase = Complex64::from_polar(scale, 2.0 * PI * ((k * l) % n3) as f64 / n3 as f64);
            for j in 0..r {
                a[(row, l * r + j)] = phase * ul[(i, j)];
            }
        }
    }
    Ok(a)
}

/// Ratio of extreme singular values; fails when the matrix is numerically
/// rank-deficient.
pub fn condition_number(a: &DMatrix<Complex64>) -> Result<f64> {
    let (m, n) = a.shape();
    if m < n || n == 0 {
        return Err(Error::SingularOperator);
    }
    let sv = a.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    if !(smin > smax * m as f64 * f64::EPSILON) {
        return Err(Error::SingularOperator);
    }
    Ok(smax / smin)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionBound {
    /// Condition number of each sampled operator.
    pub kappas: Vec<f64>,
    pub mean_kappa_sq: f64,
    /// `1/2 sqrt(mean kappa^2) log(2 / epsilon)`.
    pub bound: f64,
}

impl ConditionBound {
    /// Classical CG iteration bound `1/2 kappa log(2 / epsilon)` for one
    /// instance.
    pub fn instance_bound(kappa: f64, epsilon: f64) -> f64 {
        0.5 * kappa * (2.0 / epsilon).ln()
    }
}

/// Condition numbers of the sampled operators for each mask.
pub fn empirical_condition_bound(u: &FsmEstimate, masks: &[SampleMask], epsilon: f64) -> Result<ConditionBound> {
    if masks.is_empty() {
        return Err(Error::InvalidArgument("no masks".into()));
    }
    let kappas = par::map_slice(masks, |m| sampled_operator(u, m).and_then(|a| condition_number(&a)))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mean_kappa_sq = kappas.iter().map(|k| k * k).sum::<f64>() / kappas.len() as f64;
    Ok(ConditionBound {
        bound: ConditionBound::instance_bound(mean_kappa_sq.sqrt(), epsilon),
        kappas,
        mean_kappa_sq,
    })
}

/// `tau = C1 sqrt(n1 n3 mu log|Omega| / |Omega|)` and, when `tau < delta`,
/// `K = 1/2 sqrt((1 + tau/delta) / (1 - tau/delta)) log(2 / epsilon)`.
///
/// `omega_size` is the number of observed entries of one slice.
pub fn cgd_iteration_bound(mu: f64, n1: usize, n3: usize, omega_size: usize, p: &BoundParams) -> Result<IterationBound> {
    p.validate()?;
    if omega_size == 0 || !(mu >= 0.0) {
        return Err(Error::InvalidArgument(format!("|Omega| = {omega_size}, mu = {mu}")));
    }
    let m = omega_size as f64;
    let tau = p.c1 * (n1 as f64 * n3 as f64 * mu * m.ln() / m).sqrt();
    let x = tau / p.delta;
    if x >= 1.0 {
        return Ok(IterationBound::Infeasible { tau });
    }
    Ok(IterationBound::Feasible {
        tau,
        k_max: ((1.0 + x) / (1.0 - x)).sqrt() * p.base(),
    })
}

/// Smallest `C2` with `mu <= C2 max(r, ln m) / m` over `trials` random
/// orthonormalized Gaussian `m x r` bases.
pub fn calibrate_coherence_constant(m: usize, r: usize, trials: usize, seed: u64) -> Result<f64> {
    if r == 0 || r > m {
        return Err(Error::RankOutOfRange { rank: r, max: m });
    }
    let scale = (r as f64).max((m as f64).ln()) / m as f64;
    let mut g = rng::substream(seed, STREAM_INIT);
    let mut c2: f64 = 0.0;
    for _ in 0..trials {
        let a = DMatrix::from_fn(m, r, |_, _| rng::gaussian(&mut g));
        let q = a.qr().q();
        c2 = c2.max(coherence(&q)? / scale);
    }
    Ok(c2)
}
