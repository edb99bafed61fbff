use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::cgd::{cg_solve, check_mask, check_slice, rhs_with, zero_weights, CgdOutcome, SampledGram};
use super::gradient::{check_weights, predict, terms_with};
use super::{CgdConfig, FsmEstimate, SpectralVec, REPAIR_TOL};
use crate::synth::{MaskKind, SampleMask};
use crate::tensor::{is_self_conjugate, Tensor3, TubeFft};
use crate::{linalg, Error, Result};

/// Weights of one lateral slice in the basis, per stored Fourier slice.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSlice {
    pub n3: usize,
    pub spectral: SpectralVec,
}

impl WeightSlice {
    pub fn rank(&self) -> usize {
        self.spectral.first().map_or(0, |w| w.len())
    }

    /// Canonical `r x 1 x n3` weight tensor.
    pub fn to_tensor(&self) -> Tensor3 {
        let data = TubeFft::new(self.n3).inverse_lateral(&self.spectral);
        Tensor3::from_vec(self.rank(), 1, self.n3, data).expect("weight shape")
    }
}

/// Diagnostics of one streaming step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub t: u64,
    pub cg_iters: usize,
    /// `||P_Omega(V - U * W)||_F` before the basis update.
    pub residual_norm: f64,
    /// Rotation angle applied to each stored Fourier slice.
    pub theta: Vec<f64>,
    pub wall_time: f64,
    /// Number of slices re-orthonormalized after the update.
    pub repaired: usize,
}

#[derive(Debug, Clone)]
pub struct StepOutput {
    pub weights: WeightSlice,
    pub report: StepReport,
    /// `U_{t+1} * W_t`: the completed slice after the update.
    pub imputed: Tensor3,
}

/// Rotates every stored slice towards `rho` in place; returns the angles.
pub(crate) fn rotate(fsm: &mut FsmEstimate, rho: &[DVector<Complex64>], w: &[DVector<Complex64>]) -> Vec<f64> {
    let mut theta = vec![0.0; w.len()];
    for (l, u) in fsm.slices_mut().iter_mut().enumerate() {
        let (rn, wn) = (rho[l].norm(), w[l].norm());
        if rn == 0.0 || wn == 0.0 {
            continue;
        }
        let p = &*u * &w[l];
        let pn = p.norm();
        if pn == 0.0 {
            continue;
        }
        let t = (rn / wn).atan();
        let dir = &rho[l] * Complex64::new(t.sin() / rn, 0.0)
            + p * Complex64::new((t.cos() - 1.0) / pn, 0.0);
        let wt = w[l].adjoint() / Complex64::new(wn, 0.0);
        *u += dir * wt;
        theta[l] = t;
    }
    fsm.enforce_real_edges();
    theta
}

/// Greedy geodesic step: slice `l` turns by `atan(|rho_l| / |w_l|)`
/// within the plane spanned by its prediction `U_l w_l` and `rho_l`.
/// Slices with a vanishing `rho_l` or `w_l` are left as they are.
pub fn geodesic_update(
    u: &FsmEstimate,
    rho: &[DVector<Complex64>],
    w: &[DVector<Complex64>],
) -> Result<(FsmEstimate, Vec<f64>)> {
    check_weights(u, w)?;
    if rho.len() != u.slices().len() || rho.iter().any(|r| r.len() != u.n1()) {
        return Err(Error::DimensionMismatch("residual spectrum shape".into()));
    }
    let mut next = u.clone();
    let theta = rotate(&mut next, rho, w);
    next.repair(REPAIR_TOL);
    Ok((next, theta))
}

/// Minimum-norm least-squares weights on the observed tubes, slice by slice.
pub fn solve_weights_pinv(u: &FsmEstimate, v: &Tensor3, mask: &SampleMask) -> Result<WeightSlice> {
    check_slice(u, v)?;
    check_mask(u, mask)?;
    let plan = TubeFft::new(u.n3());
    pinv_with(u, &plan, v, mask)
}

pub(crate) fn pinv_with(u: &FsmEstimate, plan: &TubeFft, v: &Tensor3, mask: &SampleMask) -> Result<WeightSlice> {
    let rows = mask.tube_list().ok_or(Error::MaskKind {
        expected: "tubes",
        found: "entries",
    })?;
    let n3 = u.n3();
    if rows.is_empty() {
        return Ok(WeightSlice {
            n3,
            spectral: zero_weights(u),
        });
    }
    let filled = mask.apply(v)?;
    let vbar = plan.forward_lateral(filled.as_slice(), u.n1());
    let mut spectral = Vec::with_capacity(vbar.len());
    for (l, (ul, vl)) in u.slices().iter().zip(&vbar).enumerate() {
        let a: DMatrix<Complex64> = ul.select_rows(rows);
        let b: DVector<Complex64> = vl.select_rows(rows);
        let svd = linalg::svd(&a);
        let smax = svd.sigma.first().copied().unwrap_or(0.0);
        let eps = smax * rows.len().max(u.rank()) as f64 * f64::EPSILON;
        let mut x = svd.solve(&b, eps);
        if is_self_conjugate(l, n3) {
            x.iter_mut().for_each(|z| z.im = 0.0);
        }
        spectral.push(x);
    }
    Ok(WeightSlice { n3, spectral })
}

/// Owns a basis estimate and advances it one lateral slice at a time.
#[derive(Debug, Clone)]
pub struct Tracker {
    fsm: FsmEstimate,
    plan: TubeFft,
    cfg: CgdConfig,
    steps: u64,
}

impl Tracker {
    pub fn new(fsm: FsmEstimate, cfg: CgdConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            plan: TubeFft::new(fsm.n3()),
            fsm,
            cfg,
            steps: 0,
        })
    }

    pub fn fsm(&self) -> &FsmEstimate {
        &self.fsm
    }

    pub fn into_fsm(self) -> FsmEstimate {
        self.fsm
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn config(&self) -> &CgdConfig {
        &self.cfg
    }

    /// Entry-sampled step for entry masks, tube step for tube masks.
    pub fn step(&mut self, v: &Tensor3, mask: &SampleMask) -> Result<StepOutput> {
        match mask.kind() {
            MaskKind::Entries => self.step_entries(v, mask),
            MaskKind::Tubes => self.step_tubes(v, mask),
        }
    }

    /// Conjugate-gradient weights, projected residual, geodesic rotation.
    /// Accepts any mask; tube masks are treated as their entries.
    pub fn step_entries(&mut self, v: &Tensor3, mask: &SampleMask) -> Result<StepOutput> {
        check_slice(&self.fsm, v)?;
        check_mask(&self.fsm, mask)?;
        let start = Instant::now();
        let t = self.steps;
        self.steps += 1;
        if mask.is_empty() {
            return Ok(self.idle(t, start));
        }
        let observed = mask.indicator();
        let CgdOutcome { weights, iters, .. } = {
            let b = rhs_with(&self.fsm, &self.plan, v, &observed);
            let op = SampledGram {
                u: &self.fsm,
                plan: &self.plan,
                observed: &observed,
            };
            cg_solve(&op, b, &self.cfg)
        };
        let terms = terms_with(&self.fsm, &self.plan, v, &observed, &weights);
        let theta = rotate(&mut self.fsm, &terms.rho, &weights);
        Ok(self.finish(t, start, weights, iters, terms.residual.frobenius_norm(), theta))
    }

    /// Exact per-slice pseudo-inverse weights and a rotation towards the
    /// zero-filled residual.
    pub fn step_tubes(&mut self, v: &Tensor3, mask: &SampleMask) -> Result<StepOutput> {
        check_slice(&self.fsm, v)?;
        check_mask(&self.fsm, mask)?;
        if mask.kind() != MaskKind::Tubes {
            return Err(Error::MaskKind {
                expected: "tubes",
                found: "entries",
            });
        }
        let start = Instant::now();
        let t = self.steps;
        self.steps += 1;
        if mask.is_empty() {
            return Ok(self.idle(t, start));
        }
        let weights = pinv_with(&self.fsm, &self.plan, v, mask)?.spectral;
        let terms = terms_with(&self.fsm, &self.plan, v, &mask.indicator(), &weights);
        let theta = rotate(&mut self.fsm, &terms.r_omega, &weights);
        Ok(self.finish(t, start, weights, 0, terms.residual.frobenius_norm(), theta))
    }

    fn idle(&self, t: u64, start: Instant) -> StepOutput {
        let weights = zero_weights(&self.fsm);
        let n = weights.len();
        self.output(t, start, weights, 0, 0.0, vec![0.0; n], 0)
    }

    fn finish(
        &mut self,
        t: u64,
        start: Instant,
        weights: SpectralVec,
        iters: usize,
        residual_norm: f64,
        theta: Vec<f64>,
    ) -> StepOutput {
        let repaired = self.fsm.repair(REPAIR_TOL);
        self.output(t, start, weights, iters, residual_norm, theta, repaired)
    }

    #[allow(clippy::too_many_arguments)]
    fn output(
        &self,
        t: u64,
        start: Instant,
        weights: SpectralVec,
        cg_iters: usize,
        residual_norm: f64,
        theta: Vec<f64>,
        repaired: usize,
    ) -> StepOutput {
        let (n1, n3) = (self.fsm.n1(), self.fsm.n3());
        let imputed = Tensor3::from_vec(n1, 1, n3, predict(&self.fsm, &self.plan, &weights))
            .expect("slice shape");
        StepOutput {
            weights: WeightSlice {
                n3,
                spectral: weights,
            },
            report: StepReport {
                t,
                cg_iters,
                residual_norm,
                theta,
                wall_time: start.elapsed().as_secs_f64(),
                repaired,
            },
            imputed,
        }
    }
}

/// One entry-sampled step from `u`; returns the updated basis.
pub fn toucan_step(
    u: &FsmEstimate,
    v: &Tensor3,
    mask: &SampleMask,
    cfg: &CgdConfig,
) -> Result<(FsmEstimate, StepOutput)> {
    let mut tr = Tracker::new(u.clone(), *cfg)?;
    let out = tr.step_entries(v, mask)?;
    Ok((tr.into_fsm(), out))
}

/// One tube-sampled step from `u`; returns the updated basis.
pub fn toucan_tube_step(
    u: &FsmEstimate,
    v: &Tensor3,
    mask: &SampleMask,
) -> Result<(FsmEstimate, StepOutput)> {
    let mut tr = Tracker::new(u.clone(), CgdConfig::default())?;
    let out = tr.step_tubes(v, mask)?;
    Ok((tr.into_fsm(), out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::gen_mask;
    use crate::toucan::testutil::{gaussian, in_span, max_abs_diff};
    use crate::toucan::{sampled_loss, solve_weights_cgd};

    fn fitted_loss(u: &FsmEstimate, v: &Tensor3, mask: &SampleMask) -> f64 {
        let w = solve_weights_cgd(u, v, mask, &CgdConfig::default()).unwrap().weights;
        sampled_loss(u, v, mask, &w).unwrap()
    }

    #[test]
    fn zero_residual_leaves_basis_unchanged() {
        let u = FsmEstimate::random(8, 2, 5, 1).unwrap();
        let rho = vec![DVector::zeros(8); 3];
        let w = vec![DVector::from_element(2, Complex64::new(1.0, 0.0)); 3];
        let (next, theta) = geodesic_update(&u, &rho, &w).unwrap();
        assert_eq!(next, u);
        assert!(theta.iter().all(|&t| t == 0.0));
    }

    #[test]
    fn in_span_slice_is_a_fixed_point() {
        let u = FsmEstimate::random(10, 3, 6, 2).unwrap();
        let v = in_span(&u, &gaussian(3, 1, 6, 3));
        let (next, out) = toucan_step(&u, &v, &SampleMask::full(10, 6, MaskKind::Entries), &CgdConfig::default()).unwrap();
        assert!(out.report.residual_norm < 1e-10);
        for (a, b) in next.slices().iter().zip(u.slices()) {
            assert!((a - b).norm() < 1e-9);
        }
        assert!(max_abs_diff(out.imputed.as_slice(), v.as_slice()) < 1e-10);
    }

    #[test]
    fn step_preserves_orthonormality() {
        let mut u = FsmEstimate::random(12, 3, 7, 4).unwrap();
        for t in 0..30 {
            let v = gaussian(12, 1, 7, 100 + t);
            let mask = gen_mask(12, 7, MaskKind::Entries, 0.5, 200 + t).unwrap();
            let (next, out) = toucan_step(&u, &v, &mask, &CgdConfig::default()).unwrap();
            assert!(next.orthonormality_deviation() <= 1e-10);
            assert!(out.report.theta.iter().all(|&t| (0.0..std::f64::consts::FRAC_PI_2).contains(&t)));
            u = next;
        }
    }

    #[test]
    fn greedy_step_fits_a_fully_observed_slice() {
        let u = FsmEstimate::random(10, 2, 5, 5).unwrap();
        let v = gaussian(10, 1, 5, 6);
        let mask = SampleMask::full(10, 5, MaskKind::Entries);
        let before = fitted_loss(&u, &v, &mask);
        let (next, _) = toucan_step(&u, &v, &mask, &CgdConfig::default()).unwrap();
        let after = fitted_loss(&next, &v, &mask);
        assert!(after < before);
        assert!(after < 1e-16 * before.max(1.0));
    }

    #[test]
    fn partial_step_decreases_loss() {
        let u = FsmEstimate::random(10, 2, 5, 7).unwrap();
        for seed in 0..5 {
            let v = gaussian(10, 1, 5, 30 + seed);
            let mask = gen_mask(10, 5, MaskKind::Entries, 0.6, 40 + seed).unwrap();
            let before = fitted_loss(&u, &v, &mask);
            let (next, _) = toucan_step(&u, &v, &mask, &CgdConfig::default()).unwrap();
            assert!(fitted_loss(&next, &v, &mask) < before);
        }
    }

    #[test]
    fn empty_mask_skips_the_step() {
        let u = FsmEstimate::random(6, 2, 4, 1).unwrap();
        let v = gaussian(6, 1, 4, 2);
        let (next, out) = toucan_step(&u, &v, &SampleMask::empty(6, 4, MaskKind::Entries), &CgdConfig::default()).unwrap();
        assert_eq!(next, u);
        assert_eq!(out.report.cg_iters, 0);
        assert_eq!(out.imputed.frobenius_norm(), 0.0);
    }

    #[test]
    fn pinv_with_all_tubes_is_projection() {
        let u = FsmEstimate::random(9, 3, 6, 3).unwrap();
        let v = gaussian(9, 1, 6, 4);
        let w = solve_weights_pinv(&u, &v, &SampleMask::full(9, 6, MaskKind::Tubes)).unwrap();
        let vbar = TubeFft::new(6).forward_lateral(v.as_slice(), 9);
        for ((ul, vl), wl) in u.slices().iter().zip(&vbar).zip(&w.spectral) {
            assert!((ul.ad_mul(vl) - wl).norm() < 1e-10);
        }
    }

    #[test]
    fn pinv_recovers_weights_from_few_tubes() {
        let u = FsmEstimate::random(20, 3, 5, 8).unwrap();
        let w0 = gaussian(3, 1, 5, 9);
        let v = in_span(&u, &w0);
        let mask = SampleMask::tubes(20, 5, vec![1, 4, 7, 13]).unwrap();
        let w = solve_weights_pinv(&u, &v, &mask).unwrap();
        assert!(max_abs_diff(w.to_tensor().as_slice(), w0.as_slice()) < 1e-8);
    }

    #[test]
    fn pinv_agrees_with_cgd_on_expanded_mask() {
        let u = FsmEstimate::random(15, 3, 6, 10).unwrap();
        for seed in 0..4 {
            let v = gaussian(15, 1, 6, 11 + seed);
            let mask = gen_mask(15, 6, MaskKind::Tubes, 0.5, 20 + seed).unwrap();
            if mask.len() < 3 {
                continue;
            }
            let a = solve_weights_pinv(&u, &v, &mask).unwrap().to_tensor();
            let b = solve_weights_cgd(&u, &v, &mask.to_entries(), &CgdConfig::default()).unwrap();
            let b = WeightSlice { n3: 6, spectral: b.weights }.to_tensor();
            assert!(max_abs_diff(a.as_slice(), b.as_slice()) < 1e-6);
        }
    }

    #[test]
    fn underdetermined_tube_solve_is_minimum_norm() {
        let u = FsmEstimate::random(10, 3, 4, 1).unwrap();
        let v = gaussian(10, 1, 4, 2);
        let mask = SampleMask::tubes(10, 4, vec![2]).unwrap();
        let w = solve_weights_pinv(&u, &v, &mask).unwrap();
        assert!(w.spectral.iter().all(|x| x.iter().all(|z| z.is_finite())));
        let (next, _) = toucan_tube_step(&u, &v, &mask).unwrap();
        assert!(next.orthonormality_deviation() <= 1e-10);
    }

    #[test]
    fn tube_step_requires_tube_mask() {
        let u = FsmEstimate::random(6, 2, 4, 1).unwrap();
        let v = gaussian(6, 1, 4, 2);
        let err = toucan_tube_step(&u, &v, &SampleMask::full(6, 4, MaskKind::Entries)).unwrap_err();
        assert!(matches!(err, Error::MaskKind { .. }));
        assert!(solve_weights_pinv(&u, &v, &SampleMask::full(6, 4, MaskKind::Entries)).is_err());
    }

    #[test]
    fn tube_step_fixed_point_and_orthonormality() {
        let u = FsmEstimate::random(10, 2, 5, 3).unwrap();
        let v = in_span(&u, &gaussian(2, 1, 5, 4));
        let (next, out) = toucan_tube_step(&u, &v, &SampleMask::full(10, 5, MaskKind::Tubes)).unwrap();
        assert!(out.report.residual_norm < 1e-10);
        assert!(next.slices().iter().zip(u.slices()).all(|(a, b)| (a - b).norm() < 1e-9));
        let mut u = u;
        for t in 0..30 {
            let mask = gen_mask(10, 5, MaskKind::Tubes, 0.5, t).unwrap();
            let (n, _) = toucan_tube_step(&u, &gaussian(10, 1, 5, 50 + t), &mask).unwrap();
            assert!(n.orthonormality_deviation() <= 1e-10);
            u = n;
        }
    }

    #[test]
    fn tracker_dispatches_on_mask_kind() {
        let u = FsmEstimate::random(8, 2, 4, 1).unwrap();
        let v = gaussian(8, 1, 4, 2);
        let mask = gen_mask(8, 4, MaskKind::Tubes, 0.6, 3).unwrap();
        let mut tr = Tracker::new(u.clone(), CgdConfig::default()).unwrap();
        let a = tr.step(&v, &mask).unwrap();
        let (_, b) = toucan_tube_step(&u, &v, &mask).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(tr.steps(), 1);
        assert_eq!(a.report.t, 0);
    }
}
