use nalgebra::DMatrix;
use num_complex::Complex64;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::io::ComplexTensor3;
use crate::synth::rng::{self, STREAM_INIT};
use crate::tensor::{fft3, half_len, ifft3, is_self_conjugate, SpectralTensor, Tensor3};
use crate::{Error, Result};

/// Orthonormality drift above which a slice is re-orthonormalized.
pub const REPAIR_TOL: f64 = 1e-10;

/// Orthonormal basis of an `r`-dimensional free submodule of
/// `n1 x 1 x n3` lateral slices, kept in the Fourier domain.
///
/// Slice `l` is an `n1 x r` complex matrix with orthonormal columns; only
/// the `n3 / 2 + 1` non-redundant slices are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct FsmEstimate {
    n1: usize,
    r: usize,
    n3: usize,
    slices: Vec<DMatrix<Complex64>>,
}

/// JSON sidecar written next to a checkpointed estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub n3: usize,
    pub r: usize,
    pub step_count: u64,
    pub seed: u64,
}

impl FsmEstimate {
    /// Wraps stored Fourier slices without touching them.
    pub fn from_spectral(n3: usize, slices: Vec<DMatrix<Complex64>>) -> Result<Self> {
        if slices.len() != half_len(n3) {
            return Err(Error::DimensionMismatch(format!(
                "{} Fourier slices for n3 = {n3}",
                slices.len()
            )));
        }
        let (n1, r) = slices[0].shape();
        if slices.iter().any(|s| s.shape() != (n1, r)) {
            return Err(Error::DimensionMismatch("ragged basis slices".into()));
        }
        Ok(Self { n1, r, n3, slices })
    }

    /// Transforms a real `n1 x r x n3` tensor; no orthonormalization.
    pub fn from_tensor(u: &Tensor3) -> Self {
        let s = fft3(u);
        Self {
            n1: s.n1,
            r: s.n2,
            n3: s.n3,
            slices: s.slices,
        }
    }

    /// Random i.i.d. Gaussian tensor, transformed and orthonormalized slice
    /// by slice.
    pub fn random(n1: usize, r: usize, n3: usize, seed: u64) -> Result<Self> {
        Self::random_from_rng(n1, r, n3, &mut rng::substream(seed, STREAM_INIT))
    }

    pub fn random_from_rng(n1: usize, r: usize, n3: usize, g: &mut ChaCha20Rng) -> Result<Self> {
        if r == 0 || r >= n1 {
            return Err(Error::RankOutOfRange {
                rank: r,
                max: n1.saturating_sub(1),
            });
        }
        let data = (0..n1 * r * n3).map(|_| rng::gaussian(g)).collect();
        let mut fsm = Self::from_tensor(&Tensor3::from_vec(n1, r, n3, data)?);
        for l in 0..fsm.slices.len() {
            fsm.orthonormalize_slice(l);
        }
        Ok(fsm)
    }

    #[inline]
    pub fn n1(&self) -> usize {
        self.n1
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.r
    }

    #[inline]
    pub fn n3(&self) -> usize {
        self.n3
    }

    #[inline]
    pub fn slices(&self) -> &[DMatrix<Complex64>] {
        &self.slices
    }

    #[inline]
    pub(crate) fn slices_mut(&mut self) -> &mut [DMatrix<Complex64>] {
        &mut self.slices
    }

    /// Canonical-domain tensor `U` (`n1 x r x n3`).
    pub fn to_tensor(&self) -> Result<Tensor3> {
        ifft3(&self.spectral())
    }

    pub fn spectral(&self) -> SpectralTensor {
        SpectralTensor {
            n1: self.n1,
            n2: self.r,
            n3: self.n3,
            slices: self.slices.clone(),
            symmetric: true,
        }
    }

    /// Scalars held by the estimate: `(complex entries, real weight entries)`
    /// for one step, i.e. the basis plus a single weight slice.
    pub fn state_len(&self) -> (usize, usize) {
        (
            self.slices.iter().map(|s| s.len()).sum(),
            self.r * self.n3,
        )
    }

    /// `||U_l' U_l - I||_F` for every stored slice.
    pub fn slice_deviations(&self) -> Vec<f64> {
        self.slices
            .iter()
            .map(|u| (u.adjoint() * u - DMatrix::<Complex64>::identity(self.r, self.r)).norm())
            .collect()
    }

    pub fn orthonormality_deviation(&self) -> f64 {
        self.slice_deviations().into_iter().fold(0.0, f64::max)
    }

    /// Re-orthonormalizes every slice whose drift exceeds `tol`. Returns the
    /// number of repaired slices.
    pub fn repair(&mut self, tol: f64) -> usize {
        let devs = self.slice_deviations();
        let mut repaired = 0;
        for (l, d) in devs.into_iter().enumerate() {
            if !(d <= tol) {
                self.orthonormalize_slice(l);
                repaired += 1;
            }
        }
        repaired
    }

    /// Thin QR of slice `l`, keeping the self-conjugate slices real.
    pub(crate) fn orthonormalize_slice(&mut self, l: usize) {
        let real = is_self_conjugate(l, self.n3);
        let s = &mut self.slices[l];
        if real {
            s.iter_mut().for_each(|z| z.im = 0.0);
        }
        let mut q = s.clone().qr().q();
        if real {
            q.iter_mut().for_each(|z| z.im = 0.0);
        }
        *s = q;
    }

    /// Zeroes round-off imaginary parts on slices that must be real.
    pub(crate) fn enforce_real_edges(&mut self) {
        for l in 0..self.slices.len() {
            if is_self_conjugate(l, self.n3) {
                self.slices[l].iter_mut().for_each(|z| z.im = 0.0);
            }
        }
    }

    /// Basis of `U * Q` for an `r x r' x n3` tensor `Q`.
    pub fn right_multiply(&self, q: &Tensor3) -> Result<FsmEstimate> {
        if q.n1() != self.r || q.n3() != self.n3 {
            return Err(Error::DimensionMismatch(format!(
                "basis with rank {} times {:?}",
                self.r,
                q.dims()
            )));
        }
        let fq = fft3(q);
        let slices = self
            .slices
            .iter()
            .zip(&fq.slices)
            .map(|(u, q)| u * q)
            .collect();
        FsmEstimate::from_spectral(self.n3, slices)
    }

    /// Complex `n1 x r x (n3/2 + 1)` payload for a `TNS1` checkpoint.
    pub fn to_checkpoint(&self) -> ComplexTensor3 {
        ComplexTensor3::from_slices(&self.slices)
    }

    pub fn from_checkpoint(t: &ComplexTensor3, meta: &CheckpointMeta) -> Result<Self> {
        if t.n2 != meta.r || t.n3 != half_len(meta.n3) {
            return Err(Error::Format(format!(
                "checkpoint {}x{}x{} does not match r = {}, n3 = {}",
                t.n1, t.n2, t.n3, meta.r, meta.n3
            )));
        }
        let slices = (0..t.n3).map(|k| t.frontal(k)).collect();
        Self::from_spectral(meta.n3, slices)
    }
}
