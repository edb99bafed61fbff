//! Dense 3-way tensors, the mode-3 DFT and the t-product algebra.
//!
//! Element `(i, j, k)` of an `n1 x n2 x n3` tensor lives at linear offset
//! `(k * n2 + j) * n1 + i`: each frontal slice is stored column-major and
//! slices are stacked along `k`. With that layout `unfold` is a reshape.

mod algebra;
mod fft;

use std::ops::{Index, IndexMut};

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::{Error, Result};

pub use algebra::{bcirc, conj_transpose, fold, identity_tensor, tprod, unfold};
pub use fft::{fft3, ifft3, TubeFft};

/// Number of Fourier slices stored for a real tensor with `n3` frontal slices.
#[inline]
pub fn half_len(n3: usize) -> usize {
    n3 / 2 + 1
}

/// Multiplicity of stored Fourier slice `l` in the full spectrum: the DC
/// slice (and the Nyquist slice when `n3` is even) appear once, every other
/// stored slice stands for itself and its conjugate partner.
#[inline]
pub fn slice_multiplicity(l: usize, n3: usize) -> f64 {
    if l == 0 || (n3 % 2 == 0 && l == n3 / 2) {
        1.0
    } else {
        2.0
    }
}

/// Whether stored Fourier slice `l` must be real for a real-valued origin.
#[inline]
pub fn is_self_conjugate(l: usize, n3: usize) -> bool {
    l == 0 || (n3 % 2 == 0 && l == n3 / 2)
}

/// Real dense tensor of shape `n1 x n2 x n3`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor3 {
    n1: usize,
    n2: usize,
    n3: usize,
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(n1: usize, n2: usize, n3: usize) -> Self {
        Self {
            n1,
            n2,
            n3,
            data: vec![0.0; n1 * n2 * n3],
        }
    }

    pub fn from_vec(n1: usize, n2: usize, n3: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n1 * n2 * n3 {
            return Err(Error::DimensionMismatch(format!(
                "{} values for a {n1}x{n2}x{n3} tensor",
                data.len()
            )));
        }
        Ok(Self { n1, n2, n3, data })
    }

    pub fn from_fn<F: FnMut(usize, usize, usize) -> f64>(
        n1: usize,
        n2: usize,
        n3: usize,
        mut f: F,
    ) -> Self {
        let mut data = Vec::with_capacity(n1 * n2 * n3);
        for k in 0..n3 {
            for j in 0..n2 {
                for i in 0..n1 {
                    data.push(f(i, j, k));
                }
            }
        }
        Self { n1, n2, n3, data }
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.n1, self.n2, self.n3)
    }

    #[inline]
    pub fn n1(&self) -> usize {
        self.n1
    }

    #[inline]
    pub fn n2(&self) -> usize {
        self.n2
    }

    #[inline]
    pub fn n3(&self) -> usize {
        self.n3
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn offset(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.n1 && j < self.n2 && k < self.n3);
        (k * self.n2 + j) * self.n1 + i
    }

    /// Frontal slice `k` as an `n1 x n2` matrix.
    pub fn frontal(&self, k: usize) -> DMatrix<f64> {
        let len = self.n1 * self.n2;
        DMatrix::from_column_slice(self.n1, self.n2, &self.data[k * len..(k + 1) * len])
    }

    pub fn set_frontal(&mut self, k: usize, m: &DMatrix<f64>) {
        assert_eq!(m.shape(), (self.n1, self.n2));
        let len = self.n1 * self.n2;
        self.data[k * len..(k + 1) * len].copy_from_slice(m.as_slice());
    }

    /// Lateral slice `j` (`n1 x 1 x n3`).
    pub fn lateral(&self, j: usize) -> Tensor3 {
        let mut out = Vec::with_capacity(self.n1 * self.n3);
        for k in 0..self.n3 {
            let start = self.offset(0, j, k);
            out.extend_from_slice(&self.data[start..start + self.n1]);
        }
        Tensor3 {
            n1: self.n1,
            n2: 1,
            n3: self.n3,
            data: out,
        }
    }

    pub fn set_lateral(&mut self, j: usize, slice: &Tensor3) {
        assert_eq!(slice.dims(), (self.n1, 1, self.n3));
        for k in 0..self.n3 {
            let start = self.offset(0, j, k);
            self.data[start..start + self.n1]
                .copy_from_slice(&slice.data[k * self.n1..(k + 1) * self.n1]);
        }
    }

    /// Mode-3 fiber at `(i, j)`.
    pub fn tube(&self, i: usize, j: usize) -> Vec<f64> {
        (0..self.n3).map(|k| self[(i, j, k)]).collect()
    }

    /// Keeps the first `cols` lateral slices.
    pub fn first_laterals(&self, cols: usize) -> Tensor3 {
        Tensor3::from_fn(self.n1, cols, self.n3, |i, j, k| self[(i, j, k)])
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// `self - other`, elementwise.
    pub fn sub(&self, other: &Tensor3) -> Result<Tensor3> {
        self.same_dims(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a - b)
            .collect();
        Ok(Tensor3 { data, ..*self })
    }

    pub fn add(&self, other: &Tensor3) -> Result<Tensor3> {
        self.same_dims(other)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor3 { data, ..*self })
    }

    pub fn scaled(&self, alpha: f64) -> Tensor3 {
        Tensor3 {
            data: self.data.iter().map(|x| alpha * x).collect(),
            ..*self
        }
    }

    pub(crate) fn same_dims(&self, other: &Tensor3) -> Result<()> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(())
    }
}

impl Index<(usize, usize, usize)> for Tensor3 {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j, k): (usize, usize, usize)) -> &f64 {
        &self.data[self.offset(i, j, k)]
    }
}

impl IndexMut<(usize, usize, usize)> for Tensor3 {
    #[inline]
    fn index_mut(&mut self, (i, j, k): (usize, usize, usize)) -> &mut f64 {
        let o = self.offset(i, j, k);
        &mut self.data[o]
    }
}

/// A tensor in the mode-3 Fourier domain.
///
/// When `symmetric` is set the origin is real and only the first
/// `half_len(n3)` frontal slices are stored; slice `l >= half_len(n3)` is
/// implied as `conj(slices[n3 - l])`. Otherwise all `n3` slices are stored.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralTensor {
    pub n1: usize,
    pub n2: usize,
    pub n3: usize,
    pub slices: Vec<DMatrix<Complex64>>,
    pub symmetric: bool,
}

impl SpectralTensor {
    /// Builds a conjugate-symmetric spectral tensor from its stored half.
    pub fn from_half(n3: usize, slices: Vec<DMatrix<Complex64>>) -> Result<Self> {
        if slices.len() != half_len(n3) {
            return Err(Error::DimensionMismatch(format!(
                "{} stored slices for n3 = {n3}, expected {}",
                slices.len(),
                half_len(n3)
            )));
        }
        let (n1, n2) = slices[0].shape();
        if slices.iter().any(|s| s.shape() != (n1, n2)) {
            return Err(Error::DimensionMismatch("ragged frontal slices".into()));
        }
        Ok(Self {
            n1,
            n2,
            n3,
            slices,
            symmetric: true,
        })
    }

    /// All `n3` Fourier slices, completing the implied half by conjugation.
    pub fn expand(&self) -> Vec<DMatrix<Complex64>> {
        if !self.symmetric {
            return self.slices.clone();
        }
        let h = half_len(self.n3);
        (0..self.n3)
            .map(|l| {
                if l < h {
                    self.slices[l].clone()
                } else {
                    self.slices[self.n3 - l].map(|z| z.conj())
                }
            })
            .collect()
    }

    /// Frobenius norm over the full spectrum (implied slices included).
    pub fn frobenius_norm_full(&self) -> f64 {
        let sq: f64 = self
            .slices
            .iter()
            .enumerate()
            .map(|(l, s)| {
                let w = if self.symmetric {
                    slice_multiplicity(l, self.n3)
                } else {
                    1.0
                };
                w * s.norm_squared()
            })
            .sum();
        sq.sqrt()
    }
}
