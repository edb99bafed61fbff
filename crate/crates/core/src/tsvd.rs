//! t-SVD: `A = U * S * V^T` with orthogonal `U`, `V` and f-diagonal `S`,
//! computed as independent SVDs of the stored Fourier slices.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::tensor::{conj_transpose, fft3, half_len, ifft3, is_self_conjugate, tprod, SpectralTensor, Tensor3};
use crate::{linalg, par, Error, Result};

/// Default relative threshold for counting nonzero singular tubes.
pub const DEFAULT_RANK_TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq)]
pub struct TsvdFactors {
    /// `n1 x n1 x n3` (or `n1 x r x n3` after truncation).
    pub u: Tensor3,
    /// `n1 x n2 x n3`, f-diagonal (or `r x r x n3`).
    pub s: Tensor3,
    /// `n2 x n2 x n3` (or `n2 x r x n3`).
    pub v: Tensor3,
}

struct SliceSvd {
    u: DMatrix<Complex64>,
    sigma: Vec<f64>,
    v: DMatrix<Complex64>,
}

/// Extends orthonormal columns to a full orthonormal basis of `C^n`; the
/// complement comes from a Householder QR of `[cols | I]`.
fn complete_basis(cols: Vec<DVector<Complex64>>, n: usize) -> DMatrix<Complex64> {
    let k = cols.len();
    if k == n {
        return DMatrix::from_columns(&cols);
    }
    let mut aug = DMatrix::<Complex64>::zeros(n, k + n);
    for (j, c) in cols.iter().enumerate() {
        aug.column_mut(j).copy_from(c);
    }
    aug.columns_mut(k, n).fill_with_identity();
    let q = aug.qr().q();
    let mut out = DMatrix::<Complex64>::zeros(n, n);
    for (j, c) in cols.iter().enumerate() {
        out.column_mut(j).copy_from(c);
    }
    out.columns_mut(k, n - k).copy_from(&q.columns(k, n - k));
    out
}

/// Full SVD of one Fourier slice with descending singular values. Slices
/// that must be real stay real.
fn slice_svd(a: &DMatrix<Complex64>, real: bool) -> Result<SliceSvd> {
    let (m, n) = a.shape();
    if m.min(n) == 0 {
        return Ok(SliceSvd {
            u: DMatrix::identity(m, m),
            sigma: Vec::new(),
            v: DMatrix::identity(n, n),
        });
    }
    let a = if real { a.map(|z| Complex64::new(z.re, 0.0)) } else { a.clone() };
    let f = linalg::svd(&a);
    if f.sigma.iter().any(|s| !s.is_finite()) {
        return Err(Error::Factorization("non-finite singular value".into()));
    }
    // Singular vectors of (numerically) zero singular values are not
    // reliable; those directions come from the basis completion instead.
    let floor = f.sigma[0] * (m.max(n) as f64) * f64::EPSILON;
    let kept = f.sigma.iter().take_while(|&&s| s > floor).count();
    let u_thin = (0..kept).map(|i| f.u.column(i).into_owned()).collect();
    let v_thin = (0..kept).map(|i| f.v.column(i).into_owned()).collect();
    let mut uf = complete_basis(u_thin, m);
    let mut vf = complete_basis(v_thin, n);
    if real {
        uf.iter_mut().for_each(|z| z.im = 0.0);
        vf.iter_mut().for_each(|z| z.im = 0.0);
    }
    Ok(SliceSvd { u: uf, sigma: f.sigma, v: vf })
}

/// Full t-SVD of a real tensor.
pub fn tsvd(a: &Tensor3) -> Result<TsvdFactors> {
    let (n1, n2, n3) = a.dims();
    let fa = fft3(a);
    let parts = par::map_range(half_len(n3), |l| slice_svd(&fa.slices[l], is_self_conjugate(l, n3)));
    let parts = parts.into_iter().collect::<Result<Vec<_>>>()?;
    let mut us = Vec::with_capacity(parts.len());
    let mut ss = Vec::with_capacity(parts.len());
    let mut vs = Vec::with_capacity(parts.len());
    for p in parts {
        let mut s = DMatrix::<Complex64>::zeros(n1, n2);
        for (i, &sv) in p.sigma.iter().enumerate() {
            s[(i, i)] = Complex64::new(sv, 0.0);
        }
        us.push(p.u);
        ss.push(s);
        vs.push(p.v);
    }
    let back = |n1: usize, n2: usize, slices| {
        ifft3(&SpectralTensor {
            n1,
            n2,
            n3,
            slices,
            symmetric: true,
        })
    };
    Ok(TsvdFactors {
        u: back(n1, n1, us)?,
        s: back(n1, n2, ss)?,
        v: back(n2, n2, vs)?,
    })
}

impl TsvdFactors {
    /// `U * S * V^T`.
    pub fn reconstruct(&self) -> Result<Tensor3> {
        tprod(&tprod(&self.u, &self.s)?, &conj_transpose(&self.v))
    }

    /// Frobenius norms of the singular tubes `S(i, i, :)`.
    pub fn singular_tube_norms(&self) -> Vec<f64> {
        let (m, n, n3) = self.s.dims();
        (0..m.min(n))
            .map(|i| {
                (0..n3)
                    .map(|k| self.s[(i, i, k)].powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .collect()
    }

    /// Number of singular tubes with norm above `tol` times the first one.
    pub fn tubal_rank(&self, tol: f64) -> usize {
        let norms = self.singular_tube_norms();
        match norms.first() {
            Some(&lead) if lead > 0.0 => norms.iter().filter(|&&x| x > tol * lead).count(),
            _ => 0,
        }
    }

    /// Keeps the leading `r` singular tubes.
    pub fn truncate(&self, r: usize) -> Result<TsvdFactors> {
        let (n1, n2, n3) = self.s.dims();
        let max = n1.min(n2);
        if r == 0 || r > max {
            return Err(Error::RankOutOfRange { rank: r, max });
        }
        Ok(TsvdFactors {
            u: self.u.first_laterals(r),
            s: Tensor3::from_fn(r, r, n3, |i, j, k| self.s[(i, j, k)]),
            v: self.v.first_laterals(r),
        })
    }
}

/// Tubal rank of `a` with singular tubes compared against `tol` times the
/// largest one.
pub fn tubal_rank(a: &Tensor3, tol: f64) -> Result<usize> {
    if !(tol >= 0.0) {
        return Err(Error::InvalidArgument(format!("negative tolerance {tol}")));
    }
    Ok(tsvd(a)?.tubal_rank(tol))
}
