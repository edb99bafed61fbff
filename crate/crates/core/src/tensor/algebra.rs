use nalgebra::DMatrix;

use super::{fft3, half_len, ifft3, SpectralTensor, Tensor3};
use crate::{par, Error, Result};

/// Stacks the frontal slices vertically into an `n1*n3 x n2` matrix.
pub fn unfold(a: &Tensor3) -> DMatrix<f64> {
    let (n1, n2, n3) = a.dims();
    DMatrix::from_fn(n1 * n3, n2, |row, j| a[(row % n1, j, row / n1)])
}

/// Inverse of [`unfold`].
pub fn fold(m: &DMatrix<f64>, n1: usize, n2: usize, n3: usize) -> Result<Tensor3> {
    if m.shape() != (n1 * n3, n2) {
        return Err(Error::DimensionMismatch(format!(
            "cannot fold a {:?} matrix into {n1}x{n2}x{n3}",
            m.shape()
        )));
    }
    Ok(Tensor3::from_fn(n1, n2, n3, |i, j, k| m[(k * n1 + i, j)]))
}

/// Block-circulant matrix of the frontal slices, `n1*n3 x n2*n3`.
///
/// Block `(p, q)` is frontal slice `(p - q) mod n3`. Dense and quadratic in
/// `n3`: meant for reference computations on small tensors.
pub fn bcirc(a: &Tensor3) -> DMatrix<f64> {
    let (n1, n2, n3) = a.dims();
    DMatrix::from_fn(n1 * n3, n2 * n3, |row, col| {
        let (p, i) = (row / n1, row % n1);
        let (q, j) = (col / n2, col % n2);
        a[(i, j, (p + n3 - q) % n3)]
    })
}

/// The t-product `a * b`, evaluated slice by slice in the Fourier domain.
pub fn tprod(a: &Tensor3, b: &Tensor3) -> Result<Tensor3> {
    let (n1, n2, n3) = a.dims();
    let (m1, l, m3) = b.dims();
    if n2 != m1 || n3 != m3 {
        return Err(Error::DimensionMismatch(format!(
            "t-product of {n1}x{n2}x{n3} and {m1}x{l}x{m3}"
        )));
    }
    let fa = fft3(a);
    let fb = fft3(b);
    let slices = par::map_range(half_len(n3), |k| &fa.slices[k] * &fb.slices[k]);
    ifft3(&SpectralTensor {
        n1,
        n2: l,
        n3,
        slices,
        symmetric: true,
    })
}

/// Transposes every frontal slice and reverses the order of slices `2..n3`.
pub fn conj_transpose(a: &Tensor3) -> Tensor3 {
    let (n1, n2, n3) = a.dims();
    Tensor3::from_fn(n2, n1, n3, |i, j, k| a[(j, i, (n3 - k) % n3)])
}

/// `n x n x n3` tensor whose first frontal slice is the identity.
pub fn identity_tensor(n: usize, n3: usize) -> Tensor3 {
    Tensor3::from_fn(n, n, n3, |i, j, k| if i == j && k == 0 { 1.0 } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lcg_tensor(n1: usize, n2: usize, n3: usize, seed: u64) -> Tensor3 {
        let mut s = seed;
        Tensor3::from_fn(n1, n2, n3, |_, _, _| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        })
    }

    fn rel(a: &Tensor3, b: &Tensor3) -> f64 {
        a.sub(b).unwrap().frobenius_norm() / b.frobenius_norm().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn unfold_small_cases() {
        let a = Tensor3::from_vec(2, 2, 1, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(unfold(&a), a.frontal(0));
        let t = Tensor3::from_vec(1, 1, 3, vec![5.0, 6.0, 7.0]).unwrap();
        assert_eq!(unfold(&t).as_slice(), &[5.0, 6.0, 7.0]);
        let r = lcg_tensor(3, 2, 4, 2);
        assert_eq!(fold(&unfold(&r), 3, 2, 4).unwrap(), r);
    }

    #[test]
    fn unfold_is_a_reshape() {
        let r = lcg_tensor(3, 2, 4, 8);
        let u = unfold(&r);
        // Row-major over (k, i) rows and columns j: compare against raw layout.
        for k in 0..4 {
            for j in 0..2 {
                for i in 0..3 {
                    assert_eq!(u[(k * 3 + i, j)], r.as_slice()[(k * 2 + j) * 3 + i]);
                }
            }
        }
    }

    #[test]
    fn bcirc_edge_cases() {
        let a = lcg_tensor(2, 3, 1, 4);
        assert_eq!(bcirc(&a), a.frontal(0));
        assert_eq!(bcirc(&identity_tensor(2, 3)), DMatrix::identity(6, 6));
    }

    #[test]
    fn bcirc_first_block_column_is_unfold() {
        let a = lcg_tensor(2, 3, 4, 6);
        let b = bcirc(&a);
        assert_eq!(b.columns(0, 3).into_owned(), unfold(&a));
        // second block column is the first shifted down by one block
        for row in 0..8 {
            for j in 0..3 {
                assert_eq!(b[((row + 2) % 8, 3 + j)], b[(row, j)]);
            }
        }
    }

    #[test]
    fn tprod_matches_block_circulant() {
        let a = lcg_tensor(4, 3, 5, 10);
        let b = lcg_tensor(3, 2, 5, 11);
        let c = tprod(&a, &b).unwrap();
        let oracle = fold(&(bcirc(&a) * unfold(&b)), 4, 2, 5).unwrap();
        assert!(rel(&c, &oracle) < 1e-10);
    }

    #[test]
    fn tprod_with_single_slice_is_matmul() {
        let a = lcg_tensor(3, 4, 1, 1);
        let b = lcg_tensor(4, 2, 1, 2);
        let c = tprod(&a, &b).unwrap();
        let m = a.frontal(0) * b.frontal(0);
        assert!((c.frontal(0) - m).norm() < 1e-14);
    }

    #[test]
    fn tprod_identity_laws() {
        let a = lcg_tensor(3, 4, 6, 3);
        let left = tprod(&identity_tensor(3, 6), &a).unwrap();
        let right = tprod(&a, &identity_tensor(4, 6)).unwrap();
        assert!(rel(&left, &a) < 1e-14);
        assert!(rel(&right, &a) < 1e-14);
    }

    #[test]
    fn tprod_dimension_mismatch() {
        let a = lcg_tensor(2, 3, 4, 1);
        assert!(matches!(
            tprod(&a, &lcg_tensor(2, 3, 4, 1)),
            Err(Error::DimensionMismatch(_))
        ));
        assert!(matches!(
            tprod(&a, &lcg_tensor(3, 3, 5, 1)),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn conj_transpose_cases() {
        let a = lcg_tensor(3, 2, 1, 5);
        assert_eq!(conj_transpose(&a).frontal(0), a.frontal(0).transpose());
        let b = lcg_tensor(3, 2, 5, 5);
        assert_eq!(conj_transpose(&conj_transpose(&b)), b);
        let c = lcg_tensor(2, 4, 5, 6);
        let lhs = conj_transpose(&tprod(&b, &c).unwrap());
        let rhs = tprod(&conj_transpose(&c), &conj_transpose(&b)).unwrap();
        assert!(rel(&lhs, &rhs) < 1e-10);
        // the block-circulant of the transpose is the transposed block-circulant
        assert_eq!(bcirc(&conj_transpose(&b)), bcirc(&b).transpose());
    }

    #[test]
    fn identity_spectrum_is_identity() {
        let s = fft3(&identity_tensor(3, 5));
        for m in &s.slices {
            assert!((m - DMatrix::identity(3, 3).map(|x: f64| x.into())).norm() < 1e-15);
        }
        assert_eq!(identity_tensor(1, 1).as_slice(), &[1.0]);
    }
}
