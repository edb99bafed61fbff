use std::cell::RefCell;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::{half_len, SpectralTensor, Tensor3};
use crate::{par, Error, Result};

/// Relative imaginary mass tolerated when mapping back to the real domain.
pub const SYMMETRY_TOL: f64 = 1e-10;

thread_local! {
    // rustfft planners cache plans by length; one per thread keeps
    // repeated `TubeFft::new` calls cheap.
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Tubes per parallel work item in the whole-tensor transforms.
const TUBES_PER_CHUNK: usize = 256;

/// Planned length-`n3` transforms applied tube by tube.
///
/// Forward transforms are unnormalized; inverse transforms carry the `1/n3`
/// factor.
#[derive(Clone)]
pub struct TubeFft {
    n3: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for TubeFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("TubeFft").field("n3", &self.n3).finish()
    }
}

impl TubeFft {
    pub fn new(n3: usize) -> Self {
        PLANNER.with(|p| {
            let mut planner = p.borrow_mut();
            Self {
                n3,
                forward: planner.plan_fft_forward(n3),
                inverse: planner.plan_fft_inverse(n3),
            }
        })
    }

    #[inline]
    pub fn n3(&self) -> usize {
        self.n3
    }

    #[inline]
    pub fn half(&self) -> usize {
        half_len(self.n3)
    }

    /// In-place forward DFT of consecutive length-`n3` tubes.
    pub fn forward_tubes(&self, buf: &mut [Complex64]) {
        if !buf.is_empty() {
            self.forward.process(buf);
        }
    }

    /// In-place normalized inverse DFT of consecutive length-`n3` tubes.
    pub fn inverse_tubes(&self, buf: &mut [Complex64]) {
        if buf.is_empty() {
            return;
        }
        self.inverse.process(buf);
        let scale = 1.0 / self.n3 as f64;
        for z in buf.iter_mut() {
            *z *= scale;
        }
    }

    /// Forward transform of a real `rows x 1 x n3` lateral slice given in
    /// tensor layout (`k * rows + i`). Returns the stored half spectrum, one
    /// length-`rows` vector per Fourier slice.
    pub fn forward_lateral(&self, data: &[f64], rows: usize) -> Vec<DVector<Complex64>> {
        let n3 = self.n3;
        debug_assert_eq!(data.len(), rows * n3);
        let mut buf = vec![Complex64::new(0.0, 0.0); rows * n3];
        for k in 0..n3 {
            for i in 0..rows {
                buf[i * n3 + k] = Complex64::new(data[k * rows + i], 0.0);
            }
        }
        self.forward_tubes(&mut buf);
        (0..self.half())
            .map(|l| DVector::from_fn(rows, |i, _| buf[i * n3 + l]))
            .collect()
    }

    /// Inverse of [`forward_lateral`](Self::forward_lateral): completes the
    /// implied conjugate half, inverts and keeps the real part.
    pub fn inverse_lateral(&self, spec: &[DVector<Complex64>]) -> Vec<f64> {
        self.inverse_lateral_checked(spec).0
    }

    /// Like [`inverse_lateral`](Self::inverse_lateral), also returning the
    /// Frobenius norm of the discarded imaginary parts.
    pub fn inverse_lateral_checked(&self, spec: &[DVector<Complex64>]) -> (Vec<f64>, f64) {
        let n3 = self.n3;
        let h = self.half();
        debug_assert_eq!(spec.len(), h);
        let rows = spec[0].len();
        let mut buf = vec![Complex64::new(0.0, 0.0); rows * n3];
        for i in 0..rows {
            let tube = &mut buf[i * n3..(i + 1) * n3];
            for (l, z) in tube.iter_mut().enumerate() {
                *z = if l < h {
                    spec[l][i]
                } else {
                    spec[n3 - l][i].conj()
                };
            }
        }
        self.inverse_tubes(&mut buf);
        let mut out = vec![0.0; rows * n3];
        let mut imag = 0.0;
        for i in 0..rows {
            for k in 0..n3 {
                let z = buf[i * n3 + k];
                out[k * rows + i] = z.re;
                imag += z.im * z.im;
            }
        }
        (out, imag.sqrt())
    }
}

/// Unnormalized DFT of every mode-3 tube; the half spectrum is stored.
pub fn fft3(x: &Tensor3) -> SpectralTensor {
    let (n1, n2, n3) = x.dims();
    let plan = TubeFft::new(n3);
    let ntubes = n1 * n2;
    let mut buf = vec![Complex64::new(0.0, 0.0); ntubes * n3];
    let src = x.as_slice();
    par::for_each_chunk_mut(&mut buf, TUBES_PER_CHUNK * n3.max(1), |c, chunk| {
        let first = c * TUBES_PER_CHUNK;
        for (t, tube) in chunk.chunks_mut(n3).enumerate() {
            let q = first + t;
            for (k, z) in tube.iter_mut().enumerate() {
                *z = Complex64::new(src[k * ntubes + q], 0.0);
            }
        }
        plan.forward_tubes(chunk);
    });
    let slices = (0..half_len(n3))
        .map(|l| DMatrix::from_fn(n1, n2, |i, j| buf[(j * n1 + i) * n3 + l]))
        .collect();
    SpectralTensor {
        n1,
        n2,
        n3,
        slices,
        symmetric: true,
    }
}

/// Normalized inverse DFT along mode 3.
///
/// Implied slices are reconstructed by conjugation first. The result must
/// be real: if the discarded imaginary mass exceeds [`SYMMETRY_TOL`] relative
/// to the output norm, [`Error::SymmetryViolation`] is returned.
pub fn ifft3(s: &SpectralTensor) -> Result<Tensor3> {
    let (n1, n2, n3) = (s.n1, s.n2, s.n3);
    let expected = if s.symmetric { half_len(n3) } else { n3 };
    if s.slices.len() != expected || s.slices.iter().any(|m| m.shape() != (n1, n2)) {
        return Err(Error::DimensionMismatch(format!(
            "spectral tensor with {} slices for {n1}x{n2}x{n3}",
            s.slices.len()
        )));
    }
    let full = s.expand();
    let plan = TubeFft::new(n3);
    let ntubes = n1 * n2;
    let mut buf = vec![Complex64::new(0.0, 0.0); ntubes * n3];
    par::for_each_chunk_mut(&mut buf, TUBES_PER_CHUNK * n3.max(1), |c, chunk| {
        let first = c * TUBES_PER_CHUNK;
        for (t, tube) in chunk.chunks_mut(n3).enumerate() {
            let q = first + t;
            let (i, j) = (q % n1, q / n1);
            for (l, z) in tube.iter_mut().enumerate() {
                *z = full[l][(i, j)];
            }
        }
        plan.inverse_tubes(chunk);
    });
    let mut data = vec![0.0; ntubes * n3];
    let (mut re_sq, mut im_sq) = (0.0, 0.0);
    for q in 0..ntubes {
        for k in 0..n3 {
            let z = buf[q * n3 + k];
            data[k * ntubes + q] = z.re;
            re_sq += z.re * z.re;
            im_sq += z.im * z.im;
        }
    }
    let (re, im) = (re_sq.sqrt(), im_sq.sqrt());
    if im > SYMMETRY_TOL * re {
        return Err(Error::SymmetryViolation(if re > 0.0 {
            im / re
        } else {
            f64::INFINITY
        }));
    }
    Tensor3::from_vec(n1, n2, n3, data)
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

    /// Direct O(n3^2) DFT of every tube, independent of rustfft.
    fn naive_dft(x: &Tensor3) -> Vec<DMatrix<Complex64>> {
        let (n1, n2, n3) = x.dims();
        (0..n3)
            .map(|l| {
                DMatrix::from_fn(n1, n2, |i, j| {
                    (0..n3)
                        .map(|k| {
                            let ang = -2.0 * std::f64::consts::PI * (k * l) as f64 / n3 as f64;
                            Complex64::from_polar(x[(i, j, k)], ang)
                        })
                        .sum()
                })
            })
            .collect()
    }

    #[test]
    fn zero_tensor_has_zero_spectrum() {
        let s = fft3(&Tensor3::zeros(3, 2, 4));
        assert_eq!(s.slices.len(), 3);
        assert!(s.slices.iter().all(|m| m.iter().all(|z| z.norm() == 0.0)));
        assert!(s.symmetric);
    }

    #[test]
    fn impulse_tubes_have_flat_spectrum() {
        let x = Tensor3::from_fn(3, 2, 4, |_, _, k| if k == 0 { 1.0 } else { 0.0 });
        let s = fft3(&x);
        for m in &s.slices {
            for z in m.iter() {
                assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-15);
            }
        }
        let back = ifft3(&s).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn matches_naive_dft() {
        for n3 in [1, 2, 5, 6] {
            let x = lcg_tensor(3, 2, n3, 7 + n3 as u64);
            let s = fft3(&x);
            let full = s.expand();
            let naive = naive_dft(&x);
            for (a, b) in full.iter().zip(&naive) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn roundtrip_random() {
        let x = lcg_tensor(5, 4, 7, 3);
        let y = ifft3(&fft3(&x)).unwrap();
        let err = x.sub(&y).unwrap().frobenius_norm() / x.frobenius_norm();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn broken_dc_slice_is_rejected() {
        let x = lcg_tensor(2, 2, 4, 11);
        let mut s = fft3(&x);
        s.slices[0][(0, 0)] += Complex64::new(0.0, 1.0);
        assert!(matches!(ifft3(&s), Err(Error::SymmetryViolation(_))));
    }

    #[test]
    fn parseval_unnormalized() {
        let x = lcg_tensor(4, 3, 6, 5);
        let s = fft3(&x);
        let lhs = s.frobenius_norm_full();
        let rhs = (6f64).sqrt() * x.frobenius_norm();
        assert!((lhs - rhs).abs() < 1e-10 * rhs);
    }

    #[test]
    fn lateral_transforms_agree_with_fft3() {
        let x = lcg_tensor(6, 1, 5, 9);
        let plan = TubeFft::new(5);
        let spec = plan.forward_lateral(x.as_slice(), 6);
        let s = fft3(&x);
        for (l, v) in spec.iter().enumerate() {
            for i in 0..6 {
                assert!((v[i] - s.slices[l][(i, 0)]).norm() < 1e-14);
            }
        }
        let (back, imag) = plan.inverse_lateral_checked(&spec);
        assert!(imag < 1e-14);
        for (a, b) in back.iter().zip(x.as_slice()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn full_storage_inverse() {
        let x = lcg_tensor(2, 3, 4, 1);
        let s = fft3(&x);
        let full = SpectralTensor {
            slices: s.expand(),
            symmetric: false,
            ..s
        };
        let y = ifft3(&full).unwrap();
        assert!(x.sub(&y).unwrap().frobenius_norm() < 1e-13);
    }
}
