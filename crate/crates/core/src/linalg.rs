//! Verified thin SVD for small dense complex matrices.
//!
//! nalgebra's bidiagonal SVD is fast but can return factors that do not
//! reproduce a rank-deficient input. Its result is accepted only after a
//! reconstruction and orthonormality check; otherwise a one-sided Jacobi
//! SVD is used.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

const MAX_SWEEPS: usize = 80;

/// Thin SVD `a = u * diag(sigma) * v^H` with `sigma` in descending order.
/// `u` is `m x k`, `v` is `n x k`, `k = min(m, n)`. Singular values at
/// noise level (`<= max(m, n) * eps * |a|_F`) are not resolved further and
/// their singular vectors are not reliable; exact zeros get zero vectors.
pub(crate) struct ThinSvd {
    pub u: DMatrix<Complex64>,
    pub sigma: Vec<f64>,
    pub v: DMatrix<Complex64>,
}

pub(crate) fn svd(a: &DMatrix<Complex64>) -> ThinSvd {
    fast_svd(a).unwrap_or_else(|| jacobi_svd(a))
}

fn fast_svd(a: &DMatrix<Complex64>) -> Option<ThinSvd> {
    let (m, n) = a.shape();
    let k = m.min(n);
    let f = a.clone().try_svd(true, true, f64::EPSILON, 0)?;
    let (u, vt) = (f.u?, f.v_t?);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&x, &y| f.singular_values[y].total_cmp(&f.singular_values[x]));
    let sigma: Vec<f64> = order.iter().map(|&j| f.singular_values[j]).collect();
    let u = DMatrix::from_columns(&order.iter().map(|&j| u.column(j).into_owned()).collect::<Vec<_>>());
    let v = DMatrix::from_columns(&order.iter().map(|&j| vt.row(j).adjoint()).collect::<Vec<_>>());
    let scale = a.norm();
    let d = DMatrix::from_diagonal(&DVector::from_iterator(k, sigma.iter().map(|&s| Complex64::new(s, 0.0))));
    if !sigma.iter().all(|s| s.is_finite()) || !((&u * d * v.adjoint() - a).norm() <= 1e-12 * scale.max(f64::MIN_POSITIVE)) {
        return None;
    }
    let kept = sigma.iter().take_while(|&&s| s > m.max(n) as f64 * f64::EPSILON * scale).count();
    for q in [&u, &v] {
        let q = q.columns(0, kept);
        if !((q.adjoint() * q - DMatrix::<Complex64>::identity(kept, kept)).norm() <= 1e-12) {
            return None;
        }
    }
    Some(ThinSvd { u, sigma, v })
}

fn jacobi_svd(a: &DMatrix<Complex64>) -> ThinSvd {
    let (m, n) = a.shape();
    if m < n {
        let t = jacobi_svd(&a.adjoint());
        return ThinSvd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        };
    }
    let mut w = a.clone();
    let mut v = DMatrix::<Complex64>::identity(n, n);
    let tol = f64::EPSILON * m as f64;
    // Columns this small are noise; rotating them only churns.
    let negligible = (m as f64 * f64::EPSILON * a.norm()).powi(2);
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let alpha = w.column(p).norm_squared();
                let beta = w.column(q).norm_squared();
                if alpha <= negligible || beta <= negligible {
                    continue;
                }
                let gamma = w.column(p).dotc(&w.column(q));
                let g = gamma.norm();
                if g == 0.0 || g <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let phase = gamma.conj() / g;
                let zeta = (beta - alpha) / (2.0 * g);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for mat in [&mut w, &mut v] {
                    for i in 0..mat.nrows() {
                        let xp = mat[(i, p)];
                        let xq = mat[(i, q)] * phase;
                        mat[(i, p)] = xp * c - xq * s;
                        mat[(i, q)] = xp * s + xq * c;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let norms: Vec<f64> = w.column_iter().map(|c| c.norm()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| norms[y].total_cmp(&norms[x]));
    let sigma: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let u = DMatrix::from_columns(
        &order
            .iter()
            .map(|&j| {
                if norms[j] > 0.0 {
                    w.column(j) / Complex64::new(norms[j], 0.0)
                } else {
                    DVector::zeros(m)
                }
            })
            .collect::<Vec<_>>(),
    );
    let v = DMatrix::from_columns(&order.iter().map(|&j| v.column(j).into_owned()).collect::<Vec<_>>());
    ThinSvd { u, sigma, v }
}

impl ThinSvd {
    /// Least-squares minimum-norm solution, dropping `sigma <= eps`.
    pub fn solve(&self, b: &DVector<Complex64>, eps: f64) -> DVector<Complex64> {
        let mut x = DVector::zeros(self.v.nrows());
        for (j, &s) in self.sigma.iter().enumerate() {
            if s > eps {
                let coef = self.u.column(j).dotc(b) / s;
                x += self.v.column(j) * coef;
            }
        }
        x
    }
}
