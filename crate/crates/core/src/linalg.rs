//! Small dense kernels: Jacobi eigen/SVD, Cholesky, power iteration.
//!
//! Everything here works on `ndarray` owned arrays and is sized for desk-scale
//! problems (dimensions up to a few hundred), so clarity wins over blocking.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

pub fn norm2(v: ArrayView1<f64>) -> f64 {
    v.dot(&v).sqrt()
}

pub fn norm1(v: ArrayView1<f64>) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

pub fn frobenius(a: ArrayView2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Frobenius inner product `<a, b>_F`.
pub fn frobenius_dot(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// Eigen-decomposition of a symmetric matrix.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    /// Eigenvalues in descending order.
    pub values: Array1<f64>,
    /// Eigenvectors as columns, matching `values`.
    pub vectors: Array2<f64>,
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigenvalue iteration for a symmetric matrix.
///
/// Sweeps until the off-diagonal Frobenius mass drops below `1e-14` relative
/// to the full matrix (or is exactly zero).
pub fn symmetric_eigen(a: ArrayView2<f64>) -> Result<SymmetricEigen> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::invalid(format!(
            "symmetric_eigen needs a square matrix, got {}x{}",
            n,
            a.ncols()
        )));
    }
    let mut m = a.to_owned();
    let mut v = Array2::<f64>::eye(n);
    let scale = frobenius(m.view());
    if n > 1 && scale > 0.0 {
        for _ in 0..JACOBI_MAX_SWEEPS {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += 2.0 * m[[p, q]] * m[[p, q]];
                }
            }
            if off.sqrt() <= 1e-14 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = m[[p, q]];
                    if apq.abs() <= f64::MIN_POSITIVE {
                        continue;
                    }
                    let app = m[[p, p]];
                    let aqq = m[[q, q]];
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let mkp = m[[k, p]];
                        let mkq = m[[k, q]];
                        m[[k, p]] = c * mkp - s * mkq;
                        m[[k, q]] = s * mkp + c * mkq;
                    }
                    for k in 0..n {
                        let mpk = m[[p, k]];
                        let mqk = m[[q, k]];
                        m[[p, k]] = c * mpk - s * mqk;
                        m[[q, k]] = s * mpk + c * mqk;
                    }
                    for k in 0..n {
                        let vkp = v[[k, p]];
                        let vkq = v[[k, q]];
                        v[[k, p]] = c * vkp - s * vkq;
                        v[[k, q]] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[j, j]].total_cmp(&m[[i, i]]));
    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let vectors = v.select(Axis(1), &order);
    Ok(SymmetricEigen { values, vectors })
}

/// Thin singular value decomposition `X = U diag(s) V^T`, `k = min(n1, n2)`.
#[derive(Debug, Clone)]
pub struct Svd {
    /// `n1 x k`, orthonormal columns for non-zero singular values.
    pub u: Array2<f64>,
    /// Singular values, descending.
    pub s: Array1<f64>,
    /// `n2 x k`.
    pub v: Array2<f64>,
}

/// One-sided (Hestenes) Jacobi SVD.
///
/// Orthogonalizes the columns of `X` (or `X^T`, whichever has fewer columns)
/// by plane rotations; small singular values keep high relative accuracy,
/// which matters for Schatten quasi-norms with `p < 1`.
pub fn jacobi_svd(x: ArrayView2<f64>) -> Svd {
    let (n1, n2) = x.dim();
    let transposed = n1 < n2;
    let mut w = if transposed {
        x.t().to_owned()
    } else {
        x.to_owned()
    };
    let k = w.ncols();
    let mut v = Array2::<f64>::eye(k);

    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..k {
            for q in (p + 1)..k {
                let (alpha, beta, gamma) = {
                    let cp = w.column(p);
                    let cq = w.column(q);
                    (cp.dot(&cp), cq.dot(&cq), cp.dot(&cq))
                };
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate_columns(&mut w, p, q, c, s);
                rotate_columns(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<f64> = w.columns().into_iter().map(|c| norm2(c)).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));

    let rows = w.nrows();
    let mut left = Array2::<f64>::zeros((rows, k));
    let mut right = Array2::<f64>::zeros((k, k));
    let mut s = Array1::<f64>::zeros(k);
    for (dst, &src) in order.iter().enumerate() {
        s[dst] = norms[src];
        if norms[src] > 0.0 {
            left.column_mut(dst)
                .assign(&(&w.column(src) / norms[src]));
        }
        right.column_mut(dst).assign(&v.column(src));
    }
    if transposed {
        Svd {
            u: right,
            s,
            v: left,
        }
    } else {
        Svd {
            u: left,
            s,
            v: right,
        }
    }
}

fn rotate_columns(a: &mut Array2<f64>, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..a.nrows() {
        let ap = a[[k, p]];
        let aq = a[[k, q]];
        a[[k, p]] = c * ap - s * aq;
        a[[k, q]] = s * ap + c * aq;
    }
}

/// Solves `a x = b` for symmetric positive-definite `a` by Cholesky.
pub fn cholesky_solve(a: ArrayView2<f64>, b: ArrayView1<f64>) -> Result<Array1<f64>> {
    let n = a.nrows();
    if a.ncols() != n || b.len() != n {
        return Err(Error::invalid("cholesky_solve: shape mismatch"));
    }
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut d = a[[j, j]];
        for k in 0..j {
            d -= l[[j, k]] * l[[j, k]];
        }
        if !(d > 0.0) {
            return Err(Error::SingularModel(format!(
                "matrix is not positive definite (pivot {j} = {d:e})"
            )));
        }
        let d = d.sqrt();
        l[[j, j]] = d;
        for i in (j + 1)..n {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = sum / d;
        }
    }
    // forward then back substitution
    let mut z = Array1::<f64>::zeros(n);
    for i in 0..n {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[[i, k]] * z[k];
        }
        z[i] = sum / l[[i, i]];
    }
    let mut x = Array1::<f64>::zeros(n);
    for i in (0..n).rev() {
        let mut sum = z[i];
        for k in (i + 1)..n {
            sum -= l[[k, i]] * x[k];
        }
        x[i] = sum / l[[i, i]];
    }
    Ok(x)
}

/// Estimates `||a||_{2->2}^2` by power iteration on `a^T a`.
///
/// Stops after `max_iters` or once the Rayleigh quotient changes by less than
/// `rel_tol` relative.
pub fn spectral_norm_sq(a: ArrayView2<f64>, max_iters: usize, rel_tol: f64) -> f64 {
    let n = a.ncols();
    if n == 0 || a.nrows() == 0 {
        return 0.0;
    }
    // Deterministic, non-symmetric start so sign-balanced designs are not missed.
    let mut x = Array1::from_iter((0..n).map(|i| 1.0 + (i as f64 + 1.0) / (n as f64 + 1.0)));
    let nx = norm2(x.view());
    x /= nx;
    let mut estimate = 0.0;
    for _ in 0..max_iters.max(1) {
        let ax = a.dot(&x);
        let y = a.t().dot(&ax);
        let next = x.dot(&y);
        let ny = norm2(y.view());
        if ny == 0.0 {
            break;
        }
        x = y / ny;
        let done = (next - estimate).abs() <= rel_tol * next.abs();
        estimate = next;
        if done {
            break;
        }
    }
    // Rayleigh quotient never exceeds the true value; column norms give a cheap floor.
    let col_floor = a
        .columns()
        .into_iter()
        .map(|c| c.dot(&c))
        .fold(0.0, f64::max);
    estimate.max(col_floor)
}
