//! Dense symmetric eigendecomposition and thin SVD.
//!
//! The eigensolver is a cyclic Jacobi iteration; it doubles as the
//! independent oracle for the sparse power-iteration estimates. The thin SVD
//! is built on top of it via the Gram matrix, which is cheap because the
//! embedding dimension is small.

use crate::error::{CademError, Result};
use ndarray::Array2;

/// Eigendecomposition of a symmetric matrix: `a = Q diag(values) Qᵀ`.
///
/// Eigenvalues are sorted ascending; column `k` of `eigenvectors` is the
/// eigenvector for `values[k]`.
#[derive(Debug, Clone)]
pub struct SymEig {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Array2<f64>,
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Sweeps rotate out off-diagonal entries until the off-diagonal Frobenius
/// norm drops below `tol`.
pub fn jacobi_eigen(a: &Array2<f64>, tol: f64, max_sweeps: usize) -> Result<SymEig> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(CademError::Shape(format!(
            "jacobi_eigen expects a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let sym_err = a
        .indexed_iter()
        .map(|((i, j), v)| (v - a[[j, i]]).abs())
        .fold(0.0f64, f64::max);
    if sym_err > 1e-9 {
        return Err(CademError::InvalidArgument(format!(
            "jacobi_eigen expects a symmetric matrix (max asymmetry {sym_err:e})"
        )));
    }

    // Row-major working copies; eigenvectors are accumulated transposed so
    // every rotation touches contiguous rows.
    let mut m: Vec<f64> = a.iter().copied().collect();
    let mut qt: Vec<f64> = vec![0.0; n * n];
    for i in 0..n {
        qt[i * n + i] = 1.0;
    }

    for _ in 0..max_sweeps {
        if off_diagonal_norm(&m, n) < tol {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = m[p * n + p];
                let aqq = m[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta >= 0.0 {
                    1.0 / (theta + (theta * theta + 1.0).sqrt())
                } else {
                    -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                // Rotate rows p and q of the symmetric matrix, then mirror
                // into the columns.
                for j in 0..n {
                    let mpj = m[p * n + j];
                    let mqj = m[q * n + j];
                    m[p * n + j] = c * mpj - s * mqj;
                    m[q * n + j] = s * mpj + c * mqj;
                }
                for i in 0..n {
                    let mip = m[i * n + p];
                    let miq = m[i * n + q];
                    m[i * n + p] = c * mip - s * miq;
                    m[i * n + q] = s * mip + c * miq;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;

                for j in 0..n {
                    let qpj = qt[p * n + j];
                    let qqj = qt[q * n + j];
                    qt[p * n + j] = c * qpj - s * qqj;
                    qt[q * n + j] = s * qpj + c * qqj;
                }
            }
        }
    }

    if off_diagonal_norm(&m, n) >= tol {
        return Err(CademError::NonFinite(format!(
            "jacobi_eigen failed to converge within {max_sweeps} sweeps \
             (off-diagonal norm {:e})",
            off_diagonal_norm(&m, n)
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        m[i * n + i]
            .partial_cmp(&m[j * n + j])
            .unwrap()
            .then(i.cmp(&j))
    });
    let eigenvalues: Vec<f64> = order.iter().map(|&i| m[i * n + i]).collect();
    let mut eigenvectors = Array2::zeros((n, n));
    for (k, &src) in order.iter().enumerate() {
        for i in 0..n {
            eigenvectors[[i, k]] = qt[src * n + i];
        }
    }
    Ok(SymEig {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(m: &[f64], n: usize) -> f64 {
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                acc += m[i * n + j] * m[i * n + j];
            }
        }
    }
    acc.sqrt()
}

/// Thin SVD `a = U diag(σ) Vᵀ` of an m×d matrix with m ≥ d.
///
/// Singular values are sorted descending. Near-zero singular directions are
/// completed deterministically from canonical basis vectors so `U` always has
/// orthonormal columns.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: Array2<f64>,
    pub singular_values: Vec<f64>,
    pub vt: Array2<f64>,
}

/// Smallest singular value below this is treated as rank deficiency.
pub const SVD_RANK_TOL: f64 = 1e-10;

pub fn thin_svd(a: &Array2<f64>) -> Result<ThinSvd> {
    let (m, d) = (a.nrows(), a.ncols());
    if m < d {
        return Err(CademError::Shape(format!(
            "thin_svd expects rows >= cols, got {m}x{d}"
        )));
    }
    let gram = a.t().dot(a);
    let eig = jacobi_eigen(&gram, 1e-14 * (1.0 + frobenius_norm(&gram)), 60)?;

    // Descending singular order.
    let mut singular_values = Vec::with_capacity(d);
    let mut v = Array2::zeros((d, d));
    for k in 0..d {
        let src = d - 1 - k;
        singular_values.push(eig.eigenvalues[src].max(0.0).sqrt());
        for i in 0..d {
            v[[i, k]] = eig.eigenvectors[[i, src]];
        }
    }

    let av = a.dot(&v);
    let mut u = Array2::zeros((m, d));
    // The Gram route squares the condition number: singular values below
    // ~1e-7 of the largest are numerically zero and get completed instead.
    let cutoff = SVD_RANK_TOL.max(singular_values[0] * 1e-7);
    for k in 0..d {
        if singular_values[k] > cutoff {
            let inv = 1.0 / singular_values[k];
            for i in 0..m {
                u[[i, k]] = av[[i, k]] * inv;
            }
        } else {
            complete_column(&mut u, k, m);
        }
    }
    orthonormalize_columns(&mut u);

    Ok(ThinSvd {
        u,
        singular_values,
        vt: v.t().to_owned(),
    })
}

/// Fill column `k` of `u` with the first canonical basis vector that keeps a
/// usable component after projecting out columns 0..k.
fn complete_column(u: &mut Array2<f64>, k: usize, m: usize) {
    for cand in 0..m {
        let mut col = vec![0.0; m];
        col[cand] = 1.0;
        for prev in 0..k {
            let dot: f64 = (0..m).map(|i| col[i] * u[[i, prev]]).sum();
            for i in 0..m {
                col[i] -= dot * u[[i, prev]];
            }
        }
        let norm: f64 = col.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-3 {
            for i in 0..m {
                u[[i, k]] = col[i] / norm;
            }
            return;
        }
    }
}

/// Two rounds of modified Gram-Schmidt; enough to restore orthonormality lost
/// to nearly equal singular values.
fn orthonormalize_columns(u: &mut Array2<f64>) {
    let (m, d) = (u.nrows(), u.ncols());
    for _ in 0..2 {
        for k in 0..d {
            for prev in 0..k {
                let dot: f64 = (0..m).map(|i| u[[i, k]] * u[[i, prev]]).sum();
                for i in 0..m {
                    let sub = dot * u[[i, prev]];
                    u[[i, k]] -= sub;
                }
            }
            let norm: f64 = (0..m).map(|i| u[[i, k]] * u[[i, k]]).sum::<f64>().sqrt();
            if norm > 0.0 {
                for i in 0..m {
                    u[[i, k]] /= norm;
                }
            }
        }
    }
}

pub fn frobenius_norm(a: &Array2<f64>) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Subtract each column's mean from that column.
pub fn column_center(a: &Array2<f64>) -> Array2<f64> {
    let mut out = a.clone();
    let m = a.nrows() as f64;
    for j in 0..a.ncols() {
        let mean = a.column(j).sum() / m;
        for i in 0..a.nrows() {
            out[[i, j]] -= mean;
        }
    }
    out
}
