//! Dense linear algebra for small d: Householder QR, triangular inversion,
//! Cholesky, and a cyclic Jacobi eigensolver for symmetric matrices. The
//! coefficient dimension is at most a few hundred in this problem family, so
//! straightforward dense d×d kernels are the right tool.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// R factor (d×d, upper triangular, nonnegative diagonal) of the QR
/// decomposition of an m×d matrix with m ≥ d, by Householder reflections.
pub fn qr_r_factor(a: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let (m, d) = a.dim();
    if m < d {
        return Err(Error::dim(format!(
            "QR expects at least as many rows as columns, got {m}x{d}"
        )));
    }
    let mut work = a.to_owned();
    for j in 0..d {
        // Householder vector for column j below the diagonal.
        let mut norm = 0.0;
        for i in j..m {
            norm += work[[i, j]] * work[[i, j]];
        }
        norm = norm.sqrt();
        if norm == 0.0 {
            continue;
        }
        let alpha = if work[[j, j]] > 0.0 { -norm } else { norm };
        let mut v = Array1::zeros(m - j);
        for i in j..m {
            v[i - j] = work[[i, j]];
        }
        v[0] -= alpha;
        let v_norm_sq: f64 = v.iter().map(|x| x * x).sum();
        if v_norm_sq > 0.0 {
            for col in j..d {
                let mut dot = 0.0;
                for i in j..m {
                    dot += v[i - j] * work[[i, col]];
                }
                let scale = 2.0 * dot / v_norm_sq;
                for i in j..m {
                    work[[i, col]] -= scale * v[i - j];
                }
            }
        }
        work[[j, j]] = alpha;
        for i in (j + 1)..m {
            work[[i, j]] = 0.0;
        }
    }
    let mut r = Array2::zeros((d, d));
    for i in 0..d {
        for j in i..d {
            r[[i, j]] = work[[i, j]];
        }
    }
    // Normalize to a nonnegative diagonal so the factor is unique.
    for i in 0..d {
        if r[[i, i]] < 0.0 {
            for j in i..d {
                r[[i, j]] = -r[[i, j]];
            }
        }
    }
    Ok(r)
}

/// Inverse of an upper-triangular matrix by back substitution. Errors when a
/// diagonal entry is too small relative to the largest one (rank deficiency).
pub fn upper_triangular_inverse(r: &ArrayView2<f64>, rel_tol: f64) -> Result<Array2<f64>> {
    let d = r.nrows();
    if r.ncols() != d {
        return Err(Error::dim("triangular inverse expects a square matrix"));
    }
    let max_diag = (0..d).map(|i| r[[i, i]].abs()).fold(0.0f64, f64::max);
    let mut inv = Array2::zeros((d, d));
    for j in (0..d).rev() {
        let diag = r[[j, j]];
        if diag.abs() <= rel_tol * max_diag || diag == 0.0 {
            return Err(Error::RankDeficient(format!(
                "diagonal entry {j} of R is {diag:.3e} (max {max_diag:.3e})"
            )));
        }
        inv[[j, j]] = 1.0 / diag;
        for i in (0..j).rev() {
            let mut sum = 0.0;
            for l in (i + 1)..=j {
                sum += r[[i, l]] * inv[[l, j]];
            }
            inv[[i, j]] = -sum / r[[i, i]];
        }
    }
    Ok(inv)
}

/// Lower Cholesky factor of a symmetric positive definite matrix, or None if
/// a pivot is not strictly positive.
pub fn cholesky(a: &ArrayView2<f64>) -> Option<Array2<f64>> {
    let d = a.nrows();
    if a.ncols() != d {
        return None;
    }
    let mut l = Array2::<f64>::zeros((d, d));
    for i in 0..d {
        for j in 0..=i {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            if i == j {
                if !(sum > 0.0) || !sum.is_finite() {
                    return None;
                }
                l[[i, i]] = sum.sqrt();
            } else {
                l[[i, j]] = sum / l[[j, j]];
            }
        }
    }
    Some(l)
}

/// Solve A x = b given the lower Cholesky factor of A.
pub fn cholesky_solve(l: &ArrayView2<f64>, b: &ArrayView1<f64>) -> Array1<f64> {
    let d = l.nrows();
    let mut y = Array1::zeros(d);
    for i in 0..d {
        let mut sum = b[i];
        for k in 0..i {
            sum -= l[[i, k]] * y[k];
        }
        y[i] = sum / l[[i, i]];
    }
    let mut x = Array1::zeros(d);
    for i in (0..d).rev() {
        let mut sum = y[i];
        for k in (i + 1)..d {
            sum -= l[[k, i]] * x[k];
        }
        x[i] = sum / l[[i, i]];
    }
    x
}

/// Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
/// Returns eigenvalues (descending) and the matching orthonormal
/// eigenvectors as columns.
pub fn symmetric_eigen(a: &ArrayView2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let d = a.nrows();
    if a.ncols() != d {
        return Err(Error::dim("eigendecomposition expects a square matrix"));
    }
    let mut m = a.to_owned();
    let mut v = Array2::eye(d);
    let max_sweeps = 64;
    for _ in 0..max_sweeps {
        let mut off = 0.0;
        for i in 0..d {
            for j in (i + 1)..d {
                off += m[[i, j]] * m[[i, j]];
            }
        }
        let scale = (0..d).map(|i| m[[i, i]].abs()).fold(0.0f64, f64::max);
        if off.sqrt() <= 1e-15 * scale.max(1e-300) * d as f64 {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let apq = m[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let app = m[[p, p]];
                let aqq = m[[q, q]];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..d {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..d {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..d {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| m[[j, j]].partial_cmp(&m[[i, i]]).unwrap());
    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let mut vectors = Array2::zeros((d, d));
    for (col, &src) in order.iter().enumerate() {
        for k in 0..d {
            vectors[[k, col]] = v[[k, src]];
        }
    }
    Ok((values, vectors))
}

/// Moore-Penrose pseudoinverse of a symmetric PSD matrix together with its
/// numerical rank. Eigenvalues below `rel_tol · λ_max` are treated as zero.
pub fn pseudo_inverse_psd(a: &ArrayView2<f64>, rel_tol: f64) -> Result<(Array2<f64>, usize)> {
    let (values, vectors) = symmetric_eigen(a)?;
    let d = a.nrows();
    let lambda_max = values.iter().cloned().fold(0.0f64, f64::max);
    let cut = rel_tol * lambda_max;
    let mut pinv = Array2::zeros((d, d));
    let mut rank = 0;
    for (idx, &lam) in values.iter().enumerate() {
        if lam > cut && lam > 0.0 {
            rank += 1;
            let inv_l = 1.0 / lam;
            for i in 0..d {
                for j in 0..d {
                    pinv[[i, j]] += inv_l * vectors[[i, idx]] * vectors[[j, idx]];
                }
            }
        }
    }
    Ok((pinv, rank))
}

/// Orthonormal basis for the column space of a square matrix, via Householder
/// QR with column pivoting. Returns the d×rank matrix of basis columns.
pub fn column_space_basis(a: &ArrayView2<f64>, rel_tol: f64) -> Result<Array2<f64>> {
    let d = a.nrows();
    if a.ncols() != d {
        return Err(Error::dim("column-space basis expects a square matrix"));
    }
    let mut work = a.to_owned();
    let mut q = Array2::eye(d);
    let mut col_norms: Vec<f64> = (0..d)
        .map(|j| (0..d).map(|i| work[[i, j]] * work[[i, j]]).sum::<f64>())
        .collect();
    let initial_max = col_norms.iter().cloned().fold(0.0f64, f64::max);
    let threshold = (rel_tol * rel_tol) * initial_max.max(1e-300);
    let mut rank = 0;
    for step in 0..d {
        // Pivot: bring the largest remaining column forward.
        let (pivot, &best) = col_norms
            .iter()
            .enumerate()
            .skip(step)
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap();
        if best <= threshold {
            break;
        }
        if pivot != step {
            for i in 0..d {
                work.swap([i, pivot], [i, step]);
            }
            col_norms.swap(pivot, step);
        }
        let mut norm = 0.0;
        for i in step..d {
            norm += work[[i, step]] * work[[i, step]];
        }
        norm = norm.sqrt();
        if norm == 0.0 {
            break;
        }
        let alpha = if work[[step, step]] > 0.0 { -norm } else { norm };
        let mut v = vec![0.0; d - step];
        for i in step..d {
            v[i - step] = work[[i, step]];
        }
        v[0] -= alpha;
        let v_norm_sq: f64 = v.iter().map(|x| x * x).sum();
        if v_norm_sq > 0.0 {
            for col in step..d {
                let mut dot = 0.0;
                for i in step..d {
                    dot += v[i - step] * work[[i, col]];
                }
                let scale = 2.0 * dot / v_norm_sq;
                for i in step..d {
                    work[[i, col]] -= scale * v[i - step];
                }
            }
            // Accumulate Q = H_0 H_1 ⋯ (apply reflector from the right).
            for row in 0..d {
                let mut dot = 0.0;
                for i in step..d {
                    dot += q[[row, i]] * v[i - step];
                }
                let scale = 2.0 * dot / v_norm_sq;
                for i in step..d {
                    q[[row, i]] -= scale * v[i - step];
                }
            }
        }
        work[[step, step]] = alpha;
        rank += 1;
        for j in (step + 1)..d {
            col_norms[j] = ((step + 1)..d).map(|i| work[[i, j]] * work[[i, j]]).sum();
        }
    }
    Ok(q.slice(ndarray::s![.., 0..rank]).to_owned())
}

/// max |a_ij|.
pub fn max_abs(a: &ArrayView2<f64>) -> f64 {
    a.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

/// Kahan-compensated scalar accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn add(&mut self, value: f64) {
        let y = value - self.comp;
        let t = self.sum + y;
        self.comp = (t - self.sum) - y;
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum
    }
}
