//! Dense symmetric linear algebra: eigendecomposition, Cholesky, solves.
//!
//! The eigensolver is the classic two-stage dense path: Householder reduction
//! to tridiagonal form followed by the implicit-shift QL iteration, operating
//! on a flat row-major buffer. It is self-contained (no BLAS/LAPACK linkage)
//! and adequate for the matrix orders this crate works at (p <= ~1000).

use ndarray::{Array1, Array2, ArrayView2};

use crate::error::{Error, Result};

/// Eigendecomposition of a symmetric matrix. `values` are sorted descending;
/// `vectors` holds the matching eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

/// Full eigendecomposition of a symmetric matrix (values descending,
/// eigenvectors as columns). The input is symmetrized as (A + Aᵀ)/2 to absorb
/// floating-point asymmetry; genuinely asymmetric input is the caller's bug.
pub fn sym_eigen(a: &ArrayView2<f64>) -> Result<SymEigen> {
    let (mut buf, n) = to_symmetric_buf(a)?;
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    householder_tridiag(&mut buf, n, &mut d, &mut e, true);
    ql_implicit(&mut d, &mut e, Some(&mut buf), n)?;
    let order = descending_order(&d);
    let values = Array1::from_iter(order.iter().map(|&j| d[j]));
    let mut vectors = Array2::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        for row in 0..n {
            vectors[[row, dst]] = buf[row * n + src];
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Eigenvalues only (descending); skips eigenvector accumulation.
pub fn sym_eigenvalues(a: &ArrayView2<f64>) -> Result<Array1<f64>> {
    let (mut buf, n) = to_symmetric_buf(a)?;
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    householder_tridiag(&mut buf, n, &mut d, &mut e, false);
    ql_implicit(&mut d, &mut e, None, n)?;
    d.sort_by(|x, y| y.partial_cmp(x).expect("eigenvalues are finite"));
    Ok(Array1::from_vec(d))
}

/// Spectral (operator) norm of a symmetric matrix: max |eigenvalue|.
pub fn spectral_norm_sym(a: &ArrayView2<f64>) -> Result<f64> {
    let vals = sym_eigenvalues(a)?;
    Ok(vals.iter().fold(0.0f64, |m, &v| m.max(v.abs())))
}

/// Lower-triangular Cholesky factor L with A = L Lᵀ. Fails with a numerical
/// error if the matrix is not positive definite.
pub fn cholesky(a: &ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = square_dim(a)?;
    let mut l = Array2::<f64>::zeros((n, n));
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= l[[j, k]] * l[[j, k]];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::numerical(format!(
                "Cholesky pivot {j} is not positive ({diag:.3e}); matrix not positive definite"
            )));
        }
        let root = diag.sqrt();
        l[[j, j]] = root;
        for i in (j + 1)..n {
            let mut acc = a[[i, j]];
            for k in 0..j {
                acc -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = acc / root;
        }
    }
    Ok(l)
}

/// Solve L y = b in place (L lower triangular).
pub fn solve_lower_in_place(l: &ArrayView2<f64>, b: &mut [f64]) {
    let n = b.len();
    for i in 0..n {
        let mut acc = b[i];
        for k in 0..i {
            acc -= l[[i, k]] * b[k];
        }
        b[i] = acc / l[[i, i]];
    }
}

/// Solve Lᵀ x = b in place (L lower triangular).
pub fn solve_lower_transpose_in_place(l: &ArrayView2<f64>, b: &mut [f64]) {
    let n = b.len();
    for i in (0..n).rev() {
        let mut acc = b[i];
        for k in (i + 1)..n {
            acc -= l[[k, i]] * b[k];
        }
        b[i] = acc / l[[i, i]];
    }
}

/// Solve A x = b given the Cholesky factor of A, in place.
pub fn chol_solve_in_place(l: &ArrayView2<f64>, b: &mut [f64]) {
    solve_lower_in_place(l, b);
    solve_lower_transpose_in_place(l, b);
}

/// Full inverse of A from its Cholesky factor (A = L Lᵀ).
pub fn chol_inverse(l: &ArrayView2<f64>) -> Array2<f64> {
    let n = l.nrows();
    let mut inv = Array2::<f64>::zeros((n, n));
    let mut col = vec![0.0; n];
    for j in 0..n {
        col.iter_mut().for_each(|x| *x = 0.0);
        col[j] = 1.0;
        chol_solve_in_place(l, &mut col);
        for i in 0..n {
            inv[[i, j]] = col[i];
        }
    }
    // Symmetrize to kill round-off drift between the two triangles.
    for i in 0..n {
        for j in 0..i {
            let s = 0.5 * (inv[[i, j]] + inv[[j, i]]);
            inv[[i, j]] = s;
            inv[[j, i]] = s;
        }
    }
    inv
}

/// log det A from its Cholesky factor.
pub fn chol_log_det(l: &ArrayView2<f64>) -> f64 {
    let mut acc = 0.0;
    for i in 0..l.nrows() {
        acc += l[[i, i]].ln();
    }
    2.0 * acc
}

fn square_dim(a: &ArrayView2<f64>) -> Result<usize> {
    let (r, c) = a.dim();
    if r != c {
        return Err(Error::dimension(format!("expected square matrix, got {r}x{c}")));
    }
    Ok(r)
}

fn to_symmetric_buf(a: &ArrayView2<f64>) -> Result<(Vec<f64>, usize)> {
    let n = square_dim(a)?;
    let mut buf = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            if !v.is_finite() {
                return Err(Error::numerical(format!("non-finite matrix entry at ({i}, {j})")));
            }
            buf[i * n + j] = v;
        }
    }
    Ok((buf, n))
}

fn descending_order(d: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&i, &j| d[j].partial_cmp(&d[i]).expect("eigenvalues are finite"));
    order
}

/// Householder reduction of the symmetric matrix in `a` (flat row-major,
/// n x n) to tridiagonal form: d receives the diagonal, e the subdiagonal
/// (e[0] = 0). With `vectors`, `a` is overwritten by the accumulated
/// orthogonal transform Q (A = Q T Qᵀ); otherwise its contents are scratch.
fn householder_tridiag(a: &mut [f64], n: usize, d: &mut [f64], e: &mut [f64], vectors: bool) {
    if n == 1 {
        d[0] = a[0];
        e[0] = 0.0;
        if vectors {
            a[0] = 1.0;
        }
        return;
    }
    for i in (1..n).rev() {
        let l = i - 1;
        let mut h = 0.0;
        if l > 0 {
            let mut scale = 0.0;
            for k in 0..=l {
                scale += a[i * n + k].abs();
            }
            if scale == 0.0 {
                e[i] = a[i * n + l];
            } else {
                for k in 0..=l {
                    a[i * n + k] /= scale;
                    h += a[i * n + k] * a[i * n + k];
                }
                let f = a[i * n + l];
                let g = if f >= 0.0 { -h.sqrt() } else { h.sqrt() };
                e[i] = scale * g;
                h -= f * g;
                a[i * n + l] = f - g;
                let mut f_acc = 0.0;
                for j in 0..=l {
                    if vectors {
                        a[j * n + i] = a[i * n + j] / h;
                    }
                    let mut g_acc = 0.0;
                    for k in 0..=j {
                        g_acc += a[j * n + k] * a[i * n + k];
                    }
                    for k in (j + 1)..=l {
                        g_acc += a[k * n + j] * a[i * n + k];
                    }
                    e[j] = g_acc / h;
                    f_acc += e[j] * a[i * n + j];
                }
                let hh = f_acc / (h + h);
                for j in 0..=l {
                    let f = a[i * n + j];
                    let g = e[j] - hh * f;
                    e[j] = g;
                    for k in 0..=j {
                        a[j * n + k] -= f * e[k] + g * a[i * n + k];
                    }
                }
            }
        } else {
            e[i] = a[i * n + l];
        }
        d[i] = h;
    }
    d[0] = 0.0;
    e[0] = 0.0;
    if vectors {
        for i in 0..n {
            if d[i] != 0.0 {
                for j in 0..i {
                    let mut g = 0.0;
                    for k in 0..i {
                        g += a[i * n + k] * a[k * n + j];
                    }
                    for k in 0..i {
                        a[k * n + j] -= g * a[k * n + i];
                    }
                }
            }
            d[i] = a[i * n + i];
            a[i * n + i] = 1.0;
            for j in 0..i {
                a[j * n + i] = 0.0;
                a[i * n + j] = 0.0;
            }
        }
    } else {
        for i in 0..n {
            d[i] = a[i * n + i];
        }
    }
}

/// Implicit-shift QL iteration on the tridiagonal (d, e). Eigenvalues land in
/// d; when `z` is given (flat n x n), the rotations are accumulated so its
/// columns become eigenvectors.
fn ql_implicit(d: &mut [f64], e: &mut [f64], mut z: Option<&mut [f64]>, n: usize) -> Result<()> {
    if n == 1 {
        return Ok(());
    }
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    for l in 0..n {
        let mut iter = 0;
        loop {
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            if iter > 64 {
                return Err(Error::numerical(
                    "symmetric QL iteration failed to converge".to_string(),
                ));
            }
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            let denom = g + if g >= 0.0 { r } else { -r };
            g = d[m] - d[l] + e[l] / denom;
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let mut f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if let Some(zbuf) = z.as_deref_mut() {
                    for k in 0..n {
                        f = zbuf[k * n + i + 1];
                        zbuf[k * n + i + 1] = s * zbuf[k * n + i] + c * f;
                        zbuf[k * n + i] = c * zbuf[k * n + i] - s * f;
                    }
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }
    Ok(())
}
