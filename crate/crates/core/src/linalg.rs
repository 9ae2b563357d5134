//! Small dense kernels used behind the public matrix API.
//!
//! Everything here works on row-major `&[f64]` buffers. Callers are expected
//! to have validated shapes already.

use crate::error::{Error, Result};

/// Eigen-decomposition of a symmetric matrix, eigenvalues sorted descending.
#[derive(Debug, Clone)]
pub(crate) struct SymEigen {
    pub values: Vec<f64>,
    /// `vectors[k]` is the unit eigenvector for `values[k]`.
    pub vectors: Vec<Vec<f64>>,
}

/// Cyclic Jacobi rotations. Accurate to a few ulps relative to the largest
/// eigenvalue magnitude; intended for n up to a few hundred.
pub(crate) fn symmetric_eigen(a: &[f64], n: usize) -> SymEigen {
    debug_assert_eq!(a.len(), n * n);
    let mut a = a.to_vec();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let total: f64 = a.iter().map(|x| x * x).sum();
    if total > 0.0 {
        for _sweep in 0..100 {
            let mut off = 0.0;
            for p in 0..n {
                for q in (p + 1)..n {
                    off += a[p * n + q] * a[p * n + q];
                }
            }
            if off <= 1e-32 * total {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[p * n + q];
                    if apq == 0.0 {
                        continue;
                    }
                    let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[k * n + p];
                        let akq = a[k * n + q];
                        a[k * n + p] = c * akp - s * akq;
                        a[k * n + q] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[p * n + k];
                        let aqk = a[q * n + k];
                        a[p * n + k] = c * apk - s * aqk;
                        a[q * n + k] = s * apk + c * aqk;
                    }
                    for k in 0..n {
                        let vkp = v[k * n + p];
                        let vkq = v[k * n + q];
                        v[k * n + p] = c * vkp - s * vkq;
                        v[k * n + q] = s * vkp + c * vkq;
                    }
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a[i * n + i]).collect();
    let vectors = order
        .iter()
        .map(|&col| (0..n).map(|k| v[k * n + col]).collect())
        .collect();
    SymEigen { values, vectors }
}

/// Gram matrix `AᵀA` of a row-major `rows × cols` buffer.
pub(crate) fn gram_cols(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut g = vec![0.0; cols * cols];
    for r in 0..rows {
        let row = &a[r * cols..(r + 1) * cols];
        for i in 0..cols {
            let ri = row[i];
            if ri == 0.0 {
                continue;
            }
            for j in i..cols {
                g[i * cols + j] += ri * row[j];
            }
        }
    }
    for i in 0..cols {
        for j in 0..i {
            g[i * cols + j] = g[j * cols + i];
        }
    }
    g
}

/// Gram matrix `AAᵀ` of a row-major `rows × cols` buffer.
pub(crate) fn gram_rows(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut g = vec![0.0; rows * rows];
    for i in 0..rows {
        let ri = &a[i * cols..(i + 1) * cols];
        for j in i..rows {
            let rj = &a[j * cols..(j + 1) * cols];
            let d: f64 = ri.iter().zip(rj).map(|(x, y)| x * y).sum();
            g[i * rows + j] = d;
            g[j * rows + i] = d;
        }
    }
    g
}

pub(crate) fn matvec(a: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    for r in 0..rows {
        out[r] = a[r * cols..(r + 1) * cols]
            .iter()
            .zip(x)
            .map(|(p, q)| p * q)
            .sum();
    }
}

pub(crate) fn matvec_t(a: &[f64], rows: usize, cols: usize, x: &[f64], out: &mut [f64]) {
    out.iter_mut().for_each(|o| *o = 0.0);
    for r in 0..rows {
        let xr = x[r];
        if xr == 0.0 {
            continue;
        }
        for (o, v) in out.iter_mut().zip(&a[r * cols..(r + 1) * cols]) {
            *o += v * xr;
        }
    }
}

pub(crate) fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Outcome of power iteration on `AᵀA`: the top singular value and its right
/// singular vector.
pub(crate) struct PowerResult {
    pub sigma: f64,
    pub right: Vec<f64>,
}

/// Power iteration on `AᵀA` with a deterministic start vector.
///
/// Starts from the normalized all-ones vector. If that vector is annihilated
/// by `A` (or stalls at zero), restarts from the basis vector of the column
/// with the largest norm.
pub(crate) fn power_iteration(
    a: &[f64],
    rows: usize,
    cols: usize,
    tol: f64,
    max_iter: usize,
) -> Result<PowerResult> {
    let mut v = vec![1.0 / (cols as f64).sqrt(); cols];
    let mut av = vec![0.0; rows];
    let mut w = vec![0.0; cols];

    matvec(a, rows, cols, &v, &mut av);
    if norm2(&av) == 0.0 {
        let mut best = (0usize, 0.0f64);
        for j in 0..cols {
            let n: f64 = (0..rows).map(|r| a[r * cols + j].powi(2)).sum();
            if n > best.1 {
                best = (j, n);
            }
        }
        if best.1 == 0.0 {
            return Ok(PowerResult {
                sigma: 0.0,
                right: v,
            });
        }
        v.iter_mut().for_each(|x| *x = 0.0);
        v[best.0] = 1.0;
    }

    let mut rho_prev = f64::NAN;
    let mut rho = 0.0;
    for _ in 0..max_iter {
        matvec(a, rows, cols, &v, &mut av);
        matvec_t(a, rows, cols, &av, &mut w);
        // Rayleigh quotient of AᵀA at unit v.
        rho = av.iter().map(|x| x * x).sum::<f64>();
        if rho == 0.0 {
            return Ok(PowerResult {
                sigma: 0.0,
                right: v,
            });
        }
        let resid: f64 = w
            .iter()
            .zip(&v)
            .map(|(wi, vi)| (wi - rho * vi).powi(2))
            .sum::<f64>()
            .sqrt();
        let wn = norm2(&w);
        let change = (rho - rho_prev).abs();
        let rel_resid = resid / rho;
        if rel_resid <= tol || (rel_resid <= tol.sqrt() && change <= 0.1 * tol * rho) {
            for (vi, wi) in v.iter_mut().zip(&w) {
                *vi = wi / wn;
            }
            // One more Rayleigh evaluation at the refreshed vector; it can only
            // move the estimate toward the top eigenvalue.
            matvec(a, rows, cols, &v, &mut av);
            let refined = av.iter().map(|x| x * x).sum::<f64>().max(rho);
            return Ok(PowerResult {
                sigma: refined.sqrt(),
                right: v,
            });
        }
        rho_prev = rho;
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / wn;
        }
    }
    Err(Error::Convergence {
        iterations: max_iter,
        last: rho.sqrt(),
    })
}

/// `ln|det A|` and the sign of the determinant via LU with partial pivoting.
/// A singular matrix gives `(0.0, -inf)`.
pub(crate) fn log_det(a: &[f64], n: usize) -> (f64, f64) {
    let mut lu = a.to_vec();
    let mut sign = 1.0;
    let mut logdet = 0.0;
    for col in 0..n {
        let mut piv = col;
        let mut best = lu[col * n + col].abs();
        for r in (col + 1)..n {
            let v = lu[r * n + col].abs();
            if v > best {
                best = v;
                piv = r;
            }
        }
        if best == 0.0 {
            return (0.0, f64::NEG_INFINITY);
        }
        if piv != col {
            for k in 0..n {
                lu.swap(col * n + k, piv * n + k);
            }
            sign = -sign;
        }
        let d = lu[col * n + col];
        if d < 0.0 {
            sign = -sign;
        }
        logdet += d.abs().ln();
        for r in (col + 1)..n {
            let f = lu[r * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                lu[r * n + k] -= f * lu[col * n + k];
            }
        }
    }
    (sign, logdet)
}

/// Lower-triangular factor `L` with `LLᵀ = A` for a symmetric positive
/// semidefinite `A`. Pivots within `tol` of zero produce a zero column;
/// a pivot below `-tol` is reported as `(index, value)`.
pub(crate) fn psd_cholesky(a: &[f64], n: usize, tol: f64) -> std::result::Result<Vec<f64>, (usize, f64)> {
    let mut l = vec![0.0; n * n];
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= l[j * n + k] * l[j * n + k];
        }
        if d < -tol {
            return Err((j, d));
        }
        if d <= tol {
            // Rank-deficient direction; the remaining entries of this column
            // must vanish for A to be PSD.
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s -= l[i * n + k] * l[j * n + k];
                }
                if s.abs() > tol.sqrt() {
                    return Err((j, d));
                }
            }
            continue;
        }
        let djj = d.sqrt();
        l[j * n + j] = djj;
        for i in (j + 1)..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= l[i * n + k] * l[j * n + k];
            }
            l[i * n + j] = s / djj;
        }
    }
    Ok(l)
}
