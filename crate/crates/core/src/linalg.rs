//! Small dense kernels shared by the graph ops.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// `out[r][n] = sum_k a[r][k] * b[n][k]` for row-major `a` (rows x k) and `b` (n x k).
pub(crate) fn matmul_t(a: &[f64], b: &[f64], rows: usize, k: usize, n: usize, out: &mut [f64]) {
    let bt = transpose(b, n, k);
    out.iter_mut().for_each(|v| *v = 0.0);
    matmul_acc(a, &bt, rows, k, n, out);
}

/// Row-major (rows x cols) to (cols x rows).
pub(crate) fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// `out[r][n] += sum_k a[r][k] * b[k][n]`.
pub(crate) fn matmul_acc(a: &[f64], b: &[f64], rows: usize, k: usize, n: usize, out: &mut [f64]) {
    for r in 0..rows {
        let arow = &a[r * k..(r + 1) * k];
        let orow = &mut out[r * n..(r + 1) * n];
        let mut kk = 0;
        while kk + 4 <= k {
            let s = [arow[kk], arow[kk + 1], arow[kk + 2], arow[kk + 3]];
            axpy4(orow, s, &b[kk * n..(kk + 4) * n]);
            kk += 4;
        }
        for kk in kk..k {
            axpy(orow, arow[kk], &b[kk * n..(kk + 1) * n]);
        }
    }
}

/// `out[k][n] += sum_r a[r][k] * b[r][n]` (that is `aᵀ·b`).
pub(crate) fn matmul_tn_acc(a: &[f64], b: &[f64], rows: usize, k: usize, n: usize, out: &mut [f64]) {
    if n == 1 {
        for r in 0..rows {
            axpy(&mut out[..k], b[r], &a[r * k..(r + 1) * k]);
        }
        return;
    }
    let mut r = 0;
    let mut packed = vec![0.0; 4 * n];
    while r + 4 <= rows {
        for i in 0..4 {
            packed[i * n..(i + 1) * n].copy_from_slice(&b[(r + i) * n..(r + i + 1) * n]);
        }
        for kk in 0..k {
            let s = [a[r * k + kk], a[(r + 1) * k + kk], a[(r + 2) * k + kk], a[(r + 3) * k + kk]];
            axpy4(&mut out[kk * n..(kk + 1) * n], s, &packed);
        }
        r += 4;
    }
    for r in r..rows {
        let brow = &b[r * n..(r + 1) * n];
        for kk in 0..k {
            axpy(&mut out[kk * n..(kk + 1) * n], a[r * k + kk], brow);
        }
    }
}

/// `out += s[0]·x[0..n] + s[1]·x[n..2n] + s[2]·x[2n..3n] + s[3]·x[3n..4n]`.
#[inline(always)]
fn axpy4(out: &mut [f64], s: [f64; 4], x: &[f64]) {
    let n = out.len();
    let (x0, rest) = x.split_at(n);
    let (x1, rest) = rest.split_at(n);
    let (x2, x3) = rest.split_at(n);
    let x3 = &x3[..n];
    for i in 0..n {
        out[i] += (s[0] * x0[i] + s[1] * x1[i]) + (s[2] * x2[i] + s[3] * x3[i]);
    }
}

#[inline(always)]
pub(crate) fn axpy(out: &mut [f64], s: f64, x: &[f64]) {
    let n = out.len().min(x.len());
    let (out, x) = (&mut out[..n], &x[..n]);
    for i in 0..n {
        out[i] += s * x[i];
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // Four accumulators let the compiler vectorize without reassociating.
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0f64; 4];
    let ca = a.chunks_exact(4);
    let cb = b.chunks_exact(4);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for (x, y) in ra.iter().zip(rb) {
        s += x * y;
    }
    s
}

/// In-place lower Cholesky factor of the symmetric `n x n` matrix `g`.
/// The strict upper triangle is zeroed.
pub(crate) fn cholesky(g: &mut [f64], n: usize) -> Result<()> {
    let scale = (0..n).fold(0.0f64, |m, i| m.max(g[i * n + i].abs()));
    let tol = f64::EPSILON * scale.max(f64::MIN_POSITIVE) * n as f64;
    for j in 0..n {
        let mut d = g[j * n + j];
        for k in 0..j {
            d -= g[j * n + k] * g[j * n + k];
        }
        if !(d > tol) {
            return Err(Error::SolveFailure { pivot: d });
        }
        let d = crate::math::sqrt(d);
        g[j * n + j] = d;
        for i in j + 1..n {
            let mut s = g[i * n + j];
            for k in 0..j {
                s -= g[i * n + k] * g[j * n + k];
            }
            g[i * n + j] = s / d;
        }
        for k in j + 1..n {
            g[j * n + k] = 0.0;
        }
    }
    Ok(())
}

/// Solves `L Lᵀ x = rhs` in place given the lower factor `l`.
pub(crate) fn cholesky_solve(l: &[f64], n: usize, x: &mut [f64]) {
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[i * n + k] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = x[i];
        for k in i + 1..n {
            s -= l[k * n + i] * x[k];
        }
        x[i] = s / l[i * n + i];
    }
}

/// Gram matrix `aᵀa + lambda·I` for row-major `a` (m x p).
pub(crate) fn regularized_gram(a: &[f64], m: usize, p: usize, lambda: f64, out: &mut [f64]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    // Exactly symmetric: each entry sums the same products in the same order.
    matmul_tn_acc(a, a, m, p, p, out);
    for i in 0..p {
        out[i * p + i] += lambda;
    }
}
