//! Eigen-decomposition of general real matrices.
//!
//! Pipeline: log-magnitude balancing followed by radix-2 balancing,
//! Householder reduction to upper
//! Hessenberg form, Francis implicit double-shift QR with deflation to real
//! Schur form, then back-substitution on the quasi-triangular factor for the
//! eigenvectors. The QR and back-substitution steps follow the classical
//! EISPACK `hqr2` layout.

use num_complex::Complex64;

use super::{CMatrix, Matrix};
use crate::error::{Error, Result};

const EPS: f64 = f64::EPSILON;
const RADIX: f64 = 2.0;

/// Eigenvalues (and optionally right eigenvectors, one per column) of a real
/// square matrix.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<Complex64>,
    pub vectors: Option<CMatrix>,
    /// Row scaling `D` (largest entry 1) with `D⁻¹·vectors` well conditioned.
    pub scaling: Vec<f64>,
}

/// Diagonal similarity `D^{-1} A D` equalizing row and column 1-norms.
///
/// Returns the balanced matrix and the scaling vector `D`. Scaling factors
/// are powers of two so the transformation itself introduces no rounding.
pub fn balance(a: &Matrix) -> (Matrix, Vec<f64>) {
    let n = a.rows();
    let mut b = a.clone();
    let mut scale = vec![1.0; n];
    let b2 = RADIX * RADIX;
    let mut noconv = true;
    while noconv {
        noconv = false;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += b[(j, i)].abs();
                    r += b[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= b2;
            }
            g = r * RADIX;
            while c >= g {
                f /= RADIX;
                c /= b2;
            }
            if (c + r) / f < 0.95 * s {
                scale[i] *= f;
                noconv = true;
                let inv = 1.0 / f;
                for j in 0..n {
                    b[(i, j)] *= inv;
                }
                for j in 0..n {
                    b[(j, i)] *= f;
                }
            }
        }
    }
    (b, scale)
}

/// Diagonal similarity `D^{-1} A D` with `ln D` the least-squares solution
/// of `ln|a_ij| + x_j - x_i = 0` over the nonzero off-diagonal entries.
///
/// Radix-2 balancing cannot build the exponential ramp a long chain with
/// unequal hoppings needs, since each local imbalance stays below the radix;
/// this global solve symmetrizes such chains exactly (up to rounding).
/// Returns `None` when there is nothing to do or the scaling would overflow.
pub fn log_balance(a: &Matrix) -> Option<(Matrix, Vec<f64>)> {
    let n = a.rows();
    let mut lap = Matrix::zeros(n, n);
    let mut rhs = vec![0.0; n];
    let mut edges = 0usize;
    for i in 0..n {
        for j in 0..n {
            let v = a[(i, j)];
            if i == j || v == 0.0 {
                continue;
            }
            edges += 1;
            let c = v.abs().ln();
            lap[(i, i)] += 1.0;
            lap[(j, j)] += 1.0;
            lap[(i, j)] -= 1.0;
            lap[(j, i)] -= 1.0;
            rhs[i] += c;
            rhs[j] -= c;
        }
    }
    if edges == 0 {
        return None;
    }
    // the mean of x is free on each connected piece; pin it without biasing
    // the slopes by adding the piece's averaging projector
    let mut root: Vec<usize> = (0..n).collect();
    fn find(root: &mut [usize], mut i: usize) -> usize {
        while root[i] != i {
            root[i] = root[root[i]];
            i = root[i];
        }
        i
    }
    for i in 0..n {
        for j in 0..n {
            if i != j && a[(i, j)] != 0.0 {
                let (ri, rj) = (find(&mut root, i), find(&mut root, j));
                root[ri] = rj;
            }
        }
    }
    let label: Vec<usize> = (0..n).map(|i| find(&mut root, i)).collect();
    let mut size = vec![0usize; n];
    label.iter().for_each(|&r| size[r] += 1);
    for i in 0..n {
        for j in 0..n {
            if label[i] == label[j] {
                lap[(i, j)] += 1.0 / size[label[i]] as f64;
            }
        }
    }
    let x = cholesky_solve(lap, rhs)?;
    let mean = x.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    if !(hi - lo <= 600.0) {
        return None;
    }
    let d: Vec<f64> = x.iter().map(|v| v.exp()).collect();
    let mut b = a.clone();
    for i in 0..n {
        for j in 0..n {
            if i != j && b[(i, j)] != 0.0 {
                b[(i, j)] *= d[j] / d[i];
            }
        }
    }
    Some((b, d))
}

/// In-place Cholesky solve of a symmetric positive-definite system.
fn cholesky_solve(mut m: Matrix, mut y: Vec<f64>) -> Option<Vec<f64>> {
    let n = m.rows();
    for j in 0..n {
        let mut diag = m[(j, j)];
        for k in 0..j {
            diag -= m[(j, k)] * m[(j, k)];
        }
        if !(diag > 0.0) {
            return None;
        }
        let diag = diag.sqrt();
        m[(j, j)] = diag;
        for i in j + 1..n {
            let mut v = m[(i, j)];
            for k in 0..j {
                v -= m[(i, k)] * m[(j, k)];
            }
            m[(i, j)] = v / diag;
        }
    }
    for i in 0..n {
        let mut v = y[i];
        for k in 0..i {
            v -= m[(i, k)] * y[k];
        }
        y[i] = v / m[(i, i)];
    }
    for i in (0..n).rev() {
        let mut v = y[i];
        for k in i + 1..n {
            v -= m[(k, i)] * y[k];
        }
        y[i] = v / m[(i, i)];
    }
    Some(y)
}

/// Householder reduction to upper Hessenberg form. Returns `(H, Q)` with
/// `A = Q H Q^T`.
pub fn hessenberg(a: &Matrix) -> (Matrix, Matrix) {
    let n = a.rows();
    let mut h = a.clone();
    let mut ort = vec![0.0; n];
    let high = n.saturating_sub(1);

    for m in 1..high {
        let scale: f64 = (m..=high).map(|i| h[(i, m - 1)].abs()).sum();
        if scale == 0.0 {
            continue;
        }
        let mut hh = 0.0;
        for i in (m..=high).rev() {
            ort[i] = h[(i, m - 1)] / scale;
            hh += ort[i] * ort[i];
        }
        let mut g = hh.sqrt();
        if ort[m] > 0.0 {
            g = -g;
        }
        hh -= ort[m] * g;
        ort[m] -= g;

        for j in m..n {
            let mut f = 0.0;
            for i in (m..=high).rev() {
                f += ort[i] * h[(i, j)];
            }
            f /= hh;
            for i in m..=high {
                h[(i, j)] -= f * ort[i];
            }
        }
        for i in 0..=high {
            let mut f = 0.0;
            for j in (m..=high).rev() {
                f += ort[j] * h[(i, j)];
            }
            f /= hh;
            for j in m..=high {
                h[(i, j)] -= f * ort[j];
            }
        }
        ort[m] *= scale;
        h[(m, m - 1)] = scale * g;
    }

    let mut q = Matrix::identity(n);
    for m in (1..high).rev() {
        if h[(m, m - 1)] == 0.0 {
            continue;
        }
        for i in (m + 1)..=high {
            ort[i] = h[(i, m - 1)];
        }
        for j in m..=high {
            let mut g = 0.0;
            for i in m..=high {
                g += ort[i] * q[(i, j)];
            }
            // double division avoids possible underflow
            g = (g / ort[m]) / h[(m, m - 1)];
            for i in m..=high {
                q[(i, j)] += g * ort[i];
            }
        }
    }
    for i in 0..n {
        for j in 0..i.saturating_sub(1) {
            h[(i, j)] = 0.0;
        }
    }
    (h, q)
}

fn cdiv(xr: f64, xi: f64, yr: f64, yi: f64) -> (f64, f64) {
    if yr.abs() > yi.abs() {
        let r = yi / yr;
        let d = yr + r * yi;
        ((xr + r * xi) / d, (xi - r * xr) / d)
    } else {
        let r = yr / yi;
        let d = yi + r * yr;
        ((r * xr + xi) / d, (r * xi - xr) / d)
    }
}

/// Full eigen-decomposition of a general real square matrix.
///
/// `label` identifies the matrix in convergence-failure reports.
pub fn general_eigen(a: &Matrix, want_vectors: bool, label: &str) -> Result<EigenDecomposition> {
    assert!(a.is_square(), "eigen-decomposition needs a square matrix");
    let n = a.rows();
    if n == 0 {
        return Ok(EigenDecomposition {
            values: vec![],
            vectors: want_vectors.then(|| CMatrix::zeros(0, 0)),
            scaling: vec![],
        });
    }
    let (pre, mut scale) = log_balance(a).unwrap_or_else(|| (a.clone(), vec![1.0; n]));
    let (balanced, radix) = balance(&pre);
    scale.iter_mut().zip(&radix).for_each(|(s, r)| *s *= r);
    let top = scale.iter().copied().fold(0.0, f64::max);
    scale.iter_mut().for_each(|s| *s /= top);
    let (mut h, mut v) = hessenberg(&balanced);
    let (d, e) = schur_qr(&mut h, &mut v, want_vectors, label)?;

    let values: Vec<Complex64> = d.iter().zip(&e).map(|(&re, &im)| Complex64::new(re, im)).collect();
    if !want_vectors {
        return Ok(EigenDecomposition {
            values,
            vectors: None,
            scaling: scale,
        });
    }
    schur_back_substitute(&mut h, &mut v, &d, &e);

    let mut vecs = CMatrix::zeros(n, n);
    let mut j = 0;
    while j < n {
        if e[j] == 0.0 {
            for i in 0..n {
                vecs[(i, j)] = Complex64::new(v[(i, j)] * scale[i], 0.0);
            }
            j += 1;
        } else {
            // pair (j, j+1): columns hold Re and Im parts of the vector for d[j] + i e[j]
            for i in 0..n {
                let re = v[(i, j)] * scale[i];
                let im = v[(i, j + 1)] * scale[i];
                vecs[(i, j)] = Complex64::new(re, im);
                vecs[(i, j + 1)] = Complex64::new(re, -im);
            }
            j += 2;
        }
    }
    for j in 0..n {
        let nrm: f64 = (0..n).map(|i| vecs[(i, j)].norm_sqr()).sum::<f64>().sqrt();
        if nrm > 0.0 {
            for i in 0..n {
                vecs[(i, j)] /= nrm;
            }
        }
    }
    Ok(EigenDecomposition {
        values,
        vectors: Some(vecs),
        scaling: scale,
    })
}

/// Francis double-shift QR on an upper Hessenberg matrix. On exit `h` holds
/// the real Schur form and `v` (if accumulated) the Schur vectors.
#[allow(unused_assignments)]
fn schur_qr(
    h: &mut Matrix,
    v: &mut Matrix,
    accumulate: bool,
    label: &str,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let nn = h.rows();
    let mut d = vec![0.0; nn];
    let mut e = vec![0.0; nn];
    let low = 0usize;
    let high = nn - 1;
    let max_iterations = 30 * nn;
    let mut total_iterations = 0usize;
    let mut shifts: Vec<f64> = Vec::new();

    let mut norm = 0.0;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += h[(i, j)].abs();
        }
    }

    let mut n = nn as isize - 1;
    let mut exshift = 0.0;
    let (mut p, mut q, mut r, mut s, mut z) = (0.0f64, 0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut w, mut x, mut y);
    let mut iter = 0usize;

    while n >= low as isize {
        let nu = n as usize;
        // look for a single small subdiagonal element
        let mut l = nu;
        while l > low {
            s = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[(l, l - 1)].abs() < EPS * s {
                break;
            }
            l -= 1;
        }

        if l == nu {
            // one root
            h[(nu, nu)] += exshift;
            d[nu] = h[(nu, nu)];
            e[nu] = 0.0;
            n -= 1;
            iter = 0;
        } else if l + 1 == nu {
            // two roots
            w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
            p = (h[(nu - 1, nu - 1)] - h[(nu, nu)]) / 2.0;
            q = p * p + w;
            z = q.abs().sqrt();
            h[(nu, nu)] += exshift;
            h[(nu - 1, nu - 1)] += exshift;
            x = h[(nu, nu)];

            if q >= 0.0 {
                z = if p >= 0.0 { p + z } else { p - z };
                d[nu - 1] = x + z;
                d[nu] = d[nu - 1];
                if z != 0.0 {
                    d[nu] = x - w / z;
                }
                e[nu - 1] = 0.0;
                e[nu] = 0.0;
                x = h[(nu, nu - 1)];
                s = x.abs() + z.abs();
                p = x / s;
                q = z / s;
                r = (p * p + q * q).sqrt();
                p /= r;
                q /= r;
                for j in (nu - 1)..nn {
                    z = h[(nu - 1, j)];
                    h[(nu - 1, j)] = q * z + p * h[(nu, j)];
                    h[(nu, j)] = q * h[(nu, j)] - p * z;
                }
                for i in 0..=nu {
                    z = h[(i, nu - 1)];
                    h[(i, nu - 1)] = q * z + p * h[(i, nu)];
                    h[(i, nu)] = q * h[(i, nu)] - p * z;
                }
                if accumulate {
                    for i in low..=high {
                        z = v[(i, nu - 1)];
                        v[(i, nu - 1)] = q * z + p * v[(i, nu)];
                        v[(i, nu)] = q * v[(i, nu)] - p * z;
                    }
                }
            } else {
                d[nu - 1] = x + p;
                d[nu] = x + p;
                e[nu - 1] = z;
                e[nu] = -z;
            }
            n -= 2;
            iter = 0;
        } else {
            // form shift
            x = h[(nu, nu)];
            y = 0.0;
            w = 0.0;
            if l < nu {
                y = h[(nu - 1, nu - 1)];
                w = h[(nu, nu - 1)] * h[(nu - 1, nu)];
            }
            // exceptional shifts
            if iter == 10 {
                exshift += x;
                for i in low..=nu {
                    h[(i, i)] -= x;
                }
                s = h[(nu, nu - 1)].abs() + h[(nu - 1, nu - 2)].abs();
                x = 0.75 * s;
                y = x;
                w = -0.4375 * s * s;
            }
            if iter == 30 {
                s = (y - x) / 2.0;
                s = s * s + w;
                if s > 0.0 {
                    s = s.sqrt();
                    if y < x {
                        s = -s;
                    }
                    s = x - w / ((y - x) / 2.0 + s);
                    for i in low..=nu {
                        h[(i, i)] -= s;
                    }
                    exshift += s;
                    x = 0.964;
                    y = x;
                    w = x;
                }
            }
            iter += 1;
            total_iterations += 1;
            shifts.push(x + exshift);
            if shifts.len() > 8 {
                shifts.remove(0);
            }
            if total_iterations > max_iterations {
                return Err(Error::NoConvergence {
                    matrix: label.to_string(),
                    iterations: total_iterations,
                    shifts,
                });
            }

            // look for two consecutive small subdiagonal elements
            let mut m = nu - 2;
            loop {
                z = h[(m, m)];
                r = x - z;
                s = y - z;
                p = (r * s - w) / h[(m + 1, m)] + h[(m, m + 1)];
                q = h[(m + 1, m + 1)] - z - r - s;
                r = h[(m + 2, m + 1)];
                s = p.abs() + q.abs() + r.abs();
                p /= s;
                q /= s;
                r /= s;
                if m == l {
                    break;
                }
                if h[(m, m - 1)].abs() * (q.abs() + r.abs())
                    < EPS * (p.abs() * (h[(m - 1, m - 1)].abs() + z.abs() + h[(m + 1, m + 1)].abs()))
                {
                    break;
                }
                m -= 1;
            }
            for i in (m + 2)..=nu {
                h[(i, i - 2)] = 0.0;
                if i > m + 2 {
                    h[(i, i - 3)] = 0.0;
                }
            }

            // double QR step on rows l..=n, columns m..=n
            let mut k = m;
            while k < nu {
                let notlast = k != nu - 1;
                if k != m {
                    p = h[(k, k - 1)];
                    q = h[(k + 1, k - 1)];
                    r = if notlast { h[(k + 2, k - 1)] } else { 0.0 };
                    x = p.abs() + q.abs() + r.abs();
                    if x == 0.0 {
                        k += 1;
                        continue;
                    }
                    p /= x;
                    q /= x;
                    r /= x;
                }
                s = (p * p + q * q + r * r).sqrt();
                if p < 0.0 {
                    s = -s;
                }
                if s != 0.0 {
                    if k != m {
                        h[(k, k - 1)] = -s * x;
                    } else if l != m {
                        h[(k, k - 1)] = -h[(k, k - 1)];
                    }
                    p += s;
                    x = p / s;
                    y = q / s;
                    z = r / s;
                    q /= p;
                    r /= p;

                    for j in k..nn {
                        p = h[(k, j)] + q * h[(k + 1, j)];
                        if notlast {
                            p += r * h[(k + 2, j)];
                            h[(k + 2, j)] -= p * z;
                        }
                        h[(k, j)] -= p * x;
                        h[(k + 1, j)] -= p * y;
                    }
                    for i in 0..=nu.min(k + 3) {
                        p = x * h[(i, k)] + y * h[(i, k + 1)];
                        if notlast {
                            p += z * h[(i, k + 2)];
                            h[(i, k + 2)] -= p * r;
                        }
                        h[(i, k)] -= p;
                        h[(i, k + 1)] -= p * q;
                    }
                    if accumulate {
                        for i in low..=high {
                            p = x * v[(i, k)] + y * v[(i, k + 1)];
                            if notlast {
                                p += z * v[(i, k + 2)];
                                v[(i, k + 2)] -= p * r;
                            }
                            v[(i, k)] -= p;
                            v[(i, k + 1)] -= p * q;
                        }
                    }
                }
                k += 1;
            }
        }
    }
    Ok((d, e))
}

/// Eigenvectors of the real Schur form by back-substitution, transformed
/// back by the accumulated Schur vectors (result left in `v`).
#[allow(unused_assignments)]
fn schur_back_substitute(h: &mut Matrix, v: &mut Matrix, d: &[f64], e: &[f64]) {
    let nn = h.rows();
    let mut norm = 0.0;
    for i in 0..nn {
        for j in i.saturating_sub(1)..nn {
            norm += h[(i, j)].abs();
        }
    }
    if norm == 0.0 {
        return;
    }

    let (mut r, mut s, mut z, mut t) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for n in (0..nn).rev() {
        let p = d[n];
        let q = e[n];
        if q == 0.0 {
            let mut l = n;
            h[(n, n)] = 1.0;
            for i in (0..n).rev() {
                let w = h[(i, i)] - p;
                r = 0.0;
                for j in l..=n {
                    r += h[(i, j)] * h[(j, n)];
                }
                if e[i] < 0.0 {
                    z = w;
                    s = r;
                } else {
                    l = i;
                    if e[i] == 0.0 {
                        h[(i, n)] = if w != 0.0 { -r / w } else { -r / (EPS * norm) };
                    } else {
                        let x = h[(i, i + 1)];
                        let y = h[(i + 1, i)];
                        let qq = (d[i] - p) * (d[i] - p) + e[i] * e[i];
                        t = (x * s - z * r) / qq;
                        h[(i, n)] = t;
                        h[(i + 1, n)] = if x.abs() > z.abs() {
                            (-r - w * t) / x
                        } else {
                            (-s - y * t) / z
                        };
                    }
                    // overflow control
                    t = h[(i, n)].abs();
                    if (EPS * t) * t > 1.0 {
                        for j in i..=n {
                            h[(j, n)] /= t;
                        }
                    }
                }
            }
        } else if q < 0.0 {
            let mut l = n - 1;
            if h[(n, n - 1)].abs() > h[(n - 1, n)].abs() {
                h[(n - 1, n - 1)] = q / h[(n, n - 1)];
                h[(n - 1, n)] = -(h[(n, n)] - p) / h[(n, n - 1)];
            } else {
                let (cr, ci) = cdiv(0.0, -h[(n - 1, n)], h[(n - 1, n - 1)] - p, q);
                h[(n - 1, n - 1)] = cr;
                h[(n - 1, n)] = ci;
            }
            h[(n, n - 1)] = 0.0;
            h[(n, n)] = 1.0;
            if n >= 2 {
                for i in (0..=(n - 2)).rev() {
                    let mut ra = 0.0;
                    let mut sa = 0.0;
                    for j in l..=n {
                        ra += h[(i, j)] * h[(j, n - 1)];
                        sa += h[(i, j)] * h[(j, n)];
                    }
                    let w = h[(i, i)] - p;
                    if e[i] < 0.0 {
                        z = w;
                        r = ra;
                        s = sa;
                    } else {
                        l = i;
                        if e[i] == 0.0 {
                            let (cr, ci) = cdiv(-ra, -sa, w, q);
                            h[(i, n - 1)] = cr;
                            h[(i, n)] = ci;
                        } else {
                            let x = h[(i, i + 1)];
                            let y = h[(i + 1, i)];
                            let mut vr = (d[i] - p) * (d[i] - p) + e[i] * e[i] - q * q;
                            let vi = (d[i] - p) * 2.0 * q;
                            if vr == 0.0 && vi == 0.0 {
                                vr = EPS * norm * (w.abs() + q.abs() + x.abs() + y.abs() + z.abs());
                            }
                            let (cr, ci) =
                                cdiv(x * r - z * ra + q * sa, x * s - z * sa - q * ra, vr, vi);
                            h[(i, n - 1)] = cr;
                            h[(i, n)] = ci;
                            if x.abs() > z.abs() + q.abs() {
                                h[(i + 1, n - 1)] = (-ra - w * h[(i, n - 1)] + q * h[(i, n)]) / x;
                                h[(i + 1, n)] = (-sa - w * h[(i, n)] - q * h[(i, n - 1)]) / x;
                            } else {
                                let (cr, ci) =
                                    cdiv(-r - y * h[(i, n - 1)], -s - y * h[(i, n)], z, q);
                                h[(i + 1, n - 1)] = cr;
                                h[(i + 1, n)] = ci;
                            }
                        }
                        t = h[(i, n - 1)].abs().max(h[(i, n)].abs());
                        if (EPS * t) * t > 1.0 {
                            for j in i..=n {
                                h[(j, n - 1)] /= t;
                                h[(j, n)] /= t;
                            }
                        }
                    }
                }
            }
        }
    }

    // back transformation to the original (balanced) basis
    for j in (0..nn).rev() {
        for i in 0..nn {
            let mut acc = 0.0;
            for k in 0..=j {
                acc += v[(i, k)] * h[(k, j)];
            }
            v[(i, j)] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(a: &Matrix, dec: &EigenDecomposition) -> f64 {
        let vecs = dec.vectors.as_ref().unwrap();
        let mut worst: f64 = 0.0;
        for (j, &lam) in dec.values.iter().enumerate() {
            let v = vecs.column(j);
            let av = a.matvec_complex(&v);
            let r: f64 = av
                .iter()
                .zip(&v)
                .map(|(x, y)| (x - lam * y).norm_sqr())
                .sum::<f64>()
                .sqrt();
            worst = worst.max(r);
        }
        worst
    }

    #[test]
    fn rotation_has_conjugate_pair() {
        let a = Matrix::from_rows(&[vec![0.0, -1.0], vec![1.0, 0.0]]);
        let dec = general_eigen(&a, true, "rotation").unwrap();
        let mut ims: Vec<f64> = dec.values.iter().map(|z| z.im).collect();
        ims.sort_by(f64::total_cmp);
        assert!((ims[0] + 1.0).abs() < 1e-14 && (ims[1] - 1.0).abs() < 1e-14);
        assert!(residual(&a, &dec) < 1e-14);
    }

    #[test]
    fn random_matrix_residuals_small() {
        // fixed LCG so the test is reproducible without extra deps
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) - 0.5
        };
        for n in [1usize, 2, 3, 7, 20, 45] {
            let rows: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| next()).collect()).collect();
            let a = Matrix::from_rows(&rows);
            let dec = general_eigen(&a, true, "random").unwrap();
            let trace: f64 = (0..n).map(|i| a[(i, i)]).sum();
            let sum: Complex64 = dec.values.iter().sum();
            assert!((sum.re - trace).abs() < 1e-10 && sum.im.abs() < 1e-10);
            assert!(residual(&a, &dec) < 1e-10 * a.norm_frobenius().max(1.0), "n={n}");
        }
    }

    #[test]
    fn balancing_preserves_spectrum() {
        let a = Matrix::from_rows(&[
            vec![1.0, 1e6, 0.0],
            vec![1e-6, 2.0, 1e4],
            vec![0.0, 1e-4, 3.0],
        ]);
        let (b, d) = balance(&a);
        for i in 0..3 {
            for j in 0..3 {
                assert!((b[(i, j)] - a[(i, j)] * d[j] / d[i]).abs() <= 1e-12 * a[(i, j)].abs().max(1.0));
            }
        }
    }

    #[test]
    fn log_balancing_symmetrizes_a_skewed_chain() {
        let n = 60;
        let mut a = Matrix::zeros(n, n);
        for i in 0..n - 1 {
            a[(i + 1, i)] = 2.0;
            a[(i, i + 1)] = 0.5;
        }
        let (b, d) = log_balance(&a).unwrap();
        for i in 0..n - 1 {
            assert!((b[(i + 1, i)] - 1.0).abs() < 1e-10 && (b[(i, i + 1)] - 1.0).abs() < 1e-10);
            assert!((b[(i + 1, i)] - a[(i + 1, i)] * d[i] / d[i + 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn hessenberg_is_orthogonal_similarity() {
        let a = Matrix::from_rows(&[
            vec![4.0, 1.0, -2.0, 2.0],
            vec![1.0, 2.0, 0.0, 1.0],
            vec![-2.0, 0.0, 3.0, -2.0],
            vec![2.0, 1.0, -2.0, -1.0],
        ]);
        let (h, q) = hessenberg(&a);
        let back = q.matmul(&h).matmul(&q.transpose());
        for i in 0..4 {
            for j in 0..4 {
                assert!((back[(i, j)] - a[(i, j)]).abs() < 1e-13);
            }
            for j in 0..i.saturating_sub(1) {
                assert_eq!(h[(i, j)], 0.0);
            }
        }
    }
}
