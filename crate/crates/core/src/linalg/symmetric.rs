//! Real symmetric eigenproblems: Householder tridiagonalization (`tred2`)
//! followed by implicit QL iteration (`tql2`).

use super::Matrix;
use crate::error::{Error, Result};

/// Eigenvalues in ascending order, with orthonormal eigenvectors as columns
/// when requested.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    pub vectors: Option<Matrix>,
}

/// Symmetric tridiagonal matrix with diagonal `diag` and off-diagonal `off`
/// (`off[i]` couples rows `i` and `i + 1`).
pub fn tridiagonal_eigen(diag: &[f64], off: &[f64], want_vectors: bool) -> Result<SymmetricEigen> {
    let n = diag.len();
    if n == 0 {
        return Ok(SymmetricEigen {
            values: vec![],
            vectors: want_vectors.then(|| Matrix::zeros(0, 0)),
        });
    }
    if off.len() + 1 != n {
        return Err(Error::LengthMismatch {
            what: "off-diagonal of a tridiagonal matrix",
            expected: n - 1,
            got: off.len(),
        });
    }
    let mut d = diag.to_vec();
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(off);
    let mut v = want_vectors.then(|| Matrix::identity(n));
    tql2(&mut d, &mut e, v.as_mut())?;
    Ok(sort_pairs(d, v))
}

/// Dense real symmetric matrix. Only the lower triangle is read.
pub fn symmetric_eigen(a: &Matrix, want_vectors: bool) -> Result<SymmetricEigen> {
    assert!(a.is_square(), "symmetric eigenproblem needs a square matrix");
    let n = a.rows();
    if n == 0 {
        return Ok(SymmetricEigen {
            values: vec![],
            vectors: want_vectors.then(|| Matrix::zeros(0, 0)),
        });
    }
    let mut v = a.clone();
    let mut d = vec![0.0; n];
    let mut e = vec![0.0; n];
    tred2(&mut v, &mut d, &mut e);
    // tred2 leaves the subdiagonal in e[1..]; tql2 wants it in e[..n-1]
    for i in 1..n {
        e[i - 1] = e[i];
    }
    e[n - 1] = 0.0;
    if want_vectors {
        tql2(&mut d, &mut e, Some(&mut v))?;
        Ok(sort_pairs(d, Some(v)))
    } else {
        tql2(&mut d, &mut e, None)?;
        Ok(sort_pairs(d, None))
    }
}

fn sort_pairs(d: Vec<f64>, v: Option<Matrix>) -> SymmetricEigen {
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]));
    let values = order.iter().map(|&i| d[i]).collect();
    let vectors = v.map(|v| {
        let mut out = Matrix::zeros(n, n);
        for (j, &src) in order.iter().enumerate() {
            for i in 0..n {
                out[(i, j)] = v[(i, src)];
            }
        }
        out
    });
    SymmetricEigen { values, vectors }
}

/// Householder reduction of a symmetric matrix to tridiagonal form. On exit
/// `v` holds the orthogonal transformation, `d` the diagonal and `e[1..]` the
/// subdiagonal.
fn tred2(v: &mut Matrix, d: &mut [f64], e: &mut [f64]) {
    let n = d.len();
    for j in 0..n {
        d[j] = v[(n - 1, j)];
    }
    for i in (1..n).rev() {
        let mut scale = 0.0;
        let mut h = 0.0;
        for k in 0..i {
            scale += d[k].abs();
        }
        if scale == 0.0 {
            e[i] = d[i - 1];
            for j in 0..i {
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
                v[(j, i)] = 0.0;
            }
        } else {
            for k in 0..i {
                d[k] /= scale;
                h += d[k] * d[k];
            }
            let mut f = d[i - 1];
            let mut g = h.sqrt();
            if f > 0.0 {
                g = -g;
            }
            e[i] = scale * g;
            h -= f * g;
            d[i - 1] = f - g;
            for j in 0..i {
                e[j] = 0.0;
            }
            for j in 0..i {
                f = d[j];
                v[(j, i)] = f;
                g = e[j] + v[(j, j)] * f;
                for k in (j + 1)..i {
                    g += v[(k, j)] * d[k];
                    e[k] += v[(k, j)] * f;
                }
                e[j] = g;
            }
            f = 0.0;
            for j in 0..i {
                e[j] /= h;
                f += e[j] * d[j];
            }
            let hh = f / (h + h);
            for j in 0..i {
                e[j] -= hh * d[j];
            }
            for j in 0..i {
                f = d[j];
                g = e[j];
                for k in j..i {
                    v[(k, j)] -= f * e[k] + g * d[k];
                }
                d[j] = v[(i - 1, j)];
                v[(i, j)] = 0.0;
            }
        }
        d[i] = h;
    }

    for i in 0..n.saturating_sub(1) {
        v[(n - 1, i)] = v[(i, i)];
        v[(i, i)] = 1.0;
        let h = d[i + 1];
        if h != 0.0 {
            for k in 0..=i {
                d[k] = v[(k, i + 1)] / h;
            }
            for j in 0..=i {
                let mut g = 0.0;
                for k in 0..=i {
                    g += v[(k, i + 1)] * v[(k, j)];
                }
                for k in 0..=i {
                    v[(k, j)] -= g * d[k];
                }
            }
        }
        for k in 0..=i {
            v[(k, i + 1)] = 0.0;
        }
    }
    for j in 0..n {
        d[j] = v[(n - 1, j)];
        v[(n - 1, j)] = 0.0;
    }
    v[(n - 1, n - 1)] = 1.0;
    e[0] = 0.0;
}

/// Implicit QL on a symmetric tridiagonal matrix (`d` diagonal, `e[..n-1]`
/// off-diagonal, `e[n-1] = 0`). Rotations are accumulated into `v` if given.
fn tql2(d: &mut [f64], e: &mut [f64], mut v: Option<&mut Matrix>) -> Result<()> {
    let n = d.len();
    let eps = f64::EPSILON;
    let mut f = 0.0;
    let mut tst1: f64 = 0.0;
    let cap = 30 * n.max(1);
    let mut total = 0usize;

    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            loop {
                total += 1;
                if total > cap {
                    return Err(Error::NoConvergence {
                        matrix: format!("symmetric tridiagonal (size {n})"),
                        iterations: total,
                        shifts: vec![d[l]],
                    });
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(v) = v.as_deref_mut() {
                        for k in 0..n {
                            h = v[(k, i + 1)];
                            v[(k, i + 1)] = s * v[(k, i)] + c * h;
                            v[(k, i)] = c * v[(k, i)] - s * h;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = 0.0;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn toeplitz_tridiagonal_closed_form() {
        let n = 40;
        let eig = tridiagonal_eigen(&vec![0.5; n], &vec![1.0; n - 1], true).unwrap();
        for (k, &lam) in eig.values.iter().enumerate() {
            let expected = 0.5 - 2.0 * (((k + 1) as f64) * PI / (n as f64 + 1.0)).cos();
            assert!((lam - expected).abs() < 1e-13);
        }
        let v = eig.vectors.unwrap();
        let vtv = v.transpose().matmul(&v);
        for i in 0..n {
            for j in 0..n {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((vtv[(i, j)] - target).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dense_symmetric_reconstructs() {
        let a = Matrix::from_rows(&[
            vec![4.0, 1.0, -2.0, 2.0],
            vec![1.0, 2.0, 0.0, 1.0],
            vec![-2.0, 0.0, 3.0, -2.0],
            vec![2.0, 1.0, -2.0, -1.0],
        ]);
        let eig = symmetric_eigen(&a, true).unwrap();
        let v = eig.vectors.unwrap();
        let back = v.matmul(&Matrix::from_diagonal(&eig.values)).matmul(&v.transpose());
        for i in 0..4 {
            for j in 0..4 {
                assert!((back[(i, j)] - a[(i, j)]).abs() < 1e-12);
            }
        }
        assert!(eig.values.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn one_by_one_and_mismatch() {
        let eig = tridiagonal_eigen(&[3.0], &[], false).unwrap();
        assert_eq!(eig.values, vec![3.0]);
        assert!(tridiagonal_eigen(&[1.0, 2.0], &[], false).is_err());
    }
}
