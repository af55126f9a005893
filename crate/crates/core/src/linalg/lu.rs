//! Complex LU factorization with partial pivoting.

use num_complex::Complex64;

use super::CMatrix;

/// `P A = L U` packed into one matrix (unit lower triangle implied).
#[derive(Debug, Clone)]
pub struct ComplexLu {
    lu: CMatrix,
    perm: Vec<usize>,
}

impl ComplexLu {
    /// Returns `None` if a zero pivot is met (exactly singular matrix).
    pub fn new(a: &CMatrix) -> Option<Self> {
        let n = a.rows();
        assert_eq!(n, a.cols(), "LU needs a square matrix");
        let mut lu = a.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let piv = (k..n).max_by(|&i, &j| lu[(i, k)].norm().total_cmp(&lu[(j, k)].norm()))?;
            if lu[(piv, k)].norm() == 0.0 {
                return None;
            }
            if piv != k {
                for j in 0..n {
                    let tmp = lu[(k, j)];
                    lu[(k, j)] = lu[(piv, j)];
                    lu[(piv, j)] = tmp;
                }
                perm.swap(k, piv);
            }
            let pivot = lu[(k, k)];
            for i in (k + 1)..n {
                let f = lu[(i, k)] / pivot;
                lu[(i, k)] = f;
                if f == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for j in (k + 1)..n {
                    let u = lu[(k, j)];
                    lu[(i, j)] -= f * u;
                }
            }
        }
        Some(Self { lu, perm })
    }

    pub fn solve(&self, b: &[Complex64]) -> Vec<Complex64> {
        let n = self.perm.len();
        assert_eq!(b.len(), n);
        let mut x: Vec<Complex64> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in (i + 1)..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }

    pub fn inverse(&self) -> CMatrix {
        let n = self.perm.len();
        let mut inv = CMatrix::zeros(n, n);
        let mut e = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = Complex64::new(0.0, 0.0));
            e[j] = Complex64::new(1.0, 0.0);
            inv.set_column(j, &self.solve(&e));
        }
        inv
    }
}

/// 1-norm condition number `‖A‖₁‖A⁻¹‖₁`; infinite for singular matrices.
pub fn condition_number(a: &CMatrix) -> f64 {
    match ComplexLu::new(a) {
        Some(lu) => a.norm_one() * lu.inverse().norm_one(),
        None => f64::INFINITY,
    }
}
