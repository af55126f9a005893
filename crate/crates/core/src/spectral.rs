//! Spectra of generators, exact kernels, localization diagnostics and the
//! ground-doublet splitting of the coupled chains.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::eigen::general_eigen;
use crate::linalg::symmetric::tridiagonal_eigen;
use crate::linalg::{cnorm2, least_squares, CMatrix};
use crate::model::{build_generator_coupled, build_generator_hn, i_pow, Generator, HNParams, ModelParams, Regime};
use crate::perturbation;

/// Eigenvalues with optional right eigenvectors (unit 2-norm columns).
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub eigenvalues: Vec<Complex64>,
    pub right_eigenvectors: Option<CMatrix>,
    /// `‖G·v − λ·v‖ / ‖G‖∞` per pair; empty without eigenvectors.
    pub residuals: Vec<f64>,
    /// Row scaling `D` under which `D⁻¹·V` is well conditioned even when `V`
    /// is not (skin-localized modes); empty when unknown.
    pub row_scaling: Vec<f64>,
    /// SHA-256 of the generator this spectrum belongs to.
    pub generator_fingerprint: String,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn spectral_radius(&self) -> f64 {
        self.eigenvalues.iter().fold(0.0, |m, z| m.max(z.norm()))
    }

    /// Indices ordered by imaginary part, then real part.
    pub fn sorted_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| {
            let (x, y) = (self.eigenvalues[a], self.eigenvalues[b]);
            x.im.total_cmp(&y.im).then(x.re.total_cmp(&y.re))
        });
        idx
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EigsOptions {
    pub vectors: bool,
    pub size_cap: usize,
    /// Use the exact tridiagonal similarity when the generator allows it.
    pub fast_path: bool,
}

impl Default for EigsOptions {
    fn default() -> Self {
        Self {
            vectors: false,
            size_cap: 2000,
            fast_path: true,
        }
    }
}

impl EigsOptions {
    pub fn with_vectors() -> Self {
        Self {
            vectors: true,
            ..Self::default()
        }
    }
}

/// Full spectrum of a generator.
///
/// Zero-diagonal or general tridiagonal generators whose off-diagonal
/// products all share one sign are mapped by `diag(r_n)` (and `diag(i^n)`
/// when the products are negative) onto a real symmetric tridiagonal matrix.
/// Strictly triangular inputs return their diagonal. Everything else goes
/// through balancing, Hessenberg reduction and Francis QR.
pub fn eigs(g: &Generator, opts: &EigsOptions) -> Result<Spectrum> {
    let n = g.size();
    if n > opts.size_cap {
        return Err(Error::param(
            "size",
            format!("generator size {n} exceeds the eigensolver cap {}", opts.size_cap),
        ));
    }
    let m = g.matrix();
    let (values, vectors, row_scaling) = if opts.fast_path && !opts.vectors && (m.is_upper_triangular() || m.is_lower_triangular()) {
        ((0..n).map(|i| Complex64::new(m[(i, i)], 0.0)).collect(), None, Vec::new())
    } else if let Some(res) = opts.fast_path.then(|| tridiagonal_fast_path(g, opts.vectors)).flatten() {
        res?
    } else {
        let label = format!("generator of size {n} (sha256 {})", &g.fingerprint()[..12]);
        let dec = general_eigen(m, opts.vectors, &label)?;
        (dec.values, dec.vectors, dec.scaling)
    };
    let residuals = match &vectors {
        Some(v) => residuals(g, &values, v),
        None => Vec::new(),
    };
    Ok(Spectrum {
        eigenvalues: values,
        right_eigenvectors: vectors,
        residuals,
        row_scaling,
        generator_fingerprint: g.fingerprint(),
    })
}

/// Spectrum through the general QR path only.
pub fn eigs_qr(g: &Generator, vectors: bool) -> Result<Spectrum> {
    eigs(
        g,
        &EigsOptions {
            vectors,
            fast_path: false,
            ..EigsOptions::default()
        },
    )
}

fn residuals(g: &Generator, values: &[Complex64], v: &CMatrix) -> Vec<f64> {
    let scale = g.norm_inf().max(f64::MIN_POSITIVE);
    values
        .iter()
        .enumerate()
        .map(|(j, &lam)| {
            let col = v.column(j);
            let gv = g.matrix().matvec_complex(&col);
            let r: Vec<Complex64> = gv.iter().zip(&col).map(|(a, b)| a - lam * b).collect();
            cnorm2(&r) / (scale * cnorm2(&col).max(f64::MIN_POSITIVE))
        })
        .collect()
}

type Decomposition = (Vec<Complex64>, Option<CMatrix>, Vec<f64>);

fn tridiagonal_fast_path(g: &Generator, want_vectors: bool) -> Option<Result<Decomposition>> {
    let n = g.size();
    if n < 2 || g.offsets().iter().any(|o| o.abs() > 1) {
        return None;
    }
    let m = g.matrix();
    let sub: Vec<f64> = (0..n - 1).map(|i| m[(i + 1, i)]).collect();
    let sup: Vec<f64> = (0..n - 1).map(|i| m[(i, i + 1)]).collect();
    let diag: Vec<f64> = (0..n).map(|i| m[(i, i)]).collect();
    let products: Vec<f64> = sub.iter().zip(&sup).map(|(b, c)| b * c).collect();
    let oscillatory = if products.iter().all(|&p| p > 0.0) {
        false
    } else if products.iter().all(|&p| p < 0.0) && diag.iter().all(|&a| a == 0.0) {
        true
    } else {
        return None;
    };

    // log of the similarity scaling d_n
    let mut log_d = vec![0.0; n];
    for i in 0..n - 1 {
        log_d[i + 1] = log_d[i] + 0.5 * (sub[i] / sup[i]).abs().ln();
    }
    let off: Vec<f64> = (0..n - 1)
        .map(|i| {
            let mag = products[i].abs().sqrt();
            if oscillatory {
                sup[i].signum() * mag
            } else {
                sub[i].signum() * mag
            }
        })
        .collect();
    let eig = match tridiagonal_eigen(&diag, &off, want_vectors) {
        Ok(e) => e,
        Err(e) => return Some(Err(e)),
    };
    let values: Vec<Complex64> = eig
        .values
        .iter()
        .map(|&mu| {
            if oscillatory {
                Complex64::new(0.0, mu)
            } else {
                Complex64::new(mu, 0.0)
            }
        })
        .collect();
    let top = log_d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let scaling: Vec<f64> = log_d.iter().map(|l| (l - top).exp()).collect();
    let scaling = if scaling.iter().all(|&d| d > 0.0) { scaling } else { Vec::new() };
    let vectors = eig.vectors.map(|w| {
        let mut v = CMatrix::zeros(n, n);
        for j in 0..n {
            for i in 0..n {
                let phase = if oscillatory { i_pow(i as i64) } else { Complex64::new(1.0, 0.0) };
                v[(i, j)] = phase * ((log_d[i] - top).exp() * w[(i, j)]);
            }
            let nrm = cnorm2(&v.column(j));
            if nrm > 0.0 {
                for i in 0..n {
                    v[(i, j)] /= nrm;
                }
            }
        }
        v
    });
    Some(Ok((values, vectors, scaling)))
}

/// Regime from the sign of `t_L·t_R`. Exceptional chains are additionally
/// checked to have an all-zero spectrum.
pub fn classify_regime(chain: &HNParams) -> Regime {
    let regime = chain.regime();
    if regime == Regime::Exceptional {
        let spec = eigs(&build_generator_hn(chain), &EigsOptions::default());
        let tol = 1e-8 * chain.t_l.abs().max(chain.t_r.abs());
        debug_assert!(spec.map(|s| s.eigenvalues.iter().all(|z| z.norm() <= tol)).unwrap_or(false));
    }
    regime
}

/// Exact zero modes of an open chain.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StationaryModes {
    /// `G·ψ = 0`, odd-site support, `ψ_1 = 1`.
    pub right_kernel: Option<Vec<f64>>,
    /// `wᵀ·G = 0`, odd-site support, `w_1 = 1`.
    pub left_kernel: Option<Vec<f64>>,
}

/// Kernel vectors of the chain generator. They exist only for odd `L`.
pub fn stationary_modes(chain: &HNParams) -> Result<StationaryModes> {
    chain.validate()?;
    if chain.t_l == 0.0 {
        return Err(Error::param("t_L", "must be nonzero for the kernel recursion"));
    }
    if chain.l.is_multiple_of(2) {
        return Ok(StationaryModes {
            right_kernel: None,
            left_kernel: None,
        });
    }
    let kernel = |step: f64| -> Result<Vec<f64>> {
        let mut v = vec![0.0; chain.l];
        v[0] = 1.0;
        for k in (2..chain.l).step_by(2) {
            v[k] = step * v[k - 2];
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::Overflow {
                context: "stationary_modes",
                detail: format!("kernel amplitude overflows for t_L={}, t_R={}, L={}", chain.t_l, chain.t_r, chain.l),
            });
        }
        Ok(v)
    };
    let right = kernel(-chain.t_r / chain.t_l)?;
    let left = if chain.t_r != 0.0 {
        Some(kernel(-chain.t_l / chain.t_r)?)
    } else {
        None
    };
    Ok(StationaryModes {
        right_kernel: Some(right),
        left_kernel: left,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Localization {
    /// `Σ n|v_n|² / Σ |v_n|²` with sites n = 1..L.
    pub center_of_mass: f64,
    /// Slope of the least-squares line through `ln|v_n|`; positive means the
    /// vector grows toward `n = L`.
    pub decay_rate: f64,
}

/// Center of mass and log-envelope slope of every eigenvector. Entries below
/// `1e-12` of the column maximum (numerical zeros) are left out of the fit.
pub fn localization_metrics(spec: &Spectrum) -> Result<Vec<Localization>> {
    let v = spec
        .right_eigenvectors
        .as_ref()
        .ok_or_else(|| Error::param("spectrum", "eigenvectors were not computed"))?;
    (0..v.cols())
        .map(|j| {
            let col = v.column(j);
            let w: Vec<f64> = col.iter().map(|z| z.norm_sqr()).collect();
            let total: f64 = w.iter().sum();
            if total == 0.0 || !total.is_finite() {
                return Err(Error::param("eigenvector", format!("column {j} has zero or non-finite norm")));
            }
            let center = w.iter().enumerate().map(|(i, wi)| (i + 1) as f64 * wi).sum::<f64>() / total;
            let peak = col.iter().fold(0.0f64, |m, z| m.max(z.norm()));
            let (mut design, mut y) = (Vec::new(), Vec::new());
            for (i, z) in col.iter().enumerate() {
                if z.norm() > 1e-12 * peak {
                    design.push(vec![(i + 1) as f64, 1.0]);
                    y.push(z.norm().ln());
                }
            }
            let decay_rate = if design.len() >= 2 {
                least_squares(&design, &y).map(|c| c[0]).unwrap_or(0.0)
            } else {
                0.0
            };
            Ok(Localization {
                center_of_mass: center,
                decay_rate,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DoubletGap {
    /// The two energies (`Im λ`) adjacent to the ground energy, ascending.
    pub energies: [f64; 2],
    pub splitting: f64,
    /// `E0 = -2√(J²-Δ²)·cos(π/(L+1))`, the ground branch at μ = 0.
    pub ground_energy: f64,
}

/// Lowest unperturbed energy `-2√(J²-Δ²)·cos(π/(L+1))`.
pub fn ground_energy(params: &ModelParams) -> f64 {
    let l = params.l as f64;
    -2.0 * (params.j * params.j - params.delta * params.delta).sqrt() * (std::f64::consts::PI / (l + 1.0)).cos()
}

/// Splitting of the μ = 0 ground doublet from exact diagonalization of the
/// coupled generator. Energies are `Im λ`; the ground branch is the most
/// negative one.
pub fn doublet_gap(params: &ModelParams) -> Result<DoubletGap> {
    params.validate()?;
    if params.delta >= params.j {
        return Err(Error::regime(
            "doublet_gap",
            format!("needs Delta < J (oscillatory), got Delta={} J={}", params.delta, params.j),
        ));
    }
    if params.mu < 0.0 {
        return Err(Error::param("mu", format!("must be >= 0, got {}", params.mu)));
    }
    let g = build_generator_coupled(params)?;
    let spec = eigs(&g, &EigsOptions::default())?;
    let radius = spec.spectral_radius();
    let max_real = spec.eigenvalues.iter().fold(0.0f64, |m, z| m.max(z.re.abs()));
    if max_real > 1e-8 * radius.max(f64::MIN_POSITIVE) {
        return Err(Error::NotImaginary { max_real });
    }
    if params.mu != 0.0 {
        let predicted = perturbation::gap_prediction(params)?;
        let floor = 1e-10 * radius;
        if predicted < floor {
            return Err(Error::Unresolvable { predicted, floor });
        }
    }
    let e0 = ground_energy(params);
    let mut energies: Vec<f64> = spec.eigenvalues.iter().map(|z| z.im).collect();
    energies.sort_by(|a, b| (a - e0).abs().total_cmp(&(b - e0).abs()));
    let mut pair = [energies[0], energies[1]];
    pair.sort_by(f64::total_cmp);
    Ok(DoubletGap {
        energies: pair,
        splitting: pair[1] - pair[0],
        ground_energy: e0,
    })
}

/// Nearest-neighbour matching of eigenvalues between consecutive parameter
/// values: entry `k` is the index in `next` continuing `prev[k]`.
pub fn track_eigenvalues(prev: &[Complex64], next: &[Complex64]) -> Vec<usize> {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(prev.len() * next.len());
    for (i, a) in prev.iter().enumerate() {
        for (j, b) in next.iter().enumerate() {
            pairs.push(((a - b).norm(), i, j));
        }
    }
    pairs.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut assigned = vec![usize::MAX; prev.len()];
    let mut taken = vec![false; next.len()];
    for (_, i, j) in pairs {
        if assigned[i] == usize::MAX && !taken[j] {
            assigned[i] = j;
            taken[j] = true;
        }
    }
    assigned
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;
    use std::f64::consts::PI;

    fn sorted_re(s: &Spectrum) -> Vec<f64> {
        let mut v: Vec<f64> = s.eigenvalues.iter().map(|z| z.re).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    #[test]
    fn diagonal_matrix() {
        let g = Generator::from_matrix(Matrix::from_diagonal(&[1.0, 2.0, 3.0]));
        assert_eq!(sorted_re(&eigs(&g, &EigsOptions::default()).unwrap()), vec![1.0, 2.0, 3.0]);
        let s = eigs_qr(&g, true).unwrap();
        assert_eq!(sorted_re(&s), vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn hn_closed_form_small() {
        let g = build_generator_hn(&HNParams::new(2.0, 1.0, 5));
        let got = sorted_re(&eigs(&g, &EigsOptions::default()).unwrap());
        let want = [-(6f64.sqrt()), -(2f64.sqrt()), 0.0, 2f64.sqrt(), 6f64.sqrt()];
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-13, "{got:?}");
        }
        let got = sorted_re(&eigs_qr(&g, false).unwrap());
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn oscillatory_fast_path_vectors() {
        let chain = HNParams::new(0.8, -1.2, 30);
        let g = build_generator_hn(&chain);
        let s = eigs(&g, &EigsOptions::with_vectors()).unwrap();
        let bound = 2.0 * chain.scale();
        for z in &s.eigenvalues {
            assert_eq!(z.re, 0.0);
            assert!(z.im.abs() <= bound);
        }
        assert!(s.residuals.iter().all(|&r| r < 1e-12), "{:?}", s.residuals);
        let q = eigs_qr(&g, true).unwrap();
        assert!(q.residuals.iter().all(|&r| r < 1e-10));
    }

    #[test]
    fn exceptional_chain_is_nilpotent() {
        let chain = HNParams::new(0.0, 2.0, 6);
        assert_eq!(classify_regime(&chain), Regime::Exceptional);
        let g = build_generator_hn(&chain);
        let mut p = g.matrix().clone();
        for _ in 1..6 {
            p = p.matmul(g.matrix());
        }
        assert_eq!(p.max_abs(), 0.0);
        let s = eigs(&g, &EigsOptions::default()).unwrap();
        assert!(s.eigenvalues.iter().all(|z| z.norm() == 0.0));
        assert_eq!(classify_regime(&HNParams::new(1.0, -1.0, 4)), Regime::Oscillatory);
        assert_eq!(classify_regime(&HNParams::new(2.0, 1.0, 4)), Regime::Diffusive);
    }

    #[test]
    fn kernel_odd_and_even() {
        let chain = HNParams::new(1.0, 1.15f64.powi(2), 51);
        let modes = stationary_modes(&chain).unwrap();
        let psi = modes.right_kernel.unwrap();
        let g = build_generator_hn(&chain);
        let r = crate::linalg::norm2(&g.apply(&psi));
        assert!(r / (g.matrix().norm_frobenius() * crate::linalg::norm2(&psi)) < 1e-12);
        for k in (1..51).step_by(2) {
            assert_eq!(psi[k], 0.0);
        }
        let w = modes.left_kernel.unwrap();
        let wg = g.matrix().transpose().matvec(&w);
        assert!(crate::linalg::norm2(&wg) / crate::linalg::norm2(&w) < 1e-12);

        let even = stationary_modes(&HNParams::new(1.0, 1.3, 50)).unwrap();
        assert!(even.right_kernel.is_none() && even.left_kernel.is_none());
        assert!(stationary_modes(&HNParams::new(0.0, 1.0, 5)).is_err());
    }

    #[test]
    fn symmetric_chain_is_delocalized() {
        let g = build_generator_hn(&HNParams::new(1.0, -1.0, 40));
        let s = eigs(&g, &EigsOptions::with_vectors()).unwrap();
        let loc = localization_metrics(&s).unwrap();
        for l in &loc {
            assert!(l.decay_rate.abs() < 1e-6, "{}", l.decay_rate);
        }
        let (lo, hi) = loc.iter().fold((f64::MAX, f64::MIN), |(a, b), l| (a.min(l.center_of_mass), b.max(l.center_of_mass)));
        assert!(lo < 20.6 && hi > 20.4);
        let no_vec = eigs(&g, &EigsOptions::default()).unwrap();
        assert!(localization_metrics(&no_vec).is_err());
    }

    #[test]
    fn doublet_gap_basic() {
        let p = ModelParams::reduced(1.0, 0.0, 0.01, 20);
        let gap = doublet_gap(&p).unwrap();
        assert!((gap.splitting - 0.02).abs() < 1e-12, "{}", gap.splitting);
        let p0 = ModelParams::reduced(1.0, 0.2, 0.0, 20);
        assert!(doublet_gap(&p0).unwrap().splitting < 1e-12);
        assert!(matches!(
            doublet_gap(&ModelParams::reduced(1.0, 1.2, 0.1, 10)),
            Err(Error::WrongRegime { .. })
        ));
        assert!(matches!(
            doublet_gap(&ModelParams::reduced(1.0, 0.2, 1e-14, 10)),
            Err(Error::Unresolvable { .. })
        ));
        let e0 = ground_energy(&p0);
        assert!((e0 + 2.0 * 0.96f64.sqrt() * (PI / 21.0).cos()).abs() < 1e-15);
    }

    #[test]
    fn tracking_follows_nearest() {
        let a = [Complex64::new(0.0, 1.0), Complex64::new(0.0, -1.0)];
        let b = [Complex64::new(0.0, -1.1), Complex64::new(0.0, 1.05)];
        assert_eq!(track_eigenvalues(&a, &b), vec![1, 0]);
    }
}
