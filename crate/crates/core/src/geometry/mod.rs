//! Hyperbolic side of the lattice–geometry correspondence: metric weights,
//! curved inner products and discretized curved-space operators on the
//! funnel coordinate `s`, plus Bethe-lattice trees (see [`tree`]).

pub mod tree;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::model::{build_generator_hn, continuum_coefficients, curvature, Band, Generator, HNParams, Regime};
use crate::spectral::{eigs, EigsOptions};

pub use tree::{build_tree, evolve_tree, reduce_tree, tree_chain, TreeGraph, TreeMethod};

/// Which chain end is the localization edge, where `√g = 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    /// `√g_n = e^{√κ(L-n)d}`; operators carry `∂² - √κ∂`.
    Right,
    /// `√g_n = e^{√κ(n-1)d}`; operators carry `∂² + √κ∂`.
    Left,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperbolicMetric {
    pub kappa: f64,
    pub d: f64,
    #[serde(rename = "L")]
    pub l: usize,
    pub orientation: Orientation,
}

impl HyperbolicMetric {
    /// Metric whose curvature and orientation match a non-exceptional chain:
    /// `κ = ln²|t_R/t_L| / d²`, oriented toward the edge its modes grow to.
    pub fn for_chain(chain: &HNParams) -> Result<Self> {
        chain.validate()?;
        Ok(Self {
            kappa: curvature(chain)?,
            d: chain.d,
            l: chain.l,
            orientation: if chain.vector_potential() >= 0.0 {
                Orientation::Right
            } else {
                Orientation::Left
            },
        })
    }

    fn validate(&self) -> Result<()> {
        if !(self.kappa >= 0.0 && self.kappa.is_finite()) {
            return Err(Error::param("kappa", format!("must be finite and >= 0, got {}", self.kappa)));
        }
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(Error::param("d", format!("must be > 0, got {}", self.d)));
        }
        if self.l < 1 {
            return Err(Error::param("L", "must be >= 1"));
        }
        Ok(())
    }

    /// `d ln√g / ds`.
    pub fn log_slope(&self) -> f64 {
        match self.orientation {
            Orientation::Right => -self.kappa.sqrt(),
            Orientation::Left => self.kappa.sqrt(),
        }
    }
}

/// `√g_n` at sites n = 1..L, equal to 1 at the localization edge.
pub fn metric_weights(metric: &HyperbolicMetric) -> Result<Vec<f64>> {
    metric.validate()?;
    let r = metric.kappa.sqrt() * metric.d;
    Ok((1..=metric.l)
        .map(|n| match metric.orientation {
            Orientation::Right => (r * (metric.l - n) as f64).exp(),
            Orientation::Left => (r * (n - 1) as f64).exp(),
        })
        .collect())
}

/// Layer sizes `q^(n-1)` of a tree, the discrete `√g`.
pub fn tree_layer_weights(tree: &TreeGraph) -> Vec<f64> {
    (1..=tree.layers()).map(|n| tree.layer_size(n) as f64).collect()
}

/// `Σ √g_n · conj(a_n) · b_n`.
pub fn curved_inner_product(a: &[Complex64], b: &[Complex64], weights: &[f64]) -> Result<Complex64> {
    if a.len() != b.len() || a.len() != weights.len() {
        return Err(Error::LengthMismatch {
            what: "fields and metric weights",
            expected: weights.len(),
            got: if a.len() != weights.len() { a.len() } else { b.len() },
        });
    }
    Ok(a.iter().zip(b).zip(weights).map(|((x, y), w)| x.conj() * y * *w).sum())
}

/// `Γ - ħ²κ/(8m)`.
pub fn schrodinger_constant(kappa: f64, mass: f64, gamma: f64, hbar: f64) -> f64 {
    gamma - hbar * hbar * kappa / (8.0 * mass)
}

/// `γ = -Γ + κD/4`.
pub fn diffusion_constant(kappa: f64, diffusion: f64, gamma: f64) -> f64 {
    -gamma + kappa * diffusion / 4.0
}

/// `c·(∂² + (d ln√g/ds)∂) + shift` with central differences and Dirichlet
/// ends.
fn curved_laplacian(metric: &HyperbolicMetric, c: f64, shift: f64) -> Result<Matrix> {
    metric.validate()?;
    if metric.l < 3 {
        return Err(Error::param("L", format!("curved operators need L >= 3, got {}", metric.l)));
    }
    let (l, d) = (metric.l, metric.d);
    let slope = metric.log_slope();
    let lower = c * (1.0 / (d * d) - slope / (2.0 * d));
    let upper = c * (1.0 / (d * d) + slope / (2.0 * d));
    let mut m = Matrix::zeros(l, l);
    for i in 0..l {
        m[(i, i)] = -2.0 * c / (d * d) + shift;
        if i > 0 {
            m[(i, i - 1)] = lower;
        }
        if i + 1 < l {
            m[(i, i + 1)] = upper;
        }
    }
    Ok(m)
}

/// Discretized `H = -(ħ²/2m)(∂² + (d ln√g/ds)∂) + Γ - ħ²κ/(8m)` at `k_x = 0`.
pub fn curved_schrodinger_hamiltonian(metric: &HyperbolicMetric, mass: f64, gamma: f64, hbar: f64) -> Result<Matrix> {
    if !(mass.is_finite() && mass != 0.0) {
        return Err(Error::param("m", format!("mass must be finite and nonzero, got {mass}")));
    }
    let c = -hbar * hbar / (2.0 * mass);
    curved_laplacian(metric, c, schrodinger_constant(metric.kappa, mass, gamma, hbar))
}

/// Real generator of `∂_τ φ = -iHφ` acting on `(Re φ, Im φ)`:
/// `[[0, H], [-H, 0]]`.
pub fn build_curved_schrodinger_operator(metric: &HyperbolicMetric, mass: f64, gamma: f64, hbar: f64) -> Result<Generator> {
    let h = curved_schrodinger_hamiltonian(metric, mass, gamma, hbar)?;
    let l = metric.l;
    let mut g = Matrix::zeros(2 * l, 2 * l);
    for i in 0..l {
        for j in i.saturating_sub(1)..(i + 2).min(l) {
            g[(i, l + j)] = h[(i, j)];
            g[(l + i, j)] = -h[(i, j)];
        }
    }
    let l = l as isize;
    Generator::new(g, vec![-l - 1, -l, -l + 1, l - 1, l, l + 1])
}

/// Discretized `D(∂² + (d ln√g/ds)∂) - Γ + κD/4`.
pub fn build_curved_diffusion_operator(metric: &HyperbolicMetric, diffusion: f64, gamma: f64) -> Result<Generator> {
    if !diffusion.is_finite() {
        return Err(Error::param("D", "must be finite"));
    }
    let m = curved_laplacian(metric, diffusion, diffusion_constant(metric.kappa, diffusion, gamma))?;
    Generator::new(m, vec![-1, 0, 1])
}

/// Same continuum chain on a grid refined `level` times: `d -> d/2^level`,
/// `L -> (L+1)·2^level - 1`, keeping `(L+1)·d`, `A` and the continuum mass or
/// diffusion constant fixed (`√|t_L t_R|` scales as `1/d²`).
pub fn refine_chain(chain: &HNParams, level: u32) -> HNParams {
    let f = 2f64.powi(level as i32);
    let d = chain.d / f;
    let sq = chain.scale() * f * f;
    let a = chain.vector_potential();
    HNParams {
        t_l: chain.t_l.signum() * sq * (-a * d).exp(),
        t_r: chain.t_r.signum() * sq * (a * d).exp(),
        l: (chain.l + 1) * (1usize << level) - 1,
        d,
        hbar: chain.hbar,
    }
}

/// Band-edge eigenvalue of a chain next to that of its curved operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EdgeComparison {
    #[serde(rename = "L")]
    pub l: usize,
    pub d: f64,
    /// Energy `E = i·λ` (oscillatory) or rate `λ` (diffusive) at the edge.
    pub lattice: f64,
    pub curved: f64,
    pub error: f64,
    /// Diagonal constant `Γ - ħ²κ/(8m)` or `γ = -Γ + κD/4`.
    pub constant: f64,
}

fn extreme(values: impl Iterator<Item = f64>, top: bool) -> f64 {
    if top {
        values.fold(f64::NEG_INFINITY, f64::max)
    } else {
        values.fold(f64::INFINITY, f64::min)
    }
}

/// Compares the band edge of `chain` with the matching curved operator built
/// from its continuum coefficients.
pub fn band_edge_comparison(chain: &HNParams, band: Band) -> Result<EdgeComparison> {
    let coeffs = continuum_coefficients(chain, band)?;
    let metric = HyperbolicMetric::for_chain(chain)?;
    let top = band == Band::Top;
    let lat = eigs(&build_generator_hn(chain), &EigsOptions::default())?;
    let (lattice, curved_op, constant) = match chain.regime() {
        Regime::Oscillatory => {
            let mass = coeffs.mass.expect("oscillatory coefficients carry a mass");
            let h = curved_schrodinger_hamiltonian(&metric, mass, coeffs.reaction, chain.hbar)?;
            (
                extreme(lat.eigenvalues.iter().map(|z| -z.im), top),
                Generator::from_matrix(h),
                schrodinger_constant(metric.kappa, mass, coeffs.reaction, chain.hbar),
            )
        }
        _ => {
            let dcoef = coeffs.diffusion.expect("diffusive coefficients carry D");
            (
                extreme(lat.eigenvalues.iter().map(|z| z.re), top),
                build_curved_diffusion_operator(&metric, dcoef, coeffs.reaction)?,
                diffusion_constant(metric.kappa, dcoef, coeffs.reaction),
            )
        }
    };
    let cur = eigs(&curved_op, &EigsOptions::default())?;
    let curved = extreme(cur.eigenvalues.iter().map(|z| z.re), top);
    Ok(EdgeComparison {
        l: chain.l,
        d: chain.d,
        lattice,
        curved,
        error: (curved - lattice).abs(),
        constant,
    })
}

/// [`band_edge_comparison`] on `chain` and `levels` successive refinements.
pub fn convergence_study(chain: &HNParams, band: Band, levels: u32) -> Result<Vec<EdgeComparison>> {
    (0..=levels).map(|k| band_edge_comparison(&refine_chain(chain, k), band)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_generator_hn, continuum_coefficients, Band};
    use crate::spectral::{eigs, EigsOptions};

    fn metric(kappa: f64, l: usize, orientation: Orientation) -> HyperbolicMetric {
        HyperbolicMetric {
            kappa,
            d: 1.0,
            l,
            orientation,
        }
    }

    #[test]
    fn weights() {
        assert_eq!(metric_weights(&metric(0.0, 5, Orientation::Right)).unwrap(), vec![1.0; 5]);
        let k = 1.5f64.ln().powi(2);
        let w = metric_weights(&metric(k, 6, Orientation::Left)).unwrap();
        for p in w.windows(2) {
            assert!((p[1] / p[0] - 1.5).abs() < 1e-14);
        }
        let w = metric_weights(&metric(k, 6, Orientation::Right)).unwrap();
        assert_eq!(w[5], 1.0);
        assert!((w[0] / w[1] - 1.5).abs() < 1e-14);
        assert!(metric_weights(&metric(-1.0, 6, Orientation::Left)).is_err());
    }

    #[test]
    fn inner_product() {
        let a = [Complex64::new(1.0, 1.0), Complex64::new(0.0, 2.0)];
        let b = [Complex64::new(2.0, 0.0), Complex64::new(1.0, 0.0)];
        assert_eq!(
            curved_inner_product(&a, &b, &[1.0, 1.0]).unwrap(),
            Complex64::new(2.0, -4.0)
        );
        assert_eq!(
            curved_inner_product(&a, &b, &[1.0, 3.0]).unwrap(),
            Complex64::new(2.0, -8.0)
        );
        assert!(curved_inner_product(&a, &b, &[1.0]).is_err());
    }

    #[test]
    fn hn_eigenvectors_orthonormal_under_natural_weights() {
        let chain = HNParams::new(2.0, 1.0, 12);
        let s = eigs(&build_generator_hn(&chain), &EigsOptions::with_vectors()).unwrap();
        let v = s.right_eigenvectors.unwrap();
        let w = chain.natural_weights();
        let cols: Vec<Vec<Complex64>> = (0..12).map(|j| v.column(j)).collect();
        for i in 0..12 {
            let nii = curved_inner_product(&cols[i], &cols[i], &w).unwrap().re.sqrt();
            for j in 0..12 {
                let njj = curved_inner_product(&cols[j], &cols[j], &w).unwrap().re.sqrt();
                let ip = curved_inner_product(&cols[i], &cols[j], &w).unwrap() / (nii * njj);
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((ip.norm() - want).abs() < 1e-10, "{i} {j} {ip}");
            }
        }
    }

    #[test]
    fn flat_schrodinger_is_plain_laplacian() {
        let h = curved_schrodinger_hamiltonian(&metric(0.0, 5, Orientation::Right), 0.5, 0.25, 1.0).unwrap();
        assert_eq!(h[(2, 2)], 2.25);
        assert_eq!(h[(2, 1)], -1.0);
        assert_eq!(h[(2, 3)], -1.0);
        let g = build_curved_schrodinger_operator(&metric(0.0, 5, Orientation::Right), 0.5, 0.25, 1.0).unwrap();
        assert_eq!(g.size(), 10);
        assert_eq!(g.matrix()[(2, 7)], 2.25);
        assert_eq!(g.matrix()[(7, 2)], -2.25);
    }

    #[test]
    fn constants_match_continuum_coefficients() {
        // i-gauged oscillatory chain with t_L = 0.8
        let chain = HNParams::new(0.8, -1.2, 40);
        let c = continuum_coefficients(&chain, Band::Bottom).unwrap();
        let m = HyperbolicMetric::for_chain(&chain).unwrap();
        let mass = c.mass.unwrap();
        let h = curved_schrodinger_hamiltonian(&m, mass, c.reaction, 1.0).unwrap();
        let a = chain.vector_potential();
        let want = c.reaction - a * a / (2.0 * mass);
        let diag = h[(5, 5)] - 2.0 / (2.0 * mass);
        assert!((diag - want).abs() < 1e-12 * want.abs(), "{diag} {want}");
        assert_eq!(schrodinger_constant(m.kappa, mass, c.reaction, 1.0), c.reaction - m.kappa / (8.0 * mass));

        let diff = HNParams::new(-1.0, -1.5, 30);
        let c = continuum_coefficients(&diff, Band::Top).unwrap();
        let m = HyperbolicMetric::for_chain(&diff).unwrap();
        assert_eq!(diffusion_constant(m.kappa, c.diffusion.unwrap(), c.reaction), c.gain.unwrap());
    }

    #[test]
    fn flat_diffusion_conserves_mass_in_bulk() {
        let g = build_curved_diffusion_operator(&metric(0.0, 8, Orientation::Left), 0.7, 0.0).unwrap();
        let m = g.matrix();
        for i in 1..7 {
            let s: f64 = (0..8).map(|j| m[(i, j)]).sum();
            assert!(s.abs() < 1e-15);
        }
    }

    #[test]
    fn lattice_band_bottom_converges_quadratically() {
        // ħ = m = 1, A = 0.3, (L+1)d = 8
        let (a, d) = (0.3, 0.5);
        let t = 1.0 / (2.0 * d * d);
        let chain = HNParams {
            d,
            ..HNParams::new(t * (-a * d).exp(), -t * (a * d).exp(), 15)
        };
        let rows = convergence_study(&chain, Band::Bottom, 2).unwrap();
        assert_eq!(rows[2].l, 63);
        assert!((rows[2].d - 0.125).abs() < 1e-15);
        for w in rows.windows(2) {
            let r = w[0].error / w[1].error;
            assert!((3.4..4.6).contains(&r), "{r}");
        }
        let diff = HNParams::new(-1.0, -1.3, 15);
        let rows = convergence_study(&diff, Band::Top, 2).unwrap();
        for w in rows.windows(2) {
            let r = w[0].error / w[1].error;
            assert!((3.4..4.6).contains(&r), "{r}");
        }
    }

    #[test]
    fn refinement_keeps_continuum_constants() {
        let chain = HNParams::new(0.8, -1.2, 20);
        let fine = refine_chain(&chain, 2);
        assert!((fine.vector_potential() - chain.vector_potential()).abs() < 1e-14);
        let m0 = continuum_coefficients(&chain, Band::Bottom).unwrap().mass.unwrap();
        let m2 = continuum_coefficients(&fine, Band::Bottom).unwrap().mass.unwrap();
        assert!((m0 - m2).abs() < 1e-14 * m0);
        assert_eq!((fine.l + 1) as f64 * fine.d, 21.0);
    }
}
