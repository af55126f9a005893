//! Model parameters, gauge reduction, Hatano–Nelson chains and the lattice
//! evolution generators.
//!
//! Every generator in this crate uses the convention `d/dτ state = G·state`.
//! A chain with hoppings `(t_L, t_R)` therefore has `G[n][n-1] = -t_R` and
//! `G[n][n+1] = -t_L`.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

fn one() -> f64 {
    1.0
}

fn half_pi() -> f64 {
    FRAC_PI_2
}

/// Physical parameters of the bosonic Kitaev chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(default = "half_pi")]
    pub theta: f64,
    #[serde(rename = "Delta")]
    pub delta: f64,
    #[serde(default = "half_pi")]
    pub phi: f64,
    #[serde(default)]
    pub mu: f64,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(default = "one")]
    pub d: f64,
    #[serde(default = "one")]
    pub hbar: f64,
}

impl ModelParams {
    /// Parameters already in the reduced gauge (`θ = φ = π/2`, `d = ħ = 1`).
    pub fn reduced(j: f64, delta: f64, mu: f64, l: usize) -> Self {
        Self {
            j,
            theta: FRAC_PI_2,
            delta,
            phi: FRAC_PI_2,
            mu,
            l,
            d: 1.0,
            hbar: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("J", self.j),
            ("theta", self.theta),
            ("Delta", self.delta),
            ("phi", self.phi),
            ("mu", self.mu),
            ("d", self.d),
            ("hbar", self.hbar),
        ] {
            if !v.is_finite() {
                return Err(Error::param(name, format!("must be finite, got {v}")));
            }
        }
        if self.j < 0.0 {
            return Err(Error::param("J", format!("must be >= 0, got {}", self.j)));
        }
        if self.delta < 0.0 {
            return Err(Error::param("Delta", format!("must be >= 0, got {}", self.delta)));
        }
        if self.l < 2 {
            return Err(Error::param("L", format!("must be >= 2, got {}", self.l)));
        }
        if self.d <= 0.0 {
            return Err(Error::param("d", format!("must be > 0, got {}", self.d)));
        }
        if self.hbar <= 0.0 {
            return Err(Error::param("hbar", format!("must be > 0, got {}", self.hbar)));
        }
        Ok(())
    }

    fn is_reduced(&self) -> bool {
        (self.theta - FRAC_PI_2).abs() <= 1e-12
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GaugeRegime {
    Trivial,
    Nontrivial,
    Boundary,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaugeReduction {
    pub regime: GaugeRegime,
    pub reduced: ModelParams,
    /// The pairing phase before it was gauged to π/2.
    pub original_phi: f64,
}

/// Maps general `(J, θ, Δ, φ)` onto the `θ = φ = π/2` gauge.
///
/// In the nontrivial regime `Δ > J|cos θ|` the result has
/// `Δ' = √(Δ² − J²cos²θ)` and `J' = J sin θ`. The boundary `Δ = J|cos θ|`
/// (relative tolerance 1e-12) is tagged separately but reduced by the same
/// formulas. Trivial parameters are returned untouched.
pub fn reduce_gauge(params: &ModelParams) -> GaugeReduction {
    // exact zero at θ = π/2 keeps the map idempotent
    let cos = if params.theta == FRAC_PI_2 {
        0.0
    } else {
        params.theta.cos().abs()
    };
    let sin = if params.theta == FRAC_PI_2 {
        1.0
    } else {
        params.theta.sin()
    };
    let threshold = params.j * cos;
    let tol = 1e-12 * params.j.max(params.delta).max(f64::MIN_POSITIVE);
    let regime = if (params.delta - threshold).abs() <= tol {
        GaugeRegime::Boundary
    } else if params.delta > threshold {
        GaugeRegime::Nontrivial
    } else {
        GaugeRegime::Trivial
    };
    let reduced = match regime {
        GaugeRegime::Trivial => *params,
        _ => {
            let jc = params.j * cos;
            ModelParams {
                theta: FRAC_PI_2,
                phi: FRAC_PI_2,
                delta: (params.delta * params.delta - jc * jc).max(0.0).sqrt(),
                j: params.j * sin,
                ..*params
            }
        }
    };
    GaugeReduction {
        regime,
        reduced,
        original_phi: params.phi,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Oscillatory,
    Diffusive,
    Exceptional,
}

/// One Hatano–Nelson chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HNParams {
    #[serde(rename = "t_L")]
    pub t_l: f64,
    #[serde(rename = "t_R")]
    pub t_r: f64,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(default = "one")]
    pub d: f64,
    #[serde(default = "one")]
    pub hbar: f64,
}

impl HNParams {
    pub fn new(t_l: f64, t_r: f64, l: usize) -> Self {
        Self {
            t_l,
            t_r,
            l,
            d: 1.0,
            hbar: 1.0,
        }
    }

    pub fn regime(&self) -> Regime {
        let p = self.t_l * self.t_r;
        if p < 0.0 {
            Regime::Oscillatory
        } else if p > 0.0 {
            Regime::Diffusive
        } else {
            Regime::Exceptional
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.t_l.is_finite() {
            return Err(Error::param("t_L", "must be finite"));
        }
        if !self.t_r.is_finite() {
            return Err(Error::param("t_R", "must be finite"));
        }
        if self.l < 2 {
            return Err(Error::param("L", format!("must be >= 2, got {}", self.l)));
        }
        if !(self.d > 0.0 && self.d.is_finite()) {
            return Err(Error::param("d", format!("must be > 0, got {}", self.d)));
        }
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(Error::param("hbar", format!("must be > 0, got {}", self.hbar)));
        }
        Ok(())
    }

    /// `√|t_L t_R|`, the half-width of the band.
    pub fn scale(&self) -> f64 {
        (self.t_l * self.t_r).abs().sqrt()
    }

    /// `|t_R / t_L|`.
    pub fn ratio(&self) -> f64 {
        (self.t_r / self.t_l).abs()
    }

    /// Real imaginary-vector-potential strength `ln|t_R/t_L| / (2d)`.
    pub fn vector_potential(&self) -> f64 {
        self.ratio().ln() / (2.0 * self.d)
    }

    /// Weights `|t_L/t_R|^(n-1)`, n = 1..L, under which the chain evolves
    /// unitarily (oscillatory) or self-adjointly (diffusive).
    pub fn natural_weights(&self) -> Vec<f64> {
        let lr = (self.t_l / self.t_r).abs().ln();
        (0..self.l).map(|k| (lr * k as f64).exp()).collect()
    }
}

/// Dense real evolution generator with a declared band profile.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    matrix: Matrix,
    offsets: Vec<isize>,
}

impl Generator {
    /// Wraps `matrix`, checking that all nonzero entries lie on `offsets`.
    pub fn new(matrix: Matrix, mut offsets: Vec<isize>) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::LengthMismatch {
                what: "generator columns",
                expected: matrix.rows(),
                got: matrix.cols(),
            });
        }
        offsets.sort_unstable();
        offsets.dedup();
        let n = matrix.rows();
        for i in 0..n {
            for j in 0..n {
                let off = j as isize - i as isize;
                if matrix[(i, j)] != 0.0 && offsets.binary_search(&off).is_err() {
                    return Err(Error::param(
                        "generator",
                        format!("entry ({i}, {j}) lies outside the declared band {offsets:?}"),
                    ));
                }
            }
        }
        Ok(Self { matrix, offsets })
    }

    /// Wraps `matrix`, declaring exactly the diagonals that hold nonzeros.
    pub fn from_matrix(matrix: Matrix) -> Self {
        assert!(matrix.is_square(), "generator must be square");
        let n = matrix.rows();
        let mut offsets = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if matrix[(i, j)] != 0.0 {
                    offsets.push(j as isize - i as isize);
                }
            }
        }
        offsets.sort_unstable();
        offsets.dedup();
        Self { matrix, offsets }
    }

    pub fn size(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn offsets(&self) -> &[isize] {
        &self.offsets
    }

    pub fn norm_inf(&self) -> f64 {
        self.matrix.norm_inf()
    }

    /// `out = G·x`, touching only the declared diagonals.
    pub fn apply_into(&self, x: &[f64], out: &mut [f64]) {
        let n = self.size();
        assert_eq!(x.len(), n);
        assert_eq!(out.len(), n);
        if self.offsets.len() * 4 > n {
            out.copy_from_slice(&self.matrix.matvec(x));
            return;
        }
        out.iter_mut().for_each(|v| *v = 0.0);
        for &k in &self.offsets {
            let (lo, hi) = if k >= 0 {
                (0, n.saturating_sub(k as usize))
            } else {
                ((-k) as usize, n)
            };
            for i in lo..hi {
                let j = (i as isize + k) as usize;
                out[i] += self.matrix[(i, j)] * x[j];
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.apply_into(x, &mut out);
        out
    }

    /// Hex SHA-256 of the size and the little-endian entries.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.size() as u64).to_le_bytes());
        for v in self.matrix.as_slice() {
            h.update(v.to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Block-diagonal `a ⊕ b`.
    pub fn direct_sum(a: &Generator, b: &Generator) -> Generator {
        let (na, nb) = (a.size(), b.size());
        let mut m = Matrix::zeros(na + nb, na + nb);
        for i in 0..na {
            for j in 0..na {
                m[(i, j)] = a.matrix[(i, j)];
            }
        }
        for i in 0..nb {
            for j in 0..nb {
                m[(na + i, na + j)] = b.matrix[(i, j)];
            }
        }
        let mut offsets: Vec<isize> = a.offsets.iter().chain(&b.offsets).copied().collect();
        offsets.sort_unstable();
        offsets.dedup();
        Generator { matrix: m, offsets }
    }
}

/// The X and P chains of reduced parameters.
///
/// X: `Ẋ_n = (J+Δ)X_{n-1} + (Δ-J)X_{n+1}`, P: `Ṗ_n = (J-Δ)P_{n-1} - (J+Δ)P_{n+1}`.
pub fn hn_chains(params: &ModelParams) -> Result<(HNParams, HNParams)> {
    params.validate()?;
    if !params.is_reduced() {
        return Err(Error::param(
            "theta",
            format!("must be pi/2 (reduce the gauge first), got {}", params.theta),
        ));
    }
    let (j, dl) = (params.j, params.delta);
    let mk = |t_l: f64, t_r: f64| HNParams {
        t_l,
        t_r,
        l: params.l,
        d: params.d,
        hbar: params.hbar,
    };
    Ok((mk(j - dl, -(j + dl)), mk(j + dl, dl - j)))
}

pub fn build_generator_hn(chain: &HNParams) -> Generator {
    let n = chain.l;
    let mut m = Matrix::zeros(n, n);
    for i in 0..n {
        if i > 0 {
            m[(i, i - 1)] = -chain.t_r;
        }
        if i + 1 < n {
            m[(i, i + 1)] = -chain.t_l;
        }
    }
    Generator {
        matrix: m,
        offsets: vec![-1, 1],
    }
}

/// Coupled X⊕P generator, layout `(X_1..X_L, P_1..P_L)`, with
/// `Ẋ_n += μ P_n` and `Ṗ_n -= μ X_n`.
pub fn build_generator_coupled(params: &ModelParams) -> Result<Generator> {
    let (x, p) = hn_chains(params)?;
    let l = params.l;
    let mut g = Generator::direct_sum(&build_generator_hn(&x), &build_generator_hn(&p));
    for n in 0..l {
        g.matrix[(n, l + n)] = params.mu;
        g.matrix[(l + n, n)] = -params.mu;
    }
    g.offsets = vec![-(l as isize), -1, 1, l as isize];
    Ok(g)
}

/// Site-wise gauge factors, sites numbered `n = 1..L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Gauge {
    /// `i^n`
    IPow,
    /// `(-i)^n`
    MinusIPow,
    /// `r^n`, r > 0
    Tilt(f64),
    /// `e^{iK·nd}` for a complex wavevector `k` and spacing `d`
    Carrier { k: Complex64, d: f64 },
}

impl Gauge {
    pub fn inverse(&self) -> Gauge {
        match *self {
            Gauge::IPow => Gauge::MinusIPow,
            Gauge::MinusIPow => Gauge::IPow,
            Gauge::Tilt(r) => Gauge::Tilt(1.0 / r),
            Gauge::Carrier { k, d } => Gauge::Carrier { k: -k, d },
        }
    }

    /// Factor at site `n` (1-based).
    pub fn factor(&self, n: usize) -> Complex64 {
        let i = Complex64::new(0.0, 1.0);
        match *self {
            Gauge::IPow => i_pow(n as i64),
            Gauge::MinusIPow => i_pow(-(n as i64)),
            Gauge::Tilt(r) => Complex64::new((n as f64 * r.ln()).exp(), 0.0),
            Gauge::Carrier { k, d } => (i * k * (n as f64 * d)).exp(),
        }
    }
}

/// Exact `i^k`.
pub fn i_pow(k: i64) -> Complex64 {
    match k.rem_euclid(4) {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

pub fn gauge_transform(field: &[Complex64], gauge: &Gauge) -> Result<Vec<Complex64>> {
    if let Gauge::Tilt(r) = *gauge {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::param("r", format!("tilt base must be > 0, got {r}")));
        }
    }
    Ok(field
        .iter()
        .enumerate()
        .map(|(k, &v)| v * gauge.factor(k + 1))
        .collect())
}

/// `H = Σ P_n[(J+Δ)X_{n-1} + (Δ-J)X_{n+1}] + (μ/2)Σ(X_n² + P_n²)`, the
/// quadratic form whose canonical equations are the coupled generator.
pub fn classical_hamiltonian(state: &[f64], params: &ModelParams) -> Result<f64> {
    let l = params.l;
    if state.len() != 2 * l {
        return Err(Error::LengthMismatch {
            what: "coupled state (X then P)",
            expected: 2 * l,
            got: state.len(),
        });
    }
    let (x, p) = state.split_at(l);
    let (j, dl) = (params.j, params.delta);
    let mut h = 0.0;
    for n in 0..l {
        let left = if n > 0 { x[n - 1] } else { 0.0 };
        let right = if n + 1 < l { x[n + 1] } else { 0.0 };
        h += p[n] * ((j + dl) * left + (dl - j) * right);
        h += 0.5 * params.mu * (x[n] * x[n] + p[n] * p[n]);
    }
    Ok(h)
}

/// Curvature magnitude `κ = ln²|t_R/t_L| / d²`.
pub fn curvature(chain: &HNParams) -> Result<f64> {
    if chain.regime() == Regime::Exceptional {
        return Err(Error::regime(
            "curvature",
            "a hopping is zero (exceptional chain); curvature is undefined",
        ));
    }
    let ln = chain.ratio().ln();
    Ok(ln * ln / (chain.d * chain.d))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    Top,
    Bottom,
}

/// Continuum description of a chain around a carrier `K = K0 - iA`.
///
/// Writing `ψ(s) = e^{iKs} u(s)`, the lattice equation becomes
/// `u̇ = rate·u + advection·u' + spread·u''` to second order in `d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EffCoeffs {
    pub regime: Regime,
    pub band: Option<Band>,
    /// Real part of the carrier.
    pub k0: f64,
    pub carrier: Complex64,
    /// `ln|t_R/t_L| / (2d)`.
    pub a: f64,
    /// `A + iK0`, the complex vector potential entering `(∂_s - A - iK0)`.
    pub vector_potential: Complex64,
    /// Oscillatory regime: effective mass (negative at the band top).
    pub mass: Option<f64>,
    /// Diffusive regime: diffusion constant (negative at the band bottom).
    pub diffusion: Option<f64>,
    /// Offset Γ (oscillatory) or reaction constant Γ (diffusive).
    pub reaction: f64,
    /// Diffusive regime: net gain `γ = -Γ + κD/4`.
    pub gain: Option<f64>,
    pub drift_speed: f64,
    /// Real coefficient `v` of the first-order term `-i·v·(∂_s - iK)`.
    pub drift: f64,
    pub rate: Complex64,
    pub advection: Complex64,
    pub spread: Complex64,
    pub d: f64,
    pub hbar: f64,
}

fn expansion(chain: &HNParams, k: Complex64) -> (Complex64, Complex64, Complex64) {
    let i = Complex64::new(0.0, 1.0);
    let d = chain.d;
    let fwd = chain.t_l * (i * k * d).exp();
    let bwd = chain.t_r * (-i * k * d).exp();
    let rate = -(bwd + fwd);
    let advection = -(fwd - bwd) * d;
    let spread = rate * (0.5 * d * d);
    (rate, advection, spread)
}

fn base_coeffs(chain: &HNParams, k0: f64) -> EffCoeffs {
    let a = chain.vector_potential();
    let carrier = Complex64::new(k0, -a);
    let (rate, advection, spread) = expansion(chain, carrier);
    EffCoeffs {
        regime: chain.regime(),
        band: None,
        k0,
        carrier,
        a,
        vector_potential: Complex64::new(a, k0),
        mass: None,
        diffusion: None,
        reaction: 0.0,
        gain: None,
        drift_speed: 2.0 * chain.scale() * chain.d,
        drift: (Complex64::new(0.0, 1.0) * advection).re,
        rate,
        advection,
        spread,
        d: chain.d,
        hbar: chain.hbar,
    }
}

/// Carrier `K0` sitting on the requested band edge.
///
/// Diffusive: the top is where `Re λ = +2√(t_L t_R)`, i.e. `K0 = π/d` for
/// positive hoppings and `K0 = 0` for negative ones. Oscillatory: energies are
/// `E = i·λ`, the bottom (`E = -2√|t_L t_R|`) is at `K0 = -sgn(t_L)·π/(2d)`.
pub fn band_edge_k0(chain: &HNParams, band: Band) -> Result<f64> {
    let pi_d = std::f64::consts::PI / chain.d;
    match chain.regime() {
        Regime::Exceptional => Err(Error::regime(
            "band_edge_k0",
            "exceptional chain has no continuum band edge",
        )),
        Regime::Diffusive => {
            let positive = chain.t_l > 0.0;
            Ok(match (band, positive) {
                (Band::Top, true) | (Band::Bottom, false) => pi_d,
                _ => 0.0,
            })
        }
        Regime::Oscillatory => {
            let s = chain.t_l.signum();
            Ok(match band {
                Band::Bottom => -s * pi_d / 2.0,
                Band::Top => s * pi_d / 2.0,
            })
        }
    }
}

pub fn continuum_coefficients(chain: &HNParams, band: Band) -> Result<EffCoeffs> {
    chain.validate()?;
    let k0 = band_edge_k0(chain, band)?;
    let mut c = base_coeffs(chain, k0);
    c.band = Some(band);
    c.drift = 0.0;
    let sq = chain.scale();
    let flip = match band {
        Band::Bottom => 1.0,
        Band::Top => -1.0,
    };
    match chain.regime() {
        Regime::Oscillatory => {
            c.mass = Some(flip * chain.hbar * chain.hbar / (2.0 * sq * chain.d * chain.d));
            c.reaction = -2.0 * sq * flip;
        }
        Regime::Diffusive => {
            let dcoef = -flip * sq * chain.d * chain.d;
            c.diffusion = Some(dcoef);
            c.reaction = 2.0 * sq * flip;
            let kappa = curvature(chain)?;
            c.gain = Some(-c.reaction + kappa * dcoef / 4.0);
        }
        Regime::Exceptional => unreachable!("rejected by band_edge_k0"),
    }
    Ok(c)
}

/// Continuum theory of a diffusive chain around a general real carrier `K0`.
///
/// Returns drift `sgn·sin(K0 d)·v_s`, reaction `sgn·cos(K0 d)·Γ` with
/// `Γ = -2√(t_L t_R)` and diffusion term `-sgn·cos(K0 d)·D` with
/// `D = √(t_L t_R) d²`, where `sgn` is the common sign of the hoppings.
pub fn effective_theory_at_k(chain: &HNParams, k0: f64) -> Result<EffCoeffs> {
    chain.validate()?;
    match chain.regime() {
        Regime::Exceptional => {
            return Err(Error::regime(
                "effective_theory_at_K",
                "exceptional chain has no continuum expansion",
            ))
        }
        Regime::Oscillatory => {
            return Err(Error::regime(
                "effective_theory_at_K",
                "needs a diffusive chain (t_L*t_R > 0)",
            ))
        }
        Regime::Diffusive => {}
    }
    if !k0.is_finite() {
        return Err(Error::param("K0", "must be finite"));
    }
    let mut c = base_coeffs(chain, k0);
    let sgn = chain.t_l.signum();
    let sq = chain.scale();
    let (s, co) = (k0 * chain.d).sin_cos();
    c.drift = sgn * s * c.drift_speed;
    c.reaction = sgn * co * (-2.0 * sq);
    c.diffusion = Some(-sgn * co * sq * chain.d * chain.d);
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn reduce_gauge_examples() {
        let r = reduce_gauge(&ModelParams::reduced(1.0, 0.5, 0.0, 4));
        assert_eq!(r.regime, GaugeRegime::Nontrivial);
        assert_eq!(r.reduced.delta, 0.5);
        assert_eq!(r.reduced.j, 1.0);

        let p = ModelParams {
            theta: PI / 3.0,
            delta: 1.0,
            ..ModelParams::reduced(1.0, 0.0, 0.3, 4)
        };
        let r = reduce_gauge(&p);
        assert_eq!(r.regime, GaugeRegime::Nontrivial);
        assert!((r.reduced.delta - 0.75f64.sqrt()).abs() < 1e-15);
        assert!((r.reduced.j - (PI / 3.0).sin()).abs() < 1e-15);
        assert_eq!(r.reduced.theta, FRAC_PI_2);
        assert_eq!(r.reduced.phi, FRAC_PI_2);
        assert_eq!(r.reduced.mu, 0.3);

        let p = ModelParams {
            theta: 0.0,
            phi: 0.4,
            ..ModelParams::reduced(1.0, 0.5, 0.0, 4)
        };
        let r = reduce_gauge(&p);
        assert_eq!(r.regime, GaugeRegime::Trivial);
        assert_eq!(r.reduced, p);
        assert_eq!(r.original_phi, 0.4);

        let p = ModelParams {
            theta: 0.0,
            ..ModelParams::reduced(1.0, 1.0, 0.0, 4)
        };
        assert_eq!(reduce_gauge(&p).regime, GaugeRegime::Boundary);
    }

    #[test]
    fn chains_match_equations_of_motion() {
        let (x, p) = hn_chains(&ModelParams::reduced(1.0, 0.2, 0.0, 5)).unwrap();
        let gx = build_generator_hn(&x);
        let gp = build_generator_hn(&p);
        assert!((gx.matrix()[(2, 1)] - 1.2).abs() < 1e-15);
        assert!((gx.matrix()[(2, 3)] + 0.8).abs() < 1e-15);
        assert!((gp.matrix()[(2, 1)] - 0.8).abs() < 1e-15);
        assert!((gp.matrix()[(2, 3)] + 1.2).abs() < 1e-15);
        assert_eq!(x.regime(), Regime::Oscillatory);
        assert!((x.t_l * x.t_r + 0.96).abs() < 1e-15);
        assert!((x.ratio() * p.ratio() - 1.0).abs() < 1e-14);

        let (x, p) = hn_chains(&ModelParams::reduced(1.0, 0.0, 0.0, 5)).unwrap();
        assert_eq!((x.t_l.abs(), x.t_r.abs(), p.t_l.abs(), p.t_r.abs()), (1.0, 1.0, 1.0, 1.0));
        assert_eq!(x.regime(), Regime::Oscillatory);

        let (x, _) = hn_chains(&ModelParams::reduced(1.0, 1.0, 0.0, 5)).unwrap();
        assert_eq!(x.regime(), Regime::Exceptional);

        let unreduced = ModelParams {
            theta: 0.3,
            ..ModelParams::reduced(1.0, 1.0, 0.0, 5)
        };
        assert!(matches!(hn_chains(&unreduced), Err(Error::InvalidParameter { name: "theta", .. })));
    }

    #[test]
    fn hn_generator_band() {
        let g = build_generator_hn(&HNParams::new(0.0, 0.0, 3));
        assert_eq!(g.matrix().max_abs(), 0.0);
        let g = build_generator_hn(&HNParams::new(0.7, -1.3, 4));
        let nnz = g.matrix().as_slice().iter().filter(|v| **v != 0.0).count();
        assert_eq!(nnz, 6);
        assert_eq!(g.offsets(), &[-1, 1]);
        assert!(Generator::new(g.matrix().clone(), vec![1]).is_err());
    }

    #[test]
    fn coupled_generator_blocks() {
        let p = ModelParams::reduced(1.0, 0.2, 0.1, 3);
        let g = build_generator_coupled(&p).unwrap();
        assert_eq!(g.size(), 6);
        for n in 0..3 {
            assert_eq!(g.matrix()[(n, 3 + n)], 0.1);
            assert_eq!(g.matrix()[(3 + n, n)], -0.1);
        }
        let p0 = ModelParams { mu: 0.0, ..p };
        let (x, pc) = hn_chains(&p0).unwrap();
        let sum = Generator::direct_sum(&build_generator_hn(&x), &build_generator_hn(&pc));
        assert_eq!(build_generator_coupled(&p0).unwrap().matrix(), sum.matrix());
    }

    #[test]
    fn banded_apply_matches_dense() {
        let p = ModelParams::reduced(1.0, 0.3, 0.25, 7);
        let g = build_generator_coupled(&p).unwrap();
        let x: Vec<f64> = (0..14).map(|k| (k as f64 * 0.37).sin()).collect();
        let dense = g.matrix().matvec(&x);
        for (a, b) in g.apply(&x).iter().zip(&dense) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn gauges_invert() {
        let f: Vec<Complex64> = (0..6).map(|k| Complex64::new(k as f64, 1.0 - k as f64)).collect();
        let mut g = f.clone();
        for _ in 0..4 {
            g = gauge_transform(&g, &Gauge::IPow).unwrap();
        }
        assert_eq!(g, f);
        assert_eq!(gauge_transform(&f, &Gauge::Tilt(1.0)).unwrap(), f);
        assert!(gauge_transform(&f, &Gauge::Tilt(0.0)).is_err());
        let carrier = Gauge::Carrier {
            k: Complex64::new(0.4, -0.2),
            d: 1.0,
        };
        let back = gauge_transform(&gauge_transform(&f, &carrier).unwrap(), &carrier.inverse()).unwrap();
        for (a, b) in back.iter().zip(&f) {
            assert!((a - b).norm() < 1e-14);
        }
    }

    #[test]
    fn hamiltonian_small_cases() {
        let p = ModelParams::reduced(1.0, 0.2, 0.0, 3);
        assert_eq!(classical_hamiltonian(&[0.0; 6], &p).unwrap(), 0.0);
        assert_eq!(classical_hamiltonian(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0], &p).unwrap(), 0.0);
        assert!(classical_hamiltonian(&[0.0; 5], &p).is_err());
    }

    #[test]
    fn curvature_values() {
        assert_eq!(curvature(&HNParams::new(1.0, -1.0, 4)).unwrap(), 0.0);
        let (x, _) = hn_chains(&ModelParams::reduced(1.0, 0.2, 0.0, 4)).unwrap();
        let k = curvature(&x).unwrap();
        assert!((k - 1.5f64.ln().powi(2)).abs() < 1e-15);
        assert!((k - 0.164402).abs() < 1e-6);
        assert!(curvature(&HNParams::new(0.0, 1.0, 4)).is_err());
    }

    #[test]
    fn continuum_coefficient_examples() {
        let c = continuum_coefficients(&HNParams::new(1.0, -1.0, 10), Band::Bottom).unwrap();
        assert_eq!(c.a, 0.0);
        assert_eq!(c.reaction, -2.0);
        assert!((c.mass.unwrap() - 0.5).abs() < 1e-15);
        let top = continuum_coefficients(&HNParams::new(1.0, -1.0, 10), Band::Top).unwrap();
        assert_eq!(top.mass.unwrap(), -c.mass.unwrap());
        assert_eq!(top.reaction, -c.reaction);

        let chain = HNParams::new(0.8, 1.2, 10);
        let c = continuum_coefficients(&chain, Band::Top).unwrap();
        let s = 0.96f64.sqrt();
        assert!((c.diffusion.unwrap() - s).abs() < 1e-15);
        assert!((c.a - 1.5f64.ln() / 2.0).abs() < 1e-15);
        assert!((c.reaction + 2.0 * s).abs() < 1e-15);
        assert!((c.gain.unwrap() - (2.0 * s + s * 1.5f64.ln().powi(2) / 4.0)).abs() < 1e-14);
        // band-top carrier grows at +2√(t_L t_R)
        assert!((c.rate.re - 2.0 * s).abs() < 1e-14 && c.rate.im.abs() < 1e-14);
        let b = continuum_coefficients(&chain, Band::Bottom).unwrap();
        assert_eq!(b.diffusion.unwrap(), -c.diffusion.unwrap());
        assert!((b.gain.unwrap() + c.gain.unwrap()).abs() < 1e-14);

        let (x, p) = hn_chains(&ModelParams::reduced(1.0, 0.2, 0.0, 10)).unwrap();
        let ax = continuum_coefficients(&x, Band::Bottom).unwrap().a;
        let ap = continuum_coefficients(&p, Band::Bottom).unwrap().a;
        assert!(ax > 0.0 && (ax + ap).abs() < 1e-15);
        assert!(continuum_coefficients(&HNParams::new(0.0, 1.0, 4), Band::Top).is_err());
    }

    #[test]
    fn oscillatory_bottom_is_lowest_energy() {
        // E = i·λ must equal Γ = -2√|t_L t_R| at the bottom carrier
        for (tl, tr) in [(0.8, -1.2), (-0.8, 1.2), (1.0, -1.0)] {
            let c = continuum_coefficients(&HNParams::new(tl, tr, 10), Band::Bottom).unwrap();
            let e = Complex64::new(0.0, 1.0) * c.rate;
            assert!((e.re - c.reaction).abs() < 1e-14 && e.im.abs() < 1e-14);
            assert!((c.spread - Complex64::new(0.0, 1.0 / (2.0 * c.mass.unwrap()))).norm() < 1e-14);
        }
        let (x, _) = hn_chains(&ModelParams::reduced(1.0, 0.2, 0.0, 10)).unwrap();
        let c = continuum_coefficients(&x, Band::Bottom).unwrap();
        let expected = Complex64::new(1.5f64.ln() / 2.0, -PI / 2.0);
        assert!((c.vector_potential - expected).norm() < 1e-15);
    }

    #[test]
    fn effective_theory_examples() {
        let chain = HNParams::new(1.0, 1.0, 10);
        let c = effective_theory_at_k(&chain, PI / 2.0).unwrap();
        assert!((c.drift - 2.0).abs() < 1e-15);
        assert!(c.reaction.abs() < 1e-15 && c.diffusion.unwrap().abs() < 1e-15);
        let c = effective_theory_at_k(&chain, 0.0).unwrap();
        assert_eq!(c.drift, 0.0);
        let c = effective_theory_at_k(&chain, PI / 3.0).unwrap();
        assert!((c.drift - 3f64.sqrt()).abs() < 1e-14);
        assert!((c.reaction - 0.5 * -2.0).abs() < 1e-14);
        // first-order coefficient agrees with the series expansion
        assert!((c.advection - Complex64::new(0.0, -c.drift)).norm() < 1e-14);
        assert!(effective_theory_at_k(&HNParams::new(0.0, 1.0, 4), 0.0).is_err());
    }

    #[test]
    fn params_json_defaults() {
        let p: ModelParams =
            serde_json_lite(r#"{"J":1,"theta":1.5707963267948966,"Delta":0.2,"phi":1.5707963267948966,"mu":0,"L":8}"#);
        assert_eq!(p.d, 1.0);
        assert_eq!(p.hbar, 1.0);
    }

    fn serde_json_lite<T: serde::de::DeserializeOwned>(s: &str) -> T {
        serde_json::from_str(s).unwrap()
    }
}
