//! Time evolution of real lattice fields, Gaussian packets, gain
//! subtraction, observables and closed-form continuum solutions.

pub mod extended;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::lu::{condition_number, ComplexLu};
use crate::model::{build_generator_hn, continuum_coefficients, Band, EffCoeffs, Generator, HNParams, Regime};
use crate::spectral::Spectrum;

/// Stability heuristic for RK4 on banded generators.
pub const RK4_STABILITY_BOUND: f64 = 0.5;
/// Eigenvector matrices worse conditioned than this are treated as defective.
pub const DEFECTIVE_CONDITION: f64 = 1e12;

/// Largest relative error allowed when the eigenvector expansion is summed
/// back at the initial time.
pub const RECONSTRUCTION_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub tau: f64,
    pub values: Vec<f64>,
}

impl FieldState {
    pub fn new(tau: f64, values: Vec<f64>) -> Self {
        Self { tau, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Places a single-chain field into the X or P half of a coupled state.
    pub fn embed(&self, quadrature: Quadrature) -> FieldState {
        let l = self.values.len();
        let mut v = vec![0.0; 2 * l];
        let off = match quadrature {
            Quadrature::X => 0,
            Quadrature::P => l,
        };
        v[off..off + l].copy_from_slice(&self.values);
        FieldState::new(self.tau, v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Quadrature {
    X,
    P,
}

/// Gaussian packet `Re[exp(-(n-n0)²/(4σ²))·e^{iK0·nd}·e^{A·nd}]`, the last
/// factor only with `tilt`, where `A = ln|t_R/t_L|/(2d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavepacketSpec {
    /// Site index n0 (1-based).
    pub center: f64,
    /// σ in sites; `|ψ|²` has standard deviation σ.
    pub width: f64,
    #[serde(default)]
    pub k0: f64,
    #[serde(default)]
    pub tilt: bool,
    #[serde(default = "default_quadrature")]
    pub quadrature: Quadrature,
}

fn default_quadrature() -> Quadrature {
    Quadrature::X
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<FieldState>,
    pub fingerprint: String,
}

impl Trajectory {
    fn from_samples(times: Vec<f64>, samples: Vec<Vec<f64>>, fingerprint: String) -> Self {
        let states = times.iter().zip(samples).map(|(&t, v)| FieldState::new(t, v)).collect();
        Self {
            times,
            states,
            fingerprint,
        }
    }

    pub fn last(&self) -> &FieldState {
        self.states.last().expect("trajectory has at least one sample")
    }
}

fn raw_packet(spec: &WavepacketSpec, chain: &HNParams) -> Vec<f64> {
    let a = if spec.tilt { chain.vector_potential() } else { 0.0 };
    (1..=chain.l)
        .map(|n| {
            let x = n as f64 - spec.center;
            let s = n as f64 * chain.d;
            (-x * x / (4.0 * spec.width * spec.width) + a * s).exp() * carrier_cos(spec.k0, s)
        })
        .collect()
}

/// `cos(K0·s)`, exact at the quarter-period carriers used for band edges.
pub(crate) fn carrier_cos(k0: f64, s: f64) -> f64 {
    let q = k0 * s / std::f64::consts::FRAC_PI_2;
    let r = q.round();
    if (q - r).abs() < 1e-9 * q.abs().max(1.0) {
        [1.0, 0.0, -1.0, 0.0][(r as i64).rem_euclid(4) as usize]
    } else {
        (k0 * s).cos()
    }
}

fn check_packet(spec: &WavepacketSpec, chain: &HNParams) -> Result<()> {
    chain.validate()?;
    if !(spec.width >= 2.0) {
        return Err(Error::param("width", format!("sigma must be >= 2 sites, got {}", spec.width)));
    }
    let (lo, hi) = (spec.center - 4.0 * spec.width, spec.center + 4.0 * spec.width);
    if !spec.center.is_finite() || lo < 1.0 || hi > chain.l as f64 {
        return Err(Error::param(
            "center",
            format!("n0 +- 4 sigma = [{lo}, {hi}] must lie inside [1, {}]", chain.l),
        ));
    }
    if !spec.k0.is_finite() {
        return Err(Error::param("k0", "must be finite"));
    }
    Ok(())
}

fn peak_normalize(v: &mut [f64], chain: &HNParams) -> Result<f64> {
    let peak = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if !(peak > 0.0 && peak.is_finite()) {
        return Err(Error::param("k0", "carrier leaves no nonzero amplitude on the lattice"));
    }
    let tail = v[0].abs().max(v[chain.l - 1].abs()) / peak;
    if tail > 1e-6 {
        return Err(Error::param(
            "width",
            format!("packet tail {tail:.3e} at the chain ends exceeds 1e-6"),
        ));
    }
    v.iter_mut().for_each(|x| *x /= peak);
    Ok(peak)
}

/// Real Gaussian packet on a single chain, normalized to peak magnitude 1.
pub fn gaussian_wavepacket(spec: &WavepacketSpec, chain: &HNParams) -> Result<FieldState> {
    check_packet(spec, chain)?;
    let mut v = raw_packet(spec, chain);
    peak_normalize(&mut v, chain)?;
    Ok(FieldState::new(0.0, v))
}

/// `0.01 / max(|t_L|, |t_R|, μ)`.
pub fn default_dt(max_rate: f64) -> f64 {
    0.01 / max_rate.abs()
}

fn check_times(t0: f64, times: &[f64]) -> Result<()> {
    if times.is_empty() {
        return Err(Error::param("times", "no sample times"));
    }
    let mut prev = t0;
    for (k, &t) in times.iter().enumerate() {
        if !t.is_finite() || t < prev || (k > 0 && t == prev) {
            return Err(Error::param(
                "times",
                format!("sample times must be finite, start at or after tau0 = {t0} and increase strictly"),
            ));
        }
        prev = t;
    }
    Ok(())
}

/// Classic RK4 from `(t0, y0)`, landing exactly on each sample time.
pub(crate) fn rk4_samples<F>(mut f: F, y0: &[f64], t0: f64, times: &[f64], dt: f64) -> Result<Vec<Vec<f64>>>
where
    F: FnMut(&[f64], &mut [f64]),
{
    check_times(t0, times)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::param("dt", format!("must be > 0, got {dt}")));
    }
    let n = y0.len();
    let mut y = y0.to_vec();
    let (mut k1, mut k2, mut k3, mut k4, mut tmp) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut t = t0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        let span = target - t;
        if span > 0.0 {
            let steps = (span / dt - 1e-9).ceil().max(1.0) as usize;
            let h = span / steps as f64;
            for step in 0..steps {
                f(&y, &mut k1);
                for i in 0..n {
                    tmp[i] = y[i] + 0.5 * h * k1[i];
                }
                f(&tmp, &mut k2);
                for i in 0..n {
                    tmp[i] = y[i] + 0.5 * h * k2[i];
                }
                f(&tmp, &mut k3);
                for i in 0..n {
                    tmp[i] = y[i] + h * k3[i];
                }
                f(&tmp, &mut k4);
                for i in 0..n {
                    y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
                }
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite {
                        tau: t + h * (step + 1) as f64,
                    });
                }
            }
        }
        t = target;
        out.push(y.clone());
    }
    Ok(out)
}

fn check_step(g: &Generator, dt: f64) -> Result<()> {
    let product = dt * g.norm_inf();
    if product >= RK4_STABILITY_BOUND {
        return Err(Error::UnstableStep {
            product,
            bound: RK4_STABILITY_BOUND,
        });
    }
    Ok(())
}

fn check_len(g: &Generator, s0: &FieldState) -> Result<()> {
    if s0.len() != g.size() {
        return Err(Error::LengthMismatch {
            what: "initial state vs generator",
            expected: g.size(),
            got: s0.len(),
        });
    }
    if s0.values.iter().any(|v| !v.is_finite()) {
        return Err(Error::param("state", "initial values must be finite"));
    }
    Ok(())
}

/// RK4 with every step recorded; the final step is shortened to hit `tau_end`.
pub fn evolve_rk4(g: &Generator, s0: &FieldState, tau_end: f64, dt: f64) -> Result<Trajectory> {
    if !(tau_end > s0.tau) {
        return Err(Error::param("tau_end", format!("must exceed the initial time {}", s0.tau)));
    }
    let steps = ((tau_end - s0.tau) / dt - 1e-9).ceil().max(1.0) as usize;
    let mut times: Vec<f64> = (0..=steps).map(|k| (s0.tau + k as f64 * dt).min(tau_end)).collect();
    *times.last_mut().unwrap() = tau_end;
    times.dedup();
    evolve_rk4_at(g, s0, &times, dt)
}

/// RK4 sampled at the given times (the first may equal the initial time).
pub fn evolve_rk4_at(g: &Generator, s0: &FieldState, times: &[f64], dt: f64) -> Result<Trajectory> {
    check_len(g, s0)?;
    check_step(g, dt)?;
    let samples = rk4_samples(|y, out| g.apply_into(y, out), &s0.values, s0.tau, times, dt)?;
    Ok(Trajectory::from_samples(times.to_vec(), samples, g.fingerprint()))
}

/// `V·exp(Λ(τ-τ0))·V⁻¹·s0`, checked to be real.
pub fn evolve_exact(spec: &Spectrum, s0: &FieldState, times: &[f64]) -> Result<Trajectory> {
    let v = spec
        .right_eigenvectors
        .as_ref()
        .ok_or_else(|| Error::param("spectrum", "eigenvectors are required for exact evolution"))?;
    if s0.len() != v.rows() {
        return Err(Error::LengthMismatch {
            what: "initial state vs spectrum",
            expected: v.rows(),
            got: s0.len(),
        });
    }
    check_times(s0.tau, times)?;
    // solve in the basis where the eigenvectors are well conditioned
    let d: Vec<f64> = if spec.row_scaling.len() == v.rows() {
        spec.row_scaling.clone()
    } else {
        vec![1.0; v.rows()]
    };
    let mut vb = v.clone();
    for i in 0..vb.rows() {
        for j in 0..vb.cols() {
            vb[(i, j)] /= d[i];
        }
    }
    let condition = condition_number(&vb);
    if !(condition <= DEFECTIVE_CONDITION) {
        return Err(Error::Defective { condition });
    }
    let lu = ComplexLu::new(&vb).ok_or(Error::Defective {
        condition: f64::INFINITY,
    })?;
    let b: Vec<Complex64> = s0.values.iter().zip(&d).map(|(&x, d)| Complex64::new(x / d, 0.0)).collect();
    let coef = lu.solve(&b);
    let n = v.rows();
    // skewed blocks of opposite chirality can pass the condition check and
    // still lose the state to cancellation
    let peak = s0.values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        let error = (0..n)
            .map(|i| {
                let z: Complex64 = (0..n).map(|j| v[(i, j)] * coef[j]).sum();
                (z - s0.values[i]).norm()
            })
            .fold(0.0f64, f64::max)
            / peak;
        if !(error <= RECONSTRUCTION_TOLERANCE) {
            return Err(Error::Unrepresentable { error });
        }
    }
    let mut samples = Vec::with_capacity(times.len());
    for &t in times {
        let dtau = t - s0.tau;
        let mut z = vec![Complex64::new(0.0, 0.0); n];
        for (j, (&lam, &c)) in spec.eigenvalues.iter().zip(&coef).enumerate() {
            let w = c * (lam * dtau).exp();
            if w == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (i, zi) in z.iter_mut().enumerate() {
                *zi += v[(i, j)] * w;
            }
        }
        let scale = z.iter().fold(0.0f64, |m, x| m.max(x.norm()));
        let residue = z.iter().fold(0.0f64, |m, x| m.max(x.im.abs()));
        if !scale.is_finite() {
            return Err(Error::NonFinite { tau: t });
        }
        if residue > 1e-9 * scale {
            return Err(Error::NotReal {
                tau: t,
                residue: residue / scale,
            });
        }
        samples.push(z.iter().map(|x| x.re).collect());
    }
    Ok(Trajectory::from_samples(
        times.to_vec(),
        samples,
        spec.generator_fingerprint.clone(),
    ))
}

/// Multiplies each sample by `e^{-sign·γ·τ}`.
pub fn subtract_gain(traj: &Trajectory, gamma: f64, sign: f64) -> Trajectory {
    let mut out = traj.clone();
    for st in &mut out.states {
        let f = (-sign * gamma * st.tau).exp();
        st.values.iter_mut().for_each(|x| *x *= f);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Observables {
    /// `Σ n·ψ_n² / Σ ψ_n²` with sites n = 1..N.
    pub center: f64,
    /// Standard deviation of n under the same weights.
    pub width: f64,
    pub peak: f64,
    /// `√Σ ψ_n²`.
    pub norm: f64,
    /// `√Σ w_n ψ_n²` when metric weights are supplied.
    pub weighted_norm: Option<f64>,
}

pub fn observables(state: &FieldState, weights: Option<&[f64]>) -> Result<Observables> {
    let v = &state.values;
    let total: f64 = v.iter().map(|x| x * x).sum();
    if !(total > 0.0) {
        return Err(Error::param("state", "observables need a nonzero state"));
    }
    let center = v.iter().enumerate().map(|(i, x)| (i + 1) as f64 * x * x).sum::<f64>() / total;
    let var = v
        .iter()
        .enumerate()
        .map(|(i, x)| ((i + 1) as f64 - center).powi(2) * x * x)
        .sum::<f64>()
        / total;
    let weighted_norm = match weights {
        Some(w) => {
            if w.len() != v.len() {
                return Err(Error::LengthMismatch {
                    what: "metric weights vs state",
                    expected: v.len(),
                    got: w.len(),
                });
            }
            Some(w.iter().zip(v).map(|(w, x)| w * x * x).sum::<f64>().sqrt())
        }
        None => None,
    };
    Ok(Observables {
        center,
        width: var.max(0.0).sqrt(),
        peak: v.iter().fold(0.0f64, |m, x| m.max(x.abs())),
        norm: total.sqrt(),
        weighted_norm,
    })
}

/// Sites next to each edge that must stay (nearly) empty.
pub const EDGE_SITES: usize = 3;
/// Maximum weight fraction tolerated on the edge sites.
pub const EDGE_WEIGHT: f64 = 1e-3;

/// Rejects states whose weight on the outer [`EDGE_SITES`] sites exceeds
/// [`EDGE_WEIGHT`] of the total.
pub fn check_boundary(state: &FieldState) -> Result<()> {
    boundary_check(state, state.values.len())
}

/// [`check_boundary`] for a coupled `(x, p)` state of two `l`-site chains:
/// the four chain ends are weighed against the whole state, so a nearly
/// empty quadrature does not trip the check on round-off.
pub fn check_boundary_coupled(state: &FieldState, l: usize) -> Result<()> {
    if state.values.len() != 2 * l {
        return Err(Error::LengthMismatch {
            what: "coupled state vs 2L",
            expected: 2 * l,
            got: state.values.len(),
        });
    }
    boundary_check(state, l)
}

fn boundary_check(state: &FieldState, chain_len: usize) -> Result<()> {
    let v = &state.values;
    let total: f64 = v.iter().map(|x| x * x).sum();
    let k = EDGE_SITES.min(chain_len / 2);
    let edge: f64 = v
        .chunks(chain_len)
        .map(|c| c[..k].iter().chain(&c[c.len() - k..]).map(|x| x * x).sum::<f64>())
        .sum();
    if total > 0.0 && edge / total > EDGE_WEIGHT {
        return Err(Error::BoundaryContact {
            weight: edge / total,
            sites: EDGE_SITES,
            tau: state.tau,
        });
    }
    Ok(())
}

/// Closed-form continuum evolution of a packet prepared by
/// [`gaussian_wavepacket`] on `l` sites.
///
/// With `ψ = e^{iKs}u` the continuum equation is `u̇ = r·u + a·u' + b·u''`,
/// so a Gaussian `u` keeps its shape: its squared width becomes `σ² + bτ`
/// and its center moves by `-aτ`. The profile returned is the real part of
/// `ψ`, including the full gain `e^{rτ}`.
pub fn continuum_gaussian(coeffs: &EffCoeffs, spec: &WavepacketSpec, l: usize, tau: f64) -> Result<Vec<f64>> {
    let d = coeffs.d;
    let chain_like = HNParams {
        d,
        ..HNParams::new(1.0, (2.0 * coeffs.a * d).exp(), l)
    };
    let raw = raw_packet(
        &WavepacketSpec {
            k0: coeffs.k0,
            tilt: spec.tilt,
            ..*spec
        },
        &chain_like,
    );
    let norm = raw.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if !(norm > 0.0) {
        return Err(Error::param("k0", "carrier leaves no nonzero amplitude on the lattice"));
    }
    let sig2 = Complex64::new((spec.width * d).powi(2), 0.0);
    let w = sig2 + coeffs.spread * tau;
    if w.re <= 0.0 {
        return Err(Error::ContinuumCollapse { width_sq: w.re, tau });
    }
    let s0 = spec.center * d;
    let beta = if spec.tilt { 0.0 } else { -coeffs.a };
    let beta = Complex64::new(beta, 0.0);
    let c = s0 + 2.0 * sig2 * beta;
    let amp = (beta * s0 + sig2 * beta * beta + coeffs.rate * tau).exp() / norm * (sig2 / w).sqrt();
    let i = Complex64::new(0.0, 1.0);
    Ok((1..=l)
        .map(|n| {
            let s = n as f64 * d;
            let x = s + coeffs.advection * tau - c;
            let u = amp * (-(x * x) / (4.0 * w)).exp();
            ((i * coeffs.carrier * s).exp() * u).re
        })
        .collect())
}

/// Relative L2 mismatch `‖a - b‖/‖b‖` restricted to sites within
/// `4·width` of the center of `reference`.
pub fn window_rel_l2(lattice: &[f64], reference: &[f64]) -> Result<f64> {
    if lattice.len() != reference.len() {
        return Err(Error::LengthMismatch {
            what: "lattice vs continuum profile",
            expected: reference.len(),
            got: lattice.len(),
        });
    }
    let obs = observables(&FieldState::new(0.0, reference.to_vec()), None)?;
    let (mut num, mut den) = (0.0, 0.0);
    for (k, (a, b)) in lattice.iter().zip(reference).enumerate() {
        if ((k + 1) as f64 - obs.center).abs() <= 4.0 * obs.width {
            num += (a - b) * (a - b);
            den += b * b;
        }
    }
    Ok((num / den).sqrt())
}

/// Floating-point format used for a lattice evolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Double,
    /// Binary digits of the extended-precision integrator.
    Extended(usize),
    /// Extended precision only where band-top modes would swamp the packet.
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuumPoint {
    pub tau: f64,
    /// Gain-subtracted lattice profile.
    pub lattice: Vec<f64>,
    /// Gain-subtracted continuum profile (absent if it collapsed).
    pub continuum: Option<Vec<f64>>,
    pub lattice_obs: Observables,
    pub rel_l2: Option<f64>,
    /// Why the comparison at this time is unavailable.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContinuumComparison {
    pub coeffs: EffCoeffs,
    /// Gain subtracted from both profiles (`e^{-γτ}`).
    pub gain: f64,
    pub precision_bits: usize,
    pub fingerprint: String,
    pub points: Vec<ContinuumPoint>,
}

/// Bits needed so that band-top round-off stays below the packet after the
/// relative amplification `e^{4√(t_L t_R)·τ}`.
pub fn required_bits(chain: &HNParams, tau_max: f64) -> usize {
    let growth = 4.0 * chain.scale() * tau_max / std::f64::consts::LN_2;
    64 + growth.ceil().max(0.0) as usize
}

/// Evolves a band-edge packet on the lattice and compares the gain-subtracted
/// profiles with [`continuum_gaussian`] at each time.
pub fn continuum_comparison(
    chain: &HNParams,
    spec: &WavepacketSpec,
    band: Band,
    taus: &[f64],
    dt: f64,
    precision: Precision,
) -> Result<ContinuumComparison> {
    let coeffs = continuum_coefficients(chain, band)?;
    let spec = WavepacketSpec { k0: coeffs.k0, ..*spec };
    let s0 = gaussian_wavepacket(&spec, chain)?;
    let g = build_generator_hn(chain);
    let tau_max = taus.iter().fold(0.0f64, |m, &t| m.max(t));
    let bits = match precision {
        Precision::Double => 53,
        Precision::Extended(b) => b,
        Precision::Auto => {
            if chain.regime() == Regime::Diffusive && band == Band::Bottom {
                required_bits(chain, tau_max)
            } else {
                53
            }
        }
    };
    let traj = if bits > 53 {
        extended::evolve_hn_packet(chain, &spec, taus, dt, bits)?
    } else {
        evolve_rk4_at(&g, &s0, taus, dt)?
    };
    let gain = coeffs.gain.unwrap_or(0.0);
    let traj = subtract_gain(&traj, gain, 1.0);
    let mut points = Vec::with_capacity(taus.len());
    for st in &traj.states {
        let lattice_obs = observables(st, None)?;
        let mut point = ContinuumPoint {
            tau: st.tau,
            lattice: st.values.clone(),
            continuum: None,
            lattice_obs,
            rel_l2: None,
            error: None,
        };
        if let Err(e) = check_boundary(st) {
            point.error = Some(e.to_string());
        }
        match continuum_gaussian(&coeffs, &spec, chain.l, st.tau) {
            Ok(mut prof) => {
                let f = (-gain * st.tau).exp();
                prof.iter_mut().for_each(|x| *x *= f);
                point.rel_l2 = Some(window_rel_l2(&st.values, &prof)?);
                point.continuum = Some(prof);
            }
            Err(e) => point.error = Some(e.to_string()),
        }
        points.push(point);
    }
    Ok(ContinuumComparison {
        coeffs,
        gain,
        precision_bits: bits,
        fingerprint: g.fingerprint(),
        points,
    })
}
