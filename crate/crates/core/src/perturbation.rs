//! Degenerate perturbation theory in the inter-chain coupling μ.
//!
//! At μ = 0 the X and P chains share the ground energy
//! `E0 = -2√(J²-Δ²)·cos(π/(L+1))`, with eigenstates localized at opposite
//! edges. A small μ couples them through the 2×2 matrix `M = c·σ_y`, whose
//! elements carry the metric weight of the chain receiving the particle.
//! Both chains are built with χ² = (J+Δ)/(J-Δ).

use std::f64::consts::{LN_10, LN_2, PI};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{i_pow, ModelParams};
use crate::spectral;

fn check_oscillatory(params: &ModelParams, op: &'static str) -> Result<()> {
    params.validate()?;
    if params.delta >= params.j {
        return Err(Error::regime(
            op,
            format!("needs 0 <= Delta < J, got Delta={} J={}", params.delta, params.j),
        ));
    }
    Ok(())
}

/// `χ = √((J+Δ)/(J-Δ))`.
pub fn chi(params: &ModelParams) -> Result<f64> {
    check_oscillatory(params, "chi")?;
    Ok(((params.j + params.delta) / (params.j - params.delta)).sqrt())
}

/// Closed-form ground states of the two chains at μ = 0.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Doublet {
    pub psi_x: Vec<Complex64>,
    pub psi_p: Vec<Complex64>,
    /// Shared eigenvalue `λ = i·E0` of both chain generators.
    pub eigenvalue: Complex64,
}

/// `ψ_X(n) = √(2/(L+1))·χ^(n-L)·sin(πn/(L+1))·i^n` and
/// `ψ_P(n) = √(2/(L+1))·χ^-(n-1)·sin(πn/(L+1))·i^n`.
pub fn ground_doublet(params: &ModelParams) -> Result<Doublet> {
    check_oscillatory(params, "ground_doublet")?;
    let l = params.l;
    let ln_chi = chi(params)?.ln();
    let norm = (2.0 / (l as f64 + 1.0)).sqrt();
    let th = PI / (l as f64 + 1.0);
    let mut psi_x = Vec::with_capacity(l);
    let mut psi_p = Vec::with_capacity(l);
    for n in 1..=l {
        let s = norm * (th * n as f64).sin();
        let ph = i_pow(n as i64);
        psi_x.push(ph * (s * (ln_chi * (n as f64 - l as f64)).exp()));
        psi_p.push(ph * (s * (-ln_chi * (n as f64 - 1.0)).exp()));
    }
    Ok(Doublet {
        psi_x,
        psi_p,
        eigenvalue: Complex64::new(0.0, spectral::ground_energy(params)),
    })
}

/// X-chain metric `χ^(2(L-n))`, equal to 1 at the X mouth n = L.
pub fn x_metric(params: &ModelParams) -> Result<Vec<f64>> {
    let two_ln = 2.0 * chi(params)?.ln();
    Ok((1..=params.l).map(|n| (two_ln * (params.l - n) as f64).exp()).collect())
}

/// P-chain metric `χ^(2(n-1))`, equal to 1 at the P mouth n = 1.
pub fn p_metric(params: &ModelParams) -> Result<Vec<f64>> {
    let two_ln = 2.0 * chi(params)?.ln();
    Ok((1..=params.l).map(|n| (two_ln * (n - 1) as f64).exp()).collect())
}

/// `(M12, M21)` with explicit weights: `M12 = -iμ Σ w12 ψ_P* ψ_X`,
/// `M21 = +iμ Σ w21 ψ_X* ψ_P`. The `∓i` comes from the `±μ` coupling signs.
pub fn offdiag_with_weights(params: &ModelParams, w12: &[f64], w21: &[f64]) -> Result<(Complex64, Complex64)> {
    let doublet = ground_doublet(params)?;
    for w in [w12, w21] {
        if w.len() != params.l {
            return Err(Error::LengthMismatch {
                what: "metric weights",
                expected: params.l,
                got: w.len(),
            });
        }
    }
    let mut s12 = Complex64::new(0.0, 0.0);
    let mut s21 = Complex64::new(0.0, 0.0);
    for n in 0..params.l {
        s12 += doublet.psi_p[n].conj() * doublet.psi_x[n] * w12[n];
        s21 += doublet.psi_x[n].conj() * doublet.psi_p[n] * w21[n];
    }
    let i = Complex64::new(0.0, 1.0);
    let out = (-i * params.mu * s12, i * params.mu * s21);
    if !(out.0.re.is_finite() && out.0.im.is_finite() && out.1.re.is_finite() && out.1.im.is_finite()) {
        return Err(overflow(params, "metric-weighted sums"));
    }
    Ok(out)
}

/// Metric-weighted off-diagonal elements. `M12` carries the P-chain metric,
/// `M21` the X-chain metric. Δ = 0 returns the exact `(-iμ, +iμ)`.
pub fn offdiag_elements(params: &ModelParams) -> Result<(Complex64, Complex64)> {
    check_oscillatory(params, "offdiag_elements")?;
    if params.delta == 0.0 {
        let i = Complex64::new(0.0, 1.0);
        return Ok((-i * params.mu, i * params.mu));
    }
    offdiag_with_weights(params, &p_metric(params)?, &x_metric(params)?)
}

fn overflow(params: &ModelParams, what: &str) -> Error {
    Error::Overflow {
        context: "perturbation",
        detail: format!(
            "{what} out of double range for J={}, Delta={}, mu={}, L={}",
            params.j, params.delta, params.mu, params.l
        ),
    }
}

/// A real number kept as `sign·e^ln_abs`, for values beyond double range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogValue {
    pub ln_abs: f64,
    /// -1, 0 or +1.
    pub sign: f64,
}

impl LogValue {
    pub fn zero() -> Self {
        Self {
            ln_abs: f64::NEG_INFINITY,
            sign: 0.0,
        }
    }

    pub fn to_f64(self) -> f64 {
        if self.sign == 0.0 {
            0.0
        } else {
            self.sign * self.ln_abs.exp()
        }
    }

    /// `(m, e)` with `|value| = m·10^e` and `1 <= m < 10` (zero gives `(0, 0)`).
    pub fn mantissa_exp10(self) -> (f64, i64) {
        if self.sign == 0.0 {
            return (0.0, 0);
        }
        let log10 = self.ln_abs / LN_10;
        let mut e = log10.floor();
        let mut m = 10f64.powf(log10 - e);
        if m >= 10.0 {
            m /= 10.0;
            e += 1.0;
        }
        (self.sign * m, e as i64)
    }
}

/// `ln sinh(x)` for x > 0 without overflow.
fn ln_sinh(x: f64) -> f64 {
    x + (-(-2.0 * x).exp_m1()).ln() - LN_2
}

/// Log-domain closed form of `c` as a function of `(χ, L, μ)`, χ > 1.
pub(crate) fn closed_form_log_chi(chi: f64, l: usize, mu: f64, chi2_minus_1: f64) -> LogValue {
    if mu == 0.0 {
        return LogValue::zero();
    }
    let lp1 = l as f64 + 1.0;
    let th = PI / lp1;
    let chi2 = chi * chi;
    let x = lp1 * chi.ln();
    let denom_abs2 = chi2 * chi2 - 2.0 * chi2 * (2.0 * th).cos() + 1.0;
    let ln_abs = (4.0 * mu.abs()).ln() + (chi2 + 1.0).ln() + 2.0 * th.sin().ln() + 2.0 * chi.ln() + ln_sinh(x)
        - lp1.ln()
        - chi2_minus_1.ln()
        - denom_abs2.ln();
    LogValue {
        ln_abs,
        sign: mu.signum(),
    }
}

/// Direct evaluation of `μ·(2/(L+1))·Σ χ^(2n-1-L) sin²(πn/(L+1))`.
#[cfg(test)]
pub(crate) fn sum_form_chi(chi: f64, l: usize, mu: f64) -> f64 {
    let lp1 = l as f64 + 1.0;
    let ln_chi = chi.ln();
    let s: f64 = (1..=l)
        .map(|n| {
            let sn = (PI * n as f64 / lp1).sin();
            (ln_chi * (2.0 * n as f64 - lp1)).exp() * sn * sn
        })
        .sum();
    mu * 2.0 / lp1 * s
}

/// Coefficient `c` of `M = c·σ_y` in log form. Δ = 0 gives exactly `c = μ`.
pub fn closed_form_log(params: &ModelParams) -> Result<LogValue> {
    check_oscillatory(params, "closed_form_M")?;
    if params.mu == 0.0 {
        return Ok(LogValue::zero());
    }
    if params.delta == 0.0 {
        return Ok(LogValue {
            ln_abs: params.mu.abs().ln(),
            sign: params.mu.signum(),
        });
    }
    let chi = chi(params)?;
    let chi2_minus_1 = 2.0 * params.delta / (params.j - params.delta);
    Ok(closed_form_log_chi(chi, params.l, params.mu, chi2_minus_1))
}

/// `c = 4μ(χ²+1)sin²(π/(L+1))χ²sinh((L+1)lnχ) / [(L+1)(χ²-1)|χ²-e^{2iπ/(L+1)}|²]`.
pub fn closed_form_m(params: &ModelParams) -> Result<f64> {
    let v = closed_form_log(params)?;
    if params.delta == 0.0 {
        return Ok(params.mu);
    }
    if v.ln_abs > f64::MAX.ln() {
        return Err(overflow(params, "closed-form coefficient"));
    }
    Ok(v.to_f64())
}

/// `ln` of the predicted splitting `2|c|`.
pub fn gap_prediction_log(params: &ModelParams) -> Result<LogValue> {
    let v = closed_form_log(params)?;
    Ok(if v.sign == 0.0 {
        v
    } else {
        LogValue {
            ln_abs: v.ln_abs + LN_2,
            sign: 1.0,
        }
    })
}

/// Predicted splitting `2|c|`.
pub fn gap_prediction(params: &ModelParams) -> Result<f64> {
    let v = gap_prediction_log(params)?;
    if params.delta == 0.0 {
        return Ok(2.0 * params.mu.abs());
    }
    if v.ln_abs > f64::MAX.ln() {
        return Err(overflow(params, "predicted splitting"));
    }
    Ok(v.to_f64())
}

/// Distance from the ground level to the next one of an unperturbed chain.
pub fn level_spacing(params: &ModelParams) -> f64 {
    let th = PI / (params.l as f64 + 1.0);
    2.0 * (params.j * params.j - params.delta * params.delta).sqrt() * (th.cos() - (2.0 * th).cos())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PerturbationResult {
    pub chi: f64,
    pub m12: Complex64,
    pub m21: Complex64,
    pub c: f64,
    pub de_pred: f64,
    pub de_exact: Option<f64>,
    pub rel_err: Option<f64>,
}

/// Perturbative prediction, optionally checked against exact diagonalization.
pub fn perturbation_result(params: &ModelParams, exact: bool) -> Result<PerturbationResult> {
    let (m12, m21) = offdiag_elements(params)?;
    let c = closed_form_m(params)?;
    let de_pred = 2.0 * c.abs();
    let de_exact = if exact {
        Some(spectral::doublet_gap(params)?.splitting)
    } else {
        None
    };
    Ok(PerturbationResult {
        chi: chi(params)?,
        m12,
        m21,
        c,
        de_pred,
        de_exact,
        rel_err: de_exact.filter(|_| de_pred > 0.0).map(|e| (e - de_pred).abs() / de_pred),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapScanGrid {
    pub j: f64,
    pub delta: f64,
    pub ls: Vec<usize>,
    pub mus: Vec<f64>,
    /// Attach exact diagonalization where it is resolvable.
    pub exact: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Validity {
    Perturbative,
    Extrapolated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ExactStatus {
    Exact,
    Unresolvable,
    Skipped,
    Failed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScanRow {
    pub l: usize,
    pub mu: f64,
    pub de_pred: LogValue,
    pub de_exact: Option<f64>,
    pub rel_err: Option<f64>,
    pub validity: Option<Validity>,
    pub exact_status: ExactStatus,
    /// Set when the prediction itself could not be evaluated.
    pub error: Option<String>,
}

impl ScanRow {
    /// `validity;precision` token pair used in the CSV flag column.
    pub fn flag(&self) -> String {
        if let Some(e) = &self.error {
            return format!("error: {}", e.replace([',', '\n'], " "));
        }
        let v = match self.validity {
            Some(Validity::Perturbative) => "perturbative",
            Some(Validity::Extrapolated) => "extrapolated",
            None => "unknown",
        };
        let p = match &self.exact_status {
            ExactStatus::Exact => "exact".to_string(),
            ExactStatus::Unresolvable => "unresolvable".to_string(),
            ExactStatus::Skipped => "formula-only".to_string(),
            ExactStatus::Failed(m) => format!("exact-failed: {}", m.replace([',', '\n'], " ")),
        };
        format!("{v};{p}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapScanTable {
    pub grid: GapScanGrid,
    pub rows: Vec<ScanRow>,
}

fn scan_point(j: f64, delta: f64, l: usize, mu: f64, exact: bool) -> ScanRow {
    let params = ModelParams::reduced(j, delta, mu, l);
    let mut row = ScanRow {
        l,
        mu,
        de_pred: LogValue::zero(),
        de_exact: None,
        rel_err: None,
        validity: None,
        exact_status: ExactStatus::Skipped,
        error: None,
    };
    match gap_prediction_log(&params) {
        Ok(v) => row.de_pred = v,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    }
    let spacing = level_spacing(&params);
    let pred = row.de_pred.to_f64();
    row.validity = Some(if pred > 0.1 * spacing {
        Validity::Extrapolated
    } else {
        Validity::Perturbative
    });
    if exact {
        match spectral::doublet_gap(&params) {
            Ok(gap) => {
                row.de_exact = Some(gap.splitting);
                row.exact_status = ExactStatus::Exact;
                if pred > 0.0 && pred.is_finite() {
                    row.rel_err = Some((gap.splitting - pred).abs() / pred);
                }
            }
            Err(Error::Unresolvable { .. }) => row.exact_status = ExactStatus::Unresolvable,
            Err(e) => row.exact_status = ExactStatus::Failed(e.to_string()),
        }
    }
    row
}

/// Evaluates the grid concurrently; rows come back ordered by `(L, μ)` and
/// per-point failures are recorded in the row instead of aborting.
pub fn gap_scan(grid: &GapScanGrid) -> Result<GapScanTable> {
    if grid.ls.is_empty() {
        return Err(Error::param("L", "scan grid has no L values"));
    }
    if grid.mus.is_empty() {
        return Err(Error::param("mu", "scan grid has no mu values"));
    }
    let mut ls = grid.ls.clone();
    ls.sort_unstable();
    let mut mus = grid.mus.clone();
    mus.sort_by(f64::total_cmp);
    let points: Vec<(usize, f64)> = ls.iter().flat_map(|&l| mus.iter().map(move |&m| (l, m))).collect();
    let rows = points
        .par_iter()
        .map(|&(l, mu)| scan_point(grid.j, grid.delta, l, mu, grid.exact))
        .collect();
    Ok(GapScanTable {
        grid: grid.clone(),
        rows,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingFit {
    /// Coefficient of L; compare with ln χ.
    pub slope: f64,
    /// Coefficient of ln L; compare with -3.
    pub power: f64,
    pub intercept: f64,
    pub points: usize,
}

/// Least-squares fit `ln(dE_pred/μ) = a·L + b·ln L + const` over the rows in
/// the asymptotic window `(L+1)·ln χ > 5` (one point per L).
pub fn asymptotic_scaling(table: &GapScanTable) -> Result<ScalingFit> {
    let params = ModelParams::reduced(table.grid.j, table.grid.delta, 0.0, 2);
    let ln_chi = chi(&params)?.ln();
    let mut seen = std::collections::BTreeMap::new();
    for row in &table.rows {
        if row.mu > 0.0 && row.error.is_none() && row.de_pred.sign > 0.0 && (row.l as f64 + 1.0) * ln_chi > 5.0 {
            seen.entry(row.l).or_insert(row.de_pred.ln_abs - row.mu.ln());
        }
    }
    if seen.len() < 6 {
        return Err(Error::InsufficientData {
            operation: "asymptotic_scaling",
            needed: 6,
            have: seen.len(),
        });
    }
    let design: Vec<Vec<f64>> = seen.keys().map(|&l| vec![l as f64, (l as f64).ln(), 1.0]).collect();
    let y: Vec<f64> = seen.values().copied().collect();
    let coef = crate::linalg::least_squares(&design, &y).ok_or(Error::InsufficientData {
        operation: "asymptotic_scaling",
        needed: 3,
        have: seen.len(),
    })?;
    Ok(ScalingFit {
        slope: coef[0],
        power: coef[1],
        intercept: coef[2],
        points: seen.len(),
    })
}
