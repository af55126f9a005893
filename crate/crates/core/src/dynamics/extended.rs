//! Extended-precision RK4 for a single Hatano–Nelson chain.
//!
//! A packet at the bottom of a diffusive band decays like `e^{-2√(t_L t_R)τ}`
//! while double-precision round-off seeds band-top modes growing like
//! `e^{+2√(t_L t_R)τ}`. Carrying enough binary digits through both the
//! initial condition and the integration keeps that noise below the packet.

use dashu_float::FBig;

use super::{check_packet, check_times, raw_packet, FieldState, Trajectory, WavepacketSpec};
use crate::error::{Error, Result};
use crate::model::{build_generator_hn, HNParams};

fn big(x: f64, bits: usize) -> FBig {
    FBig::try_from(x).expect("finite double").with_precision(bits).value()
}

fn quarter_carrier(k0: f64, s: f64) -> Option<f64> {
    let q = k0 * s / std::f64::consts::FRAC_PI_2;
    let r = q.round();
    ((q - r).abs() < 1e-9 * q.abs().max(1.0)).then(|| [1.0, 0.0, -1.0, 0.0][(r as i64).rem_euclid(4) as usize])
}

/// Gaussian packet evaluated with `bits` binary digits. Carriers must be
/// multiples of `π/(2d)` so that the carrier factor is exact.
pub fn packet(spec: &WavepacketSpec, chain: &HNParams, bits: usize) -> Result<Vec<FBig>> {
    check_packet(spec, chain)?;
    let mut probe = raw_packet(spec, chain);
    let peak = super::peak_normalize(&mut probe, chain)?;
    let zero = big(0.0, bits);
    let a = if spec.tilt {
        let ratio = big(chain.t_r, bits) / big(chain.t_l, bits);
        let ratio = if ratio < zero { -ratio } else { ratio };
        ratio.ln() / big(2.0 * chain.d, bits)
    } else {
        zero.clone()
    };
    let four_sig2 = big(4.0 * spec.width * spec.width, bits);
    let inv_peak = big(1.0, bits) / big(peak, bits);
    (1..=chain.l)
        .map(|n| {
            let s = n as f64 * chain.d;
            let carrier = quarter_carrier(spec.k0, s).ok_or_else(|| {
                Error::param("k0", "extended precision needs a carrier that is a multiple of pi/(2d)")
            })?;
            if carrier == 0.0 {
                return Ok(zero.clone());
            }
            let x = big(n as f64, bits) - big(spec.center, bits);
            let expo = -(&x * &x) / &four_sig2 + &a * big(s, bits);
            Ok(expo.exp() * &inv_peak * big(carrier, bits))
        })
        .collect()
}

fn derivative(y: &[FBig], minus_tr: &FBig, minus_tl: &FBig, zero: &FBig, out: &mut [FBig]) {
    let n = y.len();
    for i in 0..n {
        let mut v = zero.clone();
        if i > 0 {
            v += minus_tr * &y[i - 1];
        }
        if i + 1 < n {
            v += minus_tl * &y[i + 1];
        }
        out[i] = v;
    }
}

/// RK4 on `ψ̇_n = -t_R ψ_{n-1} - t_L ψ_{n+1}` with `bits` binary digits,
/// returning double-precision samples.
pub fn evolve_hn_rk4(chain: &HNParams, s0: &[FBig], t0: f64, times: &[f64], dt: f64, bits: usize) -> Result<Vec<Vec<f64>>> {
    chain.validate()?;
    check_times(t0, times)?;
    if s0.len() != chain.l {
        return Err(Error::LengthMismatch {
            what: "initial state vs chain",
            expected: chain.l,
            got: s0.len(),
        });
    }
    let product = dt * build_generator_hn(chain).norm_inf();
    if !(dt > 0.0) || product >= super::RK4_STABILITY_BOUND {
        return Err(Error::UnstableStep {
            product,
            bound: super::RK4_STABILITY_BOUND,
        });
    }
    let zero = big(0.0, bits);
    let (mtr, mtl) = (big(-chain.t_r, bits), big(-chain.t_l, bits));
    let (half, two, sixth) = (big(0.5, bits), big(2.0, bits), big(1.0, bits) / big(6.0, bits));
    let n = chain.l;
    let mut y: Vec<FBig> = s0.iter().map(|v| v.clone().with_precision(bits).value()).collect();
    let mut k1 = vec![zero.clone(); n];
    let mut k2 = k1.clone();
    let mut k3 = k1.clone();
    let mut k4 = k1.clone();
    let mut tmp = k1.clone();
    let mut t = t0;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        let span = target - t;
        if span > 0.0 {
            let steps = (span / dt - 1e-9).ceil().max(1.0) as usize;
            let h = big(span, bits) / big(steps as f64, bits);
            let hh = &h * &half;
            let h6 = &h * &sixth;
            for _ in 0..steps {
                derivative(&y, &mtr, &mtl, &zero, &mut k1);
                for i in 0..n {
                    tmp[i] = &y[i] + &hh * &k1[i];
                }
                derivative(&tmp, &mtr, &mtl, &zero, &mut k2);
                for i in 0..n {
                    tmp[i] = &y[i] + &hh * &k2[i];
                }
                derivative(&tmp, &mtr, &mtl, &zero, &mut k3);
                for i in 0..n {
                    tmp[i] = &y[i] + &h * &k3[i];
                }
                derivative(&tmp, &mtr, &mtl, &zero, &mut k4);
                for i in 0..n {
                    let inc = &k1[i] + &two * (&k2[i] + &k3[i]) + &k4[i];
                    y[i] += &h6 * inc;
                }
            }
        }
        t = target;
        let sample: Vec<f64> = y.iter().map(|v| v.to_f64().value()).collect();
        if sample.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { tau: t });
        }
        out.push(sample);
    }
    Ok(out)
}

/// Prepares `spec` on `chain` and evolves it entirely in extended precision.
pub fn evolve_hn_packet(chain: &HNParams, spec: &WavepacketSpec, times: &[f64], dt: f64, bits: usize) -> Result<Trajectory> {
    let s0 = packet(spec, chain, bits)?;
    let samples = evolve_hn_rk4(chain, &s0, 0.0, times, dt, bits)?;
    let states = times.iter().zip(samples).map(|(&t, v)| FieldState::new(t, v)).collect();
    Ok(Trajectory {
        times: times.to_vec(),
        states,
        fingerprint: build_generator_hn(chain).fingerprint(),
    })
}
