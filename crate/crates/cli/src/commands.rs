//! One function per subcommand. Each builds its outputs in memory; the caller
//! writes them only once everything has succeeded.

use std::path::Path;

use kitaev_core::dynamics::{
    check_boundary, check_boundary_coupled, continuum_comparison, default_dt, evolve_exact, evolve_rk4_at, gaussian_wavepacket,
    observables, FieldState, Precision, Quadrature, Trajectory,
};
use kitaev_core::geometry::tree::{chain_schrodinger_generator, layer_uniform_state, unpack_complex};
use kitaev_core::geometry::{
    build_curved_diffusion_operator, build_curved_schrodinger_operator, build_tree, convergence_study, evolve_tree,
    reduce_tree, tree_chain, HyperbolicMetric, TreeMethod,
};
use kitaev_core::io::{
    fmt_f64, write_edge_list_csv, write_generator_csv, write_scan_csv, write_spectrum_csv, write_table,
    write_trajectory_csv,
};
use kitaev_core::model::{
    build_generator_coupled, build_generator_hn, continuum_coefficients, hn_chains, reduce_gauge, Generator,
    GaugeRegime, HNParams, ModelParams, Regime,
};
use kitaev_core::perturbation::{asymptotic_scaling, gap_prediction, gap_scan as run_gap_scan, GapScanGrid};
use kitaev_core::spectral::{doublet_gap, eigs, ground_energy, stationary_modes, EigsOptions};
use kitaev_core::Error;
use num_complex::Complex64;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{Method, RunConfig, SweepTarget, Target, TimeUnit};
use crate::{sibling, CliError, Report};

type Out = Result<Report, CliError>;

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Vec<u8> {
    let mut buf = Vec::new();
    f(&mut buf).expect("writing to memory cannot fail");
    buf
}

fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T, CliError> {
    s.as_ref().ok_or_else(|| CliError::Config(format!("missing `{name}` section")))
}

/// What a config describes: one chain, or a full model.
enum Subject {
    Chain(HNParams),
    Model(ModelParams),
}

fn subject(cfg: &RunConfig) -> Result<Subject, CliError> {
    match (&cfg.chain, &cfg.model) {
        (Some(c), None) => Ok(Subject::Chain(*c)),
        (None, Some(m)) => Ok(Subject::Model(*m)),
        (Some(_), Some(_)) => Err(CliError::Config("give either `chain` or `model`, not both".into())),
        (None, None) => Err(CliError::Config("missing `chain` or `model`".into())),
    }
}

/// Gauge-reduced model, refusing the trivial regime.
fn reduced(model: &ModelParams) -> Result<ModelParams, CliError> {
    model.validate()?;
    let g = reduce_gauge(model);
    if g.regime == GaugeRegime::Trivial {
        return Err(Error::WrongRegime {
            operation: "gauge reduction",
            reason: format!(
                "Delta = {} <= J|cos theta| = {}; the model has no Hatano-Nelson form",
                model.delta,
                model.j * model.theta.cos().abs()
            ),
        }
        .into());
    }
    Ok(g.reduced)
}

fn model_chain(model: &ModelParams, target: Target) -> Result<HNParams, CliError> {
    let (x, p) = hn_chains(&reduced(model)?)?;
    match target {
        Target::X => Ok(x),
        Target::P => Ok(p),
        Target::Coupled => Err(CliError::Config("this command needs a single chain; use target x or p".into())),
    }
}

fn single_chain(cfg: &RunConfig, target: Option<Target>) -> Result<HNParams, CliError> {
    match subject(cfg)? {
        Subject::Chain(c) => {
            if target.is_some_and(|t| t != Target::X) {
                return Err(CliError::Config("`target` only applies to a `model`".into()));
            }
            c.validate()?;
            Ok(c)
        }
        Subject::Model(m) => model_chain(&m, target.unwrap_or(Target::X)),
    }
}

pub fn spectrum(cfg: &RunConfig, out: &Path) -> Out {
    let opts = cfg.spectrum.clone().unwrap_or_default();
    let (g, chain) = match subject(cfg)? {
        Subject::Chain(c) => {
            if opts.target.is_some() {
                return Err(CliError::Config("`target` only applies to a `model`".into()));
            }
            c.validate()?;
            (build_generator_hn(&c), Some(c))
        }
        Subject::Model(m) => match opts.target.unwrap_or(Target::Coupled) {
            Target::Coupled => (build_generator_coupled(&reduced(&m)?)?, None),
            t => {
                let c = model_chain(&m, t)?;
                (build_generator_hn(&c), Some(c))
            }
        },
    };
    let spec = eigs(
        &g,
        &EigsOptions {
            vectors: opts.vectors,
            ..EigsOptions::default()
        },
    )?;
    let regime = chain.map(|c| c.regime());
    let order = if regime == Some(Regime::Diffusive) {
        let mut idx: Vec<usize> = (0..spec.len()).collect();
        idx.sort_by(|&a, &b| {
            let (x, y) = (spec.eigenvalues[a], spec.eigenvalues[b]);
            x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im))
        });
        idx
    } else {
        spec.sorted_order()
    };
    let max_residual = spec.residuals.iter().copied().fold(None, |m: Option<f64>, r| Some(m.map_or(r, |m| m.max(r))));
    Ok(Report {
        files: vec![(out.to_path_buf(), csv_bytes(|b| write_spectrum_csv(b, &spec, &order)))],
        results: json!({
            "size": spec.len(),
            "regime": regime,
            "chain": chain,
            "spectral_radius": spec.spectral_radius(),
            "max_residual": max_residual,
            "generator_fingerprint": spec.generator_fingerprint,
        }),
        status: 0,
    })
}

fn observable_series(traj: &Trajectory, weights: Option<&[f64]>) -> Result<Vec<Value>, CliError> {
    traj.states
        .iter()
        .map(|s| Ok(json!({ "tau": s.tau, "observables": observables(s, weights)? })))
        .collect()
}

pub fn evolve(cfg: &RunConfig, out: &Path) -> Out {
    let opts = section(&cfg.evolve, "evolve")?;
    if opts.times.is_empty() {
        return Err(CliError::Config("`evolve.times` must not be empty".into()));
    }
    let subj = subject(cfg)?;
    // the chain the packet lives on, plus the coupled model if evolving both quadratures
    let (chain, model) = match (&subj, opts.target) {
        (Subject::Chain(_), _) => (single_chain(cfg, opts.target)?, None),
        (Subject::Model(m), Some(Target::Coupled)) | (Subject::Model(m), None) if opts.band.is_none() => {
            let r = reduced(m)?;
            let (x, p) = hn_chains(&r)?;
            let c = match opts.packet.quadrature {
                Quadrature::X => x,
                Quadrature::P => p,
            };
            (c, Some(r))
        }
        (Subject::Model(m), t) => {
            let t = t.unwrap_or(match opts.packet.quadrature {
                Quadrature::X => Target::X,
                Quadrature::P => Target::P,
            });
            (model_chain(m, t)?, None)
        }
    };
    let scale = match &model {
        Some(m) => (m.j * m.j - m.delta * m.delta).abs().sqrt(),
        None => chain.scale(),
    };
    let taus: Vec<f64> = match opts.time_unit {
        TimeUnit::Bare => opts.times.clone(),
        TimeUnit::Band => {
            if !(scale > 0.0) {
                return Err(Error::WrongRegime {
                    operation: "evolve",
                    reason: "band time unit needs a nonzero band scale".into(),
                }
                .into());
            }
            opts.times.iter().map(|t| t / scale).collect()
        }
    };
    let max_rate = match &model {
        Some(m) => (m.j.abs() + m.delta.abs()).max(m.mu.abs()),
        None => chain.t_l.abs().max(chain.t_r.abs()),
    };
    let dt = opts.dt.unwrap_or_else(|| default_dt(max_rate));

    if let Some(band) = opts.band {
        if opts.method != Method::Rk4 {
            return Err(CliError::Config("continuum comparison runs with method rk4".into()));
        }
        let cmp = continuum_comparison(&chain, &opts.packet, band, &taus, dt, opts.precision.unwrap_or(Precision::Auto))?;
        if let Some(bad) = cmp.points.iter().find(|p| p.error.is_some()) {
            return Err(CliError::Failed(format!(
                "continuum comparison aborted at tau = {}: {}",
                bad.tau,
                bad.error.as_deref().unwrap_or_default()
            )));
        }
        let lattice = Trajectory {
            times: taus.clone(),
            states: cmp.points.iter().map(|p| FieldState::new(p.tau, p.lattice.clone())).collect(),
            fingerprint: cmp.fingerprint.clone(),
        };
        let overlay = Trajectory {
            times: taus.clone(),
            states: cmp
                .points
                .iter()
                .map(|p| FieldState::new(p.tau, p.continuum.clone().expect("no error means an overlay")))
                .collect(),
            fingerprint: cmp.fingerprint.clone(),
        };
        let points: Vec<Value> = cmp
            .points
            .iter()
            .zip(&opts.times)
            .map(|(p, t)| json!({ "tau": p.tau, "time": t, "rel_l2": p.rel_l2, "observables": p.lattice_obs }))
            .collect();
        return Ok(Report {
            files: vec![
                (out.to_path_buf(), csv_bytes(|b| write_trajectory_csv(b, &lattice))),
                (sibling(out, ".continuum.csv"), csv_bytes(|b| write_trajectory_csv(b, &overlay))),
            ],
            results: json!({
                "chain": chain,
                "generator_fingerprint": cmp.fingerprint,
                "dt": dt,
                "band_scale": scale,
                "gain_subtracted": cmp.gain,
                "precision_bits": cmp.precision_bits,
                "coefficients": cmp.coeffs,
                "points": points,
            }),
            status: 0,
        });
    }

    let packet = gaussian_wavepacket(&opts.packet, &chain)?;
    let (g, s0) = match &model {
        Some(m) => (build_generator_coupled(m)?, packet.embed(opts.packet.quadrature)),
        None => (build_generator_hn(&chain), packet),
    };
    let traj = match opts.method {
        Method::Rk4 => evolve_rk4_at(&g, &s0, &taus, dt)?,
        Method::Exact => evolve_exact(&eigs(&g, &EigsOptions::with_vectors())?, &s0, &taus)?,
    };
    for st in &traj.states {
        if model.is_some() {
            check_boundary_coupled(st, chain.l)?;
        } else {
            check_boundary(st)?;
        }
    }
    let weights = model.is_none().then(|| chain.natural_weights());
    Ok(Report {
        files: vec![(out.to_path_buf(), csv_bytes(|b| write_trajectory_csv(b, &traj)))],
        results: json!({
            "generator": if model.is_some() { "coupled" } else { "chain" },
            "chain": chain,
            "generator_fingerprint": traj.fingerprint,
            "dt": if opts.method == Method::Rk4 { Some(dt) } else { None },
            "band_scale": scale,
            "observables": observable_series(&traj, weights.as_deref())?,
        }),
        status: 0,
    })
}

pub fn stable_mode(cfg: &RunConfig, out: &Path) -> Out {
    let target = cfg.spectrum.as_ref().and_then(|s| s.target);
    let chain = single_chain(cfg, target)?;
    let modes = stationary_modes(&chain)?;
    let Some(right) = modes.right_kernel.clone() else {
        return Err(Error::WrongRegime {
            operation: "stable-mode",
            reason: format!("L = {} is even; an open chain has a kernel only for odd L", chain.l),
        }
        .into());
    };
    let g = build_generator_hn(&chain);
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let residual = norm(&g.apply(&right)) / (g.norm_inf() * norm(&right));
    let left = modes.left_kernel.clone();
    let rows = (0..chain.l).map(|i| {
        vec![
            (i + 1).to_string(),
            fmt_f64(right[i]),
            left.as_ref().map(|l| fmt_f64(l[i])).unwrap_or_default(),
        ]
    });
    Ok(Report {
        files: vec![(
            out.to_path_buf(),
            csv_bytes(|b| write_table(b, &["site", "right_kernel", "left_kernel"], rows)),
        )],
        results: json!({
            "chain": chain,
            "regime": chain.regime(),
            "relative_residual": residual,
            "odd_site_ratio": -chain.t_r / chain.t_l,
        }),
        status: 0,
    })
}

/// Deviations of the reduced tree profile from the chain are allowed up to this.
pub const TREE_TOLERANCE: f64 = 1e-8;

pub fn tree_check(cfg: &RunConfig, out: &Path) -> Out {
    let opts = section(&cfg.tree, "tree")?;
    let tree = build_tree(opts.q, opts.layers)?;
    let values: Vec<f64> = match &opts.layer_values {
        Some(v) => v.clone(),
        None => (1..=opts.layers).map(|n| (-((n as f64 - 3.0).powi(2)) / 2.0).exp()).collect(),
    };
    let values: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    let s0 = layer_uniform_state(&tree, &values)?;
    let traj = evolve_tree(&tree, opts.t, &s0, &opts.times, opts.method)?;
    let reduced = reduce_tree(&tree, &traj)?;

    let chain = tree_chain(&tree, opts.t);
    let g = chain_schrodinger_generator(&chain);
    let c0 = FieldState::new(0.0, values.iter().map(|z| z.re).chain(values.iter().map(|z| z.im)).collect());
    let reference = match opts.method {
        TreeMethod::Rk4 { dt } => evolve_rk4_at(&g, &c0, &opts.times, dt)?,
        TreeMethod::Exact => evolve_exact(&eigs(&g, &EigsOptions::with_vectors())?, &c0, &opts.times)?,
    };
    let mut max_dev = 0.0f64;
    let mut rows = Vec::new();
    for (a, b) in reduced.states.iter().zip(&reference.states) {
        let (za, zb) = (unpack_complex(&a.values), unpack_complex(&b.values));
        for (n, (x, y)) in za.iter().zip(&zb).enumerate() {
            max_dev = max_dev.max((x - y).norm());
            rows.push(vec![
                fmt_f64(a.tau),
                (n + 1).to_string(),
                fmt_f64(x.re),
                fmt_f64(x.im),
                fmt_f64(y.re),
                fmt_f64(y.im),
            ]);
        }
    }
    if !(max_dev <= TREE_TOLERANCE) {
        return Err(CliError::Failed(format!(
            "reduced tree profile deviates from the chain by {max_dev:.3e} (tolerance {TREE_TOLERANCE:e})"
        )));
    }
    let mut files = vec![(
        out.to_path_buf(),
        csv_bytes(|b| write_table(b, &["tau", "layer", "re_tree", "im_tree", "re_chain", "im_chain"], rows)),
    )];
    if opts.edges {
        files.push((sibling(out, ".edges.csv"), csv_bytes(|b| write_edge_list_csv(b, &tree))));
    }
    Ok(Report {
        files,
        results: json!({
            "nodes": tree.node_count(),
            "chain": chain,
            "max_deviation": max_dev,
            "tolerance": TREE_TOLERANCE,
            "generator_fingerprint": traj.fingerprint,
        }),
        status: 0,
    })
}

pub fn curved_op(cfg: &RunConfig, out: &Path) -> Out {
    let opts = section(&cfg.curved, "curved")?;
    let target = cfg.spectrum.as_ref().and_then(|s| s.target);
    let chain = single_chain(cfg, target)?;
    let coeffs = continuum_coefficients(&chain, opts.band)?;
    let metric = HyperbolicMetric::for_chain(&chain)?;
    let op: Generator = match chain.regime() {
        Regime::Oscillatory => build_curved_schrodinger_operator(
            &metric,
            coeffs.mass.expect("oscillatory coefficients carry a mass"),
            coeffs.reaction,
            chain.hbar,
        )?,
        _ => build_curved_diffusion_operator(
            &metric,
            coeffs.diffusion.expect("diffusive coefficients carry D"),
            coeffs.reaction,
        )?,
    };
    let rows = convergence_study(&chain, opts.band, opts.refine as u32)?;
    let ratios: Vec<Option<f64>> = std::iter::once(None)
        .chain(rows.windows(2).map(|w| Some(w[0].error / w[1].error)))
        .collect();
    let table: Vec<Value> = rows
        .iter()
        .zip(&ratios)
        .map(|(r, q)| json!({ "comparison": r, "error_ratio": q }))
        .collect();
    Ok(Report {
        files: vec![(out.to_path_buf(), csv_bytes(|b| write_generator_csv(b, &op)))],
        results: json!({
            "chain": chain,
            "metric": metric,
            "coefficients": coeffs,
            "diagonal_constant": rows[0].constant,
            "generator_fingerprint": op.fingerprint(),
            "refinement": table,
        }),
        status: 0,
    })
}

pub fn gap_scan(cfg: &RunConfig, out: &Path) -> Out {
    let opts = section(&cfg.scan, "scan")?;
    if opts.ls.is_empty() || opts.mus.is_empty() {
        return Err(CliError::Config("`scan.L` and `scan.mu` must not be empty".into()));
    }
    let grid = GapScanGrid {
        j: opts.j,
        delta: opts.delta,
        ls: opts.ls.clone(),
        mus: opts.mus.clone(),
        exact: opts.exact,
    };
    let table = run_gap_scan(&grid)?;
    let fit = asymptotic_scaling(&table);
    let failed = table.rows.iter().all(|r| r.error.is_some());
    Ok(Report {
        files: vec![(out.to_path_buf(), csv_bytes(|b| write_scan_csv(b, &table)))],
        results: json!({
            "rows": table.rows.len(),
            "failed_rows": table.rows.iter().filter(|r| r.error.is_some()).count(),
            "fit": fit.as_ref().ok(),
            "fit_error": fit.as_ref().err().map(|e| e.to_string()),
        }),
        status: if failed { 1 } else { 0 },
    })
}

fn sweep_point(j: f64, l: usize, delta: f64, mu: f64, target: SweepTarget) -> Result<f64, Error> {
    let p = ModelParams::reduced(j, delta, mu, l);
    p.validate()?;
    match target {
        SweepTarget::GapPrediction => gap_prediction(&p),
        SweepTarget::DoubletGap => Ok(doublet_gap(&p)?.splitting),
        SweepTarget::GroundEnergy => {
            if delta.abs() >= j.abs() {
                return Err(Error::WrongRegime {
                    operation: "ground_energy",
                    reason: format!("needs |Delta| < J, got Delta = {delta}, J = {j}"),
                });
            }
            Ok(ground_energy(&p))
        }
        SweepTarget::SpectralRadius => {
            Ok(eigs(&build_generator_coupled(&p)?, &EigsOptions::default())?.spectral_radius())
        }
    }
}

pub fn sweep(cfg: &RunConfig, out: &Path) -> Out {
    let opts = section(&cfg.sweep, "sweep")?;
    if opts.ls.is_empty() || opts.deltas.is_empty() || opts.mus.is_empty() {
        return Err(CliError::Config("sweep grids `L`, `Delta` and `mu` must not be empty".into()));
    }
    let mut grid = Vec::with_capacity(opts.ls.len() * opts.deltas.len() * opts.mus.len());
    for &l in &opts.ls {
        for &delta in &opts.deltas {
            for &mu in &opts.mus {
                grid.push((l, delta, mu));
            }
        }
    }
    let results: Vec<Result<f64, Error>> = grid
        .par_iter()
        .map(|&(l, delta, mu)| sweep_point(opts.j, l, delta, mu, opts.target))
        .collect();
    let ok = results.iter().filter(|r| r.is_ok()).count();
    let rows = grid.iter().zip(&results).map(|(&(l, delta, mu), r)| {
        let (value, status) = match r {
            Ok(v) => (fmt_f64(*v), "ok".to_string()),
            Err(e) => (String::new(), e.to_string()),
        };
        vec![l.to_string(), fmt_f64(delta), fmt_f64(mu), value, status]
    });
    Ok(Report {
        files: vec![(
            out.to_path_buf(),
            csv_bytes(|b| write_table(b, &["L", "Delta", "mu", "value", "status"], rows)),
        )],
        results: json!({
            "points": grid.len(),
            "succeeded": ok,
            "failed": grid.len() - ok,
        }),
        status: if ok == 0 { 1 } else { 0 },
    })
}
