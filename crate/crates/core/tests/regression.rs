use kitaev_core::dynamics::{evolve_rk4_at, gaussian_wavepacket, observables, Quadrature, WavepacketSpec};
use kitaev_core::model::{band_edge_k0, build_generator_coupled, hn_chains, Band, ModelParams};
use kitaev_core::perturbation::{
    asymptotic_scaling, chi, closed_form_m, gap_prediction, gap_scan, offdiag_elements, GapScanGrid,
};
use kitaev_core::spectral::doublet_gap;

#[test]
fn m12_approaches_chi_l_over_l_cubed() {
    let scaled = |l: usize| {
        let p = ModelParams::reduced(1.0, 0.2, 1.0, l);
        let (m12, _) = offdiag_elements(&p).unwrap();
        m12.norm() * (l as f64).powi(3) / chi(&p).unwrap().powi(l as i32)
    };
    let r = scaled(80) / scaled(120);
    assert!((r - 1.0).abs() < 0.05, "ratio {r}");
}

#[test]
fn frozen_gap_at_l50_delta02() {
    let p = ModelParams::reduced(1.0, 0.2, 1e-6, 50);
    let pred = gap_prediction(&p).unwrap();
    assert!((pred - 2.527794648499421e-4).abs() < 1e-15, "{pred:e}");
    let exact = doublet_gap(&p).unwrap().splitting;
    assert!((exact - pred).abs() / pred < 0.01, "exact {exact:e} vs {pred:e}");
}

#[test]
fn closed_form_identity_at_delta02() {
    for l in [10, 50, 100] {
        let p = ModelParams::reduced(1.0, 0.2, 1.0, l);
        let (m12, _) = offdiag_elements(&p).unwrap();
        let c = closed_form_m(&p).unwrap();
        assert!((m12.norm() - c.abs()).abs() <= 1e-12 * c.abs(), "L = {l}");
    }
}

#[test]
fn flat_limit_has_no_exponential_growth() {
    let grid = GapScanGrid {
        j: 1.0,
        delta: 0.0,
        ls: (40..=120).step_by(10).collect(),
        mus: vec![1e-10],
        exact: false,
    };
    // without curvature the window (L+1)·ln χ > 5 never opens
    assert!(asymptotic_scaling(&gap_scan(&grid).unwrap()).is_err());
    for l in [40, 80, 120] {
        let de = gap_prediction(&ModelParams::reduced(1.0, 0.0, 1e-10, l)).unwrap();
        assert!((de - 2e-10).abs() < 1e-24);
    }
}

#[test]
fn x_and_p_packets_drift_to_opposite_edges() {
    for (delta, width, center) in [(0.2, 4.0, 40.0), (0.5, 5.0, 35.0), (0.8, 3.0, 45.0)] {
        let p = ModelParams::reduced(1.0, delta, 0.0, 80);
        let (xc, pc) = hn_chains(&p).unwrap();
        let g = build_generator_coupled(&p).unwrap();
        let times: Vec<f64> = (0..=8).map(|k| k as f64 * 1.5).collect();
        let mut drift = Vec::new();
        for (q, chain) in [(Quadrature::X, xc), (Quadrature::P, pc)] {
            // zero group velocity at the band bottom leaves only the drift set by A
            let spec = WavepacketSpec {
                center,
                width,
                k0: band_edge_k0(&chain, Band::Bottom).unwrap(),
                tilt: false,
                quadrature: q,
            };
            let s0 = gaussian_wavepacket(&spec, &chain).unwrap().embed(q);
            let traj = evolve_rk4_at(&g, &s0, &times, 0.01).unwrap();
            let half = |v: &[f64]| match q {
                Quadrature::X => v[..80].to_vec(),
                Quadrature::P => v[80..].to_vec(),
            };
            let centers: Vec<f64> = traj
                .states
                .iter()
                .map(|s| {
                    let st = kitaev_core::dynamics::FieldState::new(s.tau, half(&s.values));
                    observables(&st, None).unwrap().center
                })
                .collect();
            let steps: Vec<f64> = centers.windows(2).map(|w| w[1] - w[0]).collect();
            let dir = steps[0].signum();
            assert!(steps.iter().all(|s| s.signum() == dir), "{q:?} Δ = {delta}: {centers:?}");
            drift.push(dir);
        }
        assert_eq!(drift, vec![1.0, -1.0], "Δ = {delta}");
    }
}
