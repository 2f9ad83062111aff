use super::*;
use crate::thermo::equilibrium_field;

fn unit_params() -> PhysicalParams {
    PhysicalParams::new(1.0, 1.0, 1.0, 1.0).unwrap()
}

fn rel_norm(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    d / b.iter().map(|y| y * y).sum::<f64>().sqrt()
}

#[test]
fn grid_validation() {
    assert!(PhaseGrid::symmetric(4.0, 16, 4.0, 64).is_err());
    assert!(PhaseGrid::new(1.0, -1.0, 64, -1.0, 1.0, 64).is_err());
    let g = PhaseGrid::symmetric(4.0, 65, 2.0, 33).unwrap();
    assert!((g.hx() - 0.125).abs() < 1e-15);
    assert!((g.p(32) - 2.0).abs() < 1e-15);
}

#[test]
fn gaussian_wigner_normalization_and_moments() {
    let p = unit_params();
    let g = PhaseGrid::symmetric(6.0, 128, 8.0, 128).unwrap();
    let f = gaussian_wigner(&g, 1.0, 2.0, 0.6, &p).unwrap();
    assert!((f.integral() - 1.0).abs() < 1e-8);
    let m = f.moments(&p, &PotentialSpec::harmonic(), 1.0);
    assert!((m.x - 1.0).abs() < 1e-8 && (m.p - 2.0).abs() < 1e-8);
    assert!((m.x2 - m.x * m.x - 0.36).abs() < 1e-8);
    assert!((m.p2 - m.p * m.p - 1.0 / (4.0 * 0.36)).abs() < 1e-8);
}

#[test]
fn centred_gaussian_is_point_symmetric() {
    let p = unit_params();
    let g = PhaseGrid::symmetric(5.0, 64, 5.0, 64).unwrap();
    let f = gaussian_wigner(&g, 0.0, 0.0, 0.7, &p).unwrap();
    let n = f.values.len();
    for k in 0..n {
        assert!((f.values[k] - f.values[n - 1 - k]).abs() < 1e-15);
    }
}

#[test]
fn unresolved_packet_is_rejected() {
    let p = unit_params();
    let g = PhaseGrid::symmetric(5.0, 64, 5.0, 64).unwrap();
    assert!(gaussian_wigner(&g, 0.0, 0.0, 0.2, &p).is_err());
    // σ_p = ħ/2σ = 0.1 < 4 hp
    assert!(gaussian_wigner(&g, 0.0, 0.0, 5.0, &p).is_err());
}

#[test]
fn harmonic_sigma_vanishes() {
    let p = unit_params();
    let g = PhaseGrid::symmetric(6.0, 96, 6.0, 96).unwrap();
    let q = gaussian_wigner(&g, 0.5, -0.3, 0.8, &p).unwrap();
    let mut c = q.clone();
    c.kind = FieldKind::Classical;
    let spec = PotentialSpec::harmonic();
    assert_eq!(rhs_eval(&q, &p, &spec, 1.3, 0.2).unwrap(), rhs_eval(&c, &p, &spec, 1.3, 0.2).unwrap());
    assert!(sigma_eval(&q, &p, &spec, 1.3, 1.0).iter().all(|v| *v == 0.0));
}

#[test]
fn equilibrium_is_stationary() {
    let p = unit_params();
    let spec = PotentialSpec::harmonic();
    let residual = |n: usize| {
        let g = PhaseGrid::symmetric(7.5, n, 7.5, n).unwrap();
        let (eq, _) = equilibrium_field(&g, &p, &spec, 1.0).unwrap();
        let r = rhs_eval(&eq, &p, &spec, 1.0, 0.0).unwrap();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        norm(&r) / norm(&eq.values)
    };
    let (coarse, fine) = (residual(128), residual(256));
    // the Gibbs state is stationary up to the fourth-order truncation error
    assert!(((coarse / fine).log2() - 4.0).abs() < 0.3, "{coarse} {fine}");
    assert!(fine < 5e-6, "{fine}");
}

#[test]
fn quartic_sigma_matches_hand_stencil() {
    let p = PhysicalParams::new(1.0, 1.0, 1.0, 0.8).unwrap();
    let g = PhaseGrid::symmetric(4.0, 64, 5.0, 96).unwrap();
    let spec = PotentialSpec::new(vec![0.0, 0.0, 0.0, 0.0, 0.25], 1).unwrap();
    let f = gaussian_wigner(&g, 0.3, 0.2, 0.6, &p).unwrap();
    let gamma = 0.7;
    let sigma = sigma_eval(&f, &p, &spec, 0.0, gamma);
    let hp = g.hp();
    let c = [1.0 / 8.0, -1.0, 13.0 / 8.0, 0.0, -13.0 / 8.0, 1.0, -1.0 / 8.0];
    let mut worst: f64 = 0.0;
    for i in 0..g.nx {
        let x = g.x(i);
        for j in 0..g.np {
            let mut d3 = 0.0;
            for (k, ck) in c.iter().enumerate() {
                let jj = j as isize + k as isize - 3;
                if jj >= 0 && (jj as usize) < g.np {
                    d3 += ck * f.values[g.index(i, jj as usize)];
                }
            }
            d3 /= hp.powi(3);
            let hand = -(0.8f64.powi(2) * gamma * gamma * x / 4.0) * d3;
            worst = worst.max((sigma[g.index(i, j)] - hand).abs());
        }
    }
    assert!(worst < 1e-12, "{worst}");
    // the full quantum rhs differs from the classical one by exactly Σ
    let mut c = f.clone();
    c.kind = FieldKind::Classical;
    let t = -(gamma as f64).ln();
    let rq = rhs_eval(&f, &p, &spec, 0.0, t).unwrap();
    let rc = rhs_eval(&c, &p, &spec, 0.0, t).unwrap();
    for k in 0..rq.len() {
        assert!((rq[k] - rc[k] - sigma[k]).abs() < 1e-9);
    }
}

#[test]
fn rhs_and_sigma_conserve_norm_and_energy() {
    let p = PhysicalParams::new(1.0, 0.7, 1.2, 1.0).unwrap();
    let g = PhaseGrid::symmetric(6.5, 128, 8.0, 128).unwrap();
    let spec = PotentialSpec::scaled(vec![0.0, 0.1, 0.0, 0.2, 0.25, 0.0, 0.01], 2, 0.5).unwrap();
    let f = gaussian_wigner(&g, 0.4, -0.5, 0.7, &p).unwrap();
    let r = rhs_eval(&f, &p, &spec, 1.0, 0.1).unwrap();
    assert!(g.integrate(&r).abs() < 1e-10, "{}", g.integrate(&r));
    let sigma = sigma_eval(&f, &p, &spec, 1.0, 1.0);
    assert!(sigma.iter().any(|v| v.abs() > 1e-3));
    let coeffs = spec.coefficients_at(1.0);
    let e = g.integrate_with(&sigma, |x, pp, s| (pp * pp / 2.0 + coeffs.iter().rev().fold(0.0, |a, c| a * x + c)) * s);
    assert!(e.abs() < 1e-8 * p.nu() * p.kt() / p.mass(), "{e}");
}

#[test]
fn free_streaming_matches_shear_flow() {
    let p = PhysicalParams::new(1.0, 0.0, 1.0, 1.0).unwrap();
    let g = PhaseGrid::symmetric(10.0, 256, 9.5, 256).unwrap();
    let f0 = gaussian_wigner(&g, -1.0, 1.0, 0.5, &p).unwrap();
    let spec = PotentialSpec::free();
    let dt = 2.5e-3;
    let out = evolve(&f0, &p, &spec, &Schedule::constant(0.0), &EvolveOptions::new(dt, 1.0, 400)).unwrap();
    let end = out.snapshots.last().unwrap();
    assert!((end.t - 1.0).abs() < 1e-12);
    let exact = WignerField::from_fn(g.clone(), FieldKind::Quantum, |x, pp| {
        let (sx, sp) = (0.5, 1.0);
        let (dx, dp) = (x - pp - -1.0, pp - 1.0);
        (-dx * dx / (2.0 * sx * sx) - dp * dp / (2.0 * sp * sp)).exp() / (2.0 * std::f64::consts::PI * sx * sp)
    });
    let l1 = end.l1_distance(&exact).unwrap();
    assert!(l1 < 1e-3, "L1 {l1}");
    assert!(out.diagnostics.max_norm_drift < 1e-6);
}

#[test]
fn quantum_harmonic_evolution_equals_classical() {
    let p = unit_params();
    let g = PhaseGrid::symmetric(7.5, 120, 7.5, 120).unwrap();
    let f = gaussian_wigner(&g, 1.0, 0.0, 0.8, &p).unwrap();
    let mut c = f.clone();
    c.kind = FieldKind::Classical;
    let spec = PotentialSpec::harmonic();
    let s = Schedule::ramp(0.0, 1.0, 0.5, 1.5).unwrap();
    let opts = EvolveOptions::new(1e-3, 0.5, 50);
    let a = evolve(&f, &p, &spec, &s, &opts).unwrap();
    let b = evolve(&c, &p, &spec, &s, &opts).unwrap();
    let (ea, eb) = (a.snapshots.last().unwrap(), b.snapshots.last().unwrap());
    assert!(ea.values.iter().zip(&eb.values).all(|(x, y)| (x - y).abs() < 1e-12));
}

#[test]
fn relaxes_to_gibbs_state() {
    let p = PhysicalParams::new(1.0, 2.0, 1.0, 1.0).unwrap();
    let g = PhaseGrid::symmetric(8.0, 128, 8.0, 128).unwrap();
    let spec = PotentialSpec::harmonic();
    let f = gaussian_wigner(&g, 0.0, 0.0, 0.6, &p).unwrap();
    let dt = 1e-3;
    let out = evolve(&f, &p, &spec, &Schedule::constant(1.0), &EvolveOptions::new(dt, 8.0, 8000)).unwrap();
    let (eq, _) = equilibrium_field(&g, &p, &spec, 1.0).unwrap();
    let l1 = out.snapshots.last().unwrap().l1_distance(&eq).unwrap();
    assert!(l1 < 1e-3, "L1 {l1}");
    let m = eq.moments(&p, &spec, 1.0);
    assert!((m.p2 - 1.0).abs() < 1e-6 && (m.x2 - 1.0).abs() < 1e-6 && (m.energy - 1.0).abs() < 1e-6);
}

#[test]
fn quantum_correction_scales_with_hbar_squared() {
    // p range covers the energy of the x boundary so tails cannot leave the grid
    let g = PhaseGrid::symmetric(4.0, 128, 12.0, 128).unwrap();
    let spec = PotentialSpec::harmonic_quartic(1.0).unwrap();
    let packet = GaussianPacket::new(0.0, 0.5, 0.45, 0.8).unwrap();
    let delta = |hbar: f64| {
        let p = PhysicalParams::new(1.0, 1.0, 1.0, hbar).unwrap();
        let f = gaussian_field(&g, &packet, FieldKind::Quantum).unwrap();
        let mut c = f.clone();
        c.kind = FieldKind::Classical;
        let opts = EvolveOptions::new(2e-4, 0.4, 2000);
        let s = Schedule::constant(1.0);
        let a = evolve(&f, &p, &spec, &s, &opts).unwrap();
        let b = evolve(&c, &p, &spec, &s, &opts).unwrap();
        a.snapshots.last().unwrap().l1_distance(b.snapshots.last().unwrap()).unwrap()
    };
    let ratio = delta(0.4) / delta(0.2);
    assert!((ratio - 4.0).abs() < 0.2, "ratio {ratio}");
}

#[test]
fn step_above_bound_is_rejected_and_blowup_detected() {
    let p = unit_params();
    let g = PhaseGrid::symmetric(6.0, 96, 6.0, 96).unwrap();
    let spec = PotentialSpec::harmonic();
    let f = gaussian_wigner(&g, 0.0, 0.0, 0.8, &p).unwrap();
    let s = Schedule::constant(1.0);
    let bound = stable_dt(&g, &p, &spec, (1.0, 1.0), 1.0, FieldKind::Quantum, DEFAULT_COURANT);
    let err = evolve(&f, &p, &spec, &s, &EvolveOptions::new(2.0 * bound, 1.0, 1)).unwrap_err();
    assert!(err.to_string().contains("stability bound"));
    let mut stepper = WignerStepper::new(&p, &spec, &s, &g, 40.0 * bound).unwrap();
    let mut blown = f.clone();
    let peak0 = f.peak();
    let mut aborted = false;
    for _ in 0..200 {
        stepper.step(&mut blown).unwrap();
        if check_blowup(&blown, peak0).is_err() {
            aborted = true;
            break;
        }
    }
    assert!(aborted);
}

#[test]
fn snapshot_round_trip() {
    let p = unit_params();
    let g = PhaseGrid::symmetric(5.0, 72, 5.0, 72).unwrap();
    let mut f = gaussian_wigner(&g, 0.2, 0.1, 0.8, &p).unwrap();
    f.t = 1.25;
    f.clock = 0.5;
    let dir = tempfile::tempdir().unwrap();
    let h = write_snapshot(&f, &dir.path().join("snap_bin"), SnapshotFormat::Binary).unwrap();
    assert_eq!(read_snapshot(&h).unwrap(), f);
    let h = write_snapshot(&f, &dir.path().join("snap_csv"), SnapshotFormat::Csv).unwrap();
    let back = read_snapshot(&h).unwrap();
    assert!(rel_norm(&back.values, &f.values) < 1e-14);
    let header: SnapshotHeader = serde_json::from_str(&std::fs::read_to_string(&h).unwrap()).unwrap();
    assert_eq!(header.layout, "x-outer,p-inner");
}
