use super::*;
use crate::model::GaussianPacket;
use crate::thermo::equilibrium_field;
use crate::wignerpde::{gaussian_field, FieldKind, PhaseGrid};

fn iso(t: f64, duration: f64, l0: f64, l1: f64) -> Segment {
    Segment::ramp(SegmentKind::Isothermal { temperature: t }, duration, l0, l1).unwrap()
}

fn adiabat(duration: f64, l0: f64, l1: f64) -> Segment {
    Segment::ramp(SegmentKind::Adiabatic, duration, l0, l1).unwrap()
}

#[test]
fn cycle_validation() {
    assert!(CycleSpec::new(vec![iso(1.0, 1.0, 1.0, 2.0)], 1).is_err());
    assert!(CycleSpec::new(vec![iso(1.0, 1.0, 1.0, 2.0), adiabat(1.0, 1.5, 1.0)], 1).is_err());
    assert!(CycleSpec::new(vec![iso(1.0, 1.0, 1.0, 2.0), adiabat(1.0, 2.0, 1.0)], 0).is_err());
    assert!(CycleSpec::new(
        vec![iso(1.0, 1.0, 1.0, 2.0), iso(2.0, 1.0, 2.0, 3.0), iso(3.0, 1.0, 3.0, 1.0)],
        1
    )
    .is_err());
    assert!(Segment::ramp(SegmentKind::Adiabatic, 0.0, 1.0, 1.0).is_err());
    let ok = CycleSpec::carnot(2.0, 1.0, [4.0, 3.0, 0.75, 1.0], 1.0, 1.0, 2).unwrap();
    assert_eq!(ok.temperatures(), Some((1.0, 2.0)));
    let json = serde_json::to_string(&ok).unwrap();
    let back: CycleSpec = serde_json::from_str(&json).unwrap();
    assert_eq!(back, ok);

    let p = PhysicalParams::new(1.0, 0.0, 1.0, 0.0).unwrap();
    let g = PhaseGrid::symmetric(8.0, 64, 8.0, 64).unwrap();
    let (eq, _) = equilibrium_field(&g, &p, &PotentialSpec::harmonic(), 4.0).unwrap();
    let err = run_cycle(&ok, &p, &PotentialSpec::harmonic(), LedgerState::from_initial(&eq), &CycleOptions::new(1e-3, 10));
    assert!(err.is_err(), "isothermal segments need a bath");
}

#[test]
fn null_cycle_extracts_nothing() {
    let p = PhysicalParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
    let spec = PotentialSpec::harmonic();
    let g = PhaseGrid::symmetric(8.0, 96, 8.0, 96).unwrap();
    let (eq, _) = equilibrium_field(&g, &p, &spec, 1.0).unwrap();
    let cycle = CycleSpec::new(vec![iso(1.0, 0.5, 1.0, 1.0), adiabat(0.5, 1.0, 1.0), iso(1.0, 0.5, 1.0, 1.0)], 1).unwrap();
    let report = run_cycle(&cycle, &p, &spec, LedgerState::from_initial(&eq), &CycleOptions::new(2e-3, 25)).unwrap();
    let c = report.last();
    assert_eq!(c.w_ext, 0.0);
    assert!(c.slack > -1e-8 && c.slack.abs() < 1e-6, "{}", c.slack);
    for s in &report.segments {
        assert!(segment_bound_check(s).abs() < 1e-6, "{}", s.bound_margin);
    }
    assert_eq!(report.segments[1].heat, 0.0);
}

#[test]
fn relaxation_margin_equals_entropy_production() {
    let p = PhysicalParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
    let spec = PotentialSpec::harmonic();
    let g = PhaseGrid::symmetric(8.0, 128, 8.0, 128).unwrap();
    let start = gaussian_field(&g, &GaussianPacket::new(1.5, 0.0, 0.6, 0.6).unwrap(), FieldKind::Classical).unwrap();
    let cycle = CycleSpec::new(vec![iso(1.0, 1.0, 1.0, 1.0)], 1).unwrap();
    let report = run_cycle(&cycle, &p, &spec, LedgerState::from_initial(&start), &CycleOptions::new(1e-3, 50)).unwrap();
    let seg = &report.segments[0];
    for r in &seg.ledger.rows {
        let margin = -r.de_dt + (r.ds_sh_dt + r.s_me_rate) + r.work_rate;
        assert!((margin - r.rhs).abs() < 1e-3 * r.rhs.max(1.0), "{margin} vs {}", r.rhs);
    }
    assert!(seg.bound_margin > 0.0);
    assert!(seg.slack > 0.0);
}

#[test]
fn fast_harmonic_cycle_respects_bound() {
    let p = PhysicalParams::new(1.0, 2.5, 2.0, 0.0).unwrap();
    let spec = PotentialSpec::harmonic();
    let g = PhaseGrid::symmetric(10.5, 180, 13.0, 156).unwrap();
    let (eq, _) = equilibrium_field(&g, &p, &spec, 4.0).unwrap();
    let cycle = CycleSpec::carnot(2.0, 1.0, [4.0, 3.0, 0.75, 1.0], 2.0, 2.0, 1).unwrap();
    let report = run_cycle(&cycle, &p, &spec, LedgerState::from_initial(&eq), &CycleOptions::new(1e-3, 100)).unwrap();
    let c = report.last();
    assert!(c.w_ext <= c.bound, "{c:?}");
    assert!(report.segments.iter().all(|s| s.kind == SegmentKind::Adiabatic || s.identity_ratio.unwrap() < 1.0));
    assert!(report.segments.iter().filter(|s| s.kind == SegmentKind::Adiabatic).all(|s| s.heat == 0.0));
    let json = report.to_json().unwrap();
    for key in ["w_ext", "delta_s_l", "delta_s_h", "bound", "slack", "memory_share", "heat", "work"] {
        assert!(json.contains(&format!("\"{key}")), "{key}");
    }
}

#[test]
fn gamma_policy_resets_memory_factor() {
    let p = PhysicalParams::new(1.0, 1.0, 1.0, 0.0).unwrap();
    let spec = PotentialSpec::harmonic();
    let g = PhaseGrid::symmetric(8.0, 64, 8.0, 64).unwrap();
    let (eq, _) = equilibrium_field(&g, &p, &spec, 1.0).unwrap();
    let base = CycleSpec::new(vec![iso(1.0, 0.2, 1.0, 1.0), iso(1.0, 0.2, 1.0, 1.0)], 1).unwrap();
    let opts = CycleOptions::new(2e-3, 50);
    let cont = run_cycle(&base, &p, &spec, LedgerState::from_initial(&eq), &opts).unwrap();
    assert!((cont.segments[1].gamma_start - (-0.2f64).exp()).abs() < 1e-12);
    let reset = run_cycle(&base.with_gamma_policy(GammaPolicy::Reset), &p, &spec, LedgerState::from_initial(&eq), &opts).unwrap();
    assert_eq!(reset.segments[1].gamma_start, 1.0);
}
