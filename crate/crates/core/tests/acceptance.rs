//! Acceptance suite. Each test prints one PASS/FAIL line for its criterion,
//! followed by indented measurements, and then asserts the outcome.
//!
//! Run with `cargo test --release -p qse-core --test acceptance -- --nocapture`.

use std::sync::OnceLock;

use qse_core::crosscheck::{crosscheck, CrosscheckConfig, CrosscheckReport};
use qse_core::engine::{run_cycle, CycleOptions, CycleReport, CycleSpec, GammaPolicy};
use qse_core::heisenberg::{
    commutator_defect, ensemble_expectation, first_law_defect, heat_commutator_check, step_heisenberg, BasisSpec,
    EnsembleConfig, InitialWavepacket, Observable,
};
use qse_core::linalg::frobenius;
use qse_core::matrixqa::suite::identity_suite;
use qse_core::model::{GaussianPacket, PhysicalParams, PotentialSpec, Schedule};
use qse_core::noise::{NoisePath, NoiseStream};
use qse_core::thermo::{default_epsilon, equilibrium_field, run_ledger, shannon_entropy, DEFAULT_EPSILON_REL, LedgerOptions, LedgerRow, LedgerRun, LedgerState};
use qse_core::wignerpde::{gaussian_field, stable_dt, FieldKind, PhaseGrid, WignerField, DEFAULT_COURANT};

/// Collects sub-checks and prints the criterion verdict.
struct Verdict {
    id: u32,
    title: &'static str,
    lines: Vec<(bool, String)>,
}

impl Verdict {
    fn new(id: u32, title: &'static str) -> Self {
        Self { id, title, lines: Vec::new() }
    }

    fn check(&mut self, passed: bool, detail: String) {
        self.lines.push((passed, detail));
    }

    /// Records a measurement that is reported but not judged.
    fn note(&mut self, detail: String) {
        self.lines.push((true, format!("(info) {detail}")));
    }

    fn finish(self) {
        let passed = self.lines.iter().all(|(p, _)| *p);
        let mut out = format!("criterion {:>2} {}: {}\n", self.id, if passed { "PASS" } else { "FAIL" }, self.title);
        for (p, d) in &self.lines {
            out.push_str(&format!("    [{}] {d}\n", if *p { "ok" } else { "FAILED" }));
        }
        print!("{out}");
        assert!(passed, "criterion {} failed:\n{out}", self.id);
    }
}

fn sci(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.3e}")).collect::<Vec<_>>().join(", ")
}

/// Least-squares slope of ln y against ln x.
fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    linear_slope(&lx, ys)
}

/// Least-squares slope of ln y against x.
fn linear_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx = xs;
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let cov: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let var: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    cov / var
}

fn unit(hbar: f64) -> PhysicalParams {
    PhysicalParams::new(1.0, 1.0, 1.0, hbar).unwrap()
}

// ---------------------------------------------------------------------------
// Shared field runs

/// A labelled ledger run together with its parameters.
struct FieldRun {
    label: &'static str,
    params: PhysicalParams,
    runs: Vec<LedgerRun>,
    grid: PhaseGrid,
    spec: PotentialSpec,
}

impl FieldRun {
    fn rows(&self) -> impl Iterator<Item = &LedgerRow> {
        self.runs.iter().flat_map(|r| r.ledger.rows.iter())
    }

    fn final_field(&self) -> &WignerField {
        &self.runs.last().unwrap().state.rho_w
    }

    fn identity_ratio(&self) -> f64 {
        self.runs.iter().map(|r| r.ledger.identity_ratio(&self.params)).fold(0.0, f64::max)
    }

    fn min_rhs(&self) -> f64 {
        self.runs.iter().map(|r| r.ledger.min_rhs()).fold(f64::INFINITY, f64::min)
    }

    fn max_norm_drift(&self) -> f64 {
        self.runs.iter().map(|r| r.max_norm_drift).fold(0.0, f64::max)
    }
}

/// Static relaxation run in pieces; each piece takes the largest stable step
/// for the γ at its start, so the stiff early quantum phase does not dictate
/// the step for the whole run.
fn relax(
    label: &'static str,
    params: PhysicalParams,
    spec: PotentialSpec,
    grid: PhaseGrid,
    start: WignerField,
    schedule: Schedule,
    t_end: f64,
    piece: f64,
    sample_dt: f64,
) -> FieldRun {
    let pieces = (t_end / piece).round() as usize;
    let mut state = LedgerState::from_initial(&start);
    let mut runs = Vec::with_capacity(pieces);
    for _ in 0..pieces {
        let gamma = state.rho_w.gamma();
        let bound = stable_dt(&grid, &params, &spec, schedule.lambda_range(), gamma, start.kind, DEFAULT_COURANT);
        let steps = (piece / bound.min(1e-3)).ceil();
        let dt = piece / steps;
        let every = ((sample_dt / dt).round() as usize).max(1);
        let run = run_ledger(state, &params, &spec, &schedule, &LedgerOptions::new(dt, piece, every)).unwrap();
        state = run.state.clone();
        runs.push(run);
    }
    FieldRun { label, params, runs, grid, spec }
}

fn centred_packet(grid: &PhaseGrid, kind: FieldKind) -> WignerField {
    gaussian_field(grid, &GaussianPacket::minimum_uncertainty(0.0, 0.0, 0.5, 1.0).unwrap(), kind).unwrap()
}

fn harmonic_relaxation() -> &'static FieldRun {
    static RUN: OnceLock<FieldRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let g = PhaseGrid::symmetric(8.0, 256, 8.0, 256).unwrap();
        let f = centred_packet(&g, FieldKind::Quantum);
        relax("harmonic relaxation", unit(1.0), PotentialSpec::harmonic(), g, f, Schedule::constant(1.0), 10.0, 1.0, 0.05)
    })
}

fn quartic_relaxation() -> &'static FieldRun {
    static RUN: OnceLock<FieldRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let g = PhaseGrid::symmetric(4.5, 256, 8.5, 256).unwrap();
        let f = centred_packet(&g, FieldKind::Quantum);
        let spec = PotentialSpec::harmonic_quartic(0.25).unwrap();
        relax("quartic relaxation", unit(1.0), spec, g, f, Schedule::constant(1.0), 10.0, 0.5, 0.05)
    })
}

/// Stiffness ramp λ: 1 → 2 over t ∈ [0, 2] from the Gibbs state, followed by
/// one unit of relaxation.
fn driven_ramp(hbar: f64) -> FieldRun {
    let params = unit(hbar);
    let spec = PotentialSpec::harmonic();
    let g = PhaseGrid::symmetric(9.0, 144, 9.0, 144).unwrap();
    let (mut eq, _) = equilibrium_field(&g, &params, &spec, 1.0).unwrap();
    eq.kind = if hbar > 0.0 { FieldKind::Quantum } else { FieldKind::Classical };
    let schedule = Schedule::ramp(0.0, 1.0, 2.0, 2.0).unwrap();
    let label = if hbar > 0.0 { "driven ramp" } else { "driven ramp, classical" };
    relax(label, params, spec, g, eq, schedule, 3.0, 3.0, 0.05)
}

fn quantum_ramp() -> &'static FieldRun {
    static RUN: OnceLock<FieldRun> = OnceLock::new();
    RUN.get_or_init(|| driven_ramp(1.0))
}

fn classical_ramp() -> &'static FieldRun {
    static RUN: OnceLock<FieldRun> = OnceLock::new();
    RUN.get_or_init(|| driven_ramp(0.0))
}

fn classical_quartic_relaxation() -> &'static FieldRun {
    static RUN: OnceLock<FieldRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let g = PhaseGrid::symmetric(4.5, 128, 8.5, 128).unwrap();
        let f = gaussian_field(&g, &GaussianPacket::new(0.5, 0.0, 0.5, 1.0).unwrap(), FieldKind::Classical).unwrap();
        let spec = PotentialSpec::harmonic_quartic(0.25).unwrap();
        relax("quartic relaxation, classical", unit(0.0), spec, g, f, Schedule::constant(1.0), 3.0, 3.0, 0.05)
    })
}

fn crosscheck_report() -> &'static CrosscheckReport {
    static RUN: OnceLock<CrosscheckReport> = OnceLock::new();
    RUN.get_or_init(|| crosscheck(&CrosscheckConfig::harmonic_default(2024).unwrap()).unwrap())
}

// ---------------------------------------------------------------------------
// Shared engine cycles

struct CycleRun {
    label: String,
    params: PhysicalParams,
    report: CycleReport,
}

fn carnot_start(params: &PhysicalParams, spec: &PotentialSpec, grid: &PhaseGrid, kind: FieldKind) -> LedgerState {
    let (mut eq, _) = equilibrium_field(grid, &params.with_temperature(2.0).unwrap(), spec, 4.0).unwrap();
    eq.kind = kind;
    LedgerState::from_initial(&eq)
}

/// Quasi-static classical cycle: smooth ramps, long strokes, two repetitions.
fn slow_cycle() -> &'static CycleRun {
    static RUN: OnceLock<CycleRun> = OnceLock::new();
    RUN.get_or_init(|| {
        let params = PhysicalParams::new(1.0, 1.5, 2.0, 0.0).unwrap();
        let spec = PotentialSpec::harmonic();
        let g = PhaseGrid::symmetric(8.8, 150, 10.8, 130).unwrap();
        let cycle = CycleSpec::carnot(2.0, 1.0, [4.0, 3.0, 0.75, 1.0], 30.0, 15.0, 2).unwrap().smoothed(32).unwrap();
        let start = carnot_start(&params, &spec, &g, FieldKind::Classical);
        let report = run_cycle(&cycle, &params, &spec, start, &CycleOptions::new(1e-2, 1000)).unwrap();
        CycleRun { label: "slow classical".into(), params, report }
    })
}

fn fast_cycles() -> &'static Vec<CycleRun> {
    static RUN: OnceLock<Vec<CycleRun>> = OnceLock::new();
    RUN.get_or_init(|| {
        let params = PhysicalParams::new(1.0, 2.5, 2.0, 0.0).unwrap();
        let spec = PotentialSpec::harmonic();
        let g = PhaseGrid::symmetric(10.5, 180, 13.0, 156).unwrap();
        [GammaPolicy::Continue, GammaPolicy::Reset]
            .into_iter()
            .map(|policy| {
                let cycle = CycleSpec::carnot(2.0, 1.0, [4.0, 3.0, 0.75, 1.0], 2.0, 2.0, 2).unwrap().with_gamma_policy(policy);
                let start = carnot_start(&params, &spec, &g, FieldKind::Classical);
                let report = run_cycle(&cycle, &params, &spec, start, &CycleOptions::new(1e-2, 100)).unwrap();
                CycleRun { label: format!("fast classical, gamma {policy:?}"), params, report }
            })
            .collect()
    })
}

fn quartic_cycles() -> &'static Vec<CycleRun> {
    static RUN: OnceLock<Vec<CycleRun>> = OnceLock::new();
    RUN.get_or_init(|| {
        let params = PhysicalParams::new(1.0, 2.5, 2.0, 1.0).unwrap();
        let spec = PotentialSpec::harmonic_quartic(0.25).unwrap();
        let g = PhaseGrid::symmetric(7.5, 160, 14.0, 168).unwrap();
        [GammaPolicy::Continue, GammaPolicy::Reset]
            .into_iter()
            .map(|policy| {
                let cycle = CycleSpec::carnot(2.0, 1.0, [4.0, 3.0, 0.75, 1.0], 0.5, 0.5, 2).unwrap().with_gamma_policy(policy);
                let start = carnot_start(&params, &spec, &g, FieldKind::Quantum);
                let report = run_cycle(&cycle, &params, &spec, start, &CycleOptions::new(1e-3, 50)).unwrap();
                CycleRun { label: format!("quartic quantum, gamma {policy:?}"), params, report }
            })
            .collect()
    })
}

// ---------------------------------------------------------------------------
// Operator helpers

/// Mean guarded norm of a one-step defect over `draws` noise increments,
/// starting from the basis operators.
fn mean_step_defect(
    basis: &BasisSpec,
    params: &PhysicalParams,
    spec: &PotentialSpec,
    dt: f64,
    draws: usize,
    defect: impl Fn(&qse_core::heisenberg::OperatorState, &qse_core::heisenberg::OperatorState, &qse_core::heisenberg::StepIncrements) -> f64,
) -> f64 {
    let mut noise = NoiseStream::new(7, 0);
    let s = basis.initial_state();
    (0..draws)
        .map(|_| {
            let db = noise.standard_normal() * dt.sqrt();
            let (n, inc) = step_heisenberg(&s, params, spec, 1.0, 1.0, db, dt).unwrap();
            defect(&s, &n, &inc)
        })
        .sum::<f64>()
        / draws as f64
}

const STEP_DTS: [f64; 3] = [1e-3, 5e-4, 2.5e-4];

// ---------------------------------------------------------------------------
// Criteria

#[test]
fn criterion_01_commutator_decay() {
    let mut v = Verdict::new(1, "commutator decays as i hbar exp(-nu t / m) on the guarded subspace");
    let params = unit(1.0);
    let basis = BasisSpec::new(64, 16, 1.0, &params).unwrap();
    let dt = 1e-4;
    let steps = 30_000;
    let path = NoisePath::generate(2024, 0, dt, steps);
    for (label, spec, tol) in [("harmonic", PotentialSpec::harmonic(), 1e-4), ("free", PotentialSpec::free(), 1e-6)] {
        let mut s = basis.initial_state();
        let mut worst = commutator_defect(&s, &params);
        for (k, db) in path.increments.iter().enumerate() {
            s = step_heisenberg(&s, &params, &spec, 1.0, 1.0, *db, dt).unwrap().0;
            if (k + 1) % 100 == 0 {
                worst = worst.max(commutator_defect(&s, &params));
            }
        }
        v.check(worst < tol, format!("{label}: max defect up to t = {:.1} is {worst:.3e} (limit {tol:e})", s.t));
    }
    v.finish();
}

#[test]
fn criterion_02_operator_first_law() {
    let mut v = Verdict::new(2, "operator first law dH = dQ + dW");
    let params = unit(1.0);
    let spec = PotentialSpec::harmonic();
    let basis = BasisSpec::new(64, 16, 1.0, &params).unwrap();
    let defects: Vec<f64> = STEP_DTS
        .iter()
        .map(|&dt| mean_step_defect(&basis, &params, &spec, dt, 20, |s, n, inc| first_law_defect(s, n, &inc.dq, &inc.dw, &spec, &params, 1.0, 1.0)))
        .collect();
    let k = loglog_slope(&STEP_DTS, &defects);
    v.check((k - 1.5).abs() <= 0.2, format!("per-step defect [{}] over dt {STEP_DTS:?}: exponent {k:.3} (want 1.5 +- 0.2)", sci(&defects)));

    let small = BasisSpec::new(16, 4, 1.0, &params).unwrap();
    let psi = InitialWavepacket::coherent(&small, 0.0, 0.0).unwrap().psi;
    let dt = 2.5e-4;
    let steps = 2000;
    let schedule = Schedule::ramp(0.0, 1.0, 0.5, 1.5).unwrap();
    let cfg = EnsembleConfig::new(10_000, 2024, dt, steps, steps);
    let obs = [Observable::Energy, Observable::Heat, Observable::Work];
    let res = ensemble_expectation(&small, &psi, &params, &spec, &schedule, &obs, &cfg).unwrap();
    let last = |name: &str| *res.get(name).unwrap().mean.last().unwrap();
    let de = last("energy") - res.get("energy").unwrap().mean[0];
    let (q, w) = (last("heat"), last("work"));
    let rel = (de - q - w).abs() / de.abs().max(q.abs()).max(w.abs());
    v.check(
        rel < 1e-3,
        format!("ensemble balance over M = 10000, dt = {dt}: dE {de:.6} Q {q:.6} W {w:.6}, relative defect {rel:.3e} (limit 1e-3)"),
    );
    v.check(res.max_leak < 1e-6, format!("guard leakage {:.2e}", res.max_leak));
    v.finish();
}

#[test]
fn criterion_03_equilibrium() {
    let mut v = Verdict::new(3, "relaxation to the Gibbs state and equilibrium entropy identity");
    for run in [harmonic_relaxation(), quartic_relaxation()] {
        let (eq, zc) = equilibrium_field(&run.grid, &run.params, &run.spec, 1.0).unwrap();
        let f = run.final_field();
        let l1 = f.l1_distance(&eq).unwrap();
        v.check(l1 < 1e-3, format!("{}: L1 distance to Gibbs at t = {:.1} is {l1:.3e} (limit 1e-3)", run.label, f.t));
        let s = shannon_entropy(&eq, &run.params, default_epsilon(&eq, DEFAULT_EPSILON_REL)).unwrap().value;
        let energy = eq.moments(&run.params, &run.spec, 1.0).energy;
        let identity = energy / run.params.temperature() + run.params.kb() * zc.ln();
        let rel = (s - identity).abs() / identity.abs();
        v.check(rel < 1e-3, format!("{}: S = {s:.8} vs <H>/T + k ln Zc = {identity:.8}, relative {rel:.2e}", run.label));
    }
    let g = PhaseGrid::symmetric(12.0, 256, 12.0, 256).unwrap();
    for (t, k) in [(1.0, 1.0), (2.0, 4.0), (0.5, 0.25)] {
        let p = PhysicalParams::new(1.0, 1.0, t, 0.0).unwrap();
        let (_, zc) = equilibrium_field(&g, &p, &PotentialSpec::harmonic(), k).unwrap();
        let exact = 2.0 * std::f64::consts::PI * t / k.sqrt();
        let err = (zc - exact).abs();
        v.check(err < 1e-6, format!("harmonic Zc at T = {t}, k = {k}: {zc:.10} vs {exact:.10}, error {err:.2e}"));
    }
    v.finish();
}

fn second_law_lines(v: &mut Verdict, run: &FieldRun) {
    let ratio = run.identity_ratio();
    v.check(ratio < 1.0, format!("{}: max |lhs - rhs| / tolerance = {ratio:.2e} over {} samples", run.label, run.rows().count()));
    let min_rhs = run.min_rhs();
    v.check(min_rhs >= -1e-10, format!("{}: min rhs {min_rhs:.3e}", run.label));
}

#[test]
fn criterion_04_second_law_identity() {
    let mut v = Verdict::new(4, "second-law identity and positivity of its right-hand side");
    for run in [harmonic_relaxation(), quartic_relaxation(), quantum_ramp()] {
        second_law_lines(&mut v, run);
    }
    for run in [classical_ramp(), classical_quartic_relaxation()] {
        second_law_lines(&mut v, run);
        let t = run.params.temperature();
        let tol = 1e-3 * run.params.nu() * run.params.kt() / run.params.mass();
        let worst = run.rows().map(|r| r.dq_dt - t * r.ds_sh_dt).fold(f64::NEG_INFINITY, f64::max);
        v.check(worst <= tol, format!("{}: max E[dQ/dt] - T dS_SH/dt = {worst:.3e} (limit {tol:.1e})", run.label));
    }
    v.finish();
}

#[test]
fn criterion_05_memory_effect() {
    let mut v = Verdict::new(5, "memory-effect entropy rate");
    let run = quartic_relaxation();
    let rows: Vec<_> = run.rows().collect();
    let early = rows.iter().filter(|r| r.t <= 1.0).map(|r| r.s_me_rate.abs()).fold(0.0, f64::max);
    v.check(early > 1e-6, format!("quartic, hbar = 1: max |S_ME rate| for t <= 1 is {early:.3e}"));

    // envelope: the extremum of each same-sign lobe of the rate, kept while
    // it stands well clear of the estimator's epsilon sensitivity
    let floor = 100.0 * rows.iter().map(|r| r.epsilon_sensitivity).fold(0.0, f64::max);
    let mut peaks: Vec<(f64, f64)> = Vec::new();
    let mut lobe: Option<(f64, f64, bool)> = None;
    for r in &rows {
        let positive = r.s_me_rate >= 0.0;
        match lobe {
            Some((_, _, sign)) if sign != positive => {
                peaks.push(lobe.map(|(t, v, _)| (t, v)).unwrap());
                lobe = Some((r.t, r.s_me_rate.abs(), positive));
            }
            Some((_, v, _)) if r.s_me_rate.abs() <= v => {}
            _ => lobe = Some((r.t, r.s_me_rate.abs(), positive)),
        }
    }
    peaks.extend(lobe.map(|(t, v, _)| (t, v)));
    peaks.retain(|(_, v)| *v > floor);
    let ts: Vec<f64> = peaks.iter().map(|p| p.0).collect();
    let env: Vec<f64> = peaks.iter().map(|p| p.1).collect();
    let k = linear_slope(&ts, &env);
    let want = -2.0 * run.params.damping_rate();
    v.check(
        peaks.len() >= 3 && (k - want).abs() <= 0.2 * want.abs(),
        format!("lobe peaks [{}] at t {ts:.2?} (floor {floor:.1e}): log-slope {k:.3} (want {want} +- 20%)", sci(&env)),
    );
    let gamma_sq: Vec<f64> = rows.iter().filter(|r| ts.contains(&r.t)).map(|r| r.s_me_rate.abs() / (r.gamma * r.gamma)).collect();
    v.note(format!("peaks divided by gamma^2: [{}]", sci(&gamma_sq)));

    for other in [harmonic_relaxation(), quantum_ramp(), classical_ramp(), classical_quartic_relaxation()] {
        let worst = other.rows().map(|r| r.s_me_rate.abs().max(r.s_me_acc.abs())).fold(0.0, f64::max);
        v.check(worst <= 1e-12, format!("{}: max |S_ME| {worst:.2e}", other.label));
    }
    v.finish();
}

#[test]
fn criterion_06_classical_crosscheck() {
    let mut v = Verdict::new(6, "three-way classical-limit moment crosscheck");
    let r = crosscheck_report();
    v.check(r.passed, format!("max pairwise z over {} rows x 3 pairs = {:.3} (limit {})", r.rows.len(), r.max_z, r.z_max));
    for row in r.rows.iter().filter(|row| row.max_z() > 2.0) {
        v.note(format!(
            "t {:.2} {}: pde {:.5}, langevin {:.5} +- {:.1e}, operator {:.5} +- {:.1e}",
            row.t, row.quantity, row.pde, row.langevin.mean, row.langevin.stderr, row.operator.mean, row.operator.stderr
        ));
    }
    v.note(format!(
        "pde min {:.2e}, pde drift {:.2e}, operator leak {:.2e}, langevin paths off grid {}",
        r.pde_min_value, r.pde_max_norm_drift, r.operator_max_leak, r.langevin_outside
    ));
    v.finish();
}

fn cycle_lines(v: &mut Verdict, run: &CycleRun) {
    for c in &run.report.cycles {
        v.check(
            c.slack >= -1e-6,
            format!(
                "{} rep {}: W_EXT {:.6} <= bound {:.6}, slack {:.3e}, efficiency {:.4} (Carnot {:.4})",
                run.label, c.repetition, c.w_ext, c.bound, c.slack, c.efficiency, run.report.carnot_efficiency
            ),
        );
    }
}

#[test]
fn criterion_07_engine_bound() {
    let mut v = Verdict::new(7, "two-bath cycle obeys W_EXT <= T_l dS_l + T_h dS_h");
    let slow = slow_cycle();
    cycle_lines(&mut v, slow);
    let last = slow.report.last();
    let rel = last.slack / last.w_ext;
    v.check(
        last.w_ext > 0.0 && rel < 0.05,
        format!("slow: slack / W_EXT = {rel:.4} at the last repetition (limit 0.05); dE over the cycle {:.2e}", last.energy_end - last.energy_start),
    );
    for run in fast_cycles() {
        cycle_lines(&mut v, run);
    }
    for run in quartic_cycles() {
        cycle_lines(&mut v, run);
        for c in &run.report.cycles {
            let finite = c.memory_share_l.is_finite() && c.memory_share_h.is_finite();
            v.check(
                finite,
                format!(
                    "{} rep {}: memory share of dS_l {:.4e} (dS_ME {:.3e}), of dS_h {:.4e} (dS_ME {:.3e})",
                    run.label, c.repetition, c.memory_share_l, c.memory_s_l, c.memory_share_h, c.memory_s_h
                ),
            );
        }
    }
    v.finish();
}

#[test]
fn criterion_08_quantum_analysis_identities() {
    let mut v = Verdict::new(8, "quantum-analysis identities");
    for c in identity_suite(2024, 20).unwrap() {
        v.check(c.passed, format!("{}: max defect {:.3e} (limit {:.0e})", c.name, c.max_defect, c.tolerance));
    }
    v.finish();
}

#[test]
fn criterion_09_heat_relations() {
    let mut v = Verdict::new(9, "heat commutator and heat-rate uncertainty relations");
    let params = unit(1.0);
    let spec = PotentialSpec::harmonic();
    let basis = BasisSpec::new(64, 16, 1.0, &params).unwrap();
    let scale = frobenius(&basis.initial_state().p);
    let defects: Vec<f64> = STEP_DTS
        .iter()
        .map(|&dt| mean_step_defect(&basis, &params, &spec, dt, 20, |s, _, inc| heat_commutator_check(s, &params, inc).momentum / scale))
        .collect();
    let k = loglog_slope(&STEP_DTS, &defects);
    v.check(k >= 1.5, format!("[P, dQ] defect [{}] over dt {STEP_DTS:?}: exponent {k:.3} (want >= 1.5)", sci(&defects)));

    let small = BasisSpec::new(16, 4, 1.0, &params).unwrap();
    let psi = InitialWavepacket::coherent(&small, 0.0, 1.0).unwrap().psi;
    let mut cfg = EnsembleConfig::new(10_000, 2024, 1e-2, 300, 10);
    cfg.uncertainty = true;
    let res = ensemble_expectation(&small, &psi, &params, &spec, &Schedule::constant(1.0), &[Observable::Momentum], &cfg).unwrap();
    let tight = res.uncertainty.iter().filter(|u| u.rhs > 0.0).min_by(|a, b| a.margin().total_cmp(&b.margin())).unwrap();
    let all = res.uncertainty.iter().all(|u| u.holds(1e-2));
    v.check(
        all,
        format!(
            "(dx)(dQdot) >= (hbar/m)|gamma' <p>| (1 - 1e-2) at {} times; tightest t = {:.2}: {:.4e} vs {:.4e}",
            res.uncertainty.len(),
            tight.t,
            tight.lhs,
            tight.rhs
        ),
    );
    v.finish();
}

#[test]
fn criterion_10_norm_and_energy_conservation() {
    let mut v = Verdict::new(10, "norm conservation and energy neutrality of the quantum correction");
    let runs = [harmonic_relaxation(), quartic_relaxation(), quantum_ramp(), classical_ramp(), classical_quartic_relaxation()];
    for run in runs {
        let drift = run.max_norm_drift();
        v.check(drift < 1e-6, format!("{}: norm drift {drift:.2e}", run.label));
        let scale = run.params.nu() * run.params.kt() / run.params.mass();
        let sigma = run.rows().map(|r| r.sigma_energy.abs()).fold(0.0, f64::max);
        v.check(sigma < 1e-8 * scale, format!("{}: max |int H Sigma| {sigma:.2e} (limit {:.1e})", run.label, 1e-8 * scale));
    }
    let cross = crosscheck_report();
    v.check(cross.pde_max_norm_drift < 1e-6, format!("crosscheck field: norm drift {:.2e}", cross.pde_max_norm_drift));
    let cycles = std::iter::once(slow_cycle()).chain(fast_cycles()).chain(quartic_cycles());
    for run in cycles {
        let drift = run.report.segments.iter().map(|s| s.max_norm_drift).fold(0.0, f64::max);
        v.check(drift < 1e-6, format!("{}: norm drift {drift:.2e}", run.label));
        let scale = run.params.nu() * run.params.kb() * run.report.t_l / run.params.mass();
        let sigma = run.report.segments.iter().flat_map(|s| s.ledger.rows.iter()).map(|r| r.sigma_energy.abs()).fold(0.0, f64::max);
        v.check(sigma < 1e-8 * scale, format!("{}: max |int H Sigma| {sigma:.2e}", run.label));
    }
    v.finish();
}
