//! Scenario execution and artifact export.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use qse_core::crosscheck::{crosscheck, CrosscheckConfig};
use qse_core::engine::{run_cycle, CycleOptions};
use qse_core::heisenberg::{ensemble_expectation, BasisSpec, EnsembleConfig, InitialWavepacket, Observable, GUARD_POPULATION_TOL};
use qse_core::langevin::{histogram, outside_count, run_langevin, ClassicalEnsemble};
use qse_core::matrixqa::suite::identity_suite;
use qse_core::model::GaussianPacket;
use qse_core::thermo::{equilibrium_field, run_ledger, LedgerOptions, LedgerState};
use qse_core::wignerpde::{gaussian_field, FieldKind, WignerField};
use qse_core::{QseError, Result};

use crate::config::{RunConfig, Scenario};
use crate::validate::{Built, Finding};

pub const SUMMARY_SCHEMA: &str = "qse-summary/1";
pub const FIELD_SCHEMA: &str = "qse-field/1";

/// One executed invariant check with its measured value.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub limit: f64,
    /// "<=" or ">=": how `measured` must compare with `limit`.
    pub relation: &'static str,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self { name: name.into(), measured, limit, relation: "<=", passed: measured <= limit }
    }

    pub fn at_least(name: impl Into<String>, measured: f64, limit: f64) -> Self {
        Self { name: name.into(), measured, limit, relation: ">=", passed: measured >= limit }
    }
}

/// What a scenario hands back for the summary.
pub struct Outcome {
    pub checks: Vec<Check>,
    pub results: Value,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

pub struct Context<'a> {
    pub cfg: &'a RunConfig,
    pub built: &'a Built,
    pub seed: u64,
    pub out: &'a Path,
}

pub fn execute(ctx: &Context) -> Result<Outcome> {
    match ctx.cfg.scenario {
        Scenario::Pde => run_pde(ctx),
        Scenario::Operator => run_operator(ctx),
        Scenario::Classical => run_classical(ctx),
        Scenario::Engine => run_engine(ctx),
        Scenario::VerifyQa => run_verify_qa(ctx),
        Scenario::Crosscheck => run_crosscheck(ctx),
    }
}

pub fn write_summary(out: &Path, scenario: Scenario, seed: u64, status: &str, outcome: &Outcome, warnings: &[Finding]) -> Result<()> {
    let summary = json!({
        "schema": SUMMARY_SCHEMA,
        "scenario": scenario.name(),
        "seed": seed,
        "status": status,
        "all_checks_passed": outcome.passed(),
        "checks": outcome.checks,
        "warnings": warnings,
        "results": outcome.results,
    });
    fs::write(out.join("summary.json"), serde_json::to_string_pretty(&summary)? + "\n")?;
    Ok(())
}

fn csv_header(schema: &str, columns: &str) -> String {
    format!("# schema: {schema}\n{columns}\n")
}

fn write_field(path: &Path, field: &WignerField) -> Result<()> {
    let mut s = format!("# schema: {FIELD_SCHEMA}\n# t={:.10e} kind={:?} nx={} np={}\nx,p,value\n", field.t, field.kind, field.grid.nx, field.grid.np);
    for i in 0..field.grid.nx {
        for j in 0..field.grid.np {
            let _ = writeln!(s, "{:.10e},{:.10e},{:.15e}", field.grid.x(i), field.grid.p(j), field.values[field.grid.index(i, j)]);
        }
    }
    fs::write(path, s)?;
    Ok(())
}

fn snapshot_dir(out: &Path) -> Result<PathBuf> {
    let dir = out.join("snapshots");
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

fn initial_field(ctx: &Context, packet: Option<GaussianPacket>, kind: FieldKind, temperature: f64, lambda0: f64) -> Result<WignerField> {
    let grid = ctx.cfg.grid()?;
    match packet {
        Some(p) => gaussian_field(&grid, &p, kind),
        None => {
            let params = ctx.built.params.with_temperature(temperature)?;
            let (mut f, _) = equilibrium_field(&grid, &params, &ctx.built.spec, lambda0)?;
            f.kind = kind;
            Ok(f)
        }
    }
}

fn packet(ctx: &Context) -> Result<Option<GaussianPacket>> {
    let b = ctx.built;
    ctx.cfg.initial.packet(&b.params, ctx.cfg.omega_ref(&b.params, b.schedule.lambda_start()))
}

fn run_pde(ctx: &Context) -> Result<Outcome> {
    let (cfg, b) = (ctx.cfg, ctx.built);
    let kind: FieldKind = cfg.run.field_kind.into();
    let field = initial_field(ctx, packet(ctx)?, kind, b.params.temperature(), b.schedule.lambda_start())?;
    let mut opts = LedgerOptions::new(cfg.run.dt, cfg.run.t_end, cfg.run.sample_every);
    opts.snapshot_every = if cfg.run.snapshot_every == 0 { usize::MAX } else { cfg.run.snapshot_every };
    let run = run_ledger(LedgerState::from_initial(&field), &b.params, &b.spec, &b.schedule, &opts)?;

    run.ledger.write_csv(&ctx.out.join("ledger.csv"))?;
    let mut plot = csv_header("qse-plot-pde/1", "t,lambda,gamma,norm,x,p,x2,p2,xp,energy,S_SH,S_ME_acc,dQdt,work_rate");
    for r in &run.ledger.rows {
        let m = &r.moments;
        let _ = writeln!(
            plot,
            "{:.10e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}",
            r.t, r.lambda, r.gamma, m.norm, m.x, m.p, m.x2, m.p2, m.xp, m.energy, r.s_sh, r.s_me_acc, r.dq_dt, r.work_rate
        );
    }
    fs::write(ctx.out.join("plot.csv"), plot)?;
    let dir = snapshot_dir(ctx.out)?;
    for (k, snap) in run.snapshots.iter().enumerate() {
        write_field(&dir.join(format!("rho_w_{k:04}.csv")), snap)?;
    }

    let tol = &cfg.tolerances;
    let p = &b.params;
    let mut checks = vec![
        Check::at_most("norm_drift", run.max_norm_drift, tol.norm_drift),
        Check::at_least("second_law_rhs_min", run.ledger.min_rhs(), tol.min_rhs),
        Check::at_most("boundary_ratio", run.max_boundary_ratio, qse_core::wignerpde::BOUNDARY_TOL),
        Check::at_least("classical_field_min", run.min_value_kr, -1e-12),
    ];
    if kind == FieldKind::Classical {
        checks.push(Check::at_least("rho_w_min", run.min_value_w, -1e-12));
    }
    if p.nu() > 0.0 {
        checks.push(Check::at_most("second_law_identity_ratio", run.ledger.identity_ratio(p), tol.identity_ratio));
    }
    let scale = p.nu() * p.kt() / p.mass();
    let sigma_energy = run.ledger.rows.iter().map(|r| r.sigma_energy.abs()).fold(0.0, f64::max);
    if scale > 0.0 {
        checks.push(Check::at_most("sigma_energy_relative", sigma_energy / scale, tol.sigma_energy));
    }
    let last = run.ledger.rows.last().expect("a ledger has rows");
    let results = json!({
        "steps": run.steps,
        "dt": run.dt,
        "dt_bound": run.dt_bound,
        "final": last,
        "delta_s_sh": run.delta_s_sh,
        "s_me_integral": run.s_me_integral,
        "heat": run.heat,
        "work": run.work,
        "energy_start": run.energy_start,
        "energy_end": run.energy_end,
        "min_value_w": run.min_value_w,
        "min_value_kr": run.min_value_kr,
        "snapshots": run.snapshots.len(),
    });
    Ok(Outcome { checks, results })
}

fn run_operator(ctx: &Context) -> Result<Outcome> {
    let (cfg, b) = (ctx.cfg, ctx.built);
    let omega = cfg.omega_ref(&b.params, b.schedule.lambda_start());
    let basis = BasisSpec::new(cfg.basis.n, cfg.basis.guard, omega, &b.params)?;
    let packet = packet(ctx)?.ok_or_else(|| QseError::InvalidParameter { name: "initial", reason: "operator runs start from a packet".into() })?;
    let wp = InitialWavepacket::project(&basis, packet.x0, packet.p0, packet.sigma_x)?;
    let steps = (cfg.run.t_end / cfg.run.dt).round() as usize;
    let mut ecfg = EnsembleConfig::new(cfg.run.paths, ctx.seed, cfg.run.dt, steps, cfg.run.sample_every);
    ecfg.uncertainty = b.params.nu() > 0.0;
    let observables = [
        Observable::Position,
        Observable::Momentum,
        Observable::PositionSq,
        Observable::MomentumSq,
        Observable::Energy,
        Observable::Heat,
        Observable::Work,
    ];
    let series = ensemble_expectation(&basis, &wp.psi, &b.params, &b.spec, &b.schedule, &observables, &ecfg)?;

    let names: Vec<&str> = observables.iter().map(Observable::name).collect();
    let mut columns = String::from("t");
    for n in &names {
        let _ = write!(columns, ",{n},{n}_stderr");
    }
    columns.push_str(",first_law_defect");
    let mut plot = csv_header("qse-plot-operator/1", &columns);
    let get = |n: &str| series.get(n).expect("observable requested above");
    let (energy, heat, work) = (get("energy"), get("heat"), get("work"));
    for (k, t) in series.times.iter().enumerate() {
        let _ = write!(plot, "{t:.10e}");
        for n in &names {
            let s = get(n);
            let _ = write!(plot, ",{:.15e},{:.6e}", s.mean[k], s.stderr[k]);
        }
        let defect = energy.mean[k] - energy.mean[0] - heat.mean[k] - work.mean[k];
        let _ = writeln!(plot, ",{defect:.6e}");
    }
    fs::write(ctx.out.join("plot.csv"), &plot)?;
    fs::write(ctx.out.join("ledger.csv"), plot.replacen("qse-plot-operator/1", "qse-operator-ledger/1", 1))?;
    if !series.uncertainty.is_empty() {
        let mut u = csv_header("qse-uncertainty/1", "t,lhs,rhs");
        for s in &series.uncertainty {
            let _ = writeln!(u, "{:.10e},{:.15e},{:.15e}", s.t, s.lhs, s.rhs);
        }
        fs::write(ctx.out.join("uncertainty.csv"), u)?;
    }

    let tol = &cfg.tolerances;
    let n = series.times.len() - 1;
    let de = energy.mean[n] - energy.mean[0];
    let residual = (de - heat.mean[n] - work.mean[n]).abs();
    let scale = de.abs().max(heat.mean[n].abs()).max(work.mean[n].abs()).max(f64::MIN_POSITIVE);
    let mut checks = vec![
        Check::at_most("initial_guard_population", wp.guard_population, GUARD_POPULATION_TOL),
        Check::at_most("guard_leak", series.max_leak, tol.leak),
        Check::at_most("hermiticity", series.max_hermiticity, tol.hermiticity),
        Check::at_most("first_law_relative", residual / scale, tol.first_law_rel),
    ];
    if !series.uncertainty.is_empty() {
        let worst = series.uncertainty.iter().filter(|s| s.rhs > 0.0).map(|s| s.margin()).fold(f64::INFINITY, f64::min);
        if worst.is_finite() {
            checks.push(Check::at_least("uncertainty_margin", worst, 1.0 - 1e-2));
        }
    }
    let results = json!({
        "paths": series.paths,
        "steps": steps,
        "final": names.iter().map(|n| (n.to_string(), json!({"mean": get(n).mean[n_last(&series)], "stderr": get(n).stderr[n_last(&series)]}))).collect::<serde_json::Map<_, _>>(),
        "initial_guard_population": wp.guard_population,
        "initial_truncation_loss": wp.truncation_loss,
        "max_leak": series.max_leak,
    });
    Ok(Outcome { checks, results })
}

fn n_last(series: &qse_core::heisenberg::EnsembleSeries) -> usize {
    series.times.len() - 1
}

fn run_classical(ctx: &Context) -> Result<Outcome> {
    let (cfg, b) = (ctx.cfg, ctx.built);
    let lambda0 = b.schedule.lambda_start();
    let packet = match packet(ctx)? {
        Some(p) => p,
        None => {
            // Boltzmann state of a centred quadratic well
            let k = 2.0 * b.spec.coefficients_at(lambda0)[2];
            let kt = b.params.kt();
            GaussianPacket::new(0.0, 0.0, (kt / k).sqrt(), (b.params.mass() * kt).sqrt())?
        }
    };
    let steps = (cfg.run.t_end / cfg.run.dt).round() as usize;
    let ens = ClassicalEnsemble::from_packet(&packet, cfg.run.paths, ctx.seed, 0)?;
    let run = run_langevin(ens, &b.params, &b.spec, &b.schedule, cfg.run.dt, steps, cfg.run.sample_every)?;

    let mut plot = csv_header(
        "qse-plot-classical/1",
        "t,x,x_stderr,p,p_stderr,x2,x2_stderr,p2,p2_stderr,energy,energy_stderr,heat,heat_stderr,work,work_stderr,first_law_defect",
    );
    let e0 = run.samples[0].energy.mean;
    for s in &run.samples {
        let _ = write!(plot, "{:.10e}", s.t);
        for e in [s.x, s.p, s.x2, s.p2, s.energy, s.heat, s.work] {
            let _ = write!(plot, ",{:.15e},{:.6e}", e.mean, e.stderr);
        }
        let _ = writeln!(plot, ",{:.6e}", s.energy.mean - e0 - s.heat.mean - s.work.mean);
    }
    fs::write(ctx.out.join("plot.csv"), &plot)?;
    fs::write(ctx.out.join("ledger.csv"), plot.replacen("qse-plot-classical/1", "qse-classical-ledger/1", 1))?;

    let last = run.samples.last().expect("a run has samples");
    let de = last.energy.mean - e0;
    let residual = (de - last.heat.mean - last.work.mean).abs();
    let scale = de.abs().max(last.heat.mean.abs()).max(last.work.mean.abs()).max(f64::MIN_POSITIVE);
    let checks = vec![Check::at_most("first_law_relative", residual / scale, cfg.tolerances.first_law_rel)];
    let mut results = json!({ "paths": cfg.run.paths, "steps": steps, "final": last });
    if cfg.grid.is_some() {
        let grid = cfg.grid()?;
        let h = histogram(&run.ensemble, &grid)?;
        write_field(&snapshot_dir(ctx.out)?.join("histogram_final.csv"), &h)?;
        results["histogram_outside"] = json!(outside_count(&run.ensemble, &grid));
    }
    Ok(Outcome { checks, results })
}

fn run_engine(ctx: &Context) -> Result<Outcome> {
    let (cfg, b) = (ctx.cfg, ctx.built);
    let cycle_cfg = cfg.cycle.as_ref().ok_or_else(|| QseError::InvalidParameter { name: "cycle", reason: "missing [cycle] section".into() })?;
    let cycle = cycle_cfg.build()?;
    let first = &cycle.segments[0];
    let t0 = first.temperature().or_else(|| cycle.temperatures().map(|t| t.1)).unwrap_or(b.params.temperature());
    let kind: FieldKind = cfg.run.field_kind.into();
    let field = initial_field(ctx, packet(ctx)?, kind, t0, first.lambda_start())?;
    let opts = CycleOptions::new(cycle_cfg.dt_max.unwrap_or(cfg.run.dt), cfg.run.sample_every);
    let report = run_cycle(&cycle, &b.params, &b.spec, LedgerState::from_initial(&field), &opts)?;

    fs::write(ctx.out.join("cycle.json"), report.to_json()? + "\n")?;
    let mut ledger = String::from("# schema: qse-engine-ledger/1\nrepetition,segment,");
    let mut plot = csv_header(
        "qse-plot-engine/1",
        "repetition,segment,kind,temperature,lambda_start,lambda_end,heat,work,delta_s,delta_s_me,memory_share,bound,slack,bound_margin",
    );
    for s in &report.segments {
        let csv = s.ledger.to_csv();
        let mut lines = csv.lines().skip(1);
        if s.repetition == 0 && s.index == 0 {
            ledger.push_str(lines.next().unwrap_or_default());
            ledger.push('\n');
        } else {
            lines.next();
        }
        for line in lines {
            let _ = writeln!(ledger, "{},{},{line}", s.repetition, s.index);
        }
        let kind = if s.identity_ratio.is_some() { "isothermal" } else { "adiabatic" };
        let _ = writeln!(
            plot,
            "{},{},{kind},{:.10e},{:.10e},{:.10e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}",
            s.repetition, s.index, s.temperature, s.lambda_start, s.lambda_end, s.heat, s.work, s.delta_s, s.delta_s_me,
            s.memory_share, s.bound, s.slack, s.bound_margin
        );
    }
    fs::write(ctx.out.join("ledger.csv"), ledger)?;
    fs::write(ctx.out.join("plot.csv"), plot)?;

    let tol = &cfg.tolerances;
    let mut checks = Vec::new();
    for c in &report.cycles {
        checks.push(Check::at_least(format!("cycle_{}_bound_slack", c.repetition), c.slack, tol.bound_slack));
    }
    for s in &report.segments {
        let tag = format!("cycle_{}_segment_{}", s.repetition, s.index);
        checks.push(Check::at_most(format!("{tag}_norm_drift"), s.max_norm_drift, tol.norm_drift));
        checks.push(Check::at_least(format!("{tag}_second_law_rhs_min"), s.min_rhs, tol.min_rhs));
        if let Some(r) = s.identity_ratio {
            checks.push(Check::at_most(format!("{tag}_second_law_identity_ratio"), r, tol.identity_ratio));
        }
    }
    let results = json!({
        "t_l": report.t_l,
        "t_h": report.t_h,
        "carnot_efficiency": report.carnot_efficiency,
        "cycles": report.cycles,
    });
    Ok(Outcome { checks, results })
}

fn run_verify_qa(ctx: &Context) -> Result<Outcome> {
    let suite = identity_suite(ctx.seed, ctx.cfg.run.paths)?;
    let mut table = csv_header("qse-identity-suite/1", "identity,max_defect,tolerance,passed");
    for c in &suite {
        let _ = writeln!(table, "{},{:.6e},{:.1e},{}", c.name, c.max_defect, c.tolerance, c.passed);
    }
    fs::write(ctx.out.join("plot.csv"), table)?;
    let checks = suite.iter().map(|c| Check::at_most(c.name.clone(), c.max_defect, c.tolerance)).collect();
    Ok(Outcome { checks, results: json!({ "trials": ctx.cfg.run.paths, "identities": suite }) })
}

fn run_crosscheck(ctx: &Context) -> Result<Outcome> {
    let (cfg, b) = (ctx.cfg, ctx.built);
    let mut x = CrosscheckConfig::harmonic_default(ctx.seed)?;
    x.params = b.params.clone();
    x.spec = b.spec.clone();
    x.lambda = b.schedule.lambda_start();
    if let crate::config::InitialConfig::Packet { x0, p0, .. } = cfg.initial {
        x.x0 = x0;
        x.p0 = p0;
    }
    x.t_end = cfg.run.t_end;
    if cfg.grid.is_some() {
        x.grid = cfg.grid()?;
    }
    x.basis_n = cfg.basis.n;
    x.basis_guard = cfg.basis.guard;
    let s = &cfg.crosscheck;
    x.samples = s.samples;
    x.dt_sde = s.dt_sde;
    x.langevin_paths = s.langevin_paths;
    x.operator_paths = s.operator_paths;
    x.z_max = s.z_max;
    let report = crosscheck(&x)?;

    let mut table = csv_header(
        "qse-crosscheck/1",
        "t,quantity,pde,langevin,langevin_stderr,operator,operator_stderr,z_pde_langevin,z_pde_operator,z_langevin_operator",
    );
    for r in &report.rows {
        let _ = writeln!(
            table,
            "{:.10e},{},{:.15e},{:.15e},{:.6e},{:.15e},{:.6e},{:.4},{:.4},{:.4}",
            r.t, r.quantity, r.pde, r.langevin.mean, r.langevin.stderr, r.operator.mean, r.operator.stderr,
            r.z_pde_langevin, r.z_pde_operator, r.z_langevin_operator
        );
    }
    fs::write(ctx.out.join("crosscheck.csv"), &table)?;
    fs::write(ctx.out.join("plot.csv"), &table)?;
    let checks = vec![
        Check::at_most("max_z_score", report.max_z, report.z_max),
        Check::at_most("pde_norm_drift", report.pde_max_norm_drift, cfg.tolerances.norm_drift),
        Check::at_least("pde_min_value", report.pde_min_value, -1e-12),
        Check::at_most("operator_guard_leak", report.operator_max_leak, cfg.tolerances.leak),
    ];
    let results = json!({
        "rows": report.rows.len(),
        "max_z": report.max_z,
        "pde_dt": report.pde_dt,
        "langevin_outside_grid": report.langevin_outside,
    });
    Ok(Outcome { checks, results })
}
