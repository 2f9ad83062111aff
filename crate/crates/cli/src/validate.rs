//! Pre-run findings: stability bounds, resolution, domain size and
//! truncation risk.

use serde::Serialize;

use qse_core::heisenberg::{BasisSpec, InitialWavepacket};
use qse_core::model::{GaussianPacket, PhysicalParams, PotentialSpec, Schedule};
use qse_core::thermo::equilibrium_field;
use qse_core::wignerpde::{gaussian_field, stable_dt, FieldKind, PhaseGrid, BOUNDARY_TOL, DEFAULT_COURANT};

use crate::config::{InitialConfig, RunConfig, Scenario};

/// Guard-level weight of the initial state above which a warning is raised.
pub const GUARD_WARNING: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Debug, Clone, Serialize)]
pub struct Finding {
    pub severity: Severity,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub measured: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limit: Option<f64>,
}

impl Finding {
    fn error(code: &'static str, message: impl Into<String>) -> Self {
        Self { severity: Severity::Error, code, message: message.into(), measured: None, limit: None }
    }

    fn warning(code: &'static str, message: impl Into<String>) -> Self {
        Self { severity: Severity::Warning, code, message: message.into(), measured: None, limit: None }
    }

    fn values(mut self, measured: f64, limit: f64) -> Self {
        self.measured = Some(measured);
        self.limit = Some(limit);
        self
    }
}

pub fn has_errors(findings: &[Finding]) -> bool {
    findings.iter().any(|f| f.severity == Severity::Error)
}

/// Everything a run needs, built once the config has validated.
pub struct Built {
    pub params: PhysicalParams,
    pub spec: PotentialSpec,
    pub schedule: Schedule,
}

pub fn validate(cfg: &RunConfig) -> (Vec<Finding>, Option<Built>) {
    let mut out = Vec::new();
    let params = cfg.params.build();
    let spec = cfg.potential.build();
    let schedule = cfg.schedule.build();
    let (params, spec, schedule) = match (params, spec, schedule) {
        (Ok(p), Ok(s), Ok(l)) => (p, s, l),
        (p, s, l) => {
            for e in [p.err(), s.err(), l.err()].into_iter().flatten() {
                out.push(Finding::error("invalid-parameter", e.to_string()));
            }
            return (out, None);
        }
    };
    let built = Built { params, spec, schedule };
    match cfg.scenario {
        Scenario::Pde => check_pde(cfg, &built, &mut out),
        Scenario::Operator => check_operator(cfg, &built, &mut out),
        Scenario::Classical => check_classical(cfg, &built, &mut out),
        Scenario::Engine => check_engine(cfg, &built, &mut out),
        Scenario::VerifyQa => {
            if cfg.run.paths == 0 {
                out.push(Finding::error("invalid-parameter", "run.paths sets the number of random trials and must be positive"));
            }
        }
        Scenario::Crosscheck => check_crosscheck(cfg, &built, &mut out),
    }
    (out, Some(built))
}

fn check_steps(cfg: &RunConfig, out: &mut Vec<Finding>) -> bool {
    let (dt, t_end) = (cfg.run.dt, cfg.run.t_end);
    if !(dt > 0.0 && dt.is_finite() && t_end > 0.0 && t_end.is_finite()) {
        out.push(Finding::error("invalid-parameter", "run.dt and run.t_end must be positive and finite"));
        return false;
    }
    let steps = (t_end / dt).round();
    if (steps * dt - t_end).abs() > 1e-9 * t_end.max(1.0) {
        out.push(Finding::error("step-count", format!("t_end = {t_end} is not a whole number of steps dt = {dt}")));
        return false;
    }
    if steps < 4.0 {
        out.push(Finding::error("step-count", "a run needs at least four steps"));
        return false;
    }
    if cfg.run.sample_every == 0 {
        out.push(Finding::error("invalid-parameter", "run.sample_every must be at least 1"));
        return false;
    }
    true
}

fn grid_or_error(cfg: &RunConfig, out: &mut Vec<Finding>) -> Option<PhaseGrid> {
    match cfg.grid() {
        Ok(g) => Some(g),
        Err(e) => {
            out.push(Finding::error("invalid-grid", e.to_string()));
            None
        }
    }
}

fn packet_or_error(cfg: &RunConfig, b: &Built, out: &mut Vec<Finding>) -> Option<Option<GaussianPacket>> {
    let omega = cfg.omega_ref(&b.params, b.schedule.lambda_start());
    match cfg.initial.packet(&b.params, omega) {
        Ok(p) => Some(p),
        Err(e) => {
            out.push(Finding::error("invalid-packet", e.to_string()));
            None
        }
    }
}

fn check_resolution(packet: &GaussianPacket, grid: &PhaseGrid, out: &mut Vec<Finding>) -> bool {
    let mut ok = true;
    if packet.sigma_x < 4.0 * grid.hx() {
        out.push(
            Finding::error("packet-resolution", format!("packet width sigma_x = {:.3e} is narrower than 4 hx = {:.3e}", packet.sigma_x, 4.0 * grid.hx()))
                .values(packet.sigma_x, 4.0 * grid.hx()),
        );
        ok = false;
    }
    if packet.sigma_p < 4.0 * grid.hp() {
        out.push(
            Finding::error("packet-resolution", format!("packet width sigma_p = {:.3e} is narrower than 4 hp = {:.3e}", packet.sigma_p, 4.0 * grid.hp()))
                .values(packet.sigma_p, 4.0 * grid.hp()),
        );
        ok = false;
    }
    ok
}

/// Boundary/peak ratio of the initial field must respect the domain invariant.
fn check_initial_domain(packet: Option<&GaussianPacket>, grid: &PhaseGrid, b: &Built, temperature: f64, lambda0: f64, out: &mut Vec<Finding>) {
    let field = match packet {
        Some(p) => gaussian_field(grid, p, FieldKind::Classical),
        None => b.params.with_temperature(temperature).and_then(|p| equilibrium_field(grid, &p, &b.spec, lambda0).map(|(f, _)| f)),
    };
    match field {
        Ok(f) => {
            let ratio = f.boundary_max() / f.peak();
            if ratio > BOUNDARY_TOL {
                out.push(
                    Finding::error("domain-size", format!("initial field reaches {ratio:.3e} of its peak at the grid boundary"))
                        .values(ratio, BOUNDARY_TOL),
                );
            }
        }
        Err(e) => out.push(Finding::error("domain-size", e.to_string())),
    }
}

/// Warns when the Boltzmann state at some (λ, T) visited by the protocol
/// would not fit in the domain; the relaxing field approaches it.
fn check_equilibria(grid: &PhaseGrid, b: &Built, states: &[(f64, f64)], out: &mut Vec<Finding>) {
    for (i, &(lambda, temperature)) in states.iter().enumerate() {
        if states[..i].contains(&(lambda, temperature)) || !b.spec.is_confining(lambda) {
            continue;
        }
        let Ok(params) = b.params.with_temperature(temperature) else { continue };
        if let Err(e) = equilibrium_field(grid, &params, &b.spec, lambda) {
            out.push(Finding::warning(
                "domain-size",
                format!("equilibrium at lambda = {lambda}, T = {temperature} does not fit the grid ({e})"),
            ));
        }
    }
}

fn check_pde(cfg: &RunConfig, b: &Built, out: &mut Vec<Finding>) {
    let steps_ok = check_steps(cfg, out);
    let Some(grid) = grid_or_error(cfg, out) else { return };
    let Some(packet) = packet_or_error(cfg, b, out) else { return };
    let kind: FieldKind = cfg.run.field_kind.into();
    if steps_ok {
        let bound = stable_dt(&grid, &b.params, &b.spec, b.schedule.lambda_range(), 1.0, kind, DEFAULT_COURANT);
        if cfg.run.dt > bound {
            out.push(
                Finding::error("stability-bound", format!("dt = {:.3e} exceeds the stability bound {bound:.3e}", cfg.run.dt))
                    .values(cfg.run.dt, bound),
            );
        }
    }
    if let Some(p) = &packet {
        if !check_resolution(p, &grid, out) {
            return;
        }
    }
    let lambda0 = b.schedule.lambda_start();
    check_initial_domain(packet.as_ref(), &grid, b, b.params.temperature(), lambda0, out);
    if b.params.nu() > 0.0 {
        let (lo, hi) = b.schedule.lambda_range();
        check_equilibria(&grid, b, &[(lo, b.params.temperature()), (hi, b.params.temperature())], out);
    }
}

fn check_operator(cfg: &RunConfig, b: &Built, out: &mut Vec<Finding>) {
    check_steps(cfg, out);
    if cfg.run.paths == 0 {
        out.push(Finding::error("invalid-parameter", "run.paths must be positive"));
    }
    let lambda0 = b.schedule.lambda_start();
    let omega = cfg.omega_ref(&b.params, lambda0);
    let basis = match BasisSpec::new(cfg.basis.n, cfg.basis.guard, omega, &b.params) {
        Ok(basis) => basis,
        Err(e) => {
            out.push(Finding::error("invalid-basis", e.to_string()));
            return;
        }
    };
    let Some(packet) = packet_or_error(cfg, b, out) else { return };
    let Some(packet) = packet else {
        out.push(Finding::error("invalid-initial", "operator runs start from a Gaussian packet"));
        return;
    };
    let hbar = b.params.hbar();
    if (packet.sigma_p - hbar / (2.0 * packet.sigma_x)).abs() > 1e-12 * packet.sigma_p {
        out.push(Finding::error("invalid-packet", "operator runs need a minimum-uncertainty packet (sigma_p = hbar / 2 sigma_x)"));
        return;
    }
    match InitialWavepacket::project(&basis, packet.x0, packet.p0, packet.sigma_x) {
        Ok(wp) => {
            if wp.guard_population > GUARD_WARNING {
                out.push(
                    Finding::warning(
                        "guard-population",
                        format!("initial state puts {:.3e} of its weight in the guard levels", wp.guard_population),
                    )
                    .values(wp.guard_population, GUARD_WARNING),
                );
            }
            if wp.truncation_loss > GUARD_WARNING {
                out.push(
                    Finding::warning("truncation-risk", format!("basis misses {:.3e} of the initial state", wp.truncation_loss))
                        .values(wp.truncation_loss, GUARD_WARNING),
                );
            }
        }
        Err(e) => out.push(Finding::error("invalid-packet", e.to_string())),
    }
    // explicit Heun step against the stiffest curvature the basis can reach
    let reach = ((2 * cfg.basis.n + 1) as f64).sqrt() * basis.length();
    let (lo, hi) = b.schedule.lambda_range();
    let curvature = b.spec.derivative_bound(2, reach, lo).max(b.spec.derivative_bound(2, reach, hi));
    let omega_max = (curvature / b.params.mass()).sqrt().max(b.params.damping_rate());
    if cfg.run.dt * omega_max > 0.5 {
        out.push(
            Finding::warning("stability-bound", format!("dt * omega_max = {:.3e} on the basis reach; steps may be inaccurate", cfg.run.dt * omega_max))
                .values(cfg.run.dt * omega_max, 0.5),
        );
    }
}

fn check_classical(cfg: &RunConfig, b: &Built, out: &mut Vec<Finding>) {
    check_steps(cfg, out);
    if cfg.run.paths == 0 {
        out.push(Finding::error("invalid-parameter", "run.paths must be positive"));
    }
    let Some(packet) = packet_or_error(cfg, b, out) else { return };
    if packet.is_none() {
        let lambda0 = b.schedule.lambda_start();
        let quadratic = b.spec.max_degree() == 2 && b.spec.coefficients_at(lambda0)[1] == 0.0;
        if !quadratic || !b.spec.is_confining(lambda0) {
            out.push(Finding::error("invalid-initial", "classical equilibrium sampling needs a centred quadratic potential"));
        }
    }
    if let (Some(grid), Some(p)) = (cfg.grid.as_ref().map(|g| g.build()), packet) {
        match grid {
            Ok(grid) => {
                check_resolution(&p, &grid, out);
            }
            Err(e) => out.push(Finding::error("invalid-grid", e.to_string())),
        }
    }
}

fn check_engine(cfg: &RunConfig, b: &Built, out: &mut Vec<Finding>) {
    let Some(grid) = grid_or_error(cfg, out) else { return };
    let Some(cycle_cfg) = &cfg.cycle else {
        out.push(Finding::error("invalid-cycle", "the engine scenario needs a [cycle] section"));
        return;
    };
    let cycle = match cycle_cfg.build() {
        Ok(c) => c,
        Err(e) => {
            out.push(Finding::error("invalid-cycle", e.to_string()));
            return;
        }
    };
    let dt_max = cycle_cfg.dt_max.unwrap_or(cfg.run.dt);
    if !(dt_max > 0.0 && dt_max.is_finite()) {
        out.push(Finding::error("invalid-parameter", "cycle.dt_max must be positive"));
    }
    if cfg.run.sample_every == 0 {
        out.push(Finding::error("invalid-parameter", "run.sample_every must be at least 1"));
    }
    let Some(packet) = packet_or_error(cfg, b, out) else { return };
    if let Some(p) = &packet {
        if !check_resolution(p, &grid, out) {
            return;
        }
    }
    let first = &cycle.segments[0];
    let t0 = first.temperature().or_else(|| cycle.temperatures().map(|t| t.1)).unwrap_or(b.params.temperature());
    check_initial_domain(packet.as_ref(), &grid, b, t0, first.lambda_start(), out);
    // adiabats end where the next isotherm starts, so isotherm ends cover them
    let states: Vec<(f64, f64)> = cycle
        .segments
        .iter()
        .filter_map(|s| s.temperature().map(|t| [(s.lambda_start(), t), (s.lambda_end(), t)]))
        .flatten()
        .collect();
    check_equilibria(&grid, b, &states, out);
}

fn check_crosscheck(cfg: &RunConfig, b: &Built, out: &mut Vec<Finding>) {
    if !b.schedule.is_static() {
        out.push(Finding::error("invalid-schedule", "the crosscheck compares a relaxation under a constant lambda"));
    }
    if b.spec.max_degree() > 2 {
        out.push(Finding::warning("non-harmonic", "moments of the three routes agree exactly only for a quadratic potential"));
    }
    if b.params.hbar() <= 0.0 {
        out.push(Finding::error("invalid-parameter", "the operator route needs hbar > 0"));
    }
    let x = &cfg.crosscheck;
    if x.langevin_paths == 0 || x.operator_paths == 0 || x.samples == 0 || !(x.dt_sde > 0.0) {
        out.push(Finding::error("invalid-parameter", "crosscheck paths, samples and dt_sde must be positive"));
    }
    if !matches!(cfg.initial, InitialConfig::Packet { .. }) {
        out.push(Finding::error("invalid-initial", "the crosscheck starts from a coherent state"));
    }
    if !(cfg.run.t_end > 0.0) {
        out.push(Finding::error("invalid-parameter", "run.t_end must be positive"));
    }
    if let Some(grid) = cfg.grid.as_ref().map(|g| g.build()) {
        match grid {
            Ok(grid) => {
                if let Some(Some(p)) = packet_or_error(cfg, b, out) {
                    if check_resolution(&p, &grid, out) {
                        check_initial_domain(Some(&p), &grid, b, b.params.temperature(), b.schedule.lambda_start(), out);
                    }
                }
                let l = b.schedule.lambda_start();
                check_equilibria(&grid, b, &[(l, b.params.temperature())], out);
            }
            Err(e) => out.push(Finding::error("invalid-grid", e.to_string())),
        }
    }
}
