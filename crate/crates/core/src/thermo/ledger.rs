//! Co-evolution of ρ_W and ρ_KR with the entropy bookkeeping sampled along
//! the way.

use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::{
    default_epsilon, heat_flux, memory_entropy_rate, shannon_entropy, SecondLaw, DEFAULT_EPSILON_REL,
};
use crate::error::{invalid, QseError, Result};
use crate::model::{PhysicalParams, PotentialSpec, Schedule};
use crate::wignerpde::{
    check_blowup, moments, sigma_eval, FieldKind, FieldMoments, WignerField, WignerStepper,
    BOUNDARY_TOL, DEFAULT_COURANT,
};

pub const LEDGER_SCHEMA: &str = "qse-entropy-ledger/1";

/// One sampled time of the ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LedgerRow {
    pub t: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub s_sh: f64,
    pub ds_sh_dt: f64,
    pub s_me_rate: f64,
    pub s_me_acc: f64,
    pub dq_dt: f64,
    pub work_rate: f64,
    pub energy: f64,
    /// d⟨H⟩/dt by finite differences of the per-step energy.
    pub de_dt: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub epsilon: f64,
    pub epsilon_sensitivity: f64,
    /// ∫ H Σ dΓ.
    pub sigma_energy: f64,
    pub moments: FieldMoments,
}

impl LedgerRow {
    pub fn second_law(&self) -> SecondLaw {
        SecondLaw { lhs: self.lhs, rhs: self.rhs }
    }
}

/// Time series of entropy, heat and work diagnostics.
#[derive(Debug, Clone, Default, Serialize)]
pub struct EntropyLedger {
    pub rows: Vec<LedgerRow>,
    pub epsilon_rel: f64,
}

impl EntropyLedger {
    /// Largest |lhs − rhs| / (1e−3 · max(|lhs|, νk_BT/m)); below 1 means the
    /// identity holds at every sample.
    pub fn identity_ratio(&self, params: &PhysicalParams) -> f64 {
        self.rows
            .iter()
            .map(|r| r.second_law().defect() / r.second_law().tolerance(params))
            .fold(0.0, f64::max)
    }

    pub fn min_rhs(&self) -> f64 {
        self.rows.iter().map(|r| r.rhs).fold(f64::INFINITY, f64::min)
    }

    /// CSV with a schema line and the fixed column set.
    pub fn to_csv(&self) -> String {
        let mut s = format!("# schema: {LEDGER_SCHEMA}\n");
        s.push_str("t,S_SH,S_ME_rate,S_ME_acc,dQdt,work_rate,energy,lhs,rhs,epsilon_sensitivity\n");
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:.10e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.15e},{:.6e}",
                r.t, r.s_sh, r.s_me_rate, r.s_me_acc, r.dq_dt, r.work_rate, r.energy, r.lhs, r.rhs, r.epsilon_sensitivity
            );
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// The pair of fields carried from one run (or segment) to the next.
#[derive(Debug, Clone)]
pub struct LedgerState {
    pub rho_w: WignerField,
    pub rho_kr: WignerField,
}

impl LedgerState {
    /// Both fields start from the same data; ρ_KR is the classical kind.
    pub fn from_initial(rho: &WignerField) -> Self {
        let mut rho_kr = rho.clone();
        rho_kr.kind = FieldKind::Classical;
        Self { rho_w: rho.clone(), rho_kr }
    }

    /// Restarts the memory factor γ at 1 on both fields.
    pub fn reset_gamma(&mut self) {
        self.rho_w.clock = 0.0;
        self.rho_kr.clock = 0.0;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LedgerOptions {
    pub dt: f64,
    /// Duration of the run, starting at the state's time.
    pub duration: f64,
    pub sample_every: usize,
    /// Keep a copy of ρ_W every this many steps (plus the end); 0 keeps none.
    pub snapshot_every: usize,
    pub epsilon_rel: f64,
    pub courant: f64,
    pub boundary_tol: f64,
}

impl LedgerOptions {
    pub fn new(dt: f64, duration: f64, sample_every: usize) -> Self {
        Self {
            dt,
            duration,
            sample_every,
            snapshot_every: 0,
            epsilon_rel: DEFAULT_EPSILON_REL,
            courant: DEFAULT_COURANT,
            boundary_tol: BOUNDARY_TOL,
        }
    }
}

/// Result of [`run_ledger`].
#[derive(Debug, Clone, Serialize)]
pub struct LedgerRun {
    pub ledger: EntropyLedger,
    #[serde(skip)]
    pub state: LedgerState,
    /// ρ_W at the requested snapshot steps.
    #[serde(skip)]
    pub snapshots: Vec<WignerField>,
    pub steps: usize,
    pub dt: f64,
    pub dt_bound: f64,
    /// S_SH(end) − S_SH(start).
    pub delta_s_sh: f64,
    /// ∫ S_ME rate dt over the run.
    pub s_me_integral: f64,
    /// ∫ ⟨dQ/dt⟩ dt.
    pub heat: f64,
    /// ∫ λ̇ ⟨∂_λV⟩ dt (work done on the system).
    pub work: f64,
    /// ∫ ν ∫ρ_KR u² dt, accumulated at every step.
    pub rhs_integral: f64,
    pub energy_start: f64,
    pub energy_end: f64,
    pub max_norm_drift: f64,
    pub min_value_w: f64,
    pub min_value_kr: f64,
    pub max_boundary_ratio: f64,
    /// True when ρ_KR was evolved separately (Σ active or fields already differ).
    pub separate_kr: bool,
}

impl LedgerRun {
    /// ΔS = ΔS_SH + ∫ S_ME rate.
    pub fn delta_s(&self) -> f64 {
        self.delta_s_sh + self.s_me_integral
    }
}

struct StepScalars {
    s_sh: f64,
    s_me_rate: f64,
    dq_dt: f64,
    dlambda_mean: f64,
    rhs: f64,
    energy: f64,
}

/// Evolves `state` for `opts.duration` under `schedule`, recording a ledger
/// row every `opts.sample_every` steps (and at the end).
pub fn run_ledger(
    state: LedgerState,
    params: &PhysicalParams,
    spec: &PotentialSpec,
    schedule: &Schedule,
    opts: &LedgerOptions,
) -> Result<LedgerRun> {
    let LedgerState { mut rho_w, mut rho_kr } = state;
    if rho_w.grid != rho_kr.grid {
        return Err(QseError::GridMismatch);
    }
    if opts.sample_every == 0 {
        return Err(invalid("sample_every", "must be at least 1"));
    }
    if !(opts.duration > 0.0) {
        return Err(invalid("duration", "must be positive"));
    }
    let steps = (opts.duration / opts.dt).round() as usize;
    if steps < 4 || ((steps as f64) * opts.dt - opts.duration).abs() > 1e-9 * opts.duration.max(1.0) {
        return Err(invalid("dt", "duration must be at least four whole steps"));
    }
    let grid = rho_w.grid.clone();
    let mut stepper_w = WignerStepper::new(params, spec, schedule, &grid, opts.dt)?;
    let dt_bound = stepper_w.stable_dt(&grid, rho_w.kind, rho_w.gamma(), opts.courant);
    if opts.dt > dt_bound {
        return Err(invalid("dt", format!("dt = {:.3e} exceeds the stability bound {dt_bound:.3e}", opts.dt)));
    }
    let mut stepper_kr = WignerStepper::new(params, spec, schedule, &grid, opts.dt)?;

    let sigma_active = rho_w.kind == FieldKind::Quantum && params.hbar() > 0.0 && spec.max_degree() >= 3;
    let separate_kr = sigma_active || rho_w.values != rho_kr.values;

    let t0 = rho_w.t;
    let peak0 = rho_w.peak().max(rho_kr.peak());
    let norm0_w = rho_w.integral();
    let norm0_kr = rho_kr.integral();
    let m = params.mass();

    let scalars = |w: &WignerField, kr: &WignerField, lambda: f64| -> Result<(StepScalars, f64)> {
        let eps = default_epsilon(w, opts.epsilon_rel);
        let s_sh = shannon_entropy(w, params, eps)?.value;
        let s_me_rate = if sigma_active || separate_kr {
            memory_entropy_rate(w, kr, params, spec, lambda, eps)?
        } else {
            0.0
        };
        let rhs = super::second_law_rhs(w, kr, params, eps)?;
        let dlambda_mean = w.grid.integrate_with(&w.values, |x, _, v| spec.dlambda(x) * v);
        let coeffs = spec.coefficients_at(lambda);
        let energy = w.grid.integrate_with(&w.values, |x, p, v| {
            (p * p / (2.0 * m) + coeffs.iter().rev().fold(0.0, |a, c| a * x + c)) * v
        });
        Ok((StepScalars { s_sh, s_me_rate, dq_dt: heat_flux(w, params), dlambda_mean, rhs, energy }, eps))
    };

    // discrete λ̇ on the step lattice, one-sided at the ends of the run so a
    // ramp that stops at the last step still counts its final rate
    let lambda_rate = |k: usize| {
        let at = |j: usize| schedule.value(t0 + j as f64 * opts.dt);
        let (lo, hi) = (k.saturating_sub(1), (k + 1).min(steps));
        (at(hi) - at(lo)) / ((hi - lo) as f64 * opts.dt)
    };
    let mut history: Vec<StepScalars> = Vec::with_capacity(steps + 1);
    let mut pending: Vec<(usize, LedgerRow)> = Vec::new();
    let mut max_norm_drift: f64 = 0.0;
    let mut min_w = rho_w.min_value();
    let mut min_kr = rho_kr.min_value();
    let mut max_boundary: f64 = 0.0;
    let mut snapshots = Vec::new();

    for k in 0..=steps {
        let t = t0 + k as f64 * opts.dt;
        if opts.snapshot_every > 0 && (k % opts.snapshot_every == 0 || k == steps) {
            snapshots.push(rho_w.clone());
        }
        let lambda = schedule.value(t);
        let kr_ref = if separate_kr { &rho_kr } else { &rho_w };
        let (sc, eps) = scalars(&rho_w, kr_ref, lambda)?;
        if k % opts.sample_every == 0 || k == steps {
            let sens = shannon_entropy(&rho_w, params, eps)?.sensitivity;
            let mom = moments(&rho_w, params, spec, lambda);
            let sigma = if sigma_active { sigma_eval(&rho_w, params, spec, lambda, rho_w.gamma()) } else { Vec::new() };
            let coeffs = spec.coefficients_at(lambda);
            let sigma_energy = if sigma.is_empty() {
                0.0
            } else {
                grid.integrate_with(&sigma, |x, p, s| (p * p / (2.0 * m) + coeffs.iter().rev().fold(0.0, |a, c| a * x + c)) * s)
            };
            pending.push((
                k,
                LedgerRow {
                    t,
                    lambda,
                    gamma: rho_w.gamma(),
                    s_sh: sc.s_sh,
                    ds_sh_dt: 0.0,
                    s_me_rate: sc.s_me_rate,
                    s_me_acc: 0.0,
                    dq_dt: sc.dq_dt,
                    work_rate: lambda_rate(k) * sc.dlambda_mean,
                    energy: mom.energy,
                    de_dt: 0.0,
                    lhs: 0.0,
                    rhs: sc.rhs,
                    epsilon: eps,
                    epsilon_sensitivity: sens,
                    sigma_energy,
                    moments: mom,
                },
            ));
        }
        history.push(sc);
        if k == steps {
            break;
        }
        stepper_w.step(&mut rho_w)?;
        check_blowup(&rho_w, peak0)?;
        if separate_kr {
            stepper_kr.step(&mut rho_kr)?;
            check_blowup(&rho_kr, peak0)?;
        }
        let kr_now = if separate_kr { &rho_kr } else { &rho_w };
        max_norm_drift = max_norm_drift
            .max((rho_w.integral() - norm0_w).abs())
            .max((kr_now.integral() - norm0_kr).abs());
        min_w = min_w.min(rho_w.min_value());
        min_kr = min_kr.min(kr_now.min_value());
        max_boundary = max_boundary.max(rho_w.boundary_max().max(kr_now.boundary_max()) / peak0);
        if max_boundary > opts.boundary_tol {
            return Err(QseError::DomainTooSmall(format!(
                "boundary/peak ratio {max_boundary:.3e} exceeds {:.1e} at t = {:.4}",
                opts.boundary_tol, rho_w.t
            )));
        }
    }
    if !separate_kr {
        rho_kr.values.clone_from(&rho_w.values);
        rho_kr.t = rho_w.t;
        rho_kr.clock = rho_w.clock;
    }

    // running integrals over every step
    let dt = opts.dt;
    let mut s_me_acc = vec![0.0; steps + 1];
    let (mut heat, mut work, mut rhs_integral) = (0.0, 0.0, 0.0);
    for k in 1..=steps {
        let (a, b) = (&history[k - 1], &history[k]);
        s_me_acc[k] = s_me_acc[k - 1] + 0.5 * dt * (a.s_me_rate + b.s_me_rate);
        heat += 0.5 * dt * (a.dq_dt + b.dq_dt);
        rhs_integral += 0.5 * dt * (a.rhs + b.rhs);
        let dl = schedule.value(t0 + k as f64 * dt) - schedule.value(t0 + (k - 1) as f64 * dt);
        work += 0.5 * (a.dlambda_mean + b.dlambda_mean) * dl;
    }
    let s = |k: usize| history[k].s_sh;
    // fourth-order differences, one-sided near the ends
    let rate = |f: &dyn Fn(usize) -> f64, k: usize| {
        if k < 2 {
            let s = if k == 0 { [-25.0, 48.0, -36.0, 16.0, -3.0] } else { [-3.0, -10.0, 18.0, -6.0, 1.0] };
            s.iter().enumerate().map(|(j, c)| c * f(j)).sum::<f64>() / (12.0 * dt)
        } else if k + 2 > steps {
            let s = if k == steps { [25.0, -48.0, 36.0, -16.0, 3.0] } else { [3.0, 10.0, -18.0, 6.0, -1.0] };
            s.iter().enumerate().map(|(j, c)| c * f(steps - j)).sum::<f64>() / (12.0 * dt)
        } else {
            (f(k - 2) - 8.0 * f(k - 1) + 8.0 * f(k + 1) - f(k + 2)) / (12.0 * dt)
        }
    };
    let e = |k: usize| history[k].energy;
    let temperature = params.temperature();
    let rows: Vec<LedgerRow> = pending
        .into_iter()
        .map(|(k, mut row)| {
            row.ds_sh_dt = rate(&s, k);
            row.de_dt = rate(&e, k);
            row.s_me_acc = s_me_acc[k];
            row.lhs = temperature * (row.ds_sh_dt + row.s_me_rate) - row.dq_dt;
            row
        })
        .collect();

    let energy_start = rows.first().map(|r| r.energy).unwrap_or(0.0);
    let energy_end = rows.last().map(|r| r.energy).unwrap_or(0.0);
    let run = LedgerRun {
        ledger: EntropyLedger { rows, epsilon_rel: opts.epsilon_rel },
        state: LedgerState { rho_w, rho_kr },
        snapshots,
        steps,
        dt,
        dt_bound,
        delta_s_sh: s(steps) - s(0),
        s_me_integral: s_me_acc[steps],
        heat,
        work,
        rhs_integral,
        energy_start,
        energy_end,
        max_norm_drift,
        min_value_w: min_w,
        min_value_kr: min_kr,
        max_boundary_ratio: max_boundary,
        separate_kr,
    };
    Ok(run)
}
