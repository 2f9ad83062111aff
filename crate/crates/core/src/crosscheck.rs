//! Classical-limit three-way comparison of a relaxation: the classical-kind
//! phase-space PDE, Langevin trajectories and operator trajectories started
//! from a coherent state at small ħ. For a harmonic potential all three
//! share the same first and second moments in expectation.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, Result};
use crate::heisenberg::{ensemble_expectation, BasisSpec, EnsembleConfig, InitialWavepacket, Observable};
use crate::langevin::{run_langevin, ClassicalEnsemble, Estimate};
use crate::model::{PhysicalParams, PotentialSpec, Schedule};
use crate::wignerpde::{evolve, gaussian_field, stable_dt, EvolveOptions, FieldKind, PhaseGrid, DEFAULT_COURANT};

/// Moments compared at each sample time.
pub const QUANTITIES: [&str; 5] = ["x", "p", "x2", "p2", "xp"];

#[derive(Debug, Clone)]
pub struct CrosscheckConfig {
    /// ħ sets the coherent-state width and the operator dynamics.
    pub params: PhysicalParams,
    pub spec: PotentialSpec,
    pub lambda: f64,
    pub x0: f64,
    pub p0: f64,
    pub t_end: f64,
    /// Number of sample times after t = 0.
    pub samples: usize,
    pub grid: PhaseGrid,
    pub basis_n: usize,
    pub basis_guard: usize,
    /// Step of the two stochastic schemes.
    pub dt_sde: f64,
    pub langevin_paths: usize,
    pub operator_paths: usize,
    pub seed: u64,
    /// Agreement threshold in combined standard errors.
    pub z_max: f64,
}

impl CrosscheckConfig {
    /// Displaced coherent state relaxing in a unit harmonic well at ħ = 1/4.
    pub fn harmonic_default(seed: u64) -> Result<Self> {
        Ok(Self {
            params: PhysicalParams::new(1.0, 1.0, 1.0, 0.25)?,
            spec: PotentialSpec::harmonic(),
            lambda: 1.0,
            x0: 1.5,
            p0: 0.0,
            t_end: 3.0,
            samples: 10,
            grid: PhaseGrid::symmetric(8.0, 257, 8.0, 257)?,
            basis_n: 32,
            basis_guard: 8,
            dt_sde: 0.01,
            langevin_paths: 100_000,
            operator_paths: 2_000,
            seed,
            z_max: 3.0,
        })
    }
}

/// One moment at one time from the three routes, with pairwise z-scores.
#[derive(Debug, Clone, Serialize)]
pub struct CrosscheckRow {
    pub t: f64,
    pub quantity: String,
    pub pde: f64,
    pub langevin: Estimate,
    pub operator: Estimate,
    pub z_pde_langevin: f64,
    pub z_pde_operator: f64,
    pub z_langevin_operator: f64,
}

impl CrosscheckRow {
    pub fn max_z(&self) -> f64 {
        self.z_pde_langevin.max(self.z_pde_operator).max(self.z_langevin_operator)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CrosscheckReport {
    pub rows: Vec<CrosscheckRow>,
    pub max_z: f64,
    pub z_max: f64,
    pub passed: bool,
    pub pde_dt: f64,
    pub pde_min_value: f64,
    pub pde_max_norm_drift: f64,
    pub operator_max_leak: f64,
    pub langevin_outside: usize,
}

fn z_score(a: Estimate, b: Estimate) -> f64 {
    let se = a.stderr.hypot(b.stderr);
    let d = (a.mean - b.mean).abs();
    if se > 0.0 {
        d / se
    } else if d == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

pub fn crosscheck(cfg: &CrosscheckConfig) -> Result<CrosscheckReport> {
    if cfg.samples == 0 {
        return Err(invalid("samples", "need at least one sample time"));
    }
    if !(cfg.t_end > 0.0 && cfg.dt_sde > 0.0) {
        return Err(invalid("t_end/dt", "must be positive"));
    }
    let interval = cfg.t_end / cfg.samples as f64;
    let sde_stride = (interval / cfg.dt_sde).round().max(1.0) as usize;
    let dt_sde = interval / sde_stride as f64;
    let sde_steps = sde_stride * cfg.samples;
    let schedule = Schedule::constant(cfg.lambda);

    // shared initial state: the coherent state of the reference oscillator
    let omega = (cfg.lambda / cfg.params.mass()).sqrt();
    let basis = BasisSpec::new(cfg.basis_n, cfg.basis_guard, omega, &cfg.params)?;
    let wp = InitialWavepacket::coherent(&basis, cfg.x0, cfg.p0)?;
    let packet = wp.packet(cfg.params.hbar());

    // (a) classical-kind PDE
    let field = gaussian_field(&cfg.grid, &packet, FieldKind::Classical)?;
    let bound = stable_dt(&cfg.grid, &cfg.params, &cfg.spec, (cfg.lambda, cfg.lambda), 1.0, FieldKind::Classical, DEFAULT_COURANT);
    let pde_stride = (interval / bound).ceil().max(1.0) as usize;
    let pde_dt = interval / pde_stride as f64;
    let evo = evolve(&field, &cfg.params, &cfg.spec, &schedule, &EvolveOptions::new(pde_dt, cfg.t_end, pde_stride))?;

    // (b) Langevin trajectories on stream block 0
    let ens = ClassicalEnsemble::from_packet(&packet, cfg.langevin_paths, cfg.seed, 0)?;
    let lang = run_langevin(ens, &cfg.params, &cfg.spec, &schedule, dt_sde, sde_steps, sde_stride)?;
    let langevin_outside = crate::langevin::outside_count(&lang.ensemble, &cfg.grid);

    // (c) operator trajectories on a disjoint stream block
    let xp: Observable = Observable::Custom(
        "xp".into(),
        Arc::new(|s| (&s.x * &s.p + &s.p * &s.x) * num_complex::Complex64::new(0.5, 0.0)),
    );
    let observables = [Observable::Position, Observable::Momentum, Observable::PositionSq, Observable::MomentumSq, xp];
    let mut ecfg = EnsembleConfig::new(cfg.operator_paths, cfg.seed, dt_sde, sde_steps, sde_stride);
    ecfg.first_trajectory = cfg.langevin_paths as u64;
    let ops = ensemble_expectation(&basis, &wp.psi, &cfg.params, &cfg.spec, &schedule, &observables, &ecfg)?;

    let mut rows = Vec::with_capacity(cfg.samples * QUANTITIES.len());
    for k in 1..=cfg.samples {
        let snap = &evo.snapshots[k];
        let fm = &snap.grid;
        let pde_vals = [
            fm.integrate_with(&snap.values, |x, _, w| x * w),
            fm.integrate_with(&snap.values, |_, p, w| p * w),
            fm.integrate_with(&snap.values, |x, _, w| x * x * w),
            fm.integrate_with(&snap.values, |_, p, w| p * p * w),
            fm.integrate_with(&snap.values, |x, p, w| x * p * w),
        ];
        let s = &lang.samples[k];
        let lang_vals = [s.x, s.p, s.x2, s.p2, s.xp];
        for (q, name) in QUANTITIES.iter().enumerate() {
            let series = ops.get(name).expect("observable requested above");
            let op = Estimate { mean: series.mean[k], stderr: series.stderr[k] };
            let pde = Estimate { mean: pde_vals[q], stderr: 0.0 };
            rows.push(CrosscheckRow {
                t: k as f64 * interval,
                quantity: (*name).to_string(),
                pde: pde.mean,
                langevin: lang_vals[q],
                operator: op,
                z_pde_langevin: z_score(pde, lang_vals[q]),
                z_pde_operator: z_score(pde, op),
                z_langevin_operator: z_score(lang_vals[q], op),
            });
        }
    }
    let max_z = rows.iter().map(CrosscheckRow::max_z).fold(0.0, f64::max);
    Ok(CrosscheckReport {
        rows,
        max_z,
        z_max: cfg.z_max,
        passed: max_z < cfg.z_max,
        pde_dt,
        pde_min_value: evo.diagnostics.min_value,
        pde_max_norm_drift: evo.diagnostics.max_norm_drift,
        operator_max_leak: ops.max_leak,
        langevin_outside,
    })
}
