use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::checks::{uncertainty_sides, UncertaintySample};
use super::{
    heat_increment, heun_advance, leak_fraction, relative_hermiticity, step_heisenberg, BasisSpec,
    OperatorState, LEAK_ABORT,
};
use crate::error::{invalid, QseError, Result};
use crate::linalg::{expectation, CMat, CVec};
use crate::matrixqa::HERMITIAN_TOL;
use crate::model::{PhysicalParams, PotentialSpec, Schedule};
use crate::noise::NoiseStream;
use crate::stats::{Moments, CHUNK};

/// Quantity whose double expectation ⟨ψ₀|E[·]|ψ₀⟩ is tracked.
#[derive(Clone)]
pub enum Observable {
    Identity,
    Position,
    Momentum,
    PositionSq,
    MomentumSq,
    /// H(X_t, P_t, λ(t)).
    Energy,
    /// Accumulated heat Q_acc.
    Heat,
    /// Accumulated work W_acc.
    Work,
    /// Any matrix-valued function of the state.
    Custom(String, Arc<dyn Fn(&OperatorState) -> CMat + Send + Sync>),
}

impl Observable {
    pub fn name(&self) -> &str {
        match self {
            Observable::Identity => "identity",
            Observable::Position => "x",
            Observable::Momentum => "p",
            Observable::PositionSq => "x2",
            Observable::MomentumSq => "p2",
            Observable::Energy => "energy",
            Observable::Heat => "heat",
            Observable::Work => "work",
            Observable::Custom(name, _) => name,
        }
    }
}

impl fmt::Debug for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Observable({})", self.name())
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub paths: usize,
    pub seed: u64,
    /// Index of the first noise stream; lets independent ensembles share a seed.
    pub first_trajectory: u64,
    pub dt: f64,
    pub steps: usize,
    /// Observables are sampled every this many steps (and at the end).
    pub sample_every: usize,
    /// Accumulate Q_acc and W_acc as matrices instead of only their expectations.
    pub track_matrices: bool,
    /// Also evaluate the heat-rate uncertainty relation at each sample time.
    pub uncertainty: bool,
}

impl EnsembleConfig {
    pub fn new(paths: usize, seed: u64, dt: f64, steps: usize, sample_every: usize) -> Self {
        Self {
            paths,
            seed,
            first_trajectory: 0,
            dt,
            steps,
            sample_every,
            track_matrices: false,
            uncertainty: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.paths == 0 {
            return Err(invalid("paths", "need at least one path"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", "must be positive and finite"));
        }
        if self.sample_every == 0 {
            return Err(invalid("sample_every", "must be at least 1"));
        }
        Ok(())
    }

    /// Step indices at which observables are recorded.
    pub fn sample_steps(&self) -> Vec<usize> {
        let mut s: Vec<usize> = (0..=self.steps).step_by(self.sample_every).collect();
        if s.last() != Some(&self.steps) {
            s.push(self.steps);
        }
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ObservableSeries {
    pub name: String,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleSeries {
    pub times: Vec<f64>,
    pub paths: usize,
    pub series: Vec<ObservableSeries>,
    /// Uncertainty relation at sample times before the final step.
    pub uncertainty: Vec<UncertaintySample>,
    pub max_leak: f64,
    pub max_hermiticity: f64,
}

impl EnsembleSeries {
    pub fn get(&self, name: &str) -> Option<&ObservableSeries> {
        self.series.iter().find(|s| s.name == name)
    }
}

struct ChunkResult {
    moments: Vec<Moments>,
    max_leak: f64,
    max_herm: f64,
}

/// Monte Carlo double expectations ⟨⟨A⟩⟩(t) over `cfg.paths` noise
/// realizations, all starting from the basis operators and sharing `psi0`.
pub fn ensemble_expectation(
    basis: &BasisSpec,
    psi0: &CVec,
    params: &PhysicalParams,
    spec: &PotentialSpec,
    schedule: &Schedule,
    observables: &[Observable],
    cfg: &EnsembleConfig,
) -> Result<EnsembleSeries> {
    cfg.validate()?;
    if psi0.len() != basis.dimension() {
        return Err(QseError::DimensionMismatch {
            expected: format!("state of length {}", basis.dimension()),
            actual: format!("{}", psi0.len()),
        });
    }
    let samples = cfg.sample_steps();
    let n_obs = observables.len();
    let width = samples.len() * n_obs + if cfg.uncertainty { samples.len() * 5 } else { 0 };
    let chunks = cfg.paths.div_ceil(CHUNK);

    let results: Vec<Result<ChunkResult>> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut out = ChunkResult { moments: vec![Moments::default(); width], max_leak: 0.0, max_herm: 0.0 };
            let lo = c * CHUNK;
            let hi = (lo + CHUNK).min(cfg.paths);
            let mut row = vec![0.0; width];
            for path in lo..hi {
                let (leak, herm) = run_path(
                    basis, psi0, params, spec, schedule, observables, cfg, &samples, path as u64, &mut row,
                )?;
                out.max_leak = out.max_leak.max(leak);
                out.max_herm = out.max_herm.max(herm);
                for (m, v) in out.moments.iter_mut().zip(&row) {
                    m.push(*v);
                }
            }
            Ok(out)
        })
        .collect();

    let mut total = vec![Moments::default(); width];
    let mut max_leak: f64 = 0.0;
    let mut max_herm: f64 = 0.0;
    for r in results {
        let r = r?;
        for (t, m) in total.iter_mut().zip(&r.moments) {
            t.merge(m);
        }
        max_leak = max_leak.max(r.max_leak);
        max_herm = max_herm.max(r.max_herm);
    }

    let series = observables
        .iter()
        .enumerate()
        .map(|(o, obs)| ObservableSeries {
            name: obs.name().to_string(),
            mean: (0..samples.len()).map(|s| total[s * n_obs + o].mean).collect(),
            stderr: (0..samples.len()).map(|s| total[s * n_obs + o].stderr()).collect(),
        })
        .collect();

    let mut uncertainty = Vec::new();
    if cfg.uncertainty {
        let base = samples.len() * n_obs;
        for (s, &k) in samples.iter().enumerate() {
            if k >= cfg.steps {
                continue;
            }
            let v = |j: usize| total[base + 5 * s + j].mean;
            let t = k as f64 * cfg.dt;
            let gamma = (-params.damping_rate() * t).exp();
            uncertainty.push(uncertainty_sides(t, v(0), v(1), v(2), v(3), v(4), gamma, params));
        }
    }

    Ok(EnsembleSeries {
        times: samples.iter().map(|&k| k as f64 * cfg.dt).collect(),
        paths: cfg.paths,
        series,
        uncertainty,
        max_leak,
        max_hermiticity: max_herm,
    })
}

/// (A₀ + A₁X + … )ψ by Horner with matrix–vector products.
fn poly_apply(coeffs: &[f64], x: &CMat, psi: &CVec) -> CVec {
    let mut v = psi * Complex64::new(*coeffs.last().unwrap_or(&0.0), 0.0);
    for c in coeffs.iter().rev().skip(1) {
        v = x * v;
        v.axpy(Complex64::new(*c, 0.0), psi, Complex64::new(1.0, 0.0));
    }
    v
}

fn dlambda_expectation(x: &CMat, psi: &CVec, spec: &PotentialSpec) -> f64 {
    let mut coeffs = vec![0.0; spec.lambda_index() + 1];
    coeffs[spec.lambda_index()] = spec.lambda_scale();
    psi.dotc(&poly_apply(&coeffs, x, psi)).re
}

#[allow(clippy::too_many_arguments)]
fn run_path(
    basis: &BasisSpec,
    psi: &CVec,
    params: &PhysicalParams,
    spec: &PotentialSpec,
    schedule: &Schedule,
    observables: &[Observable],
    cfg: &EnsembleConfig,
    samples: &[usize],
    path: u64,
    row: &mut [f64],
) -> Result<(f64, f64)> {
    let mut noise = NoiseStream::new(cfg.seed, cfg.first_trajectory + path);
    let mut state = basis.initial_state();
    let mut heat = 0.0;
    let mut work = 0.0;
    let mut max_leak: f64 = 0.0;
    let mut max_herm: f64 = 0.0;
    let n_obs = observables.len();
    let unc_base = samples.len() * n_obs;
    let mut next_sample = 0;
    // ⟨∂_λV(X)⟩ at the current state, when already known
    let mut dl_cached: Option<f64> = None;

    for k in 0..=cfg.steps {
        let lambda = schedule.value(k as f64 * cfg.dt);
        let sampling = next_sample < samples.len() && samples[next_sample] == k;
        if sampling {
            let leak = leak_fraction(&state.x, &state.p, psi, state.keep());
            let herm = relative_hermiticity(&state.x).max(relative_hermiticity(&state.p));
            if leak > LEAK_ABORT {
                return Err(QseError::NumericalAbort {
                    t: state.t,
                    reason: format!("guard-level leakage {leak:.3e} on path {path}"),
                });
            }
            if herm > HERMITIAN_TOL {
                return Err(QseError::StepRejected {
                    t: state.t,
                    reason: format!("hermiticity defect {herm:.3e} on path {path}"),
                });
            }
            max_leak = max_leak.max(leak);
            max_herm = max_herm.max(herm);
            for (o, obs) in observables.iter().enumerate() {
                row[next_sample * n_obs + o] = evaluate(obs, &state, psi, params, spec, lambda, heat, work);
            }
            if cfg.uncertainty && k < cfg.steps {
                let xv = &state.x * psi;
                let u = unc_base + 5 * next_sample;
                row[u] = psi.dotc(&xv).re;
                row[u + 1] = xv.norm_squared();
                row[u + 4] = psi.dotc(&(&state.p * psi)).re;
            }
        }
        if k == cfg.steps {
            break;
        }
        let lambda_next = schedule.value((k + 1) as f64 * cfg.dt);
        let db = noise.increment(cfg.dt);
        let driven = lambda_next != lambda;
        let dl_t = if driven {
            dl_cached.unwrap_or_else(|| dlambda_expectation(&state.x, psi, spec))
        } else {
            0.0
        };

        let (dx, force_mid, dq_matrix) = if cfg.track_matrices {
            let (next, inc) = step_heisenberg(&state, params, spec, lambda, lambda_next, db, cfg.dt)?;
            state = next;
            (inc.dx, inc.force_mid, Some(inc.dq))
        } else {
            let adv = heun_advance(&state.x, &state.p, params, spec, lambda, lambda_next, db, cfg.dt);
            state.x += &adv.dx;
            state.p += &adv.dp;
            state.t += cfg.dt;
            state.clock += params.damping_rate() * cfg.dt;
            (adv.dx, adv.force_mid, None)
        };

        heat += (&dx * psi).dotc(&(&force_mid * psi)).re;
        dl_cached = None;
        if driven {
            let dl_next = dlambda_expectation(&state.x, psi, spec);
            work += 0.5 * (dl_t + dl_next) * (lambda_next - lambda);
            dl_cached = Some(dl_next);
        }

        if cfg.uncertainty && sampling {
            let dq = match dq_matrix {
                Some(m) => m,
                None => heat_increment(&dx, &force_mid)?,
            };
            let qv = (&dq * psi) / Complex64::new(cfg.dt, 0.0);
            let u = unc_base + 5 * next_sample;
            row[u + 2] = psi.dotc(&qv).re;
            row[u + 3] = qv.norm_squared();
        }
        if sampling {
            next_sample += 1;
        }
    }
    Ok((max_leak, max_herm))
}

#[allow(clippy::too_many_arguments)]
fn evaluate(
    obs: &Observable,
    state: &OperatorState,
    psi: &CVec,
    params: &PhysicalParams,
    spec: &PotentialSpec,
    lambda: f64,
    heat: f64,
    work: f64,
) -> f64 {
    match obs {
        Observable::Identity => psi.norm_squared(),
        Observable::Position => psi.dotc(&(&state.x * psi)).re,
        Observable::Momentum => psi.dotc(&(&state.p * psi)).re,
        Observable::PositionSq => (&state.x * psi).norm_squared(),
        Observable::MomentumSq => (&state.p * psi).norm_squared(),
        Observable::Energy => {
            let kinetic = (&state.p * psi).norm_squared() / (2.0 * params.mass());
            let v = poly_apply(&spec.coefficients_at(lambda), &state.x, psi);
            kinetic + psi.dotc(&v).re
        }
        Observable::Heat => heat,
        Observable::Work => work,
        Observable::Custom(_, f) => expectation(&f(state), psi),
    }
}
