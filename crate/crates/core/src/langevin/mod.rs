//! Classical Langevin Monte Carlo, the ħ = 0 oracle for the quantum
//! representations. Heat uses the same Stratonovich midpoint force as the
//! operator scheme so the two differ only by operator symmetrization.


use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};
use crate::model::{GaussianPacket, PhysicalParams, PotentialSpec, Schedule};
use crate::noise::NoiseStream;
use crate::stats::{Moments, CHUNK};
use crate::wignerpde::{FieldKind, PhaseGrid, WignerField};

/// One trajectory with its private noise stream.
#[derive(Debug, Clone)]
pub struct Particle {
    pub x: f64,
    pub p: f64,
    pub q_acc: f64,
    pub w_acc: f64,
    stream: NoiseStream,
}

/// M independent classical trajectories sharing a master seed.
#[derive(Debug, Clone)]
pub struct ClassicalEnsemble {
    particles: Vec<Particle>,
    pub t: f64,
    seed: u64,
}

impl ClassicalEnsemble {
    /// Trajectories `first .. first + paths` sampled from an uncorrelated
    /// Gaussian packet.
    pub fn from_packet(packet: &GaussianPacket, paths: usize, seed: u64, first: u64) -> Result<Self> {
        Self::build(paths, seed, first, |traj| {
            let mut ic = NoiseStream::initial_conditions(seed, traj);
            let x = packet.x0 + packet.sigma_x * ic.standard_normal();
            let p = packet.p0 + packet.sigma_p * ic.standard_normal();
            (x, p)
        })
    }

    /// Every trajectory starts at (x0, p0).
    pub fn delta(x0: f64, p0: f64, paths: usize, seed: u64, first: u64) -> Result<Self> {
        Self::build(paths, seed, first, |_| (x0, p0))
    }

    fn build(paths: usize, seed: u64, first: u64, init: impl Fn(u64) -> (f64, f64)) -> Result<Self> {
        if paths == 0 {
            return Err(invalid("paths", "ensemble needs at least one trajectory"));
        }
        let particles = (0..paths as u64)
            .map(|k| {
                let traj = first + k;
                let (x, p) = init(traj);
                Particle { x, p, q_acc: 0.0, w_acc: 0.0, stream: NoiseStream::new(seed, traj) }
            })
            .collect();
        Ok(Self { particles, t: 0.0, seed })
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    /// H(x, p, λ) per trajectory.
    pub fn energies(&self, params: &PhysicalParams, spec: &PotentialSpec, lambda: f64) -> Vec<f64> {
        let v = spec.coefficients_at(lambda);
        let m = params.mass();
        self.particles.iter().map(|q| q.p * q.p / (2.0 * m) + horner(&v, q.x)).collect()
    }
}

fn horner(coeffs: &[f64], x: f64) -> f64 {
    coeffs.iter().rev().fold(0.0, |a, c| a * x + c)
}

/// One Heun step of every trajectory from λ to `lambda_next`, accumulating
/// heat Δx·F̄ and work ∂_λV(x_mid)·Δλ.
pub fn step_langevin(
    ens: &mut ClassicalEnsemble,
    params: &PhysicalParams,
    spec: &PotentialSpec,
    lambda: f64,
    lambda_next: f64,
    dt: f64,
) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", format!("step must be positive, got {dt}")));
    }
    let f0 = spec.derivative_coefficients(1, lambda);
    let f1 = spec.derivative_coefficients(1, lambda_next);
    let (m, r, sigma) = (params.mass(), params.damping_rate(), params.noise_amplitude());
    let dl = lambda_next - lambda;
    ens.particles.par_iter_mut().for_each(|q| {
        let kick = sigma * q.stream.increment(dt);
        let d0 = -r * q.p - horner(&f0, q.x);
        let p_pred = q.p + dt * d0 + kick;
        let x_pred = q.x + dt * q.p / m;
        let d1 = -r * p_pred - horner(&f1, x_pred);
        let dx = 0.5 * dt / m * (q.p + p_pred);
        let dp = 0.5 * dt * (d0 + d1) + kick;
        let force = -r * (q.p + 0.5 * dp) + kick / dt;
        q.q_acc += dx * force;
        if dl != 0.0 {
            q.w_acc += spec.dlambda(q.x + 0.5 * dx) * dl;
        }
        q.x += dx;
        q.p += dp;
    });
    ens.t += dt;
    Ok(())
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl From<&Moments> for Estimate {
    fn from(m: &Moments) -> Self {
        Self { mean: m.mean, stderr: m.stderr() }
    }
}

/// Ensemble averages at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassicalMoments {
    pub t: f64,
    pub x: Estimate,
    pub p: Estimate,
    pub x2: Estimate,
    pub p2: Estimate,
    pub xp: Estimate,
    pub energy: Estimate,
    pub heat: Estimate,
    pub work: Estimate,
}

/// Moments reduced chunk by chunk in trajectory order, independent of the
/// worker count.
pub fn ensemble_moments(ens: &ClassicalEnsemble, params: &PhysicalParams, spec: &PotentialSpec, lambda: f64) -> ClassicalMoments {
    let v = spec.coefficients_at(lambda);
    let m = params.mass();
    let chunks: Vec<[Moments; 8]> = ens
        .particles
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = [Moments::default(); 8];
            for q in chunk {
                let vals =
                    [q.x, q.p, q.x * q.x, q.p * q.p, q.x * q.p, q.p * q.p / (2.0 * m) + horner(&v, q.x), q.q_acc, q.w_acc];
                for (a, val) in acc.iter_mut().zip(vals) {
                    a.push(val);
                }
            }
            acc
        })
        .collect();
    let mut total = [Moments::default(); 8];
    for c in &chunks {
        for (t, m) in total.iter_mut().zip(c) {
            t.merge(m);
        }
    }
    let e = |k: usize| Estimate::from(&total[k]);
    ClassicalMoments { t: ens.t, x: e(0), p: e(1), x2: e(2), p2: e(3), xp: e(4), energy: e(5), heat: e(6), work: e(7) }
}

/// Sampled moments of a protocol run.
#[derive(Debug, Clone)]
pub struct LangevinRun {
    pub samples: Vec<ClassicalMoments>,
    pub ensemble: ClassicalEnsemble,
}

/// Runs `steps` steps under `schedule` starting at the ensemble's time,
/// sampling every `sample_every` steps (and at the end).
pub fn run_langevin(
    mut ens: ClassicalEnsemble,
    params: &PhysicalParams,
    spec: &PotentialSpec,
    schedule: &Schedule,
    dt: f64,
    steps: usize,
    sample_every: usize,
) -> Result<LangevinRun> {
    if sample_every == 0 {
        return Err(invalid("sample_every", "must be at least 1"));
    }
    let t0 = ens.t;
    let mut samples = vec![ensemble_moments(&ens, params, spec, schedule.value(t0))];
    for k in 0..steps {
        let (ta, tb) = (t0 + k as f64 * dt, t0 + (k + 1) as f64 * dt);
        let lb = schedule.value(tb);
        step_langevin(&mut ens, params, spec, schedule.value(ta), lb, dt)?;
        ens.t = tb;
        if (k + 1) % sample_every == 0 || k + 1 == steps {
            samples.push(ensemble_moments(&ens, params, spec, lb));
        }
    }
    Ok(LangevinRun { samples, ensemble: ens })
}

/// Trapezoid cell of `v` on a uniform axis: node index and cell width, or
/// `None` outside [lo, hi].
fn cell(v: f64, lo: f64, h: f64, n: usize) -> Option<(usize, f64)> {
    let s = (v - lo) / h;
    if !(s >= 0.0 && s <= (n - 1) as f64) {
        return None;
    }
    let i = (s.round() as usize).min(n - 1);
    let w = if i == 0 || i == n - 1 { 0.5 * h } else { h };
    Some((i, w))
}

/// Number of trajectories outside the grid's rectangle.
pub fn outside_count(ens: &ClassicalEnsemble, grid: &PhaseGrid) -> usize {
    ens.particles
        .iter()
        .filter(|q| cell(q.x, grid.x_min, grid.hx(), grid.nx).is_none() || cell(q.p, grid.p_min, grid.hp(), grid.np).is_none())
        .count()
}

/// Density histogram whose cells are the trapezoid control volumes of the
/// grid nodes, so the trapezoidal integral is exactly 1. Trajectories off the
/// grid are dropped (see [`outside_count`]).
pub fn histogram(ens: &ClassicalEnsemble, grid: &PhaseGrid) -> Result<WignerField> {
    let mut field = WignerField::zeros(grid.clone(), FieldKind::Classical);
    let mut inside = 0usize;
    for q in &ens.particles {
        if let (Some((i, wx)), Some((j, wp))) =
            (cell(q.x, grid.x_min, grid.hx(), grid.nx), cell(q.p, grid.p_min, grid.hp(), grid.np))
        {
            field.values[grid.index(i, j)] += 1.0 / (wx * wp);
            inside += 1;
        }
    }
    if inside == 0 {
        return Err(invalid("grid", "no trajectory falls inside the histogram grid"));
    }
    field.values.iter_mut().for_each(|v| *v /= inside as f64);
    field.t = ens.t;
    Ok(field)
}
