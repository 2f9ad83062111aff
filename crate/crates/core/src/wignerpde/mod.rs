//! Method-of-lines solver for the Wigner evolution equation with the quantum
//! correction Σ, and for its classical (Kramers) counterpart on the same grid.
//!
//! Fields are stored x-outer, p-inner: `values[i * np + j]` is ρ(x_i, p_j).

mod snapshot;
pub mod stencil;

#[cfg(test)]
mod tests;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, QseError, Result};
use crate::model::{GaussianPacket, PhysicalParams, PotentialSpec, Schedule};
use stencil::{D1, D2, D3, D5};

pub use snapshot::{read_snapshot, write_snapshot, SnapshotFormat, SnapshotHeader, SNAPSHOT_SCHEMA};

/// Default Courant factor of the explicit time step.
pub const DEFAULT_COURANT: f64 = 0.4;
/// A run aborts when any value exceeds this multiple of the initial peak.
pub const BLOWUP_FACTOR: f64 = 10.0;
/// Boundary values must stay below this fraction of the peak.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Uniform rectangular phase-space grid including both end points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseGrid {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub p_min: f64,
    pub p_max: f64,
    pub np: usize,
}

impl PhaseGrid {
    pub fn new(x_min: f64, x_max: f64, nx: usize, p_min: f64, p_max: f64, np: usize) -> Result<Self> {
        if nx < 32 || np < 32 {
            return Err(invalid("grid", format!("need at least 32 points per axis, got {nx}x{np}")));
        }
        if !(x_min < x_max && p_min < p_max) || ![x_min, x_max, p_min, p_max].iter().all(|v| v.is_finite()) {
            return Err(invalid("grid", "bounds must be finite with min < max"));
        }
        Ok(Self { x_min, x_max, nx, p_min, p_max, np })
    }

    /// [−x_half, x_half] × [−p_half, p_half].
    pub fn symmetric(x_half: f64, nx: usize, p_half: f64, np: usize) -> Result<Self> {
        Self::new(-x_half, x_half, nx, -p_half, p_half, np)
    }

    pub fn hx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn hp(&self) -> f64 {
        (self.p_max - self.p_min) / (self.np - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.hx()
    }

    pub fn p(&self, j: usize) -> f64 {
        self.p_min + j as f64 * self.hp()
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn ps(&self) -> Vec<f64> {
        (0..self.np).map(|j| self.p(j)).collect()
    }

    pub fn len(&self) -> usize {
        self.nx * self.np
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        i * self.np + j
    }

    /// Trapezoidal quadrature ∫ f dΓ.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.integrate_with(f, |_, _, v| v)
    }

    /// Trapezoidal quadrature of g(x, p, f(x, p)).
    pub fn integrate_with(&self, f: &[f64], g: impl Fn(f64, f64, f64) -> f64) -> f64 {
        let (hx, hp) = (self.hx(), self.hp());
        let ps = self.ps();
        let mut total = 0.0;
        for i in 0..self.nx {
            let x = self.x(i);
            let row = &f[i * self.np..(i + 1) * self.np];
            let mut s = 0.0;
            for (j, (&v, &p)) in row.iter().zip(&ps).enumerate() {
                let w = if j == 0 || j == self.np - 1 { 0.5 } else { 1.0 };
                s += w * g(x, p, v);
            }
            let w = if i == 0 || i == self.nx - 1 { 0.5 } else { 1.0 };
            total += w * s;
        }
        total * hx * hp
    }

    fn same_as(&self, other: &PhaseGrid) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(QseError::GridMismatch)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FieldKind {
    /// ρ_W, evolved with Σ.
    Quantum,
    /// ρ_KR, evolved with Σ = 0.
    Classical,
}

/// Real phase-space function on a grid at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct WignerField {
    pub grid: PhaseGrid,
    pub values: Vec<f64>,
    pub t: f64,
    /// ∫ ν/m dt since the memory factor was last reset; γ = e^{−clock}.
    pub clock: f64,
    pub kind: FieldKind,
}

/// Phase-space moments of a field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldMoments {
    pub norm: f64,
    pub x: f64,
    pub p: f64,
    pub x2: f64,
    pub p2: f64,
    pub xp: f64,
    pub energy: f64,
}

impl WignerField {
    pub fn zeros(grid: PhaseGrid, kind: FieldKind) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values, t: 0.0, clock: 0.0, kind }
    }

    pub fn from_fn(grid: PhaseGrid, kind: FieldKind, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for i in 0..grid.nx {
            let x = grid.x(i);
            for j in 0..grid.np {
                values.push(f(x, grid.p(j)));
            }
        }
        Self { grid, values, t: 0.0, clock: 0.0, kind }
    }

    pub fn gamma(&self) -> f64 {
        (-self.clock).exp()
    }

    pub fn integral(&self) -> f64 {
        self.grid.integrate(&self.values)
    }

    pub fn peak(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Largest |value| on the outer edge of the grid.
    pub fn boundary_max(&self) -> f64 {
        let (nx, np) = (self.grid.nx, self.grid.np);
        let mut m: f64 = 0.0;
        for j in 0..np {
            m = m.max(self.values[j].abs()).max(self.values[(nx - 1) * np + j].abs());
        }
        for i in 0..nx {
            m = m.max(self.values[i * np].abs()).max(self.values[i * np + np - 1].abs());
        }
        m
    }

    /// ∫|a − b| dΓ.
    pub fn l1_distance(&self, other: &WignerField) -> Result<f64> {
        self.grid.same_as(&other.grid)?;
        let diff: Vec<f64> = self.values.iter().zip(&other.values).map(|(a, b)| (a - b).abs()).collect();
        Ok(self.grid.integrate(&diff))
    }

    /// Rescales so that the trapezoidal integral is exactly 1.
    pub fn normalize(&mut self) -> Result<()> {
        let z = self.integral();
        if !(z > 0.0 && z.is_finite()) {
            return Err(invalid("field", format!("cannot normalize field with integral {z}")));
        }
        self.values.iter_mut().for_each(|v| *v /= z);
        Ok(())
    }

    pub fn moments(&self, params: &PhysicalParams, spec: &PotentialSpec, lambda: f64) -> FieldMoments {
        moments(self, params, spec, lambda)
    }
}

/// Trapezoidal moments of ρ, including ⟨H⟩ at λ.
pub fn moments(field: &WignerField, params: &PhysicalParams, spec: &PotentialSpec, lambda: f64) -> FieldMoments {
    let g = &field.grid;
    let v = &field.values;
    let m = params.mass();
    let coeffs = spec.coefficients_at(lambda);
    let pot = |x: f64| coeffs.iter().rev().fold(0.0, |a, c| a * x + c);
    FieldMoments {
        norm: g.integrate(v),
        x: g.integrate_with(v, |x, _, f| x * f),
        p: g.integrate_with(v, |_, p, f| p * f),
        x2: g.integrate_with(v, |x, _, f| x * x * f),
        p2: g.integrate_with(v, |_, p, f| p * p * f),
        xp: g.integrate_with(v, |x, p, f| x * p * f),
        energy: g.integrate_with(v, |x, p, f| (p * p / (2.0 * m) + pot(x)) * f),
    }
}

/// Wigner function of the minimum-uncertainty Gaussian,
/// (1/πħ) exp(−(x−x0)²/2σ²) exp(−2σ²(p−p0)²/ħ²), normalized on the grid.
pub fn gaussian_wigner(grid: &PhaseGrid, x0: f64, p0: f64, sigma: f64, params: &PhysicalParams) -> Result<WignerField> {
    let packet = GaussianPacket::minimum_uncertainty(x0, p0, sigma, params.hbar())?;
    gaussian_field(grid, &packet, FieldKind::Quantum)
}

/// Product Gaussian in x and p with the packet's spreads, normalized on the grid.
pub fn gaussian_field(grid: &PhaseGrid, packet: &GaussianPacket, kind: FieldKind) -> Result<WignerField> {
    if packet.sigma_x < 4.0 * grid.hx() || packet.sigma_p < 4.0 * grid.hp() {
        return Err(invalid(
            "packet",
            format!(
                "spreads ({:.3e}, {:.3e}) not resolved by spacings ({:.3e}, {:.3e}); need 4 points per sigma",
                packet.sigma_x,
                packet.sigma_p,
                grid.hx(),
                grid.hp()
            ),
        ));
    }
    let (sx, sp) = (packet.sigma_x, packet.sigma_p);
    let norm = 1.0 / (2.0 * std::f64::consts::PI * sx * sp);
    let mut field = WignerField::from_fn(grid.clone(), kind, |x, p| {
        let dx = x - packet.x0;
        let dp = p - packet.p0;
        norm * (-dx * dx / (2.0 * sx * sx) - dp * dp / (2.0 * sp * sp)).exp()
    });
    field.normalize()?;
    Ok(field)
}

/// Per-x coefficients of the right-hand side at one (λ, γ).
struct RowCoefficients {
    /// V'(x_i).
    force: Vec<f64>,
    /// V'''(x_i)/3! · (−ħ²γ²/4).
    c3: Vec<f64>,
    /// V⁽⁵⁾(x_i)/5! · (ħ²γ²/4)².
    c5: Vec<f64>,
    has_sigma: bool,
}

fn row_coefficients(grid: &PhaseGrid, params: &PhysicalParams, spec: &PotentialSpec, lambda: f64, gamma: f64, kind: FieldKind) -> RowCoefficients {
    let eval = |n: usize| {
        let c = spec.derivative_coefficients(n, lambda);
        (0..grid.nx)
            .map(|i| {
                let x = grid.x(i);
                c.iter().rev().fold(0.0, |a, k| a * x + k)
            })
            .collect::<Vec<f64>>()
    };
    let force = eval(1);
    let q = params.hbar() * params.hbar() * gamma * gamma / 4.0;
    let quantum = kind == FieldKind::Quantum && q != 0.0;
    let (mut c3, mut c5) = (vec![0.0; grid.nx], vec![0.0; grid.nx]);
    if quantum {
        c3 = eval(3).into_iter().map(|v| v / 6.0 * (-q)).collect();
        c5 = eval(5).into_iter().map(|v| v / 120.0 * q * q).collect();
    }
    let has_sigma = c3.iter().chain(&c5).any(|c| *c != 0.0);
    RowCoefficients { force, c3, c5, has_sigma }
}

/// Right-hand side at γ = e^{−νt/m}.
pub fn rhs_eval(field: &WignerField, params: &PhysicalParams, spec: &PotentialSpec, lambda: f64, t: f64) -> Result<Vec<f64>> {
    let gamma = crate::model::gamma(params, t)?;
    let mut out = vec![0.0; field.grid.len()];
    rhs_into(&field.grid, &field.values, field.kind, params, spec, lambda, gamma, &mut out);
    Ok(out)
}

/// The quantum correction Σ alone.
pub fn sigma_eval(field: &WignerField, params: &PhysicalParams, spec: &PotentialSpec, lambda: f64, gamma: f64) -> Vec<f64> {
    let grid = &field.grid;
    let np = grid.np;
    let coef = row_coefficients(grid, params, spec, lambda, gamma, FieldKind::Quantum);
    let hp = grid.hp();
    let mut out = vec![0.0; grid.len()];
    if !coef.has_sigma {
        return out;
    }
    out.par_chunks_mut(np).enumerate().for_each(|(i, row)| {
        let f = &field.values[i * np..(i + 1) * np];
        if coef.c3[i] != 0.0 {
            D3.apply_add(f, coef.c3[i] / hp.powi(3), row);
        }
        if coef.c5[i] != 0.0 {
            D5.apply_add(f, coef.c5[i] / hp.powi(5), row);
        }
    });
    out
}

/// ∂_p^order of a field with the fourth-order stencils (order 1, 2, 3 or 5).
pub fn p_derivative(grid: &PhaseGrid, values: &[f64], order: u32) -> Result<Vec<f64>> {
    let s = match order {
        1 => D1,
        2 => D2,
        3 => D3,
        5 => D5,
        _ => return Err(QseError::Unsupported(format!("p-derivative of order {order}"))),
    };
    let np = grid.np;
    let scale = 1.0 / grid.hp().powi(order as i32);
    let mut out = vec![0.0; grid.len()];
    out.par_chunks_mut(np).enumerate().for_each(|(i, row)| {
        s.apply_add(&values[i * np..(i + 1) * np], scale, row);
    });
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn rhs_into(
    grid: &PhaseGrid,
    values: &[f64],
    kind: FieldKind,
    params: &PhysicalParams,
    spec: &PotentialSpec,
    lambda: f64,
    gamma: f64,
    out: &mut [f64],
) {
    let (nx, np) = (grid.nx, grid.np);
    let (hx, hp) = (grid.hx(), grid.hp());
    let m = params.mass();
    let r = params.damping_rate();
    let diffusion = params.nu() * params.kt();
    let coef = row_coefficients(grid, params, spec, lambda, gamma, kind);
    let ps = grid.ps();
    let dx_half = D1.half();

    out.par_chunks_mut(np).enumerate().for_each_init(
        || vec![0.0; np],
        |flux, (i, row)| {
            row.iter_mut().for_each(|v| *v = 0.0);
            let f = &values[i * np..(i + 1) * np];

            // −(p/m) ∂_x ρ
            for (k, &c) in D1.coeffs.iter().enumerate() {
                if c == 0.0 || i + k < dx_half || i + k - dx_half >= nx {
                    continue;
                }
                let src = &values[(i + k - dx_half) * np..(i + k - dx_half + 1) * np];
                let w = -c / (hx * m);
                for ((o, s), p) in row.iter_mut().zip(src).zip(&ps) {
                    *o += w * p * s;
                }
            }

            // ∂_p[(V' + (ν/m) p) ρ]
            let force = coef.force[i];
            for ((g, v), p) in flux.iter_mut().zip(f).zip(&ps) {
                *g = (force + r * p) * v;
            }
            D1.apply_add(flux, 1.0 / hp, row);

            if diffusion != 0.0 {
                D2.apply_add(f, diffusion / (hp * hp), row);
            }
            if coef.has_sigma {
                if coef.c3[i] != 0.0 {
                    D3.apply_add(f, coef.c3[i] / hp.powi(3), row);
                }
                if coef.c5[i] != 0.0 {
                    D5.apply_add(f, coef.c5[i] / hp.powi(5), row);
                }
            }
        },
    );
}

/// Largest stable explicit step on `grid` for λ anywhere in `lambda_range`.
///
/// The bound is `courant` divided by the sum of the diffusive, dispersive and
/// advective rates, so it never exceeds any single-term limit.
pub fn stable_dt(
    grid: &PhaseGrid,
    params: &PhysicalParams,
    spec: &PotentialSpec,
    lambda_range: (f64, f64),
    gamma_max: f64,
    kind: FieldKind,
    courant: f64,
) -> f64 {
    let (hx, hp) = (grid.hx(), grid.hp());
    let xr = grid.x_min.abs().max(grid.x_max.abs());
    let pr = grid.p_min.abs().max(grid.p_max.abs());
    let bound = |n: usize| {
        spec.derivative_bound(n, xr, lambda_range.0)
            .max(spec.derivative_bound(n, xr, lambda_range.1))
    };
    let mut rate = params.nu() * params.kt() / (hp * hp);
    rate += pr / (params.mass() * hx) + (bound(1) + params.damping_rate() * pr) / hp;
    if kind == FieldKind::Quantum {
        let q = params.hbar() * params.hbar() * gamma_max * gamma_max / 4.0;
        rate += q * bound(3) / hp.powi(3);
        rate += q * q * bound(5) / hp.powi(5);
    }
    if rate == 0.0 {
        f64::INFINITY
    } else {
        courant / rate
    }
}

/// Options of [`evolve`].
#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOptions {
    pub dt: f64,
    pub t_end: f64,
    /// Keep a snapshot every this many steps (plus the start and the end).
    pub snapshot_every: usize,
    pub courant: f64,
    /// Largest boundary/peak ratio tolerated before aborting.
    pub boundary_tol: f64,
}

impl EvolveOptions {
    pub fn new(dt: f64, t_end: f64, snapshot_every: usize) -> Self {
        Self { dt, t_end, snapshot_every, courant: DEFAULT_COURANT, boundary_tol: BOUNDARY_TOL }
    }
}

/// Run diagnostics accumulated over every accepted step.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EvolveDiagnostics {
    pub steps: usize,
    pub dt: f64,
    pub dt_bound: f64,
    pub max_norm_drift: f64,
    pub min_value: f64,
    pub max_boundary_ratio: f64,
}

impl EvolveDiagnostics {
    fn observe(&mut self, field: &WignerField, norm0: f64, peak0: f64) {
        self.max_norm_drift = self.max_norm_drift.max((field.integral() - norm0).abs());
        self.min_value = self.min_value.min(field.min_value());
        self.max_boundary_ratio = self.max_boundary_ratio.max(field.boundary_max() / peak0);
    }
}

/// RK4 stepper for one field under a protocol. Stage times use λ(t + c·dt)
/// and the matching dissipation clock.
pub struct WignerStepper<'a> {
    params: &'a PhysicalParams,
    spec: &'a PotentialSpec,
    schedule: &'a Schedule,
    dt: f64,
    k: [Vec<f64>; 4],
    stage: Vec<f64>,
}

impl<'a> WignerStepper<'a> {
    pub fn new(params: &'a PhysicalParams, spec: &'a PotentialSpec, schedule: &'a Schedule, grid: &PhaseGrid, dt: f64) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(invalid("dt", "must be positive and finite"));
        }
        let n = grid.len();
        Ok(Self {
            params,
            spec,
            schedule,
            dt,
            k: [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            stage: vec![0.0; n],
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Largest stable step for this protocol on `grid`, starting from `gamma`.
    pub fn stable_dt(&self, grid: &PhaseGrid, kind: FieldKind, gamma: f64, courant: f64) -> f64 {
        stable_dt(grid, self.params, self.spec, self.schedule.lambda_range(), gamma, kind, courant)
    }

    pub fn step(&mut self, field: &mut WignerField) -> Result<()> {
        if field.values.len() != self.stage.len() {
            return Err(QseError::GridMismatch);
        }
        let dt = self.dt;
        let r = self.params.damping_rate();
        let (t, clock) = (field.t, field.clock);
        let offsets = [0.0, 0.5, 0.5, 1.0];
        for s in 0..4 {
            let c = offsets[s];
            let lambda = self.schedule.value(t + c * dt);
            let gamma = (-(clock + r * c * dt)).exp();
            let (done, rest) = self.k.split_at_mut(s);
            let input: &[f64] = if s == 0 {
                &field.values
            } else {
                let prev = &done[s - 1];
                for ((st, v), kv) in self.stage.iter_mut().zip(&field.values).zip(prev) {
                    *st = v + c * dt * kv;
                }
                &self.stage
            };
            rhs_into(&field.grid, input, field.kind, self.params, self.spec, lambda, gamma, &mut rest[0]);
        }
        let [k1, k2, k3, k4] = &self.k;
        for (i, v) in field.values.iter_mut().enumerate() {
            *v += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        field.t = t + dt;
        field.clock = clock + r * dt;
        Ok(())
    }
}

/// Output of [`evolve`].
#[derive(Debug, Clone)]
pub struct Evolution {
    pub snapshots: Vec<WignerField>,
    pub diagnostics: EvolveDiagnostics,
}

/// Integrates from `field.t` to `opts.t_end` with classical RK4.
pub fn evolve(
    field: &WignerField,
    params: &PhysicalParams,
    spec: &PotentialSpec,
    schedule: &Schedule,
    opts: &EvolveOptions,
) -> Result<Evolution> {
    let bound = stable_dt(&field.grid, params, spec, schedule.lambda_range(), field.gamma(), field.kind, opts.courant);
    if opts.dt > bound {
        return Err(invalid("dt", format!("dt = {:.3e} exceeds the stability bound {bound:.3e}", opts.dt)));
    }
    if opts.snapshot_every == 0 {
        return Err(invalid("snapshot_every", "must be at least 1"));
    }
    let span = opts.t_end - field.t;
    if !(span >= 0.0) {
        return Err(invalid("t_end", "must not precede the field time"));
    }
    let steps = (span / opts.dt).round() as usize;
    if ((steps as f64) * opts.dt - span).abs() > 1e-9 * span.max(1.0) {
        return Err(invalid("dt", "t_end - t must be an integer number of steps"));
    }

    let mut stepper = WignerStepper::new(params, spec, schedule, &field.grid, opts.dt)?;
    let mut current = field.clone();
    let norm0 = current.integral();
    let peak0 = current.peak();
    let mut diag = EvolveDiagnostics { dt: opts.dt, dt_bound: bound, min_value: current.min_value(), ..Default::default() };
    diag.observe(&current, norm0, peak0);
    if diag.max_boundary_ratio > opts.boundary_tol {
        return Err(QseError::DomainTooSmall(format!(
            "initial boundary/peak ratio {:.3e} exceeds {:.1e}",
            diag.max_boundary_ratio, opts.boundary_tol
        )));
    }
    let mut snapshots = vec![current.clone()];
    for k in 1..=steps {
        stepper.step(&mut current)?;
        check_blowup(&current, peak0)?;
        diag.observe(&current, norm0, peak0);
        if diag.max_boundary_ratio > opts.boundary_tol {
            return Err(QseError::DomainTooSmall(format!(
                "boundary/peak ratio {:.3e} exceeds {:.1e} at t = {:.4}",
                diag.max_boundary_ratio, opts.boundary_tol, current.t
            )));
        }
        diag.steps = k;
        if k % opts.snapshot_every == 0 || k == steps {
            snapshots.push(current.clone());
        }
    }
    Ok(Evolution { snapshots, diagnostics: diag })
}

pub fn check_blowup(field: &WignerField, peak0: f64) -> Result<()> {
    let peak = field.peak();
    if !peak.is_finite() || peak > BLOWUP_FACTOR * peak0 {
        return Err(QseError::NumericalAbort {
            t: field.t,
            reason: format!(
                "field magnitude {peak:.3e} exceeds {BLOWUP_FACTOR} times the initial peak {peak0:.3e}; reduce dt or enlarge the grid"
            ),
        });
    }
    Ok(())
}
