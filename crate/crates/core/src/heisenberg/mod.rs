//! Heisenberg-picture operator SDEs in a truncated oscillator basis.
//!
//! X and P are N×N matrices. The bath noise is a c-number per step times the
//! identity, so it never changes commutators directly; the damping term is
//! what makes [X, P] decay as iħγ(t).

mod checks;
mod ensemble;
mod wavepacket;


use num_complex::Complex64;

use crate::error::{invalid, QseError, Result};
use crate::linalg::{
    frobenius, half_anticommutator, hermiticity_defect, lowering, matmul, CMat, CVec,
};
use crate::matrixqa::{polynomial_of_matrix, HERMITIAN_TOL};
use crate::model::{PhysicalParams, PotentialSpec};

pub use checks::{
    commutator_defect, first_law_defect, heat_commutator_check, uncertainty_check,
    HeatCommutatorDefects, UncertaintySample,
};
pub use ensemble::{
    ensemble_expectation, EnsembleConfig, EnsembleSeries, Observable, ObservableSeries,
};
pub use wavepacket::{InitialWavepacket, GUARD_POPULATION_TOL};

/// Default basis dimension.
pub const DEFAULT_DIMENSION: usize = 64;
/// Default number of top levels excluded from every projected check.
pub const DEFAULT_GUARD: usize = 16;
/// Leakage of the reference state above the guard boundary that aborts a run.
pub const LEAK_ABORT: f64 = 1e-6;

/// Truncated oscillator basis with ladder-built X0 and P0.
#[derive(Debug, Clone)]
pub struct BasisSpec {
    n: usize,
    guard: usize,
    omega_ref: f64,
    hbar: f64,
    mass: f64,
    x0: CMat,
    p0: CMat,
}

impl BasisSpec {
    pub fn new(n: usize, guard: usize, omega_ref: f64, params: &PhysicalParams) -> Result<Self> {
        if n < 2 {
            return Err(invalid("n", "basis needs at least two levels"));
        }
        if guard >= n {
            return Err(invalid("guard", format!("guard {guard} must be below n = {n}")));
        }
        if !(omega_ref > 0.0 && omega_ref.is_finite()) {
            return Err(invalid("omega_ref", "must be positive and finite"));
        }
        let hbar = params.hbar();
        if hbar <= 0.0 {
            return Err(invalid("hbar", "operator runs need hbar > 0"));
        }
        let mass = params.mass();
        let a = lowering(n);
        let ad = a.adjoint();
        let sx = (hbar / (2.0 * mass * omega_ref)).sqrt();
        let sp = (hbar * mass * omega_ref / 2.0).sqrt();
        let x0 = (&a + &ad) * Complex64::new(sx, 0.0);
        let p0 = (&ad - &a) * Complex64::new(0.0, sp);
        Ok(Self { n, guard, omega_ref, hbar, mass, x0, p0 })
    }

    /// Default dimensions for the given parameters.
    pub fn default_for(params: &PhysicalParams, omega_ref: f64) -> Result<Self> {
        Self::new(DEFAULT_DIMENSION, DEFAULT_GUARD, omega_ref, params)
    }

    pub fn dimension(&self) -> usize {
        self.n
    }

    pub fn guard(&self) -> usize {
        self.guard
    }

    /// Number of levels kept by the guard projector.
    pub fn keep(&self) -> usize {
        self.n - self.guard
    }

    pub fn omega_ref(&self) -> f64 {
        self.omega_ref
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Oscillator length √(ħ / m ω).
    pub fn length(&self) -> f64 {
        (self.hbar / (self.mass * self.omega_ref)).sqrt()
    }

    pub fn x0(&self) -> &CMat {
        &self.x0
    }

    pub fn p0(&self) -> &CMat {
        &self.p0
    }

    /// Initial operator state at t = 0.
    pub fn initial_state(&self) -> OperatorState {
        OperatorState::new(self.x0.clone(), self.p0.clone(), self.keep())
    }
}

/// Operators at one time plus the accumulated heat and work matrices.
#[derive(Debug, Clone)]
pub struct OperatorState {
    pub x: CMat,
    pub p: CMat,
    pub t: f64,
    /// ∫ ν/m dt, so that γ = e^{−clock} also under piecewise damping.
    pub clock: f64,
    pub q_acc: CMat,
    pub w_acc: CMat,
    /// Reference-state weight above the guard boundary, last measured.
    pub leak: f64,
    keep: usize,
}

impl OperatorState {
    pub fn new(x: CMat, p: CMat, keep: usize) -> Self {
        let n = x.nrows();
        Self {
            x,
            p,
            t: 0.0,
            clock: 0.0,
            q_acc: CMat::zeros(n, n),
            w_acc: CMat::zeros(n, n),
            leak: 0.0,
            keep,
        }
    }

    pub fn dimension(&self) -> usize {
        self.x.nrows()
    }

    pub fn keep(&self) -> usize {
        self.keep
    }

    pub fn gamma(&self) -> f64 {
        (-self.clock).exp()
    }

    /// H(X, P, λ) as a matrix.
    pub fn hamiltonian(&self, params: &PhysicalParams, spec: &PotentialSpec, lambda: f64) -> CMat {
        hamiltonian_matrix(&self.x, &self.p, params, spec, lambda)
    }

    /// Largest relative hermiticity defect among X, P and the accumulators.
    pub fn hermiticity(&self) -> f64 {
        [&self.x, &self.p, &self.q_acc, &self.w_acc]
            .iter()
            .map(|m| relative_hermiticity(m))
            .fold(0.0, f64::max)
    }

    /// Fraction of ‖Xψ‖² + ‖Pψ‖² carried by levels at or above the guard boundary.
    pub fn measure_leak(&mut self, psi: &CVec) -> f64 {
        self.leak = leak_fraction(&self.x, &self.p, psi, self.keep);
        self.leak
    }
}

fn relative_hermiticity(m: &CMat) -> f64 {
    let scale = frobenius(m);
    if scale == 0.0 {
        0.0
    } else {
        hermiticity_defect(m) / scale
    }
}

pub(crate) fn leak_fraction(x: &CMat, p: &CMat, psi: &CVec, keep: usize) -> f64 {
    let xv = x * psi;
    let pv = p * psi;
    let tail = |v: &CVec| v.iter().skip(keep).map(|z| z.norm_sqr()).sum::<f64>();
    let total = xv.norm_squared() + pv.norm_squared();
    if total == 0.0 {
        0.0
    } else {
        (tail(&xv) + tail(&pv)) / total
    }
}

/// Increments produced by one Heun step.
#[derive(Debug, Clone)]
pub struct StepIncrements {
    pub dx: CMat,
    pub dp: CMat,
    /// F̄ = −(ν/m)·½(P_t + P_{t+dt}) + √(2νk_BT)(dB/dt)·I.
    pub force_mid: CMat,
    pub dq: CMat,
    pub dw: CMat,
    pub db: f64,
    pub dt: f64,
}

/// V'(X, λ), symmetrized so rounding cannot leave an anti-hermitian residue.
pub fn force_matrix(x: &CMat, spec: &PotentialSpec, lambda: f64) -> CMat {
    let coeffs = spec.derivative_coefficients(1, lambda);
    symmetrize(polynomial_of_matrix(&coeffs, x))
}

/// V(X, λ).
pub fn potential_matrix(x: &CMat, spec: &PotentialSpec, lambda: f64) -> CMat {
    symmetrize(polynomial_of_matrix(&spec.coefficients_at(lambda), x))
}

/// ∂_λ V(X) = scale · X^{n*}.
pub fn dlambda_matrix(x: &CMat, spec: &PotentialSpec) -> CMat {
    let mut coeffs = vec![0.0; spec.lambda_index() + 1];
    coeffs[spec.lambda_index()] = spec.lambda_scale();
    symmetrize(polynomial_of_matrix(&coeffs, x))
}

pub fn hamiltonian_matrix(x: &CMat, p: &CMat, params: &PhysicalParams, spec: &PotentialSpec, lambda: f64) -> CMat {
    let mut h = potential_matrix(x, spec, lambda);
    let kinetic = matmul(p, p);
    h.zip_apply(&kinetic, |a, b| *a += b / (2.0 * params.mass()));
    symmetrize(h)
}

fn symmetrize(mut m: CMat) -> CMat {
    let n = m.nrows();
    for j in 0..n {
        for i in 0..j {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
        m[(j, j)].im = 0.0;
    }
    m
}

/// Result of the Heun update before heat and work bookkeeping.
#[derive(Debug, Clone)]
pub(crate) struct Advance {
    pub dx: CMat,
    pub dp: CMat,
    pub force_mid: CMat,
}

/// One Heun predictor–corrector step of
/// dX = P/m dt, dP = −(ν/m)P dt − V'(X, λ) dt + √(2νk_BT) dB·I.
pub(crate) fn heun_advance(
    x: &CMat,
    p: &CMat,
    params: &PhysicalParams,
    spec: &PotentialSpec,
    lambda: f64,
    lambda_next: f64,
    db: f64,
    dt: f64,
) -> Advance {
    let m = params.mass();
    let r = params.damping_rate();
    let kick = params.noise_amplitude() * db;

    // drift of P at t: −r P − V'(X)
    let mut drift0 = force_matrix(x, spec, lambda);
    drift0.zip_apply(p, |f, pv| *f = -*f - pv * r);

    let mut p_pred = p.clone();
    p_pred.zip_apply(&drift0, |a, d| *a += d * dt);
    add_diagonal(&mut p_pred, kick);
    let mut x_pred = x.clone();
    x_pred.zip_apply(p, |a, pv| *a += pv * (dt / m));

    let mut drift1 = force_matrix(&x_pred, spec, lambda_next);
    drift1.zip_apply(&p_pred, |f, pv| *f = -*f - pv * r);

    let mut dx = p.clone();
    dx.zip_apply(&p_pred, |a, b| *a = (*a + b) * (dt / (2.0 * m)));
    let mut dp = drift0;
    dp.zip_apply(&drift1, |a, b| *a = (*a + b) * (dt / 2.0));
    add_diagonal(&mut dp, kick);

    // F̄ = −r (P + ½ΔP) + kick/dt
    let mut force_mid = p.clone();
    force_mid.zip_apply(&dp, |a, d| *a = -(*a + d * 0.5) * r);
    add_diagonal(&mut force_mid, kick / dt);
    Advance { dx, dp, force_mid }
}

fn add_diagonal(m: &mut CMat, v: f64) {
    if v != 0.0 {
        for i in 0..m.nrows() {
            m[(i, i)].re += v;
        }
    }
}

/// ½(dX·F̄ + F̄·dX), the symmetrized Stratonovich heat increment.
pub fn heat_increment(dx: &CMat, force_mid: &CMat) -> Result<CMat> {
    crate::linalg::check_same_shape(dx, force_mid)?;
    crate::linalg::check_square(dx, "dX")?;
    Ok(half_anticommutator(dx, force_mid))
}

/// ½[∂_λV(X_t) + ∂_λV(X_{t+dt})]·(λ_next − λ).
pub fn work_increment(x_t: &CMat, x_next: &CMat, spec: &PotentialSpec, lambda: f64, lambda_next: f64) -> CMat {
    let dl = lambda_next - lambda;
    let n = x_t.nrows();
    if dl == 0.0 {
        return CMat::zeros(n, n);
    }
    let mut w = dlambda_matrix(x_t, spec);
    w += dlambda_matrix(x_next, spec);
    w * Complex64::new(0.5 * dl, 0.0)
}

/// Advances `state` by one step, accumulating heat and work matrices.
///
/// The step is rejected when the new X or P loses hermiticity beyond the
/// relative tolerance.
pub fn step_heisenberg(
    state: &OperatorState,
    params: &PhysicalParams,
    spec: &PotentialSpec,
    lambda: f64,
    lambda_next: f64,
    db: f64,
    dt: f64,
) -> Result<(OperatorState, StepIncrements)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(invalid("dt", "must be positive and finite"));
    }
    for (m, name) in [(&state.x, "X"), (&state.p, "P")] {
        let defect = relative_hermiticity(m);
        if defect > HERMITIAN_TOL {
            return Err(QseError::StepRejected {
                t: state.t,
                reason: format!("{name} not hermitian on entry (relative defect {defect:.3e})"),
            });
        }
    }
    let adv = heun_advance(&state.x, &state.p, params, spec, lambda, lambda_next, db, dt);
    let x_next = &state.x + &adv.dx;
    let p_next = &state.p + &adv.dp;
    for (m, name) in [(&x_next, "X"), (&p_next, "P")] {
        let defect = relative_hermiticity(m);
        if !defect.is_finite() || defect > HERMITIAN_TOL {
            return Err(QseError::StepRejected {
                t: state.t + dt,
                reason: format!("{name} lost hermiticity (relative defect {defect:.3e})"),
            });
        }
    }
    let dq = heat_increment(&adv.dx, &adv.force_mid)?;
    let dw = work_increment(&state.x, &x_next, spec, lambda, lambda_next);
    let next = OperatorState {
        x: x_next,
        p: p_next,
        t: state.t + dt,
        clock: state.clock + params.damping_rate() * dt,
        q_acc: &state.q_acc + &dq,
        w_acc: &state.w_acc + &dw,
        leak: state.leak,
        keep: state.keep,
    };
    let inc = StepIncrements { dx: adv.dx, dp: adv.dp, force_mid: adv.force_mid, dq, dw, db, dt };
    Ok((next, inc))
}

/// Like [`step_heisenberg`], additionally measuring reference-state leakage
/// and aborting once it exceeds [`LEAK_ABORT`].
pub fn step_monitored(
    state: &OperatorState,
    psi: &CVec,
    params: &PhysicalParams,
    spec: &PotentialSpec,
    lambda: f64,
    lambda_next: f64,
    db: f64,
    dt: f64,
) -> Result<(OperatorState, StepIncrements)> {
    let (mut next, inc) = step_heisenberg(state, params, spec, lambda, lambda_next, db, dt)?;
    let leak = next.measure_leak(psi);
    if leak > LEAK_ABORT {
        return Err(QseError::NumericalAbort {
            t: next.t,
            reason: format!("guard-level leakage {leak:.3e} exceeds {LEAK_ABORT:e}"),
        });
    }
    Ok((next, inc))
}
