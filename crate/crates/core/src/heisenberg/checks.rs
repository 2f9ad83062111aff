use num_complex::Complex64;
use serde::Serialize;

use super::{hamiltonian_matrix, OperatorState, StepIncrements};
use crate::linalg::{commutator, projected_norm, CMat, I};
use crate::model::{PhysicalParams, PotentialSpec};

/// ‖Π([X, P] − iħγ I)Π‖_F / ħ.
pub fn commutator_defect(state: &OperatorState, params: &PhysicalParams) -> f64 {
    let mut c = commutator(&state.x, &state.p);
    let target = I * (params.hbar() * state.gamma());
    for i in 0..c.nrows() {
        c[(i, i)] -= target;
    }
    projected_norm(&c, state.keep()) / params.hbar()
}

/// Guarded norm of [H(X', P', λ') − H(X, P, λ)] − dQ − dW.
pub fn first_law_defect(
    state_t: &OperatorState,
    state_next: &OperatorState,
    dq: &CMat,
    dw: &CMat,
    spec: &PotentialSpec,
    params: &PhysicalParams,
    lambda: f64,
    lambda_next: f64,
) -> f64 {
    let h0 = hamiltonian_matrix(&state_t.x, &state_t.p, params, spec, lambda);
    let h1 = hamiltonian_matrix(&state_next.x, &state_next.p, params, spec, lambda_next);
    let residual = h1 - h0 - dq - dw;
    projected_norm(&residual, state_t.keep())
}

/// Guarded defects of the Itô-ordered heat commutators.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HeatCommutatorDefects {
    /// ‖Π[P, dQ]Π‖.
    pub momentum: f64,
    /// ‖Π([X, dQ] − (2iħ/m){γ̇ P dt + γ√(νk_BT/2) dB I})Π‖.
    pub position: f64,
}

/// Evaluates both heat commutation relations with operators at the start of
/// the step (`state` is the pre-step state).
pub fn heat_commutator_check(
    state: &OperatorState,
    params: &PhysicalParams,
    inc: &StepIncrements,
) -> HeatCommutatorDefects {
    let keep = state.keep();
    let momentum = projected_norm(&commutator(&state.p, &inc.dq), keep);

    let gamma = state.gamma();
    let gamma_dot = -params.damping_rate() * gamma;
    let pref = I * (2.0 * params.hbar() / params.mass());
    let mut expected = &state.p * (pref * (gamma_dot * inc.dt));
    let diag = pref * (gamma * (params.nu() * params.kt() / 2.0).sqrt() * inc.db);
    for i in 0..expected.nrows() {
        expected[(i, i)] += diag;
    }
    let position = projected_norm(&(commutator(&state.x, &inc.dq) - expected), keep);
    HeatCommutatorDefects { momentum, position }
}

/// Both sides of (Δx)(ΔQ̇) ≥ (ħ/m)|γ̇⟨⟨p⟩⟩| at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UncertaintySample {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
}

impl UncertaintySample {
    pub fn holds(&self, rel_tol: f64) -> bool {
        self.lhs >= self.rhs * (1.0 - rel_tol)
    }

    pub fn margin(&self) -> f64 {
        if self.rhs == 0.0 {
            f64::INFINITY
        } else {
            self.lhs / self.rhs
        }
    }
}

/// Evaluates the uncertainty relation from per-path data at one step.
///
/// Each entry of `paths` is the pre-step state of one trajectory together
/// with that trajectory's increments for the step; Q̇ is the discrete rate
/// dQ/Δt. Variances are double expectations over paths and the reference
/// state `psi`.
pub fn uncertainty_check(
    paths: &[(&OperatorState, &StepIncrements)],
    psi: &crate::linalg::CVec,
    params: &PhysicalParams,
) -> UncertaintySample {
    let m = paths.len().max(1) as f64;
    let mut sums = [0.0f64; 5];
    let mut t = 0.0;
    let mut gamma = 1.0;
    for (state, inc) in paths {
        let xv = &state.x * psi;
        let qv = (&inc.dq * psi) / Complex64::new(inc.dt, 0.0);
        sums[0] += psi.dotc(&xv).re;
        sums[1] += xv.norm_squared();
        sums[2] += psi.dotc(&qv).re;
        sums[3] += qv.norm_squared();
        sums[4] += psi.dotc(&(&state.p * psi)).re;
        t = state.t;
        gamma = state.gamma();
    }
    let [x, x2, q, q2, p] = sums.map(|s| s / m);
    uncertainty_sides(t, x, x2, q, q2, p, gamma, params)
}

pub(crate) fn uncertainty_sides(
    t: f64,
    x: f64,
    x2: f64,
    q: f64,
    q2: f64,
    p: f64,
    gamma: f64,
    params: &PhysicalParams,
) -> UncertaintySample {
    let var_x = (x2 - x * x).max(0.0);
    let var_q = (q2 - q * q).max(0.0);
    let gamma_dot = -params.damping_rate() * gamma;
    UncertaintySample {
        t,
        lhs: (var_x * var_q).sqrt(),
        rhs: params.hbar() / params.mass() * (gamma_dot * p).abs(),
    }
}
