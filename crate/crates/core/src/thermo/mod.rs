//! Entropy functionals on phase-space fields, heat and work rates, the
//! equilibrium state, and the second-law residual identity
//! T dS/dt − dQ/dt = ν ∫ ρ_KR u², u = p/m + k_BT ∂_p ln|ρ_W|.

mod ledger;


use serde::Serialize;

use crate::error::{invalid, QseError, Result};
use crate::model::{PhysicalParams, PotentialSpec};
use crate::wignerpde::{p_derivative, sigma_eval, FieldKind, PhaseGrid, WignerField, BOUNDARY_TOL};

pub use ledger::{
    run_ledger, EntropyLedger, LedgerOptions, LedgerRow, LedgerRun, LedgerState, LEDGER_SCHEMA,
};

/// Default log floor relative to the field peak.
pub const DEFAULT_EPSILON_REL: f64 = 1e-12;

/// ε = `rel` · peak.
pub fn default_epsilon(field: &WignerField, rel: f64) -> f64 {
    rel * field.peak()
}

/// Shannon entropy with its sensitivity to the log floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EntropyEstimate {
    pub value: f64,
    pub epsilon: f64,
    /// |S(ε) − S(ε/10)|.
    pub sensitivity: f64,
}

impl EntropyEstimate {
    /// True when the floor moves S by more than 1e−3 relative.
    pub fn is_sensitive(&self) -> bool {
        self.sensitivity > 1e-3 * self.value.abs()
    }
}

fn entropy_at(field: &WignerField, kb: f64, epsilon: f64) -> f64 {
    -kb * field.grid.integrate_with(&field.values, |_, _, v| {
        if v.abs() > epsilon {
            v * v.abs().ln()
        } else {
            0.0
        }
    })
}

/// −k_B ∫ ρ ln|ρ| dΓ over cells with |ρ| > ε.
pub fn shannon_entropy(field: &WignerField, params: &PhysicalParams, epsilon: f64) -> Result<EntropyEstimate> {
    if !(epsilon > 0.0) {
        return Err(invalid("epsilon", "log floor must be positive"));
    }
    let value = entropy_at(field, params.kb(), epsilon);
    let fine = entropy_at(field, params.kb(), epsilon / 10.0);
    Ok(EntropyEstimate { value, epsilon, sensitivity: (value - fine).abs() })
}

fn same_grid(a: &WignerField, b: &WignerField) -> Result<()> {
    if a.grid != b.grid {
        return Err(QseError::GridMismatch);
    }
    if (a.t - b.t).abs() > 1e-9 * a.t.abs().max(1.0) {
        return Err(invalid("fields", format!("times differ: {} vs {}", a.t, b.t)));
    }
    Ok(())
}

/// u = p/m + k_BT ∂_pρ_W / ρ_W on cells with |ρ_W| > ε (zero elsewhere),
/// together with the retention mask.
fn velocity(rho_w: &WignerField, params: &PhysicalParams, epsilon: f64) -> Result<(Vec<f64>, Vec<bool>)> {
    let g = &rho_w.grid;
    let dp = p_derivative(g, &rho_w.values, 1)?;
    let ps = g.ps();
    let (m, kt) = (params.mass(), params.kt());
    let mut u = vec![0.0; g.len()];
    let mut keep = vec![false; g.len()];
    for i in 0..g.nx {
        for (j, p) in ps.iter().enumerate() {
            let k = g.index(i, j);
            let v = rho_w.values[k];
            if v.abs() > epsilon {
                u[k] = p / m + kt * dp[k] / v;
                keep[k] = true;
            }
        }
    }
    Ok((u, keep))
}

/// k_B ∫ [Σ ln|ρ_W| − βν (ρ_W − ρ_KR) u²] dΓ on retained cells. Σ uses the
/// memory factor carried by `rho_w`.
pub fn memory_entropy_rate(
    rho_w: &WignerField,
    rho_kr: &WignerField,
    params: &PhysicalParams,
    spec: &PotentialSpec,
    lambda: f64,
    epsilon: f64,
) -> Result<f64> {
    same_grid(rho_w, rho_kr)?;
    let sigma = sigma_eval(rho_w, params, spec, lambda, rho_w.gamma());
    let sigma_zero = sigma.iter().all(|v| *v == 0.0);
    let identical = rho_w.values == rho_kr.values;
    if sigma_zero && identical {
        return Ok(0.0);
    }
    let (u, keep) = velocity(rho_w, params, epsilon)?;
    let (beta, nu) = (params.beta(), params.nu());
    let integrand: Vec<f64> = (0..u.len())
        .map(|k| {
            if !keep[k] {
                return 0.0;
            }
            let w = rho_w.values[k];
            sigma[k] * w.abs().ln() - beta * nu * (w - rho_kr.values[k]) * u[k] * u[k]
        })
        .collect();
    Ok(params.kb() * rho_w.grid.integrate(&integrand))
}

/// ν ∫ ρ_KR u² dΓ on retained cells.
pub fn second_law_rhs(rho_w: &WignerField, rho_kr: &WignerField, params: &PhysicalParams, epsilon: f64) -> Result<f64> {
    same_grid(rho_w, rho_kr)?;
    let (u, keep) = velocity(rho_w, params, epsilon)?;
    let integrand: Vec<f64> =
        (0..u.len()).map(|k| if keep[k] { rho_kr.values[k] * u[k] * u[k] } else { 0.0 }).collect();
    Ok(params.nu() * rho_w.grid.integrate(&integrand))
}

/// ⟨dQ/dt⟩ = ν (k_BT/m − ⟨p²⟩/m²).
pub fn heat_flux(field: &WignerField, params: &PhysicalParams) -> f64 {
    let m = params.mass();
    let p2 = field.grid.integrate_with(&field.values, |_, p, v| p * p * v);
    params.nu() * (params.kt() / m - p2 / (m * m))
}

/// λ̇ ∫ ρ ∂_λV dΓ.
pub fn work_rate(field: &WignerField, spec: &PotentialSpec, lambda_dot: f64) -> f64 {
    if lambda_dot == 0.0 {
        return 0.0;
    }
    lambda_dot * field.grid.integrate_with(&field.values, |x, _, v| spec.dlambda(x) * v)
}

/// Both sides of the residual identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SecondLaw {
    pub lhs: f64,
    pub rhs: f64,
}

impl SecondLaw {
    /// Default identity tolerance, 1e−3 · max(|lhs|, νk_BT/m).
    pub fn tolerance(&self, params: &PhysicalParams) -> f64 {
        1e-3 * self.lhs.abs().max(params.nu() * params.kt() / params.mass())
    }

    pub fn defect(&self) -> f64 {
        (self.lhs - self.rhs).abs()
    }
}

/// lhs = T (dS_SH/dt + S_ME rate) − dQ/dt, rhs = ν ∫ ρ_KR u².
pub fn second_law_residual(
    rho_w: &WignerField,
    rho_kr: &WignerField,
    params: &PhysicalParams,
    ds_sh_dt: f64,
    s_me_rate: f64,
    dq_dt: f64,
    epsilon: f64,
) -> Result<SecondLaw> {
    let rhs = second_law_rhs(rho_w, rho_kr, params, epsilon)?;
    Ok(SecondLaw { lhs: params.temperature() * (ds_sh_dt + s_me_rate) - dq_dt, rhs })
}

/// e^{−βH}/Z_c on the grid and Z_c = ∫ e^{−βH} dΓ by quadrature.
pub fn equilibrium_field(grid: &PhaseGrid, params: &PhysicalParams, spec: &PotentialSpec, lambda: f64) -> Result<(WignerField, f64)> {
    if !spec.is_confining(lambda) {
        return Err(invalid("potential", format!("not confining at lambda = {lambda}")));
    }
    let beta = params.beta();
    let coeffs = spec.coefficients_at(lambda);
    let vmin = grid.xs().iter().map(|&x| coeffs.iter().rev().fold(0.0, |a, c| a * x + c)).fold(f64::INFINITY, f64::min);
    // shift by the grid minimum of V so the exponent never overflows
    let mut field = WignerField::from_fn(grid.clone(), FieldKind::Classical, |x, p| {
        let v = coeffs.iter().rev().fold(0.0, |a, c| a * x + c);
        (-beta * (p * p / (2.0 * params.mass()) + v - vmin)).exp()
    });
    let z_shifted = field.integral();
    let ratio = field.boundary_max() / field.peak();
    if ratio > BOUNDARY_TOL {
        return Err(QseError::DomainTooSmall(format!(
            "equilibrium density at the boundary is {ratio:.3e} of its peak"
        )));
    }
    field.values.iter_mut().for_each(|v| *v /= z_shifted);
    let zc = z_shifted * (-beta * vmin).exp();
    Ok((field, zc))
}

/// F̃ = ⟨H⟩ − T (S_SH + S_ME,acc).
pub fn free_energy_tilde(energy: f64, s_sh: f64, s_me_acc: f64, params: &PhysicalParams) -> f64 {
    energy - params.temperature() * (s_sh + s_me_acc)
}
