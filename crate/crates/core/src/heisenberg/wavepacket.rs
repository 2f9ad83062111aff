use num_complex::Complex64;

use super::BasisSpec;
use crate::error::{invalid, Result};
use crate::linalg::CVec;

/// Largest weight allowed in the top guard levels of an initial state.
pub const GUARD_POPULATION_TOL: f64 = 1e-8;

/// Gaussian initial state expanded in the truncated oscillator basis.
#[derive(Debug, Clone)]
pub struct InitialWavepacket {
    pub x0: f64,
    pub p0: f64,
    /// Position standard deviation.
    pub sigma: f64,
    pub psi: CVec,
    /// 1 − Σ|c_n|² before renormalization.
    pub truncation_loss: f64,
    /// Weight carried by the top `guard` levels.
    pub guard_population: f64,
}

impl InitialWavepacket {
    /// ψ(x) ∝ exp(−(x − x0)²/4σ² + i p0 (x − x0)/ħ), projected onto the basis
    /// by trapezoid quadrature. Rejects states that do not fit below the guard.
    pub fn gaussian(basis: &BasisSpec, x0: f64, p0: f64, sigma: f64) -> Result<Self> {
        let wp = Self::project(basis, x0, p0, sigma)?;
        if wp.guard_population > GUARD_POPULATION_TOL || wp.truncation_loss > GUARD_POPULATION_TOL {
            return Err(invalid(
                "wavepacket",
                format!(
                    "state does not fit below the guard (guard weight {:.2e}, truncation loss {:.2e}); enlarge the basis",
                    wp.guard_population, wp.truncation_loss
                ),
            ));
        }
        Ok(wp)
    }

    /// The projection of [`InitialWavepacket::gaussian`] without the guard
    /// check, for reporting how well a state fits.
    pub fn project(basis: &BasisSpec, x0: f64, p0: f64, sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(invalid("sigma", "must be positive and finite"));
        }
        if !x0.is_finite() || !p0.is_finite() {
            return Err(invalid("x0/p0", "must be finite"));
        }
        let n = basis.dimension();
        let hbar = basis.hbar();
        let ell = basis.length();

        // resolve the envelope, the carrier and the fastest basis function
        let mut h = sigma / 16.0;
        h = h.min(ell / (16.0 * (2.0 * n as f64 + 1.0).sqrt()));
        if p0 != 0.0 {
            h = h.min(hbar / (16.0 * p0.abs()));
        }
        let half_width = 13.0 * sigma;
        let points = ((2.0 * half_width / h).ceil() as usize).max(2001) | 1;
        let h = 2.0 * half_width / (points - 1) as f64;

        let norm = (2.0 * std::f64::consts::PI * sigma * sigma).powf(-0.25);
        let mut coeffs = vec![Complex64::new(0.0, 0.0); n];
        let mut hermite = vec![0.0; n];
        for k in 0..points {
            let x = x0 - half_width + k as f64 * h;
            let w = if k == 0 || k == points - 1 { 0.5 * h } else { h };
            let d = x - x0;
            let amp = norm * (-d * d / (4.0 * sigma * sigma)).exp();
            if amp == 0.0 {
                continue;
            }
            let psi = Complex64::from_polar(amp, p0 * d / hbar);
            hermite_functions(x / ell, ell, &mut hermite);
            for (c, phi) in coeffs.iter_mut().zip(&hermite) {
                *c += psi * (w * phi);
            }
        }
        let mut psi = CVec::from_vec(coeffs);
        let total = psi.norm_squared();
        if total == 0.0 {
            return Err(invalid("wavepacket", "state has no overlap with the basis"));
        }
        psi /= Complex64::new(total.sqrt(), 0.0);
        let keep = basis.keep();
        let guard_population: f64 = psi.iter().skip(keep).map(|z| z.norm_sqr()).sum();
        let truncation_loss = 1.0 - total;
        Ok(Self { x0, p0, sigma, psi, truncation_loss, guard_population })
    }

    /// Coherent state of the reference oscillator (σ² = ħ/2mω).
    pub fn coherent(basis: &BasisSpec, x0: f64, p0: f64) -> Result<Self> {
        let sigma = (basis.hbar() / (2.0 * basis.mass() * basis.omega_ref())).sqrt();
        Self::gaussian(basis, x0, p0, sigma)
    }

    /// Momentum standard deviation ħ/2σ of the minimum-uncertainty packet.
    pub fn sigma_p(&self, hbar: f64) -> f64 {
        hbar / (2.0 * self.sigma)
    }
}

/// Normalized oscillator eigenfunctions φ_k(x) for ξ = x/ℓ, k < out.len().
fn hermite_functions(xi: f64, ell: f64, out: &mut [f64]) {
    let n = out.len();
    out[0] = std::f64::consts::PI.powf(-0.25) * ell.powf(-0.5) * (-0.5 * xi * xi).exp();
    if n > 1 {
        out[1] = std::f64::consts::SQRT_2 * xi * out[0];
    }
    for k in 1..n.saturating_sub(1) {
        let kf = k as f64;
        out[k + 1] = (2.0 / (kf + 1.0)).sqrt() * xi * out[k] - (kf / (kf + 1.0)).sqrt() * out[k - 1];
    }
}

impl InitialWavepacket {
    /// The phase-space Gaussian with the same centre and spreads.
    pub fn packet(&self, hbar: f64) -> crate::model::GaussianPacket {
        crate::model::GaussianPacket { x0: self.x0, p0: self.p0, sigma_x: self.sigma, sigma_p: self.sigma_p(hbar) }
    }
}
