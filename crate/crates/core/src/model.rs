//! Physical parameters, polynomial potentials, external protocols and the
//! dissipation factor shared by every representation.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Highest polynomial degree supported for the external potential.
pub const MAX_POTENTIAL_DEGREE: usize = 6;

/// Mass, dissipation, bath temperature, Boltzmann constant and ħ.
///
/// `beta` is always derived from `kb` and `temperature`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct PhysicalParams {
    mass: f64,
    nu: f64,
    temperature: f64,
    kb: f64,
    hbar: f64,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    mass: f64,
    nu: f64,
    temperature: f64,
    #[serde(default = "default_kb")]
    kb: f64,
    hbar: f64,
}

fn default_kb() -> f64 {
    1.0
}

impl TryFrom<RawParams> for PhysicalParams {
    type Error = crate::QseError;

    fn try_from(raw: RawParams) -> Result<Self> {
        PhysicalParams::with_kb(raw.mass, raw.nu, raw.temperature, raw.kb, raw.hbar)
    }
}

impl From<PhysicalParams> for RawParams {
    fn from(p: PhysicalParams) -> Self {
        RawParams { mass: p.mass, nu: p.nu, temperature: p.temperature, kb: p.kb, hbar: p.hbar }
    }
}

impl PhysicalParams {
    /// Parameters with `kb = 1`.
    pub fn new(mass: f64, nu: f64, temperature: f64, hbar: f64) -> Result<Self> {
        Self::with_kb(mass, nu, temperature, 1.0, hbar)
    }

    pub fn with_kb(mass: f64, nu: f64, temperature: f64, kb: f64, hbar: f64) -> Result<Self> {
        let finite = |name: &'static str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(invalid(name, format!("{v} is not finite")))
            }
        };
        finite("mass", mass)?;
        finite("nu", nu)?;
        finite("temperature", temperature)?;
        finite("kb", kb)?;
        finite("hbar", hbar)?;
        if mass <= 0.0 {
            return Err(invalid("mass", "must be > 0"));
        }
        if nu < 0.0 {
            return Err(invalid("nu", "must be >= 0"));
        }
        if temperature <= 0.0 {
            return Err(invalid("temperature", "must be > 0"));
        }
        if kb <= 0.0 {
            return Err(invalid("kb", "must be > 0"));
        }
        if hbar < 0.0 {
            return Err(invalid("hbar", "must be >= 0"));
        }
        Ok(Self { mass, nu, temperature, kb, hbar })
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn kb(&self) -> f64 {
        self.kb
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// k_B T.
    pub fn kt(&self) -> f64 {
        self.kb * self.temperature
    }

    /// 1 / (k_B T).
    pub fn beta(&self) -> f64 {
        1.0 / self.kt()
    }

    /// Amplitude √(2 ν k_B T) of the additive bath noise.
    pub fn noise_amplitude(&self) -> f64 {
        (2.0 * self.nu * self.kt()).sqrt()
    }

    /// Dissipation rate ν / m.
    pub fn damping_rate(&self) -> f64 {
        self.nu / self.mass
    }

    pub fn with_temperature(&self, temperature: f64) -> Result<Self> {
        Self::with_kb(self.mass, self.nu, temperature, self.kb, self.hbar)
    }

    pub fn with_nu(&self, nu: f64) -> Result<Self> {
        Self::with_kb(self.mass, nu, self.temperature, self.kb, self.hbar)
    }

    pub fn with_hbar(&self, hbar: f64) -> Result<Self> {
        Self::with_kb(self.mass, self.nu, self.temperature, self.kb, hbar)
    }
}

/// γ(t) = e^{−νt/m}, the decay factor of the canonical commutator.
pub fn gamma(params: &PhysicalParams, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(invalid("t", format!("gamma requires t >= 0, got {t}")));
    }
    Ok((-params.damping_rate() * t).exp())
}

/// dγ/dt = −(ν/m) γ(t).
pub fn gamma_dot(params: &PhysicalParams, t: f64) -> Result<f64> {
    Ok(-params.damping_rate() * gamma(params, t)?)
}

/// Polynomial potential V(x, λ) = Σ c_n xⁿ in which one coefficient is driven:
/// c_{n*} = `lambda_scale` · λ.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPotential", into = "RawPotential")]
pub struct PotentialSpec {
    coefficients: Vec<f64>,
    lambda_index: usize,
    lambda_scale: f64,
}

#[derive(Serialize, Deserialize)]
struct RawPotential {
    coefficients: Vec<f64>,
    lambda_index: usize,
    #[serde(default = "default_scale")]
    lambda_scale: f64,
}

fn default_scale() -> f64 {
    1.0
}

impl TryFrom<RawPotential> for PotentialSpec {
    type Error = crate::QseError;

    fn try_from(raw: RawPotential) -> Result<Self> {
        PotentialSpec::scaled(raw.coefficients, raw.lambda_index, raw.lambda_scale)
    }
}

impl From<PotentialSpec> for RawPotential {
    fn from(p: PotentialSpec) -> Self {
        RawPotential {
            coefficients: p.coefficients,
            lambda_index: p.lambda_index,
            lambda_scale: p.lambda_scale,
        }
    }
}

impl PotentialSpec {
    /// Coefficients `c_0..c_d`; the entry at `lambda_index` is replaced by λ.
    pub fn new(coefficients: Vec<f64>, lambda_index: usize) -> Result<Self> {
        Self::scaled(coefficients, lambda_index, 1.0)
    }

    pub fn scaled(mut coefficients: Vec<f64>, lambda_index: usize, lambda_scale: f64) -> Result<Self> {
        if coefficients.iter().any(|c| !c.is_finite()) || !lambda_scale.is_finite() {
            return Err(invalid("coefficients", "must be finite"));
        }
        if lambda_index > MAX_POTENTIAL_DEGREE {
            return Err(invalid("lambda_index", format!("must be <= {MAX_POTENTIAL_DEGREE}")));
        }
        if coefficients.len() <= lambda_index {
            coefficients.resize(lambda_index + 1, 0.0);
        }
        while coefficients.len() > lambda_index + 1 && coefficients.last() == Some(&0.0) {
            coefficients.pop();
        }
        if coefficients.len() > MAX_POTENTIAL_DEGREE + 1 {
            return Err(invalid(
                "coefficients",
                format!("degree {} exceeds {MAX_POTENTIAL_DEGREE}", coefficients.len() - 1),
            ));
        }
        coefficients[lambda_index] = 0.0;
        Ok(Self { coefficients, lambda_index, lambda_scale })
    }

    /// V = λ x² / 2.
    pub fn harmonic() -> Self {
        Self::scaled(vec![0.0, 0.0, 0.0], 2, 0.5).expect("valid harmonic potential")
    }

    /// V = λ x² / 2 + g x⁴ / 4.
    pub fn harmonic_quartic(g: f64) -> Result<Self> {
        Self::scaled(vec![0.0, 0.0, 0.0, 0.0, g / 4.0], 2, 0.5)
    }

    /// The free particle, V = λ x with λ held at zero by the caller.
    pub fn free() -> Self {
        Self::new(vec![0.0, 0.0], 1).expect("valid free potential")
    }

    pub fn lambda_index(&self) -> usize {
        self.lambda_index
    }

    pub fn lambda_scale(&self) -> f64 {
        self.lambda_scale
    }

    /// Coefficients with the driven entry substituted.
    pub fn coefficients_at(&self, lambda: f64) -> Vec<f64> {
        let mut c = self.coefficients.clone();
        c[self.lambda_index] = self.lambda_scale * lambda;
        while c.len() > 1 && c.last() == Some(&0.0) {
            c.pop();
        }
        c
    }

    /// Degree of V(·, λ).
    pub fn degree(&self, lambda: f64) -> usize {
        self.coefficients_at(lambda).len() - 1
    }

    /// Largest degree reachable for any λ (the driven term counts when its scale is nonzero).
    pub fn max_degree(&self) -> usize {
        let mut d = 0;
        for (n, c) in self.coefficients.iter().enumerate() {
            if *c != 0.0 || (n == self.lambda_index && self.lambda_scale != 0.0) {
                d = n;
            }
        }
        d
    }

    /// Even degree with positive leading coefficient.
    pub fn is_confining(&self, lambda: f64) -> bool {
        let c = self.coefficients_at(lambda);
        let d = c.len() - 1;
        d >= 2 && d % 2 == 0 && c[d] > 0.0
    }

    pub fn value(&self, x: f64, lambda: f64) -> f64 {
        potential_derivative(self, 0, x, lambda)
    }

    /// ∂_λ V(x, λ) = scale · x^{n*}.
    pub fn dlambda(&self, x: f64) -> f64 {
        self.lambda_scale * x.powi(self.lambda_index as i32)
    }

    /// Coefficients of the n-th x-derivative as a polynomial in x.
    pub fn derivative_coefficients(&self, n: usize, lambda: f64) -> Vec<f64> {
        let c = self.coefficients_at(lambda);
        if n >= c.len() {
            return vec![0.0];
        }
        (n..c.len())
            .map(|k| c[k] * falling_factorial(k, n))
            .collect()
    }

    /// max_{|x| ≤ r} |V^{(n)}(x, λ)| bounded by the sum of absolute monomial terms.
    pub fn derivative_bound(&self, n: usize, r: f64, lambda: f64) -> f64 {
        self.derivative_coefficients(n, lambda)
            .iter()
            .enumerate()
            .map(|(k, c)| c.abs() * r.powi(k as i32))
            .sum()
    }
}

fn falling_factorial(k: usize, n: usize) -> f64 {
    ((k + 1 - n)..=k).map(|v| v as f64).product()
}

/// Exact n-th x-derivative of the polynomial potential at (x, λ).
pub fn potential_derivative(spec: &PotentialSpec, n: usize, x: f64, lambda: f64) -> f64 {
    let coeffs = spec.derivative_coefficients(n, lambda);
    coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c)
}

/// H(x, p, λ) = p² / 2m + V(x, λ).
pub fn hamiltonian(params: &PhysicalParams, spec: &PotentialSpec, x: f64, p: f64, lambda: f64) -> f64 {
    p * p / (2.0 * params.mass()) + spec.value(x, lambda)
}

/// Piecewise-linear protocol λ(t), constant outside the breakpoints.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSchedule", into = "RawSchedule")]
pub struct Schedule {
    breakpoints: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct RawSchedule {
    breakpoints: Vec<(f64, f64)>,
}

impl TryFrom<RawSchedule> for Schedule {
    type Error = crate::QseError;

    fn try_from(raw: RawSchedule) -> Result<Self> {
        Schedule::new(raw.breakpoints)
    }
}

impl From<Schedule> for RawSchedule {
    fn from(s: Schedule) -> Self {
        RawSchedule { breakpoints: s.breakpoints }
    }
}

impl Schedule {
    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<Self> {
        if breakpoints.is_empty() {
            return Err(invalid("breakpoints", "at least one breakpoint required"));
        }
        if breakpoints.iter().any(|(t, l)| !t.is_finite() || !l.is_finite()) {
            return Err(invalid("breakpoints", "must be finite"));
        }
        if breakpoints.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(invalid("breakpoints", "times must be strictly increasing"));
        }
        Ok(Self { breakpoints })
    }

    pub fn constant(lambda: f64) -> Self {
        Self { breakpoints: vec![(0.0, lambda)] }
    }

    /// Linear ramp from `lambda0` at `t0` to `lambda1` at `t1`.
    pub fn ramp(t0: f64, lambda0: f64, t1: f64, lambda1: f64) -> Result<Self> {
        Self::new(vec![(t0, lambda0), (t1, lambda1)])
    }

    pub fn breakpoints(&self) -> &[(f64, f64)] {
        &self.breakpoints
    }

    pub fn value(&self, t: f64) -> f64 {
        let bp = &self.breakpoints;
        if t <= bp[0].0 {
            return bp[0].1;
        }
        let last = bp[bp.len() - 1];
        if t >= last.0 {
            return last.1;
        }
        let k = bp.partition_point(|(tk, _)| *tk <= t);
        let (t0, l0) = bp[k - 1];
        let (t1, l1) = bp[k];
        l0 + (l1 - l0) * (t - t0) / (t1 - t0)
    }

    /// Right derivative dλ/dt.
    pub fn derivative(&self, t: f64) -> f64 {
        let bp = &self.breakpoints;
        if t < bp[0].0 || t >= bp[bp.len() - 1].0 {
            return 0.0;
        }
        let k = bp.partition_point(|(tk, _)| *tk <= t);
        let (t0, l0) = bp[k - 1];
        let (t1, l1) = bp[k];
        (l1 - l0) / (t1 - t0)
    }

    /// λ_eq, the value held after the last breakpoint.
    pub fn lambda_eq(&self) -> f64 {
        self.breakpoints[self.breakpoints.len() - 1].1
    }

    pub fn lambda_start(&self) -> f64 {
        self.breakpoints[0].1
    }

    pub fn is_static(&self) -> bool {
        self.breakpoints.iter().all(|(_, l)| *l == self.breakpoints[0].1)
    }

    /// Largest and smallest λ visited.
    pub fn lambda_range(&self) -> (f64, f64) {
        self.breakpoints.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, l)| {
            (lo.min(*l), hi.max(*l))
        })
    }
}

/// Gaussian phase-space packet: centre (x0, p0) and standard deviations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPacket {
    pub x0: f64,
    pub p0: f64,
    pub sigma_x: f64,
    pub sigma_p: f64,
}

impl GaussianPacket {
    pub fn new(x0: f64, p0: f64, sigma_x: f64, sigma_p: f64) -> Result<Self> {
        if !(x0.is_finite() && p0.is_finite()) {
            return Err(invalid("packet", "centre must be finite"));
        }
        if !(sigma_x > 0.0 && sigma_x.is_finite() && sigma_p > 0.0 && sigma_p.is_finite()) {
            return Err(invalid("packet", "spreads must be positive and finite"));
        }
        Ok(Self { x0, p0, sigma_x, sigma_p })
    }

    /// Minimum-uncertainty packet, σ_p = ħ / 2σ_x.
    pub fn minimum_uncertainty(x0: f64, p0: f64, sigma_x: f64, hbar: f64) -> Result<Self> {
        if hbar <= 0.0 {
            return Err(invalid("hbar", "minimum-uncertainty packet needs hbar > 0"));
        }
        Self::new(x0, p0, sigma_x, hbar / (2.0 * sigma_x))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn unit() -> PhysicalParams {
        PhysicalParams::new(1.0, 1.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn gamma_examples() {
        let p = unit();
        assert_eq!(gamma(&p, 0.0).unwrap(), 1.0);
        assert_relative_eq!(gamma(&p, 2f64.ln()).unwrap(), 0.5, epsilon = 1e-15);
        let free = PhysicalParams::new(1.0, 0.0, 1.0, 1.0).unwrap();
        assert_eq!(gamma(&free, 10.0).unwrap(), 1.0);
        assert!(gamma(&p, -1e-3).is_err());
    }

    #[test]
    fn params_reject_bad_values() {
        assert!(PhysicalParams::new(0.0, 1.0, 1.0, 1.0).is_err());
        assert!(PhysicalParams::new(1.0, -1.0, 1.0, 1.0).is_err());
        assert!(PhysicalParams::new(1.0, 1.0, 0.0, 1.0).is_err());
        assert!(PhysicalParams::new(1.0, 1.0, 1.0, -1.0).is_err());
        assert!(PhysicalParams::new(f64::NAN, 1.0, 1.0, 1.0).is_err());
        let p = PhysicalParams::with_kb(2.0, 1.0, 3.0, 0.5, 1.0).unwrap();
        assert_relative_eq!(p.beta(), 1.0 / 1.5);
    }

    #[test]
    fn potential_derivative_examples() {
        let harmonic = PotentialSpec::harmonic();
        assert_relative_eq!(potential_derivative(&harmonic, 1, 2.0, 3.0), 6.0);
        let quartic = PotentialSpec::harmonic_quartic(1.0).unwrap();
        assert_relative_eq!(potential_derivative(&quartic, 3, 1.0, 0.0), 6.0);
        assert_eq!(potential_derivative(&quartic, 5, 1.3, 2.0), 0.0);
        assert_eq!(potential_derivative(&harmonic, 3, 1.3, 2.0), 0.0);
    }

    #[test]
    fn potential_degree_limit() {
        assert!(PotentialSpec::new(vec![0.0; 8], 2).is_ok());
        assert!(PotentialSpec::new(vec![1.0; 8], 2).is_err());
        let spec = PotentialSpec::new(vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0], 2).unwrap();
        assert!(spec.is_confining(1.0));
        assert_eq!(spec.max_degree(), 6);
        assert!(!PotentialSpec::harmonic().is_confining(-1.0));
        assert!(PotentialSpec::harmonic().is_confining(1.0));
    }

    #[test]
    fn hamiltonian_examples() {
        let p1 = unit();
        let p2 = PhysicalParams::new(2.0, 1.0, 1.0, 1.0).unwrap();
        let v = PotentialSpec::harmonic();
        assert_eq!(hamiltonian(&p1, &v, 0.0, 0.0, 1.0), 0.0);
        assert_relative_eq!(hamiltonian(&p2, &v, 1.0, 2.0, 1.0), 1.5);
        assert_relative_eq!(hamiltonian(&p1, &v, 1.0, 0.0, 4.0), 2.0);
    }

    #[test]
    fn schedule_is_piecewise_linear() {
        let s = Schedule::new(vec![(1.0, 2.0), (3.0, 6.0), (4.0, 6.0)]).unwrap();
        assert_eq!(s.value(0.0), 2.0);
        assert_eq!(s.value(2.0), 4.0);
        assert_eq!(s.value(10.0), 6.0);
        assert_eq!(s.derivative(0.5), 0.0);
        assert_eq!(s.derivative(1.0), 2.0);
        assert_eq!(s.derivative(3.0), 0.0);
        assert_eq!(s.lambda_eq(), 6.0);
        assert!(Schedule::new(vec![(1.0, 0.0), (1.0, 1.0)]).is_err());
    }

    proptest! {
        #[test]
        fn gamma_is_multiplicative(s in 0.0..20.0f64, t in 0.0..20.0f64, nu in 0.0..3.0f64, m in 0.1..5.0f64) {
            let p = PhysicalParams::new(m, nu, 1.0, 1.0).unwrap();
            let lhs = gamma(&p, s + t).unwrap();
            let rhs = gamma(&p, s).unwrap() * gamma(&p, t).unwrap();
            // exp amplifies the rounding of its argument by |νt/m|
            let arg = p.damping_rate() * (s + t);
            prop_assert!((lhs - rhs).abs() <= 8.0 * f64::EPSILON * (1.0 + arg) * lhs);
            prop_assert!(lhs > 0.0 && lhs <= 1.0);
        }

        #[test]
        fn derivatives_match_central_differences(
            coeffs in proptest::collection::vec(-2.0..2.0f64, 7),
            x in -1.5..1.5f64,
            lambda in -2.0..2.0f64,
        ) {
            let spec = PotentialSpec::new(coeffs, 2).unwrap();
            // Central difference of V^{(n-1)} approximates V^{(n)}.
            let h = 1e-5;
            for n in 1..=3 {
                let fd = (potential_derivative(&spec, n - 1, x + h, lambda)
                    - potential_derivative(&spec, n - 1, x - h, lambda)) / (2.0 * h);
                let exact = potential_derivative(&spec, n, x, lambda);
                let scale = spec.derivative_bound(n, 2.0, lambda).max(1.0);
                prop_assert!((fd - exact).abs() < 1e-8 * scale, "n={n} fd={fd} exact={exact}");
            }
        }

        #[test]
        fn hamiltonian_even_in_momentum(x in -3.0..3.0f64, p in -3.0..3.0f64, lambda in 0.1..3.0f64) {
            let params = unit();
            let spec = PotentialSpec::harmonic_quartic(0.5).unwrap();
            prop_assert_eq!(
                hamiltonian(&params, &spec, x, p, lambda),
                hamiltonian(&params, &spec, x, -p, lambda)
            );
        }
    }
}
