//! Property suite over the quantum-analysis identities, reported with the
//! measured defect of each identity.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::*;
use crate::linalg::{lowering, random_complex, random_hermitian, I};

/// Outcome of one identity check.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub max_defect: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl IdentityCheck {
    fn new(name: &str, max_defect: f64, tolerance: f64) -> Self {
        Self { name: name.to_string(), max_defect, tolerance, passed: max_defect < tolerance }
    }
}

/// Tolerance for the constant-commutator formula on a truncated position and
/// momentum pair, relative to ‖f'(X)‖_F, when the check is projected onto the
/// lowest half of the levels and f is a polynomial of degree ≤ 4.
pub const TRUNCATED_FORMULA_TOL: f64 = 1e-8;

/// Runs every identity on `trials` random draws and keeps the worst defect.
pub fn identity_suite(seed: u64, trials: usize) -> Result<Vec<IdentityCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 8];
    for _ in 0..trials {
        let a = random_hermitian(8, &mut rng);
        let c = random_hermitian(8, &mut rng);
        let h = 1e-5;
        for (slot, f) in [OperatorFunction::monomial(2), OperatorFunction::monomial(3), OperatorFunction::exp()]
            .iter()
            .enumerate()
        {
            let l = frechet_derivative(&a, &c, f)?;
            let hc = Complex64::new(h, 0.0);
            let fd = (f.apply(&(&a + &c * hc)) - f.apply(&(&a - &c * hc))) / (hc * 2.0);
            worst[slot] = worst[slot].max(frobenius(&(fd - &l)) / frobenius(&l));
        }

        let g = random_complex(4, &mut rng);
        let k = random_complex(4, &mut rng);
        let dgk = inner_derivation(&g, &k)?;
        let dkg = inner_derivation(&k, &g)?;
        worst[3] = worst[3].max(frobenius(&(&dgk + &dkg)) / frobenius(&dgk));

        let alpha = 0.3;
        let series = exp_inner_derivation(&g, &k, alpha)?;
        let conj = (&g * Complex64::new(alpha, 0.0)).exp() * &k * (&g * Complex64::new(-alpha, 0.0)).exp();
        worst[4] = worst[4].max(frobenius(&(series - &conj)) / frobenius(&conj));

        for deg in 1..=4usize {
            let coeffs: Vec<f64> = (0..=deg).map(|j| 1.0 / (j + 1) as f64).collect();
            let lhs = shifted_polynomial_apply(&coeffs, &g, &k)?;
            let rhs = &k * polynomial_of_matrix(&coeffs, &g);
            worst[5] = worst[5].max(frobenius(&(lhs - &rhs)) / frobenius(&rhs));
        }

        let d1 = CMat::from_diagonal(&DVector::from_fn(6, |i, _| Complex64::new(i as f64 * 0.3 - 0.7, 0.0)));
        let d2 = CMat::from_diagonal(&DVector::from_fn(6, |i, _| Complex64::new((i as f64).sin(), 0.0)));
        worst[6] = worst[6].max(verify_constant_commutator_formula(&d1, &d2, &OperatorFunction::exp(), None)?);
    }

    let n = 32;
    let a = lowering(n);
    let ad = a.adjoint();
    let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let x = (&a + &ad) * s;
    let p = (&ad - &a) * (I * s);
    let dx = &p * Complex64::new(1e-3, 0.0);
    for power in 2..=4u32 {
        let f = OperatorFunction::monomial(power);
        let defect = verify_constant_commutator_formula(&x, &dx, &f, Some(n / 2))?;
        let scale = frobenius(&f.derivative_function(1).apply(&x));
        worst[7] = worst[7].max(defect / scale);
    }

    Ok(vec![
        IdentityCheck::new("frechet_vs_central_difference_x2", worst[0], 1e-6),
        IdentityCheck::new("frechet_vs_central_difference_x3", worst[1], 1e-6),
        IdentityCheck::new("frechet_vs_central_difference_exp", worst[2], 1e-6),
        IdentityCheck::new("inner_derivation_antisymmetry", worst[3], 1e-12),
        IdentityCheck::new("exp_inner_derivation_conjugation", worst[4], 1e-10),
        IdentityCheck::new("shifted_function_moves_right", worst[5], 1e-10),
        IdentityCheck::new("constant_commutator_formula_commuting", worst[6], 1e-8),
        IdentityCheck::new("constant_commutator_formula_truncated_pair", worst[7], TRUNCATED_FORMULA_TOL),
    ])
}
