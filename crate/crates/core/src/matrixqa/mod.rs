//! Finite-dimensional quantum analysis.
//!
//! The operator differential `(df/dA) C` of a hermitian matrix `A` is the
//! Fréchet derivative of the matrix function `f`, evaluated here with
//! divided differences in the eigenbasis of `A`. The integral representation
//! `∫₀¹ dλ f'(A − λ δ_A) C` is kept as an independent oracle in the tests.

pub mod suite;

use nalgebra::{DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QseError, Result};
use crate::linalg::{
    check_same_shape, check_square, commutator, frobenius, half_anticommutator,
    hermiticity_defect, identity, matmul, projected_norm, CMat, ZERO,
};

/// Relative tolerance on ‖A − A†‖ below which a matrix is treated as hermitian.
pub const HERMITIAN_TOL: f64 = 1e-10;

/// Relative gap below which two eigenvalues are treated as degenerate.
pub const DEGENERACY_TOL: f64 = 1e-12;

/// Scalar function with exact derivatives, applied to matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OperatorFunction {
    /// xⁿ
    Monomial { power: u32 },
    /// scale · e^{rate·x}
    Exp { rate: f64, scale: f64 },
    /// Σ c_k x^k
    Polynomial { coefficients: Vec<f64> },
}

impl OperatorFunction {
    pub fn monomial(power: u32) -> Self {
        OperatorFunction::Monomial { power }
    }

    pub fn exp() -> Self {
        OperatorFunction::Exp { rate: 1.0, scale: 1.0 }
    }

    pub fn polynomial(coefficients: Vec<f64>) -> Self {
        OperatorFunction::Polynomial { coefficients }
    }

    /// Polynomial coefficients, or `None` for the exponential family.
    pub fn as_polynomial(&self) -> Option<Vec<f64>> {
        match self {
            OperatorFunction::Monomial { power } => {
                let mut c = vec![0.0; *power as usize + 1];
                c[*power as usize] = 1.0;
                Some(c)
            }
            OperatorFunction::Polynomial { coefficients } => Some(coefficients.clone()),
            OperatorFunction::Exp { .. } => None,
        }
    }

    /// Exact n-th derivative as another operator function.
    pub fn derivative_function(&self, n: usize) -> OperatorFunction {
        match self {
            OperatorFunction::Exp { rate, scale } => OperatorFunction::Exp {
                rate: *rate,
                scale: scale * rate.powi(n as i32),
            },
            _ => {
                let c = self.as_polynomial().expect("polynomial family");
                let d: Vec<f64> = if n >= c.len() {
                    vec![0.0]
                } else {
                    (n..c.len())
                        .map(|k| c[k] * ((k + 1 - n)..=k).map(|v| v as f64).product::<f64>())
                        .collect()
                };
                OperatorFunction::Polynomial { coefficients: d }
            }
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        self.derivative(0, x)
    }

    /// f^{(n)}(x).
    pub fn derivative(&self, n: usize, x: f64) -> f64 {
        match self.derivative_function(n) {
            OperatorFunction::Exp { rate, scale } => scale * (rate * x).exp(),
            OperatorFunction::Polynomial { coefficients } => {
                coefficients.iter().rev().fold(0.0, |acc, c| acc * x + c)
            }
            OperatorFunction::Monomial { .. } => unreachable!("derivative_function never returns a monomial"),
        }
    }

    /// f[a, b], stable for close arguments.
    pub fn divided_difference(&self, a: f64, b: f64, degenerate: f64) -> f64 {
        if (a - b).abs() <= degenerate {
            return self.derivative(1, a);
        }
        match self {
            OperatorFunction::Exp { rate, scale } => {
                // e^{ra} − e^{rb} = e^{rb}·expm1(r(a − b))
                scale * (rate * b).exp() * (rate * (a - b)).exp_m1() / (a - b)
            }
            _ => {
                // Σ c_k Σ_{j<k} a^j b^{k-1-j}
                let c = self.as_polynomial().expect("polynomial family");
                let mut total = 0.0;
                for (k, ck) in c.iter().enumerate().skip(1) {
                    if *ck == 0.0 {
                        continue;
                    }
                    let mut s = 0.0;
                    for j in 0..k {
                        s += a.powi(j as i32) * b.powi((k - 1 - j) as i32);
                    }
                    total += ck * s;
                }
                total
            }
        }
    }

    /// f[a, b, c], the second divided difference.
    pub fn second_divided_difference(&self, a: f64, b: f64, c: f64, degenerate: f64) -> f64 {
        if let Some(coeffs) = self.as_polynomial() {
            // Σ c_k h_{k−2}(a, b, c), h the complete homogeneous symmetric polynomial.
            let mut total = 0.0;
            for (k, ck) in coeffs.iter().enumerate().skip(2) {
                if *ck == 0.0 {
                    continue;
                }
                let d = k - 2;
                let mut h = 0.0;
                for i in 0..=d {
                    for j in 0..=(d - i) {
                        h += a.powi(i as i32) * b.powi(j as i32) * c.powi((d - i - j) as i32);
                    }
                }
                total += ck * h;
            }
            return total;
        }
        let mut v = [a, b, c];
        v.sort_by(|x, y| x.total_cmp(y));
        let (lo, mid, hi) = (v[0], v[1], v[2]);
        if hi - lo <= degenerate {
            return 0.5 * self.derivative(2, mid);
        }
        (self.divided_difference(hi, mid, degenerate) - self.divided_difference(mid, lo, degenerate))
            / (hi - lo)
    }

    /// f(M) for an arbitrary square matrix (Horner or Padé exponential).
    pub fn apply(&self, m: &CMat) -> CMat {
        match self {
            OperatorFunction::Exp { rate, scale } => {
                (m * Complex64::new(*rate, 0.0)).exp() * Complex64::new(*scale, 0.0)
            }
            _ => polynomial_of_matrix(&self.as_polynomial().expect("polynomial family"), m),
        }
    }

    /// f(A) for hermitian A through the spectral decomposition.
    pub fn apply_hermitian(&self, a: &CMat) -> Result<CMat> {
        let eig = HermitianEigen::new(a)?;
        Ok(eig.reconstruct(|x| self.value(x)))
    }
}

/// p(M) = Σ c_k M^k by Horner's rule.
pub fn polynomial_of_matrix(coeffs: &[f64], m: &CMat) -> CMat {
    let n = m.nrows();
    let d = coeffs.iter().rposition(|c| *c != 0.0).unwrap_or(0);
    if d == 0 {
        return identity(n) * Complex64::new(coeffs.first().copied().unwrap_or(0.0), 0.0);
    }
    let mut acc = m * Complex64::new(coeffs[d], 0.0);
    for i in 0..n {
        acc[(i, i)] += coeffs[d - 1];
    }
    for k in (0..d - 1).rev() {
        acc = matmul(&acc, m);
        for i in 0..n {
            acc[(i, i)] += coeffs[k];
        }
    }
    acc
}

/// Spectral decomposition A = U diag(a) U† of a hermitian matrix.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: DVector<f64>,
    pub vectors: CMat,
    /// Absolute gap below which eigenvalues count as degenerate.
    pub degenerate: f64,
}

impl HermitianEigen {
    pub fn new(a: &CMat) -> Result<Self> {
        check_square(a, "A")?;
        let scale = frobenius(a);
        let defect = hermiticity_defect(a);
        if defect > HERMITIAN_TOL * scale.max(f64::MIN_POSITIVE) {
            return Err(QseError::NotHermitian { defect });
        }
        let eig = SymmetricEigen::new(a.clone());
        let norm = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        Ok(Self {
            values: eig.eigenvalues,
            vectors: eig.eigenvectors,
            degenerate: DEGENERACY_TOL * norm.max(f64::MIN_POSITIVE),
        })
    }

    pub fn to_eigenbasis(&self, c: &CMat) -> CMat {
        matmul(&matmul(&self.vectors.adjoint(), c), &self.vectors)
    }

    pub fn from_eigenbasis(&self, c: &CMat) -> CMat {
        matmul(&matmul(&self.vectors, c), &self.vectors.adjoint())
    }

    /// U diag(g(a)) U†.
    pub fn reconstruct(&self, g: impl Fn(f64) -> f64) -> CMat {
        let mut scaled = self.vectors.clone();
        for (j, a) in self.values.iter().enumerate() {
            let s = g(*a);
            scaled.column_mut(j).scale_mut(s);
        }
        matmul(&scaled, &self.vectors.adjoint())
    }
}

/// δ_A C = AC − CA.
pub fn inner_derivation(a: &CMat, c: &CMat) -> Result<CMat> {
    check_square(a, "A")?;
    check_same_shape(a, c)?;
    Ok(commutator(a, c))
}

/// (df/dA) C, the first-order coefficient of f(A + hC).
pub fn frechet_derivative(a: &CMat, c: &CMat, f: &OperatorFunction) -> Result<CMat> {
    check_same_shape(a, c)?;
    let eig = HermitianEigen::new(a)?;
    Ok(frechet_in(&eig, c, f))
}

fn frechet_in(eig: &HermitianEigen, c: &CMat, f: &OperatorFunction) -> CMat {
    let mut ct = eig.to_eigenbasis(c);
    let a = &eig.values;
    for j in 0..ct.ncols() {
        for i in 0..ct.nrows() {
            let d = f.divided_difference(a[i], a[j], eig.degenerate);
            ct[(i, j)] *= d;
        }
    }
    eig.from_eigenbasis(&ct)
}

/// f(A) + Σ_{n ≤ order} (1/n!)(dⁿf/dAⁿ) Cⁿ for order ∈ {1, 2}.
///
/// The second-order term is Σ_j f[a_i, a_j, a_k] C_ij C_jk in the eigenbasis
/// of A, the divided-difference form of the nested λ-integrals.
pub fn operator_taylor(a: &CMat, c: &CMat, f: &OperatorFunction, order: usize) -> Result<CMat> {
    if !(1..=2).contains(&order) {
        return Err(QseError::Unsupported(format!("operator Taylor order {order}")));
    }
    check_same_shape(a, c)?;
    let eig = HermitianEigen::new(a)?;
    let n = a.nrows();
    let vals = &eig.values;
    let ct = eig.to_eigenbasis(c);
    let mut sum = CMat::zeros(n, n);
    for i in 0..n {
        sum[(i, i)] = Complex64::new(f.value(vals[i]), 0.0);
    }
    for j in 0..n {
        for i in 0..n {
            sum[(i, j)] += ct[(i, j)] * f.divided_difference(vals[i], vals[j], eig.degenerate);
        }
    }
    if order == 2 {
        for k in 0..n {
            for i in 0..n {
                let mut acc = ZERO;
                for j in 0..n {
                    let w = f.second_divided_difference(vals[i], vals[j], vals[k], eig.degenerate);
                    acc += ct[(i, j)] * ct[(j, k)] * w;
                }
                sum[(i, k)] += acc;
            }
        }
    }
    Ok(eig.from_eigenbasis(&sum))
}

/// A stochastic increment: a c-number (times the identity) or an operator.
#[derive(Debug, Clone, Copy)]
pub enum Increment<'a> {
    Scalar(f64),
    Matrix(&'a CMat),
}

fn times_increment(f: &CMat, inc: Increment<'_>) -> Result<CMat> {
    match inc {
        Increment::Scalar(s) => Ok(f * Complex64::new(s, 0.0)),
        Increment::Matrix(m) => {
            if f.ncols() != m.nrows() {
                return Err(QseError::DimensionMismatch {
                    expected: format!("{} rows", f.ncols()),
                    actual: format!("{} rows", m.nrows()),
                });
            }
            Ok(matmul(f, m))
        }
    }
}

/// Stratonovich product ½(F_t + F_{t+dt}) · increment.
pub fn strat_product(f_t: &CMat, f_next: &CMat, increment: Increment<'_>) -> Result<CMat> {
    check_same_shape(f_t, f_next)?;
    let mid = (f_t + f_next) * Complex64::new(0.5, 0.0);
    times_increment(&mid, increment)
}

/// Itô product F_t · increment.
pub fn ito_product(f_t: &CMat, increment: Increment<'_>) -> Result<CMat> {
    times_increment(f_t, increment)
}

/// e^{a δ_A} C = Σ aⁿ/n! δ_Aⁿ C, summed until the terms stop contributing.
pub fn exp_inner_derivation(a_mat: &CMat, c: &CMat, a: f64) -> Result<CMat> {
    check_same_shape(a_mat, c)?;
    let mut term = c.clone();
    let mut sum = c.clone();
    for n in 1..400 {
        term = commutator(a_mat, &term) * Complex64::new(a / n as f64, 0.0);
        sum += &term;
        if frobenius(&term) <= 1e-18 * frobenius(&sum) {
            break;
        }
    }
    Ok(sum)
}

/// f(A − δ_A) C for polynomial f, expanded as Σ_k c_k Σ_j C(k,j) A^{k−j}(−δ_A)^j C.
pub fn shifted_polynomial_apply(coeffs: &[f64], a: &CMat, c: &CMat) -> Result<CMat> {
    check_same_shape(a, c)?;
    let n = a.nrows();
    let deg = coeffs.len().saturating_sub(1);
    // (−δ_A)^j C for j = 0..=deg
    let mut deltas = Vec::with_capacity(deg + 1);
    deltas.push(c.clone());
    for j in 1..=deg {
        let prev: &CMat = &deltas[j - 1];
        deltas.push(commutator(a, prev) * Complex64::new(-1.0, 0.0));
    }
    let mut out = CMat::zeros(n, n);
    for (k, ck) in coeffs.iter().enumerate() {
        if *ck == 0.0 {
            continue;
        }
        for (j, dj) in deltas.iter().enumerate().take(k + 1) {
            let mut term = dj.clone();
            for _ in 0..(k - j) {
                term = matmul(a, &term);
            }
            out += term * Complex64::new(ck * binomial(k, j), 0.0);
        }
    }
    Ok(out)
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Defect ‖Π[(df/dA) dA − ½{dA, f'(A)}]Π‖_F of the constant-commutator formula.
///
/// `(dA − ½δ_{dA}) ∘ f'(A)` reduces to the anticommutator ½{dA, f'(A)}. The
/// identity only holds where [A, dA] is proportional to the identity, so the
/// defect is measured on the first `keep` basis levels (all levels if `None`).
pub fn verify_constant_commutator_formula(
    a: &CMat,
    da: &CMat,
    f: &OperatorFunction,
    keep: Option<usize>,
) -> Result<f64> {
    check_same_shape(a, da)?;
    let eig = HermitianEigen::new(a)?;
    let lhs = frechet_in(&eig, da, f);
    let f1 = f.derivative_function(1);
    let f1_a = match f1.as_polynomial() {
        Some(c) => polynomial_of_matrix(&c, a),
        None => eig.reconstruct(|x| f1.value(x)),
    };
    let rhs = half_anticommutator(da, &f1_a);
    let keep = keep.unwrap_or(a.nrows());
    Ok(projected_norm(&(lhs - rhs), keep))
}

/// ∫₀¹ dλ f'(A − λδ_A) C by Gauss–Legendre quadrature in the eigenbasis.
///
/// In the eigenbasis (A − λδ_A) acts on the (i, j) entry as (1 − λ) a_i + λ a_j.
pub fn frechet_by_quadrature(a: &CMat, c: &CMat, f: &OperatorFunction, nodes: usize) -> Result<CMat> {
    check_same_shape(a, c)?;
    let eig = HermitianEigen::new(a)?;
    let (xs, ws) = gauss_legendre(nodes);
    let mut ct = eig.to_eigenbasis(c);
    let vals = &eig.values;
    for j in 0..ct.ncols() {
        for i in 0..ct.nrows() {
            let mut s = 0.0;
            for (x, w) in xs.iter().zip(&ws) {
                let lam = 0.5 * (x + 1.0);
                s += 0.5 * w * f.derivative(1, (1.0 - lam) * vals[i] + lam * vals[j]);
            }
            ct[(i, j)] *= s;
        }
    }
    Ok(eig.from_eigenbasis(&ct))
}

/// Gauss–Legendre nodes and weights on [−1, 1] via Newton iteration.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut xs = vec![0.0; n];
    let mut ws = vec![0.0; n];
    for i in 0..n {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        xs[i] = x;
        ws[i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (xs, ws)
}
