//! Small dense complex-matrix helpers shared by the operator modules.

use matrixmultiply::CGemmOption;
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{QseError, Result};

pub type CMat = DMatrix<Complex64>;
pub type CVec = DVector<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// `c = a · b` through the blocked complex GEMM kernel.
pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    let mut c = CMat::zeros(a.nrows(), b.ncols());
    gemm_into(ONE, a, b, ZERO, &mut c);
    c
}

/// `c ← alpha · a · b + beta · c`.
pub fn gemm_into(alpha: Complex64, a: &CMat, b: &CMat, beta: Complex64, c: &mut CMat) {
    assert_eq!(a.ncols(), b.nrows(), "inner dimensions differ");
    assert_eq!((c.nrows(), c.ncols()), (a.nrows(), b.ncols()), "output shape differs");
    let (m, k, n) = (a.nrows(), a.ncols(), b.ncols());
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        *c *= beta;
        return;
    }
    // SAFETY: nalgebra stores dense matrices column-major and contiguously;
    // `Complex64` is `#[repr(C)]` with layout identical to `[f64; 2]`, and the
    // strides below describe exactly the allocated extents of a, b and c.
    unsafe {
        matrixmultiply::zgemm(
            CGemmOption::Standard,
            CGemmOption::Standard,
            m,
            k,
            n,
            [alpha.re, alpha.im],
            a.as_ptr() as *const [f64; 2],
            1,
            m as isize,
            b.as_ptr() as *const [f64; 2],
            1,
            k as isize,
            [beta.re, beta.im],
            c.as_mut_ptr() as *mut [f64; 2],
            1,
            m as isize,
        );
    }
}

/// [a, b] = ab − ba.
pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    let mut c = matmul(a, b);
    gemm_into(-ONE, b, a, ONE, &mut c);
    c
}

/// ½(ab + ba).
pub fn half_anticommutator(a: &CMat, b: &CMat) -> CMat {
    let half = Complex64::new(0.5, 0.0);
    let mut c = CMat::zeros(a.nrows(), b.ncols());
    gemm_into(half, a, b, ZERO, &mut c);
    gemm_into(half, b, a, ONE, &mut c);
    c
}

pub fn identity(n: usize) -> CMat {
    CMat::identity(n, n)
}

pub fn frobenius(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// ‖a − a†‖_F.
pub fn hermiticity_defect(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut acc = 0.0;
    for j in 0..n {
        for i in 0..j {
            acc += 2.0 * (a[(i, j)] - a[(j, i)].conj()).norm_sqr();
        }
        acc += (2.0 * a[(j, j)].im).powi(2);
    }
    acc.sqrt()
}

pub fn is_hermitian(a: &CMat, rel_tol: f64) -> bool {
    a.is_square() && hermiticity_defect(a) <= rel_tol * frobenius(a).max(f64::MIN_POSITIVE)
}

/// ‖Π a Π‖_F with Π projecting onto the first `keep` basis vectors.
pub fn projected_norm(a: &CMat, keep: usize) -> f64 {
    let k = keep.min(a.nrows()).min(a.ncols());
    a.view((0, 0), (k, k)).iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

pub fn check_square(a: &CMat, name: &str) -> Result<usize> {
    if a.is_square() {
        Ok(a.nrows())
    } else {
        Err(QseError::DimensionMismatch {
            expected: format!("square {name}"),
            actual: format!("{}x{}", a.nrows(), a.ncols()),
        })
    }
}

pub fn check_same_shape(a: &CMat, b: &CMat) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(QseError::DimensionMismatch {
            expected: format!("{:?}", a.shape()),
            actual: format!("{:?}", b.shape()),
        })
    }
}

/// ⟨ψ|A|ψ⟩, real part (A hermitian).
pub fn expectation(a: &CMat, psi: &CVec) -> f64 {
    psi.dotc(&(a * psi)).re
}

/// Truncated lowering operator, a|k⟩ = √k |k−1⟩ on levels 0..n.
pub fn lowering(n: usize) -> CMat {
    let mut a = CMat::zeros(n, n);
    for k in 1..n {
        a[(k - 1, k)] = Complex64::new((k as f64).sqrt(), 0.0);
    }
    a
}

/// Hermitian matrix with i.i.d. Gaussian-like entries drawn from `rng`.
pub fn random_hermitian<R: rand::Rng>(n: usize, rng: &mut R) -> CMat {
    let g = random_complex(n, rng);
    (&g + g.adjoint()) * Complex64::new(0.5, 0.0)
}

pub fn random_complex<R: rand::Rng>(n: usize, rng: &mut R) -> CMat {
    use rand_distr::{Distribution, StandardNormal};
    CMat::from_fn(n, n, |_, _| {
        Complex64::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
    })
}
