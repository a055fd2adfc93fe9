//! Small dense linear-algebra helpers shared by every module.

use nalgebra::{DMatrix, Matrix2, Matrix4, SymmetricEigen};
use num_complex::Complex;

pub type C64 = Complex<f64>;
pub type CMat = DMatrix<C64>;
pub type Mat2 = Matrix2<C64>;
pub type Mat4 = Matrix4<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// `e^{i theta}`.
#[inline]
pub fn cis(theta: f64) -> C64 {
    C64::from_polar(1.0, theta)
}

pub fn identity2() -> Mat2 {
    Mat2::identity()
}

pub fn pauli_x() -> Mat2 {
    Mat2::new(ZERO, ONE, ONE, ZERO)
}

pub fn pauli_y() -> Mat2 {
    Mat2::new(ZERO, -I, I, ZERO)
}

pub fn pauli_z() -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, -ONE)
}

pub fn hadamard() -> Mat2 {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Mat2::new(c64(h, 0.0), c64(h, 0.0), c64(h, 0.0), c64(-h, 0.0))
}

/// Phase gate `diag(1, e^{i theta})`.
pub fn phase_gate(theta: f64) -> Mat2 {
    Mat2::new(ONE, ZERO, ZERO, cis(theta))
}

/// `R_z(theta) = exp(-i theta Z / 2)`.
pub fn rz(theta: f64) -> Mat2 {
    Mat2::new(cis(-theta / 2.0), ZERO, ZERO, cis(theta / 2.0))
}

/// `R_y(theta) = exp(-i theta Y / 2)`.
pub fn ry(theta: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    Mat2::new(c64(c, 0.0), c64(-s, 0.0), c64(s, 0.0), c64(c, 0.0))
}

/// `R_x(theta) = exp(-i theta X / 2)`.
pub fn rx(theta: f64) -> Mat2 {
    let (s, c) = (theta / 2.0).sin_cos();
    Mat2::new(c64(c, 0.0), c64(0.0, -s), c64(0.0, -s), c64(c, 0.0))
}

/// Kronecker product `a ⊗ b` of two single-qubit matrices; `a` acts on the
/// more significant qubit of the 4-dimensional local index.
pub fn kron2(a: &Mat2, b: &Mat2) -> Mat4 {
    let mut m = Mat4::zeros();
    for i in 0..2 {
        for j in 0..2 {
            for k in 0..2 {
                for l in 0..2 {
                    m[(2 * i + k, 2 * j + l)] = a[(i, j)] * b[(k, l)];
                }
            }
        }
    }
    m
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    a.kronecker(b)
}

pub fn to_dyn2(m: &Mat2) -> CMat {
    CMat::from_fn(2, 2, |i, j| m[(i, j)])
}

pub fn to_dyn4(m: &Mat4) -> CMat {
    CMat::from_fn(4, 4, |i, j| m[(i, j)])
}

pub fn to_mat4(m: &CMat) -> Mat4 {
    assert_eq!(m.shape(), (4, 4));
    Mat4::from_fn(|i, j| m[(i, j)])
}

pub fn to_mat2(m: &CMat) -> Mat2 {
    assert_eq!(m.shape(), (2, 2));
    Mat2::from_fn(|i, j| m[(i, j)])
}

pub fn real_to_complex(m: &DMatrix<f64>) -> CMat {
    m.map(|x| c64(x, 0.0))
}

/// Largest entry-wise modulus of `a - b`.
pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// `max |U†U - I|` over all entries.
pub fn unitarity_error(u: &CMat) -> f64 {
    let n = u.nrows();
    if u.ncols() != n {
        return f64::INFINITY;
    }
    let p = u.adjoint() * u;
    let mut err = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let target = if i == j { ONE } else { ZERO };
            err = err.max((p[(i, j)] - target).norm());
        }
    }
    err
}

pub fn hermiticity_error(h: &CMat) -> f64 {
    max_abs_diff(h, &h.adjoint())
}

/// Global-phase-insensitive overlap `|tr(A†B)| / dim`; equals 1 iff the two
/// unitaries agree up to a global phase.
pub fn phase_overlap(a: &CMat, b: &CMat) -> f64 {
    assert_eq!(a.shape(), b.shape());
    let mut tr = ZERO;
    for (x, y) in a.iter().zip(b.iter()) {
        tr += x.conj() * y;
    }
    tr.norm() / a.nrows() as f64
}

pub fn equal_up_to_phase(a: &CMat, b: &CMat, tol: f64) -> bool {
    (phase_overlap(a, b) - 1.0).abs() < tol
}

/// Max-abs distance between `a` and `b` after removing the best global
/// phase (`arg tr(A†B)`).
pub fn phase_aligned_diff(a: &CMat, b: &CMat) -> f64 {
    let mut tr = ZERO;
    for (x, y) in a.iter().zip(b.iter()) {
        tr += x.conj() * y;
    }
    let ph = if tr.norm() > 0.0 { tr / tr.norm() } else { ONE };
    max_abs_diff(&(a * ph), b)
}

/// Applies a scalar function to a Hermitian matrix through its
/// eigendecomposition.
pub fn hermitian_function(h: &CMat, f: impl Fn(f64) -> C64) -> CMat {
    let eig = SymmetricEigen::new(h.clone());
    let v = &eig.eigenvectors;
    let n = h.nrows();
    let mut scaled = v.clone();
    for j in 0..n {
        let fj = f(eig.eigenvalues[j]);
        for i in 0..n {
            scaled[(i, j)] *= fj;
        }
    }
    scaled * v.adjoint()
}

/// `exp(i t H)` for Hermitian `H`.
pub fn expm_i_hermitian(h: &CMat, t: f64) -> CMat {
    hermitian_function(h, |x| cis(x * t))
}

/// Spectral norm of a normal matrix (Hermitian or anti-Hermitian input);
/// falls back to the largest singular value otherwise.
pub fn spectral_norm(m: &CMat) -> f64 {
    if hermiticity_error(m) < 1e-12 * (1.0 + max_norm(m)) {
        let eig = SymmetricEigen::new(m.clone());
        return eig.eigenvalues.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    }
    let anti = m * I;
    if hermiticity_error(&anti) < 1e-12 * (1.0 + max_norm(m)) {
        let eig = SymmetricEigen::new(anti);
        return eig.eigenvalues.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(0.0f64, |a, x| a.max(*x))
}

pub fn max_norm(m: &CMat) -> f64 {
    m.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

/// Least-squares line `y = slope * x + intercept`; returns
/// `(slope, intercept, r_squared)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let ss_res: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - (slope * a + intercept)).powi(2))
        .sum();
    let r2 = if ss_tot > 0.0 {
        1.0 - ss_res / ss_tot
    } else {
        1.0
    };
    (slope, intercept, r2)
}
