//! Scalar abstraction shared by every numerical module.
//!
//! All geometry, estimation and bound computations are written against
//! [`Real`], which is implemented for `f32` and `f64`. Complex quantities use
//! [`num_complex::Complex`] over the same scalar.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, RealField};
use num_complex::Complex;
use num_traits::ToPrimitive;

/// Floating point scalar usable throughout the crate: `f32` or `f64`.
pub trait Real: RealField + Copy + ToPrimitive + Send + Sync + 'static {
    /// Convert an `f64` literal into this scalar.
    #[inline]
    fn lit(v: f64) -> Self {
        nalgebra::convert(v)
    }

    /// Lossy conversion back to `f64` for reporting.
    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the scalar type.
    fn eps() -> Self;
}

impl Real for f32 {
    fn eps() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn eps() -> Self {
        f64::EPSILON
    }
}

pub type Cplx<T> = Complex<T>;
pub type CVector<T> = DVector<Complex<T>>;
pub type CMatrix<T> = DMatrix<Complex<T>>;

/// `exp(j * phase)`.
#[inline]
pub fn cis<T: Real>(phase: T) -> Complex<T> {
    Complex::new(phase.cos(), phase.sin())
}

#[inline]
pub(crate) fn re<T: Real>(v: T) -> Complex<T> {
    Complex::new(v, T::zero())
}

/// Wrap an angle into (-pi, pi].
pub fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::two_pi();
    let mut w = a % two_pi;
    if w > T::pi() {
        w -= two_pi;
    } else if w <= -T::pi() {
        w += two_pi;
    }
    w
}

/// Squared Frobenius norm of a complex matrix.
pub(crate) fn frob2<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
}

/// Element-wise (Hadamard) product of two complex vectors.
pub fn hadamard<T: Real>(a: &CVector<T>, b: &CVector<T>) -> CVector<T> {
    a.component_mul(b)
}

/// Kronecker product of two column vectors, first-operand-major.
pub fn kron<T: Real>(a: &CVector<T>, b: &CVector<T>) -> CVector<T> {
    let nb = b.len();
    CVector::from_fn(a.len() * nb, |i, _| a[i / nb] * b[i % nb])
}

/// Cholesky factor of a Hermitian positive-definite matrix.
///
/// nalgebra's complex factorization takes square roots of negative pivots
/// instead of failing, so the pivots are checked here.
pub(crate) fn hermitian_cholesky<T: Real>(m: &CMatrix<T>) -> Option<Cholesky<Complex<T>, Dyn>> {
    let chol = m.clone().cholesky()?;
    let l = chol.l_dirty();
    let ok = (0..l.nrows()).all(|i| {
        let d = l[(i, i)];
        d.re > T::zero() && d.re.is_finite() && d.im.abs() <= T::lit(1e-6) * d.re
    });
    ok.then_some(chol)
}
