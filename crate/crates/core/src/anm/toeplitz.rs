//! Two-level block Toeplitz parameterization.
//!
//! A parameter tensor `U(ka, kz)` with `ka ∈ -(La-1)..=(La-1)` and
//! `kz ∈ -(Lz-1)..=(Lz-1)` defines the `L x L` matrix whose block `(p, q)`
//! (each `Lz x Lz`) has entry `(r, s)` equal to `U(p - q, r - s)`. Element
//! `(p, r)` of the array maps to row `p * Lz + r`, the same axis-major order
//! as the steering vectors.
//!
//! Inner products on parameter tensors are the plain real inner product over
//! the full lag grid, `<U, V> = Re sum_k conj(U_k) V_k`. With that choice
//! [`toeplitz2_adjoint`] is the exact adjoint of [`toeplitz2_assemble`]: it
//! sums (not averages) the entries sharing a lag, and
//! `adjoint(assemble(U)) = counts ∘ U`.

use nalgebra::ComplexField;
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::{cis, CMatrix, Real};

/// Lag tensor of a 2-level Toeplitz matrix with conjugate-lag symmetry
/// `U(-ka, -kz) = conj(U(ka, kz))`.
#[derive(Debug, Clone, PartialEq)]
pub struct Toeplitz2Params<T: Real> {
    la: usize,
    lz: usize,
    data: Vec<Complex<T>>,
}

impl<T: Real> Toeplitz2Params<T> {
    pub fn zeros(la: usize, lz: usize) -> Self {
        assert!(la >= 1 && lz >= 1, "Toeplitz dimensions must be positive");
        Self {
            la,
            lz,
            data: vec![Complex::new(T::zero(), T::zero()); (2 * la - 1) * (2 * lz - 1)],
        }
    }

    /// Unit mass at lag (0, 0): assembles to the identity.
    pub fn identity(la: usize, lz: usize) -> Self {
        let mut u = Self::zeros(la, lz);
        u.set(0, 0, Complex::new(T::one(), T::zero()));
        u
    }

    /// Lags of a single atom `a_a(ga) ⊗ a_z(gz)`: `U(ka, kz) = e^{j pi (ka ga + kz gz)}`,
    /// which assembles to `a a^H`.
    pub fn from_atom(la: usize, lz: usize, ga: T, gz: T) -> Self {
        let mut u = Self::zeros(la, lz);
        for ka in u.lags_a() {
            for kz in u.lags_z() {
                let v = cis(T::pi() * (T::lit(ka as f64) * ga + T::lit(kz as f64) * gz));
                let i = u.index(ka, kz);
                u.data[i] = v;
            }
        }
        u
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.la, self.lz)
    }

    pub fn size(&self) -> usize {
        self.la * self.lz
    }

    pub fn lags_a(&self) -> std::ops::RangeInclusive<isize> {
        -(self.la as isize - 1)..=(self.la as isize - 1)
    }

    pub fn lags_z(&self) -> std::ops::RangeInclusive<isize> {
        -(self.lz as isize - 1)..=(self.lz as isize - 1)
    }

    #[inline]
    fn index(&self, ka: isize, kz: isize) -> usize {
        let wa = self.la as isize - 1;
        let wz = self.lz as isize - 1;
        debug_assert!(ka.abs() <= wa && kz.abs() <= wz);
        ((ka + wa) * (2 * wz + 1) + (kz + wz)) as usize
    }

    pub fn get(&self, ka: isize, kz: isize) -> Complex<T> {
        self.data[self.index(ka, kz)]
    }

    /// Set `U(ka, kz) = v` and its mirror `U(-ka, -kz) = conj(v)`.
    pub fn set(&mut self, ka: isize, kz: isize, v: Complex<T>) {
        let i = self.index(ka, kz);
        let j = self.index(-ka, -kz);
        if i == j {
            self.data[i] = Complex::new(v.re, T::zero());
        } else {
            self.data[i] = v;
            self.data[j] = v.conj();
        }
    }

    /// Number of matrix entries sharing lag `(ka, kz)`.
    pub fn lag_count(&self, ka: isize, kz: isize) -> usize {
        (self.la - ka.unsigned_abs()) * (self.lz - kz.unsigned_abs())
    }

    /// Largest violation of the conjugate-lag symmetry.
    pub fn symmetry_error(&self) -> T {
        let mut worst = T::zero();
        for ka in self.lags_a() {
            for kz in self.lags_z() {
                worst = worst.max((self.get(ka, kz) - self.get(-ka, -kz).conj()).modulus());
            }
        }
        worst
    }

    pub fn inner(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |acc, (a, b)| acc + (a.conj() * b).re)
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn values(&self) -> &[Complex<T>] {
        &self.data
    }

    pub(crate) fn values_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    /// Element-wise multiplication by the lag counts.
    pub fn weighted_by_counts(&self) -> Self {
        let mut out = self.clone();
        for ka in self.lags_a() {
            for kz in self.lags_z() {
                let i = self.index(ka, kz);
                out.data[i] = self.data[i] * T::lit(self.lag_count(ka, kz) as f64);
            }
        }
        out
    }
}

/// Assemble the Hermitian `L x L` 2-level Toeplitz matrix.
pub fn toeplitz2_assemble<T: Real>(params: &Toeplitz2Params<T>) -> Result<CMatrix<T>> {
    let tol = T::lit(1e-12) * params.values().iter().fold(T::one(), |acc, v| acc.max(v.modulus()));
    if params.symmetry_error() > tol {
        return Err(Error::InvalidInput(
            "Toeplitz parameters violate conjugate-lag symmetry".into(),
        ));
    }
    Ok(assemble_unchecked(params))
}

pub(crate) fn assemble_unchecked<T: Real>(params: &Toeplitz2Params<T>) -> CMatrix<T> {
    let (la, lz) = params.dims();
    let l = la * lz;
    CMatrix::from_fn(l, l, |i, j| {
        let (p, r) = ((i / lz) as isize, (i % lz) as isize);
        let (q, s) = ((j / lz) as isize, (j % lz) as isize);
        params.get(p - q, r - s)
    })
}

/// Adjoint of assembly: sums the entries of `x` sharing each lag.
pub fn toeplitz2_adjoint<T: Real>(x: &CMatrix<T>, la: usize, lz: usize) -> Result<Toeplitz2Params<T>> {
    let l = la * lz;
    if x.nrows() != l || x.ncols() != l {
        return Err(Error::Dimension(format!(
            "expected {l}x{l} matrix, got {}x{}",
            x.nrows(),
            x.ncols()
        )));
    }
    Ok(adjoint_unchecked(
        x.as_view::<nalgebra::Dyn, nalgebra::Dyn, nalgebra::U1, nalgebra::Dyn>(),
        la,
        lz,
    ))
}

pub(crate) fn adjoint_unchecked<T: Real, S>(
    x: nalgebra::Matrix<Complex<T>, nalgebra::Dyn, nalgebra::Dyn, S>,
    la: usize,
    lz: usize,
) -> Toeplitz2Params<T>
where
    S: nalgebra::storage::Storage<Complex<T>, nalgebra::Dyn, nalgebra::Dyn>,
{
    let mut u = Toeplitz2Params::zeros(la, lz);
    let l = la * lz;
    for j in 0..l {
        let (q, s) = ((j / lz) as isize, (j % lz) as isize);
        for i in 0..l {
            let (p, r) = ((i / lz) as isize, (i % lz) as isize);
            let k = u.index(p - q, r - s);
            u.data[k] += x[(i, j)];
        }
    }
    u
}
