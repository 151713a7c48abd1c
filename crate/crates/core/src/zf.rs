//! Zero-forcing separation of the per-RIS reflections at the BS.

use nalgebra::{ComplexField, DMatrix};

use crate::error::{Error, Result};
use crate::geometry::{angles_between, steering_upa};
use crate::scalar::{CMatrix, CVector, Real};
use crate::sounding::{SceneConfig, SoundingRecord};

/// Observation of one RIS path after ZF combining.
#[derive(Debug, Clone)]
pub struct SeparatedObservation<T: Real> {
    /// `z_m[t] = w_m^H y_t`, length T.
    pub z: CVector<T>,
    pub ris_index: usize,
    /// Post-combining noise variance `rho * ||w_m||^2`.
    pub noise_scale: T,
    pub w_norm: T,
}

/// `A = [a(phi_1), ..., a(phi_M)]` from the known BS and RIS positions.
///
/// Fails when the numerical rank of `A` is below M, naming the most
/// collinear pair of columns.
pub fn build_bs_response_matrix<T: Real>(scene: &SceneConfig<T>) -> Result<CMatrix<T>> {
    let n = scene.num_bs_antennas();
    let m = scene.num_ris();
    if m == 0 {
        return Err(Error::InvalidInput("scene has no RIS".into()));
    }
    if m > n {
        return Err(Error::Dimension(format!("M = {m} exceeds N = {n}")));
    }
    let mut a = CMatrix::zeros(n, m);
    for (j, r) in scene.ris.iter().enumerate() {
        let phi = angles_between(&scene.bs_position, &r.position)?;
        a.set_column(j, &steering_upa(&phi, &scene.bs_layout));
    }
    let sv = a.clone().singular_values();
    let smax = sv.max();
    let smin = sv.min();
    let tol = T::lit(n as f64) * T::eps() * smax;
    if smin <= tol {
        let (first, second) = most_collinear_pair(&a);
        return Err(Error::RankDeficient {
            first,
            second,
            ratio: (smin / smax).as_f64(),
        });
    }
    Ok(a)
}

fn most_collinear_pair<T: Real>(a: &CMatrix<T>) -> (usize, usize) {
    let mut best = (0, 1.min(a.ncols().saturating_sub(1)));
    let mut best_c = -T::one();
    for i in 0..a.ncols() {
        for j in i + 1..a.ncols() {
            let c = a.column(i).dotc(&a.column(j)).modulus() / (a.column(i).norm() * a.column(j).norm());
            if c > best_c {
                best_c = c;
                best = (i, j);
            }
        }
    }
    best
}

/// Minimum-norm ZF combiners `W = A (A^H A)^{-1}`, so that `A^H W = I`.
pub fn zf_weights<T: Real>(a: &CMatrix<T>) -> Result<CMatrix<T>> {
    let gram = a.adjoint() * a;
    let chol = crate::scalar::hermitian_cholesky(&gram)
        .ok_or_else(|| Error::DegenerateGeometry("A^H A is singular".into()))?;
    let inv = chol.inverse();
    Ok(a * inv)
}

/// Apply the combiners: `z_m[t] = w_m^H y_t` for every RIS.
pub fn separate<T: Real>(
    record: &SoundingRecord<T>,
    w: &CMatrix<T>,
    noise_var: T,
) -> Result<Vec<SeparatedObservation<T>>> {
    if w.nrows() != record.y.nrows() {
        return Err(Error::Dimension(format!(
            "combiner has {} rows, observations have {}",
            w.nrows(),
            record.y.nrows()
        )));
    }
    let zmat = w.adjoint() * &record.y; // M x T
    Ok((0..w.ncols())
        .map(|m| {
            let w_norm = w.column(m).norm();
            SeparatedObservation {
                z: zmat.row(m).transpose(),
                ris_index: m,
                noise_scale: noise_var * w_norm * w_norm,
                w_norm,
            }
        })
        .collect())
}

/// Combiner norms and their spread.
#[derive(Debug, Clone, PartialEq)]
pub struct BalanceReport<T: Real> {
    pub norms: Vec<T>,
    /// `max ||w_m|| / min ||w_m||`.
    pub ratio: T,
}

impl<T: Real> BalanceReport<T> {
    pub fn exceeds(&self, threshold: T) -> bool {
        self.ratio > threshold
    }
}

pub fn balance_report<T: Real>(w: &CMatrix<T>) -> BalanceReport<T> {
    let norms: Vec<T> = (0..w.ncols()).map(|m| w.column(m).norm()).collect();
    let hi = norms.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let lo = norms.iter().copied().fold(T::max_value().unwrap(), |a, b| a.min(b));
    BalanceReport { norms, ratio: hi / lo }
}

/// Largest entry-wise deviation of `A^H W` from the identity.
pub fn zf_residual<T: Real>(a: &CMatrix<T>, w: &CMatrix<T>) -> T {
    let p = a.adjoint() * w;
    let eye: DMatrix<T> = DMatrix::identity(p.nrows(), p.ncols());
    p.iter().zip(eye.iter()).fold(T::zero(), |acc, (x, e)| {
        acc.max((x - num_complex::Complex::new(*e, T::zero())).modulus())
    })
}
