//! RIS angle-of-arrival estimation from an ANM solution.
//!
//! The recovered vector `h ≈ l (a(aod) ∘ a(aoa))` is separable:
//! `h = v_first ⊗ v_second`. Each factor is the element-wise product of an
//! AoD and an AoA axis response; dividing out the known AoD leaves a single
//! tone per axis, whose direction cosine is found with root-MUSIC on the
//! rank-1 axis covariance.

use nalgebra::{ComplexField, SymmetricEigen};
use num_complex::Complex;

use crate::anm::AnmSolution;
use crate::error::{Error, Result};
use crate::geometry::{gamma_components, steering_axis, AnglePair, ArrayPlane, FacingSide, UpaLayout};
use crate::scalar::{cis, CMatrix, CVector, Real};

/// Array axis of a UPA, in Kronecker order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    First,
    Second,
}

/// Hermitian covariance of one axis response.
#[derive(Debug, Clone)]
pub struct AxisCovariance<T: Real> {
    pub r: CMatrix<T>,
    pub axis: Axis,
}

impl<T: Real> AxisCovariance<T> {
    /// Rank-1 covariance `v v^H`.
    pub fn from_vector(v: &CVector<T>, axis: Axis) -> Self {
        Self {
            r: v * v.adjoint(),
            axis,
        }
    }
}

/// Estimated RIS angle of arrival with diagnostics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoaEstimate<T: Real> {
    pub angles: AnglePair<T>,
    pub gammas: (T, T),
    pub side: FacingSide,
    /// Smallest signal-to-next eigenvalue ratio over both axes.
    pub quality: T,
    pub low_confidence: bool,
}

/// Output of [`root_music_single`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootMusic<T: Real> {
    /// Direction cosine in (-1, 1].
    pub gamma: T,
    /// Largest over second-largest eigenvalue of the covariance.
    pub eigen_ratio: T,
    pub low_confidence: bool,
}

/// Nearest separable factorization `h ≈ v_first ⊗ v_second`.
///
/// `v_first[0]` is made real and non-negative; its phase is moved to
/// `v_second`.
pub fn kron_factorize<T: Real>(h: &CVector<T>, layout: (usize, usize)) -> Result<(CVector<T>, CVector<T>)> {
    let (la, lz) = layout;
    if h.len() != la * lz {
        return Err(Error::Dimension(format!(
            "vector of length {} does not reshape to {la}x{lz}",
            h.len()
        )));
    }
    let norm = h.norm();
    if !(norm > T::zero()) || !norm.is_finite() {
        return Err(Error::NoSignal("recovered channel vector is zero".into()));
    }
    // column ia of H holds the second-axis response at first-axis element ia
    let hm = CMatrix::from_fn(lz, la, |iz, ia| h[ia * lz + iz]);
    let svd = hm.svd(true, true);
    let (k, s0) = svd
        .singular_values
        .iter()
        .copied()
        .enumerate()
        .fold((0, -T::one()), |best, (i, s)| if s > best.1 { (i, s) } else { best });
    let u = svd.u.as_ref().expect("requested U").column(k).into_owned();
    let vt = svd.v_t.as_ref().expect("requested V^T").row(k).transpose();
    // H ≈ s0 u v^H with v^H = vt^T, so h[ia*lz+iz] = s0 u[iz] vt[ia]
    let mut v_first = vt;
    let mut v_second = u * Complex::new(s0, T::zero());
    let ph = v_first[0].argument();
    v_first *= cis(-ph);
    v_second *= cis(ph);
    Ok((v_first, v_second))
}

/// Element-wise division by the known AoD axis response.
pub fn remove_aod<T: Real>(v: &CVector<T>, aod_axis_response: &CVector<T>) -> Result<CVector<T>> {
    if v.len() != aod_axis_response.len() {
        return Err(Error::Dimension("AoD response length mismatch".into()));
    }
    Ok(v.component_div(aod_axis_response))
}

/// Coefficients `c_k = sum_{n-m=k} C[m, n]`, `k = -(K-1)..=(K-1)`, stored at
/// index `k + K - 1`.
fn diagonal_sums<T: Real>(c: &CMatrix<T>) -> Vec<Complex<T>> {
    let k = c.nrows();
    let mut out = vec![Complex::new(T::zero(), T::zero()); 2 * k - 1];
    for m in 0..k {
        for n in 0..k {
            out[n + k - 1 - m] += c[(m, n)];
        }
    }
    out
}

/// `a(theta)^H C a(theta)` with `a = [1, e^{j theta}, ...]`, plus its first
/// and second derivative in `theta`.
fn null_spectrum<T: Real>(coef: &[Complex<T>], theta: T) -> (T, T, T) {
    let k = coef.len().div_ceil(2);
    let (mut f, mut d1, mut d2) = (T::zero(), T::zero(), T::zero());
    for (i, c) in coef.iter().enumerate() {
        let lag = T::lit(i as f64 - (k as f64 - 1.0));
        let e = *c * cis(lag * theta);
        f += e.re;
        d1 -= lag * e.im;
        d2 -= lag * lag * e.re;
    }
    (f, d1, d2)
}

fn polynomial_roots<T: Real>(coef_low_to_high: &[Complex<T>]) -> Vec<Complex<T>> {
    let mut c: Vec<Complex<T>> = coef_low_to_high.to_vec();
    let scale = c.iter().fold(T::zero(), |a, z| a.max(z.modulus()));
    while c.len() > 1 && c.last().is_some_and(|z| z.modulus() <= T::lit(1e-14) * scale) {
        c.pop();
    }
    let deg = c.len() - 1;
    if deg == 0 {
        return vec![];
    }
    let lead = c[deg];
    let mut comp = CMatrix::<T>::zeros(deg, deg);
    for j in 0..deg {
        comp[(0, j)] = -c[deg - 1 - j] / lead;
    }
    for i in 1..deg {
        comp[(i, i - 1)] = Complex::new(T::one(), T::zero());
    }
    let schur = nalgebra::Schur::new(comp);
    let (_, t) = schur.unpack();
    (0..deg).map(|i| t[(i, i)]).collect()
}

/// Single-source root-MUSIC on a `K x K` covariance.
///
/// The noise subspace is spanned by the `K - 1` weakest eigenvectors. Among
/// the polynomial roots on or inside the unit circle the one nearest the
/// circle is kept (ties broken by the larger `a^H R a`), and its angle is
/// then polished by Newton steps on the null spectrum, which recovers full
/// precision when the root is the double root of an exact rank-1 model.
pub fn root_music_single<T: Real>(cov: &AxisCovariance<T>) -> Result<RootMusic<T>> {
    let r = &cov.r;
    let k = r.nrows();
    if k < 2 || r.ncols() != k {
        return Err(Error::InvalidInput(format!(
            "root-MUSIC needs a square K >= 2 covariance, got {}x{}",
            r.nrows(),
            r.ncols()
        )));
    }
    let eig = SymmetricEigen::new(r.clone());
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let l1 = eig.eigenvalues[order[0]];
    let l2 = eig.eigenvalues[order[1]].max(T::zero());
    if !(l1 > T::zero()) {
        return Err(Error::NoSignal("covariance has no positive eigenvalue".into()));
    }
    let eigen_ratio = if l2 > T::zero() {
        l1 / l2
    } else {
        T::max_value().unwrap()
    };
    let low_confidence = eigen_ratio < T::one() + T::lit(1e-6);

    let mut c = CMatrix::<T>::zeros(k, k);
    for &idx in order.iter().skip(1) {
        let e = eig.eigenvectors.column(idx);
        c += e * e.adjoint();
    }
    let coef = diagonal_sums(&c);
    let roots = polynomial_roots(&coef);

    let tol = T::lit(1e-9);
    let signal_power = |theta: T| {
        let a = CVector::from_fn(k, |i, _| cis(T::lit(i as f64) * theta));
        a.dotc(&(r * &a)).re
    };
    let mut best: Option<(T, T, T)> = None; // (distance to circle, power, theta)
    for z in roots.iter().filter(|z| z.modulus() <= T::one() + tol) {
        let dist = (T::one() - z.modulus()).abs();
        let theta = z.argument();
        let power = signal_power(theta);
        let better = match best {
            None => true,
            Some((d, p, _)) => {
                if (dist - d).abs() <= tol {
                    power > p
                } else {
                    dist < d
                }
            }
        };
        if better {
            best = Some((dist, power, theta));
        }
    }
    let mut theta = match best {
        Some((_, _, th)) => th,
        // all roots outside (should not happen for a Hermitian PSD model): fall back to the peak
        None => roots
            .iter()
            .min_by(|a, b| {
                (a.modulus() - T::one())
                    .abs()
                    .partial_cmp(&(b.modulus() - T::one()).abs())
                    .unwrap()
            })
            .map(|z| z.argument())
            .unwrap_or(T::zero()),
    };

    // Newton polish on f(theta) = a^H C a
    let (mut f, _, _) = null_spectrum(&coef, theta);
    for _ in 0..20 {
        let (_, d1, d2) = null_spectrum(&coef, theta);
        if !(d2 > T::zero()) {
            break;
        }
        let cand = theta - d1 / d2;
        let (fc, _, _) = null_spectrum(&coef, cand);
        if fc <= f && (cand - theta).abs() < T::lit(0.5) {
            let done = (cand - theta).abs() <= T::lit(1e-15);
            theta = cand;
            f = fc;
            if done {
                break;
            }
        } else {
            break;
        }
    }
    let theta = crate::scalar::wrap_angle(theta);
    Ok(RootMusic {
        gamma: theta / T::pi(),
        eigen_ratio,
        low_confidence,
    })
}

/// Invert the direction cosines of an array parallel to `plane`, picking the
/// branch whose normal component points into `side`.
pub fn gammas_to_angles<T: Real>(ga: T, gb: T, plane: ArrayPlane, side: FacingSide) -> Result<AnglePair<T>> {
    let tol = T::lit(1e-6);
    if !(ga.abs() <= T::one() + tol) || !(gb.abs() <= T::one() + tol) {
        return Err(Error::InvalidInput(format!(
            "direction cosines ({}, {}) outside [-1, 1]",
            ga.as_f64(),
            gb.as_f64()
        )));
    }
    let r2 = ga * ga + gb * gb;
    if r2 > T::one() + tol {
        return Err(Error::InvalidInput(format!(
            "inconsistent direction cosines: ga^2 + gb^2 = {}",
            r2.as_f64()
        )));
    }
    let normal = side.sign::<T>() * (T::one() - r2).max(T::zero()).sqrt();
    let mut d = nalgebra::Vector3::zeros();
    let (a, b) = plane.in_plane_axes();
    d[a] = ga;
    d[b] = gb;
    d[plane.normal_axis()] = normal;
    if d[0] == T::zero() && d[1] == T::zero() {
        return Err(Error::ZenithSingularity);
    }
    AnglePair::from_direction(&d)
}

/// Scale `(ga, gb)` back onto the unit disk if noise pushed it outside.
pub fn clamp_gammas<T: Real>(ga: T, gb: T) -> (T, T) {
    let r = (ga * ga + gb * gb).sqrt();
    if r > T::one() {
        (ga / r, gb / r)
    } else {
        (ga, gb)
    }
}

/// Full chain: factorize, strip the AoD, root-MUSIC per axis, invert.
pub fn estimate_aoa<T: Real>(
    anm: &AnmSolution<T>,
    known_aod: &AnglePair<T>,
    layout: &UpaLayout,
    side: FacingSide,
) -> Result<AoaEstimate<T>> {
    estimate_aoa_from_vector(&anm.h_hat, known_aod, layout, side)
}

/// As [`estimate_aoa`] starting from the recovered vector itself.
pub fn estimate_aoa_from_vector<T: Real>(
    h_hat: &CVector<T>,
    known_aod: &AnglePair<T>,
    layout: &UpaLayout,
    side: FacingSide,
) -> Result<AoaEstimate<T>> {
    let (v_first, v_second) = kron_factorize(h_hat, (layout.n_first, layout.n_second))?;
    let (ga_aod, gb_aod) = gamma_components(known_aod, layout.plane);
    let u_first = remove_aod(&v_first, &steering_axis(ga_aod, layout.n_first)?)?;
    let u_second = remove_aod(&v_second, &steering_axis(gb_aod, layout.n_second)?)?;
    let ra = root_music_single(&AxisCovariance::from_vector(&u_first, Axis::First))?;
    let rb = root_music_single(&AxisCovariance::from_vector(&u_second, Axis::Second))?;
    let (ga, gb) = clamp_gammas(ra.gamma, rb.gamma);
    let angles = gammas_to_angles(ga, gb, layout.plane, side)?;
    Ok(AoaEstimate {
        angles,
        gammas: (ga, gb),
        side,
        quality: ra.eigen_ratio.min(rb.eigen_ratio),
        low_confidence: ra.low_confidence || rb.low_confidence,
    })
}
