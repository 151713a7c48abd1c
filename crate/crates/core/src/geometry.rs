//! Positions, angle conventions, UPA steering vectors and the per-RIS
//! end-to-end channel.
//!
//! Angles use a single convention everywhere: azimuth in (-pi, pi] measured
//! from +x towards +y, elevation in [0, pi] measured as the polar angle from
//! +z. The unit propagation direction is therefore
//! `[cos(az) sin(el), sin(az) sin(el), cos(el)]`, and the in-plane direction
//! cosines of a planar array are simply two components of that vector.
//!
//! Element ordering of a UPA follows the Kronecker order
//! `axis_first ⊗ axis_second`: element `(i, k)` sits at flat index
//! `i * n_second + k`.

use nalgebra::{ComplexField, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{cis, kron, CVector, Real};

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// A point in the global Cartesian frame, in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position3<T: Real> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Position3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self { x, y, z }
    }

    pub fn origin() -> Self {
        Self::new(T::zero(), T::zero(), T::zero())
    }

    pub fn from_vector(v: &Vector3<T>) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    pub fn to_vector(&self) -> Vector3<T> {
        Vector3::new(self.x, self.y, self.z)
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn distance(&self, other: &Self) -> T {
        (other.to_vector() - self.to_vector()).norm()
    }

    pub fn translated(&self, v: &Vector3<T>) -> Self {
        Self::from_vector(&(self.to_vector() + v))
    }
}

/// Azimuth / polar-elevation pair, radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnglePair<T: Real> {
    pub azimuth: T,
    pub elevation: T,
}

impl<T: Real> AnglePair<T> {
    pub fn new(azimuth: T, elevation: T) -> Self {
        Self { azimuth, elevation }
    }

    /// Unit propagation direction for this angle pair.
    pub fn direction(&self) -> Vector3<T> {
        let (sa, ca) = self.azimuth.sin_cos();
        let (se, ce) = self.elevation.sin_cos();
        Vector3::new(ca * se, sa * se, ce)
    }

    /// Angle pair of a (not necessarily normalized) direction vector.
    pub fn from_direction(d: &Vector3<T>) -> Result<Self> {
        let r = d.norm();
        if !(r > T::zero()) || !r.is_finite() {
            return Err(Error::DegenerateGeometry("zero-length direction has no angles".into()));
        }
        let cz = (d[2] / r).clamp(-T::one(), T::one());
        Ok(Self::new(d[1].atan2(d[0]), cz.acos()))
    }

    /// Euclidean distance in (az, el) with the azimuth difference wrapped.
    pub fn distance(&self, other: &Self) -> T {
        let daz = crate::scalar::wrap_angle(self.azimuth - other.azimuth);
        let del = self.elevation - other.elevation;
        (daz * daz + del * del).sqrt()
    }
}

/// Reference plane a UPA is parallel to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArrayPlane {
    Xy,
    Xz,
    Yz,
}

impl ArrayPlane {
    /// Global axes spanned by the array, in Kronecker order.
    pub fn in_plane_axes(self) -> (usize, usize) {
        match self {
            ArrayPlane::Xy => (0, 1),
            ArrayPlane::Xz => (0, 2),
            ArrayPlane::Yz => (1, 2),
        }
    }

    /// Global axis normal to the array.
    pub fn normal_axis(self) -> usize {
        match self {
            ArrayPlane::Xy => 2,
            ArrayPlane::Xz => 1,
            ArrayPlane::Yz => 0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ArrayPlane::Xy => "xy",
            ArrayPlane::Xz => "xz",
            ArrayPlane::Yz => "yz",
        }
    }
}

/// Half-space on one side of an array plane, along its normal axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FacingSide {
    Positive,
    Negative,
}

impl FacingSide {
    pub fn sign<T: Real>(self) -> T {
        match self {
            FacingSide::Positive => T::one(),
            FacingSide::Negative => -T::one(),
        }
    }

    /// Side of `plane` through `origin` on which `point` lies, if not on it.
    pub fn of_point<T: Real>(plane: ArrayPlane, origin: &Position3<T>, point: &Position3<T>) -> Option<Self> {
        let d = point.to_vector() - origin.to_vector();
        let n = d[plane.normal_axis()];
        if n > T::zero() {
            Some(FacingSide::Positive)
        } else if n < T::zero() {
            Some(FacingSide::Negative)
        } else {
            None
        }
    }
}

/// Uniform planar array with half-wavelength spacing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpaLayout {
    pub plane: ArrayPlane,
    /// Elements along the first in-plane axis.
    pub n_first: usize,
    /// Elements along the second in-plane axis.
    pub n_second: usize,
}

impl UpaLayout {
    pub fn new(plane: ArrayPlane, n_first: usize, n_second: usize) -> Result<Self> {
        if n_first == 0 || n_second == 0 {
            return Err(Error::InvalidInput(format!(
                "UPA needs at least one element per axis, got {n_first}x{n_second}"
            )));
        }
        Ok(Self {
            plane,
            n_first,
            n_second,
        })
    }

    pub fn len(&self) -> usize {
        self.n_first * self.n_second
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Carrier, transmit power and noise level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadioParams<T: Real> {
    pub carrier_hz: T,
    pub wavelength_m: T,
    /// Transmit power, linear watts.
    pub tx_power: T,
    /// Per-antenna noise variance, linear watts.
    pub noise_var: T,
}

impl<T: Real> RadioParams<T> {
    pub fn new(carrier_hz: T, tx_power: T, noise_var: T) -> Result<Self> {
        if !(carrier_hz > T::zero()) {
            return Err(Error::InvalidInput("carrier frequency must be positive".into()));
        }
        if !(tx_power > T::zero()) {
            return Err(Error::InvalidInput("transmit power must be positive".into()));
        }
        if !(noise_var >= T::zero()) {
            return Err(Error::InvalidInput("noise variance must be non-negative".into()));
        }
        Ok(Self {
            carrier_hz,
            wavelength_m: T::lit(SPEED_OF_LIGHT) / carrier_hz,
            tx_power,
            noise_var,
        })
    }

    pub fn with_tx_power(mut self, tx_power: T) -> Self {
        self.tx_power = tx_power;
        self
    }

    pub fn with_noise_var(mut self, noise_var: T) -> Self {
        self.noise_var = noise_var;
        self
    }
}

/// Gain of one UE → RIS → BS path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathGain<T: Real> {
    /// `sqrt(g_ur * g_rb)`.
    pub magnitude: T,
    /// Carrier phase `2 pi f_c tau`, wrapped to (-pi, pi].
    pub phase: T,
    /// Total propagation delay UE → RIS → BS, seconds.
    pub delay: T,
    pub d_ur: T,
    pub d_rb: T,
    pub g_ur: T,
    pub g_rb: T,
}

impl<T: Real> PathGain<T> {
    pub fn from_distances(d_ur: T, d_rb: T, radio: &RadioParams<T>) -> Result<Self> {
        let g_ur = pathloss(d_ur, radio.wavelength_m)?;
        let g_rb = pathloss(d_rb, radio.wavelength_m)?;
        let delay = (d_ur + d_rb) / T::lit(SPEED_OF_LIGHT);
        // phase = 2 pi (d_ur + d_rb) / lambda, reduced before scaling to keep precision
        let cycles = (d_ur + d_rb) / radio.wavelength_m;
        let frac = cycles - cycles.floor();
        let phase = crate::scalar::wrap_angle(T::two_pi() * frac);
        Ok(Self {
            magnitude: (g_ur * g_rb).sqrt(),
            phase,
            delay,
            d_ur,
            d_rb,
            g_ur,
            g_rb,
        })
    }

    /// Complex path coefficient `magnitude * exp(j phase)`.
    pub fn coefficient(&self) -> num_complex::Complex<T> {
        cis(self.phase) * self.magnitude
    }
}

/// In-plane direction cosines `(gamma_first, gamma_second)` of `angles` for
/// an array parallel to `plane`.
pub fn gamma_components<T: Real>(angles: &AnglePair<T>, plane: ArrayPlane) -> (T, T) {
    let d = angles.direction();
    let (a, b) = plane.in_plane_axes();
    (d[a], d[b])
}

/// Partial derivatives of the direction cosines with respect to
/// `(azimuth, elevation)`: `[[dga/daz, dga/del], [dgb/daz, dgb/del]]`.
pub fn gamma_partials<T: Real>(angles: &AnglePair<T>, plane: ArrayPlane) -> [[T; 2]; 2] {
    let (sa, ca) = angles.azimuth.sin_cos();
    let (se, ce) = angles.elevation.sin_cos();
    // rows: d/daz and d/del of the direction vector components
    let d_az = [-sa * se, ca * se, T::zero()];
    let d_el = [ca * ce, sa * ce, -se];
    let (a, b) = plane.in_plane_axes();
    [[d_az[a], d_el[a]], [d_az[b], d_el[b]]]
}

/// Half-wavelength ULA response `[1, e^{j pi gamma}, ..., e^{j pi (n-1) gamma}]`.
pub fn steering_axis<T: Real>(gamma: T, n: usize) -> Result<CVector<T>> {
    if n == 0 {
        return Err(Error::InvalidInput("axis needs at least one element".into()));
    }
    if !gamma.is_finite() || gamma.abs() > T::one() + T::lit(1e-9) {
        return Err(Error::InvalidInput(format!(
            "direction cosine {} outside [-1, 1]",
            gamma.as_f64()
        )));
    }
    Ok(steering_axis_unchecked(gamma, n))
}

pub(crate) fn steering_axis_unchecked<T: Real>(gamma: T, n: usize) -> CVector<T> {
    CVector::from_fn(n, |k, _| cis(T::pi() * gamma * T::lit(k as f64)))
}

/// UPA response `steering_axis(ga, n_first) ⊗ steering_axis(gb, n_second)`.
pub fn steering_upa<T: Real>(angles: &AnglePair<T>, layout: &UpaLayout) -> CVector<T> {
    let (ga, gb) = gamma_components(angles, layout.plane);
    steering_from_gammas(ga, gb, layout)
}

/// UPA response for given direction cosines.
pub fn steering_from_gammas<T: Real>(ga: T, gb: T, layout: &UpaLayout) -> CVector<T> {
    kron(
        &steering_axis_unchecked(ga, layout.n_first),
        &steering_axis_unchecked(gb, layout.n_second),
    )
}

/// Angles of the direction pointing from `from` towards `to`.
pub fn angles_between<T: Real>(from: &Position3<T>, to: &Position3<T>) -> Result<AnglePair<T>> {
    let d = to.to_vector() - from.to_vector();
    if d.norm() == T::zero() {
        return Err(Error::DegenerateGeometry("coincident points have no bearing".into()));
    }
    AnglePair::from_direction(&d)
}

/// Free-space pathloss `lambda^2 / (4 pi d)^2`.
pub fn pathloss<T: Real>(d: T, wavelength: T) -> Result<T> {
    if !(d > T::zero()) || !d.is_finite() {
        return Err(Error::InvalidInput(format!(
            "pathloss needs a positive distance, got {}",
            d.as_f64()
        )));
    }
    let x = wavelength / (T::lit(4.0) * T::pi() * d);
    Ok(x * x)
}

/// End-to-end channel of one RIS path for a single reflection profile:
/// `l * a_bs(bs_aoa) * [a_ris(aod)^T diag(omega) a_ris(aoa)]`.
pub fn e2e_channel<T: Real>(
    gain: &PathGain<T>,
    bs_aoa: &AnglePair<T>,
    ris_aod: &AnglePair<T>,
    ris_aoa: &AnglePair<T>,
    omega: &CVector<T>,
    bs_layout: &UpaLayout,
    ris_layout: &UpaLayout,
) -> Result<CVector<T>> {
    if omega.len() != ris_layout.len() {
        return Err(Error::Dimension(format!(
            "profile has {} entries, RIS has {} elements",
            omega.len(),
            ris_layout.len()
        )));
    }
    let tol = T::lit(1e-9);
    if omega.iter().any(|w| (w.modulus() - T::one()).abs() > tol) {
        return Err(Error::InvalidInput("RIS profile entries must be unit-modulus".into()));
    }
    let aod = steering_upa(ris_aod, ris_layout);
    let aoa = steering_upa(ris_aoa, ris_layout);
    let inner = aod
        .iter()
        .zip(omega.iter())
        .zip(aoa.iter())
        .fold(num_complex::Complex::new(T::zero(), T::zero()), |acc, ((a, w), b)| {
            acc + a * w * b
        });
    Ok(steering_upa(bs_aoa, bs_layout) * (gain.coefficient() * inner))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::CMatrix;
    use num_complex::Complex64;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_4, PI};

    fn close(a: Complex64, b: Complex64) -> bool {
        (a - b).norm() < 1e-12
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn gamma_examples() {
        let (ga, gz) = gamma_components(&AnglePair::new(0.0, FRAC_PI_2), ArrayPlane::Xz);
        assert!((ga - 1.0).abs() < 1e-15 && gz.abs() < 1e-15);
        for plane in [ArrayPlane::Xz, ArrayPlane::Yz] {
            let (ga, gz) = gamma_components(&AnglePair::new(1.234, 0.0), plane);
            assert!(ga.abs() < 1e-15 && (gz - 1.0).abs() < 1e-15);
        }
        let (ga, gz) = gamma_components(&AnglePair::new(FRAC_PI_3, FRAC_PI_4), ArrayPlane::Yz);
        assert!((ga - FRAC_PI_3.sin() * FRAC_PI_4.sin()).abs() < 1e-15);
        assert!((ga - 0.6124).abs() < 1e-4);
        assert!((gz - 0.7071).abs() < 1e-4);
    }

    #[test]
    fn gamma_partials_match_finite_differences() {
        let a = AnglePair::new(0.7, 1.1);
        let h = 1e-6;
        for plane in [ArrayPlane::Xy, ArrayPlane::Xz, ArrayPlane::Yz] {
            let p = gamma_partials(&a, plane);
            let fd = |da: f64, de: f64| {
                let plus = gamma_components(&AnglePair::new(a.azimuth + da, a.elevation + de), plane);
                let minus = gamma_components(&AnglePair::new(a.azimuth - da, a.elevation - de), plane);
                ((plus.0 - minus.0) / (2.0 * h), (plus.1 - minus.1) / (2.0 * h))
            };
            let (gaz_a, gaz_b) = fd(h, 0.0);
            let (gel_a, gel_b) = fd(0.0, h);
            assert!((p[0][0] - gaz_a).abs() < 1e-8);
            assert!((p[0][1] - gel_a).abs() < 1e-8);
            assert!((p[1][0] - gaz_b).abs() < 1e-8);
            assert!((p[1][1] - gel_b).abs() < 1e-8);
        }
    }

    #[test]
    fn steering_axis_examples() {
        let v = steering_axis(0.0f64, 4).unwrap();
        assert!(v.iter().all(|z| close(*z, Complex64::new(1.0, 0.0))));
        let v = steering_axis(1.0f64, 2).unwrap();
        assert!(close(v[0], Complex64::new(1.0, 0.0)) && close(v[1], Complex64::new(-1.0, 0.0)));
        let v = steering_axis(0.5f64, 3).unwrap();
        assert!(close(v[1], Complex64::new(0.0, 1.0)) && close(v[2], Complex64::new(-1.0, 0.0)));
        assert!(steering_axis(1.01f64, 3).is_err());
        assert!(steering_axis(0.0f64, 0).is_err());
    }

    #[test]
    fn steering_upa_examples() {
        let l22 = UpaLayout::new(ArrayPlane::Xz, 2, 2).unwrap();
        // boresight of an xz array: direction along +y
        let v = steering_upa(&AnglePair::new(FRAC_PI_2, FRAC_PI_2), &l22);
        assert!(v.iter().all(|z| close(*z, Complex64::new(1.0, 0.0))));

        let v = steering_from_gammas(1.0, 0.5, &l22);
        let want = [
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 1.0),
            Complex64::new(-1.0, 0.0),
            Complex64::new(0.0, -1.0),
        ];
        for (g, w) in v.iter().zip(want) {
            assert!(close(*g, w));
        }

        let l44 = UpaLayout::new(ArrayPlane::Yz, 4, 4).unwrap();
        let v = steering_upa(&AnglePair::new(-2.2, 0.4), &l44);
        assert!((v.norm_squared() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn steering_f32_instantiation() {
        let l = UpaLayout::new(ArrayPlane::Xz, 3, 2).unwrap();
        let v = steering_upa(&AnglePair::new(0.3f32, 1.2f32), &l);
        assert_eq!(v.len(), 6);
        assert!((v.norm_squared() - 6.0).abs() < 1e-5);
    }

    #[test]
    fn elementwise_division_identity() {
        // (a(phi)∘a(theta))(a(phi)∘a(theta))^H ⊘ a(phi)a(phi)^H == a(theta)a(theta)^H
        let phi = steering_axis(0.37f64, 5).unwrap();
        let theta = steering_axis(-0.81f64, 5).unwrap();
        let prod = phi.component_mul(&theta);
        let lhs: CMatrix<f64> = (&prod * prod.adjoint()).component_div(&(&phi * phi.adjoint()));
        let rhs = &theta * theta.adjoint();
        let rel = (&lhs - &rhs).norm() / rhs.norm();
        assert!(rel < 1e-12);
    }

    #[test]
    fn angles_between_examples() {
        let o = Position3::origin();
        let a = angles_between(&o, &Position3::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(a.azimuth, 0.0);
        assert!(a.elevation.abs() < 1e-15);
        let a = angles_between(&o, &Position3::new(1.0, 0.0, 0.0)).unwrap();
        assert!(a.azimuth.abs() < 1e-15 && (a.elevation - FRAC_PI_2).abs() < 1e-15);

        let ris = Position3::new(0.5, 1.5, 2.9);
        let a = angles_between(&ris, &o).unwrap();
        let n = (0.25f64 + 2.25 + 8.41).sqrt();
        assert!((a.elevation - (-2.9 / n).acos()).abs() < 1e-14);
        assert!((a.azimuth - (-1.5f64).atan2(-0.5)).abs() < 1e-14);
        assert!(angles_between(&ris, &ris).is_err());
    }

    #[test]
    fn direction_roundtrip() {
        for k in 0..200 {
            let az = -PI + 0.0313 * k as f64 + 0.01;
            let el = 0.001 + (k as f64 * 0.0157) % (PI - 0.002);
            let a = AnglePair::new(az, el);
            let d = a.direction();
            assert!((d.norm() - 1.0).abs() < 1e-14);
            let back = AnglePair::from_direction(&d).unwrap();
            assert!((back.direction() - d).norm() < 1e-12);
        }
    }

    #[test]
    fn pathloss_examples() {
        let lambda = SPEED_OF_LIGHT / 28e9;
        assert!((pathloss(lambda / (4.0 * PI), lambda).unwrap() - 1.0).abs() < 1e-14);
        let p1 = pathloss(3.0, lambda).unwrap();
        let p2 = pathloss(6.0, lambda).unwrap();
        assert!((p1 / p2 - 4.0).abs() < 1e-12);
        let want = (lambda / (4.0 * PI * 3.0)).powi(2);
        assert!((p1 - want).abs() < 1e-20);
        assert!((p1 - 8.07e-8).abs() / 8.07e-8 < 5e-3);
        assert!((pathloss(3.0, 2.0 * lambda).unwrap() / p1 - 4.0).abs() < 1e-12);
        assert!(pathloss(0.0, lambda).is_err());
        assert!(pathloss(-1.0, lambda).is_err());
    }

    #[test]
    fn pathloss_strictly_decreasing() {
        let lambda = 0.01;
        let mut prev = f64::INFINITY;
        for k in 1..100 {
            let g = pathloss(0.05 * k as f64, lambda).unwrap();
            assert!(g < prev);
            prev = g;
        }
    }

    fn sample_path() -> (PathGain<f64>, AnglePair<f64>, AnglePair<f64>, AnglePair<f64>) {
        let radio = RadioParams::new(28e9, 1e-3, 1e-14).unwrap();
        let gain = PathGain::from_distances(3.0, 1.2, &radio).unwrap();
        (
            gain,
            AnglePair::new(-2.4, 1.8),
            AnglePair::new(0.4, 1.3),
            AnglePair::new(-1.1, 2.6),
        )
    }

    #[test]
    fn e2e_coherent_combining_and_bound() {
        let (gain, bs, aod, aoa) = sample_path();
        let bs_l = UpaLayout::new(ArrayPlane::Xy, 3, 3).unwrap();
        let ris_l = UpaLayout::new(ArrayPlane::Xz, 4, 4).unwrap();
        let c = steering_upa(&aod, &ris_l).component_mul(&steering_upa(&aoa, &ris_l));
        let omega = c.map(|z| z.conj());
        let h = e2e_channel(&gain, &bs, &aod, &aoa, &omega, &bs_l, &ris_l).unwrap();
        let a_bs = steering_upa(&bs, &bs_l);
        let inner = a_bs.dotc(&h) / (gain.coefficient() * 9.0);
        assert!((inner - Complex64::new(16.0, 0.0)).norm() < 1e-10);

        for k in 0..20 {
            let omega = CVector::from_fn(16, |i, _| cis(0.37 * (i * i + k) as f64));
            let h = e2e_channel(&gain, &bs, &aod, &aoa, &omega, &bs_l, &ris_l).unwrap();
            let inner = a_bs.dotc(&h) / (gain.coefficient() * 9.0);
            assert!(inner.norm() <= 16.0 + 1e-10);
        }

        let bad = CVector::from_element(16, Complex64::new(0.5, 0.0));
        assert!(e2e_channel(&gain, &bs, &aod, &aoa, &bad, &bs_l, &ris_l).is_err());
    }

    #[test]
    fn path_gain_phase_wrapped() {
        let radio = RadioParams::new(28e9, 1.0, 1.0).unwrap();
        let g = PathGain::from_distances(2.7, 0.9, &radio).unwrap();
        assert!(g.phase > -PI && g.phase <= PI);
        let direct = (2.0 * PI * 28e9 * g.delay).sin();
        assert!((g.phase.sin() - direct).abs() < 1e-6);
        assert!((g.magnitude - (g.g_ur * g.g_rb).sqrt()).abs() < 1e-25);
    }

    #[test]
    fn facing_side() {
        let ris = Position3::new(0.5, 1.5, 2.9);
        let ue = Position3::origin();
        assert_eq!(
            FacingSide::of_point(ArrayPlane::Xz, &ris, &ue),
            Some(FacingSide::Negative)
        );
        assert_eq!(
            FacingSide::of_point(ArrayPlane::Yz, &ris, &ue),
            Some(FacingSide::Negative)
        );
        assert_eq!(
            FacingSide::of_point(ArrayPlane::Xz, &ris, &Position3::new(0.0, 1.5, 0.0)),
            None
        );
    }
}
