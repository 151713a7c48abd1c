//! Fisher information and position error bound.
//!
//! Per RIS the unknowns are `eta = [sqrt(g_UR), nu, azimuth, elevation]`;
//! the BS-side gain and angles follow from the known geometry. After zero
//! forcing, slot `t` of RIS `m` has mean
//! `mu_t = sqrt(P) sqrt(g_UR g_RB) e^{j nu} omega_t^T (a(aod) ∘ a(theta))`
//! and noise variance `rho ||w_m||^2`.

use nalgebra::{Matrix2, Matrix3, Matrix3x2, Matrix4, SymmetricEigen};
use num_complex::Complex;

use crate::error::{Error, Result};
use crate::geometry::{gamma_partials, steering_upa, AnglePair, Position3, RadioParams, UpaLayout};
use crate::scalar::{CMatrix, CVector, Real};
use crate::sounding::{derive_truth, PathTruth, ProfileSchedule, SceneConfig};
use crate::zf::{build_bs_response_matrix, zf_weights};

/// Unknown channel parameters of one RIS path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams<T: Real> {
    pub sqrt_g_ur: T,
    pub nu: T,
    pub aoa: AnglePair<T>,
}

impl<T: Real> ChannelParams<T> {
    pub fn from_truth(truth: &PathTruth<T>) -> Self {
        Self {
            sqrt_g_ur: truth.gain.g_ur.sqrt(),
            nu: truth.gain.phase,
            aoa: truth.ris_aoa,
        }
    }

    /// `[sqrt(g_UR), nu, azimuth, elevation]`.
    pub fn to_array(&self) -> [T; 4] {
        [self.sqrt_g_ur, self.nu, self.aoa.azimuth, self.aoa.elevation]
    }

    pub fn from_array(v: [T; 4]) -> Self {
        Self {
            sqrt_g_ur: v[0],
            nu: v[1],
            aoa: AnglePair::new(v[2], v[3]),
        }
    }
}

/// Known part of one path's observation model.
#[derive(Debug, Clone)]
pub struct PathModel<'a, T: Real> {
    pub layout: &'a UpaLayout,
    pub omega: &'a CMatrix<T>,
    pub aod: AnglePair<T>,
    pub sqrt_g_rb: T,
    pub sqrt_p: T,
}

impl<'a, T: Real> PathModel<'a, T> {
    pub fn new(truth: &PathTruth<T>, layout: &'a UpaLayout, schedule: &'a ProfileSchedule<T>, tx_power: T) -> Self {
        Self {
            layout,
            omega: &schedule.omega,
            aod: truth.ris_aod,
            sqrt_g_rb: truth.gain.g_rb.sqrt(),
            sqrt_p: tx_power.sqrt(),
        }
    }

    fn amplitude(&self, eta: &ChannelParams<T>) -> Complex<T> {
        crate::scalar::cis(eta.nu) * (self.sqrt_p * self.sqrt_g_rb * eta.sqrt_g_ur)
    }

    /// Mean `mu_t` for every slot.
    pub fn mean(&self, eta: &ChannelParams<T>) -> CVector<T> {
        let c = steering_upa(&self.aod, self.layout).component_mul(&steering_upa(&eta.aoa, self.layout));
        self.omega.transpose() * c * self.amplitude(eta)
    }

    /// `d mu / d eta_i` for the four unknowns, in `eta` order.
    pub fn derivatives(&self, eta: &ChannelParams<T>) -> [CVector<T>; 4] {
        let a_aod = steering_upa(&self.aod, self.layout);
        let a_aoa = steering_upa(&eta.aoa, self.layout);
        let c = a_aod.component_mul(&a_aoa);
        let amp = self.amplitude(eta);
        let base = self.omega.transpose() * &c;
        let d_gain = &base * (crate::scalar::cis(eta.nu) * (self.sqrt_p * self.sqrt_g_rb));
        let mean = &base * amp;
        let d_nu = &mean * Complex::new(T::zero(), T::one());
        // d a / d angle = j pi (i dga + k dgb) a for element (i, k)
        let p = gamma_partials(&eta.aoa, self.layout.plane);
        let ns = self.layout.n_second;
        let angle_derivative = |col: usize| {
            let dc = CVector::from_fn(c.len(), |idx, _| {
                let (i, k) = (T::lit((idx / ns) as f64), T::lit((idx % ns) as f64));
                let w = T::pi() * (i * p[0][col] + k * p[1][col]);
                c[idx] * Complex::new(T::zero(), w)
            });
            self.omega.transpose() * dc * amp
        };
        [d_gain, d_nu, angle_derivative(0), angle_derivative(1)]
    }

    /// `J = (2 / rho_m) sum_t Re{d mu^H d mu}`.
    pub fn fim(&self, eta: &ChannelParams<T>, post_noise_var: T) -> Result<Matrix4<T>> {
        if !(post_noise_var > T::zero()) {
            return Err(Error::InvalidInput(
                "Fisher information needs a positive noise variance".into(),
            ));
        }
        let d = self.derivatives(eta);
        let scale = T::lit(2.0) / post_noise_var;
        Ok(Matrix4::from_fn(|i, k| d[i].dotc(&d[k]).re * scale))
    }
}

/// Channel FIM of RIS path `truth` under schedule `schedule`, with ZF
/// combiner norm `w_norm`.
pub fn fim_channel<T: Real>(
    truth: &PathTruth<T>,
    layout: &UpaLayout,
    schedule: &ProfileSchedule<T>,
    radio: &RadioParams<T>,
    w_norm: T,
) -> Result<Matrix4<T>> {
    let model = PathModel::new(truth, layout, schedule, radio.tx_power);
    model.fim(&ChannelParams::from_truth(truth), radio.noise_var * w_norm * w_norm)
}

/// Equivalent angle FIM: Schur complement over `(sqrt(g_UR), nu)`, returned
/// in `(elevation, azimuth)` order.
pub fn efim_angles<T: Real>(j: &Matrix4<T>) -> Result<Matrix2<T>> {
    let jnn = j.fixed_view::<2, 2>(0, 0).into_owned();
    let jna = j.fixed_view::<2, 2>(0, 2).into_owned();
    let jaa = j.fixed_view::<2, 2>(2, 2).into_owned();
    let det = jnn.determinant();
    let scale = jnn[(0, 0)].abs() * jnn[(1, 1)].abs();
    if !(det > T::lit(1e-12) * scale) {
        return Err(Error::SingularFim("gain/phase block is singular".into()));
    }
    let inv = jnn
        .try_inverse()
        .ok_or_else(|| Error::SingularFim("gain/phase block is singular".into()))?;
    let e = jaa - jna.transpose() * inv * jna; // (az, el) order
    let e = (e + e.transpose()) * T::lit(0.5);
    Ok(Matrix2::new(e[(1, 1)], e[(1, 0)], e[(0, 1)], e[(0, 0)]))
}

/// `T_m = [d el / d p, d az / d p]` for the arrival angles at `p_ris` of a
/// UE at `p_ue`.
pub fn jacobian_position<T: Real>(p_ue: &Position3<T>, p_ris: &Position3<T>) -> Result<Matrix3x2<T>> {
    let d = p_ue.to_vector() - p_ris.to_vector();
    let r2 = d.norm_squared();
    if !(r2 > T::zero()) {
        return Err(Error::DegenerateGeometry("UE coincides with the RIS".into()));
    }
    let rho2 = d.x * d.x + d.y * d.y;
    let rho = rho2.sqrt();
    if !(rho > T::lit(1e-12) * r2.sqrt()) {
        return Err(Error::ZenithSingularity);
    }
    let el = [d.z * d.x / (r2 * rho), d.z * d.y / (r2 * rho), -rho / r2];
    let az = [-d.y / rho2, d.x / rho2, T::zero()];
    Ok(Matrix3x2::new(el[0], az[0], el[1], az[1], el[2], az[2]))
}

/// Bounds of one operating point.
#[derive(Debug, Clone, PartialEq)]
pub struct PebReport<T: Real> {
    pub channel_fims: Vec<Matrix4<T>>,
    /// `(elevation, azimuth)` equivalent FIMs.
    pub angle_efims: Vec<Matrix2<T>>,
    pub position_fim: Matrix3<T>,
    /// `sqrt(trace(J^-1))`, meters.
    pub peb: T,
    /// Square roots of the diagonal of `J^-1`.
    pub axis_bounds: [T; 3],
    /// Per-RIS `sqrt(trace(EFIM^-1))`, radians.
    pub angle_bounds: Vec<T>,
}

/// Position FIM and PEB of a scene at the true UE position.
pub fn fim_position<T: Real>(scene: &SceneConfig<T>, schedules: &[ProfileSchedule<T>]) -> Result<PebReport<T>> {
    if schedules.len() != scene.num_ris() {
        return Err(Error::Dimension("need one schedule per RIS".into()));
    }
    let a = build_bs_response_matrix(scene)?;
    let w = zf_weights(&a)?;
    let truth = derive_truth(scene)?;
    let mut channel_fims = Vec::new();
    let mut angle_efims = Vec::new();
    let mut angle_bounds = Vec::new();
    let mut jp = Matrix3::<T>::zeros();
    for (m, tr) in truth.iter().enumerate() {
        let ris = &scene.ris[m];
        let j4 = fim_channel(tr, &ris.layout, &schedules[m], &scene.radio, w.column(m).norm())?;
        let e = efim_angles(&j4)?;
        let tm = jacobian_position(&scene.ue_position, &ris.position)?;
        jp += tm * e * tm.transpose();
        angle_bounds.push(
            e.try_inverse()
                .map(|inv| inv.trace().max(T::zero()).sqrt())
                .unwrap_or(T::max_value().unwrap()),
        );
        channel_fims.push(j4);
        angle_efims.push(e);
    }
    let jp = (jp + jp.transpose()) * T::lit(0.5);
    let eig = SymmetricEigen::new(jp);
    let hi = eig.eigenvalues.max();
    let tol = T::lit(1e-10) * hi;
    let rank = eig.eigenvalues.iter().filter(|v| **v > tol).count();
    if rank < 3 {
        return Err(Error::SingularFim(format!("position FIM has rank {rank} < 3")));
    }
    let inv = eig.eigenvectors
        * Matrix3::from_diagonal(&eig.eigenvalues.map(|v| T::one() / v))
        * eig.eigenvectors.transpose();
    Ok(PebReport {
        channel_fims,
        angle_efims,
        position_fim: jp,
        peb: inv.trace().sqrt(),
        axis_bounds: [inv[(0, 0)].sqrt(), inv[(1, 1)].sqrt(), inv[(2, 2)].sqrt()],
        angle_bounds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{angles_between, ArrayPlane};
    use crate::sounding::{dft_profiles, reference_scene, scene_schedules};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn rel(a: f64, b: f64, scale: f64) -> f64 {
        (a - b).abs() / scale.max(1e-300)
    }

    #[test]
    fn derivative_rows_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..100 {
            let plane = if rng.random_bool(0.5) {
                ArrayPlane::Xz
            } else {
                ArrayPlane::Yz
            };
            let layout = UpaLayout::new(plane, 4, 4).unwrap();
            let sched = dft_profiles::<f64>(16, 8);
            let eta = ChannelParams {
                sqrt_g_ur: rng.random_range(1e-4..1e-3),
                nu: rng.random_range(-PI..PI),
                aoa: AnglePair::new(rng.random_range(-PI..PI), rng.random_range(0.2..PI - 0.2)),
            };
            let model = PathModel {
                layout: &layout,
                omega: &sched.omega,
                aod: AnglePair::new(rng.random_range(-PI..PI), rng.random_range(0.2..PI - 0.2)),
                sqrt_g_rb: 1e-3,
                sqrt_p: 0.5,
            };
            let d = model.derivatives(&eta);
            let x = eta.to_array();
            for i in 0..4 {
                let h = f64::EPSILON.cbrt() * x[i].abs().max(1e-3);
                let (mut xp, mut xm) = (x, x);
                xp[i] += h;
                xm[i] -= h;
                let fd = (model.mean(&ChannelParams::from_array(xp)) - model.mean(&ChannelParams::from_array(xm)))
                    / Complex::new(2.0 * h, 0.0);
                let err = (&fd - &d[i]).norm() / d[i].norm();
                assert!(err < 1e-6, "param {i}: rel err {err}");
            }
        }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..100 {
            let ris = Position3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let ue = Position3::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
            );
            let t = jacobian_position(&ue, &ris).unwrap();
            for i in 0..3 {
                let h = f64::EPSILON.cbrt();
                let mut e = nalgebra::Vector3::zeros();
                e[i] = h;
                let ap = angles_between(&ris, &ue.translated(&e)).unwrap();
                let am = angles_between(&ris, &ue.translated(&-e)).unwrap();
                let del = (ap.elevation - am.elevation) / (2.0 * h);
                let daz = crate::scalar::wrap_angle(ap.azimuth - am.azimuth) / (2.0 * h);
                let col_scale = t.column(0).norm().max(t.column(1).norm());
                assert!(rel(del, t[(i, 0)], col_scale) < 1e-6);
                assert!(rel(daz, t[(i, 1)], col_scale) < 1e-6);
            }
        }
    }

    #[test]
    fn jacobian_radial_and_scaling() {
        let ris = Position3::new(0.5, 1.5, 2.9);
        let ue = Position3::new(0.1, -0.2, 0.3);
        let t = jacobian_position(&ue, &ris).unwrap();
        let xi = (ue.to_vector() - ris.to_vector()).normalize();
        assert!((t.transpose() * xi).norm() < 1e-14);
        let far = ris.translated(&((ue.to_vector() - ris.to_vector()) * 3.0));
        let t3 = jacobian_position(&far, &ris).unwrap();
        assert!((t3 * 3.0 - t).norm() < 1e-12);
        assert_eq!(
            jacobian_position(&Position3::new(0.5, 1.5, 0.0), &ris),
            Err(Error::ZenithSingularity)
        );
    }

    #[test]
    fn channel_fim_scaling() {
        let scene = reference_scene(1e-3, 1e-14);
        let truth = derive_truth(&scene).unwrap();
        let layout = scene.ris[0].layout;
        let s32 = dft_profiles::<f64>(16, 32);
        let s64 = dft_profiles::<f64>(16, 64);
        let j = fim_channel(&truth[0], &layout, &s32, &scene.radio, 0.1).unwrap();
        assert!((j - j.transpose()).norm() <= 1e-12 * j.norm());
        assert!(j.symmetric_eigenvalues().min() > -1e-9 * j.norm());

        let radio10 = scene.radio.with_tx_power(1e-2);
        let scene10 = SceneConfig {
            radio: radio10,
            ..scene.clone()
        };
        let truth10 = derive_truth(&scene10).unwrap();
        let j10 = fim_channel(&truth10[0], &layout, &s32, &radio10, 0.1).unwrap();
        assert!((j10 - j * 10.0).norm() <= 1e-10 * j10.norm());

        // 64 DFT slots over 16 elements repeat the 32-slot schedule exactly
        let j2 = fim_channel(&truth[0], &layout, &s64, &scene.radio, 0.1).unwrap();
        assert!((j2 - j * 2.0).norm() <= 1e-10 * j2.norm());
    }

    #[test]
    fn efim_properties() {
        let mut j = Matrix4::<f64>::identity() * 3.0;
        j[(2, 3)] = 0.5;
        j[(3, 2)] = 0.5;
        let e = efim_angles(&j).unwrap();
        assert_eq!(e, Matrix2::new(3.0, 0.5, 0.5, 3.0));

        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let b = Matrix4::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let j = b * b.transpose() + Matrix4::identity() * 1e-3;
            let e = efim_angles(&j).unwrap();
            let jaa = j.fixed_view::<2, 2>(2, 2).into_owned();
            let jaa = Matrix2::new(jaa[(1, 1)], jaa[(1, 0)], jaa[(0, 1)], jaa[(0, 0)]);
            assert!((jaa - e).symmetric_eigenvalues().min() > -1e-12);
            assert!(e.symmetric_eigenvalues().min() > -1e-12);
        }
        assert!(efim_angles(&Matrix4::<f64>::zeros()).is_err());
    }

    #[test]
    fn reference_scene_efim_positive_definite() {
        let p = 10f64.powf((30.0 - 30.0) / 10.0);
        let noise = 10f64.powf((-111.0 - 30.0) / 10.0);
        let scene = reference_scene(p, noise);
        let rep = fim_position(&scene, &scene_schedules(&scene)).unwrap();
        assert!(rep.angle_efims[0].symmetric_eigenvalues().min() > 0.0);
        assert!(rep.peb > 0.0 && rep.peb.is_finite());
    }

    #[test]
    fn peb_power_scaling_is_exact() {
        let noise = 1e-14;
        let base = reference_scene(1e-3, noise);
        let peb0 = fim_position(&base, &scene_schedules(&base)).unwrap().peb;
        for kappa in [10.0, 100.0, 0.1] {
            let s = reference_scene(1e-3 * kappa, noise);
            let peb = fim_position(&s, &scene_schedules(&s)).unwrap().peb;
            assert!(rel(peb, peb0 / f64::sqrt(kappa), peb) < 1e-10);
        }
    }

    #[test]
    fn single_ris_is_singular() {
        let mut scene = reference_scene(1e-3, 1e-14);
        scene.ris.truncate(1);
        assert!(matches!(
            fim_position(&scene, &scene_schedules(&scene)),
            Err(Error::SingularFim(_))
        ));
    }

    #[test]
    fn fim_needs_noise() {
        let scene = reference_scene(1e-3, 0.0);
        assert!(fim_position(&scene, &scene_schedules(&scene)).is_err());
    }
}
