//! Uplink sounding through M passive RISs: scene description, DFT reflection
//! profiles, ground-truth channel parameters and noisy observations.

use nalgebra::Vector3;
use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::{
    angles_between, steering_upa, AnglePair, ArrayPlane, FacingSide, PathGain, Position3, RadioParams, UpaLayout,
};
use crate::scalar::{cis, CMatrix, CVector, Real};

/// One reflecting surface.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RisConfig<T: Real> {
    /// Centroid of the surface.
    pub position: Position3<T>,
    pub layout: UpaLayout,
}

/// Full system geometry and radio parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneConfig<T: Real> {
    pub bs_position: Position3<T>,
    pub bs_layout: UpaLayout,
    pub ris: Vec<RisConfig<T>>,
    pub ue_position: Position3<T>,
    pub radio: RadioParams<T>,
    pub training_slots: usize,
}

impl<T: Real> SceneConfig<T> {
    pub fn num_ris(&self) -> usize {
        self.ris.len()
    }

    pub fn num_bs_antennas(&self) -> usize {
        self.bs_layout.len()
    }

    /// Side of RIS `m` facing the base station.
    pub fn facing_side(&self, m: usize) -> Result<FacingSide> {
        let r = &self.ris[m];
        FacingSide::of_point(r.layout.plane, &r.position, &self.bs_position)
            .ok_or_else(|| Error::DegenerateGeometry(format!("BS lies in the plane of RIS {m}")))
    }

    /// Check every scene invariant needed by the full pipeline.
    pub fn validate(&self) -> Result<()> {
        let m = self.num_ris();
        if m < 2 {
            return Err(Error::Config(format!(
                "at least 2 RISs are needed for a 3D fix, got {m}"
            )));
        }
        if self.num_bs_antennas() < m {
            return Err(Error::Config(format!(
                "zero forcing needs N >= M, got N = {} and M = {m}",
                self.num_bs_antennas()
            )));
        }
        if self.training_slots == 0 {
            return Err(Error::Config("training overhead T must be at least 1".into()));
        }
        if !self.bs_position.is_finite() || !self.ue_position.is_finite() {
            return Err(Error::Config("BS and UE positions must be finite".into()));
        }
        if self.bs_position == self.ue_position {
            return Err(Error::Config("UE coincides with the BS".into()));
        }
        for (i, r) in self.ris.iter().enumerate() {
            if !r.position.is_finite() {
                return Err(Error::Config(format!("RIS {i} position is not finite")));
            }
            if !matches!(r.layout.plane, ArrayPlane::Xz | ArrayPlane::Yz) {
                return Err(Error::Config(format!(
                    "RIS {i} must be parallel to the xz or yz plane, got {}",
                    r.layout.plane.name()
                )));
            }
            if r.layout.n_first < 2 || r.layout.n_second < 2 {
                return Err(Error::Config(format!("RIS {i} needs at least 2 elements per axis")));
            }
            if r.position == self.bs_position || r.position == self.ue_position {
                return Err(Error::Config(format!("RIS {i} coincides with the BS or UE")));
            }
            let bs_side = FacingSide::of_point(r.layout.plane, &r.position, &self.bs_position);
            let ue_side = FacingSide::of_point(r.layout.plane, &r.position, &self.ue_position);
            match (bs_side, ue_side) {
                (Some(a), Some(b)) if a == b => {}
                _ => {
                    return Err(Error::Config(format!(
                        "BS and UE must lie strictly in front of RIS {i} ({}-plane)",
                        r.layout.plane.name()
                    )))
                }
            }
            for (j, other) in self.ris.iter().enumerate().skip(i + 1) {
                if other.position == r.position {
                    return Err(Error::Config(format!("RIS {i} and RIS {j} share a position")));
                }
            }
        }
        Ok(())
    }

    /// Move every RIS `shift` meters further from the BS along the BS → RIS ray.
    pub fn with_ris_shift(&self, shift: T) -> Self {
        let mut out = self.clone();
        for r in &mut out.ris {
            let d: Vector3<T> = r.position.to_vector() - self.bs_position.to_vector();
            let n = d.norm();
            if n > T::zero() {
                r.position = r.position.translated(&(d * (shift / n)));
            }
        }
        out
    }
}

/// Reflection profile matrix of one RIS: `L x T`, column `t` is the
/// configuration used in slot `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSchedule<T: Real> {
    pub omega: CMatrix<T>,
}

impl<T: Real> ProfileSchedule<T> {
    pub fn elements(&self) -> usize {
        self.omega.nrows()
    }

    pub fn slots(&self) -> usize {
        self.omega.ncols()
    }

    pub fn column(&self, t: usize) -> CVector<T> {
        self.omega.column(t).into_owned()
    }
}

/// DFT reflection profiles: column `t` is column `t mod L` of the `L x L`
/// DFT matrix with entries `exp(-j 2 pi k l / L)`.
pub fn dft_profiles<T: Real>(elements: usize, slots: usize) -> ProfileSchedule<T> {
    let l = elements.max(1);
    let omega = CMatrix::from_fn(elements, slots, |k, t| {
        let col = t % l;
        // reduce k*col mod L before forming the angle so entries stay exact
        let idx = (k * col) % l;
        cis(-T::two_pi() * T::lit(idx as f64) / T::lit(l as f64))
    });
    ProfileSchedule { omega }
}

/// DFT schedules for every RIS of a scene.
pub fn scene_schedules<T: Real>(scene: &SceneConfig<T>) -> Vec<ProfileSchedule<T>> {
    scene
        .ris
        .iter()
        .map(|r| dft_profiles(r.layout.len(), scene.training_slots))
        .collect()
}

/// Ground-truth parameters of one UE → RIS → BS path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathTruth<T: Real> {
    pub gain: PathGain<T>,
    /// Arrival angles at the BS from the RIS.
    pub bs_aoa: AnglePair<T>,
    /// Departure angles from the RIS towards the BS.
    pub ris_aod: AnglePair<T>,
    /// Arrival angles at the RIS, pointing towards the UE.
    pub ris_aoa: AnglePair<T>,
}

/// Geometry-derived channel parameters of every RIS path.
pub fn derive_truth<T: Real>(scene: &SceneConfig<T>) -> Result<Vec<PathTruth<T>>> {
    scene
        .ris
        .iter()
        .enumerate()
        .map(|(m, r)| {
            let d_ur = r.position.distance(&scene.ue_position);
            let d_rb = r.position.distance(&scene.bs_position);
            if d_ur == T::zero() || d_rb == T::zero() {
                return Err(Error::DegenerateGeometry(format!(
                    "RIS {m} coincides with the UE or BS"
                )));
            }
            Ok(PathTruth {
                gain: PathGain::from_distances(d_ur, d_rb, &scene.radio)?,
                bs_aoa: angles_between(&scene.bs_position, &r.position)?,
                ris_aod: angles_between(&r.position, &scene.bs_position)?,
                ris_aoa: angles_between(&r.position, &scene.ue_position)?,
            })
        })
        .collect()
}

/// Cascaded RIS response `a(aod) ∘ a(aoa)` of one path.
pub fn cascaded_response<T: Real>(truth: &PathTruth<T>, layout: &UpaLayout) -> CVector<T> {
    steering_upa(&truth.ris_aod, layout).component_mul(&steering_upa(&truth.ris_aoa, layout))
}

/// Simulated observation set.
#[derive(Debug, Clone)]
pub struct SoundingRecord<T: Real> {
    /// `N x T` received samples, column `t` is `y_t`.
    pub y: CMatrix<T>,
    pub schedules: Vec<ProfileSchedule<T>>,
    pub truth: Vec<PathTruth<T>>,
    pub pilot: Complex<T>,
    pub rng_seed: u64,
}

fn check_schedules<T: Real>(scene: &SceneConfig<T>, schedules: &[ProfileSchedule<T>]) -> Result<()> {
    if schedules.len() != scene.num_ris() {
        return Err(Error::Dimension(format!(
            "{} schedules for {} RISs",
            schedules.len(),
            scene.num_ris()
        )));
    }
    for (m, (s, r)) in schedules.iter().zip(&scene.ris).enumerate() {
        if s.elements() != r.layout.len() || s.slots() != scene.training_slots {
            return Err(Error::Dimension(format!(
                "schedule {m} is {}x{}, expected {}x{}",
                s.elements(),
                s.slots(),
                r.layout.len(),
                scene.training_slots
            )));
        }
    }
    Ok(())
}

/// Noiseless contribution of path `m` to the `N x T` observation matrix.
pub fn path_observation<T: Real>(
    scene: &SceneConfig<T>,
    truth: &PathTruth<T>,
    schedule: &ProfileSchedule<T>,
    layout: &UpaLayout,
) -> CMatrix<T> {
    let pilot = scene.radio.tx_power.sqrt();
    let c = cascaded_response(truth, layout);
    let a_bs = steering_upa(&truth.bs_aoa, &scene.bs_layout);
    // per-slot inner products omega_t^T c
    let inner = schedule.omega.transpose() * &c;
    let l = truth.gain.coefficient() * pilot;
    CMatrix::from_fn(a_bs.len(), schedule.slots(), |n, t| a_bs[n] * inner[t] * l)
}

/// Sum of all path contributions without noise.
pub fn noiseless_observation<T: Real>(
    scene: &SceneConfig<T>,
    truth: &[PathTruth<T>],
    schedules: &[ProfileSchedule<T>],
) -> Result<CMatrix<T>> {
    check_schedules(scene, schedules)?;
    if truth.len() != scene.num_ris() {
        return Err(Error::Dimension("truth does not match the RIS count".into()));
    }
    let mut y = CMatrix::zeros(scene.num_bs_antennas(), scene.training_slots);
    for ((tr, s), r) in truth.iter().zip(schedules).zip(&scene.ris) {
        y += path_observation(scene, tr, s, &r.layout);
    }
    Ok(y)
}

/// Mean received signal power per antenna and slot, `mean |Y_noiseless|^2`.
pub fn mean_signal_power<T: Real>(scene: &SceneConfig<T>, schedules: &[ProfileSchedule<T>]) -> Result<T> {
    let truth = derive_truth(scene)?;
    let y = noiseless_observation(scene, &truth, schedules)?;
    Ok(crate::scalar::frob2(&y) / T::lit(y.len() as f64))
}

/// Simulate `y_t = sum_m h_m(omega_{m,t}) s + n_t` with a deterministic pilot
/// `s = sqrt(P)` and `n_t ~ CN(0, rho I)` drawn from a ChaCha8 stream seeded
/// with `seed`.
pub fn simulate_sounding<T: Real>(
    scene: &SceneConfig<T>,
    schedules: &[ProfileSchedule<T>],
    seed: u64,
) -> Result<SoundingRecord<T>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rec = simulate_sounding_with(scene, schedules, &mut rng)?;
    rec.rng_seed = seed;
    Ok(rec)
}

/// As [`simulate_sounding`] but drawing noise from a caller-supplied generator.
pub fn simulate_sounding_with<T: Real, R: Rng + ?Sized>(
    scene: &SceneConfig<T>,
    schedules: &[ProfileSchedule<T>],
    rng: &mut R,
) -> Result<SoundingRecord<T>> {
    let truth = derive_truth(scene)?;
    let mut y = noiseless_observation(scene, &truth, schedules)?;
    let sigma = (scene.radio.noise_var / T::lit(2.0)).sqrt();
    if scene.radio.noise_var > T::zero() {
        for t in 0..y.ncols() {
            for n in 0..y.nrows() {
                let re: f64 = rng.sample(StandardNormal);
                let im: f64 = rng.sample(StandardNormal);
                y[(n, t)] += Complex::new(T::lit(re) * sigma, T::lit(im) * sigma);
            }
        }
    }
    Ok(SoundingRecord {
        y,
        schedules: schedules.to_vec(),
        truth,
        pilot: Complex::new(scene.radio.tx_power.sqrt(), T::zero()),
        rng_seed: 0,
    })
}

/// The evaluation scene: BS at (1, 1, 3) with a 10x10 UPA, three 4x4 RISs,
/// UE at the origin, 28 GHz carrier, T = 32.
pub fn reference_scene(tx_power_w: f64, noise_var_w: f64) -> SceneConfig<f64> {
    let ris = |x: f64, y: f64, z: f64, plane| RisConfig {
        position: Position3::new(x, y, z),
        layout: UpaLayout::new(plane, 4, 4).expect("static layout"),
    };
    SceneConfig {
        bs_position: Position3::new(1.0, 1.0, 3.0),
        bs_layout: UpaLayout::new(ArrayPlane::Xy, 10, 10).expect("static layout"),
        ris: vec![
            ris(0.5, 1.5, 2.9, ArrayPlane::Xz),
            ris(-0.5, 0.5, 2.7, ArrayPlane::Yz),
            ris(-0.5, -0.5, 2.5, ArrayPlane::Xz),
        ],
        ue_position: Position3::origin(),
        radio: RadioParams::new(28e9, tx_power_w, noise_var_w).expect("static radio"),
        training_slots: 32,
    }
}

/// Position and orientation of the optional fourth RIS.
pub fn extra_ris() -> RisConfig<f64> {
    RisConfig {
        position: Position3::new(1.1, 0.8, 2.8),
        layout: UpaLayout::new(ArrayPlane::Yz, 4, 4).expect("static layout"),
    }
}
