//! UE position from per-RIS AoA estimates.
//!
//! Stage one intersects the bearing lines `p_RIS,m + s xi_m` in the least
//! squares sense. Stage two refines that fix by minimizing the
//! gain-concentrated likelihood cost of the separated observations over the
//! three position coordinates.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use num_complex::Complex;

use crate::aoa::AoaEstimate;
use crate::error::{Error, Result};
use crate::geometry::{steering_from_gammas, steering_upa, AnglePair, Position3, UpaLayout};
use crate::scalar::{re, CMatrix, CVector, Real};
use crate::sounding::{ProfileSchedule, SceneConfig};
use crate::zf::SeparatedObservation;

/// Unit direction `[cos az sin el, sin az sin el, cos el]`.
pub fn direction_vector<T: Real>(angles: &AnglePair<T>) -> Vector3<T> {
    angles.direction()
}

/// Least-squares fix with its conditioning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsFix<T: Real> {
    pub position: Position3<T>,
    /// Eigenvalue spread of `sum_m w_m (I - xi_m xi_m^T)`.
    pub condition_number: T,
}

/// Point closest, in summed squared distance, to the lines through each RIS
/// along its estimated arrival direction.
pub fn ls_intersection<T: Real>(estimates: &[(AnglePair<T>, Position3<T>)]) -> Result<Position3<T>> {
    ls_intersection_weighted(estimates, None).map(|f| f.position)
}

/// As [`ls_intersection`] with optional non-negative per-line weights.
pub fn ls_intersection_weighted<T: Real>(
    estimates: &[(AnglePair<T>, Position3<T>)],
    weights: Option<&[T]>,
) -> Result<LsFix<T>> {
    if estimates.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 bearing lines, got {}",
            estimates.len()
        )));
    }
    if let Some(w) = weights {
        if w.len() != estimates.len() {
            return Err(Error::Dimension("one weight per bearing line is required".into()));
        }
        if w.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidInput(
                "line weights must be finite and non-negative".into(),
            ));
        }
    }
    let mut a = Matrix3::<T>::zeros();
    let mut b = Vector3::<T>::zeros();
    for (i, (angles, origin)) in estimates.iter().enumerate() {
        let w = weights.map_or(T::one(), |w| w[i]);
        let xi = direction_vector(angles);
        let bm = (Matrix3::identity() - xi * xi.transpose()) * w;
        b += bm * origin.to_vector();
        a += bm;
    }
    let eig = SymmetricEigen::new(a);
    let hi = eig.eigenvalues.max();
    let lo = eig.eigenvalues.min();
    let condition_number = if lo > T::zero() {
        hi / lo
    } else {
        T::max_value().unwrap()
    };
    if !(lo > T::lit(1e-10) * hi) {
        return Err(Error::DegenerateGeometry(format!(
            "bearing lines are (nearly) parallel: condition number {:.3e}",
            condition_number.as_f64()
        )));
    }
    let inv = eig.eigenvectors
        * Matrix3::from_diagonal(&eig.eigenvalues.map(|v| T::one() / v))
        * eig.eigenvectors.transpose();
    Ok(LsFix {
        position: Position3::from_vector(&(inv * b)),
        condition_number,
    })
}

/// One RIS term of the concentrated likelihood.
#[derive(Debug, Clone)]
struct MlPath<T: Real> {
    z: CVector<T>,
    weight: T,
    /// `sqrt(P) Omega^T diag(a(aod))`, so `b(p) = g a(theta(p))`.
    g: CMatrix<T>,
    origin: Position3<T>,
    layout: UpaLayout,
}

/// Gain-concentrated likelihood of the separated observations as a function
/// of the UE position.
///
/// `C(p) = sum_m ||z_m - P_b z_m||^2 / rho_m` with `P_b` the projector onto
/// `b_m(p) = sqrt(P) Omega_m^T (a(aod_m) ∘ a(theta_m(p)))`. When any
/// post-combining noise variance is zero all terms are weighted equally.
#[derive(Debug, Clone)]
pub struct MlProblem<T: Real> {
    paths: Vec<MlPath<T>>,
}

impl<T: Real> MlProblem<T> {
    pub fn new(
        scene: &SceneConfig<T>,
        separated: &[SeparatedObservation<T>],
        schedules: &[ProfileSchedule<T>],
    ) -> Result<Self> {
        if separated.len() != scene.num_ris() || schedules.len() != scene.num_ris() {
            return Err(Error::Dimension("need one observation and one schedule per RIS".into()));
        }
        let uniform = separated.iter().any(|s| !(s.noise_scale > T::zero()));
        let sqrt_p = scene.radio.tx_power.sqrt();
        let mut paths = Vec::with_capacity(separated.len());
        for (m, (obs, sched)) in separated.iter().zip(schedules).enumerate() {
            let ris = &scene.ris[m];
            if sched.elements() != ris.layout.len() || sched.slots() != obs.z.len() {
                return Err(Error::Dimension(format!("schedule {m} does not match its observation")));
            }
            let aod = crate::geometry::angles_between(&ris.position, &scene.bs_position)?;
            let a_aod = steering_upa(&aod, &ris.layout);
            let mut g = sched.omega.transpose() * re(sqrt_p);
            for (j, mut col) in g.column_iter_mut().enumerate() {
                col *= a_aod[j];
            }
            paths.push(MlPath {
                z: obs.z.clone(),
                weight: if uniform { T::one() } else { T::one() / obs.noise_scale },
                g,
                origin: ris.position,
                layout: ris.layout,
            });
        }
        Ok(Self { paths })
    }

    /// Cost at `p`; `+inf` if `p` coincides with a RIS.
    pub fn cost(&self, p: &Position3<T>) -> T {
        let mut total = T::zero();
        for path in &self.paths {
            let d = p.to_vector() - path.origin.to_vector();
            let n = d.norm();
            if !(n > T::zero()) {
                return T::max_value().unwrap();
            }
            let d = d / n;
            let (a, bx) = path.layout.plane.in_plane_axes();
            let b = &path.g * steering_from_gammas(d[a], d[bx], &path.layout);
            let bb = b.norm_squared();
            let resid = if bb > T::zero() {
                let coef: Complex<T> = b.dotc(&path.z) / re(bb);
                &path.z - &b * coef
            } else {
                path.z.clone()
            };
            total += path.weight * resid.norm_squared();
        }
        total
    }

    fn gradient(&self, p: &Position3<T>, h: T) -> Vector3<T> {
        let mut g = Vector3::zeros();
        for i in 0..3 {
            let mut e = Vector3::zeros();
            e[i] = h;
            let fp = self.cost(&p.translated(&e));
            let fm = self.cost(&p.translated(&-e));
            g[i] = (fp - fm) / (h + h);
        }
        g
    }
}

/// Quasi-Newton settings for [`ml_refine`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlOptions<T: Real> {
    pub max_iterations: usize,
    /// Stop once an accepted step is shorter than this (meters).
    pub step_tol: T,
    /// Central-difference step for the gradient (meters).
    pub fd_step: T,
}

impl<T: Real> Default for MlOptions<T> {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            step_tol: T::lit(1e-9),
            fd_step: T::lit(1e-7),
        }
    }
}

/// Outcome of [`ml_refine`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MlOutcome<T: Real> {
    pub position: Position3<T>,
    pub cost: T,
    pub initial_cost: T,
    pub iterations: usize,
    /// Set when no descent step could be taken from a non-stationary start.
    pub stalled: bool,
}

/// BFGS descent on the concentrated likelihood from `p0`. Steps are accepted
/// only on cost decrease, so the returned cost never exceeds `cost(p0)`.
pub fn ml_refine<T: Real>(p0: &Position3<T>, problem: &MlProblem<T>, opts: &MlOptions<T>) -> Result<MlOutcome<T>> {
    if !p0.is_finite() {
        return Err(Error::InvalidInput("ML initializer is not finite".into()));
    }
    let f0 = problem.cost(p0);
    let mut x = *p0;
    let mut f = f0;
    let mut g = problem.gradient(&x, opts.fd_step);
    let mut hinv = Matrix3::<T>::identity();
    // first step: scale the identity so the trial step is ~1 cm
    let gn = g.norm();
    if gn > T::zero() {
        hinv *= T::lit(0.01) / gn;
    }
    let mut iterations = 0;
    let mut stalled = false;
    let c1 = T::lit(1e-4);
    for it in 0..opts.max_iterations {
        iterations = it + 1;
        if !(g.norm() > T::zero()) {
            break;
        }
        let mut dir = -(hinv * g);
        if dir.dot(&g) >= T::zero() {
            hinv = Matrix3::identity() * (T::lit(0.01) / g.norm());
            dir = -(hinv * g);
        }
        let slope = dir.dot(&g);
        let mut s = T::one();
        let mut accepted = None;
        for _ in 0..40 {
            let cand = x.translated(&(dir * s));
            let fc = problem.cost(&cand);
            if fc <= f + c1 * s * slope && fc < f {
                accepted = Some((cand, fc));
                break;
            }
            s *= T::lit(0.5);
        }
        let Some((xn, fnew)) = accepted else {
            stalled = it == 0 && g.norm() > T::zero() && f > T::zero();
            break;
        };
        let step = xn.to_vector() - x.to_vector();
        let gnew = problem.gradient(&xn, opts.fd_step);
        let yv = gnew - g;
        let sy = step.dot(&yv);
        if sy > T::zero() {
            let rho = T::one() / sy;
            let i = Matrix3::<T>::identity();
            let left = i - step * yv.transpose() * rho;
            let right = i - yv * step.transpose() * rho;
            hinv = left * hinv * right + step * step.transpose() * rho;
        }
        x = xn;
        f = fnew;
        g = gnew;
        if step.norm() < opts.step_tol {
            break;
        }
    }
    Ok(MlOutcome {
        position: x,
        cost: f,
        initial_cost: f0,
        iterations,
        stalled,
    })
}

/// Localization output of one trial.
#[derive(Debug, Clone)]
pub struct LocalizationResult<T: Real> {
    pub p_ls: Position3<T>,
    pub p_ml: Option<Position3<T>>,
    pub aoa: Vec<AoaEstimate<T>>,
    pub condition_number: T,
    /// Final ML cost when refinement ran.
    pub residual: Option<T>,
}
