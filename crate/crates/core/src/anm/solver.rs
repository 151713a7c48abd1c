//! ADMM solver for the regularized atomic-norm problem
//!
//! ```text
//! minimize   mu * (Tr(Toep(U)) / (2L) + t / 2) + 1/2 ||z - sqrt(P) Omega^T h||^2
//! subject to [[Toep(U), h], [h^H, t]] ⪰ 0
//! ```
//!
//! The linear block `Theta(U, h, t)` is split from a PSD copy `Z`; the
//! `(U, h, t)` update is closed form (lag averaging, a regularized
//! least-squares solve through a cached eigendecomposition of `B^H B`, and a
//! scalar shift), and the `Z` update is a projection onto the PSD cone of size
//! `L + 1`. The data are rescaled so `||z|| = 1` before iterating; the problem
//! is positively homogeneous so the solution is mapped back exactly.

use nalgebra::{DVector, SymmetricEigen};
use num_complex::Complex;

use super::toeplitz::{adjoint_unchecked, assemble_unchecked, Toeplitz2Params};
use crate::error::{Error, Result};
use crate::scalar::{frob2, re, CMatrix, CVector, Real};

/// Stopping rules and penalty adaptation.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions<T: Real> {
    pub max_iterations: usize,
    pub abs_tol: T,
    pub rel_tol: T,
    /// Starting penalty; `None` picks `trace(B^H B) / L`.
    pub initial_penalty: Option<T>,
    /// Penalty is scaled by this factor when one residual dominates.
    pub penalty_factor: T,
    /// Residual ratio that triggers a penalty update.
    pub balance_ratio: T,
    pub verbose: bool,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            max_iterations: 5000,
            abs_tol: T::lit(1e-6),
            rel_tol: T::lit(1e-5),
            initial_penalty: None,
            penalty_factor: T::lit(2.0),
            balance_ratio: T::lit(10.0),
            verbose: false,
        }
    }
}

impl<T: Real> SolverOptions<T> {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > T::zero()) || !(self.rel_tol > T::zero()) {
            return Err(Error::InvalidInput("solver tolerances must be positive".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidInput("max_iterations must be positive".into()));
        }
        if !(self.penalty_factor > T::one()) || !(self.balance_ratio > T::one()) {
            return Err(Error::InvalidInput("penalty adaptation factors must exceed 1".into()));
        }
        Ok(())
    }
}

/// Output of [`solve_anm`].
#[derive(Debug, Clone)]
pub struct AnmSolution<T: Real> {
    /// Estimate of `l_m (a(aod) ∘ a(aoa))`.
    pub h_hat: CVector<T>,
    pub u_hat: Toeplitz2Params<T>,
    pub t_hat: T,
    pub objective: T,
    pub iterations: usize,
    pub primal_residual: T,
    pub dual_residual: T,
    pub converged: bool,
    /// Objective of the PSD-feasible iterate at every accepted checkpoint.
    pub merit_history: Vec<T>,
}

impl<T: Real> AnmSolution<T> {
    /// `Tr(Toep(U)) / (2L) + t / 2`, the atomic-norm surrogate at the solution.
    pub fn regularizer(&self) -> T {
        regularizer_value(&self.u_hat, self.t_hat)
    }

    /// The `(L+1) x (L+1)` block matrix `[[Toep(U), h], [h^H, t]]`.
    pub fn block_matrix(&self) -> CMatrix<T> {
        block(&assemble_unchecked(&self.u_hat), &self.h_hat, self.t_hat)
    }
}

pub(crate) fn regularizer_value<T: Real>(u: &Toeplitz2Params<T>, t: T) -> T {
    (u.get(0, 0).re + t) / T::lit(2.0)
}

pub(crate) fn block<T: Real>(toep: &CMatrix<T>, h: &CVector<T>, t: T) -> CMatrix<T> {
    let l = h.len();
    let mut m = CMatrix::zeros(l + 1, l + 1);
    m.view_mut((0, 0), (l, l)).copy_from(toep);
    for i in 0..l {
        m[(i, l)] = h[i];
        m[(l, i)] = h[i].conj();
    }
    m[(l, l)] = re(t);
    m
}

/// `mu = c0 * sqrt(rho) * ||w|| * sqrt(L ln L)`.
pub fn regularization_weight<T: Real>(noise_var: T, w_norm: T, elements: usize, c0: T) -> Result<T> {
    if elements < 2 {
        return Err(Error::InvalidInput(format!(
            "regularization needs L >= 2, got {elements}"
        )));
    }
    if noise_var < T::zero() || w_norm < T::zero() || c0 < T::zero() {
        return Err(Error::InvalidInput("regularization inputs must be non-negative".into()));
    }
    let l = T::lit(elements as f64);
    Ok(c0 * noise_var.sqrt() * w_norm * (l * l.ln()).sqrt())
}

/// Objective of the original (unscaled) problem at `(u, h, t)`.
pub fn anm_objective<T: Real>(
    z: &CVector<T>,
    omega: &CMatrix<T>,
    tx_power: T,
    mu: T,
    u: &Toeplitz2Params<T>,
    h: &CVector<T>,
    t: T,
) -> T {
    let resid = z - omega.transpose() * h * re(tx_power.sqrt());
    mu * regularizer_value(u, t) + resid.norm_squared() / T::lit(2.0)
}

fn project_psd<T: Real>(m: CMatrix<T>) -> CMatrix<T> {
    let eig = SymmetricEigen::new(m);
    let n = eig.eigenvalues.len();
    let mut scaled = eig.eigenvectors.clone();
    for j in 0..n {
        let lam = eig.eigenvalues[j].max(T::zero());
        let s = lam.sqrt();
        for i in 0..n {
            scaled[(i, j)] *= s;
        }
    }
    &scaled * scaled.adjoint()
}

fn min_eigenvalue<T: Real>(m: &CMatrix<T>) -> T {
    let ev = m.clone().symmetric_eigenvalues();
    ev.iter().copied().fold(T::max_value().unwrap(), |a, b| a.min(b))
}

struct Iterate<T: Real> {
    u: Toeplitz2Params<T>,
    h: CVector<T>,
    t: T,
}

impl<T: Real> Iterate<T> {
    /// Shift by `delta * I` so the block matrix becomes PSD.
    fn restored(&self, delta: T) -> Self {
        let mut u = self.u.clone();
        let u0 = u.get(0, 0);
        u.set(0, 0, Complex::new(u0.re + delta, T::zero()));
        Self {
            u,
            h: self.h.clone(),
            t: self.t + delta,
        }
    }
}

/// Solve the regularized ANM problem for one separated observation.
///
/// `omega` is the `L x T` profile matrix, `layout` the RIS element counts
/// `(L_first, L_second)`. Non-convergence is reported through
/// [`AnmSolution::converged`] with the best feasible iterate returned.
pub fn solve_anm<T: Real>(
    z: &CVector<T>,
    omega: &CMatrix<T>,
    tx_power: T,
    mu: T,
    layout: (usize, usize),
    opts: &SolverOptions<T>,
) -> Result<AnmSolution<T>> {
    opts.validate()?;
    let (la, lz) = layout;
    let l = la * lz;
    if omega.nrows() != l || omega.ncols() != z.len() {
        return Err(Error::Dimension(format!(
            "profile matrix is {}x{}, expected {l}x{}",
            omega.nrows(),
            omega.ncols(),
            z.len()
        )));
    }
    if !(mu >= T::zero()) || !(tx_power > T::zero()) {
        return Err(Error::InvalidInput("need mu >= 0 and P > 0".into()));
    }
    let znorm = z.norm();
    if znorm == T::zero() {
        return Ok(AnmSolution {
            h_hat: CVector::zeros(l),
            u_hat: Toeplitz2Params::zeros(la, lz),
            t_hat: T::zero(),
            objective: T::zero(),
            iterations: 0,
            primal_residual: T::zero(),
            dual_residual: T::zero(),
            converged: true,
            merit_history: vec![T::zero()],
        });
    }

    let sqrt_p = tx_power.sqrt();
    let zt = z / re(znorm);
    let mu_s = mu / (sqrt_p * znorm);
    let b = omega.transpose();
    let bhb = b.adjoint() * &b;
    let bz = b.adjoint() * &zt;
    let eig = SymmetricEigen::new(bhb.clone());
    let v = eig.eigenvectors;
    let d: DVector<T> = eig.eigenvalues;
    let vh = v.adjoint();
    let vh_bz = &vh * &bz;

    let n = l + 1;
    let dim = T::lit(n as f64);
    let counts = Toeplitz2Params::<T>::zeros(la, lz);
    let mut rho = opts
        .initial_penalty
        .unwrap_or_else(|| (d.sum() / T::lit(l as f64)).max(T::lit(1e-3)));
    let mut zmat = CMatrix::<T>::zeros(n, n);
    let mut lam = CMatrix::<T>::zeros(n, n);

    let objective_scaled = |it: &Iterate<T>| -> T {
        let resid = &zt - &b * &it.h;
        mu_s * regularizer_value(&it.u, it.t) + resid.norm_squared() / T::lit(2.0)
    };

    let mut best: Option<(T, Iterate<T>)> = None;
    let mut merit_history = Vec::new();
    let mut consider = |it: &Iterate<T>, theta: &CMatrix<T>, best: &mut Option<(T, Iterate<T>)>| {
        let delta = (-min_eigenvalue(theta)).max(T::zero());
        let cand = it.restored(delta);
        let merit = objective_scaled(&cand);
        if best.as_ref().is_none_or(|(m, _)| merit < *m) {
            merit_history.push(merit);
            *best = Some((merit, cand));
        }
    };

    let mut converged = false;
    let mut iterations = 0;
    let (mut r_norm, mut s_norm) = (T::zero(), T::zero());
    let mut last: Option<(Iterate<T>, CMatrix<T>)> = None;
    let two = T::lit(2.0);

    for k in 0..opts.max_iterations {
        iterations = k + 1;
        // (U, h, t) update
        let z0 = zmat.view((0, 0), (l, l));
        let l0 = lam.view((0, 0), (l, l));
        let z1 = zmat.view((0, l), (l, 1)).column(0).into_owned();
        let l1 = lam.view((0, l), (l, 1)).column(0).into_owned();
        let ztt = zmat[(l, l)].re;
        let ltt = lam[(l, l)].re;

        let rhs = &vh_bz + &vh * (l1 * re(-two) + z1 * re(two * rho));
        let scaled = DVector::from_fn(l, |i, _| rhs[i] / re(d[i] + two * rho));
        let h = &v * scaled;
        let t = ztt - (ltt + mu_s / two) / rho;
        let az = adjoint_unchecked(z0, la, lz);
        let al = adjoint_unchecked(l0, la, lz);
        let mut u = Toeplitz2Params::zeros(la, lz);
        {
            let vals = u.values_mut();
            let mut idx = 0;
            for ka in counts.lags_a() {
                for kz in counts.lags_z() {
                    let c = T::lit(counts.lag_count(ka, kz) as f64);
                    let mut g = al.values()[idx];
                    if ka == 0 && kz == 0 {
                        g += re(mu_s / two);
                    }
                    vals[idx] = (az.values()[idx] - g / re(rho)) / re(c);
                    idx += 1;
                }
            }
        }
        let theta = block(&assemble_unchecked(&u), &h, t);

        // Z update: PSD projection
        let z_prev = zmat;
        zmat = project_psd(&theta + &lam / re(rho));
        // dual ascent
        let diff = &theta - &zmat;
        lam += &diff * re(rho);

        r_norm = frob2(&diff).sqrt();
        s_norm = rho * frob2(&(&zmat - &z_prev)).sqrt();
        let eps_pri = dim * opts.abs_tol + opts.rel_tol * frob2(&theta).sqrt().max(frob2(&zmat).sqrt());
        let eps_dual = dim * opts.abs_tol + opts.rel_tol * frob2(&lam).sqrt();

        let it = Iterate { u, h, t };
        if k % 10 == 9 {
            consider(&it, &theta, &mut best);
        }
        if opts.verbose && k % 100 == 0 {
            log::debug!(
                "anm iter {k}: r={:.3e} s={:.3e} rho={:.3e}",
                r_norm.as_f64(),
                s_norm.as_f64(),
                rho.as_f64()
            );
        }
        if r_norm <= eps_pri && s_norm <= eps_dual {
            converged = true;
            last = Some((it, theta));
            break;
        }
        last = Some((it, theta));

        if r_norm > opts.balance_ratio * s_norm {
            rho *= opts.penalty_factor;
        } else if s_norm > opts.balance_ratio * r_norm {
            rho /= opts.penalty_factor;
        }
    }

    if let Some((it, theta)) = &last {
        consider(it, theta, &mut best);
    }
    let (_, sol) = best.expect("at least one iterate");

    // back to the original scale
    let kappa = znorm / sqrt_p;
    let mut u_hat = sol.u;
    u_hat.scale(kappa);
    let h_hat = sol.h * re(kappa);
    let t_hat = sol.t * kappa;
    let objective = anm_objective(z, omega, tx_power, mu, &u_hat, &h_hat, t_hat);
    let scale_merit = tx_power * kappa * kappa;
    Ok(AnmSolution {
        h_hat,
        u_hat,
        t_hat,
        objective,
        iterations,
        primal_residual: r_norm * kappa,
        dual_residual: s_norm * kappa,
        converged,
        merit_history: merit_history.into_iter().map(|m| m * scale_merit).collect(),
    })
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn smallest_eigenvalue<T: Real>(m: &CMatrix<T>) -> T {
    min_eigenvalue(m)
}
