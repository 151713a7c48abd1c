//! Small-instance reference solvers for the atomic-norm SDP.
//!
//! These use a primal log-barrier interior-point method with Newton
//! centering on a real parameterization of `(U, t[, h])`, entirely separate
//! from the ADMM path. The duality gap of a central point is
//! `(L + 1) / tau`, so the returned objective is certified to within that
//! gap. Intended as test oracles; sizes are capped at `L <= 36`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex;

use super::toeplitz::Toeplitz2Params;
use crate::error::{Error, Result};
use crate::scalar::{re, CMatrix, CVector, Real};

/// Largest array handled by the reference solvers.
pub const MAX_REFERENCE_ELEMENTS: usize = 36;

/// Relative duality gap at which the barrier loop stops.
const GAP_TOL: f64 = 1e-10;

/// Result of [`solve_anm_reference`].
#[derive(Debug, Clone)]
pub struct ReferenceSolution<T: Real> {
    pub h: CVector<T>,
    pub u: Toeplitz2Params<T>,
    pub t: T,
    pub objective: T,
    /// Certified bound on `objective - optimum`.
    pub gap: T,
}

/// Real coordinates of the block matrix `[[Toep(U), h], [h^H, t]]`.
struct Parameterization {
    la: usize,
    lz: usize,
    /// Lags `(ka, kz)` in the half grid; the first entry is `(0, 0)`.
    half_lags: Vec<(isize, isize)>,
    free_h: bool,
}

impl Parameterization {
    fn new(la: usize, lz: usize, free_h: bool) -> Self {
        let mut half_lags = vec![(0, 0)];
        for ka in 0..la as isize {
            for kz in -(lz as isize - 1)..lz as isize {
                if ka > 0 || kz > 0 {
                    half_lags.push((ka, kz));
                }
            }
        }
        Self {
            la,
            lz,
            half_lags,
            free_h,
        }
    }

    fn l(&self) -> usize {
        self.la * self.lz
    }

    /// Index of `t` in the real coordinate vector.
    fn t_index(&self) -> usize {
        1 + 2 * (self.half_lags.len() - 1)
    }

    fn h_offset(&self) -> usize {
        self.t_index() + 1
    }

    fn dim(&self) -> usize {
        self.h_offset() + if self.free_h { 2 * self.l() } else { 0 }
    }

    fn toeplitz<T: Real>(&self, x: &DVector<T>) -> Toeplitz2Params<T> {
        let mut u = Toeplitz2Params::zeros(self.la, self.lz);
        u.set(0, 0, re(x[0]));
        for (i, &(ka, kz)) in self.half_lags.iter().enumerate().skip(1) {
            let j = 1 + 2 * (i - 1);
            u.set(ka, kz, Complex::new(x[j], x[j + 1]));
        }
        u
    }

    fn h<T: Real>(&self, x: &DVector<T>, fixed: Option<&CVector<T>>) -> CVector<T> {
        match fixed {
            Some(h) => h.clone(),
            None => {
                let o = self.h_offset();
                CVector::from_fn(self.l(), |i, _| Complex::new(x[o + 2 * i], x[o + 2 * i + 1]))
            }
        }
    }

    fn block<T: Real>(&self, x: &DVector<T>, fixed_h: Option<&CVector<T>>) -> CMatrix<T> {
        let toep = super::toeplitz::assemble_unchecked(&self.toeplitz(x));
        super::solver::block(&toep, &self.h(x, fixed_h), x[self.t_index()])
    }

    /// Basis matrices `dM/dx_i`.
    fn basis<T: Real>(&self) -> Vec<CMatrix<T>> {
        let l = self.l();
        let n = l + 1;
        let one = Complex::new(T::one(), T::zero());
        let j = Complex::new(T::zero(), T::one());
        let mut out = Vec::with_capacity(self.dim());
        let lag_matrix = |ka: isize, kz: isize, v: Complex<T>| {
            let mut u = Toeplitz2Params::zeros(self.la, self.lz);
            u.set(ka, kz, v);
            let mut m = CMatrix::zeros(n, n);
            m.view_mut((0, 0), (l, l))
                .copy_from(&super::toeplitz::assemble_unchecked(&u));
            m
        };
        out.push(lag_matrix(0, 0, one));
        for &(ka, kz) in self.half_lags.iter().skip(1) {
            out.push(lag_matrix(ka, kz, one));
            out.push(lag_matrix(ka, kz, j));
        }
        let mut et = CMatrix::zeros(n, n);
        et[(l, l)] = one;
        out.push(et);
        if self.free_h {
            for i in 0..l {
                let mut a = CMatrix::zeros(n, n);
                a[(i, l)] = one;
                a[(l, i)] = one;
                out.push(a);
                let mut b = CMatrix::zeros(n, n);
                b[(i, l)] = j;
                b[(l, i)] = -j;
                out.push(b);
            }
        }
        out
    }
}

/// Linear + quadratic objective in the real coordinates.
struct Objective<T: Real> {
    lin: DVector<T>,
    /// Quadratic term `1/2 x^T Q x + q^T x + c` on the `h` coordinates.
    quad: Option<(DMatrix<T>, DVector<T>, T)>,
    h_offset: usize,
}

impl<T: Real> Objective<T> {
    fn value(&self, x: &DVector<T>) -> T {
        let mut v = self.lin.dot(x);
        if let Some((q, g, c)) = &self.quad {
            let xh = x.rows(self.h_offset, q.nrows());
            v += (xh.transpose() * q * xh)[(0, 0)] / T::lit(2.0) + g.dot(&xh) + *c;
        }
        v
    }

    fn gradient(&self, x: &DVector<T>) -> DVector<T> {
        let mut g = self.lin.clone();
        if let Some((q, lin, _)) = &self.quad {
            let xh = x.rows(self.h_offset, q.nrows()).into_owned();
            let gh = q * xh + lin;
            for (i, v) in gh.iter().enumerate() {
                g[self.h_offset + i] += *v;
            }
        }
        g
    }

    fn add_hessian(&self, hess: &mut DMatrix<T>, scale: T) {
        if let Some((q, _, _)) = &self.quad {
            let n = q.nrows();
            let mut view = hess.view_mut((self.h_offset, self.h_offset), (n, n));
            view += q * scale;
        }
    }
}

fn hermitian_cholesky<T: Real>(m: &CMatrix<T>) -> Option<Cholesky<Complex<T>, Dyn>> {
    crate::scalar::hermitian_cholesky(m)
}

fn log_det<T: Real>(chol: &Cholesky<Complex<T>, Dyn>) -> T {
    let l = chol.l_dirty();
    (0..l.nrows()).fold(T::zero(), |acc, i| acc + l[(i, i)].re.ln()) * T::lit(2.0)
}

/// Minimize `obj(x) - log det M(x) / tau` along the central path.
fn barrier_solve<T: Real>(
    param: &Parameterization,
    obj: &Objective<T>,
    fixed_h: Option<&CVector<T>>,
    mut x: DVector<T>,
) -> Result<(DVector<T>, T)> {
    let basis = param.basis::<T>();
    let n = param.l() + 1;
    let nu = T::lit(n as f64);
    let dim = param.dim();
    let mut tau = T::one();
    let gap_tol = T::lit(GAP_TOL);
    let alpha = T::lit(0.25);
    let beta = T::lit(0.5);

    let merit = |x: &DVector<T>, tau: T| -> Option<T> {
        let chol = hermitian_cholesky(&param.block(x, fixed_h))?;
        Some(tau * obj.value(x) - log_det(&chol))
    };

    loop {
        for _newton in 0..200 {
            let m = param.block(&x, fixed_h);
            let chol = hermitian_cholesky(&m)
                .ok_or_else(|| Error::InvalidInput("reference solver left the PSD interior".into()))?;
            let minv = chol.inverse();
            let g_mats: Vec<CMatrix<T>> = basis.iter().map(|e| &minv * e).collect();
            let mut grad = obj.gradient(&x) * tau;
            let mut hess = DMatrix::<T>::zeros(dim, dim);
            for i in 0..dim {
                grad[i] -= g_mats[i].trace().re;
                for k in i..dim {
                    // Re tr(G_i G_k)
                    let gi = &g_mats[i];
                    let gk = &g_mats[k];
                    let mut acc = T::zero();
                    for a in 0..n {
                        for b in 0..n {
                            acc += (gi[(a, b)] * gk[(b, a)]).re;
                        }
                    }
                    hess[(i, k)] = acc;
                    hess[(k, i)] = acc;
                }
            }
            obj.add_hessian(&mut hess, tau);
            let step = match hess.clone().cholesky() {
                Some(c) => c.solve(&(-&grad)),
                None => hess
                    .clone()
                    .lu()
                    .solve(&(-&grad))
                    .ok_or_else(|| Error::InvalidInput("singular Newton system".into()))?,
            };
            let decrement = -grad.dot(&step);
            if decrement / T::lit(2.0) <= T::lit(1e-10) {
                break;
            }
            let f0 = merit(&x, tau).expect("current point is interior");
            let mut s = T::one();
            loop {
                let cand = &x + &step * s;
                if let Some(f) = merit(&cand, tau) {
                    if f <= f0 - alpha * s * decrement {
                        x = cand;
                        break;
                    }
                }
                s *= beta;
                if s < T::lit(1e-14) {
                    break;
                }
            }
            if s < T::lit(1e-14) {
                break;
            }
        }
        let gap = nu / tau;
        if gap <= gap_tol * obj.value(&x).abs().max(T::one()) {
            return Ok((x, gap));
        }
        tau *= T::lit(10.0);
    }
}

/// Atomic norm of `h` over the set `{a_a(ga) ⊗ a_z(gz)}` via its SDP
/// characterization, solved to high accuracy.
pub fn atomic_norm_exact<T: Real>(h: &CVector<T>, layout: (usize, usize)) -> Result<T> {
    let (la, lz) = layout;
    let l = la * lz;
    if l > MAX_REFERENCE_ELEMENTS {
        return Err(Error::SizeExceeded(format!("L = {l} > {MAX_REFERENCE_ELEMENTS}")));
    }
    if h.len() != l {
        return Err(Error::Dimension(format!("h has {} entries, layout has {l}", h.len())));
    }
    let scale = h.norm();
    if scale == T::zero() {
        return Ok(T::zero());
    }
    let hn = h / re(scale);
    let param = Parameterization::new(la, lz, false);
    let mut lin = DVector::zeros(param.dim());
    lin[0] = T::lit(0.5);
    lin[param.t_index()] = T::lit(0.5);
    let obj = Objective {
        lin,
        quad: None,
        h_offset: param.h_offset(),
    };
    let mut x0 = DVector::zeros(param.dim());
    x0[0] = T::one();
    x0[param.t_index()] = T::lit(2.0);
    let (x, _) = barrier_solve(&param, &obj, Some(&hn), x0)?;
    Ok(obj.value(&x) * scale)
}

/// Reference solution of the regularized problem
/// `min mu ||h||_A + 1/2 ||z - sqrt(P) Omega^T h||^2` at toy sizes.
pub fn solve_anm_reference<T: Real>(
    z: &CVector<T>,
    omega: &CMatrix<T>,
    tx_power: T,
    mu: T,
    layout: (usize, usize),
) -> Result<ReferenceSolution<T>> {
    let (la, lz) = layout;
    let l = la * lz;
    if l > MAX_REFERENCE_ELEMENTS {
        return Err(Error::SizeExceeded(format!("L = {l} > {MAX_REFERENCE_ELEMENTS}")));
    }
    if omega.nrows() != l || omega.ncols() != z.len() {
        return Err(Error::Dimension("profile matrix does not match z and layout".into()));
    }
    let znorm = z.norm();
    if znorm == T::zero() {
        return Ok(ReferenceSolution {
            h: CVector::zeros(l),
            u: Toeplitz2Params::zeros(la, lz),
            t: T::zero(),
            objective: T::zero(),
            gap: T::zero(),
        });
    }
    let sqrt_p = tx_power.sqrt();
    let zt = z / re(znorm);
    let mu_s = mu / (sqrt_p * znorm);
    let b = omega.transpose();
    let g = b.adjoint() * &b;
    let bz = b.adjoint() * &zt;

    let param = Parameterization::new(la, lz, true);
    let mut lin = DVector::zeros(param.dim());
    lin[0] = mu_s / T::lit(2.0);
    lin[param.t_index()] = mu_s / T::lit(2.0);
    // 1/2 ||zt - B h||^2 in real coordinates (re_0, im_0, re_1, im_1, ...)
    let mut q = DMatrix::zeros(2 * l, 2 * l);
    let mut qlin = DVector::zeros(2 * l);
    for i in 0..l {
        qlin[2 * i] = -bz[i].re;
        qlin[2 * i + 1] = -bz[i].im;
        for k in 0..l {
            let gik = g[(i, k)];
            q[(2 * i, 2 * k)] = gik.re;
            q[(2 * i, 2 * k + 1)] = -gik.im;
            q[(2 * i + 1, 2 * k)] = gik.im;
            q[(2 * i + 1, 2 * k + 1)] = gik.re;
        }
    }
    let obj = Objective {
        lin,
        quad: Some((q, qlin, zt.norm_squared() / T::lit(2.0))),
        h_offset: param.h_offset(),
    };
    let mut x0 = DVector::zeros(param.dim());
    x0[0] = T::one();
    x0[param.t_index()] = T::one();
    let (x, gap) = barrier_solve(&param, &obj, None, x0)?;

    let kappa = znorm / sqrt_p;
    let mut u = param.toeplitz(&x);
    u.scale(kappa);
    let h = param.h(&x, None) * re(kappa);
    let t = x[param.t_index()] * kappa;
    let objective = super::solver::anm_objective(z, omega, tx_power, mu, &u, &h, t);
    Ok(ReferenceSolution {
        h,
        u,
        t,
        objective,
        gap: gap * tx_power * kappa * kappa,
    })
}
