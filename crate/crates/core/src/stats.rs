//! Numerical helpers: complementary error function, bounded
//! Levenberg-Marquardt least squares, and small summary statistics.

use alloc::vec;
use alloc::vec::Vec;

use faer::linalg::solvers::Solve;
use faer::Mat;

use crate::{Error, Result};
#[cfg(not(feature = "std"))]
use num_traits::Float;

pub fn erfc(x: f64) -> f64 {
    libm::erfc(x)
}

/// Standard normal upper tail `P(Z > x)`.
pub fn normal_sf(x: f64) -> f64 {
    0.5 * erfc(x / core::f64::consts::SQRT_2)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop when the relative cost decrease falls below this.
    pub ftol: f64,
    /// Stop when the relative parameter step falls below this.
    pub xtol: f64,
    /// Relative finite-difference step for the Jacobian.
    pub fd_step: f64,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            max_iter: 200,
            ftol: 1e-12,
            xtol: 1e-10,
            fd_step: 1e-6,
            lower: None,
            upper: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmFit {
    pub x: Vec<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    /// `s^2 (J^T J)^-1` with `s^2 = cost / (m - n)`; empty if singular or
    /// `m <= n`.
    pub covariance: Vec<f64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Parameters pinned at a bound at the solution.
    pub at_bound: Vec<bool>,
}

impl LmFit {
    pub fn std_err(&self, k: usize) -> Option<f64> {
        let n = self.x.len();
        self.covariance.get(k * n + k).map(|v| v.max(0.0).sqrt())
    }
}

fn clamp_to(x: &mut [f64], opts: &LmOptions) {
    for (k, v) in x.iter_mut().enumerate() {
        if let Some(lo) = &opts.lower {
            *v = v.max(lo[k]);
        }
        if let Some(hi) = &opts.upper {
            *v = v.min(hi[k]);
        }
    }
}

fn at_lower(x: &[f64], k: usize, opts: &LmOptions) -> bool {
    opts.lower.as_ref().is_some_and(|lo| (x[k] - lo[k]).abs() <= 1e-9 * x[k].abs().max(1e-12))
}

fn at_upper(x: &[f64], k: usize, opts: &LmOptions) -> bool {
    opts.upper.as_ref().is_some_and(|hi| (x[k] - hi[k]).abs() <= 1e-9 * x[k].abs().max(1e-12))
}

/// `grad_k` is the cost gradient component; descent moves against it.
fn pushes_out(x: &[f64], k: usize, grad_k: f64, opts: &LmOptions) -> bool {
    (at_lower(x, k, opts) && grad_k > 0.0) || (at_upper(x, k, opts) && grad_k < 0.0)
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Minimizes `sum r_i(x)^2` with `m` residuals by Levenberg-Marquardt with a
/// central-difference Jacobian; box bounds are enforced by projection.
pub fn levenberg_marquardt<F>(
    mut residuals: F,
    x0: &[f64],
    m: usize,
    opts: &LmOptions,
) -> Result<LmFit>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    clamp_to(&mut x, opts);
    let mut r = vec![0.0; m];
    residuals(&x, &mut r)?;
    let mut cost = sum_sq(&r);
    if !cost.is_finite() {
        return Err(Error::invalid("non-finite residuals at the starting point"));
    }
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;
    let mut jac = Mat::<f64>::zeros(m, n);
    let mut rp = vec![0.0; m];
    let mut rm = vec![0.0; m];
    for it in 0..opts.max_iter {
        iterations = it + 1;
        jacobian(&mut residuals, &x, &mut jac, &mut rp, &mut rm, opts)?;
        let jtj = jac.transpose() * &jac;
        let rv = Mat::<f64>::from_fn(m, 1, |i, _| r[i]);
        let mut jtr = jac.transpose() * &rv;
        // Parameters on a bound with the descent direction pointing outward
        // are held fixed for this iteration.
        let active: Vec<bool> = (0..n).map(|k| pushes_out(&x, k, jtr[(k, 0)], opts)).collect();
        for k in (0..n).filter(|&k| active[k]) {
            jtr[(k, 0)] = 0.0;
        }
        let mut improved = false;
        for _ in 0..30 {
            let a = Mat::<f64>::from_fn(n, n, |i, j| {
                if active[i] || active[j] {
                    if i == j { 1.0 } else { 0.0 }
                } else if i == j {
                    jtj[(i, j)] * (1.0 + lambda) + 1e-300
                } else {
                    jtj[(i, j)]
                }
            });
            let step = a.partial_piv_lu().solve(&jtr);
            let mut xn: Vec<f64> = (0..n).map(|k| x[k] - step[(k, 0)]).collect();
            clamp_to(&mut xn, opts);
            if xn.iter().any(|v| !v.is_finite()) {
                lambda *= 10.0;
                continue;
            }
            let ok = residuals(&xn, &mut rp).is_ok();
            let cn = if ok { sum_sq(&rp) } else { f64::INFINITY };
            if cn.is_finite() && cn <= cost {
                let dx: f64 = (0..n)
                    .map(|k| ((xn[k] - x[k]) / x[k].abs().max(1e-12)).powi(2))
                    .sum::<f64>()
                    .sqrt();
                let df = (cost - cn) / cost.max(1e-300);
                x = xn;
                r.copy_from_slice(&rp);
                cost = cn;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                if df < opts.ftol || dx < opts.xtol {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No downhill step at any damping: a stationary point.
            converged = true;
            break;
        }
        if converged || cost == 0.0 {
            converged = true;
            break;
        }
    }
    jacobian(&mut residuals, &x, &mut jac, &mut rp, &mut rm, opts)?;
    let covariance = if m > n {
        let jtj = jac.transpose() * &jac;
        let s2 = cost / (m - n) as f64;
        let inv = jtj.partial_piv_lu().solve(Mat::<f64>::identity(n, n));
        let flat: Vec<f64> = (0..n * n).map(|k| inv[(k / n, k % n)] * s2).collect();
        if flat.iter().all(|v| v.is_finite()) {
            flat
        } else {
            Vec::new()
        }
    } else {
        Vec::new()
    };
    let at_bound = (0..n).map(|k| at_lower(&x, k, opts) || at_upper(&x, k, opts)).collect();
    Ok(LmFit {
        x,
        cost,
        covariance,
        residuals: r,
        iterations,
        converged,
        at_bound,
    })
}

fn jacobian<F>(
    f: &mut F,
    x: &[f64],
    jac: &mut Mat<f64>,
    rp: &mut [f64],
    rm: &mut [f64],
    opts: &LmOptions,
) -> Result<()>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let mut xp = x.to_vec();
    for k in 0..x.len() {
        let h = opts.fd_step * x[k].abs().max(1e-8);
        xp[k] = x[k] + h;
        f(&xp, rp)?;
        xp[k] = x[k] - h;
        f(&xp, rm)?;
        xp[k] = x[k];
        for i in 0..rp.len() {
            jac[(i, k)] = (rp[i] - rm[i]) / (2.0 * h);
        }
    }
    Ok(())
}
