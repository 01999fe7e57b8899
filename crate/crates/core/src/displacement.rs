//! Fock-basis matrix elements of `exp(i * lambda * (a + a^dag))`.
//!
//! For `m >= n` the displacement operator `D(alpha)` with `alpha = i*lambda`
//! has elements
//!
//! ```text
//! <m|D|n> = i^(m-n) * exp(-lambda^2/2) * lambda^(m-n) * sqrt(n!/m!) * L_n^(m-n)(lambda^2)
//! ```
//!
//! and the matrix is symmetric. Everything here works with the real factor
//! `R_mn` (the element without the `i^|m-n|` phase), computed in log space so
//! that large photon indices neither overflow nor underflow prematurely.

use alloc::vec;
use alloc::vec::Vec;
#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Dense row-major square table of real displacement factors `R_mn`.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementTable {
    dim: usize,
    data: Vec<f64>,
}

impl DisplacementTable {
    /// Builds `R_mn` for `0 <= m, n < dim`. `lambda` may be negative; the
    /// sign enters as `sign(lambda)^|m-n|`.
    pub fn new(lambda: f64, dim: usize) -> Self {
        let mut data = vec![0.0; dim * dim];
        let x = lambda * lambda;
        if lambda == 0.0 {
            for m in 0..dim {
                data[m * dim + m] = 1.0;
            }
            return DisplacementTable { dim, data };
        }
        let ln_abs = lambda.abs().ln();
        let ln_fact = ln_factorials(2 * dim);
        for d in 0..dim {
            let sign = if lambda < 0.0 && d % 2 == 1 {
                -1.0
            } else {
                1.0
            };
            let df = d as f64;
            // Upward recurrence in the lower index of L_j^(d)(x).
            let mut l_prev = 0.0;
            let mut l_cur = 1.0;
            for j in 0..dim - d {
                if j == 1 {
                    l_prev = l_cur;
                    l_cur = 1.0 + df - x;
                } else if j > 1 {
                    let jf = (j - 1) as f64;
                    let next =
                        ((2.0 * jf + 1.0 + df - x) * l_cur - (jf + df) * l_prev) / (jf + 1.0);
                    l_prev = l_cur;
                    l_cur = next;
                }
                let ln_pref = -0.5 * x + df * ln_abs + 0.5 * (ln_fact[j] - ln_fact[j + d]);
                let value = sign * ln_pref.exp() * l_cur;
                let (m, n) = (j + d, j);
                data[m * dim + n] = value;
                data[n * dim + m] = value;
            }
        }
        DisplacementTable { dim, data }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize) -> f64 {
        self.data[m * self.dim + n]
    }
}

/// Phase factor `Re(i^d * exp(-i*phase)) = cos(d*pi/2 - phase)`.
#[inline]
pub fn phase_factor(d: usize, phase: f64) -> f64 {
    match d % 4 {
        0 => phase.cos(),
        1 => phase.sin(),
        2 => -phase.cos(),
        _ => -phase.sin(),
    }
}

/// Row-major matrix of `cos(lambda * (a + a^dag) - phase)` in the first
/// `dim` Fock states.
pub fn cos_matrix(lambda: f64, phase: f64, dim: usize) -> Vec<f64> {
    let table = DisplacementTable::new(lambda, dim);
    let mut out = vec![0.0; dim * dim];
    for m in 0..dim {
        for n in 0..dim {
            out[m * dim + n] = phase_factor(m.abs_diff(n), phase) * table.get(m, n);
        }
    }
    out
}

fn ln_factorials(n: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: `cos(lambda X - phase)` by diagonalizing the
    /// position operator in a much larger Fock space.
    fn cos_by_eigendecomposition(lambda: f64, phase: f64, dim: usize, big: usize) -> Vec<f64> {
        let x = faer::Mat::<f64>::from_fn(big, big, |i, j| {
            if i + 1 == j {
                (j as f64).sqrt()
            } else if j + 1 == i {
                (i as f64).sqrt()
            } else {
                0.0
            }
        });
        let evd = x.self_adjoint_eigen(faer::Side::Lower).unwrap();
        let s = evd.S().column_vector();
        let u = evd.U();
        let mut out = vec![0.0; dim * dim];
        for m in 0..dim {
            for n in 0..dim {
                let mut acc = 0.0;
                for k in 0..big {
                    acc += u[(m, k)] * u[(n, k)] * (lambda * s[k] - phase).cos();
                }
                out[m * dim + n] = acc;
            }
        }
        out
    }

    #[test]
    fn matches_matrix_function_oracle() {
        for &(lambda, phase) in &[
            (1.678, 0.3),
            (0.05, 2.0),
            (-0.9, 1.1),
            (2.2, core::f64::consts::PI),
        ] {
            let dim = 20;
            let got = cos_matrix(lambda, phase, dim);
            let want = cos_by_eigendecomposition(lambda, phase, dim, 260);
            for (g, w) in got.iter().zip(&want) {
                assert!(
                    (g - w).abs() < 1e-9,
                    "lambda {lambda} phase {phase}: {g} vs {w}"
                );
            }
        }
    }

    #[test]
    fn zero_lambda_is_identity() {
        let t = DisplacementTable::new(0.0, 5);
        for m in 0..5 {
            for n in 0..5 {
                assert_eq!(t.get(m, n), if m == n { 1.0 } else { 0.0 });
            }
        }
    }

    #[test]
    fn large_indices_stay_finite() {
        let t = DisplacementTable::new(0.02, 220);
        for m in 0..220 {
            for n in 0..220 {
                assert!(t.get(m, n).is_finite());
            }
        }
        // Diagonal is exp(-x/2) L_n(x); sum the Laguerre series directly.
        let x: f64 = 0.02 * 0.02;
        let (mut term, mut series) = (1.0, 1.0);
        for k in 0..40 {
            term *= -x * (200 - k) as f64 / ((k + 1) * (k + 1)) as f64;
            series += term;
        }
        assert!((t.get(200, 200) - (-x / 2.0).exp() * series).abs() < 1e-12);
    }

    #[test]
    fn first_row_is_coherent_state_amplitudes() {
        // <m|D(i lambda)|0> = exp(-lambda^2/2) (i lambda)^m / sqrt(m!)
        let lambda: f64 = 1.3;
        let t = DisplacementTable::new(lambda, 12);
        let mut fact = 1.0;
        for m in 0..12 {
            if m > 0 {
                fact *= m as f64;
            }
            let want = (-0.5 * lambda * lambda).exp() * lambda.powi(m as i32) / fact.sqrt();
            assert!((t.get(m, 0) - want).abs() < 1e-13);
        }
    }
}
