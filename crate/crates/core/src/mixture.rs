//! Gaussian mixtures: least-squares fits of 1-D quadrature histograms with a
//! shared width, and an EM fit of the 2-D IQ cloud used to rotate traces.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::stats::{erfc, levenberg_marquardt, LmOptions};
use crate::{Error, Result};
#[cfg(not(feature = "std"))]
use num_traits::Float;

/// Misassignment probability at the midpoint threshold for two Gaussians of
/// width `sigma` whose centers are `d` apart.
pub fn gaussian_overlap(d: f64, sigma: f64) -> f64 {
    0.5 * erfc(d.abs() / (2.0 * core::f64::consts::SQRT_2 * sigma))
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Histogram {
    pub centers: Vec<f64>,
    pub counts: Vec<f64>,
}

impl Histogram {
    /// Equal-width bins over `[lo, hi)`; values outside are dropped.
    pub fn from_samples(xs: &[f64], lo: f64, hi: f64, bins: usize) -> Self {
        let width = (hi - lo) / bins as f64;
        let mut counts = vec![0.0; bins];
        for &x in xs {
            let k = ((x - lo) / width).floor();
            if k >= 0.0 && (k as usize) < bins {
                counts[k as usize] += 1.0;
            }
        }
        let centers = (0..bins).map(|k| lo + (k as f64 + 0.5) * width).collect();
        Histogram { centers, counts }
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn bin_width(&self) -> f64 {
        if self.centers.len() < 2 {
            1.0
        } else {
            self.centers[1] - self.centers[0]
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MixtureFit {
    /// Normalized to one.
    pub weights: Vec<f64>,
    pub weight_errors: Vec<f64>,
    pub means: Vec<f64>,
    /// Shared component width.
    pub sigma: f64,
    /// Fitted total number of counts.
    pub total: f64,
    /// Standard deviation of the fit residuals as a fraction of all counts.
    pub residual_fraction: f64,
}

impl MixtureFit {
    pub fn density(&self, x: f64) -> f64 {
        let norm = 1.0 / (self.sigma * (2.0 * core::f64::consts::PI).sqrt());
        self.weights
            .iter()
            .zip(&self.means)
            .map(|(w, m)| w * norm * (-0.5 * ((x - m) / self.sigma).powi(2)).exp())
            .sum()
    }
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    // First component carries logit 0.
    let mut w = Vec::with_capacity(logits.len() + 1);
    w.push(1.0);
    w.extend(logits.iter().map(|l| l.exp()));
    let s: f64 = w.iter().sum();
    w.iter().map(|v| v / s).collect()
}

/// Weighted k-means on histogram bins; returns sorted centers.
fn kmeans(h: &Histogram, init: &[f64]) -> Vec<f64> {
    let mut c = init.to_vec();
    for _ in 0..50 {
        let mut sum = vec![0.0; c.len()];
        let mut wt = vec![0.0; c.len()];
        for (x, n) in h.centers.iter().zip(&h.counts) {
            let k = (0..c.len())
                .min_by(|&a, &b| (x - c[a]).abs().total_cmp(&(x - c[b]).abs()))
                .unwrap();
            sum[k] += n * x;
            wt[k] += n;
        }
        for k in 0..c.len() {
            if wt[k] > 0.0 {
                c[k] = sum[k] / wt[k];
            }
        }
    }
    c.sort_by(|a, b| a.total_cmp(b));
    c
}

fn quantile(h: &Histogram, q: f64) -> f64 {
    let total = h.total();
    let mut acc = 0.0;
    for (x, n) in h.centers.iter().zip(&h.counts) {
        acc += n;
        if acc >= q * total {
            return *x;
        }
    }
    *h.centers.last().unwrap()
}

/// Positions of the `k` highest local maxima of the 5-bin smoothed histogram.
fn peaks(h: &Histogram, k: usize) -> Vec<f64> {
    let n = h.counts.len();
    let sm: Vec<f64> = (0..n)
        .map(|i| {
            h.counts[i.saturating_sub(2)..(i + 3).min(n)]
                .iter()
                .sum::<f64>()
        })
        .collect();
    let mut idx: Vec<usize> = (0..n)
        .filter(|&i| {
            sm[i] > 0.0 && (i == 0 || sm[i] >= sm[i - 1]) && (i + 1 == n || sm[i] > sm[i + 1])
        })
        .collect();
    idx.sort_by(|&a, &b| sm[b].total_cmp(&sm[a]));
    let mut out: Vec<f64> = idx.iter().take(k).map(|&i| h.centers[i]).collect();
    out.sort_by(|a, b| a.total_cmp(b));
    out
}

/// Least-squares fit of `components` shared-width Gaussians to a histogram,
/// with Poisson weights. Several deterministic starts are tried; the best
/// converged fit wins.
pub fn fit_histogram(h: &Histogram, components: usize) -> Result<MixtureFit> {
    fit_histogram_from(h, components, &[], None)
}

/// As [`fit_histogram`], with `guess` (one mean per component) tried first.
/// With `window`, the guess is the only start and each mean is confined to
/// `guess ± window`, which keeps an empty component where it is expected.
pub fn fit_histogram_from(
    h: &Histogram,
    components: usize,
    guess: &[f64],
    window: Option<f64>,
) -> Result<MixtureFit> {
    if !(2..=3).contains(&components) {
        return Err(Error::invalid("mixture fits support 2 or 3 components"));
    }
    let total = h.total();
    let nbins = h.centers.len();
    let nparams = 2 * components + 1;
    if nbins <= nparams || total <= 0.0 {
        return Err(Error::InsufficientData {
            needed: nparams + 1,
            got: nbins,
        });
    }
    let width = h.bin_width();
    let spread = quantile(h, 0.99) - quantile(h, 0.01);
    let mut starts: Vec<Vec<f64>> = Vec::new();
    if guess.len() == components {
        starts.push(guess.to_vec());
    }
    let bounded = window.is_some() && guess.len() == components;
    let pk = peaks(h, components);
    if pk.len() == components && !bounded {
        starts.push(pk);
    }
    if !bounded {
        starts.extend(
            [
                [0.1, 0.5, 0.9],
                [0.02, 0.5, 0.98],
                [0.25, 0.5, 0.75],
                [0.05, 0.3, 0.95],
            ]
            .iter()
            .map(|qs| {
                let init: Vec<f64> = if components == 2 {
                    vec![quantile(h, qs[0]), quantile(h, qs[2])]
                } else {
                    qs.iter().map(|&q| quantile(h, q)).collect()
                };
                kmeans(h, &init)
            }),
        );
    }
    let (lower, upper) = match window {
        Some(w) if bounded => {
            let mut lo = vec![f64::NEG_INFINITY; nparams];
            let mut hi = vec![f64::INFINITY; nparams];
            for k in 0..components {
                lo[components + k] = guess[k] - w;
                hi[components + k] = guess[k] + w;
            }
            (Some(lo), Some(hi))
        }
        _ => (None, None),
    };
    let weights_sd: Vec<f64> = h.counts.iter().map(|c| c.max(1.0).sqrt()).collect();
    let model = |p: &[f64], x: f64| -> f64 {
        let w = softmax(&p[1..components]);
        let sigma = p[2 * components].exp();
        let norm = p[0] * width / (sigma * (2.0 * core::f64::consts::PI).sqrt());
        (0..components)
            .map(|k| w[k] * norm * (-0.5 * ((x - p[components + k]) / sigma).powi(2)).exp())
            .sum()
    };
    let mut best: Option<(f64, Vec<f64>, Vec<f64>)> = None;
    let mut reasons = String::new();
    for start in &starts {
        let sep = start
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min);
        let sigma0 = (0.25 * sep).max(1e-3 * spread).max(0.5 * width);
        let mut x0 = vec![total];
        x0.extend(core::iter::repeat_n(0.0, components - 1));
        x0.extend(start.iter());
        x0.push(sigma0.ln());
        let fit = levenberg_marquardt(
            |p, r| {
                for i in 0..nbins {
                    r[i] = (model(p, h.centers[i]) - h.counts[i]) / weights_sd[i];
                }
                Ok(())
            },
            &x0,
            nbins,
            &LmOptions {
                max_iter: 300,
                lower: lower.clone(),
                upper: upper.clone(),
                ..Default::default()
            },
        );
        match fit {
            Ok(f) if f.x.iter().all(|v| v.is_finite()) => {
                if best.as_ref().is_none_or(|b| f.cost < b.0) {
                    best = Some((f.cost, f.x.clone(), f.covariance.clone()));
                }
            }
            Ok(_) => reasons.push_str("non-finite parameters; "),
            Err(e) => {
                use core::fmt::Write;
                let _ = write!(reasons, "{e}; ");
            }
        }
    }
    let (_, p, cov) = best.ok_or(Error::FitDiverged {
        reason: reasons,
        initializations: starts.len(),
    })?;
    let weights = softmax(&p[1..components]);
    let mut order: Vec<usize> = (0..components).collect();
    order.sort_by(|&a, &b| p[components + a].total_cmp(&p[components + b]));
    let weight_errors = weight_errors(&weights, &cov, nparams, components);
    let resid: Vec<f64> = (0..nbins)
        .map(|i| h.counts[i] - model(&p, h.centers[i]))
        .collect();
    let rm = resid.iter().sum::<f64>() / nbins as f64;
    let rsd = (resid.iter().map(|r| (r - rm) * (r - rm)).sum::<f64>() / nbins as f64).sqrt();
    Ok(MixtureFit {
        weights: order.iter().map(|&k| weights[k]).collect(),
        weight_errors: order.iter().map(|&k| weight_errors[k]).collect(),
        means: order.iter().map(|&k| p[components + k]).collect(),
        sigma: p[2 * components].exp(),
        total: p[0],
        residual_fraction: rsd / total,
    })
}

/// Delta-method errors of the softmax weights.
fn weight_errors(w: &[f64], cov: &[f64], n: usize, k: usize) -> Vec<f64> {
    if cov.len() != n * n {
        return vec![f64::NAN; k];
    }
    (0..k)
        .map(|i| {
            // d w_i / d logit_j (logits are parameters 1..k)
            let grad: Vec<f64> = (1..k)
                .map(|j| {
                    if i == j {
                        w[i] * (1.0 - w[j])
                    } else {
                        -w[i] * w[j]
                    }
                })
                .collect();
            let mut var = 0.0;
            for a in 0..k - 1 {
                for b in 0..k - 1 {
                    var += grad[a] * grad[b] * cov[(a + 1) * n + (b + 1)];
                }
            }
            var.max(0.0).sqrt()
        })
        .collect()
}

/// Two isotropic Gaussians with a shared width in the IQ plane.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct IqMixture {
    pub weights: [f64; 2],
    pub means: [[f64; 2]; 2],
    pub sigma: f64,
}

impl IqMixture {
    /// Angle of the line joining the two centers, measured from the Q axis.
    /// Rotating samples by this angle puts the whole signal into Q.
    pub fn rotation_angle(&self) -> f64 {
        let di = self.means[1][0] - self.means[0][0];
        let dq = self.means[1][1] - self.means[0][1];
        // angle of (di, dq) from the Q axis
        let a = di.atan2(dq);
        // fold to (-pi/2, pi/2]: the sign of the axis is irrelevant
        if a > core::f64::consts::FRAC_PI_2 {
            a - core::f64::consts::PI
        } else if a <= -core::f64::consts::FRAC_PI_2 {
            a + core::f64::consts::PI
        } else {
            a
        }
    }
}

/// Rotates `(i, q)` by `angle` (counter-clockwise in the (Q, I) sense used by
/// [`IqMixture::rotation_angle`]): the direction at `angle` from Q maps to Q.
pub fn rotate(i: f64, q: f64, angle: f64) -> (f64, f64) {
    let (s, c) = angle.sin_cos();
    (i * c - q * s, i * s + q * c)
}

/// EM fit of [`IqMixture`], initialized by splitting along the principal axis.
pub fn fit_iq_mixture(i: &[f64], q: &[f64], max_iter: usize) -> Result<IqMixture> {
    let n = i.len();
    if n < 10 || q.len() != n {
        return Err(Error::InsufficientData { needed: 10, got: n });
    }
    let nf = n as f64;
    let (mi, mq) = (i.iter().sum::<f64>() / nf, q.iter().sum::<f64>() / nf);
    let (mut sii, mut sqq, mut siq) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let (a, b) = (i[k] - mi, q[k] - mq);
        sii += a * a;
        sqq += b * b;
        siq += a * b;
    }
    // principal axis of the 2x2 covariance
    let theta = 0.5 * (2.0 * siq).atan2(sii - sqq);
    let (ux, uy) = (theta.cos(), theta.sin());
    let mut acc = [[0.0; 3]; 2];
    for k in 0..n {
        let side = usize::from((i[k] - mi) * ux + (q[k] - mq) * uy > 0.0);
        acc[side][0] += i[k];
        acc[side][1] += q[k];
        acc[side][2] += 1.0;
    }
    if acc[0][2] == 0.0 || acc[1][2] == 0.0 {
        return Err(Error::FitDiverged {
            reason: "single cluster".into(),
            initializations: 1,
        });
    }
    let mut mix = IqMixture {
        weights: [acc[0][2] / nf, acc[1][2] / nf],
        means: [
            [acc[0][0] / acc[0][2], acc[0][1] / acc[0][2]],
            [acc[1][0] / acc[1][2], acc[1][1] / acc[1][2]],
        ],
        sigma: ((sii + sqq) / (2.0 * nf)).sqrt().max(1e-12),
    };
    let mut prev_ll = f64::NEG_INFINITY;
    for _ in 0..max_iter {
        let mut s = [[0.0; 3]; 2];
        let mut ss = 0.0;
        let mut ll = 0.0;
        let inv2s2 = 0.5 / (mix.sigma * mix.sigma);
        for k in 0..n {
            let d0 = (i[k] - mix.means[0][0]).powi(2) + (q[k] - mix.means[0][1]).powi(2);
            let d1 = (i[k] - mix.means[1][0]).powi(2) + (q[k] - mix.means[1][1]).powi(2);
            let m = d0.min(d1);
            let a0 = mix.weights[0] * (-(d0 - m) * inv2s2).exp();
            let a1 = mix.weights[1] * (-(d1 - m) * inv2s2).exp();
            let z = a0 + a1;
            let r1 = a1 / z;
            let r0 = 1.0 - r1;
            ll += z.ln() - m * inv2s2;
            s[0][0] += r0 * i[k];
            s[0][1] += r0 * q[k];
            s[0][2] += r0;
            s[1][0] += r1 * i[k];
            s[1][1] += r1 * q[k];
            s[1][2] += r1;
            ss += r0 * d0 + r1 * d1;
        }
        if s[0][2] < 1e-9 || s[1][2] < 1e-9 {
            return Err(Error::FitDiverged {
                reason: "component collapsed".into(),
                initializations: 1,
            });
        }
        mix.weights = [s[0][2] / nf, s[1][2] / nf];
        mix.means = [
            [s[0][0] / s[0][2], s[0][1] / s[0][2]],
            [s[1][0] / s[1][2], s[1][1] / s[1][2]],
        ];
        mix.sigma = (ss / (2.0 * nf)).sqrt();
        ll -= nf * (2.0 * mix.sigma * mix.sigma).ln();
        if (ll - prev_ll).abs() <= 1e-10 * ll.abs() {
            break;
        }
        prev_ll = ll;
    }
    Ok(mix)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    fn rng() -> rand_chacha::ChaCha8Rng {
        rand_chacha::ChaCha8Rng::seed_from_u64(7)
    }

    #[test]
    fn overlap_examples() {
        assert!((gaussian_overlap(6.0, 1.0) - 1.349_898e-3).abs() < 1e-8);
        assert_eq!(gaussian_overlap(0.0, 1.0), 0.5);
    }

    #[test]
    fn histogram_fit_recovers_two_components() {
        let mut r = rng();
        let n = Normal::new(0.0, 1.0).unwrap();
        let mut xs = Vec::new();
        for k in 0..40_000 {
            let c = if k % 4 == 0 { -3.0 } else { 3.0 };
            xs.push(c + n.sample(&mut r));
        }
        let h = Histogram::from_samples(&xs, -8.0, 8.0, 160);
        let fit = fit_histogram(&h, 2).unwrap();
        assert!((fit.weights[0] - 0.25).abs() < 0.01, "{fit:?}");
        assert!((fit.means[0] + 3.0).abs() < 0.03 && (fit.means[1] - 3.0).abs() < 0.03);
        assert!((fit.sigma - 1.0).abs() < 0.02);
        assert!((fit.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        assert!(fit.residual_fraction < 1e-3);
    }

    #[test]
    fn three_component_fit_finds_small_cloud() {
        let mut r = rng();
        let n = Normal::new(0.0, 1.0).unwrap();
        let mut xs = Vec::new();
        for k in 0..100_000 {
            let c = match k % 100 {
                0 => -12.0,
                1..=10 => 6.0,
                _ => -3.0,
            };
            xs.push(c + n.sample(&mut r));
        }
        let h = Histogram::from_samples(&xs, -18.0, 12.0, 300);
        let fit = fit_histogram(&h, 3).unwrap();
        assert!(
            (fit.weights[0] - 0.01).abs() < 3.0 * fit.weight_errors[0] + 1e-3,
            "{fit:?}"
        );
        assert!((fit.means[0] + 12.0).abs() < 0.2);
    }

    #[test]
    fn iq_mixture_rotation() {
        let mut r = rng();
        let n = Normal::new(0.0, 0.5).unwrap();
        let angle: f64 = 0.4;
        let (mut i, mut q) = (Vec::new(), Vec::new());
        for k in 0..20_000 {
            let c = if k % 3 == 0 { -2.0 } else { 2.0 };
            // signal along Q, then rotated by -angle
            let (a, b) = rotate(n.sample(&mut r), c + n.sample(&mut r), -angle);
            i.push(a);
            q.push(b);
        }
        let mix = fit_iq_mixture(&i, &q, 200).unwrap();
        let got = mix.rotation_angle();
        assert!(
            (got - angle).abs() < 0.01 || (got - angle).abs() > core::f64::consts::PI - 0.01,
            "{got}"
        );
        assert!((mix.sigma - 0.5).abs() < 0.01);
        let (ri, _) = rotate(mix.means[0][0], mix.means[0][1], got);
        assert!(ri.abs() < 0.02);
    }
}
