//! Exponent sequences.
//!
//! `theta` is defined by `theta_0 = 0` and
//! `theta_{n+1} = 1/s + (d/s) max_{0<=k<=n} (theta_k + theta_{n-k})`;
//! `beta^{theta_n}` is the spatial scale reachable in `n` hops for large `beta`.
//! `vartheta` is defined by `vartheta_0 = 1` and
//! `vartheta_{n+1} = (2 gamma)^{-1} (vartheta_{floor(n/2)} + vartheta_{ceil(n/2)})`.
//!
//! All arithmetic is `f64`; the recursions only add positive terms so the three
//! routes for `theta` agree to about 1e-12 relative.

use crate::model::ModelParams;

/// Literal evaluation of the defining recursion, `O(n)` scan per term.
pub fn theta_recursive(params: &ModelParams, n_max: usize) -> Vec<f64> {
    let s = params.s();
    let d = params.d() as f64;
    let mut theta = Vec::with_capacity(n_max + 1);
    theta.push(0.0);
    for n in 0..n_max {
        let best = (0..=n)
            .map(|k| theta[k] + theta[n - k])
            .fold(f64::NEG_INFINITY, f64::max);
        theta.push(1.0 / s + d / s * best);
    }
    theta
}

/// Halving recursion: `theta_{2n} = 1/s + (d/s)(theta_n + theta_{n-1})`,
/// `theta_{2n+1} = 1/s + (2d/s) theta_n`.
pub fn theta_fast(params: &ModelParams, n_max: usize) -> Vec<f64> {
    let s = params.s();
    let d = params.d() as f64;
    let mut theta = vec![0.0; n_max + 1];
    for m in 1..=n_max {
        let half = m / 2;
        theta[m] = if m % 2 == 0 {
            1.0 / s + d / s * (theta[half] + theta[half - 1])
        } else {
            1.0 / s + 2.0 * d / s * theta[half]
        };
    }
    theta
}

/// `theta_{2^n - 1} = (1/s) (1 - gamma^n)/(1 - gamma) gamma^{1-n}`.
pub fn theta_dyadic(params: &ModelParams, n: u32) -> f64 {
    let g = params.gamma();
    let n = n as i32;
    (1.0 - g.powi(n)) / (1.0 - g) * g.powi(1 - n) / params.s()
}

/// Index `n` of the dyadic block `2^n - 1 <= k < 2^{n+1} - 1` containing `k`.
pub fn block_index(k: u64) -> u32 {
    63 - (k + 1).leading_zeros()
}

/// Closed form at an arbitrary index: exact values at `2^n - 1`, linear in between.
pub fn theta_closed_form(params: &ModelParams, k: u64) -> f64 {
    let n = block_index(k);
    let lo = (1u64 << n) - 1;
    if k == lo {
        return theta_dyadic(params, n);
    }
    let width = (1u64 << n) as f64;
    let hi = (1u64 << (n + 1)) - 1;
    let a = (hi - k) as f64 / width;
    let b = (k - lo) as f64 / width;
    a * theta_dyadic(params, n) + b * theta_dyadic(params, n + 1)
}

pub fn vartheta(params: &ModelParams, n_max: usize) -> Vec<f64> {
    let inv = 1.0 / (2.0 * params.gamma());
    let mut v = Vec::with_capacity(n_max + 1);
    v.push(1.0);
    for n in 0..n_max {
        let next = inv * (v[n / 2] + v[n.div_ceil(2)]);
        v.push(next);
    }
    v
}

#[derive(Clone, Debug)]
pub struct ExponentTable {
    pub params: ModelParams,
    pub theta: Vec<f64>,
    pub vartheta: Vec<f64>,
}

impl ExponentTable {
    pub fn new(params: &ModelParams, n_max: usize) -> Self {
        Self {
            params: params.clone(),
            theta: theta_fast(params, n_max),
            vartheta: vartheta(params, n_max),
        }
    }

    pub fn n_max(&self) -> usize {
        self.theta.len() - 1
    }

    /// Largest absolute second difference `theta_{n+1} + theta_{n-1} - 2 theta_n`
    /// over `1 <= n < n_max` (never positive for a concave sequence).
    pub fn max_second_difference(&self) -> f64 {
        self.theta
            .windows(3)
            .map(|w| w[2] + w[0] - 2.0 * w[1])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RatioReport {
    /// `sup_{0<=n<n_max} vartheta_{ceil(n/2)} / vartheta_{n+1}` and its argmax.
    pub vartheta_ratio: (f64, usize),
    /// `sup_{1<=n<n_max} theta_{ceil(n/2)} / theta_{n+1}` and its argmax
    /// (at `n = 0` the ratio is `theta_0 / theta_1 = 0`).
    pub theta_ratio: (f64, usize),
    /// `sup_{1<=n<=n_max} vartheta_n / theta_n` and its argmax.
    pub vartheta_over_theta: (f64, usize),
    /// The `theta` ratio continued past `n_max` along `n = 2^{m+1} - 2`, where it
    /// equals `gamma (1 - gamma^m) / (1 - gamma^{m+1})`; the supremum is not
    /// attained and only approached as `m -> inf`.
    pub theta_ratio_dyadic_tail: f64,
}

fn argmax(it: impl Iterator<Item = (usize, f64)>) -> (f64, usize) {
    it.fold((f64::NEG_INFINITY, 0), |(bv, bi), (i, v)| if v > bv { (v, i) } else { (bv, bi) })
}

pub fn ratio_report(params: &ModelParams, n_max: usize) -> RatioReport {
    assert!(n_max >= 2, "ratio_report needs n_max >= 2");
    let theta = theta_fast(params, n_max);
    let vt = vartheta(params, n_max);
    let vartheta_ratio = argmax((0..n_max).map(|n| (n, vt[n.div_ceil(2)] / vt[n + 1])));
    let theta_ratio = argmax((1..n_max).map(|n| (n, theta[n.div_ceil(2)] / theta[n + 1])));
    let vartheta_over_theta = argmax((1..=n_max).map(|n| (n, vt[n] / theta[n])));

    let g = params.gamma();
    let mut tail = f64::NEG_INFINITY;
    for m in 1..2000 {
        let r = g * (1.0 - g.powi(m)) / (1.0 - g.powi(m + 1));
        tail = tail.max(r);
        if g.powi(m) < f64::EPSILON * 1e-3 {
            break;
        }
    }
    RatioReport {
        vartheta_ratio,
        theta_ratio,
        vartheta_over_theta,
        theta_ratio_dyadic_tail: tail,
    }
}

/// Least-squares slope of `log theta_n` against `log n` for `n` in `[lo, hi]`.
pub fn growth_exponent(params: &ModelParams, lo: usize, hi: usize) -> f64 {
    let theta = theta_fast(params, hi);
    let pts: Vec<(f64, f64)> = (lo.max(1)..=hi)
        .map(|n| ((n as f64).ln(), theta[n].ln()))
        .collect();
    crate::stats::ols_slope(&pts)
}
