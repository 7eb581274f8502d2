//! The auxiliary variables `Z` and `W` and the constant `c0`.
//!
//! `c0` is the `2d`-dimensional volume of `{(z, z') : |z|^{2d} + |z'|^{2d} <= 1}`.
//! `Z` has density `sqrt(eta) exp(-eta c0 |z|^{2d})` on `R^d`, and
//! `W = Z_0 prod_{n>=1} |Z_n|^{gamma_1 ... gamma_n}` for i.i.d. copies of `Z`.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use crate::error::{Error, Result};
use crate::model::{ModelParams, Norm};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum C0Method {
    Quadrature,
    MonteCarlo,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Estimate {
    pub value: f64,
    pub std_error: f64,
}

/// `pi V_d^2 / 4` with `V_d` the volume of the unit ball of `norm`.
///
/// Follows from integrating out `z'` (a ball of radius `(1 - |z|^{2d})^{1/(2d)}`)
/// and then the radial variable of `z`, which leaves `V_d^2 B(1/2, 3/2) / 2`.
pub fn c0_closed_form(d: usize, norm: Norm) -> f64 {
    let v = norm.unit_ball_volume(d);
    std::f64::consts::PI * v * v / 4.0
}

pub const MIN_C0_BUDGET: u64 = 10_000;

pub fn compute_c0(params: &ModelParams, method: C0Method, budget: u64, seed: u64) -> Result<Estimate> {
    c0_region_volume(params.d(), params.norm(), 1.0, method, budget, seed)
}

/// Volume of `{|z|^{2d} + |z'|^{2d} <= level}`; equals `c0 * level` by scaling.
pub fn c0_region_volume(
    d: usize,
    norm: Norm,
    level: f64,
    method: C0Method,
    budget: u64,
    seed: u64,
) -> Result<Estimate> {
    if budget < MIN_C0_BUDGET {
        return Err(Error::Param(format!("c0 budget {budget} below minimum {MIN_C0_BUDGET}")));
    }
    if !(level > 0.0) {
        return Err(Error::Param(format!("region level must be positive, got {level}")));
    }
    let half = level.powf(1.0 / (2.0 * d as f64));
    match method {
        C0Method::MonteCarlo => {
            let mut rng = crate::rng::PhiloxStream::for_domain(seed, crate::rng::DOMAIN_AUX, 0xC0);
            let mut z = vec![0.0; d];
            let mut w = vec![0.0; d];
            let mut hits = 0u64;
            let e = 2 * d as i32;
            for _ in 0..budget {
                for c in z.iter_mut().chain(w.iter_mut()) {
                    *c = half * (2.0 * rng.uniform() - 1.0);
                }
                if norm.eval(&z).powi(e) + norm.eval(&w).powi(e) <= level {
                    hits += 1;
                }
            }
            let cube = (2.0 * half).powi(2 * d as i32);
            let p = hits as f64 / budget as f64;
            Ok(Estimate {
                value: cube * p,
                std_error: cube * (p * (1.0 - p) / budget as f64).sqrt(),
            })
        }
        C0Method::Quadrature => {
            // Inner z' integral in closed form: V_d (level - |z|^{2d})^{1/2}.
            // Outer midpoint rule on the cube, error from halving the grid.
            let vol = norm.unit_ball_volume(d);
            let mut m = ((budget as f64 * 0.8).powf(1.0 / d as f64)).floor() as u64;
            m -= m % 2;
            let fine = midpoint_grid(d, m, half, |z| {
                let r = level - norm.eval(z).powi(2 * d as i32);
                if r > 0.0 { vol * r.sqrt() } else { 0.0 }
            });
            let coarse = midpoint_grid(d, m / 2, half, |z| {
                let r = level - norm.eval(z).powi(2 * d as i32);
                if r > 0.0 { vol * r.sqrt() } else { 0.0 }
            });
            Ok(Estimate {
                value: fine,
                std_error: (fine - coarse).abs(),
            })
        }
    }
}

fn midpoint_grid<F: Fn(&[f64]) -> f64>(d: usize, m: u64, half: f64, f: F) -> f64 {
    let h = 2.0 * half / m as f64;
    let total = m.pow(d as u32);
    let mut z = vec![0.0; d];
    let mut acc = 0.0;
    for k in 0..total {
        let mut rest = k;
        for c in z.iter_mut() {
            *c = -half + ((rest % m) as f64 + 0.5) * h;
            rest /= m;
        }
        acc += f(&z);
    }
    acc * h.powi(d as i32)
}

/// Iteration cap for the direction rejection loop.
pub const Z_REJECTION_CAP: u64 = 1_000_000;

/// The law of `Z` for given dimension, norm and `eta`.
///
/// Sampling writes `Z = R U / |U|`. `U` is uniform in the unit ball of the norm,
/// obtained by rejection from the enclosing cube `[-1, 1]^d` (acceptance
/// `V_d / 2^d`, at least 1/6 for `d <= 3` and any of the three norms), so
/// `U / |U|` follows the cone measure. The radius solves
/// `eta c0 R^{2d} = G` with `G ~ Gamma(1/2, 1)`, which is the exact radial law
/// of the density.
#[derive(Clone, Debug)]
pub struct ZLaw {
    d: usize,
    norm: Norm,
    eta: f64,
    c0: f64,
    radial: Gamma<f64>,
}

impl ZLaw {
    pub fn new(params: &ModelParams, eta: f64) -> Result<Self> {
        Self::for_norm(params.d(), params.norm(), eta)
    }

    pub fn for_norm(d: usize, norm: Norm, eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::Param(format!("eta must be positive, got {eta}")));
        }
        Ok(Self {
            d,
            norm,
            eta,
            c0: c0_closed_form(d, norm),
            radial: Gamma::new(0.5, 1.0).expect("valid gamma parameters"),
        })
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn density(&self, z: &[f64]) -> f64 {
        self.eta.sqrt() * (-self.eta * self.c0 * self.norm.eval(z).powi(2 * self.d as i32)).exp()
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let mut u = vec![0.0; self.d];
        let mut tries = 0u64;
        let len = loop {
            if tries >= Z_REJECTION_CAP {
                return Err(Error::RejectionCap {
                    iterations: Z_REJECTION_CAP,
                    accepted: 0,
                    tried: tries,
                });
            }
            tries += 1;
            for c in u.iter_mut() {
                *c = rng.random_range(-1.0..1.0);
            }
            let n = self.norm.eval(&u);
            if n <= 1.0 && n > 0.0 {
                break n;
            }
        };
        let g: f64 = self.radial.sample(rng);
        let r = (g / (self.eta * self.c0)).powf(1.0 / (2.0 * self.d as f64));
        Ok(u.into_iter().map(|c| c / len * r).collect())
    }
}

pub fn sample_z<R: Rng + ?Sized>(params: &ModelParams, eta: f64, rng: &mut R) -> Result<Vec<f64>> {
    ZLaw::new(params, eta)?.sample(rng)
}

/// Exponent ratios `gamma_n`, `n >= 1`, defining a member of the `W` family.
#[derive(Clone, Debug, PartialEq)]
pub enum GammaSequence {
    Constant(f64),
    /// `prefix[0] = gamma_1, ...`, then `tail` forever.
    Custom { prefix: Vec<f64>, tail: f64 },
}

impl GammaSequence {
    /// The sequence `gamma_n = s/(2d)`.
    pub fn model(params: &ModelParams) -> Self {
        GammaSequence::Constant(params.gamma())
    }

    /// `gamma_n` for `n >= 1`.
    pub fn at(&self, n: usize) -> f64 {
        match self {
            GammaSequence::Constant(g) => *g,
            GammaSequence::Custom { prefix, tail } => prefix.get(n - 1).copied().unwrap_or(*tail),
        }
    }

    /// `sup_{k > n} gamma_k`.
    fn sup_after(&self, n: usize) -> f64 {
        match self {
            GammaSequence::Constant(g) => *g,
            GammaSequence::Custom { prefix, tail } => prefix
                .iter()
                .skip(n)
                .copied()
                .fold(*tail, f64::max),
        }
    }

    fn check(&self, bound: f64) -> Result<()> {
        let vals: Vec<f64> = match self {
            GammaSequence::Constant(g) => vec![*g],
            GammaSequence::Custom { prefix, tail } => prefix.iter().copied().chain([*tail]).collect(),
        };
        if let Some(bad) = vals.iter().find(|g| !(**g >= 0.0 && **g <= bound + 1e-15)) {
            return Err(Error::Param(format!(
                "gamma sequence value {bad} outside [0, {bound}]"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WSample {
    pub value: Vec<f64>,
    pub eta: f64,
    /// Number of factors `|Z_n|^{...}` included after `Z_0`.
    pub truncation_level: usize,
    /// Bound on the omitted exponent mass `sum_{k > level} gamma_1 ... gamma_k`.
    pub residual_bound: f64,
}

pub const DEFAULT_W_TOLERANCE: f64 = 1e-9;

/// Draws `W`, truncating the product once the remaining exponent mass is below
/// `tolerance`. Sequences must be bounded by `2 gamma / (1 + gamma)`.
pub fn sample_w<R: Rng + ?Sized>(
    params: &ModelParams,
    eta: f64,
    sequence: &GammaSequence,
    tolerance: f64,
    rng: &mut R,
) -> Result<WSample> {
    let g = params.gamma();
    sequence.check(2.0 * g / (1.0 + g))?;
    if !(tolerance > 0.0) {
        return Err(Error::Param(format!("tolerance must be positive, got {tolerance}")));
    }
    let law = ZLaw::new(params, eta)?;
    let z0 = law.sample(rng)?;
    let mut exponent = 1.0;
    let mut log_scale = 0.0;
    let mut n = 0usize;
    let residual = loop {
        let sup = sequence.sup_after(n);
        let bound = exponent * sup / (1.0 - sup);
        if bound < tolerance {
            break bound;
        }
        n += 1;
        exponent *= sequence.at(n);
        let z = law.sample(rng)?;
        log_scale += exponent * law.norm.eval(&z).ln();
    };
    let scale = log_scale.exp();
    Ok(WSample {
        value: z0.into_iter().map(|c| c * scale).collect(),
        eta,
        truncation_level: n,
        residual_bound: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::PhiloxStream;

    fn p1() -> ModelParams {
        ModelParams::canonical(1, 1.5, 1.0).unwrap()
    }

    #[test]
    fn closed_form_in_d1_is_pi() {
        for n in [Norm::L1, Norm::L2, Norm::LInf] {
            assert!((c0_closed_form(1, n) - std::f64::consts::PI).abs() < 1e-15);
        }
    }

    #[test]
    fn quadrature_matches_closed_form() {
        let q = compute_c0(&p1(), C0Method::Quadrature, 1_000_000, 0).unwrap();
        assert!((q.value - std::f64::consts::PI).abs() < 1e-5, "{q:?}");
        for (d, norm) in [(2, Norm::L2), (2, Norm::L1), (2, Norm::LInf)] {
            let q = c0_region_volume(d, norm, 1.0, C0Method::Quadrature, 1_000_000, 0).unwrap();
            let exact = c0_closed_form(d, norm);
            assert!((q.value - exact).abs() < 5e-3 * exact, "{norm:?}: {q:?} vs {exact}");
        }
    }

    #[test]
    fn monte_carlo_hit_count_and_scaling() {
        let a = compute_c0(&p1(), C0Method::MonteCarlo, 400_000, 1).unwrap();
        let b = compute_c0(&p1(), C0Method::MonteCarlo, 400_000, 2).unwrap();
        let pi = std::f64::consts::PI;
        assert!((a.value - pi).abs() < 4.0 * a.std_error);
        let combined = (a.std_error.powi(2) + b.std_error.powi(2)).sqrt();
        assert!((a.value - b.value).abs() < 4.0 * combined);
        let r2 = c0_region_volume(1, Norm::L2, 2.0, C0Method::MonteCarlo, 400_000, 3).unwrap();
        assert!((r2.value - 2.0 * pi).abs() < 4.0 * r2.std_error);
        let d2 = c0_region_volume(2, Norm::L2, 2.0, C0Method::MonteCarlo, 400_000, 4).unwrap();
        assert!((d2.value - 2.0 * c0_closed_form(2, Norm::L2)).abs() < 4.0 * d2.std_error);
    }

    #[test]
    fn small_budget_rejected() {
        assert!(compute_c0(&p1(), C0Method::MonteCarlo, 10, 0).is_err());
    }

    #[test]
    fn gaussian_normalization_in_d1() {
        // (int e^{-w^2} dw)^2 = pi = c0, by trapezoid on [-10, 10]
        let h = 1e-4;
        let s: f64 = (0..=200_000).map(|i| (-(-10.0 + i as f64 * h).powi(2)).exp()).sum::<f64>() * h;
        assert!((s * s - c0_closed_form(1, Norm::L2)).abs() < 1e-8);
    }

    #[test]
    fn z_is_symmetric() {
        let law = ZLaw::new(&ModelParams::canonical(2, 3.0, 1.0).unwrap(), 2.0).unwrap();
        let mut rng = PhiloxStream::new(1, 1);
        let n = 100_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| law.sample(&mut rng).unwrap()).collect();
        for i in 0..2 {
            let xs: Vec<f64> = draws.iter().map(|z| z[i]).collect();
            let m = crate::stats::mean(&xs);
            let sd = crate::stats::std_dev(&xs);
            assert!(m.abs() < 4.0 * sd / (n as f64).sqrt());
        }
    }

    #[test]
    fn w_with_zero_sequence_is_z0() {
        let mut a = PhiloxStream::new(9, 9);
        let mut b = PhiloxStream::new(9, 9);
        let w = sample_w(&p1(), 1.0, &GammaSequence::Constant(0.0), 1e-9, &mut a).unwrap();
        let z = ZLaw::new(&p1(), 1.0).unwrap().sample(&mut b).unwrap();
        assert_eq!(w.value, z);
        assert_eq!(w.truncation_level, 0);
    }

    #[test]
    fn w_truncation_respects_tolerance() {
        let mut rng = PhiloxStream::new(2, 2);
        let seq = GammaSequence::model(&p1());
        let w = sample_w(&p1(), 1.0, &seq, 1e-9, &mut rng).unwrap();
        assert!(w.residual_bound < 1e-9);
        // 0.75^{n+1}/0.25 < 1e-9 first at n = 76
        assert_eq!(w.truncation_level, 76);
        assert!(w.value[0] != 0.0);
        let custom = GammaSequence::Custom { prefix: vec![0.1, 0.8], tail: 0.5 };
        let w = sample_w(&p1(), 1.0, &custom, 1e-6, &mut rng).unwrap();
        assert!(w.residual_bound < 1e-6);
        let bad = GammaSequence::Constant(0.9);
        assert!(sample_w(&p1(), 1.0, &bad, 1e-6, &mut rng).is_err());
    }
}
