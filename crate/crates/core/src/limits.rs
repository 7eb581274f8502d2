//! Deterministic limit theory: the large-`beta` limit curve of the scaling
//! function, the `(m, u)` phase of `beta`, the `lambda(t)` change of variables
//! and the tail envelope for `P(D(0,x) <= n)`.

use serde::{Deserialize, Serialize};
use crate::error::{Error, Result};
use crate::exponents::theta_closed_form;
use crate::model::ModelParams;

/// `[s/(2d-s) (2 gamma)^{-t} - 2 (s-d)/(2d-s) 2^{-t}] (2d-s)^Delta` for `t` in `[0, 1]`.
pub fn psi_limit(params: &ModelParams, t: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::Range(format!("psi_limit defined on [0, 1], got t = {t}")));
    }
    Ok(psi_bracket(params, t) * params.gap().powf(params.delta()))
}

fn psi_bracket(params: &ModelParams, t: f64) -> f64 {
    let s = params.s();
    let d = params.d() as f64;
    let gap = params.gap();
    let g = params.gamma();
    s / gap * (2.0 * g).powf(-t) - 2.0 * (s - d) / gap * 2f64.powf(-t)
}

/// 1-periodic extension of [`psi_limit`] to all real `t`.
pub fn psi_limit_periodic(params: &ModelParams, t: f64) -> f64 {
    let frac = t - t.floor();
    psi_bracket(params, frac) * params.gap().powf(params.delta())
}

/// Limit of `L(r) = (log r)^Delta phi(r)` along `r = exp(gamma^{-t})`, i.e.
/// `2^t psi_limit(t)` (since `gamma^{-Delta} = 2`). Equals `(2 - lambda(t)) (2d-s)^Delta`.
pub fn l_limit(params: &ModelParams, t: f64) -> Result<f64> {
    Ok(2f64.powf(t) * psi_limit(params, t)?)
}

/// `lambda = 2d/(2d-s) - s/(2d-s) gamma^{-t}`, the solution of
/// `lambda + (1 - lambda) gamma^{-1} = gamma^{-t}`.
pub fn lambda_of_t(params: &ModelParams, t: f64) -> f64 {
    let d2 = 2.0 * params.d() as f64;
    let gap = params.gap();
    d2 / gap - params.s() / gap * params.gamma().powf(-t)
}

/// `psi(t) = phi(exp(gamma^{-t}))` for any estimator or model of `phi`.
pub fn phi_to_psi<F>(params: &ModelParams, mut phi: F, t: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    phi(params.gamma().powf(-t).exp())
}

/// Horizontal shift `log(u / (2d - s)) / log(1/gamma)` applied to the argument of
/// `psi` in the large-`beta` statement. Kept separate from the curve itself.
pub fn u_shift(params: &ModelParams, u: f64) -> f64 {
    (u / params.gap()).ln() / (1.0 / params.gamma()).ln()
}

/// Radius at which the empirical `phi` is compared with `psi_limit(t)`:
/// `exp(gamma^{-t} u / (2d - s) gamma^{-offset})`. The dyadic offset is free by
/// log-log-periodicity.
pub fn collapse_radius(params: &ModelParams, t: f64, u: f64, offset: i32) -> f64 {
    let g = params.gamma();
    (g.powf(-t) * u / params.gap() * g.powi(-offset)).exp()
}

/// `log beta = u gamma^{-m}` with `u` in `[1, 1/gamma)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaPhase {
    pub beta: f64,
    pub m: i32,
    pub u: f64,
}

/// Relative slack used when `log log beta / log(1/gamma)` lands on an integer.
const PHASE_SNAP: f64 = 1e-9;

pub fn beta_phase(params: &ModelParams, beta: f64) -> Result<BetaPhase> {
    if !(beta > 1.0) || !beta.is_finite() {
        return Err(Error::Range(format!("beta_phase needs beta > 1, got {beta}")));
    }
    let mut phase = beta_phase_from_log(params, beta.ln())?;
    phase.beta = beta;
    Ok(phase)
}

/// Same as [`beta_phase`] but from `log beta` directly, avoiding a round trip
/// through `exp` for values like `beta = e^{4/3}`.
pub fn beta_phase_from_log(params: &ModelParams, log_beta: f64) -> Result<BetaPhase> {
    if !(log_beta > 0.0) || !log_beta.is_finite() {
        return Err(Error::Range(format!("log beta must be positive, got {log_beta}")));
    }
    let g = params.gamma();
    let x = log_beta.ln() / (1.0 / g).ln();
    let nearest = x.round();
    let m = if (x - nearest).abs() < PHASE_SNAP {
        nearest as i32
    } else {
        x.floor() as i32
    };
    let mut u = g.powi(m) * log_beta;
    if u < 1.0 && u > 1.0 - PHASE_SNAP {
        u = 1.0;
    }
    debug_assert!((1.0..1.0 / g).contains(&u), "u = {u}");
    Ok(BetaPhase {
        beta: log_beta.exp(),
        m,
        u,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeConstants {
    pub c: f64,
    pub c_tilde: f64,
    pub p: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailEnvelope {
    pub value: f64,
    /// `(2d/s) p >= p + s + 1` fails: the bound's precondition is not met.
    pub precondition_violated: bool,
}

/// Smallest `p` with `(2d/s) p >= p + s + 1`.
pub fn min_envelope_p(params: &ModelParams) -> f64 {
    (params.s() + 1.0) / (2.0 * params.d() as f64 / params.s() - 1.0)
}

/// `c (beta^{theta_n} e^{c~ n^{1/Delta}} / |x|)^s n^{-p}`.
pub fn tail_envelope(
    params: &ModelParams,
    n: u64,
    x_norm: f64,
    k: EnvelopeConstants,
) -> Result<TailEnvelope> {
    if n == 0 {
        return Err(Error::Range("tail envelope needs n >= 1".into()));
    }
    if !(x_norm > 0.0) {
        return Err(Error::Range(format!("|x| must be positive, got {x_norm}")));
    }
    if !(k.c > 0.0 && k.c_tilde >= 0.0 && k.p > 0.0) {
        return Err(Error::Param(format!("envelope constants must be positive: {k:?}")));
    }
    let s = params.s();
    let theta = theta_closed_form(params, n);
    let nf = n as f64;
    // log-space to keep beta^{theta_n} from overflowing
    let log_ratio = theta * params.beta().ln() + k.c_tilde * nf.powf(1.0 / params.delta()) - x_norm.ln();
    let value = k.c * (s * log_ratio - k.p * nf.ln()).exp();
    let lhs = 2.0 * params.d() as f64 / s * k.p;
    Ok(TailEnvelope {
        value,
        precondition_violated: lhs < k.p + s + 1.0 - 1e-12,
    })
}
