//! Analytic envelopes on the worst-case cascading risk in terms of the
//! extreme modal variances, and network-level limits as functions of the
//! Laplacian spectrum.
//!
//! Two scalings of the conditional-mean surrogate are available. The
//! dimensionless form ([`KappaForm::ScaleConsistent`], default) divides the
//! surrogate by its scale argument so that every term multiplies a standard
//! deviation exactly once; the literal forms keep the surrogate in units of the
//! observable and are exposed for comparison.

use std::f64::consts::SQRT_2;

use serde::{Deserialize, Serialize};

use crate::ambiguity::{ambiguity_weights_uniform_delay, weight_regime, AmbiguitySpec, Family, Regime};
use crate::covariance::{delay_gain, pair_marginal, SteadyCovariance};
use crate::error::{Error, Result};
use crate::graph::Spectrum;
use crate::risk::{one_minus_exp_neg, sqrt_2_over_pi, FailureEvent, ERFC_A, ERFC_B, RHO_MAX};

/// Default lower-bound slack `2 sqrt((1 - rho_max^2)/pi)`.
pub fn default_eta() -> f64 {
    2.0 * ((1.0 - RHO_MAX * RHO_MAX) / std::f64::consts::PI).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KappaForm {
    /// `kappa(x)/x`, evaluated at the admissible extreme that keeps each side valid.
    #[default]
    ScaleConsistent,
    /// Literal surrogate in observable units.
    AsPrinted,
    /// Literal form, with the upper bound's surrogate evaluated at the top envelope.
    AsPrintedProofArgument,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConfig {
    pub eta: f64,
    pub form: KappaForm,
}

impl Default for BoundConfig {
    fn default() -> Self {
        BoundConfig {
            eta: default_eta(),
            form: KappaForm::ScaleConsistent,
        }
    }
}

/// Extreme modal variances scaled by `1 - 1/n` and by the ambiguity radii.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenEnvelope {
    pub psi2_tilde: f64,
    pub psin_tilde: f64,
    pub psi2_tilde_plus: f64,
    pub psin_tilde_plus: f64,
    /// `psi2_tilde (1 - eps_minus)`: the smallest admissible variance.
    pub psi2_tilde_minus: f64,
}

impl EigenEnvelope {
    pub fn new(psi_2: f64, psi_n: f64, n: usize, eps_minus: f64, eps_plus: f64) -> Result<Self> {
        if !(psi_2 > 0.0) || !(psi_n >= psi_2) {
            return Err(Error::OutOfRange(format!(
                "envelope needs 0 < psi_2 <= psi_n, got ({psi_2}, {psi_n})"
            )));
        }
        let k = 1.0 - 1.0 / n as f64;
        Ok(EigenEnvelope {
            psi2_tilde: psi_2 * k,
            psin_tilde: psi_n * k,
            psi2_tilde_plus: psi_2 * k * (1.0 + eps_plus),
            psin_tilde_plus: psi_n * k * (1.0 + eps_plus),
            psi2_tilde_minus: psi_2 * k * (1.0 - eps_minus),
        })
    }

    pub fn from_covariance(cov: &SteadyCovariance, spec: &AmbiguitySpec) -> Result<Self> {
        Self::new(cov.psi_2(), cov.psi_n(), cov.n(), spec.eps_minus, spec.eps_plus)
    }
}

/// Surrogate for `E[|y| | |y| > delta_bar]` at standard deviation `x`.
pub fn kappa(x: f64, delta_bar: f64) -> f64 {
    ERFC_B * delta_bar / one_minus_exp_neg(ERFC_A * delta_bar / (SQRT_2 * x))
}

/// Dimensionless surrogate `kappa(x)/x`; decreasing in `x`.
pub fn kappa_hat(x: f64, delta_bar: f64) -> f64 {
    kappa(x, delta_bar) / x
}

fn rho_parts(rho0: f64) -> (f64, f64) {
    let r = rho0.abs().min(1.0);
    (r, ((1.0 - r) * (1.0 + r)).sqrt())
}

/// Upper envelope of the worst-case pair risk.
pub fn upper_bound(env: &EigenEnvelope, ev: &FailureEvent, family: Family, rho0: f64, cfg: &BoundConfig) -> f64 {
    let db = ev.delta_bar;
    let top = env.psin_tilde_plus.sqrt();
    let (r, rp) = rho_parts(rho0);
    let s = sqrt_2_over_pi();
    let part = match (cfg.form, family) {
        (KappaForm::ScaleConsistent, Family::Diffusion) => {
            r * kappa_hat(env.psi2_tilde_minus.sqrt(), db) + s * rp
        }
        (KappaForm::ScaleConsistent, _) => {
            let k = kappa_hat(env.psi2_tilde_minus.sqrt(), db);
            (k * k + s * s).sqrt()
        }
        (_, Family::Diffusion) => r * kappa(top, db) + s * rp,
        (KappaForm::AsPrinted, _) => {
            let k = kappa(env.psi2_tilde_plus.sqrt(), db);
            (k * k + s * s).sqrt()
        }
        (KappaForm::AsPrintedProofArgument, _) => {
            let k = kappa(top, db);
            (k * k + s * s).sqrt()
        }
    };
    top * part - ev.c
}

/// Lower envelope of the worst-case pair risk.
pub fn lower_bound(env: &EigenEnvelope, ev: &FailureEvent, family: Family, rho0: f64, cfg: &BoundConfig) -> f64 {
    let db = ev.delta_bar;
    let bottom = env.psi2_tilde_plus.sqrt();
    let k = match cfg.form {
        KappaForm::ScaleConsistent => kappa_hat(env.psin_tilde_plus.sqrt(), db),
        _ => kappa(bottom, db),
    };
    let s = sqrt_2_over_pi();
    let part = match family {
        Family::Diffusion => {
            let (r, rp) = rho_parts(rho0);
            (r * k - s * rp).abs()
        }
        _ => s.max(k - cfg.eta),
    };
    bottom * part - ev.c
}

/// Bracket on the largest single-agent worst-case risk.
pub fn single_agent_bounds(env: &EigenEnvelope, c: f64) -> (f64, f64) {
    let s = sqrt_2_over_pi();
    (s * env.psi2_tilde_plus.sqrt() - c, s * env.psin_tilde_plus.sqrt() - c)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub upper: f64,
    pub lower: f64,
    pub family: Family,
    pub eta: f64,
    pub form: KappaForm,
    pub single_lower: f64,
    pub single_upper: f64,
    pub envelope: EigenEnvelope,
}

/// Pair bounds maximised over every ordered pair (only the diffusion family depends on the pair).
pub fn network_bounds(
    cov: &SteadyCovariance,
    spec: &AmbiguitySpec,
    ev: &FailureEvent,
    cfg: &BoundConfig,
) -> Result<BoundReport> {
    let env = EigenEnvelope::from_covariance(cov, spec)?;
    let n = cov.n();
    let (mut upper, mut lower) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    if spec.family == Family::Diffusion {
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let rho0 = pair_marginal(cov, i, j)?.rho;
                    upper = upper.max(upper_bound(&env, ev, spec.family, rho0, cfg));
                    lower = lower.max(lower_bound(&env, ev, spec.family, rho0, cfg));
                }
            }
        }
    } else {
        upper = upper_bound(&env, ev, spec.family, 0.0, cfg);
        lower = lower_bound(&env, ev, spec.family, 0.0, cfg);
    }
    let (single_lower, single_upper) = single_agent_bounds(&env, ev.c);
    Ok(BoundReport {
        upper,
        lower,
        family: spec.family,
        eta: cfg.eta,
        form: cfg.form,
        single_lower,
        single_upper,
        envelope: env,
    })
}

/// Scale of the risk envelope as a function of an eigenvalue, under uniform weight uncertainty.
fn limit_scale(spectrum: &Spectrum, tau0: f64, b0: f64, eps_plus: f64, x: f64, form: KappaForm) -> Result<f64> {
    let f = delay_gain(x, tau0)?;
    Ok(match form {
        KappaForm::ScaleConsistent => {
            let n = spectrum.n() as f64;
            (0.5 * b0 * b0 * f * (1.0 - 1.0 / n) * (1.0 + eps_plus)).sqrt()
        }
        _ => b0 * (f * (1.0 + eps_plus)).sqrt(),
    })
}

/// Eigenvalues at which the smallest and largest modal variance are attained.
fn regime_endpoints(spectrum: &Spectrum, tau0: f64, alpha_w: f64) -> Result<(f64, f64)> {
    Ok(match weight_regime(spectrum, tau0, alpha_w)? {
        Regime::Decreasing => (spectrum.lambda_n(), spectrum.lambda_2()),
        Regime::Increasing => (spectrum.lambda_2(), spectrum.lambda_n()),
    })
}

/// Network-induced lower limit on the worst-case cascading risk under uniform weight uncertainty.
pub fn fundamental_limit(
    spectrum: &Spectrum,
    tau0: f64,
    b0: f64,
    alpha_w: f64,
    ev: &FailureEvent,
    cfg: &BoundConfig,
) -> Result<f64> {
    let eps = ambiguity_weights_uniform_delay(spectrum, tau0, alpha_w)?.eps_plus;
    let (x_min, x_max) = regime_endpoints(spectrum, tau0, alpha_w)?;
    let low = limit_scale(spectrum, tau0, b0, eps, x_min, cfg.form)?;
    let k = match cfg.form {
        KappaForm::ScaleConsistent => {
            kappa_hat(limit_scale(spectrum, tau0, b0, eps, x_max, cfg.form)?, ev.delta_bar)
        }
        _ => kappa(low, ev.delta_bar),
    };
    Ok(low * sqrt_2_over_pi().max(k - cfg.eta) - ev.c)
}

/// Network-induced lower limit on the single-agent risk.
pub fn single_agent_limit(
    spectrum: &Spectrum,
    tau0: f64,
    b0: f64,
    alpha_w: f64,
    c: f64,
    form: KappaForm,
) -> Result<f64> {
    let eps = ambiguity_weights_uniform_delay(spectrum, tau0, alpha_w)?.eps_plus;
    let (x_min, _) = regime_endpoints(spectrum, tau0, alpha_w)?;
    Ok(sqrt_2_over_pi() * limit_scale(spectrum, tau0, b0, eps, x_min, form)? - c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ev(delta_bar: f64, c: f64) -> FailureEvent {
        FailureEvent::new(0, delta_bar - c, c).unwrap()
    }

    #[test]
    fn kappa_values() {
        assert_relative_eq!(kappa(0.6, 5.1), 5.788_539_282_668_148, max_relative = 1e-13);
        assert_relative_eq!(kappa(1e-3, 5.1), ERFC_B * 5.1, max_relative = 1e-15);
        for x in [0.1, 0.5, 2.0, 10.0] {
            assert!(kappa(x, 1.3) >= ERFC_B * 1.3);
        }
        let mut prev = 0.0;
        for k in 1..50 {
            let x = 0.1 * k as f64;
            assert!(kappa(x, 2.0) > prev);
            prev = kappa(x, 2.0);
        }
    }

    #[test]
    fn eta_default() {
        assert!((default_eta() - 1.595_769e-3).abs() < 1e-8);
    }

    #[test]
    fn diffusion_uncorrelated_upper_is_single_upper() {
        let env = EigenEnvelope::new(0.3, 0.9, 7, 0.05, 0.05).unwrap();
        let e = ev(2.0, 0.1);
        for form in [KappaForm::ScaleConsistent, KappaForm::AsPrinted] {
            let cfg = BoundConfig { form, ..Default::default() };
            let u = upper_bound(&env, &e, Family::Diffusion, 0.0, &cfg);
            assert_relative_eq!(u, single_agent_bounds(&env, 0.1).1, max_relative = 1e-14);
        }
    }

    #[test]
    fn lower_bound_arms() {
        let env = EigenEnvelope::new(0.3, 0.9, 7, 0.05, 0.05).unwrap();
        let cfg = BoundConfig { form: KappaForm::AsPrinted, ..Default::default() };
        let big = ev(6.0, 0.1);
        let want = env.psi2_tilde_plus.sqrt() * (kappa(env.psi2_tilde_plus.sqrt(), 6.0) - cfg.eta) - 0.1;
        assert_relative_eq!(lower_bound(&env, &big, Family::Delay, 0.0, &cfg), want, max_relative = 1e-14);
        let tiny = ev(1e-6, 1e-7);
        let want = sqrt_2_over_pi() * env.psi2_tilde_plus.sqrt() - 1e-7;
        assert_relative_eq!(lower_bound(&env, &tiny, Family::Delay, 0.0, &cfg), want, max_relative = 1e-12);
    }

    #[test]
    fn diffusion_upper_scales_with_b() {
        let e = ev(1.1, 0.1);
        let cfg = BoundConfig::default();
        let a = EigenEnvelope::new(0.3, 0.9, 7, 0.05, 0.05).unwrap();
        let b = EigenEnvelope::new(1.2, 3.6, 7, 0.05, 0.05).unwrap();
        let ua = upper_bound(&a, &e, Family::Diffusion, 0.0, &cfg) + 0.1;
        let ub = upper_bound(&b, &e, Family::Diffusion, 0.0, &cfg) + 0.1;
        assert_relative_eq!(ub, 2.0 * ua, max_relative = 1e-14);
    }

    #[test]
    fn single_bounds_collapse_on_degenerate_spectrum() {
        let env = EigenEnvelope::new(1.0 / 6.0, 1.0 / 6.0, 3, 0.0, 0.0).unwrap();
        let (lo, hi) = single_agent_bounds(&env, 0.1);
        let want = (2.0 / std::f64::consts::PI / 9.0).sqrt() - 0.1;
        assert_relative_eq!(lo, want, max_relative = 1e-14);
        assert_relative_eq!(hi, want, max_relative = 1e-14);
    }
}
