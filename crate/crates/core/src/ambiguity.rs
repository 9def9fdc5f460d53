//! Radii of the covariance ambiguity set
//! `(1 - eps_minus) Sigma0 <= Sigma <= (1 + eps_plus) Sigma0` induced by bounded
//! relative uncertainty in one network parameter.

use std::f64::consts::FRAC_PI_2;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::covariance::{delay_gain, delay_limit};
use crate::error::{Error, Result, Warning};
use crate::graph::{incidence_factorization, Spectrum, WeightedGraph};

/// Reporting cap on radii near the stability boundary.
pub const EPS_CAP: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Diffusion,
    Delay,
    WeightsZeroDelay,
    WeightsUniformDelay,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Diffusion,
        Family::Delay,
        Family::WeightsZeroDelay,
        Family::WeightsUniformDelay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Diffusion => "diffusion",
            Family::Delay => "delay",
            Family::WeightsZeroDelay => "weights_zero_delay",
            Family::WeightsUniformDelay => "weights_uniform_delay",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Parse(format!("unknown ambiguity family '{s}'")))
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Ambiguity family with its radii.
///
/// For `weights_zero_delay` with per-edge levels, `alpha` reports the largest one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmbiguitySpec {
    pub family: Family,
    pub alpha: f64,
    pub eps_minus: f64,
    pub eps_plus: f64,
    /// Correlation pinned to its nominal value (diffusion family only).
    #[serde(default)]
    pub rho_fixed: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<Warning>,
}

impl AmbiguitySpec {
    /// True when the ambiguity set is the nominal law alone.
    pub fn is_degenerate(&self) -> bool {
        self.eps_minus == 0.0 && self.eps_plus == 0.0
    }

    fn build(family: Family, alpha: f64, eps_minus: f64, eps_plus: f64) -> Self {
        let mut warnings = Vec::new();
        let mut cap = |x: f64| {
            let x = x.max(0.0);
            if x > EPS_CAP {
                log::warn!("radius {x} capped at {EPS_CAP}");
                warnings.push(Warning::RadiusCapped { raw: x, cap: EPS_CAP });
                EPS_CAP
            } else {
                x
            }
        };
        let eps_minus = cap(eps_minus);
        let eps_plus = cap(eps_plus);
        AmbiguitySpec {
            family,
            alpha,
            eps_minus,
            eps_plus,
            rho_fixed: family == Family::Diffusion,
            warnings,
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::OutOfRange(format!("uncertainty level {alpha} outside [0, 1)")));
    }
    Ok(())
}

/// Diffusion coefficient uncertainty: `b^2` within a factor `1 +- alpha` of nominal.
pub fn ambiguity_diffusion(alpha_b: f64) -> Result<AmbiguitySpec> {
    check_alpha(alpha_b)?;
    Ok(AmbiguitySpec::build(Family::Diffusion, alpha_b, alpha_b, alpha_b))
}

/// Delay uncertainty `tau in [(1 - alpha) tau0, (1 + alpha) tau0]`.
pub fn ambiguity_delay(spectrum: &Spectrum, tau0: f64, alpha_tau: f64) -> Result<AmbiguitySpec> {
    check_alpha(alpha_tau)?;
    let tau_hi = (1.0 + alpha_tau) * tau0;
    let lam_n = spectrum.lambda_n();
    if !(tau_hi < delay_limit(lam_n)) {
        return Err(Error::UnstableDelay {
            tau: tau_hi,
            limit: delay_limit(lam_n),
        });
    }
    let tau_lo = (1.0 - alpha_tau) * tau0;
    let (mut em, mut ep) = (0.0f64, 0.0f64);
    for &lam in spectrum.eigenvalues.iter().skip(1) {
        let f0 = delay_gain(lam, tau0)?;
        ep = ep.max((delay_gain(lam, tau_hi)? - f0) / f0);
        em = em.max((f0 - delay_gain(lam, tau_lo)?) / f0);
    }
    Ok(AmbiguitySpec::build(Family::Delay, alpha_tau, em, ep))
}

/// Spectral norm `||Delta L0^+||` for per-edge relative weight uncertainty.
pub fn weight_perturbation_norm(g0: &WeightedGraph, spectrum: &Spectrum, alpha: &[f64]) -> Result<f64> {
    if alpha.len() != g0.edges().len() {
        return Err(Error::OutOfRange(format!(
            "expected {} per-edge levels, got {}",
            g0.edges().len(),
            alpha.len()
        )));
    }
    for &a in alpha {
        check_alpha(a)?;
    }
    let f = incidence_factorization(g0);
    let scaled = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        alpha.len(),
        g0.edges().iter().zip(alpha).map(|(&(_, _, w), &a)| a * w),
    ));
    let delta = &f.r * scaled * f.r.transpose();
    let m = delta * spectrum.pseudo_inverse();
    Ok(m.singular_values().max())
}

/// Per-edge weight uncertainty at zero delay.
pub fn ambiguity_weights_zero_delay(g0: &WeightedGraph, alpha: &[f64]) -> Result<AmbiguitySpec> {
    let spectrum = crate::graph::graph_spectrum(g0)?;
    let k = weight_perturbation_norm(g0, &spectrum, alpha)?;
    if !(k < 1.0) {
        return Err(Error::PerturbationTooLarge(k));
    }
    let alpha_max = alpha.iter().copied().fold(0.0, f64::max);
    Ok(AmbiguitySpec::build(
        Family::WeightsZeroDelay,
        alpha_max,
        k / (1.0 + k),
        k / (1.0 - k),
    ))
}

/// Eigenvalue at which `lambda -> delay_gain(lambda, tau)` attains its minimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalLambda {
    pub lambda_bar: f64,
    pub tau: f64,
}

/// Root of `u = cos u` on `[0, pi/2]` by bisection.
pub fn dottie_number() -> f64 {
    let (mut lo, mut hi) = (0.0f64, FRAC_PI_2);
    while hi - lo > 1e-15 {
        let mid = 0.5 * (lo + hi);
        if mid - mid.cos() < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn critical_lambda(tau: f64) -> Result<CriticalLambda> {
    if !(tau > 0.0) || !tau.is_finite() {
        return Err(Error::OutOfRange(format!("critical eigenvalue needs tau > 0, got {tau}")));
    }
    Ok(CriticalLambda {
        lambda_bar: dottie_number() / tau,
        tau,
    })
}

/// Monotonicity regime of `delay_gain` in the eigenvalue over the scaled spectrum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Every scaled eigenvalue lies at or below the critical one.
    Decreasing,
    /// Every scaled eigenvalue lies at or above the critical one.
    Increasing,
}

/// Regime of a uniform weight scaling in `[1 - alpha, 1 + alpha]`; zero delay is always decreasing.
pub fn weight_regime(spectrum: &Spectrum, tau0: f64, alpha: f64) -> Result<Regime> {
    if tau0 == 0.0 {
        return Ok(Regime::Decreasing);
    }
    let lbar = critical_lambda(tau0)?.lambda_bar;
    let hi = spectrum.lambda_n() * (1.0 + alpha);
    let lo = spectrum.lambda_2() * (1.0 - alpha);
    if hi <= lbar {
        Ok(Regime::Decreasing)
    } else if lo >= lbar {
        Ok(Regime::Increasing)
    } else {
        Err(Error::RegimeStraddle {
            lo,
            hi,
            critical: lbar,
        })
    }
}

/// Relative change of `delay_gain` when the eigenvalue is scaled by `s`.
fn relative_change(lambda: f64, s: f64, tau: f64) -> Result<f64> {
    let f0 = delay_gain(lambda, tau)?;
    Ok((delay_gain(s * lambda, tau)? - f0).abs() / f0)
}

/// Uniform weight scaling `omega = s omega0`, `s in [1 - alpha, 1 + alpha]`, at delay `tau0`.
pub fn ambiguity_weights_uniform_delay(
    spectrum: &Spectrum,
    tau0: f64,
    alpha: f64,
) -> Result<AmbiguitySpec> {
    check_alpha(alpha)?;
    let lam_n = spectrum.lambda_n();
    if !((1.0 + alpha) * tau0 < delay_limit(lam_n)) {
        return Err(Error::UnstableDelay {
            tau: tau0,
            limit: delay_limit((1.0 + alpha) * lam_n),
        });
    }
    if alpha == 0.0 {
        return Ok(AmbiguitySpec::build(Family::WeightsUniformDelay, 0.0, 0.0, 0.0));
    }
    let regime = weight_regime(spectrum, tau0, alpha)?;
    let (mut up, mut down) = (0.0f64, 0.0f64);
    for &lam in spectrum.eigenvalues.iter().skip(1) {
        up = up.max(relative_change(lam, 1.0 + alpha, tau0)?);
        down = down.max(relative_change(lam, 1.0 - alpha, tau0)?);
    }
    let (em, ep) = match regime {
        Regime::Decreasing => (up, down),
        Regime::Increasing => (down, up),
    };
    Ok(AmbiguitySpec::build(Family::WeightsUniformDelay, alpha, em, ep))
}

/// Builds the radii for `family` from a nominal network; weight uncertainty is uniform across edges.
pub fn ambiguity_for(
    family: Family,
    g0: &WeightedGraph,
    spectrum: &Spectrum,
    tau0: f64,
    alpha: f64,
) -> Result<AmbiguitySpec> {
    crate::covariance::check_stability(spectrum, tau0)?;
    match family {
        Family::Diffusion => ambiguity_diffusion(alpha),
        Family::Delay => ambiguity_delay(spectrum, tau0, alpha),
        Family::WeightsZeroDelay => {
            if tau0 != 0.0 {
                return Err(Error::OutOfRange(format!(
                    "weights_zero_delay requires tau0 = 0 (got {tau0}); use weights_uniform_delay"
                )));
            }
            ambiguity_weights_zero_delay(g0, &vec![alpha; g0.edges().len()])
        }
        Family::WeightsUniformDelay => ambiguity_weights_uniform_delay(spectrum, tau0, alpha),
    }
}
