//! Conditional cascading risk: the expected deviation of agent `j` given that
//! agent `i` has left the band `[-delta_bar, delta_bar]`, its worst case over an
//! ambiguity set, and per-agent risk profiles.

use std::f64::consts::{FRAC_2_SQRT_PI, PI, SQRT_2};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use libm::{erf, erfc};

use crate::ambiguity::AmbiguitySpec;
use crate::covariance::{pair_marginal, PairMarginal, SteadyCovariance};
use crate::error::{Error, Result};

/// Constants of the surrogate `erfc(x) ~ (1 - e^{-A x}) e^{-x^2} / (B sqrt(pi) x)`.
pub const ERFC_A: f64 = 1.98;
pub const ERFC_B: f64 = 1.135;
/// Cap on `|rho|` in the worst-case search.
pub const RHO_MAX: f64 = 1.0 - 1e-6;
/// Smallest tail probability the exact path accepts.
pub const UNDERFLOW_FLOOR: f64 = 1e-290;

pub(crate) fn sqrt_2_over_pi() -> f64 {
    (2.0 / PI).sqrt()
}

pub(crate) fn sqrt_pi() -> f64 {
    2.0 / FRAC_2_SQRT_PI
}

/// `1 - exp(-x)` without cancellation.
pub(crate) fn one_minus_exp_neg(x: f64) -> f64 {
    -(-x).exp_m1()
}

/// Failure of agent `i` by `delta_i` at consensus tolerance `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureEvent {
    pub i: usize,
    pub delta_i: f64,
    pub c: f64,
    pub delta_bar: f64,
}

impl FailureEvent {
    pub fn new(i: usize, delta_i: f64, c: f64) -> Result<Self> {
        if !(delta_i >= 0.0) || !delta_i.is_finite() {
            return Err(Error::OutOfRange(format!("deviation {delta_i} must be finite and >= 0")));
        }
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::OutOfRange(format!("tolerance c = {c} must be finite and > 0")));
        }
        Ok(FailureEvent {
            i,
            delta_i,
            c,
            delta_bar: delta_i + c,
        })
    }

    /// Normalised threshold `delta_bar / (sqrt(2) sigma_i)`.
    pub fn delta_star(&self, sigma_i: f64) -> f64 {
        self.delta_bar / (SQRT_2 * sigma_i)
    }
}

pub fn erfc_surrogate(x: f64) -> f64 {
    one_minus_exp_neg(ERFC_A * x) * (-x * x).exp() / (ERFC_B * sqrt_pi() * x)
}

/// Closed-form `E[|y_j| | y_i in U]`. Even in `rho`.
pub fn conditional_expectation_exact(pm: &PairMarginal, ev: &FailureEvent) -> Result<f64> {
    let ds = ev.delta_star(pm.sigma_i);
    let tail = erfc(ds);
    if !(tail >= UNDERFLOW_FLOOR) {
        return Err(Error::NumericalUnderflow(format!(
            "erfc({ds}) = {tail:e} is below {UNDERFLOW_FLOOR:e}; use the approximate path"
        )));
    }
    let rho = pm.rho.abs();
    let rp = pm.rho_prime;
    let num = erfc(ds / rp) + rho * erf(rho * ds / rp) * (-ds * ds).exp();
    Ok(sqrt_2_over_pi() * pm.sigma_j * num / tail)
}

/// `(H1, H2)` at normalised threshold `ds` and correlation `rho`.
pub fn h_terms(ds: f64, rho: f64) -> (f64, f64) {
    let rho = rho.abs();
    let rp = ((1.0 - rho) * (1.0 + rho)).sqrt();
    let base = one_minus_exp_neg(ERFC_A * ds);
    let h1 = rp * one_minus_exp_neg(ERFC_A * ds / rp) / base * (-(rho * ds / rp).powi(2)).exp();
    let h2 = rho * ERFC_B * sqrt_pi() * ds * erf(rho * ds / rp) / base;
    (h1, h2)
}

/// Surrogate-based conditional expectation; finite arbitrarily deep in the tail.
pub fn conditional_expectation_approx(pm: &PairMarginal, ev: &FailureEvent) -> f64 {
    let (h1, h2) = h_terms(ev.delta_star(pm.sigma_i), pm.rho);
    sqrt_2_over_pi() * pm.sigma_j * (h1 + h2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalPath {
    #[default]
    Approximate,
    Exact,
    /// Exact whenever the tail probability is representable, else approximate.
    Auto,
}

pub fn conditional_expectation(pm: &PairMarginal, ev: &FailureEvent, path: EvalPath) -> Result<f64> {
    match path {
        EvalPath::Approximate => Ok(conditional_expectation_approx(pm, ev)),
        EvalPath::Exact => conditional_expectation_exact(pm, ev),
        EvalPath::Auto => {
            if erfc(ev.delta_star(pm.sigma_i)) >= UNDERFLOW_FLOOR {
                conditional_expectation_exact(pm, ev)
            } else {
                Ok(conditional_expectation_approx(pm, ev))
            }
        }
    }
}

/// How the radius enters the single-agent risk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SingleRiskForm {
    /// Standard deviation scaled by `1 + eps`.
    #[default]
    Linear,
    /// Standard deviation scaled by `sqrt(1 + eps)`, matching the variance box.
    Sqrt,
}

/// Single-agent worst-case risk `max(0, sqrt(2/pi) sigma0 (1 + eps) - c)`.
pub fn single_agent_dr_risk(sigma0_j: f64, eps_plus: f64, c: f64) -> f64 {
    single_agent_risk_with(sigma0_j, eps_plus, c, SingleRiskForm::Linear)
}

/// Single-agent risk with the standard deviation scaled by `sqrt(1 + eps)`.
pub fn single_agent_dr_risk_sqrt(sigma0_j: f64, eps_plus: f64, c: f64) -> f64 {
    single_agent_risk_with(sigma0_j, eps_plus, c, SingleRiskForm::Sqrt)
}

pub fn single_agent_risk_with(sigma0_j: f64, eps_plus: f64, c: f64, form: SingleRiskForm) -> f64 {
    let scale = match form {
        SingleRiskForm::Linear => 1.0 + eps_plus,
        SingleRiskForm::Sqrt => (1.0 + eps_plus).sqrt(),
    };
    let sup = sqrt_2_over_pi() * sigma0_j * scale;
    if sup <= c {
        0.0
    } else {
        sup - c
    }
}

/// Maximiser of the worst-case conditional expectation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairRisk {
    pub dr_risk: f64,
    pub sup_expectation: f64,
    pub sigma_i: f64,
    pub sigma_j: f64,
    pub rho: f64,
}

/// Settings of the worst-case search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub grid_points: usize,
    pub sweeps: usize,
    pub tol: f64,
    pub rho_max: f64,
    pub path: EvalPath,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            grid_points: 64,
            sweeps: 3,
            tol: 1e-10,
            rho_max: RHO_MAX,
            path: EvalPath::Approximate,
        }
    }
}

/// The feasible set of `(sigma_i, sigma_j, |rho|)` for a nominal pair and ambiguity spec.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeasibleSet {
    Point { sigma_i: f64, sigma_j: f64, rho: f64 },
    /// `sigma = sqrt(1 + theta) sigma0`, `theta in [lo, hi]`, correlation fixed.
    Curve { sigma0_i: f64, sigma0_j: f64, rho: f64, lo: f64, hi: f64 },
    Box { sigma_i: (f64, f64), sigma_j: (f64, f64), rho: (f64, f64) },
}

impl FeasibleSet {
    pub fn new(pm0: &PairMarginal, spec: &AmbiguitySpec, rho_max: f64) -> Self {
        let rho0 = pm0.rho.abs();
        if spec.is_degenerate() {
            return FeasibleSet::Point {
                sigma_i: pm0.sigma_i,
                sigma_j: pm0.sigma_j,
                rho: rho0,
            };
        }
        if spec.rho_fixed {
            return FeasibleSet::Curve {
                sigma0_i: pm0.sigma_i,
                sigma0_j: pm0.sigma_j,
                rho: rho0,
                lo: -spec.eps_minus,
                hi: spec.eps_plus,
            };
        }
        let lo = (1.0 - spec.eps_minus).sqrt();
        let hi = (1.0 + spec.eps_plus).sqrt();
        FeasibleSet::Box {
            sigma_i: (lo * pm0.sigma_i, hi * pm0.sigma_i),
            sigma_j: (lo * pm0.sigma_j, hi * pm0.sigma_j),
            rho: (0.0, rho_max.max(rho0)),
        }
    }
}

fn marginal_unchecked(sigma_i: f64, sigma_j: f64, rho: f64) -> PairMarginal {
    PairMarginal {
        sigma_i,
        sigma_j,
        rho,
        rho_prime: ((1.0 - rho) * (1.0 + rho)).sqrt(),
    }
}

fn evaluate(sigma_i: f64, sigma_j: f64, rho: f64, ev: &FailureEvent, path: EvalPath) -> Result<f64> {
    conditional_expectation(&marginal_unchecked(sigma_i, sigma_j, rho), ev, path)
}

/// Golden-section maximisation of `f` on `[a, b]`; returns the best point seen.
fn golden_max<F: FnMut(f64) -> Result<f64>>(mut f: F, a: f64, b: f64, tol: f64) -> Result<(f64, f64)> {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (a, b);
    let mut x1 = b - g * (b - a);
    let mut x2 = a + g * (b - a);
    let mut f1 = f(x1)?;
    let mut f2 = f(x2)?;
    let (fa, fb) = (f(a)?, f(b)?);
    let mut best = if fa >= fb { (a, fa) } else { (b, fb) };
    for _ in 0..200 {
        if b - a <= tol {
            break;
        }
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + g * (b - a);
            f2 = f(x2)?;
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - g * (b - a);
            f1 = f(x1)?;
        }
    }
    for (x, v) in [(x1, f1), (x2, f2)] {
        if v > best.1 {
            best = (x, v);
        }
    }
    Ok(best)
}

fn linspace(lo: f64, hi: f64, k: usize) -> impl Iterator<Item = f64> {
    (0..k).map(move |t| {
        if k == 1 {
            lo
        } else {
            lo + (hi - lo) * t as f64 / (k - 1) as f64
        }
    })
}

/// Worst-case conditional risk of agent `j` given failure of agent `i`.
pub fn dr_risk_pair(pm0: &PairMarginal, spec: &AmbiguitySpec, ev: &FailureEvent) -> Result<PairRisk> {
    dr_risk_pair_with(pm0, spec, ev, &OptimizerConfig::default())
}

pub fn dr_risk_pair_with(
    pm0: &PairMarginal,
    spec: &AmbiguitySpec,
    ev: &FailureEvent,
    cfg: &OptimizerConfig,
) -> Result<PairRisk> {
    let k = cfg.grid_points.max(2);
    let (sup, si, sj, rho) = match FeasibleSet::new(pm0, spec, cfg.rho_max) {
        FeasibleSet::Point { sigma_i, sigma_j, rho } => {
            (evaluate(sigma_i, sigma_j, rho, ev, cfg.path)?, sigma_i, sigma_j, rho)
        }
        FeasibleSet::Curve { sigma0_i, sigma0_j, rho, lo, hi } => {
            let f = |t: f64| {
                let s = (1.0 + t).sqrt();
                evaluate(s * sigma0_i, s * sigma0_j, rho, ev, cfg.path)
            };
            let mut best = (lo, f64::NEG_INFINITY);
            for t in linspace(lo, hi, k) {
                let v = f(t)?;
                if v > best.1 {
                    best = (t, v);
                }
            }
            let h = (hi - lo) / (k - 1) as f64;
            let (t, v) = golden_max(f, (best.0 - h).max(lo), (best.0 + h).min(hi), cfg.tol)?;
            if v > best.1 {
                best = (t, v);
            }
            let s = (1.0 + best.0).sqrt();
            (best.1, s * sigma0_i, s * sigma0_j, rho)
        }
        FeasibleSet::Box { sigma_i: (si_lo, si_hi), sigma_j: (_, sj_hi), rho: (r_lo, r_hi) } => {
            // The objective is proportional to sigma_j, so the upper edge is optimal.
            let sj = sj_hi;
            let f = |s: f64, r: f64| evaluate(s, sj, r, ev, cfg.path);
            let mut best = (si_lo, r_lo, f64::NEG_INFINITY);
            for s in linspace(si_lo, si_hi, k) {
                for r in linspace(r_lo, r_hi, k) {
                    let v = f(s, r)?;
                    if v > best.2 {
                        best = (s, r, v);
                    }
                }
            }
            let hs = (si_hi - si_lo) / (k - 1) as f64;
            let hr = (r_hi - r_lo) / (k - 1) as f64;
            for _ in 0..cfg.sweeps {
                let r = best.1;
                let (s, v) = golden_max(
                    |s| f(s, r),
                    (best.0 - hs).max(si_lo),
                    (best.0 + hs).min(si_hi),
                    cfg.tol,
                )?;
                if v > best.2 {
                    best = (s, r, v);
                }
                let s = best.0;
                let (r, v) = golden_max(
                    |r| f(s, r),
                    (best.1 - hr).max(r_lo),
                    (best.1 + hr).min(r_hi),
                    cfg.tol,
                )?;
                if v > best.2 {
                    best = (s, r, v);
                }
            }
            (best.2, best.0, sj, best.1)
        }
    };
    Ok(PairRisk {
        dr_risk: clamp_risk(sup, ev.c),
        sup_expectation: sup,
        sigma_i: si,
        sigma_j: sj,
        rho,
    })
}

/// `sup E - c`, or zero when the supremum does not exceed `c`.
pub fn clamp_risk(sup: f64, c: f64) -> f64 {
    if sup <= c {
        0.0
    } else {
        sup - c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentRisk {
    pub agent: usize,
    pub single_risk: f64,
    pub nominal_risk: f64,
    pub dr_risk: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskProfile {
    pub failed_agent: usize,
    pub per_agent: Vec<AgentRisk>,
}

impl RiskProfile {
    pub const CSV_HEADER: &'static str = "agent,single_risk,nominal_risk,dr_risk";

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", Self::CSV_HEADER)?;
        for r in &self.per_agent {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e}",
                r.agent, r.single_risk, r.nominal_risk, r.dr_risk
            )?;
        }
        Ok(())
    }

    /// Entries for agents other than the failed one.
    pub fn others(&self) -> impl Iterator<Item = &AgentRisk> {
        self.per_agent.iter().filter(move |r| r.agent != self.failed_agent)
    }

    pub fn max_single_risk(&self) -> f64 {
        self.per_agent.iter().map(|r| r.single_risk).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RiskConfig {
    pub optimizer: OptimizerConfig,
    pub single_form: SingleRiskForm,
}

pub fn risk_profile(cov0: &SteadyCovariance, spec: &AmbiguitySpec, ev: &FailureEvent) -> Result<RiskProfile> {
    risk_profile_with(cov0, spec, ev, &RiskConfig::default())
}

pub fn risk_profile_with(
    cov0: &SteadyCovariance,
    spec: &AmbiguitySpec,
    ev: &FailureEvent,
    cfg: &RiskConfig,
) -> Result<RiskProfile> {
    let n = cov0.n();
    if ev.i >= n {
        return Err(Error::VertexOutOfRange { index: ev.i, n });
    }
    let single = |j: usize, eps: f64| single_agent_risk_with(cov0.std_dev(j), eps, ev.c, cfg.single_form);
    let per_agent = (0..n)
        .into_par_iter()
        .map(|j| -> Result<AgentRisk> {
            let single_risk = single(j, spec.eps_plus);
            if j == ev.i {
                return Ok(AgentRisk {
                    agent: j,
                    single_risk,
                    nominal_risk: single(j, 0.0),
                    dr_risk: single_risk,
                });
            }
            let pm0 = pair_marginal(cov0, ev.i, j)?;
            let nominal = evaluate(pm0.sigma_i, pm0.sigma_j, pm0.rho.abs(), ev, cfg.optimizer.path)?;
            let dr = dr_risk_pair_with(&pm0, spec, ev, &cfg.optimizer)?;
            Ok(AgentRisk {
                agent: j,
                single_risk,
                nominal_risk: clamp_risk(nominal, ev.c),
                dr_risk: dr.dr_risk,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RiskProfile {
        failed_agent: ev.i,
        per_agent,
    })
}
