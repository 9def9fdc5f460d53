//! Independent numerical references for the conditional expectation and the
//! worst-case search: adaptive quadrature, conditional Gaussian sampling and a
//! dense grid.

use std::collections::BinaryHeap;
use std::f64::consts::{PI, SQRT_2};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use libm::{erf, erfc};
use statrs::function::erf::erfc_inv;

use crate::ambiguity::AmbiguitySpec;
use crate::covariance::PairMarginal;
use crate::error::{Error, Result};
use crate::risk::{clamp_risk, conditional_expectation_approx, FailureEvent, RHO_MAX};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    /// Maximum bisection depth of any subinterval.
    pub max_depth: u32,
    /// Integration range beyond the threshold, in units of `sigma_i`.
    pub tail_cutoff: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        QuadratureConfig {
            rel_tol: 1e-10,
            max_depth: 40,
            tail_cutoff: 12.0,
        }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// 15-point Kronrod estimate and its difference from the embedded 7-point Gauss rule.
fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for i in 0..7 {
        let x = h * XGK[i];
        let s = f(c - x) + f(c + x);
        k += WGK[i] * s;
        if i % 2 == 1 {
            g += WG[i / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    err: f64,
    depth: u32,
}

impl PartialEq for Segment {
    fn eq(&self, o: &Self) -> bool {
        self.err == o.err
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Segment {
    fn cmp(&self, o: &Self) -> std::cmp::Ordering {
        self.err.total_cmp(&o.err)
    }
}

/// Globally adaptive Gauss–Kronrod integration of `f` over `[a, b]`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64, max_depth: u32) -> Result<f64> {
    let (value, err) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, err, depth: 0 });
    let (mut total, mut total_err) = (value, err);
    while total_err > rel_tol * total.abs() && total_err > f64::MIN_POSITIVE {
        let s = heap.pop().expect("heap is never empty");
        if s.depth >= max_depth {
            return Err(Error::QuadratureNonConvergence(format!(
                "error {total_err:e} above {:e} at depth {max_depth}",
                rel_tol * total.abs()
            )));
        }
        let m = 0.5 * (s.a + s.b);
        let (v1, e1) = gk15(&f, s.a, m);
        let (v2, e2) = gk15(&f, m, s.b);
        total += v1 + v2 - s.value;
        total_err += e1 + e2 - s.err;
        heap.push(Segment { a: s.a, b: m, value: v1, err: e1, depth: s.depth + 1 });
        heap.push(Segment { a: m, b: s.b, value: v2, err: e2, depth: s.depth + 1 });
    }
    // Re-sum to shed accumulated update rounding.
    let sum: f64 = heap.iter().map(|s| s.value).sum();
    Ok(sum)
}

/// Mean of `|N(mu, s^2)|`.
pub fn folded_normal_mean(mu: f64, s: f64) -> f64 {
    s * (2.0 / PI).sqrt() * (-mu * mu / (2.0 * s * s)).exp() + mu * erf(mu / (SQRT_2 * s))
}

/// `E[|y_j| | |y_i| > delta_bar]` by quadrature over the upper tail of `y_i`.
///
/// The density of `y_i` is factored as `phi(delta_bar) * exp(-(t^2 + 2 delta_bar t)/(2 sigma_i^2))`
/// with `y_i = delta_bar + t`; the common factor cancels in the ratio, so no tail
/// probability is ever formed.
pub fn conditional_expectation_quadrature(pm: &PairMarginal, ev: &FailureEvent, cfg: &QuadratureConfig) -> Result<f64> {
    if !(cfg.rel_tol > 0.0 && cfg.rel_tol <= 1e-4) {
        return Err(Error::OutOfRange(format!("rel_tol {} outside (0, 1e-4]", cfg.rel_tol)));
    }
    let (si, sj, rho) = (pm.sigma_i, pm.sigma_j, pm.rho);
    let sc = ((1.0 - rho) * (1.0 + rho)).sqrt() * sj;
    let db = ev.delta_bar;
    let weight = move |t: f64| (-(t * t + 2.0 * db * t) / (2.0 * si * si)).exp();
    let upper = cfg.tail_cutoff * si;
    let mass = integrate(weight, 0.0, upper, cfg.rel_tol, cfg.max_depth)?;
    let moment = integrate(
        |t| weight(t) * folded_normal_mean(rho * sj / si * (db + t), sc),
        0.0,
        upper,
        cfg.rel_tol,
        cfg.max_depth,
    )?;
    Ok(moment / mass)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub stderr: f64,
}

const MC_CHUNK: usize = 1 << 16;

/// Sample mean of `|y_j|` under the conditional law, with its standard error.
pub fn conditional_expectation_mc(pm: &PairMarginal, ev: &FailureEvent, n_samples: usize, seed: u64) -> Result<McEstimate> {
    if n_samples < 10_000 {
        return Err(Error::OutOfRange(format!("need at least 10^4 samples, got {n_samples}")));
    }
    let (si, sj, rho) = (pm.sigma_i, pm.sigma_j, pm.rho);
    let rp = ((1.0 - rho) * (1.0 + rho)).sqrt();
    let tail = erfc(ev.delta_star(si));
    if !(tail > 0.0) {
        return Err(Error::NumericalUnderflow(format!("tail probability underflows at sigma_i = {si}")));
    }
    let chunks = n_samples.div_ceil(MC_CHUNK);
    // (count, mean, sum of squared deviations) per chunk.
    let parts: Vec<(f64, f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(c as u64);
            let len = MC_CHUNK.min(n_samples - c * MC_CHUNK);
            let (mut mean, mut m2) = (0.0, 0.0);
            for k in 0..len {
                let u: f64 = 1.0 - rng.random::<f64>();
                let mut yi = SQRT_2 * si * erfc_inv(u * tail);
                if rng.random::<bool>() {
                    yi = -yi;
                }
                let z: f64 = rng.sample(StandardNormal);
                let yj = (rho * sj / si * yi + rp * sj * z).abs();
                let d = yj - mean;
                mean += d / (k + 1) as f64;
                m2 += d * (yj - mean);
            }
            (len as f64, mean, m2)
        })
        .collect();
    let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
    for (nb, mb, m2b) in parts {
        let tot = n + nb;
        let d = mb - mean;
        mean += d * nb / tot;
        m2 += m2b + d * d * n * nb / tot;
        n = tot;
    }
    let var = m2 / (n - 1.0);
    Ok(McEstimate {
        estimate: mean,
        stderr: (var / n).sqrt(),
    })
}

fn grid(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    (0..k).map(|t| lo + (hi - lo) * t as f64 / (k - 1) as f64).collect()
}

fn approx_at(si: f64, sj: f64, rho: f64, ev: &FailureEvent) -> f64 {
    let pm = PairMarginal {
        sigma_i: si,
        sigma_j: sj,
        rho,
        rho_prime: ((1.0 - rho) * (1.0 + rho)).sqrt(),
    };
    conditional_expectation_approx(&pm, ev)
}

/// Worst-case risk by exhaustive evaluation on a dense grid of the feasible set.
///
/// The box is scanned in all three coordinates; the diffusion curve with
/// `grid_points^2` samples.
pub fn brute_force_dr_risk(pm0: &PairMarginal, spec: &AmbiguitySpec, ev: &FailureEvent, grid_points: usize) -> Result<f64> {
    if grid_points < 50 {
        return Err(Error::OutOfRange(format!("grid_points = {grid_points} must be >= 50")));
    }
    let rho0 = pm0.rho.abs();
    let sup = if spec.eps_minus == 0.0 && spec.eps_plus == 0.0 {
        approx_at(pm0.sigma_i, pm0.sigma_j, rho0, ev)
    } else if spec.rho_fixed {
        grid(-spec.eps_minus, spec.eps_plus, grid_points * grid_points)
            .into_par_iter()
            .map(|t| {
                let s = (1.0 + t).sqrt();
                approx_at(s * pm0.sigma_i, s * pm0.sigma_j, rho0, ev)
            })
            .reduce(|| f64::NEG_INFINITY, f64::max)
    } else {
        let lo = (1.0 - spec.eps_minus).sqrt();
        let hi = (1.0 + spec.eps_plus).sqrt();
        let si = grid(lo * pm0.sigma_i, hi * pm0.sigma_i, grid_points);
        let sj = grid(lo * pm0.sigma_j, hi * pm0.sigma_j, grid_points);
        let rho = grid(0.0, RHO_MAX.max(rho0), grid_points);
        si.par_iter()
            .map(|&a| {
                let mut best = f64::NEG_INFINITY;
                for &b in &sj {
                    for &r in &rho {
                        best = best.max(approx_at(a, b, r, ev));
                    }
                }
                best
            })
            .reduce(|| f64::NEG_INFINITY, f64::max)
    };
    Ok(clamp_risk(sup, ev.c))
}
