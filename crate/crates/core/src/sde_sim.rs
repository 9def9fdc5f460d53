//! Euler–Maruyama ensembles of the delayed consensus SDE, for checking the
//! closed-form steady covariance empirically.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::covariance::{check_stability, NetworkParams};
use crate::error::{Error, Result};
use crate::graph::{graph_spectrum, Spectrum, WeightedGraph};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub burn_in: f64,
    pub trajectories: usize,
    pub seed: u64,
    /// Steps between retained snapshots.
    pub thin: usize,
}

impl SimConfig {
    /// `dt = min(tau/20, 0.01/lambda_n, 1e-3)`, burn-in `20/lambda_2`, thinning one delay.
    pub fn defaults_for(spectrum: &Spectrum, tau: f64, seed: u64) -> Self {
        let mut dt = (0.01 / spectrum.lambda_n()).min(1e-3);
        if tau > 0.0 {
            dt = dt.min(tau / 20.0);
        }
        let burn_in = 20.0 / spectrum.lambda_2();
        let thin = if tau > 0.0 { (tau / dt).round().max(1.0) as usize } else { 100 };
        SimConfig {
            dt,
            horizon: burn_in + 200.0f64.max(10.0 * burn_in),
            burn_in,
            trajectories: 64,
            seed,
            thin,
        }
    }

    /// Validates and returns `(dt, delay_steps)` with `dt` shrunk so the delay is a whole number of steps.
    pub fn resolve(&self, tau: f64) -> Result<(f64, usize)> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::ConfigError(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.burn_in >= 0.0) || !(self.horizon > self.burn_in) {
            return Err(Error::ConfigError(format!(
                "need 0 <= burn_in < horizon, got burn_in = {}, horizon = {}",
                self.burn_in, self.horizon
            )));
        }
        if self.trajectories == 0 || self.thin == 0 {
            return Err(Error::ConfigError("trajectories and thin must be >= 1".into()));
        }
        if tau == 0.0 {
            return Ok((self.dt, 0));
        }
        let steps = (tau / self.dt - 1e-9).ceil().max(1.0);
        let dt = tau / steps;
        debug_assert!((steps * dt - tau).abs() <= 1e-12 * tau.max(1.0));
        Ok((dt, steps as usize))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub samples: usize,
    /// Largest standard error over the covariance entries.
    pub stderr_scale: f64,
}

/// Running sums over one trajectory's snapshots.
struct Moments {
    count: usize,
    sum: DVector<f64>,
    outer: DMatrix<f64>,
}

impl Moments {
    fn new(n: usize) -> Self {
        Moments {
            count: 0,
            sum: DVector::zeros(n),
            outer: DMatrix::zeros(n, n),
        }
    }

    fn push(&mut self, y: &DVector<f64>) {
        self.count += 1;
        self.sum += y;
        self.outer.ger(1.0, y, y, 1.0);
    }

    fn covariance(&self) -> DMatrix<f64> {
        let m = &self.sum / self.count as f64;
        &self.outer / self.count as f64 - &m * m.transpose()
    }
}

/// Ensemble simulation; every trajectory has its own RNG stream so the result
/// does not depend on thread count or scheduling.
pub fn simulate(g: &WeightedGraph, params: NetworkParams, cfg: &SimConfig) -> Result<EmpiricalStats> {
    simulate_impl(g, params, cfg, None::<&mut Vec<u8>>)
}

/// As [`simulate`], also writing trajectory 0's retained snapshots as CSV
/// (`t,agent_0,...`).
pub fn simulate_with_dump<W: Write>(g: &WeightedGraph, params: NetworkParams, cfg: &SimConfig, dump: &mut W) -> Result<EmpiricalStats> {
    simulate_impl(g, params, cfg, Some(dump))
}

fn simulate_impl<W: Write>(
    g: &WeightedGraph,
    params: NetworkParams,
    cfg: &SimConfig,
    dump: Option<&mut W>,
) -> Result<EmpiricalStats> {
    let spectrum = graph_spectrum(g)?;
    check_stability(&spectrum, params.tau)?;
    let (dt, delay) = cfg.resolve(params.tau)?;
    let total = (cfg.horizon / dt).round() as usize;
    let burn = (cfg.burn_in / dt).round() as usize;
    let per_traj = if total > burn { (total - burn - 1) / cfg.thin + 1 } else { 0 };
    let expected = per_traj * cfg.trajectories;
    if expected < 1000 {
        return Err(Error::ConfigError(format!(
            "configuration retains only {expected} snapshots; at least 1000 are required"
        )));
    }

    let mut rows: Option<Vec<(f64, DVector<f64>)>> = dump.as_ref().map(|_| Vec::new());
    let run = |traj: usize, rows: Option<&mut Vec<(f64, DVector<f64>)>>| {
        run_trajectory(g, params.b, dt, delay, total, burn, cfg.thin, cfg.seed, traj, rows)
    };
    let mut moments: Vec<Moments> = (1..cfg.trajectories).into_par_iter().map(|t| run(t, None)).collect();
    moments.insert(0, run(0, rows.as_mut()));

    if let (Some(out), Some(rows)) = (dump, rows) {
        let n = g.n();
        let header: Vec<String> = (0..n).map(|k| format!("agent_{k}")).collect();
        writeln!(out, "t,{}", header.join(","))?;
        for (t, y) in rows {
            let vals: Vec<String> = y.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{t:.16e},{}", vals.join(","))?;
        }
    }
    Ok(pool(&moments, g.n()))
}

#[allow(clippy::too_many_arguments)]
fn run_trajectory(
    g: &WeightedGraph,
    b: f64,
    dt: f64,
    delay: usize,
    total: usize,
    burn: usize,
    thin: usize,
    seed: u64,
    traj: usize,
    mut rows: Option<&mut Vec<(f64, DVector<f64>)>>,
) -> Moments {
    let n = g.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(traj as u64);
    let slots = delay + 1;
    // Slot k % slots holds x_k; zero initial history.
    let mut ring = vec![DVector::<f64>::zeros(n); slots];
    let mut drift = DVector::<f64>::zeros(n);
    let mut y = DVector::<f64>::zeros(n);
    let noise = b * dt.sqrt();
    let mut acc = Moments::new(n);
    for k in 0..total {
        let cur = k % slots;
        let lagged = (k + 1) % slots;
        drift.fill(0.0);
        {
            let xd = &ring[lagged];
            for &(i, j, w) in g.edges() {
                let f = w * (xd[i] - xd[j]);
                drift[i] -= f;
                drift[j] += f;
            }
        }
        let next = (k + 1) % slots;
        for a in 0..n {
            let z: f64 = StandardNormal.sample(&mut rng);
            let v = ring[cur][a] + dt * drift[a] + noise * z;
            drift[a] = v;
        }
        // The new state overwrites the lagged slot, which has been consumed.
        std::mem::swap(&mut ring[next], &mut drift);
        let step = k + 1;
        if step > burn && (step - burn - 1) % thin == 0 {
            let x = &ring[next];
            let mean = x.mean();
            y.copy_from(x);
            y.add_scalar_mut(-mean);
            acc.push(&y);
            if let Some(r) = rows.as_deref_mut() {
                r.push((step as f64 * dt, y.clone()));
            }
        }
    }
    acc
}

fn pool(parts: &[Moments], n: usize) -> EmpiricalStats {
    let mut all = Moments::new(n);
    for p in parts {
        all.count += p.count;
        all.sum += &p.sum;
        all.outer += &p.outer;
    }
    let count = all.count as f64;
    let mean = &all.sum / count;
    let cov = (&all.outer - &mean * mean.transpose() * count) / (count - 1.0);
    let cov = (&cov + cov.transpose()) * 0.5;

    // Trajectories are independent batches; their spread gives the standard error.
    let t = parts.len();
    let stderr_scale = if t < 2 {
        f64::NAN
    } else {
        let covs: Vec<DMatrix<f64>> = parts.iter().map(Moments::covariance).collect();
        let mut worst = 0.0f64;
        for a in 0..n {
            for b in 0..n {
                let vals: Vec<f64> = covs.iter().map(|c| c[(a, b)]).collect();
                let m = vals.iter().sum::<f64>() / t as f64;
                let var = vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (t - 1) as f64;
                worst = worst.max((var / t as f64).sqrt());
            }
        }
        worst
    };
    EmpiricalStats {
        mean,
        cov,
        samples: all.count,
        stderr_scale,
    }
}

/// Unbiased sample covariance of snapshot rows.
pub fn empirical_covariance(samples: &DMatrix<f64>) -> Result<EmpiricalStats> {
    let (m, n) = samples.shape();
    if m < 2 {
        return Err(Error::TooFewSamples(m));
    }
    let mean = DVector::from_iterator(n, samples.column_iter().map(|c| c.mean()));
    let mut centred = samples.clone();
    for mut row in centred.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = centred.transpose() * &centred / (m - 1) as f64;
    let cov = (&cov + cov.transpose()) * 0.5;
    let mut worst = 0.0f64;
    for a in 0..n {
        for b in a..n {
            let prods = centred.column(a).component_mul(&centred.column(b));
            let pm = prods.mean();
            let var = prods.iter().map(|p| (p - pm).powi(2)).sum::<f64>() / (m - 1) as f64;
            worst = worst.max((var / m as f64).sqrt());
        }
    }
    Ok(EmpiricalStats {
        mean,
        cov,
        samples: m,
        stderr_scale: worst,
    })
}
