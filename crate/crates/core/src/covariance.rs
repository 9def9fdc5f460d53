//! Steady-state covariance of the centred observables of the delayed
//! consensus dynamics `dx = -L x(t - tau) dt + b dW`.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result, Warning};
use crate::graph::Spectrum;

/// Margin below which (as a fraction of the stability limit) a conditioning
/// warning is attached.
pub const CONDITIONING_FRACTION: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub b: f64,
    pub tau: f64,
}

impl NetworkParams {
    pub fn new(b: f64, tau: f64) -> Result<Self> {
        if !(b >= 0.0) || !b.is_finite() {
            return Err(Error::OutOfRange(format!("diffusion b = {b} must be finite and >= 0")));
        }
        if !(tau >= 0.0) || !tau.is_finite() {
            return Err(Error::OutOfRange(format!("delay tau = {tau} must be finite and >= 0")));
        }
        Ok(NetworkParams { b, tau })
    }
}

/// Largest stable delay for a given top eigenvalue.
pub fn delay_limit(lambda_n: f64) -> f64 {
    FRAC_PI_2 / lambda_n
}

/// Returns the stability margin `pi/(2 lambda_n) - tau`, erroring when it is not positive.
pub fn check_stability(spectrum: &Spectrum, tau: f64) -> Result<f64> {
    let limit = delay_limit(spectrum.lambda_n());
    let margin = limit - tau;
    if !(margin > 0.0) {
        return Err(Error::UnstableDelay { tau, limit });
    }
    Ok(margin)
}

pub(crate) fn conditioning_warning(spectrum: &Spectrum, tau: f64) -> Option<Warning> {
    let limit = delay_limit(spectrum.lambda_n());
    if limit - tau < CONDITIONING_FRACTION * limit {
        log::warn!("delay {tau} is within {CONDITIONING_FRACTION} of the stability limit {limit}");
        Some(Warning::ConditioningWarning { tau, limit })
    } else {
        None
    }
}

/// `cos(lambda tau) / (lambda (1 - sin(lambda tau)))`, with the `1/lambda` limit at `tau = 0`.
///
/// Modal variance is `b^2/2` times this.
pub fn delay_gain(lambda: f64, tau: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::OutOfRange(format!("eigenvalue {lambda} must be positive")));
    }
    if tau == 0.0 {
        return Ok(1.0 / lambda);
    }
    let u = lambda * tau;
    if !(u < FRAC_PI_2) {
        return Err(Error::UnstableDelay {
            tau,
            limit: delay_limit(lambda),
        });
    }
    // 1 - sin u = 2 sin^2(pi/4 - u/2), free of cancellation near the limit.
    let s = (FRAC_PI_4 - 0.5 * u).sin();
    Ok(u.cos() / (lambda * 2.0 * s * s))
}

/// Steady variance of a single Laplacian mode.
pub fn modal_variance(lambda: f64, tau: f64, b: f64) -> Result<f64> {
    Ok(0.5 * b * b * delay_gain(lambda, tau)?)
}

#[derive(Debug, Clone)]
pub struct SteadyCovariance {
    pub sigma: DMatrix<f64>,
    /// Modal variances, `psi[0] = 0` for the consensus mode.
    pub psi: DVector<f64>,
    pub warnings: Vec<Warning>,
}

impl SteadyCovariance {
    pub fn n(&self) -> usize {
        self.sigma.nrows()
    }

    pub fn variance(&self, i: usize) -> f64 {
        self.sigma[(i, i)]
    }

    pub fn std_dev(&self, i: usize) -> f64 {
        self.sigma[(i, i)].sqrt()
    }

    pub fn psi_2(&self) -> f64 {
        self.psi.iter().skip(1).copied().fold(f64::INFINITY, f64::min)
    }

    pub fn psi_n(&self) -> f64 {
        self.psi.iter().skip(1).copied().fold(0.0, f64::max)
    }

    /// Row-major CSV dump, 17 significant digits, no header.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write_matrix_csv(&self.sigma, &mut out)
    }
}

pub(crate) fn write_matrix_csv<W: Write>(m: &DMatrix<f64>, out: &mut W) -> std::io::Result<()> {
    for r in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols()).map(|c| format!("{:.16e}", m[(r, c)])).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

pub fn steady_covariance(spectrum: &Spectrum, params: NetworkParams) -> Result<SteadyCovariance> {
    check_stability(spectrum, params.tau)?;
    let n = spectrum.n();
    let mut psi = DVector::zeros(n);
    let mut sigma = DMatrix::zeros(n, n);
    for k in 1..n {
        psi[k] = modal_variance(spectrum.eigenvalues[k], params.tau, params.b)?;
        let mut q = spectrum.eigenvectors.column(k).into_owned();
        // Centring projection applied per mode; removes solver leakage into 1_n.
        let mean = q.mean();
        q.add_scalar_mut(-mean);
        sigma.ger(psi[k], &q, &q, 1.0);
    }
    sigma = (&sigma + sigma.transpose()) * 0.5;
    let warnings = conditioning_warning(spectrum, params.tau).into_iter().collect();
    Ok(SteadyCovariance {
        sigma,
        psi,
        warnings,
    })
}

/// Bivariate marginal of `(y_i, y_j)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairMarginal {
    pub sigma_i: f64,
    pub sigma_j: f64,
    pub rho: f64,
    pub rho_prime: f64,
}

impl PairMarginal {
    pub fn new(sigma_i: f64, sigma_j: f64, rho: f64) -> Result<Self> {
        if !(sigma_i > 0.0) || !(sigma_j > 0.0) || !sigma_i.is_finite() || !sigma_j.is_finite() {
            return Err(Error::DegenerateMarginal(format!(
                "standard deviations ({sigma_i}, {sigma_j}) must be positive and finite"
            )));
        }
        if !(rho.abs() < 1.0 - 1e-12) {
            return Err(Error::DegenerateMarginal(format!("|rho| = {} too close to 1", rho.abs())));
        }
        Ok(PairMarginal {
            sigma_i,
            sigma_j,
            rho,
            rho_prime: ((1.0 - rho) * (1.0 + rho)).sqrt(),
        })
    }
}

pub fn pair_marginal(cov: &SteadyCovariance, i: usize, j: usize) -> Result<PairMarginal> {
    let n = cov.n();
    for v in [i, j] {
        if v >= n {
            return Err(Error::VertexOutOfRange { index: v, n });
        }
    }
    if i == j {
        return Err(Error::OutOfRange(format!("pair marginal needs i != j (got {i})")));
    }
    let si = cov.std_dev(i);
    let sj = cov.std_dev(j);
    PairMarginal::new(si, sj, cov.sigma[(i, j)] / (si * sj))
}
