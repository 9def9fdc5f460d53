//! Scenario handling and subcommands behind the `drcascade` binary.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use drcascade::ambiguity::{ambiguity_for, AmbiguitySpec, Family};
use drcascade::bounds::{network_bounds, BoundConfig, BoundReport, KappaForm};
use drcascade::covariance::{pair_marginal, steady_covariance, NetworkParams, SteadyCovariance};
use drcascade::graph::{generate_topology, graph_spectrum, Spectrum, Topology, WeightedGraph};
use drcascade::oracles::{conditional_expectation_mc, conditional_expectation_quadrature, QuadratureConfig};
use drcascade::risk::{
    conditional_expectation_exact, risk_profile_with, EvalPath, FailureEvent, OptimizerConfig, RiskConfig,
    RiskProfile,
};
use drcascade::sde_sim::{simulate, simulate_with_dump, EmpiricalStats, SimConfig};
use drcascade::{Error, Result, Warning};
use serde::{Deserialize, Serialize};

pub mod args;

/// Exit status for a run whose checks did not all pass.
pub const EXIT_CHECK_FAILED: i32 = 1;
/// Exit status for invalid input.
pub const EXIT_INVALID: i32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyKind {
    Complete,
    Path,
    Cycle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologySpec {
    pub kind: TopologyKind,
    pub n: usize,
    pub weight: f64,
    /// Neighbourhood radius for `cycle`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphSource {
    Topology(TopologySpec),
    File(PathBuf),
    Inline(WeightedGraph),
}

impl GraphSource {
    /// Builds the graph, with every weight multiplied by `scale`.
    pub fn build(&self, scale: f64) -> Result<WeightedGraph> {
        match self {
            GraphSource::Topology(t) => {
                let kind = match t.kind {
                    TopologyKind::Complete => Topology::Complete,
                    TopologyKind::Path => Topology::Path,
                    TopologyKind::Cycle => Topology::Cycle { p: t.p.unwrap_or(1) },
                };
                generate_topology(kind, t.n, t.weight * scale)
            }
            GraphSource::File(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| Error::Io(format!("graph file {}: {e}", path.display())))?;
                WeightedGraph::from_json(&text)?.scaled(scale)
            }
            GraphSource::Inline(g) => g.scaled(scale),
        }
    }
}

/// A complete problem description. Defaults reproduce the 21-agent case study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub graph: GraphSource,
    pub b0: f64,
    pub tau0: f64,
    pub family: Family,
    pub alpha: f64,
    /// 0-based index of the failed agent.
    pub failed_agent: usize,
    pub delta: f64,
    pub c: f64,
    pub seed: u64,
    pub eval_path: EvalPath,
    pub bound_form: KappaForm,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            graph: GraphSource::Topology(TopologySpec {
                kind: TopologyKind::Complete,
                n: 21,
                weight: 0.5,
                p: None,
            }),
            b0: 4.0,
            tau0: 0.05,
            family: Family::Diffusion,
            alpha: 0.05,
            failed_agent: 10,
            delta: 5.0,
            c: 0.1,
            seed: 0,
            eval_path: EvalPath::Approximate,
            bound_form: KappaForm::ScaleConsistent,
        }
    }
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Io(format!("scenario {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialization is infallible")
    }
}

/// Everything derived from a scenario up to the nominal covariance.
pub struct Prepared {
    pub graph: WeightedGraph,
    pub spectrum: Spectrum,
    pub params: NetworkParams,
    pub cov: SteadyCovariance,
    pub spec: AmbiguitySpec,
    pub event: FailureEvent,
}

/// Validates a scenario; the stability gate runs before anything else touches the delay.
pub fn prepare(s: &Scenario) -> Result<Prepared> {
    prepare_scaled(s, 1.0)
}

/// Graph, spectrum and nominal covariance only; what the simulator needs.
fn prepare_network(s: &Scenario, weight_scale: f64) -> Result<(WeightedGraph, Spectrum, NetworkParams, SteadyCovariance)> {
    let graph = s.graph.build(weight_scale)?;
    let spectrum = graph_spectrum(&graph)?;
    let params = NetworkParams::new(s.b0, s.tau0)?;
    drcascade::covariance::check_stability(&spectrum, s.tau0)?;
    let cov = steady_covariance(&spectrum, params)?;
    Ok((graph, spectrum, params, cov))
}

fn prepare_scaled(s: &Scenario, weight_scale: f64) -> Result<Prepared> {
    let (graph, spectrum, params, cov) = prepare_network(s, weight_scale)?;
    if s.failed_agent >= graph.n() {
        return Err(Error::VertexOutOfRange {
            index: s.failed_agent,
            n: graph.n(),
        });
    }
    let spec = ambiguity_for(s.family, &graph, &spectrum, s.tau0, s.alpha)?;
    let event = FailureEvent::new(s.failed_agent, s.delta, s.c)?;
    Ok(Prepared {
        graph,
        spectrum,
        params,
        cov,
        spec,
        event,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RiskRun {
    pub scenario: Scenario,
    pub ambiguity: AmbiguitySpec,
    pub bounds: BoundReport,
    pub warnings: Vec<Warning>,
    #[serde(skip)]
    pub profile: RiskProfile,
}

pub fn risk_config(s: &Scenario) -> RiskConfig {
    RiskConfig {
        optimizer: OptimizerConfig {
            path: s.eval_path,
            ..Default::default()
        },
        ..Default::default()
    }
}

pub fn cmd_risk(s: &Scenario) -> Result<RiskRun> {
    let p = prepare(s)?;
    let profile = risk_profile_with(&p.cov, &p.spec, &p.event, &risk_config(s))?;
    let cfg = BoundConfig {
        form: s.bound_form,
        ..Default::default()
    };
    let bounds = network_bounds(&p.cov, &p.spec, &p.event, &cfg)?;
    let mut warnings = p.cov.warnings.clone();
    warnings.extend(p.spec.warnings.iter().cloned());
    Ok(RiskRun {
        scenario: s.clone(),
        ambiguity: p.spec,
        bounds,
        warnings,
        profile,
    })
}

impl RiskRun {
    pub fn csv(&self) -> String {
        let mut buf = Vec::new();
        self.profile.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii csv")
    }

    pub fn report_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization is infallible")
    }
}

/// Companion path for the bounds report: `risk.csv` becomes `risk.bounds.json`.
pub fn bounds_path(out: &Path) -> PathBuf {
    out.with_extension("bounds.json")
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ValidationReport {
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

/// Partial overrides of [`SimConfig::defaults_for`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimOverrides {
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
    pub burn_in: Option<f64>,
    pub trajectories: Option<usize>,
    pub thin: Option<usize>,
}

impl SimOverrides {
    pub fn apply(&self, base: SimConfig) -> SimConfig {
        SimConfig {
            dt: self.dt.unwrap_or(base.dt),
            horizon: self.horizon.unwrap_or(base.horizon),
            burn_in: self.burn_in.unwrap_or(base.burn_in),
            trajectories: self.trajectories.unwrap_or(base.trajectories),
            thin: self.thin.unwrap_or(base.thin),
            seed: base.seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ValidateOptions {
    pub sim: SimOverrides,
    /// Largest accepted `max |empirical - analytic| / psi_n`.
    pub sde_tol: f64,
    pub quad_tol: f64,
    pub mc_samples: usize,
    /// Accepted Monte Carlo deviation in standard errors.
    pub mc_sigmas: f64,
}

impl Default for ValidateOptions {
    fn default() -> Self {
        ValidateOptions {
            sim: SimOverrides::default(),
            sde_tol: 0.05,
            quad_tol: 1e-6,
            mc_samples: 1_000_000,
            mc_sigmas: 3.0,
        }
    }
}

/// Simulated against closed-form covariance, and the conditional expectation
/// of every pair with the failed agent against quadrature (plus one Monte Carlo pair).
pub fn cmd_validate(s: &Scenario, opts: &ValidateOptions) -> Result<ValidationReport> {
    let p = prepare(s)?;
    let sim = opts.sim.apply(SimConfig::defaults_for(&p.spectrum, s.tau0, s.seed));
    let stats = simulate(&p.graph, p.params, &sim)?;
    let dev = max_relative_deviation(&stats, &p.cov);
    let mut checks = vec![Check {
        name: "sde_covariance".into(),
        value: dev,
        tolerance: opts.sde_tol,
        pass: dev < opts.sde_tol,
        note: Some(format!("{} snapshots, largest standard error {:e}", stats.samples, stats.stderr_scale)),
    }];

    let quad = QuadratureConfig::default();
    let mut worst = 0.0f64;
    let mut skipped = 0;
    for j in (0..p.graph.n()).filter(|&j| j != s.failed_agent) {
        let pm = pair_marginal(&p.cov, s.failed_agent, j)?;
        let exact = match conditional_expectation_exact(&pm, &p.event) {
            Ok(v) => v,
            Err(Error::NumericalUnderflow(_)) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let q = conditional_expectation_quadrature(&pm, &p.event, &quad)?;
        worst = worst.max(((exact - q) / q).abs());
    }
    checks.push(Check {
        name: "exact_vs_quadrature".into(),
        value: worst,
        tolerance: opts.quad_tol,
        pass: worst < opts.quad_tol,
        note: (skipped > 0).then(|| format!("{skipped} pairs beyond the exact path's range")),
    });

    let j = (s.failed_agent + 1) % p.graph.n();
    let pm = pair_marginal(&p.cov, s.failed_agent, j)?;
    let q = conditional_expectation_quadrature(&pm, &p.event, &quad)?;
    let mc = conditional_expectation_mc(&pm, &p.event, opts.mc_samples, s.seed)?;
    let z = (mc.estimate - q).abs() / mc.stderr;
    checks.push(Check {
        name: "mc_vs_quadrature".into(),
        value: z,
        tolerance: opts.mc_sigmas,
        pass: z <= opts.mc_sigmas,
        note: Some(format!("pair ({}, {j}), {} samples, in standard errors", s.failed_agent, opts.mc_samples)),
    });

    let all_pass = checks.iter().all(|c| c.pass);
    Ok(ValidationReport { checks, all_pass })
}

/// `max |empirical - analytic| / psi_n` over all covariance entries.
pub fn max_relative_deviation(stats: &EmpiricalStats, cov: &SteadyCovariance) -> f64 {
    (&stats.cov - &cov.sigma).amax() / cov.psi_n()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Edge weight of a generated topology; multiplies file/inline graph weights.
    Weight,
    Alpha,
    Tau,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: f64,
    /// `Ok` carries the profile and any warnings; `Err` carries the rejection.
    pub outcome: std::result::Result<(RiskProfile, Vec<Warning>), Error>,
}

impl SweepPoint {
    pub fn status(&self) -> String {
        match &self.outcome {
            Ok((_, w)) if w.iter().any(|w| matches!(w, Warning::ConditioningWarning { .. })) => {
                "ok;ConditioningWarning".into()
            }
            Ok((_, w)) if !w.is_empty() => "ok;RadiusCapped".into(),
            Ok(_) => "ok".into(),
            Err(e) => format!("error:{}", e.kind()),
        }
    }
}

pub fn cmd_sweep(s: &Scenario, axis: SweepAxis, values: &[f64]) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::OutOfRange("empty sweep grid".into()));
    }
    let points: Vec<SweepPoint> = values
        .iter()
        .map(|&v| {
            let mut point = s.clone();
            let mut scale = 1.0;
            match axis {
                SweepAxis::Weight => match &mut point.graph {
                    GraphSource::Topology(t) => t.weight = v,
                    _ => scale = v,
                },
                SweepAxis::Alpha => point.alpha = v,
                SweepAxis::Tau => point.tau0 = v,
            }
            let outcome = prepare_scaled(&point, scale).and_then(|p| {
                let prof = risk_profile_with(&p.cov, &p.spec, &p.event, &risk_config(&point))?;
                let mut w = p.cov.warnings.clone();
                w.extend(p.spec.warnings.iter().cloned());
                Ok((prof, w))
            });
            SweepPoint { value: v, outcome }
        })
        .collect();
    if let Some(err) = points.iter().find_map(|p| p.outcome.as_ref().err()) {
        if points.iter().all(|p| p.outcome.is_err()) {
            return Err(err.clone());
        }
    }
    Ok(points)
}

pub const SWEEP_HEADER: &str = "value,agent,single_risk,nominal_risk,dr_risk,status";

/// Long-format CSV; rejected grid points produce one row per agent with empty numbers.
pub fn sweep_csv(points: &[SweepPoint], n: usize) -> String {
    let mut out = String::new();
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for p in points {
        let status = p.status();
        match &p.outcome {
            Ok((prof, _)) => {
                for r in &prof.per_agent {
                    out.push_str(&format!(
                        "{:.16e},{},{:.16e},{:.16e},{:.16e},{status}\n",
                        p.value, r.agent, r.single_risk, r.nominal_risk, r.dr_risk
                    ));
                }
            }
            Err(_) => {
                for j in 0..n {
                    out.push_str(&format!("{:.16e},{j},,,,{status}\n", p.value));
                }
            }
        }
    }
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub samples: usize,
    pub stderr_scale: f64,
    pub max_relative_deviation: f64,
    pub config: SimConfig,
}

/// Runs the ensemble; returns the empirical covariance CSV and a summary.
pub fn cmd_simulate(s: &Scenario, sim: &SimOverrides, dump: Option<&mut dyn Write>) -> Result<(String, SimulationSummary)> {
    let (graph, spectrum, params, cov) = prepare_network(s, 1.0)?;
    let cfg = sim.apply(SimConfig::defaults_for(&spectrum, s.tau0, s.seed));
    let stats = match dump {
        Some(w) => simulate_with_dump(&graph, params, &cfg, &mut WriteRef(w))?,
        None => simulate(&graph, params, &cfg)?,
    };
    let mut csv = Vec::new();
    for r in 0..stats.cov.nrows() {
        let row: Vec<String> = (0..stats.cov.ncols()).map(|c| format!("{:.16e}", stats.cov[(r, c)])).collect();
        writeln!(csv, "{}", row.join(","))?;
    }
    let summary = SimulationSummary {
        samples: stats.samples,
        stderr_scale: stats.stderr_scale,
        max_relative_deviation: max_relative_deviation(&stats, &cov),
        config: cfg,
    };
    Ok((String::from_utf8(csv).expect("ascii csv"), summary))
}

struct WriteRef<'a>(&'a mut dyn Write);

impl Write for WriteRef<'_> {
    fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
        self.0.write(buf)
    }
    fn flush(&mut self) -> std::io::Result<()> {
        self.0.flush()
    }
}

/// Caps the global rayon pool from `DRCASCADE_THREADS`, if set.
pub fn init_threads() {
    if let Some(k) = std::env::var("DRCASCADE_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global();
    }
}
