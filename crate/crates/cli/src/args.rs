//! Command-line parsing and dispatch.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use drcascade::ambiguity::Family;
use drcascade::bounds::KappaForm;
use drcascade::risk::EvalPath;
use drcascade::{Error, Result};

use crate::{
    bounds_path, cmd_risk, cmd_simulate, cmd_sweep, cmd_validate, sweep_csv, GraphSource, Scenario, SimOverrides,
    SweepAxis, TopologyKind, ValidateOptions, EXIT_CHECK_FAILED, EXIT_INVALID,
};

#[derive(Debug, Parser)]
#[command(
    name = "drcascade",
    version,
    about = "Distributionally robust cascading-failure risk for delayed consensus networks",
    after_help = "Exit status: 0 success, 1 a validation check failed, 2 invalid input.\n\
                  DRCASCADE_THREADS caps the worker thread count."
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Per-agent risk profile (CSV) and analytic bounds (JSON).
    Risk {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Bounds report path [default: next to --out as <stem>.bounds.json, else stderr].
        #[arg(long)]
        bounds_out: Option<PathBuf>,
    },
    /// Check simulated and closed-form covariance, and the closed-form conditional expectation against quadrature and Monte Carlo.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        sim: SimArgs,
        /// Tolerance on max |empirical - analytic| / psi_n.
        #[arg(long, default_value_t = 0.05)]
        sde_tol: f64,
        /// Relative tolerance of closed form vs quadrature.
        #[arg(long, default_value_t = 1e-6)]
        quad_tol: f64,
        #[arg(long, default_value_t = 1_000_000)]
        mc_samples: usize,
        /// Accepted Monte Carlo deviation, in standard errors.
        #[arg(long, default_value_t = 3.0)]
        mc_sigmas: f64,
    },
    /// Risk profiles over a one-parameter grid (long-format CSV).
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum)]
        axis: AxisArg,
        /// Comma-separated grid, e.g. 0.25,0.5,1,1.25.
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        values: Vec<f64>,
    },
    /// Simulate the delayed SDE; writes the empirical covariance (CSV).
    Simulate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[command(flatten)]
        sim: SimArgs,
        /// Also write trajectory 0's snapshots (t, agent_0, ...) here.
        #[arg(long)]
        dump: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum TopologyArg {
    Complete,
    Path,
    Cycle,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Diffusion,
    Delay,
    WeightsZeroDelay,
    WeightsUniformDelay,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum EvalArg {
    Approximate,
    Exact,
    Auto,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FormArg {
    ScaleConsistent,
    AsPrinted,
    AsPrintedProofArgument,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum AxisArg {
    Weight,
    Alpha,
    Tau,
}

/// Scenario flags; each overrides the value from --scenario, which in turn overrides the built-in default.
#[derive(Debug, Clone, Default, Args)]
pub struct ScenarioArgs {
    /// Scenario JSON file.
    #[arg(long)]
    pub scenario: Option<PathBuf>,
    /// Graph JSON file {"n": .., "edges": [[i, j, w], ..]}; replaces any topology.
    #[arg(long)]
    pub graph: Option<PathBuf>,
    /// Generated topology [default: complete].
    #[arg(long, value_enum)]
    pub topology: Option<TopologyArg>,
    /// Number of agents [default: 21].
    #[arg(long)]
    pub n: Option<usize>,
    /// Edge weight [default: 0.5].
    #[arg(long)]
    pub weight: Option<f64>,
    /// Cycle neighbourhood radius, 1 <= p <= (n-1)/2 [default: 1].
    #[arg(long)]
    pub p: Option<usize>,
    /// Nominal diffusion coefficient [default: 4].
    #[arg(long)]
    pub b0: Option<f64>,
    /// Nominal delay [default: 0.05].
    #[arg(long)]
    pub tau0: Option<f64>,
    /// Uncertain parameter [default: diffusion].
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    /// Relative uncertainty in [0, 1) [default: 0.05].
    #[arg(long)]
    pub alpha: Option<f64>,
    /// 0-based failed agent [default: 10].
    #[arg(long)]
    pub failed_agent: Option<usize>,
    /// Deviation of the failed agent [default: 5].
    #[arg(long)]
    pub delta: Option<f64>,
    /// Consensus tolerance [default: 0.1].
    #[arg(long)]
    pub c: Option<f64>,
    /// RNG seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Conditional expectation evaluation [default: approximate].
    #[arg(long, value_enum)]
    pub eval_path: Option<EvalArg>,
    /// Surrogate scaling in the bounds [default: scale-consistent].
    #[arg(long, value_enum)]
    pub bound_form: Option<FormArg>,
    /// Primary output path [default: stdout].
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ScenarioArgs {
    pub fn resolve(&self) -> Result<Scenario> {
        let mut s = match &self.scenario {
            Some(p) => Scenario::load(p)?,
            None => Scenario::default(),
        };
        if let Some(g) = &self.graph {
            s.graph = GraphSource::File(g.clone());
        }
        if self.topology.is_some() || self.n.is_some() || self.weight.is_some() || self.p.is_some() {
            let mut t = match &s.graph {
                GraphSource::Topology(t) if self.graph.is_none() => t.clone(),
                _ => match Scenario::default().graph {
                    GraphSource::Topology(t) => t,
                    _ => unreachable!("default scenario uses a generated topology"),
                },
            };
            if let Some(k) = self.topology {
                t.kind = match k {
                    TopologyArg::Complete => TopologyKind::Complete,
                    TopologyArg::Path => TopologyKind::Path,
                    TopologyArg::Cycle => TopologyKind::Cycle,
                };
            }
            if let Some(n) = self.n {
                t.n = n;
            }
            if let Some(w) = self.weight {
                t.weight = w;
            }
            if self.p.is_some() {
                t.p = self.p;
            }
            if self.graph.is_some() {
                return Err(Error::OutOfRange("--graph cannot be combined with topology flags".into()));
            }
            s.graph = GraphSource::Topology(t);
        }
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = self.$field { s.$field = v; })* };
        }
        set!(b0, tau0, alpha, failed_agent, delta, c, seed);
        if let Some(f) = self.family {
            s.family = match f {
                FamilyArg::Diffusion => Family::Diffusion,
                FamilyArg::Delay => Family::Delay,
                FamilyArg::WeightsZeroDelay => Family::WeightsZeroDelay,
                FamilyArg::WeightsUniformDelay => Family::WeightsUniformDelay,
            };
        }
        if let Some(e) = self.eval_path {
            s.eval_path = match e {
                EvalArg::Approximate => EvalPath::Approximate,
                EvalArg::Exact => EvalPath::Exact,
                EvalArg::Auto => EvalPath::Auto,
            };
        }
        if let Some(f) = self.bound_form {
            s.bound_form = match f {
                FormArg::ScaleConsistent => KappaForm::ScaleConsistent,
                FormArg::AsPrinted => KappaForm::AsPrinted,
                FormArg::AsPrintedProofArgument => KappaForm::AsPrintedProofArgument,
            };
        }
        Ok(s)
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct SimArgs {
    /// Time step [default: min(tau/20, 0.01/lambda_n, 1e-3), shrunk to divide tau].
    #[arg(long)]
    pub dt: Option<f64>,
    /// Simulated time per trajectory [default: burn-in + max(200, 10 burn-in)].
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Discarded initial time [default: 20/lambda_2].
    #[arg(long)]
    pub burn_in: Option<f64>,
    /// Ensemble size [default: 64].
    #[arg(long)]
    pub trajectories: Option<usize>,
    /// Steps between retained snapshots [default: tau/dt].
    #[arg(long)]
    pub thin: Option<usize>,
}

impl SimArgs {
    fn overrides(&self) -> SimOverrides {
        SimOverrides {
            dt: self.dt,
            horizon: self.horizon,
            burn_in: self.burn_in,
            trajectories: self.trajectories,
            thin: self.thin,
        }
    }
}

fn write_out(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

/// Runs a parsed command line and returns the process exit status.
pub fn run(cli: Cli) -> i32 {
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}: {e}", e.kind());
            EXIT_INVALID
        }
    }
}

fn dispatch(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Risk { scenario, bounds_out } => {
            let s = scenario.resolve()?;
            let run = cmd_risk(&s)?;
            write_out(scenario.out.as_deref(), &run.csv())?;
            let json = run.report_json() + "\n";
            match bounds_out.or_else(|| scenario.out.as_deref().map(bounds_path)) {
                Some(p) => write_out(Some(&p), &json)?,
                None => eprint!("{json}"),
            }
            Ok(0)
        }
        Command::Validate { scenario, sim, sde_tol, quad_tol, mc_samples, mc_sigmas } => {
            let s = scenario.resolve()?;
            let opts = ValidateOptions {
                sim: sim.overrides(),
                sde_tol,
                quad_tol,
                mc_samples,
                mc_sigmas,
            };
            let report = cmd_validate(&s, &opts)?;
            let json = serde_json::to_string_pretty(&report).expect("report serialization is infallible") + "\n";
            write_out(scenario.out.as_deref(), &json)?;
            Ok(if report.all_pass { 0 } else { EXIT_CHECK_FAILED })
        }
        Command::Sweep { scenario, axis, values } => {
            let s = scenario.resolve()?;
            let axis = match axis {
                AxisArg::Weight => SweepAxis::Weight,
                AxisArg::Alpha => SweepAxis::Alpha,
                AxisArg::Tau => SweepAxis::Tau,
            };
            let points = cmd_sweep(&s, axis, &values)?;
            let n = points
                .iter()
                .find_map(|p| p.outcome.as_ref().ok().map(|(prof, _)| prof.per_agent.len()))
                .unwrap_or(0);
            write_out(scenario.out.as_deref(), &sweep_csv(&points, n))?;
            Ok(0)
        }
        Command::Simulate { scenario, sim, dump } => {
            let s = scenario.resolve()?;
            let (csv, summary) = match &dump {
                Some(p) => {
                    let mut f = fs::File::create(p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
                    cmd_simulate(&s, &sim.overrides(), Some(&mut f))?
                }
                None => cmd_simulate(&s, &sim.overrides(), None)?,
            };
            write_out(scenario.out.as_deref(), &csv)?;
            eprintln!("{}", serde_json::to_string_pretty(&summary).expect("summary serialization is infallible"));
            Ok(0)
        }
    }
}
