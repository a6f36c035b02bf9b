use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nlbehavior::config::{KernelSpec, ModelSpec, RunConfig};
use nlbehavior::linalg::RankPolicy;
use nlbehavior::subspace::Route;
use nlbehavior::Error;

mod commands;

/// Data-driven behavioral models of nonlinear systems.
///
/// Exit status is 0 on success, 1 when an invariant or feasibility check
/// fails, and 2 for configuration or parse errors.
#[derive(Parser, Debug)]
#[command(name = "nlbehavior", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a model on seeded uniform inputs and write a CSV trajectory
    Simulate {
        #[command(flatten)]
        opts: Overrides,
    },
    /// Minimum-norm interpolation on offline data, checked at each online window
    PredictInterp {
        #[command(flatten)]
        opts: Overrides,
        offline: PathBuf,
        online: PathBuf,
    },
    /// Kernelized subspace identification of states from one trajectory
    IdentifySubspace {
        #[command(flatten)]
        opts: Overrides,
        offline: PathBuf,
        /// Write the oblique projection matrix as CSV
        #[arg(long)]
        pi_csv: Option<PathBuf>,
        /// Write the recovered states as CSV
        #[arg(long)]
        states_csv: Option<PathBuf>,
    },
    /// Test whether a length-2L candidate is a trajectory of the data's system
    Validate {
        #[command(flatten)]
        opts: Overrides,
        offline: PathBuf,
        candidate: PathBuf,
    },
    /// Run the seeded invariant suite and print a JSON summary
    Check {
        #[command(flatten)]
        opts: Overrides,
        /// Perturb one invariant on purpose to confirm the harness can fail
        #[arg(long)]
        inject_fault: bool,
    },
}

/// Flags that override fields of the config file.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// JSON config file; flags take precedence over its fields
    #[arg(long)]
    config: Option<PathBuf>,
    /// Catalog model name
    #[arg(long)]
    model: Option<String>,
    /// Kernel as JSON, e.g. '{"kind":"gaussian","sigma":1.0}'
    #[arg(long)]
    kernel: Option<String>,
    #[arg(long)]
    lag: Option<usize>,
    /// Number of time steps to simulate
    #[arg(long)]
    horizon: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// State dimension; estimated from the spectrum when omitted
    #[arg(long)]
    order: Option<usize>,
    /// Relative singular value cut
    #[arg(long, conflicts_with = "fixed_rank")]
    rel_tol: Option<f64>,
    #[arg(long)]
    fixed_rank: Option<usize>,
    #[arg(long)]
    sigma_tol: Option<f64>,
    #[arg(long)]
    feasibility_tol: Option<f64>,
    #[arg(long)]
    membership_tol: Option<f64>,
    /// Known squared RKHS norm of the true model, enables the bound check
    #[arg(long)]
    f_star_norm_sq: Option<f64>,
    /// svd or eigen
    #[arg(long, value_parser = parse_route)]
    route: Option<Route>,
    /// Output file for the command's main result (stdout when absent)
    #[arg(long, short)]
    out: Option<PathBuf>,
}

fn parse_route(s: &str) -> Result<Route, String> {
    match s {
        "svd" => Ok(Route::Svd),
        "eigen" => Ok(Route::Eigen),
        _ => Err(format!("unknown route `{s}` (expected svd or eigen)")),
    }
}

impl Overrides {
    /// The config file merged with the flags.
    fn resolve(&self) -> Result<RunConfig, Error> {
        let base = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config { key: "config".into(), msg: format!("{}: {e}", path.display()) })?;
                RunConfig::from_json(&text)?
            }
            None => RunConfig::default(),
        };
        let kernel = match &self.kernel {
            Some(text) => Some(
                serde_json::from_str::<KernelSpec>(text)
                    .map_err(|e| Error::Config { key: "kernel".into(), msg: e.to_string() })?,
            ),
            None => None,
        };
        let rank_policy = match (self.rel_tol, self.fixed_rank) {
            (Some(rel_tol), _) => Some(RankPolicy::RelativeThreshold { rel_tol }),
            (None, Some(rank)) => Some(RankPolicy::FixedRank { rank }),
            (None, None) => None,
        };
        Ok(base.merged(RunConfig {
            model: self.model.clone().map(ModelSpec::Named),
            kernel,
            lag: self.lag,
            horizon: self.horizon,
            seed: self.seed,
            order: self.order,
            rank_policy,
            sigma_tol: self.sigma_tol,
            feasibility_tol: self.feasibility_tol,
            membership_tol: self.membership_tol,
            f_star_norm_sq: self.f_star_norm_sq,
            route: self.route,
            ..Default::default()
        }))
    }

    /// Resolved config with `--out` routed to the report path.
    fn with_report(&self) -> Result<RunConfig, Error> {
        let mut cfg = self.resolve()?;
        if self.out.is_some() {
            cfg.outputs.report = self.out.clone();
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> Result<bool, Error> {
    match cli.command {
        Command::Simulate { opts } => {
            let mut cfg = opts.resolve()?;
            if opts.out.is_some() {
                cfg.outputs.trajectory = opts.out.clone();
            }
            commands::simulate(&cfg)
        }
        Command::PredictInterp { opts, offline, online } => commands::predict_interp(&opts.with_report()?, &offline, &online),
        Command::IdentifySubspace {
            opts,
            offline,
            pi_csv,
            states_csv,
        } => {
            let mut cfg = opts.with_report()?;
            if pi_csv.is_some() {
                cfg.outputs.pi_csv = pi_csv;
            }
            if states_csv.is_some() {
                cfg.outputs.states_csv = states_csv;
            }
            commands::identify_subspace(&cfg, &offline)
        }
        Command::Validate {
            opts,
            offline,
            candidate,
        } => commands::validate(&opts.with_report()?, &offline, &candidate),
        Command::Check { opts, inject_fault } => commands::check(&opts.with_report()?, inject_fault),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
