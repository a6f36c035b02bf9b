use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use nlbehavior::check::{run_check, CheckOptions};
use nlbehavior::config::RunConfig;
use nlbehavior::interp::{build_regressors, representer_check, RepresenterReport};
use nlbehavior::io::{read_trajectory_csv, write_matrix_csv, write_trajectory_csv, Columns};
use nlbehavior::subspace::{build_past_future, input_rank_check, membership_test, recover_states, recover_states_eigen, Route};
use nlbehavior::systems::{seeded_rng, uniform_inputs, Trajectory};
use nlbehavior::{Error, Result};
use serde::Serialize;

fn with_path(path: &Path, e: io::Error) -> Error {
    Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display())))
}

fn read_csv(path: &Path) -> Result<(Trajectory, Columns)> {
    let file = File::open(path).map_err(|e| with_path(path, e))?;
    read_trajectory_csv(BufReader::new(file)).map_err(|e| match e {
        Error::Parse { row, msg } => Error::Parse {
            row,
            msg: format!("{}: {msg}", path.display()),
        },
        other => other,
    })
}

/// Opens `path` for writing, or stdout.
fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| with_path(p, e))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(value: &T, path: Option<&Path>) -> Result<()> {
    let mut out = sink(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

/// Sidecar written next to a simulated trajectory.
#[derive(Serialize)]
struct SimulationRecord<'a> {
    config: &'a RunConfig,
    inputs: usize,
    outputs: usize,
    rows: usize,
}

pub fn sidecar_path(trajectory: &Path) -> PathBuf {
    let mut name = trajectory.as_os_str().to_owned();
    name.push(".config.json");
    PathBuf::from(name)
}

pub fn simulate(cfg: &RunConfig) -> Result<bool> {
    let model = cfg.model()?;
    let horizon = cfg.horizon.ok_or_else(|| Error::Config {
        key: "horizon".into(),
        msg: "missing".into(),
    })?;
    let seed = cfg.seed()?;
    let lag = match cfg.lag {
        Some(_) => cfg.lag()?,
        None => model.natural_lag(),
    };
    if horizon <= lag {
        return Err(Error::Config {
            key: "horizon".into(),
            msg: format!("T = {horizon} must exceed the lag L = {lag}"),
        });
    }
    let u = uniform_inputs(&mut seeded_rng(seed), model.input_dim(), horizon);
    let traj = model.simulate(&u)?;
    let path = cfg.outputs.trajectory.as_deref();
    let mut out = sink(path)?;
    write_trajectory_csv(&traj, &mut out)?;
    out.flush()?;
    if let Some(p) = path {
        let record = SimulationRecord {
            config: cfg,
            inputs: traj.input_dim(),
            outputs: traj.output_dim(),
            rows: traj.len(),
        };
        write_json(&record, Some(&sidecar_path(p)))?;
    }
    Ok(true)
}

/// Representer checks for every online window, each one fitted on the
/// offline samples plus the online samples before it.
pub fn interp_reports(cfg: &RunConfig, offline: &Trajectory, online: &Trajectory) -> Result<Vec<RepresenterReport>> {
    let lag = cfg.lag()?;
    let (m, p) = (offline.input_dim(), offline.output_dim());
    let kernel = cfg.interp_kernel(m, p, lag)?;
    let options = cfg.interp_options()?;
    let mut history = build_regressors(offline, lag)?;
    if online.len() <= lag {
        return Ok(Vec::new());
    }
    let mut reports = Vec::new();
    for sample in build_regressors(online, lag)? {
        reports.push(representer_check(&history, &sample, &kernel, cfg.f_star_norm_sq, options)?);
        history.push(sample);
    }
    Ok(reports)
}

pub fn predict_interp(cfg: &RunConfig, offline: &Path, online: &Path) -> Result<bool> {
    let (off, off_cols) = read_csv(offline)?;
    let (on, on_cols) = read_csv(online)?;
    if off_cols != on_cols {
        return Err(Error::Config {
            key: "online".into(),
            msg: format!(
                "online file has {} inputs and {} outputs, offline has {} and {}",
                on_cols.inputs, on_cols.outputs, off_cols.inputs, off_cols.outputs
            ),
        });
    }
    let reports = interp_reports(cfg, &off, &on)?;
    write_json(&reports, cfg.outputs.report.as_deref())?;
    Ok(reports.iter().all(|r| {
        r.offline_feasible && r.consistent && r.bound_holds != Some(false) && r.exact_at_zero != Some(false)
    }))
}

pub fn subspace_result(cfg: &RunConfig, traj: &Trajectory) -> Result<nlbehavior::subspace::SubspaceResult> {
    let lag = cfg.lag()?;
    if traj.len() <= 2 * lag {
        return Err(Error::Config {
            key: "lag".into(),
            msg: format!("T = {} must exceed 2L = {}", traj.len(), 2 * lag),
        });
    }
    let kernel = cfg.feature_kernel(traj.input_dim(), &traj.u)?;
    let policy = cfg.policy()?;
    let data = build_past_future(traj, lag, &kernel)?;
    let mut result = match cfg.route.unwrap_or(Route::Svd) {
        Route::Svd => recover_states(&data, cfg.order, policy)?,
        Route::Eigen => recover_states_eigen(&data, cfg.order, policy)?,
    };
    result.input_rank = input_rank_check(traj, lag, result.order, &kernel, policy).ok();
    Ok(result)
}

pub fn identify_subspace(cfg: &RunConfig, offline: &Path) -> Result<bool> {
    let (traj, _) = read_csv(offline)?;
    let result = subspace_result(cfg, &traj)?;
    if let Some(r) = &result.input_rank {
        if let Some(w) = &r.warning {
            eprintln!("warning: {w}");
        } else if !r.satisfied {
            eprintln!("warning: input Gram has rank {} of the required {}", r.rank, r.required);
        }
    }
    if let Some(p) = &cfg.outputs.pi_csv {
        let mut out = sink(Some(p))?;
        write_matrix_csv(&result.pi, &mut out)?;
    }
    if let Some(p) = &cfg.outputs.states_csv {
        let mut out = sink(Some(p))?;
        write_matrix_csv(&result.states, &mut out)?;
    }
    write_json(&result, cfg.outputs.report.as_deref())?;
    Ok(true)
}

pub fn validate(cfg: &RunConfig, offline: &Path, candidate: &Path) -> Result<bool> {
    let (traj, _) = read_csv(offline)?;
    let (cand, _) = read_csv(candidate)?;
    let lag = cfg.lag()?;
    if traj.len() <= 2 * lag {
        return Err(Error::Config {
            key: "lag".into(),
            msg: format!("T = {} must exceed 2L = {}", traj.len(), 2 * lag),
        });
    }
    let kernel = cfg.feature_kernel(traj.input_dim(), &traj.u)?;
    let data = build_past_future(&traj, lag, &kernel)?;
    let verdict = membership_test(&data, &cand, cfg.subspace_options()?)?;
    write_json(&verdict, cfg.outputs.report.as_deref())?;
    Ok(verdict.feasible)
}

pub fn check(cfg: &RunConfig, inject_fault: bool) -> Result<bool> {
    let summary = run_check(CheckOptions {
        seed: cfg.seed.unwrap_or(0),
        inject_fault,
    });
    write_json(&summary, cfg.outputs.report.as_deref())?;
    Ok(summary.passed)
}
