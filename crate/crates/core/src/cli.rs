//! Run orchestration: config resolution, pipeline dispatch, and file
//! emission. Every run writes a manifest (a reusable config reproducing the
//! run), CSV data, and a JSON summary. All numeric output uses shortest
//! round-trip decimal formatting, and outputs are bit-identical for a fixed
//! seed regardless of worker count.

use crate::bloch::{Form, IntegratorConfig, InitialConditions};
use crate::config::{broadcast_points, ConfigError, RunConfig};
use crate::ensemble::{
    self, Backend, CorrelationEstimate, DriveConfig, EnsembleConfig, EnsembleError, EnsembleTrace,
};
use crate::ere::{self, EreError, EreParams, SiConstants};
use crate::field::{AmplitudeDist, Geometry, ModeSumOptions};
use crate::spectrum::{SpectrumError, SpectrumSpec};
use crate::validity::{self, SweepSettings, ValidityConfig, ValidityError};
use clap::{Args, Parser, Subcommand};
use num_complex::Complex64;
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;
/// Worker-count fallback environment variable.
pub const WORKERS_ENV: &str = "BLOCH_ERE_WORKERS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error(transparent)]
    Ere(#[from] EreError),
    #[error(transparent)]
    Validity(#[from] ValidityError),
    #[error("bad --set override `{0}` (expected key=value)")]
    BadOverride(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("bad {WORKERS_ENV} value `{0}`")]
    BadWorkersEnv(String),
    #[error("subcommand `{actual}` does not match manifest subcommand `{expected}`")]
    SubcommandMismatch { expected: String, actual: String },
}

/// Stochastic simulator for driven two-level ensembles with a rate-equation
/// oracle.
///
/// Reduced units throughout: the spontaneous rate sets the time unit, and
/// field strength enters as the pump rate R0 = 2 B W(omega0) (so the
/// stimulated-rate coefficient never appears separately; SI conversions live
/// under the `ere` subcommand, whose coefficient is reported in
/// m^3 J^-1 s^-2 per unit spectral energy density per angular frequency).
#[derive(Debug, Parser)]
#[command(name = "bloch-ere", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Config file (`key = value` lines; `#` comments).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed (overrides `run.seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads, 0 = all (overrides `run.workers`, then BLOCH_ERE_WORKERS).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Output directory (overrides `output.dir`).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Individual key overrides, e.g. `--set spectrum.gamma=2`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ensemble-averaged inversion trace (CSV: t, n_bar, stderr).
    Simulate(CommonArgs),
    /// Field correlation estimates (CSV: lag, ReC, ImC, ReCn, ImCn, stderr).
    Correlate(CommonArgs),
    /// Rate-equation closed form (CSV: t, n_bar) plus coefficient
    /// diagnostics (JSON).
    Ere(CommonArgs),
    /// Monte Carlo validity sweep: ensemble vs oracle deviation per grid
    /// point (CSV: gamma, delta, R0, r, eps_dev, stderr, flatness_flag).
    Validate(CommonArgs),
    /// Deterministic validity screening of the same grid, no Monte Carlo
    /// (CSV: gamma, delta, R0, r, sp_ratio, flatness, eps_closure).
    Sweep(CommonArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Correlate(_) => "correlate",
            Command::Ere(_) => "ere",
            Command::Validate(_) => "validate",
            Command::Sweep(_) => "sweep",
        }
    }

    fn common(&self) -> &CommonArgs {
        match self {
            Command::Simulate(c)
            | Command::Correlate(c)
            | Command::Ere(c)
            | Command::Validate(c)
            | Command::Sweep(c) => c,
        }
    }
}

/// Files written by a run.
#[derive(Debug, Clone, Serialize)]
pub struct RunOutputs {
    pub out_dir: PathBuf,
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Summary<'a, T: Serialize> {
    schema_version: u32,
    subcommand: &'a str,
    seed: u64,
    outputs: Vec<String>,
    #[serde(flatten)]
    data: T,
}

/// Resolve the configuration for a command: file, then `--set` overrides,
/// then explicit flags, then the environment fallback for workers.
pub fn resolve_config(cmd: &Command) -> Result<RunConfig, CliError> {
    let common = cmd.common();
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: path.clone(),
                source,
            })?;
            RunConfig::from_text(&text)?
        }
        None => RunConfig::default(),
    };
    for kv in &common.set {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| CliError::BadOverride(kv.clone()))?;
        cfg.set(k.trim(), v.trim())?;
    }
    if let Some(seed) = common.seed {
        cfg.set("run.seed", &seed.to_string())?;
    }
    if common.workers.is_none() && !cfg.is_explicit("run.workers") {
        if let Ok(env) = std::env::var(WORKERS_ENV) {
            let parsed: usize = env.parse().map_err(|_| CliError::BadWorkersEnv(env))?;
            cfg.set("run.workers", &parsed.to_string())?;
        }
    }
    if let Some(workers) = common.workers {
        cfg.set("run.workers", &workers.to_string())?;
    }
    if let Some(out) = &common.out {
        cfg.set("output.dir", &out.display().to_string())?;
    }
    let prior = cfg.get_str("run.subcommand").to_string();
    if prior != "none" && prior != cmd.name() {
        return Err(CliError::SubcommandMismatch {
            expected: prior,
            actual: cmd.name().to_string(),
        });
    }
    cfg.set("run.subcommand", cmd.name())?;
    Ok(cfg)
}

/// Execute a parsed command: run the pipeline and write all artifacts.
pub fn execute(cmd: &Command) -> Result<RunOutputs, CliError> {
    let cfg = resolve_config(cmd)?;
    let out_dir = PathBuf::from(cfg.get_str("output.dir"));
    std::fs::create_dir_all(&out_dir).map_err(|source| CliError::Io {
        path: out_dir.clone(),
        source,
    })?;
    let mut files = vec![write_text(&out_dir.join("manifest.txt"), &cfg.manifest())?];

    match cmd {
        Command::Simulate(_) => run_simulate(&cfg, &out_dir, &mut files)?,
        Command::Correlate(_) => run_correlate(&cfg, &out_dir, &mut files)?,
        Command::Ere(_) => run_ere(&cfg, &out_dir, &mut files)?,
        Command::Validate(_) => run_validate(&cfg, &out_dir, &mut files)?,
        Command::Sweep(_) => run_screening(&cfg, &out_dir, &mut files)?,
    }
    Ok(RunOutputs { out_dir, files })
}

fn write_text(path: &Path, text: &str) -> Result<PathBuf, CliError> {
    std::fs::write(path, text).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(path.to_path_buf())
}

fn write_summary<T: Serialize>(
    out_dir: &Path,
    cfg: &RunConfig,
    files: &[PathBuf],
    data: T,
) -> Result<PathBuf, CliError> {
    let summary = Summary {
        schema_version: SCHEMA_VERSION,
        subcommand: cfg.get_str("run.subcommand"),
        seed: cfg.get_u64("run.seed"),
        outputs: files
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect(),
        data,
    };
    let body = serde_json::to_string_pretty(&summary).expect("serializable summary") + "\n";
    write_text(&out_dir.join("summary.json"), &body)
}

fn linspace(end: f64, intervals: usize) -> Vec<f64> {
    (0..=intervals)
        .map(|i| end * i as f64 / intervals.max(1) as f64)
        .collect()
}

fn build_spectrum(cfg: &RunConfig) -> Result<SpectrumSpec, CliError> {
    match cfg.get_str("spectrum.shape") {
        "lorentzian" => {
            let omega21 = cfg.get_f64("spectrum.omega21");
            let delta = cfg.get_f64("spectrum.delta");
            Ok(SpectrumSpec::lorentzian(
                omega21 - delta,
                cfg.get_f64("spectrum.gamma"),
                cfg.get_f64("spectrum.r0"),
            )?)
        }
        "tabulated" => {
            let path = cfg.get_str("spectrum.table_path");
            if path.is_empty() {
                return Err(ConfigError::MissingTablePath("spectrum.table_path").into());
            }
            let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
                path: PathBuf::from(path),
                source,
            })?;
            Ok(SpectrumSpec::from_two_column(&text)?)
        }
        other => unreachable!("validated shape `{other}`"),
    }
}

fn build_drive(cfg: &RunConfig) -> DriveConfig {
    DriveConfig {
        backend: match cfg.get_str("field.backend") {
            "mode_sum" => Backend::ModeSum,
            _ => Backend::ColoredNoise,
        },
        n_modes: cfg.get_usize("field.n_modes"),
        geometry: match cfg.get_str("field.geometry") {
            "explicit3d" => Geometry::Explicit3D,
            _ => Geometry::PhaseOnly,
        },
        mode_opts: ModeSumOptions {
            span_gammas: cfg.get_f64("field.span_gammas"),
            jitter: cfg.get_bool("field.jitter"),
            amplitude_dist: match cfg.get_str("field.amplitude_dist") {
                "gaussian" => AmplitudeDist::ComplexGaussian,
                _ => AmplitudeDist::Deterministic,
            },
        },
    }
}

fn build_integrator(cfg: &RunConfig) -> IntegratorConfig {
    let dt = cfg.get_f64("bloch.dt");
    IntegratorConfig {
        a: 1.0,
        form: match cfg.get_str("bloch.form") {
            "population" => Form::Population,
            _ => Form::Inversion,
        },
        dt: if dt > 0.0 { Some(dt) } else { None },
        tolerance: cfg.get_f64("bloch.tolerance"),
    }
}

fn build_ensemble(cfg: &RunConfig) -> Result<EnsembleConfig, CliError> {
    Ok(EnsembleConfig {
        spec: build_spectrum(cfg)?,
        omega21: cfg.get_f64("spectrum.omega21"),
        drive: build_drive(cfg),
        integrator: build_integrator(cfg),
        init: InitialConditions {
            n0: cfg.get_f64("bloch.n0"),
            rho21_0: Complex64::new(cfg.get_f64("bloch.rho21_re0"), cfg.get_f64("bloch.rho21_im0")),
        },
        n_atoms: cfg.get_u64("ensemble.n_atoms"),
        seed: cfg.get_u64("run.seed"),
        workers: cfg.get_usize("run.workers"),
    })
}

fn trace_csv(trace: &EnsembleTrace) -> String {
    let mut out = String::from("t,n_bar,stderr\n");
    for i in 0..trace.times.len() {
        writeln!(out, "{},{},{}", trace.times[i], trace.n_bar[i], trace.stderr[i])
            .expect("string write");
    }
    out
}

#[derive(Serialize)]
struct SimulateData {
    n_atoms: u64,
    t_end: f64,
    steady_tail: f64,
}

fn run_simulate(cfg: &RunConfig, out_dir: &Path, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let ens = build_ensemble(cfg)?;
    let grid = linspace(cfg.get_f64("ensemble.t_end"), cfg.get_usize("output.n_points"));
    let trace = ensemble::run_ensemble(&ens, &grid)?;
    files.push(write_text(&out_dir.join("trace.csv"), &trace_csv(&trace))?);
    let data = SimulateData {
        n_atoms: trace.n_atoms,
        t_end: *grid.last().expect("nonempty grid"),
        steady_tail: *trace.n_bar.last().expect("nonempty trace"),
    };
    let summary = write_summary(out_dir, cfg, files, data)?;
    files.push(summary);
    Ok(())
}

fn correlations_csv(est: &CorrelationEstimate) -> String {
    let mut out = String::from("lag,ReC,ImC,ReCn,ImCn,stderr\n");
    for i in 0..est.lags.len() {
        let (re_cn, im_cn) = match &est.cn_hat {
            Some(cn) => (cn[i].re, cn[i].im),
            None => (f64::NAN, f64::NAN),
        };
        writeln!(
            out,
            "{},{},{},{},{},{}",
            est.lags[i], est.c_hat[i].re, est.c_hat[i].im, re_cn, im_cn, est.stderr[i]
        )
        .expect("string write");
    }
    out
}

#[derive(Serialize)]
struct CorrelateData {
    n_atoms: u64,
    t_ref: f64,
    max_lag: f64,
    with_inversion: bool,
    max_abs_residual: Option<f64>,
}

fn run_correlate(cfg: &RunConfig, out_dir: &Path, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let ens = build_ensemble(cfg)?;
    let t_ref = cfg.get_f64("correlate.t_ref");
    let n_lags = cfg.get_usize("correlate.n_lags").max(2);
    let max_lag = cfg.get_f64("correlate.max_lag");
    let lags: Vec<f64> = (0..n_lags)
        .map(|i| max_lag * i as f64 / (n_lags - 1) as f64)
        .collect();
    let with_inversion = cfg.get_bool("correlate.with_inversion");
    let cap = cfg.get_f64("correlate.max_stderr");
    let cap = if cap > 0.0 { Some(cap) } else { None };
    let est = ensemble::estimate_correlations(&ens, t_ref, &lags, with_inversion, cap)?;
    files.push(write_text(&out_dir.join("correlations.csv"), &correlations_csv(&est))?);

    let mut max_abs_residual = None;
    if with_inversion {
        let taus: Vec<f64> = lags.iter().rev().map(|&s| t_ref - s).collect();
        let trace = ensemble::run_ensemble(&ens, &taus)?;
        let residual = ensemble::decorrelation_residual(&est, &trace)?;
        let mut body = String::from("lag,ReD,ImD,absD\n");
        for (i, v) in residual.values.iter().enumerate() {
            writeln!(body, "{},{},{},{}", residual.lags[i], v.re, v.im, v.norm())
                .expect("string write");
        }
        files.push(write_text(&out_dir.join("residual.csv"), &body)?);
        max_abs_residual = Some(residual.max_abs());
    }
    let data = CorrelateData {
        n_atoms: est.n_atoms,
        t_ref,
        max_lag,
        with_inversion,
        max_abs_residual,
    };
    let summary = write_summary(out_dir, cfg, files, data)?;
    files.push(summary);
    Ok(())
}

#[derive(Serialize)]
struct EreData {
    a: f64,
    r: f64,
    n0: f64,
    steady_state: f64,
    relaxation_rate: f64,
}

fn run_ere(cfg: &RunConfig, out_dir: &Path, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let params = EreParams::new(cfg.get_f64("ere.a"), cfg.get_f64("ere.r"), cfg.get_f64("ere.n0"))?;
    let grid = linspace(cfg.get_f64("ere.t_end"), cfg.get_usize("output.n_points"));
    let trace = ere::solve_ere(&params, &grid);
    let mut body = String::from("t,n_bar\n");
    for (t, n) in grid.iter().zip(&trace) {
        writeln!(body, "{t},{n}").expect("string write");
    }
    files.push(write_text(&out_dir.join("ere_trace.csv"), &body)?);

    let si = SiConstants::with_codata(cfg.get_f64("ere.mu_debye"), cfg.get_f64("ere.omega21_si"))?;
    let a_si = cfg.get_f64("ere.a_si");
    let report = if a_si > 0.0 {
        ere::ab_ratio_check(&si, a_si)
    } else {
        let implied = ere::ab_ratio_check(&si, 1.0).a_implied;
        ere::ab_ratio_check(&si, implied)
    };
    let diag = serde_json::to_string_pretty(&report).expect("serializable report") + "\n";
    files.push(write_text(&out_dir.join("ere_diagnostics.json"), &diag)?);

    let data = EreData {
        a: params.a,
        r: params.r,
        n0: params.n0,
        steady_state: params.steady_state(),
        relaxation_rate: params.relaxation_rate(),
    };
    let summary = write_summary(out_dir, cfg, files, data)?;
    files.push(summary);
    Ok(())
}

fn validity_points(cfg: &RunConfig) -> Result<Vec<ValidityConfig>, CliError> {
    let points = broadcast_points(
        &cfg.get_f64_list("validity.gammas"),
        &cfg.get_f64_list("validity.deltas"),
        &cfg.get_f64_list("validity.r0s"),
    )?;
    let p_max = cfg.get_usize("validity.p_max");
    points
        .into_iter()
        .map(|(g, d, r0)| Ok(ValidityConfig::new(g, d, r0, p_max)?))
        .collect()
}

#[derive(Serialize)]
struct ValidateData {
    n_points: usize,
    n_atoms: u64,
    failures: usize,
}

fn run_validate(cfg: &RunConfig, out_dir: &Path, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let points = validity_points(cfg)?;
    let settings = SweepSettings {
        drive: build_drive(cfg),
        integrator: build_integrator(cfg),
        init: InitialConditions {
            n0: cfg.get_f64("bloch.n0"),
            rho21_0: Complex64::new(cfg.get_f64("bloch.rho21_re0"), cfg.get_f64("bloch.rho21_im0")),
        },
        n_atoms: cfg.get_u64("validity.n_atoms"),
        t_end: cfg.get_f64("validity.t_end"),
        n_points: cfg.get_usize("output.n_points"),
        seed: cfg.get_u64("run.seed"),
        workers: cfg.get_usize("run.workers"),
    };
    let rows = validity::sweep_validity(&points, &settings);
    let mut body = String::from("gamma,delta,R0,r,eps_dev,stderr,flatness_flag\n");
    for row in &rows {
        writeln!(
            body,
            "{},{},{},{},{},{},{}",
            row.gamma,
            row.delta,
            row.r0,
            row.r,
            row.eps_dev,
            row.stderr,
            u8::from(row.flatness_flagged)
        )
        .expect("string write");
    }
    files.push(write_text(&out_dir.join("validity.csv"), &body)?);
    let data = ValidateData {
        n_points: rows.len(),
        n_atoms: settings.n_atoms,
        failures: rows.iter().filter(|r| r.error.is_some()).count(),
    };
    let summary = write_summary(out_dir, cfg, files, data)?;
    files.push(summary);
    Ok(())
}

#[derive(Serialize)]
struct ScreeningData {
    n_points: usize,
}

/// Deterministic companion to `validate`: applicability diagnostics and the
/// memory-equation deviation from the oracle, with no Monte Carlo.
fn run_screening(cfg: &RunConfig, out_dir: &Path, files: &mut Vec<PathBuf>) -> Result<(), CliError> {
    let points = validity_points(cfg)?;
    let t_end = cfg.get_f64("validity.t_end");
    let grid = linspace(t_end, cfg.get_usize("output.n_points"));
    let a = 1.0;
    let mut body = String::from("gamma,delta,R0,r,sp_ratio,flatness,eps_closure\n");
    for point in &points {
        let r = validity::bound_ratio(point);
        let sp = validity::sp_magnitudes(point, a);
        let sp_ratio = if sp[0] > 0.0 { sp[1] / sp[0] } else { 0.0 };
        let flatness = validity::flatness_diagnostic(point, a);
        let dt = 0.02 / (point.gamma + a);
        let memory = validity::integrate_memory_ode(point, a, -1.0, &grid, dt);
        let oracle = ere::solve_ere(
            &EreParams {
                a,
                r: point.pump_rate(),
                n0: -1.0,
            },
            &grid,
        );
        let window = 3.0 / point.gamma;
        let eps_closure = grid
            .iter()
            .zip(memory.iter().zip(&oracle))
            .filter(|(t, _)| **t >= window)
            .map(|(_, (m, o))| (m - o).abs())
            .fold(0.0f64, f64::max);
        writeln!(
            body,
            "{},{},{},{},{},{},{}",
            point.gamma, point.delta, point.r0, r, sp_ratio, flatness, eps_closure
        )
        .expect("string write");
    }
    files.push(write_text(&out_dir.join("screening.csv"), &body)?);
    let summary = write_summary(out_dir, cfg, files, ScreeningData { n_points: points.len() })?;
    files.push(summary);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subcommand_names_are_stable() {
        let args = CommonArgs {
            config: None,
            seed: None,
            workers: None,
            out: None,
            set: vec![],
        };
        assert_eq!(Command::Simulate(args.clone()).name(), "simulate");
        assert_eq!(Command::Validate(args).name(), "validate");
    }

    #[test]
    fn override_precedence_flag_beats_set() {
        let cmd = Command::Ere(CommonArgs {
            config: None,
            seed: Some(99),
            workers: None,
            out: None,
            set: vec!["run.seed=5".into(), "ere.r=2".into()],
        });
        let cfg = resolve_config(&cmd).unwrap();
        assert_eq!(cfg.get_u64("run.seed"), 99);
        assert_eq!(cfg.get_f64("ere.r"), 2.0);
        assert_eq!(cfg.get_str("run.subcommand"), "ere");
    }

    #[test]
    fn bad_override_is_reported() {
        let cmd = Command::Ere(CommonArgs {
            config: None,
            seed: None,
            workers: None,
            out: None,
            set: vec!["no-equals-sign".into()],
        });
        assert!(matches!(resolve_config(&cmd), Err(CliError::BadOverride(_))));
    }
}
