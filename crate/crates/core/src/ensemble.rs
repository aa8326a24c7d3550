//! Ensembles of independent atom-field realizations: the averaged inversion,
//! empirical field correlations, and the factorization (decorrelation)
//! residual.
//!
//! Atoms are simulated in parallel but accumulated in atom-index order with
//! pairwise-stable merging, so every output is bit-identical for a fixed
//! seed regardless of the worker count.

use crate::bloch::{self, AtomTrace, BlochError, IntegratorConfig, InitialConditions};
use crate::field::{
    synth_colored_noise, synth_mode_sum, FieldError, Geometry, ModeSumOptions, RabiProcess,
    SeedPath,
};
use crate::spectrum::{SpectrumError, SpectrumSpec};
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

/// Atoms processed per parallel wave; accumulation happens in index order
/// after each wave so memory stays bounded.
const WAVE: usize = 256;
/// Number of contiguous atom batches used for batch-means standard errors.
const N_BATCHES: usize = 10;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("ensemble needs at least 2 atoms, got {0}")]
    TooFewAtoms(u64),
    #[error("atom {atom} failed: {source}")]
    AtomFailed {
        atom: u64,
        #[source]
        source: BlochError,
    },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error("lags must be nonnegative, sorted, and at most t_ref")]
    BadLags,
    #[error("standard error {stderr:e} at lag {lag} exceeds the cap {cap:e}")]
    InsufficientRealizations { lag: f64, stderr: f64, cap: f64 },
    #[error("trace grid has no point at t={t} needed by the residual")]
    GridMismatch { t: f64 },
    #[error("correlation estimate lacks a zero-lag value to normalize by")]
    MissingZeroLag,
    #[error("correlation estimate carries no inversion-weighted channel")]
    MissingInversionChannel,
    #[error("failed to build worker pool: {0}")]
    Pool(String),
}

/// Field synthesis backend.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Backend {
    ModeSum,
    ColoredNoise,
}

/// How each atom's drive realization is synthesized.
#[derive(Debug, Clone)]
pub struct DriveConfig {
    pub backend: Backend,
    pub n_modes: usize,
    pub geometry: Geometry,
    pub mode_opts: ModeSumOptions,
}

impl Default for DriveConfig {
    fn default() -> Self {
        Self {
            backend: Backend::ColoredNoise,
            n_modes: 2048,
            geometry: Geometry::PhaseOnly,
            mode_opts: ModeSumOptions::default(),
        }
    }
}

impl DriveConfig {
    pub fn build(
        &self,
        spec: &SpectrumSpec,
        omega21: f64,
        path: SeedPath,
    ) -> Result<RabiProcess, FieldError> {
        match self.backend {
            Backend::ModeSum => synth_mode_sum(
                spec,
                omega21,
                self.n_modes,
                path,
                self.geometry,
                &self.mode_opts,
            ),
            Backend::ColoredNoise => {
                let gamma = match spec {
                    SpectrumSpec::Lorentzian { gamma, .. } => *gamma,
                    SpectrumSpec::Tabulated { .. } => return Err(FieldError::NonLorentzian),
                };
                synth_colored_noise(spec, omega21, path, 0.05 / gamma)
            }
        }
    }
}

/// Everything needed to reproduce one ensemble run.
#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub spec: SpectrumSpec,
    pub omega21: f64,
    pub drive: DriveConfig,
    pub integrator: IntegratorConfig,
    pub init: InitialConditions,
    pub n_atoms: u64,
    pub seed: u64,
    /// Worker threads; 0 uses the global pool.
    pub workers: usize,
}

/// Ensemble-averaged inversion with per-point standard errors.
#[derive(Debug, Clone)]
pub struct EnsembleTrace {
    pub times: Vec<f64>,
    pub n_bar: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_atoms: u64,
    pub seed: u64,
}

/// Monte Carlo estimates of the field correlation and its
/// inversion-weighted companion over a lag grid.
#[derive(Debug, Clone)]
pub struct CorrelationEstimate {
    pub t_ref: f64,
    pub lags: Vec<f64>,
    pub c_hat: Vec<Complex64>,
    /// Batch-means standard error of `c_hat` per lag.
    pub stderr: Vec<f64>,
    pub cn_hat: Option<Vec<Complex64>>,
    pub cn_stderr: Option<Vec<f64>>,
    /// Mean inversion at the lag times, when the atoms were integrated.
    pub n_bar_at_lag: Option<Vec<f64>>,
    pub n_atoms: u64,
}

/// Normalized factorization residual
/// `D(s) = [Cn(t, t-s) - C(t, t-s) n_bar(t-s)] / C(t, t)`.
#[derive(Debug, Clone)]
pub struct ResidualProfile {
    pub lags: Vec<f64>,
    pub values: Vec<Complex64>,
}

impl ResidualProfile {
    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

fn run_pooled<T: Send>(
    workers: usize,
    job: impl FnOnce() -> T + Send,
) -> Result<T, EnsembleError> {
    if workers == 0 {
        Ok(job())
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map_err(|e| EnsembleError::Pool(e.to_string()))?;
        Ok(pool.install(job))
    }
}

/// Pairwise-stable per-point mean/variance accumulator (Welford merges).
struct Accumulator {
    count: u64,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Accumulator {
    fn new(len: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, values: &[f64]) {
        self.count += 1;
        let inv = 1.0 / self.count as f64;
        for (i, &x) in values.iter().enumerate() {
            let delta = x - self.mean[i];
            self.mean[i] += delta * inv;
            self.m2[i] += delta * (x - self.mean[i]);
        }
    }

    fn stderr(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.mean.len()];
        }
        let denom = (self.count * (self.count - 1)) as f64;
        self.m2.iter().map(|&m| (m / denom).sqrt()).collect()
    }
}

fn simulate_atom(
    cfg: &EnsembleConfig,
    grid: &[f64],
    atom: u64,
) -> Result<AtomTrace, EnsembleError> {
    let path = SeedPath::new(cfg.seed, atom);
    let mut drive = cfg.drive.build(&cfg.spec, cfg.omega21, path)?;
    bloch::integrate(cfg.init, &mut drive, grid, &cfg.integrator)
        .map_err(|source| EnsembleError::AtomFailed { atom, source })
}

/// Integrate `n_atoms` independent realizations and average the inversion on
/// the output grid. Deterministic for a fixed seed, independent of worker
/// count.
pub fn run_ensemble(cfg: &EnsembleConfig, grid: &[f64]) -> Result<EnsembleTrace, EnsembleError> {
    if cfg.n_atoms < 2 {
        return Err(EnsembleError::TooFewAtoms(cfg.n_atoms));
    }
    let acc = run_pooled(cfg.workers, || -> Result<Accumulator, EnsembleError> {
        let mut acc = Accumulator::new(grid.len());
        let mut start = 0u64;
        while start < cfg.n_atoms {
            let end = (start + WAVE as u64).min(cfg.n_atoms);
            let wave: Vec<Result<AtomTrace, EnsembleError>> = (start..end)
                .into_par_iter()
                .map(|atom| simulate_atom(cfg, grid, atom))
                .collect();
            for trace in wave {
                acc.push(&trace?.n);
            }
            start = end;
        }
        Ok(acc)
    })??;
    let stderr = acc.stderr();
    Ok(EnsembleTrace {
        times: grid.to_vec(),
        n_bar: acc.mean,
        stderr,
        n_atoms: cfg.n_atoms,
        seed: cfg.seed,
    })
}

struct AtomCorrelation {
    c: Vec<Complex64>,
    cn: Option<Vec<Complex64>>,
    n_at_lag: Option<Vec<f64>>,
}

fn correlate_atom(
    cfg: &EnsembleConfig,
    t_ref: f64,
    taus: &[f64],
    with_inversion: bool,
    atom: u64,
) -> Result<AtomCorrelation, EnsembleError> {
    let path = SeedPath::new(cfg.seed, atom);
    let mut drive = cfg.drive.build(&cfg.spec, cfg.omega21, path)?;
    let n_lags = taus.len();
    if with_inversion {
        // single ascending grid: every tau plus t_ref itself
        let mut grid: Vec<f64> = taus.to_vec();
        if *grid.last().expect("nonempty taus") < t_ref {
            grid.push(t_ref);
        }
        let trace = bloch::integrate(cfg.init, &mut drive, &grid, &cfg.integrator)
            .map_err(|source| EnsembleError::AtomFailed { atom, source })?;
        let at_ref = *trace.omega.last().expect("grid nonempty");
        let mut c = Vec::with_capacity(n_lags);
        let mut cn = Vec::with_capacity(n_lags);
        let mut n_at = Vec::with_capacity(n_lags);
        for i in 0..n_lags {
            let prod = at_ref.conj() * trace.omega[i];
            c.push(prod);
            cn.push(prod * trace.n[i]);
            n_at.push(trace.n[i]);
        }
        Ok(AtomCorrelation {
            c,
            cn: Some(cn),
            n_at_lag: Some(n_at),
        })
    } else {
        let mut samples = Vec::with_capacity(n_lags);
        for &tau in taus {
            samples.push(drive.sample(tau)?);
        }
        let at_ref = drive.sample(t_ref)?;
        let c = samples.iter().map(|&v| at_ref.conj() * v).collect();
        Ok(AtomCorrelation {
            c,
            cn: None,
            n_at_lag: None,
        })
    }
}

/// Batch-means accumulator for complex estimates.
struct ComplexBatches {
    sums: Vec<Vec<Complex64>>, // [batch][lag]
    counts: Vec<u64>,
}

impl ComplexBatches {
    fn new(n_lags: usize) -> Self {
        Self {
            sums: vec![vec![Complex64::default(); n_lags]; N_BATCHES],
            counts: vec![0; N_BATCHES],
        }
    }

    fn push(&mut self, batch: usize, values: &[Complex64]) {
        self.counts[batch] += 1;
        for (i, &v) in values.iter().enumerate() {
            self.sums[batch][i] += v;
        }
    }

    fn finish(&self) -> (Vec<Complex64>, Vec<f64>) {
        let n_lags = self.sums[0].len();
        let total: u64 = self.counts.iter().sum();
        let mut mean = vec![Complex64::default(); n_lags];
        for b in 0..N_BATCHES {
            for i in 0..n_lags {
                mean[i] += self.sums[b][i];
            }
        }
        for m in &mut mean {
            *m /= total as f64;
        }
        let mut stderr = vec![0.0; n_lags];
        let used: Vec<usize> = (0..N_BATCHES).filter(|&b| self.counts[b] > 0).collect();
        if used.len() > 1 {
            for i in 0..n_lags {
                let bm: Vec<Complex64> = used
                    .iter()
                    .map(|&b| self.sums[b][i] / self.counts[b] as f64)
                    .collect();
                let bmean = bm.iter().sum::<Complex64>() / bm.len() as f64;
                let var = bm.iter().map(|m| (m - bmean).norm_sqr()).sum::<f64>()
                    / (bm.len() - 1) as f64;
                stderr[i] = (var / bm.len() as f64).sqrt();
            }
        }
        (mean, stderr)
    }
}

/// Monte Carlo estimate of the field correlation `C(t_ref, t_ref - s)` and,
/// optionally, its inversion-weighted companion, over the given lags.
/// Standard errors come from ten contiguous atom batches.
pub fn estimate_correlations(
    cfg: &EnsembleConfig,
    t_ref: f64,
    lags: &[f64],
    with_inversion: bool,
    max_stderr: Option<f64>,
) -> Result<CorrelationEstimate, EnsembleError> {
    if cfg.n_atoms < 2 {
        return Err(EnsembleError::TooFewAtoms(cfg.n_atoms));
    }
    if lags.is_empty()
        || lags[0] < 0.0
        || lags.windows(2).any(|w| w[1] <= w[0])
        || *lags.last().expect("nonempty") > t_ref
    {
        return Err(EnsembleError::BadLags);
    }
    // ascending sample times tau = t_ref - s
    let taus: Vec<f64> = lags.iter().rev().map(|&s| t_ref - s).collect();

    let n_lags = lags.len();
    let n_atoms = cfg.n_atoms;
    let batch_of = |atom: u64| ((atom * N_BATCHES as u64) / n_atoms) as usize;

    let (c_batches, cn_batches, n_acc) = run_pooled(cfg.workers, || {
        let mut c_batches = ComplexBatches::new(n_lags);
        let mut cn_batches = ComplexBatches::new(n_lags);
        let mut n_acc = Accumulator::new(n_lags);
        let mut start = 0u64;
        while start < n_atoms {
            let end = (start + WAVE as u64).min(n_atoms);
            let wave: Vec<Result<AtomCorrelation, EnsembleError>> = (start..end)
                .into_par_iter()
                .map(|atom| correlate_atom(cfg, t_ref, &taus, with_inversion, atom))
                .collect();
            for (offset, result) in wave.into_iter().enumerate() {
                let atom = start + offset as u64;
                let ac = result?;
                c_batches.push(batch_of(atom), &ac.c);
                if let Some(cn) = &ac.cn {
                    cn_batches.push(batch_of(atom), cn);
                }
                if let Some(n_at) = &ac.n_at_lag {
                    n_acc.push(n_at);
                }
            }
            start = end;
        }
        Ok::<_, EnsembleError>((c_batches, cn_batches, n_acc))
    })??;

    // per-lag estimates arrive in tau order; flip back to lag order
    let (mut c_hat, mut stderr) = c_batches.finish();
    c_hat.reverse();
    stderr.reverse();
    let (cn_hat, cn_stderr, n_bar_at_lag) = if with_inversion {
        let (mut cn, mut cn_se) = cn_batches.finish();
        cn.reverse();
        cn_se.reverse();
        let mut nb = n_acc.mean;
        nb.reverse();
        (Some(cn), Some(cn_se), Some(nb))
    } else {
        (None, None, None)
    };

    if let Some(cap) = max_stderr {
        for (i, &se) in stderr.iter().enumerate() {
            if se > cap {
                return Err(EnsembleError::InsufficientRealizations {
                    lag: lags[i],
                    stderr: se,
                    cap,
                });
            }
        }
    }

    Ok(CorrelationEstimate {
        t_ref,
        lags: lags.to_vec(),
        c_hat,
        stderr,
        cn_hat,
        cn_stderr,
        n_bar_at_lag,
        n_atoms,
    })
}

/// The factorization residual of the estimate against an ensemble trace from
/// the same configuration. The trace must contain every lag time.
pub fn decorrelation_residual(
    est: &CorrelationEstimate,
    trace: &EnsembleTrace,
) -> Result<ResidualProfile, EnsembleError> {
    let cn = est
        .cn_hat
        .as_ref()
        .ok_or(EnsembleError::MissingInversionChannel)?;
    let zero = est
        .lags
        .iter()
        .position(|&s| s == 0.0)
        .ok_or(EnsembleError::MissingZeroLag)?;
    let c0 = est.c_hat[zero].norm();
    if c0 == 0.0 {
        // dark field: define the residual as identically zero
        return Ok(ResidualProfile {
            lags: est.lags.clone(),
            values: vec![Complex64::default(); est.lags.len()],
        });
    }
    let mut values = Vec::with_capacity(est.lags.len());
    for (i, &s) in est.lags.iter().enumerate() {
        let tau = est.t_ref - s;
        let idx = trace
            .times
            .iter()
            .position(|&t| (t - tau).abs() <= 1e-9 * (1.0 + tau.abs()))
            .ok_or(EnsembleError::GridMismatch { t: tau })?;
        values.push((cn[i] - est.c_hat[i] * trace.n_bar[idx]) / c0);
    }
    Ok(ResidualProfile {
        lags: est.lags.clone(),
        values,
    })
}
