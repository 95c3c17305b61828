//! Run configuration and experiment specifications.
//!
//! Configuration files are flat key=value text; every key also exists as a
//! CLI flag. Defaults reproduce the first experiment of the reference
//! protocol: unit square, eps = 0.0625, tau = 0.002/64, T = 0.04, cosine
//! initial data, Newton tolerances 1e-15 (correction) / 1e-7 (residual),
//! MINRES tolerance 1e-7, V(4,4) smoothing.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// (1/2)^(d-1) prod_i (1 - cos 2 pi x_i) - 1, interpolated nodally.
    Cosine,
    /// I.i.d. uniform nodal noise in [mean - amplitude, mean + amplitude].
    Random { seed: u64, amplitude: f64, mean: f64 },
}

#[derive(Debug, Clone, Default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Step indices at which to write VTK snapshots; `None` means six evenly
    /// spaced times including t = 0 and t = T.
    pub snapshot_steps: Option<Vec<usize>>,
    /// Excludes wall-clock columns from CSV output for byte-stable comparisons.
    pub no_timing: bool,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub dimension: usize,
    /// Number of uniform refinements; the simulation runs on the finest level.
    pub levels: usize,
    pub tau: f64,
    pub eps: f64,
    pub t_final: f64,
    pub newton_linf_tol: f64,
    pub newton_residual_tol: f64,
    pub minres_rtol: f64,
    pub minres_maxit: usize,
    pub max_newton: usize,
    pub nu_pre: usize,
    pub nu_post: usize,
    pub initial_condition: InitialCondition,
    /// Initialize by the mean-matching projection instead of interpolation.
    pub use_ritz_projection: bool,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dimension: 2,
            levels: 2,
            tau: 0.002 / 64.0,
            eps: 0.0625,
            t_final: 0.04,
            newton_linf_tol: 1e-15,
            newton_residual_tol: 1e-7,
            minres_rtol: 1e-7,
            minres_maxit: 500,
            max_newton: 20,
            nu_pre: 4,
            nu_post: 4,
            initial_condition: InitialCondition::Cosine,
            use_ritz_projection: false,
            output: OutputConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dimension == 2 || self.dimension == 3) {
            return Err(Error::Config(format!(
                "dimension {} not supported; expected 2 or 3",
                self.dimension
            )));
        }
        crate::jacobian::validate_parameters(self.tau, self.eps)?;
        if self.t_final <= 0.0 {
            return Err(Error::Config(format!(
                "final time {} must be positive",
                self.t_final
            )));
        }
        self.num_steps()?;
        if let InitialCondition::Random { amplitude, .. } = self.initial_condition {
            if !(amplitude > 0.0 && amplitude.is_finite()) {
                return Err(Error::Config(format!(
                    "random initial amplitude {amplitude} must be positive"
                )));
            }
        }
        if self.nu_pre == 0 && self.nu_post == 0 {
            return Err(Error::Config("at least one smoothing sweep required".into()));
        }
        Ok(())
    }

    /// T must be a positive integer multiple of tau.
    pub fn num_steps(&self) -> Result<usize> {
        let ratio = self.t_final / self.tau;
        let steps = ratio.round();
        if steps < 1.0 || (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::Config(format!(
                "final time {} is not an integer multiple of tau {}",
                self.t_final, self.tau
            )));
        }
        Ok(steps as usize)
    }

    /// Step indices where snapshots are emitted (always includes step 0).
    pub fn snapshot_schedule(&self) -> Result<Vec<usize>> {
        let steps = self.num_steps()?;
        let mut schedule = match &self.output.snapshot_steps {
            Some(list) => list.clone(),
            None => (0..=5)
                .map(|k| ((k * steps) as f64 / 5.0).round() as usize)
                .collect(),
        };
        schedule.retain(|&s| s <= steps);
        schedule.sort_unstable();
        schedule.dedup();
        Ok(schedule)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    SingleRun,
    HSweep,
    TauSweep,
    /// tau coupled to the mesh as tau = 0.002 h / sqrt(2).
    CoupledSweep,
    SpectrumSweep,
}

/// One experiment of the reference protocol: a cartesian sweep over levels,
/// time steps and interface widths around a base configuration.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub kind: ExperimentKind,
    pub base: RunConfig,
    pub levels: Vec<usize>,
    pub taus: Vec<f64>,
    pub epsilons: Vec<f64>,
}

impl ExperimentSpec {
    pub fn new(kind: ExperimentKind, base: RunConfig) -> Self {
        let levels = vec![base.levels];
        let taus = vec![base.tau];
        let epsilons = vec![base.eps];
        ExperimentSpec {
            kind,
            base,
            levels,
            taus,
            epsilons,
        }
    }

    /// Expands the sweep into validated run configurations, ordered by
    /// (level, tau, eps).
    pub fn points(&self) -> Result<Vec<RunConfig>> {
        if self.levels.is_empty() || self.taus.is_empty() || self.epsilons.is_empty() {
            return Err(Error::Config("empty sweep list".into()));
        }
        let mut runs = Vec::new();
        for &level in &self.levels {
            for &tau in &self.taus {
                for &eps in &self.epsilons {
                    let mut config = self.base.clone();
                    config.levels = level;
                    config.eps = eps;
                    config.tau = match self.kind {
                        // h = sqrt(2)/2^(l+1) so tau = 0.002 h / sqrt(2)
                        ExperimentKind::CoupledSweep => 0.002 / (1u64 << (level + 1)) as f64,
                        _ => tau,
                    };
                    config.validate()?;
                    runs.push(config);
                }
            }
        }
        Ok(runs)
    }
}

fn parse_f64(value: &str, key: &str, line: usize) -> Result<f64> {
    // values may be written as fractions, e.g. 0.002/64
    let parsed = if let Some((num, den)) = value.split_once('/') {
        match (num.trim().parse::<f64>(), den.trim().parse::<f64>()) {
            (Ok(n), Ok(d)) if d != 0.0 => Some(n / d),
            _ => None,
        }
    } else {
        value.trim().parse::<f64>().ok()
    };
    parsed.ok_or_else(|| {
        Error::Config(format!(
            "line {line}: key '{key}' has non-numeric value '{value}'"
        ))
    })
}

fn parse_usize(value: &str, key: &str, line: usize) -> Result<usize> {
    value.trim().parse::<usize>().map_err(|_| {
        Error::Config(format!(
            "line {line}: key '{key}' has non-integer value '{value}'"
        ))
    })
}

fn parse_bool(value: &str, key: &str, line: usize) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(Error::Config(format!(
            "line {line}: key '{key}' has non-boolean value '{other}'"
        ))),
    }
}

/// Parses flat key=value text into a configuration; unknown keys are
/// rejected with their line number.
pub fn parse_config_str(text: &str) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    let mut seed = 42u64;
    let mut amplitude = 0.05f64;
    let mut ic_mean = 0.0f64;
    let mut ic_kind: Option<String> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content.split_once('=').ok_or_else(|| {
            Error::Config(format!(
                "line {line}: expected key=value, found '{content}'"
            ))
        })?;
        let key = key.trim();
        let value = value.trim();
        match key {
            "dim" => config.dimension = parse_usize(value, key, line)?,
            "levels" => config.levels = parse_usize(value, key, line)?,
            "tau" => config.tau = parse_f64(value, key, line)?,
            "eps" => config.eps = parse_f64(value, key, line)?,
            "tfinal" => config.t_final = parse_f64(value, key, line)?,
            "newton_linf_tol" => config.newton_linf_tol = parse_f64(value, key, line)?,
            "newton_residual_tol" => config.newton_residual_tol = parse_f64(value, key, line)?,
            "minres_rtol" => config.minres_rtol = parse_f64(value, key, line)?,
            "minres_maxit" => config.minres_maxit = parse_usize(value, key, line)?,
            "max_newton" => config.max_newton = parse_usize(value, key, line)?,
            "nu_pre" => config.nu_pre = parse_usize(value, key, line)?,
            "nu_post" => config.nu_post = parse_usize(value, key, line)?,
            "ic" => ic_kind = Some(value.to_string()),
            "seed" => seed = parse_usize(value, key, line)? as u64,
            "amplitude" => amplitude = parse_f64(value, key, line)?,
            "ic_mean" => ic_mean = parse_f64(value, key, line)?,
            "init" => match value {
                "interpolate" => config.use_ritz_projection = false,
                "ritz" => config.use_ritz_projection = true,
                other => {
                    return Err(Error::Config(format!(
                        "line {line}: key 'init' must be interpolate or ritz, found '{other}'"
                    )));
                }
            },
            "out" => config.output.dir = Some(PathBuf::from(value)),
            "no_timing" => config.output.no_timing = parse_bool(value, key, line)?,
            "snapshot_steps" => {
                let mut steps = Vec::new();
                for part in value.split(',') {
                    steps.push(parse_usize(part, key, line)?);
                }
                config.output.snapshot_steps = Some(steps);
            }
            other => {
                return Err(Error::Config(format!("line {line}: unknown key '{other}'")));
            }
        }
    }

    match ic_kind.as_deref() {
        None | Some("cosine") => {}
        Some("random") => {
            config.initial_condition = InitialCondition::Random {
                seed,
                amplitude,
                mean: ic_mean,
            };
        }
        Some(other) => {
            return Err(Error::Config(format!(
                "initial condition '{other}' not recognized (cosine or random)"
            )));
        }
    }
    config.validate()?;
    Ok(config)
}

pub fn parse_config_file(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config_str(&text)
}
