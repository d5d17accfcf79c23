//! Run configuration files: four TOML sections (`run`, `kernel`, `ic`,
//! `experiment`) of `key = value` pairs. Every key has a default except
//! `kernel.family` and the initial condition. Unknown keys are errors.

use std::path::Path;

use alignlab_core::dynamics::{FourierSeries, ICSpec, Preset, RunConfig};
use alignlab_core::kernels::{KernelFamily, KernelSpec, TabulatedKernel};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

const SECTIONS: &[&str] = &["run", "kernel", "ic", "experiment"];

const RUN_KEYS: &[&str] = &[
    "n",
    "t_end",
    "cfl",
    "dealias",
    "snapshot_every",
    "diagnostics_every",
    "symbol_tol",
    "fixed_dt",
    "holder_r_max",
    "max_steps",
];

const KERNEL_KEYS: &[&str] = &[
    "family", "alpha", "r0", "gamma", "quad_tol", "radii", "values",
];

const IC_KEYS: &[&str] = &[
    "preset",
    "steepness",
    "rho0_mean",
    "rho0_cos",
    "rho0_sin",
    "u0_mean",
    "u0_cos",
    "u0_sin",
];

const EXPERIMENT_KEYS: &[&str] = &[
    "grid_points",
    "grid_min",
    "power_k",
    "expected_failures",
    "convergence_t_end",
    "temporal_dt",
    "spatial_dt",
    "integrable_family",
    "comparison_family",
    "sweep_parameter",
    "sweep_values",
];

/// Parameters a sweep may vary.
pub const SWEEP_PARAMETERS: &[&str] = &[
    "steepness",
    "n",
    "t_end",
    "cfl",
    "dealias",
    "alpha",
    "r0",
    "gamma",
];

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    run: Option<RawRun>,
    kernel: Option<RawKernel>,
    ic: Option<RawIc>,
    experiment: Option<RawExperiment>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRun {
    n: Option<usize>,
    t_end: Option<f64>,
    cfl: Option<f64>,
    dealias: Option<f64>,
    snapshot_every: Option<f64>,
    diagnostics_every: Option<f64>,
    symbol_tol: Option<f64>,
    fixed_dt: Option<f64>,
    holder_r_max: Option<f64>,
    max_steps: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    family: Option<String>,
    alpha: Option<f64>,
    r0: Option<f64>,
    gamma: Option<f64>,
    quad_tol: Option<f64>,
    radii: Option<Vec<f64>>,
    values: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawIc {
    preset: Option<String>,
    steepness: Option<f64>,
    rho0_mean: Option<f64>,
    rho0_cos: Option<Vec<f64>>,
    rho0_sin: Option<Vec<f64>>,
    u0_mean: Option<f64>,
    u0_cos: Option<Vec<f64>>,
    u0_sin: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    grid_points: Option<usize>,
    grid_min: Option<f64>,
    power_k: Option<f64>,
    expected_failures: Option<Vec<String>>,
    convergence_t_end: Option<f64>,
    temporal_dt: Option<f64>,
    spatial_dt: Option<f64>,
    integrable_family: Option<String>,
    comparison_family: Option<String>,
    sweep_parameter: Option<String>,
    sweep_values: Option<Vec<f64>>,
}

/// Settings of the non-simulation experiments.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentSettings {
    pub grid_points: usize,
    pub grid_min: f64,
    pub power_k: f64,
    /// Assumption flags the audit expects to fail; `None` means the family
    /// default.
    pub expected_failures: Option<Vec<String>>,
    pub convergence_t_end: f64,
    pub temporal_dt: Option<f64>,
    pub spatial_dt: Option<f64>,
    pub integrable_family: KernelSpec,
    pub comparison_family: KernelSpec,
    pub sweep: Option<SweepAxis>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepAxis {
    pub parameter: String,
    pub values: Vec<f64>,
}

/// A validated configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentPlan {
    pub kernel: KernelSpec,
    /// `None` only when the file has no `[ic]` section; commands that
    /// integrate in time reject that.
    pub ic: Option<ICSpec>,
    pub run: RunSettings,
    pub experiment: ExperimentSettings,
}

/// The `[run]` section with defaults applied.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSettings {
    pub n: usize,
    pub t_end: f64,
    pub cfl: f64,
    pub dealias: f64,
    pub snapshot_every: f64,
    pub diagnostics_every: f64,
    pub symbol_tol: f64,
    pub fixed_dt: Option<f64>,
    pub holder_r_max: Option<f64>,
    pub max_steps: u64,
}

impl ExperimentPlan {
    /// The dynamics configuration, if an initial condition is present.
    pub fn run_config(&self) -> Result<RunConfig, CliError> {
        let ic = self.ic.clone().ok_or_else(|| {
            CliError::Config(
                "ic: an initial condition (preset or Fourier coefficients) is required".into(),
            )
        })?;
        Ok(self.run_config_with(self.kernel.clone(), ic))
    }

    pub fn run_config_with(&self, kernel: KernelSpec, ic: ICSpec) -> RunConfig {
        let r = &self.run;
        RunConfig {
            n: r.n,
            t_end: r.t_end,
            cfl: r.cfl,
            dealias: r.dealias,
            snapshot_every: r.snapshot_every,
            diagnostics_every: r.diagnostics_every,
            kernel,
            ic,
            symbol_tol: r.symbol_tol,
            fixed_dt: r.fixed_dt,
            holder_r_max: r.holder_r_max,
            max_steps: r.max_steps,
        }
    }
}

pub fn parse_config_file(path: &Path) -> Result<ExperimentPlan, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    parse_config(&text).map_err(|e| match e {
        CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn nearest<'a>(key: &str, valid: &[&'a str]) -> Option<&'a str> {
    valid
        .iter()
        .map(|v| (strsim::levenshtein(key, v), *v))
        .min()
        .filter(|(d, v)| *d <= v.len().max(key.len()) / 2 + 1)
        .map(|(_, v)| v)
}

fn unknown_key(path: &str, key: &str, valid: &[&str]) -> CliError {
    let hint = match nearest(key, valid) {
        Some(v) => format!("; did you mean `{v}`?"),
        None => format!("; valid keys: {}", valid.join(", ")),
    };
    CliError::Config(format!("unknown key `{path}`{hint}"))
}

fn check_keys(table: &toml::Table) -> Result<(), CliError> {
    for (section, value) in table {
        let valid = match section.as_str() {
            "run" => RUN_KEYS,
            "kernel" => KERNEL_KEYS,
            "ic" => IC_KEYS,
            "experiment" => EXPERIMENT_KEYS,
            _ => return Err(unknown_key(section, section, SECTIONS)),
        };
        let Some(inner) = value.as_table() else {
            return Err(CliError::Config(format!(
                "`{section}` must be a section ([{section}])"
            )));
        };
        for key in inner.keys() {
            if !valid.contains(&key.as_str()) {
                return Err(unknown_key(&format!("{section}.{key}"), key, valid));
            }
        }
    }
    Ok(())
}

fn in_range(path: &str, v: f64, ok: bool, what: &str) -> Result<f64, CliError> {
    if ok && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Config(format!("{path}: {what}, got {v}")))
    }
}

fn positive(path: &str, v: f64) -> Result<f64, CliError> {
    let name = path.rsplit('.').next().unwrap_or(path);
    in_range(path, v, v > 0.0, &format!("{name} must be positive"))
}

pub fn family_spec(name: &str, path: &str) -> Result<KernelSpec, CliError> {
    Ok(match name {
        "power" => KernelSpec::power(0.5),
        "inverse_linear" => KernelSpec::inverse_linear(),
        "log_boosted" => KernelSpec::log_boosted(),
        "log_damped" => KernelSpec::log_damped(),
        "lipschitz_gaussian" => KernelSpec::lipschitz_gaussian(),
        "zero" => KernelSpec::zero(),
        "tabulated" => {
            return Err(CliError::Config(format!(
                "{path}: tabulated kernels need radii and values in [kernel]"
            )))
        }
        other => {
            let valid = [
                "power",
                "inverse_linear",
                "log_boosted",
                "log_damped",
                "lipschitz_gaussian",
                "tabulated",
                "zero",
            ];
            let hint = nearest(other, &valid)
                .map(|v| format!("; did you mean `{v}`?"))
                .unwrap_or_default();
            return Err(CliError::Config(format!(
                "{path}: unknown kernel family `{other}`{hint}"
            )));
        }
    })
}

fn parse_kernel(raw: RawKernel) -> Result<KernelSpec, CliError> {
    let family = raw
        .family
        .ok_or_else(|| CliError::Config("kernel.family is required".into()))?;
    let mut spec = if family == "tabulated" {
        let (Some(radii), Some(values)) = (raw.radii, raw.values) else {
            return Err(CliError::Config(
                "kernel: tabulated kernels need both `radii` and `values`".into(),
            ));
        };
        let table = TabulatedKernel::new(radii, values)
            .map_err(|e| CliError::Config(format!("kernel.values: {e}")))?;
        KernelSpec::new(KernelFamily::Tabulated(table))
    } else {
        if raw.radii.is_some() || raw.values.is_some() {
            return Err(CliError::Config(
                "kernel: `radii` and `values` only apply to family = \"tabulated\"".into(),
            ));
        }
        family_spec(&family, "kernel.family")?
    };
    if let Some(a) = raw.alpha {
        spec.alpha = in_range(
            "kernel.alpha",
            a,
            a > 0.0 && a < 2.0,
            "alpha must be in (0, 2)",
        )?;
    }
    if let Some(r) = raw.r0 {
        spec.r0 = in_range("kernel.r0", r, r > 0.0 && r <= 1.0, "r0 must be in (0, 1]")?;
    }
    if let Some(g) = raw.gamma {
        spec.gamma = in_range(
            "kernel.gamma",
            g,
            g > 0.0 && g <= 0.5,
            "gamma must be in (0, 1/2]",
        )?;
    }
    if let Some(q) = raw.quad_tol {
        spec.quad_tol = in_range(
            "kernel.quad_tol",
            q,
            (1e-15..=1e-3).contains(&q),
            "quad_tol must be in [1e-15, 1e-3]",
        )?;
    }
    spec.validate()
        .map_err(|e| CliError::Config(format!("kernel: {e}")))?;
    Ok(spec)
}

pub fn preset_ic(name: &str, steepness: f64) -> Result<ICSpec, CliError> {
    Ok(match name {
        "flat" => ICSpec::preset(Preset::Flat),
        "shear" => ICSpec::preset(Preset::Shear),
        "bump" => ICSpec::preset(Preset::Bump),
        "supercritical" => ICSpec::preset(Preset::Supercritical(steepness)),
        other => {
            let valid = ["flat", "shear", "bump", "supercritical"];
            let hint = nearest(other, &valid)
                .map(|v| format!("; did you mean `{v}`?"))
                .unwrap_or_default();
            return Err(CliError::Config(format!(
                "ic.preset: unknown preset `{other}`{hint}"
            )));
        }
    })
}

fn parse_ic(raw: RawIc) -> Result<ICSpec, CliError> {
    let fourier_given = raw.rho0_mean.is_some()
        || raw.rho0_cos.is_some()
        || raw.rho0_sin.is_some()
        || raw.u0_mean.is_some()
        || raw.u0_cos.is_some()
        || raw.u0_sin.is_some();
    let ic = match raw.preset {
        Some(p) => {
            if fourier_given {
                return Err(CliError::Config(
                    "ic: give either `preset` or Fourier coefficients, not both".into(),
                ));
            }
            if raw.steepness.is_some() && p != "supercritical" {
                return Err(CliError::Config(
                    "ic.steepness only applies to preset = \"supercritical\"".into(),
                ));
            }
            let s = raw.steepness.unwrap_or(5.0);
            in_range(
                "ic.steepness",
                s,
                s >= 0.0,
                "steepness must be non-negative",
            )?;
            preset_ic(&p, s)?
        }
        None => {
            if !fourier_given {
                return Err(CliError::Config(
                    "ic: an initial condition (preset or Fourier coefficients) is required".into(),
                ));
            }
            if raw.steepness.is_some() {
                return Err(CliError::Config(
                    "ic.steepness only applies to preset = \"supercritical\"".into(),
                ));
            }
            ICSpec::fourier(
                "fourier",
                FourierSeries {
                    mean: raw.rho0_mean.unwrap_or(1.0),
                    cos: raw.rho0_cos.unwrap_or_default(),
                    sin: raw.rho0_sin.unwrap_or_default(),
                },
                FourierSeries {
                    mean: raw.u0_mean.unwrap_or(0.0),
                    cos: raw.u0_cos.unwrap_or_default(),
                    sin: raw.u0_sin.unwrap_or_default(),
                },
            )
        }
    };
    ic.validate()
        .map_err(|e| CliError::Config(format!("ic: {e}")))?;
    Ok(ic)
}

fn parse_run(raw: RawRun) -> Result<RunSettings, CliError> {
    let n = raw.n.unwrap_or(256);
    if n < 32 || !n.is_power_of_two() {
        return Err(CliError::Config(format!(
            "run.n: n must be a power of two >= 32, got {n}"
        )));
    }
    let cfl = raw.cfl.unwrap_or(0.4);
    in_range(
        "run.cfl",
        cfl,
        cfl > 0.0 && cfl <= 1.0,
        "cfl must be in (0, 1]",
    )?;
    let dealias = raw.dealias.unwrap_or(2.0 / 3.0);
    in_range(
        "run.dealias",
        dealias,
        dealias > 0.0 && dealias <= 1.0,
        "dealias must be in (0, 1]",
    )?;
    let symbol_tol = raw.symbol_tol.unwrap_or(1e-10);
    in_range(
        "run.symbol_tol",
        symbol_tol,
        (1e-14..=1e-6).contains(&symbol_tol),
        "symbol_tol must be in [1e-14, 1e-6]",
    )?;
    let max_steps = raw.max_steps.unwrap_or(50_000_000);
    if max_steps == 0 {
        return Err(CliError::Config(
            "run.max_steps: max_steps must be positive, got 0".into(),
        ));
    }
    Ok(RunSettings {
        n,
        t_end: positive("run.t_end", raw.t_end.unwrap_or(1.0))?,
        cfl,
        dealias,
        snapshot_every: positive("run.snapshot_every", raw.snapshot_every.unwrap_or(0.5))?,
        diagnostics_every: positive(
            "run.diagnostics_every",
            raw.diagnostics_every.unwrap_or(0.05),
        )?,
        symbol_tol,
        fixed_dt: raw
            .fixed_dt
            .map(|v| positive("run.fixed_dt", v))
            .transpose()?,
        holder_r_max: raw
            .holder_r_max
            .map(|v| positive("run.holder_r_max", v))
            .transpose()?,
        max_steps,
    })
}

fn parse_experiment(raw: RawExperiment) -> Result<ExperimentSettings, CliError> {
    let grid_points = raw.grid_points.unwrap_or(4096);
    if grid_points < 64 {
        return Err(CliError::Config(format!(
            "experiment.grid_points: at least 64 grid points are required, got {grid_points}"
        )));
    }
    let grid_min = positive("experiment.grid_min", raw.grid_min.unwrap_or(1e-14))?;
    let power_k = raw.power_k.unwrap_or(2.0);
    in_range(
        "experiment.power_k",
        power_k,
        power_k >= 1.0,
        "power_k must be >= 1",
    )?;
    let sweep = match (raw.sweep_parameter, raw.sweep_values) {
        (None, None) => None,
        (Some(p), Some(values)) => {
            if !SWEEP_PARAMETERS.contains(&p.as_str()) {
                let hint = nearest(&p, SWEEP_PARAMETERS)
                    .map(|v| format!("; did you mean `{v}`?"))
                    .unwrap_or_default();
                return Err(CliError::Config(format!(
                    "experiment.sweep_parameter: `{p}` cannot be swept{hint}"
                )));
            }
            if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
                return Err(CliError::Config(
                    "experiment.sweep_values: values must be finite and non-empty".into(),
                ));
            }
            Some(SweepAxis {
                parameter: p,
                values,
            })
        }
        _ => {
            return Err(CliError::Config(
                "experiment: sweep_parameter and sweep_values must be given together".into(),
            ))
        }
    };
    Ok(ExperimentSettings {
        grid_points,
        grid_min,
        power_k,
        expected_failures: raw.expected_failures,
        convergence_t_end: positive(
            "experiment.convergence_t_end",
            raw.convergence_t_end.unwrap_or(1.0),
        )?,
        temporal_dt: raw
            .temporal_dt
            .map(|v| positive("experiment.temporal_dt", v))
            .transpose()?,
        spatial_dt: raw
            .spatial_dt
            .map(|v| positive("experiment.spatial_dt", v))
            .transpose()?,
        integrable_family: family_spec(
            raw.integrable_family
                .as_deref()
                .unwrap_or("lipschitz_gaussian"),
            "experiment.integrable_family",
        )?,
        comparison_family: family_spec(
            raw.comparison_family.as_deref().unwrap_or("inverse_linear"),
            "experiment.comparison_family",
        )?,
        sweep,
    })
}

pub fn parse_config(text: &str) -> Result<ExperimentPlan, CliError> {
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Config(format!("syntax error: {e}")))?;
    check_keys(&table)?;
    let raw: RawConfig = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
    let kernel = parse_kernel(raw.kernel.ok_or_else(|| {
        CliError::Config("missing [kernel] section (kernel.family is required)".into())
    })?)?;
    Ok(ExperimentPlan {
        kernel,
        ic: raw.ic.map(parse_ic).transpose()?,
        run: parse_run(raw.run.unwrap_or_default())?,
        experiment: parse_experiment(raw.experiment.unwrap_or_default())?,
    })
}

/// Applies one sweep value to a run configuration.
pub fn apply_sweep_value(
    config: &mut RunConfig,
    parameter: &str,
    value: f64,
) -> Result<(), CliError> {
    let bad = |msg: &str| CliError::Config(format!("sweep {parameter} = {value}: {msg}"));
    match parameter {
        "steepness" => {
            if !config.ic.label.starts_with("supercritical") {
                return Err(bad("steepness sweeps need preset = \"supercritical\""));
            }
            config.ic = ICSpec::preset(Preset::Supercritical(value));
        }
        "n" => {
            if value.fract() != 0.0 || value < 32.0 {
                return Err(bad("n must be a power of two >= 32"));
            }
            config.n = value as usize;
        }
        "t_end" => config.t_end = value,
        "cfl" => config.cfl = value,
        "dealias" => config.dealias = value,
        "alpha" => config.kernel.alpha = value,
        "r0" => config.kernel.r0 = value,
        "gamma" => config.kernel.gamma = value,
        _ => return Err(bad("not a sweepable parameter")),
    }
    config.validate().map_err(|e| bad(&e.to_string()))
}
