//! Run configuration: a JSON document with the `RunConfig` field names, merged
//! with command-line flags (flags win) and validated into a [`Run`].

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sis_sde::analysis::{steps_for, ReferenceMode, MIN_CONVERGENCE_PATHS};
use sis_sde::{ModelConfig, SchemeKind, SisParams};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Simulate,
    Convergence,
    Compare,
    Stability,
    Moments,
    Violations,
    Bench,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::Compare => "compare",
            ExperimentKind::Stability => "stability",
            ExperimentKind::Moments => "moments",
            ExperimentKind::Violations => "violations",
            ExperimentKind::Bench => "bench",
        }
    }

    fn uses_dt_list(self) -> bool {
        matches!(
            self,
            ExperimentKind::Convergence | ExperimentKind::Violations | ExperimentKind::Bench
        )
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
    Both,
}

impl Format {
    pub fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    pub fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<Format>,
}

/// Config-file schema. Every field is optional in a file; a resolved run
/// serializes with all of them set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ModelConfig>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_paths: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Vec<SchemeKind>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<ReferenceMode>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dump_noise: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<OutputConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Io(format!("cannot read config file {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config file {}: {e}", path.display())))
    }
}

/// Values given on the command line. `None` means "not given".
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub beta: Option<f64>,
    pub gamma: Option<f64>,
    pub b: Option<f64>,
    pub k: Option<f64>,
    pub sigma: Option<f64>,
    pub i0: Option<f64>,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub dt_list: Option<Vec<f64>>,
    pub n_paths: Option<usize>,
    pub master_seed: Option<u64>,
    pub scheme: Option<Vec<SchemeKind>>,
    pub reference: Option<ReferenceMode>,
    pub q: Option<f64>,
    pub p_list: Option<Vec<f64>>,
    pub threads: Option<usize>,
    pub dump_noise: Option<bool>,
    pub dir: Option<PathBuf>,
    pub format: Option<Format>,
}

/// A validated run.
#[derive(Debug, Clone, PartialEq)]
pub struct Run {
    pub experiment: ExperimentKind,
    pub model: ModelConfig,
    pub params: SisParams,
    pub horizon: f64,
    pub dt: Option<f64>,
    pub dt_list: Option<Vec<f64>>,
    pub n_paths: usize,
    pub master_seed: u64,
    pub schemes: Vec<SchemeKind>,
    pub reference: ReferenceMode,
    pub q: f64,
    pub p_list: Vec<f64>,
    pub threads: usize,
    pub dump_noise: bool,
    pub dir: PathBuf,
    pub format: Format,
}

fn missing(key: &str, flag: &str) -> CliError {
    CliError::Validation(format!("{key}: missing (pass {flag} or set it in the config file)"))
}

fn invalid(key: &str, msg: impl fmt::Display) -> CliError {
    CliError::Validation(format!("{key}: {msg}"))
}

fn positive(key: &str, x: f64) -> Result<f64, CliError> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(invalid(key, format_args!("{x} must be finite and > 0")))
    }
}

fn dividing_step(key: &str, horizon: f64, dt: f64) -> Result<(), CliError> {
    positive(key, dt)?;
    steps_for(horizon, dt).map(|_| ()).map_err(|_| invalid(key, format_args!("{dt} does not divide T = {horizon}")))
}

/// Merges `overrides` over `file` for `experiment` and validates the result.
pub fn resolve(experiment: ExperimentKind, file: RunConfig, o: Overrides) -> Result<Run, CliError> {
    if let Some(e) = file.experiment {
        if e != experiment {
            return Err(invalid(
                "experiment",
                format_args!("config file is for `{e}` but the subcommand is `{experiment}`"),
            ));
        }
    }

    let p = file.params;
    let model = ModelConfig {
        beta: o.beta.or(p.map(|p| p.beta)).ok_or_else(|| missing("beta", "--beta"))?,
        gamma: o.gamma.or(p.map(|p| p.gamma)).ok_or_else(|| missing("gamma", "--gamma"))?,
        b: o.b.or(p.map(|p| p.b)).ok_or_else(|| missing("b", "--b"))?,
        k: o.k.or(p.map(|p| p.k)).ok_or_else(|| missing("K", "--K"))?,
        sigma: o.sigma.or(p.map(|p| p.sigma)).ok_or_else(|| missing("sigma", "--sigma"))?,
        i0: o.i0.or(p.map(|p| p.i0)).ok_or_else(|| missing("I0", "--I0"))?,
    };
    let (params, _) = model.resolve().map_err(|e| CliError::Validation(e.to_string()))?;

    let horizon = positive("T", o.horizon.or(file.horizon).ok_or_else(|| missing("T", "--T"))?)?;

    let (dt, dt_list) = if experiment.uses_dt_list() {
        let list = o.dt_list.or(file.dt_list).ok_or_else(|| missing("dt_list", "--dt-list"))?;
        check_dt_list(experiment, horizon, &list)?;
        (None, Some(list))
    } else {
        let dt = o.dt.or(file.dt).ok_or_else(|| missing("dt", "--dt"))?;
        dividing_step("dt", horizon, dt)?;
        (Some(dt), None)
    };

    let default_paths = if experiment == ExperimentKind::Simulate { 1 } else { 1000 };
    let n_paths = o.n_paths.or(file.n_paths).unwrap_or(default_paths);
    let min_paths = match experiment {
        ExperimentKind::Convergence | ExperimentKind::Bench => MIN_CONVERGENCE_PATHS,
        _ => 1,
    };
    if n_paths < min_paths {
        return Err(invalid("n_paths", format_args!("{n_paths} is below the minimum of {min_paths}")));
    }

    let schemes = match experiment {
        ExperimentKind::Simulate | ExperimentKind::Convergence | ExperimentKind::Bench => {
            let default = if experiment == ExperimentKind::Bench {
                vec![SchemeKind::SemiDiscrete, SchemeKind::GrayYang]
            } else {
                vec![SchemeKind::SemiDiscrete]
            };
            let mut s = o.scheme.or(file.scheme).unwrap_or(default);
            if s.is_empty() {
                return Err(invalid("scheme", "at least one scheme is required"));
            }
            dedup(&mut s);
            s
        }
        ExperimentKind::Compare => vec![SchemeKind::SemiDiscrete, SchemeKind::GrayYang],
        ExperimentKind::Stability | ExperimentKind::Moments => vec![SchemeKind::SemiDiscrete],
        ExperimentKind::Violations => SchemeKind::ALL.to_vec(),
    };

    let q = positive("q", o.q.or(file.q).unwrap_or(1.0))?;
    let p_list = o.p_list.or(file.p_list).unwrap_or_else(|| vec![1.0, 2.0, 4.0]);
    if p_list.is_empty() {
        return Err(invalid("p_list", "at least one moment order is required"));
    }
    for &p in &p_list {
        positive("p_list", p)?;
    }

    let out = file.output.unwrap_or_default();
    let dir = o.dir.or(out.dir).ok_or_else(|| missing("output.dir", "--out"))?;

    Ok(Run {
        experiment,
        model,
        params,
        horizon,
        dt,
        dt_list,
        n_paths,
        master_seed: o.master_seed.or(file.master_seed).unwrap_or(0),
        schemes,
        reference: o.reference.or(file.reference).unwrap_or(ReferenceMode::SelfFinest),
        q,
        p_list,
        threads: o.threads.or(file.threads).unwrap_or(0),
        dump_noise: o.dump_noise.or(file.dump_noise).unwrap_or(false),
        dir,
        format: o.format.or(out.format).unwrap_or(Format::Csv),
    })
}

fn dedup(schemes: &mut Vec<SchemeKind>) {
    let mut seen = Vec::with_capacity(schemes.len());
    schemes.retain(|s| {
        let fresh = !seen.contains(s);
        seen.push(*s);
        fresh
    });
}

fn check_dt_list(experiment: ExperimentKind, horizon: f64, list: &[f64]) -> Result<(), CliError> {
    let needs_chain = experiment != ExperimentKind::Violations;
    let min_len = if needs_chain { 3 } else { 1 };
    if list.len() < min_len {
        return Err(invalid(
            "dt_list",
            format_args!("{experiment} needs at least {min_len} step sizes, got {}", list.len()),
        ));
    }
    for &dt in list {
        dividing_step("dt_list", horizon, dt)?;
    }
    if needs_chain {
        let smallest = list.iter().copied().fold(f64::INFINITY, f64::min);
        for &dt in list {
            let r = dt / smallest;
            let m = r.round();
            if (r - m).abs() > 1e-9 * m || !(m as u64).is_power_of_two() {
                return Err(invalid(
                    "dt_list",
                    format_args!("{dt} is not a power-of-two multiple of the smallest step {smallest}"),
                ));
            }
        }
        for (i, a) in list.iter().enumerate() {
            if list[..i].contains(a) {
                return Err(invalid("dt_list", format_args!("{a} appears twice")));
            }
        }
    }
    Ok(())
}

impl Run {
    /// The fully populated config, as recorded in the run manifest.
    pub fn to_config(&self) -> RunConfig {
        RunConfig {
            experiment: Some(self.experiment),
            params: Some(self.model),
            horizon: Some(self.horizon),
            dt: self.dt,
            dt_list: self.dt_list.clone(),
            n_paths: Some(self.n_paths),
            master_seed: Some(self.master_seed),
            scheme: Some(self.schemes.clone()),
            reference: Some(self.reference),
            q: Some(self.q),
            p_list: Some(self.p_list.clone()),
            threads: Some(self.threads),
            dump_noise: Some(self.dump_noise),
            output: Some(OutputConfig {
                dir: Some(self.dir.clone()),
                format: Some(self.format),
            }),
        }
    }
}
