use serde::Serialize;
use sis_sde::analysis::steps_for;
use sis_sde::{simulate, ConvergenceSetup, Experiment, SchemeKind, SisError, SisParams, WienerGrid};

/// Largest number of nodes returned per trajectory; longer paths are thinned.
pub const MAX_PLOT_NODES: usize = 2001;

#[derive(Debug, Clone, Copy)]
pub struct Model {
    pub params: SisParams,
    pub i0: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Series {
    pub scheme: SchemeKind,
    pub values: Vec<f64>,
    pub domain_violations: usize,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathSample {
    pub k: f64,
    pub times: Vec<f64>,
    pub series: Vec<Series>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Curve {
    pub scheme: SchemeKind,
    pub step_sizes: Vec<f64>,
    pub errors: Vec<f64>,
    pub ci_half_widths: Vec<f64>,
    pub slope: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CensusBar {
    pub scheme: SchemeKind,
    pub dt: f64,
    pub fraction: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

pub fn parse_list(text: &str) -> sis_sde::Result<Vec<f64>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| SisError::Argument(format!("`{s}` is not a number")))
        })
        .collect()
}

impl Model {
    pub fn new(beta: f64, gamma: f64, b: f64, k: f64, sigma: f64, i0: f64) -> sis_sde::Result<Self> {
        let params = SisParams::new(beta, gamma, b, k, sigma)?;
        params.check_state("I0", i0)?;
        Ok(Model { params, i0 })
    }

    pub fn sample_paths(&self, horizon: f64, dt: f64, seed: u64, path: u64) -> sis_sde::Result<PathSample> {
        let n = steps_for(horizon, dt)?;
        let grid = WienerGrid::generate(seed, path, n, dt)?;
        let stride = n.div_ceil(MAX_PLOT_NODES - 1).max(1);
        let thin = |v: &[f64]| -> Vec<f64> {
            let mut out: Vec<f64> = v.iter().step_by(stride).copied().collect();
            if n % stride != 0 {
                out.push(v[n]);
            }
            out
        };
        let mut series = Vec::with_capacity(3);
        let mut times = Vec::new();
        for scheme in SchemeKind::ALL {
            let tr = simulate(&self.params, scheme, self.i0, &grid)?;
            if times.is_empty() {
                times = thin(&tr.times);
            }
            series.push(Series {
                scheme,
                values: thin(&tr.states),
                domain_violations: tr.domain_violations,
                failed: tr.failure.is_some(),
            });
        }
        Ok(PathSample {
            k: self.params.k,
            times,
            series,
        })
    }

    pub fn convergence_curve(
        &self,
        horizon: f64,
        scheme: &str,
        k_min: u32,
        k_max: u32,
        n_paths: usize,
        seed: u64,
    ) -> sis_sde::Result<Curve> {
        let scheme: SchemeKind = scheme.parse()?;
        if k_min > k_max || k_max > 16 {
            return Err(SisError::Argument(format!("need k_min <= k_max <= 16, got {k_min}..{k_max}")));
        }
        let steps: Vec<f64> = (k_min..=k_max).map(|k| horizon / (1u64 << k) as f64).collect();
        let exp = Experiment::new(self.params, self.i0, horizon, n_paths, seed)?.with_threads(1);
        let report = exp.strong_error(&ConvergenceSetup::new(scheme, steps))?;
        Ok(Curve {
            scheme,
            slope: report.fitted_order(),
            step_sizes: report.step_sizes,
            errors: report.errors,
            ci_half_widths: report.ci_half_widths,
        })
    }

    pub fn violation_census(
        &self,
        horizon: f64,
        dt_list: &[f64],
        n_paths: usize,
        seed: u64,
    ) -> sis_sde::Result<Vec<CensusBar>> {
        let exp = Experiment::new(self.params, self.i0, horizon, n_paths, seed)?.with_threads(1);
        let census = exp.domain_violation_census(dt_list)?;
        Ok(census
            .rows
            .into_iter()
            .map(|r| CensusBar {
                scheme: r.scheme,
                dt: r.dt,
                fraction: r.fraction,
                wilson_low: r.wilson_low,
                wilson_high: r.wilson_high,
            })
            .collect())
    }
}
