//! Monte Carlo experiment engine.
//!
//! Every experiment is a pure function of its configuration and master seed.
//! Paths are independent work units (optionally evaluated on a rayon pool) and
//! are always aggregated in ascending path index, so reports are bit-identical
//! for any thread count.

use std::io::Write;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SisError};
use crate::format::fmt17;
use crate::model::{self, Bound, ExtinctionCheck, SisParams, CLAMP_EPS};
use crate::noise::WienerGrid;
use crate::schemes::{simulate, SchemeKind, Trajectory};
use crate::stats::{self, ci95_half_width, fit_log2, wilson95, OrderFit};

/// Absolute tolerance on the Lyapunov exponent estimate.
pub const LYAPUNOV_TOLERANCE: f64 = 0.05;

/// Default ratio between the smallest tested step and the reference step.
pub const DEFAULT_REFERENCE_REFINEMENT: usize = 8;

/// Largest fraction of paths that may fail before an experiment is aborted.
pub const FAILURE_BUDGET: f64 = 0.01;

/// Minimum number of paths for a strong-error study.
pub const MIN_CONVERGENCE_PATHS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReferenceMode {
    /// The tested scheme itself on the finest grid.
    #[serde(rename = "self")]
    SelfFinest,
    /// The Gray-Yang scheme on the finest grid.
    #[serde(rename = "gy")]
    CrossScheme,
}

impl ReferenceMode {
    pub fn name(self) -> &'static str {
        match self {
            ReferenceMode::SelfFinest => "self",
            ReferenceMode::CrossScheme => "gy",
        }
    }
}

/// Common experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Experiment {
    pub params: SisParams,
    pub i0: f64,
    pub horizon: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    /// Worker threads; 0 picks the rayon default. Results never depend on it.
    pub threads: usize,
}

/// Strong-error study settings.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceSetup {
    pub scheme: SchemeKind,
    pub step_sizes: Vec<f64>,
    pub reference: ReferenceMode,
    /// Error norm exponent, `(E sup |.|^q)^(1/q)`.
    pub q: f64,
    /// Reference step; defaults to the smallest tested step divided by 8.
    pub reference_dt: Option<f64>,
}

impl ConvergenceSetup {
    pub fn new(scheme: SchemeKind, step_sizes: Vec<f64>) -> Self {
        ConvergenceSetup {
            scheme,
            step_sizes,
            reference: ReferenceMode::SelfFinest,
            q: 1.0,
            reference_dt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub scheme: SchemeKind,
    pub reference_mode: ReferenceMode,
    pub horizon: f64,
    pub reference_dt: f64,
    pub q: f64,
    pub step_sizes: Vec<f64>,
    /// `(mean over paths of sup_n |Y_n - ref_n|^q)^(1/q)`.
    pub errors: Vec<f64>,
    pub ci_half_widths: Vec<f64>,
    pub fit: Option<OrderFit>,
    /// Paths that entered the averages.
    pub n_paths: usize,
    pub n_excluded: usize,
    pub master_seed: u64,
}

impl ConvergenceReport {
    pub fn fitted_order(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }
}

pub const CONVERGENCE_CSV_HEADER: &str = "scheme,dt,error,ci_half,order_fit_slope,order_fit_intercept,n_paths,seed";

/// One row per `(scheme, dt)` across all reports.
pub fn write_convergence_csv<W: Write>(reports: &[ConvergenceReport], mut out: W) -> std::io::Result<()> {
    let mut text = String::from(CONVERGENCE_CSV_HEADER);
    text.push('\n');
    for r in reports {
        let (slope, intercept) = r.fit.map_or((f64::NAN, f64::NAN), |f| (f.slope, f.intercept));
        for ((dt, err), ci) in r.step_sizes.iter().zip(&r.errors).zip(&r.ci_half_widths) {
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.scheme,
                fmt17(*dt),
                fmt17(*err),
                fmt17(*ci),
                fmt17(slope),
                fmt17(intercept),
                r.n_paths,
                r.master_seed
            ));
        }
    }
    out.write_all(text.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DifferenceReport {
    pub dt: f64,
    /// Per path `sup_n |Y^_n - Y_n|` between semi-discrete and Gray-Yang.
    pub per_path_sup: Vec<f64>,
    pub mean_sup: f64,
    pub ci_half_width: f64,
    pub max_sup: f64,
    /// Mean over paths of the node-averaged absolute difference.
    pub mean_abs: f64,
    pub n_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub horizon: f64,
    pub dt: f64,
    /// `ln(Y^_N) / (N dt)` per path.
    pub per_path_exponents: Vec<f64>,
    pub terminal_states: Vec<f64>,
    /// `eta - sigma^2 K^2 / 2`.
    pub theoretical_bound: f64,
    pub tolerance: f64,
    pub fraction_below_bound_plus_tol: f64,
    pub conditions: ExtinctionCheck,
    /// False when the extinction conditions do not hold (reported as NOT_APPLICABLE).
    pub applicable: bool,
    /// Paths whose terminal value sits on the clamp floor.
    pub clamped_paths: usize,
    pub n_excluded: usize,
}

impl StabilityReport {
    pub fn status(&self) -> &'static str {
        if self.applicable {
            "APPLICABLE"
        } else {
            "NOT_APPLICABLE"
        }
    }

    /// Fraction of terminal values at or below `level`.
    pub fn fraction_terminal_below(&self, level: f64) -> f64 {
        let n = self.terminal_states.iter().filter(|&&y| y <= level).count();
        n as f64 / self.terminal_states.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentRow {
    pub p: f64,
    /// `max_n mean_paths X^_n^p` for the scheme at the requested step.
    pub empirical: f64,
    pub bound: Bound,
    pub within_bound: bool,
    /// Bound overflowed or the empirical moment is not finite.
    pub flagged: bool,
    /// Same statistic for the finest-grid proxy of the exact odds process.
    pub proxy_positive: f64,
    /// `max_n mean_paths X^_n^-p` for the proxy.
    pub proxy_negative: f64,
    /// `K^p sqrt(C^_{2p})`, bounding both proxy statistics.
    pub exact_bound: Bound,
    pub proxy_within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentReport {
    pub horizon: f64,
    pub dt: f64,
    pub proxy_dt: f64,
    pub rows: Vec<MomentRow>,
    pub n_excluded: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CensusRow {
    pub dt: f64,
    pub scheme: SchemeKind,
    /// Paths that left `(0, K)` at least once (non-finite blow-ups included).
    pub paths_with_violation: usize,
    pub failed_paths: usize,
    pub n_paths: usize,
    pub fraction: f64,
    pub wilson_low: f64,
    pub wilson_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CensusReport {
    pub rows: Vec<CensusRow>,
}

impl CensusReport {
    pub fn row(&self, scheme: SchemeKind, dt: f64) -> Option<&CensusRow> {
        self.rows.iter().find(|r| r.scheme == scheme && r.dt == dt)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub scheme: SchemeKind,
    pub dt: f64,
    pub wall_seconds: f64,
    pub steps: u64,
    pub ns_per_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchReport {
    pub convergence: Vec<ConvergenceReport>,
    pub timings: Vec<TimingRow>,
}

impl BenchReport {
    pub fn timing(&self, scheme: SchemeKind, dt: f64) -> Option<&TimingRow> {
        self.timings.iter().find(|r| r.scheme == scheme && r.dt == dt)
    }
}

/// Number of steps of size `dt` covering `horizon`; `dt` must divide it.
pub fn steps_for(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(SisError::Argument(format!("dt = {dt} must be finite and > 0")));
    }
    let n = (horizon / dt).round();
    if n < 1.0 || (n * dt - horizon).abs() > 1e-9 * horizon.max(dt) {
        return Err(SisError::Argument(format!("dt = {dt} does not divide T = {horizon}")));
    }
    Ok(n as usize)
}

/// Power-of-two ratio `coarse / fine`.
fn dyadic_ratio(coarse: f64, fine: f64) -> Result<usize> {
    let r = coarse / fine;
    let m = r.round();
    if m < 1.0 || (r - m).abs() > 1e-9 * m || !(m as u64).is_power_of_two() {
        return Err(SisError::Argument(format!(
            "step {coarse} is not a power-of-two multiple of the reference step {fine}"
        )));
    }
    Ok(m as usize)
}

fn sup_abs_diff(coarse: &[f64], fine: &[f64], stride: usize) -> f64 {
    coarse
        .iter()
        .enumerate()
        .map(|(j, y)| (y - fine[j * stride]).abs())
        .fold(0.0, f64::max)
}

fn failure_reason(tr: &Trajectory) -> Option<String> {
    tr.failure
        .map(|f| format!("{} scheme: {} at step {} (dt = {})", tr.scheme, f.kind, f.step, tr.dt))
}

/// Splits per-path outcomes into successes and the exclusion count, failing
/// when more than 1% of the paths were excluded.
fn within_budget<T>(outcomes: Vec<std::result::Result<T, String>>) -> Result<(Vec<T>, usize)> {
    let total = outcomes.len();
    let mut ok = Vec::with_capacity(total);
    let mut first = None;
    let mut excluded = 0;
    for (i, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(v) => ok.push(v),
            Err(reason) => {
                excluded += 1;
                first.get_or_insert((i as u64, reason));
            }
        }
    }
    if excluded as f64 > FAILURE_BUDGET * total as f64 || ok.is_empty() {
        let (first_path, reason) = first.unwrap_or((0, "no paths".into()));
        return Err(SisError::FailureBudget {
            excluded,
            total,
            first_path,
            reason,
        });
    }
    Ok((ok, excluded))
}

impl Experiment {
    pub fn new(params: SisParams, i0: f64, horizon: f64, n_paths: usize, master_seed: u64) -> Result<Self> {
        let exp = Experiment {
            params,
            i0,
            horizon,
            n_paths,
            master_seed,
            threads: 0,
        };
        exp.validate()?;
        Ok(exp)
    }

    pub fn with_threads(mut self, threads: usize) -> Self {
        self.threads = threads;
        self
    }

    fn validate(&self) -> Result<()> {
        self.params.check_state("I0", self.i0)?;
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return Err(SisError::Argument(format!("T = {} must be finite and >= 0", self.horizon)));
        }
        if self.n_paths == 0 {
            return Err(SisError::Argument("n_paths must be >= 1".into()));
        }
        Ok(())
    }

    fn positive_horizon(&self) -> Result<()> {
        if self.horizon > 0.0 {
            Ok(())
        } else {
            Err(SisError::Argument("T must be > 0 for this experiment".into()))
        }
    }

    /// Evaluates `f` for every path index in `range`, returning results in index order.
    fn map_paths<T, F>(&self, range: Range<u64>, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(u64) -> T + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        {
            use rayon::prelude::*;
            if self.threads != 1 {
                if let Ok(pool) = rayon::ThreadPoolBuilder::new().num_threads(self.threads).build() {
                    return pool.install(|| range.into_par_iter().map(&f).collect());
                }
            }
        }
        range.map(f).collect()
    }

    fn grid(&self, path: u64, dt: f64) -> Result<WienerGrid> {
        WienerGrid::generate(self.master_seed, path, steps_for(self.horizon, dt)?, dt)
    }

    /// Strong error `(E sup_n |Y_n - ref_n|^q)^(1/q)` at each tested step,
    /// all steps coupled through one finest Wiener path per sample.
    pub fn strong_error(&self, setup: &ConvergenceSetup) -> Result<ConvergenceReport> {
        self.positive_horizon()?;
        if self.n_paths < MIN_CONVERGENCE_PATHS {
            return Err(SisError::Argument(format!(
                "strong-error studies need at least {MIN_CONVERGENCE_PATHS} paths, got {}",
                self.n_paths
            )));
        }
        if setup.step_sizes.is_empty() {
            return Err(SisError::Argument("no step sizes given".into()));
        }
        if !(setup.q.is_finite() && setup.q > 0.0) {
            return Err(SisError::Argument(format!("q = {} must be > 0", setup.q)));
        }
        let smallest = setup.step_sizes.iter().copied().fold(f64::INFINITY, f64::min);
        let reference_dt = setup
            .reference_dt
            .unwrap_or(smallest / DEFAULT_REFERENCE_REFINEMENT as f64);
        let n_ref = steps_for(self.horizon, reference_dt)?;
        let strides = setup
            .step_sizes
            .iter()
            .map(|&h| {
                steps_for(self.horizon, h)?;
                dyadic_ratio(h, reference_dt)
            })
            .collect::<Result<Vec<_>>>()?;
        let reference_scheme = match setup.reference {
            ReferenceMode::SelfFinest => setup.scheme,
            ReferenceMode::CrossScheme => SchemeKind::GrayYang,
        };

        let outcomes = self.map_paths(0..self.n_paths as u64, |path| {
            let fine = WienerGrid::generate(self.master_seed, path, n_ref, reference_dt).map_err(|e| e.to_string())?;
            let reference = simulate(&self.params, reference_scheme, self.i0, &fine).map_err(|e| e.to_string())?;
            if let Some(reason) = failure_reason(&reference) {
                return Err(reason);
            }
            strides
                .iter()
                .map(|&m| {
                    if m == 1 && reference_scheme == setup.scheme {
                        return Ok(0.0);
                    }
                    let coarse = fine.coarsen(m).map_err(|e| e.to_string())?;
                    let tr = simulate(&self.params, setup.scheme, self.i0, &coarse).map_err(|e| e.to_string())?;
                    match failure_reason(&tr) {
                        Some(reason) => Err(reason),
                        None => Ok(sup_abs_diff(&tr.states, &reference.states, m)),
                    }
                })
                .collect::<std::result::Result<Vec<f64>, String>>()
        });
        let (sups, n_excluded) = within_budget(outcomes)?;

        let mut errors = Vec::with_capacity(strides.len());
        let mut ci_half_widths = Vec::with_capacity(strides.len());
        for k in 0..strides.len() {
            let powered: Vec<f64> = sups.iter().map(|s| s[k].powf(setup.q)).collect();
            let m = stats::mean(&powered);
            let hw = ci95_half_width(&powered);
            let err = m.powf(1.0 / setup.q);
            // delta method for the q-th root
            let hw_err = if setup.q == 1.0 {
                hw
            } else if m > 0.0 {
                hw * m.powf(1.0 / setup.q - 1.0) / setup.q
            } else {
                0.0
            };
            errors.push(err);
            ci_half_widths.push(hw_err);
        }
        Ok(ConvergenceReport {
            scheme: setup.scheme,
            reference_mode: setup.reference,
            horizon: self.horizon,
            reference_dt,
            q: setup.q,
            fit: fit_log2(&setup.step_sizes, &errors),
            step_sizes: setup.step_sizes.clone(),
            errors,
            ci_half_widths,
            n_paths: sups.len(),
            n_excluded,
            master_seed: self.master_seed,
        })
    }

    /// Semi-discrete and Gray-Yang driven by the same Wiener path at step `dt`.
    pub fn scheme_difference(&self, dt: f64) -> Result<DifferenceReport> {
        self.positive_horizon()?;
        steps_for(self.horizon, dt)?;
        let outcomes = self.map_paths(0..self.n_paths as u64, |path| {
            let diffs = self.difference_trace(path, dt).map_err(|e| e.to_string())?;
            let sup = diffs.iter().copied().fold(0.0, f64::max);
            Ok((sup, stats::mean(&diffs)))
        });
        let (pairs, n_excluded) = within_budget(outcomes)?;
        let per_path_sup: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let node_means: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        Ok(DifferenceReport {
            dt,
            mean_sup: stats::mean(&per_path_sup),
            ci_half_width: ci95_half_width(&per_path_sup),
            max_sup: per_path_sup.iter().copied().fold(0.0, f64::max),
            mean_abs: stats::mean(&node_means),
            per_path_sup,
            n_excluded,
        })
    }

    /// Per-node `|Y^_n - Y_n|` on path `path`.
    pub fn difference_trace(&self, path: u64, dt: f64) -> Result<Vec<f64>> {
        let grid = self.grid(path, dt)?;
        let sd = simulate(&self.params, SchemeKind::SemiDiscrete, self.i0, &grid)?;
        let gy = simulate(&self.params, SchemeKind::GrayYang, self.i0, &grid)?;
        if let Some(reason) = failure_reason(&sd).or_else(|| failure_reason(&gy)) {
            return Err(SisError::Argument(reason));
        }
        Ok(sd.states.iter().zip(&gy.states).map(|(a, b)| (a - b).abs()).collect())
    }

    /// Long-horizon semi-discrete runs compared with `eta - sigma^2 K^2 / 2`.
    pub fn stability(&self, dt: f64) -> Result<StabilityReport> {
        self.positive_horizon()?;
        let n = steps_for(self.horizon, dt)?;
        let floor = CLAMP_EPS * self.params.k;
        let outcomes = self.map_paths(0..self.n_paths as u64, |path| {
            let grid = self.grid(path, dt).map_err(|e| e.to_string())?;
            let tr = simulate(&self.params, SchemeKind::SemiDiscrete, self.i0, &grid).map_err(|e| e.to_string())?;
            match failure_reason(&tr) {
                Some(reason) => Err(reason),
                None => Ok(tr.terminal()),
            }
        });
        let (terminal_states, n_excluded) = within_budget(outcomes)?;
        let span = n as f64 * dt;
        let per_path_exponents: Vec<f64> = terminal_states.iter().map(|y| y.ln() / span).collect();
        let conditions = self.params.extinction_conditions();
        let theoretical_bound = self.params.derived().extinction_exponent;
        let below = per_path_exponents
            .iter()
            .filter(|&&e| e <= theoretical_bound + LYAPUNOV_TOLERANCE)
            .count();
        Ok(StabilityReport {
            horizon: self.horizon,
            dt,
            fraction_below_bound_plus_tol: below as f64 / per_path_exponents.len() as f64,
            per_path_exponents,
            clamped_paths: terminal_states.iter().filter(|&&y| y <= floor).count(),
            terminal_states,
            theoretical_bound,
            tolerance: LYAPUNOV_TOLERANCE,
            conditions,
            applicable: conditions.all_satisfied,
            n_excluded,
        })
    }

    /// Empirical `max_n E[X^_n^p]` against the envelope `C~_p`, plus the exact
    /// process moments (proxied by the scheme on a grid 8x finer, sampled at
    /// the same nodes) against `K^p sqrt(C^_{2p})`.
    pub fn moment_check(&self, dt: f64, p_list: &[f64]) -> Result<MomentReport> {
        if p_list.is_empty() || p_list.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
            return Err(SisError::Argument("moment orders must be finite and > 0".into()));
        }
        let x0 = model::transform_odds(self.params.k, self.i0)?;
        let refine = DEFAULT_REFERENCE_REFINEMENT;
        let proxy_dt = dt / refine as f64;
        let n = if self.horizon == 0.0 {
            0
        } else {
            steps_for(self.horizon, dt)?
        };

        let np = p_list.len();
        // sums[k][j]: k indexes (p, statistic) triples, j the node
        let mut sums = vec![vec![0.0f64; n + 1]; 3 * np];
        let mut used = 0usize;
        let mut outcomes_all: Vec<std::result::Result<(), String>> = Vec::with_capacity(self.n_paths);
        const CHUNK: u64 = 512;
        let mut start = 0u64;
        while start < self.n_paths as u64 {
            let end = (start + CHUNK).min(self.n_paths as u64);
            let chunk = self.map_paths(start..end, |path| -> std::result::Result<(Vec<f64>, Vec<f64>), String> {
                if n == 0 {
                    return Ok((vec![x0], vec![x0]));
                }
                let fine = WienerGrid::generate(self.master_seed, path, n * refine, proxy_dt).map_err(|e| e.to_string())?;
                let proxy = simulate(&self.params, SchemeKind::SemiDiscrete, self.i0, &fine).map_err(|e| e.to_string())?;
                let coarse = fine.coarsen(refine).map_err(|e| e.to_string())?;
                let tr = simulate(&self.params, SchemeKind::SemiDiscrete, self.i0, &coarse).map_err(|e| e.to_string())?;
                if let Some(reason) = failure_reason(&tr).or_else(|| failure_reason(&proxy)) {
                    return Err(reason);
                }
                let scheme_odds = tr.internal.expect("semi-discrete keeps odds");
                let proxy_odds = proxy.internal.expect("semi-discrete keeps odds");
                let sampled = (0..=n).map(|j| proxy_odds[j * refine]).collect();
                Ok((scheme_odds, sampled))
            });
            for outcome in chunk {
                match outcome {
                    Ok((odds, proxy)) => {
                        used += 1;
                        for (k, &p) in p_list.iter().enumerate() {
                            for j in 0..=n {
                                sums[3 * k][j] += odds[j].powf(p);
                                sums[3 * k + 1][j] += proxy[j].powf(p);
                                sums[3 * k + 2][j] += proxy[j].powf(-p);
                            }
                        }
                        outcomes_all.push(Ok(()));
                    }
                    Err(e) => outcomes_all.push(Err(e)),
                }
            }
            start = end;
        }
        let (_, n_excluded) = within_budget(outcomes_all)?;

        let sup_mean = |row: &[f64]| row.iter().map(|s| s / used as f64).fold(f64::NEG_INFINITY, f64::max);
        let mut rows = Vec::with_capacity(np);
        for (k, &p) in p_list.iter().enumerate() {
            let empirical = sup_mean(&sums[3 * k]);
            let proxy_positive = sup_mean(&sums[3 * k + 1]);
            let proxy_negative = sup_mean(&sums[3 * k + 2]);
            let bound = self.params.moment_bound_scheme(x0, self.horizon, p)?;
            let exact_bound = self.params.odds_moment_bound_exact(self.i0, self.horizon, p)?;
            rows.push(MomentRow {
                p,
                empirical,
                within_bound: empirical <= bound.value,
                flagged: bound.overflowed || !empirical.is_finite(),
                proxy_positive,
                proxy_negative,
                proxy_within_bound: proxy_positive <= exact_bound.value && proxy_negative <= exact_bound.value,
                bound,
                exact_bound,
            });
        }
        Ok(MomentReport {
            horizon: self.horizon,
            dt,
            proxy_dt,
            rows,
            n_excluded,
        })
    }

    /// Fraction of paths per scheme and step that ever leave `(0, K)`.
    pub fn domain_violation_census(&self, dt_list: &[f64]) -> Result<CensusReport> {
        self.positive_horizon()?;
        let mut rows = Vec::new();
        for &dt in dt_list {
            steps_for(self.horizon, dt)?;
            let outcomes = self.map_paths(0..self.n_paths as u64, |path| -> Result<[(bool, bool); 3]> {
                let grid = self.grid(path, dt)?;
                let mut out = [(false, false); 3];
                for (slot, scheme) in out.iter_mut().zip(SchemeKind::ALL) {
                    let tr = simulate(&self.params, scheme, self.i0, &grid)?;
                    let failed = tr.failure.is_some();
                    let left = tr.domain_violations > 0
                        || failed
                        || tr.states.iter().any(|&y| !(y > 0.0 && y < self.params.k));
                    *slot = (left, failed);
                }
                Ok(out)
            });
            let outcomes = outcomes.into_iter().collect::<Result<Vec<_>>>()?;
            for (s, scheme) in SchemeKind::ALL.into_iter().enumerate() {
                let violations = outcomes.iter().filter(|o| o[s].0).count();
                let failed = outcomes.iter().filter(|o| o[s].1).count();
                let (wilson_low, wilson_high) = wilson95(violations, self.n_paths);
                rows.push(CensusRow {
                    dt,
                    scheme,
                    paths_with_violation: violations,
                    failed_paths: failed,
                    n_paths: self.n_paths,
                    fraction: violations as f64 / self.n_paths as f64,
                    wilson_low,
                    wilson_high,
                });
            }
        }
        Ok(CensusReport { rows })
    }

    /// Error (from [`Experiment::strong_error`], self reference) and single-threaded
    /// wall time of the stepping loops for each scheme and step.
    #[cfg(not(target_arch = "wasm32"))]
    pub fn bench_error_vs_time(
        &self,
        schemes: &[SchemeKind],
        dt_list: &[f64],
        reference_dt: Option<f64>,
    ) -> Result<BenchReport> {
        use std::time::{Duration, Instant};

        let mut convergence = Vec::with_capacity(schemes.len());
        let mut timings = Vec::new();
        for &scheme in schemes {
            let setup = ConvergenceSetup {
                reference_dt,
                ..ConvergenceSetup::new(scheme, dt_list.to_vec())
            };
            convergence.push(self.strong_error(&setup)?);
            for &dt in dt_list {
                let n = steps_for(self.horizon, dt)?;
                let mut wall = Duration::ZERO;
                for path in 0..self.n_paths as u64 {
                    let grid = self.grid(path, dt)?;
                    let started = Instant::now();
                    let tr = simulate(&self.params, scheme, self.i0, &grid)?;
                    wall += started.elapsed();
                    std::hint::black_box(tr.terminal());
                }
                let steps = (n * self.n_paths) as u64;
                timings.push(TimingRow {
                    scheme,
                    dt,
                    wall_seconds: wall.as_secs_f64(),
                    steps,
                    ns_per_step: wall.as_secs_f64() * 1e9 / steps as f64,
                });
            }
        }
        Ok(BenchReport { convergence, timings })
    }
}

pub const STABILITY_CSV_HEADER: &str = "path,exponent,terminal_I,bound,status";

impl StabilityReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut text = format!("{STABILITY_CSV_HEADER}\n");
        for (i, (e, y)) in self.per_path_exponents.iter().zip(&self.terminal_states).enumerate() {
            text.push_str(&format!(
                "{i},{},{},{},{}\n",
                fmt17(*e),
                fmt17(*y),
                fmt17(self.theoretical_bound),
                self.status()
            ));
        }
        out.write_all(text.as_bytes())
    }
}

pub const MOMENT_CSV_HEADER: &str =
    "p,empirical,bound,within_bound,flagged,proxy_positive,proxy_negative,exact_bound,proxy_within_bound";

impl MomentReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut text = format!("{MOMENT_CSV_HEADER}\n");
        for r in &self.rows {
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{},{}\n",
                fmt17(r.p),
                fmt17(r.empirical),
                fmt17(r.bound.value),
                r.within_bound,
                r.flagged,
                fmt17(r.proxy_positive),
                fmt17(r.proxy_negative),
                fmt17(r.exact_bound.value),
                r.proxy_within_bound
            ));
        }
        out.write_all(text.as_bytes())
    }
}

pub const CENSUS_CSV_HEADER: &str = "scheme,dt,paths_with_violation,failed_paths,n_paths,fraction,wilson_low,wilson_high";

impl CensusReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut text = format!("{CENSUS_CSV_HEADER}\n");
        for r in &self.rows {
            text.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.scheme,
                fmt17(r.dt),
                r.paths_with_violation,
                r.failed_paths,
                r.n_paths,
                fmt17(r.fraction),
                fmt17(r.wilson_low),
                fmt17(r.wilson_high)
            ));
        }
        out.write_all(text.as_bytes())
    }
}

pub const DIFFERENCE_CSV_HEADER: &str = "path,sup_abs_diff";

impl DifferenceReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut text = format!("{DIFFERENCE_CSV_HEADER}\n");
        for (i, s) in self.per_path_sup.iter().enumerate() {
            text.push_str(&format!("{i},{}\n", fmt17(*s)));
        }
        out.write_all(text.as_bytes())
    }
}

pub const TIMING_CSV_HEADER: &str = "scheme,dt,wall_seconds,steps,ns_per_step";

impl BenchReport {
    /// Deterministic error table (same columns as convergence reports).
    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        write_convergence_csv(&self.convergence, out)
    }

    /// Wall-clock measurements; differs from run to run.
    pub fn write_timing_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut text = format!("{TIMING_CSV_HEADER}\n");
        for r in &self.timings {
            text.push_str(&format!(
                "{},{},{},{},{}\n",
                r.scheme,
                fmt17(r.dt),
                fmt17(r.wall_seconds),
                r.steps,
                fmt17(r.ns_per_step)
            ));
        }
        out.write_all(text.as_bytes())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p_star() -> SisParams {
        SisParams::new(0.5, 0.2, 0.05, 1.0, 0.1).unwrap()
    }

    #[test]
    fn step_counting() {
        assert_eq!(steps_for(1.0, 0.125).unwrap(), 8);
        assert_eq!(steps_for(10.0, 0.1).unwrap(), 100);
        assert!(steps_for(1.0, 0.3).is_err());
        assert!(steps_for(1.0, 0.0).is_err());
        assert!(steps_for(1.0, 2.0).is_err());
    }

    #[test]
    fn dyadic_ratios() {
        assert_eq!(dyadic_ratio(0.5, 0.125).unwrap(), 4);
        assert_eq!(dyadic_ratio(0.125, 0.125).unwrap(), 1);
        assert!(dyadic_ratio(0.375, 0.125).is_err());
        assert!(dyadic_ratio(0.0625, 0.125).is_err());
    }

    #[test]
    fn self_comparison_is_zero() {
        let exp = Experiment::new(p_star(), 0.5, 1.0, 100, 3).unwrap();
        let setup = ConvergenceSetup {
            reference_dt: Some(0.01),
            ..ConvergenceSetup::new(SchemeKind::SemiDiscrete, vec![0.01])
        };
        let r = exp.strong_error(&setup).unwrap();
        assert_eq!(r.errors, vec![0.0]);
        assert!(r.fit.is_none());
    }

    #[test]
    fn rejects_bad_chains() {
        let exp = Experiment::new(p_star(), 0.5, 1.0, 100, 3).unwrap();
        let setup = ConvergenceSetup {
            reference_dt: Some(1.0 / 64.0),
            ..ConvergenceSetup::new(SchemeKind::SemiDiscrete, vec![0.25, 0.1])
        };
        assert!(exp.strong_error(&setup).is_err());
        let few = Experiment::new(p_star(), 0.5, 1.0, 10, 3).unwrap();
        assert!(few
            .strong_error(&ConvergenceSetup::new(SchemeKind::SemiDiscrete, vec![0.25, 0.125]))
            .is_err());
    }

    #[test]
    fn failure_budget() {
        let mut outcomes: Vec<std::result::Result<u8, String>> = (0..200).map(|_| Ok(1)).collect();
        outcomes[5] = Err("boom".into());
        outcomes[9] = Err("boom".into());
        let (ok, excl) = within_budget(outcomes.clone()).unwrap();
        assert_eq!((ok.len(), excl), (198, 2));
        outcomes[10] = Err("third".into());
        match within_budget(outcomes) {
            Err(SisError::FailureBudget { excluded, first_path, .. }) => {
                assert_eq!(excluded, 3);
                assert_eq!(first_path, 5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn identical_schemes_difference_is_roundoff() {
        let exp = Experiment::new(p_star(), 0.3, 1.0, 50, 8).unwrap();
        let d = exp.scheme_difference(0.01).unwrap();
        assert!(d.max_sup < 1e-12, "{}", d.max_sup);
    }

    #[test]
    fn moments_at_zero_horizon_equal_bound() {
        let exp = Experiment::new(p_star(), 0.25, 0.0, 10, 1).unwrap();
        let r = exp.moment_check(0.01, &[1.0, 2.0, 3.5]).unwrap();
        let x0: f64 = 0.25 / 0.75;
        for row in &r.rows {
            assert!((row.empirical - x0.powf(row.p)).abs() <= 1e-15 * row.empirical);
            assert!((row.bound.value - row.empirical).abs() <= 1e-14 * row.empirical);
            assert!(!row.flagged);
        }
    }

    #[test]
    fn overflowing_bound_is_flagged() {
        let exp = Experiment::new(p_star(), 0.5, 1.0, 20, 1).unwrap();
        let r = exp.moment_check(0.1, &[2000.0]).unwrap();
        assert!(r.rows[0].flagged);
        assert!(r.rows[0].bound.value.is_infinite());
    }

    #[test]
    fn stability_not_applicable() {
        let exp = Experiment::new(p_star(), 0.5, 5.0, 10, 1).unwrap();
        let r = exp.stability(0.1).unwrap();
        assert!(!r.applicable);
        assert_eq!(r.status(), "NOT_APPLICABLE");
        assert_eq!(r.per_path_exponents.len(), 10);
    }

    #[test]
    fn census_controls_and_deterministic_case() {
        let det = SisParams::new(0.5, 0.2, 0.05, 1.0, 0.0).unwrap();
        let exp = Experiment::new(det, 0.2, 5.0, 20, 1).unwrap();
        let r = exp.domain_violation_census(&[0.01]).unwrap();
        for row in &r.rows {
            assert_eq!(row.paths_with_violation, 0);
        }
    }

    #[test]
    fn csv_headers() {
        let exp = Experiment::new(p_star(), 0.5, 1.0, 100, 2).unwrap();
        let r = exp
            .strong_error(&ConvergenceSetup::new(SchemeKind::SemiDiscrete, vec![0.25, 0.125, 0.0625]))
            .unwrap();
        let mut buf = Vec::new();
        write_convergence_csv(&[r], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CONVERGENCE_CSV_HEADER);
        let row: Vec<_> = lines.next().unwrap().split(',').collect();
        assert_eq!(row.len(), 8);
        assert_eq!(row[0], "sd");
        assert_eq!(row[6], "100");
        assert_eq!(row[7], "2");
        assert_eq!(text.lines().count(), 4);
    }
}
