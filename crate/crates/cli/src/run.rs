use std::fs;
use std::path::PathBuf;

use serde::Serialize;
use sis_sde::analysis::{self, ReferenceMode};
use sis_sde::{simulate, ConvergenceSetup, Experiment, SchemeKind, WienerGrid};

use crate::config::{ExperimentKind, Format, Run, RunConfig};
use crate::error::CliError;

/// Files written under the output directory, in write order.
struct Outputs {
    dir: PathBuf,
    format: Format,
    written: Vec<String>,
}

impl Outputs {
    fn new(dir: PathBuf, format: Format) -> Result<Self, CliError> {
        fs::create_dir_all(&dir).map_err(|e| CliError::Io(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Outputs {
            dir,
            format,
            written: Vec::new(),
        })
    }

    fn put(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn csv<F>(&mut self, name: &str, write: F) -> Result<(), CliError>
    where
        F: FnOnce(&mut Vec<u8>) -> std::io::Result<()>,
    {
        if !self.format.csv() {
            return Ok(());
        }
        let mut buf = Vec::new();
        write(&mut buf).map_err(|e| CliError::Io(e.to_string()))?;
        self.put(name, &buf)
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        if !self.format.json() {
            return Ok(());
        }
        let mut buf = serde_json::to_vec_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
        buf.push(b'\n');
        self.put(name, &buf)
    }
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: RunConfig,
    outputs: &'a [String],
}

/// Executes `run`, writes its artifacts and manifest, and returns the summary
/// paragraph.
pub fn execute(run: &Run) -> Result<String, CliError> {
    let mut out = Outputs::new(run.dir.clone(), run.format)?;
    let exp = Experiment::new(run.params, run.model.i0, run.horizon, run.n_paths, run.master_seed)?
        .with_threads(run.threads);
    let summary = match run.experiment {
        ExperimentKind::Simulate => simulate_paths(run, &mut out)?,
        ExperimentKind::Convergence => convergence(run, &exp, &mut out)?,
        ExperimentKind::Compare => compare(run, &exp, &mut out)?,
        ExperimentKind::Stability => stability(run, &exp, &mut out)?,
        ExperimentKind::Moments => moments(run, &exp, &mut out)?,
        ExperimentKind::Violations => violations(run, &exp, &mut out)?,
        ExperimentKind::Bench => bench(run, &exp, &mut out)?,
    };
    let manifest = Manifest {
        tool: "sis-lab",
        version: env!("CARGO_PKG_VERSION"),
        config: run.to_config(),
        outputs: &out.written,
    };
    let mut buf = serde_json::to_vec_pretty(&manifest).map_err(|e| CliError::Io(e.to_string()))?;
    buf.push(b'\n');
    out.put("run_manifest.json", &buf)?;
    Ok(summary)
}

fn dt(run: &Run) -> f64 {
    run.dt.expect("validated")
}

fn dt_list(run: &Run) -> &[f64] {
    run.dt_list.as_deref().expect("validated")
}

fn simulate_paths(run: &Run, out: &mut Outputs) -> Result<String, CliError> {
    let dt = dt(run);
    let n = analysis::steps_for(run.horizon, dt)?;
    let mut lines = Vec::new();
    for path in 0..run.n_paths as u64 {
        let grid = WienerGrid::generate(run.master_seed, path, n, dt)?;
        let suffix = if run.n_paths == 1 {
            String::new()
        } else {
            format!("_{path}")
        };
        if run.dump_noise {
            let mut buf = Vec::new();
            grid.write_to(&mut buf)?;
            out.put(&format!("wiener{suffix}.bin"), &buf)?;
        }
        for &scheme in &run.schemes {
            let tr = simulate(&run.params, scheme, run.model.i0, &grid)?;
            let stem = format!("trajectory_{}{suffix}", scheme.short_name());
            out.csv(&format!("{stem}.csv"), |w| tr.write_csv(w))?;
            out.json(&format!("{stem}.json"), &tr)?;
            if path == 0 {
                let mut line = format!(
                    "{scheme}: terminal I = {:.6e}, domain violations = {}, saturations = {}",
                    tr.terminal(),
                    tr.domain_violations,
                    tr.saturations
                );
                if let Some(f) = tr.failure {
                    line.push_str(&format!(", failed at step {} ({})", f.step, f.kind));
                }
                lines.push(line);
            }
        }
    }
    Ok(format!(
        "simulate: {} path(s) of {n} steps, dt = {dt}, T = {}, seed {}. Path 0: {}.",
        run.n_paths,
        run.horizon,
        run.master_seed,
        lines.join("; ")
    ))
}

fn describe_fit(r: &analysis::ConvergenceReport) -> String {
    match r.fit {
        Some(f) => format!("fitted order {:.4} (intercept {:.4})", f.slope, f.intercept),
        None => "no order fit (fewer than two positive errors)".into(),
    }
}

fn convergence(run: &Run, exp: &Experiment, out: &mut Outputs) -> Result<String, CliError> {
    let mut reports = Vec::new();
    for &scheme in &run.schemes {
        let setup = ConvergenceSetup {
            reference: run.reference,
            q: run.q,
            ..ConvergenceSetup::new(scheme, dt_list(run).to_vec())
        };
        reports.push(exp.strong_error(&setup)?);
    }
    out.csv("convergence.csv", |w| analysis::write_convergence_csv(&reports, w))?;
    out.json("convergence.json", &reports)?;
    let parts: Vec<String> = reports
        .iter()
        .map(|r| {
            format!(
                "{} against {} reference (dt_ref = {:e}): {}, errors {}",
                r.scheme,
                match r.reference_mode {
                    ReferenceMode::SelfFinest => "its own finest-grid",
                    ReferenceMode::CrossScheme => "the Gray-Yang finest-grid",
                },
                r.reference_dt,
                describe_fit(r),
                r.errors.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>().join(", ")
            )
        })
        .collect();
    Ok(format!(
        "convergence: q = {}, {} paths, seed {}. {}. Excluded paths: {}.",
        run.q,
        run.n_paths,
        run.master_seed,
        parts.join("; "),
        reports.iter().map(|r| r.n_excluded).sum::<usize>()
    ))
}

fn compare(run: &Run, exp: &Experiment, out: &mut Outputs) -> Result<String, CliError> {
    let d = exp.scheme_difference(dt(run))?;
    out.csv("difference.csv", |w| d.write_csv(w))?;
    out.json("difference.json", &d)?;
    Ok(format!(
        "compare: semi-discrete vs Gray-Yang on shared Wiener paths, dt = {}, {} paths: mean sup |diff| = {:.3e} +/- {:.1e}, max {:.3e}, mean node |diff| = {:.3e}.",
        d.dt,
        d.per_path_sup.len(),
        d.mean_sup,
        d.ci_half_width,
        d.max_sup,
        d.mean_abs
    ))
}

fn stability(run: &Run, exp: &Experiment, out: &mut Outputs) -> Result<String, CliError> {
    let r = exp.stability(dt(run))?;
    out.csv("stability.csv", |w| r.write_csv(w))?;
    out.json("stability.json", &r)?;
    let mut sorted = r.per_path_exponents.clone();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    let c = r.conditions;
    Ok(format!(
        "stability: {}. Extinction conditions R0s < 1: {}, sigma^2 <= beta/K^2: {}, sigma^2 K^2 <= b + gamma: {}. \
         Bound eta - sigma^2 K^2/2 = {:.6}; median exponent {:.6}; fraction within bound + {} = {:.4} over {} paths (T = {}, dt = {}); clamped terminal values: {}.",
        r.status(),
        c.r0s_below_one,
        c.sigma_sq_leq_beta_over_k2,
        c.sigma_sq_k2_leq_b_plus_gamma,
        r.theoretical_bound,
        median,
        r.tolerance,
        r.fraction_below_bound_plus_tol,
        r.per_path_exponents.len(),
        r.horizon,
        r.dt,
        r.clamped_paths
    ))
}

fn moments(run: &Run, exp: &Experiment, out: &mut Outputs) -> Result<String, CliError> {
    let r = exp.moment_check(dt(run), &run.p_list)?;
    out.csv("moments.csv", |w| r.write_csv(w))?;
    out.json("moments.json", &r)?;
    let rows: Vec<String> = r
        .rows
        .iter()
        .map(|m| {
            format!(
                "p = {}: {:.4e} vs envelope {:.4e} ({}); exact-process proxy {:.4e} / {:.4e} vs {:.4e} ({})",
                m.p,
                m.empirical,
                m.bound.value,
                if m.within_bound { "within" } else { "EXCEEDED" },
                m.proxy_positive,
                m.proxy_negative,
                m.exact_bound.value,
                if m.proxy_within_bound { "within" } else { "EXCEEDED" },
            )
        })
        .collect();
    Ok(format!(
        "moments: semi-discrete odds, dt = {}, proxy dt = {}, {} paths. {}.",
        r.dt,
        r.proxy_dt,
        run.n_paths,
        rows.join("; ")
    ))
}

fn violations(run: &Run, exp: &Experiment, out: &mut Outputs) -> Result<String, CliError> {
    let r = exp.domain_violation_census(dt_list(run))?;
    out.csv("violations.csv", |w| r.write_csv(w))?;
    out.json("violations.json", &r)?;
    let rows: Vec<String> = dt_list(run)
        .iter()
        .map(|&dt| {
            let em = r.row(SchemeKind::EulerMaruyama, dt).expect("row per dt");
            let gy = r.row(SchemeKind::GrayYang, dt).expect("row per dt");
            let sd = r.row(SchemeKind::SemiDiscrete, dt).expect("row per dt");
            format!(
                "dt = {dt}: EM {:.4} [{:.4}, {:.4}], GY {}, SD {}",
                em.fraction, em.wilson_low, em.wilson_high, gy.paths_with_violation, sd.paths_with_violation
            )
        })
        .collect();
    Ok(format!(
        "violations: fraction of {} paths leaving (0, K). {}.",
        run.n_paths,
        rows.join("; ")
    ))
}

fn bench(run: &Run, exp: &Experiment, out: &mut Outputs) -> Result<String, CliError> {
    let r = exp.bench_error_vs_time(&run.schemes, dt_list(run), None)?;
    out.csv("bench.csv", |w| r.write_csv(w))?;
    out.csv("bench_timing.csv", |w| r.write_timing_csv(w))?;
    out.json("bench.json", &r)?;
    let rows: Vec<String> = r
        .convergence
        .iter()
        .map(|c| {
            let ns: Vec<String> = r
                .timings
                .iter()
                .filter(|t| t.scheme == c.scheme)
                .map(|t| format!("{:.1}", t.ns_per_step))
                .collect();
            format!("{}: {}, ns/step [{}]", c.scheme, describe_fit(c), ns.join(", "))
        })
        .collect();
    Ok(format!(
        "bench: {} paths, seed {}, single-threaded timing. {}.",
        run.n_paths,
        run.master_seed,
        rows.join("; ")
    ))
}
