//! Acceptance suite. Each criterion prints one `[PASS]`/`[FAIL]` line; run with
//!
//! ```text
//! cargo test -p sis-sde --test acceptance -- --nocapture
//! ```
//!
//! Parameter sets:
//! * P*: beta = 0.5, gamma = 0.2, b = 0.05, K = 1, sigma = 0.1, I0 = 0.5, T = 1
//! * P†: beta = 0.25, gamma = 0.2, b = 0.05, K = 1, sigma = 0.1, I0 = 0.5
//!
//! Tests hold a shared lock so the timing criterion never competes with the
//! other Monte Carlo runs for cores.

use std::io::Write;
use std::sync::{Mutex, MutexGuard};
use std::time::Instant;

use sis_sde::analysis::{write_convergence_csv, ReferenceMode};
use sis_sde::{simulate, ConvergenceSetup, Experiment, SchemeKind, SisParams, WienerGrid};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Writes straight to stderr so the line shows without `--nocapture`.
fn report(id: &str, pass: bool, detail: String) -> bool {
    let line = format!("[{}] {id}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
    pass
}

fn params(beta: f64, sigma: f64) -> SisParams {
    SisParams::new(beta, 0.2, 0.05, 1.0, sigma).unwrap()
}

fn p_star() -> SisParams {
    params(0.5, 0.1)
}

fn p_dagger() -> SisParams {
    params(0.25, 0.1)
}

const SEED: u64 = 20_240_611;

/// Logistic solution of the noise-free model, obtained by solving the
/// Bernoulli ODE `I' = eta I - (beta/K) I^2` directly.
fn logistic(p: &SisParams, i0: f64, t: f64) -> f64 {
    let eta = p.beta - p.b - p.gamma;
    let cap = eta * p.k / p.beta;
    cap / (1.0 + (cap / i0 - 1.0) * (-eta * t).exp())
}

fn sci(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn dyadic(horizon: f64, ks: std::ops::RangeInclusive<i32>) -> Vec<f64> {
    ks.map(|k| horizon * 2f64.powi(-k)).collect()
}

#[test]
fn ac1_domain_preservation() {
    let _g = serial();
    let started = Instant::now();
    let exp = Experiment::new(p_star(), 0.5, 1.0, 1000, SEED).unwrap();
    let census = exp.domain_violation_census(&[1e-1, 1e-2, 1e-3]).unwrap();
    let mut violations = 0;
    for row in census.rows.iter().filter(|r| r.scheme != SchemeKind::EulerMaruyama) {
        violations += row.paths_with_violation + row.failed_paths;
    }
    let secs = started.elapsed().as_secs_f64();
    let pass = violations == 0 && secs < 60.0;
    assert!(report(
        "AC1 domain preservation (GY, SD; 1000 paths x 3 steps)",
        pass,
        format!("violating paths = {violations}, runtime = {secs:.2}s")
    ));
}

#[test]
fn ac2_strong_order_one() {
    let _g = serial();
    let exp = Experiment::new(p_star(), 0.5, 1.0, 1000, SEED).unwrap();
    let setup = ConvergenceSetup {
        reference_dt: Some(2f64.powi(-13)),
        ..ConvergenceSetup::new(SchemeKind::SemiDiscrete, dyadic(1.0, 6..=10))
    };
    let r = exp.strong_error(&setup).unwrap();
    let slope = r.fitted_order().unwrap_or(f64::NAN);
    let pass = (0.8..=1.2).contains(&slope);
    assert!(report(
        "AC2 strong order, self reference",
        pass,
        format!("slope = {slope:.4}, errors = {}", sci(&r.errors))
    ));
}

#[test]
fn ac3_cross_scheme_order() {
    let _g = serial();
    let exp = Experiment::new(p_star(), 0.5, 1.0, 1000, SEED).unwrap();
    let setup = ConvergenceSetup {
        reference: ReferenceMode::CrossScheme,
        reference_dt: Some(2f64.powi(-13)),
        ..ConvergenceSetup::new(SchemeKind::SemiDiscrete, dyadic(1.0, 6..=10))
    };
    let r = exp.strong_error(&setup).unwrap();
    let slope = r.fitted_order().unwrap_or(f64::NAN);
    // same-grid difference, for the record
    let diff = exp.scheme_difference(2f64.powi(-6)).unwrap();
    let pass = slope >= 0.8;
    assert!(report(
        "AC3 order against Gray-Yang reference",
        pass,
        format!(
            "slope = {slope:.4}, errors = {}; same-grid max |SD - GY| = {:.2e}",
            sci(&r.errors),
            diff.max_sup
        )
    ));
}

#[test]
fn ac4a_extinction_exponent() {
    let _g = serial();
    let p = p_dagger();
    let cond = p.extinction_conditions();
    let exp = Experiment::new(p, 0.5, 200.0, 500, SEED).unwrap();
    let r = exp.stability(0.01).unwrap();
    let pass = cond.all_satisfied && r.applicable && r.fraction_below_bound_plus_tol >= 0.95;
    assert!(report(
        "AC4a extinction exponent <= bound + 0.05 on >= 95% of paths",
        pass,
        format!(
            "conditions = {:?}, bound = {:.4}, fraction = {:.3}",
            (cond.r0s_below_one, cond.sigma_sq_leq_beta_over_k2, cond.sigma_sq_k2_leq_b_plus_gamma),
            r.theoretical_bound,
            r.fraction_below_bound_plus_tol
        )
    ));
}

#[test]
fn ac4b_extinction_terminal_level() {
    let _g = serial();
    let p = p_dagger();
    let exp = Experiment::new(p, 0.5, 200.0, 500, SEED).unwrap();
    let r = exp.stability(0.01).unwrap();
    let level = 1e-6 * p.k;
    let frac = r.fraction_terminal_below(level);
    let mut sorted = r.terminal_states.clone();
    sorted.sort_by(f64::total_cmp);
    assert!(report(
        "AC4b terminal Y <= 1e-6 K on >= 95% of paths",
        frac >= 0.95,
        format!(
            "fraction = {frac:.3}, median terminal I = {:.3e}, 5% quantile = {:.3e}",
            sorted[sorted.len() / 2],
            sorted[sorted.len() / 20]
        )
    ));
}

#[test]
fn ac5_moment_envelope() {
    let _g = serial();
    let exp = Experiment::new(p_star(), 0.5, 1.0, 10_000, SEED).unwrap();
    let r = exp.moment_check(0.01, &[1.0, 2.0, 4.0]).unwrap();
    let pass = r.rows.iter().all(|row| row.within_bound && !row.flagged);
    let detail = r
        .rows
        .iter()
        .map(|row| format!("p={}: {:.4} <= {:.4}", row.p, row.empirical, row.bound.value))
        .collect::<Vec<_>>()
        .join(", ");
    assert!(report("AC5 moment envelope", pass, detail));
}

#[test]
fn ac6_em_leaves_domain() {
    let _g = serial();
    let exp = Experiment::new(params(0.5, 1.0), 0.9, 10.0, 1000, SEED).unwrap();
    let census = exp.domain_violation_census(&[0.1]).unwrap();
    let em = census.row(SchemeKind::EulerMaruyama, 0.1).unwrap();
    let gy = census.row(SchemeKind::GrayYang, 0.1).unwrap();
    let sd = census.row(SchemeKind::SemiDiscrete, 0.1).unwrap();
    let pass = em.fraction > 0.01 && gy.paths_with_violation == 0 && sd.paths_with_violation == 0;
    assert!(report(
        "AC6 Euler-Maruyama violation fraction > 1%, controls 0",
        pass,
        format!(
            "EM = {:.3} [{:.3}, {:.3}], GY = {}, SD = {}",
            em.fraction, em.wilson_low, em.wilson_high, gy.paths_with_violation, sd.paths_with_violation
        )
    ));
}

#[test]
fn ac6_em_leaves_domain_coarse_step() {
    let _g = serial();
    let exp = Experiment::new(params(0.5, 1.0), 0.9, 10.0, 1000, SEED).unwrap();
    let census = exp.domain_violation_census(&[0.25]).unwrap();
    let em = census.row(SchemeKind::EulerMaruyama, 0.25).unwrap();
    let gy = census.row(SchemeKind::GrayYang, 0.25).unwrap();
    let sd = census.row(SchemeKind::SemiDiscrete, 0.25).unwrap();
    let pass = em.fraction > 0.01 && gy.paths_with_violation == 0 && sd.paths_with_violation == 0;
    assert!(report(
        "AC6 (supplementary) dt = 0.25: Euler-Maruyama violation fraction > 1%, controls 0",
        pass,
        format!(
            "EM = {:.3} [{:.3}, {:.3}], GY = {}, SD = {}",
            em.fraction, em.wilson_low, em.wilson_high, gy.paths_with_violation, sd.paths_with_violation
        )
    ));
}

/// Max-node error of the noise-free semi-discrete scheme against the logistic
/// solution on a uniform grid of `n` steps.
fn deterministic_error(p: &SisParams, i0: f64, horizon: f64, n: usize) -> f64 {
    let dt = horizon / n as f64;
    let grid = WienerGrid::generate(1, 0, n, dt).unwrap();
    let tr = simulate(p, SchemeKind::SemiDiscrete, i0, &grid).unwrap();
    tr.states
        .iter()
        .enumerate()
        .map(|(j, y)| (y - logistic(p, i0, j as f64 * dt)).abs())
        .fold(0.0, f64::max)
}

fn loglog_slope(h: &[f64], e: &[f64]) -> f64 {
    let n = h.len() as f64;
    let xs: Vec<f64> = h.iter().map(|v| v.log2()).collect();
    let ys: Vec<f64> = e.iter().map(|v| v.log2()).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn ac7_run(id: &str, i0: f64) -> bool {
    let p = params(0.5, 0.0);
    let horizon = 1.0;
    let err_fine = deterministic_error(&p, i0, horizon, 1000);
    let ks: Vec<i32> = (4..=8).collect();
    let h: Vec<f64> = ks.iter().map(|&k| horizon * 2f64.powi(-k)).collect();
    let e: Vec<f64> = ks.iter().map(|&k| deterministic_error(&p, i0, horizon, 1 << k)).collect();
    let slope = if e.iter().all(|&v| v > 0.0) {
        loglog_slope(&h, &e)
    } else {
        f64::NAN
    };
    let pass = err_fine <= 0.5 * 1e-3 && (0.9..=1.1).contains(&slope);
    report(
        id,
        pass,
        format!("I0 = {i0}: max error at dt=1e-3 = {err_fine:.3e} (<= 5e-4), slope k=4..8 = {slope:.4}, errors = {}", sci(&e)),
    )
}

#[test]
fn ac7_deterministic_oracle() {
    let _g = serial();
    assert!(ac7_run("AC7 deterministic oracle at P* (I0 = 0.5)", 0.5));
}

#[test]
fn ac7_deterministic_oracle_off_equilibrium() {
    let _g = serial();
    assert!(ac7_run("AC7 (supplementary) deterministic oracle, I0 = 0.1", 0.1));
}

fn convergence_csv(threads: usize) -> Vec<u8> {
    let exp = Experiment::new(p_star(), 0.5, 1.0, 200, SEED)
        .unwrap()
        .with_threads(threads);
    let setup = ConvergenceSetup::new(SchemeKind::SemiDiscrete, dyadic(1.0, 4..=7));
    let r = exp.strong_error(&setup).unwrap();
    let mut buf = Vec::new();
    write_convergence_csv(&[r], &mut buf).unwrap();
    buf
}

fn census_csv(threads: usize) -> Vec<u8> {
    let exp = Experiment::new(params(0.5, 1.0), 0.9, 2.0, 300, SEED)
        .unwrap()
        .with_threads(threads);
    let mut buf = Vec::new();
    exp.domain_violation_census(&[0.1, 0.05]).unwrap().write_csv(&mut buf).unwrap();
    buf
}

fn moments_csv(threads: usize) -> Vec<u8> {
    let exp = Experiment::new(p_star(), 0.5, 1.0, 700, SEED)
        .unwrap()
        .with_threads(threads);
    let mut buf = Vec::new();
    exp.moment_check(0.05, &[1.0, 3.0]).unwrap().write_csv(&mut buf).unwrap();
    buf
}

#[test]
fn ac8_reproducibility() {
    let _g = serial();
    let mut pass = true;
    for (name, run) in [
        ("convergence", convergence_csv as fn(usize) -> Vec<u8>),
        ("violations", census_csv),
        ("moments", moments_csv),
    ] {
        let a = run(1);
        let b = run(8);
        let c = run(8);
        pass &= !a.is_empty() && a == b && b == c;
        if a != b || b != c {
            println!("  {name}: outputs differ");
        }
    }
    assert!(report(
        "AC8 byte-identical CSVs at 1 and 8 threads",
        pass,
        "convergence, violations, moments".into()
    ));
}

#[test]
fn ac9_bench_sanity() {
    let _g = serial();
    let exp = Experiment::new(p_star(), 0.5, 1.0, 1000, SEED).unwrap().with_threads(1);
    let dts = dyadic(1.0, 5..=9);
    let bench = exp
        .bench_error_vs_time(&[SchemeKind::SemiDiscrete, SchemeKind::GrayYang], &dts, None)
        .unwrap();
    let mut pass = true;
    let mut lines = Vec::new();
    for conv in &bench.convergence {
        let times: Vec<f64> = dts
            .iter()
            .map(|&dt| bench.timing(conv.scheme, dt).unwrap().wall_seconds)
            .collect();
        let err_mono = conv.errors.windows(2).all(|w| w[1] < w[0]);
        let time_mono = times.windows(2).all(|w| w[1] > w[0]);
        pass &= err_mono && time_mono;
        lines.push(format!(
            "{}: errors decreasing = {err_mono}, times increasing = {time_mono}",
            conv.scheme
        ));
    }
    let per_step = |s: SchemeKind| {
        let rows: Vec<_> = bench.timings.iter().filter(|r| r.scheme == s).collect();
        rows.iter().map(|r| r.wall_seconds).sum::<f64>() / rows.iter().map(|r| r.steps as f64).sum::<f64>()
    };
    let ratio = per_step(SchemeKind::SemiDiscrete) / per_step(SchemeKind::GrayYang);
    pass &= ratio <= 2.0;
    lines.push(format!("SD/GY per-step cost = {ratio:.3}"));
    assert!(report("AC9 bench monotone, SD within 2x of GY", pass, lines.join("; ")));
}
