//! Fixed-step integrators and the trajectory driver.
//!
//! * Euler-Maruyama on `I` directly. Not domain preserving; excursions out of
//!   `(0, K)` are counted, never repaired.
//! * Gray-Yang: Euler-Maruyama on the logit `X = ln(I / (K - I))`, whose noise
//!   is additive, mapped back with `K e^X / (1 + e^X)`.
//! * Semi-discrete: on each step the odds drift `x phi(x)` is frozen to
//!   `phi(X^_n) x`, which leaves a linear SDE with the exact solution
//!
//!   ```text
//!   X^_{n+1} = X^_n exp{ (phi(X^_n) - s^2 K^2 / 2) dt + s K dW_n },   s K = sigma K
//!   ```
//!
//!   mapped back with `K X^ / (1 + X^)`. Positivity of `X^` is structural.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SisError};
use crate::format::fmt17;
use crate::model::{self, clamp_open, SisParams};
use crate::noise::WienerGrid;

/// Largest exponent magnitude accepted by the multiplicative step.
pub const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SchemeKind {
    #[serde(rename = "em")]
    EulerMaruyama,
    #[serde(rename = "gy")]
    GrayYang,
    #[serde(rename = "sd")]
    SemiDiscrete,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [SchemeKind::EulerMaruyama, SchemeKind::GrayYang, SchemeKind::SemiDiscrete];

    pub fn short_name(self) -> &'static str {
        match self {
            SchemeKind::EulerMaruyama => "em",
            SchemeKind::GrayYang => "gy",
            SchemeKind::SemiDiscrete => "sd",
        }
    }

    /// Whether iterates are guaranteed to stay in `(0, K)`.
    pub fn preserves_domain(self) -> bool {
        !matches!(self, SchemeKind::EulerMaruyama)
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for SchemeKind {
    type Err = SisError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "em" => Ok(SchemeKind::EulerMaruyama),
            "gy" => Ok(SchemeKind::GrayYang),
            "sd" => Ok(SchemeKind::SemiDiscrete),
            other => Err(SisError::Argument(format!("unknown scheme `{other}` (expected em, gy or sd)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StepFailure {
    NonFinite,
    ExponentOverflow,
}

impl fmt::Display for StepFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepFailure::NonFinite => f.write_str("non-finite state"),
            StepFailure::ExponentOverflow => write!(f, "step exponent exceeded {MAX_EXPONENT}"),
        }
    }
}

/// `I + A(I) dt + B(I) dW`.
#[inline]
pub fn em_step(params: &SisParams, state: f64, dt: f64, dw: f64) -> f64 {
    state + params.drift_raw(state) * dt + params.diffusion_raw(state) * dw
}

/// `X + F(X) dt + sigma K dW` on the logit.
#[inline]
pub fn gray_yang_step(params: &SisParams, logit: f64, dt: f64, dw: f64) -> f64 {
    logit + params.logit_drift_raw(logit) * dt + params.noise_scale() * dw
}

/// `x exp{rate dt + noise_scale dW}`, failing when the exponent magnitude
/// exceeds [`MAX_EXPONENT`] or is not finite.
#[inline]
pub fn exp_step(x: f64, rate: f64, noise_scale: f64, dt: f64, dw: f64) -> std::result::Result<f64, StepFailure> {
    let exponent = rate * dt + noise_scale * dw;
    if !exponent.is_finite() {
        return Err(StepFailure::NonFinite);
    }
    if exponent.abs() > MAX_EXPONENT {
        return Err(StepFailure::ExponentOverflow);
    }
    Ok(x * exponent.exp())
}

/// One semi-discrete step on the odds.
#[inline]
pub fn semi_discrete_step(params: &SisParams, odds: f64, dt: f64, dw: f64) -> std::result::Result<f64, StepFailure> {
    let rate = params.phi_raw(odds) - 0.5 * params.noise_var();
    exp_step(odds, rate, params.noise_scale(), dt, dw)
}

/// First failing step of a trajectory. Nodes after `step` hold NaN.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrajectoryFailure {
    /// Index of the node that could not be computed.
    pub step: usize,
    pub kind: StepFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub scheme: SchemeKind,
    pub dt: f64,
    pub k: f64,
    pub times: Vec<f64>,
    /// Infected count at every node.
    pub states: Vec<f64>,
    /// Logit (Gray-Yang) or odds (semi-discrete); `None` for Euler-Maruyama.
    pub internal: Option<Vec<f64>>,
    /// Steps whose value left `(0, K)` (Euler-Maruyama only).
    pub domain_violations: usize,
    /// Nodes clamped into `[eps K, (1 - eps) K]` after the inverse transform.
    pub saturations: usize,
    pub failure: Option<TrajectoryFailure>,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.states.len() - 1
    }

    pub fn is_ok(&self) -> bool {
        self.failure.is_none()
    }

    pub fn terminal(&self) -> f64 {
        *self.states.last().expect("trajectory has at least one node")
    }

    /// `S_n = K - I_n`.
    pub fn susceptible(&self) -> Vec<f64> {
        self.states.iter().map(|i| self.k - i).collect()
    }

    /// CSV with header `t,I,internal,scheme`; `internal` is empty for
    /// Euler-Maruyama.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let mut text = String::with_capacity(64 * self.states.len() + 32);
        text.push_str("t,I,internal,scheme\n");
        for (j, (t, i)) in self.times.iter().zip(&self.states).enumerate() {
            let internal = match &self.internal {
                Some(v) => fmt17(v[j]),
                None => String::new(),
            };
            text.push_str(&format!("{},{},{},{}\n", fmt17(*t), fmt17(*i), internal, self.scheme));
        }
        out.write_all(text.as_bytes())
    }
}

/// Runs `scheme` from `i0` over every increment of `grid`.
pub fn simulate(params: &SisParams, scheme: SchemeKind, i0: f64, grid: &WienerGrid) -> Result<Trajectory> {
    let i0 = params.check_state("I0", i0)?;
    let dt = grid.dt();
    let n = grid.n_steps();
    let k = params.k;
    let times = (0..=n).map(|j| j as f64 * dt).collect();
    let mut states = Vec::with_capacity(n + 1);
    let mut failure = None;
    let mut domain_violations = 0;
    let mut saturations = 0;

    let internal = match scheme {
        SchemeKind::EulerMaruyama => {
            let mut x = i0;
            states.push(x);
            for (j, &dw) in grid.increments().iter().enumerate() {
                x = em_step(params, x, dt, dw);
                if !x.is_finite() {
                    failure = Some(TrajectoryFailure {
                        step: j + 1,
                        kind: StepFailure::NonFinite,
                    });
                    break;
                }
                if !(x > 0.0 && x < k) {
                    domain_violations += 1;
                }
                states.push(x);
            }
            None
        }
        SchemeKind::GrayYang | SchemeKind::SemiDiscrete => {
            let logit = scheme == SchemeKind::GrayYang;
            let mut x = if logit {
                model::transform_logit(k, i0)?
            } else {
                model::transform_odds(k, i0)?
            };
            let mut internal = Vec::with_capacity(n + 1);
            let mut record = |x: f64, internal: &mut Vec<f64>, states: &mut Vec<f64>| {
                let raw = if logit {
                    model::inverse_logit_raw(k, x)
                } else {
                    model::inverse_odds_raw(k, x)
                };
                let (y, clamped) = clamp_open(k, raw);
                saturations += usize::from(clamped);
                internal.push(x);
                states.push(y);
            };
            record(x, &mut internal, &mut states);
            for (j, &dw) in grid.increments().iter().enumerate() {
                let next = if logit {
                    let v = gray_yang_step(params, x, dt, dw);
                    if v.is_finite() {
                        Ok(v)
                    } else {
                        Err(StepFailure::NonFinite)
                    }
                } else {
                    semi_discrete_step(params, x, dt, dw).and_then(|v| {
                        if v.is_finite() {
                            Ok(v)
                        } else {
                            Err(StepFailure::NonFinite)
                        }
                    })
                };
                match next {
                    Ok(v) => {
                        x = v;
                        record(x, &mut internal, &mut states);
                    }
                    Err(kind) => {
                        failure = Some(TrajectoryFailure { step: j + 1, kind });
                        break;
                    }
                }
            }
            internal.resize(n + 1, f64::NAN);
            Some(internal)
        }
    };
    states.resize(n + 1, f64::NAN);

    Ok(Trajectory {
        scheme,
        dt,
        k,
        times,
        states,
        internal,
        domain_violations,
        saturations,
        failure,
    })
}
