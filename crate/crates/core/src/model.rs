//! Stochastic SIS model: parameters, SDE coefficients in the original,
//! odds and logit coordinates, reproduction numbers and moment envelopes.
//!
//! The infected count solves
//!
//! ```text
//! dI = (eta I - (beta/K) I^2) dt + sigma (K - I) I dW,   eta = beta - b - gamma
//! ```
//!
//! and stays in `(0, K)` almost surely; `S = K - I`. Two changes of variable
//! are used by the integrators: the odds `z = I / (K - I)` (geometric-type
//! noise `sigma K z dW`) and the logit `ln z` (additive noise `sigma K dW`).

use serde::{Deserialize, Serialize};

use crate::error::{finite, Result, SisError};

/// Open-interval clamp margin, relative to `K`.
pub const CLAMP_EPS: f64 = f64::EPSILON;

/// Epidemiological and noise parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SisParams {
    pub beta: f64,
    pub gamma: f64,
    pub b: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub sigma: f64,
}

fn check(name: &'static str, value: f64, ok: bool, constraint: &'static str) -> Result<()> {
    if value.is_finite() && ok {
        Ok(())
    } else {
        Err(SisError::InvalidParameter {
            name,
            value,
            constraint,
        })
    }
}

impl SisParams {
    pub fn new(beta: f64, gamma: f64, b: f64, k: f64, sigma: f64) -> Result<Self> {
        check("beta", beta, beta > 0.0, "must be finite and > 0")?;
        check("gamma", gamma, gamma > 0.0, "must be finite and > 0")?;
        check("b", b, b >= 0.0, "must be finite and >= 0")?;
        check("K", k, k > 0.0, "must be finite and > 0")?;
        check("sigma", sigma, sigma >= 0.0, "must be finite and >= 0")?;
        Ok(SisParams {
            beta,
            gamma,
            b,
            k,
            sigma,
        })
    }

    /// Net growth rate `beta - b - gamma`.
    #[inline]
    pub fn eta(&self) -> f64 {
        self.beta - self.b - self.gamma
    }

    /// Total removal rate `b + gamma`.
    #[inline]
    pub fn removal(&self) -> f64 {
        self.b + self.gamma
    }

    /// Constant diffusion of the logit process, `sigma K`.
    #[inline]
    pub fn noise_scale(&self) -> f64 {
        self.sigma * self.k
    }

    /// `sigma^2 K^2`.
    #[inline]
    pub fn noise_var(&self) -> f64 {
        let s = self.noise_scale();
        s * s
    }

    /// Drift of the infected count, `A(x) = eta x - (beta/K) x^2`.
    pub fn drift(&self, x: f64) -> Result<f64> {
        Ok(self.drift_raw(finite("x", x)?))
    }

    /// Diffusion of the infected count, `B(x) = sigma (K - x) x`.
    pub fn diffusion(&self, x: f64) -> Result<f64> {
        Ok(self.diffusion_raw(finite("x", x)?))
    }

    /// Per-unit drift of the odds process,
    /// `phi(x) = eta - (b + gamma) x + sigma^2 K^2 x / (1 + x)`.
    pub fn phi(&self, x: f64) -> Result<f64> {
        Ok(self.phi_raw(nonneg("x", x)?))
    }

    /// Drift of the odds process, `F^(x) = x phi(x)`.
    pub fn odds_drift(&self, x: f64) -> Result<f64> {
        let x = nonneg("x", x)?;
        Ok(self.eta() * x - self.removal() * x * x + self.noise_var() * x * x / (1.0 + x))
    }

    /// Diffusion of the odds process, `G(x) = sigma K x`.
    pub fn odds_diffusion(&self, x: f64) -> Result<f64> {
        Ok(self.noise_scale() * nonneg("x", x)?)
    }

    /// Drift of the logit process,
    /// `F(v) = eta - (b + gamma) e^v + sigma^2 K^2 / 2 - sigma^2 K^2 / (1 + e^v)`.
    pub fn logit_drift(&self, v: f64) -> Result<f64> {
        Ok(self.logit_drift_raw(finite("v", v)?))
    }

    #[inline]
    pub(crate) fn drift_raw(&self, x: f64) -> f64 {
        self.eta() * x - self.beta / self.k * x * x
    }

    #[inline]
    pub(crate) fn diffusion_raw(&self, x: f64) -> f64 {
        self.sigma * (self.k - x) * x
    }

    #[inline]
    pub(crate) fn phi_raw(&self, x: f64) -> f64 {
        self.eta() - self.removal() * x + self.noise_var() * x / (1.0 + x)
    }

    #[inline]
    pub(crate) fn logit_drift_raw(&self, v: f64) -> f64 {
        let e = v.exp();
        let s2 = self.noise_var();
        self.eta() - self.removal() * e + 0.5 * s2 - s2 / (1.0 + e)
    }

    /// Reproduction numbers and the almost-sure extinction exponent.
    pub fn derived(&self) -> DerivedParams {
        let r0_deterministic = self.beta / self.removal();
        DerivedParams {
            eta: self.eta(),
            r0_deterministic,
            r0_stochastic: r0_deterministic - self.noise_var() / (2.0 * self.removal()),
            extinction_exponent: self.eta() - 0.5 * self.noise_var(),
        }
    }

    /// `beta / (K (b + gamma))`, the deterministic reproduction number in the
    /// form it is usually printed for the K-scaled contact rate. It agrees with
    /// [`DerivedParams::r0_deterministic`] only when `K = 1`; the extinction
    /// thresholds in this crate use the latter.
    pub fn r0_deterministic_as_printed(&self) -> f64 {
        self.beta / (self.k * self.removal())
    }

    pub fn extinction_conditions(&self) -> ExtinctionCheck {
        let d = self.derived();
        let s2 = self.sigma * self.sigma;
        let r0s_below_one = d.r0_stochastic < 1.0;
        let sigma_sq_leq_beta_over_k2 = s2 <= self.beta / (self.k * self.k);
        let sigma_sq_k2_leq_b_plus_gamma = self.noise_var() <= self.removal();
        ExtinctionCheck {
            r0s_below_one,
            sigma_sq_leq_beta_over_k2,
            sigma_sq_k2_leq_b_plus_gamma,
            all_satisfied: r0s_below_one && sigma_sq_leq_beta_over_k2 && sigma_sq_k2_leq_b_plus_gamma,
        }
    }

    /// Envelope `C~_p` on `E[X^_n^p]` for the semi-discrete odds iterates on `[0, T]`:
    ///
    /// ```text
    /// X0^p exp{ (eta + s^2 K^2 / 2) T p + p^2 s^2 K^2 T / 2 }
    /// ```
    pub fn moment_bound_scheme(&self, x0: f64, horizon: f64, p: f64) -> Result<Bound> {
        check_pos("X0", x0)?;
        check_horizon(horizon)?;
        check_pos("p", p)?;
        let s2 = self.noise_var();
        let log = p * x0.ln() + (self.eta() + 0.5 * s2) * horizon * p + 0.5 * p * p * s2 * horizon;
        Ok(Bound::from_log(log))
    }

    /// Constant `C^_p` bounding `sup E[I^-p]` and `sup E[(K-I)^-p]` for the exact
    /// process:
    ///
    /// ```text
    /// (I0^-p v (K-I0)^-p) exp{ p (eta v (2 beta - eta) v 2 beta/K) T + p (p+1) s^2 K^2 T / 2 }
    /// ```
    pub fn moment_bound_exact(&self, i0: f64, horizon: f64, p: f64) -> Result<Bound> {
        self.check_state("I0", i0)?;
        check_horizon(horizon)?;
        check_pos("p", p)?;
        let eta = self.eta();
        let rate = eta.max(2.0 * self.beta - eta).max(2.0 * self.beta / self.k);
        let nearest = i0.min(self.k - i0);
        let log = -p * nearest.ln() + p * rate * horizon + 0.5 * p * (p + 1.0) * self.noise_var() * horizon;
        Ok(Bound::from_log(log))
    }

    /// Bound `K^p sqrt(C^_{2p})` on both `sup E[z^p]` and `sup E[z^-p]` for the
    /// exact odds process `z = I / (K - I)`.
    pub fn odds_moment_bound_exact(&self, i0: f64, horizon: f64, p: f64) -> Result<Bound> {
        let c = self.moment_bound_exact(i0, horizon, 2.0 * p)?;
        Ok(Bound::from_log(p * self.k.ln() + 0.5 * c.log_value))
    }

    /// Checks `0 < x < K`.
    pub fn check_state(&self, name: &'static str, x: f64) -> Result<f64> {
        if x.is_finite() && x > 0.0 && x < self.k {
            Ok(x)
        } else {
            Err(SisError::Domain {
                name,
                value: x,
                constraint: "must lie in the open interval (0, K)",
            })
        }
    }
}

fn nonneg(name: &'static str, x: f64) -> Result<f64> {
    if x.is_finite() && x >= 0.0 {
        Ok(x)
    } else {
        Err(SisError::Domain {
            name,
            value: x,
            constraint: "must be finite and >= 0",
        })
    }
}

fn check_pos(name: &'static str, x: f64) -> Result<f64> {
    if x.is_finite() && x > 0.0 {
        Ok(x)
    } else {
        Err(SisError::Domain {
            name,
            value: x,
            constraint: "must be finite and > 0",
        })
    }
}

fn check_horizon(t: f64) -> Result<f64> {
    nonneg("T", t)
}

/// Derived rates and thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivedParams {
    pub eta: f64,
    pub r0_deterministic: f64,
    pub r0_stochastic: f64,
    pub extinction_exponent: f64,
}

/// Parameter conditions for almost-sure exponential extinction of the
/// semi-discrete iterates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExtinctionCheck {
    pub r0s_below_one: bool,
    pub sigma_sq_leq_beta_over_k2: bool,
    pub sigma_sq_k2_leq_b_plus_gamma: bool,
    pub all_satisfied: bool,
}

/// A theoretical bound kept alongside its logarithm. Overflowing bounds are
/// reported as `+inf` with `overflowed` set rather than as an error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bound {
    pub value: f64,
    pub log_value: f64,
    pub overflowed: bool,
}

impl Bound {
    fn from_log(log_value: f64) -> Self {
        let value = log_value.exp();
        Bound {
            value,
            log_value,
            overflowed: value.is_infinite(),
        }
    }
}

/// `x / (K - x)` for `0 < x < K`.
pub fn transform_odds(k: f64, x: f64) -> Result<f64> {
    open_interval(k, x)?;
    Ok(x / (k - x))
}

/// `K y / (1 + y)` for `y >= 0`. The result lies in `[0, K]`; use
/// [`clamp_open`] to force it into the open interval.
pub fn inverse_odds(k: f64, y: f64) -> Result<f64> {
    Ok(inverse_odds_raw(k, nonneg("y", y)?))
}

/// `ln(x / (K - x))` for `0 < x < K`.
pub fn transform_logit(k: f64, x: f64) -> Result<f64> {
    open_interval(k, x)?;
    Ok((x / (k - x)).ln())
}

/// `K e^v / (1 + e^v)`, evaluated without overflow for large `|v|`.
pub fn inverse_logit(k: f64, v: f64) -> Result<f64> {
    Ok(inverse_logit_raw(k, finite("v", v)?))
}

#[inline]
pub(crate) fn inverse_odds_raw(k: f64, y: f64) -> f64 {
    k * y / (1.0 + y)
}

#[inline]
pub(crate) fn inverse_logit_raw(k: f64, v: f64) -> f64 {
    if v >= 0.0 {
        k / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        k * e / (1.0 + e)
    }
}

/// Clamps `x` into `[eps K, (1 - eps) K]`, `eps = 2^-52`. Returns the clamped
/// value and whether clamping was needed.
#[inline]
pub fn clamp_open(k: f64, x: f64) -> (f64, bool) {
    let lo = CLAMP_EPS * k;
    let hi = (1.0 - CLAMP_EPS) * k;
    if x < lo {
        (lo, true)
    } else if x > hi {
        (hi, true)
    } else {
        (x, false)
    }
}

fn open_interval(k: f64, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 && x < k {
        Ok(())
    } else {
        Err(SisError::Domain {
            name: "x",
            value: x,
            constraint: "must lie in the open interval (0, K)",
        })
    }
}

/// Parameter document: exactly the keys `beta, gamma, b, K, sigma, I0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub beta: f64,
    pub gamma: f64,
    pub b: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub sigma: f64,
    #[serde(rename = "I0")]
    pub i0: f64,
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SisError::Document(e.to_string()))
    }

    /// Validated parameters and initial state.
    pub fn resolve(&self) -> Result<(SisParams, f64)> {
        let params = SisParams::new(self.beta, self.gamma, self.b, self.k, self.sigma)?;
        let i0 = params.check_state("I0", self.i0)?;
        Ok((params, i0))
    }
}
