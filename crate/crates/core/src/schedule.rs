//! Interaction weight schedules t -> beta(t).

use std::f64::consts::E;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Onset time used for the derived growth constants of the log-type schedules.
const DEFAULT_T0: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScheduleKind {
    /// beta(t) = b
    Constant,
    /// beta(t) = b log(t + 1)
    Log,
    /// beta(t) = b log(log(t + e))
    LogLog,
    /// beta(t) = b t. Accepted for simulation only; no rate theory applies.
    Linear,
}

/// Growth constants of a schedule: `|beta(t)| <= a log t`,
/// `|beta'(t)| <= deriv_bound * t^-gamma` and `beta(t) >= -beta0` for `t >= t0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConstants {
    pub a: f64,
    pub gamma: f64,
    pub beta0: f64,
    pub t0: f64,
    pub deriv_bound: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaSchedule {
    pub kind: ScheduleKind,
    pub b: f64,
    /// Overrides for the derived constants.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t0: Option<f64>,
}

impl BetaSchedule {
    pub fn constant(b: f64) -> Self {
        Self::of_kind(ScheduleKind::Constant, b)
    }

    pub fn log(b: f64) -> Self {
        Self::of_kind(ScheduleKind::Log, b)
    }

    pub fn log_log(b: f64) -> Self {
        Self::of_kind(ScheduleKind::LogLog, b)
    }

    pub fn linear(b: f64) -> Self {
        Self::of_kind(ScheduleKind::Linear, b)
    }

    fn of_kind(kind: ScheduleKind, b: f64) -> Self {
        Self {
            kind,
            b,
            a: None,
            gamma: None,
            beta0: None,
            t0: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.b.is_finite() {
            return Err(Error::Config(format!("schedule strength b must be finite, got {}", self.b)));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g <= 1.0) {
                return Err(Error::Config(format!(
                    "schedule gamma = {g} violates the precondition gamma in (0, 1]"
                )));
            }
        }
        if let Some(a) = self.a {
            if !(a >= 0.0 && a.is_finite()) {
                return Err(Error::Config(format!("schedule a = {a} violates the precondition a >= 0")));
            }
        }
        if let Some(b0) = self.beta0 {
            if !(b0 >= 0.0) {
                return Err(Error::Config(format!(
                    "schedule beta0 = {b0} violates the precondition beta0 >= 0"
                )));
            }
        }
        if let Some(t0) = self.t0 {
            if !(t0 > 1.0 && t0.is_finite()) {
                return Err(Error::Config(format!("schedule t0 = {t0} must exceed 1")));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn value(&self, t: f64) -> f64 {
        match self.kind {
            ScheduleKind::Constant => self.b,
            ScheduleKind::Log => self.b * (t + 1.0).ln(),
            ScheduleKind::LogLog => self.b * (t + E).ln().ln(),
            ScheduleKind::Linear => self.b * t,
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self.kind {
            ScheduleKind::Constant => 0.0,
            ScheduleKind::Log => self.b / (t + 1.0),
            ScheduleKind::LogLog => self.b / ((t + E) * (t + E).ln()),
            ScheduleKind::Linear => self.b,
        }
    }

    /// The constants entering the rate theorem, or `None` for the linear
    /// schedule which grows too fast for any of them to exist.
    ///
    /// For the constant schedule `a` is reported as 0: `|b| <= a log t` holds
    /// eventually for every `a > 0`.
    pub fn constants(&self) -> Option<ScheduleConstants> {
        let t0 = self.t0.unwrap_or(DEFAULT_T0);
        let b = self.b;
        let (a, gamma, beta0, deriv_bound) = match self.kind {
            ScheduleKind::Constant => (0.0, 1.0, (-b).max(0.0), 0.0),
            ScheduleKind::Log => {
                let a = b.abs() * (t0 + 1.0).ln() / t0.ln();
                let beta0 = if b >= 0.0 { 0.0 } else { f64::INFINITY };
                (a, 1.0, beta0, b.abs())
            }
            ScheduleKind::LogLog => {
                let a = b.abs() * (t0 + E).ln().ln() / t0.ln();
                let beta0 = if b >= 0.0 { 0.0 } else { f64::INFINITY };
                (a, 1.0, beta0, b.abs())
            }
            ScheduleKind::Linear => return None,
        };
        Some(ScheduleConstants {
            a: self.a.unwrap_or(a),
            gamma: self.gamma.unwrap_or(gamma),
            beta0: self.beta0.unwrap_or(beta0),
            t0,
            deriv_bound,
        })
    }

    /// Checks the three growth bounds on `points` log-spaced times in
    /// `[t0, t_max]`. Returns the first violation, if any.
    pub fn spot_check(&self, t_max: f64, points: usize) -> std::result::Result<(), String> {
        let Some(c) = self.constants() else {
            return Err("linear schedule has no admissible growth constants".into());
        };
        let (lo, hi) = (c.t0.ln(), t_max.ln());
        for k in 0..points {
            let t = (lo + (hi - lo) * k as f64 / (points.max(2) - 1) as f64).exp();
            let beta = self.value(t);
            if c.a > 0.0 && beta.abs() > c.a * t.ln() * (1.0 + 1e-12) {
                return Err(format!("|beta({t})| = {} exceeds a log t = {}", beta.abs(), c.a * t.ln()));
            }
            let d = self.derivative(t).abs();
            if d > c.deriv_bound * t.powf(-c.gamma) * (1.0 + 1e-12) {
                return Err(format!("|beta'({t})| = {d} exceeds C t^-gamma"));
            }
            if beta < -c.beta0 * (1.0 + 1e-12) {
                return Err(format!("beta({t}) = {beta} below -beta0 = {}", -c.beta0));
            }
        }
        Ok(())
    }
}
