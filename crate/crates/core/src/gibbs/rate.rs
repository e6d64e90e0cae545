//! Almost-sure convergence rate of the occupation measure and the regime
//! classification for constant interaction weights.

use serde::{Deserialize, Serialize};

/// Default regularity constant kappa = 2(n+3).
pub fn default_kappa(n: usize) -> f64 {
    2.0 * (n as f64 + 3.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateParameters {
    pub a: f64,
    pub gamma: f64,
    pub beta0: f64,
    pub n: usize,
    pub kappa: f64,
    pub lambda: f64,
    /// min(gamma/2 - a kappa, 1 - Lambda beta0)
    pub eta: f64,
    pub valid: bool,
    /// Violated hypotheses, empty when `valid`.
    pub violations: Vec<String>,
}

/// Rate exponent eta with validity flags. `kappa = None` uses 2(n+3).
pub fn rate_eta(a: f64, gamma: f64, beta0: f64, n: usize, lambda: f64, kappa: Option<f64>) -> RateParameters {
    let kappa = kappa.unwrap_or_else(|| default_kappa(n));
    let mut violations = Vec::new();
    if !(gamma > 0.0 && gamma <= 1.0) {
        violations.push(format!("gamma = {gamma} not in (0, 1]"));
    }
    if !(a >= 0.0) {
        violations.push(format!("a = {a} is negative"));
    }
    if !(beta0 >= 0.0) {
        violations.push(format!("beta0 = {beta0} is negative"));
    }
    if !(gamma > 2.0 * a * kappa) {
        violations.push(format!("gamma = {gamma} <= 2 a kappa = {}", 2.0 * a * kappa));
    }
    if !(beta0 * lambda < 1.0) {
        violations.push(format!("beta0 = {beta0} >= 1/Lambda = {}", 1.0 / lambda));
    }
    let eta = (0.5 * gamma - a * kappa).min(1.0 - lambda * beta0);
    RateParameters {
        a,
        gamma,
        beta0,
        n,
        kappa,
        lambda,
        eta,
        valid: violations.is_empty(),
        violations,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "regime")]
pub enum Regime {
    /// mu_t -> U with |(mu_t - U)(f)| = O(t^{-exponent}) up to logs.
    UniformLimitWithRate { exponent: f64 },
    /// mu_t -> U without a useful polynomial rate (threshold case).
    UniformLimit,
    /// mu_t does not converge to U.
    Concentration,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::UniformLimitWithRate { .. } => "uniform_limit_with_rate",
            Regime::UniformLimit => "uniform_limit",
            Regime::Concentration => "concentration",
        }
    }

    pub fn exponent(&self) -> f64 {
        match self {
            Regime::UniformLimitWithRate { exponent } => *exponent,
            _ => 0.0,
        }
    }
}

/// Classifies the constant schedule beta = b against the threshold -(n+1).
pub fn classify_regime(b: f64, n: usize) -> Regime {
    let threshold = -((n + 1) as f64);
    if b > threshold {
        Regime::UniformLimitWithRate {
            exponent: 0.5f64.min(1.0 + b / (n + 1) as f64),
        }
    } else if b == threshold {
        Regime::UniformLimit
    } else {
        Regime::Concentration
    }
}
