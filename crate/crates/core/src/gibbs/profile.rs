//! The mean profile rho, the eigenvalue profile lambda and the constant
//! Lambda = max lambda for the Gibbs family `Pi(m) ∝ exp(-m . x)` on S^n.
//!
//! rho(r) = |Pi(m)(v)| for |m| = r satisfies the Riccati equation
//! `rho' = 1 - rho (n / r + rho)` with `rho(r) = r / (n+1) + O(r^3)` at 0.
//! It is computed two ways: quadrature of the partition integrals, and
//! integration of the Riccati equation from a series start.

use serde::{Deserialize, Serialize};

use super::ode::{self, DenseSolution, Tolerances};
use super::optimize;
use super::quadrature;
use crate::error::{Error, Result};

/// Below this radius rho is taken from its series expansion.
pub const SERIES_RADIUS: f64 = 1e-3;

/// Leading coefficients of `rho(r) = r/(n+1) - c3 r^3 + O(r^5)`.
fn series_coefficients(n: usize) -> (f64, f64) {
    let np1 = (n + 1) as f64;
    (1.0 / np1, 1.0 / (np1 * np1 * (n as f64 + 3.0)))
}

/// Right-hand side of the Riccati equation for rho.
#[inline]
pub fn rho_prime(r: f64, rho: f64, n: usize) -> f64 {
    if r == 0.0 {
        return 1.0 / (n + 1) as f64;
    }
    1.0 - rho * (n as f64 / r + rho)
}

/// Anything that can evaluate rho for a fixed sphere dimension.
pub trait RhoEvaluator {
    fn n(&self) -> usize;
    fn rho(&self, r: f64) -> f64;
}

/// rho by quadrature, evaluated on demand.
#[derive(Debug, Clone, Copy)]
pub struct QuadratureRho {
    pub n: usize,
}

impl RhoEvaluator for QuadratureRho {
    fn n(&self) -> usize {
        self.n
    }

    fn rho(&self, r: f64) -> f64 {
        quadrature::rho_quadrature(r, self.n)
    }
}

/// Dense solution of the Riccati equation on `[0, r_max]`.
#[derive(Debug, Clone)]
pub struct RhoOde {
    n: usize,
    solution: DenseSolution,
}

impl RhoOde {
    pub fn r_max(&self) -> f64 {
        self.solution.x_end()
    }

    pub fn n_steps(&self) -> usize {
        self.solution.n_steps()
    }

    /// rho on `[0, r_max]`; `None` beyond the integrated range.
    pub fn try_rho(&self, r: f64) -> Option<f64> {
        if r < 0.0 {
            return None;
        }
        if r < SERIES_RADIUS {
            let (c1, c3) = series_coefficients(self.n);
            return Some(r * (c1 - c3 * r * r));
        }
        // absorb rounding in grids that end exactly at r_max
        let end = self.r_max();
        if r > end && r <= end * (1.0 + 1e-12) {
            return self.solution.eval(end);
        }
        self.solution.eval(r)
    }
}

impl RhoEvaluator for RhoOde {
    fn n(&self) -> usize {
        self.n
    }

    /// Panics outside `[0, r_max]`.
    fn rho(&self, r: f64) -> f64 {
        self.try_rho(r)
            .unwrap_or_else(|| panic!("r = {r} outside the integrated range [0, {}]", self.r_max()))
    }
}

/// Integrates the Riccati equation for rho on `[0, r_max]`.
pub fn rho_ode(r_max: f64, n: usize) -> Result<RhoOde> {
    if !(r_max > 0.0 && r_max.is_finite()) {
        return Err(Error::InvalidArgument(format!("r_max must be positive, got {r_max}")));
    }
    if n < 1 {
        return Err(Error::InvalidArgument("sphere dimension must be at least 1".into()));
    }
    let (c1, c3) = series_coefficients(n);
    let r0 = SERIES_RADIUS;
    let rho0 = r0 * (c1 - c3 * r0 * r0);
    let end = r_max.max(r0 * 2.0);
    let tol = Tolerances {
        h_init: 1e-2 * r0 / n as f64,
        ..Tolerances::default()
    };
    let solution = ode::dopri5(|r, y| rho_prime(r, y, n), r0, rho0, end, tol)?;
    Ok(RhoOde { n, solution })
}

/// `lambda(r) = 2 rho(r)/r - rho'(r)` with rho' from the Riccati equation
/// and `lambda(0) = 1/(n+1)`.
pub fn lambda_profile<E: RhoEvaluator + ?Sized>(r: f64, rho_eval: &E) -> f64 {
    let n = rho_eval.n();
    let (c1, c3) = series_coefficients(n);
    if r == 0.0 {
        return c1;
    }
    if r < SERIES_RADIUS {
        // (n+2) rho/r - 1 + rho^2 expanded to second order
        return c1 + r * r * (c1 * c1 - (n as f64 + 2.0) * c3);
    }
    let rho = rho_eval.rho(r);
    2.0 * rho / r - rho_prime(r, rho, n)
}

/// `lambda'(r) = (n+2)(rho' - rho/r)/r + 2 rho rho'`.
pub fn lambda_derivative<E: RhoEvaluator + ?Sized>(r: f64, rho_eval: &E) -> f64 {
    let n = rho_eval.n();
    let (c1, c3) = series_coefficients(n);
    if r < SERIES_RADIUS {
        return 2.0 * r * (c1 * c1 - (n as f64 + 2.0) * c3);
    }
    let rho = rho_eval.rho(r);
    let dr = rho_prime(r, rho, n);
    (n as f64 + 2.0) * (dr - rho / r) / r + 2.0 * rho * dr
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CapitalLambda {
    pub n: usize,
    /// max over r >= 0 of lambda(r)
    pub value: f64,
    /// argmax of lambda
    pub r_star: f64,
    /// Bracket actually searched.
    pub bracket: f64,
}

const SCAN_POINTS: usize = 400;

/// Maximizes lambda over `[0, 2(n+1)]`, widening the bracket once if the
/// maximum sits on its edge.
///
/// The scan must find exactly one interior local maximum; otherwise the
/// profile is reported as multimodal.
pub fn capital_lambda(n: usize) -> Result<CapitalLambda> {
    let mut bracket = 2.0 * (n + 1) as f64;
    for attempt in 0..2 {
        let rho = rho_ode(bracket, n)?;
        match maximize_lambda(&rho, bracket)? {
            Some((r_star, value)) => {
                let out = CapitalLambda {
                    n,
                    value,
                    r_star,
                    bracket,
                };
                let np1 = (n + 1) as f64;
                if !(value >= 1.0 / np1 && value < 2.0 / np1) {
                    return Err(Error::InvalidArgument(format!(
                        "Lambda = {value} outside [1/(n+1), 2/(n+1)) for n = {n}"
                    )));
                }
                return Ok(out);
            }
            None if attempt == 0 => bracket *= 2.0,
            None => break,
        }
    }
    Err(Error::BracketEdge { edge: bracket })
}

/// Returns `None` if the sampled maximum is on the right edge.
fn maximize_lambda(rho: &RhoOde, bracket: f64) -> Result<Option<(f64, f64)>> {
    let grid: Vec<f64> = (0..=SCAN_POINTS)
        .map(|i| (i as f64 * bracket / SCAN_POINTS as f64).min(bracket))
        .collect();
    let values: Vec<f64> = grid.iter().map(|&r| lambda_profile(r, rho)).collect();
    let peaks = optimize::local_maxima(&values);
    if peaks.len() > 1 {
        return Err(Error::Multimodal(peaks.iter().map(|&i| grid[i]).collect()));
    }
    let Some(&i) = peaks.first() else {
        return Ok(None);
    };
    let (lo, hi) = (grid[i - 1], grid[i + 1]);
    let coarse = optimize::brent_max(|r| lambda_profile(r, rho), lo, hi, 1e-10, 1e-12, 200);
    // polish on the sign change of lambda' around the Brent estimate
    let mut width = 1e-6 * (1.0 + coarse.x);
    let mut r_star = coarse.x;
    for _ in 0..20 {
        let a = (coarse.x - width).max(lo);
        let b = (coarse.x + width).min(hi);
        if let Some(root) = optimize::bisect_root(|r| lambda_derivative(r, rho), a, b, 1e-10) {
            r_star = root;
            break;
        }
        width *= 4.0;
    }
    Ok(Some((r_star, lambda_profile(r_star, rho))))
}

/// Evaluators bundled for one sphere dimension.
#[derive(Debug, Clone)]
pub struct GibbsProfile {
    pub n: usize,
    pub rho_ode: RhoOde,
    pub lambda_max: CapitalLambda,
}

impl GibbsProfile {
    pub fn new(n: usize, r_max: f64) -> Result<Self> {
        let lambda_max = capital_lambda(n)?;
        let rho_ode = rho_ode(r_max.max(lambda_max.bracket), n)?;
        Ok(Self { n, rho_ode, lambda_max })
    }

    pub fn rho(&self, r: f64) -> f64 {
        self.rho_ode.rho(r)
    }

    pub fn lambda(&self, r: f64) -> f64 {
        lambda_profile(r, &self.rho_ode)
    }
}

/// Covariance of v(x) = x under `Pi(m)`, assembled entrywise from one
/// dimensional quadratures along the axis of m.
///
/// In polar angle theta from the axis `mbar`, the law has density
/// `∝ exp(-|m| cos theta) sin^{n-1} theta`; the radial component has variance
/// `E cos^2 - (E cos)^2` and each of the n transverse directions carries
/// `E sin^2 / n`.
pub fn gibbs_covariance(m: &[f64]) -> Result<Vec<Vec<f64>>> {
    let dim = m.len();
    if dim < 2 {
        return Err(Error::InvalidArgument("m must have at least two components".into()));
    }
    let n = dim - 1;
    let r = crate::geometry::norm(m);
    if !(r > 0.0 && r.is_finite()) {
        return Err(Error::InvalidArgument(format!("m must be nonzero, |m| = {r}")));
    }
    let mbar: Vec<f64> = m.iter().map(|c| c / r).collect();
    let z = quadrature::gibbs_moment(r, n, |_| 1.0);
    let e_cos = quadrature::gibbs_moment(r, n, f64::cos);
    let e_cos2 = quadrature::gibbs_moment(r, n, |x| x.cos().powi(2));
    let e_sin2 = quadrature::gibbs_moment(r, n, |x| x.sin().powi(2));
    if !(z.converged && e_cos.converged && e_cos2.converged && e_sin2.converged) {
        return Err(Error::InvalidArgument(format!("quadrature did not converge at |m| = {r}")));
    }
    let mean_cos = e_cos.value / z.value;
    let radial = e_cos2.value / z.value - mean_cos * mean_cos;
    let transverse = e_sin2.value / z.value / n as f64;
    let cov = (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| {
                    let outer = mbar[i] * mbar[j];
                    let id = if i == j { 1.0 } else { 0.0 };
                    radial * outer + transverse * (id - outer)
                })
                .collect()
        })
        .collect();
    Ok(cov)
}

fn mat_vec(a: &[Vec<f64>], x: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(a) {
        *o = crate::geometry::dot(row, x);
    }
}

/// Dominant eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration with Rayleigh quotients.
pub fn power_iteration(a: &[Vec<f64>], tol: f64, max_iter: usize) -> f64 {
    let dim = a.len();
    // start away from any coordinate axis
    let mut x: Vec<f64> = (0..dim).map(|i| 1.0 + 0.173 * i as f64 + 0.031 * (i * i) as f64).collect();
    let nx = crate::geometry::norm(&x);
    x.iter_mut().for_each(|c| *c /= nx);
    let mut y = vec![0.0; dim];
    let mut estimate = f64::NAN;
    for _ in 0..max_iter {
        mat_vec(a, &x, &mut y);
        let rq = crate::geometry::dot(&x, &y);
        let ny = crate::geometry::norm(&y);
        if ny == 0.0 {
            return 0.0;
        }
        y.iter().zip(x.iter_mut()).for_each(|(yi, xi)| *xi = yi / ny);
        if (rq - estimate).abs() <= tol * rq.abs().max(1e-300) {
            return rq;
        }
        estimate = rq;
    }
    estimate
}

/// Largest eigenvalue of `Cov_{Pi(m)}(v)`, computed without the profile
/// formulas: quadrature moments, explicit matrix, power iteration.
pub fn cov_eigen_oracle(m: &[f64]) -> Result<f64> {
    let cov = gibbs_covariance(m)?;
    Ok(power_iteration(&cov, 1e-13, 100_000))
}

/// Smallest eigenvalue of `Cov_{Pi(m)}(v)` by power iteration on the shifted
/// matrix `s I - C` with `s` the largest eigenvalue.
pub fn cov_min_eigen(m: &[f64]) -> Result<f64> {
    let cov = gibbs_covariance(m)?;
    let top = power_iteration(&cov, 1e-13, 100_000);
    let shifted: Vec<Vec<f64>> = cov
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, c)| if i == j { top - c } else { -c })
                .collect()
        })
        .collect();
    Ok(top - power_iteration(&shifted, 1e-13, 100_000))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lambda_at_zero() {
        let rho = rho_ode(5.0, 3).unwrap();
        assert_eq!(lambda_profile(0.0, &rho), 0.25);
        assert!((lambda_profile(1e-4, &rho) - 0.25).abs() < 1e-8);
        assert_eq!(rho.rho(0.0), 0.0);
    }

    #[test]
    fn series_and_ode_join_smoothly() {
        for n in [1, 4, 10] {
            let rho = rho_ode(1.0, n).unwrap();
            let below = rho.rho(SERIES_RADIUS * (1.0 - 1e-9));
            let above = rho.rho(SERIES_RADIUS * (1.0 + 1e-9));
            assert!((below - above).abs() < 1e-12);
            let lb = lambda_profile(SERIES_RADIUS * 0.999, &rho);
            let la = lambda_profile(SERIES_RADIUS * 1.001, &rho);
            assert!((lb - la).abs() < 1e-8, "n = {n}: {lb} vs {la}");
        }
    }

    #[test]
    fn out_of_range_is_none() {
        let rho = rho_ode(2.0, 1).unwrap();
        assert!(rho.try_rho(2.5).is_none());
        assert!(rho.try_rho(-0.1).is_none());
        assert!(rho_ode(0.0, 1).is_err());
    }

    #[test]
    fn lambda_derivative_matches_finite_difference() {
        let rho = rho_ode(20.0, 2).unwrap();
        for r in [0.0005, 0.01, 0.5, 1.93, 7.0, 15.0] {
            let h = 1e-5;
            let fd = (lambda_profile(r + h, &rho) - lambda_profile((r - h).max(0.0), &rho)) / (r + h - (r - h).max(0.0));
            assert!((fd - lambda_derivative(r, &rho)).abs() < 1e-6, "r = {r}");
        }
    }

    #[test]
    fn n2_closed_form() {
        // rho(r) = coth r - 1/r on S^2
        let rho = rho_ode(30.0, 2).unwrap();
        for r in [0.01f64, 0.3, 1.0, 4.0, 12.0, 29.0] {
            let exact = 1.0 / r.tanh() - 1.0 / r;
            assert!((rho.rho(r) - exact).abs() < 1e-9);
        }
    }

    #[test]
    fn capital_lambda_small_n() {
        let l = capital_lambda(1).unwrap();
        assert!((l.value - 0.548).abs() < 5e-4);
        assert!((l.r_star - 1.442).abs() < 5e-3);
        assert!(lambda_derivative(l.r_star, &rho_ode(4.0, 1).unwrap()).abs() < 1e-8);
    }

    #[test]
    fn covariance_spectrum() {
        // eigenvalues are rho' along m and rho/r across it
        let m = [0.6, -1.2, 0.4];
        let r = crate::geometry::norm(&m);
        let rho = quadrature::rho_quadrature(r, 2);
        let top = cov_eigen_oracle(&m).unwrap();
        let bottom = cov_min_eigen(&m).unwrap();
        assert!((top - rho / r).abs() < 1e-9);
        assert!((bottom - rho_prime(r, rho, 2)).abs() < 1e-9);
        assert!(gibbs_covariance(&[0.0, 0.0]).is_err());
    }
}
