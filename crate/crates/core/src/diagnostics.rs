//! Verdicts on trajectory records: empirical decay exponents,
//! pseudotrajectory residuals against the flow `x' = -x + U(f)`, and
//! uniformity tests of the terminal law.
//!
//! A finite-window regression cannot certify a limsup. Rate checks are
//! therefore one-sided with slack and the raw slope is always reported.

use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::geometry;
use crate::sim::{Checkpoint, TrajectoryRecord};

type Accessor = Box<dyn Fn(&Checkpoint) -> f64>;

/// Deviations below this are dropped before taking logarithms.
pub const LOG_GUARD: f64 = 1e-14;

pub const MIN_RATE_POINTS: usize = 8;
pub const MIN_UNIFORMITY_RECORDS: usize = 1000;
pub const CIRCLE_BINS: usize = 36;

/// Largest checkpoint ratio accepted by [`shadowing_residual`].
pub fn max_shadowing_ratio() -> f64 {
    10f64.powf(0.125) * (1.0 + 1e-9)
}

/// Which scalar observable of a record to analyse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Observable {
    /// A registered test mean mu_t(f), by label (`x0`, `x1`, ...).
    Test(String),
    /// Component i of the feature mean m_t.
    FeatureComponent(usize),
    /// |m_t|.
    FeatureNorm,
}

impl Observable {
    /// Parses `x<i>` (test mean), `m<i>` (feature component) or `|m|`.
    pub fn parse(label: &str) -> Result<Self> {
        if label == "|m|" || label == "m_norm" {
            return Ok(Observable::FeatureNorm);
        }
        if let Some(i) = label.strip_prefix('m').and_then(|s| s.parse().ok()) {
            return Ok(Observable::FeatureComponent(i));
        }
        Ok(Observable::Test(label.to_string()))
    }

    pub fn label(&self) -> String {
        match self {
            Observable::Test(l) => l.clone(),
            Observable::FeatureComponent(i) => format!("m{i}"),
            Observable::FeatureNorm => "|m|".into(),
        }
    }

    /// U(f) for the observable. Coordinate functions and feature components
    /// integrate to 0; |m| converges to 0 in the uniform regimes.
    pub fn uniform_value(&self) -> f64 {
        0.0
    }

    fn accessor(&self, record: &TrajectoryRecord) -> Result<Accessor> {
        match self {
            Observable::Test(label) => {
                let idx = record
                    .test_index(label)
                    .ok_or_else(|| Error::UnknownTestFunction(label.clone()))?;
                Ok(Box::new(move |c| c.test_means[idx]))
            }
            Observable::FeatureComponent(i) => {
                let i = *i;
                if i >= record.terminal_state.m.len() {
                    return Err(Error::UnknownTestFunction(format!("m{i}")));
                }
                Ok(Box::new(move |c| c.m[i]))
            }
            Observable::FeatureNorm => Ok(Box::new(|c| geometry::norm(&c.m))),
        }
    }

    /// The (t, value) series of this observable.
    pub fn series(&self, record: &TrajectoryRecord) -> Result<Vec<(f64, f64)>> {
        let get = self.accessor(record)?;
        Ok(record.checkpoints.iter().map(|c| (c.t, get(c))).collect())
    }
}

/// Ordinary least squares fit `y = intercept + slope x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub points: usize,
}

pub fn ols(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    let k = x.len();
    if k < 3 || k != y.len() {
        return Err(Error::TooFewPoints { needed: 3, have: k.min(y.len()) });
    }
    let kf = k as f64;
    let mx = x.iter().sum::<f64>() / kf;
    let my = y.iter().sum::<f64>() / kf;
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidArgument("regressor has zero variance".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| {
            let e = b - intercept - slope * a;
            e * e
        })
        .sum();
    let slope_stderr = (rss / (kf - 2.0) / sxx).sqrt();
    Ok(LinearFit {
        slope,
        intercept,
        slope_stderr,
        points: k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub label: String,
    /// Slope of log|mu_t(f) - U(f)| against log t.
    pub slope: f64,
    pub intercept: f64,
    pub stderr: f64,
    pub window: (f64, f64),
    pub points_used: usize,
    /// Points dropped by the log guard.
    pub points_dropped: usize,
}

/// Log-log regression of `|mu_t(f) - U(f)|` against t over checkpoints in
/// `window`.
pub fn estimate_rate(record: &TrajectoryRecord, observable: &Observable, window: (f64, f64)) -> Result<RateEstimate> {
    let (lo, hi) = window;
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!("empty window [{lo}, {hi}]")));
    }
    let series = observable.series(record)?;
    let u = observable.uniform_value();
    let in_window: Vec<(f64, f64)> = series
        .into_iter()
        .filter(|(t, _)| *t >= lo * (1.0 - 1e-12) && *t <= hi * (1.0 + 1e-12))
        .collect();
    let total = in_window.len();
    if total < MIN_RATE_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_RATE_POINTS,
            have: total,
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = in_window
        .iter()
        .filter(|(_, v)| (v - u).abs() >= LOG_GUARD)
        .map(|(t, v)| (t.ln(), (v - u).abs().ln()))
        .unzip();
    if xs.len() < MIN_RATE_POINTS {
        return Err(Error::TooFewPoints {
            needed: MIN_RATE_POINTS,
            have: xs.len(),
        });
    }
    let fit = ols(&xs, &ys)?;
    Ok(RateEstimate {
        label: observable.label(),
        slope: fit.slope,
        intercept: fit.intercept,
        stderr: fit.slope_stderr,
        window,
        points_used: xs.len(),
        points_dropped: total - xs.len(),
    })
}

/// Median of a sample; NaN for an empty slice.
pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

/// Per-seed slopes aggregated by their median.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleRate {
    pub label: String,
    pub median_slope: f64,
    pub slopes: Vec<f64>,
    pub failures: usize,
}

pub fn ensemble_rate(records: &[TrajectoryRecord], observable: &Observable, window: (f64, f64)) -> Result<EnsembleRate> {
    let mut slopes = Vec::with_capacity(records.len());
    let mut failures = 0;
    for r in records {
        match estimate_rate(r, observable, window) {
            Ok(e) => slopes.push(e.slope),
            Err(Error::TooFewPoints { .. }) => failures += 1,
            Err(e) => return Err(e),
        }
    }
    if slopes.is_empty() {
        return Err(Error::TooFewPoints { needed: 1, have: 0 });
    }
    Ok(EnsembleRate {
        label: observable.label(),
        median_slope: median(&slopes),
        slopes,
        failures,
    })
}

/// Explicit flow of `nu' = -nu + U(f)`.
#[inline]
pub fn flow(s: f64, x: f64, uniform_value: f64) -> f64 {
    (-s).exp() * x + (1.0 - (-s).exp()) * uniform_value
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShadowingReport {
    pub label: String,
    pub window: f64,
    /// Exponential-scale times tau = log t of the grid.
    pub tau: Vec<f64>,
    pub residual: Vec<f64>,
    /// Slope of log residual against tau.
    pub decay_exponent: f64,
    pub decay_stderr: f64,
}

/// For each checkpoint at exponential time tau, the largest deviation over
/// later checkpoints with `tau' - tau` in `[0, window]` between the record
/// and the flow started from the record's value at tau.
pub fn shadowing_residual(record: &TrajectoryRecord, observable: &Observable, window: f64) -> Result<ShadowingReport> {
    if !(window > 0.0) {
        return Err(Error::InvalidArgument(format!("window must be positive, got {window}")));
    }
    let series = observable.series(record)?;
    shadowing_from_series(&series, observable.uniform_value(), window, observable.label())
}

/// [`shadowing_residual`] on a raw (t, value) series.
pub fn shadowing_from_series(series: &[(f64, f64)], uniform_value: f64, window: f64, label: String) -> Result<ShadowingReport> {
    if series.len() < 3 {
        return Err(Error::TooFewPoints {
            needed: 3,
            have: series.len(),
        });
    }
    let max_ratio = max_shadowing_ratio();
    for w in series.windows(2) {
        let ratio = w[1].0 / w[0].0;
        // the final checkpoint sits at the horizon and may be closer
        if ratio > max_ratio {
            return Err(Error::GridTooCoarse { ratio, max: max_ratio });
        }
    }
    let tau: Vec<f64> = series.iter().map(|(t, _)| t.ln()).collect();
    let tau_end = *tau.last().unwrap();
    let mut out_tau = Vec::new();
    let mut residual = Vec::new();
    for (k, &tk) in tau.iter().enumerate() {
        if tk + window > tau_end + 1e-12 {
            break;
        }
        let x0 = series[k].1;
        let r = series[k..]
            .iter()
            .zip(&tau[k..])
            .take_while(|(_, &tj)| tj - tk <= window + 1e-12)
            .map(|((_, v), &tj)| (v - flow(tj - tk, x0, uniform_value)).abs())
            .fold(0.0, f64::max);
        out_tau.push(tk);
        residual.push(r);
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = out_tau
        .iter()
        .zip(&residual)
        .filter(|(_, r)| **r >= LOG_GUARD)
        .map(|(t, r)| (*t, r.ln()))
        .unzip();
    let (decay_exponent, decay_stderr) = match ols(&xs, &ys) {
        Ok(fit) => (fit.slope, fit.slope_stderr),
        Err(_) => (f64::NAN, f64::NAN),
    };
    Ok(ShadowingReport {
        label,
        window,
        tau: out_tau,
        residual,
        decay_exponent,
        decay_stderr,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    /// `chi_square` on S^1, `ks_bonferroni` on higher spheres.
    pub test: String,
    pub statistic: f64,
    pub p_value: f64,
    pub samples: usize,
}

/// Position of every record at the checkpoint closest to `t_snapshot`.
pub fn snapshot_positions(records: &[TrajectoryRecord], t_snapshot: f64) -> Result<Vec<Vec<f64>>> {
    records
        .iter()
        .map(|r| {
            let end = r.checkpoints.last().map_or(f64::NAN, |c| c.t);
            if !(t_snapshot <= end * (1.0 + 1e-12)) {
                return Err(Error::InvalidArgument(format!(
                    "snapshot time {t_snapshot} beyond record horizon {end}"
                )));
            }
            let c = r
                .checkpoints
                .iter()
                .min_by(|a, b| (a.t - t_snapshot).abs().total_cmp(&(b.t - t_snapshot).abs()))
                .expect("nonempty record");
            Ok(c.x.clone())
        })
        .collect()
}

/// Tests the terminal law of an ensemble at `t_snapshot` against the
/// uniform distribution.
pub fn uniformity_test(records: &[TrajectoryRecord], t_snapshot: f64) -> Result<UniformityReport> {
    if records.len() < MIN_UNIFORMITY_RECORDS {
        return Err(Error::TooFewPoints {
            needed: MIN_UNIFORMITY_RECORDS,
            have: records.len(),
        });
    }
    let points = snapshot_positions(records, t_snapshot)?;
    uniformity_of_points(&points)
}

/// Uniformity test on raw points of S^n (any count >= 2).
pub fn uniformity_of_points(points: &[Vec<f64>]) -> Result<UniformityReport> {
    let Some(first) = points.first() else {
        return Err(Error::TooFewPoints { needed: 2, have: 0 });
    };
    let n = first.len() - 1;
    if n == 1 {
        let angles: Vec<f64> = points.iter().map(|x| x[1].atan2(x[0])).collect();
        let (statistic, p_value) = circle_chi_square(&angles, CIRCLE_BINS);
        return Ok(UniformityReport {
            test: "chi_square".into(),
            statistic,
            p_value,
            samples: points.len(),
        });
    }
    let marginal = SphereMarginal::new(n);
    let mut worst_p: f64 = 1.0;
    let mut worst_d: f64 = 0.0;
    for i in 0..=n {
        let mut u: Vec<f64> = points.iter().map(|x| x[i]).collect();
        let (d, p) = ks_test(&mut u, |x| marginal.cdf(x));
        if p < worst_p {
            worst_p = p;
            worst_d = d;
        }
    }
    Ok(UniformityReport {
        test: "ks_bonferroni".into(),
        statistic: worst_d,
        p_value: (worst_p * (n + 1) as f64).min(1.0),
        samples: points.len(),
    })
}

/// Chi-square statistic and p-value of angles in `(-pi, pi]` against the
/// uniform law over `bins` equal arcs.
pub fn circle_chi_square(angles: &[f64], bins: usize) -> (f64, f64) {
    use std::f64::consts::PI;
    let mut counts = vec![0usize; bins];
    for &a in angles {
        let u = (a + PI) / (2.0 * PI);
        let k = ((u * bins as f64).floor() as usize).min(bins - 1);
        counts[k] += 1;
    }
    let expected = angles.len() as f64 / bins as f64;
    let stat: f64 = counts
        .iter()
        .map(|&c| {
            let d = c as f64 - expected;
            d * d / expected
        })
        .sum();
    let dist = ChiSquared::new((bins - 1) as f64).expect("positive degrees of freedom");
    (stat, dist.sf(stat))
}

/// Marginal law of one coordinate of a uniform point on S^n, n >= 2:
/// `(x_i + 1)/2 ~ Beta(n/2, n/2)`.
pub struct SphereMarginal {
    beta: Beta,
}

impl SphereMarginal {
    pub fn new(n: usize) -> Self {
        let a = n as f64 / 2.0;
        Self {
            beta: Beta::new(a, a).expect("positive shape"),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        self.beta.cdf(((x + 1.0) / 2.0).clamp(0.0, 1.0))
    }
}

/// One-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
/// Sorts `sample` in place.
pub fn ks_test<F: Fn(f64) -> f64>(sample: &mut [f64], cdf: F) -> (f64, f64) {
    sample.sort_by(f64::total_cmp);
    let k = sample.len() as f64;
    let d = sample
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / k).max((i + 1) as f64 / k - f)
        })
        .fold(0.0, f64::max);
    let sk = k.sqrt();
    (d, kolmogorov_sf((sk + 0.12 + 0.11 / sk) * d))
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    let mut sign = 1.0;
    for j in 1..=200 {
        let term = sign * (-2.0 * (j * j) as f64 * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 * sum.abs().max(1e-300) {
            break;
        }
        sign = -sign;
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Median |m_t| over records at the checkpoint closest to `t`.
pub fn median_feature_norm(records: &[TrajectoryRecord], t: f64) -> f64 {
    let norms: Vec<f64> = records
        .iter()
        .filter_map(|r| {
            r.checkpoints
                .iter()
                .min_by(|a, b| (a.t - t).abs().total_cmp(&(b.t - t).abs()))
                .map(|c| geometry::norm(&c.m))
        })
        .collect();
    median(&norms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interaction::{uniform_point, OccupationState};
    use crate::schedule::BetaSchedule;
    use crate::sim::SimConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// A record whose test mean `x0` follows `value(t)` on the default grid.
    fn synthetic(value: impl Fn(f64) -> f64, t_end: f64) -> TrajectoryRecord {
        let config = SimConfig::new(1, BetaSchedule::constant(0.0), t_end, 0);
        let checkpoints = config
            .checkpoint_times()
            .into_iter()
            .map(|t| Checkpoint {
                t,
                m: vec![value(t), 0.0],
                test_means: vec![value(t), 0.0],
                x: vec![1.0, 0.0],
            })
            .collect();
        TrajectoryRecord {
            config,
            test_labels: vec!["x0".into(), "x1".into()],
            checkpoints,
            terminal_state: OccupationState::new(1.0, 2, 2).unwrap(),
            terminal_x: vec![1.0, 0.0],
            failure: None,
        }
    }

    #[test]
    fn exact_power_law() {
        let rec = synthetic(|t| t.powf(-0.5), 1e5);
        let e = estimate_rate(&rec, &Observable::Test("x0".into()), (10.0, 1e5)).unwrap();
        assert!((e.slope + 0.5).abs() < 1e-10);
        assert_eq!(e.points_dropped, 0);
        let c = estimate_rate(&synthetic(|_| 0.3, 1e5), &Observable::Test("x0".into()), (10.0, 1e5)).unwrap();
        assert!(c.slope.abs() < 1e-12);
    }

    #[test]
    fn slope_is_scale_invariant() {
        let f = |t: f64| t.powf(-0.37) * (1.0 + 0.2 * t.ln().sin());
        let a = estimate_rate(&synthetic(f, 1e4), &Observable::Test("x0".into()), (1.0, 1e4)).unwrap();
        let b = estimate_rate(&synthetic(move |t| 7.5 * f(t), 1e4), &Observable::Test("x0".into()), (1.0, 1e4)).unwrap();
        assert!((a.slope - b.slope).abs() < 1e-12);
        assert!((b.intercept - a.intercept - 7.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn guard_and_errors() {
        let rec = synthetic(|t| if t < 100.0 { 0.0 } else { 1.0 / t }, 1e5);
        let e = estimate_rate(&rec, &Observable::Test("x0".into()), (1.0, 1e5)).unwrap();
        assert!(e.points_dropped > 0);
        assert!((e.slope + 1.0).abs() < 1e-10);
        assert!(matches!(
            estimate_rate(&rec, &Observable::Test("x0".into()), (1e4, 5e4)),
            Err(Error::TooFewPoints { .. })
        ));
        assert!(matches!(
            estimate_rate(&rec, &Observable::Test("cos".into()), (1.0, 1e5)),
            Err(Error::UnknownTestFunction(_))
        ));
    }

    #[test]
    fn observables() {
        assert_eq!(Observable::parse("|m|").unwrap(), Observable::FeatureNorm);
        assert_eq!(Observable::parse("m1").unwrap(), Observable::FeatureComponent(1));
        assert_eq!(Observable::parse("x0").unwrap(), Observable::Test("x0".into()));
        let rec = synthetic(|t| -1.0 / t, 100.0);
        let s = Observable::FeatureNorm.series(&rec).unwrap();
        assert!((s[3].1 - 1.0 / s[3].0).abs() < 1e-15);
    }

    #[test]
    fn flow_solution_has_zero_residual() {
        let x0 = 0.8;
        let rec = synthetic(|t| flow(t.ln(), x0, 0.0), 1e4);
        let rep = shadowing_residual(&rec, &Observable::Test("x0".into()), 1.0).unwrap();
        assert!(rep.residual.iter().all(|r| *r < 1e-14));
    }

    #[test]
    fn coarse_grid_rejected() {
        let series: Vec<(f64, f64)> = (0..10).map(|k| (10f64.powi(k), 0.1)).collect();
        assert!(matches!(
            shadowing_from_series(&series, 0.0, 1.0, "f".into()),
            Err(Error::GridTooCoarse { .. })
        ));
    }

    #[test]
    fn chi_square_detects_concentration() {
        let angles: Vec<f64> = (0..1000).map(|i| 0.1 * (i as f64 / 1000.0)).collect();
        let (_, p) = circle_chi_square(&angles, 36);
        assert!(p < 1e-100);
    }

    #[test]
    fn kolmogorov_tail_values() {
        // reference values of the Kolmogorov survival function
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 5e-4);
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 2e-4);
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn sphere_marginal_cdf() {
        // S^2: uniform on [-1, 1]
        let m = SphereMarginal::new(2);
        for x in [-0.9, -0.2, 0.0, 0.5] {
            assert!((m.cdf(x) - (x + 1.0) / 2.0).abs() < 1e-12);
        }
        // S^3: density (2/pi) sqrt(1 - u^2)
        let m = SphereMarginal::new(3);
        let x: f64 = 0.3;
        let exact = 0.5 + (x * (1.0 - x * x).sqrt() + x.asin()) / std::f64::consts::PI;
        assert!((m.cdf(x) - exact).abs() < 1e-12);
    }

    #[test]
    fn uniform_points_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for n in [1, 2, 3] {
            let pts: Vec<Vec<f64>> = (0..2000).map(|_| uniform_point(n, &mut rng).into_coords()).collect();
            let rep = uniformity_of_points(&pts).unwrap();
            assert!(rep.p_value > 1e-3, "n = {n}: {rep:?}");
        }
    }

    #[test]
    fn too_few_records() {
        let rec = synthetic(|_| 0.0, 10.0);
        assert!(matches!(
            uniformity_test(&[rec], 10.0),
            Err(Error::TooFewPoints { needed: 1000, .. })
        ));
    }

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
