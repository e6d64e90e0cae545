//! Interaction features, the empirical drift and the running occupation state.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, SpherePoint, TangentVector};

/// Feature map v : S^n -> R^N defining the kernel V(x, y) = v(x) . v(y).
///
/// Implementations must be normalized so that `sup |v| = 1` and centered
/// with respect to the uniform measure.
pub trait FeatureMap: Send + Sync {
    /// Feature dimension N.
    fn dim(&self) -> usize;

    /// Writes v(x) into `out` (length N).
    fn evaluate_into(&self, x: &[f64], out: &mut [f64]);

    /// Surface gradient of the i-th feature at x.
    fn gradient(&self, x: &SpherePoint, i: usize) -> Result<TangentVector>;

    fn sup_norm(&self) -> f64 {
        1.0
    }

    fn evaluate(&self, x: &SpherePoint) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.evaluate_into(x.coords(), &mut out);
        out
    }

    /// Writes `sum_i m_i grad v_i(x)` into `out`. The default goes through
    /// [`FeatureMap::gradient`]; implementations may override with a closed form.
    fn weighted_gradient_into(&self, x: &SpherePoint, m: &[f64], out: &mut [f64]) -> Result<()> {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, mi) in m.iter().enumerate() {
            if *mi == 0.0 {
                continue;
            }
            let g = self.gradient(x, i)?;
            out.iter_mut().zip(g.components()).for_each(|(o, gi)| *o += mi * gi);
        }
        Ok(())
    }
}

/// The coordinate embedding v(x) = x on S^n.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdentityFeatures {
    pub ambient_dim: usize,
}

impl IdentityFeatures {
    pub fn new(n: usize) -> Self {
        Self { ambient_dim: n + 1 }
    }
}

impl FeatureMap for IdentityFeatures {
    fn dim(&self) -> usize {
        self.ambient_dim
    }

    fn evaluate_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(x);
    }

    fn gradient(&self, x: &SpherePoint, i: usize) -> Result<TangentVector> {
        geometry::coordinate_surface_gradient(x, i)
    }

    fn weighted_gradient_into(&self, x: &SpherePoint, m: &[f64], out: &mut [f64]) -> Result<()> {
        if m.len() != x.ambient_dim() {
            return Err(Error::DimensionMismatch {
                expected: x.ambient_dim(),
                got: m.len(),
            });
        }
        out.copy_from_slice(m);
        geometry::project_in_place(x.coords(), out);
        Ok(())
    }
}

/// Largest |v(x)| over `samples` points drawn uniformly on S^n.
pub fn sampled_sup_norm<F: FeatureMap + ?Sized, R: Rng>(features: &F, n: usize, samples: usize, rng: &mut R) -> f64 {
    let mut out = vec![0.0; features.dim()];
    (0..samples)
        .map(|_| {
            let x = uniform_point(n, rng);
            features.evaluate_into(x.coords(), &mut out);
            geometry::norm(&out)
        })
        .fold(0.0, f64::max)
}

/// Monte Carlo mean and per-component standard error of v under the uniform law.
pub fn sampled_mean<F: FeatureMap + ?Sized, R: Rng>(
    features: &F,
    n: usize,
    samples: usize,
    rng: &mut R,
) -> (Vec<f64>, Vec<f64>) {
    let d = features.dim();
    let mut sum = vec![0.0; d];
    let mut sum_sq = vec![0.0; d];
    let mut out = vec![0.0; d];
    for _ in 0..samples {
        let x = uniform_point(n, rng);
        features.evaluate_into(x.coords(), &mut out);
        for k in 0..d {
            sum[k] += out[k];
            sum_sq[k] += out[k] * out[k];
        }
    }
    let m = samples as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / m).collect();
    let stderr = sum_sq
        .iter()
        .zip(&mean)
        .map(|(s2, mu)| ((s2 / m - mu * mu).max(0.0) / m).sqrt())
        .collect();
    (mean, stderr)
}

/// A uniformly distributed point on S^n (normalized Gaussian).
pub fn uniform_point<R: Rng>(n: usize, rng: &mut R) -> SpherePoint {
    loop {
        let v: Vec<f64> = (0..=n).map(|_| rng.sample(StandardNormal)).collect();
        if geometry::norm(&v) > 1e-12 {
            return SpherePoint::normalized(v).expect("nonzero gaussian vector");
        }
    }
}

type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// A scalar test function f whose running mean mu_t(f) is tracked.
#[derive(Clone)]
pub struct TestFunction {
    label: String,
    uniform_mean: f64,
    eval: ScalarFn,
}

impl TestFunction {
    pub fn new<F>(label: impl Into<String>, uniform_mean: f64, eval: F) -> Self
    where
        F: Fn(&[f64]) -> f64 + Send + Sync + 'static,
    {
        Self {
            label: label.into(),
            uniform_mean,
            eval: Arc::new(eval),
        }
    }

    /// x -> x_i, labelled `x{i}`. Its uniform mean is 0.
    pub fn coordinate(i: usize) -> Self {
        Self::new(format!("x{i}"), 0.0, move |x| x[i])
    }

    /// The default registry: every coordinate function.
    pub fn coordinates(n: usize) -> Vec<Self> {
        (0..=n).map(Self::coordinate).collect()
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// U(f), the integral of f against the uniform measure.
    pub fn uniform_mean(&self) -> f64 {
        self.uniform_mean
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        (self.eval)(x)
    }
}

impl fmt::Debug for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TestFunction")
            .field("label", &self.label)
            .field("uniform_mean", &self.uniform_mean)
            .finish()
    }
}

/// Running occupation averages of a single trajectory.
///
/// `m` is mu_t(v) and `test_means[j]` is mu_t(f_j). The interval
/// `[0, t_init]` is accounted as mass whose v-average and test averages are 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationState {
    pub t: f64,
    pub m: Vec<f64>,
    pub test_means: Vec<f64>,
    pub t_init: f64,
}

impl OccupationState {
    pub fn new(t_init: f64, feature_dim: usize, n_tests: usize) -> Result<Self> {
        if !(t_init > 0.0 && t_init.is_finite()) {
            return Err(Error::InvalidArgument(format!("t_init must be positive, got {t_init}")));
        }
        Ok(Self {
            t: t_init,
            m: vec![0.0; feature_dim],
            test_means: vec![0.0; n_tests],
            t_init,
        })
    }

    pub fn m_norm(&self) -> f64 {
        geometry::norm(&self.m)
    }

    /// Advances the averages by a step of length `h` ending at `x_new`.
    pub fn update<F: FeatureMap + ?Sized>(
        &mut self,
        x_new: &SpherePoint,
        h: f64,
        features: &F,
        tests: &[TestFunction],
        scratch: &mut [f64],
    ) {
        let t_next = self.t + h;
        let w_old = self.t / t_next;
        let w_new = h / t_next;
        features.evaluate_into(x_new.coords(), scratch);
        self.m
            .iter_mut()
            .zip(scratch.iter())
            .for_each(|(m, v)| *m = w_old * *m + w_new * v);
        self.test_means
            .iter_mut()
            .zip(tests)
            .for_each(|(mu, f)| *mu = w_old * *mu + w_new * f.eval(x_new.coords()));
        self.t = t_next;
    }
}

/// Convex-combination update of the occupation state after a step of size `h`.
pub fn update_occupation<F: FeatureMap + ?Sized>(
    state: &OccupationState,
    x_new: &SpherePoint,
    h: f64,
    features: &F,
    tests: &[TestFunction],
) -> Result<OccupationState> {
    if !(h > 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be positive, got {h}")));
    }
    if state.m.len() != features.dim() {
        return Err(Error::DimensionMismatch {
            expected: state.m.len(),
            got: features.dim(),
        });
    }
    let mut next = state.clone();
    let mut scratch = vec![0.0; features.dim()];
    next.update(x_new, h, features, tests, &mut scratch);
    Ok(next)
}

/// Self-interaction drift `-beta_t * grad V_{mu_t}(x)`.
pub fn drift<F: FeatureMap + ?Sized>(
    state: &OccupationState,
    x: &SpherePoint,
    beta_t: f64,
    features: &F,
) -> Result<TangentVector> {
    let mut g = vec![0.0; x.ambient_dim()];
    features.weighted_gradient_into(x, &state.m, &mut g)?;
    let v = geometry::project_to_tangent(x, &g)?;
    Ok(v.scaled(-beta_t))
}
