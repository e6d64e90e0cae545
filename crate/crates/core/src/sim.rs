//! Time stepping of the self-interacting diffusion
//! `dX = sqrt(2) dW(X) - beta(t) grad V_{mu_t}(X) dt` on S^n.
//!
//! Each step draws an isotropic Gaussian in R^{n+1}, adds the drift, projects
//! onto the tangent space and follows the geodesic. Projection of isotropic
//! noise is a standard Gaussian in the tangent space, so together with the
//! exponential map this is a weak order-1 scheme for spherical Brownian motion
//! with generator `Laplacian` (not half of it). The occupation averages are
//! updated with the post-step point.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{self, SpherePoint};
use crate::interaction::{self, FeatureMap, IdentityFeatures, OccupationState, TestFunction};
use crate::schedule::BetaSchedule;

pub const DEFAULT_H0: f64 = 1e-2;
pub const DEFAULT_T_INIT: f64 = 1.0;
pub const DEFAULT_DOUBLING_AFTER: f64 = 1e3;

/// 10^(1/8), the default ratio between consecutive checkpoints.
pub fn default_checkpoint_ratio() -> f64 {
    10f64.powf(0.125)
}

/// Source of standard normal vectors for [`em_step`].
pub trait GaussianSource {
    fn fill_standard_normal(&mut self, out: &mut [f64]);
}

impl<R: RngCore> GaussianSource for R {
    fn fill_standard_normal(&mut self, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = self.sample(StandardNormal));
    }
}

/// Always returns the zero vector: turns the scheme into a deterministic
/// geodesic drift step.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoNoise;

impl GaussianSource for NoNoise {
    fn fill_standard_normal(&mut self, out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum StepMode {
    #[default]
    Fixed,
    /// Step doubles each time t crosses `after`, `10 after`, `100 after`, ...
    Doubling { after: f64 },
}

impl StepMode {
    pub fn step_size(&self, h0: f64, t: f64) -> f64 {
        match *self {
            StepMode::Fixed => h0,
            StepMode::Doubling { after } => {
                if t < after {
                    h0
                } else {
                    let k = (t / after).log10().floor() as i32 + 1;
                    h0 * 2f64.powi(k)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StartSpec {
    #[default]
    Uniform,
    Fixed(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub schedule: BetaSchedule,
    pub h0: f64,
    pub horizon: f64,
    pub t_init: f64,
    pub step_mode: StepMode,
    pub seed: u64,
    pub checkpoint_ratio: f64,
    pub start: StartSpec,
}

impl SimConfig {
    pub fn new(n: usize, schedule: BetaSchedule, horizon: f64, seed: u64) -> Self {
        Self {
            n,
            schedule,
            h0: DEFAULT_H0,
            horizon,
            t_init: DEFAULT_T_INIT,
            step_mode: StepMode::Fixed,
            seed,
            checkpoint_ratio: default_checkpoint_ratio(),
            start: StartSpec::Uniform,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n < 1 {
            return Err(Error::Config("sphere dimension n must be at least 1".into()));
        }
        self.schedule.validate()?;
        if !(self.h0 > 0.0 && self.h0.is_finite()) {
            return Err(Error::Config(format!("h0 = {} violates the precondition h0 > 0", self.h0)));
        }
        if !(self.t_init > 0.0 && self.t_init.is_finite()) {
            return Err(Error::Config(format!("t_init = {} must be positive", self.t_init)));
        }
        if !(self.horizon >= self.t_init && self.horizon.is_finite()) {
            return Err(Error::Config(format!(
                "horizon T = {} violates the precondition T >= t_init = {}",
                self.horizon, self.t_init
            )));
        }
        if !(self.checkpoint_ratio > 1.0 && self.checkpoint_ratio.is_finite()) {
            return Err(Error::Config(format!(
                "checkpoint ratio {} must exceed 1 for a strictly increasing grid",
                self.checkpoint_ratio
            )));
        }
        if let StepMode::Doubling { after } = self.step_mode {
            if !(after > 0.0 && after.is_finite()) {
                return Err(Error::Config(format!("doubling onset {after} must be positive")));
            }
        }
        if let StartSpec::Fixed(x) = &self.start {
            if x.len() != self.n + 1 {
                return Err(Error::Config(format!(
                    "start point has {} coordinates, expected n + 1 = {}",
                    x.len(),
                    self.n + 1
                )));
            }
            SpherePoint::new(x.clone()).map_err(|e| Error::Config(format!("start point: {e}")))?;
        }
        Ok(())
    }

    /// Geometric checkpoint grid from `t_init` to the horizon, both included.
    pub fn checkpoint_times(&self) -> Vec<f64> {
        let mut times = vec![self.t_init];
        let mut k = 1;
        loop {
            let t = self.t_init * self.checkpoint_ratio.powi(k);
            // skip a grid point that would sit within rounding of the horizon
            if t >= self.horizon * (1.0 - 1e-12) {
                break;
            }
            times.push(t);
            k += 1;
        }
        if self.horizon > self.t_init {
            times.push(self.horizon);
        }
        times
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: f64,
    pub m: Vec<f64>,
    pub test_means: Vec<f64>,
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub config: SimConfig,
    pub test_labels: Vec<String>,
    pub checkpoints: Vec<Checkpoint>,
    pub terminal_state: OccupationState,
    pub terminal_x: Vec<f64>,
    /// Set when the trajectory was aborted; checkpoints then stop early.
    pub failure: Option<String>,
}

impl TrajectoryRecord {
    pub fn seed(&self) -> u64 {
        self.config.seed
    }

    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    pub fn test_index(&self, label: &str) -> Option<usize> {
        self.test_labels.iter().position(|l| l == label)
    }
}

/// Reusable buffers for the inner loop.
struct Stepper {
    noise: Vec<f64>,
    drift: Vec<f64>,
}

impl Stepper {
    fn new(dim: usize) -> Self {
        Self {
            noise: vec![0.0; dim],
            drift: vec![0.0; dim],
        }
    }

    fn step<F, G>(
        &mut self,
        x: &mut SpherePoint,
        state: &OccupationState,
        beta_t: f64,
        features: &F,
        h: f64,
        noise: &mut G,
    ) -> Result<()>
    where
        F: FeatureMap + ?Sized,
        G: GaussianSource + ?Sized,
    {
        if h == 0.0 {
            return Ok(());
        }
        noise.fill_standard_normal(&mut self.noise);
        features.weighted_gradient_into(x, &state.m, &mut self.drift)?;
        let sigma = (2.0 * h).sqrt();
        let drift_scale = -beta_t * h;
        for (w, d) in self.noise.iter_mut().zip(&self.drift) {
            *w = sigma * *w + drift_scale * d;
        }
        if !self.noise.iter().all(|w| w.is_finite()) {
            return Err(Error::NonFinite {
                t: state.t,
                what: format!("step increment with beta = {beta_t}, h = {h}"),
            });
        }
        geometry::project_in_place(x.coords(), &mut self.noise);
        geometry::exp_map_in_place(x.coords_mut(), &self.noise);
        Ok(())
    }
}

/// One Euler–Maruyama step on the sphere.
pub fn em_step<F, G>(
    x: &SpherePoint,
    state: &OccupationState,
    schedule: &BetaSchedule,
    features: &F,
    h: f64,
    noise: &mut G,
) -> Result<SpherePoint>
where
    F: FeatureMap + ?Sized,
    G: GaussianSource + ?Sized,
{
    if !(h >= 0.0) {
        return Err(Error::InvalidArgument(format!("step size must be nonnegative, got {h}")));
    }
    if state.t < state.t_init {
        return Err(Error::InvalidArgument(format!(
            "state time {} precedes t_init {}",
            state.t, state.t_init
        )));
    }
    let mut y = x.clone();
    Stepper::new(x.ambient_dim()).step(&mut y, state, schedule.value(state.t), features, h, noise)?;
    Ok(y)
}

/// Seed of the k-th member of an ensemble started from `seed`.
pub fn derive_seed(seed: u64, k: u64) -> u64 {
    seed.wrapping_add(k)
}

/// Random stream of a trajectory with the given seed.
pub fn trajectory_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Runs one trajectory with v(x) = x and the coordinate test functions.
pub fn run_trajectory(config: &SimConfig) -> Result<TrajectoryRecord> {
    let features = IdentityFeatures::new(config.n);
    let tests = TestFunction::coordinates(config.n);
    run_trajectory_with(config, &features, &tests)
}

/// Runs one trajectory with a custom feature map and test functions.
///
/// Invalid configurations are rejected up front. A trajectory that hits a
/// non-finite increment is returned with `failure` set and the checkpoints
/// recorded so far.
pub fn run_trajectory_with<F: FeatureMap + ?Sized>(
    config: &SimConfig,
    features: &F,
    tests: &[TestFunction],
) -> Result<TrajectoryRecord> {
    config.validate()?;
    let mut rng = trajectory_rng(config.seed);
    let mut x = match &config.start {
        StartSpec::Uniform => interaction::uniform_point(config.n, &mut rng),
        StartSpec::Fixed(c) => SpherePoint::new(c.clone())?,
    };
    let mut state = OccupationState::new(config.t_init, features.dim(), tests.len())?;
    let mut stepper = Stepper::new(config.n + 1);
    let mut scratch = vec![0.0; features.dim()];

    let grid = config.checkpoint_times();
    let mut checkpoints = Vec::with_capacity(grid.len());
    let snapshot = |state: &OccupationState, x: &SpherePoint| Checkpoint {
        t: state.t,
        m: state.m.clone(),
        test_means: state.test_means.clone(),
        x: x.coords().to_vec(),
    };
    checkpoints.push(snapshot(&state, &x));

    let mut failure = None;
    'grid: for &target in &grid[1..] {
        while state.t < target {
            let h_nominal = config.step_mode.step_size(config.h0, state.t);
            let (h, lands) = if state.t + h_nominal >= target {
                (target - state.t, true)
            } else {
                (h_nominal, false)
            };
            let beta = config.schedule.value(state.t);
            if let Err(e) = stepper.step(&mut x, &state, beta, features, h, &mut rng) {
                failure = Some(e.to_string());
                break 'grid;
            }
            state.update(&x, h, features, tests, &mut scratch);
            if lands {
                state.t = target;
            }
        }
        checkpoints.push(snapshot(&state, &x));
    }

    Ok(TrajectoryRecord {
        config: config.clone(),
        test_labels: tests.iter().map(|f| f.label().to_string()).collect(),
        checkpoints,
        terminal_x: x.into_coords(),
        terminal_state: state,
        failure,
    })
}

/// Runs `n_seeds` trajectories with seeds `seed + k`, in seed order.
///
/// `threads = None` uses the global rayon pool. Configuration errors abort;
/// per-trajectory failures are reported inside the records.
pub fn run_ensemble(config: &SimConfig, n_seeds: usize, threads: Option<usize>) -> Result<Vec<TrajectoryRecord>> {
    if n_seeds == 0 {
        return Err(Error::InvalidArgument("n_seeds must be at least 1".into()));
    }
    config.validate()?;
    let work = || {
        (0..n_seeds as u64)
            .into_par_iter()
            .map(|k| {
                let mut c = config.clone();
                c.seed = derive_seed(config.seed, k);
                run_trajectory(&c)
            })
            .collect::<Result<Vec<_>>>()
    };
    match threads {
        Some(k) => rayon::ThreadPoolBuilder::new()
            .num_threads(k.max(1))
            .build()
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .install(work),
        None => work(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::BetaSchedule;

    #[test]
    fn zero_step_and_zero_noise_are_identities() {
        let f = IdentityFeatures::new(2);
        let x = SpherePoint::normalized(vec![0.3, -0.2, 0.9]).unwrap();
        let mut st = OccupationState::new(1.0, 3, 0).unwrap();
        st.m = vec![0.2, 0.1, 0.0];
        let mut rng = trajectory_rng(1);
        let y = em_step(&x, &st, &BetaSchedule::constant(4.0), &f, 0.0, &mut rng).unwrap();
        assert_eq!(y, x);
        let y = em_step(&x, &st, &BetaSchedule::constant(0.0), &f, 0.01, &mut NoNoise).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn noiseless_step_follows_drift() {
        // attraction toward m: beta < 0 moves x toward m along the great circle
        let f = IdentityFeatures::new(1);
        let x = SpherePoint::basis(2, 0).unwrap();
        let mut st = OccupationState::new(1.0, 2, 0).unwrap();
        st.m = vec![0.0, 1.0];
        let y = em_step(&x, &st, &BetaSchedule::constant(-1.0), &f, 0.1, &mut NoNoise).unwrap();
        assert!((y.coords()[1] - 0.1f64.sin()).abs() < 1e-15);
    }

    #[test]
    fn em_step_rejects_negative_step() {
        let f = IdentityFeatures::new(1);
        let x = SpherePoint::basis(2, 0).unwrap();
        let st = OccupationState::new(1.0, 2, 0).unwrap();
        assert!(em_step(&x, &st, &BetaSchedule::constant(0.0), &f, -1.0, &mut NoNoise).is_err());
    }

    #[test]
    fn non_finite_schedule_aborts_with_partial_record() {
        let mut c = SimConfig::new(1, BetaSchedule::linear(f64::MAX), 50.0, 3);
        c.h0 = 0.5;
        let rec = run_trajectory(&c).unwrap();
        assert!(rec.failure.as_deref().unwrap().contains("non-finite"));
        assert!(rec.checkpoints.len() < c.checkpoint_times().len());
    }

    #[test]
    fn trivial_horizon_gives_single_checkpoint() {
        let c = SimConfig::new(2, BetaSchedule::constant(0.0), 1.0, 9);
        let rec = run_trajectory(&c).unwrap();
        assert_eq!(rec.checkpoints.len(), 1);
        assert_eq!(rec.checkpoints[0].m, vec![0.0; 3]);
        assert!(rec.is_complete());
    }

    #[test]
    fn checkpoints_land_on_grid() {
        let mut c = SimConfig::new(1, BetaSchedule::log(0.5), 300.0, 2);
        c.step_mode = StepMode::Doubling { after: 20.0 };
        let rec = run_trajectory(&c).unwrap();
        let grid = c.checkpoint_times();
        assert_eq!(rec.checkpoints.len(), grid.len());
        for (cp, t) in rec.checkpoints.iter().zip(&grid) {
            assert_eq!(cp.t, *t);
            assert!(geometry::norm(&cp.m) <= 1.0 + 1e-12);
            assert!((geometry::norm(&cp.x) - 1.0).abs() < 1e-12);
        }
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(*grid.last().unwrap(), 300.0);
    }

    #[test]
    fn doubling_schedule() {
        let m = StepMode::Doubling { after: 1e3 };
        assert_eq!(m.step_size(0.01, 999.0), 0.01);
        assert_eq!(m.step_size(0.01, 1e3), 0.02);
        assert_eq!(m.step_size(0.01, 5e3), 0.02);
        assert_eq!(m.step_size(0.01, 1.1e4), 0.04);
    }

    #[test]
    fn determinism_and_distinct_streams() {
        let c = SimConfig::new(2, BetaSchedule::constant(1.0), 20.0, 77);
        assert_eq!(run_trajectory(&c).unwrap(), run_trajectory(&c).unwrap());

        let ens = run_ensemble(&c, 8, Some(3)).unwrap();
        assert_eq!(ens[0], run_trajectory(&c).unwrap());
        for i in 0..8 {
            assert_eq!(ens[i].seed(), 77 + i as u64);
            for j in 0..i {
                assert_ne!(ens[i].terminal_x, ens[j].terminal_x);
            }
        }
        let single = run_ensemble(&c, 1, None).unwrap();
        assert_eq!(single, vec![run_trajectory(&c).unwrap()]);
        assert!(run_ensemble(&c, 0, None).is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = SimConfig::new(1, BetaSchedule::constant(0.0), 10.0, 0);
        c.validate().unwrap();
        c.h0 = 0.0;
        assert!(c.validate().is_err());
        c.h0 = 0.01;
        c.horizon = 0.5;
        assert!(c.validate().is_err());
        c.horizon = 10.0;
        c.start = StartSpec::Fixed(vec![1.0, 0.0, 0.0]);
        assert!(c.validate().is_err());
        c.start = StartSpec::Fixed(vec![0.0, 1.0]);
        c.validate().unwrap();
    }
}
