//! Dormand–Prince 5(4) for scalar initial value problems, with the
//! continuous fourth-order extension for dense output.

use crate::error::{Error, Result};

// Butcher tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
// Difference between the fifth- and fourth-order weights.
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
// Dense output.
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy)]
pub struct Tolerances {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            rtol: 1e-11,
            atol: 1e-11,
            h_init: 1e-5,
            h_min: 1e-14,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct DenseStep {
    x0: f64,
    h: f64,
    r: [f64; 5],
}

impl DenseStep {
    fn eval(&self, x: f64) -> f64 {
        let s = (x - self.x0) / self.h;
        let s1 = 1.0 - s;
        self.r[0] + s * (self.r[1] + s1 * (self.r[2] + s * (self.r[3] + s1 * self.r[4])))
    }
}

/// Accepted steps of an integration with their interpolants.
#[derive(Debug, Clone)]
pub struct DenseSolution {
    steps: Vec<DenseStep>,
    x_end: f64,
    y_end: f64,
}

impl DenseSolution {
    pub fn x_start(&self) -> f64 {
        self.steps.first().map_or(self.x_end, |s| s.x0)
    }

    pub fn x_end(&self) -> f64 {
        self.x_end
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    /// Interpolated solution at `x`; `None` outside the integrated range.
    pub fn eval(&self, x: f64) -> Option<f64> {
        if !(x >= self.x_start() && x <= self.x_end) {
            return None;
        }
        if x == self.x_end {
            return Some(self.y_end);
        }
        let i = self.steps.partition_point(|s| s.x0 <= x).saturating_sub(1);
        Some(self.steps[i].eval(x))
    }
}

/// Integrates `y' = f(x, y)` from `(x0, y0)` to `x_end`.
pub fn dopri5<F: Fn(f64, f64) -> f64>(f: F, x0: f64, y0: f64, x_end: f64, tol: Tolerances) -> Result<DenseSolution> {
    let mut x = x0;
    let mut y = y0;
    let mut h = tol.h_init.min(x_end - x0);
    let mut k1 = f(x, y);
    let mut steps = Vec::new();
    let mut err_prev: f64 = 1e-4;

    while x < x_end {
        if steps.len() >= tol.max_steps {
            return Err(Error::StepUnderflow { last_good_r: x });
        }
        if h < tol.h_min {
            return Err(Error::StepUnderflow { last_good_r: x });
        }
        let last = x + h >= x_end;
        if last {
            h = x_end - x;
        }
        let k2 = f(x + C2 * h, y + h * A21 * k1);
        let k3 = f(x + C3 * h, y + h * (A31 * k1 + A32 * k2));
        let k4 = f(x + C4 * h, y + h * (A41 * k1 + A42 * k2 + A43 * k3));
        let k5 = f(x + C5 * h, y + h * (A51 * k1 + A52 * k2 + A53 * k3 + A54 * k4));
        let k6 = f(x + h, y + h * (A61 * k1 + A62 * k2 + A63 * k3 + A64 * k4 + A65 * k5));
        let y_new = y + h * (A71 * k1 + A73 * k3 + A74 * k4 + A75 * k5 + A76 * k6);
        let k7 = f(x + h, y_new);
        let err_est = h * (E1 * k1 + E3 * k3 + E4 * k4 + E5 * k5 + E6 * k6 + E7 * k7);
        let scale = tol.atol + tol.rtol * y.abs().max(y_new.abs());
        let err = (err_est / scale).abs();

        if !err.is_finite() {
            h *= 0.1;
            continue;
        }
        if err <= 1.0 {
            // PI step-size controller (Hairer–Wanner, beta = 0.04)
            let fac = if err == 0.0 {
                10.0
            } else {
                (0.9 * err.powf(-0.17) * err_prev.powf(0.04)).clamp(0.2, 10.0)
            };
            err_prev = err.max(1e-4);
            let dy = y_new - y;
            let b_span = h * k1 - dy;
            steps.push(DenseStep {
                x0: x,
                h,
                r: [
                    y,
                    dy,
                    b_span,
                    dy - h * k7 - b_span,
                    h * (D1 * k1 + D3 * k3 + D4 * k4 + D5 * k5 + D6 * k6 + D7 * k7),
                ],
            });
            x = if last { x_end } else { x + h };
            y = y_new;
            k1 = k7;
            h *= fac;
        } else {
            h *= (0.9 * err.powf(-0.2)).max(0.2);
        }
    }
    Ok(DenseSolution {
        steps,
        x_end,
        y_end: y,
    })
}
