//! Globally adaptive Gauss–Kronrod (7/15) quadrature and the partition
//! integrals of the Gibbs family on S^n.

use std::collections::BinaryHeap;
use std::cmp::Ordering;

pub const ABS_TOL: f64 = 1e-12;
pub const REL_TOL: f64 = 1e-10;

/// Above this r the integrands are evaluated with the factor e^{-r} pulled out.
pub const RESCALE_THRESHOLD: f64 = 700.0;

const MAX_SUBDIVISIONS: usize = 2000;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];

/// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub abs_error: f64,
    /// False if the subdivision budget ran out before the tolerance was met.
    pub converged: bool,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Integrates `f` over `[a, b]` until the estimated error is below
/// `max(abs_tol, rel_tol * |I|)`.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> QuadResult {
    let (v, e) = gk15(&f, a, b);
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value: v, error: e });
    let mut total = v;
    let mut total_err = e;
    let mut subdivisions = 1;
    while total_err > abs_tol.max(rel_tol * total.abs()) {
        if subdivisions >= MAX_SUBDIVISIONS {
            return QuadResult {
                value: total,
                abs_error: total_err,
                converged: false,
            };
        }
        let seg = heap.pop().expect("heap never empties");
        let mid = 0.5 * (seg.a + seg.b);
        let (v1, e1) = gk15(&f, seg.a, mid);
        let (v2, e2) = gk15(&f, mid, seg.b);
        total += v1 + v2 - seg.value;
        total_err += e1 + e2 - seg.error;
        heap.push(Segment { a: seg.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: seg.b, value: v2, error: e2 });
        subdivisions += 1;
        // resum to keep the running totals free of cancellation drift
        if subdivisions % 64 == 0 {
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.error).sum();
        }
    }
    let value = heap.iter().map(|s| s.value).sum();
    QuadResult {
        value,
        abs_error: total_err,
        converged: true,
    }
}

/// A value `value * exp(log_scale)`; `log_scale` is nonzero only when the
/// overflow guard was used.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScaledValue {
    pub value: f64,
    pub log_scale: f64,
    pub converged: bool,
}

impl ScaledValue {
    pub fn rescaled(&self) -> bool {
        self.log_scale != 0.0
    }

    /// The unscaled value; overflows to infinity for large r.
    pub fn unscaled(&self) -> f64 {
        self.value * self.log_scale.exp()
    }
}

/// Weighted moment `int_0^pi g(x) e^{-r cos x} (sin x)^{n-1} dx`, with the
/// factor `e^{-r}` removed when `r > RESCALE_THRESHOLD`.
pub fn gibbs_moment<G: Fn(f64) -> f64>(r: f64, n: usize, g: G) -> ScaledValue {
    let shift = if r > RESCALE_THRESHOLD { r } else { 0.0 };
    let p = (n - 1) as i32;
    let q = integrate(
        |x| {
            let (s, c) = x.sin_cos();
            g(x) * (-r * c - shift).exp() * s.powi(p)
        },
        0.0,
        std::f64::consts::PI,
        ABS_TOL,
        REL_TOL,
    );
    ScaledValue {
        value: q.value,
        log_scale: shift,
        converged: q.converged,
    }
}

/// H(r), H'(r) or H''(r) for `H(r) = int_0^pi e^{-r cos x} (sin x)^{n-1} dx`.
pub fn h_quadrature(r: f64, n: usize, deriv_order: u8) -> ScaledValue {
    assert!(r >= 0.0 && n >= 1, "h_quadrature requires r >= 0 and n >= 1");
    match deriv_order {
        0 => gibbs_moment(r, n, |_| 1.0),
        1 => gibbs_moment(r, n, |x| -x.cos()),
        2 => gibbs_moment(r, n, |x| {
            let c = x.cos();
            c * c
        }),
        k => panic!("deriv_order must be 0, 1 or 2, got {k}"),
    }
}

/// Mean profile rho(r) = H'(r) / H(r) by direct quadrature.
///
/// The second component reports whether either integral needed the
/// overflow guard or failed to converge.
pub fn rho_quadrature_flagged(r: f64, n: usize) -> (f64, bool) {
    if r == 0.0 {
        return (0.0, false);
    }
    let h = h_quadrature(r, n, 0);
    let h1 = h_quadrature(r, n, 1);
    let flagged = h.rescaled() || !h.converged || !h1.converged;
    (h1.value / h.value, flagged)
}

pub fn rho_quadrature(r: f64, n: usize) -> f64 {
    rho_quadrature_flagged(r, n).0
}
