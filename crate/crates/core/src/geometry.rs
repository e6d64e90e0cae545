//! Geometric primitives on the unit sphere S^n embedded in R^{n+1}.
//!
//! Everything here works on plain coordinate vectors. [`SpherePoint`] keeps
//! the unit-norm invariant; [`TangentVector`] carries its base point so that
//! the tangency invariant can be checked where it matters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on `|x| - 1` accepted when constructing a [`SpherePoint`].
pub const UNIT_TOL: f64 = 1e-12;

/// Below this norm `exp_map` switches to the second-order expansion.
pub const SMALL_STEP: f64 = 1e-7;

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// A point on S^n, stored as a unit vector in R^{n+1}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpherePoint {
    coords: Vec<f64>,
}

impl SpherePoint {
    /// Accepts `coords` only if it already has unit length.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::InvalidPoint(format!(
                "ambient dimension must be at least 2, got {}",
                coords.len()
            )));
        }
        let r = norm(&coords);
        if !r.is_finite() || (r - 1.0).abs() > UNIT_TOL {
            return Err(Error::InvalidPoint(format!("|x| = {r}, expected 1")));
        }
        Ok(Self { coords })
    }

    /// Projects a nonzero vector radially onto the sphere.
    pub fn normalized(mut coords: Vec<f64>) -> Result<Self> {
        if coords.len() < 2 {
            return Err(Error::InvalidPoint(format!(
                "ambient dimension must be at least 2, got {}",
                coords.len()
            )));
        }
        let r = norm(&coords);
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::InvalidPoint(format!("cannot normalize vector of norm {r}")));
        }
        coords.iter_mut().for_each(|c| *c /= r);
        Ok(Self { coords })
    }

    /// The basis vector e_i of R^{dim}.
    pub fn basis(dim: usize, i: usize) -> Result<Self> {
        if i >= dim {
            return Err(Error::IndexOutOfRange { index: i, dim });
        }
        let mut coords = vec![0.0; dim];
        coords[i] = 1.0;
        Self::new(coords)
    }

    /// Wraps a vector known to be unit length. Only for internal hot paths.
    pub(crate) fn from_unit_unchecked(coords: Vec<f64>) -> Self {
        debug_assert!((norm(&coords) - 1.0).abs() < 1e-9);
        Self { coords }
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    /// Callers must restore unit length before the point is observed again.
    pub(crate) fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.coords
    }

    pub fn into_coords(self) -> Vec<f64> {
        self.coords
    }

    /// Ambient dimension n+1.
    pub fn ambient_dim(&self) -> usize {
        self.coords.len()
    }

    /// Sphere dimension n.
    pub fn sphere_dim(&self) -> usize {
        self.coords.len() - 1
    }

    /// Great-circle distance to `other`.
    pub fn geodesic_distance(&self, other: &SpherePoint) -> f64 {
        dot(&self.coords, &other.coords).clamp(-1.0, 1.0).acos()
    }
}

/// A vector in the tangent space at `base`.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector {
    base: SpherePoint,
    components: Vec<f64>,
}

impl TangentVector {
    pub fn zero(base: &SpherePoint) -> Self {
        Self {
            components: vec![0.0; base.ambient_dim()],
            base: base.clone(),
        }
    }

    pub fn base(&self) -> &SpherePoint {
        &self.base
    }

    pub fn components(&self) -> &[f64] {
        &self.components
    }

    pub fn norm(&self) -> f64 {
        norm(&self.components)
    }

    pub fn scaled(mut self, factor: f64) -> Self {
        self.components.iter_mut().for_each(|c| *c *= factor);
        self
    }

    /// Sum of two tangent vectors at the same base point.
    pub fn checked_add(mut self, other: &TangentVector) -> Result<Self> {
        check_dim(self.components.len(), other.components.len())?;
        self.components
            .iter_mut()
            .zip(&other.components)
            .for_each(|(a, b)| *a += b);
        Ok(self)
    }
}

fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

/// In-place `u <- u - (u.x) x`.
#[inline]
pub(crate) fn project_in_place(x: &[f64], u: &mut [f64]) {
    let ux = dot(u, x);
    u.iter_mut().zip(x).for_each(|(ui, xi)| *ui -= ux * xi);
}

/// In-place geodesic step `x <- exp_x(w)` followed by renormalization.
#[inline]
pub(crate) fn exp_map_in_place(x: &mut [f64], w: &[f64]) {
    let s2 = dot(w, w);
    let s = s2.sqrt();
    if s < SMALL_STEP {
        let c = 1.0 - 0.5 * s2;
        x.iter_mut().zip(w).for_each(|(xi, wi)| *xi = c * *xi + wi);
    } else {
        let (sin, cos) = s.sin_cos();
        let k = sin / s;
        x.iter_mut().zip(w).for_each(|(xi, wi)| *xi = cos * *xi + k * wi);
    }
    let r = norm(x);
    x.iter_mut().for_each(|xi| *xi /= r);
}

/// Orthogonal projection of an ambient vector onto the tangent space at `x`.
pub fn project_to_tangent(x: &SpherePoint, u: &[f64]) -> Result<TangentVector> {
    check_dim(x.ambient_dim(), u.len())?;
    let mut components = u.to_vec();
    project_in_place(x.coords(), &mut components);
    Ok(TangentVector {
        base: x.clone(),
        components,
    })
}

/// Riemannian exponential map: follows the great circle through `x` in
/// direction `w` for arc length `|w|`.
pub fn exp_map(x: &SpherePoint, w: &TangentVector) -> Result<SpherePoint> {
    check_dim(x.ambient_dim(), w.components.len())?;
    let mut coords = x.coords.clone();
    exp_map_in_place(&mut coords, &w.components);
    Ok(SpherePoint::from_unit_unchecked(coords))
}

/// Surface gradient of the coordinate function x -> x_i, i.e. e_i - x_i x.
pub fn coordinate_surface_gradient(x: &SpherePoint, i: usize) -> Result<TangentVector> {
    let dim = x.ambient_dim();
    if i >= dim {
        return Err(Error::IndexOutOfRange { index: i, dim });
    }
    let xi = x.coords[i];
    let mut components: Vec<f64> = x.coords.iter().map(|c| -xi * c).collect();
    components[i] += 1.0;
    Ok(TangentVector {
        base: x.clone(),
        components,
    })
}
