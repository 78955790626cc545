//! Spatial gradient of declination and inclination in the local plane.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GradientError {
    #[error("degenerate stencil: {0}")]
    DegenerateStencil(&'static str),
}

/// Rows are D and I; columns are x (east) and y (north). Units deg/km.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GradientMatrix {
    pub g_dx: f64,
    pub g_dy: f64,
    pub g_ix: f64,
    pub g_iy: f64,
}

impl GradientMatrix {
    pub fn new(g_dx: f64, g_dy: f64, g_ix: f64, g_iy: f64) -> Self {
        Self { g_dx, g_dy, g_ix, g_iy }
    }

    pub fn from_matrix(m: &Matrix2<f64>) -> Self {
        Self::new(m[(0, 0)], m[(0, 1)], m[(1, 0)], m[(1, 1)])
    }

    pub fn as_matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.g_dx, self.g_dy, self.g_ix, self.g_iy)
    }

    pub fn min_abs_entry(&self) -> f64 {
        [self.g_dx, self.g_dy, self.g_ix, self.g_iy].iter().fold(f64::INFINITY, |m, v| m.min(v.abs()))
    }

    pub fn min_singular_value(&self) -> f64 {
        self.as_matrix().singular_values().min()
    }

    pub fn is_finite(&self) -> bool {
        [self.g_dx, self.g_dy, self.g_ix, self.g_iy].iter().all(|v| v.is_finite())
    }
}

/// D/I measured at a local-plane location (km).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiSample {
    pub d: f64,
    pub i: f64,
    pub x: f64,
    pub y: f64,
}

/// Three-point stencil: `s0 → s1` along x, `s1 → s2` along y.
pub fn init_gradient(s0: &DiSample, s1: &DiSample, s2: &DiSample) -> Result<GradientMatrix, GradientError> {
    let dx = s1.x - s0.x;
    let dy = s2.y - s1.y;
    if dx == 0.0 {
        return Err(GradientError::DegenerateStencil("x1 == x0"));
    }
    if dy == 0.0 {
        return Err(GradientError::DegenerateStencil("y2 == y1"));
    }
    Ok(GradientMatrix::new((s1.d - s0.d) / dx, (s2.d - s1.d) / dy, (s1.i - s0.i) / dx, (s2.i - s1.i) / dy))
}

/// Result of one recursive update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientUpdate {
    pub gradient: GradientMatrix,
    /// Set when a velocity component was too small to divide by.
    pub frozen: bool,
}

/// Minimum |v·t| (km) accepted by [`update_gradient`].
pub const DEFAULT_EPS_V_KM: f64 = 1e-6;

/// Outer-product update `g + (dD, dI)ᵀ (cos θ/(vx t), sin θ/(vy t))`.
/// Returns `g` unchanged and `frozen` when `|vx t|` or `|vy t|` is below `eps_v`.
#[allow(clippy::too_many_arguments)]
pub fn update_gradient(g: &GradientMatrix, d_d: f64, d_i: f64, theta_deg: f64, vx: f64, vy: f64, t: f64, eps_v: f64) -> GradientUpdate {
    let (lx, ly) = (vx * t, vy * t);
    if lx.abs() <= eps_v || ly.abs() <= eps_v {
        return GradientUpdate { gradient: *g, frozen: true };
    }
    let th = theta_deg.to_radians();
    let (rx, ry) = (th.cos() / lx, th.sin() / ly);
    GradientUpdate {
        gradient: GradientMatrix::new(g.g_dx + d_d * rx, g.g_dy + d_d * ry, g.g_ix + d_i * rx, g.g_iy + d_i * ry),
        frozen: false,
    }
}

/// Rank-one secant update: the new gradient reproduces the observed change
/// exactly along the displacement and is unchanged across it.
pub fn secant_update(g: &GradientMatrix, d_s: Vector2<f64>, d_l: Vector2<f64>, eps_v: f64) -> GradientUpdate {
    let n2 = d_l.norm_squared();
    if n2.sqrt() <= eps_v {
        return GradientUpdate { gradient: *g, frozen: true };
    }
    let gm = g.as_matrix();
    let resid = d_s - gm * d_l;
    GradientUpdate { gradient: GradientMatrix::from_matrix(&(gm + resid * d_l.transpose() / n2)), frozen: false }
}

/// Recursive update rule used by the navigator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientRule {
    /// The outer-product rule of [`update_gradient`].
    OuterProduct,
    /// The rank-one secant rule of [`secant_update`].
    #[default]
    Secant,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(d: f64, i: f64, x: f64, y: f64) -> DiSample {
        DiSample { d, i, x, y }
    }

    #[test]
    fn linear_field_exact() {
        let f = |x: f64, y: f64| s(2.0 * x + 3.0 * y, x - y, x, y);
        let g = init_gradient(&f(0.0, 0.0), &f(1.0, 0.0), &f(1.0, 1.0)).unwrap();
        assert_eq!(g, GradientMatrix::new(2.0, 3.0, 1.0, -1.0));
    }

    #[test]
    fn constant_field_zero() {
        let g = init_gradient(&s(1.0, 2.0, 0.0, 0.0), &s(1.0, 2.0, 1.0, 0.0), &s(1.0, 2.0, 1.0, 1.0)).unwrap();
        assert_eq!(g, GradientMatrix::default());
    }

    #[test]
    fn degenerate_stencil() {
        let a = s(0.0, 0.0, 0.0, 0.0);
        assert!(init_gradient(&a, &a, &s(0.0, 0.0, 0.0, 1.0)).is_err());
        assert!(init_gradient(&a, &s(0.0, 0.0, 1.0, 0.0), &s(0.0, 0.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn outer_product_arithmetic() {
        let g = GradientMatrix::new(1.0, 0.0, 0.0, 1.0);
        let u = update_gradient(&g, 0.1, 0.2, 0.0, 1.0, 1.0, 1.0, DEFAULT_EPS_V_KM);
        assert!(!u.frozen);
        assert!((u.gradient.g_dx - 1.1).abs() < 1e-15 && u.gradient.g_dy == 0.0);
        assert!((u.gradient.g_ix - 0.2).abs() < 1e-15 && u.gradient.g_iy == 1.0);
        assert_eq!(update_gradient(&g, 0.0, 0.0, 30.0, 3.0, 4.0, 0.1, 1e-6).gradient, g);
    }

    #[test]
    fn axis_aligned_motion_freezes() {
        let g = GradientMatrix::new(1.0, 2.0, 3.0, 4.0);
        let u = update_gradient(&g, 0.5, 0.5, 0.0, 50.0, 0.0, 0.1, DEFAULT_EPS_V_KM);
        assert!(u.frozen);
        assert_eq!(u.gradient, g);
    }

    #[test]
    fn secant_reproduces_step() {
        let g = GradientMatrix::new(1.0, 2.0, 3.0, 4.0);
        let dl = Vector2::new(3.0, -1.0);
        let ds = Vector2::new(0.7, 0.2);
        let u = secant_update(&g, ds, dl, 1e-6).gradient.as_matrix();
        assert!((u * dl - ds).norm() < 1e-14);
        let perp = Vector2::new(1.0, 3.0);
        assert!((u * perp - g.as_matrix() * perp).norm() < 1e-14);
    }
}
