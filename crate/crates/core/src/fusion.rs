//! Error-state Kalman filter blending inertial and geomagnetic positions.

use nalgebra::{SMatrix, SVector, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geofield::{normalize_lon, GeoPosition};
use crate::ins::{IDX_LAT, IDX_LON, STATE_DIM};

pub type Mat15 = SMatrix<f64, STATE_DIM, STATE_DIM>;
pub type Vec15 = SVector<f64, STATE_DIM>;
pub type Mat2x15 = SMatrix<f64, 2, STATE_DIM>;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("singular innovation covariance")]
    SingularInnovation,
    #[error("invalid fusion config: {0}")]
    Config(String),
}

/// Trigger test for engaging the filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TriggerRule {
    /// Smallest absolute gradient entry.
    #[default]
    MinAbsEntry,
    /// Smallest singular value of the gradient.
    MinSingularValue,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub f_mat: Mat15,
    pub q_c: Mat15,
    pub r_c: nalgebra::Matrix2<f64>,
    pub p0: Mat15,
    pub h_b: Mat2x15,
}

/// Selector of the two position slots.
pub fn position_selector() -> Mat2x15 {
    let mut h = Mat2x15::zeros();
    h[(0, IDX_LON)] = 1.0;
    h[(1, IDX_LAT)] = 1.0;
    h
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self::with_values(0.05, 1.0, 2.0)
    }
}

impl FusionConfig {
    /// Identity dynamics with `q` and `p0` on the position slots and `R = r·I`.
    pub fn with_values(q: f64, p0: f64, r: f64) -> Self {
        let mut q_c = Mat15::zeros();
        let mut p = Mat15::zeros();
        for k in [IDX_LON, IDX_LAT] {
            q_c[(k, k)] = q;
            p[(k, k)] = p0;
        }
        Self { f_mat: Mat15::identity(), q_c, r_c: nalgebra::Matrix2::identity() * r, p0: p, h_b: position_selector() }
    }

    pub fn validate(&self) -> Result<(), FusionError> {
        let psd15 = |m: &Mat15| (m - m.transpose()).amax() <= 1e-12 && m.symmetric_eigen().eigenvalues.min() >= -1e-12;
        if !psd15(&self.q_c) {
            return Err(FusionError::Config("q_c must be symmetric PSD".into()));
        }
        if !psd15(&self.p0) {
            return Err(FusionError::Config("p0 must be symmetric PSD".into()));
        }
        let r = &self.r_c;
        if (r - r.transpose()).amax() > 1e-12 || r.symmetric_eigenvalues().min() < 0.0 {
            return Err(FusionError::Config("r_c must be symmetric PSD".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionState {
    pub x_hat: Vec15,
    pub p: Mat15,
}

impl FusionState {
    pub fn new(cfg: &FusionConfig) -> Self {
        Self { x_hat: Vec15::zeros(), p: cfg.p0 }
    }
}

fn symmetrize(p: &Mat15) -> Mat15 {
    (p + p.transpose()) * 0.5
}

/// `x̂⁻ = F·x̂`, `P⁻ = F·P·Fᵀ + Q_c`.
pub fn predict(fs: &FusionState, cfg: &FusionConfig) -> FusionState {
    FusionState { x_hat: cfg.f_mat * fs.x_hat, p: symmetrize(&(cfg.f_mat * fs.p * cfg.f_mat.transpose() + cfg.q_c)) }
}

/// `(λ_m − λ_c, φ_m − φ_c)` in degrees with the longitude difference wrapped.
pub fn innovation(z_m: &GeoPosition, z_c: &GeoPosition) -> Vector2<f64> {
    Vector2::new(normalize_lon(z_m.lon - z_c.lon), z_m.lat - z_c.lat)
}

/// Measurement update; returns the posterior and the position correction (deg).
pub fn update(fs: &FusionState, cfg: &FusionConfig, dz: &Vector2<f64>) -> Result<(FusionState, Vector2<f64>), FusionError> {
    let h = &cfg.h_b;
    let s = h * fs.p * h.transpose() + cfg.r_c;
    let s_inv = s.try_inverse().ok_or(FusionError::SingularInnovation)?;
    let k = fs.p * h.transpose() * s_inv;
    let x_hat = fs.x_hat + k * (dz - h * fs.x_hat);
    let i_kh = Mat15::identity() - k * h;
    let p = symmetrize(&(i_kh * fs.p * i_kh.transpose() + k * cfg.r_c * k.transpose()));
    let corr = Vector2::new(x_hat[IDX_LON], x_hat[IDX_LAT]);
    Ok((FusionState { x_hat, p }, corr))
}

/// Kalman gain for the current prior, exposed for structure checks.
pub fn gain(fs: &FusionState, cfg: &FusionConfig) -> Option<SMatrix<f64, STATE_DIM, 2>> {
    let h = &cfg.h_b;
    let s = h * fs.p * h.transpose() + cfg.r_c;
    s.try_inverse().map(|si| fs.p * h.transpose() * si)
}

/// Adds a (lon, lat) correction in degrees.
pub fn apply_correction(pos: &GeoPosition, corr: &Vector2<f64>) -> GeoPosition {
    GeoPosition { lon: normalize_lon(pos.lon + corr[0]), lat: (pos.lat + corr[1]).clamp(-90.0, 90.0), alt: pos.alt }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn predict_grows_position_variance() {
        let cfg = FusionConfig::default();
        let fs = predict(&FusionState::new(&cfg), &cfg);
        assert_eq!(fs.p[(IDX_LON, IDX_LON)], 1.05);
        assert_eq!(fs.p[(IDX_LAT, IDX_LAT)], 1.05);
        let still = FusionConfig { q_c: Mat15::zeros(), ..cfg };
        let s0 = FusionState::new(&still);
        assert_eq!(predict(&s0, &still), s0);
    }

    #[test]
    fn innovation_wraps() {
        let d = innovation(&GeoPosition::deg(152.1, 33.0), &GeoPosition::deg(152.0, 33.05));
        assert!((d[0] - 0.1).abs() < 1e-12 && (d[1] + 0.05).abs() < 1e-12);
        let d = innovation(&GeoPosition::deg(179.9, 0.0), &GeoPosition::deg(-179.9, 0.0));
        // 179.9 − (−179.9) wraps to −0.2, not 359.8
        assert!((d[0] + 0.2).abs() < 1e-9);
    }

    #[test]
    fn scalar_gain_example() {
        let cfg = FusionConfig::default();
        let (post, corr) = update(&FusionState::new(&cfg), &cfg, &Vector2::new(0.3, 0.3)).unwrap();
        assert!((corr[0] - 0.1).abs() < 1e-15 && (corr[1] - 0.1).abs() < 1e-15);
        assert!(post.p[(IDX_LON, IDX_LON)] < 1.0);
    }

    #[test]
    fn huge_noise_ignores_measurement() {
        let cfg = FusionConfig { r_c: nalgebra::Matrix2::identity() * 1e9, ..FusionConfig::default() };
        let (_, corr) = update(&FusionState::new(&cfg), &cfg, &Vector2::new(0.3, 0.3)).unwrap();
        assert!(corr.amax() < 1e-9);
    }

    #[test]
    fn correction_adds() {
        let p = apply_correction(&GeoPosition::deg(152.0, 33.0), &Vector2::new(0.1, -0.05));
        assert!((p.lon - 152.1).abs() < 1e-12 && (p.lat - 32.95).abs() < 1e-12);
        assert_eq!(apply_correction(&p, &Vector2::zeros()), p);
    }
}
