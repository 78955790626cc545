//! Inertial position-error simulator: initial bias, velocity-error drift and
//! a random walk, expressed through the 15-component error state.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::geodesy::{offset, EARTH_RADIUS_KM};
use crate::geofield::GeoPosition;

/// Number of error-state components.
pub const STATE_DIM: usize = 15;
/// Index of the longitude error in the error state.
pub const IDX_LON: usize = 3;
/// Index of the latitude error in the error state.
pub const IDX_LAT: usize = 4;

/// Error state in fixed order: attitude errors (rad), position errors
/// (deg, deg, m), velocity errors (m/s), constant and random gyro drifts (deg/h).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct InsErrorState {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub d_lon: f64,
    pub d_lat: f64,
    pub d_h: f64,
    pub d_vx: f64,
    pub d_vy: f64,
    pub d_vz: f64,
    pub eps_cx: f64,
    pub eps_cy: f64,
    pub eps_cz: f64,
    pub eps_rx: f64,
    pub eps_ry: f64,
    pub eps_rz: f64,
}

impl InsErrorState {
    pub fn to_array(&self) -> [f64; STATE_DIM] {
        [
            self.alpha,
            self.beta,
            self.gamma,
            self.d_lon,
            self.d_lat,
            self.d_h,
            self.d_vx,
            self.d_vy,
            self.d_vz,
            self.eps_cx,
            self.eps_cy,
            self.eps_cz,
            self.eps_rx,
            self.eps_ry,
            self.eps_rz,
        ]
    }

    pub fn from_array(a: &[f64; STATE_DIM]) -> Self {
        Self {
            alpha: a[0],
            beta: a[1],
            gamma: a[2],
            d_lon: a[3],
            d_lat: a[4],
            d_h: a[5],
            d_vx: a[6],
            d_vy: a[7],
            d_vz: a[8],
            eps_cx: a[9],
            eps_cy: a[10],
            eps_cz: a[11],
            eps_rx: a[12],
            eps_ry: a[13],
            eps_rz: a[14],
        }
    }
}

/// Direction of the velocity-error drift.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftDirection {
    /// Perpendicular to the true velocity, to its right.
    #[default]
    CrossTrack,
    /// Fixed bearing, degrees from +x counter-clockwise.
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InsConfig {
    pub init_east_error_m: f64,
    pub init_north_error_m: f64,
    pub speed_error_ms: f64,
    /// Platform misalignment, arcmin (horizontal, horizontal, heading).
    pub misalignment_arcmin: [f64; 3],
    /// Random-walk intensity, m/√h.
    pub random_walk_m_per_sqrt_h: f64,
    /// Constant gyro drift, deg/h.
    pub gyro_constant_deg_h: f64,
    /// Random gyro drift standard deviation, deg/h.
    pub gyro_random_deg_h: f64,
    pub drift_direction: DriftDirection,
}

impl Default for InsConfig {
    fn default() -> Self {
        Self {
            init_east_error_m: 5000.0,
            init_north_error_m: 5000.0,
            speed_error_ms: 10.0,
            misalignment_arcmin: [50.0, 50.0, 500.0],
            random_walk_m_per_sqrt_h: 50.0,
            gyro_constant_deg_h: 0.01,
            gyro_random_deg_h: 0.001,
            drift_direction: DriftDirection::CrossTrack,
        }
    }
}

impl InsConfig {
    /// An error-free inertial system.
    pub fn ideal() -> Self {
        Self {
            init_east_error_m: 0.0,
            init_north_error_m: 0.0,
            speed_error_ms: 0.0,
            misalignment_arcmin: [0.0; 3],
            random_walk_m_per_sqrt_h: 0.0,
            gyro_constant_deg_h: 0.0,
            gyro_random_deg_h: 0.0,
            drift_direction: DriftDirection::CrossTrack,
        }
    }
}

fn m_to_deg_lat(m: f64) -> f64 {
    (m / 1000.0 / EARTH_RADIUS_KM).to_degrees()
}

fn m_to_deg_lon(m: f64, lat: f64) -> f64 {
    m_to_deg_lat(m) / lat.to_radians().cos()
}

fn deg_lat_to_m(d: f64) -> f64 {
    d.to_radians() * EARTH_RADIUS_KM * 1000.0
}

fn deg_lon_to_m(d: f64, lat: f64) -> f64 {
    deg_lat_to_m(d) * lat.to_radians().cos()
}

/// Initial error state at `pos`.
pub fn initial_state(cfg: &InsConfig, pos: &GeoPosition) -> InsErrorState {
    let arcmin = |a: f64| (a / 60.0).to_radians();
    let dir = match cfg.drift_direction {
        DriftDirection::Fixed(b) => b.to_radians(),
        DriftDirection::CrossTrack => std::f64::consts::FRAC_PI_4,
    };
    InsErrorState {
        alpha: arcmin(cfg.misalignment_arcmin[0]),
        beta: arcmin(cfg.misalignment_arcmin[1]),
        gamma: arcmin(cfg.misalignment_arcmin[2]),
        d_lon: m_to_deg_lon(cfg.init_east_error_m, pos.lat),
        d_lat: m_to_deg_lat(cfg.init_north_error_m),
        d_vx: cfg.speed_error_ms * dir.cos(),
        d_vy: cfg.speed_error_ms * dir.sin(),
        eps_cx: cfg.gyro_constant_deg_h,
        eps_cy: cfg.gyro_constant_deg_h,
        eps_cz: cfg.gyro_constant_deg_h,
        ..Default::default()
    }
}

/// Measured position for a given error state.
pub fn measured_position(state: &InsErrorState, true_pos: &GeoPosition) -> GeoPosition {
    let e = deg_lon_to_m(state.d_lon, true_pos.lat);
    let n = deg_lat_to_m(state.d_lat);
    offset(true_pos, e / 1000.0, n / 1000.0)
}

/// Advances the error state by `dt_h` hours along a true heading `heading_deg`
/// (from +x counter-clockwise) and returns the measured position at `true_pos`.
pub fn step_ins<R: Rng + ?Sized>(
    cfg: &InsConfig,
    state: &InsErrorState,
    true_pos: &GeoPosition,
    heading_deg: f64,
    dt_h: f64,
    rng: &mut R,
) -> (InsErrorState, GeoPosition) {
    let mut next = *state;
    let dir = match cfg.drift_direction {
        DriftDirection::CrossTrack => (heading_deg - 90.0).to_radians(),
        DriftDirection::Fixed(b) => b.to_radians(),
    };
    next.d_vx = cfg.speed_error_ms * dir.cos();
    next.d_vy = cfg.speed_error_ms * dir.sin();
    let drift_m = cfg.speed_error_ms * dt_h * 3600.0;
    let mut de = drift_m * dir.cos();
    let mut dn = drift_m * dir.sin();
    if cfg.random_walk_m_per_sqrt_h > 0.0 {
        let walk = Normal::new(0.0, cfg.random_walk_m_per_sqrt_h * dt_h.sqrt()).expect("finite std");
        de += walk.sample(rng);
        dn += walk.sample(rng);
    }
    next.d_lon += m_to_deg_lon(de, true_pos.lat);
    next.d_lat += m_to_deg_lat(dn);
    if cfg.gyro_random_deg_h > 0.0 {
        let g = Normal::new(0.0, cfg.gyro_random_deg_h).expect("finite std");
        next.eps_rx = g.sample(rng);
        next.eps_ry = g.sample(rng);
        next.eps_rz = g.sample(rng);
    }
    let meas = measured_position(&next, true_pos);
    (next, meas)
}
