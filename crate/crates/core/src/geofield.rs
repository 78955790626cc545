//! Main-field evaluation from Gauss coefficients.
//!
//! Coefficient files use the distributed WMM text layout:
//!
//! ```text
//!     2020.0            WMM-2020        12/10/2019
//!   1  0   -29404.5       0.0        6.7       0.0
//!   ...
//! 999999999999999999999999999999999999999999999999
//! ```
//!
//! Field vectors are returned in local north / east / down axes, nanotesla.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::storm::AnomalySample;

/// Conventional geomagnetic reference radius (km).
pub const REFERENCE_RADIUS_KM: f64 = 6371.2;

/// Latitudes closer than this to a pole are rejected by the SH evaluator.
pub const POLE_GUARD_DEG: f64 = 1e-6;

const WGS84_A_KM: f64 = 6378.137;
const WGS84_F: f64 = 1.0 / 298.257_223_563;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FieldError {
    #[error("coefficient file line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("latitude {lat} deg is at a geographic pole")]
    PoleSingularity { lat: f64 },
    #[error("date {date} outside model validity [{start}, {end}]")]
    Validity { date: f64, start: f64, end: f64 },
    #[error("declination undefined: horizontal intensity is zero")]
    DeclinationUndefined,
    #[error("invalid position: {0}")]
    InvalidPosition(String),
}

/// A point on (or above) the Earth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeoPosition {
    /// Degrees east, normalised to (-180, 180].
    pub lon: f64,
    /// Degrees north.
    pub lat: f64,
    /// Kilometres above the reference surface.
    #[serde(default)]
    pub alt: f64,
}

impl GeoPosition {
    /// Builds a validated position with normalised longitude.
    pub fn new(lon: f64, lat: f64, alt: f64) -> Result<Self, FieldError> {
        if !(lon.is_finite() && lat.is_finite() && alt.is_finite()) {
            return Err(FieldError::InvalidPosition("non-finite coordinate".into()));
        }
        if !(-90.0..=90.0).contains(&lat) {
            return Err(FieldError::InvalidPosition(format!("lat {lat} outside [-90, 90]")));
        }
        Ok(Self { lon: normalize_lon(lon), lat, alt })
    }

    /// Sea-level position; panics on invalid latitude. Intended for literals.
    pub fn deg(lon: f64, lat: f64) -> Self {
        Self::new(lon, lat, 0.0).expect("valid literal position")
    }
}

impl fmt::Display for GeoPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({:.6}E, {:.6}N, {:.3} km)", self.lon, self.lat, self.alt)
    }
}

/// Wraps a longitude into (-180, 180].
pub fn normalize_lon(lon: f64) -> f64 {
    let mut l = lon % 360.0;
    if l > 180.0 {
        l -= 360.0;
    } else if l <= -180.0 {
        l += 360.0;
    }
    l
}

/// How input latitude/altitude are mapped onto the spherical-harmonic sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EarthShape {
    /// Latitude is geodetic on WGS84, altitude is height above the ellipsoid.
    /// The field is rotated back into the geodetic north/down frame.
    #[default]
    Wgs84,
    /// Latitude is geocentric on a sphere of radius `reference_radius + alt`.
    Sphere,
}

/// Gauss coefficients with linear secular variation.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSet {
    pub epoch: f64,
    pub model_name: String,
    pub max_degree: usize,
    pub reference_radius: f64,
    pub earth_shape: EarthShape,
    // Row-major triangular storage indexed by `tri(n, m)`.
    g: Vec<f64>,
    h: Vec<f64>,
    g_dot: Vec<f64>,
    h_dot: Vec<f64>,
}

#[inline]
fn tri(n: usize, m: usize) -> usize {
    n * (n + 1) / 2 + m
}

impl CoefficientSet {
    /// An all-zero set of the given degree.
    pub fn zeros(epoch: f64, max_degree: usize) -> Self {
        let len = tri(max_degree, max_degree) + 1;
        Self {
            epoch,
            model_name: String::from("custom"),
            max_degree,
            reference_radius: REFERENCE_RADIUS_KM,
            earth_shape: EarthShape::Wgs84,
            g: vec![0.0; len],
            h: vec![0.0; len],
            g_dot: vec![0.0; len],
            h_dot: vec![0.0; len],
        }
    }

    /// Axial dipole with only `g10` set, evaluated on a sphere.
    pub fn axial_dipole(epoch: f64, g10: f64) -> Self {
        let mut set = Self::zeros(epoch, 1);
        set.g[tri(1, 0)] = g10;
        set.model_name = String::from("dipole");
        set.earth_shape = EarthShape::Sphere;
        set
    }

    pub fn with_earth_shape(mut self, shape: EarthShape) -> Self {
        self.earth_shape = shape;
        self
    }

    /// Returns `(g, h, g_dot, h_dot)` for degree `n`, order `m`.
    pub fn coefficient(&self, n: usize, m: usize) -> Option<(f64, f64, f64, f64)> {
        if n == 0 || n > self.max_degree || m > n {
            return None;
        }
        let i = tri(n, m);
        Some((self.g[i], self.h[i], self.g_dot[i], self.h_dot[i]))
    }

    pub fn set_coefficient(&mut self, n: usize, m: usize, g: f64, h: f64, g_dot: f64, h_dot: f64) {
        assert!(n >= 1 && n <= self.max_degree && m <= n, "coefficient ({n}, {m}) out of range");
        let i = tri(n, m);
        self.g[i] = g;
        self.h[i] = if m == 0 { 0.0 } else { h };
        self.g_dot[i] = g_dot;
        self.h_dot[i] = if m == 0 { 0.0 } else { h_dot };
    }

    /// Validity window `[epoch, epoch + 5]`.
    pub fn validity(&self) -> (f64, f64) {
        (self.epoch, self.epoch + 5.0)
    }
}

/// Parses a WMM-layout coefficient file.
pub fn parse_cof(text: &str) -> Result<CoefficientSet, FieldError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hline, header) = lines.next().ok_or(FieldError::Parse { line: 1, msg: "empty file".into() })?;
    let mut head = header.split_whitespace();
    let epoch: f64 = head
        .next()
        .and_then(|t| t.parse().ok())
        .filter(|e: &f64| e.is_finite())
        .ok_or_else(|| FieldError::Parse { line: hline + 1, msg: "header must start with a numeric epoch".into() })?;
    let model_name = head.next().ok_or_else(|| FieldError::Parse { line: hline + 1, msg: "header missing model name".into() })?.to_string();

    let mut rows: Vec<(usize, usize, [f64; 4], usize)> = Vec::new();
    let mut terminated = false;
    for (idx, line) in lines {
        let lineno = idx + 1;
        let t = line.trim();
        if t.starts_with("9999") {
            terminated = true;
            break;
        }
        let fields: Vec<&str> = t.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(FieldError::Parse { line: lineno, msg: format!("expected 6 fields, found {}", fields.len()) });
        }
        let n: usize = fields[0].parse().map_err(|_| FieldError::Parse { line: lineno, msg: format!("bad degree '{}'", fields[0]) })?;
        let m: usize = fields[1].parse().map_err(|_| FieldError::Parse { line: lineno, msg: format!("bad order '{}'", fields[1]) })?;
        let mut vals = [0.0; 4];
        for (k, v) in vals.iter_mut().enumerate() {
            *v = fields[2 + k]
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| FieldError::Parse { line: lineno, msg: format!("non-numeric value '{}'", fields[2 + k]) })?;
        }
        if n == 0 || m > n {
            return Err(FieldError::Parse { line: lineno, msg: format!("invalid (n, m) = ({n}, {m})") });
        }
        rows.push((n, m, vals, lineno));
    }
    if !terminated {
        return Err(FieldError::Parse { line: text.lines().count() + 1, msg: "missing 9999 terminator".into() });
    }
    let max_degree = rows.iter().map(|r| r.0).max().ok_or(FieldError::Parse { line: hline + 2, msg: "no coefficient rows".into() })?;

    let mut set = CoefficientSet::zeros(epoch, max_degree);
    set.model_name = model_name;
    let mut seen = vec![false; tri(max_degree, max_degree) + 1];
    for (n, m, v, lineno) in rows {
        let i = tri(n, m);
        if seen[i] {
            return Err(FieldError::Parse { line: lineno, msg: format!("duplicate row ({n}, {m})") });
        }
        seen[i] = true;
        set.set_coefficient(n, m, v[0], v[1], v[2], v[3]);
    }
    for n in 1..=max_degree {
        for m in 0..=n {
            if !seen[tri(n, m)] {
                return Err(FieldError::Parse { line: 0, msg: format!("missing row ({n}, {m})") });
            }
        }
    }
    Ok(set)
}

/// Magnetic field vector in local north / east / down axes (nT).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct FieldVector {
    pub bx: f64,
    pub by: f64,
    pub bz: f64,
}

impl FieldVector {
    pub fn new(bx: f64, by: f64, bz: f64) -> Self {
        Self { bx, by, bz }
    }
}

/// The seven field elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoElements {
    pub bx: f64,
    pub by: f64,
    pub bz: f64,
    pub bh: f64,
    pub bf: f64,
    /// Declination, degrees in (-180, 180].
    pub d: f64,
    /// Inclination, degrees in [-90, 90].
    pub i: f64,
}

/// Schmidt semi-normalised associated Legendre functions and their
/// colatitude derivatives, for `cos(theta) = x`, `sin(theta) = s`.
struct Legendre {
    p: Vec<f64>,
    dp: Vec<f64>,
}

impl Legendre {
    fn new(nmax: usize, x: f64, s: f64) -> Self {
        let len = tri(nmax, nmax) + 1;
        let mut p = vec![0.0; len];
        let mut dp = vec![0.0; len];
        p[0] = 1.0;
        // Gauss-normalised recursion.
        for n in 1..=nmax {
            for m in 0..=n {
                let i = tri(n, m);
                if n == m {
                    let j = tri(n - 1, m - 1);
                    p[i] = s * p[j];
                    dp[i] = s * dp[j] + x * p[j];
                } else if n == 1 || m + 1 == n {
                    let j = tri(n - 1, m);
                    p[i] = x * p[j];
                    dp[i] = x * dp[j] - s * p[j];
                } else {
                    let j = tri(n - 1, m);
                    let k = tri(n - 2, m);
                    let kk = (((n - 1) * (n - 1)) as f64 - (m * m) as f64) / (((2 * n - 1) * (2 * n - 3)) as f64);
                    p[i] = x * p[j] - kk * p[k];
                    dp[i] = x * dp[j] - s * p[j] - kk * dp[k];
                }
            }
        }
        // Schmidt semi-normalisation factors.
        let mut schmidt = vec![0.0; len];
        schmidt[0] = 1.0;
        for n in 1..=nmax {
            schmidt[tri(n, 0)] = schmidt[tri(n - 1, 0)] * (2 * n - 1) as f64 / n as f64;
            for m in 1..=n {
                let delta = if m == 1 { 2.0 } else { 1.0 };
                schmidt[tri(n, m)] = schmidt[tri(n, m - 1)] * (((n - m + 1) as f64 * delta) / (n + m) as f64).sqrt();
            }
        }
        for ((pi, dpi), f) in p.iter_mut().zip(dp.iter_mut()).zip(&schmidt) {
            *pi *= f;
            *dpi *= f;
        }
        Self { p, dp }
    }
}

fn check_pole(lat: f64) -> Result<(), FieldError> {
    if lat.abs() >= 90.0 - POLE_GUARD_DEG {
        return Err(FieldError::PoleSingularity { lat });
    }
    Ok(())
}

/// Synthesises the main field at `pos` for decimal year `date`.
pub fn evaluate_field(model: &CoefficientSet, pos: &GeoPosition, date: f64) -> Result<FieldVector, FieldError> {
    check_pole(pos.lat)?;
    let (start, end) = model.validity();
    if !(date >= start && date <= end) {
        return Err(FieldError::Validity { date, start, end });
    }
    let dt = date - model.epoch;
    let lat = pos.lat.to_radians();
    let lon = pos.lon.to_radians();

    // Spherical coordinates of the point and the rotation back to the
    // caller's latitude frame.
    let (r, lat_c) = match model.earth_shape {
        EarthShape::Sphere => (model.reference_radius + pos.alt, lat),
        EarthShape::Wgs84 => {
            let e2 = WGS84_F * (2.0 - WGS84_F);
            let (sl, cl) = lat.sin_cos();
            let rc = WGS84_A_KM / (1.0 - e2 * sl * sl).sqrt();
            let p = (rc + pos.alt) * cl;
            let z = (rc * (1.0 - e2) + pos.alt) * sl;
            let r = p.hypot(z);
            (r, (z / r).asin())
        }
    };

    let nmax = model.max_degree;
    let x = lat_c.sin(); // cos(colatitude)
    let s = lat_c.cos(); // sin(colatitude)
    let leg = Legendre::new(nmax, x, s);
    let ratio = model.reference_radius / r;

    let mut north = 0.0;
    let mut east = 0.0;
    let mut down = 0.0;
    let mut ar = ratio * ratio;
    for n in 1..=nmax {
        ar *= ratio; // (a/r)^(n+2)
        for m in 0..=n {
            let i = tri(n, m);
            let g = model.g[i] + dt * model.g_dot[i];
            let h = model.h[i] + dt * model.h_dot[i];
            let (sm, cm) = (m as f64 * lon).sin_cos();
            let gc = g * cm + h * sm;
            north += ar * gc * leg.dp[i];
            east += ar * m as f64 * (g * sm - h * cm) * leg.p[i];
            down -= ar * (n + 1) as f64 * gc * leg.p[i];
        }
    }
    east /= s;

    let psi = lat_c - lat;
    let (sp, cp) = psi.sin_cos();
    Ok(FieldVector { bx: north * cp - down * sp, by: east, bz: north * sp + down * cp })
}

/// Closed-form axial dipole on a sphere of radius `REFERENCE_RADIUS_KM + alt`.
pub fn dipole_field(pos: &GeoPosition, g10: f64) -> FieldVector {
    let colat = (90.0 - pos.lat).to_radians();
    let k = (REFERENCE_RADIUS_KM / (REFERENCE_RADIUS_KM + pos.alt)).powi(3);
    FieldVector { bx: -g10 * k * colat.sin(), by: 0.0, bz: -2.0 * g10 * k * colat.cos() }
}

/// Derives the seven elements. Declination uses the two-argument arctangent.
pub fn elements_from_field(f: &FieldVector) -> Result<GeoElements, FieldError> {
    let bh = f.bx.hypot(f.by);
    if bh == 0.0 {
        return Err(FieldError::DeclinationUndefined);
    }
    let bf = bh.hypot(f.bz);
    let mut d = f.by.atan2(f.bx) * 180.0 / PI;
    if d <= -180.0 {
        d += 360.0;
    }
    let i = f.bz.atan2(bh) * 180.0 / PI;
    Ok(GeoElements { bx: f.bx, by: f.by, bz: f.bz, bh, bf, d, i })
}

/// Superimposes a disturbance sample on a main-field vector.
pub fn apply_anomaly(f: &FieldVector, a: &AnomalySample) -> FieldVector {
    FieldVector { bx: f.bx + a.dbx, by: f.by + a.dby, bz: f.bz + a.dbz }
}

/// The bundled WMM2020 coefficient file.
pub const WMM2020_COF: &str = include_str!("../data/WMM2020.COF");

/// Parses the bundled WMM2020 coefficients.
pub fn wmm2020() -> CoefficientSet {
    parse_cof(WMM2020_COF).expect("bundled coefficient file is valid")
}

/// Where the main field comes from during a simulation.
#[derive(Debug, Clone)]
pub enum FieldSource {
    Dipole { g10: f64 },
    Model(std::sync::Arc<CoefficientSet>),
}

impl FieldSource {
    pub fn field(&self, pos: &GeoPosition, date: f64) -> Result<FieldVector, FieldError> {
        match self {
            FieldSource::Dipole { g10 } => {
                check_pole(pos.lat)?;
                Ok(dipole_field(pos, *g10))
            }
            FieldSource::Model(m) => evaluate_field(m, pos, date),
        }
    }
}
