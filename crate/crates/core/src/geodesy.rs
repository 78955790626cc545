//! Spherical-earth helpers: great-circle distances, local east/north plane.

use crate::geofield::{normalize_lon, GeoPosition};

/// Mean Earth radius (km) used for distances and the local plane.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

/// Haversine great-circle distance in kilometres.
pub fn distance_km(a: &GeoPosition, b: &GeoPosition) -> f64 {
    let (la1, la2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = la2 - la1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + la1.cos() * la2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Moves `from` by an east/north displacement (km) in the local tangent plane.
pub fn offset(from: &GeoPosition, east_km: f64, north_km: f64) -> GeoPosition {
    let lat = from.lat + (north_km / EARTH_RADIUS_KM).to_degrees();
    let lon = from.lon + (east_km / (EARTH_RADIUS_KM * from.lat.to_radians().cos())).to_degrees();
    GeoPosition { lon: normalize_lon(lon), lat: lat.clamp(-90.0, 90.0), alt: from.alt }
}

/// East/north displacement (km) of `to` relative to `from`, using the
/// scaling at `from`'s latitude. Inverse of [`offset`].
pub fn local_delta(from: &GeoPosition, to: &GeoPosition) -> (f64, f64) {
    let dlon = normalize_lon(to.lon - from.lon).to_radians();
    let dlat = (to.lat - from.lat).to_radians();
    (EARTH_RADIUS_KM * from.lat.to_radians().cos() * dlon, EARTH_RADIUS_KM * dlat)
}

fn to_unit(p: &GeoPosition) -> [f64; 3] {
    let (la, lo) = (p.lat.to_radians(), p.lon.to_radians());
    [la.cos() * lo.cos(), la.cos() * lo.sin(), la.sin()]
}

fn from_unit(v: [f64; 3], alt: f64) -> GeoPosition {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    let lat = (v[2] / n).clamp(-1.0, 1.0).asin().to_degrees();
    let lon = v[1].atan2(v[0]).to_degrees();
    GeoPosition { lon: normalize_lon(lon), lat, alt }
}

/// Point at fraction `t` along the great circle from `a` to `b`.
pub fn interpolate(a: &GeoPosition, b: &GeoPosition, t: f64) -> GeoPosition {
    let (u, v) = (to_unit(a), to_unit(b));
    let dot = (u[0] * v[0] + u[1] * v[1] + u[2] * v[2]).clamp(-1.0, 1.0);
    let omega = dot.acos();
    if omega < 1e-15 {
        return *a;
    }
    let s = omega.sin();
    let (wa, wb) = (((1.0 - t) * omega).sin() / s, (t * omega).sin() / s);
    from_unit([wa * u[0] + wb * v[0], wa * u[1] + wb * v[1], wa * u[2] + wb * v[2]], a.alt + t * (b.alt - a.alt))
}

/// Signed distance (km) of `p` from the great circle through `a` and `b`.
pub fn cross_track_km(a: &GeoPosition, b: &GeoPosition, p: &GeoPosition) -> f64 {
    let (u, v, w) = (to_unit(a), to_unit(b), to_unit(p));
    let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    let nn = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    let s = (n[0] * w[0] + n[1] * w[1] + n[2] * w[2]) / nn;
    EARTH_RADIUS_KM * s.clamp(-1.0, 1.0).asin()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn one_degree_at_equator() {
        let d = distance_km(&GeoPosition::deg(0.0, 0.0), &GeoPosition::deg(1.0, 0.0));
        assert!((d - 111.32).abs() / 111.32 < 0.005, "{d}");
    }

    #[test]
    fn offset_roundtrip() {
        let p = GeoPosition::deg(152.0, 33.0);
        let q = offset(&p, 3.0, -4.0);
        let (e, n) = local_delta(&p, &q);
        assert_relative_eq!(e, 3.0, epsilon = 1e-9);
        assert_relative_eq!(n, -4.0, epsilon = 1e-9);
        assert_relative_eq!(distance_km(&p, &q), 5.0, max_relative = 1e-3);
    }

    #[test]
    fn dateline_delta_wraps() {
        let (e, _) = local_delta(&GeoPosition::deg(179.9, 0.0), &GeoPosition::deg(-179.9, 0.0));
        assert!(e > 0.0 && e < 23.0);
    }

    #[test]
    fn interpolation_stays_on_circle() {
        let a = GeoPosition::deg(152.0, 33.0);
        let b = GeoPosition::deg(158.0, 28.0);
        let total = distance_km(&a, &b);
        for k in 0..=10 {
            let p = interpolate(&a, &b, k as f64 / 10.0);
            assert!(cross_track_km(&a, &b, &p).abs() < 1e-9);
            assert_relative_eq!(distance_km(&a, &p), total * k as f64 / 10.0, epsilon = 1e-6);
        }
    }
}
