//! Observatory disturbance records and time-varying gridded anomaly tables.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::distance_km;
use crate::geofield::GeoPosition;

#[derive(Debug, Error, PartialEq)]
pub enum StormError {
    #[error("storm csv line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("no station records in {0}")]
    NoData(String),
    #[error("position ({lon}, {lat}) outside the anomaly grid")]
    OutOfRegion { lon: f64, lat: f64 },
    #[error("invalid grid: {0}")]
    Grid(String),
}

/// One observatory sample. Components in nanotesla, x north, y east, z down.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationRecord {
    pub time_s: f64,
    pub lon: f64,
    pub lat: f64,
    pub dbx: f64,
    pub dby: f64,
    pub dbz: Option<f64>,
}

/// Disturbance at a point. `dbh` carries the sign of `dbx`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct AnomalySample {
    pub dbx: f64,
    pub dby: f64,
    pub dbz: f64,
    pub dbh: f64,
}

impl AnomalySample {
    pub fn from_components(dbx: f64, dby: f64, dbz: Option<f64>) -> Self {
        Self { dbx, dby, dbz: dbz.unwrap_or(0.0), dbh: horizontal_intensity(dbx, dby) }
    }
}

/// Signed horizontal disturbance intensity; the sign follows `dbx`, with
/// `dbx == 0` counted as positive.
pub fn horizontal_intensity(dbx: f64, dby: f64) -> f64 {
    let mag = dbx.hypot(dby);
    if dbx < 0.0 {
        -mag
    } else {
        mag
    }
}

const STORM_HEADER: [&str; 6] = ["time_s", "lon_deg", "lat_deg", "dbx_nt", "dby_nt", "dbz_nt"];

/// Parses `time_s,lon_deg,lat_deg,dbx_nt,dby_nt,dbz_nt` rows; `dbz_nt` may be empty.
/// Blank lines and lines starting with `#` are skipped.
pub fn parse_storm_csv(text: &str) -> Result<Vec<StationRecord>, StormError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
    let Some((hline, header)) = lines.next() else {
        return Ok(Vec::new());
    };
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    for want in STORM_HEADER {
        if !cols.contains(&want) {
            return Err(StormError::Parse { line: hline, msg: format!("missing column `{want}`") });
        }
    }
    let idx = |name: &str| cols.iter().position(|c| *c == name).expect("checked above");
    let ix: Vec<usize> = STORM_HEADER.iter().map(|n| idx(n)).collect();

    let mut out = Vec::new();
    for (line, row) in lines {
        let fields: Vec<&str> = row.split(',').map(str::trim).collect();
        if fields.len() < cols.len() - 1 || fields.len() > cols.len() {
            return Err(StormError::Parse { line, msg: format!("expected {} fields, got {}", cols.len(), fields.len()) });
        }
        let field = |k: usize| fields.get(ix[k]).copied().unwrap_or("");
        let num = |k: usize| -> Result<f64, StormError> {
            let s = field(k);
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| StormError::Parse { line, msg: format!("bad number `{s}` in `{}`", STORM_HEADER[k]) })
        };
        let rec = StationRecord {
            time_s: num(0)?,
            lon: num(1)?,
            lat: num(2)?,
            dbx: num(3)?,
            dby: num(4)?,
            dbz: if field(5).is_empty() { None } else { Some(num(5)?) },
        };
        if rec.time_s < 0.0 {
            return Err(StormError::Parse { line, msg: "negative time".into() });
        }
        if !(-90.0..=90.0).contains(&rec.lat) || !(-180.0..=360.0).contains(&rec.lon) {
            return Err(StormError::Parse { line, msg: format!("coordinates ({}, {}) out of range", rec.lon, rec.lat) });
        }
        out.push(rec);
    }
    Ok(out)
}

/// Spatial interpolation backend.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Interpolator {
    /// Inverse distance weighting with power 2.
    #[default]
    Idw,
    /// Ordinary kriging, exponential variogram `sill·(1 − exp(−h/range))`.
    Kriging { range_km: f64, sill: f64, nugget: f64 },
}

/// Interpolates the disturbance at `at` from one time bin of records.
pub fn interpolate_anomaly(records: &[StationRecord], at: &GeoPosition, method: Interpolator) -> Result<AnomalySample, StormError> {
    if records.is_empty() {
        return Err(StormError::NoData("time bin".into()));
    }
    let weights = match method {
        Interpolator::Idw => idw_weights(records, at),
        Interpolator::Kriging { range_km, sill, nugget } => kriging_weights(records, at, range_km, sill, nugget),
    };
    let (mut x, mut y, mut z) = (0.0, 0.0, 0.0);
    let mut any_z = false;
    for (r, w) in records.iter().zip(&weights) {
        x += w * r.dbx;
        y += w * r.dby;
        if let Some(v) = r.dbz {
            any_z = true;
            z += w * v;
        }
    }
    Ok(AnomalySample::from_components(x, y, any_z.then_some(z)))
}

fn station_pos(r: &StationRecord) -> GeoPosition {
    GeoPosition { lon: r.lon, lat: r.lat, alt: 0.0 }
}

fn idw_weights(records: &[StationRecord], at: &GeoPosition) -> Vec<f64> {
    let d: Vec<f64> = records.iter().map(|r| distance_km(&station_pos(r), at)).collect();
    if let Some(hit) = d.iter().position(|&v| v < 1e-9) {
        let mut w = vec![0.0; records.len()];
        w[hit] = 1.0;
        return w;
    }
    let raw: Vec<f64> = d.iter().map(|v| 1.0 / (v * v)).collect();
    let s: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / s).collect()
}

fn kriging_weights(records: &[StationRecord], at: &GeoPosition, range_km: f64, sill: f64, nugget: f64) -> Vec<f64> {
    let n = records.len();
    let gamma = |h: f64| if h <= 0.0 { 0.0 } else { nugget + sill * (1.0 - (-h / range_km).exp()) };
    let mut a = DMatrix::zeros(n + 1, n + 1);
    let mut b = DVector::zeros(n + 1);
    for i in 0..n {
        for j in 0..n {
            a[(i, j)] = gamma(distance_km(&station_pos(&records[i]), &station_pos(&records[j])));
        }
        a[(i, n)] = 1.0;
        a[(n, i)] = 1.0;
        b[i] = gamma(distance_km(&station_pos(&records[i]), at));
    }
    b[n] = 1.0;
    match a.clone().lu().solve(&b) {
        Some(sol) => sol.rows(0, n).iter().copied().collect(),
        None => idw_weights(records, at),
    }
}

/// Regular lon/lat grid; cell centres at `lon_min + (j + ½)·cell_deg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
    pub cell_deg: f64,
    pub bin_s: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { lon_min: 145.0, lon_max: 165.0, lat_min: 27.0, lat_max: 34.0, cell_deg: 1.0, bin_s: 3600.0 }
    }
}

impl GridSpec {
    fn dims(&self) -> Result<(usize, usize), StormError> {
        if !(self.cell_deg > 0.0 && self.bin_s > 0.0 && self.lon_max > self.lon_min && self.lat_max > self.lat_min) {
            return Err(StormError::Grid(format!("{self:?}")));
        }
        let nlon = ((self.lon_max - self.lon_min) / self.cell_deg).ceil() as usize;
        let nlat = ((self.lat_max - self.lat_min) / self.cell_deg).ceil() as usize;
        Ok((nlat, nlon))
    }
}

/// Immutable grid of samples indexed by (time bin, lat cell, lon cell).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyTable {
    pub grid: GridSpec,
    pub t0_s: f64,
    pub n_bins: usize,
    pub n_lat: usize,
    pub n_lon: usize,
    cells: Vec<AnomalySample>,
}

impl AnomalyTable {
    /// Dataset span covered by the bins, in seconds.
    pub fn duration_s(&self) -> f64 {
        self.n_bins as f64 * self.grid.bin_s
    }

    pub fn cell(&self, bin: usize, ilat: usize, ilon: usize) -> &AnomalySample {
        &self.cells[(bin * self.n_lat + ilat) * self.n_lon + ilon]
    }

    /// Looks up the cell containing `pos` at dataset time `t_s` (clamped to the table span).
    pub fn lookup(&self, pos: &GeoPosition, t_s: f64) -> Result<AnomalySample, StormError> {
        let g = &self.grid;
        let out = || StormError::OutOfRegion { lon: pos.lon, lat: pos.lat };
        if pos.lon < g.lon_min || pos.lon > g.lon_max || pos.lat < g.lat_min || pos.lat > g.lat_max {
            return Err(out());
        }
        let ilon = (((pos.lon - g.lon_min) / g.cell_deg) as usize).min(self.n_lon - 1);
        let ilat = (((pos.lat - g.lat_min) / g.cell_deg) as usize).min(self.n_lat - 1);
        let rel = ((t_s - self.t0_s) / g.bin_s).max(0.0);
        let bin = (rel as usize).min(self.n_bins - 1);
        Ok(*self.cell(bin, ilat, ilon))
    }
}

/// Bins records by `grid.bin_s` from the earliest time and fills every cell.
pub fn build_anomaly_table(records: &[StationRecord], grid: GridSpec, method: Interpolator) -> Result<AnomalyTable, StormError> {
    if records.is_empty() {
        return Err(StormError::NoData("dataset".into()));
    }
    let (n_lat, n_lon) = grid.dims()?;
    let t0 = records.iter().map(|r| r.time_s).fold(f64::INFINITY, f64::min);
    let t1 = records.iter().map(|r| r.time_s).fold(f64::NEG_INFINITY, f64::max);
    let n_bins = ((t1 - t0) / grid.bin_s).floor() as usize + 1;
    let mut bins: Vec<Vec<StationRecord>> = vec![Vec::new(); n_bins];
    for r in records {
        let b = (((r.time_s - t0) / grid.bin_s).floor() as usize).min(n_bins - 1);
        bins[b].push(*r);
    }
    let mut cells = Vec::with_capacity(n_bins * n_lat * n_lon);
    for (b, recs) in bins.iter().enumerate() {
        if recs.is_empty() {
            return Err(StormError::NoData(format!("time bin {b} starting at {} s", t0 + b as f64 * grid.bin_s)));
        }
        for ilat in 0..n_lat {
            for ilon in 0..n_lon {
                let at = GeoPosition {
                    lon: grid.lon_min + (ilon as f64 + 0.5) * grid.cell_deg,
                    lat: grid.lat_min + (ilat as f64 + 0.5) * grid.cell_deg,
                    alt: 0.0,
                };
                cells.push(interpolate_anomaly(recs, &at, method)?);
            }
        }
    }
    Ok(AnomalyTable { grid, t0_s: t0, n_bins, n_lat, n_lon, cells })
}

/// Maps mission time onto dataset time by a linear stretch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeMapping {
    /// Mission span (hours) stretched onto the whole dataset.
    pub mission_duration_h: f64,
}

impl Default for TimeMapping {
    fn default() -> Self {
        Self { mission_duration_h: 16.4 }
    }
}

impl TimeMapping {
    pub fn dataset_time_s(&self, table: &AnomalyTable, mission_time_s: f64) -> f64 {
        let frac = (mission_time_s / (self.mission_duration_h * 3600.0)).clamp(0.0, 1.0);
        // the last instant maps inside the final bin
        table.t0_s + frac * (table.duration_s() - 1e-9 * table.grid.bin_s).max(0.0)
    }
}

/// Disturbance at `pos` and mission time (seconds).
pub fn anomaly_at(
    table: &AnomalyTable,
    pos: &GeoPosition,
    mission_time_s: f64,
    mapping: &TimeMapping,
) -> Result<AnomalySample, StormError> {
    table.lookup(pos, mapping.dataset_time_s(table, mission_time_s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: f64, lon: f64, lat: f64, x: f64, y: f64) -> StationRecord {
        StationRecord { time_s: t, lon, lat, dbx: x, dby: y, dbz: None }
    }

    #[test]
    fn parses_row_without_dbz() {
        let r = parse_storm_csv("time_s,lon_deg,lat_deg,dbx_nt,dby_nt,dbz_nt\n0,150.0,30.0,-3.0,4.0,\n").unwrap();
        assert_eq!(r, vec![rec(0.0, 150.0, 30.0, -3.0, 4.0)]);
    }

    #[test]
    fn empty_body_is_empty() {
        assert!(parse_storm_csv("time_s,lon_deg,lat_deg,dbx_nt,dby_nt,dbz_nt\n").unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_latitude_and_numbers() {
        let e = parse_storm_csv("time_s,lon_deg,lat_deg,dbx_nt,dby_nt,dbz_nt\n0,150,95,1,1,\n").unwrap_err();
        assert!(matches!(e, StormError::Parse { line: 2, .. }));
        let e = parse_storm_csv("time_s,lon_deg,lat_deg,dbx_nt,dby_nt,dbz_nt\n0,150,30,x,1,\n").unwrap_err();
        assert!(matches!(e, StormError::Parse { line: 2, .. }));
        let e = parse_storm_csv("time_s,lon_deg,lat_deg,dbx_nt,dbz_nt\n").unwrap_err();
        assert!(matches!(e, StormError::Parse { line: 1, .. }));
    }

    #[test]
    fn sign_law() {
        assert_eq!(horizontal_intensity(3.0, 4.0), 5.0);
        assert_eq!(horizontal_intensity(-3.0, 4.0), -5.0);
        assert_eq!(horizontal_intensity(0.0, 7.0), 7.0);
    }

    #[test]
    fn idw_exact_and_symmetric() {
        let recs = [rec(0.0, 150.0, 30.0, 10.0, 2.0), rec(0.0, 152.0, 30.0, 20.0, 4.0)];
        let at = GeoPosition::deg(150.0, 30.0);
        let s = interpolate_anomaly(&recs, &at, Interpolator::Idw).unwrap();
        assert_eq!((s.dbx, s.dby), (10.0, 2.0));
        let mid = GeoPosition::deg(151.0, 30.0);
        let s = interpolate_anomaly(&recs, &mid, Interpolator::Idw).unwrap();
        assert!((s.dbx - 15.0).abs() < 1e-9 && (s.dby - 3.0).abs() < 1e-9);
    }

    #[test]
    fn kriging_exact_at_station() {
        let recs = [rec(0.0, 150.0, 30.0, 10.0, 2.0), rec(0.0, 155.0, 31.0, -5.0, 4.0), rec(0.0, 160.0, 28.0, 1.0, 1.0)];
        let k = Interpolator::Kriging { range_km: 500.0, sill: 1.0, nugget: 0.0 };
        let s = interpolate_anomaly(&recs, &GeoPosition::deg(155.0, 31.0), k).unwrap();
        assert!((s.dbx + 5.0).abs() < 1e-6);
    }

    #[test]
    fn table_single_station_uniform_and_time_mapping() {
        let recs = [rec(0.0, 150.0, 30.0, 3.0, 4.0), rec(3600.0, 150.0, 30.0, -6.0, 8.0)];
        let t = build_anomaly_table(&recs, GridSpec::default(), Interpolator::Idw).unwrap();
        assert_eq!(t.n_bins, 2);
        let m = TimeMapping { mission_duration_h: 10.0 };
        let p = GeoPosition::deg(160.0, 28.0);
        assert_eq!(anomaly_at(&t, &p, 0.0, &m).unwrap().dbh, 5.0);
        assert_eq!(anomaly_at(&t, &p, 36000.0, &m).unwrap().dbh, -10.0);
        assert!(anomaly_at(&t, &GeoPosition::deg(100.0, 28.0), 0.0, &m).is_err());
    }

    #[test]
    fn empty_bin_is_named() {
        let recs = [rec(0.0, 150.0, 30.0, 3.0, 4.0), rec(7200.0, 150.0, 30.0, 3.0, 4.0)];
        let e = build_anomaly_table(&recs, GridSpec::default(), Interpolator::Idw).unwrap_err();
        assert!(matches!(e, StormError::NoData(ref s) if s.contains("bin 1")));
    }
}
