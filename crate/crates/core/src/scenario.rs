//! JSON scenario files. Absent optional keys take the defaults below; the
//! shipped `pacific_clean.json` spells every mission value out.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{ControllerConfig, Variant};
use crate::fusion::{FusionConfig, TriggerRule};
use crate::geofield::{parse_cof, wmm2020, FieldError, FieldSource, GeoPosition};
use crate::gradient::{GradientRule, DEFAULT_EPS_V_KM};
use crate::ins::InsConfig;
use crate::navigator::{Scenario, StormSpec, TerminationBasis};
use crate::storm::{build_anomaly_table, parse_storm_csv, GridSpec, Interpolator, StormError, TimeMapping};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {msg}")]
    Io { path: String, msg: String },
    #[error("scenario json: {0}")]
    Json(String),
    #[error("invalid `{key}`: {msg}")]
    Invalid { key: String, msg: String },
    #[error("storm data: {0}")]
    Storm(#[from] StormError),
    #[error("coefficient file: {0}")]
    Field(#[from] FieldError),
}

fn invalid(key: &str, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { key: key.into(), msg: msg.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    /// The bundled WMM2020 coefficients.
    Wmm2020,
    /// A coefficient file, relative to the scenario file.
    Coefficients { path: PathBuf },
    /// Axial dipole with the given `g10` (nT).
    Dipole { g10: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StormFileSpec {
    /// Storm CSV, relative to the scenario file.
    pub path: PathBuf,
    #[serde(default)]
    pub grid: Option<GridSpec>,
    #[serde(default)]
    pub interpolator: Interpolator,
    #[serde(default = "default_mission_h")]
    pub mission_duration_h: f64,
}

fn default_mission_h() -> f64 {
    TimeMapping::default().mission_duration_h
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FusionSpec {
    pub q_c_position: f64,
    pub p0_position: f64,
    pub r_c: f64,
    /// Threshold on the gradient, deg/km.
    pub sigma: f64,
    pub trigger: TriggerRule,
    pub variants: Vec<Variant>,
    pub reset_ins: bool,
}

impl Default for FusionSpec {
    fn default() -> Self {
        Self {
            q_c_position: 0.05,
            p0_position: 1.0,
            r_c: 2.0,
            sigma: 1e-3,
            trigger: TriggerRule::MinAbsEntry,
            variants: vec![Variant::Fc],
            reset_ins: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default = "default_name")]
    pub name: String,
    pub start: GeoPosition,
    pub destination: GeoPosition,
    #[serde(default = "default_date")]
    pub date: f64,
    #[serde(default = "default_field")]
    pub field: FieldSpec,
    #[serde(default)]
    pub storm: Option<StormFileSpec>,
    #[serde(default)]
    pub controller: ControllerConfig,
    #[serde(default)]
    pub ins: InsConfig,
    #[serde(default)]
    pub fusion: FusionSpec,
    #[serde(default = "default_epsilon")]
    pub epsilon_km: f64,
    #[serde(default = "default_max_iter")]
    pub max_iterations: usize,
    #[serde(default = "default_noise")]
    pub noise_deg: f64,
    #[serde(default)]
    pub motion_noise_km: f64,
    #[serde(default = "default_leg")]
    pub probe_leg_km: f64,
    #[serde(default = "default_headings")]
    pub probe_headings_deg: [f64; 2],
    #[serde(default)]
    pub gradient_rule: GradientRule,
    #[serde(default = "default_eps_v")]
    pub eps_v_km: f64,
    #[serde(default)]
    pub termination: TerminationBasis,
    #[serde(default)]
    pub seed: u64,
    /// Free-form descriptive values carried through unchanged.
    #[serde(default)]
    pub metadata: serde_json::Value,
}

fn default_name() -> String {
    "scenario".into()
}
fn default_date() -> f64 {
    2024.36
}
fn default_field() -> FieldSpec {
    FieldSpec::Wmm2020
}
fn default_epsilon() -> f64 {
    2.5
}
fn default_max_iter() -> usize {
    2000
}
fn default_noise() -> f64 {
    0.002
}
fn default_leg() -> f64 {
    1.0
}
fn default_headings() -> [f64; 2] {
    [0.0, 270.0]
}
fn default_eps_v() -> f64 {
    DEFAULT_EPS_V_KM
}

fn check_position(key: &str, p: &GeoPosition) -> Result<(), ScenarioError> {
    if !p.lat.is_finite() || !(-90.0..=90.0).contains(&p.lat) {
        return Err(invalid(&format!("{key}.lat"), format!("{} outside [-90, 90]", p.lat)));
    }
    if !p.lon.is_finite() || !(-180.0..=360.0).contains(&p.lon) {
        return Err(invalid(&format!("{key}.lon"), format!("{} outside [-180, 360]", p.lon)));
    }
    Ok(())
}

fn read(path: &Path) -> Result<String, ScenarioError> {
    std::fs::read_to_string(path).map_err(|e| ScenarioError::Io { path: path.display().to_string(), msg: e.to_string() })
}

/// Parses a scenario document without resolving files.
pub fn parse_scenario_file(text: &str) -> Result<ScenarioFile, ScenarioError> {
    let f: ScenarioFile = serde_json::from_str(text).map_err(|e| ScenarioError::Json(e.to_string()))?;
    check_position("start", &f.start)?;
    check_position("destination", &f.destination)?;
    if !(f.epsilon_km > 0.0) {
        return Err(invalid("epsilon_km", "must be > 0"));
    }
    if f.max_iterations < 1 {
        return Err(invalid("max_iterations", "must be ≥ 1"));
    }
    if !(f.noise_deg >= 0.0) {
        return Err(invalid("noise_deg", "must be ≥ 0"));
    }
    if !(f.motion_noise_km >= 0.0) {
        return Err(invalid("motion_noise_km", "must be ≥ 0"));
    }
    if !(f.probe_leg_km > 0.0) {
        return Err(invalid("probe_leg_km", "must be > 0"));
    }
    if !(f.fusion.sigma >= 0.0) {
        return Err(invalid("fusion.sigma", "must be ≥ 0"));
    }
    if !(f.fusion.r_c > 0.0) {
        return Err(invalid("fusion.r_c", "must be > 0"));
    }
    f.controller.validate().map_err(|e| invalid("controller", e.to_string()))?;
    Ok(f)
}

/// Loads a coefficient file into a field source.
pub fn load_coefficients(path: &Path) -> Result<FieldSource, ScenarioError> {
    Ok(FieldSource::Model(Arc::new(parse_cof(&read(path)?)?)))
}

/// Loads a storm CSV into an anomaly table.
pub fn load_storm(path: &Path, grid: Option<GridSpec>, interp: Interpolator, mission_h: f64) -> Result<StormSpec, ScenarioError> {
    let recs = parse_storm_csv(&read(path)?)?;
    let table = build_anomaly_table(&recs, grid.unwrap_or_default(), interp)?;
    Ok(StormSpec { table: Arc::new(table), mapping: TimeMapping { mission_duration_h: mission_h } })
}

/// Resolves a parsed file; relative paths are taken from `base_dir`.
pub fn resolve(f: &ScenarioFile, base_dir: &Path) -> Result<Scenario, ScenarioError> {
    let field = match &f.field {
        FieldSpec::Wmm2020 => FieldSource::Model(Arc::new(wmm2020())),
        FieldSpec::Coefficients { path } => load_coefficients(&base_dir.join(path))?,
        FieldSpec::Dipole { g10 } => FieldSource::Dipole { g10: *g10 },
    };
    let storm = match &f.storm {
        None => None,
        Some(s) => Some(load_storm(&base_dir.join(&s.path), s.grid, s.interpolator, s.mission_duration_h)?),
    };
    let fs = &f.fusion;
    let mut start = f.start;
    start.lon = crate::geofield::normalize_lon(start.lon);
    let mut destination = f.destination;
    destination.lon = crate::geofield::normalize_lon(destination.lon);
    Ok(Scenario {
        name: f.name.clone(),
        start,
        destination,
        date: f.date,
        field,
        storm,
        controller: f.controller.clone(),
        ins: f.ins,
        fusion: FusionConfig::with_values(fs.q_c_position, fs.p0_position, fs.r_c),
        fusion_variants: fs.variants.clone(),
        trigger: fs.trigger,
        sigma: fs.sigma,
        reset_ins_on_fusion: fs.reset_ins,
        epsilon_km: f.epsilon_km,
        max_iterations: f.max_iterations,
        noise_deg: f.noise_deg,
        motion_noise_km: f.motion_noise_km,
        probe_leg_km: f.probe_leg_km,
        probe_headings_deg: f.probe_headings_deg,
        gradient_rule: f.gradient_rule,
        eps_v_km: f.eps_v_km,
        termination: f.termination,
        seed: f.seed,
    })
}

/// Reads, validates and resolves a scenario file.
pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let f = parse_scenario_file(&read(path)?)?;
    resolve(&f, path.parent().unwrap_or(Path::new(".")))
}

/// Directory holding the shipped scenarios and data.
pub fn shipped_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

/// Loads one of the shipped scenarios by file name, e.g. `pacific_clean.json`.
pub fn shipped_scenario(name: &str) -> Result<Scenario, ScenarioError> {
    load_scenario(&shipped_dir().join("scenarios").join(name))
}
