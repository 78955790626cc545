//! C ABI over the geonav simulator.
//!
//! Every entry point returns a [`GeonavStatus`]. On failure the message is
//! kept per thread and read with [`geonav_last_error`]. Handles are opaque,
//! owned by the caller, and released with their `_free` function. Strings
//! returned through out-pointers are released with [`geonav_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use geonav::controller::Variant;
use geonav::geofield::{elements_from_field, evaluate_field, parse_cof, wmm2020, CoefficientSet, GeoPosition};
use geonav::metrics::{monte_carlo, SCHEMA_VERSION};
use geonav::navigator::{run_navigation, trajectory_csv, NavigationResult, Scenario, Termination};
use geonav::scenario::{load_scenario, parse_scenario_file, resolve};

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeonavStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Parse = 5,
    Simulation = 6,
    Panic = 7,
}

/// Controller variant selector.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeonavVariant {
    Lti = 0,
    Ltv = 1,
    Fc = 2,
}

impl From<GeonavVariant> for Variant {
    fn from(v: GeonavVariant) -> Self {
        match v {
            GeonavVariant::Lti => Variant::Lti,
            GeonavVariant::Ltv => Variant::Ltv,
            GeonavVariant::Fc => Variant::Fc,
        }
    }
}

/// Loaded, validated scenario.
pub struct GeonavScenario {
    inner: Scenario,
}

/// Outcome of one navigation run.
pub struct GeonavResult {
    inner: NavigationResult,
}

/// Spherical-harmonic coefficient set.
pub struct GeonavModel {
    inner: CoefficientSet,
}

/// Scalar outcome of one run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GeonavSummary {
    /// 1 when the termination test fired.
    pub reached: i32,
    pub iterations: usize,
    pub samples: usize,
    pub length_km: f64,
    /// Distance from the true terminal position to the destination.
    pub terminal_distance_km: f64,
    pub terminal_lon: f64,
    pub terminal_lat: f64,
    pub fusion_events: usize,
}

/// One visited point, degrees.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GeonavSample {
    pub time_h: f64,
    pub lon: f64,
    pub lat: f64,
    pub estimate_lon: f64,
    pub estimate_lat: f64,
    pub declination: f64,
    pub inclination: f64,
    pub east_kmh: f64,
    pub north_kmh: f64,
}

/// The seven field elements in nT and degrees.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GeonavElements {
    pub bx: f64,
    pub by: f64,
    pub bz: f64,
    pub bh: f64,
    pub bf: f64,
    pub d: f64,
    pub i: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(GeonavStatus, String);

impl Failure {
    fn new(status: GeonavStatus, msg: impl ToString) -> Self {
        Self(status, msg.to_string())
    }
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

/// Runs `f`, recording its error and converting panics into a status.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> GeonavStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            GeonavStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&msg);
            GeonavStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, name: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure::new(GeonavStatus::NullPointer, format!("`{name}` is null")))
    } else {
        Ok(())
    }
}

unsafe fn read_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    non_null(p, name)?;
    CStr::from_ptr(p).to_str().map_err(|e| Failure::new(GeonavStatus::InvalidUtf8, format!("`{name}`: {e}")))
}

fn to_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s).map(CString::into_raw).map_err(|e| Failure::new(GeonavStatus::Parse, e))
}

fn scenario_failure(e: geonav::scenario::ScenarioError) -> Failure {
    use geonav::scenario::ScenarioError as E;
    let status = match e {
        E::Io { .. } => GeonavStatus::Io,
        _ => GeonavStatus::Parse,
    };
    Failure::new(status, e)
}

fn validated(sc: Scenario) -> Result<*mut GeonavScenario, Failure> {
    sc.validate().map_err(|e| Failure::new(GeonavStatus::InvalidArgument, e))?;
    Ok(Box::into_raw(Box::new(GeonavScenario { inner: sc })))
}

/// Message of the last failed call on this thread; empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn geonav_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn geonav_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` is null or a pointer returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn geonav_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a scenario JSON file; relative data paths resolve against its directory.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn geonav_scenario_load(path: *const c_char, out: *mut *mut GeonavScenario) -> GeonavStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let path = read_str(path, "path")?;
        let sc = load_scenario(Path::new(path)).map_err(scenario_failure)?;
        *out = validated(sc)?;
        Ok(())
    })
}

/// Parses a scenario from JSON text; relative data paths resolve against `base_dir`
/// (null means the current directory).
///
/// # Safety
/// `json` and a non-null `base_dir` are NUL-terminated strings; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn geonav_scenario_from_json(
    json: *const c_char,
    base_dir: *const c_char,
    out: *mut *mut GeonavScenario,
) -> GeonavStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let text = read_str(json, "json")?;
        let base = if base_dir.is_null() { "." } else { read_str(base_dir, "base_dir")? };
        let file = parse_scenario_file(text).map_err(scenario_failure)?;
        let sc = resolve(&file, Path::new(base)).map_err(scenario_failure)?;
        *out = validated(sc)?;
        Ok(())
    })
}

/// Overrides the random seed of a scenario.
///
/// # Safety
/// `sc` is a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn geonav_scenario_set_seed(sc: *mut GeonavScenario, seed: u64) -> GeonavStatus {
    guard(|| {
        non_null(sc, "scenario")?;
        (*sc).inner.seed = seed;
        Ok(())
    })
}

/// Overrides the measurement noise standard deviation, degrees.
///
/// # Safety
/// `sc` is a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn geonav_scenario_set_noise(sc: *mut GeonavScenario, noise_deg: f64) -> GeonavStatus {
    guard(|| {
        non_null(sc, "scenario")?;
        if noise_deg.is_nan() || noise_deg < 0.0 {
            return Err(Failure::new(GeonavStatus::InvalidArgument, format!("noise {noise_deg} must be ≥ 0")));
        }
        (*sc).inner.noise_deg = noise_deg;
        Ok(())
    })
}

/// Releases a scenario handle.
///
/// # Safety
/// `sc` is null or a live scenario handle.
#[no_mangle]
pub unsafe extern "C" fn geonav_scenario_free(sc: *mut GeonavScenario) {
    if !sc.is_null() {
        drop(Box::from_raw(sc));
    }
}

/// Runs one navigation with the given controller variant.
///
/// # Safety
/// `sc` is a live scenario handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn geonav_run(sc: *const GeonavScenario, variant: GeonavVariant, out: *mut *mut GeonavResult) -> GeonavStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        non_null(sc, "scenario")?;
        let res = run_navigation(&(*sc).inner, variant.into()).map_err(|e| Failure::new(GeonavStatus::Simulation, e))?;
        *out = Box::into_raw(Box::new(GeonavResult { inner: res }));
        Ok(())
    })
}

/// Scalar outcome of a run.
///
/// # Safety
/// `res` is a live result handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn geonav_result_summary(res: *const GeonavResult, out: *mut GeonavSummary) -> GeonavStatus {
    guard(|| {
        non_null(res, "result")?;
        non_null(out, "out")?;
        let r = &(*res).inner;
        *out = GeonavSummary {
            reached: i32::from(r.terminated == Termination::Reached),
            iterations: r.iterations,
            samples: r.trajectory.len(),
            length_km: r.length_km,
            terminal_distance_km: r.terminal_distance_km,
            terminal_lon: r.true_terminal.lon,
            terminal_lat: r.true_terminal.lat,
            fusion_events: r.fusion_events,
        };
        Ok(())
    })
}

/// Visited point `index` of a run.
///
/// # Safety
/// `res` is a live result handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn geonav_result_sample(res: *const GeonavResult, index: usize, out: *mut GeonavSample) -> GeonavStatus {
    guard(|| {
        non_null(res, "result")?;
        non_null(out, "out")?;
        let samples = &(*res).inner.trajectory.samples;
        let s = samples
            .get(index)
            .ok_or_else(|| Failure::new(GeonavStatus::InvalidArgument, format!("sample {index} out of range (len {})", samples.len())))?;
        *out = GeonavSample {
            time_h: s.time_h,
            lon: s.position.lon,
            lat: s.position.lat,
            estimate_lon: s.estimate.lon,
            estimate_lat: s.estimate.lat,
            declination: s.measured.d,
            inclination: s.measured.i,
            east_kmh: s.command.vx,
            north_kmh: s.command.vy,
        };
        Ok(())
    })
}

/// Trajectory of a run as CSV text; release with [`geonav_string_free`].
///
/// # Safety
/// `res` is a live result handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn geonav_result_trajectory_csv(res: *const GeonavResult, out: *mut *mut c_char) -> GeonavStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        non_null(res, "result")?;
        *out = to_c_string(trajectory_csv(&(*res).inner.trajectory, SCHEMA_VERSION))?;
        Ok(())
    })
}

/// Releases a result handle.
///
/// # Safety
/// `res` is null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn geonav_result_free(res: *mut GeonavResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Monte Carlo ensemble; the report is JSON text released with [`geonav_string_free`].
///
/// # Safety
/// `sc` is a live scenario handle; `out_json` is writable.
#[no_mangle]
pub unsafe extern "C" fn geonav_monte_carlo(
    sc: *const GeonavScenario,
    variant: GeonavVariant,
    runs: usize,
    master_seed: u64,
    out_json: *mut *mut c_char,
) -> GeonavStatus {
    guard(|| {
        non_null(out_json, "out_json")?;
        *out_json = ptr::null_mut();
        non_null(sc, "scenario")?;
        if runs == 0 {
            return Err(Failure::new(GeonavStatus::InvalidArgument, "runs must be ≥ 1"));
        }
        let report = monte_carlo(&(*sc).inner, variant.into(), runs, master_seed).map_err(|e| Failure::new(GeonavStatus::Simulation, e))?;
        let json = serde_json::to_string(&report).map_err(|e| Failure::new(GeonavStatus::Parse, e))?;
        *out_json = to_c_string(json)?;
        Ok(())
    })
}

/// The bundled WMM2020 coefficients.
///
/// # Safety
/// `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn geonav_model_wmm2020(out: *mut *mut GeonavModel) -> GeonavStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = Box::into_raw(Box::new(GeonavModel { inner: wmm2020() }));
        Ok(())
    })
}

/// Parses coefficient-file text.
///
/// # Safety
/// `text` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn geonav_model_parse(text: *const c_char, out: *mut *mut GeonavModel) -> GeonavStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = ptr::null_mut();
        let text = read_str(text, "text")?;
        let model = parse_cof(text).map_err(|e| Failure::new(GeonavStatus::Parse, e))?;
        *out = Box::into_raw(Box::new(GeonavModel { inner: model }));
        Ok(())
    })
}

/// Field elements at (lon, lat) degrees, altitude km, decimal-year date.
///
/// # Safety
/// `model` is a live model handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn geonav_model_elements(
    model: *const GeonavModel,
    lon: f64,
    lat: f64,
    alt_km: f64,
    date: f64,
    out: *mut GeonavElements,
) -> GeonavStatus {
    guard(|| {
        non_null(model, "model")?;
        non_null(out, "out")?;
        let bad = |e: geonav::geofield::FieldError| Failure::new(GeonavStatus::InvalidArgument, e);
        let pos = GeoPosition::new(lon, lat, alt_km).map_err(bad)?;
        let e = elements_from_field(&evaluate_field(&(*model).inner, &pos, date).map_err(bad)?).map_err(bad)?;
        *out = GeonavElements { bx: e.bx, by: e.by, bz: e.bz, bh: e.bh, bf: e.bf, d: e.d, i: e.i };
        Ok(())
    })
}

/// Releases a model handle.
///
/// # Safety
/// `model` is null or a live model handle.
#[no_mangle]
pub unsafe extern "C" fn geonav_model_free(model: *mut GeonavModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}
