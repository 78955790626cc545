//! Command-line driver: `run` for simulations and Monte Carlo comparisons,
//! `replay` for recorded tracks.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::controller::{DiState, Variant};
use crate::error::{Error, Result};
use crate::geodesy::{distance_km, offset};
use crate::geofield::GeoPosition;
use crate::metrics::{self, run_metrics, summary_row, EnsembleReport, RunMetrics, SCHEMA_VERSION, SUMMARY_HEADER};
use crate::navigator::{
    run_navigation, run_with_environment, trajectory_csv, Environment, NavError, NavigationResult, Scenario, Trajectory,
};
use crate::scenario::{load_coefficients, load_scenario, load_storm};
use crate::storm::Interpolator;

#[derive(Debug, Parser)]
#[command(name = "geonav", version, about = "Mapless geomagnetic/inertial navigation simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one or more controller variants.
    Run(CliConfig),
    /// Drive the loop from a recorded track.
    Replay(CliConfig),
}

#[derive(Debug, Clone, Args)]
pub struct CliConfig {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Comma-separated subset of lti, ltv, fc.
    #[arg(long, default_value = "lti,ltv,fc")]
    pub variants: String,
    #[arg(long, default_value_t = 1)]
    pub runs: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Storm CSV replacing the scenario's storm.
    #[arg(long)]
    pub storm: Option<PathBuf>,
    /// Coefficient file replacing the scenario's field.
    #[arg(long)]
    pub coefficients: Option<PathBuf>,
    /// Recorded track for `replay`.
    #[arg(long)]
    pub track: Option<PathBuf>,
    /// Also write a full-precision `<variant>_track.csv` usable by `replay`.
    #[arg(long)]
    pub export_track: bool,
}

/// Parses a comma-separated variant list, keeping first occurrences in order.
pub fn parse_variants(list: &str) -> Result<Vec<Variant>> {
    let mut out = Vec::new();
    for part in list.split(',').filter(|s| !s.trim().is_empty()) {
        let v: Variant = part.parse().map_err(|e: crate::controller::ControllerError| Error::Usage(e.to_string()))?;
        if !out.contains(&v) {
            out.push(v);
        }
    }
    if out.is_empty() {
        return Err(Error::Usage("no variants selected".into()));
    }
    Ok(out)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io { path: path.display().to_string(), source })
}

fn load(cfg: &CliConfig) -> Result<Scenario> {
    let mut sc = load_scenario(&cfg.scenario)?;
    if let Some(p) = &cfg.coefficients {
        sc.field = load_coefficients(p)?;
    }
    if let Some(p) = &cfg.storm {
        let mapping = sc.storm.as_ref().map(|s| s.mapping).unwrap_or_default();
        sc.storm = Some(load_storm(p, None, Interpolator::Idw, mapping.mission_duration_h)?);
    }
    sc.seed = cfg.seed;
    Ok(sc)
}

fn to_json<T: Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Usage(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Header of the full-precision replay track.
pub const TRACK_HEADER: &str = "k,time_h,gps_lon_deg,gps_lat_deg,d_deg,i_deg,ins_lon_deg,ins_lat_deg";

/// Full-precision track of a run, readable by [`parse_track`].
pub fn track_csv(traj: &Trajectory) -> String {
    let mut out = format!("# schema_version={SCHEMA_VERSION}\n{TRACK_HEADER}\n");
    for s in &traj.samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            s.k, s.time_h, s.position.lon, s.position.lat, s.measured.d, s.measured.i, s.ins.lon, s.ins.lat
        );
    }
    out
}

/// One recorded sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackRow {
    pub time_h: f64,
    pub gps: GeoPosition,
    pub di: DiState,
    pub ins: Option<GeoPosition>,
}

/// Parses a track CSV; INS columns may be empty.
pub fn parse_track(text: &str) -> std::result::Result<Vec<TrackRow>, NavError> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != TRACK_HEADER {
                return Err(NavError::Track(format!("line {}: expected header `{TRACK_HEADER}`", n + 1)));
            }
            header_seen = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 8 {
            return Err(NavError::Track(format!("line {}: expected 8 fields, got {}", n + 1, f.len())));
        }
        let num = |k: usize| -> std::result::Result<f64, NavError> {
            f[k].parse::<f64>().map_err(|_| NavError::Track(format!("line {}: bad number `{}`", n + 1, f[k])))
        };
        let ins = if f[6].is_empty() || f[7].is_empty() { None } else { Some(GeoPosition { lon: num(6)?, lat: num(7)?, alt: 0.0 }) };
        rows.push(TrackRow {
            time_h: num(1)?,
            gps: GeoPosition { lon: num(2)?, lat: num(3)?, alt: 0.0 },
            di: DiState { d: num(4)?, i: num(5)? },
            ins,
        });
    }
    if rows.len() < 3 {
        return Err(NavError::Track(format!("insufficient samples for stencil: {} rows, need at least 3", rows.len())));
    }
    Ok(rows)
}

/// Feeds recorded D/I, GPS and INS positions to the loop by sample index.
pub struct ReplayEnvironment {
    rows: Vec<TrackRow>,
}

impl ReplayEnvironment {
    pub fn new(rows: Vec<TrackRow>) -> Self {
        Self { rows }
    }
}

impl Environment for ReplayEnvironment {
    fn measure(&mut self, j: usize, _pos: &GeoPosition, _t_h: f64) -> std::result::Result<DiState, NavError> {
        self.rows.get(j).map(|r| r.di).ok_or_else(|| NavError::Track(format!("track exhausted at sample {j}")))
    }

    fn advance(&mut self, j: usize, pos: &GeoPosition, east_km: f64, north_km: f64) -> std::result::Result<GeoPosition, NavError> {
        Ok(self.rows.get(j + 1).map(|r| r.gps).unwrap_or_else(|| offset(pos, east_km, north_km)))
    }

    fn inertial(&mut self, j: usize, pos: &GeoPosition, _heading: f64, _dt: f64) -> std::result::Result<GeoPosition, NavError> {
        Ok(self.rows.get(j).and_then(|r| r.ins).unwrap_or(*pos))
    }
}

#[derive(Debug, Serialize)]
struct ReplayReport<'a> {
    schema_version: &'a str,
    scenario: &'a str,
    variant: Variant,
    terminated: crate::navigator::Termination,
    metrics: RunMetrics,
    /// Distance from the estimated terminal position to the recorded GPS endpoint.
    terminal_to_recorded_end_km: f64,
}

fn write_outputs(out: &Path, variant: Variant, traj: &Trajectory, report_json: &str, export_track: bool) -> Result<()> {
    write_file(&out.join(format!("{variant}_trajectory.csv")), &trajectory_csv(traj, SCHEMA_VERSION))?;
    write_file(&out.join(format!("{variant}_report.json")), report_json)?;
    if export_track {
        write_file(&out.join(format!("{variant}_track.csv")), &track_csv(traj))?;
    }
    Ok(())
}

fn ensure_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|source| Error::Io { path: out.display().to_string(), source })
}

fn comparison_csv(rows: &[String]) -> String {
    let mut s = format!("# schema_version={SCHEMA_VERSION}\n{SUMMARY_HEADER}\n");
    for r in rows {
        s.push_str(r);
        s.push('\n');
    }
    s
}

/// `run`: simulate each selected variant and write its outputs.
pub fn cmd_run(cfg: &CliConfig) -> Result<()> {
    if cfg.runs < 1 {
        return Err(Error::Usage("--runs must be ≥ 1".into()));
    }
    let variants = parse_variants(&cfg.variants)?;
    let sc = load(cfg)?;
    ensure_dir(&cfg.out)?;
    let mut rows = Vec::new();
    for v in variants {
        let report: EnsembleReport = metrics::monte_carlo(&sc, v, cfg.runs, cfg.seed)?;
        let mut first = sc.clone();
        first.seed = report.runs.first().map(|r| r.seed).unwrap_or(cfg.seed);
        let nav = run_navigation(&first, v)?;
        write_outputs(&cfg.out, v, &nav.trajectory, &to_json(&report)?, cfg.export_track)?;
        rows.push(summary_row(&report));
        log::info!("{v}: {} runs, cep {:.4} km", report.runs.len(), report.cep_km);
    }
    write_file(&cfg.out.join("comparison.csv"), &comparison_csv(&rows))
}

/// Replays `rows` through the loop for `variant`.
pub fn replay_track(sc: &Scenario, variant: Variant, rows: Vec<TrackRow>) -> std::result::Result<NavigationResult, NavError> {
    let mut sc = sc.clone();
    if let Some(first) = rows.first() {
        sc.start = first.gps;
    }
    let mut env = ReplayEnvironment::new(rows);
    run_with_environment(&sc, variant, &mut env)
}

/// `replay`: run the loop on a recorded track.
pub fn cmd_replay(cfg: &CliConfig) -> Result<()> {
    let track = cfg.track.as_ref().ok_or_else(|| Error::Usage("replay requires --track".into()))?;
    let text = std::fs::read_to_string(track).map_err(|source| Error::Io { path: track.display().to_string(), source })?;
    let rows = parse_track(&text)?;
    let end = rows.last().expect("at least three rows").gps;
    let variants = parse_variants(&cfg.variants)?;
    let sc = load(cfg)?;
    ensure_dir(&cfg.out)?;
    let mut lines = Vec::new();
    for v in variants {
        let nav = replay_track(&sc, v, rows.clone())?;
        let m = run_metrics(&nav, &nav.trajectory.samples[0].position, &sc.destination, metrics::DEFAULT_MATCH_TOL_KM, 0, cfg.seed)?;
        let rep = ReplayReport {
            schema_version: SCHEMA_VERSION,
            scenario: &sc.name,
            variant: v,
            terminated: nav.terminated,
            terminal_to_recorded_end_km: distance_km(&nav.terminal, &end),
            metrics: m.clone(),
        };
        write_outputs(&cfg.out, v, &nav.trajectory, &to_json(&rep)?, cfg.export_track)?;
        let agg = metrics::aggregate(&sc.name, v, cfg.seed, &sc.destination, vec![m], Vec::new())?;
        lines.push(summary_row(&agg));
    }
    write_file(&cfg.out.join("comparison.csv"), &comparison_csv(&lines))
}

/// Applies `GEONAV_THREADS` to the global worker pool.
pub fn configure_threads() {
    if let Some(n) = std::env::var("GEONAV_THREADS").ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0) {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Entry point shared by the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    configure_threads();
    let res = match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Replay(c) => cmd_replay(c),
    };
    match res {
        Ok(()) => 0,
        Err(Error::Usage(m)) => {
            eprintln!("usage error: {m}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
