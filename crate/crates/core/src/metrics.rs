//! Trajectory and Monte Carlo ensemble metrics.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::Variant;
use crate::geodesy::distance_km;
use crate::geofield::GeoPosition;
use crate::navigator::{great_circle_path, run_navigation, NavError, NavigationResult, Scenario, Termination};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("need at least two points")]
    TooShort,
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("match tolerance must be > 0")]
    Tolerance,
}

/// `sqrt((1/N)·Σ dᵢ²·[dᵢ ≤ d₅₀])` with the lower median `d₅₀`.
pub fn cep(endpoints: &[GeoPosition], dest: &GeoPosition) -> Result<f64, MetricsError> {
    if endpoints.is_empty() {
        return Err(MetricsError::Empty("endpoints"));
    }
    let d: Vec<f64> = endpoints.iter().map(|p| distance_km(p, dest)).collect();
    let d50 = lower_median(&d);
    let sum: f64 = d.iter().filter(|&&v| v <= d50).map(|v| v * v).sum();
    Ok((sum / d.len() as f64).sqrt())
}

/// Radius containing half the endpoints (lower median distance).
pub fn cep_median_radius(endpoints: &[GeoPosition], dest: &GeoPosition) -> Result<f64, MetricsError> {
    if endpoints.is_empty() {
        return Err(MetricsError::Empty("endpoints"));
    }
    Ok(lower_median(&endpoints.iter().map(|p| distance_km(p, dest)).collect::<Vec<_>>()))
}

fn lower_median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s[(s.len() - 1) / 2]
}

/// Resamples a polyline to `n` points equally spaced in arc length.
pub fn resample(path: &[GeoPosition], n: usize) -> Result<Vec<GeoPosition>, MetricsError> {
    if path.len() < 2 || n < 2 {
        return Err(MetricsError::TooShort);
    }
    let mut cum = vec![0.0];
    for w in path.windows(2) {
        cum.push(cum.last().unwrap() + distance_km(&w[0], &w[1]));
    }
    let total = *cum.last().unwrap();
    let mut out = Vec::with_capacity(n);
    let mut seg = 0;
    for k in 0..n {
        let target = total * k as f64 / (n - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < target {
            seg += 1;
        }
        let span = cum[seg + 1] - cum[seg];
        let t = if span > 0.0 { ((target - cum[seg]) / span).clamp(0.0, 1.0) } else { 0.0 };
        out.push(crate::geodesy::interpolate(&path[seg], &path[seg + 1], t));
    }
    Ok(out)
}

/// Index-aligned distances between a path and the reference resampled to its length.
pub fn aligned_distances(path: &[GeoPosition], reference: &[GeoPosition]) -> Result<Vec<f64>, MetricsError> {
    if path.is_empty() || reference.is_empty() {
        return Err(MetricsError::Empty("trajectory"));
    }
    let r = if reference.len() == path.len() { reference.to_vec() } else { resample(reference, path.len())? };
    if r.len() != path.len() {
        return Err(MetricsError::LengthMismatch(path.len(), r.len()));
    }
    Ok(path.iter().zip(&r).map(|(a, b)| distance_km(a, b)).collect())
}

/// Mean and maximum index-aligned deviation, km.
pub fn path_deviations(path: &[GeoPosition], reference: &[GeoPosition]) -> Result<(f64, f64), MetricsError> {
    let d = aligned_distances(path, reference)?;
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let max = d.iter().fold(0.0f64, |m, v| m.max(*v));
    Ok((mean, max))
}

/// Percentage of points within `match_tol` km of their aligned reference point.
pub fn pmr(path: &[GeoPosition], reference: &[GeoPosition], match_tol: f64) -> Result<f64, MetricsError> {
    if !(match_tol > 0.0) {
        return Err(MetricsError::Tolerance);
    }
    let d = aligned_distances(path, reference)?;
    let matched = d.iter().filter(|&&v| v <= match_tol).count();
    Ok(100.0 * matched as f64 / d.len() as f64)
}

fn step_lengths(path: &[GeoPosition]) -> Result<Vec<f64>, MetricsError> {
    if path.len() < 2 {
        return Err(MetricsError::TooShort);
    }
    Ok(path.windows(2).map(|w| distance_km(&w[0], &w[1])).collect())
}

/// Sample variance of step lengths, `1/(n−1)` normalisation (0 for a single step).
pub fn variability(path: &[GeoPosition]) -> Result<f64, MetricsError> {
    let s = step_lengths(path)?;
    if s.len() < 2 {
        return Ok(0.0);
    }
    let mean = s.iter().sum::<f64>() / s.len() as f64;
    Ok(s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (s.len() - 1) as f64)
}

/// Sum of great-circle segment lengths, km.
pub fn trajectory_length(path: &[GeoPosition]) -> Result<f64, MetricsError> {
    Ok(step_lengths(path)?.iter().sum())
}

/// Default PMR match tolerance, km.
pub const DEFAULT_MATCH_TOL_KM: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub run: usize,
    pub seed: u64,
    pub reached: bool,
    pub iterations: usize,
    pub trajectory_length: f64,
    pub step_variability: f64,
    pub mean_deviation: f64,
    pub max_deviation: f64,
    pub pmr: f64,
    pub terminal_distance: f64,
    pub terminal_lon: f64,
    pub terminal_lat: f64,
    pub fusion_events: usize,
}

/// Metrics of one navigation result against the start→destination great circle.
pub fn run_metrics(
    res: &NavigationResult,
    start: &GeoPosition,
    dest: &GeoPosition,
    match_tol: f64,
    run: usize,
    seed: u64,
) -> Result<RunMetrics, MetricsError> {
    let path = res.trajectory.positions();
    let reference = great_circle_path(start, dest, path.len().max(2)).positions();
    let (mean_dev, max_dev, p) = if path.len() >= 2 {
        let (a, b) = path_deviations(&path, &reference)?;
        (a, b, pmr(&path, &reference, match_tol)?)
    } else {
        (0.0, 0.0, 100.0)
    };
    Ok(RunMetrics {
        run,
        seed,
        reached: res.terminated == Termination::Reached,
        iterations: res.iterations,
        trajectory_length: if path.len() >= 2 { trajectory_length(&path)? } else { 0.0 },
        step_variability: if path.len() >= 2 { variability(&path)? } else { 0.0 },
        mean_deviation: mean_dev,
        max_deviation: max_dev,
        pmr: p,
        terminal_distance: res.terminal_distance_km,
        terminal_lon: res.true_terminal.lon,
        terminal_lat: res.true_terminal.lat,
        fusion_events: res.fusion_events,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub mean: f64,
}

/// Five-number summary with linear-interpolated quartiles.
pub fn summarize(values: &[f64]) -> Summary {
    if values.is_empty() {
        return Summary { min: 0.0, q1: 0.0, median: 0.0, q3: 0.0, max: 0.0, mean: 0.0 };
    }
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let x = p * (s.len() - 1) as f64;
        let (lo, hi) = (x.floor() as usize, x.ceil() as usize);
        s[lo] + (s[hi] - s[lo]) * (x - lo as f64)
    };
    Summary { min: s[0], q1: q(0.25), median: q(0.5), q3: q(0.75), max: s[s.len() - 1], mean: s.iter().sum::<f64>() / s.len() as f64 }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummaries {
    pub iterations: Summary,
    pub trajectory_length: Summary,
    pub step_variability: Summary,
    pub mean_deviation: Summary,
    pub max_deviation: Summary,
    pub pmr: Summary,
    pub terminal_distance: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleReport {
    pub schema_version: String,
    pub scenario: String,
    pub variant: Variant,
    pub master_seed: u64,
    pub runs: Vec<RunMetrics>,
    /// Runs that aborted and are excluded from the aggregates.
    pub aborted: Vec<AbortedRun>,
    pub cep_km: f64,
    pub cep_median_radius_km: f64,
    pub mean_terminal_lon: f64,
    pub mean_terminal_lat: f64,
    pub reached_fraction: f64,
    pub summaries: MetricSummaries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortedRun {
    pub run: usize,
    pub seed: u64,
    pub error: String,
}

/// Per-run seed derived from the master seed (SplitMix64 finaliser).
pub fn run_seed(master: u64, run: usize) -> u64 {
    let mut z = master ^ (run as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub const SCHEMA_VERSION: &str = "1";

/// Aggregates per-run metrics; `runs` must be non-empty.
pub fn aggregate(
    scenario: &str,
    variant: Variant,
    master_seed: u64,
    dest: &GeoPosition,
    runs: Vec<RunMetrics>,
    aborted: Vec<AbortedRun>,
) -> Result<EnsembleReport, MetricsError> {
    if runs.is_empty() {
        return Err(MetricsError::Empty("runs"));
    }
    let ends: Vec<GeoPosition> = runs.iter().map(|r| GeoPosition { lon: r.terminal_lon, lat: r.terminal_lat, alt: 0.0 }).collect();
    let col = |f: fn(&RunMetrics) -> f64| summarize(&runs.iter().map(f).collect::<Vec<_>>());
    let n = runs.len() as f64;
    Ok(EnsembleReport {
        schema_version: SCHEMA_VERSION.into(),
        scenario: scenario.into(),
        variant,
        master_seed,
        cep_km: cep(&ends, dest)?,
        cep_median_radius_km: cep_median_radius(&ends, dest)?,
        mean_terminal_lon: ends.iter().map(|p| p.lon).sum::<f64>() / n,
        mean_terminal_lat: ends.iter().map(|p| p.lat).sum::<f64>() / n,
        reached_fraction: runs.iter().filter(|r| r.reached).count() as f64 / n,
        summaries: MetricSummaries {
            iterations: col(|r| r.iterations as f64),
            trajectory_length: col(|r| r.trajectory_length),
            step_variability: col(|r| r.step_variability),
            mean_deviation: col(|r| r.mean_deviation),
            max_deviation: col(|r| r.max_deviation),
            pmr: col(|r| r.pmr),
            terminal_distance: col(|r| r.terminal_distance),
        },
        runs,
        aborted,
    })
}

/// Runs `n_runs` seeded navigations in parallel and aggregates them in run order.
pub fn monte_carlo(sc: &Scenario, variant: Variant, n_runs: usize, master_seed: u64) -> Result<EnsembleReport, crate::Error> {
    monte_carlo_with(sc, variant, n_runs, master_seed, DEFAULT_MATCH_TOL_KM, |r, _| run_seed(master_seed, r))
}

/// As [`monte_carlo`] with an explicit seed schedule and match tolerance.
pub fn monte_carlo_with(
    sc: &Scenario,
    variant: Variant,
    n_runs: usize,
    master_seed: u64,
    match_tol: f64,
    seed_of: impl Fn(usize, u64) -> u64 + Sync,
) -> Result<EnsembleReport, crate::Error> {
    if n_runs == 0 {
        return Err(MetricsError::Empty("runs").into());
    }
    let results: Vec<(usize, u64, Result<NavigationResult, NavError>)> = (0..n_runs)
        .into_par_iter()
        .map(|r| {
            let seed = seed_of(r, master_seed);
            let mut s = sc.clone();
            s.seed = seed;
            (r, seed, run_navigation(&s, variant))
        })
        .collect();
    let mut runs = Vec::new();
    let mut aborted = Vec::new();
    for (r, seed, res) in results {
        match res {
            Ok(nav) => runs.push(run_metrics(&nav, &sc.start, &sc.destination, match_tol, r, seed)?),
            Err(e) => {
                log::warn!("run {r} (seed {seed}) aborted: {e}");
                aborted.push(AbortedRun { run: r, seed, error: e.to_string() });
            }
        }
    }
    if runs.is_empty() {
        return Err(MetricsError::Empty("runs (all aborted)").into());
    }
    Ok(aggregate(&sc.name, variant, master_seed, &sc.destination, runs, aborted)?)
}

/// Header of the comparison CSV.
pub const SUMMARY_HEADER: &str = "variant,runs,cep_km,iter_med,len_med_km,var_med_km2,dev_mean_km,dev_max_km,pmr_pct";

/// One comparison row; metrics to 1e−4.
pub fn summary_row(r: &EnsembleReport) -> String {
    let s = &r.summaries;
    format!(
        "{},{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4}",
        r.variant,
        r.runs.len(),
        r.cep_km,
        s.iterations.median,
        s.trajectory_length.median,
        s.step_variability.median,
        s.mean_deviation.median,
        s.max_deviation.median,
        s.pmr.median
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cep_basic() {
        let d = GeoPosition::deg(158.0, 28.0);
        assert_eq!(cep(&[d, d], &d).unwrap(), 0.0);
        let p = crate::geodesy::offset(&d, 4.0, 0.0);
        assert!((cep(&[p], &d).unwrap() - 4.0).abs() < 1e-6);
        assert!(cep(&[], &d).is_err());
    }

    #[test]
    fn variability_two_steps() {
        let a = GeoPosition::deg(0.0, 0.0);
        let b = crate::geodesy::offset(&a, 1.0, 0.0);
        let c = crate::geodesy::offset(&b, 3.0, 0.0);
        assert!((variability(&[a, b, c]).unwrap() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn identical_paths() {
        let a = GeoPosition::deg(152.0, 33.0);
        let b = GeoPosition::deg(158.0, 28.0);
        let p = great_circle_path(&a, &b, 50).positions();
        assert_eq!(path_deviations(&p, &p).unwrap(), (0.0, 0.0));
        assert_eq!(pmr(&p, &p, 0.3).unwrap(), 100.0);
    }

    #[test]
    fn seeds_differ() {
        assert_ne!(run_seed(7, 0), run_seed(7, 1));
        assert_eq!(run_seed(7, 3), run_seed(7, 3));
    }
}
