//! End-to-end navigation loop: probe-leg stencil, then per step
//! measure → gradient update → command → propagate → optional fusion.

use std::sync::Arc;

use nalgebra::Vector2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controller::{Controller, ControllerConfig, ControllerError, DiState, GradientHistory, Variant, VelocityCommand};
use crate::fusion::{self, FusionConfig, FusionState, TriggerRule};
use crate::geodesy::{distance_km, interpolate, offset};
use crate::geofield::{apply_anomaly, elements_from_field, FieldError, FieldSource, GeoPosition};
use crate::gradient::{init_gradient, secant_update, update_gradient, DiSample, GradientError, GradientMatrix, GradientRule};
use crate::ins::{self, InsConfig, InsErrorState, IDX_LAT, IDX_LON};
use crate::storm::{anomaly_at, AnomalyTable, TimeMapping};

#[derive(Debug, Error)]
pub enum NavError {
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("field evaluation failed at step {step}: {source}")]
    Field {
        step: usize,
        #[source]
        source: FieldError,
    },
    #[error("gradient initialisation failed: {0}")]
    Gradient(#[from] GradientError),
    #[error("controller failed at step {step}: {source}")]
    Controller {
        step: usize,
        #[source]
        source: ControllerError,
        partial: Box<Trajectory>,
    },
    #[error("replay track: {0}")]
    Track(String),
}

/// Time-varying disturbance superimposed on the main field.
#[derive(Debug, Clone)]
pub struct StormSpec {
    pub table: Arc<AnomalyTable>,
    pub mapping: TimeMapping,
}

/// Position estimate that the termination test uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationBasis {
    /// Mapless fix `destination + G⁻¹(S − S_d)` from the current gradient.
    #[default]
    Geomagnetic,
    /// The navigator's own dead-reckoned, fusion-corrected position.
    Estimate,
    /// The true position.
    Truth,
}

/// Position implied by the measured state under a locally linear field:
/// `S − S_d ≈ G·(p − p_d)`. `None` when `G` is singular.
pub fn geomagnetic_fix(dest: &GeoPosition, g: &GradientMatrix, s: &DiState, s_d: &DiState) -> Option<GeoPosition> {
    let rel = g.as_matrix().lu().solve(&(s.as_vector() - s_d.as_vector()))?;
    rel.iter().all(|v| v.is_finite()).then(|| offset(dest, rel[0], rel[1]))
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub start: GeoPosition,
    pub destination: GeoPosition,
    /// Decimal year used for the main field.
    pub date: f64,
    pub field: FieldSource,
    pub storm: Option<StormSpec>,
    pub controller: ControllerConfig,
    pub ins: InsConfig,
    pub fusion: FusionConfig,
    /// Variants that run the fusion branch.
    pub fusion_variants: Vec<Variant>,
    pub trigger: TriggerRule,
    /// Fusion threshold on the gradient, deg/km.
    pub sigma: f64,
    pub reset_ins_on_fusion: bool,
    pub epsilon_km: f64,
    pub max_iterations: usize,
    /// Standard deviation of D and I measurement noise, degrees.
    pub noise_deg: f64,
    /// Standard deviation of the per-step displacement error, km.
    pub motion_noise_km: f64,
    pub probe_leg_km: f64,
    /// Probe-leg headings, degrees from +x counter-clockwise.
    pub probe_headings_deg: [f64; 2],
    pub gradient_rule: GradientRule,
    pub eps_v_km: f64,
    pub termination: TerminationBasis,
    pub seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), NavError> {
        let bad = |m: &str| Err(NavError::Scenario(m.to_string()));
        if distance_km(&self.start, &self.destination) == 0.0 {
            return bad("start and destination coincide");
        }
        if !(self.epsilon_km > 0.0) {
            return bad("epsilon must be > 0");
        }
        if self.max_iterations < 1 {
            return bad("max_iterations must be ≥ 1");
        }
        if !(self.noise_deg >= 0.0 && self.motion_noise_km >= 0.0) {
            return bad("noise levels must be ≥ 0");
        }
        if !(self.probe_leg_km > 0.0) {
            return bad("probe_leg_km must be > 0");
        }
        let [a, b] = self.probe_headings_deg.map(f64::to_radians);
        if a.cos().abs() < 1e-9 || b.sin().abs() < 1e-9 {
            return bad("first probe leg must move along x and the second along y");
        }
        self.controller.validate().map_err(|e| NavError::Scenario(e.to_string()))?;
        self.fusion.validate().map_err(|e| NavError::Scenario(e.to_string()))?;
        Ok(())
    }
}

/// One visited point. `command` is the velocity executed from this point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub k: usize,
    pub time_h: f64,
    pub position: GeoPosition,
    pub estimate: GeoPosition,
    pub ins: GeoPosition,
    pub measured: DiState,
    pub command: VelocityCommand,
    pub fused: bool,
    pub correction: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<TrajectorySample>,
}

impl Trajectory {
    pub fn positions(&self) -> Vec<GeoPosition> {
        self.samples.iter().map(|s| s.position).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Reached,
    MaxIterations,
    TrackExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NavigationResult {
    pub variant: Variant,
    pub trajectory: Trajectory,
    pub terminated: Termination,
    /// Position used by the termination test.
    pub terminal: GeoPosition,
    pub true_terminal: GeoPosition,
    /// Main-loop iterations after the stencil.
    pub iterations: usize,
    pub length_km: f64,
    /// Great-circle distance from the true terminal position to the destination.
    pub terminal_distance_km: f64,
    pub fusion_events: usize,
}

/// Supplies measurements, true motion and inertial positions to the loop.
pub trait Environment {
    /// D/I measured at point `j` (true position `pos`, mission time `t_h`).
    fn measure(&mut self, j: usize, pos: &GeoPosition, t_h: f64) -> Result<DiState, NavError>;
    /// True position of point `j + 1` after a commanded displacement.
    fn advance(&mut self, j: usize, pos: &GeoPosition, east_km: f64, north_km: f64) -> Result<GeoPosition, NavError>;
    /// Inertial position reported at point `j`.
    fn inertial(&mut self, j: usize, pos: &GeoPosition, heading_deg: f64, dt_h: f64) -> Result<GeoPosition, NavError>;
    /// Resets the inertial error after fusion.
    fn reset_inertial(&mut self) {}
}

/// Synthetic field, motion and inertial errors driven by the scenario seed.
pub struct SimEnvironment<'a> {
    sc: &'a Scenario,
    meas_rng: ChaCha8Rng,
    motion_rng: ChaCha8Rng,
    ins_rng: ChaCha8Rng,
    ins_state: InsErrorState,
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

impl<'a> SimEnvironment<'a> {
    pub fn new(sc: &'a Scenario) -> Self {
        let s0 = ins::initial_state(&sc.ins, &sc.start);
        Self { sc, meas_rng: stream_rng(sc.seed, 1), motion_rng: stream_rng(sc.seed, 2), ins_rng: stream_rng(sc.seed, 3), ins_state: s0 }
    }
}

/// Noise-free D/I of the scenario field (plus storm) at `pos` and mission time `t_h`.
pub fn field_di(sc: &Scenario, pos: &GeoPosition, t_h: f64) -> Result<DiState, FieldError> {
    let mut f = sc.field.field(pos, sc.date)?;
    if let Some(st) = &sc.storm {
        if let Ok(a) = anomaly_at(&st.table, pos, t_h * 3600.0, &st.mapping) {
            f = apply_anomaly(&f, &a);
        }
    }
    let e = elements_from_field(&f)?;
    Ok(DiState { d: e.d, i: e.i })
}

impl Environment for SimEnvironment<'_> {
    fn measure(&mut self, j: usize, pos: &GeoPosition, t_h: f64) -> Result<DiState, NavError> {
        let mut s = field_di(self.sc, pos, t_h).map_err(|source| NavError::Field { step: j, source })?;
        if self.sc.noise_deg > 0.0 {
            let n = Normal::new(0.0, self.sc.noise_deg).expect("finite std");
            s.d += n.sample(&mut self.meas_rng);
            s.i += n.sample(&mut self.meas_rng);
        }
        Ok(s)
    }

    fn advance(&mut self, _j: usize, pos: &GeoPosition, east_km: f64, north_km: f64) -> Result<GeoPosition, NavError> {
        let (mut e, mut n) = (east_km, north_km);
        if self.sc.motion_noise_km > 0.0 {
            let d = Normal::new(0.0, self.sc.motion_noise_km).expect("finite std");
            e += d.sample(&mut self.motion_rng);
            n += d.sample(&mut self.motion_rng);
        }
        Ok(offset(pos, e, n))
    }

    fn inertial(&mut self, j: usize, pos: &GeoPosition, heading_deg: f64, dt_h: f64) -> Result<GeoPosition, NavError> {
        if j == 0 || dt_h <= 0.0 {
            return Ok(ins::measured_position(&self.ins_state, pos));
        }
        let (next, meas) = ins::step_ins(&self.sc.ins, &self.ins_state, pos, heading_deg, dt_h, &mut self.ins_rng);
        self.ins_state = next;
        Ok(meas)
    }

    fn reset_inertial(&mut self) {
        self.ins_state.d_lon = 0.0;
        self.ins_state.d_lat = 0.0;
    }
}

/// Runs the loop in the synthetic environment.
pub fn run_navigation(sc: &Scenario, variant: Variant) -> Result<NavigationResult, NavError> {
    sc.validate()?;
    let mut env = SimEnvironment::new(sc);
    run_with_environment(sc, variant, &mut env)
}

fn sample_at(j: usize, t_h: f64, pos: GeoPosition, est: GeoPosition, ins: GeoPosition, s: DiState) -> TrajectorySample {
    TrajectorySample {
        k: j,
        time_h: t_h,
        position: pos,
        estimate: est,
        ins,
        measured: s,
        command: VelocityCommand::default(),
        fused: false,
        correction: [0.0, 0.0],
    }
}

fn fusion_trigger(sc: &Scenario, g: &GradientMatrix) -> f64 {
    match sc.trigger {
        TriggerRule::MinAbsEntry => g.min_abs_entry(),
        TriggerRule::MinSingularValue => g.min_singular_value(),
    }
}

/// Runs the loop against any environment.
pub fn run_with_environment<E: Environment>(sc: &Scenario, variant: Variant, env: &mut E) -> Result<NavigationResult, NavError> {
    let dest = sc.destination;
    let mut traj = Trajectory::default();
    let mut pos = sc.start;
    let mut est = sc.start;
    let ins0 = env.inertial(0, &pos, 0.0, 0.0)?;
    let s0 = env.measure(0, &pos, 0.0)?;
    traj.samples.push(sample_at(0, 0.0, pos, est, ins0, s0));

    let finish = |traj: Trajectory, terminated: Termination, terminal: GeoPosition, iterations: usize, fusion_events: usize| {
        let last = traj.samples.last().expect("non-empty");
        let length_km = traj.samples.windows(2).map(|w| distance_km(&w[0].position, &w[1].position)).sum();
        NavigationResult {
            variant,
            terminated,
            terminal,
            true_terminal: last.position,
            iterations,
            length_km,
            terminal_distance_km: distance_km(&last.position, &dest),
            fusion_events,
            trajectory: traj,
        }
    };
    // the start is known, so every basis agrees before the first gradient exists
    let start_basis = if sc.termination == TerminationBasis::Truth { pos } else { est };
    if distance_km(&start_basis, &dest) <= sc.epsilon_km {
        return Ok(finish(traj, Termination::Reached, start_basis, 0, 0));
    }

    // probe legs
    let ctl_cfg = &sc.controller;
    let probe_speed = ctl_cfg.cruise_speed_kmh.unwrap_or(50.0);
    let leg_h = sc.probe_leg_km / probe_speed;
    let mut t_h = 0.0;
    let mut local = (0.0f64, 0.0f64);
    let mut stencil = vec![DiSample { d: s0.d, i: s0.i, x: 0.0, y: 0.0 }];
    let mut u_prev = VelocityCommand::default();
    for (leg, &hd) in sc.probe_headings_deg.iter().enumerate() {
        let th = hd.to_radians();
        let (de, dn) = (sc.probe_leg_km * th.cos(), sc.probe_leg_km * th.sin());
        u_prev = VelocityCommand::new(probe_speed * th.cos(), probe_speed * th.sin());
        traj.samples.last_mut().expect("non-empty").command = u_prev;
        let j = leg + 1;
        pos = env.advance(j - 1, &pos, de, dn)?;
        est = offset(&est, de, dn);
        local = (local.0 + de, local.1 + dn);
        t_h += leg_h;
        let z_m = env.inertial(j, &pos, hd, leg_h)?;
        let s = env.measure(j, &pos, t_h)?;
        stencil.push(DiSample { d: s.d, i: s.i, x: local.0, y: local.1 });
        traj.samples.push(sample_at(j, t_h, pos, est, z_m, s));
    }
    let g_start = init_gradient(&stencil[0], &stencil[1], &stencil[2])?;

    // reference state is the undisturbed main field at the destination
    let s_d = {
        let f = sc.field.field(&dest, sc.date).map_err(|source| NavError::Field { step: 0, source })?;
        let e = elements_from_field(&f).map_err(|source| NavError::Field { step: 0, source })?;
        DiState { d: e.d, i: e.i }
    };

    let mut controller = Controller::new(variant, ctl_cfg.clone()).map_err(|e| NavError::Scenario(e.to_string()))?;
    let fuse_enabled = sc.fusion_variants.contains(&variant);
    let mut fstate = FusionState::new(&sc.fusion);
    let mut g_now = g_start;
    let mut g_prev = g_start;
    let mut last_step: Option<(Vector2<f64>, DiState)> = None;
    let mut fusion_events = 0;
    let mut iterations = 0;
    let period = ctl_cfg.period_h;

    loop {
        let j = traj.samples.len() - 1;
        let cur = traj.samples[j];
        if let Some((dl, s_before)) = last_step {
            let ds = Vector2::new(cur.measured.d - s_before.d, cur.measured.i - s_before.i);
            let upd = match sc.gradient_rule {
                GradientRule::Secant => secant_update(&g_now, ds, dl, sc.eps_v_km),
                GradientRule::OuterProduct => {
                    let theta = u_prev.vy.atan2(u_prev.vx).to_degrees();
                    update_gradient(&g_now, ds[0], ds[1], theta, u_prev.vx, u_prev.vy, period, sc.eps_v_km)
                }
            };
            if upd.gradient.is_finite() {
                g_prev = g_now;
                g_now = upd.gradient;
            }
        }
        let located = match sc.termination {
            TerminationBasis::Geomagnetic => geomagnetic_fix(&dest, &g_now, &cur.measured, &s_d),
            TerminationBasis::Estimate => Some(cur.estimate),
            TerminationBasis::Truth => Some(cur.position),
        };
        if let Some(p) = located.filter(|p| distance_km(p, &dest) <= sc.epsilon_km) {
            return Ok(finish(traj, Termination::Reached, p, iterations, fusion_events));
        }
        if iterations >= sc.max_iterations {
            let terminal = located.unwrap_or(cur.estimate);
            return Ok(finish(traj, Termination::MaxIterations, terminal, iterations, fusion_events));
        }
        let grads = GradientHistory { start: g_start, now: g_now, prev: g_prev };
        let out = match controller.step(&cur.measured, &s_d, &grads, &u_prev) {
            Ok(o) => o,
            Err(source) => {
                return Err(NavError::Controller { step: j, source, partial: Box::new(traj) });
            }
        };
        let u = out.command;
        traj.samples[j].command = u;
        let (de, dn) = (u.vx * period, u.vy * period);
        pos = env.advance(j, &pos, de, dn)?;
        est = offset(&est, de, dn);
        t_h += period;
        iterations += 1;
        let heading = u.vy.atan2(u.vx).to_degrees();
        let z_m = env.inertial(j + 1, &pos, heading, period)?;
        let mut sample = sample_at(j + 1, t_h, pos, est, z_m, DiState::default());
        if fuse_enabled && fusion_trigger(sc, &g_now) < sc.sigma {
            fstate = fusion::predict(&fstate, &sc.fusion);
            let dz = fusion::innovation(&z_m, &est);
            let (post, corr) = fusion::update(&fstate, &sc.fusion, &dz).map_err(|e| NavError::Scenario(e.to_string()))?;
            fstate = post;
            // correction is fed back, so the estimated position error restarts at zero
            fstate.x_hat[IDX_LON] = 0.0;
            fstate.x_hat[IDX_LAT] = 0.0;
            est = fusion::apply_correction(&est, &corr);
            if sc.reset_ins_on_fusion {
                env.reset_inertial();
            }
            sample.estimate = est;
            sample.fused = true;
            sample.correction = [corr[0], corr[1]];
            fusion_events += 1;
        }
        sample.measured = match env.measure(j + 1, &pos, t_h) {
            Ok(s) => s,
            Err(NavError::Track(_)) => {
                traj.samples.push(sample);
                return Ok(finish(traj, Termination::TrackExhausted, est, iterations, fusion_events));
            }
            Err(e) => return Err(e),
        };
        traj.samples.push(sample);
        last_step = Some((Vector2::new(de, dn), cur.measured));
        u_prev = u;
    }
}

/// Great-circle reference from start to destination with `n_points` equal arc steps.
pub fn reference_path(sc: &Scenario, n_points: usize) -> Trajectory {
    great_circle_path(&sc.start, &sc.destination, n_points)
}

pub fn great_circle_path(a: &GeoPosition, b: &GeoPosition, n_points: usize) -> Trajectory {
    let n = n_points.max(2);
    let samples = (0..n)
        .map(|k| {
            let p = interpolate(a, b, k as f64 / (n - 1) as f64);
            TrajectorySample {
                k,
                time_h: 0.0,
                position: p,
                estimate: p,
                ins: p,
                measured: DiState::default(),
                command: VelocityCommand::default(),
                fused: false,
                correction: [0.0, 0.0],
            }
        })
        .collect();
    Trajectory { samples }
}

/// Column header of the trajectory CSV.
pub const TRAJECTORY_HEADER: &str = "k,time_h,lon_deg,lat_deg,d_deg,i_deg,vx_kmh,vy_kmh,fused,corr_lon_deg,corr_lat_deg";

/// Trajectory CSV with positions to 1e−7 degrees.
pub fn trajectory_csv(traj: &Trajectory, schema_version: &str) -> String {
    let mut out = format!("# schema_version={schema_version}\n{TRAJECTORY_HEADER}\n");
    for s in &traj.samples {
        out.push_str(&format!(
            "{},{:.6},{:.7},{:.7},{:.7},{:.7},{:.4},{:.4},{},{:.9},{:.9}\n",
            s.k,
            s.time_h,
            s.position.lon,
            s.position.lat,
            s.measured.d,
            s.measured.i,
            s.command.vx,
            s.command.vy,
            u8::from(s.fused),
            s.correction[0],
            s.correction[1]
        ));
    }
    out
}
