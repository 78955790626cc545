//! Velocity commands from the LTI, LTV and flexible-correction (FC) MPC variants.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gradient::GradientMatrix;
use crate::qp::{build_prediction, build_qp, solve_qp_warm, Bounds, QpError, QpWeights, SolverOptions};

#[derive(Debug, Error, PartialEq)]
pub enum ControllerError {
    #[error("heading undefined for zero velocity")]
    UndefinedHeading,
    #[error("unknown controller variant `{0}` (expected lti, ltv or fc)")]
    UnknownVariant(String),
    #[error("invalid controller config: {0}")]
    Config(String),
    #[error(transparent)]
    Qp(#[from] QpError),
}

/// Declination and inclination, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DiState {
    pub d: f64,
    pub i: f64,
}

impl DiState {
    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.d, self.i)
    }

    pub fn from_vector(v: &Vector2<f64>) -> Self {
        Self { d: v[0], i: v[1] }
    }
}

/// Velocity in km/h, x east and y north.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VelocityCommand {
    pub vx: f64,
    pub vy: f64,
}

impl VelocityCommand {
    pub fn new(vx: f64, vy: f64) -> Self {
        Self { vx, vy }
    }

    pub fn as_vector(&self) -> Vector2<f64> {
        Vector2::new(self.vx, self.vy)
    }

    pub fn from_vector(v: &Vector2<f64>) -> Self {
        Self { vx: v[0], vy: v[1] }
    }

    pub fn speed(&self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

/// Per-step D/I disturbance, degrees.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Interference {
    pub xi: [f64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Lti,
    Ltv,
    Fc,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Lti, Variant::Ltv, Variant::Fc];

    pub fn as_str(&self) -> &'static str {
        match self {
            Variant::Lti => "lti",
            Variant::Ltv => "ltv",
            Variant::Fc => "fc",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Variant {
    type Err = ControllerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "lti" => Ok(Variant::Lti),
            "ltv" => Ok(Variant::Ltv),
            "fc" => Ok(Variant::Fc),
            other => Err(ControllerError::UnknownVariant(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub horizon: usize,
    /// Execution period, hours.
    pub period_h: f64,
    /// Sampling period `T` of the prediction model, in model time units.
    pub qp_period: f64,
    /// Length unit of the prediction model in km; gradients enter `B` per this unit.
    pub qp_length_unit_km: f64,
    pub q_weight: [[f64; 2]; 2],
    pub f_weight: [[f64; 2]; 2],
    pub r_weight: [[f64; 2]; 2],
    pub bounds: Bounds,
    /// Uses `h = CᵀQ̄(MS − S̄_d)` without the factor 2.
    pub literal_linear_term: bool,
    /// When set, the optimiser fixes only the heading and the vehicle moves at this speed (km/h).
    pub cruise_speed_kmh: Option<f64>,
    /// Penalty on the shared slack when state rows must be relaxed.
    pub soft_state_penalty: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            horizon: 2,
            period_h: 0.1,
            qp_period: 10.0,
            qp_length_unit_km: KM_PER_DEGREE,
            q_weight: [[1.0, 0.0], [0.0, 1.0]],
            f_weight: [[1.0, 0.0], [0.0, 1.0]],
            r_weight: [[10.0, 0.0], [0.0, 10.0]],
            bounds: Bounds { u_min: [-40.0, -40.0], u_max: [40.0, 40.0], s_min: [-10.0, 10.0], s_max: [100.0, 100.0] },
            literal_linear_term: false,
            cruise_speed_kmh: Some(50.0),
            soft_state_penalty: 1e6,
        }
    }
}

/// One degree of great-circle arc, km.
pub const KM_PER_DEGREE: f64 = crate::geodesy::EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;

fn mat(m: &[[f64; 2]; 2]) -> Matrix2<f64> {
    Matrix2::new(m[0][0], m[0][1], m[1][0], m[1][1])
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<(), ControllerError> {
        if self.horizon < 1 {
            return Err(ControllerError::Config("horizon must be ≥ 1".into()));
        }
        if !(self.period_h > 0.0) {
            return Err(ControllerError::Config("period_h must be > 0".into()));
        }
        if !(self.qp_period > 0.0) {
            return Err(ControllerError::Config("qp_period must be > 0".into()));
        }
        if !(self.qp_length_unit_km > 0.0) {
            return Err(ControllerError::Config("qp_length_unit_km must be > 0".into()));
        }
        let r = mat(&self.r_weight);
        let sym = 0.5 * (r + r.transpose());
        if sym.symmetric_eigenvalues().min() <= 0.0 {
            return Err(ControllerError::Config("r_weight must be positive definite".into()));
        }
        for (name, m) in [("q_weight", &self.q_weight), ("f_weight", &self.f_weight)] {
            let m = mat(m);
            if (0.5 * (m + m.transpose())).symmetric_eigenvalues().min() < -1e-12 {
                return Err(ControllerError::Config(format!("{name} must be positive semidefinite")));
            }
        }
        if let Some(v) = self.cruise_speed_kmh {
            if !(v > 0.0) {
                return Err(ControllerError::Config("cruise_speed_kmh must be > 0".into()));
            }
        }
        self.bounds.validate()?;
        Ok(())
    }

    fn weights(&self) -> QpWeights {
        QpWeights { q: mat(&self.q_weight), f: mat(&self.f_weight), r: mat(&self.r_weight), literal_linear_term: self.literal_linear_term }
    }

    /// Physical velocity (km/h) of one unit of the optimiser's input.
    pub fn velocity_scale(&self) -> f64 {
        self.qp_length_unit_km * self.qp_period / self.period_h
    }

    /// `B = G·T` in model units.
    pub fn input_matrix_of(&self, g: &GradientMatrix) -> Matrix2<f64> {
        g.as_matrix() * (self.qp_length_unit_km * self.qp_period)
    }

    fn clip(&self, v: Vector2<f64>) -> Vector2<f64> {
        let b = &self.bounds;
        Vector2::new(v[0].clamp(b.u_min[0], b.u_max[0]), v[1].clamp(b.u_min[1], b.u_max[1]))
    }
}

/// Speed and heading (degrees from +x, counter-clockwise, in (−180, 180]).
pub fn heading_from_velocity(vx: f64, vy: f64) -> Result<(f64, f64), ControllerError> {
    if vx == 0.0 && vy == 0.0 {
        return Err(ControllerError::UndefinedHeading);
    }
    Ok((vx.hypot(vy), vy.atan2(vx).to_degrees()))
}

/// `ξ = (B_now − B_prev)·u`.
pub fn estimate_interference(b_now: &Matrix2<f64>, b_prev: &Matrix2<f64>, u: &VelocityCommand) -> Interference {
    let xi = (b_now - b_prev) * u.as_vector();
    Interference { xi: [xi[0], xi[1]] }
}

/// Condition number above which the compensation system is regularised.
pub const COMPENSATION_COND_LIMIT: f64 = 1e8;

/// Solves `B_prev·u_a = −ξ`, Tikhonov-regularised with `μ = 1e−8·‖B‖²`
/// when `B_prev` is near-singular.
pub fn compensation_input(b_prev: &Matrix2<f64>, xi: &Interference) -> VelocityCommand {
    let rhs = -Vector2::new(xi.xi[0], xi.xi[1]);
    if rhs == Vector2::zeros() {
        return VelocityCommand::default();
    }
    let sv = b_prev.singular_values();
    let (smax, smin) = (sv.max(), sv.min());
    if smin > 0.0 && smax / smin <= COMPENSATION_COND_LIMIT {
        if let Some(u) = b_prev.lu().solve(&rhs) {
            return VelocityCommand::from_vector(&u);
        }
    }
    let mu = 1e-8 * smax * smax;
    let normal = b_prev.transpose() * b_prev + Matrix2::identity() * mu;
    match normal.cholesky() {
        Some(ch) => VelocityCommand::from_vector(&ch.solve(&(b_prev.transpose() * rhs))),
        None => VelocityCommand::default(),
    }
}

/// `s' = s + B_prev·u_h` (the state matrix is the identity).
pub fn compensated_step(s: &DiState, b_prev: &Matrix2<f64>, u_h: &VelocityCommand) -> DiState {
    DiState::from_vector(&(s.as_vector() + b_prev * u_h.as_vector()))
}

/// Gradients available to the controller at step k.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientHistory {
    /// Gradient at the mission start (after the stencil).
    pub start: GradientMatrix,
    pub now: GradientMatrix,
    pub prev: GradientMatrix,
}

/// A command together with the intermediate quantities that produced it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandOutput {
    /// Executed velocity, km/h.
    pub command: VelocityCommand,
    /// First block of the optimiser's solution, model units.
    pub planned: VelocityCommand,
    pub interference: Interference,
    pub compensation: VelocityCommand,
    /// True when the state rows had to be softened.
    pub softened: bool,
}

/// Input matrix used by `variant`.
pub fn input_matrix(variant: Variant, cfg: &ControllerConfig, g: &GradientHistory) -> Matrix2<f64> {
    let src = match variant {
        Variant::Lti => &g.start,
        Variant::Ltv => &g.now,
        Variant::Fc => &g.prev,
    };
    cfg.input_matrix_of(src)
}

/// First input block of the receding-horizon problem with input matrix `b`.
pub fn plan(
    cfg: &ControllerConfig,
    b: &Matrix2<f64>,
    s: &DiState,
    s_d: &DiState,
    warm: Option<&DVector<f64>>,
) -> Result<(DVector<f64>, bool), ControllerError> {
    let pred = build_prediction(&Matrix2::identity(), b, cfg.horizon)?;
    let qp = build_qp(&pred, &s.as_vector(), &s_d.as_vector(), &cfg.weights(), &cfg.bounds)?;
    let opts = SolverOptions::default();
    match solve_qp_warm(&qp, warm, &opts) {
        Ok(sol) => Ok((sol.u_opt, false)),
        Err(QpError::Infeasible { .. }) => {
            let soft = qp.with_soft_state_rows(cfg.soft_state_penalty);
            let sol = solve_qp_warm(&soft, None, &opts)?;
            Ok((sol.u_opt.rows(0, qp.dim()).clone_owned(), true))
        }
        Err(e) => Err(e.into()),
    }
}

fn to_cruise(v: Vector2<f64>, speed: f64) -> Vector2<f64> {
    let n = v.norm();
    if n > 0.0 {
        v * (speed / n)
    } else {
        v
    }
}

/// One controller step. `u_prev` is the previously executed velocity.
pub fn command(
    variant: Variant,
    cfg: &ControllerConfig,
    s: &DiState,
    s_d: &DiState,
    grads: &GradientHistory,
    u_prev: &VelocityCommand,
) -> Result<CommandOutput, ControllerError> {
    command_warm(variant, cfg, s, s_d, grads, u_prev, None).map(|(c, _)| c)
}

fn command_warm(
    variant: Variant,
    cfg: &ControllerConfig,
    s: &DiState,
    s_d: &DiState,
    grads: &GradientHistory,
    u_prev: &VelocityCommand,
    warm: Option<&DVector<f64>>,
) -> Result<(CommandOutput, DVector<f64>), ControllerError> {
    let b = input_matrix(variant, cfg, grads);
    let (u_bar, softened) = plan(cfg, &b, s, s_d, warm)?;
    let planned = Vector2::new(u_bar[0], u_bar[1]);
    let scale = cfg.velocity_scale();
    let (interference, comp) = if variant == Variant::Fc {
        let b_now = cfg.input_matrix_of(&grads.now);
        let xi = estimate_interference(&b_now, &b, u_prev);
        (xi, compensation_input(&b, &xi))
    } else {
        (Interference::default(), VelocityCommand::default())
    };
    let total = planned + comp.as_vector();
    let executed = match cfg.cruise_speed_kmh {
        Some(v) => to_cruise(total, v),
        None => total * scale,
    };
    let out = CommandOutput {
        command: VelocityCommand::from_vector(&cfg.clip(executed)),
        planned: VelocityCommand::from_vector(&planned),
        interference,
        compensation: comp,
        softened,
    };
    Ok((out, u_bar))
}

/// Model-unit input that produced `executed` (km/h) when no plan is remembered.
pub fn model_input(cfg: &ControllerConfig, executed: &VelocityCommand) -> VelocityCommand {
    VelocityCommand::from_vector(&(executed.as_vector() / cfg.velocity_scale()))
}

/// Per-run controller holding the warm start between steps.
#[derive(Debug, Clone)]
pub struct Controller {
    pub variant: Variant,
    pub cfg: ControllerConfig,
    warm: Option<DVector<f64>>,
    /// Last planned-plus-compensation input, model units.
    last_input: Option<VelocityCommand>,
}

impl Controller {
    pub fn new(variant: Variant, cfg: ControllerConfig) -> Result<Self, ControllerError> {
        cfg.validate()?;
        Ok(Self { variant, cfg, warm: None, last_input: None })
    }

    pub fn step(
        &mut self,
        s: &DiState,
        s_d: &DiState,
        grads: &GradientHistory,
        u_prev: &VelocityCommand,
    ) -> Result<CommandOutput, ControllerError> {
        let prev = self.last_input.unwrap_or_else(|| model_input(&self.cfg, u_prev));
        let (out, u_bar) = command_warm(self.variant, &self.cfg, s, s_d, grads, &prev, self.warm.as_ref())?;
        self.warm = Some(u_bar);
        self.last_input = Some(VelocityCommand::from_vector(&(out.planned.as_vector() + out.compensation.as_vector())));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn headings() {
        assert_eq!(heading_from_velocity(1.0, 0.0).unwrap(), (1.0, 0.0));
        assert_eq!(heading_from_velocity(0.0, 1.0).unwrap(), (1.0, 90.0));
        let (v, th) = heading_from_velocity(-1.0, -1.0).unwrap();
        assert!((v - 2f64.sqrt()).abs() < 1e-15 && (th + 135.0).abs() < 1e-12);
        assert_eq!(heading_from_velocity(0.0, 0.0), Err(ControllerError::UndefinedHeading));
    }

    #[test]
    fn interference_multiply() {
        let b_prev = Matrix2::new(0.3, 0.1, 0.0, 0.5);
        let b_now = b_prev + Matrix2::new(0.1, 0.0, 0.0, 0.2);
        let xi = estimate_interference(&b_now, &b_prev, &VelocityCommand::new(10.0, 5.0));
        assert!((xi.xi[0] - 1.0).abs() < 1e-12 && (xi.xi[1] - 1.0).abs() < 1e-12);
        assert_eq!(estimate_interference(&b_prev, &b_prev, &VelocityCommand::new(3.0, 4.0)).xi, [0.0, 0.0]);
    }

    #[test]
    fn compensation_cases() {
        assert_eq!(compensation_input(&Matrix2::identity(), &Interference { xi: [0.0, 0.0] }), VelocityCommand::default());
        let u = compensation_input(&Matrix2::identity(), &Interference { xi: [1.0, 2.0] });
        assert_eq!((u.vx, u.vy), (-1.0, -2.0));
        let u = compensation_input(&Matrix2::new(1.0, 0.0, 0.0, 0.0), &Interference { xi: [1.0, 1.0] });
        assert!((u.vx + 1.0).abs() < 1e-3 && u.vy.abs() < 1e-3);
    }

    #[test]
    fn compensated_step_diagonal() {
        let t = 0.1;
        let b = Matrix2::new(0.01, 0.0, 0.0, 0.01) * t;
        let s = compensated_step(&DiState { d: 5.0, i: 40.0 }, &b, &VelocityCommand::new(10.0, 10.0));
        assert!((s.d - (5.0 + t * 0.1)).abs() < 1e-12 && (s.i - (40.0 + t * 0.1)).abs() < 1e-12);
        let z = compensated_step(&DiState { d: 5.0, i: 40.0 }, &b, &VelocityCommand::default());
        assert_eq!(z, DiState { d: 5.0, i: 40.0 });
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("FC".parse::<Variant>().unwrap(), Variant::Fc);
        assert!(matches!("xyz".parse::<Variant>(), Err(ControllerError::UnknownVariant(_))));
    }
}
