//! Independent oracles shared by the integration tests and the acceptance run.
#![allow(dead_code)]

use geonav::geofield::GeoPosition;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

pub const R_KM: f64 = 6371.0088;

/// Haversine distance, transcribed independently of the library.
pub fn hav_km(a: &GeoPosition, b: &GeoPosition) -> f64 {
    let p1 = a.lat * std::f64::consts::PI / 180.0;
    let p2 = b.lat * std::f64::consts::PI / 180.0;
    let dp = p2 - p1;
    let dl = (b.lon - a.lon) * std::f64::consts::PI / 180.0;
    let s = (dp * 0.5).sin() * (dp * 0.5).sin() + p1.cos() * p2.cos() * (dl * 0.5).sin() * (dl * 0.5).sin();
    2.0 * R_KM * s.sqrt().min(1.0).asin()
}

/// Literal CEP: RMS over the endpoints no farther than the lower median, divided by N.
pub fn cep_brute(ends: &[GeoPosition], dest: &GeoPosition) -> f64 {
    let d: Vec<f64> = ends.iter().map(|p| hav_km(p, dest)).collect();
    let need = d.len().div_ceil(2);
    // smallest value with at least ceil(N/2) values at or below it
    let d50 = d.iter().copied().filter(|&v| d.iter().filter(|&&w| w <= v).count() >= need).fold(f64::INFINITY, f64::min);
    let mut acc = 0.0;
    for &v in &d {
        if v <= d50 {
            acc += v * v;
        }
    }
    (acc / d.len() as f64).sqrt()
}

pub fn deviations_brute(path: &[GeoPosition], reference: &[GeoPosition]) -> (f64, f64) {
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for i in 0..path.len() {
        let d = hav_km(&path[i], &reference[i]);
        sum += d;
        max = max.max(d);
    }
    (sum / path.len() as f64, max)
}

pub fn pmr_brute(path: &[GeoPosition], reference: &[GeoPosition], tol: f64) -> f64 {
    let mut hits = 0usize;
    for i in 0..path.len() {
        if hav_km(&path[i], &reference[i]) <= tol {
            hits += 1;
        }
    }
    hits as f64 * 100.0 / path.len() as f64
}

/// Sample variance of step lengths via the pairwise-difference identity.
pub fn variability_brute(path: &[GeoPosition]) -> f64 {
    let s: Vec<f64> = (1..path.len()).map(|i| hav_km(&path[i - 1], &path[i])).collect();
    let n = s.len();
    if n < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            acc += (s[i] - s[j]) * (s[i] - s[j]);
        }
    }
    acc / (n * (n - 1)) as f64
}

pub fn length_brute(path: &[GeoPosition]) -> f64 {
    let mut acc = 0.0;
    for i in 1..path.len() {
        acc += hav_km(&path[i - 1], &path[i]);
    }
    acc
}

pub fn random_path<R: Rng>(rng: &mut R, n: usize) -> Vec<GeoPosition> {
    let mut p = GeoPosition::deg(rng.gen_range(140.0..170.0), rng.gen_range(-50.0..50.0));
    let mut out = vec![p];
    for _ in 1..n {
        p = GeoPosition::deg(p.lon + rng.gen_range(-0.1..0.1), p.lat + rng.gen_range(-0.1..0.1));
        out.push(p);
    }
    out
}

/// Dense QP `min ½uᵀHu + hᵀu, Wu ≤ w` with `u = 0` strictly feasible.
pub struct RandomQp {
    pub h_mat: DMatrix<f64>,
    pub h_vec: DVector<f64>,
    pub w_mat: DMatrix<f64>,
    pub w_vec: DVector<f64>,
}

pub fn random_qp<R: Rng>(rng: &mut R, n: usize, m: usize) -> RandomQp {
    let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let h_mat = &a * a.transpose() + DMatrix::identity(n, n) * rng.gen_range(0.2..2.0);
    let h_vec = DVector::from_fn(n, |_, _| rng.gen_range(-10.0..10.0));
    let w_mat = DMatrix::from_fn(m, n, |_, _| rng.gen_range(-1.0..1.0));
    let w_vec = DVector::from_fn(m, |_, _| rng.gen_range(0.1..2.0));
    RandomQp { h_mat, h_vec, w_mat, w_vec }
}

/// Lower bound on the optimum from accelerated projected-gradient ascent on
/// the dual `max_{λ≥0} −½(h+Wᵀλ)ᵀH⁻¹(h+Wᵀλ) − wᵀλ`. Also returns the primal
/// point recovered from the final multipliers.
pub fn dual_projected_gradient(
    h_mat: &DMatrix<f64>,
    h_vec: &DVector<f64>,
    w_mat: &DMatrix<f64>,
    w_vec: &DVector<f64>,
    iterations: usize,
) -> (f64, DVector<f64>) {
    let h_inv = h_mat.clone().cholesky().expect("positive definite").inverse();
    let q = w_mat * &h_inv * w_mat.transpose();
    let c = w_mat * &h_inv * h_vec + w_vec;
    let dual = |l: &DVector<f64>| {
        let g = h_vec + w_mat.transpose() * l;
        -0.5 * g.dot(&(&h_inv * &g)) - w_vec.dot(l)
    };
    let lip = q.symmetric_eigenvalues().max().max(1e-12);
    let m = w_vec.len();
    let mut lam = DVector::zeros(m);
    let mut y = lam.clone();
    let mut t = 1.0f64;
    let mut best = dual(&lam);
    for _ in 0..iterations {
        // ascent direction of the concave dual is −(Qλ + c)
        let grad = -(&q * &y + &c);
        let next = (&y + grad / lip).map(|v| v.max(0.0));
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let val = dual(&next);
        if val < best {
            // adaptive restart
            y = lam.clone();
            t = 1.0;
            continue;
        }
        y = &next + (&next - &lam) * ((t - 1.0) / t_next);
        best = val;
        lam = next;
        t = t_next;
    }
    let u = -(&h_inv * (h_vec + w_mat.transpose() * &lam));
    (best, u)
}

/// One axis of an independent scalar Kalman filter with identity dynamics.
#[derive(Debug, Clone, Copy)]
pub struct ScalarKf {
    pub x: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl ScalarKf {
    pub fn predict(&mut self) {
        self.p += self.q;
    }

    pub fn update(&mut self, z: f64) {
        let k = self.p / (self.p + self.r);
        self.x += k * (z - self.x);
        self.p *= 1.0 - k;
    }
}

pub mod tracking {
    use geonav::geodesy::offset;
    use geonav::geofield::{elements_from_field, evaluate_field, CoefficientSet, EarthShape, GeoPosition};
    use geonav::gradient::{init_gradient, secant_update, update_gradient, DiSample, GradientMatrix, DEFAULT_EPS_V_KM};
    use nalgebra::{Matrix2, Vector2};

    /// Degree-1 field with the WMM2020 dipole terms, so D varies in space.
    pub fn tilted_dipole() -> CoefficientSet {
        let mut m = CoefficientSet::zeros(2020.0, 1).with_earth_shape(EarthShape::Sphere);
        m.set_coefficient(1, 0, -29404.5, 0.0, 0.0, 0.0);
        m.set_coefficient(1, 1, -1450.7, 4652.9, 0.0, 0.0);
        m
    }

    pub fn di(m: &CoefficientSet, p: &GeoPosition) -> Vector2<f64> {
        let e = elements_from_field(&evaluate_field(m, p, 2020.0).unwrap()).unwrap();
        Vector2::new(e.d, e.i)
    }

    /// Central-difference gradient (deg/km) in the local east/north plane.
    pub fn fd_gradient(m: &CoefficientSet, p: &GeoPosition, h: f64) -> Matrix2<f64> {
        let gx = (di(m, &offset(p, h, 0.0)) - di(m, &offset(p, -h, 0.0))) / (2.0 * h);
        let gy = (di(m, &offset(p, 0.0, h)) - di(m, &offset(p, 0.0, -h))) / (2.0 * h);
        Matrix2::new(gx[0], gy[0], gx[1], gy[1])
    }

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum Rule {
        Literal,
        Secant,
    }

    /// Worst per-entry relative error against the finite-difference gradient
    /// along a straight track of `steps` steps of `speed·t` km at `heading_deg`.
    pub fn track_error(rule: Rule, steps: usize, heading_deg: f64) -> f64 {
        track(rule, steps, heading_deg).0
    }

    /// Worst relative error of the directional derivative along the track.
    pub fn along_track_error(rule: Rule, steps: usize, heading_deg: f64) -> f64 {
        track(rule, steps, heading_deg).1
    }

    fn track(rule: Rule, steps: usize, heading_deg: f64) -> (f64, f64) {
        let m = tilted_dipole();
        let start = GeoPosition::deg(152.0, 33.0);
        let (speed, t) = (50.0, 0.1);
        let leg = 1.0;
        let p1 = offset(&start, leg, 0.0);
        let p2 = offset(&p1, 0.0, leg);
        let s = |p: &GeoPosition, x: f64, y: f64| {
            let v = di(&m, p);
            DiSample { d: v[0], i: v[1], x, y }
        };
        let mut g: GradientMatrix = init_gradient(&s(&start, 0.0, 0.0), &s(&p1, leg, 0.0), &s(&p2, leg, leg)).unwrap();
        let th = heading_deg.to_radians();
        let (vx, vy) = (speed * th.cos(), speed * th.sin());
        let dir = Vector2::new(th.cos(), th.sin());
        let mut pos = p2;
        let (mut worst, mut worst_along) = (0.0f64, 0.0f64);
        for _ in 0..steps {
            let next = offset(&pos, vx * t, vy * t);
            let ds = di(&m, &next) - di(&m, &pos);
            let upd = match rule {
                Rule::Literal => update_gradient(&g, ds[0], ds[1], heading_deg, vx, vy, t, DEFAULT_EPS_V_KM),
                Rule::Secant => secant_update(&g, ds, Vector2::new(vx * t, vy * t), DEFAULT_EPS_V_KM),
            };
            g = upd.gradient;
            pos = next;
            let fd = fd_gradient(&m, &pos, 0.05);
            worst = worst.max((g.as_matrix() - fd).component_div(&fd).amax());
            let (a, b) = (g.as_matrix() * dir, fd * dir);
            worst_along = worst_along.max((a - b).component_div(&b).amax());
        }
        (worst, worst_along)
    }
}

pub mod affine {
    use geonav::controller::DiState;
    use geonav::geodesy::{local_delta, offset};
    use geonav::geofield::GeoPosition;
    use geonav::navigator::{field_di, Environment, NavError, Scenario};
    use nalgebra::{Matrix2, Vector2};

    /// D/I exactly affine in the navigator's own east/north displacements,
    /// equal to the scenario's destination state at the destination.
    pub struct AffineEnv {
        g: Matrix2<f64>,
        s_dest: Vector2<f64>,
        dest_xy: Vector2<f64>,
        xy: Vec<Vector2<f64>>,
    }

    impl AffineEnv {
        pub fn new(sc: &Scenario, g: Matrix2<f64>) -> Self {
            let s = field_di(&Scenario { storm: None, ..sc.clone() }, &sc.destination, 0.0).unwrap();
            let (e, n) = local_delta(&sc.start, &sc.destination);
            Self { g, s_dest: Vector2::new(s.d, s.i), dest_xy: Vector2::new(e, n), xy: vec![Vector2::zeros()] }
        }
    }

    impl Environment for AffineEnv {
        fn measure(&mut self, j: usize, _pos: &GeoPosition, _t_h: f64) -> Result<DiState, NavError> {
            let v = self.s_dest + self.g * (self.xy[j] - self.dest_xy);
            Ok(DiState { d: v[0], i: v[1] })
        }

        fn advance(&mut self, j: usize, pos: &GeoPosition, east_km: f64, north_km: f64) -> Result<GeoPosition, NavError> {
            let next = self.xy[j] + Vector2::new(east_km, north_km);
            self.xy.truncate(j + 1);
            self.xy.push(next);
            Ok(offset(pos, east_km, north_km))
        }

        fn inertial(&mut self, _j: usize, pos: &GeoPosition, _heading_deg: f64, _dt_h: f64) -> Result<GeoPosition, NavError> {
            Ok(*pos)
        }
    }
}
