//! Receding-horizon prediction matrices, QP assembly and a dense primal
//! active-set solver for `min ½uᵀHu + hᵀu  s.t.  Wu ≤ w`.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum QpError {
    #[error("prediction horizon must be at least 1")]
    EmptyHorizon,
    #[error("infeasible bounds: {0}")]
    Bounds(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("infeasible problem: minimum total violation {violation:e}")]
    Infeasible { violation: f64 },
    #[error("no convergence after {iterations} iterations (best kkt residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },
    #[error("singular working-set system")]
    Singular,
}

/// `S̄ = M·S + C·Ū` over an `n`-step horizon with constant `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMatrices {
    pub m_mat: DMatrix<f64>,
    pub c_mat: DMatrix<f64>,
    pub horizon: usize,
}

pub fn build_prediction(a: &Matrix2<f64>, b: &Matrix2<f64>, n: usize) -> Result<PredictionMatrices, QpError> {
    if n == 0 {
        return Err(QpError::EmptyHorizon);
    }
    let mut powers = vec![Matrix2::identity()];
    for k in 1..=n {
        powers.push(powers[k - 1] * a);
    }
    let mut m_mat = DMatrix::zeros(2 * n, 2);
    let mut c_mat = DMatrix::zeros(2 * n, 2 * n);
    for i in 0..n {
        m_mat.fixed_view_mut::<2, 2>(2 * i, 0).copy_from(&powers[i + 1]);
        for j in 0..=i {
            c_mat.fixed_view_mut::<2, 2>(2 * i, 2 * j).copy_from(&(powers[i - j] * b));
        }
    }
    Ok(PredictionMatrices { m_mat, c_mat, horizon: n })
}

/// Per-step input and state boxes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bounds {
    pub u_min: [f64; 2],
    pub u_max: [f64; 2],
    pub s_min: [f64; 2],
    pub s_max: [f64; 2],
}

impl Bounds {
    pub fn validate(&self) -> Result<(), QpError> {
        for k in 0..2 {
            if self.u_min[k] > self.u_max[k] {
                return Err(QpError::Bounds(format!("u_min[{k}] > u_max[{k}]")));
            }
            if self.s_min[k] > self.s_max[k] {
                return Err(QpError::Bounds(format!("s_min[{k}] > s_max[{k}]")));
            }
        }
        Ok(())
    }
}

/// Cost weights and assembly options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpWeights {
    pub q: Matrix2<f64>,
    pub f: Matrix2<f64>,
    pub r: Matrix2<f64>,
    /// Drops the factor 2 from the linear term.
    pub literal_linear_term: bool,
}

/// Dense QP data. Rows `state_rows` of `W` are the state constraints.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    pub h_mat: DMatrix<f64>,
    pub h_vec: DVector<f64>,
    pub w_mat: DMatrix<f64>,
    pub w_vec: DVector<f64>,
    pub state_rows: std::ops::Range<usize>,
}

impl QpProblem {
    pub fn new(h_mat: DMatrix<f64>, h_vec: DVector<f64>, w_mat: DMatrix<f64>, w_vec: DVector<f64>) -> Result<Self, QpError> {
        let n = h_vec.len();
        if h_mat.shape() != (n, n) || w_mat.ncols() != n || w_mat.nrows() != w_vec.len() {
            return Err(QpError::Dimension(format!("H {:?}, h {}, W {:?}, w {}", h_mat.shape(), n, w_mat.shape(), w_vec.len())));
        }
        Ok(Self { h_mat, h_vec, w_mat, w_vec, state_rows: 0..0 })
    }

    pub fn dim(&self) -> usize {
        self.h_vec.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.w_vec.len()
    }

    pub fn objective(&self, u: &DVector<f64>) -> f64 {
        0.5 * u.dot(&(&self.h_mat * u)) + self.h_vec.dot(u)
    }

    pub fn max_violation(&self, u: &DVector<f64>) -> f64 {
        (&self.w_mat * u - &self.w_vec).iter().fold(0.0, |m: f64, v| m.max(*v))
    }

    /// Relaxes the state rows with one shared slack `e ≥ 0` penalised by
    /// `penalty·(e + ½e²)`. The slack is appended as the last variable.
    pub fn with_soft_state_rows(&self, penalty: f64) -> QpProblem {
        let n = self.dim();
        let m = self.n_constraints();
        let mut h = DMatrix::zeros(n + 1, n + 1);
        h.view_mut((0, 0), (n, n)).copy_from(&self.h_mat);
        h[(n, n)] = penalty;
        let mut hv = DVector::zeros(n + 1);
        hv.rows_mut(0, n).copy_from(&self.h_vec);
        hv[n] = penalty;
        let mut w = DMatrix::zeros(m + 1, n + 1);
        w.view_mut((0, 0), (m, n)).copy_from(&self.w_mat);
        for r in self.state_rows.clone() {
            w[(r, n)] = -1.0;
        }
        w[(m, n)] = -1.0;
        let mut wv = DVector::zeros(m + 1);
        wv.rows_mut(0, m).copy_from(&self.w_vec);
        QpProblem { h_mat: h, h_vec: hv, w_mat: w, w_vec: wv, state_rows: self.state_rows.clone() }
    }
}

/// Assembles `H = 2(CᵀQ̄C + R̄)`, `h = 2CᵀQ̄(MS − S̄_d)` and `W = [I; −I; C; −C]`.
pub fn build_qp(
    pred: &PredictionMatrices,
    s: &Vector2<f64>,
    s_d: &Vector2<f64>,
    weights: &QpWeights,
    bounds: &Bounds,
) -> Result<QpProblem, QpError> {
    bounds.validate()?;
    let n = pred.horizon;
    let dim = 2 * n;
    let mut q_bar = DMatrix::zeros(dim, dim);
    let mut r_bar = DMatrix::zeros(dim, dim);
    for i in 0..n {
        let q = if i + 1 == n { weights.f } else { weights.q };
        q_bar.fixed_view_mut::<2, 2>(2 * i, 2 * i).copy_from(&q);
        r_bar.fixed_view_mut::<2, 2>(2 * i, 2 * i).copy_from(&weights.r);
    }
    let c = &pred.c_mat;
    let ms = &pred.m_mat * DVector::from_column_slice(s.as_slice());
    let sd_bar = DVector::from_fn(dim, |k, _| s_d[k % 2]);
    let ct_q = c.transpose() * &q_bar;
    let mut h_mat = 2.0 * (&ct_q * c + r_bar);
    h_mat = 0.5 * (&h_mat + h_mat.transpose());
    let lin = if weights.literal_linear_term { 1.0 } else { 2.0 };
    let h_vec = lin * &ct_q * (&ms - sd_bar);

    let mut w_mat = DMatrix::zeros(4 * dim, dim);
    let mut w_vec = DVector::zeros(4 * dim);
    for k in 0..dim {
        w_mat[(k, k)] = 1.0;
        w_mat[(dim + k, k)] = -1.0;
        w_vec[k] = bounds.u_max[k % 2];
        w_vec[dim + k] = -bounds.u_min[k % 2];
        w_vec[2 * dim + k] = bounds.s_max[k % 2] - ms[k];
        w_vec[3 * dim + k] = -bounds.s_min[k % 2] + ms[k];
    }
    w_mat.view_mut((2 * dim, 0), (dim, dim)).copy_from(c);
    w_mat.view_mut((3 * dim, 0), (dim, dim)).copy_from(&(-c));
    Ok(QpProblem { h_mat, h_vec, w_mat, w_vec, state_rows: 2 * dim..4 * dim })
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub u_opt: DVector<f64>,
    pub objective: f64,
    /// Indices of active rows of `W`, ascending.
    pub active_set: Vec<usize>,
    /// One multiplier per row of `W`; zero off the active set.
    pub multipliers: DVector<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
}

/// Max of stationarity, primal violation, dual violation and complementarity.
pub fn kkt_residual(p: &QpProblem, u: &DVector<f64>, lambda: &DVector<f64>) -> f64 {
    let stat = (&p.h_mat * u + &p.h_vec + p.w_mat.transpose() * lambda).amax();
    let slack = &p.w_vec - &p.w_mat * u;
    let primal = slack.iter().fold(0.0, |m: f64, v| m.max(-v));
    let dual = lambda.iter().fold(0.0, |m: f64, v| m.max(-v));
    let comp = lambda.iter().zip(slack.iter()).fold(0.0, |m: f64, (l, s)| m.max((l * s).abs()));
    stat.max(primal).max(dual).max(comp)
}

/// Solver limits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    /// Relative step size treated as zero.
    pub step_tol: f64,
    /// Multipliers above `-dual_tol` count as non-negative.
    pub dual_tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { max_iterations: 500, step_tol: 1e-12, dual_tol: 1e-12 }
    }
}

pub fn solve_qp(p: &QpProblem) -> Result<QpSolution, QpError> {
    solve_qp_warm(p, None, &SolverOptions::default())
}

/// Solves from `warm` when it is feasible, otherwise after a phase-one search.
pub fn solve_qp_warm(p: &QpProblem, warm: Option<&DVector<f64>>, opts: &SolverOptions) -> Result<QpSolution, QpError> {
    let n = p.dim();
    let feas_tol = 1e-12 * (1.0 + p.w_vec.amax());
    let start = match warm {
        Some(u) if u.len() == n && p.max_violation(u) <= feas_tol => u.clone(),
        _ => {
            let zero = DVector::zeros(n);
            if p.max_violation(&zero) <= feas_tol {
                zero
            } else {
                phase_one(p, opts)?
            }
        }
    };
    let working = initial_working_set(p, &start, feas_tol);
    active_set(p, start, working, opts)
}

fn initial_working_set(p: &QpProblem, u: &DVector<f64>, tol: f64) -> Vec<usize> {
    let slack = &p.w_vec - &p.w_mat * u;
    let mut ws: Vec<usize> = Vec::new();
    for i in 0..p.n_constraints() {
        // rows at or slightly past their bound start in the working set
        if slack[i] <= tol && independent(p, &ws, i) {
            ws.push(i);
        }
    }
    ws
}

fn independent(p: &QpProblem, ws: &[usize], i: usize) -> bool {
    if ws.len() >= p.dim() {
        return false;
    }
    let rows: Vec<_> = ws.iter().chain(std::iter::once(&i)).map(|&k| p.w_mat.row(k).clone_owned()).collect();
    let a = DMatrix::from_rows(&rows);
    let sv = a.singular_values();
    sv.min() > 1e-10 * sv.max().max(1.0)
}

/// Exact-penalty slack problem started from a trivially feasible point.
fn phase_one(p: &QpProblem, opts: &SolverOptions) -> Result<DVector<f64>, QpError> {
    // min t + ½t² + ½ε‖u‖² s.t. Ŵu − t ≤ ŵ, t ≥ 0 over unit-norm rows; the
    // multipliers stay far below 1, so t = 0 exactly whenever the region is nonempty
    let n = p.dim();
    let m = p.n_constraints();
    let eps = 1e-8;
    let mut h = DMatrix::identity(n + 1, n + 1) * eps;
    h[(n, n)] = 1.0;
    let mut hv = DVector::zeros(n + 1);
    hv[n] = 1.0;
    let mut w = DMatrix::zeros(m + 1, n + 1);
    let mut wv = DVector::zeros(m + 1);
    for i in 0..m {
        let norm = p.w_mat.row(i).norm();
        let k = if norm > 0.0 { 1.0 / norm } else { 1.0 };
        w.view_mut((i, 0), (1, n)).copy_from(&(p.w_mat.row(i) * k));
        wv[i] = p.w_vec[i] * k;
    }
    w.column_mut(n).fill(-1.0);
    let aux = QpProblem { h_mat: h, h_vec: hv, w_mat: w, w_vec: wv, state_rows: 0..0 };
    let mut x0 = DVector::zeros(n + 1);
    x0[n] = aux.max_violation(&DVector::zeros(n + 1)) + 1.0;
    let tol = 1e-12 * (1.0 + aux.w_vec.amax());
    let ws = initial_working_set(&aux, &x0, tol);
    let sol = active_set(&aux, x0, ws, opts)?;
    let u = sol.u_opt.rows(0, n).clone_owned();
    let violation = p.max_violation(&u);
    if violation <= 1e-9 * (1.0 + p.w_vec.amax()) {
        Ok(u)
    } else {
        Err(QpError::Infeasible { violation })
    }
}

fn active_set(p: &QpProblem, mut u: DVector<f64>, mut ws: Vec<usize>, opts: &SolverOptions) -> Result<QpSolution, QpError> {
    let n = p.dim();
    let m = p.n_constraints();
    let mut best = f64::INFINITY;
    // after an unblocked full step the iterate minimises over the working set,
    // so the next step is round-off only
    let mut at_subproblem_min = false;
    for iter in 0..opts.max_iterations {
        let g = &p.h_mat * &u + &p.h_vec;
        let (step, lam) = working_set_step(p, &ws, &g)?;
        if at_subproblem_min || step.amax() <= opts.step_tol * (1.0 + u.amax()) {
            at_subproblem_min = false;
            // most negative multiplier leaves; ties go to the lowest row index
            let mut worst: Option<(usize, f64)> = None;
            for (k, &l) in lam.iter().enumerate() {
                if l < -opts.dual_tol && worst.is_none_or(|(_, w)| l < w) {
                    worst = Some((k, l));
                }
            }
            let mut full = DVector::zeros(m);
            for (k, &row) in ws.iter().enumerate() {
                full[row] = lam[k];
            }
            match worst {
                None => {
                    let mut active = ws.clone();
                    active.sort_unstable();
                    let kkt = kkt_residual(p, &u, &full.map(|v: f64| v.max(0.0)));
                    return Ok(QpSolution {
                        objective: p.objective(&u),
                        u_opt: u,
                        active_set: active,
                        multipliers: full.map(|v: f64| v.max(0.0)),
                        kkt_residual: kkt,
                        iterations: iter + 1,
                    });
                }
                Some((k, _)) => {
                    best = best.min(kkt_residual(p, &u, &full));
                    ws.remove(k);
                }
            }
        } else {
            let wp = &p.w_mat * &step;
            let slack = &p.w_vec - &p.w_mat * &u;
            let mut alpha = 1.0;
            let mut blocking = None;
            for i in 0..m {
                if ws.contains(&i) || wp[i] <= 1e-14 * (1.0 + step.amax()) {
                    continue;
                }
                let a = slack[i].max(0.0) / wp[i];
                // a row dependent on the working set only blocks through round-off
                if a < alpha && independent(p, &ws, i) {
                    alpha = a;
                    blocking = Some(i);
                }
            }
            u += alpha * &step;
            match blocking {
                Some(i) => ws.push(i),
                None => at_subproblem_min = true,
            }
        }
        debug_assert_eq!(u.len(), n);
    }
    Err(QpError::NonConvergence { iterations: opts.max_iterations, residual: best })
}

/// Solves `[H Aᵀ; A 0][p; λ] = [−g; 0]` for the working set `A`.
fn working_set_step(p: &QpProblem, ws: &[usize], g: &DVector<f64>) -> Result<(DVector<f64>, Vec<f64>), QpError> {
    let n = p.dim();
    let k = ws.len();
    let mut kkt = DMatrix::zeros(n + k, n + k);
    kkt.view_mut((0, 0), (n, n)).copy_from(&p.h_mat);
    for (j, &row) in ws.iter().enumerate() {
        for c in 0..n {
            let a = p.w_mat[(row, c)];
            kkt[(n + j, c)] = a;
            kkt[(c, n + j)] = a;
        }
    }
    let mut rhs = DVector::zeros(n + k);
    rhs.rows_mut(0, n).copy_from(&(-g));
    let sol = match kkt.clone().lu().solve(&rhs) {
        Some(x) if x.iter().all(|v| v.is_finite()) => x,
        _ => kkt.svd(true, true).solve(&rhs, 1e-12).map_err(|_| QpError::Singular)?,
    };
    let step = sol.rows(0, n).clone_owned();
    let lam = sol.rows(n, k).iter().copied().collect();
    Ok((step, lam))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dm(r: usize, c: usize, v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, v)
    }

    #[test]
    fn single_step_prediction() {
        let a = Matrix2::new(1.0, 2.0, 3.0, 4.0);
        let b = Matrix2::new(0.5, 0.0, 0.1, 0.2);
        let p = build_prediction(&a, &b, 1).unwrap();
        assert_eq!(p.m_mat, dm(2, 2, a.as_slice()).transpose());
        assert_eq!(p.c_mat.fixed_view::<2, 2>(0, 0).clone_owned(), b);
        assert_eq!(build_prediction(&a, &b, 0), Err(QpError::EmptyHorizon));
    }

    #[test]
    fn identity_two_step_prediction() {
        let b = Matrix2::new(0.5, 0.1, 0.2, 0.3);
        let p = build_prediction(&Matrix2::identity(), &b, 2).unwrap();
        for i in 0..2 {
            assert_eq!(p.m_mat.fixed_view::<2, 2>(2 * i, 0).clone_owned(), Matrix2::identity());
        }
        assert_eq!(p.c_mat.fixed_view::<2, 2>(0, 2).clone_owned(), Matrix2::zeros());
        assert_eq!(p.c_mat.fixed_view::<2, 2>(2, 0).clone_owned(), b);
        assert_eq!(p.c_mat.fixed_view::<2, 2>(2, 2).clone_owned(), b);
    }

    #[test]
    fn scalar_unconstrained() {
        let p = QpProblem::new(dm(1, 1, &[2.0]), DVector::from_vec(vec![-4.0]), DMatrix::zeros(0, 1), DVector::zeros(0)).unwrap();
        let s = solve_qp(&p).unwrap();
        assert!((s.u_opt[0] - 2.0).abs() < 1e-14);
        assert!((s.objective + 4.0).abs() < 1e-14);
        assert!(s.kkt_residual <= 1e-12);
    }

    #[test]
    fn clipped_minimiser() {
        let p = QpProblem::new(dm(1, 1, &[1.0]), DVector::from_vec(vec![-1.0]), dm(1, 1, &[1.0]), DVector::from_vec(vec![0.5])).unwrap();
        let s = solve_qp(&p).unwrap();
        assert!((s.u_opt[0] - 0.5).abs() < 1e-14);
        assert!((s.multipliers[0] - 0.5).abs() < 1e-14);
        assert_eq!(s.active_set, vec![0]);
    }

    #[test]
    fn infeasible_reported() {
        let p = QpProblem::new(DMatrix::identity(1, 1), DVector::zeros(1), dm(2, 1, &[1.0, -1.0]), DVector::from_vec(vec![-1.0, -1.0]))
            .unwrap();
        assert!(matches!(solve_qp(&p), Err(QpError::Infeasible { .. })));
    }

    #[test]
    fn phase_one_start() {
        // feasible region u ≥ 3 excludes the origin
        let p = QpProblem::new(DMatrix::identity(1, 1), DVector::zeros(1), dm(1, 1, &[-1.0]), DVector::from_vec(vec![-3.0])).unwrap();
        let s = solve_qp(&p).unwrap();
        assert!((s.u_opt[0] - 3.0).abs() < 1e-12);
        assert!(s.kkt_residual <= 1e-10);
    }

    #[test]
    fn zero_problem_residual() {
        let p = QpProblem::new(DMatrix::identity(2, 2), DVector::zeros(2), DMatrix::zeros(0, 2), DVector::zeros(0)).unwrap();
        assert_eq!(kkt_residual(&p, &DVector::zeros(2), &DVector::zeros(0)), 0.0);
    }

    #[test]
    fn inverted_bounds_rejected() {
        let pred = build_prediction(&Matrix2::identity(), &Matrix2::identity(), 1).unwrap();
        let w = QpWeights { q: Matrix2::identity(), f: Matrix2::identity(), r: Matrix2::identity(), literal_linear_term: false };
        let b = Bounds { u_min: [1.0, 0.0], u_max: [0.0, 1.0], s_min: [0.0; 2], s_max: [1.0; 2] };
        assert!(matches!(build_qp(&pred, &Vector2::zeros(), &Vector2::zeros(), &w, &b), Err(QpError::Bounds(_))));
    }
}
