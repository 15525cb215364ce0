//! Small dense convex QP solver.
//!
//! Solves
//!
//! ```text
//!     minimize    ½ xᵀHx + cᵀx
//!     subject to  A_eq x  = b_eq
//!                 A_in x >= b_in
//! ```
//!
//! with a primal active-set method. Each iteration works in the null space
//! `Z` of the working-set rows: the reduced Hessian `ZᵀHZ` is diagonalized,
//! curvature directions get a Newton step and zero-curvature directions with
//! a descent slope become rays that must be stopped by a constraint (else the
//! problem is unbounded). Zero-curvature directions with zero slope are flat
//! and left alone, which yields the minimum-norm step on singular `H`.
//!
//! Phase 1 starts from the least-norm equality solution and, if inequalities
//! are violated, relaxes them by a scalar `s` times their violation and drives
//! `s` to zero with the same machinery.

use nalgebra::{DMatrix, DVector, SymmetricEigen, QR};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("invalid quadratic program: {0}")]
    InvalidProblem(String),
    #[error("infeasible: {0}")]
    Infeasible(String),
    #[error("unbounded: the objective decreases without limit along a feasible ray")]
    Unbounded,
    #[error("iteration limit of {0} reached")]
    IterationLimit(usize),
    #[error("working-set system is numerically singular (stationarity residual {0:.3e})")]
    IllConditioned(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    pub h: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub a_eq: DMatrix<f64>,
    pub b_eq: DVector<f64>,
    /// Rows meaning `a_ineq · x >= b_ineq`.
    pub a_ineq: DMatrix<f64>,
    pub b_ineq: DVector<f64>,
}

impl QuadraticProgram {
    pub fn new(h: DMatrix<f64>) -> Self {
        let p = h.ncols();
        Self {
            h,
            linear: DVector::zeros(p),
            a_eq: DMatrix::zeros(0, p),
            b_eq: DVector::zeros(0),
            a_ineq: DMatrix::zeros(0, p),
            b_ineq: DVector::zeros(0),
        }
    }

    pub fn with_linear(mut self, c: DVector<f64>) -> Self {
        self.linear = c;
        self
    }

    pub fn with_equalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_eq = a;
        self.b_eq = b;
        self
    }

    pub fn with_inequalities(mut self, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        self.a_ineq = a;
        self.b_ineq = b;
        self
    }

    pub fn dim(&self) -> usize {
        self.h.ncols()
    }

    pub fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.h * x)) + self.linear.dot(x)
    }

    pub fn validate(&self) -> Result<(), QpError> {
        let p = self.dim();
        let bad = |msg: String| Err(QpError::InvalidProblem(msg));
        if self.h.nrows() != p {
            return bad(format!("H is {}x{}, expected square", self.h.nrows(), p));
        }
        if self.linear.len() != p {
            return bad(format!("linear term has length {}, expected {p}", self.linear.len()));
        }
        if self.a_eq.ncols() != p || self.a_eq.nrows() != self.b_eq.len() {
            return bad("equality system dimensions are inconsistent".into());
        }
        if self.a_ineq.ncols() != p || self.a_ineq.nrows() != self.b_ineq.len() {
            return bad("inequality system dimensions are inconsistent".into());
        }
        let finite = |m: &[f64]| m.iter().all(|v| v.is_finite());
        if !(finite(self.h.as_slice())
            && finite(self.linear.as_slice())
            && finite(self.a_eq.as_slice())
            && finite(self.b_eq.as_slice())
            && finite(self.a_ineq.as_slice())
            && finite(self.b_ineq.as_slice()))
        {
            return bad("problem data contains non-finite values".into());
        }
        let scale = self.h.amax();
        if (&self.h - self.h.transpose()).amax() > 1e-12 * scale {
            return bad("H is not symmetric".into());
        }
        if p > 0 && scale > 0.0 {
            let min_eig = self.h.clone().symmetric_eigenvalues().min();
            if min_eig < -1e-8 * scale {
                return bad(format!("H is not positive semidefinite (eigenvalue {min_eig:.3e})"));
            }
        }
        Ok(())
    }
}

/// Starting point and active inequality indices from a related solve.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WarmStart {
    pub x: Vec<f64>,
    pub active: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct QpOptions {
    /// Defaults to `50·p`.
    pub max_iterations: Option<usize>,
    /// Used when `x` is feasible; otherwise phase 1 runs as usual.
    pub warm_start: Option<WarmStart>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub x: Vec<f64>,
    /// Inequality indices in the final working set, ascending.
    pub active_set: Vec<usize>,
    pub objective: f64,
    pub iterations: usize,
    pub multipliers_eq: Vec<f64>,
    /// One per inequality row; zero for rows outside the working set.
    pub multipliers_ineq: Vec<f64>,
    /// Objective after every phase-2 step, starting at the feasible point.
    pub objective_trace: Vec<f64>,
    pub warm_started: bool,
}

impl QpSolution {
    /// `‖Hx + c − A_eqᵀμ_eq − A_inᵀμ_in‖∞`.
    pub fn stationarity_residual(&self, qp: &QuadraticProgram) -> f64 {
        let x = DVector::from_column_slice(&self.x);
        let mut r = &qp.h * &x + &qp.linear;
        r -= qp.a_eq.transpose() * DVector::from_column_slice(&self.multipliers_eq);
        r -= qp.a_ineq.transpose() * DVector::from_column_slice(&self.multipliers_ineq);
        r.amax()
    }
}

pub fn solve_qp(qp: &QuadraticProgram) -> Result<QpSolution, QpError> {
    solve_qp_with(qp, &QpOptions::default())
}

pub fn solve_qp_with(qp: &QuadraticProgram, options: &QpOptions) -> Result<QpSolution, QpError> {
    qp.validate()?;
    let p = qp.dim();
    let n_eq = qp.a_eq.nrows();
    let n_in = qp.a_ineq.nrows();
    let h = (&qp.h + qp.h.transpose()) * 0.5;
    let rows = stack_rows(&qp.a_eq, &qp.a_ineq);
    let b = stack_vec(&qp.b_eq, &qp.b_ineq);
    let mut budget = options.max_iterations.unwrap_or(50 * p.max(1));
    let limit = budget;

    let main = Engine::new(&h, &qp.linear, &rows, &b, n_eq);

    let warm = options
        .warm_start
        .as_ref()
        .filter(|w| w.x.len() == p)
        .map(|w| (DVector::from_column_slice(&w.x), w))
        .filter(|(x, _)| main.is_feasible(x));

    let (x0, working, warm_started) = match warm {
        Some((x, w)) => {
            let hint = w.active.iter().map(|&j| n_eq + j).filter(|&j| j < n_eq + n_in);
            let working = main.initial_working_set(&x, hint);
            (x, working, true)
        }
        None => {
            let (x, working) = phase_one(qp, &rows, &b, n_eq, &mut budget, limit)?;
            (x, working, false)
        }
    };

    let mut trace = vec![qp.objective(&x0)];
    let outcome = main.run(x0, working, &mut budget, limit, Some((qp, &mut trace)))?;
    let x = outcome.x;
    let mut multipliers_eq = vec![0.0; n_eq];
    let mut multipliers_ineq = vec![0.0; n_in];
    let mut active_set = Vec::new();
    for (&row, &mu) in outcome.working.iter().zip(&outcome.multipliers) {
        if row < n_eq {
            multipliers_eq[row] = mu;
        } else {
            multipliers_ineq[row - n_eq] = mu;
            active_set.push(row - n_eq);
        }
    }
    active_set.sort_unstable();
    Ok(QpSolution {
        objective: qp.objective(&x),
        x: x.as_slice().to_vec(),
        active_set,
        iterations: limit - budget,
        multipliers_eq,
        multipliers_ineq,
        objective_trace: trace,
        warm_started,
    })
}

fn stack_rows(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    let p = top.ncols().max(bottom.ncols());
    let mut rows = DMatrix::zeros(top.nrows() + bottom.nrows(), p);
    rows.view_mut((0, 0), (top.nrows(), top.ncols())).copy_from(top);
    rows.view_mut((top.nrows(), 0), (bottom.nrows(), bottom.ncols()))
        .copy_from(bottom);
    rows
}

fn stack_vec(top: &DVector<f64>, bottom: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(top.len() + bottom.len(), top.iter().chain(bottom.iter()).copied())
}

/// Feasible start: least-norm equality solution, then the relaxed problem
/// `min ½s²` over `A_in x + s·r >= b_in` from `(x₀, 1)`.
fn phase_one(
    qp: &QuadraticProgram,
    rows: &DMatrix<f64>,
    b: &DVector<f64>,
    n_eq: usize,
    budget: &mut usize,
    limit: usize,
) -> Result<(DVector<f64>, Vec<usize>), QpError> {
    let p = qp.dim();
    let x0 = if n_eq > 0 {
        let svd = qp.a_eq.clone().svd(true, true);
        let eps = 1e-12 * svd.singular_values.max();
        let x = svd
            .solve(&qp.b_eq, eps)
            .map_err(|e| QpError::InvalidProblem(e.to_string()))?;
        let residual = (&qp.a_eq * &x - &qp.b_eq).amax();
        let scale = 1.0 + qp.b_eq.amax() + qp.a_eq.amax() * x.amax();
        if residual > 1e-9 * scale {
            return Err(QpError::Infeasible(format!(
                "equality constraints are inconsistent (residual {residual:.3e})"
            )));
        }
        x
    } else {
        DVector::zeros(p)
    };

    let violation = DVector::from_iterator(
        qp.a_ineq.nrows(),
        (0..qp.a_ineq.nrows()).map(|i| (qp.b_ineq[i] - qp.a_ineq.row(i).dot(&x0.transpose())).max(0.0)),
    );
    let plain = Engine::new(&qp.h, &qp.linear, rows, b, n_eq);
    if plain.is_feasible(&x0) {
        let working = plain.initial_working_set(&x0, n_eq..rows.nrows());
        return Ok((x0, working));
    }

    let mut aux_rows = DMatrix::zeros(rows.nrows(), p + 1);
    aux_rows.view_mut((0, 0), (rows.nrows(), p)).copy_from(rows);
    for (i, r) in violation.iter().enumerate() {
        aux_rows[(n_eq + i, p)] = *r;
    }
    let mut aux_h = DMatrix::zeros(p + 1, p + 1);
    aux_h[(p, p)] = 1.0;
    let aux_c = DVector::zeros(p + 1);
    let mut z0 = DVector::zeros(p + 1);
    z0.rows_mut(0, p).copy_from(&x0);
    z0[p] = 1.0;
    let aux = Engine::new(&aux_h, &aux_c, &aux_rows, b, n_eq);
    let working = aux.initial_working_set(&z0, n_eq..rows.nrows());
    let outcome = aux.run(z0, working, budget, limit, None)?;
    let s = outcome.x[p];
    if s > 1e-9 {
        return Err(QpError::Infeasible(format!(
            "inequality constraints cannot be satisfied together with the equalities (relaxation {s:.3e})"
        )));
    }
    let x = outcome.x.rows(0, p).into_owned();
    let working = plain.initial_working_set(&x, outcome.working.into_iter().filter(|&j| j >= n_eq));
    Ok((x, working))
}

struct Outcome {
    x: DVector<f64>,
    working: Vec<usize>,
    multipliers: Vec<f64>,
}

struct Engine<'a> {
    h: &'a DMatrix<f64>,
    c: &'a DVector<f64>,
    rows: &'a DMatrix<f64>,
    b: &'a DVector<f64>,
    n_eq: usize,
    row_norms: Vec<f64>,
    h_scale: f64,
}

impl<'a> Engine<'a> {
    fn new(
        h: &'a DMatrix<f64>,
        c: &'a DVector<f64>,
        rows: &'a DMatrix<f64>,
        b: &'a DVector<f64>,
        n_eq: usize,
    ) -> Self {
        let row_norms = (0..rows.nrows()).map(|i| rows.row(i).norm()).collect();
        Self {
            h,
            c,
            rows,
            b,
            n_eq,
            row_norms,
            h_scale: h.amax(),
        }
    }

    fn dim(&self) -> usize {
        self.h.ncols()
    }

    fn residual(&self, j: usize, x: &DVector<f64>) -> f64 {
        self.rows.row(j).dot(&x.transpose()) - self.b[j]
    }

    fn tolerance(&self, j: usize, x: &DVector<f64>) -> f64 {
        1e-9 * (self.row_norms[j] * (1.0 + x.amax()) + self.b[j].abs())
    }

    fn is_feasible(&self, x: &DVector<f64>) -> bool {
        (0..self.rows.nrows()).all(|j| {
            let r = self.residual(j, x);
            let tol = self.tolerance(j, x);
            if j < self.n_eq {
                r.abs() <= tol
            } else {
                r >= -tol
            }
        })
    }

    /// Equalities plus the candidate inequalities active at `x`, keeping only
    /// linearly independent rows.
    fn initial_working_set(&self, x: &DVector<f64>, candidates: impl IntoIterator<Item = usize>) -> Vec<usize> {
        let p = self.dim();
        let mut basis: Vec<DVector<f64>> = Vec::new();
        let mut working = Vec::new();
        let eqs = 0..self.n_eq;
        let active = candidates
            .into_iter()
            .filter(|&j| j >= self.n_eq && self.residual(j, x).abs() <= self.tolerance(j, x));
        for j in eqs.chain(active) {
            if working.contains(&j) || basis.len() >= p {
                continue;
            }
            let norm = self.row_norms[j];
            if norm == 0.0 {
                continue;
            }
            let mut v = self.rows.row(j).transpose() / norm;
            for _ in 0..2 {
                for q in &basis {
                    let proj = q.dot(&v);
                    v.axpy(-proj, q, 1.0);
                }
            }
            let rest = v.norm();
            if rest > 1e-10 {
                basis.push(v / rest);
                working.push(j);
            }
        }
        working
    }

    fn run(
        &self,
        mut x: DVector<f64>,
        mut working: Vec<usize>,
        budget: &mut usize,
        limit: usize,
        mut trace: Option<(&QuadraticProgram, &mut Vec<f64>)>,
    ) -> Result<Outcome, QpError> {
        let p = self.dim();
        // set after a full Newton step; recomputing the step there only
        // returns rounding noise on ill-conditioned reduced Hessians
        let mut minimized = false;
        loop {
            if *budget == 0 {
                return Err(QpError::IterationLimit(limit));
            }
            *budget -= 1;

            let g = self.h * &x + self.c;
            let k = working.len();
            let (q, r) = self.factor(&working);
            let z = q.columns(k, p - k).into_owned();
            let step = if minimized { None } else { self.direction(&z, &g, &x)? };

            let step_norm = step.as_ref().map_or(0.0, |(d, _)| d.amax());
            if step_norm <= 1e-13 * (1.0 + x.amax()) {
                let multipliers = self.multipliers(&q, &r, k, &g);
                let tol = 1e-9 * g.amax().max(1.0);
                let drop = working
                    .iter()
                    .zip(&multipliers)
                    .enumerate()
                    .filter(|(_, (&j, &mu))| j >= self.n_eq && mu < -tol)
                    .min_by(|(_, (ja, ma)), (_, (jb, mb))| ma.total_cmp(mb).then(ja.cmp(jb)))
                    .map(|(pos, _)| pos);
                match drop {
                    None => {
                        return Ok(Outcome {
                            x,
                            working,
                            multipliers,
                        })
                    }
                    Some(pos) => {
                        working.remove(pos);
                        minimized = false;
                        continue;
                    }
                }
            }

            let (direction, is_ray) = step.expect("nonzero step");
            let cap = if is_ray { f64::INFINITY } else { 1.0 };
            let mut alpha = cap;
            let mut blocking = None;
            let d_norm = direction.norm();
            for j in self.n_eq..self.rows.nrows() {
                if working.contains(&j) {
                    continue;
                }
                let ad = self.rows.row(j).dot(&direction.transpose());
                if ad >= -1e-12 * self.row_norms[j] * d_norm {
                    continue;
                }
                let slack = self.residual(j, &x).max(0.0);
                let ratio = slack / -ad;
                if ratio < alpha {
                    alpha = ratio;
                    blocking = Some(j);
                }
            }
            if alpha.is_infinite() {
                return Err(QpError::Unbounded);
            }
            x.axpy(alpha, &direction, 1.0);
            if let Some(j) = blocking {
                working.push(j);
            } else {
                minimized = true;
                // full Newton step: the working-set subproblem must now be stationary
                let g_new = self.h * &x + self.c;
                let reduced = z.transpose() * &g_new;
                let scale = 1.0 + g_new.amax() + self.h_scale * x.amax();
                if reduced.amax() > 1e-6 * scale {
                    return Err(QpError::IllConditioned(reduced.amax() / scale));
                }
            }
            if let Some((qp, trace)) = trace.as_mut() {
                trace.push(qp.objective(&x));
            }
        }
    }

    /// Householder QR of `[A_Wᵀ | I]`: the first `k` columns of `Q` span the
    /// working rows, the rest is an orthonormal null-space basis.
    fn factor(&self, working: &[usize]) -> (DMatrix<f64>, DMatrix<f64>) {
        let p = self.dim();
        let k = working.len();
        let mut m = DMatrix::zeros(p, k + p);
        for (col, &j) in working.iter().enumerate() {
            m.column_mut(col).copy_from(&self.rows.row(j).transpose());
        }
        m.view_mut((0, k), (p, p)).fill_with_identity();
        let qr = QR::new(m);
        (qr.q(), qr.r())
    }

    /// Newton step on the curved part of the reduced problem, or a descent
    /// ray along a zero-curvature direction. `None` when stationary.
    fn direction(
        &self,
        z: &DMatrix<f64>,
        g: &DVector<f64>,
        x: &DVector<f64>,
    ) -> Result<Option<(DVector<f64>, bool)>, QpError> {
        if z.ncols() == 0 {
            return Ok(None);
        }
        let hz = z.transpose() * self.h * z;
        let hz = (&hz + hz.transpose()) * 0.5;
        let gz = z.transpose() * g;
        let eig = SymmetricEigen::new(hz);
        let gv = eig.eigenvectors.transpose() * &gz;
        let curvature_tol = 1e-11 * self.h_scale.max(f64::MIN_POSITIVE);
        let slope_tol = 1e-9 * (g.amax() + self.h_scale * x.amax() + self.c.amax());
        let n = gv.len();
        let mut ray = DVector::zeros(n);
        let mut newton = DVector::zeros(n);
        let mut has_ray = false;
        for i in 0..n {
            let lambda = eig.eigenvalues[i];
            if lambda > curvature_tol {
                newton[i] = -gv[i] / lambda;
            } else if gv[i].abs() > slope_tol {
                ray[i] = -gv[i];
                has_ray = true;
            }
        }
        let coords = if has_ray { ray } else { newton };
        let direction = z * (&eig.eigenvectors * coords);
        Ok(Some((direction, has_ray)))
    }

    /// Least-squares `μ` with `A_Wᵀμ = g`, from the triangular factor.
    fn multipliers(&self, q: &DMatrix<f64>, r: &DMatrix<f64>, k: usize, g: &DVector<f64>) -> Vec<f64> {
        if k == 0 {
            return Vec::new();
        }
        let rhs = q.columns(0, k).transpose() * g;
        let r11 = r.view((0, 0), (k, k)).into_owned();
        match r11.solve_upper_triangular(&rhs) {
            Some(mu) => mu.as_slice().to_vec(),
            None => vec![0.0; k],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(rows, cols, data)
    }

    fn vecd(data: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(data)
    }

    #[test]
    fn symmetric_projection() {
        let qp = QuadraticProgram::new(DMatrix::identity(2, 2) * 2.0)
            .with_equalities(mat(1, 2, &[1.0, 1.0]), vecd(&[2.0]));
        let sol = solve_qp(&qp).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-12 && (sol.x[1] - 1.0).abs() < 1e-12);
        assert!(sol.active_set.is_empty());
    }

    #[test]
    fn clamped_projection() {
        let qp = QuadraticProgram::new(DMatrix::identity(2, 2) * 2.0)
            .with_equalities(mat(1, 2, &[1.0, 1.0]), vecd(&[2.0]))
            .with_inequalities(mat(1, 2, &[1.0, 0.0]), vecd(&[1.5]));
        let sol = solve_qp(&qp).unwrap();
        assert!((sol.x[0] - 1.5).abs() < 1e-12 && (sol.x[1] - 0.5).abs() < 1e-12);
        assert_eq!(sol.active_set, vec![0]);
        assert!(sol.multipliers_ineq[0] > 0.0);
        assert!(sol.stationarity_residual(&qp) < 1e-10);
    }

    #[test]
    fn inconsistent_equalities() {
        let qp = QuadraticProgram::new(DMatrix::identity(2, 2)).with_equalities(
            mat(2, 2, &[1.0, 1.0, 2.0, 2.0]),
            vecd(&[1.0, 3.0]),
        );
        assert!(matches!(solve_qp(&qp), Err(QpError::Infeasible(_))));
    }

    #[test]
    fn redundant_equalities_are_tolerated() {
        let qp = QuadraticProgram::new(DMatrix::identity(2, 2)).with_equalities(
            mat(2, 2, &[1.0, 1.0, 2.0, 2.0]),
            vecd(&[1.0, 2.0]),
        );
        let sol = solve_qp(&qp).unwrap();
        assert!((sol.x[0] - 0.5).abs() < 1e-12 && (sol.x[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn infeasible_inequalities() {
        let qp = QuadraticProgram::new(DMatrix::identity(2, 2))
            .with_equalities(mat(1, 2, &[1.0, 1.0]), vecd(&[1.0]))
            .with_inequalities(mat(2, 2, &[1.0, 0.0, 0.0, 1.0]), vecd(&[0.8, 0.8]));
        assert!(matches!(solve_qp(&qp), Err(QpError::Infeasible(_))));
    }

    #[test]
    fn unbounded_ray() {
        // minimize -x0 with zero curvature and no blocking constraint
        let qp = QuadraticProgram::new(DMatrix::zeros(2, 2))
            .with_linear(vecd(&[-1.0, 0.0]))
            .with_inequalities(mat(1, 2, &[0.0, 1.0]), vecd(&[0.0]));
        assert_eq!(solve_qp(&qp), Err(QpError::Unbounded));
    }

    #[test]
    fn flat_direction_is_not_unbounded() {
        // H singular along (1,-1), equality along (1,1)
        let h = mat(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let qp = QuadraticProgram::new(h).with_equalities(mat(1, 2, &[1.0, 1.0]), vecd(&[2.0]));
        let sol = solve_qp(&qp).unwrap();
        assert!((sol.x[0] + sol.x[1] - 2.0).abs() < 1e-12);
        assert!((sol.objective - 2.0).abs() < 1e-12);
    }

    #[test]
    fn zero_curvature_ray_stopped_by_constraint() {
        let qp = QuadraticProgram::new(DMatrix::zeros(2, 2))
            .with_linear(vecd(&[-1.0, 0.0]))
            .with_inequalities(mat(2, 2, &[-1.0, 0.0, 0.0, 1.0]), vecd(&[-3.0, 0.0]));
        let sol = solve_qp(&qp).unwrap();
        assert!((sol.x[0] - 3.0).abs() < 1e-12);
        assert!(sol.active_set.contains(&0));
    }

    #[test]
    fn rejects_bad_input() {
        let qp = QuadraticProgram::new(mat(2, 2, &[1.0, 0.5, 0.0, 1.0]));
        assert!(matches!(solve_qp(&qp), Err(QpError::InvalidProblem(_))));
        let qp = QuadraticProgram::new(mat(2, 2, &[-1.0, 0.0, 0.0, 1.0]));
        assert!(matches!(solve_qp(&qp), Err(QpError::InvalidProblem(_))));
        let qp = QuadraticProgram::new(DMatrix::identity(2, 2))
            .with_equalities(mat(1, 3, &[1.0, 1.0, 1.0]), vecd(&[1.0]));
        assert!(matches!(solve_qp(&qp), Err(QpError::InvalidProblem(_))));
    }

    #[test]
    fn iteration_limit() {
        let qp = QuadraticProgram::new(DMatrix::identity(3, 3))
            .with_inequalities(mat(3, 3, &[1., 0., 0., 0., 1., 0., 0., 0., 1.]), vecd(&[1.0, 1.0, 1.0]));
        let options = QpOptions {
            max_iterations: Some(1),
            warm_start: None,
        };
        assert_eq!(solve_qp_with(&qp, &options), Err(QpError::IterationLimit(1)));
    }

    #[test]
    fn warm_start_reuses_solution() {
        let qp = QuadraticProgram::new(DMatrix::identity(2, 2) * 2.0)
            .with_equalities(mat(1, 2, &[1.0, 1.0]), vecd(&[2.0]))
            .with_inequalities(mat(1, 2, &[1.0, 0.0]), vecd(&[1.5]));
        let cold = solve_qp(&qp).unwrap();
        let options = QpOptions {
            max_iterations: None,
            warm_start: Some(WarmStart {
                x: cold.x.clone(),
                active: cold.active_set.clone(),
            }),
        };
        let warm = solve_qp_with(&qp, &options).unwrap();
        assert!(warm.warm_started);
        assert!(warm.iterations <= cold.iterations);
        assert!((warm.x[0] - cold.x[0]).abs() < 1e-12);
        // infeasible warm start falls back to phase 1
        let options = QpOptions {
            max_iterations: None,
            warm_start: Some(WarmStart {
                x: vec![0.0, 0.0],
                active: vec![],
            }),
        };
        let fallback = solve_qp_with(&qp, &options).unwrap();
        assert!(!fallback.warm_started);
        assert!((fallback.x[1] - 0.5).abs() < 1e-12);
    }
}
