//! Bridge from assembled conic problems to the interior-point solver.
//!
//! The solver consumes `min q'x  s.t.  Ax + s = b, s in K` with K a product
//! of zero, nonnegative, and second-order cones in row order. The builder
//! below accumulates rows in whatever order the caller emits them and merges
//! adjacent cones of the same class.

use std::time::Instant;

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use crate::error::{Error, Result};
use crate::solution::RaceSolution;
use crate::solver::{SolveReport, SolveSettings, SolveStatus};
use crate::transcription::{AssembledProblem, Block, LinRow, Objective};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ConeClass {
    Zero,
    Nonneg,
    Soc,
}

/// Per-call options distilled from `SolveSettings`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct ConicOptions {
    pub tol: f64,
    pub max_iterations: u32,
    pub verbose: bool,
    pub time_limit: Option<f64>,
}

impl ConicOptions {
    pub fn from_settings(s: &SolveSettings) -> Self {
        ConicOptions {
            tol: s.conic_tol,
            max_iterations: s.max_conic_iterations,
            verbose: s.verbose,
            time_limit: s.time_limit,
        }
    }
}

/// Raw interior-point outcome before any interpretation.
#[derive(Debug, Clone)]
pub(crate) struct ConicOutcome {
    pub status: SolveStatus,
    pub x: Vec<f64>,
    pub obj: f64,
    pub iterations: u32,
    pub r_prim: f64,
    pub r_dual: f64,
}

fn map_status(status: SolverStatus) -> SolveStatus {
    match status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved => SolveStatus::AlmostOptimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => {
            SolveStatus::Unbounded
        }
        SolverStatus::MaxIterations | SolverStatus::MaxTime => SolveStatus::IterationLimit,
        _ => SolveStatus::NumericalTrouble,
    }
}

/// Accumulates `Ax + s = b` triplets plus the cone list.
pub(crate) struct ConicBuilder {
    n_vars: usize,
    /// Characteristic magnitude per column; the solver sees x_j / scale_j.
    col_scale: Vec<f64>,
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    b: Vec<f64>,
    cones: Vec<(ConeClass, usize)>,
}

impl ConicBuilder {
    /// Rows and the objective are expressed in natural units; the solver
    /// works on variables divided by their characteristic magnitudes and the
    /// outcome is mapped back.
    pub fn scaled(col_scale: Vec<f64>) -> Self {
        ConicBuilder {
            n_vars: col_scale.len(),
            col_scale,
            rows: Vec::new(),
            cols: Vec::new(),
            vals: Vec::new(),
            b: Vec::new(),
            cones: Vec::new(),
        }
    }

    /// Appends a fresh decision variable and returns its index.
    pub fn add_var(&mut self) -> usize {
        self.n_vars += 1;
        self.col_scale.push(1.0);
        self.n_vars - 1
    }

    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_rows(&self) -> usize {
        self.b.len()
    }

    fn push_row(&mut self, coeffs: &[(usize, f64)], rhs: f64, flip: bool) {
        let r = self.b.len();
        let sign = if flip { -1.0 } else { 1.0 };
        for &(j, c) in coeffs {
            debug_assert!(j < self.n_vars);
            if c != 0.0 {
                self.rows.push(r);
                self.cols.push(j);
                self.vals.push(sign * c * self.col_scale[j]);
            }
        }
        self.b.push(rhs);
    }

    fn note_cone(&mut self, class: ConeClass) {
        match self.cones.last_mut() {
            Some((last, count)) if *last == class && class != ConeClass::Soc => *count += 1,
            _ => self.cones.push((class, 1)),
        }
    }

    /// coeffs . x + offset = 0.
    pub fn eq_row(&mut self, coeffs: &[(usize, f64)], offset: f64) {
        self.push_row(coeffs, -offset, false);
        self.note_cone(ConeClass::Zero);
    }

    /// coeffs . x + offset <= 0.
    pub fn le_row(&mut self, coeffs: &[(usize, f64)], offset: f64) {
        self.push_row(coeffs, -offset, false);
        self.note_cone(ConeClass::Nonneg);
    }

    /// ||vector(x)|| <= scalar(x). The solver wants the scalar row first.
    pub fn soc(&mut self, scalar: &LinRow, vector: &[LinRow]) {
        self.push_row(&scalar.coeffs, scalar.offset, true);
        for row in vector {
            self.push_row(&row.coeffs, row.offset, true);
        }
        self.cones.push((ConeClass::Soc, vector.len() + 1));
    }

    pub fn solve(self, q: &[f64], opts: &ConicOptions) -> Result<ConicOutcome> {
        if q.len() != self.n_vars {
            return Err(Error::Solver(format!(
                "objective length {} does not match {} variables",
                q.len(),
                self.n_vars
            )));
        }
        let m = self.b.len();
        let q: Vec<f64> = q.iter().zip(&self.col_scale).map(|(c, d)| c * d).collect();
        let a = CscMatrix::new_from_triplets(m, self.n_vars, self.rows, self.cols, self.vals);
        let p = CscMatrix::zeros((self.n_vars, self.n_vars));
        let cones: Vec<SupportedConeT<f64>> = self
            .cones
            .iter()
            .map(|&(class, size)| match class {
                ConeClass::Zero => SupportedConeT::ZeroConeT(size),
                ConeClass::Nonneg => SupportedConeT::NonnegativeConeT(size),
                ConeClass::Soc => SupportedConeT::SecondOrderConeT(size),
            })
            .collect();
        let settings = DefaultSettingsBuilder::default()
            .verbose(opts.verbose)
            .max_iter(opts.max_iterations)
            .time_limit(opts.time_limit.unwrap_or(f64::INFINITY))
            .tol_gap_abs(opts.tol)
            .tol_gap_rel(opts.tol)
            .tol_feas(opts.tol)
            .build()
            .map_err(|e| Error::Solver(format!("bad interior-point settings: {e}")))?;
        let mut solver = DefaultSolver::new(&p, &q, &a, &self.b, &cones, settings)
            .map_err(|e| Error::Solver(format!("interior-point setup failed: {e}")))?;
        solver.solve();
        let sol = &solver.solution;
        let x = sol.x.iter().zip(&self.col_scale).map(|(y, d)| y * d).collect();
        Ok(ConicOutcome {
            status: map_status(sol.status),
            x,
            obj: sol.obj_val,
            iterations: sol.iterations,
            r_prim: sol.r_prim,
            r_dual: sol.r_dual,
        })
    }
}

/// Lowers an audited conic problem into solver form row by row.
pub(crate) fn lower_problem(problem: &AssembledProblem) -> ConicBuilder {
    let scales = (0..problem.n_vars()).map(|j| super::scp::var_scale(problem, j)).collect();
    let mut builder = ConicBuilder::scaled(scales);
    for block in &problem.blocks {
        match block {
            Block::Linear(b) => {
                for row in &b.rows {
                    if b.equality {
                        builder.eq_row(&row.coeffs, row.offset);
                    } else {
                        builder.le_row(&row.coeffs, row.offset);
                    }
                }
            }
            Block::Cone(b) => builder.soc(&b.scalar, &b.vector),
            Block::Smooth(_) => unreachable!("audited conic problem"),
        }
    }
    for j in 0..problem.n_vars() {
        if problem.lower[j].is_finite() {
            builder.le_row(&[(j, -1.0)], problem.lower[j]);
        }
        if problem.upper[j].is_finite() {
            builder.le_row(&[(j, 1.0)], -problem.upper[j]);
        }
    }
    builder
}

/// Solves the second-order-cone formulation directly.
pub fn solve_conic(
    problem: &AssembledProblem,
    settings: &SolveSettings,
) -> Result<(RaceSolution, SolveReport)> {
    let started = Instant::now();
    problem.audit_convex()?;
    let coeffs = match &problem.objective {
        Objective::Linear(coeffs) => coeffs,
        _ => return Err(Error::Validation("conic solve needs a linear objective".into())),
    };
    let mut q = vec![0.0; problem.n_vars()];
    for &(j, c) in coeffs {
        q[j] += c;
    }
    let builder = lower_problem(problem);
    log::debug!(
        "conic solve: {} variables, {} rows",
        builder.n_vars(),
        builder.n_rows()
    );
    let outcome = builder.solve(&q, &ConicOptions::from_settings(settings))?;
    let violation = if outcome.status.is_usable() {
        problem.violations(&outcome.x).max_scaled
    } else {
        f64::NAN
    };
    let report = SolveReport {
        status: outcome.status,
        formulation: problem.formulation(),
        model: problem.model(),
        objective: outcome.obj,
        max_violation: violation,
        conic_iterations: u64::from(outcome.iterations),
        scp_iterations: 0,
        wall_time_s: started.elapsed().as_secs_f64(),
        r_prim: outcome.r_prim,
        r_dual: outcome.r_dual,
    };
    Ok((RaceSolution::extract(problem, outcome.x), report))
}
