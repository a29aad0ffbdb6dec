use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};

use super::{normalize, ConeBlock, ConicError, ConicProgram, ConicSolver, SolveStatus, Solution};

/// Interior-point backend built on the Clarabel solver.
#[derive(Debug, Clone)]
pub struct ClarabelBackend {
    pub max_iter: u32,
    pub verbose: bool,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        ClarabelBackend {
            max_iter: 200,
            verbose: false,
        }
    }
}

#[derive(Default)]
struct Rows {
    i: Vec<usize>,
    j: Vec<usize>,
    v: Vec<f64>,
    b: Vec<f64>,
}

impl Rows {
    fn push(&mut self, terms: impl IntoIterator<Item = (usize, f64)>, rhs: f64) {
        let row = self.b.len();
        for (col, a) in terms {
            if a != 0.0 {
                self.i.push(row);
                self.j.push(col);
                self.v.push(a);
            }
        }
        self.b.push(rhs);
    }
}

impl ConicSolver for ClarabelBackend {
    fn solve(&self, program: &ConicProgram, tol: f64) -> Result<Solution, ConicError> {
        let std_form = normalize(program)?;
        let n = std_form.num_vars();
        let mut rows = Rows::default();
        let mut cones = Vec::new();

        for c in &std_form.equalities {
            rows.push(c.terms.iter().map(|&(v, a)| (v.0, a)), c.rhs);
        }
        if !std_form.equalities.is_empty() {
            cones.push(SupportedConeT::ZeroConeT(std_form.equalities.len()));
        }
        let ineq_start = rows.b.len();
        for c in &std_form.inequalities {
            rows.push(c.terms.iter().map(|&(v, a)| (v.0, a)), c.rhs);
        }
        for (k, var) in std_form.variables.iter().enumerate() {
            if var.upper.is_finite() {
                rows.push([(k, 1.0)], var.upper);
            }
            if var.lower.is_finite() {
                rows.push([(k, -1.0)], -var.lower);
            }
        }
        let nonneg = rows.b.len() - ineq_start;
        if nonneg > 0 {
            cones.push(SupportedConeT::NonnegativeConeT(nonneg));
        }
        for cone in &std_form.cones {
            let ConeBlock::SecondOrder { t, z } = cone else {
                unreachable!("normalize removes rotated blocks")
            };
            // slack s = b - A x must equal each affine entry
            for e in std::iter::once(t).chain(z) {
                rows.push(e.terms.iter().map(|&(v, a)| (v.0, -a)), e.constant);
            }
            cones.push(SupportedConeT::SecondOrderConeT(1 + z.len()));
        }

        let mut q = vec![0.0; n];
        for &(v, a) in &std_form.objective.terms {
            q[v.0] += a;
        }
        if rows.b.is_empty() || n == 0 {
            return Ok(trivial(program, &q));
        }

        let m = rows.b.len();
        let a = CscMatrix::new_from_triplets(m, n, rows.i, rows.j, rows.v);
        let p = CscMatrix::zeros((n, n));
        let settings = DefaultSettings {
            verbose: self.verbose,
            max_iter: self.max_iter,
            tol_gap_abs: tol,
            tol_gap_rel: tol,
            tol_feas: tol,
            ..DefaultSettings::default()
        };
        let mut solver = DefaultSolver::new(&p, &q, &a, &rows.b, &cones, settings)
            .map_err(|e| ConicError::SolverUnavailable(e.to_string()))?;
        solver.solve();
        let sol = &solver.solution;

        let x = sol.x.clone();
        let max_residual = program.max_violation(&x);
        let status = match sol.status {
            SolverStatus::Solved => SolveStatus::Optimal,
            SolverStatus::AlmostSolved if max_residual <= 10.0 * tol => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
            SolverStatus::DualInfeasible | SolverStatus::AlmostDualInfeasible => SolveStatus::Unbounded,
            _ => SolveStatus::NumericalFailure,
        };
        let n_eq = std_form.equalities.len();
        let n_ineq = program.inequalities.len();
        let optimal = status == SolveStatus::Optimal;
        Ok(Solution {
            status,
            objective: if optimal { program.objective_value(&x) } else { f64::NAN },
            primal: optimal.then_some(x),
            max_residual,
            eq_duals: sol.z[..n_eq].to_vec(),
            ineq_duals: sol.z[ineq_start..ineq_start + n_ineq].to_vec(),
            iterations: sol.iterations,
        })
    }
}

/// Programs without constraints: optimal at zero unless the objective is non-constant.
fn trivial(program: &ConicProgram, q: &[f64]) -> Solution {
    let unbounded = q.iter().any(|&c| c != 0.0);
    let x = vec![0.0; program.num_vars()];
    Solution {
        status: if unbounded { SolveStatus::Unbounded } else { SolveStatus::Optimal },
        objective: if unbounded { f64::NAN } else { program.objective.constant },
        primal: (!unbounded).then_some(x),
        max_residual: 0.0,
        eq_duals: vec![],
        ineq_duals: vec![],
        iterations: 0,
    }
}
