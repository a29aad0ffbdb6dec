//! Membership and separation through phase-one linear programs.

use serde::{Deserialize, Serialize};

use super::hull::box_vertices;
use super::{dual_hull_formulation, ConvexifyError, Hyperbox, LinearRelaxation, RVar};
use crate::conic::{solve, AffineExpr, ConicProgram, SolveStatus, VarId};
use crate::multilinear::MultilinearExpr;

/// Phase-one objectives at or below this value count as feasible.
pub const MEMBERSHIP_TOL: f64 = 1e-7;

const LP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOne {
    /// Minimum total slack needed to satisfy every row.
    pub infeasibility: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Membership {
    Inside,
    Outside,
}

/// `a_x . x + a_w w <= b`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidInequality {
    pub a_x: Vec<(VarId, f64)>,
    pub a_w: f64,
    pub b: f64,
}

impl ValidInequality {
    /// Positive when `(x, w)` violates the inequality.
    pub fn violation(&self, x: &[f64], w: f64) -> f64 {
        self.a_x.iter().map(|&(v, a)| a * x[v.0]).sum::<f64>() + self.a_w * w - self.b
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Separation {
    Inside,
    Cut(ValidInequality),
}

fn check_status(status: SolveStatus) -> Result<(), ConvexifyError> {
    if status == SolveStatus::Optimal {
        Ok(())
    } else {
        Err(ConvexifyError::SolverFailure(status))
    }
}

impl LinearRelaxation {
    /// Minimum total violation of the relaxation's rows with the original
    /// variables fixed to `x[v.0]` and the outputs fixed to `w`.
    pub fn phase_one(&self, x: &[f64], w: &[f64]) -> Result<PhaseOne, ConvexifyError> {
        if w.len() != self.outputs.len() {
            return Err(ConvexifyError::OutputCount {
                expected: self.outputs.len(),
                found: w.len(),
            });
        }
        let mut p = ConicProgram::new();
        let aux: Vec<VarId> = (0..self.aux.len()).map(|i| p.add_free_var(format!("w{i}"))).collect();
        let lambda: Vec<VarId> = (0..self.num_lambda()).map(|i| p.add_var(format!("l{i}"), 0.0, f64::INFINITY)).collect();
        let mut slack = Vec::new();
        // split fixed and free parts of a row
        let split = |terms: &[(RVar, f64)]| -> (Vec<(VarId, f64)>, f64) {
            let mut free = Vec::new();
            let mut fixed = 0.0;
            for &(r, a) in terms {
                match r {
                    RVar::Orig(v) => fixed += a * x[v.0],
                    RVar::Aux(i) => free.push((aux[i], a)),
                    RVar::Lambda(i) => free.push((lambda[i], a)),
                }
            }
            (free, fixed)
        };
        let mut add_eq = |p: &mut ConicProgram, mut terms: Vec<(VarId, f64)>, rhs: f64| {
            let (sp, sn) = (p.add_var("p", 0.0, f64::INFINITY), p.add_var("n", 0.0, f64::INFINITY));
            terms.push((sp, 1.0));
            terms.push((sn, -1.0));
            slack.extend([sp, sn]);
            p.add_eq(terms, rhs);
        };
        for row in &self.equalities {
            let (free, fixed) = split(&row.terms);
            add_eq(&mut p, free, row.rhs - fixed);
        }
        for (out, &wv) in self.outputs.iter().zip(w) {
            let (free, fixed) = split(&out.terms);
            add_eq(&mut p, free, wv - out.constant - fixed);
        }
        for row in &self.inequalities {
            let (mut free, fixed) = split(&row.terms);
            let sn = p.add_var("n", 0.0, f64::INFINITY);
            free.push((sn, -1.0));
            slack.push(sn);
            p.add_le(free, row.rhs - fixed);
        }
        p.objective = AffineExpr::new(slack.iter().map(|&s| (s, 1.0)).collect(), 0.0);
        let sol = solve(&p, LP_TOL)?;
        check_status(sol.status)?;
        Ok(PhaseOne {
            infeasibility: sol.objective.max(0.0),
        })
    }

    /// Whether `(x, w)` lies in the projection of the relaxation.
    pub fn contains(&self, x: &[f64], w: &[f64]) -> Result<bool, ConvexifyError> {
        Ok(self.phase_one(x, w)?.infeasibility <= MEMBERSHIP_TOL)
    }
}

/// Membership of `(x, w)` in the convex hull of the graph of `expr` over the box.
pub fn hull_membership(x: &[f64], w: f64, expr: &MultilinearExpr, bx: &Hyperbox) -> Result<Membership, ConvexifyError> {
    let rel = dual_hull_formulation(expr, bx)?;
    Ok(if rel.contains(x, &[w])? {
        Membership::Inside
    } else {
        Membership::Outside
    })
}

/// Returns a valid inequality for the hull violated at `(x, w)`, or `Inside`.
///
/// The normal vector comes from the duals of the phase-one vertex LP; the
/// right-hand side is recomputed as the maximum over all box vertices so the
/// cut is valid regardless of solver accuracy. The cut is scaled so that the
/// largest coefficient magnitude is 1.
pub fn separate_point(x: &[f64], w: f64, expr: &MultilinearExpr, bx: &Hyperbox) -> Result<Separation, ConvexifyError> {
    if !expr.is_multilinear() {
        return Err(ConvexifyError::NotMultilinear);
    }
    let vars: Vec<VarId> = expr.variables().into_iter().collect();
    let vertices = box_vertices(&vars, bx)?;
    let values: Vec<f64> = vertices
        .iter()
        .map(|vx| {
            let lookup = |v: VarId| vx[vars.iter().position(|&u| u == v).expect("variable of expr")];
            expr.eval(lookup)
        })
        .collect();

    // sum_j lam_j (v_j, phi_j) + p - n = (x, w),  sum_j lam_j = 1
    let mut p = ConicProgram::new();
    let lam: Vec<VarId> = (0..vertices.len()).map(|j| p.add_var(format!("l{j}"), 0.0, f64::INFINITY)).collect();
    let mut slack = Vec::new();
    let target: Vec<f64> = vars.iter().map(|v| x[v.0]).chain([w]).collect();
    for (i, &t) in target.iter().enumerate() {
        let mut terms: Vec<(VarId, f64)> = lam
            .iter()
            .enumerate()
            .map(|(j, &l)| (l, if i < vars.len() { vertices[j][i] } else { values[j] }))
            .collect();
        let (sp, sn) = (p.add_var("p", 0.0, f64::INFINITY), p.add_var("n", 0.0, f64::INFINITY));
        terms.extend([(sp, 1.0), (sn, -1.0)]);
        slack.extend([sp, sn]);
        p.add_eq(terms, t);
    }
    p.add_eq(lam.iter().map(|&l| (l, 1.0)).collect(), 1.0);
    p.objective = AffineExpr::new(slack.iter().map(|&s| (s, 1.0)).collect(), 0.0);
    let sol = solve(&p, LP_TOL)?;
    check_status(sol.status)?;
    if sol.objective <= MEMBERSHIP_TOL {
        return Ok(Separation::Inside);
    }

    // dual of the linking rows: y = -z
    let y: Vec<f64> = sol.eq_duals[..target.len()].iter().map(|z| -z).collect();
    let scale = y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return Err(ConvexifyError::SolverFailure(SolveStatus::NumericalFailure));
    }
    let a: Vec<f64> = y.iter().map(|v| v / scale).collect();
    let b = vertices
        .iter()
        .zip(&values)
        .map(|(vx, &phi)| vx.iter().zip(&a).map(|(v, c)| v * c).sum::<f64>() + a[vars.len()] * phi)
        .fold(f64::NEG_INFINITY, f64::max);
    let cut = ValidInequality {
        a_x: vars.iter().copied().zip(a.iter().copied()).collect(),
        a_w: a[vars.len()],
        b,
    };
    if cut.violation(x, w) <= 0.0 {
        return Err(ConvexifyError::SolverFailure(SolveStatus::NumericalFailure));
    }
    Ok(Separation::Cut(cut))
}
