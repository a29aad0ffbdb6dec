//! Solver-facing conic program representation.
//!
//! A [`ConicProgram`] minimizes an affine objective over boxed variables,
//! linear equalities `a x = b`, inequalities `a x <= b` and cone blocks.
//! Rotated blocks use the convention `u v >= ||z||^2, u, v >= 0`.

mod clarabel_backend;
mod dump;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use clarabel_backend::ClarabelBackend;
pub use dump::dump;

/// Index of a variable in a [`ConicProgram`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VarId(pub usize);

impl fmt::Display for VarId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "x{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConicError {
    #[error("{context} references unknown variable {var}")]
    UnknownVariable { var: VarId, context: String },
    #[error("malformed cone: {0}")]
    MalformedCone(String),
    #[error("{0} has a non-finite coefficient")]
    NonFinite(String),
    #[error("solver unavailable: {0}")]
    SolverUnavailable(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AffineExpr {
    pub terms: Vec<(VarId, f64)>,
    pub constant: f64,
}

impl AffineExpr {
    pub fn new(terms: Vec<(VarId, f64)>, constant: f64) -> Self {
        AffineExpr { terms, constant }
    }

    pub fn var(v: VarId) -> Self {
        Self::scaled(v, 1.0)
    }

    pub fn scaled(v: VarId, a: f64) -> Self {
        AffineExpr {
            terms: vec![(v, a)],
            constant: 0.0,
        }
    }

    pub fn constant(c: f64) -> Self {
        AffineExpr {
            terms: Vec::new(),
            constant: c,
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * x[v.0]).sum::<f64>() + self.constant
    }

    /// `(self + other) * scale`
    fn combine(&self, other: &AffineExpr, sign: f64, scale: f64) -> AffineExpr {
        let mut terms: Vec<(VarId, f64)> = self.terms.iter().map(|&(v, a)| (v, a * scale)).collect();
        terms.extend(other.terms.iter().map(|&(v, a)| (v, sign * a * scale)));
        AffineExpr {
            terms,
            constant: (self.constant + sign * other.constant) * scale,
        }
    }
}

/// `terms . x  (= or <=)  rhs`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearConstraint {
    pub terms: Vec<(VarId, f64)>,
    pub rhs: f64,
}

impl LinearConstraint {
    pub fn lhs(&self, x: &[f64]) -> f64 {
        self.terms.iter().map(|&(v, a)| a * x[v.0]).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConeBlock {
    /// `||z|| <= t`
    SecondOrder { t: AffineExpr, z: Vec<AffineExpr> },
    /// `u v >= ||z||^2`, `u, v >= 0`
    Rotated { u: AffineExpr, v: AffineExpr, z: Vec<AffineExpr> },
}

impl ConeBlock {
    /// Amount by which the block is violated at `x`, scaled by `1 + |t|`.
    pub fn violation(&self, x: &[f64]) -> f64 {
        match self {
            ConeBlock::SecondOrder { t, z } => {
                let t = t.eval(x);
                let norm = z.iter().map(|e| e.eval(x).powi(2)).sum::<f64>().sqrt();
                (norm - t).max(0.0) / (1.0 + t.abs())
            }
            ConeBlock::Rotated { u, v, z } => {
                let (u, v) = (u.eval(x), v.eval(x));
                let zz = z.iter().map(|e| e.eval(x).powi(2)).sum::<f64>();
                let t = 0.5 * (u + v);
                let norm = (zz + (0.5 * (u - v)).powi(2)).sqrt();
                let cone = (norm - t).max(0.0) / (1.0 + t.abs());
                cone.max(-u).max(-v)
            }
        }
    }

    fn exprs(&self) -> Vec<&AffineExpr> {
        match self {
            ConeBlock::SecondOrder { t, z } => std::iter::once(t).chain(z).collect(),
            ConeBlock::Rotated { u, v, z } => [u, v].into_iter().chain(z).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProgramStats {
    pub variables: usize,
    pub equalities: usize,
    pub inequalities: usize,
    pub second_order_cones: usize,
    pub rotated_cones: usize,
}

impl ProgramStats {
    pub fn cones(&self) -> usize {
        self.second_order_cones + self.rotated_cones
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConicProgram {
    pub variables: Vec<Variable>,
    pub equalities: Vec<LinearConstraint>,
    pub inequalities: Vec<LinearConstraint>,
    pub cones: Vec<ConeBlock>,
    pub objective: AffineExpr,
}

impl ConicProgram {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable with bounds; use infinities for free sides.
    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> VarId {
        self.variables.push(Variable {
            name: name.into(),
            lower,
            upper,
        });
        VarId(self.variables.len() - 1)
    }

    pub fn add_free_var(&mut self, name: impl Into<String>) -> VarId {
        self.add_var(name, f64::NEG_INFINITY, f64::INFINITY)
    }

    pub fn add_eq(&mut self, terms: Vec<(VarId, f64)>, rhs: f64) {
        self.equalities.push(LinearConstraint { terms, rhs });
    }

    pub fn add_le(&mut self, terms: Vec<(VarId, f64)>, rhs: f64) {
        self.inequalities.push(LinearConstraint { terms, rhs });
    }

    pub fn add_ge(&mut self, terms: Vec<(VarId, f64)>, rhs: f64) {
        let terms = terms.into_iter().map(|(v, a)| (v, -a)).collect();
        self.add_le(terms, -rhs);
    }

    pub fn add_soc(&mut self, t: AffineExpr, z: Vec<AffineExpr>) {
        self.cones.push(ConeBlock::SecondOrder { t, z });
    }

    pub fn add_rotated(&mut self, u: AffineExpr, v: AffineExpr, z: Vec<AffineExpr>) {
        self.cones.push(ConeBlock::Rotated { u, v, z });
    }

    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn stats(&self) -> ProgramStats {
        let rotated = self.cones.iter().filter(|c| matches!(c, ConeBlock::Rotated { .. })).count();
        ProgramStats {
            variables: self.variables.len(),
            equalities: self.equalities.len(),
            inequalities: self.inequalities.len(),
            second_order_cones: self.cones.len() - rotated,
            rotated_cones: rotated,
        }
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.eval(x)
    }

    /// Largest constraint violation at `x`, each scaled by `1 + |rhs|`.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let mut worst: f64 = 0.0;
        for (var, &v) in self.variables.iter().zip(x) {
            if var.lower.is_finite() {
                worst = worst.max((var.lower - v) / (1.0 + var.lower.abs()));
            }
            if var.upper.is_finite() {
                worst = worst.max((v - var.upper) / (1.0 + var.upper.abs()));
            }
        }
        for c in &self.equalities {
            worst = worst.max((c.lhs(x) - c.rhs).abs() / (1.0 + c.rhs.abs()));
        }
        for c in &self.inequalities {
            worst = worst.max((c.lhs(x) - c.rhs) / (1.0 + c.rhs.abs()));
        }
        for cone in &self.cones {
            worst = worst.max(cone.violation(x));
        }
        worst
    }

    /// Checks variable references, cone sizes and coefficient finiteness.
    pub fn check(&self) -> Result<(), ConicError> {
        let n = self.variables.len();
        let check_terms = |terms: &[(VarId, f64)], context: &dyn Fn() -> String| -> Result<(), ConicError> {
            for &(v, a) in terms {
                if v.0 >= n {
                    return Err(ConicError::UnknownVariable { var: v, context: context() });
                }
                if !a.is_finite() {
                    return Err(ConicError::NonFinite(context()));
                }
            }
            Ok(())
        };
        check_terms(&self.objective.terms, &|| "objective".to_string())?;
        for (i, c) in self.equalities.iter().enumerate() {
            check_terms(&c.terms, &|| format!("equality {i}"))?;
            if !c.rhs.is_finite() {
                return Err(ConicError::NonFinite(format!("equality {i}")));
            }
        }
        for (i, c) in self.inequalities.iter().enumerate() {
            check_terms(&c.terms, &|| format!("inequality {i}"))?;
            if !c.rhs.is_finite() {
                return Err(ConicError::NonFinite(format!("inequality {i}")));
            }
        }
        for (i, cone) in self.cones.iter().enumerate() {
            let z_len = match cone {
                ConeBlock::SecondOrder { z, .. } | ConeBlock::Rotated { z, .. } => z.len(),
            };
            if z_len == 0 {
                return Err(ConicError::MalformedCone(format!("cone {i} has an empty z part")));
            }
            for e in cone.exprs() {
                check_terms(&e.terms, &|| format!("cone {i}"))?;
                if !e.constant.is_finite() {
                    return Err(ConicError::NonFinite(format!("cone {i}")));
                }
            }
        }
        for (i, var) in self.variables.iter().enumerate() {
            if var.lower.is_nan() || var.upper.is_nan() || var.lower == f64::INFINITY || var.upper == f64::NEG_INFINITY {
                return Err(ConicError::NonFinite(format!("bounds of variable {i}")));
            }
        }
        Ok(())
    }
}

/// Replaces every rotated block `(u, v, z)` by `||(z, (u - v)/2)|| <= (u + v)/2`
/// together with the linear constraints `u >= 0`, `v >= 0`.
pub fn normalize(program: &ConicProgram) -> Result<ConicProgram, ConicError> {
    program.check()?;
    let mut out = program.clone();
    out.cones.clear();
    for cone in &program.cones {
        match cone {
            ConeBlock::SecondOrder { .. } => out.cones.push(cone.clone()),
            ConeBlock::Rotated { u, v, z } => {
                for side in [u, v] {
                    let terms = side.terms.iter().map(|&(id, a)| (id, -a)).collect();
                    out.inequalities.push(LinearConstraint { terms, rhs: side.constant });
                }
                let t = u.combine(v, 1.0, 0.5);
                let mut zs = z.clone();
                zs.push(u.combine(v, -1.0, 0.5));
                out.cones.push(ConeBlock::SecondOrder { t, z: zs });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Unbounded,
    NumericalFailure,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub status: SolveStatus,
    pub objective: f64,
    /// Present iff `status == Optimal`.
    pub primal: Option<Vec<f64>>,
    /// [`ConicProgram::max_violation`] at the returned iterate.
    pub max_residual: f64,
    /// Multipliers `y` with `c + sum_i y_i a_i + sum_j z_j g_j = 0` on free
    /// variables, `z_j >= 0` for the inequalities `g_j x <= h_j`.
    pub eq_duals: Vec<f64>,
    pub ineq_duals: Vec<f64>,
    pub iterations: u32,
}

impl Solution {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }

    pub fn value(&self, v: VarId) -> Option<f64> {
        self.primal.as_ref().map(|x| x[v.0])
    }
}

/// One-shot solver contract: build, solve, read.
pub trait ConicSolver {
    fn solve(&self, program: &ConicProgram, tol: f64) -> Result<Solution, ConicError>;
}

pub const DEFAULT_TOL: f64 = 1e-8;

/// Solves with the default backend.
pub fn solve(program: &ConicProgram, tol: f64) -> Result<Solution, ConicError> {
    ClarabelBackend::default().solve(program, tol)
}
