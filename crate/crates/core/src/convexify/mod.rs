//! Polyhedral relaxations of multilinear expressions over boxes.
//!
//! A [`LinearRelaxation`] is stated over three kinds of variables: the
//! original expression variables, auxiliary variables (products or outputs)
//! and convex-combination weights `lambda` over box vertices.

mod hull;
mod interaction;
mod lp;
mod mccormick;

use std::collections::BTreeMap;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{ConicError, ConicProgram, SolveStatus, VarId};

pub use hull::{box_vertices, dual_hull_formulation, dual_hull_system, grouped_dual_formulation, MAX_HULL_VARS};
pub use interaction::{interaction_graph, InteractionGraph};
pub use lp::{hull_membership, separate_point, Membership, PhaseOne, Separation, ValidInequality, MEMBERSHIP_TOL};
pub use mccormick::{mccormick_bilinear, mccormick_system, relax_system_mccormick};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConvexifyError {
    #[error("term of degree {degree} exceeds the bilinear limit")]
    DegreeTooHigh { degree: usize },
    #[error("expression has a repeated variable in a monomial")]
    NotMultilinear,
    #[error("{k} variables exceed the vertex-formulation cap of {MAX_HULL_VARS}")]
    DimensionTooLarge { k: usize },
    #[error("invalid grouped decomposition: {0}")]
    DecompositionInvalid(String),
    #[error("variable {0} has no bounds in the box")]
    Unboxed(VarId),
    #[error("variable {0} has invalid bounds")]
    InvalidBounds(VarId),
    #[error("expected {expected} output values, got {found}")]
    OutputCount { expected: usize, found: usize },
    #[error(transparent)]
    Conic(#[from] ConicError),
    #[error("membership LP ended with status {0:?}")]
    SolverFailure(SolveStatus),
}

/// Per-variable finite bounds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Hyperbox {
    bounds: BTreeMap<VarId, (f64, f64)>,
}

impl Hyperbox {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn uniform(vars: impl IntoIterator<Item = VarId>, lower: f64, upper: f64) -> Self {
        Hyperbox {
            bounds: vars.into_iter().map(|v| (v, (lower, upper))).collect(),
        }
    }

    pub fn set(&mut self, v: VarId, lower: f64, upper: f64) {
        self.bounds.insert(v, (lower, upper));
    }

    pub fn get(&self, v: VarId) -> Option<(f64, f64)> {
        self.bounds.get(&v).copied()
    }

    /// Bounds of `v`, rejecting missing, infinite or inverted intervals.
    pub fn require(&self, v: VarId) -> Result<(f64, f64), ConvexifyError> {
        let (lo, hi) = self.get(v).ok_or(ConvexifyError::Unboxed(v))?;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(ConvexifyError::InvalidBounds(v));
        }
        Ok((lo, hi))
    }

    pub fn len(&self) -> usize {
        self.bounds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bounds.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RVar {
    Orig(VarId),
    Aux(usize),
    Lambda(usize),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinExpr {
    pub terms: Vec<(RVar, f64)>,
    pub constant: f64,
}

/// `terms . vars  (= or <=)  rhs`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinRow {
    pub terms: Vec<(RVar, f64)>,
    pub rhs: f64,
}

impl LinRow {
    fn new(terms: Vec<(RVar, f64)>, rhs: f64) -> Self {
        LinRow {
            terms: terms.into_iter().filter(|&(_, a)| a != 0.0).collect(),
            rhs,
        }
    }
}

/// What an auxiliary variable stands for.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum AuxKind {
    /// Relaxed product of the listed variables.
    Product(Vec<VarId>),
    /// Value of the `i`-th input expression.
    Output(usize),
}

/// Consecutive `lambda` weights over the vertices of a sub-box.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LambdaBlock {
    pub start: usize,
    pub vars: Vec<VarId>,
}

impl LambdaBlock {
    pub fn len(&self) -> usize {
        1 << self.vars.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn range(&self) -> Range<usize> {
        self.start..self.start + self.len()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinearRelaxation {
    pub aux: Vec<AuxKind>,
    pub lambda_blocks: Vec<LambdaBlock>,
    pub equalities: Vec<LinRow>,
    pub inequalities: Vec<LinRow>,
    /// Affine image of each input expression.
    pub outputs: Vec<LinExpr>,
}

impl LinearRelaxation {
    pub fn num_lambda(&self) -> usize {
        self.lambda_blocks.iter().map(LambdaBlock::len).sum()
    }

    fn push_aux(&mut self, kind: AuxKind) -> RVar {
        self.aux.push(kind);
        RVar::Aux(self.aux.len() - 1)
    }

    fn push_block(&mut self, vars: Vec<VarId>) -> LambdaBlock {
        let block = LambdaBlock {
            start: self.num_lambda(),
            vars,
        };
        self.lambda_blocks.push(block.clone());
        block
    }

    /// Adds `output_i = 0` for every output.
    pub fn fix_outputs_to_zero(&mut self) {
        for out in &self.outputs {
            self.equalities.push(LinRow::new(out.terms.clone(), -out.constant));
        }
    }

    /// Copies the relaxation into `program`, creating its auxiliary and
    /// `lambda` variables; returns the created ids.
    pub fn embed(&self, program: &mut ConicProgram, prefix: &str) -> Embedding {
        let aux: Vec<VarId> = (0..self.aux.len())
            .map(|i| program.add_free_var(format!("{prefix}w{i}")))
            .collect();
        let lambda: Vec<VarId> = (0..self.num_lambda())
            .map(|i| program.add_var(format!("{prefix}l{i}"), 0.0, f64::INFINITY))
            .collect();
        let map = |r: RVar| match r {
            RVar::Orig(v) => v,
            RVar::Aux(i) => aux[i],
            RVar::Lambda(i) => lambda[i],
        };
        for row in &self.equalities {
            program.add_eq(row.terms.iter().map(|&(r, a)| (map(r), a)).collect(), row.rhs);
        }
        for row in &self.inequalities {
            program.add_le(row.terms.iter().map(|&(r, a)| (map(r), a)).collect(), row.rhs);
        }
        Embedding { aux, lambda }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Embedding {
    pub aux: Vec<VarId>,
    pub lambda: Vec<VarId>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conic::{solve, AffineExpr, DEFAULT_TOL};
    use crate::multilinear::MultilinearExpr;

    #[test]
    fn embedded_mccormick_bounds_product() {
        // max xy over the McCormick relaxation of w = xy on [0,1]^2 with x + y = 1
        let mut p = ConicProgram::new();
        let x = p.add_var("x", 0.0, 1.0);
        let y = p.add_var("y", 0.0, 1.0);
        p.add_eq(vec![(x, 1.0), (y, 1.0)], 1.0);
        let e = MultilinearExpr::from_terms([(1.0, vec![x, y])], 0.0);
        let rel = mccormick_system(&[e], &Hyperbox::uniform([x, y], 0.0, 1.0)).unwrap();
        let emb = rel.embed(&mut p, "mc");
        p.objective = AffineExpr::scaled(emb.aux[0], -1.0);
        let sol = solve(&p, DEFAULT_TOL).unwrap();
        assert!((sol.objective + 0.5).abs() < 1e-7);
    }
}
