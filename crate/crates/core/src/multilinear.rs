//! Polynomials with real coefficients stored as sorted monomials.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::conic::VarId;

/// `constant + sum_t coef_t * prod_{j in J_t} x_j`.
///
/// Monomials are kept as sorted variable lists and merged on insertion. A
/// repeated variable inside one monomial is representable so that callers
/// can reject it; see [`MultilinearExpr::is_multilinear`].
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MultilinearExpr {
    terms: BTreeMap<Vec<VarId>, f64>,
    pub constant: f64,
}

impl MultilinearExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_terms<I, V>(terms: I, constant: f64) -> Self
    where
        I: IntoIterator<Item = (f64, V)>,
        V: AsRef<[VarId]>,
    {
        let mut e = MultilinearExpr { terms: BTreeMap::new(), constant };
        for (coef, vars) in terms {
            e.add_term(coef, vars.as_ref());
        }
        e
    }

    /// Adds `coef * prod vars`, merging with an existing equal monomial.
    pub fn add_term(&mut self, coef: f64, vars: &[VarId]) {
        if vars.is_empty() {
            self.constant += coef;
            return;
        }
        let mut key = vars.to_vec();
        key.sort_unstable();
        let entry = self.terms.entry(key.clone()).or_insert(0.0);
        *entry += coef;
        if *entry == 0.0 {
            self.terms.remove(&key);
        }
    }

    pub fn add_scaled(&mut self, other: &MultilinearExpr, scale: f64) {
        for (vars, &coef) in &other.terms {
            self.add_term(scale * coef, vars);
        }
        self.constant += scale * other.constant;
    }

    pub fn terms(&self) -> impl Iterator<Item = (&[VarId], f64)> + '_ {
        self.terms.iter().map(|(k, &c)| (k.as_slice(), c))
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, vars: &[VarId]) -> f64 {
        let mut key = vars.to_vec();
        key.sort_unstable();
        self.terms.get(&key).copied().unwrap_or(0.0)
    }

    /// Largest monomial size (0 for a constant).
    pub fn degree(&self) -> usize {
        self.terms.keys().map(Vec::len).max().unwrap_or(0)
    }

    pub fn is_multilinear(&self) -> bool {
        self.terms.keys().all(|k| k.windows(2).all(|w| w[0] != w[1]))
    }

    pub fn variables(&self) -> BTreeSet<VarId> {
        self.terms.keys().flatten().copied().collect()
    }

    pub fn eval(&self, value: impl Fn(VarId) -> f64) -> f64 {
        self.constant
            + self
                .terms
                .iter()
                .map(|(vars, c)| c * vars.iter().map(|&v| value(v)).product::<f64>())
                .sum::<f64>()
    }

    /// Evaluates with `x[v.0]` as the value of `v`.
    pub fn eval_slice(&self, x: &[f64]) -> f64 {
        self.eval(|v| x[v.0])
    }
}

impl fmt::Display for MultilinearExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (vars, c) in self.terms() {
            if !first {
                write!(f, " ")?;
            }
            first = false;
            write!(f, "{c:+}")?;
            for v in vars {
                write!(f, "*{v}")?;
            }
        }
        if self.constant != 0.0 || first {
            if !first {
                write!(f, " ")?;
            }
            write!(f, "{:+}", self.constant)?;
        }
        Ok(())
    }
}
