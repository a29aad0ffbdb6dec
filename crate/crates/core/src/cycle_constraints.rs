//! Multilinear cycle-consistency constraints over lifted `(c, s)` variables.
//!
//! Angles follow `theta_km = delta_k - delta_m`; every unordered bus pair owns
//! one `c` and one `s` variable stored for `(min, max)`, and `s_mk = -s_km` is
//! applied when an expression is built.

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use thiserror::Error;

use crate::conic::VarId;
use crate::graph::Cycle;
use crate::multilinear::MultilinearExpr;
use crate::network::{ordered, BusId};

/// Longest cycle accepted by [`cycle_polynomial`] (its expansion has `2^(n-1)` terms).
pub const MAX_POLYNOMIAL_CYCLE: usize = 12;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CycleError {
    #[error("expected a cycle of length {expected}, got {found}")]
    WrongLength { expected: usize, found: usize },
    #[error("cycle of length {0} exceeds the polynomial cap of {MAX_POLYNOMIAL_CYCLE}")]
    TooLong(usize),
    #[error("sin and cos variable lists must both have length n = {n}")]
    LengthMismatch { n: usize },
    #[error("no lifted variables registered for pair {0}-{1}")]
    UnregisteredPair(BusId, BusId),
    #[error("no diagonal variable registered for bus {0}")]
    UnregisteredBus(BusId),
}

/// Lifted variables of a directed pair `(k, m)`: `c_km = c`, `s_km = sign * s`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairRef {
    pub c: VarId,
    pub s: VarId,
    pub sign: f64,
}

/// Lookup of lifted voltage-product variables.
pub trait LiftedIndex {
    fn diag(&self, bus: BusId) -> Option<VarId>;
    fn pair(&self, from: BusId, to: BusId) -> Option<PairRef>;
}

/// Standalone registry of lifted variables with consecutive ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairTable {
    diag: BTreeMap<BusId, VarId>,
    pairs: BTreeMap<(BusId, BusId), (VarId, VarId)>,
    next: usize,
}

impl PairTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers every vertex and arc of the given cycles.
    pub fn for_cycles<'a>(cycles: impl IntoIterator<Item = &'a Cycle>) -> Self {
        let mut t = Self::new();
        for c in cycles {
            for &v in &c.vertices {
                t.register_bus(v);
            }
            for a in &c.arcs {
                t.register_pair(a.from, a.to);
            }
        }
        t
    }

    pub fn register_bus(&mut self, bus: BusId) -> VarId {
        if let Some(&v) = self.diag.get(&bus) {
            return v;
        }
        let v = VarId(self.next);
        self.next += 1;
        self.diag.insert(bus, v);
        v
    }

    pub fn register_pair(&mut self, a: BusId, b: BusId) -> (VarId, VarId) {
        let key = ordered(a, b);
        if let Some(&p) = self.pairs.get(&key) {
            return p;
        }
        let p = (VarId(self.next), VarId(self.next + 1));
        self.next += 2;
        self.pairs.insert(key, p);
        p
    }

    pub fn num_vars(&self) -> usize {
        self.next
    }

    /// Values of all registered variables induced by bus voltages in polar form.
    pub fn lift(&self, v_mag: impl Fn(BusId) -> f64, delta: impl Fn(BusId) -> f64) -> Vec<f64> {
        let mut x = vec![0.0; self.next];
        for (&k, &id) in &self.diag {
            x[id.0] = v_mag(k).powi(2);
        }
        for (&(k, m), &(c, s)) in &self.pairs {
            let (r, th) = (v_mag(k) * v_mag(m), delta(k) - delta(m));
            x[c.0] = r * th.cos();
            x[s.0] = r * th.sin();
        }
        x
    }

    /// Values induced by per-arc angles `(from, to, theta_from_to)`; arcs not
    /// listed keep zero. Angles need not be consistent around cycles.
    pub fn lift_arcs(&self, v_mag: impl Fn(BusId) -> f64, arcs: &[(BusId, BusId, f64)]) -> Vec<f64> {
        let mut x = vec![0.0; self.next];
        for (&k, &id) in &self.diag {
            x[id.0] = v_mag(k).powi(2);
        }
        for &(a, b, th) in arcs {
            let (c, s) = self.pairs[&ordered(a, b)];
            let th = if a < b { th } else { -th };
            let r = v_mag(a) * v_mag(b);
            x[c.0] = r * th.cos();
            x[s.0] = r * th.sin();
        }
        x
    }
}

impl LiftedIndex for PairTable {
    fn diag(&self, bus: BusId) -> Option<VarId> {
        self.diag.get(&bus).copied()
    }

    fn pair(&self, from: BusId, to: BusId) -> Option<PairRef> {
        let &(c, s) = self.pairs.get(&ordered(from, to))?;
        Some(PairRef {
            c,
            s,
            sign: if from < to { 1.0 } else { -1.0 },
        })
    }
}

/// Sum over subsets `S` of `{0..n}` with `|S| % 2 == parity` of
/// `(-1)^(|S| / 2) prod_{i in S} sign_i s_i prod_{i not in S} c_i`.
fn expansion(sin: &[(VarId, f64)], cos: &[VarId], parity: usize) -> MultilinearExpr {
    let n = sin.len();
    let mut e = MultilinearExpr::new();
    let mut vars = Vec::with_capacity(n);
    for mask in 0u32..(1 << n) {
        let k = mask.count_ones() as usize;
        if k % 2 != parity {
            continue;
        }
        let mut coef = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        vars.clear();
        for i in 0..n {
            if mask & (1 << i) != 0 {
                vars.push(sin[i].0);
                coef *= sin[i].1;
            } else {
                vars.push(cos[i]);
            }
        }
        e.add_term(coef, &vars);
    }
    e
}

fn check_lengths(n: usize, sin: &[VarId], cos: &[VarId]) -> Result<(), CycleError> {
    if n == 0 || sin.len() != n || cos.len() != n {
        return Err(CycleError::LengthMismatch { n });
    }
    Ok(())
}

/// Multilinear form of `sin(theta_1 + ... + theta_n)` in `s_i = sin theta_i`, `c_i = cos theta_i`.
pub fn sin_sum_expansion(n: usize, sin_vars: &[VarId], cos_vars: &[VarId]) -> Result<MultilinearExpr, CycleError> {
    check_lengths(n, sin_vars, cos_vars)?;
    let sin: Vec<(VarId, f64)> = sin_vars.iter().map(|&v| (v, 1.0)).collect();
    Ok(expansion(&sin, cos_vars, 1))
}

/// Multilinear form of `cos(theta_1 + ... + theta_n)`.
pub fn cos_sum_expansion(n: usize, sin_vars: &[VarId], cos_vars: &[VarId]) -> Result<MultilinearExpr, CycleError> {
    check_lengths(n, sin_vars, cos_vars)?;
    let sin: Vec<(VarId, f64)> = sin_vars.iter().map(|&v| (v, 1.0)).collect();
    Ok(expansion(&sin, cos_vars, 0))
}

fn pair_of(index: &impl LiftedIndex, a: BusId, b: BusId) -> Result<PairRef, CycleError> {
    index.pair(a, b).ok_or(CycleError::UnregisteredPair(a, b))
}

fn diag_of(index: &impl LiftedIndex, k: BusId) -> Result<VarId, CycleError> {
    index.diag(k).ok_or(CycleError::UnregisteredBus(k))
}

/// `cos`-expansion over the cycle's directed pairs minus `prod_k c_kk`; zero
/// exactly when the arc angles sum to a multiple of `2 pi` (positive voltages).
pub fn cycle_polynomial(cycle: &Cycle, index: &impl LiftedIndex) -> Result<MultilinearExpr, CycleError> {
    let n = cycle.len();
    if n < 3 {
        return Err(CycleError::WrongLength { expected: 3, found: n });
    }
    if n > MAX_POLYNOMIAL_CYCLE {
        return Err(CycleError::TooLong(n));
    }
    let mut sin = Vec::with_capacity(n);
    let mut cos = Vec::with_capacity(n);
    for a in &cycle.arcs {
        let p = pair_of(index, a.from, a.to)?;
        sin.push((p.s, p.sign));
        cos.push(p.c);
    }
    let mut e = expansion(&sin, &cos, 0);
    let diag = cycle
        .vertices
        .iter()
        .map(|&k| diag_of(index, k))
        .collect::<Result<Vec<_>, _>>()?;
    e.add_term(-1.0, &diag);
    Ok(e)
}

/// Signed factor: variable and the sign it carries in the expression.
type Factor = (VarId, f64);

fn bilinear(terms: &[(f64, Factor, Factor)]) -> MultilinearExpr {
    let mut e = MultilinearExpr::new();
    for &(coef, (a, sa), (b, sb)) in terms {
        e.add_term(coef * sa * sb, &[a, b]);
    }
    e
}

fn expect_len(cycle: &Cycle, n: usize) -> Result<(), CycleError> {
    if cycle.len() != n {
        return Err(CycleError::WrongLength { expected: n, found: cycle.len() });
    }
    Ok(())
}

/// The two bilinear equations of a 3-cycle `(1, 2, 3)`:
/// `s12 c33 + c23 s31 + s23 c31` and `c12 c33 - c23 c31 + s23 s31`.
pub fn three_cycle_system(cycle: &Cycle, index: &impl LiftedIndex) -> Result<[MultilinearExpr; 2], CycleError> {
    expect_len(cycle, 3)?;
    let v = &cycle.vertices;
    let p12 = pair_of(index, v[0], v[1])?;
    let p23 = pair_of(index, v[1], v[2])?;
    let p31 = pair_of(index, v[2], v[0])?;
    let c33 = (diag_of(index, v[2])?, 1.0);
    let (c12, s12) = ((p12.c, 1.0), (p12.s, p12.sign));
    let (c23, s23) = ((p23.c, 1.0), (p23.s, p23.sign));
    let (c31, s31) = ((p31.c, 1.0), (p31.s, p31.sign));
    let q1 = bilinear(&[(1.0, s12, c33), (1.0, c23, s31), (1.0, s23, c31)]);
    let q2 = bilinear(&[(1.0, c12, c33), (-1.0, c23, c31), (1.0, s23, s31)]);
    Ok([q1, q2])
}

/// The two bilinear equations of a 4-cycle `(1, 2, 3, 4)`:
/// `s12 c34 + c12 s34 + s23 c41 + c23 s41` and `c12 c34 - s12 s34 - c23 c41 + s23 s41`.
pub fn four_cycle_system(cycle: &Cycle, index: &impl LiftedIndex) -> Result<[MultilinearExpr; 2], CycleError> {
    expect_len(cycle, 4)?;
    let v = &cycle.vertices;
    let p12 = pair_of(index, v[0], v[1])?;
    let p23 = pair_of(index, v[1], v[2])?;
    let p34 = pair_of(index, v[2], v[3])?;
    let p41 = pair_of(index, v[3], v[0])?;
    let f = |p: PairRef| ((p.c, 1.0), (p.s, p.sign));
    let ((c12, s12), (c23, s23), (c34, s34), (c41, s41)) = (f(p12), f(p23), f(p34), f(p41));
    let q1 = bilinear(&[(1.0, s12, c34), (1.0, c12, s34), (1.0, s23, c41), (1.0, c23, s41)]);
    let q2 = bilinear(&[(1.0, c12, c34), (-1.0, s12, s34), (-1.0, c23, c41), (1.0, s23, s41)]);
    Ok([q1, q2])
}

/// Bilinear system of a 3- or 4-cycle.
pub fn small_cycle_system(cycle: &Cycle, index: &impl LiftedIndex) -> Result<[MultilinearExpr; 2], CycleError> {
    match cycle.len() {
        3 => three_cycle_system(cycle, index),
        4 => four_cycle_system(cycle, index),
        n => Err(CycleError::WrongLength { expected: 4, found: n }),
    }
}

/// Distance from `sum(theta)` to the nearest multiple of `2 pi`.
pub fn cycle_angle_residual(theta: &[f64]) -> f64 {
    let sum: f64 = theta.iter().sum();
    (sum - TAU * (sum / TAU).round()).abs()
}

pub fn check_cycle_condition(theta: &[f64], tol: f64) -> bool {
    cycle_angle_residual(theta) <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ids(n: usize, offset: usize) -> Vec<VarId> {
        (0..n).map(|i| VarId(i + offset)).collect()
    }

    /// Binds s_i at x[i], c_i at x[n + i].
    fn bind(theta: &[f64]) -> Vec<f64> {
        theta.iter().map(|t| t.sin()).chain(theta.iter().map(|t| t.cos())).collect()
    }

    #[test]
    fn small_expansions() {
        let (s, c) = (ids(3, 0), ids(3, 3));
        let e1 = sin_sum_expansion(1, &s[..1], &c[..1]).unwrap();
        assert_eq!(e1, MultilinearExpr::from_terms([(1.0, vec![s[0]])], 0.0));
        let e2 = sin_sum_expansion(2, &s[..2], &c[..2]).unwrap();
        assert_eq!(e2, MultilinearExpr::from_terms([(1.0, vec![s[0], c[1]]), (1.0, vec![c[0], s[1]])], 0.0));
        let c2 = cos_sum_expansion(2, &s[..2], &c[..2]).unwrap();
        assert_eq!(c2, MultilinearExpr::from_terms([(1.0, vec![c[0], c[1]]), (-1.0, vec![s[0], s[1]])], 0.0));
        let e3 = sin_sum_expansion(3, &s, &c).unwrap();
        let expect = MultilinearExpr::from_terms(
            [
                (1.0, vec![s[0], c[1], c[2]]),
                (1.0, vec![c[0], s[1], c[2]]),
                (1.0, vec![c[0], c[1], s[2]]),
                (-1.0, vec![s[0], s[1], s[2]]),
            ],
            0.0,
        );
        assert_eq!(e3, expect);
        assert_eq!(cos_sum_expansion(1, &s[..1], &c[..1]).unwrap().num_terms(), 1);
    }

    #[test]
    fn expansion_matches_trig() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..50 {
            let theta: Vec<f64> = (0..3).map(|_| rng.gen_range(-PI..PI)).collect();
            let x = bind(&theta);
            let (s, c) = (ids(3, 0), ids(3, 3));
            let sum: f64 = theta.iter().sum();
            let cs = cos_sum_expansion(3, &s, &c).unwrap().eval_slice(&x);
            assert!((cs - sum.cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn term_counts_total_power_of_two() {
        for n in 1..=8 {
            let (s, c) = (ids(n, 0), ids(n, n));
            let total = sin_sum_expansion(n, &s, &c).unwrap().num_terms() + cos_sum_expansion(n, &s, &c).unwrap().num_terms();
            assert_eq!(total, 1 << n);
            assert_eq!(sin_sum_expansion(n, &s, &c).unwrap().num_terms(), 1 << (n - 1));
        }
    }

    #[test]
    fn mismatched_lists_rejected() {
        assert!(sin_sum_expansion(2, &ids(2, 0), &ids(1, 2)).is_err());
    }

    fn triangle() -> (Cycle, PairTable) {
        let c = Cycle::from_vertices(vec![BusId(1), BusId(2), BusId(3)]).unwrap();
        let t = PairTable::for_cycles([&c]);
        (c, t)
    }

    fn arcs(c: &Cycle, theta: &[f64]) -> Vec<(BusId, BusId, f64)> {
        c.arcs.iter().zip(theta).map(|(a, &t)| (a.from, a.to, t)).collect()
    }

    #[test]
    fn polynomial_on_triangle() {
        let (c, t) = triangle();
        let p = cycle_polynomial(&c, &t).unwrap();
        let unit = |_| 1.0;
        assert!(p.eval_slice(&t.lift_arcs(unit, &arcs(&c, &[0.0, 0.0, 0.0]))).abs() < 1e-15);
        assert!(p.eval_slice(&t.lift_arcs(unit, &arcs(&c, &[0.3, 0.5, -0.8]))).abs() < 1e-12);
        let v = p.eval_slice(&t.lift_arcs(unit, &arcs(&c, &[0.1, 0.1, 0.1])));
        assert!((v - (0.3f64.cos() - 1.0)).abs() < 1e-12);
        assert!((v + 0.04466).abs() < 1e-5);
    }

    #[test]
    fn polynomial_length_cap() {
        let c = Cycle::from_vertices((1..=13).map(BusId).collect()).unwrap();
        let t = PairTable::for_cycles([&c]);
        assert_eq!(cycle_polynomial(&c, &t), Err(CycleError::TooLong(13)));
    }

    #[test]
    fn three_cycle_zero_angles() {
        let (c, t) = triangle();
        let [q1, q2] = three_cycle_system(&c, &t).unwrap();
        let x = t.lift(|_| 1.0, |_| 0.0);
        assert_eq!(q1.eval_slice(&x), 0.0);
        assert_eq!(q2.eval_slice(&x), 0.0);
        assert!(q1.degree() <= 2 && q2.degree() <= 2);
    }

    #[test]
    fn three_cycle_consistent_and_inconsistent() {
        let (c, t) = triangle();
        let [q1, q2] = three_cycle_system(&c, &t).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let v: Vec<f64> = (0..3).map(|_| rng.gen_range(0.9..1.1)).collect();
            let d: Vec<f64> = (0..3).map(|_| rng.gen_range(-PI..PI)).collect();
            let x = t.lift(|b| v[b.0 - 1], |b| d[b.0 - 1]);
            assert!(q1.eval_slice(&x).abs() < 1e-12);
            assert!(q2.eval_slice(&x).abs() < 1e-12);
        }
        let x = t.lift_arcs(|_| 1.0, &arcs(&c, &[0.1, 0.1, 0.1]));
        assert!(q1.eval_slice(&x).abs() > 1e-3 || q2.eval_slice(&x).abs() > 1e-3);
    }

    #[test]
    fn four_cycle_examples() {
        let c = Cycle::from_vertices((1..=4).map(BusId).collect()).unwrap();
        let t = PairTable::for_cycles([&c]);
        let [q1, q2] = four_cycle_system(&c, &t).unwrap();
        let x = t.lift_arcs(|_| 1.0, &arcs(&c, &[0.0; 4]));
        assert_eq!((q1.eval_slice(&x), q2.eval_slice(&x)), (0.0, 0.0));
        let x = t.lift_arcs(|_| 1.0, &arcs(&c, &[0.2; 4]));
        assert!(q2.eval_slice(&x).abs() < 1e-15);
        assert!((q1.eval_slice(&x) - 2.0 * 0.4f64.sin()).abs() < 1e-12);
        assert!((q1.eval_slice(&x) - 0.7788).abs() < 1e-4);
        for (vars, _) in q1.terms().chain(q2.terms()) {
            assert_eq!(vars.len(), 2);
        }
    }

    #[test]
    fn wrong_length_rejected() {
        let (c, t) = triangle();
        assert_eq!(
            four_cycle_system(&c, &t).unwrap_err(),
            CycleError::WrongLength { expected: 4, found: 3 }
        );
    }

    #[test]
    fn reversed_orientation_uses_negated_sine() {
        // Cycle walked 3 -> 2 -> 1 exercises s_mk = -s_km on every arc.
        let c = Cycle::from_vertices(vec![BusId(3), BusId(2), BusId(1)]).unwrap();
        let t = PairTable::for_cycles([&c]);
        let [q1, q2] = three_cycle_system(&c, &t).unwrap();
        let x = t.lift(|b| 1.0 + 0.01 * b.0 as f64, |b| 0.2 * b.0 as f64);
        assert!(q1.eval_slice(&x).abs() < 1e-12 && q2.eval_slice(&x).abs() < 1e-12);
    }

    #[test]
    fn cycle_condition_examples() {
        assert!(check_cycle_condition(&[0.3, 0.5, -0.8], 1e-12));
        assert!(check_cycle_condition(&[PI, PI / 2.0, PI / 2.0], 1e-12));
        assert!(!check_cycle_condition(&[0.1, 0.1, 0.1], 1e-6));
    }
}
