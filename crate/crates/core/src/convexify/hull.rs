use std::collections::{BTreeMap, BTreeSet};

use super::{AuxKind, ConvexifyError, Hyperbox, LinExpr, LinRow, LinearRelaxation, RVar};
use crate::conic::VarId;
use crate::multilinear::MultilinearExpr;

/// Largest number of variables a single `lambda` block may range over.
pub const MAX_HULL_VARS: usize = 16;

/// Vertices of the box restricted to `vars`: vertex `j` takes the upper bound
/// of `vars[i]` iff bit `i` of `j` is set.
pub fn box_vertices(vars: &[VarId], bx: &Hyperbox) -> Result<Vec<Vec<f64>>, ConvexifyError> {
    if vars.len() > MAX_HULL_VARS {
        return Err(ConvexifyError::DimensionTooLarge { k: vars.len() });
    }
    let bounds = vars.iter().map(|&v| bx.require(v)).collect::<Result<Vec<_>, _>>()?;
    Ok((0..1usize << vars.len())
        .map(|j| {
            bounds
                .iter()
                .enumerate()
                .map(|(i, &(lo, hi))| if j >> i & 1 == 1 { hi } else { lo })
                .collect()
        })
        .collect())
}

/// Evaluates `e` (ignoring its constant) at a vertex given over `vars`.
fn eval_at(e: &MultilinearExpr, vars: &[VarId], vertex: &[f64]) -> f64 {
    let pos: BTreeMap<VarId, usize> = vars.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    e.eval(|v| vertex[pos[&v]]) - e.constant
}

/// Adds a `lambda` block over `vars` with the convexity row and linking rows
/// `x_i = sum_j lambda_j v_ij`; returns the block's vertices.
fn add_block(rel: &mut LinearRelaxation, vars: Vec<VarId>, bx: &Hyperbox) -> Result<(usize, Vec<Vec<f64>>), ConvexifyError> {
    let vertices = box_vertices(&vars, bx)?;
    let block = rel.push_block(vars.clone());
    let lam = |j: usize| RVar::Lambda(block.start + j);
    rel.equalities.push(LinRow::new((0..vertices.len()).map(|j| (lam(j), 1.0)).collect(), 1.0));
    for (i, &v) in vars.iter().enumerate() {
        let mut terms = vec![(RVar::Orig(v), 1.0)];
        terms.extend(vertices.iter().enumerate().map(|(j, vx)| (lam(j), -vx[i])));
        rel.equalities.push(LinRow::new(terms, 0.0));
    }
    Ok((block.start, vertices))
}

fn require_multilinear(e: &MultilinearExpr) -> Result<(), ConvexifyError> {
    if e.is_multilinear() {
        Ok(())
    } else {
        Err(ConvexifyError::NotMultilinear)
    }
}

/// Vertex formulation of `conv{(x, phi(x)) : x in box}` over all `2^k`
/// vertices of the expression's variables.
pub fn dual_hull_formulation(expr: &MultilinearExpr, bx: &Hyperbox) -> Result<LinearRelaxation, ConvexifyError> {
    require_multilinear(expr)?;
    let vars: Vec<VarId> = expr.variables().into_iter().collect();
    if vars.len() > MAX_HULL_VARS {
        return Err(ConvexifyError::DimensionTooLarge { k: vars.len() });
    }
    let mut rel = LinearRelaxation::default();
    let w = rel.push_aux(AuxKind::Output(0));
    let (start, vertices) = add_block(&mut rel, vars.clone(), bx)?;
    let mut terms = vec![(w, 1.0)];
    terms.extend(vertices.iter().enumerate().map(|(j, vx)| (RVar::Lambda(start + j), -eval_at(expr, &vars, vx))));
    rel.equalities.push(LinRow::new(terms, expr.constant));
    rel.outputs.push(LinExpr {
        terms: vec![(w, 1.0)],
        constant: 0.0,
    });
    Ok(rel)
}

/// Splits variables into groups that never share a monomial.
fn components(exprs: &[MultilinearExpr]) -> Vec<Vec<VarId>> {
    let vars: Vec<VarId> = exprs.iter().flat_map(|e| e.variables()).collect::<BTreeSet<_>>().into_iter().collect();
    let index: BTreeMap<VarId, usize> = vars.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut parent: Vec<usize> = (0..vars.len()).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for e in exprs {
        for (mono, _) in e.terms() {
            for w in mono.windows(2) {
                let (a, b) = (find(&mut parent, index[&w[0]]), find(&mut parent, index[&w[1]]));
                parent[a] = b;
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<VarId>> = BTreeMap::new();
    for (i, &v) in vars.iter().enumerate() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(v);
    }
    let mut out: Vec<Vec<VarId>> = groups.into_values().collect();
    out.sort();
    out
}

/// Joint vertex formulation of `conv{(x, phi_1(x), ..., phi_m(x))}`.
///
/// Variables that never appear in a common monomial are placed in separate
/// `lambda` blocks; the graph of a sum of functions over disjoint variable
/// groups is the image of a product, so the projection is unchanged.
pub fn dual_hull_system(exprs: &[MultilinearExpr], bx: &Hyperbox) -> Result<LinearRelaxation, ConvexifyError> {
    for e in exprs {
        require_multilinear(e)?;
    }
    let groups = components(exprs);
    if let Some(g) = groups.iter().find(|g| g.len() > MAX_HULL_VARS) {
        return Err(ConvexifyError::DimensionTooLarge { k: g.len() });
    }
    let mut rel = LinearRelaxation::default();
    let outputs: Vec<RVar> = (0..exprs.len()).map(|i| rel.push_aux(AuxKind::Output(i))).collect();
    let mut rows: Vec<Vec<(RVar, f64)>> = outputs.iter().map(|&w| vec![(w, 1.0)]).collect();
    for group in groups {
        let members: BTreeSet<VarId> = group.iter().copied().collect();
        let parts: Vec<MultilinearExpr> = exprs
            .iter()
            .map(|e| {
                MultilinearExpr::from_terms(
                    e.terms().filter(|(m, _)| members.contains(&m[0])).map(|(m, c)| (c, m.to_vec())),
                    0.0,
                )
            })
            .collect();
        let (start, vertices) = add_block(&mut rel, group.clone(), bx)?;
        for (row, part) in rows.iter_mut().zip(&parts) {
            if part.num_terms() == 0 {
                continue;
            }
            row.extend(vertices.iter().enumerate().map(|(j, vx)| (RVar::Lambda(start + j), -eval_at(part, &group, vx))));
        }
    }
    for ((row, e), &w) in rows.into_iter().zip(exprs).zip(&outputs) {
        rel.equalities.push(LinRow::new(row, e.constant));
        rel.outputs.push(LinExpr {
            terms: vec![(w, 1.0)],
            constant: 0.0,
        });
    }
    Ok(rel)
}

/// Vertex formulation exploiting a split `phi = sum_i omega_i(x_0, x_i)` with
/// each `omega_i` linear in the shared variables `x_0` and pairwise disjoint
/// private variables `x_i`. Monomials are grouped by their private variable
/// set; each group gets its own `lambda` block over the shared variables it
/// touches plus its private ones.
pub fn grouped_dual_formulation(
    expr: &MultilinearExpr,
    shared: &BTreeSet<VarId>,
    bx: &Hyperbox,
) -> Result<LinearRelaxation, ConvexifyError> {
    let mut groups: BTreeMap<Vec<VarId>, Vec<(Vec<VarId>, f64)>> = BTreeMap::new();
    let mut linear: Vec<(RVar, f64)> = Vec::new();
    for (mono, coef) in expr.terms() {
        if mono.windows(2).any(|w| w[0] == w[1]) {
            return Err(ConvexifyError::DecompositionInvalid(format!(
                "monomial {mono:?} is not multilinear"
            )));
        }
        let n_shared = mono.iter().filter(|v| shared.contains(v)).count();
        if n_shared > 1 {
            return Err(ConvexifyError::DecompositionInvalid(format!(
                "monomial {mono:?} is nonlinear in the shared variables"
            )));
        }
        let private: Vec<VarId> = mono.iter().copied().filter(|v| !shared.contains(v)).collect();
        if private.is_empty() {
            bx.require(mono[0])?;
            linear.push((RVar::Orig(mono[0]), coef));
        } else {
            groups.entry(private).or_default().push((mono.to_vec(), coef));
        }
    }
    let mut seen: BTreeSet<VarId> = BTreeSet::new();
    for private in groups.keys() {
        for v in private {
            if !seen.insert(*v) {
                return Err(ConvexifyError::DecompositionInvalid(format!(
                    "variable {v} is private to more than one group"
                )));
            }
        }
    }

    let mut rel = LinearRelaxation::default();
    let w = rel.push_aux(AuxKind::Output(0));
    let mut row = vec![(w, 1.0)];
    row.extend(linear.iter().map(|&(r, a)| (r, -a)));
    for monos in groups.values() {
        let omega = MultilinearExpr::from_terms(monos.iter().map(|(m, c)| (*c, m.clone())), 0.0);
        let vars: Vec<VarId> = omega.variables().into_iter().collect();
        let (start, vertices) = add_block(&mut rel, vars.clone(), bx)?;
        row.extend(vertices.iter().enumerate().map(|(j, vx)| (RVar::Lambda(start + j), -eval_at(&omega, &vars, vx))));
    }
    rel.equalities.push(LinRow::new(row, expr.constant));
    rel.outputs.push(LinExpr {
        terms: vec![(w, 1.0)],
        constant: 0.0,
    });
    Ok(rel)
}
