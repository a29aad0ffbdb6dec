use std::collections::BTreeMap;

use super::{AuxKind, ConvexifyError, Hyperbox, LinExpr, LinRow, LinearRelaxation, RVar};
use crate::conic::VarId;
use crate::multilinear::MultilinearExpr;

/// Envelope of `w = x y` over `[xl, xu] x [yl, yu]` as four `<=` rows.
pub fn mccormick_bilinear(x: VarId, (xl, xu): (f64, f64), y: VarId, (yl, yu): (f64, f64), w: RVar) -> [LinRow; 4] {
    let (x, y) = (RVar::Orig(x), RVar::Orig(y));
    [
        // w >= xl y + yl x - xl yl
        LinRow::new(vec![(y, xl), (x, yl), (w, -1.0)], xl * yl),
        // w >= xu y + yu x - xu yu
        LinRow::new(vec![(y, xu), (x, yu), (w, -1.0)], xu * yu),
        // w <= xu y + yl x - xu yl
        LinRow::new(vec![(w, 1.0), (y, -xu), (x, -yl)], -xu * yl),
        // w <= xl y + yu x - xl yu
        LinRow::new(vec![(w, 1.0), (y, -xl), (x, -yu)], -xl * yu),
    ]
}

fn check_bilinear(e: &MultilinearExpr) -> Result<(), ConvexifyError> {
    if !e.is_multilinear() {
        return Err(ConvexifyError::NotMultilinear);
    }
    let degree = e.degree();
    if degree > 2 {
        return Err(ConvexifyError::DegreeTooHigh { degree });
    }
    Ok(())
}

/// Envelopes for every distinct bilinear monomial across `exprs`, one shared
/// auxiliary per variable pair. Outputs are the expressions with products
/// replaced by their auxiliaries; no equality is imposed on them.
pub fn mccormick_system(exprs: &[MultilinearExpr], bx: &Hyperbox) -> Result<LinearRelaxation, ConvexifyError> {
    for e in exprs {
        check_bilinear(e)?;
    }
    let mut rel = LinearRelaxation::default();
    let mut products: BTreeMap<(VarId, VarId), RVar> = BTreeMap::new();
    for e in exprs {
        let mut out = LinExpr {
            terms: Vec::new(),
            constant: e.constant,
        };
        for (vars, coef) in e.terms() {
            match *vars {
                [v] => {
                    bx.require(v)?;
                    out.terms.push((RVar::Orig(v), coef));
                }
                [a, b] => {
                    let w = match products.get(&(a, b)) {
                        Some(&w) => w,
                        None => {
                            let (ab, bb) = (bx.require(a)?, bx.require(b)?);
                            let w = rel.push_aux(AuxKind::Product(vec![a, b]));
                            rel.inequalities.extend(mccormick_bilinear(a, ab, b, bb, w));
                            products.insert((a, b), w);
                            w
                        }
                    };
                    out.terms.push((w, coef));
                }
                _ => unreachable!("degree checked"),
            }
        }
        rel.outputs.push(out);
    }
    Ok(rel)
}

/// [`mccormick_system`] with every expression constrained to zero.
pub fn relax_system_mccormick(exprs: &[MultilinearExpr], bx: &Hyperbox) -> Result<LinearRelaxation, ConvexifyError> {
    let mut rel = mccormick_system(exprs, bx)?;
    rel.fix_outputs_to_zero();
    Ok(rel)
}
