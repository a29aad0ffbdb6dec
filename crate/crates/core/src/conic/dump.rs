//! Plain-text program dump, one item per line:
//!
//! ```text
//! var <id> <name> <lower> <upper>
//! min <affine>
//! eq <linear> = <rhs>
//! le <linear> <= <rhs>
//! soc <t> | <z1> ; <z2> ...
//! rsoc <u> | <v> | <z1> ; <z2> ...
//! ```
//!
//! Linear parts are written as signed `coef*x<id>` terms followed by an
//! optional signed constant. Numbers use Rust's shortest round-trip format.

use std::fmt::Write;

use super::{AffineExpr, ConeBlock, ConicProgram, VarId};

fn terms(out: &mut String, terms: &[(VarId, f64)]) {
    if terms.is_empty() {
        out.push('0');
    }
    for (i, (v, a)) in terms.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{a:+}*{v}");
    }
}

fn affine(out: &mut String, e: &AffineExpr) {
    terms(out, &e.terms);
    if e.constant != 0.0 {
        let _ = write!(out, " {:+}", e.constant);
    }
}

fn list(out: &mut String, z: &[AffineExpr]) {
    for (i, e) in z.iter().enumerate() {
        if i > 0 {
            out.push_str(" ; ");
        }
        affine(out, e);
    }
}

pub fn dump(program: &ConicProgram) -> String {
    let mut out = String::new();
    for (i, v) in program.variables.iter().enumerate() {
        let _ = writeln!(out, "var {i} {} {} {}", v.name, v.lower, v.upper);
    }
    out.push_str("min ");
    affine(&mut out, &program.objective);
    out.push('\n');
    for c in &program.equalities {
        out.push_str("eq ");
        terms(&mut out, &c.terms);
        let _ = writeln!(out, " = {}", c.rhs);
    }
    for c in &program.inequalities {
        out.push_str("le ");
        terms(&mut out, &c.terms);
        let _ = writeln!(out, " <= {}", c.rhs);
    }
    for cone in &program.cones {
        match cone {
            ConeBlock::SecondOrder { t, z } => {
                out.push_str("soc ");
                affine(&mut out, t);
                out.push_str(" | ");
                list(&mut out, z);
            }
            ConeBlock::Rotated { u, v, z } => {
                out.push_str("rsoc ");
                affine(&mut out, u);
                out.push_str(" | ");
                affine(&mut out, v);
                out.push_str(" | ");
                list(&mut out, z);
            }
        }
        out.push('\n');
    }
    out
}
