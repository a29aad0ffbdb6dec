//! Jabr second-order-cone relaxation of AC optimal power flow and the polar
//! residual evaluator.
//!
//! Branch flows use the lifted products `c_km = |V_k||V_m| cos(theta_km)` and
//! `s_km = |V_k||V_m| sin(theta_km)`, `theta_km = delta_k - delta_m`:
//!
//! ```text
//! P_km =  g_kk c_kk + g_km c_km + b_km s_km
//! Q_km = -b_kk c_kk - b_km c_km + g_km s_km
//! ```
//!
//! where `g_km + i b_km` is the off-diagonal admittance entry and
//! `g_kk + i b_kk` the branch's diagonal contribution at the sending bus. Bus
//! shunts enter the balance rows only.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{AffineExpr, ConicProgram, VarId};
use crate::convexify::Hyperbox;
use crate::cycle_constraints::{LiftedIndex, PairRef};
use crate::network::{ordered, BusId, Direction, Network};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JabrError {
    #[error("variable {name} has no finite bounds")]
    UnboundedBox { name: String },
    #[error("unknown bus {0}")]
    UnknownBus(BusId),
    #[error("extra pair {0}-{0} is a self pair")]
    SelfPair(BusId),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveMode {
    /// Drops quadratic cost terms (still a valid lower bound when `c2 >= 0`).
    Linear,
    #[default]
    Quadratic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairVars {
    pub c: VarId,
    pub s: VarId,
    /// True for pairs introduced by cycle decomposition rather than a line.
    pub auxiliary: bool,
}

/// Index map from network quantities to program variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JabrVariables {
    /// Bus ids in network order; `c_diag[i]` belongs to `buses[i]`.
    pub buses: Vec<BusId>,
    pub c_diag: Vec<VarId>,
    /// Keyed by `(min, max)` bus id.
    pub pairs: BTreeMap<(BusId, BusId), PairVars>,
    /// Per line: `[forward, reverse]`.
    pub p_flow: Vec<[VarId; 2]>,
    pub q_flow: Vec<[VarId; 2]>,
    pub p_gen: Vec<VarId>,
    pub q_gen: Vec<VarId>,
    /// Cost epigraph variable per generator when a quadratic cone is used.
    pub cost_epigraph: Vec<Option<VarId>>,
}

impl JabrVariables {
    pub fn position(&self, bus: BusId) -> Option<usize> {
        self.buses.binary_search(&bus).ok().or_else(|| self.buses.iter().position(|&b| b == bus))
    }

    /// Box over every diagonal and pair variable, read from the program bounds.
    pub fn hyperbox(&self, program: &ConicProgram) -> Hyperbox {
        let mut bx = Hyperbox::new();
        let vars = self.c_diag.iter().copied().chain(self.pairs.values().flat_map(|p| [p.c, p.s]));
        for v in vars {
            let var = &program.variables[v.0];
            bx.set(v, var.lower, var.upper);
        }
        bx
    }
}

impl LiftedIndex for JabrVariables {
    fn diag(&self, bus: BusId) -> Option<VarId> {
        self.position(bus).map(|k| self.c_diag[k])
    }

    fn pair(&self, from: BusId, to: BusId) -> Option<PairRef> {
        let p = self.pairs.get(&ordered(from, to))?;
        Some(PairRef {
            c: p.c,
            s: p.s,
            sign: if from < to { 1.0 } else { -1.0 },
        })
    }
}

/// Counts of constraint families in a built program.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuildSummary {
    pub real_pairs: usize,
    pub auxiliary_pairs: usize,
    pub rotated_cones: usize,
    pub thermal_cones: usize,
    pub cost_cones: usize,
    pub balance_equalities: usize,
    pub flow_equalities: usize,
    pub angle_inequalities: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JabrModel {
    pub program: ConicProgram,
    pub vars: JabrVariables,
    pub summary: BuildSummary,
    pub mode: ObjectiveMode,
}

/// Voltage magnitudes and angles per bus (network order) plus generator outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarPoint {
    pub v_mag: Vec<f64>,
    pub delta: Vec<f64>,
    pub p_gen: Vec<f64>,
    pub q_gen: Vec<f64>,
}

impl PolarPoint {
    /// All magnitudes 1, all angles 0, generators at zero.
    pub fn flat(network: &Network) -> Self {
        let n = network.buses().len();
        let g = network.generators().len();
        PolarPoint {
            v_mag: vec![1.0; n],
            delta: vec![0.0; n],
            p_gen: vec![0.0; g],
            q_gen: vec![0.0; g],
        }
    }
}

/// Angle interval of `delta_a - delta_b` for the canonical pair `(a, b)`.
fn pair_angle_bounds(network: &Network, a: BusId, b: BusId) -> Option<(f64, f64)> {
    let mut out: Option<(f64, f64)> = None;
    for line in network.lines() {
        let (lo, hi) = if (line.from, line.to) == (a, b) {
            (line.theta_min, line.theta_max)
        } else if (line.from, line.to) == (b, a) {
            (-line.theta_max, -line.theta_min)
        } else {
            continue;
        };
        out = Some(match out {
            Some((l, h)) => (l.max(lo), h.min(hi)),
            None => (lo, hi),
        });
    }
    out
}

fn require_finite(program: &ConicProgram, v: VarId) -> Result<(), JabrError> {
    let var = &program.variables[v.0];
    if var.lower.is_finite() && var.upper.is_finite() {
        Ok(())
    } else {
        Err(JabrError::UnboundedBox { name: var.name.clone() })
    }
}

/// Builds the Jabr SOCP over the network's lines plus `extra_pairs`.
pub fn build_jabr_socp(
    network: &Network,
    extra_pairs: &BTreeSet<(BusId, BusId)>,
    mode: ObjectiveMode,
) -> Result<JabrModel, JabrError> {
    let mut p = ConicProgram::new();
    let mut summary = BuildSummary::default();
    let buses: Vec<BusId> = network.buses().iter().map(|b| b.id).collect();

    let c_diag: Vec<VarId> = network
        .buses()
        .iter()
        .map(|b| p.add_var(format!("cdiag[{}]", b.id), b.v_min * b.v_min, b.v_max * b.v_max))
        .collect();

    let vmax = |id: BusId| network.bus(id).map(|b| b.v_max).ok_or(JabrError::UnknownBus(id));
    let vmin = |id: BusId| network.bus(id).map(|b| b.v_min).ok_or(JabrError::UnknownBus(id));

    let mut pairs = BTreeMap::new();
    for (a, b) in network.adjacent_pairs() {
        let (lo, hi) = pair_angle_bounds(network, a, b).expect("adjacent pair has a line");
        let vv_max = vmax(a)? * vmax(b)?;
        let vv_min = vmin(a)? * vmin(b)?;
        let c = p.add_var(format!("c[{a},{b}]"), vv_min * lo.cos().min(hi.cos()), vv_max);
        let s = p.add_var(format!("s[{a},{b}]"), vv_max * lo.sin(), vv_max * hi.sin());
        pairs.insert((a, b), PairVars { c, s, auxiliary: false });
        summary.real_pairs += 1;
    }
    for &(x, y) in extra_pairs {
        if x == y {
            return Err(JabrError::SelfPair(x));
        }
        let (a, b) = ordered(x, y);
        if pairs.contains_key(&(a, b)) {
            continue;
        }
        let vv = vmax(a)? * vmax(b)?;
        let c = p.add_var(format!("c[{a},{b}]"), -vv, vv);
        let s = p.add_var(format!("s[{a},{b}]"), -vv, vv);
        pairs.insert((a, b), PairVars { c, s, auxiliary: true });
        summary.auxiliary_pairs += 1;
    }

    for v in c_diag.iter().chain(pairs.values().flat_map(|pv| [&pv.c, &pv.s])) {
        require_finite(&p, *v)?;
    }

    let mut vars = JabrVariables {
        buses: buses.clone(),
        c_diag,
        pairs,
        p_flow: Vec::new(),
        q_flow: Vec::new(),
        p_gen: Vec::new(),
        q_gen: Vec::new(),
        cost_epigraph: Vec::new(),
    };

    // flow definitions
    for (l, line) in network.lines().iter().enumerate() {
        let mut pf = [VarId(0); 2];
        let mut qf = [VarId(0); 2];
        for (d, dir) in [Direction::Forward, Direction::Reverse].into_iter().enumerate() {
            let (k, m) = (line.sending_bus(dir), line.receiving_bus(dir));
            let y = line.admittance(dir);
            let ckk = vars.diag(k).ok_or(JabrError::UnknownBus(k))?;
            let pr = vars.pair(k, m).expect("line pair registered");
            let pv = p.add_free_var(format!("P[{l},{k}->{m}]"));
            let qv = p.add_free_var(format!("Q[{l},{k}->{m}]"));
            p.add_eq(
                vec![(pv, 1.0), (ckk, -y.g_kk), (pr.c, -y.g_km), (pr.s, -y.b_km * pr.sign)],
                0.0,
            );
            p.add_eq(
                vec![(qv, 1.0), (ckk, y.b_kk), (pr.c, y.b_km), (pr.s, -y.g_km * pr.sign)],
                0.0,
            );
            summary.flow_equalities += 2;
            if line.has_thermal_limit() {
                p.add_soc(
                    AffineExpr::constant(line.u_thermal.sqrt()),
                    vec![AffineExpr::var(pv), AffineExpr::var(qv)],
                );
                summary.thermal_cones += 1;
            }
            pf[d] = pv;
            qf[d] = qv;
        }
        vars.p_flow.push(pf);
        vars.q_flow.push(qf);

        // -tan(eta) c <= s <= tan(eta) c, symmetric so orientation-free
        let pr = vars.pair(line.from, line.to).expect("line pair registered");
        let t = line.eta.tan();
        p.add_le(vec![(pr.s, 1.0), (pr.c, -t)], 0.0);
        p.add_le(vec![(pr.s, -1.0), (pr.c, -t)], 0.0);
        summary.angle_inequalities += 2;
    }

    // generators and objective
    let mut objective = AffineExpr::default();
    for (g, gen) in network.generators().iter().enumerate() {
        let pg = p.add_var(format!("Pg[{g}]"), gen.p_min, gen.p_max);
        let qg = p.add_var(format!("Qg[{g}]"), gen.q_min, gen.q_max);
        objective.constant += gen.cost.c0;
        if gen.cost.c1 != 0.0 {
            objective.terms.push((pg, gen.cost.c1));
        }
        let epi = if mode == ObjectiveMode::Quadratic && gen.cost.c2 > 0.0 {
            let t = p.add_var(format!("cost[{g}]"), 0.0, f64::INFINITY);
            p.add_rotated(
                AffineExpr::var(t),
                AffineExpr::constant(1.0),
                vec![AffineExpr::scaled(pg, gen.cost.c2.sqrt())],
            );
            objective.terms.push((t, 1.0));
            summary.cost_cones += 1;
            Some(t)
        } else {
            None
        };
        vars.p_gen.push(pg);
        vars.q_gen.push(qg);
        vars.cost_epigraph.push(epi);
    }
    p.objective = objective;

    // balance rows
    let gens_at = network.generators_by_bus();
    for (k, bus) in network.buses().iter().enumerate() {
        let ckk = vars.c_diag[k];
        let mut prow = vec![(ckk, bus.g_shunt)];
        let mut qrow = vec![(ckk, -bus.b_shunt)];
        for (l, line) in network.lines().iter().enumerate() {
            for (d, dir) in [Direction::Forward, Direction::Reverse].into_iter().enumerate() {
                if line.sending_bus(dir) == bus.id {
                    prow.push((vars.p_flow[l][d], 1.0));
                    qrow.push((vars.q_flow[l][d], 1.0));
                }
            }
        }
        for &g in &gens_at[k] {
            prow.push((vars.p_gen[g], -1.0));
            qrow.push((vars.q_gen[g], -1.0));
        }
        p.add_eq(prow, -bus.p_load);
        p.add_eq(qrow, -bus.q_load);
        summary.balance_equalities += 2;
    }

    // c_km^2 + s_km^2 <= c_kk c_mm for every pair
    for (&(a, b), pv) in &vars.pairs {
        let (ca, cb) = (vars.diag(a).expect("bus"), vars.diag(b).expect("bus"));
        p.add_rotated(
            AffineExpr::var(ca),
            AffineExpr::var(cb),
            vec![AffineExpr::var(pv.c), AffineExpr::var(pv.s)],
        );
        summary.rotated_cones += 1;
    }

    Ok(JabrModel {
        program: p,
        vars,
        summary,
        mode,
    })
}

/// Branch flow `(P_km, Q_km)` from polar quantities at the sending and receiving bus.
fn polar_flow(y: crate::network::BranchAdmittance, vk: f64, vm: f64, theta: f64) -> (f64, f64) {
    let (c, s) = (vk * vm * theta.cos(), vk * vm * theta.sin());
    let ckk = vk * vk;
    (
        y.g_kk * ckk + y.g_km * c + y.b_km * s,
        -y.b_kk * ckk - y.b_km * c + y.g_km * s,
    )
}

/// Residuals of the polar formulation at a point, grouped by family.
///
/// Balance entries are signed; bound and limit entries report the amount of
/// violation and are zero when satisfied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolarResiduals {
    pub p_balance: Vec<f64>,
    pub q_balance: Vec<f64>,
    pub p_gen_bounds: Vec<f64>,
    pub q_gen_bounds: Vec<f64>,
    /// On squared magnitudes.
    pub voltage_bounds: Vec<f64>,
    pub angle_bounds: Vec<f64>,
    /// `max(0, P^2 + Q^2 - U)` per line and direction.
    pub thermal: Vec<f64>,
}

impl PolarResiduals {
    pub fn as_vec(&self) -> Vec<f64> {
        [
            &self.p_balance,
            &self.q_balance,
            &self.p_gen_bounds,
            &self.q_gen_bounds,
            &self.voltage_bounds,
            &self.angle_bounds,
            &self.thermal,
        ]
        .into_iter()
        .flatten()
        .copied()
        .collect()
    }

    pub fn inf_norm(&self) -> f64 {
        self.as_vec().into_iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

fn outside(v: f64, lo: f64, hi: f64) -> f64 {
    (lo - v).max(v - hi).max(0.0)
}

pub fn polar_residuals(network: &Network, point: &PolarPoint) -> PolarResiduals {
    let n = network.buses().len();
    let mut p_balance: Vec<f64> = network.buses().iter().map(|b| b.p_load).collect();
    let mut q_balance: Vec<f64> = network.buses().iter().map(|b| b.q_load).collect();
    for (k, bus) in network.buses().iter().enumerate() {
        let vv = point.v_mag[k].powi(2);
        p_balance[k] += bus.g_shunt * vv;
        q_balance[k] -= bus.b_shunt * vv;
    }
    let mut angle_bounds = Vec::new();
    let mut thermal = Vec::new();
    for line in network.lines() {
        let (Some(f), Some(t)) = (network.bus_index(line.from), network.bus_index(line.to)) else {
            continue;
        };
        let theta = point.delta[f] - point.delta[t];
        angle_bounds.push(outside(theta, line.theta_min, line.theta_max));
        for (k, m, th, dir) in [(f, t, theta, Direction::Forward), (t, f, -theta, Direction::Reverse)] {
            let (pk, qk) = polar_flow(line.admittance(dir), point.v_mag[k], point.v_mag[m], th);
            p_balance[k] += pk;
            q_balance[k] += qk;
            if line.has_thermal_limit() {
                thermal.push((pk * pk + qk * qk - line.u_thermal).max(0.0));
            }
        }
    }
    let mut p_gen_bounds = Vec::new();
    let mut q_gen_bounds = Vec::new();
    for (g, gen) in network.generators().iter().enumerate() {
        if let Some(k) = network.bus_index(gen.bus) {
            p_balance[k] -= point.p_gen[g];
            q_balance[k] -= point.q_gen[g];
        }
        p_gen_bounds.push(outside(point.p_gen[g], gen.p_min, gen.p_max));
        q_gen_bounds.push(outside(point.q_gen[g], gen.q_min, gen.q_max));
    }
    let voltage_bounds = (0..n)
        .map(|k| {
            let b = &network.buses()[k];
            outside(point.v_mag[k].powi(2), b.v_min * b.v_min, b.v_max * b.v_max)
        })
        .collect();
    PolarResiduals {
        p_balance,
        q_balance,
        p_gen_bounds,
        q_gen_bounds,
        voltage_bounds,
        angle_bounds,
        thermal,
    }
}

/// Objective of the polar formulation ($/h) at the point's generator outputs.
pub fn polar_objective(network: &Network, point: &PolarPoint, mode: ObjectiveMode) -> f64 {
    network
        .generators()
        .iter()
        .zip(&point.p_gen)
        .map(|(g, &p)| match mode {
            ObjectiveMode::Quadratic => g.cost.eval(p),
            ObjectiveMode::Linear => g.cost.c1 * p + g.cost.c0,
        })
        .sum()
}

/// Program vector induced by a polar point.
pub fn lift(network: &Network, model: &JabrModel, point: &PolarPoint) -> Vec<f64> {
    let vars = &model.vars;
    let mut x = vec![0.0; model.program.num_vars()];
    for (k, &v) in vars.c_diag.iter().enumerate() {
        x[v.0] = point.v_mag[k].powi(2);
    }
    for (&(a, b), pv) in &vars.pairs {
        let (i, j) = (vars.position(a).expect("bus"), vars.position(b).expect("bus"));
        let r = point.v_mag[i] * point.v_mag[j];
        let th = point.delta[i] - point.delta[j];
        x[pv.c.0] = r * th.cos();
        x[pv.s.0] = r * th.sin();
    }
    for (l, line) in network.lines().iter().enumerate() {
        let (f, t) = (vars.position(line.from).expect("bus"), vars.position(line.to).expect("bus"));
        let theta = point.delta[f] - point.delta[t];
        for (d, (k, m, th, dir)) in [(f, t, theta, Direction::Forward), (t, f, -theta, Direction::Reverse)]
            .into_iter()
            .enumerate()
        {
            let (pk, qk) = polar_flow(line.admittance(dir), point.v_mag[k], point.v_mag[m], th);
            x[vars.p_flow[l][d].0] = pk;
            x[vars.q_flow[l][d].0] = qk;
        }
    }
    for (g, gen) in network.generators().iter().enumerate() {
        x[vars.p_gen[g].0] = point.p_gen[g];
        x[vars.q_gen[g].0] = point.q_gen[g];
        if let Some(t) = vars.cost_epigraph[g] {
            x[t.0] = gen.cost.c2 * point.p_gen[g].powi(2);
        }
    }
    x
}

/// `c_kk c_mm - c^2 - s^2` for one pair.
pub fn pair_tightness(ckk: f64, cmm: f64, c: f64, s: f64) -> f64 {
    ckk * cmm - c * c - s * s
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairResidual {
    pub from: BusId,
    pub to: BusId,
    pub auxiliary: bool,
    pub residual: f64,
}

/// Tightness of every pair cone at the program vector `x`.
pub fn jabr_tightness(vars: &JabrVariables, x: &[f64]) -> Vec<PairResidual> {
    vars.pairs
        .iter()
        .map(|(&(a, b), pv)| {
            let (ca, cb) = (vars.diag(a).expect("bus"), vars.diag(b).expect("bus"));
            PairResidual {
                from: a,
                to: b,
                auxiliary: pv.auxiliary,
                residual: pair_tightness(x[ca.0], x[cb.0], x[pv.c.0], x[pv.s.0]),
            }
        })
        .collect()
}
