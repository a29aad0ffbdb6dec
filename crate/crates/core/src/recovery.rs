//! Recovery of a polar operating point from lifted variables, and exactness
//! certification of a solved relaxation.

use std::collections::BTreeMap;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cycle_constraints::{cycle_angle_residual, LiftedIndex};
use crate::graph::{spanning_tree, CycleBasis, GraphError};
use crate::jabr::{jabr_tightness, polar_objective, polar_residuals, JabrModel, PairResidual, PolarPoint};
use crate::network::{ordered, BusId, Network};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecoveryError {
    #[error("diagonal entry {index} is negative ({value})")]
    NegativeDiagonal { index: usize, value: f64 },
    #[error("pair ({0}, {1}) has c = s = 0")]
    ZeroPair(BusId, BusId),
    #[error("no angle given for pair ({0}, {1})")]
    MissingPair(BusId, BusId),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Reduces an angle to `(-pi, pi]`.
pub fn wrap_angle(theta: f64) -> f64 {
    let r = theta - TAU * (theta / TAU).round();
    if r <= -PI {
        r + TAU
    } else {
        r
    }
}

pub fn recover_magnitudes(c_diag: &[f64]) -> Result<Vec<f64>, RecoveryError> {
    c_diag
        .iter()
        .enumerate()
        .map(|(index, &value)| {
            if value < 0.0 {
                Err(RecoveryError::NegativeDiagonal { index, value })
            } else {
                Ok(value.sqrt())
            }
        })
        .collect()
}

/// Angle of `(c, s)`; the magnitude cancels.
pub fn pair_angle(c: f64, s: f64) -> Option<f64> {
    if c == 0.0 && s == 0.0 {
        None
    } else {
        Some(s.atan2(c))
    }
}

/// Bus angles (network order) from pair angles `theta[(a, b)] = delta_a - delta_b`
/// keyed by `(min, max)`, propagated down the BFS tree rooted at `root`.
pub fn recover_angles(
    network: &Network,
    theta: &BTreeMap<(BusId, BusId), f64>,
    root: BusId,
) -> Result<Vec<f64>, RecoveryError> {
    let tree = spanning_tree(network, root)?;
    let mut delta = vec![0.0; network.buses().len()];
    for &(k, m) in &tree.arcs {
        let key = ordered(k, m);
        let t = theta.get(&key).ok_or(RecoveryError::MissingPair(key.0, key.1))?;
        let theta_km = if k < m { *t } else { -*t };
        let (ik, im) = (
            network.bus_index(k).expect("tree vertex is a bus"),
            network.bus_index(m).expect("tree vertex is a bus"),
        );
        delta[im] = wrap_angle(delta[ik] - theta_km);
    }
    Ok(delta)
}

/// Pair angles of every pair in the model, keyed by `(min, max)`.
pub fn pair_angles(model: &JabrModel, x: &[f64]) -> Result<BTreeMap<(BusId, BusId), f64>, RecoveryError> {
    model
        .vars
        .pairs
        .iter()
        .map(|(&(a, b), pv)| {
            pair_angle(x[pv.c.0], x[pv.s.0])
                .map(|t| ((a, b), t))
                .ok_or(RecoveryError::ZeroPair(a, b))
        })
        .collect()
}

/// Polar point read off a program vector.
pub fn recover_point(network: &Network, model: &JabrModel, x: &[f64], root: BusId) -> Result<PolarPoint, RecoveryError> {
    let vars = &model.vars;
    let c_diag: Vec<f64> = vars.c_diag.iter().map(|v| x[v.0]).collect();
    let v_mag = recover_magnitudes(&c_diag)?;
    let delta = recover_angles(network, &pair_angles(model, x)?, root)?;
    Ok(PolarPoint {
        v_mag,
        delta,
        p_gen: vars.p_gen.iter().map(|v| x[v.0]).collect(),
        q_gen: vars.q_gen.iter().map(|v| x[v.0]).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Absolute, on `c_kk c_mm - c^2 - s^2` (p.u.^2).
    pub soc: f64,
    /// Radians.
    pub cycle: f64,
    /// p.u.
    pub polar: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            soc: 1e-6,
            cycle: 1e-5,
            polar: 1e-5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactnessReport {
    /// Tightness of every line pair.
    pub soc_residuals: Vec<PairResidual>,
    /// Tightness of auxiliary pairs; informational only.
    pub auxiliary_residuals: Vec<PairResidual>,
    /// Per basis cycle, distance of the angle sum to a multiple of `2 pi`.
    pub cycle_residuals: Vec<f64>,
    /// Infinite when no point could be recovered.
    pub polar_residual_inf: f64,
    pub exact: bool,
    /// Line pair with the largest tightness residual in magnitude.
    pub worst_pair: Option<PairResidual>,
    /// Objective of the recovered point.
    pub recovered_objective: Option<f64>,
    pub tolerances: Tolerances,
}

pub fn certify(network: &Network, model: &JabrModel, x: &[f64], basis: &CycleBasis, tol: Tolerances) -> ExactnessReport {
    let (aux, real): (Vec<PairResidual>, Vec<PairResidual>) =
        jabr_tightness(&model.vars, x).into_iter().partition(|r| r.auxiliary);
    let worst_pair = real.iter().copied().max_by(|a, b| a.residual.abs().total_cmp(&b.residual.abs()));

    let angles = pair_angles(model, x).ok();
    let cycle_residuals: Vec<f64> = basis
        .cycles
        .iter()
        .map(|cycle| {
            let Some(angles) = &angles else {
                return f64::INFINITY;
            };
            let theta: Option<Vec<f64>> = cycle
                .arcs
                .iter()
                .map(|arc| {
                    let sign = model.vars.pair(arc.from, arc.to)?.sign;
                    Some(sign * angles.get(&ordered(arc.from, arc.to))?)
                })
                .collect();
            theta.map_or(f64::INFINITY, |t| cycle_angle_residual(&t))
        })
        .collect();

    let point = recover_point(network, model, x, basis.root).ok();
    let polar_residual_inf = point
        .as_ref()
        .map_or(f64::INFINITY, |p| polar_residuals(network, p).inf_norm());
    let recovered_objective = point.as_ref().map(|p| polar_objective(network, p, model.mode));

    let exact = real.iter().all(|r| r.residual.abs() <= tol.soc)
        && cycle_residuals.iter().all(|&r| r <= tol.cycle)
        && polar_residual_inf <= tol.polar;
    ExactnessReport {
        soc_residuals: real,
        auxiliary_residuals: aux,
        cycle_residuals,
        polar_residual_inf,
        exact,
        worst_pair,
        recovered_objective,
        tolerances: tol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jabr::{build_jabr_socp, lift, ObjectiveMode};
    use crate::network::{Bus, Line};
    use std::collections::BTreeSet;

    fn path_network(n: usize) -> Network {
        let buses = (1..=n)
            .map(|i| Bus {
                id: BusId(i),
                g_shunt: 0.0,
                b_shunt: 0.0,
                v_min: 0.9,
                v_max: 1.1,
                p_load: 0.0,
                q_load: 0.0,
            })
            .collect();
        let lines = (1..n)
            .map(|i| Line::from_branch(BusId(i), BusId(i + 1), 0.01, 0.1, 0.0, 0.0, 0.0).unwrap())
            .collect();
        Network::new(100.0, buses, vec![], lines).unwrap()
    }

    #[test]
    fn magnitudes() {
        assert_eq!(recover_magnitudes(&[1.0, 1.1025]).unwrap(), vec![1.0, 1.05]);
        assert!((recover_magnitudes(&[1.1025]).unwrap()[0] - 1.05).abs() < 1e-15);
        assert_eq!(
            recover_magnitudes(&[1.0, -1e-3]),
            Err(RecoveryError::NegativeDiagonal { index: 1, value: -1e-3 })
        );
    }

    #[test]
    fn angles_of_pairs() {
        assert_eq!(pair_angle(1.0, 0.0), Some(0.0));
        assert_eq!(pair_angle(0.0, 1.0), Some(PI / 2.0));
        assert_eq!(pair_angle(0.0, 0.0), None);
        let r = 1.05 * 0.95;
        assert!((pair_angle(0.3f64.cos() * r, 0.3f64.sin() * r).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(pair_angle(-1.0, 0.0), Some(PI));
    }

    #[test]
    fn wrap_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert_eq!(wrap_angle(-PI), PI);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-15);
        assert!((wrap_angle(0.25) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn path_angles() {
        let net = path_network(3);
        let theta = BTreeMap::from([((BusId(1), BusId(2)), 0.1), ((BusId(2), BusId(3)), 0.2)]);
        let d = recover_angles(&net, &theta, BusId(1)).unwrap();
        assert_eq!(d[0], 0.0);
        assert!((d[1] + 0.1).abs() < 1e-15);
        assert!((d[2] + 0.3).abs() < 1e-15);
        // rooting elsewhere shifts everything
        let d3 = recover_angles(&net, &theta, BusId(3)).unwrap();
        assert!((d3[0] - 0.3).abs() < 1e-15 && d3[2] == 0.0);
    }

    #[test]
    fn missing_tree_pair() {
        let net = path_network(3);
        let theta = BTreeMap::from([((BusId(1), BusId(2)), 0.1)]);
        assert_eq!(
            recover_angles(&net, &theta, BusId(1)),
            Err(RecoveryError::MissingPair(BusId(2), BusId(3)))
        );
    }

    #[test]
    fn lifted_point_certifies_exact() {
        let net = path_network(4);
        let model = build_jabr_socp(&net, &BTreeSet::new(), ObjectiveMode::Quadratic).unwrap();
        let point = PolarPoint {
            v_mag: vec![1.0; 4],
            delta: vec![0.0; 4],
            p_gen: vec![],
            q_gen: vec![],
        };
        let x = lift(&net, &model, &point);
        let basis = crate::graph::fundamental_cycle_basis(&net, BusId(1)).unwrap();
        let rep = certify(&net, &model, &x, &basis, Tolerances::default());
        assert!(rep.exact);
        assert!(rep.cycle_residuals.is_empty());
        assert_eq!(rep.soc_residuals.len(), 3);
    }

    #[test]
    fn slack_cone_is_reported() {
        let net = path_network(3);
        let model = build_jabr_socp(&net, &BTreeSet::new(), ObjectiveMode::Quadratic).unwrap();
        let mut x = lift(&net, &model, &PolarPoint::flat(&net));
        let pv = model.vars.pairs[&(BusId(2), BusId(3))];
        x[pv.c.0] = 0.9;
        let basis = crate::graph::fundamental_cycle_basis(&net, BusId(1)).unwrap();
        let rep = certify(&net, &model, &x, &basis, Tolerances::default());
        assert!(!rep.exact);
        let worst = rep.worst_pair.unwrap();
        assert_eq!((worst.from, worst.to), (BusId(2), BusId(3)));
        assert!((worst.residual - 0.19).abs() < 1e-12);
    }
}
