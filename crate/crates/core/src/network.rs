//! Typed power-network model and per-branch admittance quantities.
//!
//! All electrical quantities are per-unit on [`Network::base_mva`]; cost
//! coefficients are rescaled so that evaluating them on per-unit outputs yields
//! $/h.

use std::collections::{BTreeSet, HashMap, VecDeque};
use std::f64::consts::FRAC_PI_2;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Integer bus identifier as it appears in the case file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BusId(pub usize);

impl fmt::Display for BusId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bus {
    pub id: BusId,
    pub g_shunt: f64,
    pub b_shunt: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub p_load: f64,
    pub q_load: f64,
}

/// Quadratic generation cost `c2 p^2 + c1 p + c0` with `p` in per-unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostCurve {
    pub c2: f64,
    pub c1: f64,
    pub c0: f64,
}

impl CostCurve {
    pub fn eval(&self, p: f64) -> f64 {
        (self.c2 * p + self.c1) * p + self.c0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Generator {
    pub bus: BusId,
    pub p_min: f64,
    pub p_max: f64,
    pub q_min: f64,
    pub q_max: f64,
    pub cost: CostCurve,
}

/// A branch with its 2x2 admittance matrix `[[y_ff, y_ft], [y_tf, y_tt]]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub from: BusId,
    pub to: BusId,
    pub y_ff: Complex64,
    pub y_ft: Complex64,
    pub y_tf: Complex64,
    pub y_tt: Complex64,
    /// Bounds on `delta_from - delta_to` (rad).
    pub theta_min: f64,
    pub theta_max: f64,
    /// Symmetric angle bound used by `-tan(eta) c <= s <= tan(eta) c`.
    pub eta: f64,
    /// Squared apparent-power limit (p.u.^2); `f64::INFINITY` when unlimited.
    pub u_thermal: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Forward,
    Reverse,
}

/// Off-diagonal entry `Y_km = g_km + i b_km` seen from the sending bus `k`,
/// together with this branch's contribution to the diagonal entry `Y_kk`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchAdmittance {
    pub g_km: f64,
    pub b_km: f64,
    pub g_kk: f64,
    pub b_kk: f64,
}

impl Line {
    /// MATPOWER pi-model: series admittance `1/(r + ix)`, total charging
    /// susceptance `b`, off-nominal tap `ratio` (0 means 1) and phase shift (rad).
    #[allow(clippy::too_many_arguments)]
    pub fn from_branch(
        from: BusId,
        to: BusId,
        r: f64,
        x: f64,
        b: f64,
        ratio: f64,
        shift: f64,
    ) -> Result<Self, NetworkError> {
        let z = Complex64::new(r, x);
        if z.norm() == 0.0 {
            return Err(NetworkError::ZeroImpedance { from, to });
        }
        let ys = z.inv();
        let tap_mag = if ratio == 0.0 { 1.0 } else { ratio };
        let tap = Complex64::from_polar(tap_mag, shift);
        let ytt = ys + Complex64::new(0.0, b / 2.0);
        Ok(Line {
            from,
            to,
            y_ff: ytt / (tap * tap.conj()),
            y_ft: -ys / tap.conj(),
            y_tf: -ys / tap,
            y_tt: ytt,
            theta_min: -DEFAULT_ANGLE_BOUND,
            theta_max: DEFAULT_ANGLE_BOUND,
            eta: DEFAULT_ANGLE_BOUND,
            u_thermal: f64::INFINITY,
        })
    }

    pub fn with_angle_bounds(mut self, theta_min: f64, theta_max: f64) -> Self {
        self.theta_min = theta_min;
        self.theta_max = theta_max;
        self.eta = theta_min.abs().max(theta_max);
        self
    }

    pub fn with_thermal_limit(mut self, u_thermal: f64) -> Self {
        self.u_thermal = u_thermal;
        self
    }

    pub fn sending_bus(&self, dir: Direction) -> BusId {
        match dir {
            Direction::Forward => self.from,
            Direction::Reverse => self.to,
        }
    }

    pub fn receiving_bus(&self, dir: Direction) -> BusId {
        match dir {
            Direction::Forward => self.to,
            Direction::Reverse => self.from,
        }
    }

    pub fn admittance(&self, dir: Direction) -> BranchAdmittance {
        let (off, diag) = match dir {
            Direction::Forward => (self.y_ft, self.y_ff),
            Direction::Reverse => (self.y_tf, self.y_tt),
        };
        BranchAdmittance {
            g_km: off.re,
            b_km: off.im,
            g_kk: diag.re,
            b_kk: diag.im,
        }
    }

    pub fn has_thermal_limit(&self) -> bool {
        self.u_thermal.is_finite()
    }
}

/// Angle-difference bound used when a case file leaves a branch unconstrained.
pub const DEFAULT_ANGLE_BOUND: f64 = std::f64::consts::FRAC_PI_6;

/// Admittance of `line` seen from `sending`, which must be one of its endpoints.
pub fn effective_admittance(line: &Line, sending: BusId) -> Result<BranchAdmittance, NetworkError> {
    if sending == line.from {
        Ok(line.admittance(Direction::Forward))
    } else if sending == line.to {
        Ok(line.admittance(Direction::Reverse))
    } else {
        Err(NetworkError::BusNotOnLine {
            bus: sending,
            from: line.from,
            to: line.to,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetworkError {
    #[error("bus {bus} is not an endpoint of line {from}-{to}")]
    BusNotOnLine { bus: BusId, from: BusId, to: BusId },
    #[error("line {from}-{to} has zero series impedance")]
    ZeroImpedance { from: BusId, to: BusId },
    #[error("unknown bus {0}")]
    UnknownBus(BusId),
    #[error("invalid network: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
}

/// A single invariant violation reported by [`validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    DuplicateBus { bus: BusId },
    DanglingGenerator { generator: usize, bus: BusId },
    DanglingLine { line: usize, bus: BusId },
    SelfLoop { line: usize },
    BoundInversion { element: String, lower: f64, upper: f64 },
    NonPositiveVoltageBound { bus: BusId },
    NegativeQuadraticCost { generator: usize },
    AngleBounds { line: usize },
    Eta { line: usize },
    ThermalLimit { line: usize },
    NonFinite { element: String },
    Disconnected { components: usize },
    Empty,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::DuplicateBus { bus } => write!(f, "duplicate bus id {bus}"),
            Violation::DanglingGenerator { generator, bus } => {
                write!(f, "generator {generator} references missing bus {bus}")
            }
            Violation::DanglingLine { line, bus } => {
                write!(f, "line {line} references missing bus {bus}")
            }
            Violation::SelfLoop { line } => write!(f, "line {line} connects a bus to itself"),
            Violation::BoundInversion { element, lower, upper } => {
                write!(f, "{element}: lower bound {lower} exceeds upper bound {upper}")
            }
            Violation::NonPositiveVoltageBound { bus } => {
                write!(f, "bus {bus} has a non-positive voltage lower bound")
            }
            Violation::NegativeQuadraticCost { generator } => {
                write!(f, "generator {generator} has a negative quadratic cost coefficient")
            }
            Violation::AngleBounds { line } => {
                write!(f, "line {line} angle bounds must satisfy theta_min <= 0 <= theta_max")
            }
            Violation::Eta { line } => write!(f, "line {line} needs 0 < eta < pi/2"),
            Violation::ThermalLimit { line } => write!(f, "line {line} thermal limit must be positive"),
            Violation::NonFinite { element } => write!(f, "{element} has a non-finite value"),
            Violation::Disconnected { components } => {
                write!(f, "network graph has {components} connected components")
            }
            Violation::Empty => write!(f, "network has no buses"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "NetworkData", into = "NetworkData")]
pub struct Network {
    pub base_mva: f64,
    buses: Vec<Bus>,
    generators: Vec<Generator>,
    lines: Vec<Line>,
    position: HashMap<BusId, usize>,
}

#[derive(Serialize, Deserialize)]
struct NetworkData {
    base_mva: f64,
    buses: Vec<Bus>,
    generators: Vec<Generator>,
    lines: Vec<Line>,
}

impl From<NetworkData> for Network {
    fn from(d: NetworkData) -> Self {
        Network::from_parts(d.base_mva, d.buses, d.generators, d.lines)
    }
}

impl From<Network> for NetworkData {
    fn from(n: Network) -> Self {
        NetworkData {
            base_mva: n.base_mva,
            buses: n.buses,
            generators: n.generators,
            lines: n.lines,
        }
    }
}

impl Network {
    /// Assembles a network without checking invariants; see [`Network::new`].
    pub fn from_parts(base_mva: f64, buses: Vec<Bus>, generators: Vec<Generator>, lines: Vec<Line>) -> Self {
        let position = buses.iter().enumerate().map(|(i, b)| (b.id, i)).collect();
        Network {
            base_mva,
            buses,
            generators,
            lines,
            position,
        }
    }

    /// Assembles and validates a network.
    pub fn new(
        base_mva: f64,
        buses: Vec<Bus>,
        generators: Vec<Generator>,
        lines: Vec<Line>,
    ) -> Result<Self, NetworkError> {
        let net = Self::from_parts(base_mva, buses, generators, lines);
        let violations = validate(&net);
        if violations.is_empty() {
            Ok(net)
        } else {
            Err(NetworkError::Invalid(violations))
        }
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn generators(&self) -> &[Generator] {
        &self.generators
    }

    pub fn lines(&self) -> &[Line] {
        &self.lines
    }

    /// Position of a bus in [`Network::buses`].
    pub fn bus_index(&self, id: BusId) -> Option<usize> {
        self.position.get(&id).copied()
    }

    pub fn bus(&self, id: BusId) -> Option<&Bus> {
        self.bus_index(id).map(|i| &self.buses[i])
    }

    /// Generators attached to each bus, indexed like [`Network::buses`].
    pub fn generators_by_bus(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.buses.len()];
        for (g, gen) in self.generators.iter().enumerate() {
            if let Some(k) = self.bus_index(gen.bus) {
                out[k].push(g);
            }
        }
        out
    }

    /// Lowest bus id that hosts a generator, falling back to the lowest bus id.
    pub fn reference_bus(&self) -> Option<BusId> {
        self.generators
            .iter()
            .map(|g| g.bus)
            .filter(|b| self.position.contains_key(b))
            .min()
            .or_else(|| self.buses.iter().map(|b| b.id).min())
    }

    /// Unordered bus pairs joined by at least one line, as `(min, max)`.
    pub fn adjacent_pairs(&self) -> BTreeSet<(BusId, BusId)> {
        self.lines
            .iter()
            .filter(|l| l.from != l.to)
            .map(|l| ordered(l.from, l.to))
            .collect()
    }

    /// Diagonal admittance `Y_kk` for every bus: shunt plus branch contributions.
    pub fn diagonal_admittance(&self) -> Vec<Complex64> {
        let mut diag: Vec<Complex64> = self
            .buses
            .iter()
            .map(|b| Complex64::new(b.g_shunt, b.b_shunt))
            .collect();
        for line in &self.lines {
            for dir in [Direction::Forward, Direction::Reverse] {
                if let Some(k) = self.bus_index(line.sending_bus(dir)) {
                    let a = line.admittance(dir);
                    diag[k] += Complex64::new(a.g_kk, a.b_kk);
                }
            }
        }
        diag
    }
}

pub(crate) fn ordered(a: BusId, b: BusId) -> (BusId, BusId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

fn check_bounds(out: &mut Vec<Violation>, element: String, lower: f64, upper: f64) {
    if lower.is_nan() || upper.is_nan() {
        out.push(Violation::NonFinite { element });
    } else if lower > upper {
        out.push(Violation::BoundInversion { element, lower, upper });
    }
}

/// Returns every invariant violation of `network`; an empty list means valid.
pub fn validate(network: &Network) -> Vec<Violation> {
    let mut out = Vec::new();
    if network.buses.is_empty() {
        out.push(Violation::Empty);
        return out;
    }
    let mut seen = BTreeSet::new();
    for bus in &network.buses {
        if !seen.insert(bus.id) {
            out.push(Violation::DuplicateBus { bus: bus.id });
        }
        if !(bus.v_min > 0.0) {
            out.push(Violation::NonPositiveVoltageBound { bus: bus.id });
        }
        check_bounds(&mut out, format!("bus {} voltage", bus.id), bus.v_min, bus.v_max);
        if !(bus.v_max.is_finite() && bus.p_load.is_finite() && bus.q_load.is_finite())
            || !(bus.g_shunt.is_finite() && bus.b_shunt.is_finite())
        {
            out.push(Violation::NonFinite {
                element: format!("bus {}", bus.id),
            });
        }
    }
    for (g, gen) in network.generators.iter().enumerate() {
        if network.bus_index(gen.bus).is_none() {
            out.push(Violation::DanglingGenerator { generator: g, bus: gen.bus });
        }
        check_bounds(&mut out, format!("generator {g} active power"), gen.p_min, gen.p_max);
        check_bounds(&mut out, format!("generator {g} reactive power"), gen.q_min, gen.q_max);
        if gen.cost.c2 < 0.0 {
            out.push(Violation::NegativeQuadraticCost { generator: g });
        }
    }
    for (l, line) in network.lines.iter().enumerate() {
        for bus in [line.from, line.to] {
            if network.bus_index(bus).is_none() {
                out.push(Violation::DanglingLine { line: l, bus });
            }
        }
        if line.from == line.to {
            out.push(Violation::SelfLoop { line: l });
        }
        if !(line.theta_min <= 0.0 && 0.0 <= line.theta_max) {
            out.push(Violation::AngleBounds { line: l });
        }
        if !(line.eta > 0.0 && line.eta < FRAC_PI_2) {
            out.push(Violation::Eta { line: l });
        }
        if !(line.u_thermal > 0.0) {
            out.push(Violation::ThermalLimit { line: l });
        }
        let ys = [line.y_ff, line.y_ft, line.y_tf, line.y_tt];
        if ys.iter().any(|y| !y.re.is_finite() || !y.im.is_finite()) {
            out.push(Violation::NonFinite {
                element: format!("line {l} admittance"),
            });
        }
    }
    let components = count_components(network);
    if components > 1 {
        out.push(Violation::Disconnected { components });
    }
    out
}

fn count_components(network: &Network) -> usize {
    let n = network.buses.len();
    let mut adj = vec![Vec::new(); n];
    for line in &network.lines {
        if let (Some(a), Some(b)) = (network.bus_index(line.from), network.bus_index(line.to)) {
            adj[a].push(b);
            adj[b].push(a);
        }
    }
    let mut seen = vec![false; n];
    let mut components = 0;
    for start in 0..n {
        if seen[start] {
            continue;
        }
        components += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(k) = queue.pop_front() {
            for &m in &adj[k] {
                if !seen[m] {
                    seen[m] = true;
                    queue.push_back(m);
                }
            }
        }
    }
    components
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bus(id: usize) -> Bus {
        Bus {
            id: BusId(id),
            g_shunt: 0.0,
            b_shunt: 0.0,
            v_min: 0.9,
            v_max: 1.1,
            p_load: 0.0,
            q_load: 0.0,
        }
    }

    fn gen(bus: usize) -> Generator {
        Generator {
            bus: BusId(bus),
            p_min: 0.0,
            p_max: 1.0,
            q_min: -1.0,
            q_max: 1.0,
            cost: CostCurve { c2: 0.0, c1: 1.0, c0: 0.0 },
        }
    }

    fn two_bus() -> Network {
        let line = Line::from_branch(BusId(1), BusId(2), 0.01, 0.1, 0.0, 0.0, 0.0).unwrap();
        Network::from_parts(100.0, vec![bus(1), bus(2)], vec![gen(1)], vec![line])
    }

    #[test]
    fn lossless_line_off_diagonal() {
        let line = Line::from_branch(BusId(1), BusId(2), 0.0, 0.1, 0.0, 1.0, 0.0).unwrap();
        let a = line.admittance(Direction::Forward);
        assert!(a.g_km.abs() < 1e-12);
        assert!((a.b_km - 10.0).abs() < 1e-12);
        assert!((a.b_kk + 10.0).abs() < 1e-12);
    }

    #[test]
    fn resistive_line_series_admittance() {
        let line = Line::from_branch(BusId(1), BusId(2), 0.01, 0.1, 0.0, 0.0, 0.0).unwrap();
        // 1 / (0.01 + 0.1i) = (0.01 - 0.1i) / 0.0101
        let (g, b) = (0.01 / 0.0101, -0.1 / 0.0101);
        let a = line.admittance(Direction::Forward);
        assert!((a.g_km + g).abs() < 1e-12);
        assert!((a.b_km + b).abs() < 1e-12);
        assert!((g - 0.990099).abs() < 1e-6 && (b + 9.90099).abs() < 1e-5);
    }

    #[test]
    fn untapped_line_is_direction_symmetric() {
        let line = Line::from_branch(BusId(3), BusId(7), 0.02, 0.2, 0.05, 0.0, 0.0).unwrap();
        let f = line.admittance(Direction::Forward);
        let r = line.admittance(Direction::Reverse);
        assert_eq!((f.g_km, f.b_km), (r.g_km, r.b_km));
    }

    #[test]
    fn admittance_from_foreign_bus_fails() {
        let line = Line::from_branch(BusId(1), BusId(2), 0.01, 0.1, 0.0, 0.0, 0.0).unwrap();
        assert!(matches!(
            effective_admittance(&line, BusId(5)),
            Err(NetworkError::BusNotOnLine { .. })
        ));
        let rev = effective_admittance(&line, BusId(2)).unwrap();
        assert_eq!(rev, line.admittance(Direction::Reverse));
    }

    #[test]
    fn zero_impedance_rejected() {
        assert!(Line::from_branch(BusId(1), BusId(2), 0.0, 0.0, 0.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn validate_well_formed() {
        assert!(validate(&two_bus()).is_empty());
    }

    #[test]
    fn validate_dangling_generator() {
        let mut net = two_bus();
        net.generators.push(gen(99));
        let v = validate(&net);
        assert_eq!(v, vec![Violation::DanglingGenerator { generator: 1, bus: BusId(99) }]);
    }

    #[test]
    fn validate_voltage_inversion() {
        let mut buses = vec![bus(1), bus(2)];
        buses[0].v_min = 1.1;
        buses[0].v_max = 0.9;
        let net = Network::from_parts(100.0, buses, vec![gen(1)], two_bus().lines().to_vec());
        let v = validate(&net);
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], Violation::BoundInversion { .. }));
    }

    #[test]
    fn validate_disconnected() {
        let net = Network::from_parts(100.0, vec![bus(1), bus(2), bus(3)], vec![gen(1)], two_bus().lines().to_vec());
        assert_eq!(validate(&net), vec![Violation::Disconnected { components: 2 }]);
    }

    #[test]
    fn reference_bus_prefers_generator() {
        let net = Network::from_parts(100.0, vec![bus(1), bus(2)], vec![gen(2)], two_bus().lines().to_vec());
        assert_eq!(net.reference_bus(), Some(BusId(2)));
    }
}
