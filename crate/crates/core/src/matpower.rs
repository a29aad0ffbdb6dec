//! MATPOWER `.m` case parsing and reference-objective files.
//!
//! Only the columns the relaxations need are read; trailing columns (OPF
//! multipliers, extra PGLIB data) are ignored.

use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_2;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{Bus, BusId, CostCurve, Generator, Line, Network, NetworkError, DEFAULT_ANGLE_BOUND};

const BUS_COLS: usize = 13;
const GEN_COLS: usize = 10;
const BRANCH_COLS: usize = 11;
const GENCOST_COLS: usize = 4;

/// Angle limits at or beyond this magnitude (degrees) mean "unconstrained".
const UNCONSTRAINED_ANGLE_DEG: f64 = 360.0;
/// Finite angle limits are clamped inside the open interval (-pi/2, pi/2).
const MAX_ANGLE_BOUND: f64 = FRAC_PI_2 - 1.0 / 57.295_779_513_082_32;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MatpowerError {
    #[error("malformed case at line {line}, column {column}: {message}")]
    MalformedCase { line: usize, column: usize, message: String },
    #[error("gencost row {row} uses a piecewise-linear cost; only polynomial costs are supported")]
    PiecewiseLinearCost { row: usize },
    #[error("gencost row {row}: polynomial of degree {degree} is not supported (at most quadratic)")]
    UnsupportedCostDegree { row: usize, degree: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("malformed reference file at line {line}: {message}")]
    MalformedReference { line: usize, message: String },
}

/// One numeric row of a matrix literal with the position of its first entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub values: Vec<f64>,
    pub line: usize,
    pub column: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseFile {
    pub name: String,
    pub base_mva: f64,
    pub bus_table: Vec<Row>,
    pub gen_table: Vec<Row>,
    pub branch_table: Vec<Row>,
    pub gencost_table: Vec<Row>,
}

fn malformed(line: usize, column: usize, message: impl Into<String>) -> MatpowerError {
    MatpowerError::MalformedCase {
        line,
        column,
        message: message.into(),
    }
}

/// Strips a `%` comment, ignoring `%` inside single-quoted strings.
fn strip_comment(line: &str) -> &str {
    let mut in_str = false;
    for (i, ch) in line.char_indices() {
        match ch {
            '\'' => in_str = !in_str,
            '%' if !in_str => return &line[..i],
            _ => {}
        }
    }
    line
}

enum State {
    Idle,
    Matrix { name: String, rows: Vec<Row>, current: Row },
    Skip(char),
}

/// Parses the matrix and scalar assignments of a MATPOWER script.
pub fn parse_case_file(text: &str) -> Result<CaseFile, MatpowerError> {
    let mut name = String::new();
    let mut base_mva = None;
    let mut tables: BTreeMap<String, Vec<Row>> = BTreeMap::new();
    let mut state = State::Idle;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let content = strip_comment(raw);
        let mut rest = content;
        let mut offset = 0usize;
        loop {
            match &mut state {
                State::Idle => {
                    let trimmed = rest.trim_start();
                    offset += rest.len() - trimmed.len();
                    rest = trimmed;
                    if rest.is_empty() {
                        break;
                    }
                    if let Some(after) = rest.strip_prefix("function") {
                        if let Some(eq) = after.find('=') {
                            name = after[eq + 1..].trim().trim_end_matches(';').to_string();
                        }
                        break;
                    }
                    let Some(after) = rest.strip_prefix("mpc.") else {
                        break;
                    };
                    let Some(eq) = after.find('=') else {
                        return Err(malformed(line_no, offset + 1, "expected '=' after mpc field"));
                    };
                    let field = after[..eq].trim().to_string();
                    let rhs_full = &after[eq + 1..];
                    let rhs = rhs_full.trim_start();
                    let rhs_offset = offset + 4 + eq + 1 + (rhs_full.len() - rhs.len());
                    if let Some(body) = rhs.strip_prefix('[') {
                        state = State::Matrix {
                            name: field,
                            rows: Vec::new(),
                            current: Row { values: Vec::new(), line: line_no, column: rhs_offset + 2 },
                        };
                        offset = rhs_offset + 1;
                        rest = body;
                    } else if let Some(body) = rhs.strip_prefix('{') {
                        state = State::Skip('}');
                        offset = rhs_offset + 1;
                        rest = body;
                    } else {
                        let value = rhs.trim_end().trim_end_matches(';').trim();
                        if field == "baseMVA" {
                            let v = f64::from_str(value).map_err(|_| {
                                malformed(line_no, rhs_offset + 1, format!("cannot parse baseMVA '{value}'"))
                            })?;
                            base_mva = Some(v);
                        }
                        break;
                    }
                }
                State::Skip(close) => match rest.find(*close) {
                    Some(pos) => {
                        offset += pos + 1;
                        rest = &rest[pos + 1..];
                        state = State::Idle;
                    }
                    None => break,
                },
                State::Matrix { name: field, rows, current } => {
                    let mut closed = false;
                    let mut consumed = 0usize;
                    let bytes: Vec<(usize, char)> = rest.char_indices().collect();
                    let mut i = 0;
                    while i < bytes.len() {
                        let (pos, ch) = bytes[i];
                        match ch {
                            ']' => {
                                closed = true;
                                consumed = pos + 1;
                                break;
                            }
                            ';' => {
                                finish_row(rows, current, line_no, offset + pos + 2);
                                i += 1;
                            }
                            c if c.is_whitespace() || c == ',' => i += 1,
                            _ => {
                                let start = pos;
                                let mut end = rest.len();
                                while i < bytes.len() {
                                    let (p, c) = bytes[i];
                                    if c.is_whitespace() || c == ',' || c == ';' || c == ']' {
                                        end = p;
                                        break;
                                    }
                                    i += 1;
                                }
                                let token = &rest[start..end];
                                let value = f64::from_str(token).map_err(|_| {
                                    malformed(line_no, offset + start + 1, format!("cannot parse number '{token}' in mpc.{field}"))
                                })?;
                                if current.values.is_empty() {
                                    current.line = line_no;
                                    current.column = offset + start + 1;
                                }
                                current.values.push(value);
                            }
                        }
                    }
                    if closed {
                        finish_row(rows, current, line_no, 1);
                        let done = std::mem::replace(&mut state, State::Idle);
                        if let State::Matrix { name, rows, .. } = done {
                            tables.insert(name, rows);
                        }
                        offset += consumed;
                        rest = &rest[consumed..];
                        // trailing ';' after ']' is harmless
                        let t = rest.trim_start().trim_start_matches(';');
                        offset += rest.len() - t.len();
                        rest = t;
                    } else {
                        // newline terminates a row inside a matrix literal
                        finish_row(rows, current, line_no + 1, 1);
                        break;
                    }
                }
            }
        }
    }
    if let State::Matrix { name, current, .. } = &state {
        return Err(malformed(current.line, current.column, format!("unterminated matrix mpc.{name}")));
    }

    let last_line = text.lines().count().max(1);
    let mut take = |field: &str, min_cols: usize| -> Result<Vec<Row>, MatpowerError> {
        let rows = tables
            .remove(field)
            .ok_or_else(|| malformed(last_line, 1, format!("missing mpc.{field}")))?;
        for row in &rows {
            if row.values.len() < min_cols {
                return Err(malformed(
                    row.line,
                    row.column,
                    format!("mpc.{field} row has {} columns, expected at least {min_cols}", row.values.len()),
                ));
            }
        }
        Ok(rows)
    };
    let bus_table = take("bus", BUS_COLS)?;
    let gen_table = take("gen", GEN_COLS)?;
    let branch_table = take("branch", BRANCH_COLS)?;
    let gencost_table = take("gencost", GENCOST_COLS)?;
    let base_mva = base_mva.ok_or_else(|| malformed(last_line, 1, "missing mpc.baseMVA"))?;
    if !(base_mva > 0.0 && base_mva.is_finite()) {
        return Err(malformed(last_line, 1, "mpc.baseMVA must be positive"));
    }
    Ok(CaseFile {
        name,
        base_mva,
        bus_table,
        gen_table,
        branch_table,
        gencost_table,
    })
}

fn finish_row(rows: &mut Vec<Row>, current: &mut Row, next_line: usize, next_col: usize) {
    if !current.values.is_empty() {
        rows.push(std::mem::replace(
            current,
            Row { values: Vec::new(), line: next_line, column: next_col },
        ));
    }
}

fn bus_id(row: &Row, col: usize) -> Result<BusId, MatpowerError> {
    let v = row.values[col];
    if v < 0.0 || v.fract() != 0.0 || !v.is_finite() {
        return Err(malformed(row.line, row.column, format!("invalid bus id {v}")));
    }
    Ok(BusId(v as usize))
}

fn angle_bounds(row: &Row) -> (f64, f64) {
    let (lo, hi) = match (row.values.get(11), row.values.get(12)) {
        (Some(&lo), Some(&hi)) => (lo, hi),
        _ => return (-DEFAULT_ANGLE_BOUND, DEFAULT_ANGLE_BOUND),
    };
    if (lo == 0.0 && hi == 0.0) || (lo <= -UNCONSTRAINED_ANGLE_DEG && hi >= UNCONSTRAINED_ANGLE_DEG) {
        return (-DEFAULT_ANGLE_BOUND, DEFAULT_ANGLE_BOUND);
    }
    let lo = if lo <= -UNCONSTRAINED_ANGLE_DEG { -DEFAULT_ANGLE_BOUND } else { lo.to_radians() };
    let hi = if hi >= UNCONSTRAINED_ANGLE_DEG { DEFAULT_ANGLE_BOUND } else { hi.to_radians() };
    (lo.max(-MAX_ANGLE_BOUND), hi.min(MAX_ANGLE_BOUND))
}

fn cost_curve(row: &Row, index: usize, base: f64) -> Result<CostCurve, MatpowerError> {
    let model = row.values[0];
    if model == 1.0 {
        return Err(MatpowerError::PiecewiseLinearCost { row: index + 1 });
    }
    if model != 2.0 {
        return Err(malformed(row.line, row.column, format!("unknown cost model {model}")));
    }
    let n = row.values[3];
    if n < 0.0 || n.fract() != 0.0 {
        return Err(malformed(row.line, row.column, format!("invalid coefficient count {n}")));
    }
    let n = n as usize;
    if n > 3 {
        return Err(MatpowerError::UnsupportedCostDegree { row: index + 1, degree: n - 1 });
    }
    if row.values.len() < GENCOST_COLS + n {
        return Err(malformed(row.line, row.column, format!("gencost row declares {n} coefficients but has fewer")));
    }
    // coefficients are stored highest order first
    let coeffs = &row.values[GENCOST_COLS..GENCOST_COLS + n];
    let mut c = [0.0; 3];
    for (k, &v) in coeffs.iter().rev().enumerate() {
        c[k] = v;
    }
    Ok(CostCurve {
        c2: c[2] * base * base,
        c1: c[1] * base,
        c0: c[0],
    })
}

impl CaseFile {
    /// Converts raw tables into a validated per-unit [`Network`].
    ///
    /// Isolated buses (type 4) and out-of-service branches and generators are
    /// dropped.
    pub fn to_network(&self) -> Result<Network, MatpowerError> {
        let base = self.base_mva;
        let mut buses = Vec::with_capacity(self.bus_table.len());
        for row in &self.bus_table {
            let v = &row.values;
            if v[1] == 4.0 {
                continue;
            }
            buses.push(Bus {
                id: bus_id(row, 0)?,
                p_load: v[2] / base,
                q_load: v[3] / base,
                g_shunt: v[4] / base,
                b_shunt: v[5] / base,
                v_max: v[11],
                v_min: v[12],
            });
        }
        let active: std::collections::HashSet<BusId> = buses.iter().map(|b| b.id).collect();

        if self.gencost_table.len() < self.gen_table.len() {
            let last = self.gencost_table.last().or(self.gen_table.last()).unwrap();
            return Err(malformed(last.line, last.column, "mpc.gencost has fewer rows than mpc.gen"));
        }
        let mut generators = Vec::new();
        for (i, row) in self.gen_table.iter().enumerate() {
            let v = &row.values;
            let bus = bus_id(row, 0)?;
            if v[7] <= 0.0 || !active.contains(&bus) {
                continue;
            }
            generators.push(Generator {
                bus,
                q_max: v[3] / base,
                q_min: v[4] / base,
                p_max: v[8] / base,
                p_min: v[9] / base,
                cost: cost_curve(&self.gencost_table[i], i, base)?,
            });
        }

        let mut lines = Vec::new();
        for row in &self.branch_table {
            let v = &row.values;
            let (from, to) = (bus_id(row, 0)?, bus_id(row, 1)?);
            if v[10] <= 0.0 || !active.contains(&from) || !active.contains(&to) {
                continue;
            }
            let line = Line::from_branch(from, to, v[2], v[3], v[4], v[8], v[9].to_radians())
                .map_err(|e| malformed(row.line, row.column, e.to_string()))?;
            let (lo, hi) = angle_bounds(row);
            let mut line = line.with_angle_bounds(lo, hi);
            if v[5] > 0.0 {
                line = line.with_thermal_limit((v[5] / base).powi(2));
            }
            lines.push(line);
        }
        Ok(Network::new(base, buses, generators, lines)?)
    }
}

/// Parses a MATPOWER case script into a validated [`Network`].
pub fn parse_case(text: &str) -> Result<Network, MatpowerError> {
    parse_case_file(text)?.to_network()
}

/// Best-known AC-feasible objective values ($/h) keyed by case name.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReferenceObjectives(pub BTreeMap<String, f64>);

impl ReferenceObjectives {
    pub fn get(&self, case: &str) -> Option<f64> {
        self.0.get(case).copied()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Reads whitespace-separated `name value` lines; `#` starts a comment.
pub fn load_reference_objectives(text: &str) -> Result<ReferenceObjectives, MatpowerError> {
    let mut map = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |message: String| MatpowerError::MalformedReference { line: idx + 1, message };
        let mut parts = line.split_whitespace();
        let (Some(name), Some(value), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(bad(format!("expected 'name value', got '{line}'")));
        };
        let v = f64::from_str(value).map_err(|_| bad(format!("'{value}' is not a number")))?;
        if !(v.is_finite() && v > 0.0) {
            return Err(bad(format!("reference for {name} must be positive and finite")));
        }
        map.insert(name.to_string(), v);
    }
    Ok(ReferenceObjectives(map))
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) const TWO_BUS: &str = "function mpc = twobus
mpc.version = '2';
mpc.baseMVA = 100;
mpc.bus = [
	1	3	0	0	0	0	1	1	0	230	1	1.1	0.9;
	2	1	50	10	0	0	1	1	0	230	1	1.1	0.9;
];
mpc.gen = [
	1	0	0	100	-100	1	100	1	200	0;
];
mpc.branch = [
	1	2	0.01	0.1	0.02	120	120	120	0	0	1	-30	30;
];
mpc.gencost = [
	2	0	0	3	0.01	10	5;
];
";

    #[test]
    fn parses_two_bus_case() {
        let net = parse_case(TWO_BUS).unwrap();
        assert_eq!(net.buses().len(), 2);
        assert_eq!(net.lines().len(), 1);
        assert_eq!(net.generators().len(), 1);
        assert!((net.buses()[1].p_load - 0.5).abs() < 1e-15);
        let g = &net.generators()[0];
        assert!((g.cost.c2 - 100.0).abs() < 1e-12);
        assert!((g.cost.c1 - 1000.0).abs() < 1e-12);
        assert!((net.lines()[0].u_thermal - 1.44).abs() < 1e-12);
        assert!((net.lines()[0].theta_max - 30f64.to_radians()).abs() < 1e-15);
        assert!((net.lines()[0].eta - 30f64.to_radians()).abs() < 1e-15);
    }

    #[test]
    fn missing_branch_is_malformed() {
        let text = TWO_BUS.replace("mpc.branch", "mpc.branchx");
        let err = parse_case(&text).unwrap_err();
        assert!(matches!(err, MatpowerError::MalformedCase { ref message, .. } if message.contains("mpc.branch")));
    }

    #[test]
    fn short_row_reports_position() {
        let text = TWO_BUS.replace("1	2	0.01	0.1	0.02	120	120	120	0	0	1	-30	30;", "1	2	0.01;");
        match parse_case(&text).unwrap_err() {
            MatpowerError::MalformedCase { line, column, .. } => {
                assert_eq!(line, 12);
                assert_eq!(column, 2);
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn bad_number_reports_position() {
        let text = TWO_BUS.replace("0.01	0.1	0.02", "0.01	x1	0.02");
        match parse_case(&text).unwrap_err() {
            MatpowerError::MalformedCase { line, message, .. } => {
                assert_eq!(line, 12);
                assert!(message.contains("x1"));
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn piecewise_cost_rejected() {
        let text = TWO_BUS.replace("2	0	0	3	0.01	10	5;", "1	0	0	2	0	0	100	1000;");
        assert_eq!(parse_case(&text).unwrap_err(), MatpowerError::PiecewiseLinearCost { row: 1 });
    }

    #[test]
    fn out_of_service_elements_dropped() {
        let text = TWO_BUS.replace(
            "	1	0	0	100	-100	1	100	1	200	0;",
            "	1	0	0	100	-100	1	100	1	200	0;\n	2	0	0	100	-100	1	100	0	200	0;",
        );
        let text = text.replace("2	0	0	3	0.01	10	5;", "2	0	0	3	0.01	10	5;\n	2	0	0	2	1	0;");
        let net = parse_case(&text).unwrap();
        assert_eq!(net.generators().len(), 1);
    }

    #[test]
    fn unconstrained_angles_default() {
        let text = TWO_BUS.replace("-30	30;", "-360	360;");
        let net = parse_case(&text).unwrap();
        assert_eq!(net.lines()[0].theta_min, -DEFAULT_ANGLE_BOUND);
        assert_eq!(net.lines()[0].eta, DEFAULT_ANGLE_BOUND);
    }

    #[test]
    fn asymmetric_angles_set_eta_to_widest() {
        let text = TWO_BUS.replace("-30	30;", "-20	45;");
        let net = parse_case(&text).unwrap();
        let line = &net.lines()[0];
        assert!((line.eta - 45f64.to_radians()).abs() < 1e-15);
    }

    #[test]
    fn single_line_matrix_and_comments() {
        let text = "mpc.baseMVA = 10; % base\nmpc.bus = [1 3 0 0 0 0 1 1 0 1 1 1.1 0.9; 2 1 1 0 0 0 1 1 0 1 1 1.1 0.9];\n\
                    mpc.gen = [1 0 0 1 -1 1 10 1 5 0];\nmpc.branch = [1, 2, 0, 0.1, 0, 0, 0, 0, 0, 0, 1];\nmpc.gencost = [2 0 0 2 3 0];\n";
        let net = parse_case(text).unwrap();
        assert_eq!(net.buses().len(), 2);
        assert!(!net.lines()[0].has_thermal_limit());
        assert_eq!(net.generators()[0].cost.c1, 30.0);
    }

    #[test]
    fn references_parse() {
        let refs = load_reference_objectives("# comment\ncase9 5296.69\n\ncustom_case 12.5 # trailing\n").unwrap();
        assert_eq!(refs.get("case9"), Some(5296.69));
        assert_eq!(refs.get("custom_case"), Some(12.5));
        assert!(load_reference_objectives("").unwrap().is_empty());
        assert!(matches!(
            load_reference_objectives("case9 abc"),
            Err(MatpowerError::MalformedReference { line: 1, .. })
        ));
    }
}
