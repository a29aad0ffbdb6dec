//! Relaxation variants, their assembly into one conic program, and the
//! benchmark report format.

use std::collections::BTreeSet;
use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conic::{ClarabelBackend, ConicError, ConicSolver, SolveStatus, DEFAULT_TOL};
use crate::convexify::{dual_hull_system, grouped_dual_formulation, relax_system_mccormick, ConvexifyError, LinearRelaxation};
use crate::cycle_constraints::{small_cycle_system, CycleError};
use crate::graph::{decompose_cycle, fundamental_cycle_basis, Cycle, GraphError};
use crate::jabr::{build_jabr_socp, JabrError, JabrModel, ObjectiveMode};
use crate::matpower::ReferenceObjectives;
use crate::network::{ordered, BusId, Network};
use crate::recovery::{certify, ExactnessReport, Tolerances};

pub const SCHEMA_VERSION: u32 = 1;

/// Bounds produced here come from the relaxation alone, without any bound
/// tightening pass.
pub const BOUND_KIND: &str = "socp_no_bound_tightening";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strengthening {
    None,
    Mc34,
    Dual34,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleSource {
    /// Fundamental basis cycles; only those of length 3 or 4 are strengthened.
    Basis,
    /// Basis cycles split into 3- and 4-cycles with auxiliary pairs.
    #[default]
    BasisDecomposed,
}

impl Strengthening {
    pub const ALL: [Strengthening; 3] = [Strengthening::None, Strengthening::Mc34, Strengthening::Dual34];

    pub fn as_str(self) -> &'static str {
        match self {
            Strengthening::None => "none",
            Strengthening::Mc34 => "mc34",
            Strengthening::Dual34 => "dual34",
        }
    }
}

impl fmt::Display for Strengthening {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Strengthening {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strengthening::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| format!("unknown variant {s:?} (expected none, mc34 or dual34)"))
    }
}

impl CycleSource {
    pub fn as_str(self) -> &'static str {
        match self {
            CycleSource::Basis => "basis",
            CycleSource::BasisDecomposed => "basis_decomposed",
        }
    }
}

impl fmt::Display for CycleSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariantSpec {
    pub strengthening: Strengthening,
    pub cycle_source: CycleSource,
    pub objective_mode: ObjectiveMode,
    /// Relative solver tolerance.
    pub tol: f64,
    pub exactness: Tolerances,
}

impl VariantSpec {
    pub fn new(strengthening: Strengthening) -> Self {
        VariantSpec {
            strengthening,
            cycle_source: CycleSource::default(),
            objective_mode: ObjectiveMode::default(),
            tol: DEFAULT_TOL,
            exactness: Tolerances::default(),
        }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.strengthening == Strengthening::Dual34 && self.cycle_source != CycleSource::BasisDecomposed {
            return Err(BenchError::IncompatibleVariant(
                "dual34 requires the basis_decomposed cycle source".into(),
            ));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(BenchError::IncompatibleVariant(format!("tolerance {} is not positive", self.tol)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BenchError {
    #[error("{0}")]
    IncompatibleVariant(String),
    #[error("network has no buses")]
    EmptyNetwork,
    #[error("{variant}: {source}")]
    Build { variant: Strengthening, source: BuildError },
    #[error("{variant}: solver returned {status:?}")]
    Solver { variant: Strengthening, status: SolveStatus },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BuildError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Jabr(#[from] JabrError),
    #[error(transparent)]
    Cycle(#[from] CycleError),
    #[error(transparent)]
    Convexify(#[from] ConvexifyError),
    #[error(transparent)]
    Conic(#[from] ConicError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub variables: usize,
    pub equalities: usize,
    pub inequalities: usize,
    pub cones: usize,
    /// Linear rows contributed by cycle strengthening.
    pub cuts: usize,
    pub basis_cycles: usize,
    pub strengthened_cycles: usize,
    pub auxiliary_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaxationReport {
    pub schema: u32,
    pub case: String,
    pub variant: VariantSpec,
    pub bound_kind: String,
    pub lower_bound: f64,
    pub reference: Option<f64>,
    pub gap_percent: Option<f64>,
    pub solve_time: f64,
    pub solver_iterations: u32,
    pub solver_residual: f64,
    pub exactness: ExactnessReport,
    pub counts: Counts,
}

pub fn gap_percent(reference: f64, lower_bound: f64) -> f64 {
    100.0 * (reference - lower_bound) / reference
}

/// The cycles that receive strengthening constraints, after decomposition.
pub fn strengthening_cycles(basis: &[Cycle], source: CycleSource) -> Result<Vec<Cycle>, GraphError> {
    let mut out = Vec::new();
    for cycle in basis {
        match source {
            CycleSource::Basis if cycle.len() <= 4 => out.push(cycle.clone()),
            CycleSource::Basis => {}
            CycleSource::BasisDecomposed => out.extend(decompose_cycle(cycle, cycle.min_vertex())?),
        }
    }
    Ok(out)
}

/// A variant's program with everything needed to certify its solution.
#[derive(Debug, Clone)]
pub struct AssembledVariant {
    pub model: JabrModel,
    pub basis: crate::graph::CycleBasis,
    pub cycles: Vec<Cycle>,
    pub cuts: usize,
}

fn cycle_relaxation(
    strengthening: Strengthening,
    cycle: &Cycle,
    model: &JabrModel,
) -> Result<Vec<LinearRelaxation>, BuildError> {
    let q = small_cycle_system(cycle, &model.vars)?;
    let bx = model.vars.hyperbox(&model.program);
    Ok(match strengthening {
        Strengthening::None => Vec::new(),
        Strengthening::Mc34 => vec![relax_system_mccormick(&q, &bx)?],
        Strengthening::Dual34 if cycle.len() == 3 => q
            .iter()
            .map(|e| {
                let mut rel = grouped_dual_formulation(e, &BTreeSet::new(), &bx)?;
                rel.fix_outputs_to_zero();
                Ok(rel)
            })
            .collect::<Result<_, ConvexifyError>>()?,
        Strengthening::Dual34 => {
            let mut rel = dual_hull_system(&q, &bx)?;
            rel.fix_outputs_to_zero();
            vec![rel]
        }
    })
}

/// Builds the program of `variant` on `network`, rooting the basis at `root`.
pub fn assemble(network: &Network, variant: &VariantSpec, root: BusId) -> Result<AssembledVariant, BuildError> {
    let basis = fundamental_cycle_basis(network, root)?;
    let cycles = match variant.strengthening {
        Strengthening::None => Vec::new(),
        _ => strengthening_cycles(&basis.cycles, variant.cycle_source)?,
    };
    let extra: BTreeSet<(BusId, BusId)> = cycles
        .iter()
        .flat_map(|c| c.arcs.iter().map(|a| ordered(a.from, a.to)))
        .collect();
    let mut model = build_jabr_socp(network, &extra, variant.objective_mode)?;
    let mut cuts = 0;
    for (i, cycle) in cycles.iter().enumerate() {
        for (j, rel) in cycle_relaxation(variant.strengthening, cycle, &model)?.iter().enumerate() {
            rel.embed(&mut model.program, &format!("cyc{i}.{j}."));
            cuts += rel.equalities.len() + rel.inequalities.len();
        }
    }
    Ok(AssembledVariant { model, basis, cycles, cuts })
}

/// Builds, solves and certifies one variant.
pub fn run(
    case: &str,
    network: &Network,
    variant: &VariantSpec,
    refs: &ReferenceObjectives,
    root: Option<BusId>,
) -> Result<RelaxationReport, BenchError> {
    variant.validate()?;
    let root = root.or_else(|| network.reference_bus()).ok_or(BenchError::EmptyNetwork)?;
    let build = |e: BuildError| BenchError::Build {
        variant: variant.strengthening,
        source: e,
    };
    let assembled = assemble(network, variant, root).map_err(build)?;
    let program = &assembled.model.program;

    let start = Instant::now();
    let solution = ClarabelBackend::default()
        .solve(program, variant.tol)
        .map_err(|e| build(e.into()))?;
    let solve_time = start.elapsed().as_secs_f64();
    let Some(x) = solution.primal.as_deref().filter(|_| solution.is_optimal()) else {
        return Err(BenchError::Solver {
            variant: variant.strengthening,
            status: solution.status,
        });
    };

    let exactness = certify(network, &assembled.model, x, &assembled.basis, variant.exactness);
    let stats = program.stats();
    let reference = refs.get(case);
    Ok(RelaxationReport {
        schema: SCHEMA_VERSION,
        case: case.to_string(),
        variant: *variant,
        bound_kind: BOUND_KIND.to_string(),
        lower_bound: solution.objective,
        reference,
        gap_percent: reference.map(|r| gap_percent(r, solution.objective)),
        solve_time,
        solver_iterations: solution.iterations,
        solver_residual: solution.max_residual,
        exactness,
        counts: Counts {
            variables: stats.variables,
            equalities: stats.equalities,
            inequalities: stats.inequalities,
            cones: stats.cones(),
            cuts: assembled.cuts,
            basis_cycles: assembled.basis.cycles.len(),
            strengthened_cycles: assembled.cycles.len(),
            auxiliary_pairs: assembled.model.summary.auxiliary_pairs,
        },
    })
}

pub fn write_json(reports: &[RelaxationReport], out: impl Write) -> serde_json::Result<()> {
    serde_json::to_writer_pretty(out, reports)
}

pub const CSV_HEADER: [&str; 14] = [
    "case",
    "variant",
    "cycle_source",
    "objective_mode",
    "lower_bound",
    "reference",
    "gap_percent",
    "solve_time",
    "exact",
    "polar_residual_inf",
    "variables",
    "cones",
    "cuts",
    "bound_kind",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_csv(reports: &[RelaxationReport], out: impl Write) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in reports {
        let mode = match r.variant.objective_mode {
            ObjectiveMode::Linear => "linear",
            ObjectiveMode::Quadratic => "quadratic",
        };
        w.write_record([
            r.case.clone(),
            r.variant.strengthening.to_string(),
            r.variant.cycle_source.to_string(),
            mode.to_string(),
            r.lower_bound.to_string(),
            opt(r.reference),
            opt(r.gap_percent),
            format!("{:.6}", r.solve_time),
            r.exactness.exact.to_string(),
            r.exactness.polar_residual_inf.to_string(),
            r.counts.variables.to_string(),
            r.counts.cones.to_string(),
            r.counts.cuts.to_string(),
            r.bound_kind.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
