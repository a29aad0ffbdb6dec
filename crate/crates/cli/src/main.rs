use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{CommandFactory, Parser, ValueEnum};
use rayon::prelude::*;

use opf_relax::bench::{run, write_csv, write_json, BenchError, CycleSource, RelaxationReport, Strengthening, VariantSpec};
use opf_relax::conic::DEFAULT_TOL;
use opf_relax::jabr::ObjectiveMode;
use opf_relax::matpower::{load_reference_objectives, parse_case, ReferenceObjectives};
use opf_relax::network::{BusId, Network};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Source {
    Basis,
    BasisDecomposed,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Objective {
    Linear,
    Quadratic,
}

/// Lower bounds for AC optimal power flow from cycle-strengthened SOCP relaxations.
#[derive(Debug, Parser)]
#[command(name = "opf-bench", version)]
struct Args {
    /// MATPOWER case file; repeat for several cases.
    #[arg(long = "case", required = true, value_name = "PATH")]
    cases: Vec<PathBuf>,
    /// Relaxation variant (none, mc34, dual34); repeat for several.
    #[arg(long = "variant", value_name = "NAME", default_value = "none")]
    variants: Vec<Strengthening>,
    /// Reference objectives, one `name value` pair per line.
    #[arg(long, value_name = "PATH")]
    refs: Option<PathBuf>,
    /// Root bus of the spanning tree (default: lowest generator bus).
    #[arg(long, value_name = "BUS")]
    root: Option<usize>,
    /// Relative solver tolerance.
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Output file (default: standard output).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
    /// Worker threads (default: one per core).
    #[arg(long, value_name = "N")]
    jobs: Option<usize>,
    #[arg(long, value_enum, default_value = "basis-decomposed")]
    cycle_source: Source,
    #[arg(long, value_enum, default_value = "quadratic")]
    objective: Objective,
}

enum Failure {
    Input(String),
    Solver(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Solver(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Solver(m) => m,
        }
    }
}

fn case_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn load_case(path: &Path) -> Result<(String, Network), Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    let network = parse_case(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
    Ok((case_name(path), network))
}

fn execute(args: &Args) -> Result<(), Failure> {
    let refs = match &args.refs {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?;
            load_reference_objectives(&text).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?
        }
        None => ReferenceObjectives::default(),
    };
    let cases = args.cases.iter().map(|p| load_case(p)).collect::<Result<Vec<_>, _>>()?;

    let variants: Vec<VariantSpec> = args
        .variants
        .iter()
        .map(|&s| {
            let mut v = VariantSpec::new(s);
            v.tol = args.tol;
            v.cycle_source = match args.cycle_source {
                Source::Basis => CycleSource::Basis,
                Source::BasisDecomposed => CycleSource::BasisDecomposed,
            };
            v.objective_mode = match args.objective {
                Objective::Linear => ObjectiveMode::Linear,
                Objective::Quadratic => ObjectiveMode::Quadratic,
            };
            v
        })
        .collect();
    for v in &variants {
        v.validate().map_err(|e| Failure::Input(e.to_string()))?;
    }

    let jobs: Vec<(&(String, Network), &VariantSpec)> =
        cases.iter().flat_map(|c| variants.iter().map(move |v| (c, v))).collect();
    let root = args.root.map(BusId);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs.unwrap_or(0))
        .build()
        .map_err(|e| Failure::Input(e.to_string()))?;
    let results: Vec<Result<RelaxationReport, (String, BenchError)>> = pool.install(|| {
        jobs.par_iter()
            .map(|((name, net), v)| run(name, net, v, &refs, root).map_err(|e| (name.clone(), e)))
            .collect()
    });

    let mut reports = Vec::with_capacity(results.len());
    let mut failure = None;
    for r in results {
        match r {
            Ok(rep) => reports.push(rep),
            Err((name, e)) => {
                // reported here; the returned failure only carries the exit code
                eprintln!("{name}: {e}");
                let f = match e {
                    BenchError::IncompatibleVariant(_) | BenchError::EmptyNetwork => Failure::Input(String::new()),
                    BenchError::Build { .. } | BenchError::Solver { .. } => Failure::Solver(String::new()),
                };
                failure = failure.or(Some(f));
            }
        }
    }

    let sink: Box<dyn Write> = match &args.out {
        Some(p) => Box::new(File::create(p).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?),
        None => Box::new(io::stdout().lock()),
    };
    let mut sink = BufWriter::new(sink);
    let written = match args.format {
        Format::Json => write_json(&reports, &mut sink)
            .map_err(|e| e.to_string())
            .and_then(|_| writeln!(sink).map_err(|e| e.to_string())),
        Format::Csv => write_csv(&reports, &mut sink).map_err(|e| e.to_string()),
    };
    written
        .and_then(|_| sink.flush().map_err(|e| e.to_string()))
        .map_err(Failure::Input)?;

    failure.map_or(Ok(()), Err)
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            if !e.use_stderr() {
                return ExitCode::SUCCESS;
            }
            eprintln!("\n{}", Args::command().render_usage());
            return ExitCode::from(1);
        }
    };
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message().is_empty() {
                eprintln!("error: {}", f.message());
            }
            ExitCode::from(f.code())
        }
    }
}
