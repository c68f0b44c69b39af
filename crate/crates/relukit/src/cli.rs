//! Command-line surface: compile, construct, approximate, train, analyze,
//! verify and evaluate networks with stable JSON/CSV file formats.
//!
//! Exit codes: 0 on success, 1 for validation errors (flags, files,
//! dimensions), 2 for numeric failures (solver errors, divergence).

use std::path::{Path, PathBuf};

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use crate::construct::{self, GridSpec};
use crate::json;
use crate::network::{PiecewiseLinear, ReluNetwork};
use crate::rng::SplitMix64;
use crate::spline1d::{self, BasisKind, BasisPlan, Spline1D};
use crate::trainer::{self, Dataset, TrainConfig, TrainError};
use crate::{analyzer, svg};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERIC: i32 = 2;

#[derive(Debug)]
struct CliError {
    code: i32,
    message: String,
}

impl CliError {
    fn validation(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_VALIDATION, message: msg.into() }
    }

    fn numeric(msg: impl Into<String>) -> Self {
        CliError { code: EXIT_NUMERIC, message: msg.into() }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::validation(e.to_string())
    }
}

impl From<construct::ConstructError> for CliError {
    fn from(e: construct::ConstructError) -> Self {
        CliError::numeric(e.to_string())
    }
}

impl From<spline1d::SplineError> for CliError {
    fn from(e: spline1d::SplineError) -> Self {
        match e {
            spline1d::SplineError::UnsolvableInitialPiece(_) => CliError::numeric(e.to_string()),
            other => CliError::validation(other.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Diverged { .. } | TrainError::ConstantTargets => {
                CliError::numeric(e.to_string())
            }
            other => CliError::validation(other.to_string()),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "relukit",
    version,
    about = "Build, train and interpret two-layer ReLU networks on the unit box",
    after_help = "File formats:\n  \
        network JSON   {\"n\", \"output_bias\", \"units\": [{\"w\", \"b\", \"lambda\"}]}\n  \
        spline JSON    {\"knots\": [...], \"pieces\": [{\"a\", \"b\"}]}\n  \
        target JSON    {\"arrangement\": {...}, \"pieces\": [{\"w\", \"b\"}]}\n  \
        plan JSON      {\"kind\", \"anchor_knots\", \"flipped_knots\", \"bidirectional_knots\"}\n  \
        data CSV       header x1,...,xn,z; one sample per row\n\
        Floats are emitted with 17 significant digits and round-trip exactly."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum BasisArg {
    #[value(name = "one-sided")]
    OneSided,
    Added,
    Substituted,
    Compound,
}

#[derive(Subcommand)]
enum Command {
    /// Compile a univariate continuous spline into an exact network
    #[command(name = "compile-spline1d")]
    CompileSpline1d {
        /// Spline JSON file
        #[arg(long)]
        spline: PathBuf,
        /// Basis family to use (ignored when --plan is given)
        #[arg(long, value_enum, default_value = "one-sided")]
        basis: BasisArg,
        /// Explicit basis plan JSON (overrides --basis)
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Output network JSON
        #[arg(long)]
        out: PathBuf,
    },
    /// Realize a piecewise linear target on an axis grid
    Construct {
        /// Cells per axis, e.g. "3" or "3,4"
        #[arg(long)]
        grid: String,
        /// Input dimension
        #[arg(long)]
        n: usize,
        /// Target JSON (arrangement + one piece per region)
        #[arg(long)]
        target: PathBuf,
        /// Output network JSON
        #[arg(long)]
        out: PathBuf,
    },
    /// Approximate a function by a grid construction
    Approximate {
        /// Builtin name (poly16, sinsum, quad) or file:<target.json>
        #[arg(long = "fn")]
        function: String,
        /// Cells per axis
        #[arg(long = "M")]
        m: usize,
        /// Input dimension
        #[arg(long)]
        n: usize,
        /// Output network JSON
        #[arg(long)]
        out: PathBuf,
        /// Fit report JSON
        #[arg(long)]
        report: Option<PathBuf>,
        /// Sample lattice resolution per axis for the error report
        #[arg(long, default_value_t = 101)]
        samples: usize,
    },
    /// Discretize a builtin function into a CSV dataset
    MakeData {
        /// Builtin name (poly16, sinsum, quad)
        #[arg(long = "fn")]
        function: String,
        /// Input dimension
        #[arg(long)]
        n: usize,
        /// Lattice step; must divide 1 evenly
        #[arg(long)]
        step: f64,
        /// Output CSV
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a network by full-batch gradient descent
    Train {
        /// Training data CSV (header x1,...,xn,z)
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        units: usize,
        #[arg(long)]
        lr: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output network JSON
        #[arg(long)]
        out: PathBuf,
        /// Fit report JSON
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Interpret a network: unit taxonomy, chains, coverage, continuity
    Analyze {
        #[arg(long)]
        net: PathBuf,
        /// Analysis report JSON
        #[arg(long)]
        report: PathBuf,
        /// Optional diagram (inputs of dimension 1 or 2 only)
        #[arg(long)]
        svg: Option<PathBuf>,
    },
    /// Compare a network against a spline, target or builtin on samples
    Verify {
        #[arg(long)]
        net: PathBuf,
        /// Spline JSON, target JSON, or a builtin name
        #[arg(long)]
        target: String,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Evaluate a network at one point
    Eval {
        #[arg(long)]
        net: PathBuf,
        /// Comma-separated coordinates, e.g. "0.3,0.7"
        #[arg(long)]
        point: String,
    },
}

/// Entry point used by `main`; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_VALIDATION,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path, what: &str) -> Result<T, CliError> {
    json::read_file(path).map_err(|e| CliError::validation(format!("{what} {path:?}: {e}")))
}

fn parse_floats(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|e| CliError::validation(format!("bad number {t:?}: {e}")))
        })
        .collect()
}

fn parse_grid(text: &str, n: usize) -> Result<Vec<usize>, CliError> {
    let parts: Vec<usize> = text
        .split(',')
        .map(|t| {
            t.trim()
                .parse::<usize>()
                .map_err(|e| CliError::validation(format!("bad grid size {t:?}: {e}")))
        })
        .collect::<Result<_, _>>()?;
    let per_axis = if parts.len() == 1 {
        vec![parts[0]; n]
    } else {
        parts
    };
    if per_axis.len() != n {
        return Err(CliError::validation(format!(
            "grid lists {} axes but --n is {n}",
            per_axis.len()
        )));
    }
    if per_axis.iter().any(|&m| m < 2) {
        return Err(CliError::validation("each grid axis needs at least 2 cells"));
    }
    Ok(per_axis)
}

/// Map a target file's pieces onto the grid's own region order by locating
/// each grid region's witness in the target's arrangement.
fn align_target_to_grid(
    grid: &GridSpec,
    target: &PiecewiseLinear,
) -> Result<PiecewiseLinear, CliError> {
    if target.arrangement.n != grid.n {
        return Err(CliError::validation(format!(
            "target dimension {} does not match grid dimension {}",
            target.arrangement.n, grid.n
        )));
    }
    let pieces = grid
        .arrangement()
        .regions
        .iter()
        .map(|region| {
            target
                .arrangement
                .region_of_point(&region.witness)
                .map(|idx| target.pieces[idx].clone())
                .ok_or_else(|| CliError::validation("target does not cover the grid"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PiecewiseLinear {
        arrangement: grid.arrangement().clone(),
        pieces,
    })
}

fn write_csv(path: &Path, data: &Dataset) -> Result<(), CliError> {
    let n = data.dimension();
    let mut out = String::new();
    for i in 0..n {
        out.push_str(&format!("x{},", i + 1));
    }
    out.push_str("z\n");
    for (x, z) in data.inputs.iter().zip(&data.targets) {
        for v in x {
            out.push_str(&format!("{v:.16e},"));
        }
        out.push_str(&format!("{z:.16e}\n"));
    }
    std::fs::write(path, out)?;
    Ok(())
}

fn read_csv(path: &Path) -> Result<Dataset, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| CliError::validation("empty data file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    if cols.last() != Some(&"z") || cols.len() < 2 {
        return Err(CliError::validation(
            "data header must be x1,...,xn,z",
        ));
    }
    let n = cols.len() - 1;
    let mut inputs = Vec::new();
    let mut targets = Vec::new();
    for (lineno, line) in lines.enumerate() {
        let values = parse_floats(line)
            .map_err(|e| CliError::validation(format!("row {}: {}", lineno + 2, e.message)))?;
        if values.len() != n + 1 {
            return Err(CliError::validation(format!(
                "row {} has {} fields, expected {}",
                lineno + 2,
                values.len(),
                n + 1
            )));
        }
        targets.push(values[n]);
        inputs.push(values[..n].to_vec());
    }
    Dataset::new(inputs, targets).map_err(|e| CliError::validation(e.to_string()))
}

enum VerifyTarget {
    Spline(Spline1D),
    Piecewise(PiecewiseLinear),
    Builtin(fn(&[f64]) -> f64),
}

fn load_verify_target(spec: &str, n: usize) -> Result<VerifyTarget, CliError> {
    if let Ok(f) = trainer::builtin(spec) {
        return Ok(VerifyTarget::Builtin(f));
    }
    let path = Path::new(spec);
    let value: serde_json::Value = read_json(path, "target")?;
    if value.get("knots").is_some() {
        if n != 1 {
            return Err(CliError::validation(
                "spline targets require a univariate network",
            ));
        }
        let spline: Spline1D = serde_json::from_value(value)
            .map_err(|e| CliError::validation(format!("bad spline file: {e}")))?;
        return Ok(VerifyTarget::Spline(spline));
    }
    if value.get("arrangement").is_some() {
        let pl: PiecewiseLinear = serde_json::from_value(value)
            .map_err(|e| CliError::validation(format!("bad target file: {e}")))?;
        if pl.arrangement.n != n {
            return Err(CliError::validation(format!(
                "target dimension {} does not match network dimension {n}",
                pl.arrangement.n
            )));
        }
        return Ok(VerifyTarget::Piecewise(pl));
    }
    Err(CliError::validation(
        "target must be a builtin name, a spline JSON or a target JSON",
    ))
}

fn dispatch(command: Command) -> Result<(), CliError> {
    match command {
        Command::CompileSpline1d { spline, basis, plan, out } => {
            let spline: Spline1D = read_json(&spline, "spline")?;
            let plan = match plan {
                Some(path) => read_json::<BasisPlan>(&path, "plan")?,
                None => default_plan(basis, spline.knots.len()),
            };
            let net = spline1d::compile_two_sided(&spline, &plan)?;
            json::write_file(&out, &net)?;
            Ok(())
        }
        Command::Construct { grid, n, target, out } => {
            let per_axis = parse_grid(&grid, n)?;
            let grid = GridSpec::new(n, per_axis)
                .map_err(|e| CliError::validation(e.to_string()))?;
            let target: PiecewiseLinear = read_json(&target, "target")?;
            let aligned = align_target_to_grid(&grid, &target)?;
            let realization = construct::realize_grid(&grid, &aligned)?;
            json::write_file(&out, &realization.network())?;
            Ok(())
        }
        Command::Approximate { function, m, n, out, report, samples } => {
            let grid = GridSpec::new(n, vec![m; n])
                .map_err(|e| CliError::validation(e.to_string()))?;
            let (realization, fit) = if let Some(path) = function.strip_prefix("file:") {
                let pl: PiecewiseLinear = read_json(Path::new(path), "target")?;
                if pl.arrangement.n != n {
                    return Err(CliError::validation("file target dimension mismatch"));
                }
                construct::approximate_c1(
                    move |x| pl.eval(x).expect("point inside the box"),
                    &grid,
                    samples,
                )
            } else {
                let f = trainer::builtin(&function)
                    .map_err(|e| CliError::validation(e.to_string()))?;
                construct::approximate_c1(f, &grid, samples)
            };
            json::write_file(&out, &realization.network())?;
            if let Some(path) = report {
                json::write_file(&path, &fit)?;
            }
            println!("epsilon {:.6e} over {} samples", fit.epsilon, fit.samples);
            Ok(())
        }
        Command::MakeData { function, n, step, out } => {
            let data = trainer::make_dataset(&function, n, step)?;
            write_csv(&out, &data)?;
            Ok(())
        }
        Command::Train { data, units, lr, steps, seed, out, report } => {
            let data = read_csv(&data)?;
            let cfg = TrainConfig::new(units, lr, steps, seed);
            match trainer::train(&data, &cfg) {
                Ok((net, fit)) => {
                    json::write_file(&out, &net)?;
                    if let Some(path) = report {
                        json::write_file(&path, &fit)?;
                    }
                    println!("epsilon {:.6e} over {} samples", fit.epsilon, fit.samples);
                    Ok(())
                }
                Err(TrainError::Diverged { step, report: partial }) => {
                    if let Some(path) = report {
                        json::write_file(&path, &*partial)?;
                    }
                    Err(CliError::numeric(format!("training diverged at step {step}")))
                }
                Err(other) => Err(other.into()),
            }
        }
        Command::Analyze { net, report, svg: svg_path } => {
            let net: ReluNetwork = read_json(&net, "network")?;
            let analysis = analyzer::analyze(&net);
            json::write_file(&report, &analysis.json())?;
            if let Some(path) = svg_path {
                let drawing = svg::render(&net).map_err(CliError::validation)?;
                std::fs::write(path, drawing)?;
            }
            println!(
                "units {} orders {} coverage {:.3} max_jump {:.3e}",
                net.theta(),
                analysis.forest.orders.len(),
                analysis.coverage.coverage,
                analysis.continuity.max_jump
            );
            Ok(())
        }
        Command::Verify { net, target, samples, seed } => {
            let net: ReluNetwork = read_json(&net, "network")?;
            let target = load_verify_target(&target, net.n)?;
            let mut rng = SplitMix64::new(seed);
            let mut targets = Vec::with_capacity(samples);
            let mut predictions = Vec::with_capacity(samples);
            let mut max_abs_err = 0.0f64;
            for _ in 0..samples {
                let x: Vec<f64> = (0..net.n).map(|_| rng.next_f64()).collect();
                let t = match &target {
                    VerifyTarget::Spline(s) => s.eval(x[0]),
                    VerifyTarget::Piecewise(pl) => {
                        pl.eval(&x).expect("sample inside the box")
                    }
                    VerifyTarget::Builtin(f) => f(&x),
                };
                let p = net.eval(&x);
                max_abs_err = max_abs_err.max((t - p).abs());
                targets.push(t);
                predictions.push(p);
            }
            let epsilon = trainer::relative_error(&targets, &predictions)
                .map_err(CliError::from)?;
            let out = serde_json::json!({
                "max_abs_err": max_abs_err,
                "epsilon": epsilon,
            });
            println!("{}", json::to_string(&out).expect("report serializes"));
            Ok(())
        }
        Command::Eval { net, point } => {
            let net: ReluNetwork = read_json(&net, "network")?;
            let x = parse_floats(&point)?;
            if x.len() != net.n {
                return Err(CliError::validation(format!(
                    "point has {} coordinates, network expects {}",
                    x.len(),
                    net.n
                )));
            }
            println!("{}", json::to_string(&net.eval(&x)).expect("float serializes"));
            Ok(())
        }
    }
}

/// Default plan per basis family: added plans prefer the minimal two-knot
/// form, substituted plans flip the middle knot, compound plans flip the
/// first knot and make the last bidirectional.
fn default_plan(basis: BasisArg, knot_count: usize) -> BasisPlan {
    match basis {
        BasisArg::OneSided => BasisPlan::one_sided(),
        BasisArg::Added => BasisPlan::minimal_added(knot_count).unwrap_or_else(|| {
            let mut plan = BasisPlan::one_sided();
            plan.kind = BasisKind::TwoSidedAdded;
            plan.bidirectional_knots = (0..knot_count.min(1)).collect();
            plan
        }),
        BasisArg::Substituted => BasisPlan::substituted([knot_count / 2]),
        BasisArg::Compound => {
            BasisPlan::compound([0], if knot_count > 1 { vec![knot_count - 1] } else { vec![] })
        }
    }
}
