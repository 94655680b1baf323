//! `maxsurf`: solves, lemma checks, duality round trips and uniqueness
//! experiments with CSV and `key=value` outputs.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 solver failure,
//! 3 empty level region, 4 a checked inequality or monotonicity failed.

mod expr;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use maxsurf::duality::{
    psi_of_minimal, round_trip_error, round_trip_error_maximal, u_of_maximal, DualityError,
};
use maxsurf::io::{read_mesh, read_scalar_csv, write_mesh, write_scalar_csv, Record};
use maxsurf::lorentz::verify_lemma;
use maxsurf::mesh::{build_annulus_with, build_rectangle, build_strip, AnnulusOptions, VertexClass};
use maxsurf::uniqueness::{analyze_pair, perturbation_decay, DecayOptions, UniquenessError};
use maxsurf::{Mesh, Metric, ScalarField, SolveError, SolverConfig};

use crate::expr::Expr;

#[derive(Debug)]
enum Failure {
    Usage(String),
    Solver(String),
    EmptyRegion(String),
    Check(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Solver(_) => 2,
            Failure::EmptyRegion(_) => 3,
            Failure::Check(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Solver(m) | Failure::EmptyRegion(m) | Failure::Check(m) => m,
        }
    }
}

fn usage(e: impl std::fmt::Display) -> Failure {
    Failure::Usage(e.to_string())
}

fn from_solve(e: SolveError) -> Failure {
    match e {
        SolveError::Field(_) | SolveError::InvalidConfig(_) | SolveError::EmptySubset => usage(e),
        other => Failure::Solver(other.to_string()),
    }
}

fn from_uniqueness(e: UniquenessError) -> Failure {
    match e {
        UniquenessError::Solve(s) => from_solve(s),
        UniquenessError::EmptyRegion => Failure::EmptyRegion("solutions coincide at this level".into()),
        other => usage(other),
    }
}

#[derive(Parser, Debug)]
#[command(name = "maxsurf", version, about = "Maximal surface graphs: solver and uniqueness experiments")]
#[command(args_override_self = true)]
struct Cli {
    /// Flat `key=value` file; each entry acts as `--key value` placed before the command-line flags.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Solve the Dirichlet problem and write the solution, mesh and report.
    Solve(SolveArgs),
    /// Sample the monotonicity inequality for a gradient margin.
    Lemma(LemmaArgs),
    /// Map a solution to its conjugate and measure the round trip.
    Dualize(DualizeArgs),
    /// Flux inequality and comparison ODE for two solutions.
    Uniqueness(UniquenessArgs),
    /// Decay of an end perturbation on strips of increasing length.
    Decay(DecayArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum MetricArg {
    Lorentz,
    Euclid,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Metric {
        match m {
            MetricArg::Lorentz => Metric::Lorentz,
            MetricArg::Euclid => Metric::Euclid,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Ring {
    None,
    Inner,
    Outer,
}

#[derive(Args, Debug)]
struct MeshArgs {
    /// Mesh file as written by `solve`.
    #[arg(long, value_name = "FILE", conflicts_with = "shape")]
    mesh: Option<PathBuf>,
    /// `rect:LxH`, `strip:LxH` (artificial ends) or `annulus:R1:R2`.
    #[arg(long)]
    shape: Option<String>,
    /// Mesh size for `--shape`.
    #[arg(long, default_value_t = 0.125)]
    h: f64,
    /// Annulus ring treated as an artificial truncation boundary.
    #[arg(long, value_enum, default_value_t = Ring::None)]
    artificial: Ring,
}

fn parse_pair(s: &str, sep: char) -> Option<(f64, f64)> {
    let (a, b) = s.split_once(sep)?;
    Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
}

impl MeshArgs {
    fn build(&self) -> Result<Mesh, Failure> {
        if let Some(path) = &self.mesh {
            return read_mesh(&read(path)?).map_err(usage);
        }
        let shape = self.shape.as_deref().ok_or_else(|| usage("one of --mesh or --shape is required"))?;
        let (kind, rest) = shape.split_once(':').ok_or_else(|| usage(format!("malformed shape {shape:?}")))?;
        let bad = || usage(format!("malformed shape {shape:?}"));
        if self.artificial != Ring::None && kind != "annulus" {
            return Err(usage("--artificial applies to annulus shapes only"));
        }
        let mesh = match kind {
            "rect" => {
                let (l, hh) = parse_pair(rest, 'x').ok_or_else(bad)?;
                build_rectangle(l, hh, self.h)
            }
            "strip" => {
                let (l, hh) = parse_pair(rest, 'x').ok_or_else(bad)?;
                build_strip(l, hh, self.h, true)
            }
            "annulus" => {
                let (r1, r2) = parse_pair(rest, ':').ok_or_else(bad)?;
                let mut opts = AnnulusOptions::default();
                match self.artificial {
                    Ring::Inner => opts.inner = VertexClass::Artificial,
                    Ring::Outer => opts.outer = VertexClass::Artificial,
                    Ring::None => {}
                }
                build_annulus_with(r1, r2, self.h, opts)
            }
            _ => return Err(bad()),
        };
        mesh.map_err(usage)
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))
}

fn write(path: &str, text: &str) -> Result<(), Failure> {
    fs::write(path, text).map_err(|e| usage(format!("{path}: {e}")))
}

fn field_from_expr(mesh: &Mesh, text: &str) -> Result<ScalarField, Failure> {
    let e = Expr::parse(text).map_err(usage)?;
    let f = ScalarField::from_fn(mesh, |x, y| e.eval(x, y)).map_err(usage)?;
    if f.values().iter().any(|v| !v.is_finite()) {
        return Err(usage(format!("expression {text:?} is not finite on the mesh")));
    }
    Ok(f)
}

fn field_from_csv(mesh: &Mesh, path: &Path) -> Result<ScalarField, Failure> {
    read_scalar_csv(mesh, &read(path)?).map_err(|e| usage(format!("{}: {e}", path.display())))
}

#[derive(Args, Debug)]
struct SolveArgs {
    #[command(flatten)]
    mesh: MeshArgs,
    #[arg(long, value_enum, default_value_t = MetricArg::Lorentz)]
    metric: MetricArg,
    /// Boundary data as an expression in x, y and r.
    #[arg(long, conflicts_with = "bc_file", allow_hyphen_values = true)]
    bc: Option<String>,
    /// Boundary data as a per-vertex CSV.
    #[arg(long, value_name = "FILE")]
    bc_file: Option<PathBuf>,
    /// Output prefix for `_mesh.txt`, `_solution.csv` and `_report.txt`.
    #[arg(long, default_value = "maxsurf")]
    out: String,
    /// Residual tolerance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_newton: Option<usize>,
}

fn cmd_solve(a: &SolveArgs) -> Result<(), Failure> {
    let mesh = a.mesh.build()?;
    let bc = match (&a.bc, &a.bc_file) {
        (Some(e), _) => field_from_expr(&mesh, e)?,
        (None, Some(p)) => field_from_csv(&mesh, p)?,
        (None, None) => return Err(usage("one of --bc or --bc-file is required")),
    };
    let mut cfg = SolverConfig::new(a.metric.into());
    if let Some(t) = a.tol {
        cfg.residual_tol = t;
    }
    if let Some(n) = a.max_newton {
        cfg.max_newton = n;
    }
    write(&format!("{}_mesh.txt", a.out), &write_mesh(&mesh))?;
    let (sol, failure) = match maxsurf::solver::solve(&mesh, &bc, &cfg) {
        Ok(sol) => (sol, None),
        Err(SolveError::MaxNewton(sol)) => (*sol, Some("Newton iteration limit reached")),
        Err(SolveError::Stagnation(sol)) => (*sol, Some("line search stagnated")),
        Err(e) => return Err(from_solve(e)),
    };
    write(&format!("{}_solution.csv", a.out), &write_scalar_csv(&mesh, &sol.field))?;
    let report = sol.report.to_record().to_string();
    write(&format!("{}_report.txt", a.out), &report)?;
    print!("{report}");
    match failure {
        Some(m) => Err(Failure::Solver(m.into())),
        None => Ok(()),
    }
}

#[derive(Args, Debug)]
struct LemmaArgs {
    #[arg(long)]
    eps: f64,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also write the report record to this file.
    #[arg(long)]
    out: Option<String>,
}

fn cmd_lemma(a: &LemmaArgs) -> Result<(), Failure> {
    let report = verify_lemma(a.eps, a.samples, a.seed).map_err(usage)?;
    let text = report.to_record().to_string();
    if let Some(p) = &a.out {
        write(p, &text)?;
    }
    print!("{text}");
    if report.violations == 0 {
        Ok(())
    } else {
        Err(Failure::Check(format!("{} violations", report.violations)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Direction {
    Min2max,
    Max2min,
}

#[derive(Args, Debug)]
struct DualizeArgs {
    #[command(flatten)]
    mesh: MeshArgs,
    /// Solution CSV on the mesh.
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    #[arg(long, value_enum)]
    direction: Direction,
    /// Output prefix for `_conjugate.csv` and `_roundtrip.txt`.
    #[arg(long, default_value = "maxsurf")]
    out: String,
}

fn cmd_dualize(a: &DualizeArgs) -> Result<(), Failure> {
    let mesh = a.mesh.build()?;
    let f = field_from_csv(&mesh, &a.input)?;
    let dual = |e: DualityError| usage(e);
    let (conj, err) = match a.direction {
        Direction::Min2max => (psi_of_minimal(&mesh, &f).map_err(dual)?, round_trip_error(&mesh, &f).map_err(dual)?),
        Direction::Max2min => {
            (u_of_maximal(&mesh, &f).map_err(dual)?, round_trip_error_maximal(&mesh, &f).map_err(dual)?)
        }
    };
    log::info!("round-trip error {err:e}");
    write(&format!("{}_conjugate.csv", a.out), &write_scalar_csv(&mesh, &conj))?;
    let mut r = Record::new();
    r.push("direction", format!("{:?}", a.direction).to_lowercase());
    r.push_f64("round_trip_error", err);
    write(&format!("{}_roundtrip.txt", a.out), &r.to_string())?;
    print!("{r}");
    Ok(())
}

fn parse_list(s: &str) -> Result<Vec<f64>, Failure> {
    s.split(',').map(|x| x.trim().parse::<f64>().map_err(|_| usage(format!("invalid number {x:?} in {s:?}")))).collect()
}

#[derive(Args, Debug)]
struct UniquenessArgs {
    #[command(flatten)]
    mesh: MeshArgs,
    /// First solution CSV.
    #[arg(long, value_name = "FILE", requires = "vp", conflicts_with_all = ["bc", "bc_prime"])]
    v: Option<PathBuf>,
    /// Second solution CSV.
    #[arg(long, value_name = "FILE", requires = "v")]
    vp: Option<PathBuf>,
    /// Boundary data of the first solution, solved inline.
    #[arg(long, requires = "bc_prime", allow_hyphen_values = true)]
    bc: Option<String>,
    /// Boundary data of the second solution, solved inline.
    #[arg(long, requires = "bc", allow_hyphen_values = true)]
    bc_prime: Option<String>,
    /// Relative slack before a radius is flagged.
    #[arg(long, default_value_t = 0.05)]
    tol_rel: f64,
    /// Comma-separated scan radii; the first is `r0`. Geometric by default.
    #[arg(long)]
    radii: Option<String>,
    /// Output prefix for `_scan.csv`, `_ode.csv` and `_verdict.txt`.
    #[arg(long, default_value = "maxsurf")]
    out: String,
}

fn cmd_uniqueness(a: &UniquenessArgs) -> Result<(), Failure> {
    let mesh = a.mesh.build()?;
    let (v, vp) = match (&a.v, &a.vp, &a.bc, &a.bc_prime) {
        (Some(p), Some(pp), _, _) => (field_from_csv(&mesh, p)?, field_from_csv(&mesh, pp)?),
        (_, _, Some(b), Some(bp)) => {
            let cfg = SolverConfig::lorentz();
            let v = maxsurf::solver::solve(&mesh, &field_from_expr(&mesh, b)?, &cfg).map_err(from_solve)?;
            let vp = maxsurf::solver::solve(&mesh, &field_from_expr(&mesh, bp)?, &cfg).map_err(from_solve)?;
            (v.field, vp.field)
        }
        _ => return Err(usage("give --v and --vp, or --bc and --bc-prime")),
    };
    let radii = a.radii.as_deref().map(parse_list).transpose()?;
    let run = analyze_pair(&mesh, &v, &vp, radii.as_deref(), a.tol_rel)
        .map_err(from_uniqueness)?
    .ok_or_else(|| Failure::EmptyRegion("solutions coincide at this level".into()))?;
    write(&format!("{}_scan.csv", a.out), &run.scan.to_csv())?;
    write(&format!("{}_ode.csv", a.out), &run.ode.to_csv())?;
    let record = run.to_record().to_string();
    write(&format!("{}_verdict.txt", a.out), &record)?;
    print!("{record}");
    match run.scan.first_flag() {
        Some(r) => Err(Failure::Check(format!("{} flagged radii, first at r = {r}", run.verdict.n_flags))),
        None => Ok(()),
    }
}

#[derive(Args, Debug)]
struct DecayArgs {
    /// Comma-separated strictly increasing strip lengths.
    #[arg(long)]
    lengths: String,
    /// Amplitude of the end perturbation.
    #[arg(long, default_value_t = 1.0)]
    s: f64,
    /// Shared boundary data.
    #[arg(long, default_value = "0", allow_hyphen_values = true)]
    phi: String,
    #[arg(long, default_value_t = 2.0)]
    height: f64,
    #[arg(long, default_value_t = 0.125)]
    h: f64,
    #[arg(long, value_enum, default_value_t = MetricArg::Lorentz)]
    metric: MetricArg,
    /// Output prefix for `_decay.csv`.
    #[arg(long, default_value = "maxsurf")]
    out: String,
}

fn cmd_decay(a: &DecayArgs) -> Result<(), Failure> {
    let lengths = parse_list(&a.lengths)?;
    let phi = Expr::parse(&a.phi).map_err(usage)?;
    let opts = DecayOptions { height: a.height, h: a.h, config: SolverConfig::new(a.metric.into()) };
    let table = perturbation_decay(&lengths, |x, y| phi.eval(x, y), a.s, &opts).map_err(from_uniqueness)?;
    let csv = table.to_csv();
    write(&format!("{}_decay.csv", a.out), &csv)?;
    print!("{csv}");
    if table.is_strictly_decreasing() {
        Ok(())
    } else {
        Err(Failure::Check("center differences are not strictly decreasing".into()))
    }
}

/// Splices `--config FILE` entries in front of the subcommand's own flags.
fn expand_config(args: Vec<OsString>) -> Result<Vec<OsString>, Failure> {
    let mut rest = Vec::with_capacity(args.len());
    let mut config = None;
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy().into_owned();
        if s == "--config" {
            config = Some(it.next().ok_or_else(|| usage("--config needs a file"))?);
        } else if let Some(p) = s.strip_prefix("--config=") {
            config = Some(OsString::from(p));
        } else {
            rest.push(a);
        }
    }
    let Some(path) = config else { return Ok(rest) };
    let record = Record::parse(&read(Path::new(&path))?).map_err(usage)?;
    let injected: Vec<OsString> = record
        .entries()
        .iter()
        .flat_map(|(k, v)| [OsString::from(format!("--{}", k.replace('_', "-"))), OsString::from(v)])
        .collect();
    // the subcommand is the first bare word after the program name
    let at = rest.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')).map_or(rest.len(), |i| i + 2);
    let mut out: Vec<OsString> = rest[..at].to_vec();
    out.extend(injected);
    out.extend(rest[at..].iter().cloned());
    Ok(out)
}

fn run(args: Vec<OsString>) -> Result<(), Failure> {
    let args = expand_config(args)?;
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return if code == 0 { Ok(()) } else { Err(Failure::Usage(String::new())) };
        }
    };
    match &cli.command {
        Command::Solve(a) => cmd_solve(a),
        Command::Lemma(a) => cmd_lemma(a),
        Command::Dualize(a) => cmd_dualize(a),
        Command::Uniqueness(a) => cmd_uniqueness(a),
        Command::Decay(a) => cmd_decay(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message().is_empty() {
                eprintln!("maxsurf: {}", f.message());
            }
            ExitCode::from(f.code())
        }
    }
}
