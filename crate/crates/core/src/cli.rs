//! Command-line front end.
//!
//! Every subcommand writes CSV, JSON or `key = value` text to `--out` or the
//! supplied writer. Exit status is 0 on success, 2 for rejected input and 3
//! for solver failures.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::{Map, Value};

use crate::density::{
    fmt_f64, mcp_validate_with, random_density_with, read_density, write_density, MCPDensity, ModelDensity, ModelKind,
    DEFAULT_VALIDATION_TOL,
};
use crate::gap::{GapResult, GapSolver};
use crate::geometry::{McpSpace, Params, Tolerances};
use crate::oracle::{minimize_gap, DiscreteProblem, DEFAULT_MESH, DEFAULT_RESTARTS};
use crate::pruefer::reconstruct_eigenfunction;
use crate::ptrig::{pi_p, PExponent, PTrig};
use crate::{Error, Result};

/// Version of the JSON layout emitted by every subcommand.
pub const JSON_SCHEMA: u64 = 1;

/// Exponents covered by `trig --selftest`.
pub const SELFTEST_EXPONENTS: [f64; 5] = [1.2, 1.5, 2.0, 3.0, 4.5];
const SELFTEST_POINTS: usize = 10_000;
const SELFTEST_TOL: f64 = 1e-10;
const SCALING_TOL: f64 = 1e-5;
const INEQUALITY_REL: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "pgap", version, about = "Sharp p-spectral gaps of one-dimensional MCP(K,N) spaces")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sharp gap of a model space, or the gap of a density file.
    Gap(GapArgs),
    /// Sharp gaps over a parameter grid.
    Sweep(SweepArgs),
    /// Generalized trigonometric functions.
    Trig(TrigArgs),
    /// Density files: validation and generation.
    #[command(subcommand)]
    Density(DensityCommand),
    /// Eigenfunction samples reconstructed from the phase.
    Eigenfunction(EigenfunctionArgs),
    /// Discrete Rayleigh-quotient minimizer.
    Oracle(OracleArgs),
    /// Property checks with worst-case margins.
    Audit(AuditArgs),
}

/// A diameter, or `max` for the Bonnet–Myers bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Diameter {
    Value(f64),
    Max,
}

impl FromStr for Diameter {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s.eq_ignore_ascii_case("max") {
            return Ok(Diameter::Max);
        }
        s.parse::<f64>().map(Diameter::Value).map_err(|e| format!("{e}: expected a number or `max`"))
    }
}

impl Diameter {
    fn space(self, curvature: f64, dimension: f64) -> Result<McpSpace> {
        match self {
            Diameter::Value(d) => McpSpace::new(curvature, dimension, d),
            Diameter::Max => McpSpace::maximal(curvature, dimension),
        }
    }
}

#[derive(Debug, Clone, Args)]
struct SpaceArgs {
    /// Curvature bound K.
    #[arg(long = "K", allow_hyphen_values = true)]
    k: f64,
    /// Dimension bound N > 1.
    #[arg(long = "N")]
    n: f64,
    /// Diameter D, or `max`.
    #[arg(long = "D")]
    d: Diameter,
}

impl SpaceArgs {
    fn space(&self) -> Result<McpSpace> {
        self.d.space(self.k, self.n)
    }
}

#[derive(Debug, Clone, Args)]
struct ProblemArgs {
    /// Exponent p > 1.
    #[arg(long)]
    p: f64,
    #[command(flatten)]
    space: SpaceArgs,
    /// Relative width of the eigenvalue bracket.
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
}

impl ProblemArgs {
    fn params(&self) -> Result<Params> {
        let tol = Tolerances { eigen_rel: self.tol, ..Tolerances::default() };
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::InvalidParameter(format!("--tol {} must lie in (0, 1)", self.tol)));
        }
        Ok(Params { p: PExponent::new(self.p)?, space: self.space.space()?, tol })
    }
}

#[derive(Debug, Clone, Copy, Args)]
struct FormatArgs {
    #[arg(long, conflicts_with = "csv")]
    json: bool,
    #[arg(long)]
    csv: bool,
}

impl FormatArgs {
    fn format(self) -> Format {
        if self.json {
            Format::Json
        } else if self.csv {
            Format::Csv
        } else {
            Format::Text
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Format {
    Text,
    Json,
    Csv,
}

#[derive(Debug, Args)]
struct GapArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    /// Density file (`x,log_h,log_deriv`); the gap of that density is computed.
    #[arg(long)]
    density: Option<PathBuf>,
    /// Model gap at exactly D instead of the infimum over D' ≤ D (differs only for K > 0).
    #[arg(long, conflicts_with = "density")]
    hat: bool,
    #[command(flatten)]
    format: FormatArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long = "p-list", value_delimiter = ',', required = true)]
    p_list: Vec<f64>,
    #[arg(long = "K-list", value_delimiter = ',', allow_hyphen_values = true, required = true)]
    k_list: Vec<f64>,
    #[arg(long = "N-list", value_delimiter = ',', required = true)]
    n_list: Vec<f64>,
    #[arg(long = "D-list", value_delimiter = ',', required = true)]
    d_list: Vec<f64>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    /// Adds an `oracle_lambda` column from the Rayleigh minimizer on the minimizing model.
    #[arg(long)]
    oracle: bool,
    #[arg(long = "M", default_value_t = DEFAULT_MESH)]
    mesh: usize,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    restarts: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TrigEval {
    Sin,
    Cos,
    Pi,
}

#[derive(Debug, Args)]
struct TrigArgs {
    #[arg(long, required_unless_present = "selftest")]
    p: Option<f64>,
    #[arg(long, value_enum, required_unless_present = "selftest")]
    eval: Option<TrigEval>,
    #[arg(long, allow_hyphen_values = true)]
    t: Option<f64>,
    /// Max identity violation over 10^4 points for each of p ∈ {1.2, 1.5, 2, 3, 4.5}.
    #[arg(long, conflicts_with_all = ["p", "eval", "t"])]
    selftest: bool,
}

#[derive(Debug, Subcommand)]
enum DensityCommand {
    /// Checks a density file against the MCP(K,N) bounds; exit 2 on failure.
    Validate(ValidateArgs),
    /// Random MCP density from a seeded Bernstein mixing profile.
    Random(RandomArgs),
    /// Model density `h_{K,N,D}` or one of its two rigidity branches.
    Model(ModelArgs),
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    file: PathBuf,
    #[command(flatten)]
    space: SpaceArgs,
    #[arg(long, default_value_t = DEFAULT_VALIDATION_TOL)]
    tol: f64,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct RandomArgs {
    #[arg(long)]
    seed: u64,
    /// Generator stream; distinct streams give independent densities.
    #[arg(long, default_value_t = 0)]
    stream: u64,
    #[command(flatten)]
    space: SpaceArgs,
    #[arg(long, default_value_t = 4)]
    degree: usize,
    /// Number of grid cells.
    #[arg(long, default_value_t = 4096)]
    grid: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    Model,
    H1,
    H2,
}

impl From<KindArg> for ModelKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Model => ModelKind::Model,
            KindArg::H1 => ModelKind::H1,
            KindArg::H2 => ModelKind::H2,
        }
    }
}

#[derive(Debug, Args)]
struct ModelArgs {
    #[command(flatten)]
    space: SpaceArgs,
    #[arg(long, value_enum, default_value_t = KindArg::Model)]
    kind: KindArg,
    #[arg(long, default_value_t = 4096)]
    grid: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EigenfunctionArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    density: Option<PathBuf>,
    /// Eigenvalue to shoot at; defaults to the computed gap.
    #[arg(long)]
    lambda: Option<f64>,
    /// Cells on each side of D/2.
    #[arg(long, default_value_t = 2048)]
    nodes: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[command(flatten)]
    problem: ProblemArgs,
    #[arg(long)]
    density: Option<PathBuf>,
    #[arg(long = "M", default_value_t = DEFAULT_MESH)]
    mesh: usize,
    #[arg(long, default_value_t = DEFAULT_RESTARTS)]
    restarts: usize,
    /// Also runs the shooting solver and reports the relative difference.
    #[arg(long)]
    compare: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct AuditArgs {
    #[arg(long, default_value_t = 2.0)]
    p: f64,
    #[arg(long = "K", default_value_t = -1.0, allow_hyphen_values = true)]
    k: f64,
    #[arg(long = "N", default_value_t = 3.0)]
    n: f64,
    #[arg(long = "D", default_value = "1")]
    d: Diameter,
    /// Number of random densities.
    #[arg(long, default_value_t = 50)]
    seeds: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 4)]
    degree: usize,
    #[arg(long)]
    json: bool,
}

/// Ordered fields of one output record.
#[derive(Debug, Clone, Default)]
struct Record(Vec<(&'static str, Field)>);

#[derive(Debug, Clone)]
enum Field {
    Num(f64),
    Int(u64),
    Bool(bool),
    Str(String),
    Null,
}

impl Field {
    fn opt(v: Option<f64>) -> Self {
        v.map_or(Field::Null, Field::Num)
    }

    fn text(&self) -> String {
        match self {
            Field::Num(v) => fmt_f64(*v),
            Field::Int(v) => v.to_string(),
            Field::Bool(v) => v.to_string(),
            Field::Str(s) => s.clone(),
            Field::Null => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Field::Num(v) => json_number(*v),
            Field::Int(v) => Value::from(*v),
            Field::Bool(v) => Value::Bool(*v),
            Field::Str(s) => Value::String(s.clone()),
            Field::Null => Value::Null,
        }
    }
}

/// 17 significant digits, kept verbatim; non-finite values become `null`.
fn json_number(v: f64) -> Value {
    if !v.is_finite() {
        return Value::Null;
    }
    serde_json::from_str::<serde_json::Number>(&fmt_f64(v)).map(Value::Number).unwrap_or(Value::Null)
}

impl Record {
    fn push(&mut self, key: &'static str, f: Field) -> &mut Self {
        self.0.push((key, f));
        self
    }

    fn json(&self) -> Value {
        let mut m = Map::new();
        m.insert("schema".into(), Value::from(JSON_SCHEMA));
        for (k, f) in &self.0 {
            m.insert((*k).into(), f.json());
        }
        Value::Object(m)
    }

    fn write(&self, format: Format, out: &mut dyn Write) -> Result<()> {
        match format {
            Format::Json => writeln!(out, "{}", pretty(&self.json()))?,
            Format::Csv => {
                let mut w = csv::Writer::from_writer(out);
                w.write_record(self.0.iter().map(|(k, _)| *k)).map_err(csv_err)?;
                w.write_record(self.0.iter().map(|(_, f)| f.text())).map_err(csv_err)?;
                w.flush()?;
            }
            Format::Text => {
                for (k, f) in &self.0 {
                    writeln!(out, "{k} = {}", f.text())?;
                }
            }
        }
        Ok(())
    }
}

fn pretty(v: &Value) -> String {
    serde_json::to_string_pretty(v).expect("JSON values always serialize")
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { stderr } else { stdout };
            let _ = write!(sink, "{text}");
            return code;
        }
    };
    match dispatch(cli.command, stdout) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(cmd: Command, stdout: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Gap(a) => gap(a, stdout),
        Command::Sweep(a) => sweep(a, stdout),
        Command::Trig(a) => trig(a, stdout),
        Command::Density(DensityCommand::Validate(a)) => validate(a, stdout),
        Command::Density(DensityCommand::Random(a)) => random(a, stdout),
        Command::Density(DensityCommand::Model(a)) => model(a, stdout),
        Command::Eigenfunction(a) => eigenfunction(a, stdout),
        Command::Oracle(a) => oracle(a, stdout),
        Command::Audit(a) => audit(a, stdout),
    }
}

/// Runs `f` on `--out` when given, otherwise on `stdout`.
fn with_output<F>(path: Option<&Path>, stdout: &mut dyn Write, f: F) -> Result<()>
where
    F: FnOnce(&mut dyn Write) -> Result<()>,
{
    match path {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            f(&mut w)?;
            w.flush()?;
            Ok(())
        }
        None => {
            f(stdout)?;
            stdout.flush()?;
            Ok(())
        }
    }
}

fn load_density(path: &Path, space: &McpSpace) -> Result<MCPDensity> {
    read_density(File::open(path)?, space)
}

fn gap_record(params: &Params, r: &GapResult) -> Record {
    let mut rec = Record::default();
    rec.push("p", Field::Num(params.p.get()))
        .push("K", Field::Num(params.space.curvature()))
        .push("N", Field::Num(params.space.dimension()))
        .push("D", Field::Num(params.space.diameter()))
        .push("lambda", Field::Num(r.lambda))
        .push("method", Field::Str(r.method.as_str().into()))
        .push("minimizing_Dprime", Field::opt(r.minimizing_diameter))
        .push("iterations", Field::Int(r.iterations as u64));
    rec
}

fn gap(a: GapArgs, stdout: &mut dyn Write) -> Result<i32> {
    let params = a.problem.params()?;
    let solver = GapSolver::new(params);
    let result = match (&a.density, a.hat) {
        (Some(path), _) => solver.lambda_of_density(&load_density(path, &params.space)?)?,
        (None, true) => solver.lambda_hat()?,
        (None, false) => solver.lambda_sharp()?,
    };
    let mut rec = gap_record(&params, &result);
    if a.format.format() != Format::Csv {
        rec.push("bracket_lo", Field::Num(result.bracket.0))
            .push("bracket_hi", Field::Num(result.bracket.1))
            .push("rhs_evals", Field::Int(result.diagnostics.rhs_evals as u64));
    }
    with_output(a.out.as_deref(), stdout, |w| rec.write(a.format.format(), w))?;
    Ok(0)
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

fn sweep(a: SweepArgs, stdout: &mut dyn Write) -> Result<i32> {
    let mut grid = Vec::new();
    for &p in &sorted(a.p_list.clone()) {
        for &k in &sorted(a.k_list.clone()) {
            for &n in &sorted(a.n_list.clone()) {
                for &d in &sorted(a.d_list.clone()) {
                    let params = Params::new(p, k, n, d)?;
                    grid.push(params.with_tolerances(Tolerances { eigen_rel: a.tol, ..params.tol }));
                }
            }
        }
    }
    if a.oracle && a.mesh < 2 {
        return Err(Error::InvalidParameter(format!("--M {} is too small", a.mesh)));
    }

    let rows: Vec<Record> = grid
        .par_iter()
        .map(|params| -> Result<Record> {
            let r = GapSolver::new(*params).lambda_sharp()?;
            let mut rec = gap_record(params, &r);
            if a.oracle {
                let dp = r.minimizing_diameter.unwrap_or(params.space.diameter());
                let model = ModelDensity::new(params.space.with_diameter(dp)?, ModelKind::Model);
                let prob = DiscreteProblem::from_density(&model, params.p, a.mesh)?;
                rec.push("oracle_lambda", Field::Num(minimize_gap(&prob, a.restarts)?.value));
            }
            Ok(rec)
        })
        .collect::<Result<_>>()?;

    with_output(a.out.as_deref(), stdout, |out| {
        let mut w = csv::Writer::from_writer(out);
        if let Some(first) = rows.first() {
            w.write_record(first.0.iter().map(|(k, _)| *k)).map_err(csv_err)?;
        }
        for row in &rows {
            w.write_record(row.0.iter().map(|(_, f)| f.text())).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    })?;
    Ok(0)
}

/// Worst identity violation per exponent, and the p = 2 comparison with `sin`.
fn trig_selftest() -> (Vec<(f64, f64)>, f64) {
    let per_p: Vec<(f64, f64)> = SELFTEST_EXPONENTS
        .iter()
        .map(|&p| {
            let tr = PTrig::new(PExponent::new(p).expect("fixed exponents exceed 1"));
            (p, tr.identity_violation(-2.0 * tr.pi(), 2.0 * tr.pi(), SELFTEST_POINTS))
        })
        .collect();
    let two = PTrig::new(PExponent::new(2.0).expect("2 exceeds 1"));
    let classical = (0..SELFTEST_POINTS)
        .map(|i| {
            let t = -2.0 * std::f64::consts::PI + 4.0 * std::f64::consts::PI * i as f64 / (SELFTEST_POINTS - 1) as f64;
            (two.sin(t) - t.sin()).abs()
        })
        .fold((two.pi() - std::f64::consts::PI).abs(), f64::max);
    (per_p, classical)
}

fn trig(a: TrigArgs, stdout: &mut dyn Write) -> Result<i32> {
    if a.selftest {
        let (per_p, classical) = trig_selftest();
        let worst = per_p.iter().map(|x| x.1).fold(0.0, f64::max);
        for (p, v) in &per_p {
            writeln!(stdout, "p = {p}: max identity violation = {}", fmt_f64(*v))?;
        }
        writeln!(stdout, "p = 2: max |sin_2 - sin| and |pi_2 - pi| = {}", fmt_f64(classical))?;
        writeln!(stdout, "max identity violation = {}", fmt_f64(worst))?;
        let ok = worst <= SELFTEST_TOL && classical <= 1e-12;
        return Ok(if ok { 0 } else { 3 });
    }
    let (p, eval) = (a.p.expect("required by clap"), a.eval.expect("required by clap"));
    let p = PExponent::new(p)?;
    let value = match eval {
        TrigEval::Pi => pi_p(p),
        TrigEval::Sin | TrigEval::Cos => {
            let t = a.t.ok_or_else(|| Error::InvalidParameter("--t is required for sin and cos".into()))?;
            let tr = PTrig::new(p);
            if eval == TrigEval::Sin {
                tr.sin(t)
            } else {
                tr.cos(t)
            }
        }
    };
    writeln!(stdout, "{}", fmt_f64(value))?;
    Ok(0)
}

fn validate(a: ValidateArgs, stdout: &mut dyn Write) -> Result<i32> {
    let space = a.space.space()?;
    let density = load_density(&a.file, &space)?;
    let report = mcp_validate_with(&density, &space, a.tol)?;
    let mut rec = Record::default();
    rec.push("passed", Field::Bool(report.passed))
        .push("ratio_violation", Field::Num(report.ratio_violation))
        .push("derivative_violation", Field::Num(report.derivative_violation))
        .push("pairs_checked", Field::Int(report.pairs_checked as u64))
        .push("worst_at", Field::opt(report.worst_at))
        .push("tolerance", Field::Num(report.tolerance));
    rec.write(if a.json { Format::Json } else { Format::Text }, stdout)?;
    Ok(if report.passed { 0 } else { 2 })
}

fn nodes_from_cells(cells: usize) -> Result<usize> {
    if cells < 2 {
        return Err(Error::InvalidParameter(format!("--grid {cells} must be at least 2")));
    }
    Ok(cells + 1)
}

fn random(a: RandomArgs, stdout: &mut dyn Write) -> Result<i32> {
    let space = a.space.space()?;
    let density = random_density_with(space, a.seed, a.stream, a.degree, nodes_from_cells(a.grid)?)?;
    with_output(a.out.as_deref(), stdout, |w| write_density(&density, w))?;
    Ok(0)
}

fn model(a: ModelArgs, stdout: &mut dyn Write) -> Result<i32> {
    let space = a.space.space()?;
    let density = MCPDensity::sample(&ModelDensity::new(space, a.kind.into()), nodes_from_cells(a.grid)?)?;
    with_output(a.out.as_deref(), stdout, |w| write_density(&density, w))?;
    Ok(0)
}

fn eigenfunction(a: EigenfunctionArgs, stdout: &mut dyn Write) -> Result<i32> {
    let params = a.problem.params()?;
    let solver = GapSolver::new(params);
    let (traj, density): (_, Box<dyn crate::density::LogDensity>) = match &a.density {
        Some(path) => {
            let h = load_density(path, &params.space)?;
            let lambda = match a.lambda {
                Some(l) => l,
                None => solver.lambda_of_density(&h)?.lambda,
            };
            (solver.density_trajectory(&h, lambda)?, Box::new(h))
        }
        None => {
            let lambda = match a.lambda {
                Some(l) => l,
                None => solver.lambda_hat()?.lambda,
            };
            let h = ModelDensity::new(params.space, ModelKind::Model);
            (solver.model_trajectory(lambda)?, Box::new(h))
        }
    };
    let ef = reconstruct_eigenfunction(&traj, density.as_ref(), solver.trig(), a.nodes)?;
    with_output(a.out.as_deref(), stdout, |out| {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["x", "phi", "u", "uprime"]).map_err(csv_err)?;
        for i in 0..ef.xs.len() {
            w.write_record([fmt_f64(ef.xs[i]), fmt_f64(ef.phi[i]), fmt_f64(ef.u[i]), fmt_f64(ef.du[i])])
                .map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    })?;
    Ok(0)
}

fn oracle(a: OracleArgs, stdout: &mut dyn Write) -> Result<i32> {
    let params = a.problem.params()?;
    let solver = GapSolver::new(params);
    let file = a.density.as_deref().map(|p| load_density(p, &params.space)).transpose()?;
    let model = ModelDensity::new(params.space, ModelKind::Model);
    let density: &dyn crate::density::LogDensity = match &file {
        Some(h) => h,
        None => &model,
    };
    let prob = DiscreteProblem::from_density(density, params.p, a.mesh)?;
    let res = minimize_gap(&prob, a.restarts)?;

    let mut rec = Record::default();
    rec.push("p", Field::Num(params.p.get()))
        .push("K", Field::Num(params.space.curvature()))
        .push("N", Field::Num(params.space.dimension()))
        .push("D", Field::Num(params.space.diameter()))
        .push("M", Field::Int(a.mesh as u64))
        .push("restarts", Field::Int(a.restarts as u64))
        .push("oracle_lambda", Field::Num(res.value))
        .push("spread", Field::Num(res.spread))
        .push("constraint_residual", Field::Num(res.constraint_residual))
        .push("gradient_ratio", Field::Num(res.gradient_ratio))
        .push("converged", Field::Bool(res.converged))
        .push("best_restart", Field::Int(res.best as u64));
    if a.compare {
        let shot = match &file {
            Some(h) => solver.lambda_of(h)?,
            None => solver.lambda_hat()?,
        };
        rec.push("lambda", Field::Num(shot.lambda))
            .push("relative_difference", Field::Num((res.value - shot.lambda).abs() / shot.lambda));
    }
    rec.write(if a.json { Format::Json } else { Format::Text }, stdout)?;
    Ok(0)
}

/// One audited property.
#[derive(Debug, Clone)]
struct Check {
    name: &'static str,
    passed: bool,
    /// Worst observed value of the checked quantity.
    worst: f64,
    threshold: f64,
    cases: usize,
}

impl Check {
    fn record(&self) -> Record {
        let mut rec = Record::default();
        rec.push("property", Field::Str(self.name.into()))
            .push("passed", Field::Bool(self.passed))
            .push("worst", Field::Num(self.worst))
            .push("threshold", Field::Num(self.threshold))
            .push("cases", Field::Int(self.cases as u64));
        rec
    }
}

fn audit(a: AuditArgs, stdout: &mut dyn Write) -> Result<i32> {
    let p = PExponent::new(a.p)?;
    let space = a.d.space(a.k, a.n)?;
    let params = Params { p, space, tol: Tolerances::default() };
    let solver = GapSolver::new(params);
    let mut checks = Vec::new();

    // trig identity, including the audited exponent
    let mut exps = SELFTEST_EXPONENTS.to_vec();
    exps.push(a.p);
    let worst_trig = sorted(exps)
        .iter()
        .map(|&q| {
            let tr = PTrig::new(PExponent::new(q)?);
            Ok(tr.identity_violation(-2.0 * tr.pi(), 2.0 * tr.pi(), SELFTEST_POINTS))
        })
        .collect::<Result<Vec<f64>>>()?
        .into_iter()
        .fold(0.0, f64::max);
    checks.push(Check {
        name: "trig-identity",
        passed: worst_trig <= SELFTEST_TOL,
        worst: worst_trig,
        threshold: SELFTEST_TOL,
        cases: SELFTEST_EXPONENTS.len() + 1,
    });

    // monotonicity along D·{1/2, 1, 2, 4}, capped at the Bonnet–Myers bound
    let bound = space.diameter_bound();
    let diameters = sorted(
        [0.5, 1.0, 2.0, 4.0].iter().map(|c| (c * space.diameter()).min(bound)).collect(),
    );
    let mono = solver.monotonicity_audit(&diameters)?;
    checks.push(Check {
        name: "monotonicity",
        passed: mono.passed,
        worst: mono.min_relative_drop,
        threshold: if space.curvature() <= 0.0 { mono.margin } else { 0.0 },
        cases: mono.rows.len(),
    });

    // λ̂_{c²K,N,D} = c^p λ̂_{K,N,cD}
    let mut worst_scale = 0.0f64;
    let mut scale_cases = 0;
    for c in [0.5, 2.0] {
        let stretched = match space.with_diameter(c * space.diameter()) {
            Ok(s) if c * space.diameter() <= bound => s,
            _ => continue,
        };
        let squeezed = McpSpace::new(c * c * space.curvature(), space.dimension(), space.diameter())?;
        let lhs = GapSolver::new(params.with_space(squeezed)).lambda_hat()?.lambda;
        let rhs = c.powf(a.p) * GapSolver::new(params.with_space(stretched)).lambda_hat()?.lambda;
        worst_scale = worst_scale.max((lhs - rhs).abs() / rhs);
        scale_cases += 1;
    }
    checks.push(Check {
        name: "scaling",
        passed: worst_scale <= SCALING_TOL,
        worst: worst_scale,
        threshold: SCALING_TOL,
        cases: scale_cases,
    });

    // λ^{p,h} ≥ λ̂ on random densities, one generator stream per density
    let reference = solver.lambda_hat()?.lambda;
    let margins: Vec<f64> = (0..a.seeds)
        .into_par_iter()
        .map(|k| -> Result<f64> {
            let h = random_density_with(space, a.seed, k, a.degree, crate::density::DEFAULT_NODES)?;
            Ok((solver.lambda_of_density(&h)?.lambda - reference) / reference)
        })
        .collect::<Result<_>>()?;
    let worst_ineq = margins.iter().copied().fold(f64::INFINITY, f64::min);
    checks.push(Check {
        name: "random-inequality",
        passed: margins.iter().all(|&m| m >= -INEQUALITY_REL),
        worst: worst_ineq,
        threshold: -INEQUALITY_REL,
        cases: margins.len(),
    });

    let passed = checks.iter().all(|c| c.passed);
    if a.json {
        let mut m = Map::new();
        m.insert("schema".into(), Value::from(JSON_SCHEMA));
        m.insert("passed".into(), Value::Bool(passed));
        m.insert("reference_lambda".into(), json_number(reference));
        m.insert(
            "properties".into(),
            Value::Array(
                checks
                    .iter()
                    .map(|c| {
                        let mut v = c.record().json();
                        if let Value::Object(o) = &mut v {
                            o.remove("schema");
                        }
                        v
                    })
                    .collect(),
            ),
        );
        writeln!(stdout, "{}", pretty(&Value::Object(m)))?;
    } else {
        for c in &checks {
            writeln!(
                stdout,
                "{} {}: worst = {}, threshold = {}, cases = {}",
                if c.passed { "PASS" } else { "FAIL" },
                c.name,
                fmt_f64(c.worst),
                fmt_f64(c.threshold),
                c.cases
            )?;
        }
    }
    Ok(if passed { 0 } else { 3 })
}
