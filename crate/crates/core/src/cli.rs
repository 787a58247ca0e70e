//! Command-line front end: single bounds, sweeps, figure CSVs and oracle runs.
//!
//! Output is assembled in memory in a fixed order before it is written, so
//! repeated invocations with the same flags are byte-identical whatever the
//! worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde_json::Value;

use crate::asymptotic::{
    asympt_lower_gaussian, asympt_lower_gaussian_saddle, asympt_upper, d1_approx, noiseless_limit, tanaka_capacity,
    LoadPoint, SaddleSearch,
};
use crate::error::Error;
use crate::finite_bounds::{
    conjectured_upper, noiseless_lower, noisy_lower_envelope_with, noisy_lower_gamma_with, BoundValue, Eq6Mode,
    GammaSearch, SystemSize,
};
use crate::noise::{EbN0, NoiseModel};
use crate::numerics::QuadratureConfig;
use crate::oracle::{
    bpsk_reference, exact_noiseless_capacity, mc_mutual_information, ExactMode, SignatureMatrix, DEFAULT_MC_SAMPLES,
};

/// Exit status for a sandwich check that found a violated bound.
pub const EXIT_SANDWICH: u8 = 5;
const SANDWICH_SLACK: f64 = 1e-9;

#[derive(Debug, Parser)]
#[command(name = "cdma-bounds", version, about = "Sum-capacity bounds for synchronous binary CDMA channels")]
pub struct Cli {
    /// Worker threads for parallel sections (default: all cores)
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate bounds at a single operating point
    Bound(BoundArgs),
    /// Evaluate bounds along one swept parameter, as CSV
    Sweep(SweepArgs),
    /// Emit the CSV data behind one of the reference figures
    Figure(FigureArgs),
    /// Exhaustive or Monte Carlo ground truth
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Debug, Clone, Args)]
pub struct NoiseArgs {
    /// Noise model: none, gaussian:<sigma2> or uniform:<a>
    #[arg(long, conflicts_with_all = ["ebn0_db", "sigma2"])]
    pub noise: Option<NoiseModel>,

    /// Gaussian noise given as Eb/N0 in dB
    #[arg(long, allow_negative_numbers = true, conflicts_with = "sigma2")]
    pub ebn0_db: Option<f64>,

    /// Gaussian noise given by its variance
    #[arg(long)]
    pub sigma2: Option<f64>,
}

impl NoiseArgs {
    fn resolve(&self) -> Result<Option<NoiseModel>, Failure> {
        Ok(match (self.noise, self.ebn0_db, self.sigma2) {
            (Some(model), _, _) => Some(model),
            (_, Some(db), _) => Some(NoiseModel::from_ebn0(EbN0::new(db))),
            (_, _, Some(s2)) => Some(NoiseModel::gaussian(s2)?),
            _ => None,
        })
    }

    fn require(&self) -> Result<NoiseModel, Failure> {
        self.resolve()?
            .ok_or_else(|| Failure::Usage("a noise model is required: --noise, --sigma2 or --ebn0-db".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Side {
    Lower,
    Upper,
    Both,
}

impl Side {
    fn lower(self) -> bool {
        matches!(self, Side::Lower | Side::Both)
    }

    fn upper(self) -> bool {
        matches!(self, Side::Upper | Side::Both)
    }
}

/// Flags shared by `bound` and `sweep`.
#[derive(Debug, Clone, Args)]
pub struct PointArgs {
    /// Spreading gain (chips per symbol)
    #[arg(long)]
    pub m: Option<u64>,

    /// Number of users
    #[arg(long)]
    pub n: Option<u64>,

    /// Load n/m for large-system limits
    #[arg(long, conflicts_with = "zeta")]
    pub beta: Option<f64>,

    /// Noiseless large-system load n/(m log2 n)
    #[arg(long)]
    pub zeta: Option<f64>,

    #[command(flatten)]
    pub noise: NoiseArgs,

    #[arg(long, value_enum, default_value_t = Side::Both)]
    pub side: Side,

    /// Evaluate the large-system limit instead of a finite system
    #[arg(long)]
    pub asymptotic: bool,

    /// Use a single member of the lower-bound family instead of the envelope
    #[arg(long, conflicts_with = "gamma_envelope")]
    pub gamma: Option<f64>,

    /// Maximize the lower bound over the family parameter (default)
    #[arg(long)]
    pub gamma_envelope: bool,

    /// Overlap scaling for the uniform-noise lower bound
    #[arg(long, default_value = "derived")]
    pub eq6_mode: Eq6Mode,
}

#[derive(Debug, Args)]
pub struct BoundArgs {
    #[command(flatten)]
    pub point: PointArgs,

    /// Print one JSON document instead of key=value lines
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepVar {
    N,
    M,
    #[value(name = "ebn0-db")]
    EbN0Db,
    Beta,
}

impl SweepVar {
    fn name(self) -> &'static str {
        match self {
            SweepVar::N => "n",
            SweepVar::M => "m",
            SweepVar::EbN0Db => "ebn0_db",
            SweepVar::Beta => "beta",
        }
    }
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Parameter to sweep
    #[arg(long, value_enum)]
    pub var: SweepVar,

    /// Explicit comma-separated values
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with = "range", required_unless_present = "range")]
    pub values: Vec<f64>,

    /// Range as start:stop:step, stop included when reached
    #[arg(long, allow_hyphen_values = true)]
    pub range: Option<String>,

    #[command(flatten)]
    pub point: PointArgs,

    /// Write CSV here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FigureArgs {
    /// Figure number
    #[arg(value_parser = clap::value_parser!(u8).range(1..=10))]
    pub id: u8,

    /// Replace the fixed Eb/N0 of figures plotted against n
    #[arg(long, allow_negative_numbers = true)]
    pub ebn0_db: Option<f64>,

    /// Write CSV here instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Exact noiseless sum capacity over signature matrices
    Exact(ExactArgs),
    /// Monte Carlo mutual information for a given signature matrix
    Mc(McArgs),
}

#[derive(Debug, Args)]
pub struct ExactArgs {
    #[arg(long)]
    pub m: u64,

    #[arg(long)]
    pub n: u64,

    /// Sample this many random matrices instead of enumerating all
    #[arg(long)]
    pub samples: Option<u64>,

    /// Seed for --samples
    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    /// Also evaluate the noiseless bounds and check lower <= mean <= max <= upper
    #[arg(long)]
    pub check_bounds: bool,

    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct McArgs {
    /// Signature matrix file
    #[arg(long)]
    pub matrix: PathBuf,

    #[command(flatten)]
    pub noise: NoiseArgs,

    #[arg(long, default_value_t = DEFAULT_MC_SAMPLES)]
    pub samples: u64,

    #[arg(long, default_value_t = 0)]
    pub seed: u64,

    #[arg(long)]
    pub json: bool,
}

/// Why a command did not succeed.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Compute(Error),
    Sandwich(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Compute(e)
    }
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Sandwich(_) => EXIT_SANDWICH,
            Failure::Compute(e) => match e {
                Error::Domain(_) | Error::Unsupported { .. } | Error::Parse(_) => 2,
                Error::Convergence(_) | Error::Accuracy { .. } => 3,
                Error::Resource(_) => 4,
                Error::Io(_) => 1,
            },
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(msg) => write!(f, "usage error: {msg}"),
            Failure::Compute(e) => write!(f, "{e}"),
            Failure::Sandwich(msg) => write!(f, "bound sandwich violated: {msg}"),
        }
    }
}

/// Runs a parsed command line, writing results to stdout or `--out`.
pub fn run(cli: Cli) -> ExitCode {
    if let Some(threads) = cli.threads {
        if threads == 0 {
            eprintln!("usage error: --threads must be at least 1");
            return ExitCode::from(2);
        }
        // a second initialization only happens in-process; keep the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    let mut stdout = std::io::stdout().lock();
    match execute(&cli.command) {
        Ok(Output { text, out }) => {
            let written = match out {
                Some(path) => std::fs::write(&path, text.as_bytes()),
                None => stdout.write_all(text.as_bytes()).and_then(|_| stdout.flush()),
            };
            match written {
                Ok(()) => ExitCode::SUCCESS,
                // reader closed early, e.g. `| head`
                Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(1)
                }
            }
        }
        Err((partial, failure)) => {
            let _ = stdout.write_all(partial.as_bytes());
            eprintln!("{failure}");
            ExitCode::from(failure.exit_code())
        }
    }
}

struct Output {
    text: String,
    out: Option<PathBuf>,
}

/// Text produced before a failure is still printed (the sandwich report).
type CommandResult = Result<Output, (String, Failure)>;

fn execute(command: &Command) -> CommandResult {
    let plain = |r: Result<String, Failure>, out: Option<&Path>| {
        r.map(|text| Output {
            text,
            out: out.map(Path::to_path_buf),
        })
        .map_err(|f| (String::new(), f))
    };
    match command {
        Command::Bound(args) => plain(cmd_bound(args), None),
        Command::Sweep(args) => plain(cmd_sweep(args), args.out.as_deref()),
        Command::Figure(args) => plain(cmd_figure(args), args.out.as_deref()),
        Command::Oracle(OracleCommand::Exact(args)) => cmd_oracle_exact(args),
        Command::Oracle(OracleCommand::Mc(args)) => plain(cmd_oracle_mc(args), None),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Field {
    Num(f64),
    Int(u64),
    Text(String),
    Flag(bool),
}

impl Field {
    fn render(&self) -> String {
        match self {
            Field::Num(v) => format!("{v:?}"),
            Field::Int(v) => v.to_string(),
            Field::Text(s) => s.clone(),
            Field::Flag(b) => b.to_string(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Field::Num(v) => serde_json::Number::from_f64(*v).map_or(Value::Null, Value::Number),
            Field::Int(v) => Value::from(*v),
            Field::Text(s) => Value::from(s.as_str()),
            Field::Flag(b) => Value::from(*b),
        }
    }
}

/// Ordered key/value record printed by `bound` and `oracle`.
#[derive(Debug, Default, Clone)]
struct Record(Vec<(&'static str, Field)>);

impl Record {
    fn num(mut self, key: &'static str, v: f64) -> Self {
        self.0.push((key, Field::Num(v)));
        self
    }

    fn int(mut self, key: &'static str, v: u64) -> Self {
        self.0.push((key, Field::Int(v)));
        self
    }

    fn text(mut self, key: &'static str, v: impl Into<String>) -> Self {
        self.0.push((key, Field::Text(v.into())));
        self
    }

    fn flag(mut self, key: &'static str, v: bool) -> Self {
        self.0.push((key, Field::Flag(v)));
        self
    }

    fn get(&self, key: &str) -> Option<&Field> {
        self.0.iter().find(|(k, _)| *k == key).map(|(_, v)| v)
    }

    fn to_json(&self) -> Value {
        Value::Object(self.0.iter().map(|(k, v)| (k.to_string(), v.json())).collect())
    }
}

fn render_records(records: &[Record], json: bool) -> String {
    if json {
        let doc = serde_json::json!({ "records": records.iter().map(Record::to_json).collect::<Vec<_>>() });
        return format!("{doc}\n");
    }
    let blocks: Vec<String> = records
        .iter()
        .map(|r| r.0.iter().map(|(k, v)| format!("{k}={}\n", v.render())).collect())
        .collect();
    blocks.join("\n")
}

/// A fully resolved operating point.
#[derive(Debug, Clone, Copy)]
struct Point {
    m: Option<u64>,
    n: Option<u64>,
    load: Option<LoadPoint>,
    noise: NoiseModel,
}

#[derive(Debug, Clone, Copy)]
struct Settings {
    side: Side,
    asymptotic: bool,
    gamma: Option<f64>,
    eq6_mode: Eq6Mode,
}

impl PointArgs {
    fn point(&self) -> Result<Point, Failure> {
        let load = match (self.beta, self.zeta) {
            (Some(b), _) => Some(LoadPoint::beta(b)?),
            (_, Some(z)) => Some(LoadPoint::zeta(z)?),
            _ => None,
        };
        Ok(Point {
            m: self.m,
            n: self.n,
            load,
            noise: self.noise.require()?,
        })
    }

    fn settings(&self) -> Result<Settings, Failure> {
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Failure::Usage(format!("--gamma must be positive, got {g}")));
            }
        }
        Ok(Settings {
            side: self.side,
            asymptotic: self.asymptotic,
            gamma: self.gamma,
            eq6_mode: self.eq6_mode,
        })
    }
}

fn evaluate(point: Point, settings: Settings) -> Result<Vec<Record>, Failure> {
    if settings.asymptotic {
        if point.m.is_some() || point.n.is_some() {
            return Err(Failure::Usage("--asymptotic takes --beta or --zeta, not --m/--n".into()));
        }
        let load = point
            .load
            .ok_or_else(|| Failure::Usage("--asymptotic needs --beta (or --zeta for the noiseless limit)".into()))?;
        evaluate_asymptotic(load, point.noise, settings)
    } else {
        if point.load.is_some() {
            return Err(Failure::Usage("--beta/--zeta require --asymptotic".into()));
        }
        let (m, n) = match (point.m, point.n) {
            (Some(m), Some(n)) => (m, n),
            _ => return Err(Failure::Usage("finite bounds need both --m and --n".into())),
        };
        evaluate_finite(SystemSize::new(m, n)?, point.noise, settings)
    }
}

fn bound_record(side: &str, b: &BoundValue) -> Record {
    let mut r = Record::default()
        .text("side", side)
        .text("kind", b.kind.to_string())
        .num("bits_total", b.bits_total)
        .num("bits_per_user", b.bits_per_user)
        .int("m", b.meta.m)
        .int("n", b.meta.n)
        .text("noise", b.meta.noise.to_string());
    if let Some(g) = b.meta.gamma {
        r = r.num("gamma", g);
    }
    if let Some(mode) = b.meta.eq6_mode {
        r = r.text("eq6_mode", if mode == Eq6Mode::Printed { "printed" } else { "derived" });
    }
    r.num("raw_bits_total", b.meta.raw_bits_total)
}

fn evaluate_finite(size: SystemSize, noise: NoiseModel, s: Settings) -> Result<Vec<Record>, Failure> {
    let mut out = Vec::new();
    if s.side.lower() {
        let b = match (noise, s.gamma) {
            (NoiseModel::Noiseless, Some(_)) => {
                return Err(Failure::Usage("--gamma applies only to noisy models".into()));
            }
            (NoiseModel::Noiseless, None) => noiseless_lower(size),
            (_, Some(g)) => noisy_lower_gamma_with(size, &noise, g, s.eq6_mode)?,
            (_, None) => noisy_lower_envelope_with(size, &noise, &GammaSearch::default(), s.eq6_mode)?,
        };
        out.push(bound_record("lower", &b));
    }
    if s.side.upper() {
        let b = conjectured_upper(size, &noise, &QuadratureConfig::default())?;
        out.push(bound_record("upper", &b));
    }
    Ok(out)
}

fn evaluate_asymptotic(load: LoadPoint, noise: NoiseModel, s: Settings) -> Result<Vec<Record>, Failure> {
    let cfg = QuadratureConfig::default();
    let search = SaddleSearch::default();
    let mut out = Vec::new();
    match (noise, load) {
        (NoiseModel::Noiseless, LoadPoint::Zeta(zeta)) => {
            let v = noiseless_limit(zeta)?;
            for (side, kind, wanted) in [("lower", "lower", s.side.lower()), ("upper", "true_upper", s.side.upper())] {
                if wanted {
                    out.push(
                        Record::default()
                            .text("side", side)
                            .text("kind", kind)
                            .num("bits_per_user", v)
                            .num("zeta", zeta)
                            .text("noise", "none"),
                    );
                }
            }
        }
        (NoiseModel::Noiseless, LoadPoint::Beta(_)) => {
            return Err(Failure::Usage("the noiseless limit is parameterized by --zeta".into()));
        }
        (_, LoadPoint::Zeta(_)) => {
            return Err(Failure::Usage("noisy limits are parameterized by --beta".into()));
        }
        (NoiseModel::Gaussian { sigma2 }, LoadPoint::Beta(beta)) => {
            let base = |side: &str, kind: &str, v: f64| {
                Record::default()
                    .text("side", side)
                    .text("kind", kind)
                    .num("bits_per_user", v)
                    .num("beta", beta)
                    .text("noise", noise.to_string())
            };
            if s.side.lower() {
                let saddle = asympt_lower_gaussian_saddle(load, sigma2, &search)?;
                let d1 = d1_approx(load, sigma2, &search)?;
                out.push(
                    base("lower", "lower", saddle.bits_per_user)
                        .num("gamma", saddle.gamma)
                        .num("t", saddle.t)
                        .num("raw_bits_per_user", saddle.raw)
                        .num("d1_approx", d1),
                );
            }
            if s.side.upper() {
                out.push(base("upper", "conjectured_upper", asympt_upper(load, &noise, &cfg)?));
            }
            let t = tanaka_capacity(load, sigma2, &cfg)?;
            let mut r = base("tanaka", "estimate", t.c_per_user)
                .num("m_rep", t.m_rep)
                .num("lambda", t.lambda)
                .int("iterations", t.iterations as u64)
                .flag("converged", t.converged);
            if let Some(b) = t.second_branch {
                r = r
                    .num("second_branch_bits_per_user", b.c_per_user)
                    .num("second_branch_m_rep", b.m_rep);
            }
            out.push(r);
        }
        (NoiseModel::Uniform { .. }, LoadPoint::Beta(beta)) => {
            if s.side.lower() {
                return Err(Error::Unsupported {
                    model: noise.to_string(),
                    operation: "asymptotic lower bound (Gaussian only); use --side upper",
                }
                .into());
            }
            out.push(
                Record::default()
                    .text("side", "upper")
                    .text("kind", "conjectured_upper")
                    .num("bits_per_user", asympt_upper(load, &noise, &cfg)?)
                    .num("beta", beta)
                    .text("noise", noise.to_string()),
            );
        }
    }
    Ok(out)
}

fn cmd_bound(args: &BoundArgs) -> Result<String, Failure> {
    let records = evaluate(args.point.point()?, args.point.settings()?)?;
    Ok(render_records(&records, args.json))
}

/// One row of figure or sweep CSV output.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub figure: String,
    pub series: String,
    pub x_name: String,
    pub x: f64,
    pub y_name: String,
    pub y: f64,
    pub params: String,
}

pub const CSV_HEADER: [&str; 7] = ["figure", "series", "x_name", "x", "y_name", "y", "params"];

/// RFC 4180 CSV with a header row; numbers use the shortest round-trip form.
pub fn write_csv(rows: &[CsvRow]) -> Result<String, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([
            r.figure.as_str(),
            &r.series,
            &r.x_name,
            &r.x.to_string(),
            &r.y_name,
            &r.y.to_string(),
            &r.params,
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(std::io::Error::other(e.to_string())))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Canonical parameter string: JSON object with sorted keys.
fn params_json(params: &BTreeMap<&'static str, Value>) -> String {
    serde_json::to_string(params).expect("params serialize")
}

/// Sweep values: nonempty and strictly monotone.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVar,
    pub values: Vec<f64>,
}

impl SweepSpec {
    pub fn new(variable: SweepVar, values: Vec<f64>) -> Result<Self, Failure> {
        if values.is_empty() {
            return Err(Failure::Usage("sweep has no values".into()));
        }
        let up = values.windows(2).all(|w| w[1] > w[0]);
        let down = values.windows(2).all(|w| w[1] < w[0]);
        if !(up || down) || values.iter().any(|v| !v.is_finite()) {
            return Err(Failure::Usage("sweep values must be finite and strictly monotone".into()));
        }
        Ok(Self { variable, values })
    }

    /// Parses `start:stop:step`; `stop` is included when it lies on the grid.
    pub fn from_range(variable: SweepVar, range: &str) -> Result<Self, Failure> {
        let parts: Vec<f64> = range
            .split(':')
            .map(|p| p.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| Failure::Usage(format!("bad range '{range}', expected start:stop:step")))?;
        let [start, stop, step] = parts[..] else {
            return Err(Failure::Usage(format!("bad range '{range}', expected start:stop:step")));
        };
        if !(step != 0.0 && (stop - start) / step >= 0.0) || !step.is_finite() {
            return Err(Failure::Usage(format!("range step {step} does not move from {start} toward {stop}")));
        }
        let count = ((stop - start) / step + 1e-9).floor() as u64 + 1;
        if count > 1_000_000 {
            return Err(Failure::Usage("range has more than 10^6 points".into()));
        }
        Self::new(variable, (0..count).map(|i| start + i as f64 * step).collect())
    }
}

fn integer_value(name: &str, v: f64) -> Result<u64, Failure> {
    if v >= 1.0 && v.fract() == 0.0 && v < 9.0e15 {
        Ok(v as u64)
    } else {
        Err(Failure::Usage(format!("{name} must be a positive integer, got {v}")))
    }
}

fn cmd_sweep(args: &SweepArgs) -> Result<String, Failure> {
    let spec = match &args.range {
        Some(r) => SweepSpec::from_range(args.var, r)?,
        None => SweepSpec::new(args.var, args.values.clone())?,
    };
    let settings = args.point.settings()?;
    let base_noise = args.point.noise.resolve()?;
    if spec.variable != SweepVar::EbN0Db && base_noise.is_none() {
        return Err(Failure::Usage("a noise model is required: --noise, --sigma2 or --ebn0-db".into()));
    }
    if spec.variable == SweepVar::EbN0Db && base_noise.is_some() {
        return Err(Failure::Usage("sweeping ebn0-db replaces --noise/--sigma2/--ebn0-db".into()));
    }

    let mut fixed: BTreeMap<&'static str, Value> = BTreeMap::new();
    for (key, v) in [("m", args.point.m), ("n", args.point.n)] {
        if let Some(v) = v {
            fixed.insert(key, Value::from(v));
        }
    }
    if let Some(b) = args.point.beta {
        fixed.insert("beta", Value::from(b));
    }
    if let Some(z) = args.point.zeta {
        fixed.insert("zeta", Value::from(z));
    }
    if let Some(model) = base_noise {
        fixed.insert("noise", Value::from(model.to_string()));
    }
    if let Some(g) = settings.gamma {
        fixed.insert("gamma", Value::from(g));
    }
    fixed.insert("asymptotic", Value::from(settings.asymptotic));
    fixed.remove(spec.variable.name());
    let params = params_json(&fixed);

    let points: Vec<Point> = spec
        .values
        .iter()
        .map(|&v| {
            let mut p = Point {
                m: args.point.m,
                n: args.point.n,
                load: None,
                noise: base_noise.unwrap_or(NoiseModel::Noiseless),
            };
            p.load = match (args.point.beta, args.point.zeta) {
                (Some(b), _) => Some(LoadPoint::beta(b)?),
                (_, Some(z)) => Some(LoadPoint::zeta(z)?),
                _ => None,
            };
            match spec.variable {
                SweepVar::N => p.n = Some(integer_value("n", v)?),
                SweepVar::M => p.m = Some(integer_value("m", v)?),
                SweepVar::EbN0Db => p.noise = NoiseModel::from_ebn0(EbN0::new(v)),
                SweepVar::Beta => p.load = Some(LoadPoint::beta(v)?),
            }
            Ok(p)
        })
        .collect::<Result<_, Failure>>()?;

    let evaluated: Vec<Vec<Record>> = points
        .par_iter()
        .map(|&p| evaluate(p, settings))
        .collect::<Result<_, Failure>>()?;

    let mut rows = Vec::new();
    for (&x, records) in spec.values.iter().zip(&evaluated) {
        for r in records {
            let series = match r.get("side") {
                Some(Field::Text(s)) => s.clone(),
                _ => unreachable!("records carry a side"),
            };
            let y = match r.get("bits_per_user") {
                Some(Field::Num(y)) => *y,
                _ => unreachable!("records carry bits_per_user"),
            };
            rows.push(CsvRow {
                figure: "sweep".into(),
                series,
                x_name: spec.variable.name().into(),
                x,
                y_name: "bits_per_user".into(),
                y,
                params: params.clone(),
            });
        }
    }
    // group rows by series while keeping x order inside each
    let mut order: Vec<String> = Vec::new();
    for r in &rows {
        if !order.contains(&r.series) {
            order.push(r.series.clone());
        }
    }
    let grouped: Vec<CsvRow> = order
        .iter()
        .flat_map(|s| rows.iter().filter(move |r| &r.series == s).cloned())
        .collect();
    Ok(write_csv(&grouped)?)
}

/// A quantity plotted in a figure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Curve {
    NoiselessLower,
    NoiselessUpper,
    GammaMember(f64),
    Envelope,
    ConjecturedUpper,
    AsymptoticLower,
    AsymptoticUpper,
    Tanaka,
    Bpsk,
}

impl Curve {
    pub fn series(self) -> &'static str {
        match self {
            Curve::NoiselessLower => "lower",
            Curve::NoiselessUpper => "upper",
            Curve::GammaMember(_) => "lower_gamma",
            Curve::Envelope => "lower_envelope",
            Curve::ConjecturedUpper => "conjectured_upper",
            Curve::AsymptoticLower => "asymptotic_lower",
            Curve::AsymptoticUpper => "asymptotic_upper",
            Curve::Tanaka => "tanaka",
            Curve::Bpsk => "bpsk",
        }
    }

    fn is_finite_size(self) -> bool {
        matches!(
            self,
            Curve::NoiselessLower | Curve::NoiselessUpper | Curve::GammaMember(_) | Curve::Envelope | Curve::ConjecturedUpper
        )
    }
}

/// Horizontal axis of a figure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XAxis {
    Users { start: u64, stop: u64, step: u64 },
    EbN0Db { start: f64, stop: f64, step: f64 },
}

impl XAxis {
    fn name(self) -> &'static str {
        match self {
            XAxis::Users { .. } => "n",
            XAxis::EbN0Db { .. } => "ebn0_db",
        }
    }

    fn values(self) -> Vec<f64> {
        match self {
            XAxis::Users { start, stop, step } => (start..=stop).step_by(step as usize).map(|n| n as f64).collect(),
            XAxis::EbN0Db { start, stop, step } => {
                let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
                (0..count).map(|i| start + i as f64 * step).collect()
            }
        }
    }
}

/// Curves sharing one set of fixed parameters.
///
/// Unset `beta` with a fixed `m` means the load follows the x axis as n/m.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Panel {
    pub m: Option<u64>,
    pub n: Option<u64>,
    pub beta: Option<f64>,
    /// `None` on an n axis means noiseless.
    pub ebn0_db: Option<f64>,
    pub x: XAxis,
    pub curves: &'static [Curve],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FigureSpec {
    pub id: u8,
    pub title: &'static str,
    pub panels: &'static [Panel],
}

const USERS_400: XAxis = XAxis::Users { start: 1, stop: 400, step: 1 };
const USERS_64: XAxis = XAxis::Users { start: 8, stop: 320, step: 8 };
const USERS_8: XAxis = XAxis::Users { start: 1, stop: 40, step: 1 };
const EBN0_FINE: XAxis = XAxis::EbN0Db { start: -4.0, stop: 20.0, step: 0.5 };
const EBN0_COARSE: XAxis = XAxis::EbN0Db { start: -4.0, stop: 20.0, step: 1.0 };

const NOISELESS: &[Curve] = &[Curve::NoiselessLower, Curve::NoiselessUpper];
const FINITE: &[Curve] = &[Curve::Envelope, Curve::ConjecturedUpper];
const FAMILY: &[Curve] = &[
    Curve::GammaMember(0.1),
    Curve::GammaMember(0.3),
    Curve::GammaMember(1.0),
    Curve::GammaMember(3.0),
    Curve::Envelope,
];
const LIMITS_WITH_BPSK: &[Curve] = &[Curve::AsymptoticLower, Curve::AsymptoticUpper, Curve::Tanaka, Curve::Bpsk];
const LIMITS: &[Curve] = &[Curve::AsymptoticLower, Curve::AsymptoticUpper, Curve::Tanaka];
const LIMIT_BOUNDS: &[Curve] = &[Curve::AsymptoticLower, Curve::AsymptoticUpper];
const FINITE_AND_LIMITS: &[Curve] = &[
    Curve::Envelope,
    Curve::ConjecturedUpper,
    Curve::AsymptoticLower,
    Curve::AsymptoticUpper,
    Curve::Tanaka,
];

const fn panel(m: Option<u64>, n: Option<u64>, beta: Option<f64>, ebn0_db: Option<f64>, x: XAxis, curves: &'static [Curve]) -> Panel {
    Panel {
        m,
        n,
        beta,
        ebn0_db,
        x,
        curves,
    }
}

/// Default parameters of every figure.
pub const FIGURES: [FigureSpec; 10] = [
    FigureSpec {
        id: 1,
        title: "noiseless lower and upper bounds vs n",
        panels: &[
            panel(Some(16), None, None, None, USERS_400, NOISELESS),
            panel(Some(32), None, None, None, USERS_400, NOISELESS),
            panel(Some(64), None, None, None, USERS_400, NOISELESS),
        ],
    },
    FigureSpec {
        id: 2,
        title: "Gaussian lower-bound family and envelope vs n",
        panels: &[panel(Some(64), None, None, Some(8.0), USERS_64, FAMILY)],
    },
    FigureSpec {
        id: 3,
        title: "Gaussian envelope and conjectured upper bound vs n",
        panels: &[
            panel(Some(64), None, None, Some(4.0), USERS_64, FINITE),
            panel(Some(64), None, None, Some(16.0), USERS_64, FINITE),
        ],
    },
    FigureSpec {
        id: 4,
        title: "Gaussian envelope and conjectured upper bound vs Eb/N0",
        panels: &[
            panel(Some(64), Some(32), None, None, EBN0_COARSE, FINITE),
            panel(Some(64), Some(64), None, None, EBN0_COARSE, FINITE),
            panel(Some(64), Some(128), None, None, EBN0_COARSE, FINITE),
            panel(Some(64), Some(192), None, None, EBN0_COARSE, FINITE),
        ],
    },
    FigureSpec {
        id: 5,
        title: "large-system bounds, replica estimate and BPSK, beta = 0.5",
        panels: &[panel(None, None, Some(0.5), None, EBN0_FINE, LIMITS_WITH_BPSK)],
    },
    FigureSpec {
        id: 6,
        title: "large-system bounds, replica estimate and BPSK, beta = 1",
        panels: &[panel(None, None, Some(1.0), None, EBN0_FINE, LIMITS_WITH_BPSK)],
    },
    FigureSpec {
        id: 7,
        title: "large-system bounds and replica estimate, beta = 2, 4, 8",
        panels: &[
            panel(None, None, Some(2.0), None, EBN0_FINE, LIMITS),
            panel(None, None, Some(4.0), None, EBN0_FINE, LIMITS),
            panel(None, None, Some(8.0), None, EBN0_FINE, LIMITS),
        ],
    },
    FigureSpec {
        id: 8,
        title: "finite bounds at beta = 2 vs the large-system limit",
        panels: &[
            panel(None, None, Some(2.0), None, EBN0_COARSE, LIMIT_BOUNDS),
            panel(Some(8), Some(16), None, None, EBN0_COARSE, FINITE),
            panel(Some(16), Some(32), None, None, EBN0_COARSE, FINITE),
            panel(Some(32), Some(64), None, None, EBN0_COARSE, FINITE),
            panel(Some(64), Some(128), None, None, EBN0_COARSE, FINITE),
        ],
    },
    FigureSpec {
        id: 9,
        title: "finite bounds vs limits evaluated at beta = n/m, 16 dB",
        panels: &[
            panel(Some(8), None, None, Some(16.0), USERS_8, FINITE_AND_LIMITS),
            panel(Some(64), None, None, Some(16.0), USERS_64, FINITE_AND_LIMITS),
        ],
    },
    FigureSpec {
        id: 10,
        title: "finite bounds vs limits evaluated at beta = n/m, 4 dB",
        panels: &[
            panel(Some(8), None, None, Some(4.0), USERS_8, FINITE_AND_LIMITS),
            panel(Some(64), None, None, Some(4.0), USERS_64, FINITE_AND_LIMITS),
        ],
    },
];

pub fn figure_spec(id: u8) -> Option<&'static FigureSpec> {
    FIGURES.iter().find(|f| f.id == id)
}

struct Job {
    panel: usize,
    curve: Curve,
    x: f64,
}

fn evaluate_curve(p: &Panel, curve: Curve, x: f64) -> Result<f64, Error> {
    let on_users = matches!(p.x, XAxis::Users { .. });
    let n = if on_users { Some(x as u64) } else { p.n };
    let ebn0 = if on_users { p.ebn0_db } else { Some(x) };
    let noise = ebn0.map_or(NoiseModel::Noiseless, |db| NoiseModel::from_ebn0(EbN0::new(db)));
    let cfg = QuadratureConfig::default();
    if curve.is_finite_size() {
        let size = SystemSize::new(p.m.expect("finite curves fix m"), n.expect("finite curves fix n"))?;
        return Ok(match curve {
            Curve::NoiselessLower => noiseless_lower(size).bits_per_user,
            Curve::NoiselessUpper | Curve::ConjecturedUpper => conjectured_upper(size, &noise, &cfg)?.bits_per_user,
            Curve::GammaMember(g) => noisy_lower_gamma_with(size, &noise, g, Eq6Mode::Derived)?.bits_per_user,
            Curve::Envelope => {
                noisy_lower_envelope_with(size, &noise, &GammaSearch::default(), Eq6Mode::Derived)?.bits_per_user
            }
            _ => unreachable!(),
        });
    }
    let sigma2 = match noise {
        NoiseModel::Gaussian { sigma2 } => sigma2,
        _ => return Err(Error::domain("large-system curves need Gaussian noise")),
    };
    if curve == Curve::Bpsk {
        return bpsk_reference(sigma2);
    }
    let beta = match (p.beta, p.m, n) {
        (Some(b), _, _) => b,
        (None, Some(m), Some(n)) => n as f64 / m as f64,
        _ => return Err(Error::domain("large-system curve without a load")),
    };
    let load = LoadPoint::beta(beta)?;
    match curve {
        Curve::AsymptoticLower => asympt_lower_gaussian(load, sigma2, &SaddleSearch::default()),
        Curve::AsymptoticUpper => asympt_upper(load, &noise, &cfg),
        Curve::Tanaka => Ok(tanaka_capacity(load, sigma2, &cfg)?.c_per_user),
        _ => unreachable!(),
    }
}

fn series_params(p: &Panel, curve: Curve) -> String {
    let mut params: BTreeMap<&'static str, Value> = BTreeMap::new();
    let on_users = matches!(p.x, XAxis::Users { .. });
    if let Some(m) = p.m {
        if curve.is_finite_size() || p.beta.is_none() {
            params.insert("m", Value::from(m));
        }
    }
    if let (Some(n), false) = (p.n, on_users) {
        if curve.is_finite_size() {
            params.insert("n", Value::from(n));
        }
    }
    if let Some(b) = p.beta {
        if !curve.is_finite_size() {
            params.insert("beta", Value::from(b));
        }
    } else if !curve.is_finite_size() && curve != Curve::Bpsk {
        params.insert("beta", Value::from("n/m"));
    }
    if on_users {
        match p.ebn0_db {
            Some(db) => {
                params.insert("ebn0_db", Value::from(db));
                params.insert("noise", Value::from("gaussian"));
            }
            None => {
                params.insert("noise", Value::from("none"));
            }
        }
    } else {
        params.insert("noise", Value::from("gaussian"));
    }
    if let Curve::GammaMember(g) = curve {
        params.insert("gamma", Value::from(g));
    }
    params_json(&params)
}

/// CSV rows for a figure with the given panels.
pub fn figure_rows(id: u8, panels: &[Panel]) -> Result<Vec<CsvRow>, Error> {
    let jobs: Vec<Job> = panels
        .iter()
        .enumerate()
        .flat_map(|(pi, p)| {
            p.curves
                .iter()
                .flat_map(move |&curve| p.x.values().into_iter().map(move |x| Job { panel: pi, curve, x }))
        })
        .collect();
    let ys: Vec<f64> = jobs
        .par_iter()
        .map(|j| evaluate_curve(&panels[j.panel], j.curve, j.x))
        .collect::<Result<_, _>>()?;
    Ok(jobs
        .iter()
        .zip(ys)
        .map(|(j, y)| {
            let p = &panels[j.panel];
            CsvRow {
                figure: id.to_string(),
                series: j.curve.series().into(),
                x_name: p.x.name().into(),
                x: j.x,
                y_name: "bits_per_user".into(),
                y,
                params: series_params(p, j.curve),
            }
        })
        .collect())
}

/// Panels of a figure after applying an Eb/N0 override.
pub fn figure_panels(id: u8, ebn0_db: Option<f64>) -> Result<Vec<Panel>, Failure> {
    let spec = figure_spec(id).ok_or_else(|| Failure::Usage(format!("no figure {id}; choose 1 to 10")))?;
    let mut panels: Vec<Panel> = spec.panels.to_vec();
    if let Some(db) = ebn0_db {
        if !panels.iter().any(|p| p.ebn0_db.is_some()) {
            return Err(Failure::Usage(format!("figure {id} has no fixed Eb/N0 to override")));
        }
        let mut seen: Vec<Panel> = Vec::new();
        for mut p in panels {
            if p.ebn0_db.is_some() {
                p.ebn0_db = Some(db);
            }
            if !seen.contains(&p) {
                seen.push(p);
            }
        }
        panels = seen;
    }
    Ok(panels)
}

fn cmd_figure(args: &FigureArgs) -> Result<String, Failure> {
    let panels = figure_panels(args.id, args.ebn0_db)?;
    Ok(write_csv(&figure_rows(args.id, &panels)?)?)
}

/// Six decimals with trailing zeros removed, as in `1.415037` or `1.5`.
pub fn short_decimal(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn cmd_oracle_exact(args: &ExactArgs) -> CommandResult {
    let fail = |f: Failure| (String::new(), f);
    let size = SystemSize::new(args.m, args.n).map_err(|e| fail(e.into()))?;
    let mode = match args.samples {
        Some(count) => ExactMode::Sample { count, seed: args.seed },
        None => ExactMode::Exhaustive,
    };
    let cap = exact_noiseless_capacity(size, mode).map_err(|e| fail(e.into()))?;
    let mut r = Record::default().int("m", args.m).int("n", args.n);
    r = match mode {
        ExactMode::Sample { seed, .. } => r.text("mode", "sample").int("seed", seed),
        _ => r.text("mode", "exhaustive"),
    };
    let argmax: Vec<String> = (0..cap.argmax.m())
        .map(|i| {
            cap.argmax
                .row(i)
                .iter()
                .map(|&e| if e == 1 { "+1" } else { "-1" })
                .collect::<Vec<_>>()
                .join(" ")
        })
        .collect();
    r = r
        .int("matrices", cap.matrices)
        .num("max", cap.max)
        .num("mean", cap.mean)
        .text("argmax", argmax.join("; "));

    let mut verdict = None;
    if args.check_bounds {
        let lower = noiseless_lower(size).bits_total;
        let upper = conjectured_upper(size, &NoiseModel::Noiseless, &QuadratureConfig::default())
            .map_err(|e| fail(e.into()))?
            .bits_total;
        let chain = [lower, cap.mean, cap.max, upper];
        let ok = chain.windows(2).all(|w| w[1] - w[0] >= -SANDWICH_SLACK);
        let shown: Vec<String> = chain.iter().map(|&v| short_decimal(v)).collect();
        r = r.num("lower", lower).num("upper", upper).flag("sandwich_ok", ok);
        verdict = Some((ok, shown.join(" ≤ ")));
    }

    let mut text = render_records(&[r], args.json);
    if let Some((ok, chain)) = verdict {
        if !args.json {
            let _ = writeln!(text, "sandwich: {chain}");
        }
        if !ok {
            return Err((text, Failure::Sandwich(format!("expected lower ≤ mean ≤ max ≤ upper, got {chain}"))));
        }
    }
    Ok(Output { text, out: None })
}

fn cmd_oracle_mc(args: &McArgs) -> Result<String, Failure> {
    let raw = std::fs::read_to_string(&args.matrix).map_err(Error::from)?;
    let a: SignatureMatrix = raw.parse()?;
    let noise = args.noise.require()?;
    let est = mc_mutual_information(&a, &noise, args.samples, args.seed)?;
    let n = a.n() as f64;
    let r = Record::default()
        .int("m", a.m() as u64)
        .int("n", a.n() as u64)
        .text("noise", noise.to_string())
        .int("samples", est.samples)
        .int("seed", est.seed)
        .num("mean_bits", est.mean)
        .num("std_error_bits", est.std_error)
        .num("mean_bits_per_user", est.mean / n)
        .num("std_error_bits_per_user", est.std_error / n);
    Ok(render_records(&[r], args.json))
}
