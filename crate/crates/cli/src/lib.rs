//! Command-line front end for cavmem: efficiency queries, parameter sweeps,
//! drive synthesis, simulation, optimal-control benchmarks and the
//! atom/cavity crossover.

use std::ffi::OsString;
use std::fs::{File, OpenOptions};
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};

use cavmem::asymptotics::{asymptote_for, threshold_time};
use cavmem::control::{
    c_leq_one_eta, optimize_c, synthesize_omega_atom, synthesize_omega_cavity, two_tc_map, ControlDrive, RetrievalMap,
};
use cavmem::dynamics::{
    loss_probability, overlap_efficiency, simulate_retrieval, simulate_storage, storage_input, time_reverse_drive,
    ModelTier,
};
use cavmem::model::MemoryParams;
use cavmem::oct::{self, ControlGrid, Interpolation, OctOptions, OctScenario, Spacing, SCOREBOARD_HEADER};
use cavmem::shapes::{PulseShape, ShapeKind};
use cavmem::Complex64;
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Failure classes, each with its own exit code.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Numerical(cavmem::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Numerical(_) => 4,
        }
    }

    fn io(path: &Path, source: io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

impl From<cavmem::Error> for CliError {
    fn from(e: cavmem::Error) -> Self {
        match e {
            cavmem::Error::InvalidParameter(m) | cavmem::Error::Parse(m) => CliError::Usage(m),
            cavmem::Error::Io(source) => CliError::Io {
                path: PathBuf::new(),
                source,
            },
            other => CliError::Numerical(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "cavmem", version, about = "Optimal control for cavity-assisted quantum memories")]
pub struct Cli {
    /// Worker threads for sweeps and gradients (0: all cores)
    #[arg(long, global = true, env = "CAVMEM_JOBS", default_value_t = 0)]
    pub jobs: usize,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Optimal ansatz efficiency for one shape and rate (JSON on stdout)
    Efficiency(EfficiencyArgs),
    /// Efficiency of several strategies over a rate axis (CSV)
    Sweep(SweepArgs),
    /// Synthesize the control drive (CSV samples plus JSON sidecar)
    Control(ControlArgs),
    /// Minimal pulse duration against coupling strength (CSV)
    Crossover(CrossoverArgs),
    /// Closed-form asymptotic efficiency (JSON on stdout)
    Asymptote(AsymptoteArgs),
    /// Simulate retrieval or storage with a synthesized or given drive
    Simulate(SimulateArgs),
    /// Run an optimal-control scenario and append it to a scoreboard
    Oct(OctArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ShapeArgs {
    /// Pulse family: dec-exp, inc-exp, sech, lorentzian, gaussian, tabulated
    #[arg(long)]
    pub shape: ShapeKind,
    /// Width τ
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    /// Truncation window t1,t2
    #[arg(long, value_parser = parse_window, allow_hyphen_values = true)]
    pub window: Option<(f64, f64)>,
    /// Truncate to the √3πτ benchmark window
    #[arg(long, conflicts_with = "window")]
    pub benchmark_window: bool,
    /// Samples (t,re,im) for a tabulated shape
    #[arg(long)]
    pub samples: Option<PathBuf>,
}

impl ShapeArgs {
    pub fn build(&self) -> CliResult<PulseShape> {
        build_shape(self.shape, self.tau, self.window, self.benchmark_window, self.samples.as_deref())
    }
}

fn parse_window(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or("expected t1,t2")?;
    let a: f64 = a.trim().parse().map_err(|_| format!("bad number '{a}'"))?;
    let b: f64 = b.trim().parse().map_err(|_| format!("bad number '{b}'"))?;
    if !(a < b) {
        return Err(format!("window needs t1 < t2, got {a},{b}"));
    }
    Ok((a, b))
}

fn build_shape(
    kind: ShapeKind,
    tau: f64,
    window: Option<(f64, f64)>,
    benchmark: bool,
    samples: Option<&Path>,
) -> CliResult<PulseShape> {
    let base = match (kind, samples) {
        (ShapeKind::Tabulated, Some(p)) => PulseShape::from_csv(p, Some(tau)).map_err(|e| match e {
            cavmem::Error::Io(source) => CliError::io(p, source),
            other => other.into(),
        })?,
        (ShapeKind::Tabulated, None) => return Err(CliError::Usage("tabulated shape needs --samples".into())),
        (_, Some(_)) => return Err(CliError::Usage("--samples only applies to the tabulated shape".into())),
        (k, None) => PulseShape::new(k, tau)?,
    };
    let shape = match window {
        Some((a, b)) => base.truncate(a, b)?,
        None if benchmark => {
            let (a, b) = oct::benchmark_window(kind, tau);
            base.truncate(a, b)?
        }
        None => base,
    };
    Ok(shape)
}

/// Rate given directly or as a dimensionless product with τ or T_c.
#[derive(Args, Debug, Clone, Default)]
pub struct RateArgs {
    /// Rate in inverse time units
    #[arg(long, group = "rate_flag")]
    pub rate: Option<f64>,
    /// Rate times τ
    #[arg(long, alias = "kappa-tau", group = "rate_flag")]
    pub gamma_tau: Option<f64>,
    /// Rate times T_c (time standard deviation of |φ|²)
    #[arg(long, alias = "kappa-tc", group = "rate_flag")]
    pub gamma_tc: Option<f64>,
}

impl RateArgs {
    fn given(&self) -> bool {
        self.rate.is_some() || self.gamma_tau.is_some() || self.gamma_tc.is_some()
    }

    pub fn resolve(&self, shape: &PulseShape) -> CliResult<Option<f64>> {
        let r = match (self.rate, self.gamma_tau, self.gamma_tc) {
            (Some(r), _, _) => Some(r),
            (_, Some(x), _) => Some(x / shape.tau()),
            (_, _, Some(x)) => Some(x / shape.time_variance()?),
            _ => None,
        };
        match r {
            Some(r) if !(r > 0.0 && r.is_finite()) => Err(CliError::Usage(format!("rate must be positive, got {r}"))),
            r => Ok(r),
        }
    }

    fn require(&self, shape: &PulseShape) -> CliResult<f64> {
        self.resolve(shape)?
            .ok_or_else(|| CliError::Usage("give one of --rate, --gamma-tau, --gamma-tc".into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Strategy {
    Ansatz,
    TwoTc,
    CLeqOne,
    Oct,
    Asymptote,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::Ansatz => "ansatz",
            Strategy::TwoTc => "two-tc",
            Strategy::CLeqOne => "c-leq-one",
            Strategy::Oct => "oct",
            Strategy::Asymptote => "asymptote",
        }
    }
}

#[derive(Args, Debug)]
pub struct EfficiencyArgs {
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[command(flatten)]
    pub rate: RateArgs,
    #[arg(long, value_enum, default_value_t = Strategy::Ansatz)]
    pub strategy: Strategy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Axis {
    /// Rate times T_c
    GammaTc,
    /// Rate times τ
    GammaTau,
    /// Bare rate
    Rate,
}

impl Axis {
    fn name(&self) -> &'static str {
        match self {
            Axis::GammaTc => "gamma_tc",
            Axis::GammaTau => "gamma_tau",
            Axis::Rate => "rate",
        }
    }
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Pulse families (comma separated)
    #[arg(long = "shape", value_delimiter = ',', required = true)]
    pub shapes: Vec<ShapeKind>,
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
    #[arg(long, value_parser = parse_window, allow_hyphen_values = true)]
    pub window: Option<(f64, f64)>,
    #[arg(long, conflicts_with = "window")]
    pub benchmark_window: bool,
    #[arg(long, value_enum, default_value_t = Axis::GammaTc)]
    pub axis: Axis,
    #[arg(long)]
    pub from: f64,
    #[arg(long)]
    pub to: f64,
    #[arg(long, default_value_t = 50)]
    pub points: usize,
    /// Logarithmic spacing
    #[arg(long)]
    pub log: bool,
    /// Strategies (comma separated)
    #[arg(long, value_enum, value_delimiter = ',', default_value = "ansatz")]
    pub strategies: Vec<Strategy>,
    /// Knots for the oct strategy
    #[arg(long, default_value_t = oct::DEFAULT_KNOTS)]
    pub oct_knots: usize,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Regime {
    Atom,
    Cavity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MapChoice {
    Ansatz,
    TwoTc,
}

#[derive(Args, Debug)]
pub struct ControlArgs {
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[command(flatten)]
    pub rate: RateArgs,
    /// Parameter file (key=value); fixes the rate when no rate flag is given
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Regime::Atom)]
    pub regime: Regime,
    #[arg(long, value_enum, default_value_t = MapChoice::Ansatz)]
    pub map: MapChoice,
    /// Collective coupling for the cavity regime without a parameter file
    /// (default 100κ)
    #[arg(long)]
    pub g_sqrt_n: Option<f64>,
    /// Output prefix: writes PREFIX.csv and PREFIX.json
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct CrossoverArgs {
    /// Parameter file; κ is taken from it and g√N is swept
    #[arg(long)]
    pub params: PathBuf,
    /// Target efficiency
    #[arg(long, default_value_t = 0.99)]
    pub target: f64,
    #[arg(long)]
    pub g_from: f64,
    #[arg(long)]
    pub g_to: f64,
    #[arg(long, default_value_t = 41)]
    pub points: usize,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct AsymptoteArgs {
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[command(flatten)]
    pub rate: RateArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Tier {
    Full,
    AtomLimited,
    AtomLimitedLossless,
    CavityLimited,
    CavityLimitedSpecial,
}

impl From<Tier> for ModelTier {
    fn from(t: Tier) -> Self {
        match t {
            Tier::Full => ModelTier::Full,
            Tier::AtomLimited => ModelTier::AtomLimited,
            Tier::AtomLimitedLossless => ModelTier::AtomLimitedLossless,
            Tier::CavityLimited => ModelTier::CavityLimited,
            Tier::CavityLimitedSpecial => ModelTier::CavityLimitedSpecial,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Retrieval,
    Storage,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub shape: ShapeArgs,
    #[command(flatten)]
    pub rate: RateArgs,
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Tier::AtomLimitedLossless)]
    pub tier: Tier,
    #[arg(long, value_enum, default_value_t = Mode::Retrieval)]
    pub mode: Mode,
    /// Retrieval drive written by `control` (PREFIX.csv, optional PREFIX.json)
    #[arg(long)]
    pub drive: Option<PathBuf>,
    /// Trajectory CSV
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OctArgs {
    /// Scenario JSON
    #[arg(long)]
    pub scenario: PathBuf,
    /// Scoreboard CSV; created with a header if missing, appended otherwise
    #[arg(long)]
    pub scoreboard: PathBuf,
    /// Optimized grid as JSON
    #[arg(long)]
    pub grid_out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let argv: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let argv: Vec<String> = argv.iter().map(|a| a.to_string_lossy().into_owned()).collect();
    match execute(&cli, &argv, &mut io::stdout()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute<W: Write + Send>(cli: &Cli, argv: &[String], out: &mut W) -> CliResult<()> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cli.jobs)
        .build()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    pool.install(|| match &cli.command {
        Command::Efficiency(a) => cmd_efficiency(a, out),
        Command::Sweep(a) => cmd_sweep(a, argv),
        Command::Control(a) => cmd_control(a, argv, out),
        Command::Crossover(a) => cmd_crossover(a, argv),
        Command::Asymptote(a) => cmd_asymptote(a, out),
        Command::Simulate(a) => cmd_simulate(a, argv, out),
        Command::Oct(a) => cmd_oct(a, argv, out),
    })
}

fn print_json<W: Write, T: Serialize>(out: &mut W, value: &T) -> CliResult<()> {
    let s = serde_json::to_string_pretty(value).map_err(|e| CliError::Usage(e.to_string()))?;
    writeln!(out, "{s}").map_err(|e| CliError::io(Path::new("<stdout>"), e))
}

fn create(path: &Path) -> CliResult<File> {
    File::create(path).map_err(|e| CliError::io(path, e))
}

fn quote_arg(a: &str) -> String {
    if !a.is_empty() && a.chars().all(|c| c.is_ascii_alphanumeric() || "-_=.,/:+".contains(c)) {
        a.to_string()
    } else {
        format!("'{}'", a.replace('\'', "'\\''"))
    }
}

/// `#`-prefixed metadata block: tool version, schema and argument vector.
pub fn write_metadata<W: Write>(w: &mut W, schema: &str, argv: &[String], extra: &[(&str, String)]) -> io::Result<()> {
    writeln!(w, "# cavmem {VERSION}")?;
    writeln!(w, "# schema: {schema}")?;
    writeln!(w, "# argv: {}", argv.iter().map(|a| quote_arg(a)).collect::<Vec<_>>().join(" "))?;
    for (k, v) in extra {
        writeln!(w, "# {k}: {v}")?;
    }
    Ok(())
}

/// One strategy evaluated at one rate.
#[derive(Clone, Debug, Default, Serialize)]
pub struct Evaluation {
    pub eta: f64,
    pub c: Option<f64>,
    pub critical_times: Vec<f64>,
    pub note: String,
}

pub fn evaluate(strategy: Strategy, shape: &PulseShape, rate: f64, oct_knots: usize) -> CliResult<Evaluation> {
    let e = match strategy {
        Strategy::Ansatz => {
            let r = optimize_c(shape, rate)?;
            Evaluation {
                eta: r.eta,
                c: Some(r.c),
                critical_times: r.map.critical_times.clone(),
                note: format!("iterations={}", r.iterations),
            }
        }
        Strategy::TwoTc => {
            let r = two_tc_map(shape, rate)?;
            Evaluation {
                eta: r.eta,
                c: Some(r.c),
                critical_times: r.map.critical_times.clone(),
                note: if r.fell_back { "single-tc".into() } else { String::new() },
            }
        }
        Strategy::CLeqOne => {
            let (c, eta) = c_leq_one_eta(shape, rate)?;
            Evaluation {
                eta,
                c: Some(c),
                ..Evaluation::default()
            }
        }
        Strategy::Asymptote => {
            let r = asymptote_for(shape, rate)?;
            Evaluation {
                eta: r.eta,
                note: r.validity_note,
                ..Evaluation::default()
            }
        }
        Strategy::Oct => {
            if !shape.is_truncated() {
                return Err(CliError::Usage("oct needs a truncated shape (--window or --benchmark-window)".into()));
            }
            let (t1, t2) = shape.domain();
            let grid = ControlGrid::zeros(t1, t2, oct_knots, Spacing::Uniform, Interpolation::Cubic)?;
            let params = MemoryParams::lossless_with_rate(rate, 1e3 * rate, 0.0);
            let r = oct::oct_optimize(shape, &params, ModelTier::AtomLimitedLossless, &grid, None, &OctOptions::default())?;
            Evaluation {
                eta: r.eta,
                note: format!("iterations={} converged={}", r.iterations, r.converged),
                ..Evaluation::default()
            }
        }
    };
    Ok(e)
}

fn cmd_efficiency<W: Write>(a: &EfficiencyArgs, out: &mut W) -> CliResult<()> {
    let shape = a.shape.build()?;
    let rate = a.rate.require(&shape)?;
    let e = evaluate(a.strategy, &shape, rate, oct::DEFAULT_KNOTS)?;
    print_json(
        out,
        &json!({
            "shape": shape.kind(),
            "tau": shape.tau(),
            "window": shape.domain(),
            "rate": rate,
            "strategy": a.strategy,
            "c": e.c,
            "critical_times": e.critical_times,
            "eta": e.eta,
            "note": e.note,
        }),
    )
}

pub fn axis_points(from: f64, to: f64, n: usize, log: bool) -> CliResult<Vec<f64>> {
    if n == 0 || !from.is_finite() || !to.is_finite() {
        return Err(CliError::Usage("axis needs finite bounds and at least one point".into()));
    }
    if log && !(from > 0.0 && to > 0.0) {
        return Err(CliError::Usage("logarithmic axis needs positive bounds".into()));
    }
    if n == 1 {
        return Ok(vec![from]);
    }
    Ok((0..n)
        .map(|i| {
            let u = i as f64 / (n - 1) as f64;
            if log {
                (from.ln() + u * (to.ln() - from.ln())).exp()
            } else {
                from + u * (to - from)
            }
        })
        .collect())
}

#[derive(Serialize)]
struct SweepRow {
    shape: &'static str,
    tau: f64,
    t1: f64,
    t2: f64,
    axis: &'static str,
    x: f64,
    rate: f64,
    strategy: &'static str,
    eta: Option<f64>,
    inefficiency: Option<f64>,
    c: Option<f64>,
    t_c: String,
    note: String,
}

fn cmd_sweep(a: &SweepArgs, argv: &[String]) -> CliResult<()> {
    if a.strategies.is_empty() {
        return Err(CliError::Usage("no strategies selected".into()));
    }
    let xs = axis_points(a.from, a.to, a.points, a.log)?;
    let mut file = create(&a.out)?;
    let shapes = a
        .shapes
        .iter()
        .map(|&k| {
            let s = build_shape(k, a.tau, a.window, a.benchmark_window, None)?;
            let scale = match a.axis {
                Axis::GammaTc => s.time_variance()?,
                Axis::GammaTau => s.tau(),
                Axis::Rate => 1.0,
            };
            Ok((s, scale))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let jobs: Vec<(usize, f64, Strategy)> = (0..shapes.len())
        .flat_map(|i| xs.iter().flat_map(move |&x| a.strategies.iter().map(move |&s| (i, x, s))))
        .collect();
    let rows: Vec<SweepRow> = jobs
        .par_iter()
        .map(|&(i, x, strategy)| {
            let (shape, scale) = &shapes[i];
            let rate = x / scale;
            let (t1, t2) = shape.domain();
            let mut row = SweepRow {
                shape: shape.kind().name(),
                tau: shape.tau(),
                t1,
                t2,
                axis: a.axis.name(),
                x,
                rate,
                strategy: strategy.name(),
                eta: None,
                inefficiency: None,
                c: None,
                t_c: String::new(),
                note: String::new(),
            };
            match evaluate(strategy, shape, rate, a.oct_knots) {
                Ok(e) => {
                    row.eta = Some(e.eta);
                    row.inefficiency = Some(1.0 - e.eta);
                    row.c = e.c;
                    row.t_c = e.critical_times.iter().map(|t| t.to_string()).collect::<Vec<_>>().join(";");
                    row.note = e.note;
                }
                Err(err) => row.note = format!("error: {err}"),
            }
            row
        })
        .collect();
    let io_err = |e| CliError::io(&a.out, e);
    write_metadata(&mut file, "sweep/1", argv, &[]).map_err(io_err)?;
    let mut w = csv::Writer::from_writer(file);
    for r in &rows {
        w.serialize(r).map_err(|e| CliError::io(&a.out, e.into()))?;
    }
    w.flush().map_err(io_err)
}

fn load_params(path: &Path) -> CliResult<MemoryParams> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    Ok(MemoryParams::parse(&text)?)
}

fn build_map(choice: MapChoice, shape: &PulseShape, rate: f64) -> CliResult<(RetrievalMap, f64)> {
    Ok(match choice {
        MapChoice::Ansatz => {
            let r = optimize_c(shape, rate)?;
            (r.map, r.eta)
        }
        MapChoice::TwoTc => {
            let r = two_tc_map(shape, rate)?;
            (r.map, r.eta)
        }
    })
}

/// Parameters and synthesis rate for a regime: from the file when given,
/// otherwise a lossless set at the requested rate.
fn regime_params(
    regime: Regime,
    rate: &RateArgs,
    params: Option<&Path>,
    g_sqrt_n: Option<f64>,
    shape: &PulseShape,
) -> CliResult<(MemoryParams, f64)> {
    if let Some(p) = params {
        if rate.given() {
            return Err(CliError::Usage("give either a rate or --params, not both".into()));
        }
        let p = load_params(p)?;
        let d = p.derived()?;
        let r = match regime {
            Regime::Atom => d.gamma_tilde,
            Regime::Cavity => d.kappa,
        };
        return Ok((p, r));
    }
    let r = rate.require(shape)?;
    let p = match regime {
        Regime::Atom => MemoryParams::lossless_with_rate(r, 1e3 * r, 0.0),
        Regime::Cavity => MemoryParams::new(g_sqrt_n.unwrap_or(100.0 * r), r, 0.0, 0.0, 0.0),
    };
    Ok((p, r))
}

fn synthesize(regime: Regime, map: &RetrievalMap, params: &MemoryParams, rate: f64) -> CliResult<ControlDrive> {
    Ok(match regime {
        Regime::Atom => synthesize_omega_atom(map, params.delta, rate)?,
        Regime::Cavity => synthesize_omega_cavity(map, params)?,
    })
}

fn with_ext(prefix: &Path, ext: &str) -> PathBuf {
    let mut s = prefix.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn cmd_control<W: Write>(a: &ControlArgs, argv: &[String], out: &mut W) -> CliResult<()> {
    let shape = a.shape.build()?;
    let (params, rate) = regime_params(a.regime, &a.rate, a.params.as_deref(), a.g_sqrt_n, &shape)?;
    let csv_path = with_ext(&a.out, "csv");
    let json_path = with_ext(&a.out, "json");
    let mut csv_file = create(&csv_path)?;
    let (map, eta) = build_map(a.map, &shape, rate)?;
    let drive = synthesize(a.regime, &map, &params, rate)?;
    let io_err = |e| CliError::io(&csv_path, e);
    write_metadata(&mut csv_file, "drive/1", argv, &[("sidecar", json_path.display().to_string())]).map_err(io_err)?;
    drive.write_csv(&mut csv_file).map_err(|e| match e {
        cavmem::Error::Io(source) => CliError::io(&csv_path, source),
        other => other.into(),
    })?;
    let sidecar = drive.sidecar_json()?;
    std::fs::write(&json_path, sidecar).map_err(|e| CliError::io(&json_path, e))?;
    print_json(
        out,
        &json!({
            "shape": shape.kind(),
            "regime": format!("{:?}", a.regime).to_lowercase(),
            "rate": rate,
            "c": map.c,
            "critical_times": map.critical_times,
            "eta": eta,
            "impulses": drive.impulses(),
            "post_tc_mode": drive.post_tc_mode(),
            "csv": csv_path,
            "sidecar": json_path,
        }),
    )
}

pub const B_99: f64 = 0.549;
pub const B_TWO_THIRDS: f64 = 0.128;

/// b with η(Γ T_c = b) = target for the untruncated sech pulse.
pub fn crossover_constant(target: f64) -> CliResult<f64> {
    if (target - 0.99).abs() < 1e-9 {
        return Ok(B_99);
    }
    if (target - 2.0 / 3.0).abs() < 1e-4 {
        return Ok(B_TWO_THIRDS);
    }
    sech_inverse(target)
}

/// Inverts the sech pipeline efficiency η(Γ T_c) by bisection.
pub fn sech_inverse(target: f64) -> CliResult<f64> {
    if !(target > 0.0 && target < 1.0) {
        return Err(CliError::Usage(format!("target efficiency must lie in (0, 1), got {target}")));
    }
    let shape = PulseShape::new(ShapeKind::Sech, 1.0)?;
    let tc = shape.time_variance()?;
    let eta = |x: f64| optimize_c(&shape, x / tc).map(|r| r.eta);
    let (mut lo, mut hi) = (1e-4, 2.0 * tc);
    if eta(lo)? >= target {
        return Err(CliError::Usage(format!("target {target} is below the resolvable range")));
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if eta(mid)? < target {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-10 {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Debug, Serialize)]
pub struct CrossoverRow {
    pub g_sqrt_n: f64,
    pub gamma: f64,
    pub kappa: f64,
    pub tc_atom: f64,
    pub tc_cavity: f64,
    pub tc_min: f64,
    pub limited_by: &'static str,
}

/// T_c^min along a g√N axis at fixed κ: b/Γ in the atom-limited branch and
/// b/κ in the cavity-limited one, the slower of the two bounding.
pub fn crossover_rows(params: &MemoryParams, b: f64, gs: &[f64]) -> CliResult<Vec<CrossoverRow>> {
    gs.iter()
        .map(|&g| {
            let p = MemoryParams { g_sqrt_n: g, ..*params };
            let d = p.derived()?;
            if !(d.gamma_eff > 0.0) {
                return Err(CliError::Usage("g√N must be positive".into()));
            }
            let tc_atom = b / d.gamma_eff;
            let tc_cavity = b / d.kappa;
            Ok(CrossoverRow {
                g_sqrt_n: g,
                gamma: d.gamma_eff,
                kappa: d.kappa,
                tc_atom,
                tc_cavity,
                tc_min: tc_atom.max(tc_cavity),
                limited_by: if tc_atom >= tc_cavity { "atom" } else { "cavity" },
            })
        })
        .collect()
}

fn cmd_crossover(a: &CrossoverArgs, argv: &[String]) -> CliResult<()> {
    let params = load_params(&a.params)?;
    let b = crossover_constant(a.target)?;
    let gs = axis_points(a.g_from, a.g_to, a.points, true)?;
    let mut file = create(&a.out)?;
    let rows = crossover_rows(&params, b, &gs)?;
    let io_err = |e| CliError::io(&a.out, e);
    write_metadata(
        &mut file,
        "crossover/1",
        argv,
        &[("target", a.target.to_string()), ("b", b.to_string())],
    )
    .map_err(io_err)?;
    let mut w = csv::Writer::from_writer(file);
    for r in &rows {
        w.serialize(r).map_err(|e| CliError::io(&a.out, e.into()))?;
    }
    w.flush().map_err(io_err)
}

fn cmd_asymptote<W: Write>(a: &AsymptoteArgs, out: &mut W) -> CliResult<()> {
    let shape = a.shape.build()?;
    let rate = a.rate.require(&shape)?;
    let r = asymptote_for(&shape, rate)?;
    print_json(
        out,
        &json!({
            "shape": shape.kind(),
            "tau": shape.tau(),
            "rate": rate,
            "threshold_gamma_tau": threshold_time(shape.kind()),
            "eta": r.eta,
            "inefficiency": 1.0 - r.eta,
            "regime": r.regime,
            "validity_note": r.validity_note,
        }),
    )
}

fn read_drive(prefix: &Path) -> CliResult<ControlDrive> {
    let csv_path = if prefix.extension().is_some_and(|e| e == "csv") {
        prefix.to_path_buf()
    } else {
        with_ext(prefix, "csv")
    };
    let json_path = csv_path.with_extension("json");
    let file = File::open(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    let sidecar = match std::fs::read_to_string(&json_path) {
        Ok(s) => Some(s),
        Err(e) if e.kind() == io::ErrorKind::NotFound => None,
        Err(e) => return Err(CliError::io(&json_path, e)),
    };
    Ok(ControlDrive::read(BufReader::new(file), sidecar.as_deref())?)
}

fn cmd_simulate<W: Write>(a: &SimulateArgs, argv: &[String], out: &mut W) -> CliResult<()> {
    let shape = a.shape.build()?;
    let tier = ModelTier::from(a.tier);
    let regime = match tier {
        ModelTier::CavityLimited | ModelTier::CavityLimitedSpecial => Regime::Cavity,
        _ => Regime::Atom,
    };
    let (params, rate) = regime_params(regime, &a.rate, a.params.as_deref(), None, &shape)?;
    let mut traj_file = a.out.as_deref().map(create).transpose()?;
    let (drive, eta_map) = match &a.drive {
        Some(p) => (read_drive(p)?, None),
        None => {
            let (map, eta) = build_map(MapChoice::Ansatz, &shape, rate)?;
            (synthesize(regime, &map, &params, rate)?, Some(eta))
        }
    };
    let (t1, t2) = drive.window();
    let (traj, eta) = match a.mode {
        Mode::Retrieval => {
            let traj = simulate_retrieval(&drive, &params, tier, t1, t2, Complex64::new(1.0, 0.0))?;
            let eta = overlap_efficiency(&traj, &shape)?;
            (traj, eta)
        }
        Mode::Storage => {
            let rev = time_reverse_drive(&drive, t1, t2)?;
            let input = storage_input(&shape, (t1, t2))?;
            simulate_storage(&rev, &input, &params, tier)?
        }
    };
    if let (Some(f), Some(path)) = (traj_file.as_mut(), a.out.as_deref()) {
        let io_err = |e| CliError::io(path, e);
        write_metadata(f, "trajectory/1", argv, &[]).map_err(io_err)?;
        traj.write_csv(f).map_err(|e| match e {
            cavmem::Error::Io(source) => CliError::io(path, source),
            other => other.into(),
        })?;
    }
    let lossless = tier.is_lossless(&params);
    print_json(
        out,
        &json!({
            "shape": shape.kind(),
            "tier": tier,
            "mode": format!("{:?}", a.mode).to_lowercase(),
            "rate": rate,
            "window": (t1, t2),
            "eta": eta,
            "eta_pipeline": eta_map,
            "conservation_residual": if lossless { Some(traj.max_conservation_residual()) } else { None },
            "loss_probability": loss_probability(&traj, params.gamma),
            "output_norm": traj.output_norm(),
        }),
    )
}

fn cmd_oct<W: Write>(a: &OctArgs, argv: &[String], out: &mut W) -> CliResult<()> {
    let text = std::fs::read_to_string(&a.scenario).map_err(|e| CliError::io(&a.scenario, e))?;
    let scenario = OctScenario::from_json(&text)?;
    let fresh = std::fs::metadata(&a.scoreboard).map(|m| m.len() == 0).unwrap_or(true);
    let mut board = OpenOptions::new()
        .create(true)
        .append(true)
        .open(&a.scoreboard)
        .map_err(|e| CliError::io(&a.scoreboard, e))?;
    let outcome = scenario.run()?;
    let io_err = |e| CliError::io(&a.scoreboard, e);
    if fresh {
        write_metadata(&mut board, "scoreboard/1", argv, &[]).map_err(io_err)?;
        writeln!(board, "{SCOREBOARD_HEADER}").map_err(io_err)?;
    }
    outcome.write_row(&mut board).map_err(|e| match e {
        cavmem::Error::Io(source) => CliError::io(&a.scoreboard, source),
        other => other.into(),
    })?;
    if let (Some(path), Some(res)) = (&a.grid_out, &outcome.result) {
        let s = serde_json::to_string_pretty(res).map_err(|e| CliError::Usage(e.to_string()))?;
        std::fs::write(path, s).map_err(|e| CliError::io(path, e))?;
    }
    print_json(out, &outcome)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_spacing() {
        assert_eq!(axis_points(1.0, 3.0, 3, false).unwrap(), vec![1.0, 2.0, 3.0]);
        let l = axis_points(1.0, 100.0, 3, true).unwrap();
        assert!((l[1] - 10.0).abs() < 1e-12);
        assert!(axis_points(0.0, 1.0, 3, true).is_err());
        assert!(axis_points(0.0, 1.0, 0, false).is_err());
    }

    #[test]
    fn argv_quoting() {
        assert_eq!(quote_arg("--shape"), "--shape");
        assert_eq!(quote_arg("a b"), "'a b'");
    }

    #[test]
    fn error_codes() {
        assert_eq!(CliError::from(cavmem::Error::Parse("x".into())).exit_code(), 2);
        assert_eq!(
            CliError::from(cavmem::Error::ConstraintViolated {
                t: 0.0,
                denominator: -1.0
            })
            .exit_code(),
            4
        );
        assert_eq!(CliError::io(Path::new("x"), io::Error::other("x")).exit_code(), 3);
    }

    #[test]
    fn crossover_branches() {
        let p = MemoryParams::new(1.0, 2.0, 0.0, 0.0, 0.0);
        let rows = crossover_rows(&p, B_99, &[0.5, 2.0, 8.0]).unwrap();
        assert_eq!(rows[0].limited_by, "atom");
        assert_eq!(rows[2].limited_by, "cavity");
        assert!((rows[1].tc_atom - rows[1].tc_cavity).abs() < 1e-15);
    }
}
