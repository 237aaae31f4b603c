//! The `finslerkit` command line.
//!
//! Exit status: 0 when everything requested succeeds and every check
//! passes, 1 on failed checks or numerical failures, 2 on configuration
//! and parse errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::autocoords::{AutoparallelChart, ChartKind, ChartRecord};
use crate::connection::{cartan_linear_delta, GeneralConnection};
use crate::dynamics::{
    exp_derivatives, exp_map, integrate_autoparallel, integrate_horizontal_autoparallel, ExpDerivatives, ExpInput,
    IntegratorConfig, Trajectory,
};
use crate::lagrangian::{builtin, BuiltinModel, FinslerLagrangian, SampleSpec, Signature, BUILTIN_NAMES};
use crate::point::TangentBundlePoint;
use crate::verify::{run_verify, Check, VerifyOptions, VerifyReport, REPORT_VERSION};

/// Environment variable capping the worker threads.
pub const THREADS_ENV: &str = "FINSLERKIT_THREADS";

#[derive(Debug, Clone, Parser)]
#[command(name = "finslerkit", version, about = "Finsler connections, exponential maps and autoparallel coordinates")]
pub struct RunConfig {
    /// Model file path or `builtin:<name>`.
    #[arg(long, global = true)]
    pub model: Option<String>,
    /// Seed for every sampled point.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Write the report here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// Relative tolerance of the adaptive integrator.
    #[arg(long, global = true, default_value_t = 1e-10)]
    pub rtol: f64,
    /// Absolute tolerance of the adaptive integrator.
    #[arg(long, global = true, default_value_t = 1e-12)]
    pub atol: f64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SignatureArg {
    Lorentzian,
    Riemannian,
}

impl From<SignatureArg> for Signature {
    fn from(s: SignatureArg) -> Self {
        match s {
            SignatureArg::Lorentzian => Signature::Lorentzian,
            SignatureArg::Riemannian => Signature::Riemannian,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Extended,
    Standard,
}

impl From<KindArg> for ChartKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Extended => ChartKind::Extended,
            KindArg::Standard => ChartKind::Standard,
        }
    }
}

/// Where sampled points live for file models.
#[derive(Debug, Clone, Args)]
pub struct Region {
    /// Base point (comma-separated); defaults to the builtin base or the origin.
    #[arg(long, allow_hyphen_values = true)]
    pub point: Option<String>,
    /// Half-width of the sampling cube around the base point.
    #[arg(long)]
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Sampled Finsler spacetime conditions.
    Validate {
        #[command(flatten)]
        region: Region,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, value_enum)]
        signature: Option<SignatureArg>,
    },
    /// N, its derivatives, D, Γ^δ and R at one point.
    Connection {
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        #[arg(long, allow_hyphen_values = true)]
        direction: String,
    },
    /// Autoparallel of the connection with initial velocity `direction`.
    Geodesic {
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        #[arg(long, allow_hyphen_values = true)]
        direction: String,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        t_end: f64,
        /// Evenly spaced output samples (0 keeps the integrator steps).
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// Horizontal Berwald autoparallel with seeds `(velocity, direction)`.
    Autoparallel {
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        #[arg(long, allow_hyphen_values = true)]
        velocity: String,
        #[arg(long, allow_hyphen_values = true)]
        direction: String,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        t_end: f64,
        #[arg(long, default_value_t = 100)]
        samples: usize,
    },
    /// `EXP_p(U, V)` and the derivative blocks at `(0, V)`.
    Expmap {
        #[arg(long, allow_hyphen_values = true)]
        point: String,
        #[arg(long, allow_hyphen_values = true)]
        velocity: String,
        #[arg(long, allow_hyphen_values = true)]
        direction: String,
    },
    /// Chart evaluations: forward with `--x-tilde/--y-tilde`, inverse with
    /// `--x/--y`, or a CSV grid with `--grid` and `--y-tilde`.
    Chart {
        #[arg(long, value_enum, default_value = "standard")]
        kind: KindArg,
        /// Chart base point.
        #[arg(long, allow_hyphen_values = true)]
        point: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        x_tilde: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        y_tilde: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        x: Option<String>,
        #[arg(long, allow_hyphen_values = true)]
        y: Option<String>,
        /// Grid points per axis over `[-radius, radius]^n`.
        #[arg(long)]
        grid: Option<usize>,
        #[arg(long, default_value_t = 0.2)]
        radius: f64,
    },
    /// The full property suite with a pass/fail table.
    Verify {
        #[command(flatten)]
        region: Region,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 20)]
        chart_samples: usize,
    },
}

#[derive(Debug)]
enum CliError {
    /// Exit status 2.
    Config(String),
    /// Exit status 1.
    Failure(String),
}

impl From<crate::error::Error> for CliError {
    fn from(e: crate::error::Error) -> Self {
        CliError::Failure(e.to_string())
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

/// What a subcommand produced.
struct Outcome {
    text: String,
    passed: bool,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    version: &'a str,
    command: &'a str,
    model: &'a str,
    #[serde(flatten)]
    body: T,
}

/// Parses a comma-separated vector.
pub fn parse_vector(s: &str) -> std::result::Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| {
            let t = t.trim();
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("'{t}' is not a finite number"))
        })
        .collect()
}

fn vector(name: &str, s: &str, n: usize) -> CliResult<Vec<f64>> {
    let v = parse_vector(s).map_err(|e| CliError::Config(format!("--{name}: {e}")))?;
    if v.len() != n {
        return Err(CliError::Config(format!(
            "--{name}: expected {n} components, got {}",
            v.len()
        )));
    }
    Ok(v)
}

fn load_model(spec: &str, region: Option<&Region>, signature: Option<SignatureArg>) -> CliResult<BuiltinModel> {
    let mut model = if let Some(name) = spec.strip_prefix("builtin:") {
        builtin(name).ok_or_else(|| {
            CliError::Config(format!(
                "unknown builtin model '{name}' (available: {})",
                BUILTIN_NAMES.join(", ")
            ))
        })?
    } else {
        let text =
            std::fs::read_to_string(spec).map_err(|e| CliError::Config(format!("cannot read model file '{spec}': {e}")))?;
        let l = FinslerLagrangian::from_json(&text).map_err(|e| CliError::Config(e.to_string()))?;
        let n = l.dimension();
        BuiltinModel::custom(spec, l, vec![0.0; n], 0.3, Signature::Lorentzian)
    };
    let n = model.dimension();
    if let Some(region) = region {
        if let Some(p) = &region.point {
            model.base = vector("point", p, n)?;
        }
        if let Some(r) = region.radius {
            if !(r > 0.0 && r.is_finite()) {
                return Err(CliError::Config("--radius must be positive".into()));
            }
            model.x_radius = r;
        }
    }
    if let Some(s) = signature {
        model.signature = s.into();
    }
    Ok(model)
}

fn to_json<T: Serialize>(command: &str, model: &str, body: T) -> CliResult<String> {
    let env = Envelope {
        version: REPORT_VERSION,
        command,
        model,
        body,
    };
    serde_json::to_string_pretty(&env)
        .map(|s| s + "\n")
        .map_err(|e| CliError::Failure(format!("serializing report: {e}")))
}

/// Parses `args` (program name first), runs the command and returns the
/// exit status. Reports go to `--output` or stdout, tables and
/// diagnostics to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let config = match RunConfig::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return 2;
    }
    match execute(&config) {
        Ok(outcome) => {
            if let Err(msg) = emit(&config, &outcome.text) {
                eprintln!("error: {msg}");
                return 2;
            }
            if outcome.passed {
                0
            } else {
                1
            }
        }
        Err(CliError::Config(msg)) => {
            eprintln!("error: {msg}");
            2
        }
        Err(CliError::Failure(msg)) => {
            eprintln!("error: {msg}");
            1
        }
    }
}

fn configure_threads() -> std::result::Result<(), String> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| format!("{THREADS_ENV} must be a positive integer, got '{value}'"))?;
    // a pool configured earlier in the process is kept
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn emit(config: &RunConfig, text: &str) -> std::result::Result<(), String> {
    match &config.output {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("cannot write '{}': {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn execute(config: &RunConfig) -> CliResult<Outcome> {
    if !(config.rtol > 0.0 && config.atol > 0.0) {
        return Err(CliError::Config("--rtol and --atol must be positive".into()));
    }
    let spec = config
        .model
        .as_deref()
        .ok_or_else(|| CliError::Config("--model is required".into()))?;
    let tolerances = IntegratorConfig::with_tolerances(config.rtol, config.atol);
    match &config.command {
        Command::Validate {
            region,
            samples,
            signature,
        } => {
            let model = load_model(spec, Some(region), *signature)?;
            validate(config, &model, *samples)
        }
        Command::Connection { point, direction } => {
            let model = load_model(spec, None, None)?;
            connection(config, &model, point, direction)
        }
        Command::Geodesic {
            point,
            direction,
            t_end,
            samples,
        } => {
            let model = load_model(spec, None, None)?;
            let n = model.dimension();
            let (x0, u) = (vector("point", point, n)?, vector("direction", direction, n)?);
            let c = GeneralConnection::cartan(model.lagrangian.clone());
            let cfg = IntegratorConfig {
                output_points: *samples,
                ..tolerances
            };
            let traj = integrate_autoparallel(&c, &x0, &u, *t_end, &cfg)?;
            trajectory_output(config, "geodesic", &model, &traj)
        }
        Command::Autoparallel {
            point,
            velocity,
            direction,
            t_end,
            samples,
        } => {
            let model = load_model(spec, None, None)?;
            let n = model.dimension();
            let x0 = vector("point", point, n)?;
            let u = vector("velocity", velocity, n)?;
            let v = vector("direction", direction, n)?;
            let c = GeneralConnection::cartan(model.lagrangian.clone());
            let cfg = IntegratorConfig {
                output_points: *samples,
                ..tolerances
            };
            let traj = integrate_horizontal_autoparallel(&c, &x0, &u, &v, *t_end, &cfg)?;
            trajectory_output(config, "autoparallel", &model, &traj)
        }
        Command::Expmap {
            point,
            velocity,
            direction,
        } => {
            let model = load_model(spec, None, None)?;
            let n = model.dimension();
            let input = ExpInput {
                base: vector("point", point, n)?,
                u: vector("velocity", velocity, n)?,
                v: vector("direction", direction, n)?,
            };
            expmap(config, &model, &input, &tolerances)
        }
        Command::Chart {
            kind,
            point,
            x_tilde,
            y_tilde,
            x,
            y,
            grid,
            radius,
        } => {
            let model = load_model(spec, None, None)?;
            let n = model.dimension();
            let base = match point {
                Some(p) => vector("point", p, n)?,
                None => model.base.clone(),
            };
            let c = GeneralConnection::cartan(model.lagrangian.clone());
            let chart = AutoparallelChart::new(c, base, (*kind).into()).map_err(|e| CliError::Config(e.to_string()))?;
            let req = ChartRequest {
                x_tilde: x_tilde.as_deref().map(|s| vector("x-tilde", s, n)).transpose()?,
                y_tilde: y_tilde.as_deref().map(|s| vector("y-tilde", s, n)).transpose()?,
                x: x.as_deref().map(|s| vector("x", s, n)).transpose()?,
                y: y.as_deref().map(|s| vector("y", s, n)).transpose()?,
                grid: *grid,
                radius: *radius,
            };
            chart_command(config, &model, &chart, req)
        }
        Command::Verify {
            region,
            samples,
            chart_samples,
        } => {
            let model = load_model(spec, Some(region), None)?;
            if *samples == 0 || *chart_samples == 0 {
                return Err(CliError::Config("--samples and --chart-samples must be positive".into()));
            }
            let opts = VerifyOptions {
                seed: config.seed,
                samples: *samples,
                chart_samples: *chart_samples,
            };
            let report = run_verify(&model, &opts);
            eprint!("{}", verify_table(&report));
            let text = match config.format.unwrap_or(Format::Json) {
                Format::Json => serde_json::to_string_pretty(&report)
                    .map(|s| s + "\n")
                    .map_err(|e| CliError::Failure(e.to_string()))?,
                Format::Csv => verify_csv(&report.checks),
            };
            Ok(Outcome {
                text,
                passed: report.passed,
            })
        }
    }
}

fn validate(config: &RunConfig, model: &BuiltinModel, samples: usize) -> CliResult<Outcome> {
    let mut spec = SampleSpec::new(model.base.clone(), config.seed);
    spec.samples = samples;
    spec.x_radius = model.x_radius;
    spec.signature = model.signature;
    let report = crate::lagrangian::validate_spacetime(&model.lagrangian, &spec);
    let passed = report.passed();
    let mut table = String::new();
    for c in &report.conditions {
        let _ = writeln!(
            table,
            "{:<4}  {:<28} {:>11.3e}  {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.condition,
            c.max_residual,
            c.description
        );
    }
    eprint!("{table}");
    let text = match config.format.unwrap_or(Format::Json) {
        Format::Json => {
            #[derive(Serialize)]
            struct Body<'a> {
                passed: bool,
                #[serde(flatten)]
                report: &'a crate::lagrangian::ValidationReport,
            }
            to_json("validate", &model.name, Body { passed, report: &report })?
        }
        Format::Csv => {
            let mut out = String::from("condition,passed,max_residual\n");
            for c in &report.conditions {
                let _ = writeln!(out, "{},{},{:?}", c.condition, c.passed, c.max_residual);
            }
            out
        }
    };
    Ok(Outcome { text, passed })
}

fn connection(config: &RunConfig, model: &BuiltinModel, point: &str, direction: &str) -> CliResult<Outcome> {
    let n = model.dimension();
    let p = TangentBundlePoint::new(vector("point", point, n)?, vector("direction", direction, n)?);
    let c = GeneralConnection::cartan(model.lagrangian.clone());
    let ev = c.eval(&p)?;
    let berwald = ev.berwald();
    let delta = cartan_linear_delta(&model.lagrangian, &p)?;
    let text = match config.format.unwrap_or(Format::Json) {
        Format::Json => {
            #[derive(Serialize)]
            struct Body<'a> {
                #[serde(flatten)]
                eval: &'a crate::connection::ConnectionEval,
                berwald: &'a crate::connection::Tensor3,
                delta_christoffel: &'a crate::connection::Tensor3,
            }
            to_json(
                "connection",
                &model.name,
                Body {
                    eval: &ev,
                    berwald: &berwald,
                    delta_christoffel: &delta,
                },
            )?
        }
        Format::Csv => {
            let mut out = String::from("quantity,a,b,c,value\n");
            for a in 0..n {
                for b in 0..n {
                    let _ = writeln!(out, "N,{},{},,{:?}", a + 1, b + 1, ev.n[a][b]);
                }
            }
            let tensors: [(&str, &crate::connection::Tensor3); 6] = [
                ("dn_y", &ev.dn_y),
                ("dn_x", &ev.dn_x),
                ("delta_n", &ev.delta_n),
                ("R", &ev.curvature),
                ("berwald", &berwald),
                ("delta_christoffel", &delta),
            ];
            for (name, t) in tensors {
                for a in 0..n {
                    for b in 0..n {
                        for k in 0..n {
                            let _ = writeln!(out, "{name},{},{},{},{:?}", a + 1, b + 1, k + 1, t[a][b][k]);
                        }
                    }
                }
            }
            out
        }
    };
    Ok(Outcome { text, passed: true })
}

fn trajectory_output(config: &RunConfig, command: &str, model: &BuiltinModel, traj: &Trajectory) -> CliResult<Outcome> {
    let text = match config.format.unwrap_or(Format::Csv) {
        Format::Csv => traj.to_csv(),
        Format::Json => to_json(command, &model.name, traj)?,
    };
    Ok(Outcome { text, passed: true })
}

fn expmap(config: &RunConfig, model: &BuiltinModel, input: &ExpInput, cfg: &IntegratorConfig) -> CliResult<Outcome> {
    let c = GeneralConnection::cartan(model.lagrangian.clone());
    let image = exp_map(&c, input, cfg)?;
    let derivatives = exp_derivatives(&c, &input.base, &input.v)?;
    let text = match config.format.unwrap_or(Format::Json) {
        Format::Json => {
            #[derive(Serialize)]
            struct Body<'a> {
                input: &'a ExpInput,
                image: &'a TangentBundlePoint,
                /// Derivative blocks at `(0, V)`.
                derivatives: &'a ExpDerivatives,
                jacobian_determinant: f64,
            }
            to_json(
                "expmap",
                &model.name,
                Body {
                    input,
                    image: &image,
                    derivatives: &derivatives,
                    jacobian_determinant: derivatives.jacobian_determinant(),
                },
            )?
        }
        Format::Csv => {
            let n = input.base.len();
            let header: Vec<String> = (1..=n)
                .map(|a| format!("x{a}"))
                .chain((1..=n).map(|a| format!("y{a}")))
                .collect();
            let row: Vec<String> = image.x.iter().chain(&image.y).map(|v| format!("{v:?}")).collect();
            format!("{}\n{}\n", header.join(","), row.join(","))
        }
    };
    Ok(Outcome { text, passed: true })
}

struct ChartRequest {
    x_tilde: Option<Vec<f64>>,
    y_tilde: Option<Vec<f64>>,
    x: Option<Vec<f64>>,
    y: Option<Vec<f64>>,
    grid: Option<usize>,
    radius: f64,
}

fn chart_command(
    config: &RunConfig,
    model: &BuiltinModel,
    chart: &AutoparallelChart,
    req: ChartRequest,
) -> CliResult<Outcome> {
    let n = chart.dimension();
    match req {
        ChartRequest {
            grid: Some(per_axis),
            y_tilde: Some(yt),
            x_tilde: None,
            x: None,
            y: None,
            radius,
        } => {
            if per_axis < 2 {
                return Err(CliError::Config("--grid needs at least 2 points per axis".into()));
            }
            let points: Vec<(Vec<f64>, Vec<f64>)> = (0..per_axis.pow(n as u32))
                .map(|mut k| {
                    let xt = (0..n)
                        .map(|_| {
                            let i = k % per_axis;
                            k /= per_axis;
                            -radius + 2.0 * radius * i as f64 / (per_axis - 1) as f64
                        })
                        .collect();
                    (xt, yt.clone())
                })
                .collect();
            let text = match config.format.unwrap_or(Format::Csv) {
                Format::Csv => chart.grid_csv(&points)?,
                Format::Json => {
                    let records = points
                        .iter()
                        .map(|(xt, yt)| {
                            let p = chart.to_manifold(xt, yt)?;
                            Ok(GridPoint {
                                x_tilde: xt.clone(),
                                y_tilde: yt.clone(),
                                x: p.x,
                                y: p.y,
                            })
                        })
                        .collect::<crate::error::Result<Vec<_>>>()?;
                    to_json(
                        "chart",
                        &model.name,
                        GridBody {
                            mode: "grid",
                            kind: chart.kind(),
                            base: chart.base(),
                            points: records,
                        },
                    )?
                }
            };
            Ok(Outcome { text, passed: true })
        }
        ChartRequest {
            x_tilde: Some(xt),
            y_tilde: Some(yt),
            x: None,
            y: None,
            grid: None,
            ..
        } => {
            let record = chart.record(&xt, &yt)?;
            let series = (1..=3)
                .map(|k| chart.series_forward(&xt, &yt, k))
                .collect::<crate::error::Result<Vec<_>>>()?;
            let text = match config.format.unwrap_or(Format::Json) {
                Format::Json => to_json(
                    "chart",
                    &model.name,
                    ForwardBody {
                        mode: "forward",
                        record: &record,
                        series: &series,
                    },
                )?,
                Format::Csv => chart.grid_csv(&[(xt, yt)])?,
            };
            Ok(Outcome { text, passed: true })
        }
        ChartRequest {
            x: Some(x),
            y: Some(y),
            x_tilde: None,
            y_tilde: None,
            grid: None,
            ..
        } => {
            let p = TangentBundlePoint::new(x, y);
            let guess = chart.inverse_series(&p)?;
            let (xt, yt) = chart.from_manifold(&p)?;
            let back = chart.to_manifold(&xt, &yt)?;
            let text = match config.format.unwrap_or(Format::Json) {
                Format::Json => to_json(
                    "chart",
                    &model.name,
                    InverseBody {
                        mode: "inverse",
                        kind: chart.kind(),
                        base: chart.base(),
                        point: &p,
                        x_tilde: &xt,
                        y_tilde: &yt,
                        series_guess: [&guess.0, &guess.1],
                        round_trip: back.max_abs_diff(&p),
                    },
                )?,
                Format::Csv => chart.grid_csv(&[(xt, yt)])?,
            };
            Ok(Outcome { text, passed: true })
        }
        _ => Err(CliError::Config(
            "chart needs --x-tilde and --y-tilde (forward), --x and --y (inverse), or --grid with --y-tilde".into(),
        )),
    }
}

#[derive(Serialize)]
struct GridPoint {
    x_tilde: Vec<f64>,
    y_tilde: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
}

#[derive(Serialize)]
struct GridBody<'a> {
    mode: &'a str,
    kind: ChartKind,
    base: &'a [f64],
    points: Vec<GridPoint>,
}

#[derive(Serialize)]
struct ForwardBody<'a> {
    mode: &'a str,
    record: &'a ChartRecord,
    /// Truncated series of orders 1, 2, 3.
    series: &'a [TangentBundlePoint],
}

#[derive(Serialize)]
struct InverseBody<'a> {
    mode: &'a str,
    kind: ChartKind,
    base: &'a [f64],
    point: &'a TangentBundlePoint,
    x_tilde: &'a [f64],
    y_tilde: &'a [f64],
    series_guess: [&'a Vec<f64>; 2],
    round_trip: f64,
}

fn bound(c: &Check) -> String {
    match (c.tolerance, c.range) {
        (Some(t), _) => format!("<= {t:e}"),
        (_, Some([lo, hi])) => format!("in [{lo}, {hi}]"),
        _ => String::new(),
    }
}

/// Human-readable pass/fail table.
pub fn verify_table(report: &VerifyReport) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "model {}  seed {}  samples {}  chart samples {}",
        report.model, report.seed, report.samples, report.chart_samples
    );
    let _ = writeln!(out, "{:<8}{:<42}{:>12}  {:<16}{}", "status", "check", "residual", "bound", "statement");
    for c in &report.checks {
        let _ = writeln!(
            out,
            "{:<8}{:<42}{:>12.3e}  {:<16}{}",
            if c.passed { "PASS" } else { "FAIL" },
            c.id,
            c.max_residual,
            bound(c),
            c.reference
        );
        if let Some(note) = &c.note {
            let _ = writeln!(out, "{:<50}note: {note}", "");
        }
    }
    let failed = report.checks.iter().filter(|c| !c.passed).count();
    let _ = writeln!(
        out,
        "{} of {} checks passed",
        report.checks.len() - failed,
        report.checks.len()
    );
    out
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn verify_csv(checks: &[Check]) -> String {
    let mut out = String::from("id,passed,max_residual,tolerance,range_min,range_max,samples,reference\n");
    let opt = |v: Option<f64>| v.map(|v| format!("{v:?}")).unwrap_or_default();
    for c in checks {
        let _ = writeln!(
            out,
            "{},{},{:?},{},{},{},{},{}",
            c.id,
            c.passed,
            c.max_residual,
            opt(c.tolerance),
            opt(c.range.map(|r| r[0])),
            opt(c.range.map(|r| r[1])),
            c.samples,
            csv_field(&c.reference)
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vectors_parse_with_signs_and_spaces() {
        assert_eq!(parse_vector("2,0").unwrap(), vec![2.0, 0.0]);
        assert_eq!(parse_vector("-1.5, 2e-3").unwrap(), vec![-1.5, 0.002]);
        assert!(parse_vector("1,,2").is_err());
        assert!(parse_vector("nan").is_err());
    }

    #[test]
    fn unknown_builtin_is_a_config_error() {
        let e = load_model("builtin:torus", None, None).unwrap_err();
        assert!(matches!(e, CliError::Config(_)));
    }

    #[test]
    fn missing_model_exits_2() {
        assert_eq!(run(["finslerkit", "connection", "--point", "1,0", "--direction", "1,0"]), 2);
    }

    #[test]
    fn csv_fields_are_quoted_when_needed() {
        assert_eq!(csv_field("a, b"), "\"a, b\"");
        assert_eq!(csv_field("plain"), "plain");
    }
}
