//! The `evaltk` command line.
//!
//! Every command resolves its parameters, runs, and returns a
//! [`CommandResult`] whose JSON payload carries the tool version, the fully
//! resolved parameters and a canonical `argv` that reproduces the run.

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::calibration::{e_to_p_with_floor, jeffreys_table, round_trip, validate_calibrator_with, CalibratorRegistry, DEFAULT_PANELS};
use crate::combination::{combine_report, p_average_counterexample, sequential_product};
use crate::datasplit::{derandomized_e, reproducibility_report, BernoulliDataset, SplitConfig, SplitMode};
use crate::serde_ext;
use crate::space::{expectation, max_p_excess, FiniteSpace, RandomVariable};
use crate::testing::{likelihood_ratio_e, log_optimality_check_with, np_p_variable, p_uniformity_check_with, HypothesisPair};
use crate::{EvalError, Result, DEFAULT_TOL};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable overriding [`DEFAULT_TOL`].
pub const TOL_ENV: &str = "EVALTK_TOL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Parser)]
#[command(name = "evaltk", version, about = "p-values, e-values and calibrators on exact finite spaces")]
pub struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Significant digits for printed numbers.
    #[arg(long, global = true, default_value_t = 6, value_parser = clap::value_parser!(u32).range(1..=17))]
    pub precision: u32,

    /// Seed for randomized commands.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Write the output here instead of stdout.
    #[arg(long, global = true)]
    pub output: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VariableKind {
    P,
    E,
    Calibrator,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeArg {
    Exhaustive,
    Seeds,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn a p-value into an e-value.
    Calibrate {
        /// `shafer` or `power:<kappa>`.
        #[arg(long, default_value = "shafer")]
        cal: String,
        #[arg(long)]
        p: f64,
    },
    /// Turn an e-value into a p-value with `min(1, 1/e)`.
    E2p {
        /// Nonnegative number or `inf`.
        #[arg(long)]
        e: String,
        #[arg(long, default_value_t = 0.0)]
        floor: f64,
    },
    /// Calibrate a p-value and map the e-value back.
    Roundtrip {
        #[arg(long, default_value = "shafer")]
        cal: String,
        #[arg(long)]
        p: f64,
    },
    /// Jeffreys's rule of thumb next to the Shafer calibrator.
    Jeffreys,
    /// Check a p-variable, an e-variable or a calibrator.
    Validate {
        #[arg(long, value_enum)]
        kind: VariableKind,
        #[arg(long, required_if_eq_any([("kind", "p"), ("kind", "e")]))]
        space: Option<PathBuf>,
        #[arg(long, required_if_eq_any([("kind", "p"), ("kind", "e")]))]
        rv: Option<PathBuf>,
        #[arg(long, default_value = "shafer")]
        cal: String,
        #[arg(long, default_value_t = 1000)]
        grid: usize,
    },
    /// Average e-variables, multiply sequential e-values, or show that
    /// averaging p-values fails.
    Combine {
        #[arg(long)]
        space: Option<PathBuf>,
        /// JSON list of `{"values": [...]}` objects.
        #[arg(long)]
        evars: Option<PathBuf>,
        /// JSON list of `{"values": [...]}` objects.
        #[arg(long)]
        pvars: Option<PathBuf>,
        /// Comma-separated per-round e-values for a martingale trace.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        factors: Option<Vec<String>>,
        #[arg(long)]
        demo_p_counterexample: bool,
        #[arg(long, default_value_t = 100)]
        grid: usize,
    },
    /// Likelihood-ratio e-variable and Neyman–Pearson p-variable of a pair.
    Lrtest {
        #[arg(long)]
        pair: PathBuf,
        /// Random competitors for the log-optimality check (needs `--seed`).
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, default_value_t = 10)]
        bins: usize,
    },
    /// Data-splitting e-values and their derandomization.
    Splitsim {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Exhaustive)]
        mode: ModeArg,
        #[arg(long, default_value_t = 100)]
        n_seeds: usize,
        #[arg(long, default_value_t = 0.5)]
        train_fraction: f64,
        #[arg(long, default_value_t = 0.5)]
        null_theta: f64,
        #[arg(long, default_value_t = 1.0)]
        smoothing: f64,
        #[arg(long)]
        threads: Option<usize>,
        /// Add the seed-spread report (needs `--seed`).
        #[arg(long)]
        reproducibility: bool,
        #[arg(long, value_delimiter = ',', default_value = "1,50")]
        batch_sizes: Vec<usize>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    DomainError,
    IoError,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::DomainError => 2,
            Status::IoError => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandResult {
    pub status: Status,
    pub payload: Value,
    pub exit_code: i32,
    /// Text for stdout; empty when `--output` received it.
    pub stdout: String,
    /// Diagnostics for stderr.
    pub stderr: String,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I) -> CommandResult
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => execute(&cli),
        Err(err) => {
            let text = err.render().to_string();
            match err.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => CommandResult {
                    status: Status::Ok,
                    payload: Value::Null,
                    exit_code: 0,
                    stdout: text,
                    stderr: String::new(),
                },
                _ => failure(Status::DomainError, Value::Null, text),
            }
        }
    }
}

fn failure(status: Status, params: Value, message: String) -> CommandResult {
    let payload = json!({
        "version": VERSION,
        "status": status,
        "params": params,
        "error": message,
    });
    CommandResult {
        status,
        exit_code: status.exit_code(),
        stdout: String::new(),
        stderr: format!("error: {}\n", message.trim_end()),
        payload,
    }
}

/// Tolerance for validity checks, from `EVALTK_TOL` when set.
pub fn tolerance() -> Result<f64> {
    match std::env::var(TOL_ENV) {
        Ok(raw) => {
            let tol: f64 = raw
                .trim()
                .parse()
                .map_err(|_| EvalError::domain(format!("{TOL_ENV}=`{raw}` is not a number")))?;
            if !(tol >= 0.0) {
                return Err(EvalError::domain(format!("{TOL_ENV} must be nonnegative")));
            }
            Ok(tol)
        }
        Err(_) => Ok(DEFAULT_TOL),
    }
}

/// Rounds to `digits` significant digits.
pub fn round_sig(x: f64, digits: u32) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{:.*e}", digits.saturating_sub(1) as usize, x)
        .parse()
        .unwrap_or(x)
}

fn round_value(v: &mut Value, digits: u32) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = round_sig(n.as_f64().unwrap(), digits);
            *v = serde_ext::to_value(x);
        }
        Value::Array(items) => items.iter_mut().for_each(|i| round_value(i, digits)),
        Value::Object(map) => map.values_mut().for_each(|i| round_value(i, digits)),
        _ => {}
    }
}

fn fmt_num(x: f64, digits: u32) -> String {
    if x == f64::INFINITY {
        "inf".to_owned()
    } else {
        round_sig(x, digits).to_string()
    }
}

struct Outcome {
    result: Value,
    csv: String,
}

fn execute(cli: &Cli) -> CommandResult {
    let params = resolved_params(cli);
    let outcome = match dispatch(cli) {
        Ok(outcome) => outcome,
        Err(err) => {
            let status = if err.is_io() { Status::IoError } else { Status::DomainError };
            return failure(status, params, err.to_string());
        }
    };
    let mut payload = json!({
        "version": VERSION,
        "status": Status::Ok,
        "command": command_name(&cli.command),
        "params": params,
        "result": outcome.result,
    });
    round_value(&mut payload["result"], cli.precision);
    let text = match cli.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&payload).expect("JSON values serialize");
            s.push('\n');
            s
        }
        Format::Csv => outcome.csv,
    };
    let stdout = match &cli.output {
        Some(path) => {
            if let Err(err) = fs::write(path, &text) {
                return failure(Status::IoError, payload["params"].clone(), format!("{}: {err}", path.display()));
            }
            String::new()
        }
        None => text,
    };
    CommandResult {
        status: Status::Ok,
        exit_code: 0,
        payload,
        stdout,
        stderr: String::new(),
    }
}

fn command_name(cmd: &Command) -> &'static str {
    match cmd {
        Command::Calibrate { .. } => "calibrate",
        Command::E2p { .. } => "e2p",
        Command::Roundtrip { .. } => "roundtrip",
        Command::Jeffreys => "jeffreys",
        Command::Validate { .. } => "validate",
        Command::Combine { .. } => "combine",
        Command::Lrtest { .. } => "lrtest",
        Command::Splitsim { .. } => "splitsim",
    }
}

fn path_str(p: &Path) -> String {
    p.display().to_string()
}

/// Parameters with defaults filled in, plus an `argv` that reruns the same
/// computation.
fn resolved_params(cli: &Cli) -> Value {
    let mut argv: Vec<String> = vec![command_name(&cli.command).to_owned()];
    let mut push = |flag: &str, value: Option<String>| {
        argv.push(format!("--{flag}"));
        if let Some(v) = value {
            argv.push(v);
        }
    };
    let mut fields = serde_json::Map::new();
    let mut set = |k: &str, v: Value| {
        fields.insert(k.to_owned(), v);
    };
    match &cli.command {
        Command::Calibrate { cal, p } | Command::Roundtrip { cal, p } => {
            set("cal", json!(cal));
            set("p", json!(p));
            push("cal", Some(cal.clone()));
            push("p", Some(p.to_string()));
        }
        Command::E2p { e, floor } => {
            set("e", json!(e));
            set("floor", json!(floor));
            push("e", Some(e.clone()));
            push("floor", Some(floor.to_string()));
        }
        Command::Jeffreys => {}
        Command::Validate { kind, space, rv, cal, grid } => {
            set("kind", json!(kind));
            push("kind", Some(serde_json::to_value(kind).unwrap().as_str().unwrap().to_owned()));
            if let Some(s) = space {
                set("space", json!(path_str(s)));
                push("space", Some(path_str(s)));
            }
            if let Some(r) = rv {
                set("rv", json!(path_str(r)));
                push("rv", Some(path_str(r)));
            }
            set("cal", json!(cal));
            set("grid", json!(grid));
            push("cal", Some(cal.clone()));
            push("grid", Some(grid.to_string()));
        }
        Command::Combine {
            space,
            evars,
            pvars,
            factors,
            demo_p_counterexample,
            grid,
        } => {
            for (name, path) in [("space", space), ("evars", evars), ("pvars", pvars)] {
                if let Some(p) = path {
                    set(name, json!(path_str(p)));
                    push(name, Some(path_str(p)));
                }
            }
            if let Some(f) = factors {
                set("factors", json!(f));
                push("factors", Some(f.join(",")));
            }
            set("demo_p_counterexample", json!(demo_p_counterexample));
            if *demo_p_counterexample {
                push("demo-p-counterexample", None);
            }
            set("grid", json!(grid));
            push("grid", Some(grid.to_string()));
        }
        Command::Lrtest { pair, trials, bins } => {
            set("pair", json!(path_str(pair)));
            push("pair", Some(path_str(pair)));
            set("trials", json!(trials));
            if let Some(t) = trials {
                push("trials", Some(t.to_string()));
            }
            set("bins", json!(bins));
            push("bins", Some(bins.to_string()));
        }
        Command::Splitsim {
            data,
            mode,
            n_seeds,
            train_fraction,
            null_theta,
            smoothing,
            threads,
            reproducibility,
            batch_sizes,
        } => {
            set("data", json!(path_str(data)));
            set("mode", json!(mode));
            set("n_seeds", json!(n_seeds));
            set("train_fraction", json!(train_fraction));
            set("null_theta", json!(null_theta));
            set("smoothing", json!(smoothing));
            set("threads", json!(threads));
            set("reproducibility", json!(reproducibility));
            set("batch_sizes", json!(batch_sizes));
            push("data", Some(path_str(data)));
            push("mode", Some(serde_json::to_value(mode).unwrap().as_str().unwrap().to_owned()));
            push("n-seeds", Some(n_seeds.to_string()));
            push("train-fraction", Some(train_fraction.to_string()));
            push("null-theta", Some(null_theta.to_string()));
            push("smoothing", Some(smoothing.to_string()));
            if let Some(t) = threads {
                push("threads", Some(t.to_string()));
            }
            if *reproducibility {
                push("reproducibility", None);
            }
            push(
                "batch-sizes",
                Some(batch_sizes.iter().map(usize::to_string).collect::<Vec<_>>().join(",")),
            );
        }
    }
    set("format", json!(cli.format));
    set("precision", json!(cli.precision));
    set("seed", json!(cli.seed));
    set("tol", tolerance().map_or(Value::Null, |t| json!(t)));
    push("format", Some(serde_json::to_value(cli.format).unwrap().as_str().unwrap().to_owned()));
    push("precision", Some(cli.precision.to_string()));
    if let Some(s) = cli.seed {
        push("seed", Some(s.to_string()));
    }
    set("argv", json!(argv));
    Value::Object(fields)
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| EvalError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    Ok(serde_json::from_str(&text)?)
}

fn parse_ext(raw: &str) -> Result<f64> {
    let raw = raw.trim();
    if raw == "inf" {
        return Ok(f64::INFINITY);
    }
    raw.parse()
        .map_err(|_| EvalError::domain(format!("`{raw}` is not a number")))
}

fn require_seed(cli: &Cli, what: &str) -> Result<u64> {
    cli.seed
        .ok_or_else(|| EvalError::domain(format!("{what} is randomized and needs --seed")))
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    let tol = tolerance()?;
    let digits = cli.precision;
    let num = |x: f64| fmt_num(x, digits);
    let registry = CalibratorRegistry::with_builtins();

    let (result, csv) = match &cli.command {
        Command::Calibrate { cal, p } => {
            let calibrator = registry.parse(cal)?;
            let e = calibrator.calibrate(*p)?;
            (
                json!({ "calibrator": calibrator.spec(), "p": p, "e": serde_ext::to_value(e) }),
                format!("calibrator,p,e\n{},{},{}\n", calibrator.spec(), num(*p), num(e)),
            )
        }
        Command::E2p { e, floor } => {
            let e = parse_ext(e)?;
            let p = e_to_p_with_floor(e, *floor)?;
            (
                json!({ "e": serde_ext::to_value(e), "p": p }),
                format!("e,p\n{},{}\n", num(e), num(p)),
            )
        }
        Command::Roundtrip { cal, p } => {
            let calibrator = registry.parse(cal)?;
            let rt = round_trip(*p, calibrator.as_ref())?;
            (
                json!({
                    "calibrator": calibrator.spec(),
                    "p_in": rt.p_in,
                    "e": serde_ext::to_value(rt.e_mid),
                    "p_out": rt.p_out,
                    "loss_factor": rt.loss_factor(),
                    "significant_in": rt.p_in <= 0.05,
                    "significant_out": rt.p_out <= 0.05,
                }),
                format!("p_in,e,p_out\n{},{},{}\n", num(rt.p_in), num(rt.e_mid), num(rt.p_out)),
            )
        }
        Command::Jeffreys => {
            let rows = jeffreys_table();
            let mut csv = String::from("p,jeffreys_e,shafer_e,deviation\n");
            for r in &rows {
                let dev = serde_json::to_value(r.deviation)?;
                csv.push_str(&format!(
                    "{},{},{},{}\n",
                    num(r.p),
                    num(r.jeffreys_e),
                    num(r.shafer_e),
                    dev.as_str().unwrap_or_default()
                ));
            }
            (json!({ "rows": rows }), csv)
        }
        Command::Validate { kind, space, rv, cal, grid } => match kind {
            VariableKind::Calibrator => {
                let calibrator = registry.parse(cal)?;
                let report = validate_calibrator_with(calibrator.as_ref(), *grid, DEFAULT_PANELS, tol)?;
                let mut result = serde_json::to_value(&report)?;
                result["kind"] = json!("calibrator");
                result["valid"] = json!(report.passed());
                let csv = format!(
                    "kind,valid,monotone,integral,evar_check\ncalibrator,{},{},{},{}\n",
                    report.passed(),
                    report.monotone,
                    num(report.integral),
                    report.evar_check
                );
                (result, csv)
            }
            VariableKind::P | VariableKind::E => {
                let space: FiniteSpace = read_json(space.as_deref().expect("clap requires --space"))?;
                let rv: RandomVariable = read_json(rv.as_deref().expect("clap requires --rv"))?;
                if *kind == VariableKind::E {
                    let mean = expectation(&space, &rv)?;
                    let valid = mean <= 1.0 + tol;
                    (
                        json!({ "kind": "e", "valid": valid, "expectation": serde_ext::to_value(mean), "tol": tol }),
                        format!("kind,valid,expectation\ne,{valid},{}\n", num(mean)),
                    )
                } else {
                    let excess = max_p_excess(&space, &rv)?;
                    let valid = excess.is_none_or(|x| x <= tol);
                    (
                        json!({ "kind": "p", "valid": valid, "max_excess": excess, "tol": tol }),
                        format!("kind,valid,max_excess\np,{valid},{}\n", excess.map(num).unwrap_or_default()),
                    )
                }
            }
        },
        Command::Combine {
            space,
            evars,
            pvars,
            factors,
            demo_p_counterexample,
            grid,
        } => {
            if let Some(factors) = factors {
                let values = factors.iter().map(|f| parse_ext(f)).collect::<Result<Vec<_>>>()?;
                let trace = sequential_product(&values)?;
                let csv = trace.to_csv(num);
                (
                    json!({ "trace": trace, "final_wealth": serde_ext::to_value(trace.final_wealth()) }),
                    csv,
                )
            } else if *demo_p_counterexample {
                let cert = p_average_counterexample(*grid)?;
                let verified = cert.verify()?;
                let evars = cert
                    .p_vars
                    .iter()
                    .map(|p| p.try_map(crate::calibration::shafer_calibrate))
                    .collect::<Result<Vec<_>>>()?;
                let report = combine_report(&cert.space, &evars, &cert.p_vars)?;
                let csv = format!(
                    "threshold,violation,e_mean_valid,p_violation\n{},{},{},{}\n",
                    num(cert.threshold),
                    num(cert.violation),
                    report.e_mean_valid,
                    num(report.p_violation.unwrap_or(0.0))
                );
                (
                    json!({
                        "certificate": cert,
                        "verified": verified,
                        "threshold": cert.threshold,
                        "violation": cert.violation,
                        "e_calibrator": "shafer",
                        "e_mean_valid": report.e_mean_valid,
                        "e_mean_expectation": report.e_mean_expectation,
                        "p_violation": report.p_violation,
                    }),
                    csv,
                )
            } else {
                let space: FiniteSpace = read_json(
                    space
                        .as_deref()
                        .ok_or_else(|| EvalError::domain("combine needs --space, --factors or --demo-p-counterexample"))?,
                )?;
                let evars: Vec<RandomVariable> =
                    read_json(evars.as_deref().ok_or_else(|| EvalError::domain("combine needs --evars"))?)?;
                let pvars: Vec<RandomVariable> = match pvars {
                    Some(p) => read_json(p)?,
                    None => Vec::new(),
                };
                let report = combine_report(&space, &evars, &pvars)?;
                let mut csv = String::from("outcome,e_mean,e_mean_as_p");
                if report.p_mean.is_some() {
                    csv.push_str(",p_mean");
                }
                csv.push('\n');
                for (i, label) in space.outcomes().iter().enumerate() {
                    csv.push_str(&format!(
                        "{label},{},{}",
                        num(report.e_mean.values()[i]),
                        num(report.e_mean_as_p.values()[i])
                    ));
                    if let Some(p) = &report.p_mean {
                        csv.push_str(&format!(",{}", num(p.values()[i])));
                    }
                    csv.push('\n');
                }
                (serde_json::to_value(&report)?, csv)
            }
        }
        Command::Lrtest { pair, trials, bins } => {
            let pair: HypothesisPair = read_json(pair)?;
            let e = likelihood_ratio_e(&pair);
            let p = np_p_variable(&pair);
            let mut result = json!({
                "outcomes": pair.null().outcomes(),
                "e": e.values().iter().map(|&x| serde_ext::to_value(x)).collect::<Vec<_>>(),
                "p": p.values(),
                "e_expectation": serde_ext::to_value(expectation(pair.null(), &e)?),
                "shared_support": pair.shares_support(),
                "uniformity": p_uniformity_check_with(pair.null(), &p, *bins, tol)?,
            });
            if let Some(n) = trials {
                let seed = require_seed(cli, "the log-optimality check")?;
                result["log_optimality"] = serde_json::to_value(log_optimality_check_with(&pair, *n, seed, tol)?)?;
            }
            let mut csv = String::from("outcome,e,p\n");
            for (i, label) in pair.null().outcomes().iter().enumerate() {
                csv.push_str(&format!("{label},{},{}\n", num(e.values()[i]), num(p.values()[i])));
            }
            (result, csv)
        }
        Command::Splitsim {
            data,
            mode,
            n_seeds,
            train_fraction,
            null_theta,
            smoothing,
            threads,
            reproducibility,
            batch_sizes,
        } => {
            let text = fs::read_to_string(data)
                .map_err(|e| EvalError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", data.display()))))?;
            let dataset: BernoulliDataset = text.parse()?;
            let config = SplitConfig {
                train_fraction: *train_fraction,
                null_theta: *null_theta,
                smoothing: *smoothing,
                threads: *threads,
            };
            let split_mode = match mode {
                ModeArg::Exhaustive => SplitMode::Exhaustive,
                ModeArg::Seeds => {
                    let first = require_seed(cli, "seeds mode")?;
                    SplitMode::Seeds((0..*n_seeds as u64).map(|i| first + i).collect())
                }
            };
            let report = derandomized_e(&dataset, &split_mode, &config)?;
            let csv = report.to_csv(num);
            let mut result = serde_json::to_value(&report)?;
            if *reproducibility {
                let first = require_seed(cli, "the reproducibility report")?;
                let repro = reproducibility_report(&dataset, *n_seeds, first, batch_sizes, &config)?;
                result["reproducibility"] = serde_json::to_value(repro)?;
            }
            (result, csv)
        }
    };
    Ok(Outcome { result, csv })
}
