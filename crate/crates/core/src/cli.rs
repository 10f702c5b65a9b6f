//! The `carsym` command line.
//!
//! Exit codes: 0 pass, 1 usage or parse error, 2 violation found,
//! 3 precondition failed.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use serde_json::json;

use crate::car_expr::{parse_expression, CarPolynomial};
use crate::checker::{
    check_dyadic_invariance, check_extremality, check_spreadable_implies_even, check_symmetry, BatteryConfig,
    SymmetryKind, SymmetryVerdict,
};
use crate::error::{Error, Result};
use crate::folner::{
    ergodic_average, ergodic_average_distinct, sampled_ergodic_average, subset_report, write_csv, CountingMode,
    FolnerSubsetReport,
};
use crate::states::{StateDescriptor, StateFunctional, StateModel};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_VIOLATION: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "carsym", version, about = "Symbolic CAR algebra, symmetry batteries and Følner averages")]
struct Cli {
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true, env = "CAR_SYM_THREADS")]
    threads: Option<usize>,
    /// Output format (default: text for normal-order, csv for folner-report, json otherwise).
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write output to this file instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Text,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print the normal form of an expression.
    NormalOrder {
        /// Expression text, or @path to read it from a file.
        #[arg(required_unless_present = "expr_flag")]
        expr: Option<String>,
        #[arg(long = "expr", conflicts_with = "expr")]
        expr_flag: Option<String>,
    },
    /// Evaluate a state on an expression.
    Evaluate {
        #[arg(long)]
        state: String,
        #[arg(long)]
        expr: String,
    },
    /// Run a symmetry battery.
    Check {
        #[arg(long)]
        state: String,
        #[arg(long, value_enum)]
        symmetry: CheckArg,
        #[command(flatten)]
        battery: BatteryArgs,
    },
    /// Clustering test for product structure of a spreadable state.
    Extremality {
        #[arg(long)]
        state: String,
        /// Shift between the two copies of each test element.
        #[arg(long, default_value_t = 5)]
        separation: i64,
        #[command(flatten)]
        battery: BatteryArgs,
    },
    /// Exact subset counts of the Følner sets.
    FolnerReport {
        /// A single n or an inclusive range `a..b`.
        #[arg(long)]
        n: String,
        #[arg(long, default_value_t = 1)]
        m: u32,
    },
    /// Følner average of a state over translates of an expression.
    Average {
        #[arg(long)]
        state: String,
        #[arg(long)]
        expr: String,
        #[arg(long)]
        n: u32,
        /// Estimate from this many random elements instead of enumerating.
        #[arg(long)]
        sample: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value = "tuples")]
        mode: ModeArg,
    },
    /// Invariance of the pullback to Z/2^n under dyadic generators.
    DyadicCheck {
        #[arg(long)]
        state: String,
        #[arg(long)]
        n: u32,
        #[command(flatten)]
        battery: BatteryArgs,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum CheckArg {
    Exchangeable,
    Spreadable,
    Rotatable,
    Stationary,
    Even,
    SpreadableImpliesEven,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Tuples,
    Distinct,
}

#[derive(Args, Debug)]
struct BatteryArgs {
    #[arg(long, default_value_t = 4)]
    degree_cap: usize,
    /// Sites as an inclusive range `a..b` or a list `a,b,c`.
    #[arg(long, default_value = "0..4", allow_hyphen_values = true)]
    window: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    tolerance: Option<f64>,
}

impl BatteryArgs {
    fn config(&self) -> Result<BatteryConfig> {
        Ok(BatteryConfig {
            degree_cap: self.degree_cap,
            window: parse_list(&self.window)?,
            tolerance: self.tolerance,
            seed: self.seed,
            ..BatteryConfig::default()
        })
    }
}

/// `a..b` (inclusive), `a..=b`, a single value, or a comma list.
fn parse_list(text: &str) -> Result<Vec<i64>> {
    let bad = || Error::Invalid(format!("cannot read {text:?} as a range or list"));
    let text = text.trim();
    if let Some((a, b)) = text.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b): (i64, i64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(|t| t.trim().parse().map_err(|_| bad())).collect()
}

fn read_text(arg: &str) -> Result<String> {
    match arg.strip_prefix('@') {
        Some(path) => fs::read_to_string(path).map_err(|e| Error::Invalid(format!("{path}: {e}"))),
        None => Ok(arg.to_string()),
    }
}

fn parse_expr_arg(arg: &str) -> Result<CarPolynomial> {
    parse_expression(read_text(arg)?.trim())
}

fn json_descriptor(text: &str) -> Result<StateDescriptor> {
    serde_json::from_str(text).map_err(|e| Error::Invalid(format!("state descriptor: {e}")))
}

/// Inline JSON, a shorthand (`vacuum`, `product:MU`, `toeplitz:FILE`), or a
/// path to a JSON descriptor.
pub fn parse_state(arg: &str) -> Result<StateModel> {
    let arg = arg.trim();
    if arg.starts_with('{') {
        return json_descriptor(arg)?.build();
    }
    if arg == "vacuum" {
        return Ok(StateModel::vacuum());
    }
    if let Some(mu) = arg.strip_prefix("product:") {
        let mu: f64 = mu.parse().map_err(|_| Error::Invalid(format!("bad mu {mu:?}")))?;
        return StateModel::product(mu);
    }
    if let Some(path) = arg.strip_prefix("toeplitz:") {
        let text = read_text(&format!("@{path}"))?;
        // Either the coefficient map alone or a full descriptor.
        let value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Invalid(format!("{path}: {e}")))?;
        let descriptor = if value.get("type").is_some() {
            serde_json::from_value(value)
        } else {
            serde_json::from_value(json!({"type": "toeplitz", "q": value}))
        }
        .map_err(|e| Error::Invalid(format!("{path}: {e}")))?;
        return match descriptor {
            d @ StateDescriptor::Toeplitz { .. } => d.build(),
            _ => Err(Error::Invalid(format!("{path} does not describe a Toeplitz state"))),
        };
    }
    json_descriptor(&read_text(&format!("@{arg}"))?)?.build()
}

fn complex_json(c: Complex64) -> serde_json::Value {
    json!({"re": c.re, "im": c.im})
}

fn complex_text(c: Complex64) -> String {
    if c.im == 0.0 {
        format!("{}", c.re)
    } else {
        format!("{}{:+}i", c.re, c.im)
    }
}

fn to_json_line(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string(v).expect("json");
    s.push('\n');
    s
}

fn scalar_output(c: Complex64, extra: serde_json::Value, format: Format) -> String {
    match format {
        Format::Json => {
            let mut v = complex_json(c);
            if let (serde_json::Value::Object(a), serde_json::Value::Object(b)) = (&mut v, extra) {
                a.extend(b);
            }
            to_json_line(&v)
        }
        Format::Csv => format!("re,im\n{},{}\n", c.re, c.im),
        Format::Text => format!("{}\n", complex_text(c)),
    }
}

fn verdict_output(v: &SymmetryVerdict, format: Format) -> Result<String> {
    match format {
        Format::Json => Ok(to_json_line(&serde_json::to_value(v).expect("verdict serialises"))),
        Format::Csv => Err(Error::Invalid("csv output is not available for verdicts".into())),
        Format::Text => {
            let check = serde_json::to_value(v.check).expect("check kind");
            let mut out = format!(
                "{}: {}\n",
                check.as_str().unwrap_or_default(),
                if v.holds() { "holds" } else { "violated" }
            );
            let b = &v.battery;
            out.push_str(&format!(
                "  words {}, pairs {}, generators {}, degree cap {}, tolerance {:e}, max gap {:e}\n",
                b.word_count,
                b.pairs_tested,
                b.generators.len(),
                b.degree_cap,
                b.tolerance,
                b.max_gap
            ));
            if let Some(w) = &v.witness {
                let relation = serde_json::to_value(&w.relation).expect("relation");
                out.push_str(&format!(
                    "  witness {} on {}: lhs {}, rhs {}, gap {}\n",
                    relation,
                    w.polynomial,
                    complex_text(w.lhs),
                    complex_text(w.rhs),
                    w.gap
                ));
            }
            Ok(out)
        }
    }
}

fn report_output(reports: &[FolnerSubsetReport], format: Format) -> Result<String> {
    match format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_csv(reports, &mut buf)?;
            Ok(String::from_utf8(buf).expect("csv is utf-8"))
        }
        Format::Json => Ok(to_json_line(&serde_json::Value::Array(
            reports.iter().map(FolnerSubsetReport::json).collect(),
        ))),
        Format::Text => {
            let mut out = String::new();
            for r in reports {
                let row = r.csv_row();
                out.push_str(&format!(
                    "n={} m={} F={} G={} H={} K={} G/F={} 2^(m+n)={} G_full={}\n",
                    row.n, row.m, row.f_count, row.g_count, row.h_count, row.k_count, row.g_ratio, row.h_bound,
                    r.g_full_count
                ));
            }
            Ok(out)
        }
    }
}

fn verdict_code(v: &SymmetryVerdict) -> i32 {
    if v.holds() {
        EXIT_PASS
    } else {
        EXIT_VIOLATION
    }
}

fn execute(command: &Command, format: Option<Format>) -> Result<(String, i32)> {
    let fmt = |default| format.unwrap_or(default);
    match command {
        Command::NormalOrder { expr, expr_flag } => {
            let text = expr.as_deref().or(expr_flag.as_deref()).unwrap_or_default();
            let p = parse_expr_arg(text)?;
            let out = match fmt(Format::Text) {
                Format::Text => format!("{p}\n"),
                Format::Json => to_json_line(&json!({"polynomial": p.to_string()})),
                Format::Csv => format!("polynomial\n\"{p}\"\n"),
            };
            Ok((out, EXIT_PASS))
        }
        Command::Evaluate { state, expr } => {
            let s = parse_state(state)?;
            let value = s.evaluate(&parse_expr_arg(expr)?)?;
            Ok((scalar_output(value, json!({}), fmt(Format::Json)), EXIT_PASS))
        }
        Command::Check {
            state,
            symmetry,
            battery,
        } => {
            let s = parse_state(state)?;
            let config = battery.config()?;
            let v = match symmetry {
                CheckArg::Exchangeable => check_symmetry(&s, SymmetryKind::Exchangeable, &config)?,
                CheckArg::Spreadable => check_symmetry(&s, SymmetryKind::Spreadable, &config)?,
                CheckArg::Rotatable => check_symmetry(&s, SymmetryKind::Rotatable, &config)?,
                CheckArg::Stationary => check_symmetry(&s, SymmetryKind::Stationary, &config)?,
                CheckArg::Even => check_symmetry(&s, SymmetryKind::Even, &config)?,
                CheckArg::SpreadableImpliesEven => check_spreadable_implies_even(&s, &config)?,
            };
            Ok((verdict_output(&v, fmt(Format::Json))?, verdict_code(&v)))
        }
        Command::Extremality {
            state,
            separation,
            battery,
        } => {
            let v = check_extremality(&parse_state(state)?, *separation, &battery.config()?)?;
            Ok((verdict_output(&v, fmt(Format::Json))?, verdict_code(&v)))
        }
        Command::DyadicCheck { state, n, battery } => {
            let v = check_dyadic_invariance(&parse_state(state)?, *n, &battery.config()?)?;
            Ok((verdict_output(&v, fmt(Format::Json))?, verdict_code(&v)))
        }
        Command::FolnerReport { n, m } => {
            let ns = parse_list(n)?;
            if ns.iter().any(|&n| n < 1) {
                return Err(Error::Invalid("n must be at least 1".into()));
            }
            let reports = ns
                .iter()
                .map(|&n| subset_report(n as u32, *m))
                .collect::<Result<Vec<_>>>()?;
            Ok((report_output(&reports, fmt(Format::Csv))?, EXIT_PASS))
        }
        Command::Average {
            state,
            expr,
            n,
            sample,
            seed,
            mode,
        } => {
            let s = parse_state(state)?;
            let x = parse_expr_arg(expr)?;
            let (value, extra) = match (sample, mode) {
                (Some(count), _) => (
                    sampled_ergodic_average(&s, &x, *n, *count, *seed)?,
                    json!({"n": n, "method": "sampled", "samples": count, "seed": seed}),
                ),
                (None, ModeArg::Tuples) => (
                    ergodic_average(&s, &x, *n)?,
                    json!({"n": n, "method": "exact", "mode": CountingMode::Tuples}),
                ),
                (None, ModeArg::Distinct) => (
                    ergodic_average_distinct(&s, &x, *n)?,
                    json!({"n": n, "method": "exact", "mode": CountingMode::DistinctMaps}),
                ),
            };
            Ok((scalar_output(value, extra, fmt(Format::Json)), EXIT_PASS))
        }
    }
}

fn error_code(e: &Error) -> i32 {
    match e {
        Error::Precondition(_) => EXIT_PRECONDITION,
        _ => EXIT_USAGE,
    }
}

/// Runs the command line; output goes to `stdout` (or `--output`),
/// diagnostics to `stderr`. Returns the exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{}", e.render());
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => EXIT_PASS,
                _ => EXIT_USAGE,
            };
        }
    };
    let work = || execute(&cli.command, cli.format);
    let result = match cli.threads {
        Some(0) => Err(Error::Invalid("--threads must be at least 1".into())),
        Some(threads) => rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::Invalid(format!("thread pool: {e}")))
            .and_then(|pool| pool.install(work)),
        None => work(),
    };
    match result {
        Ok((text, code)) => {
            let written = match &cli.output {
                Some(path) => fs::write(path, &text).map_err(|e| format!("{}: {e}", path.display())),
                None => stdout.write_all(text.as_bytes()).map_err(|e| e.to_string()),
            };
            match written {
                Ok(()) => code,
                Err(e) => {
                    let _ = writeln!(stderr, "error: {e}");
                    EXIT_USAGE
                }
            }
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            error_code(&e)
        }
    }
}
