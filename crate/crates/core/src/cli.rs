//! Command-line surface.
//!
//! Exit codes: 0 when every check passes, 1 when a checked property fails,
//! 2 for usage or input errors. Numeric output is in nats unless `--bits`.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::ops::RangeInclusive;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bounds::{self, ConvergenceReport, NormEstimateOptions, VerifyOptions};
use crate::entanglement::{self, eof_from_concurrence, EofOptions, Separability};
use crate::error::{Error, Result};
use crate::fcs::{validate, Fcs, TOL_ISOMETRY};
use crate::models::{self, ModelSpec};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const THREADS_ENV: &str = "FCS_ENTANGLE_THREADS";
/// Largest accepted `|optimizer - concurrence formula|` in `eof`.
pub const CONCURRENCE_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(name = "fcs-entangle", version, about = "Entanglement of finitely correlated spin chains")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check the isometry, unitality and purity conditions.
    Validate(CommonArgs),
    /// Transfer-operator eigenvalues and envelope constants.
    Spectrum(SpectrumArgs),
    /// Entanglement of formation of the spin-memory state and of an interval.
    Eof(EofArgs),
    /// Spin-versus-interval convergence table.
    Converge(ConvergeArgs),
    /// Spin-versus-distant-block decay table.
    Distant(DistantArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// Builtin name (`aklt`, `product:d=2,basis=0`, `random:d=2,b=2,seed=1`) or JSON file.
    #[arg(value_name = "MODEL")]
    pub model_positional: Option<String>,
    #[arg(long = "model", value_name = "MODEL", conflicts_with = "model_positional")]
    pub model_flag: Option<String>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl CommonArgs {
    fn model_ref(&self) -> Result<&str> {
        self.model_positional
            .as_deref()
            .or(self.model_flag.as_deref())
            .ok_or_else(|| Error::InvalidModelRef("no model given".into()))
    }
}

#[derive(Debug, Args)]
pub struct OptimizerArgs {
    #[arg(long, default_value_t = EofOptions::default().restarts)]
    pub restarts: usize,
    #[arg(long)]
    pub ensemble_size: Option<usize>,
    #[arg(long, default_value_t = EofOptions::default().seed)]
    pub seed: u64,
    /// Report entropies in bits instead of nats.
    #[arg(long)]
    pub bits: bool,
}

impl OptimizerArgs {
    fn eof_options(&self) -> EofOptions {
        EofOptions {
            restarts: self.restarts.max(1),
            ensemble_size: self.ensemble_size,
            seed: self.seed,
            ..Default::default()
        }
    }
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, default_value_t = 0.05)]
    pub margin: f64,
}

#[derive(Debug, Args)]
pub struct EofArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    /// Also compute the EoF of the first `n` spins across the 1|[2,n] cut.
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct ConvergeArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    /// Inclusive range such as `2..6`, or a single value.
    #[arg(long, value_parser = parse_range, default_value = "2..6")]
    pub n: RangeInclusive<usize>,
    #[arg(long, default_value_t = 2e-3)]
    pub tol_opt: f64,
    #[arg(long, default_value_t = 0.05)]
    pub margin: f64,
}

#[derive(Debug, Args)]
pub struct DistantArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(flatten)]
    pub optimizer: OptimizerArgs,
    #[arg(long, value_parser = parse_range, default_value = "3..6")]
    pub p: RangeInclusive<usize>,
    /// The distant block is `[p, p + n_offset]`.
    #[arg(long, default_value_t = 1)]
    pub n_offset: usize,
    #[arg(long, default_value_t = 2e-3)]
    pub tol_opt: f64,
    #[arg(long, default_value_t = 0.05)]
    pub margin: f64,
}

/// `a..b` (inclusive) or `a`.
pub fn parse_range(text: &str) -> std::result::Result<RangeInclusive<usize>, String> {
    let parse = |s: &str| s.trim().parse::<usize>().map_err(|e| format!("`{s}`: {e}"));
    let range = match text.split_once("..") {
        Some((a, b)) => parse(a)?..=parse(b.strip_prefix('=').unwrap_or(b))?,
        None => {
            let v = parse(text)?;
            v..=v
        }
    };
    if range.is_empty() {
        return Err(format!("empty range `{text}`"));
    }
    Ok(range)
}

fn open_output<'a>(path: &Option<PathBuf>, stdout: &'a mut dyn Write) -> Result<Box<dyn Write + 'a>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(stdout),
    })
}

fn write_table<T: Serialize>(rows: &[T], out: &mut dyn Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<T: Serialize>(value: &T, out: &mut dyn Write) -> Result<()> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn load(common: &CommonArgs) -> Result<ModelSpec> {
    models::resolve(common.model_ref()?)
}

fn load_fcs(common: &CommonArgs) -> Result<Fcs> {
    Fcs::new(load(common)?.model)
}

fn verify_options(opt: &OptimizerArgs, tol_opt: f64, margin: f64) -> VerifyOptions {
    VerifyOptions { eof: opt.eof_options(), tol_opt, margin, ..Default::default() }
}

fn cmd_validate(args: &CommonArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    let spec = models::resolve_unchecked(args.model_ref()?)?;
    let report = validate(&spec.model, TOL_ISOMETRY);
    let mut out = open_output(&args.out, stdout)?;
    match args.format {
        Format::Csv => write_table(std::slice::from_ref(&report), &mut out)?,
        Format::Json => write_json(&report, &mut out)?,
    }
    out.flush()?;
    if report.all_ok() {
        Ok(EXIT_PASS)
    } else {
        writeln!(stderr, "validation failed for {spec}: {}", report.details)?;
        Ok(EXIT_CHECK_FAILED)
    }
}

#[derive(Debug, Serialize)]
struct EigenvalueRow {
    index: usize,
    re: f64,
    im: f64,
    modulus: f64,
}

#[derive(Debug, Serialize)]
struct SpectrumOutput {
    eigenvalues: Vec<EigenvalueRow>,
    envelope: bounds::EnvelopeParams,
    constants: &'static str,
}

fn cmd_spectrum(args: &SpectrumArgs, stdout: &mut dyn Write) -> Result<i32> {
    let fcs = load_fcs(&args.common)?;
    let params = bounds::envelope_params(&fcs, args.margin, 30, &NormEstimateOptions::default())?;
    let eigenvalues = fcs
        .transfer()
        .spectrum
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(index, z)| EigenvalueRow { index, re: z.re, im: z.im, modulus: z.norm() })
        .collect::<Vec<_>>();
    let output = SpectrumOutput { eigenvalues, envelope: params, constants: "estimated-constant" };
    let mut out = open_output(&args.common.out, stdout)?;
    match args.common.format {
        Format::Csv => {
            write_table(&output.eigenvalues, &mut out)?;
            writeln!(out)?;
            write_table(std::slice::from_ref(&output.envelope), &mut out)?;
        }
        Format::Json => write_json(&output, &mut out)?,
    }
    out.flush()?;
    Ok(EXIT_PASS)
}

#[derive(Debug, Serialize)]
struct EofOutput {
    eof_memory: f64,
    eof_memory_spread: f64,
    verdict: Separability,
    negativity: f64,
    min_pt_eigenvalue: f64,
    n: Option<usize>,
    eof_interval: Option<f64>,
    eof_interval_spread: Option<f64>,
    eof_concurrence: Option<f64>,
    concurrence_difference: Option<f64>,
    pass: bool,
}

fn cmd_eof(args: &EofArgs, stdout: &mut dyn Write) -> Result<i32> {
    let fcs = load_fcs(&args.common)?;
    let opts = args.optimizer.eof_options();
    let memory = fcs.memory_state()?;
    let result = entanglement::eof_optimize(&memory, &opts)?;
    let decision = entanglement::memory_separability(&fcs)?;
    let (eof_concurrence, concurrence_difference) = if fcs.d() == 2 && fcs.b() == 2 {
        let exact = eof_from_concurrence(&memory)?;
        (Some(exact), Some((exact - result.value).abs()))
    } else {
        (None, None)
    };
    let interval = match args.n {
        Some(n) => {
            let f = fcs.interval_factor(n)?;
            let gens: Vec<_> = f.column_iter().map(|c| c.into_owned()).collect();
            if n < 2 {
                return Err(Error::DimensionMismatch("--n must be at least 2".into()));
            }
            Some(entanglement::eof_from_generators(&gens, (fcs.d(), fcs.d().pow(n as u32 - 1)), &opts)?)
        }
        None => None,
    };
    let scale = if args.optimizer.bits { std::f64::consts::LN_2.recip() } else { 1.0 };
    let pass = concurrence_difference.is_none_or(|d| d <= CONCURRENCE_TOLERANCE);
    let output = EofOutput {
        eof_memory: result.value * scale,
        eof_memory_spread: result.best_restart_spread * scale,
        verdict: decision.verdict,
        negativity: decision.ppt.negativity,
        min_pt_eigenvalue: decision.ppt.min_pt_eigenvalue,
        n: args.n,
        eof_interval: interval.as_ref().map(|r| r.value * scale),
        eof_interval_spread: interval.as_ref().map(|r| r.best_restart_spread * scale),
        eof_concurrence: eof_concurrence.map(|v| v * scale),
        concurrence_difference: concurrence_difference.map(|v| v * scale),
        pass,
    };
    let mut out = open_output(&args.common.out, stdout)?;
    match args.common.format {
        Format::Csv => write_table(std::slice::from_ref(&output), &mut out)?,
        Format::Json => write_json(&output, &mut out)?,
    }
    out.flush()?;
    Ok(if pass { EXIT_PASS } else { EXIT_CHECK_FAILED })
}

fn emit_report<R: Serialize + bounds::EntropyColumns>(
    report: ConvergenceReport<R>,
    pass: bool,
    common: &CommonArgs,
    bits: bool,
    stdout: &mut dyn Write,
) -> Result<i32> {
    let report = if bits { report.in_bits() } else { report };
    let mut out = open_output(&common.out, stdout)?;
    match common.format {
        Format::Csv => report.write_csv(&mut out)?,
        Format::Json => {
            out.write_all(report.to_json_string()?.as_bytes())?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(if pass { EXIT_PASS } else { EXIT_CHECK_FAILED })
}

fn cmd_converge(args: &ConvergeArgs, stdout: &mut dyn Write) -> Result<i32> {
    let fcs = load_fcs(&args.common)?;
    if *args.n.start() < 2 {
        return Err(Error::DimensionMismatch("--n must start at 2 or above".into()));
    }
    let report = bounds::verify_interval_bound(
        &fcs,
        args.n.clone(),
        &verify_options(&args.optimizer, args.tol_opt, args.margin),
    )?;
    let pass = report.all_pass();
    emit_report(report, pass, &args.common, args.optimizer.bits, stdout)
}

fn cmd_distant(args: &DistantArgs, stdout: &mut dyn Write) -> Result<i32> {
    let fcs = load_fcs(&args.common)?;
    if *args.p.start() < 2 {
        return Err(Error::DimensionMismatch("--p must start at 2 or above".into()));
    }
    let opts = verify_options(&args.optimizer, args.tol_opt, args.margin);
    let report = bounds::verify_distant_decay(&fcs, args.p.clone(), args.n_offset, &opts)?;
    let pass = report.all_pass();
    emit_report(report, pass, &args.common, args.optimizer.bits, stdout)
}

pub fn dispatch(cli: &Cli, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32> {
    match &cli.command {
        Command::Validate(a) => cmd_validate(a, stdout, stderr),
        Command::Spectrum(a) => cmd_spectrum(a, stdout),
        Command::Eof(a) => cmd_eof(a, stdout),
        Command::Converge(a) => cmd_converge(a, stdout),
        Command::Distant(a) => cmd_distant(a, stdout),
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_PASS };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { stderr.write_all(text.as_bytes()) } else { stdout.write_all(text.as_bytes()) };
            return code;
        }
    };
    match dispatch(&cli, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            EXIT_USAGE
        }
    }
}

/// Thread count from `FCS_ENTANGLE_THREADS`; unset or unparsable means the rayon default.
pub fn configured_threads() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.trim().parse().ok().filter(|&n| n > 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String, String) {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = run(std::iter::once("fcs-entangle").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn ranges() {
        assert_eq!(parse_range("2..6").unwrap(), 2..=6);
        assert_eq!(parse_range("2..=6").unwrap(), 2..=6);
        assert_eq!(parse_range("4").unwrap(), 4..=4);
        assert!(parse_range("6..2").is_err());
        assert!(parse_range("a..2").is_err());
    }

    #[test]
    fn validate_exit_codes() {
        let (code, out, _) = run_capture(&["validate", "aklt"]);
        assert_eq!(code, EXIT_PASS);
        assert!(out.starts_with("isometry_ok,unital_ok,pure_ok,"));
        let (code, _, err) = run_capture(&["validate", "/nonexistent/model.json"]);
        assert_eq!(code, EXIT_USAGE);
        assert!(err.contains("error"));
        let (code, _, _) = run_capture(&["validate"]);
        assert_eq!(code, EXIT_USAGE);
        let (code, _, _) = run_capture(&["frobnicate"]);
        assert_eq!(code, EXIT_USAGE);
    }

    #[test]
    fn spectrum_csv_and_json_agree() {
        let (code, csv_out, _) = run_capture(&["spectrum", "aklt"]);
        assert_eq!(code, 0);
        let (_, json_out, _) = run_capture(&["spectrum", "--model", "aklt", "--format", "json"]);
        let json: serde_json::Value = serde_json::from_str(&json_out).unwrap();
        let mut lines = csv_out.lines();
        assert_eq!(lines.next(), Some("index,re,im,modulus"));
        for (k, line) in lines.by_ref().take(4).enumerate() {
            let fields: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
            let e = &json["eigenvalues"][k];
            assert_eq!(fields[1], e["re"].as_f64().unwrap());
            assert_eq!(fields[2], e["im"].as_f64().unwrap());
            assert_eq!(fields[3], e["modulus"].as_f64().unwrap());
        }
        assert!((json["eigenvalues"][1]["re"].as_f64().unwrap() + 1.0 / 3.0).abs() < 1e-10);
        assert!((json["envelope"]["lambda"].as_f64().unwrap() - 0.35).abs() < 1e-12);
        let (_, prod, _) = run_capture(&["spectrum", "product:d=2,basis=0"]);
        assert_eq!(prod.lines().nth(1), Some("0,1.0,0.0,1.0"));
        assert_eq!(prod.lines().nth(2), Some(""));
    }

    #[test]
    fn eof_product_and_bits() {
        let (code, out, _) = run_capture(&["eof", "product:d=2,basis=1", "--n", "3", "--restarts", "2"]);
        assert_eq!(code, 0);
        let row: Vec<&str> = out.lines().nth(1).unwrap().split(',').collect();
        assert_eq!(row[0].parse::<f64>().unwrap(), 0.0);
        assert_eq!(row[2], "Separable");
        let (_, nats, _) = run_capture(&["eof", "aklt", "--format", "json", "--restarts", "2"]);
        let (_, bits, _) = run_capture(&["eof", "aklt", "--format", "json", "--restarts", "2", "--bits"]);
        let nats: serde_json::Value = serde_json::from_str(&nats).unwrap();
        let bits: serde_json::Value = serde_json::from_str(&bits).unwrap();
        let (a, b) = (nats["eof_memory"].as_f64().unwrap(), bits["eof_memory"].as_f64().unwrap());
        assert!(a > 1e-3 && (b - a / std::f64::consts::LN_2).abs() < 1e-12);
        assert_eq!(nats["verdict"], "Entangled");
    }

    #[test]
    fn converge_product_writes_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.csv");
        let (code, out, _) = run_capture(&[
            "converge",
            "product:d=2,basis=0",
            "--n",
            "2..5",
            "--restarts",
            "2",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert_eq!(code, 0);
        assert!(out.is_empty());
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("n,eof_memory,eof_interval,gap,envelope,pass"));
        let rows: Vec<&str> = lines.collect();
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.ends_with(",true") && r.split(',').nth(3) == Some("0.0")));
    }

    #[test]
    fn bad_ranges_are_usage_errors() {
        assert_eq!(run_capture(&["converge", "aklt", "--n", "5..2"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["converge", "aklt", "--n", "1..3"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["distant", "aklt", "--p", "1..3"]).0, EXIT_USAGE);
        assert_eq!(run_capture(&["converge", "aklt", "--n", "2..20"]).0, EXIT_USAGE);
    }
}
