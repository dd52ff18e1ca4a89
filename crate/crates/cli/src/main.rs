use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qkd_core::dtmc::ChainSpec;
use qkd_core::montecarlo::{simulate, SimEstimate, SimEvent};
use qkd_core::pctl::parse_query;
use qkd_core::protocol::{AttackStrategy, DetectionRule, EveCorrectRule, Protocol};
use qkd_core::sweep::{read_csv, sweep, write_csv, MonteCarlo, SweepConfig, SweepProperty, SweepRow};
use qkd_core::{build_chain, evaluate, export_prism, fit, FitForm};

const EXIT_USAGE: u8 = 2;
const EXIT_DOMAIN: u8 = 3;

#[derive(Parser)]
#[command(name = "qkd", version, about = "Eavesdropper detection analysis for BB84 and B92")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sweep a property over a range of N and emit one row per N
    Analyze(AnalyzeArgs),
    /// Estimate the detection (or majority) probability by simulation
    Simulate(SimulateArgs),
    /// Fit an exponential trend to a sweep CSV
    Fit(FitArgs),
    /// Write a PRISM model and its properties file
    Export(ExportArgs),
    /// Evaluate a P=?[F ...] query on the chain
    Check(CheckArgs),
}

#[derive(Args)]
struct ChainArgs {
    /// bb84 or b92
    protocol: Protocol,
    /// none, ir (intercept-resend) or rs (random substitution)
    attack: AttackStrategy,
    /// mismatch, conclusive (B92 only) or both (B92 only)
    #[arg(long, default_value = "mismatch")]
    detection: DetectionRule,
    /// What counts as a correct measurement by Eve: bit, basis-bit or sifted
    #[arg(long, default_value = "bit")]
    eve_rule: EveCorrectRule,
    /// Keep exchanging qubits after Eve has been detected
    #[arg(long)]
    continue_after_detection: bool,
}

impl ChainArgs {
    fn spec(&self, rounds: u32) -> ChainSpec {
        ChainSpec::new(self.protocol, self.attack, rounds)
            .with_detection(self.detection)
            .with_eve_rule(self.eve_rule)
            .with_stop_on_detect(!self.continue_after_detection)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum PropertyArg {
    Detect,
    Cm,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    chain: ChainArgs,
    /// detect: Eve is detected; cm: Eve measures more than N/2 qubits correctly
    property: PropertyArg,
    /// Range of N as `a..b` (inclusive) or a single value
    #[arg(default_value = "1..20", value_parser = parse_range)]
    range: (u32, u32),
    /// Run N+1 qubit exchanges for each N, as the published tables do
    #[arg(long, overrides_with = "no_paper_compat", default_value_t = true)]
    paper_compat: bool,
    /// Run exactly N qubit exchanges
    #[arg(long)]
    no_paper_compat: bool,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Add a Monte Carlo estimate with this many trials to each row
    #[arg(long)]
    mc_trials: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write to this file instead of stdout
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    chain: ChainArgs,
    /// Number of qubit exchanges
    #[arg(short, long)]
    n: u32,
    #[arg(long, default_value_t = 100_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "detect")]
    event: PropertyArg,
    /// Run n+1 exchanges instead of n
    #[arg(long)]
    paper_compat: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Abscissa {
    N,
    Rounds,
}

#[derive(Clone, Copy, ValueEnum)]
enum Ordinate {
    Exact,
    Mc,
}

#[derive(Args)]
struct FitArgs {
    /// CSV with header N,rounds,p_exact,p_mc,mc_stderr (`#` lines are skipped)
    input: PathBuf,
    /// decay: a*exp(-b*x); one-minus-decay: 1 - a*exp(-b*x)
    #[arg(long)]
    form: FitForm,
    #[arg(long, value_enum, default_value = "n")]
    x: Abscissa,
    #[arg(long, value_enum, default_value = "exact")]
    y: Ordinate,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    chain: ChainArgs,
    /// Number of qubit exchanges
    #[arg(short, long)]
    n: u32,
    /// Run n+1 exchanges instead of n
    #[arg(long)]
    paper_compat: bool,
    /// Model file (`.pm`) or directory; the properties go next to it as `.props`
    #[arg(short, long, env = "QKD_OUT_DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    chain: ChainArgs,
    /// Number of qubit exchanges
    #[arg(short, long)]
    n: u32,
    /// Query such as "P=?[F(detected=1)]"
    property: String,
    /// Run n+1 exchanges instead of n
    #[arg(long)]
    paper_compat: bool,
}

/// Bad arguments that clap cannot catch on its own.
#[derive(Debug)]
struct Usage(String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    Usage(msg.into()).into()
}

fn parse_range(s: &str) -> Result<(u32, u32), String> {
    let parse = |t: &str| t.trim().parse::<u32>().map_err(|e| format!("`{t}`: {e}"));
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (parse(a)?, parse(b.strip_prefix('=').unwrap_or(b))?),
        None => {
            let n = parse(s)?;
            (n, n)
        }
    };
    if lo == 0 || lo > hi {
        return Err(format!("need 1 <= min <= max, got {lo}..{hi}"));
    }
    Ok((lo, hi))
}

fn rounds(n: u32, paper_compat: bool) -> Result<u32> {
    if n == 0 {
        return Err(usage("n must be at least 1"));
    }
    Ok(if paper_compat { n + 1 } else { n })
}

fn sink(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn chain_metadata(spec: &ChainSpec) -> Vec<(&'static str, String)> {
    vec![
        ("protocol", spec.protocol.to_string()),
        ("attack", spec.attack.to_string()),
        ("detection", spec.detection.to_string()),
        ("eve_rule", spec.eve_rule.to_string()),
        ("stop_on_detect", spec.stop_on_detect.to_string()),
    ]
}

#[derive(Serialize)]
struct AnalyzeJson<'a> {
    metadata: serde_json::Map<String, serde_json::Value>,
    rows: &'a [SweepRow],
}

fn analyze(args: AnalyzeArgs) -> Result<()> {
    let paper_compat = args.paper_compat && !args.no_paper_compat;
    let (n_min, n_max) = args.range;
    let config = SweepConfig {
        spec: args.chain.spec(n_min),
        property: match args.property {
            PropertyArg::Detect => SweepProperty::Detect,
            PropertyArg::Cm => SweepProperty::Cm,
        },
        n_min,
        n_max,
        paper_compat,
        monte_carlo: args.mc_trials.map(|trials| MonteCarlo { trials, seed: args.seed }),
    };
    config.spec.validate()?;
    let rows = sweep(&config)?;

    let mut meta = chain_metadata(&config.spec);
    meta.push((
        "property",
        match args.property {
            PropertyArg::Detect => "detect".into(),
            PropertyArg::Cm => "cm".into(),
        },
    ));
    meta.push(("paper_compat", paper_compat.to_string()));
    if let Some(mc) = config.monte_carlo {
        meta.push(("mc_trials", mc.trials.to_string()));
        meta.push(("seed", mc.seed.to_string()));
    }

    let mut out = sink(args.output.as_deref())?;
    match args.format {
        Format::Csv => {
            let comment: Vec<String> = meta.iter().map(|(k, v)| format!("{k}={v}")).collect();
            write_csv(&rows, &[comment.join(" ")], &mut out)?;
        }
        Format::Json => {
            let metadata = meta
                .into_iter()
                .map(|(k, v)| {
                    let value = match v.as_str() {
                        "true" => serde_json::Value::Bool(true),
                        "false" => serde_json::Value::Bool(false),
                        _ => v.parse::<u64>().map_or(serde_json::Value::String(v), Into::into),
                    };
                    (k.to_string(), value)
                })
                .collect();
            serde_json::to_writer_pretty(&mut out, &AnalyzeJson { metadata, rows: &rows })?;
            writeln!(out)?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct SimulateJson {
    protocol: String,
    attack: String,
    detection: String,
    eve_rule: String,
    stop_on_detect: bool,
    n: u32,
    rounds: u32,
    paper_compat: bool,
    event: SimEvent,
    #[serde(flatten)]
    estimate: SimEstimate,
}

fn simulate_cmd(args: SimulateArgs) -> Result<()> {
    let rounds = rounds(args.n, args.paper_compat)?;
    if args.trials == 0 {
        return Err(usage("--trials must be at least 1"));
    }
    let spec = args.chain.spec(rounds);
    spec.validate()?;
    let event = match args.event {
        PropertyArg::Detect => SimEvent::Detected,
        PropertyArg::Cm => SimEvent::CorrectAbove(args.n / 2),
    };
    let estimate = simulate(&spec, event, args.trials, args.seed)?;
    let report = SimulateJson {
        protocol: spec.protocol.to_string(),
        attack: spec.attack.to_string(),
        detection: spec.detection.to_string(),
        eve_rule: spec.eve_rule.to_string(),
        stop_on_detect: spec.stop_on_detect,
        n: args.n,
        rounds,
        paper_compat: args.paper_compat,
        event,
        estimate,
    };
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}

fn fit_cmd(args: FitArgs) -> Result<()> {
    let file = File::open(&args.input).with_context(|| format!("opening {}", args.input.display()))?;
    let rows = read_csv(file)?;
    let mut points = Vec::with_capacity(rows.len());
    for row in &rows {
        let x = f64::from(match args.x {
            Abscissa::N => row.n,
            Abscissa::Rounds => row.rounds,
        });
        let y = match args.y {
            Ordinate::Exact => row.p_exact,
            Ordinate::Mc => row.p_mc.with_context(|| format!("row N={} has no p_mc", row.n))?,
        };
        points.push((x, y));
    }
    let model = fit(&points, args.form)?;
    println!("{}", serde_json::to_string_pretty(&model)?);
    Ok(())
}

fn export_cmd(args: ExportArgs) -> Result<()> {
    let rounds = rounds(args.n, args.paper_compat)?;
    let spec = args.chain.spec(rounds);
    let export = export_prism(&spec)?;
    let model_path = if args.out.extension().is_some_and(|e| e == "pm") {
        args.out.clone()
    } else {
        args.out.join(format!("{}_{}_n{}.pm", spec.protocol, spec.attack, rounds))
    };
    if let Some(dir) = model_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let props_path = model_path.with_extension("props");
    let header = format!("// paper_compat={} n={} rounds={}\n", args.paper_compat, args.n, rounds);
    fs::write(&model_path, format!("{header}{}", export.text))
        .with_context(|| format!("writing {}", model_path.display()))?;
    fs::write(&props_path, &export.properties).with_context(|| format!("writing {}", props_path.display()))?;
    println!("{}", model_path.display());
    println!("{}", props_path.display());
    Ok(())
}

fn check_cmd(args: CheckArgs) -> Result<()> {
    let query = parse_query(&args.property).map_err(|e| usage(format!("{}: {e}", args.property)))?;
    let rounds = rounds(args.n, args.paper_compat)?;
    let spec = args.chain.spec(rounds);
    let chain = build_chain(&spec)?;
    let p = evaluate(&chain, &query)?;
    let meta: Vec<String> = chain_metadata(&spec).iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("# {} rounds={rounds} paper_compat={}", meta.join(" "), args.paper_compat);
    println!("{query}");
    println!("exact = {p}");
    println!("decimal = {}", p.to_f64());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Analyze(a) => analyze(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Fit(a) => fit_cmd(a),
        Command::Export(a) => export_cmd(a),
        Command::Check(a) => check_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.is::<Usage>() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_DOMAIN)
            }
        }
    }
}
