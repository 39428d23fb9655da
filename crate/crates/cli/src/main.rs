use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use smooth_learn::engine::{self, GameConfig, Summary};
use smooth_learn::experiments::{self, EpsilonSweepSpec, EtaSweepSpec, LemmaSuiteSpec};
use smooth_learn::poly_approx::{self, PolyCertificate};
use smooth_learn::{Error, SampleSet, VERSION};

const EXIT_CONFIG: u8 = 1;
const EXIT_ILLEGAL: u8 = 2;
const EXIT_VIOLATION: u8 = 3;

#[derive(Parser)]
#[command(
    name = "smooth-learn",
    version,
    about = "Online learning of smooth functions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores)
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Sample count override (seeds, liar games or lemma budget)
    #[arg(long, global = true)]
    samples: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Play one game; writes transcript.csv and summary.json
    Simulate,
    /// LININT vs greedy over a grid of p = q = 1 + eps; writes sweep-epsilon.csv
    SweepEpsilon,
    /// Noisy-model bounds over a grid of eta; writes sweep-eta.csv
    SweepEta,
    /// Falsification search over the analytic inequalities; writes lemmas.json
    VerifyLemmas,
    /// Polynomial fit to a point set; writes poly.json
    PolyBuild,
    /// Digest of every result file in the output directory; writes report.md
    Report,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PolySpec {
    points: Vec<(f64, f64)>,
    q: f64,
    /// Approximation slack; omitted for an exact fit.
    #[serde(default)]
    eps: Option<f64>,
}

#[derive(Serialize)]
struct PolyOutput {
    tool_version: &'static str,
    mode: &'static str,
    set_action: f64,
    eps: Option<f64>,
    max_residual: f64,
    holds: bool,
    certificate: PolyCertificate,
}

fn load<T: DeserializeOwned + Default>(path: &Option<PathBuf>) -> anyhow::Result<T> {
    match path {
        Some(p) => load_required(p),
        None => Ok(T::default()),
    }
}

fn load_required<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn status(violations: usize) -> u8 {
    if violations > 0 {
        EXIT_VIOLATION
    } else {
        0
    }
}

fn simulate(cli: &Cli) -> anyhow::Result<u8> {
    let Some(path) = &cli.config else {
        bail!("simulate needs --config");
    };
    let mut config: GameConfig = load_required(path)?;
    if let Some(s) = cli.seed {
        config.seed = s;
    }
    let t = engine::run_game(&config)?;
    engine::write_transcript_csv(&t, create(&cli.out, "transcript.csv")?)?;
    let summary = Summary::of(&t);
    serde_json::to_writer_pretty(create(&cli.out, "summary.json")?, &summary)?;
    println!(
        "counted_total {:.6} over {} trials, {} bound violation(s)",
        summary.counted_total,
        summary.trials,
        summary.violations()
    );
    Ok(status(summary.violations()))
}

fn sweep_epsilon(cli: &Cli) -> anyhow::Result<u8> {
    let mut spec: EpsilonSweepSpec = load(&cli.config)?;
    if let Some(n) = cli.samples {
        spec.seeds = n;
    }
    let rows = experiments::sweep_epsilon(&spec, cli.seed.unwrap_or(0))?;
    experiments::write_epsilon_csv(&rows, create(&cli.out, "sweep-epsilon.csv")?)?;
    let bad = rows.iter().filter(|r| !r.holds).count();
    let worst = rows.iter().map(|r| r.ratio).fold(0.0, f64::max);
    println!(
        "{} rows, max ratio {worst:.4}, {bad} violation(s)",
        rows.len()
    );
    Ok(status(bad))
}

fn sweep_eta(cli: &Cli) -> anyhow::Result<u8> {
    let mut spec: EtaSweepSpec = load(&cli.config)?;
    if let Some(n) = cli.samples {
        spec.liar_seeds = n;
    }
    let rows = experiments::sweep_eta(&spec, cli.seed.unwrap_or(0))?;
    experiments::write_eta_csv(&rows, create(&cli.out, "sweep-eta.csv")?)?;
    for r in &rows {
        println!(
            "eta {}: lb {:.4} (bound {}), ub {:.4} (bound {})",
            r.eta, r.lb_linint, r.lb_bound, r.ub_observed, r.ub_bound
        );
    }
    Ok(status(rows.iter().filter(|r| !r.holds).count()))
}

fn verify_lemmas(cli: &Cli) -> anyhow::Result<u8> {
    let mut spec: LemmaSuiteSpec = load(&cli.config)?;
    if let Some(n) = cli.samples {
        spec.default_budget = n;
    }
    let reports = experiments::verify_lemmas(&spec, cli.seed.unwrap_or(0))?;
    serde_json::to_writer_pretty(create(&cli.out, "lemmas.json")?, &reports)?;
    for r in &reports {
        println!(
            "{:<13} samples {:>8} min gap {:+.3e} {}",
            r.gap.name(),
            r.samples,
            r.min_gap,
            if r.flagged { "FLAGGED" } else { "ok" }
        );
    }
    Ok(status(reports.iter().filter(|r| r.flagged).count()))
}

fn poly_build(cli: &Cli) -> anyhow::Result<u8> {
    let Some(path) = &cli.config else {
        bail!("poly-build needs --config");
    };
    let spec: PolySpec = load_required(path)?;
    let s = SampleSet::from_pairs(spec.points.iter().copied())?;
    let set_action = s.q_action(spec.q);
    let (poly, action_bound, mode) = match spec.eps {
        Some(eps) => {
            let (p, plan) = poly_approx::approx_interpolant_poly(&s, spec.q, eps)?;
            (p, plan.action_bound, "approximate")
        }
        None => {
            let fit = poly_approx::exact_interpolant_poly(&s, spec.q)?;
            (fit.poly, fit.component_action, "exact")
        }
    };
    let certificate = PolyCertificate::new(&poly, &s, spec.q, action_bound)?;
    let max_residual = certificate
        .residuals
        .iter()
        .fold(0.0f64, |a, r| a.max(r.abs()));
    let holds = match spec.eps {
        Some(eps) => max_residual <= eps && certificate.q_action <= set_action + eps,
        None => max_residual <= 1e-8 && certificate.q_action < 1.0,
    };
    let out = PolyOutput {
        tool_version: VERSION,
        mode,
        set_action,
        eps: spec.eps,
        max_residual,
        holds,
        certificate,
    };
    println!(
        "{mode} fit: degree {}, max residual {max_residual:.3e}, q-action {:.6}",
        out.certificate.degree, out.certificate.q_action
    );
    serde_json::to_writer_pretty(create(&cli.out, "poly.json")?, &out)?;
    Ok(status(usize::from(!holds)))
}

fn report(cli: &Cli) -> anyhow::Result<u8> {
    let r = experiments::build_report(&cli.out)?;
    let md = r.to_markdown();
    fs::write(cli.out.join("report.md"), &md)?;
    print!("{md}");
    Ok(status(r.violations))
}

fn run(cli: &Cli) -> anyhow::Result<u8> {
    if let Some(n) = cli.workers {
        if n == 0 {
            bail!("--workers must be positive");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()?;
    }
    match cli.command {
        Command::Simulate => simulate(cli),
        Command::SweepEpsilon => sweep_epsilon(cli),
        Command::SweepEta => sweep_eta(cli),
        Command::VerifyLemmas => verify_lemmas(cli),
        Command::PolyBuild => poly_build(cli),
        Command::Report => report(cli),
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(
            Error::IllegalAdversary { .. } | Error::ProtocolViolation(_) | Error::DuplicateQuery(_),
        ) => EXIT_ILLEGAL,
        _ => EXIT_CONFIG,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
