use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use wqed::AmplitudeMode;
use wqed_cli::{CliError, Observable, Override, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "wqed", version, about = "Scattering observables of a two-leg giant atom")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Amplitude mode: exact, weak_correlation, quasi_markovian, markovian.
    #[arg(long, global = true)]
    mode: Option<AmplitudeMode>,

    /// Output directory (overrides run.output_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Cap on worker threads.
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Override a configuration key, e.g. `--set model.R=3`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Inelastic and elastic spectral power density.
    Spectrum,
    /// Second-order coherence.
    G2,
    /// Third-order coherence.
    G3,
    /// Dressed-propagator poles.
    Poles,
    /// Spectra over a range of detunings with the pole loci.
    DetuningScan,
    /// Invariant suite; exit status 4 if any check fails.
    Validate,
    /// Run the observable named in the configuration.
    Run,
}

impl Command {
    fn observable(&self) -> Option<Observable> {
        Some(match self {
            Command::Spectrum => Observable::Spectrum,
            Command::G2 => Observable::G2,
            Command::G3 => Observable::G3,
            Command::Poles => Observable::Poles,
            Command::DetuningScan => Observable::DetuningScan,
            Command::Validate => Observable::Validate,
            Command::Run => return None,
        })
    }
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let mut overrides = Vec::new();
    if let Some(o) = cli.command.observable() {
        overrides.push(format!("run.observable=\"{o}\"").parse::<Override>()?);
    }
    if let Some(m) = cli.mode {
        overrides.push(format!("run.mode=\"{}\"", m.as_str()).parse()?);
    }
    if let Some(out) = &cli.out {
        overrides.push(Override {
            path: vec!["run".into(), "output_dir".into()],
            value: serde_json::Value::String(out.display().to_string()),
        });
    }
    for s in &cli.set {
        overrides.push(s.parse()?);
    }
    let config = RunConfig::load(cli.config.as_deref(), &overrides)?;
    if let Some(n) = cli.workers {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
    }

    let start = Instant::now();
    let outcome = wqed_cli::run(&config)?;
    let width = outcome.summary.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    println!("{}", outcome.observable);
    for (k, v) in &outcome.summary {
        println!("  {k:<width$}  {v}");
    }
    for f in &outcome.files {
        println!("  wrote {}", f.display());
    }
    println!(
        "  cache {} hit / {} miss, {:.2} s",
        outcome.cache_hits,
        outcome.cache_misses,
        start.elapsed().as_secs_f64()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
