use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use ramanchd::config::{self, OutputFormat, Scenario};
use ramanchd::error::{exit_code, Error};
use ramanchd::runner::{run_scenario, RunOptions};

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ScenarioArg {
    EmissionSpectrum,
    ChdTime,
    ChdSpectrum,
    NoiseSweep,
    FilteredSweep,
    ConvergenceReport,
}

impl From<ScenarioArg> for Scenario {
    fn from(s: ScenarioArg) -> Self {
        match s {
            ScenarioArg::EmissionSpectrum => Scenario::EmissionSpectrum,
            ScenarioArg::ChdTime => Scenario::ChdTime,
            ScenarioArg::ChdSpectrum => Scenario::ChdSpectrum,
            ScenarioArg::NoiseSweep => Scenario::NoiseSweep,
            ScenarioArg::FilteredSweep => Scenario::FilteredSweep,
            ScenarioArg::ConvergenceReport => Scenario::ConvergenceReport,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

/// Conditional homodyne detection of Raman emission from a driven
/// cavity-vibration system.
#[derive(Debug, Parser)]
#[command(name = "ramanchd", version)]
struct Cli {
    /// Scenario to run.
    #[arg(value_enum)]
    scenario: ScenarioArg,

    /// Configuration file (key = value lines or JSON).
    #[arg(long, short)]
    config: PathBuf,

    /// Output directory; falls back to $RAMANCHD_OUT_DIR and then output.dir.
    #[arg(long, short)]
    out: Option<PathBuf>,

    #[arg(long, value_enum)]
    format: Option<FormatArg>,

    /// Worker threads for parameter sweeps.
    #[arg(long)]
    threads: Option<usize>,

    /// Relative tolerance for the truncation schedule.
    #[arg(long)]
    tolerance: Option<f64>,
}

fn run(cli: Cli) -> Result<(), Error> {
    let config = config::load(&cli.config, Some(cli.scenario.into()))?;
    let opts = RunOptions {
        out_dir: cli.out,
        format: cli.format.map(|f| match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        }),
        threads: cli.threads,
        tolerance: cli.tolerance,
    };
    let report = run_scenario(&config, &opts)?;
    for (path, digest) in &report.files {
        println!("{}  {}", digest, path.display());
    }
    eprintln!(
        "{} finished in {:.2} s (n_cavity = {}, n_vibration = {})",
        config.scenario, report.wall_time, report.output.truncation.n_cavity, report.output.truncation.n_vibration
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(exit_code::CONFIG as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
