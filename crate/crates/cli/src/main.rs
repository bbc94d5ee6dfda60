use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pulseforge::presets::PresetLibrary;
use pulseforge_cli::{commands, execute, load_config, CliError, Command, EXIT_CONFIG, EXIT_OK};

/// Simulate and optimize pulse-shaped controlled gates.
///
/// Every run is driven by a flat `key = value` config file; `--set` overrides
/// individual keys. CSV goes to the `output` key ("-" for standard output).
#[derive(Parser)]
#[command(name = "pulseforge", version)]
struct Cli {
    /// Config file; all keys are optional.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set gate=CS --set v_mhz=100.0`.
    #[arg(short = 's', long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Clone, Copy)]
enum Cmd {
    /// Check coefficient boundary conditions, pulse areas and peak field.
    Validate,
    /// Sample the full pulse schedule (MHz).
    Waveform,
    /// Output populations for the four computational inputs.
    TruthTable,
    /// Fidelity versus common detuning (kHz).
    SweepDetuning,
    /// Excitation of an off-resonant transition (MHz detuning).
    SweepOffres,
    /// Fidelity versus blockade strength.
    SweepV,
    /// Mean fidelity over Haar-random computational inputs.
    RandomStates,
    /// Run NSGA-II over the free coefficients and write the Pareto archive.
    Optimize,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Validate => Command::Validate,
            Cmd::Waveform => Command::Waveform,
            Cmd::TruthTable => Command::TruthTable,
            Cmd::SweepDetuning => Command::SweepDetuning,
            Cmd::SweepOffres => Command::SweepOffres,
            Cmd::SweepV => Command::SweepV,
            Cmd::RandomStates => Command::RandomStates,
            Cmd::Optimize => Command::Optimize,
        }
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let cfg = load_config(cli.config.as_deref(), &cli.overrides)?;
    let lib = PresetLibrary::from_env()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| CliError::Config(format!("workers: {e}")))?;
    let outcome = pool.install(|| execute(cli.command.into(), &cfg, &lib))?;
    for note in &outcome.notes {
        eprintln!("{note}");
    }
    if cfg.output == "-" {
        let mut out = std::io::stdout().lock();
        out.write_all(outcome.text.as_bytes())
            .and_then(|()| out.flush())
            .map_err(|source| CliError::Io {
                path: PathBuf::from("<stdout>"),
                source,
            })?;
    } else {
        commands::write_file(PathBuf::from(&cfg.output).as_path(), &outcome.text)?;
    }
    Ok(outcome.exit)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
