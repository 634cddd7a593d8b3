//! `dp` — run Degasperis–Procesi scenarios from JSON configs.
//!
//! Exit status: 0 when every check of the run passes, 1 when a check fails
//! or the run blows up, 2 when the configuration is unusable.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dplab::experiments::{self, RunManifest, Scenario, ScenarioConfig};

#[derive(Parser)]
#[command(name = "dp", version, about = "Degasperis–Procesi peakon stability laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario config (JSON); omitted fields take their defaults.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Overrides `output_dir` from the config.
    #[arg(long, short, env = "DP_OUTPUT_DIR")]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Check the conserved-quantity identities on random near-peakon data.
    Identities(Common),
    /// Evolve one scenario and measure it.
    Simulate(Common),
    /// Run a parameter sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Worker threads.
        #[arg(long, short, default_value_t = 1)]
        jobs: usize,
    },
    /// Report config problems without running anything.
    Validate(Common),
}

fn load(common: &Common) -> Result<ScenarioConfig, String> {
    let mut config = match &common.config {
        Some(p) => ScenarioConfig::load(p).map_err(|e| e.to_string())?,
        None => ScenarioConfig::default(),
    };
    if let Some(dir) = &common.output_dir {
        config.output_dir = dir.clone();
    }
    Ok(config)
}

fn report(m: &RunManifest) {
    for c in &m.checks {
        let status = match (c.pass, c.enforced) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "INFO",
        };
        println!("{status} {} value={:e} bound={:e}", c.name, c.value, c.bound);
    }
    for ch in &m.children {
        let status = if ch.rollup { "PASS" } else { "FAIL" };
        match &ch.error {
            Some(e) => println!("{status} value={} {} ({e})", ch.value, ch.output_dir.display()),
            None => println!("{status} value={} {}", ch.value, ch.output_dir.display()),
        }
    }
    if let Some(b) = &m.blowup {
        println!("BLOWUP {b}");
    }
    println!("rollup={} files={} output={}", m.rollup, m.files.len(), m.config.output_dir.display());
}

fn execute(command: Command) -> Result<bool, String> {
    let (config, jobs) = match command {
        Command::Validate(common) => {
            let config = load(&common)?;
            let problems = experiments::validate(&config);
            for p in &problems {
                eprintln!("{p}");
            }
            if problems.is_empty() {
                println!("ok");
            }
            return if problems.is_empty() { Ok(true) } else { Err(format!("{} problem(s)", problems.len())) };
        }
        Command::Identities(common) => {
            let mut config = load(&common)?;
            config.scenario = Scenario::Identities;
            (config, 1)
        }
        Command::Simulate(common) => {
            let config = load(&common)?;
            if matches!(config.scenario, Scenario::Identities | Scenario::Sweep) {
                return Err(format!(
                    "scenario {:?} is not a simulation; use `dp identities` or `dp sweep`",
                    config.scenario
                ));
            }
            (config, 1)
        }
        Command::Sweep { common, jobs } => {
            let config = load(&common)?;
            if config.scenario != Scenario::Sweep {
                return Err("`dp sweep` needs \"scenario\": \"sweep\"".into());
            }
            (config, jobs)
        }
    };
    log::info!("running {:?} into {}", config.scenario, config.output_dir.display());
    let manifest = experiments::run_with_jobs(&config, jobs).map_err(|e| e.to_string())?;
    report(&manifest);
    Ok(manifest.rollup)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
