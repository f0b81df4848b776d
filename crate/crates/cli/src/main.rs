use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use skill_transfer::experiment::{
    find_experiment, list_experiments, parse_config, run_experiment, ExperimentConfig,
};
use skill_transfer::Error;

const EXIT_VALIDATION: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(
    name = "skill-transfer",
    version,
    about = "Run cross-morphology skill transfer experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a TOML or JSON config file, or a catalog id.
    Run {
        config: String,
        /// Artifact directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Master seed (overrides `seed`).
        #[arg(long)]
        seed: Option<u64>,
        /// Comma-separated method list (overrides `methods`).
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<String>>,
    },
    /// List the shipped experiments.
    List,
    /// Print a shipped experiment's config.
    Show { id: String },
}

enum Failure {
    Validation(String),
    Runtime(String),
}

fn load(config: &str) -> Result<ExperimentConfig, Failure> {
    let text = match fs::read_to_string(config) {
        Ok(t) => t,
        Err(e) => match find_experiment(config) {
            Some(entry) => entry.text.to_string(),
            None => return Err(Failure::Validation(format!("cannot read `{config}`: {e}"))),
        },
    };
    parse_config(&text).map_err(|e| Failure::Validation(format!("{config}: {e}")))
}

fn run(
    config: &str,
    out: Option<PathBuf>,
    seed: Option<u64>,
    methods: Option<Vec<String>>,
) -> Result<(), Failure> {
    let mut cfg = load(config)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if let Some(m) = methods {
        cfg.methods = m;
    }
    cfg.validate()
        .map_err(|e| Failure::Validation(e.to_string()))?;
    let out = out.unwrap_or_else(|| PathBuf::from(cfg.output_dir()));
    let report = run_experiment(&cfg, &out).map_err(|e| match e {
        Error::Validation(_) | Error::Parse { .. } => Failure::Validation(e.to_string()),
        other => Failure::Runtime(other.to_string()),
    })?;
    println!(
        "{:<18} {:>12} {:>13}",
        "method", "best_success", "final_success"
    );
    for r in &report.rows {
        println!(
            "{:<18} {:>12.3} {:>13.3}",
            r.method.name(),
            r.best_success,
            r.final_success
        );
    }
    println!("artifacts in {}", report.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            out,
            seed,
            methods,
        } => run(&config, out, seed, methods),
        Command::List => {
            for e in list_experiments() {
                let description = e.config().map(|c| c.description).unwrap_or_default();
                println!("{:<26} {description}", e.id);
            }
            Ok(())
        }
        Command::Show { id } => match find_experiment(&id) {
            Some(e) => {
                print!("{}", e.text);
                Ok(())
            }
            None => Err(Failure::Validation(format!(
                "no shipped experiment named `{id}`"
            ))),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_VALIDATION)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
