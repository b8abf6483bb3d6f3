use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use log::error;

use collab_har::cli::{cmd_compare, cmd_prepare, cmd_run, exit_code, PrepareOutcome};
use collab_har::config::RunConfig;
use collab_har::Result;

#[derive(Parser)]
#[command(
    name = "collab-har",
    version,
    about = "Decentralized collaborative activity recognition runner"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load, clean, window and split the dataset into the window cache.
    Prepare(ConfigArgs),
    /// Train and evaluate one configuration.
    Run(ConfigArgs),
    /// Join the results of several runs into a comparison table.
    Compare {
        /// Run directories or results CSV files.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Directory for comparison.csv and curves_long.csv.
        #[arg(short, long, default_value = ".")]
        output: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Configuration file; omitted means all defaults.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override any config key, e.g. `--set epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    data_dir: Option<String>,
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    scope: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    workers: Option<String>,
    #[arg(long)]
    output_dir: Option<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig> {
        let env = std::env::var(collab_har::config::DATA_ROOT_ENV).ok();
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::parse("", env)?,
        };
        let flags = [
            ("dataset", &self.dataset),
            ("data_dir", &self.data_dir),
            ("mode", &self.mode),
            ("scope", &self.scope),
            ("epochs", &self.epochs),
            ("seed", &self.seed),
            ("workers", &self.workers),
            ("output_dir", &self.output_dir),
        ];
        let mut overrides = self.overrides.clone();
        overrides.extend(
            flags
                .iter()
                .filter_map(|(k, v)| v.as_ref().map(|v| format!("{k}={v}"))),
        );
        cfg.apply_overrides(overrides.iter().map(String::as_str))?;
        Ok(cfg)
    }
}

fn execute(command: Command) -> Result<()> {
    match command {
        Command::Prepare(args) => {
            let cfg = args.load()?;
            let (outcome, cache) = cmd_prepare(&cfg)?;
            let status = match outcome {
                PrepareOutcome::Hit => "cache hit, nothing to do".to_string(),
                PrepareOutcome::Built => "cache built".to_string(),
                PrepareOutcome::Rebuilt(why) => format!("cache rebuilt ({why})"),
            };
            println!("{status}");
            for a in &cache.agents {
                println!(
                    "agent {}: {} train, {} test windows",
                    a.agent_id,
                    a.train.len(),
                    a.test.len()
                );
            }
            println!("held-out: {} windows", cache.global_test.len());
        }
        Command::Run(args) => {
            let cfg = args.load()?;
            let artifacts = cmd_run(&cfg)?;
            println!("{}", artifacts.results.display());
        }
        Command::Compare { runs, output } => {
            let cmp = cmd_compare(&runs, &output)?;
            cmp.write_table(std::io::stdout().lock())?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            error!("{e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
