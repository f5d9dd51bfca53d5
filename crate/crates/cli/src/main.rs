use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fairot_cli::config::{Config, Overrides};
use fairot_cli::emit::{aggregate, emit_curves, read_records, relative_table, render_relative, RECORDS_FILE};
use fairot_cli::error::{CliError, Result};
use fairot_cli::sweep::{load_source, prepare_seed, run_sweep};
use fairot_cli::{match_budget, Method, UnfairnessMetric};

#[derive(Parser)]
#[command(name = "fairot", version, about = "Fair regression trade-off sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// synthetic-1d, synthetic-2d, law_school, communities, adult, or a .csv path.
    #[arg(long)]
    dataset: Option<String>,
    /// Schema file for a .csv dataset.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long)]
    seeds: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// `default`, `log:<lo>:<hi>:<n>`, or a comma list such as `0,1,inf`.
    #[arg(long = "lambda-grid")]
    lambda_grid: Option<String>,
}

impl RunArgs {
    fn resolve(&self) -> Result<Config> {
        let mut config = match (&self.config, &self.dataset) {
            (Some(path), _) => Config::load(path)?,
            (None, Some(d)) => Config::for_dataset(d),
            (None, None) => return Err(CliError::Usage("pass --config or --dataset".into())),
        };
        config.apply(&Overrides {
            dataset: self.dataset.clone(),
            schema: self.schema.clone(),
            seeds: self.seeds,
            out: self.out.clone(),
            lambda_grid: self.lambda_grid.clone(),
        });
        config.validate()?;
        Ok(config)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate every method across the lambda grid and write CSV curves.
    Sweep(RunArgs),
    /// Find the lambda reaching a fraction of the base unfairness.
    Budget {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        method: String,
        /// Target fraction of the ERM unfairness, in [0, 1].
        #[arg(long)]
        target: f64,
        #[arg(long, default_value = "w2")]
        metric: String,
    },
    /// Re-aggregate a records file and print the relative table.
    Report {
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Sweep(args) => {
            let config = args.resolve()?;
            let records = run_sweep(&config)?;
            let total: f64 = records.iter().map(|r| r.wall_seconds).sum();
            for path in emit_curves(&records, &config.run.out)? {
                println!("{}", path.display());
            }
            eprintln!("{} records, {total:.2}s of method time", records.len());
        }
        Command::Budget { run, method, target, metric } => {
            let config = run.resolve()?;
            let method: Method = method.parse()?;
            let metric: UnfairnessMetric = metric.parse()?;
            let loaded = load_source(&config.source()?)?;
            let ctx = prepare_seed(&config, &loaded, config.run.base_seed)?;
            let r = match_budget(&ctx, method, target, metric, &config)?;
            println!(
                "method={method} metric={metric} target={target} lambda={} ratio={} evaluations={} converged={}",
                r.lambda, r.achieved_ratio, r.evaluations, r.converged
            );
        }
        Command::Report { out } => {
            let records = read_records(&out.join(RECORDS_FILE))?;
            emit_curves(&records, &out)?;
            match relative_table(&aggregate(&records)) {
                Some(rows) => print!("{}", render_relative(&rows)),
                None => println!("no erm rows; relative table skipped"),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or("").trim_start_matches("error: ").to_string();
            let err = CliError::Usage(first);
            eprintln!("{}", err.render());
            return ExitCode::from(err.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.render());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
