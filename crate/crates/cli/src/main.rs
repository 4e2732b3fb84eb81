use std::path::{Path, PathBuf};
use std::process::ExitCode;

use adaptsim::config::ExperimentConfig;
use adaptsim::experiment::run_experiment;
use adaptsim::mode::Mode;
use adaptsim::report::{emit_report, overhead_rows, read_csv, render_table, row_mode, summary_rows, OverheadRow, SummaryRow};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "adaptsim", version, about = "Cloud controller comparison simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a mode x service matrix and write CSV results.
    Run(RunArgs),
    /// Load and validate a configuration file.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print a table from one or more existing summary.csv files.
    Compare {
        #[arg(required = true)]
        summaries: Vec<PathBuf>,
    },
    /// Print the bundled reference configuration.
    Reference,
}

#[derive(Args)]
struct RunArgs {
    /// Configuration file; the bundled reference setup if omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Mode to run (repeatable). `all` runs the four compared architectures,
    /// `every` adds time-aware and meta-aware.
    #[arg(long = "mode", default_value = "all")]
    modes: Vec<String>,
    /// Service type to run (repeatable); defaults to the configured services.
    #[arg(long = "service")]
    services: Vec<u32>,
    /// Output directory; overrides `output_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of instances to run; overrides `duration`.
    #[arg(long)]
    duration: Option<usize>,
}

fn parse_modes(raw: &[String]) -> Result<Vec<Mode>> {
    let mut modes = Vec::new();
    for m in raw {
        let expanded: Vec<Mode> = match m.as_str() {
            "all" => Mode::COMPARISON.to_vec(),
            "every" => Mode::ALL.to_vec(),
            other => vec![other.parse::<Mode>().map_err(anyhow::Error::msg)?],
        };
        for m in expanded {
            if !modes.contains(&m) {
                modes.push(m);
            }
        }
    }
    Ok(modes)
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("loading {}", p.display())),
        None => Ok(ExperimentConfig::reference()),
    }
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let mut cfg = load_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(d) = args.duration {
        cfg.duration = Some(d);
    }
    if let Some(out) = args.out {
        cfg.output_dir = out;
    }
    cfg.validate().context("invalid configuration after overrides")?;
    let modes = parse_modes(&args.modes)?;
    let services = if args.services.is_empty() {
        cfg.default_services()
    } else {
        args.services
    };

    log::info!("running {} modes x {} services, seed {}", modes.len(), services.len(), cfg.seed);
    let outcome = run_experiment(&cfg, &modes, &services);
    emit_report(&cfg.output_dir, &outcome, &modes)
        .with_context(|| format!("writing results to {}", cfg.output_dir.display()))?;

    let rows = summary_rows(&outcome.summaries, &outcome.averages());
    print!("{}", render_table(&rows, &overhead_rows(&outcome, &modes)));
    println!("results written to {}", cfg.output_dir.display());

    let failed: Vec<_> = outcome.failed().collect();
    for f in &failed {
        eprintln!("{} service {} failed: {}", f.mode, f.service, f.error.as_deref().unwrap_or(""));
    }
    Ok(if failed.is_empty() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn compare(paths: &[PathBuf]) -> Result<()> {
    let mut rows: Vec<SummaryRow> = Vec::new();
    let mut overhead: Vec<OverheadRow> = Vec::new();
    for p in paths {
        let mut part: Vec<SummaryRow> = read_csv(p)?;
        for r in &part {
            row_mode(p, r)?;
        }
        if part.is_empty() {
            log::warn!("{} has no rows", p.display());
        }
        let oh = p.with_file_name("overhead.csv");
        if oh.exists() {
            overhead.extend(read_csv::<OverheadRow>(&oh)?);
        }
        rows.append(&mut part);
    }
    if rows.is_empty() {
        bail!("no summary rows found");
    }
    print!("{}", render_table(&rows, &overhead));
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
        Command::Validate { config } => load_config(Some(&config)).map(|cfg| {
            println!(
                "{}: ok ({} instances, {} services, {} tactics, {} rules)",
                config.display(),
                cfg.instances(),
                cfg.default_services().len(),
                cfg.tactics.catalogue.len(),
                cfg.rules.len()
            );
            ExitCode::SUCCESS
        }),
        Command::Compare { summaries } => compare(&summaries).map(|_| ExitCode::SUCCESS),
        Command::Reference => {
            print!("{}", ExperimentConfig::reference_toml());
            Ok(ExitCode::SUCCESS)
        }
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
