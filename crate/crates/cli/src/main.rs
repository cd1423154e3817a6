use clap::{Parser, Subcommand};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use mrm_tracker::sim::config::Config;
use mrm_tracker::sim::filter::run_filter;
use mrm_tracker::sim::monte_carlo::{events_report, monte_carlo, summary_csv};
use mrm_tracker::sim::output::{errors_csv, evaluate, read_run_csv, run_csv, RunReport};
use mrm_tracker::sim::scenario::{read_scenario, simulate, write_scenario, ScenarioSpec, ShapeKind, ShapeSpec};
use mrm_tracker::Result;

#[derive(Parser)]
#[command(name = "mrmtrack", about = "Multiple-ellipse extended target tracking lab")]
struct Cli {
    /// TOML file with [model], [em] and [scenario] tables
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    #[arg(long, global = true)]
    gamma0: Option<f64>,
    #[arg(long, global = true, value_parser = ["t", "plane", "v"])]
    shape: Option<String>,
    #[arg(long, global = true)]
    stationary: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a simulated scenario file
    Simulate,
    /// Run the filter on a scenario file
    Track {
        #[arg(long)]
        scenario: PathBuf,
    },
    /// Monte-Carlo campaign with per-step percentile curves
    Mc {
        #[arg(long, default_value_t = 100)]
        runs: usize,
    },
    /// Recompute error metrics from a track output
    Evaluate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        run: PathBuf,
    },
    /// Association event counts for several rates
    EventsStats {
        #[arg(long, default_value_t = 50)]
        runs: usize,
        #[arg(long, value_delimiter = ',', default_values_t = vec![2.0, 5.0, 20.0])]
        rates: Vec<f64>,
    },
}

fn load_config(cli: &Cli) -> Result<Config> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    if let Some(s) = &cli.shape {
        let kind: ShapeKind = s.parse()?;
        cfg.scenario.shape = ShapeSpec::preset(kind)?;
    }
    if let Some(g) = cli.gamma0 {
        cfg.scenario.gamma0 = g;
    }
    if cli.stationary {
        cfg.scenario.stationary = true;
    }
    cfg.resolved()
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, contents)?;
    Ok(path)
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn run(cli: &Cli) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Simulate => {
            let scenario = simulate(&cfg.scenario, cli.seed)?;
            let path = write(&cli.out, "scenario.txt", &write_scenario(&scenario)?)?;
            write(&cli.out, "config.toml", &cfg.to_toml()?)?;
            println!("wrote {} ({} steps)", path.display(), scenario.steps.len());
        }
        Command::Track { scenario } => {
            let scenario = read_scenario(&fs::read_to_string(scenario)?)?;
            let mut model = cfg.model.clone();
            model.n_subobjects = scenario.spec.shape.n_subobjects();
            let out = run_filter(&scenario, &model, &cfg.em, cli.seed, false)?;
            write(&cli.out, "track.csv", &run_csv(&scenario, &out))?;
            let report = RunReport::new(&out, cli.seed);
            write(&cli.out, "track.json", &json(&report))?;
            print!("{}", json(&report));
        }
        Command::Mc { runs } => {
            let summary = monte_carlo(&cfg.scenario, &cfg.model, &cfg.em, *runs, cli.seed)?;
            write(&cli.out, "mc_summary.csv", &summary_csv(&summary))?;
            write(&cli.out, "mc_summary.json", &json(&summary))?;
            println!("{}", events_report(&summary));
        }
        Command::Evaluate { scenario, run } => {
            let scenario = read_scenario(&fs::read_to_string(scenario)?)?;
            let estimates = read_run_csv(&fs::read_to_string(run)?, scenario.spec.shape.n_subobjects())?;
            let errors = evaluate(&scenario, &estimates)?;
            let csv = errors_csv(&errors);
            write(&cli.out, "evaluate.csv", &csv)?;
            print!("{csv}");
        }
        Command::EventsStats { runs, rates } => {
            let mut lines = Vec::new();
            for &g in rates {
                let spec = ScenarioSpec {
                    gamma0: g,
                    ..cfg.scenario.clone()
                };
                let summary = monte_carlo(&spec, &cfg.model, &cfg.em, *runs, cli.seed)?;
                let line = events_report(&summary);
                println!("{line}");
                lines.push(line);
            }
            write(&cli.out, "events_stats.txt", &(lines.join("\n") + "\n"))?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
