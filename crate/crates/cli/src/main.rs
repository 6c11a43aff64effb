use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use mpc_matching_cli::{compare_rounds, run_experiment, write_outputs, Algorithm, ExperimentConfig, GraphSpec};

#[derive(Parser)]
#[command(name = "mpc-matching", version, about = "Run matching experiments on the simulated MPC cluster")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment config and write results.csv, results.json and ledger.csv.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Run only this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        profile: Option<String>,
        /// Words per machine.
        #[arg(long)]
        space: Option<usize>,
        /// global, parallel or twoeps.
        #[arg(long)]
        algo: Option<Algorithm>,
        /// er:N:P, regular:N:D, union:T or file:PATH.
        #[arg(long)]
        graph: Option<GraphSpec>,
        /// Output directory; defaults to the config's `out`, then `results`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare charged rounds of two configs on the same graphs and seeds.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        /// Also write the table as CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run {
            config,
            seed,
            profile,
            space,
            algo,
            graph,
            out,
        } => {
            let mut cfg = ExperimentConfig::load(&config)?;
            if let Some(s) = seed {
                cfg.seeds = vec![s];
            }
            if let Some(p) = profile {
                cfg.profile = p;
            }
            if let Some(s) = space {
                cfg.space = s;
            }
            if let Some(a) = algo {
                cfg.algorithm = a;
            }
            if let Some(g) = graph {
                cfg.graph = g;
            }
            if let Some(o) = out {
                cfg.out = Some(o);
            }
            cfg.validate()?;
            let dir = cfg.out.clone().unwrap_or_else(|| "results".into());
            let exp = run_experiment(&cfg)?;
            write_outputs(&exp, &dir)?;
            for r in &exp.records {
                eprintln!(
                    "seed {} rep {}: |M| = {}, rounds = {}, blocks = {}{}",
                    r.seed,
                    r.repetition,
                    r.matching_size,
                    r.rounds,
                    r.blocks,
                    if r.violations.is_empty() {
                        String::new()
                    } else {
                        format!(", VIOLATIONS: {}", r.violations.join("; "))
                    }
                );
            }
            Ok(exp.ok())
        }
        Command::Compare { a, b, out } => {
            let ca = ExperimentConfig::load(&a)?;
            let cb = ExperimentConfig::load(&b)?;
            let rows = compare_rounds(&ca, &cb)?;
            let mut w = csv::Writer::from_writer(std::io::stdout());
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush()?;
            if let Some(path) = out {
                let mut w = csv::Writer::from_path(&path)?;
                for r in &rows {
                    w.serialize(r)?;
                }
                w.flush()?;
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
