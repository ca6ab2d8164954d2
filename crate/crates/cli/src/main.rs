use std::path::PathBuf;
use std::process::ExitCode;

use artl::config::RunConfig;
use artl::experiment::{results_path, run_experiment};
use artl::Error;
use clap::{Parser, Subcommand};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;

#[derive(Parser)]
#[command(name = "artl", version, about = "Robust MLP regression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        /// Comma-separated seeds overriding the config.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Parallel runs; falls back to ARTL_WORKERS, then all cores.
        #[arg(long)]
        workers: Option<usize>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ConfigLine { .. } | Error::InvalidConfig(_) => EXIT_CONFIG,
        Error::Diverged { .. } => EXIT_DIVERGED,
        _ => EXIT_FAILURE,
    }
}

fn main() -> ExitCode {
    let Command::Run {
        config,
        seeds,
        output_dir,
        workers,
    } = Cli::parse().command;

    let mut cfg = match RunConfig::from_file(&config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(s) = seeds {
        if s.is_empty() {
            eprintln!("error: --seeds needs at least one seed");
            return ExitCode::from(EXIT_CONFIG);
        }
        cfg.seeds = s;
    }
    if let Some(dir) = output_dir {
        cfg.output.dir = dir;
    }
    if let Some(w) = workers {
        if w == 0 {
            eprintln!("error: --workers must be positive");
            return ExitCode::from(EXIT_CONFIG);
        }
        cfg.workers = Some(w);
    }

    let outcome = match run_experiment(&cfg) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };

    for r in &outcome.results {
        println!("{}\t{}\tseed {}\tpmse {:.4}", r.dataset, r.method, r.seed, r.pmse);
    }
    for b in &outcome.breakdown {
        println!(
            "{}\t{}\tseed {}\tHOV ratio {:.3e}",
            b.dataset,
            b.method,
            b.seed,
            b.outcome.ratio()
        );
    }
    for c in &outcome.correlations {
        println!(
            "{}\t{} configs\tpearson {:.3}\tspearman {:.3}",
            c.dataset, c.configs, c.pearson, c.spearman
        );
    }
    if !outcome.results.is_empty() {
        println!("results: {}", results_path(&cfg).display());
    }

    let mut code = 0;
    for f in &outcome.failures {
        eprintln!("error: run {} failed: {}", f.run, f.error);
        code = code.max(exit_code(&f.error));
    }
    if outcome.diverged() {
        code = EXIT_DIVERGED;
    }
    ExitCode::from(code)
}
