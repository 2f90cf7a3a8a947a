mod config;
mod experiments;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;

#[derive(Parser)]
#[command(name = "ecrflow", version, about = "Event-selected vector field toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute the experiment described by a config file.
    Run {
        /// Path to a flat key = value config.
        config: PathBuf,
        /// Override the experiment named in the config.
        #[arg(long)]
        experiment: Option<String>,
        /// Sweep a parameter: key=v1,v2,... (e.g. sync2.beta=5,10,20).
        #[arg(long)]
        sweep: Option<String>,
        /// Output directory (overrides output.dir).
        #[arg(long)]
        out: Option<PathBuf>,
        /// RNG seed (overrides seed).
        #[arg(long)]
        seed: Option<u64>,
        /// Override an integrator tolerance: key=value
        /// (rel_tol, abs_tol, event_tol, max_step, horizon).
        #[arg(long = "tol-override")]
        tol_override: Vec<String>,
        /// Corrupt the saltation sign (fault-detection demonstration).
        #[arg(long)]
        mutation: bool,
    },
    /// Run the built-in acceptance suite and print one line per criterion.
    Acceptance {
        /// Optional config supplying seed overrides.
        config: Option<PathBuf>,
        #[arg(long)]
        mutation: bool,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            config,
            experiment,
            sweep,
            out,
            seed,
            tol_override,
            mutation,
        } => {
            let loaded = RunConfig::load(&config).and_then(|mut c| {
                if let Some(e) = experiment {
                    c.set("experiment", &e)?;
                }
                if let Some(o) = out {
                    c.set("output.dir", &o.display().to_string())?;
                }
                if let Some(s) = seed {
                    c.set("seed", &s.to_string())?;
                }
                for t in &tol_override {
                    let (k, v) = t.split_once('=').ok_or_else(|| {
                        config::ConfigError::new(format!("bad --tol-override '{t}' (want key=value)"))
                    })?;
                    c.set(&format!("integrator.{k}"), v)?;
                }
                c.mutation |= mutation;
                Ok(c)
            });
            let cfg = match loaded {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error.kind = config");
                    eprintln!("error.message = {e}");
                    return ExitCode::from(2);
                }
            };
            match experiments::run(&cfg, sweep.as_deref()) {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    let _ = experiments::write_error_record(&cfg, &e);
                    eprintln!("error.kind = experiment");
                    eprintln!("error.message = {e}");
                    ExitCode::FAILURE
                }
            }
        }
        Command::Acceptance {
            config,
            mutation,
            seed,
        } => {
            let mut opts = ecrflow::acceptance::AcceptanceOptions::default();
            if let Some(path) = config {
                match RunConfig::load(&path) {
                    Ok(c) => opts.seed = c.seed,
                    Err(e) => {
                        eprintln!("error.kind = config");
                        eprintln!("error.message = {e}");
                        return ExitCode::from(2);
                    }
                }
            }
            if let Some(s) = seed {
                opts.seed = s;
            }
            opts.mutation = mutation;
            let results = ecrflow::acceptance::run_all(&opts);
            let mut all_pass = true;
            for r in &results {
                println!("{}", r.line());
                all_pass &= r.passed;
            }
            println!(
                "{}: {}/{} criteria passed",
                if all_pass { "OK" } else { "FAILED" },
                results.iter().filter(|r| r.passed).count(),
                results.len()
            );
            if all_pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
