//! Library behind the `nhfa` binary, so the commands can be driven from
//! tests.

pub mod args;
pub mod checks;
pub mod commands;
pub mod config;
pub mod error;
pub mod output;

pub use args::{Cli, Command};
pub use error::{CliError, CliResult};

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth(a) => {
            for p in commands::synth(&a)? {
                println!("{}", p.display());
            }
        }
        Command::Fit(a) => {
            let s = commands::fit(&a)?;
            println!("{} sweeps, {} stored states, final active K {}", s.iterations, s.snapshots.len(), s.final_active_k);
        }
        Command::Perplexity(a) => {
            let r = commands::perplexity(&a)?;
            println!("L={} R={} burn={} seed={} log-likelihood {:.6} PPD {:.6e}", r.l, r.r, r.burn, r.seed, r.log_likelihood, r.ppd);
        }
        Command::Retrieve(a) => {
            let r = commands::retrieve(&a)?;
            println!("MAP {:.4} over {} queries", r.map, r.n_queries);
        }
        Command::Diagnose(a) => {
            commands::diagnose(&a)?;
        }
    }
    Ok(())
}
