//! Command-line front end: acquisition, embedding, extraction,
//! reconstruction and analysis over stream files.

pub mod args;
pub mod commands;
pub mod pgm;

pub use args::Cli;

use anyhow::Result;

/// How a successful run ended; extraction may recover all but one payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Exact,
    Truncated,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Exact => 0,
            Outcome::Truncated => 2,
        }
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    if let Some(jobs) = cli.jobs {
        // a second call in one process (tests) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global();
    }
    commands::dispatch(cli.command)
}
