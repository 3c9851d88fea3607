//! Batch front end: argument parsing, input validation and command dispatch.

pub mod args;
pub mod commands;
pub mod formats;
pub mod io;
pub mod validate;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::Parser;

use args::{Cli, Command};
use commands::{fusion_demo::DemoConfig, CliError, CmdResult};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

fn dispatch(cmd: &Command) -> CmdResult {
    match cmd {
        Command::GenSparse(a) => commands::gen_sparse::run(a),
        Command::EvalGrounding(a) => commands::eval::grounding(a),
        Command::EvalDetection(a) => commands::eval::detection(a),
        Command::EvalCaption(a) => commands::eval::caption(a),
        Command::EvalPointmap(a) => commands::eval::pointmap(a),
        Command::FusionDemo(a) => {
            let cfg: DemoConfig = io::read_json(&a.config)?;
            commands::fusion_demo::run(a, cfg)
        }
        Command::PromptEmit(a) => commands::prompt_emit::run(a),
    }
}

/// Runs one invocation and returns the process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let name = cli.command.name();

    let diags = validate::validate_inputs(&cli.command);
    if !diags.is_empty() {
        for d in &diags {
            eprintln!("{d}");
        }
        eprintln!("geoalign {name}: {} input defect(s), nothing computed", diags.len());
        return EXIT_DATA;
    }

    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("geoalign {name}: cannot start worker pool: {e}");
            return EXIT_DATA;
        }
    };
    match pool.install(|| dispatch(&cli.command)) {
        Ok(summary) => {
            eprintln!("geoalign {name}: {summary}");
            EXIT_OK
        }
        Err(CliError::Invalid(diags)) => {
            for d in &diags {
                eprintln!("{d}");
            }
            eprintln!("geoalign {name}: {} input defect(s)", diags.len());
            EXIT_DATA
        }
        Err(e) => {
            eprintln!("geoalign {name}: error: {e}");
            EXIT_DATA
        }
    }
}
