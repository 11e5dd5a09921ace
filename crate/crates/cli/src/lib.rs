//! The `viva` operator command line.

pub mod error;
pub mod inspect;
pub mod run;
pub mod simulate;

pub use error::{exit, CliError};
pub use run::{run, RunArgs, RunOutcome};
pub use simulate::{simulate, AnswerStyle, SimulationReport};

use clap::{Parser, Subcommand};
use std::io::{BufRead, Write};
use std::net::SocketAddr;
use std::path::PathBuf;
use viva_core::guard::RuleSet;
use viva_core::SessionState;

#[derive(Debug, Parser)]
#[command(name = "viva", version, about = "Virtual viva voce examinations")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sit an examination in the terminal; answers end with an empty line.
    Run(RunArgs),
    /// Run a cohort of concurrent mock examinations with scripted candidates.
    Simulate {
        #[arg(long, default_value_t = 100)]
        sessions: usize,
        #[arg(long, value_enum, default_value = "honest")]
        answers: AnswerStyle,
        /// Worker threads; defaults to the available parallelism.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check the hash chain and header binding of an exported transcript.
    Verify { transcript: PathBuf },
    /// List injection flags raised by a plain-text file.
    Scan {
        path: PathBuf,
        /// Alternative rule set.
        #[arg(long)]
        rules: Option<PathBuf>,
    },
    /// Start the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        listen: Option<SocketAddr>,
    },
}

fn report_error(err: &CliError, stderr: &mut dyn Write) -> i32 {
    let _ = writeln!(stderr, "error: {err}");
    err.exit_code()
}

/// Executes one subcommand and returns the process exit code.
pub fn execute(cli: Cli, stdin: &mut dyn BufRead, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let result = match cli.command {
        Command::Run(args) => run(&args, stdin, stdout).map(|outcome| match outcome.state {
            SessionState::Completed => exit::OK,
            _ => exit::FAILED,
        }),
        Command::Simulate { sessions, answers, threads } => {
            let threads = threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(4, |n| n.get()));
            let report = simulate(sessions, answers, threads);
            let _ = writeln!(stdout, "{report}");
            Ok(if report.all_completed() { exit::OK } else { exit::FAILED })
        }
        Command::Verify { transcript } => inspect::verify_file(&transcript).map(|(doc, report)| {
            let _ = writeln!(stdout, "{report}");
            if let Some(head) = &report.head_hash {
                let _ = writeln!(stdout, "head {head}");
            }
            if let Some(verdict) = &doc.verdict {
                let _ = writeln!(stdout, "confidence_score {}", verdict.confidence_score());
            }
            if report.is_valid() {
                exit::OK
            } else {
                exit::FAILED
            }
        }),
        Command::Scan { path, rules } => {
            let rules = match rules {
                Some(p) => RuleSet::load(&p).map_err(|e| CliError::Config(e.to_string())),
                None => Ok(RuleSet::builtin().clone()),
            };
            rules.and_then(|rules| inspect::scan_file(&path, &rules)).map(|flags| {
                if flags.is_empty() {
                    let _ = writeln!(stdout, "no flags");
                    return exit::OK;
                }
                for flag in &flags {
                    let _ = writeln!(
                        stdout,
                        "{}\t{:?}\t{}..{}\t{:?}",
                        flag.rule_id, flag.severity, flag.span.start, flag.span.end, flag.excerpt
                    );
                }
                let _ = writeln!(stdout, "flags: {}", flags.len());
                exit::FLAGGED
            })
        }
        Command::Serve { config, listen } => serve(config, listen),
    };
    result.unwrap_or_else(|err| report_error(&err, stderr))
}

fn serve(config: Option<PathBuf>, listen: Option<SocketAddr>) -> Result<i32, CliError> {
    let mut config = run::load_service_config(config.as_deref())?;
    if let Some(listen) = listen {
        config.listen = listen;
    }
    let runtime = tokio::runtime::Runtime::new().map_err(CliError::Terminal)?;
    runtime.block_on(viva_server::serve(config))?;
    Ok(exit::OK)
}
