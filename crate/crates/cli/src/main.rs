//! `strata` — command-line pipeline for statute entailment and financial
//! report QA runs: import data, inspect retrieval and prompts, execute runs
//! against a completion backend, and score the results.
//!
//! Exit codes: 0 on success, 1 for configuration or data problems, 2 when
//! the backend was exhausted (rate limits or timeouts) on every attempted
//! case.

mod commands;
mod config;
mod data;
mod runner;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "strata", version, about = "Statute and financial-report QA pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Import a raw directory (statutes/*.txt + cases/*.txt) into normalized JSONL files.
    ImportSara {
        /// Directory holding statutes/ and cases/ subdirectories.
        raw_dir: PathBuf,
        /// Where statutes.jsonl and cases.jsonl are written.
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Convert a distributed financial QA JSON file into a case corpus (JSONL).
    ImportFinqa {
        /// JSON array of report/question entries.
        file: PathBuf,
        /// Output corpus path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse statute files and emit one JSON row per sentence.
    ParseStatutes {
        /// A statute directory or a single sectionNNN.txt file.
        input: PathBuf,
        /// Write rows here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Retrieve statute context for section paths or a statement's citations.
    Retrieve {
        #[arg(long)]
        config: PathBuf,
        /// Canonical section path, e.g. s7703(a)(1); repeatable.
        #[arg(long)]
        path: Vec<String>,
        /// A statement to scan for citations instead of explicit paths.
        #[arg(long)]
        text: Option<String>,
        /// Override the configured strategy.
        #[arg(long)]
        strategy: Option<String>,
    },
    /// Build and print the prompt for one case.
    BuildPrompt {
        #[arg(long)]
        config: PathBuf,
        /// Case id to build for (searched across the whole case file).
        #[arg(long)]
        case: String,
        /// Override the configured prompt mode (zero, few, cot).
        #[arg(long)]
        mode: Option<String>,
    },
    /// Draw a seeded sample of case ids from a case file.
    Sample {
        #[arg(long)]
        cases: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: u64,
        /// Restrict to a split first (validation or test).
        #[arg(long)]
        split: Option<String>,
        /// Write ids here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Execute a run: prompts, completions, records, report.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        output_dir: Option<PathBuf>,
    },
    /// Re-score a run directory from its records and rewrite the report.
    Eval {
        #[arg(long)]
        run_dir: PathBuf,
        /// Output format: json or table.
        #[arg(long, default_value = "json")]
        format: String,
    },
    /// Parse and evaluate one reasoning program.
    EvalProgram {
        /// Program text, e.g. "subtract(100, 60), divide(#0, 60)".
        #[arg(long)]
        program: String,
        /// JSON financial report for table operations.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Write non-correct cases to a CSV for hand annotation.
    DumpAnnotations {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    // Die quietly when a downstream pipe closes (e.g. `strata ... | head`)
    // instead of panicking on the failed write.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    // Usage mistakes are configuration errors (exit 1); --help and --version
    // are not errors at all.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(1);
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<i32> {
    match cli.command {
        Command::ImportSara { raw_dir, out_dir } => {
            commands::cmd_import_sara(&raw_dir, &out_dir)?;
        }
        Command::ImportFinqa { file, out } => {
            commands::cmd_import_finqa(&file, &out)?;
        }
        Command::ParseStatutes { input, out } => {
            commands::cmd_parse_statutes(&input, out.as_deref())?;
        }
        Command::Retrieve {
            config,
            path,
            text,
            strategy,
        } => {
            commands::cmd_retrieve(&config, &path, text.as_deref(), strategy.as_deref())?;
        }
        Command::BuildPrompt { config, case, mode } => {
            commands::cmd_build_prompt(&config, &case, mode.as_deref())?;
        }
        Command::Sample {
            cases,
            n,
            seed,
            split,
            out,
        } => {
            commands::cmd_sample(&cases, n, seed, split.as_deref(), out.as_deref())?;
        }
        Command::Run { config, output_dir } => {
            return commands::cmd_run(&config, output_dir.as_deref());
        }
        Command::Eval { run_dir, format } => {
            commands::cmd_eval(&run_dir, &format)?;
        }
        Command::EvalProgram { program, report } => {
            commands::cmd_eval_program(&program, report.as_deref())?;
        }
        Command::DumpAnnotations { run_dir, out } => {
            commands::cmd_dump_annotations(&run_dir, &out)?;
        }
    }
    Ok(0)
}
