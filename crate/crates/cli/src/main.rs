mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, Parser, Subcommand};

use commands::*;

/// SEAndroid policy normalization, customization diffing and rule
/// classification.
#[derive(Parser, Debug)]
#[command(name = "sepal", version, about)]
struct Cli {
    /// TOML file with default flag values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for parsing, expansion and encoding (default: all cores).
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,

    /// More log output (repeat for more).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Parse policy sources or auxiliary files.
    Parse(ParseArgs),
    /// Expand a policy into atomic rules.
    Expand(ExpandArgs),
    /// Keep device allow atomics that the reference lacks.
    Diff(DiffArgs),
    /// Map domains to uid buckets.
    Uid(UidArgs),
    /// Embed policy comments as paragraph vectors.
    Comments(CommentsArgs),
    /// Train the rule classifier on reference atomics.
    Train(TrainArgs),
    /// Flag customized allow rules the classifier predicts as neverallow.
    Classify(ClassifyArgs),
    /// Nearest-neighbour verdicts for customized rules.
    Baseline(BaselineArgs),
    /// Tag findings with categories and write corpus statistics.
    Report(ReportArgs),
    /// Write a synthetic corpus with planted violations.
    Synth(SynthArgs),
}

fn run() -> anyhow::Result<()> {
    let mut root = Cli::command();
    root.build();
    let args = config::splice(std::env::args_os().collect(), &root)?;
    let cli = Cli::parse_from(args);

    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.jobs {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }

    match cli.command {
        Cmd::Parse(a) => parse(a),
        Cmd::Expand(a) => expand(a),
        Cmd::Diff(a) => diff(a),
        Cmd::Uid(a) => uid(a),
        Cmd::Comments(a) => comments(a),
        Cmd::Train(a) => train(a),
        Cmd::Classify(a) => classify(a),
        Cmd::Baseline(a) => baseline(a),
        Cmd::Report(a) => report(a),
        Cmd::Synth(a) => synth(a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let code = exit_code(&e);
            eprintln!("sepal: {e:#}");
            ExitCode::from(code)
        }
    }
}

/// 2 parse errors, 3 missing or unreadable files, 4 degenerate data, 1 else.
fn exit_code(e: &anyhow::Error) -> u8 {
    use sepal_core::Error;
    for cause in e.chain() {
        let mut inner = cause.downcast_ref::<Error>();
        while let Some(Error::InFile { inner: boxed, .. }) = inner {
            inner = Some(boxed);
        }
        match inner {
            Some(Error::Syntax { .. } | Error::InvalidIdent(_) | Error::UnknownName(_) | Error::Format(_))
            | Some(Error::MalformedTree(_) | Error::Json(_)) => return 2,
            Some(Error::Io(_)) => return 3,
            Some(Error::DegenerateData(_) | Error::EmptyCorpus) => return 4,
            _ => {}
        }
        if cause.downcast_ref::<std::io::Error>().is_some() {
            return 3;
        }
    }
    1
}
