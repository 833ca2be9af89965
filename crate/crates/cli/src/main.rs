use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use bikeqa_core::config::RunConfig;
use bikeqa_core::graph::DatasetRole;
use bikeqa_core::pipeline::{run_compare, run_full, run_intrinsic, RunOptions, COMPARE_DIR};
use bikeqa_core::runlog::RunLog;
use bikeqa_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Quality assessment of bicycle infrastructure network data.
#[derive(Parser, Debug)]
#[command(name = "bikeqa", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Analyse one data set on its own.
    Intrinsic(Common),
    /// Compare OSM with the reference data set and match their features.
    Compare(Common),
    /// Both intrinsic analyses followed by the comparison.
    Full(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory; overrides the configuration.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Replace existing output directories.
    #[arg(long)]
    overwrite: bool,
    /// Worker threads (default: all cores).
    #[arg(long, short, env = "BIKEQA_JOBS")]
    jobs: Option<usize>,
    /// `intrinsic`: data set to analyse (default osm).
    /// `full`: run a single stage.
    #[arg(long, value_enum)]
    only: Option<Only>,
    /// Print progress messages.
    #[arg(long, short)]
    verbose: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Only {
    Osm,
    Reference,
    Compare,
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => 1,
        Error::Output(_) => 3,
        Error::GridMismatch(_) => 4,
        Error::Xml { .. }
        | Error::MissingNode { .. }
        | Error::Feature { .. }
        | Error::Input(_)
        | Error::StudyArea(_)
        | Error::UntaggedInput
        | Error::DegenerateSegment
        | Error::Io { .. } => 2,
    }
}

fn options(cfg: &RunConfig, args: &Common) -> anyhow::Result<RunOptions> {
    let mut opts = RunOptions::from_config(cfg);
    if let Some(out) = &args.out {
        opts.out_dir = out.clone();
    }
    opts.overwrite |= args.overwrite;
    if let Some(j) = args.jobs {
        anyhow::ensure!(j > 0, Error::Config("--jobs must be at least 1".into()));
        opts.jobs = Some(j);
    }
    Ok(opts)
}

fn role(only: Only) -> Option<DatasetRole> {
    match only {
        Only::Osm => Some(DatasetRole::Osm),
        Only::Reference => Some(DatasetRole::Reference),
        Only::Compare => None,
    }
}

fn run(cli: Cli, log: &RunLog) -> anyhow::Result<PathBuf> {
    let (Command::Intrinsic(args) | Command::Compare(args) | Command::Full(args)) = &cli.command;
    let cfg = RunConfig::load(&args.config)?;
    let opts = options(&cfg, args)?;
    let dir: bikeqa_core::Result<PathBuf> = match (&cli.command, args.only) {
        (Command::Intrinsic(_), only) => {
            let role = match only.map(role) {
                None => DatasetRole::Osm,
                Some(Some(r)) => r,
                Some(None) => return Err(Error::Config("intrinsic takes --only osm or --only reference".into()).into()),
            };
            run_intrinsic(&cfg, role, &opts, log).map(|_| opts.stage_dir(role.as_str()))
        }
        (Command::Compare(_), None | Some(Only::Compare)) => {
            run_compare(&cfg, &opts, log).map(|_| opts.stage_dir(COMPARE_DIR))
        }
        (Command::Compare(_), Some(_)) => Err(Error::Config("compare takes no --only other than compare".into())),
        (Command::Full(_), None) => run_full(&cfg, &opts, log).map(|_| opts.out_dir.clone()),
        (Command::Full(_), Some(only)) => match role(only) {
            Some(r) => run_intrinsic(&cfg, r, &opts, log).map(|_| opts.stage_dir(r.as_str())),
            None => run_compare(&cfg, &opts, log).map(|_| opts.stage_dir(COMPARE_DIR)),
        },
    };
    dir.with_context(|| format!("run with {} failed", args.config.display()))
}

fn main() -> ExitCode {
    // Usage errors count as configuration errors, not clap's default 2.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let (Command::Intrinsic(args) | Command::Compare(args) | Command::Full(args)) = &cli.command;
    let default_level = if args.verbose { "info" } else { "warn" };
    // One JSON object per line on stderr so progress can be parsed.
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default_level))
        .format(|buf, record| {
            let line = serde_json::json!({
                "level": record.level().as_str(),
                "target": record.target(),
                "message": record.args().to_string(),
            });
            writeln!(buf, "{line}")
        })
        .init();

    let log = RunLog::new();
    let result = run(cli, &log);
    match result {
        Ok(dir) => {
            log::info!("outputs in {}", dir.display());
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<Error>().map_or(1, exit_code);
            ExitCode::from(code)
        }
    }
}
