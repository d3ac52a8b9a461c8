use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hystid_cli::{resolve_output_dir, run_pipeline, run_stage, validate_model_file, Artifacts, CliError, ExperimentManifest, Stage};

#[derive(Parser)]
#[command(name = "hystid", version, about = "Hysteresis identification with polynomial nonlinear state-space models")]
struct Cli {
    /// error, warn, info, debug or trace
    #[arg(long, global = true, default_value = "info")]
    log_level: String,

    /// Worker threads (defaults to the number of cores).
    #[arg(long, short = 'j', global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long, short)]
    manifest: PathBuf,

    /// Overrides `output_dir` from the manifest.
    #[arg(long, short)]
    output_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the estimation and validation records.
    Simulate(Common),
    /// Odd/even distortion analysis at every manifest amplitude.
    Distort(Common),
    /// Best linear approximation and the linear model grid.
    Bla(Common),
    /// Nonlinear state-space estimation for every degree set.
    Fit(Common),
    /// Multisine and sine-sweep validation.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Validate a single model file and print the report instead.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Every stage in order.
    Run(Common),
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(j) = cli.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| CliError::Config(format!("--jobs: {e}")))?;
    }
    let (common, stage) = match &cli.command {
        Command::Simulate(c) => (c, Some(Stage::Simulate)),
        Command::Distort(c) => (c, Some(Stage::Distort)),
        Command::Bla(c) => (c, Some(Stage::Bla)),
        Command::Fit(c) => (c, Some(Stage::Fit)),
        Command::Validate { common, .. } => (common, Some(Stage::Validate)),
        Command::Run(c) => (c, None),
    };
    let manifest = ExperimentManifest::load(&common.manifest)?;
    let out = Artifacts::new(resolve_output_dir(&manifest, common.output_dir.as_deref())?);
    match (&cli.command, stage) {
        (Command::Validate { model: Some(path), .. }, _) => {
            let report = validate_model_file(&manifest, &out, path)?;
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(())
        }
        (_, Some(stage)) => run_stage(&manifest, &out, stage),
        (_, None) => run_pipeline(&manifest, &out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new()
        .parse_filters(&cli.log_level)
        .format_timestamp(None)
        .init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
