mod args;
mod commands;
mod overrides;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{ArgAction, CommandFactory, FromArgMatches, Parser, Subcommand};

use args::{Act, Descriptor, FeatureArgs, ModelArgs, PrepArgs, TrainArgs};

const EXIT_CODES: &str = "\
Exit codes:
  0   success
  1   unclassified failure
  2   invalid command line or config file
  3   file system error
  4   malformed input file (WAV, manifest, weights, cache, JSON)
  5   invalid parameter, configuration or manifest contents
  6   unusable audio or features (silent, too short, wrong shape)
  7   training failure (divergence, non-finite values)
  8   detection failure (event ordering)
  9   archive download failure
  10  gradient check above tolerance";

#[derive(Parser, Debug)]
#[command(name = "birdsong", version, about = "Bird-song classification with a fully convolutional network", after_help = EXIT_CODES)]
pub struct Cli {
    /// File of `key = value` lines applied as flags of the subcommand;
    /// flags on the command line take precedence
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed for splits, initialization, shuffling and dropout
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; results are identical for any value
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// More log output on stderr (-v, -vv)
    #[arg(short, long, global = true, action = ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Download recordings for species from a paged JSON archive
    #[command(after_help = EXIT_CODES)]
    Fetch {
        /// Species query; repeat for several
        #[arg(long, required = true)]
        species: Vec<String>,
        /// Recordings per species
        #[arg(long, default_value_t = 100)]
        max: usize,
        /// Downloads and listing indexes live here
        #[arg(long)]
        cache_dir: PathBuf,
        /// TOML file with the archive endpoint and field names
        #[arg(long)]
        archive: Option<PathBuf>,
        /// Write a manifest of the downloaded files
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
    /// Write a synthetic labelled dataset of tone signatures
    #[command(after_help = EXIT_CODES)]
    Synth {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 4)]
        classes: usize,
        /// Clips per class
        #[arg(long, default_value_t = 40)]
        clips: usize,
        #[arg(long, default_value_t = 1.5)]
        min_seconds: f64,
        #[arg(long, default_value_t = 3.0)]
        max_seconds: f64,
        /// Signal-to-noise ratio of the added white noise
        #[arg(long, default_value_t = 10.0)]
        snr_db: f64,
    },
    /// Decode, cap at 20 s and trim silence; write clean WAVs and a manifest
    #[command(after_help = EXIT_CODES)]
    Prepare {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[command(flatten)]
        prep: PrepArgs,
    },
    /// Compute (and cache) descriptor matrices for a manifest
    #[command(after_help = EXIT_CODES)]
    Features {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "mel")]
        descriptor: Descriptor,
        #[command(flatten)]
        features: FeatureArgs,
    },
    /// Train with Monte Carlo cross-validation
    #[command(after_help = EXIT_CODES)]
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, default_value = "mel")]
        descriptor: Descriptor,
        /// Independent random splits
        #[arg(long, default_value_t = 10)]
        folds: usize,
        /// Save the model of the best fold here
        #[arg(long)]
        save_model: Option<PathBuf>,
        /// Write cv.json and per-fold confusion matrices here
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Cross-validate every depth x width x activation x descriptor cell
    #[command(after_help = EXIT_CODES)]
    Gridsearch {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "mel,mfcc")]
        descriptors: Vec<Descriptor>,
        #[arg(long, value_delimiter = ',', default_value = "3,4,6")]
        depths: Vec<usize>,
        /// Widest layer of each cell
        #[arg(long, value_delimiter = ',', default_value = "100,250,400")]
        grid_widths: Vec<usize>,
        #[arg(long, value_enum, value_delimiter = ',', default_value = "relu,tanh,adaptive")]
        activations: Vec<Act>,
        #[arg(long, default_value_t = 10)]
        folds: usize,
        /// Finished cells are stored here and skipped on the next run
        #[arg(long)]
        checkpoint_dir: Option<PathBuf>,
        /// Write the full result as JSON
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        features: FeatureArgs,
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Per-class metrics and confusion matrix of a saved model
    #[command(after_help = EXIT_CODES)]
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Write the confusion matrix as CSV
        #[arg(long)]
        confusion_csv: Option<PathBuf>,
        /// Write the report as JSON
        #[arg(long)]
        json: Option<PathBuf>,
        #[command(flatten)]
        prep: PrepArgs,
    },
    /// Accuracy when test clips are cut to each duration
    #[command(after_help = EXIT_CODES)]
    Durations {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Durations in seconds
        #[arg(long, value_delimiter = ',', default_value = "1,3,5,7,10,15,20")]
        durations: Vec<f64>,
        #[command(flatten)]
        prep: PrepArgs,
    },
    /// Chunked detection: events for a recording, or multispecies metrics
    /// for a manifest
    #[command(after_help = EXIT_CODES)]
    Detect {
        #[arg(long)]
        model: PathBuf,
        /// Recording to scan; events go to stdout as JSON lines
        #[arg(long, conflicts_with = "manifest", required_unless_present = "manifest")]
        input: Option<PathBuf>,
        /// Labelled recordings for chunk accuracy and co-occurrence counts
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Chunk length in seconds
        #[arg(long, default_value_t = 3.0)]
        chunk: f64,
        /// Chunk stride in seconds
        #[arg(long, default_value_t = 1.0)]
        hop: f64,
        /// Chunks below this confidence are not reported
        #[arg(long, default_value_t = 0.0)]
        min_confidence: f64,
        /// Flag chunks quieter than this many dB below full scale
        #[arg(long, default_value_t = 60.0)]
        low_energy_db: f64,
        /// Report every chunk instead of merging agreeing neighbours
        #[arg(long)]
        no_merge: bool,
        /// Feed the recording through the streaming detector in blocks
        #[arg(long)]
        stream: bool,
        /// Print a text timeline instead of JSON lines
        #[arg(long)]
        timeline: bool,
    },
    /// Finite-difference check of every layer type and small networks
    #[command(after_help = EXIT_CODES)]
    Gradcheck {
        /// Scale analytic conv gradients by this factor (negative control)
        #[arg(long)]
        fault_scale: Option<f64>,
    },
}

fn command() -> clap::Command {
    Cli::command().mut_subcommands(|s| s.args_override_self(true))
}

fn parse(argv: &[String]) -> Result<Cli, clap::Error> {
    let cli = Cli::from_arg_matches(&command().try_get_matches_from(argv)?)?;
    let Some(path) = &cli.config else {
        return Ok(cli);
    };
    let extra = match overrides::load(path) {
        Ok(e) => e,
        Err(e) => return Err(command().error(clap::error::ErrorKind::InvalidValue, format!("{e:#}"))),
    };
    let name = command()
        .try_get_matches_from(argv)?
        .subcommand_name()
        .map(str::to_string)
        .unwrap_or_default();
    let spliced = overrides::splice(argv, &name, extra);
    Cli::from_arg_matches(&command().try_get_matches_from(&spliced)?)
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = match parse(&argv) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::exit_code(&e))
        }
    }
}
