mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Settings, CSL_KEYS, DATA_KEYS, FINETUNE_KEYS, IMAGE_KEYS, TRAIN_KEYS};

pub const VERSION: &str = concat!(
    env!("CARGO_PKG_VERSION"),
    " (",
    env!("LRBN_GIT_DESCRIBE"),
    ")"
);

#[derive(Debug)]
pub enum CliError {
    /// Bad flags, config keys or values. Exit code 2.
    Usage(String),
    /// Everything else. Exit code 1.
    Runtime(String),
}

impl From<lrbn::LrbnError> for CliError {
    fn from(e: lrbn::LrbnError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Parser, Debug)]
#[command(name = "lrbn", version = VERSION, about = "Train and evaluate latent regression Bayesian networks")]
struct Cli {
    /// Worker threads for the parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Print metrics as a single-line JSON object.
    #[arg(long, global = true)]
    json: bool,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Greedy layer-wise hard-EM training.
    Train(TrainArgs),
    /// Unsupervised or supervised fine-tuning of a trained model.
    Finetune(FinetuneArgs),
    /// Mean reconstruction error over a data set.
    Reconstruct(ReconstructArgs),
    /// Ancestral samples written as PGM images.
    Sample(SampleArgs),
    /// Conservative sampling-based log-likelihood (CSL) of a data set.
    Logprob(LogprobArgs),
}

#[derive(Args, Debug, Default)]
struct DataArgs {
    /// IDX or LMAT sample file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// IDX label file (LMAT files carry their own labels).
    #[arg(long)]
    labels: Option<PathBuf>,
    /// Binarise `[0, 1]` inputs at this threshold (strict `>`).
    #[arg(long)]
    binarize: Option<f64>,
    /// Standardise every column of real-valued data.
    #[arg(long)]
    normalize: bool,
}

impl DataArgs {
    fn pairs(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("data", path_str(&self.data)),
            ("labels", path_str(&self.labels)),
            ("binarize", self.binarize.map(|v| v.to_string())),
            ("normalize", self.normalize.then(|| "true".into())),
        ]
    }
}

#[derive(Args, Debug, Default)]
struct OptimArgs {
    /// Learning rate.
    #[arg(long)]
    lr: Option<f64>,
    /// Minibatch size.
    #[arg(long)]
    batch: Option<usize>,
    /// Upper bound on training epochs.
    #[arg(long)]
    max_epochs: Option<usize>,
    /// Training samples held out for early stopping.
    #[arg(long)]
    validation_size: Option<usize>,
    /// Epochs without validation improvement before stopping.
    #[arg(long)]
    patience: Option<usize>,
    /// Start each E-step from the sample's previous MAP state.
    #[arg(long)]
    warm_start: Option<bool>,
    #[command(flatten)]
    icm: IcmArgs,
}

impl OptimArgs {
    fn pairs(&self) -> Vec<(&'static str, Option<String>)> {
        let mut v = vec![
            ("lr", self.lr.map(|v| v.to_string())),
            ("batch", self.batch.map(|v| v.to_string())),
            ("max_epochs", self.max_epochs.map(|v| v.to_string())),
            (
                "validation_size",
                self.validation_size.map(|v| v.to_string()),
            ),
            ("patience", self.patience.map(|v| v.to_string())),
            ("warm_start", self.warm_start.map(|v| v.to_string())),
        ];
        v.extend(self.icm.pairs());
        v
    }
}

#[derive(Args, Debug, Default)]
struct IcmArgs {
    /// Maximum ICM sweeps per inference.
    #[arg(long)]
    icm_sweeps: Option<usize>,
    /// `ascending` or `seeded`.
    #[arg(long)]
    icm_order: Option<String>,
    /// Master random seed.
    #[arg(long)]
    seed: Option<u64>,
}

impl IcmArgs {
    fn pairs(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("icm_sweeps", self.icm_sweeps.map(|v| v.to_string())),
            ("icm_order", self.icm_order.clone()),
            ("seed", self.seed.map(|v| v.to_string())),
        ]
    }
}

#[derive(Args, Debug, Default)]
struct ImageArgs {
    /// Image height in pixels (default: square images).
    #[arg(long)]
    image_rows: Option<usize>,
    /// Image width in pixels (default: square images).
    #[arg(long)]
    image_cols: Option<usize>,
}

impl ImageArgs {
    fn pairs(&self) -> Vec<(&'static str, Option<String>)> {
        vec![
            ("image_rows", self.image_rows.map(|v| v.to_string())),
            ("image_cols", self.image_cols.map(|v| v.to_string())),
        ]
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// `key = value` settings file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// Latent layer sizes, bottom first, e.g. `200,200`.
    #[arg(long)]
    layers: Option<String>,
    #[command(flatten)]
    optim: OptimArgs,
    /// Model output path (default: `model.lrbn`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report output path (default: `<out stem>.report.txt`).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FinetuneArgs {
    /// `key = value` settings file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Model to fine-tune.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// `unsupervised` or `supervised`.
    #[arg(long)]
    mode: Option<String>,
    #[command(flatten)]
    optim: OptimArgs,
    /// Bottom-up/top-down alternations.
    #[arg(long)]
    alternations: Option<usize>,
    /// Relative parameter change below which fine-tuning stops.
    #[arg(long)]
    tol: Option<f64>,
    /// Output model path (default: `<model stem>-finetuned.lrbn`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Report output path (default: `<out stem>.report.txt`).
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReconstructArgs {
    /// `key = value` settings file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trained model file.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    icm: IcmArgs,
    /// Write originals over reconstructions as one PGM grid.
    #[arg(long)]
    grid: Option<PathBuf>,
    /// Images in the grid (default 10).
    #[arg(long)]
    grid_images: Option<usize>,
    #[command(flatten)]
    image: ImageArgs,
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// `key = value` settings file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trained model file.
    #[arg(long)]
    model: Option<PathBuf>,
    /// Number of samples.
    #[arg(long)]
    count: Option<usize>,
    /// Random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for one PGM per sample (default `samples`).
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// File name prefix for per-sample images.
    #[arg(long)]
    prefix: Option<String>,
    /// Write all samples into this single tiled PGM instead.
    #[arg(long)]
    grid: Option<PathBuf>,
    #[command(flatten)]
    image: ImageArgs,
}

#[derive(Args, Debug)]
struct LogprobArgs {
    /// `key = value` settings file; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Trained model file.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    data: DataArgs,
    /// Latent samples per estimate.
    #[arg(long)]
    csl_samples: Option<usize>,
    /// Independent repetitions to average.
    #[arg(long)]
    csl_repetitions: Option<usize>,
    /// Random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Also compute the exact log-probability by enumeration (small models).
    #[arg(long)]
    oracle: bool,
}

fn path_str(p: &Option<PathBuf>) -> Option<String> {
    p.as_ref().map(|p| p.display().to_string())
}

fn keys(groups: &[&[&'static str]]) -> Vec<&'static str> {
    groups.concat()
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let json = cli.json;
    match cli.command {
        Command::Train(a) => {
            let mut flags = a.data.pairs();
            flags.extend(a.optim.pairs());
            flags.push(("layers", a.layers));
            flags.push(("out", path_str(&a.out)));
            flags.push(("report", path_str(&a.report)));
            let allowed = keys(&[DATA_KEYS, TRAIN_KEYS, &["layers", "out", "report"]]);
            let s = Settings::load(a.config.as_deref(), &allowed, flags)?;
            commands::train(&s, json)
        }
        Command::Finetune(a) => {
            let mut flags = a.data.pairs();
            flags.extend(a.optim.pairs());
            flags.extend([
                ("model", path_str(&a.model)),
                ("mode", a.mode),
                ("alternations", a.alternations.map(|v| v.to_string())),
                ("tol", a.tol.map(|v| v.to_string())),
                ("out", path_str(&a.out)),
                ("report", path_str(&a.report)),
            ]);
            let allowed = keys(&[
                DATA_KEYS,
                TRAIN_KEYS,
                FINETUNE_KEYS,
                &["model", "mode", "out", "report"],
            ]);
            let s = Settings::load(a.config.as_deref(), &allowed, flags)?;
            commands::finetune(&s, json)
        }
        Command::Reconstruct(a) => {
            let mut flags = a.data.pairs();
            flags.extend(a.icm.pairs());
            flags.extend(a.image.pairs());
            flags.extend([
                ("model", path_str(&a.model)),
                ("grid", path_str(&a.grid)),
                ("grid_images", a.grid_images.map(|v| v.to_string())),
            ]);
            let allowed = keys(&[
                DATA_KEYS,
                IMAGE_KEYS,
                &[
                    "icm_sweeps",
                    "icm_order",
                    "seed",
                    "model",
                    "grid",
                    "grid_images",
                ],
            ]);
            let s = Settings::load(a.config.as_deref(), &allowed, flags)?;
            commands::reconstruct(&s, json)
        }
        Command::Sample(a) => {
            let mut flags = a.image.pairs();
            flags.extend([
                ("model", path_str(&a.model)),
                ("count", a.count.map(|v| v.to_string())),
                ("seed", a.seed.map(|v| v.to_string())),
                ("out_dir", path_str(&a.out_dir)),
                ("prefix", a.prefix),
                ("grid", path_str(&a.grid)),
            ]);
            let allowed = keys(&[
                IMAGE_KEYS,
                &["model", "count", "seed", "out_dir", "prefix", "grid"],
            ]);
            let s = Settings::load(a.config.as_deref(), &allowed, flags)?;
            commands::sample(&s, json)
        }
        Command::Logprob(a) => {
            let mut flags = a.data.pairs();
            flags.extend([
                ("model", path_str(&a.model)),
                ("csl_samples", a.csl_samples.map(|v| v.to_string())),
                ("csl_repetitions", a.csl_repetitions.map(|v| v.to_string())),
                ("seed", a.seed.map(|v| v.to_string())),
                ("oracle", a.oracle.then(|| "true".into())),
            ]);
            let allowed = keys(&[DATA_KEYS, CSL_KEYS, &["model", "seed", "oracle"]]);
            let s = Settings::load(a.config.as_deref(), &allowed, flags)?;
            commands::logprob(&s, json)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}
