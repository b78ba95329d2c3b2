mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Invalid;

#[derive(Parser, Debug)]
#[command(name = "wfbench", version, about = "Website fingerprinting defense and attack workbench")]
pub struct Cli {
    /// TOML experiment config; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory that relative output paths are resolved against.
    #[arg(long, global = true, env = "WFBENCH_OUT_DIR")]
    pub out_dir: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "WFBENCH_THREADS")]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic closed or open world.
    Synth(SynthArgs),
    /// Turn a directory of `<label>_<n>.pcap` captures into a dataset.
    Ingest(IngestArgs),
    /// Size histogram and top-X filter list of a dataset.
    Stats(StatsArgs),
    /// Apply a defense; writes the observed dataset and a provenance sidecar.
    Defend(DefendArgs),
    /// Apply the filter attack built from a clean corpus.
    AttackFilter(AttackFilterArgs),
    /// Train the CNN and write a checkpoint.
    Train(TrainArgs),
    /// Closed-world accuracy of a model, plus overhead of a defended set.
    Eval(EvalArgs),
    /// Accuracy, DE and overhead over the P_t grid for each defense.
    Sweep(SweepArgs),
    /// Open-world ROC of the monitored score.
    Roc(RocArgs),
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    #[arg(long)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long)]
    pub sites: Option<usize>,
    #[arg(long)]
    pub per_site: Option<usize>,
    #[arg(long)]
    pub min_len: Option<usize>,
    #[arg(long)]
    pub max_len: Option<usize>,
    #[arg(long)]
    pub signature_len: Option<usize>,
    #[arg(long)]
    pub drop_prob: Option<f64>,
    #[arg(long)]
    pub resize_prob: Option<f64>,
    /// Number of unmonitored one-off visits; nonzero makes an open world.
    #[arg(long)]
    pub unmonitored: Option<usize>,
}

#[derive(Args, Debug)]
pub struct IngestArgs {
    pub dir: PathBuf,
    /// IPv4 address of the browsing client.
    #[arg(long)]
    pub client: String,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Frames larger than this are skipped.
    #[arg(long, default_value_t = wfbench_core::MAX_WIRE_SIZE)]
    pub max_wire_size: u32,
}

#[derive(Args, Debug)]
pub struct StatsArgs {
    pub dataset: PathBuf,
    #[arg(short = 'x', long)]
    pub x: Option<usize>,
    #[arg(long)]
    pub histogram: Option<PathBuf>,
    #[arg(long)]
    pub filter: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DefendArgs {
    pub dataset: PathBuf,
    /// none, rpd-small, rpd-medium, rpd-large, lad-insert or lad-split.
    #[arg(long)]
    pub defense: String,
    #[arg(long)]
    pub p_t: f64,
    #[arg(long)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
    /// Sidecar path (default: output with `.prov` appended).
    #[arg(long)]
    pub provenance: Option<PathBuf>,
    /// Corpus the defender's list is built from (default: the input).
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(short = 'x', long)]
    pub x: Option<usize>,
    #[arg(long)]
    pub split_min: Option<u32>,
}

#[derive(Args, Debug)]
pub struct AttackFilterArgs {
    pub dataset: PathBuf,
    /// Clean traffic the attacker's list is built from.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(short = 'x', long)]
    pub x: Option<usize>,
    #[arg(short, long)]
    pub output: PathBuf,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ModelArgs {
    #[arg(long)]
    pub feature_len: Option<usize>,
    /// cnn or knn.
    #[arg(long)]
    pub classifier: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    /// Comma-separated channels per block, e.g. `8,16,16,32`.
    #[arg(long, value_delimiter = ',')]
    pub channels: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    pub dataset: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Checkpoint path.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Per-epoch loss CSV.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    pub dataset: PathBuf,
    /// CNN checkpoint to evaluate.
    #[arg(long, conflicts_with = "knn_train", required_unless_present = "knn_train")]
    pub model: Option<PathBuf>,
    /// Training set for a k-NN classifier instead of a checkpoint.
    #[arg(long)]
    pub knn_train: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub feature_len: Option<usize>,
    /// Undefended dataset, for overhead (needs the defended set's sidecar).
    #[arg(long, requires = "provenance")]
    pub original: Option<PathBuf>,
    #[arg(long, requires = "original")]
    pub provenance: Option<PathBuf>,
    #[arg(long)]
    pub header_bytes: Option<u64>,
}

#[derive(Args, Debug)]
pub struct SweepArgs {
    /// Closed-world dataset (unmonitored rows are ignored).
    pub dataset: PathBuf,
    #[arg(long)]
    pub seed: u64,
    /// Output directory for accuracy.csv, overhead.csv, de.csv and the
    /// train.csv / test.csv split.
    #[arg(short, long)]
    pub output: PathBuf,
    /// Comma-separated defenses (default: all five).
    #[arg(long, value_delimiter = ',')]
    pub defenses: Option<Vec<String>>,
    /// Comma-separated P_t values.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    #[command(flatten)]
    pub exp: ExperimentArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Args, Debug, Clone, Default)]
pub struct ExperimentArgs {
    #[arg(long)]
    pub attack_x: Option<usize>,
    #[arg(long)]
    pub defense_x: Option<usize>,
    #[arg(long)]
    pub split_min: Option<u32>,
    #[arg(long)]
    pub header_bytes: Option<u64>,
    #[arg(long)]
    pub split_ratio: Option<f64>,
}

#[derive(Args, Debug)]
pub struct RocArgs {
    /// Open-world dataset.
    pub dataset: PathBuf,
    #[arg(long)]
    pub seed: u64,
    #[arg(short, long)]
    pub output: PathBuf,
    #[arg(long, default_value = "none")]
    pub defense: String,
    #[arg(long, default_value_t = 0.0)]
    pub p_t: f64,
    /// Attack with the filter and the filter-trained model.
    #[arg(long)]
    pub faa: bool,
    /// Number of evenly spaced thresholds in [0, 1].
    #[arg(long, default_value_t = 101)]
    pub thresholds: usize,
    #[command(flatten)]
    pub exp: ExperimentArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use wfbench_core::Error as E;
    for cause in err.chain() {
        if cause.is::<Invalid>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<E>() {
            return match e {
                E::BadMagic(_)
                | E::Truncated(_)
                | E::UnsupportedLinkType(_)
                | E::DivergedLoss { .. }
                | E::Io(_)
                | E::Csv(_)
                | E::Json(_) => 2,
                _ => 1,
            };
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
