//! Flag definitions for every subcommand.

use std::path::PathBuf;

#[derive(clap::Args)]
pub struct KeygenArgs {
    /// Parameter preset: p1, p2, or toy.
    #[arg(long, default_value = "p1")]
    pub preset: String,
    #[arg(long)]
    pub out_dir: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Packed item width the rotation keys cover.
    #[arg(long, default_value_t = 768)]
    pub item_width: usize,
    /// Convolution filter width of the served circuit.
    #[arg(long, default_value_t = 9)]
    pub conv_filter: usize,
    /// Pooling window of the served circuit.
    #[arg(long, default_value_t = 3)]
    pub pool: usize,
    /// Overwrite existing key files.
    #[arg(long)]
    pub force: bool,
}

#[derive(clap::Args)]
pub struct TrainSourceArgs {
    /// Training CSV: label,f0,...,f(W-1).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    /// DP noise multiplier; 0 disables DP entirely.
    #[arg(long, default_value_t = 0.0)]
    pub dp_noise: f64,
    /// DP per-example l2 clipping norm.
    #[arg(long, default_value_t = 0.75)]
    pub dp_clip: f64,
    /// DP target delta (defaults to 1/|dataset|).
    #[arg(long)]
    pub dp_delta: Option<f64>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Input width of the model (embedding dimension).
    #[arg(long, default_value_t = 768)]
    pub input_width: usize,
    #[arg(long, default_value_t = 9)]
    pub conv_filter: usize,
    #[arg(long, default_value_t = 3)]
    pub pool: usize,
}

#[derive(clap::Args)]
pub struct ExportFrozenArgs {
    /// Trained server model (CTLW, server-full kind).
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(clap::Args)]
pub struct ServeArgs {
    /// Server model or frozen-prefix CTLW file.
    #[arg(long)]
    pub weights: PathBuf,
    #[arg(long, default_value = "p1")]
    pub preset: String,
    /// TCP port (env CRYPTOTL_PORT overrides the default).
    #[arg(long)]
    pub port: Option<u16>,
    /// Serve frames from a directory instead of a socket, then exit.
    #[arg(long)]
    pub offline_dir: Option<PathBuf>,
    /// Required to serve the toy (insecure) preset.
    #[arg(long)]
    pub allow_insecure: bool,
    /// Exit after this many TCP sessions (0 = run until interrupted).
    #[arg(long, default_value_t = 0)]
    pub max_sessions: u64,
    /// Keep client evaluation keys cached across sessions.
    #[arg(long)]
    pub retain_keys: bool,
}

#[derive(clap::Args)]
pub struct FinetuneArgs {
    /// Server address host:port (mutually exclusive with --offline-dir).
    #[arg(long)]
    pub server: Option<String>,
    #[arg(long)]
    pub offline_dir: Option<PathBuf>,
    /// Target-domain CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Key directory from `keygen`.
    #[arg(long)]
    pub keys: PathBuf,
    /// Output client model (CTLW).
    #[arg(long)]
    pub out: PathBuf,
    /// Cached decrypted features (defaults to <out>.features.csv).
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(clap::Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub server: Option<String>,
    #[arg(long)]
    pub offline_dir: Option<PathBuf>,
    /// Input CSV (label column present but ignored for classification).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub keys: PathBuf,
    /// Client model from `finetune`.
    #[arg(long)]
    pub client_weights: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(clap::Args)]
pub struct BenchArgs {
    #[arg(long, default_value = "p1")]
    pub preset: String,
    /// Timed repetitions of the forward pass.
    #[arg(long, default_value_t = 3)]
    pub repeat: usize,
    #[arg(long, default_value_t = 768)]
    pub item_width: usize,
    #[arg(long, default_value_t = 9)]
    pub conv_filter: usize,
    #[arg(long, default_value_t = 3)]
    pub pool: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Machine-readable key=value report file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(clap::Args)]
pub struct ExperimentArgs {
    /// Only `tl-curve` exists.
    #[arg(long, default_value = "tl-curve")]
    pub scenario: String,
    /// Target-data percentages to sweep.
    #[arg(long, default_value = "1,5,10,25,50,100", value_delimiter = ',')]
    pub fractions: Vec<f64>,
    #[arg(long, default_value_t = 8)]
    pub seeds: u64,
    /// Aggregate CSV (a per-seed CSV lands next to it).
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2000)]
    pub source_size: usize,
    #[arg(long, default_value_t = 4000)]
    pub target_size: usize,
    #[arg(long, default_value_t = 800)]
    pub test_size: usize,
    /// Feature dimension of the synthetic domains.
    #[arg(long, default_value_t = 768)]
    pub dim: usize,
    #[arg(long, default_value_t = 3)]
    pub epochs: usize,
}
