//! `panorect`: conversion, dataset synthesis, training, evaluation and
//! rectification from the command line.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use panorect_core::net::{AlignMode, Scale};
use panorect_core::Error;

#[derive(Parser, Debug)]
#[command(name = "panorect", version, about = "Upright rectification of tilted 360° panoramas")]
pub struct Cli {
    /// Worker threads (falls back to PANORECT_THREADS, then all cores).
    #[arg(long, global = true, env = "PANORECT_THREADS")]
    pub threads: Option<usize>,

    /// Run configuration (TOML). Flags given on the command line win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Only print warnings and errors.
    #[arg(short, long, global = true)]
    pub quiet: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Convert between equirectangular images and cubemap faces.
    Convert(ConvertArgs),
    /// Build a dataset of tilted samples from a folder of panoramas.
    Synth(SynthArgs),
    /// Copy a dataset with one degradation applied to its inputs.
    Degrade(DegradeArgs),
    /// Straighten one panorama, by known angles or with a trained model.
    Rectify(RectifyArgs),
    /// Train a model on a dataset's train split.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Finite-difference check of every differentiable piece.
    Gradcheck(GradcheckArgs),
    /// Rerun the resampling-floor oracles and compare with the stored values.
    Calibrate(CalibrateArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ConvertMode {
    Erp2cube,
    Cube2erp,
}

#[derive(Args, Debug)]
pub struct ConvertArgs {
    #[arg(long, value_enum)]
    pub mode: ConvertMode,
    /// ERP PNG (erp2cube) or directory of face PNGs (cube2erp).
    #[arg(long)]
    pub input: PathBuf,
    /// Output directory (erp2cube) or PNG path (cube2erp).
    #[arg(long)]
    pub output: PathBuf,
    /// Face size for erp2cube; defaults to half the ERP height.
    #[arg(long)]
    pub face_size: Option<usize>,
    /// ERP height for cube2erp; defaults to twice the face size.
    #[arg(long)]
    pub height: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SynthArgs {
    /// Folder of upright panoramas.
    #[arg(long, conflicts_with = "procedural")]
    pub corpus: Option<PathBuf>,
    /// Use this many seeded procedural panoramas instead of a corpus.
    #[arg(long)]
    pub procedural: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub erp_height: Option<usize>,
    #[arg(long)]
    pub face_size: Option<usize>,
    /// Tilts are drawn uniformly from ±this many degrees.
    #[arg(long)]
    pub angle_range: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct DegradeArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// `none`, `mosaic:<mask>[:<block>]` or `gaussian:<sigma>`.
    #[arg(long)]
    pub spec: String,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct RectifyArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long, allow_hyphen_values = true, requires = "roll", conflicts_with = "checkpoint")]
    pub pitch: Option<f64>,
    #[arg(long, allow_hyphen_values = true, requires = "pitch")]
    pub roll: Option<f64>,
    #[arg(long, required_unless_present = "pitch")]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug, Default)]
pub struct ModelFlags {
    #[arg(long, value_enum)]
    pub scale: Option<ScaleArg>,
    #[arg(long, value_enum)]
    pub align: Option<AlignArg>,
    #[arg(long)]
    pub no_hfm: bool,
    #[arg(long)]
    pub no_circular_pad: bool,
    #[arg(long)]
    pub no_channel_attention: bool,
    #[arg(long)]
    pub no_vit: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScaleArg {
    Full,
    Toy,
}

impl From<ScaleArg> for Scale {
    fn from(s: ScaleArg) -> Scale {
        match s {
            ScaleArg::Full => Scale::Full,
            ScaleArg::Toy => Scale::Toy,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlignArg {
    Implicit,
    Explicit,
}

impl From<AlignArg> for AlignMode {
    fn from(a: AlignArg) -> AlignMode {
        match a {
            AlignArg::Implicit => AlignMode::Implicit,
            AlignArg::Explicit => AlignMode::Explicit,
        }
    }
}

#[derive(Args, Debug)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Continue from `<output>/checkpoint`.
    #[arg(long)]
    pub resume: bool,
    #[command(flatten)]
    pub model: ModelFlags,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub max_steps: Option<u64>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, default_value = "test")]
    pub split: String,
    /// One condition, e.g. `mosaic:64` or `gaussian:0.02`.
    #[arg(long, conflicts_with = "protocol")]
    pub degradation: Option<String>,
    /// Every condition of the robustness protocol.
    #[arg(long)]
    pub protocol: bool,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Args, Debug)]
pub struct GradcheckArgs {
    /// Parameter entries probed per layer in the full-model check.
    #[arg(long, default_value_t = 50)]
    pub probes_per_layer: usize,
    /// Skip the full-model check.
    #[arg(long)]
    pub ops_only: bool,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Also write the table as JSON.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[arg(long)]
    pub output: Option<PathBuf>,
}

/// Exit status for each error family.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain { .. } => 2,
        Error::Data { .. } | Error::Io { .. } | Error::Checksum(_) | Error::Dimension(_) => 3,
        Error::Numeric(_) | Error::Tensor(_) => 4,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "warn" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("thread pool already initialized: {e}");
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
