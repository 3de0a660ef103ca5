use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "rpg", version, about = "Recursive point cloud generator")]
pub struct Cli {
    /// Worker threads for batch evaluation and metric matrices (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model on a directory or list file of point clouds.
    Train(TrainArgs),
    /// Encode a cloud, decode it again and export the result.
    Reconstruct(ReconstructArgs),
    /// Sample latent codes from N(0, I) and export the generated clouds (VAE checkpoints).
    Generate(GenerateArgs),
    /// Decode evenly spaced codes between the encodings of two clouds.
    Interpolate(InterpolateArgs),
    /// Export the ancestor segmentation of a reconstructed cloud.
    Segment(SegmentArgs),
    /// Reconstruction and generation metrics against a reference set.
    Eval(EvalArgs),
    /// Print the configuration, tensor shapes and parameter counts.
    Inspect(InspectArgs),
    /// Write a labelled synthetic dataset.
    Synth(SynthArgs),
    /// Repeat a run from its manifest.
    Rerun(RerunArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// TOML file with [generator] and [train] tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Generator preset used when the config has no [generator] table.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub save_every: Option<usize>,
    /// Train the variational variant.
    #[arg(long)]
    pub vae: bool,
}

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Colour by ancestors at this stage instead of a plain colour.
    #[arg(long)]
    pub level: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct InterpolateArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub a: PathBuf,
    #[arg(long)]
    pub b: PathBuf,
    #[arg(long)]
    pub steps: usize,
    #[arg(long)]
    pub out: PathBuf,
    /// Also write every intermediate stage of each decoded cloud.
    #[arg(long)]
    pub all_stages: bool,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub level: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Directory or list file of reference clouds.
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long)]
    pub n_generated: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Also write the records to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long, conflicts_with_all = ["preset", "config"])]
    pub ckpt: Option<PathBuf>,
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    /// Points per shape.
    #[arg(long, default_value_t = 2048)]
    pub n: usize,
    /// Instances of every kind.
    #[arg(long, default_value_t = 1)]
    pub per_kind: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 0.0)]
    pub jitter: f64,
}

#[derive(Debug, Args)]
pub struct RerunArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Write outputs here instead of the recorded location.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
