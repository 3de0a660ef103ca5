use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use rpg_core::model::GeneratorConfig;
use rpg_core::training::TrainConfig;

pub const MANIFEST_NAME: &str = "run_manifest.json";

/// A fully resolved invocation: every default and config-file value filled in.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Run {
    Train {
        generator: GeneratorConfig,
        train: TrainConfig,
        data: PathBuf,
        out: PathBuf,
    },
    Reconstruct {
        ckpt: PathBuf,
        input: PathBuf,
        out: PathBuf,
        level: Option<usize>,
    },
    Generate {
        ckpt: PathBuf,
        n: usize,
        seed: u64,
        out: PathBuf,
    },
    Interpolate {
        ckpt: PathBuf,
        a: PathBuf,
        b: PathBuf,
        steps: usize,
        out: PathBuf,
        all_stages: bool,
    },
    Segment {
        ckpt: PathBuf,
        input: PathBuf,
        level: usize,
        out: PathBuf,
    },
    Eval {
        ckpt: PathBuf,
        reference: PathBuf,
        n_generated: usize,
        seed: u64,
        out: Option<PathBuf>,
    },
    Synth {
        out: PathBuf,
        n: usize,
        per_kind: usize,
        seed: u64,
        jitter: f64,
    },
}

impl Run {
    pub fn name(&self) -> &'static str {
        match self {
            Run::Train { .. } => "train",
            Run::Reconstruct { .. } => "reconstruct",
            Run::Generate { .. } => "generate",
            Run::Interpolate { .. } => "interpolate",
            Run::Segment { .. } => "segment",
            Run::Eval { .. } => "eval",
            Run::Synth { .. } => "synth",
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Run::Train { train, .. } => Some(train.seed),
            Run::Generate { seed, .. } | Run::Eval { seed, .. } | Run::Synth { seed, .. } => Some(*seed),
            _ => None,
        }
    }

    pub fn inputs(&self) -> Vec<PathBuf> {
        match self {
            Run::Train { data, .. } => vec![data.clone()],
            Run::Reconstruct { ckpt, input, .. } | Run::Segment { ckpt, input, .. } => vec![ckpt.clone(), input.clone()],
            Run::Generate { ckpt, .. } => vec![ckpt.clone()],
            Run::Interpolate { ckpt, a, b, .. } => vec![ckpt.clone(), a.clone(), b.clone()],
            Run::Eval { ckpt, reference, .. } => vec![ckpt.clone(), reference.clone()],
            Run::Synth { .. } => vec![],
        }
    }

    pub fn output(&self) -> Option<&Path> {
        match self {
            Run::Train { out, .. }
            | Run::Reconstruct { out, .. }
            | Run::Generate { out, .. }
            | Run::Interpolate { out, .. }
            | Run::Segment { out, .. }
            | Run::Synth { out, .. } => Some(out),
            Run::Eval { out, .. } => out.as_deref(),
        }
    }

    pub fn set_output(&mut self, path: PathBuf) {
        match self {
            Run::Train { out, .. }
            | Run::Reconstruct { out, .. }
            | Run::Generate { out, .. }
            | Run::Interpolate { out, .. }
            | Run::Segment { out, .. }
            | Run::Synth { out, .. } => *out = path,
            Run::Eval { out, .. } => *out = Some(path),
        }
    }

    /// Commands whose output is a directory.
    fn writes_directory(&self) -> bool {
        matches!(
            self,
            Run::Train { .. } | Run::Generate { .. } | Run::Interpolate { .. } | Run::Synth { .. }
        )
    }

    /// Where the manifest of this run is written, if it has an output.
    pub fn manifest_path(&self) -> Option<PathBuf> {
        let out = self.output()?;
        if self.writes_directory() {
            return Some(out.join(MANIFEST_NAME));
        }
        let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Some(out.with_file_name(format!("{stem}.{MANIFEST_NAME}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub toolkit_version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub output: Option<PathBuf>,
    /// Generator of the checkpoint or training run.
    pub generator: Option<GeneratorConfig>,
    pub run: Run,
}

impl RunManifest {
    pub fn new(run: Run, generator: Option<GeneratorConfig>) -> Self {
        Self {
            toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
            command: run.name().to_string(),
            seed: run.seed(),
            inputs: run.inputs(),
            output: run.output().map(Path::to_path_buf),
            generator,
            run,
        }
    }
}
