//! Point and mesh file formats, synthetic shapes, datasets, latent
//! interpolation and PLY export.

mod format;
mod mesh;
mod ply;
mod synth;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use format::{
    encode_binary_cloud, format_text_cloud, load_cloud, parse_binary_cloud, parse_text_cloud, write_binary_cloud,
    write_text_cloud, POINTS_MAGIC, POINTS_VERSION,
};
pub use mesh::{load_off, parse_off, sample_mesh, sample_mesh_with_faces, TriangleMesh};
pub use ply::{
    export_cloud_ply, export_trace_ply, format_ply, palette_color, stage_path, write_ply, ColorMode, PALETTE,
    PLAIN_COLOR,
};
pub use synth::{synth_shape, table_part_fractions, ShapeKind};

use crate::geometry::{normalize_cloud, GeometryError, PointCloud};
use crate::model::ModelError;
use crate::Real;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("not an RPGP point file")]
    BadHeader,
    #[error("unsupported RPGP version {0}")]
    Version(u32),
    #[error("header declares {header} points, file holds {found}")]
    CountMismatch { header: u64, found: u64 },
    #[error("{labels} labels for {points} points")]
    LabelCount { points: usize, labels: usize },
    #[error("unknown shape kind {0:?}")]
    UnknownShape(String),
    #[error("need at least 8 points, got {0}")]
    TooFewPoints(usize),
    #[error("triangle {triangle} references a vertex outside 0..{vertices}")]
    IndexOutOfRange { triangle: usize, vertices: usize },
    #[error("every triangle has zero area")]
    DegenerateMesh,
    #[error("latent codes differ in length: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("interpolation needs at least 2 steps, got {0}")]
    TooFewSteps(usize),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

impl DataError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        DataError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// A cloud with optional per-point part labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledCloud {
    pub cloud: PointCloud<f32>,
    pub labels: Option<Vec<usize>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Named, normalised clouds with optional part labels.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub names: Vec<String>,
    pub items: Vec<LabeledCloud>,
    pub split: Split,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn clouds(&self) -> Vec<PointCloud<f32>> {
        self.items.iter().map(|i| i.cloud.clone()).collect()
    }
}

const CLOUD_EXTENSIONS: [&str; 4] = ["xyz", "txt", "pts", "rpgp"];

/// Files listed by a dataset source: every point file of a directory (sorted
/// by name), or the non-empty lines of a list file resolved against its folder.
pub fn dataset_paths(source: &Path) -> Result<Vec<PathBuf>, DataError> {
    if source.is_dir() {
        let mut paths: Vec<PathBuf> = std::fs::read_dir(source)
            .map_err(|e| DataError::io(source, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| CLOUD_EXTENSIONS.contains(&e))
            })
            .collect();
        paths.sort();
        return Ok(paths);
    }
    let text = std::fs::read_to_string(source).map_err(|e| DataError::io(source, e))?;
    let base = source.parent().unwrap_or(Path::new(""));
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| base.join(l))
        .collect())
}

/// Loads and normalises every cloud of a directory or list file.
pub fn load_dataset(source: &Path, split: Split) -> Result<Dataset, DataError> {
    let paths = dataset_paths(source)?;
    if paths.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let mut names = Vec::with_capacity(paths.len());
    let mut items = Vec::with_capacity(paths.len());
    for p in paths {
        let raw = load_cloud(&p)?;
        names.push(p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
        items.push(LabeledCloud {
            cloud: normalize_cloud(&raw.cloud)?,
            labels: raw.labels,
        });
    }
    Ok(Dataset { names, items, split })
}

/// `steps` codes evenly spaced from `z1` to `z2`, endpoints included.
pub fn interpolate_latents<T: Real>(z1: &[T], z2: &[T], steps: usize) -> Result<Vec<Vec<T>>, DataError> {
    if z1.len() != z2.len() {
        return Err(DataError::DimensionMismatch(z1.len(), z2.len()));
    }
    if steps < 2 {
        return Err(DataError::TooFewSteps(steps));
    }
    Ok((0..steps)
        .map(|i| {
            let t = i as f64 / (steps - 1) as f64;
            z1.iter()
                .zip(z2)
                .map(|(a, b)| T::of((1.0 - t) * a.as_f64() + t * b.as_f64()))
                .collect()
        })
        .collect())
}

/// Small labelled dataset: every shape kind sampled with consecutive seeds,
/// `per_kind` instances each.
pub fn synthetic_dataset(n_points: usize, per_kind: usize, seed: u64, jitter: f64) -> Result<Dataset, DataError> {
    let mut names = Vec::new();
    let mut items = Vec::new();
    for kind in ShapeKind::ALL {
        for i in 0..per_kind {
            let s = seed.wrapping_add(1000 * kind as u64 + i as u64);
            names.push(format!("{kind}_{i}"));
            items.push(synth_shape(kind, n_points, s, jitter)?);
        }
    }
    Ok(Dataset {
        names,
        items,
        split: Split::Train,
    })
}
