//! Reconstruction and generation quality metrics.
//!
//! Every inter-cloud distance is the Chamfer distance on squared distances.
//! Ties in nearest-cloud searches go to the lowest index.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{cloud_chamfer, GeometryError, PointCloud};
use crate::model::{ModelError, Rpg};
use crate::Real;

/// Factor applied to CD and MMD values when reporting.
pub const REPORT_SCALE: f64 = 1e4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("{0} set is empty")]
    EmptySet(SetRole),
    #[error("{0} set mixes normalised and raw clouds")]
    MixedNormalization(SetRole),
    #[error("1-NNA needs at least two clouds in total")]
    TooFewClouds,
    #[error("{predicted} predicted labels for {truth} ground-truth labels")]
    LabelCount { predicted: usize, truth: usize },
    #[error("no points to score")]
    NoPoints,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetRole {
    Reference,
    Generated,
}

impl std::fmt::Display for SetRole {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SetRole::Reference => "reference",
            SetRole::Generated => "generated",
        })
    }
}

/// Non-empty list of clouds sharing one normalisation state.
#[derive(Clone, Debug, PartialEq)]
pub struct CloudSet<T = f32> {
    clouds: Vec<PointCloud<T>>,
    role: SetRole,
}

impl<T: Real> CloudSet<T> {
    pub fn new(clouds: Vec<PointCloud<T>>, role: SetRole) -> Result<Self, MetricsError> {
        let first = clouds.first().ok_or(MetricsError::EmptySet(role))?.is_normalized();
        if clouds.iter().any(|c| c.is_normalized() != first) {
            return Err(MetricsError::MixedNormalization(role));
        }
        Ok(Self { clouds, role })
    }

    pub fn clouds(&self) -> &[PointCloud<T>] {
        &self.clouds
    }

    pub fn role(&self) -> SetRole {
        self.role
    }

    pub fn len(&self) -> usize {
        self.clouds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clouds.is_empty()
    }
}

/// `m[i][j] = CD(a[i], b[j])`, rows computed in parallel.
pub fn chamfer_matrix<T: Real>(a: &[PointCloud<T>], b: &[PointCloud<T>]) -> Result<Vec<Vec<f64>>, MetricsError> {
    a.par_iter()
        .map(|p| {
            b.iter()
                .map(|q| Ok(cloud_chamfer(p, q)?.as_f64()))
                .collect::<Result<Vec<_>, MetricsError>>()
        })
        .collect()
}

/// Index and value of the smallest entry; ties go to the lowest index.
fn argmin(row: impl IntoIterator<Item = (usize, f64)>) -> Option<(usize, f64)> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in row {
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best
}

/// Per-shape reconstruction distances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReconstructionReport {
    pub per_shape: Vec<f64>,
    pub mean: f64,
}

/// `CD(P, reconstruct(P))` for every cloud, with any reconstruction function.
pub fn reconstruction_cd_with<T: Real>(
    clouds: &[PointCloud<T>],
    reconstruct: impl Fn(&PointCloud<T>) -> Result<PointCloud<T>, MetricsError> + Sync,
) -> Result<ReconstructionReport, MetricsError> {
    if clouds.is_empty() {
        return Err(MetricsError::EmptySet(SetRole::Reference));
    }
    let per_shape = clouds
        .par_iter()
        .map(|c| Ok(cloud_chamfer(c, &reconstruct(c)?)?.as_f64()))
        .collect::<Result<Vec<_>, MetricsError>>()?;
    let mean = per_shape.iter().sum::<f64>() / per_shape.len() as f64;
    Ok(ReconstructionReport { per_shape, mean })
}

/// Reconstruction CD of a model: decode the encoder's code (the mean in VAE mode).
pub fn reconstruction_cd<T: Real>(model: &Rpg<T>, clouds: &[PointCloud<T>]) -> Result<ReconstructionReport, MetricsError> {
    reconstruction_cd_with(clouds, |c| Ok(model.reconstruct_trace(c)?.output_cloud()))
}

/// Minimum matching distance: mean over references of the CD to the nearest generated cloud.
pub fn mmd<T: Real>(reference: &CloudSet<T>, generated: &CloudSet<T>) -> Result<f64, MetricsError> {
    let m = chamfer_matrix(reference.clouds(), generated.clouds())?;
    Ok(mmd_from_matrix(&m))
}

pub fn mmd_from_matrix(ref_to_gen: &[Vec<f64>]) -> f64 {
    let sum: f64 = ref_to_gen
        .iter()
        .map(|row| argmin(row.iter().copied().enumerate()).expect("non-empty row").1)
        .sum();
    sum / ref_to_gen.len() as f64
}

/// Coverage: fraction of references that are the nearest reference of at least one generated cloud.
pub fn coverage<T: Real>(reference: &CloudSet<T>, generated: &CloudSet<T>) -> Result<f64, MetricsError> {
    let m = chamfer_matrix(reference.clouds(), generated.clouds())?;
    Ok(coverage_from_matrix(&m))
}

pub fn coverage_from_matrix(ref_to_gen: &[Vec<f64>]) -> f64 {
    let n_ref = ref_to_gen.len();
    let n_gen = ref_to_gen.first().map_or(0, Vec::len);
    let mut matched = vec![false; n_ref];
    for g in 0..n_gen {
        let (r, _) = argmin((0..n_ref).map(|r| (r, ref_to_gen[r][g]))).expect("non-empty reference");
        matched[r] = true;
    }
    matched.iter().filter(|&&m| m).count() as f64 / n_ref as f64
}

/// Leave-one-out 1-nearest-neighbour accuracy over the union of both sets
/// (references first). 0.5 means the sets are indistinguishable.
pub fn one_nna<T: Real>(reference: &CloudSet<T>, generated: &CloudSet<T>) -> Result<f64, MetricsError> {
    let union: Vec<PointCloud<T>> = reference.clouds().iter().chain(generated.clouds()).cloned().collect();
    if union.len() < 2 {
        return Err(MetricsError::TooFewClouds);
    }
    let m = chamfer_matrix(&union, &union)?;
    Ok(one_nna_from_matrix(&m, reference.len()))
}

/// `m` is the union distance matrix whose first `n_ref` rows are references.
pub fn one_nna_from_matrix(m: &[Vec<f64>], n_ref: usize) -> f64 {
    let n = m.len();
    let correct = (0..n)
        .filter(|&i| {
            let (j, _) = argmin((0..n).filter(|&j| j != i).map(|j| (j, m[i][j]))).expect("two clouds");
            (i < n_ref) == (j < n_ref)
        })
        .count();
    correct as f64 / n as f64
}

/// Majority-label agreement: for every predicted segment the count of its
/// most frequent ground-truth label, summed and divided by the point count.
pub fn purity(predicted: &[usize], truth: &[usize]) -> Result<f64, MetricsError> {
    if predicted.len() != truth.len() {
        return Err(MetricsError::LabelCount {
            predicted: predicted.len(),
            truth: truth.len(),
        });
    }
    if predicted.is_empty() {
        return Err(MetricsError::NoPoints);
    }
    let mut counts: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    for (&p, &t) in predicted.iter().zip(truth) {
        *counts.entry(p).or_default().entry(t).or_default() += 1;
    }
    let agree: usize = counts.values().map(|c| c.values().copied().max().unwrap_or(0)).sum();
    Ok(agree as f64 / predicted.len() as f64)
}

/// One line of an evaluation report.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub metric: String,
    pub value: f64,
    pub reference_size: usize,
    pub generated_size: usize,
    /// `value` has been multiplied by [`REPORT_SCALE`].
    pub scaled_1e4: bool,
}

impl MetricRecord {
    pub fn scaled(metric: &str, raw: f64, reference_size: usize, generated_size: usize) -> Self {
        Self {
            metric: metric.to_string(),
            value: raw * REPORT_SCALE,
            reference_size,
            generated_size,
            scaled_1e4: true,
        }
    }

    pub fn plain(metric: &str, value: f64, reference_size: usize, generated_size: usize) -> Self {
        Self {
            metric: metric.to_string(),
            value,
            reference_size,
            generated_size,
            scaled_1e4: false,
        }
    }
}

/// MMD (scaled), COV and 1-NNA from one pass over the distance matrices.
pub fn generation_report<T: Real>(reference: &CloudSet<T>, generated: &CloudSet<T>) -> Result<Vec<MetricRecord>, MetricsError> {
    let (nr, ng) = (reference.len(), generated.len());
    let union: Vec<PointCloud<T>> = reference.clouds().iter().chain(generated.clouds()).cloned().collect();
    let full = chamfer_matrix(&union, &union)?;
    let cross: Vec<Vec<f64>> = full[..nr].iter().map(|row| row[nr..].to_vec()).collect();
    Ok(vec![
        MetricRecord::scaled("mmd", mmd_from_matrix(&cross), nr, ng),
        MetricRecord::plain("cov", coverage_from_matrix(&cross), nr, ng),
        MetricRecord::plain("1-nna", one_nna_from_matrix(&full, nr), nr, ng),
    ])
}
