//! ASCII PLY export with per-vertex colours.
//!
//! Every file has one `vertex` element with `x y z` as `float` and
//! `red green blue` as `uchar`. Segment labels map to [`PALETTE`] cyclically.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use super::DataError;
use crate::geometry::PointCloud;
use crate::model::{segment, GenerationTrace};

/// Fixed segment palette, indexed by `label % 16`.
pub const PALETTE: [[u8; 3]; 16] = [
    [230, 25, 75],
    [60, 180, 75],
    [255, 225, 25],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
    [250, 190, 212],
    [0, 128, 128],
    [220, 190, 255],
    [170, 110, 40],
    [128, 0, 0],
    [170, 255, 195],
    [0, 0, 128],
];

/// Colour used when no segmentation is requested.
pub const PLAIN_COLOR: [u8; 3] = [200, 200, 200];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ColorMode {
    None,
    /// Colour leaves by their ancestor at the given stage.
    ByAncestor(usize),
    /// One file per stage, each coloured by stage-1 ancestor.
    ByStage,
}

pub fn palette_color(label: usize) -> [u8; 3] {
    PALETTE[label % PALETTE.len()]
}

pub fn format_ply(points: &[[f32; 3]], colors: &[[u8; 3]]) -> String {
    let mut out = String::with_capacity(64 * points.len() + 256);
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", points.len());
    out.push_str("property float x\nproperty float y\nproperty float z\n");
    out.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n");
    for (p, c) in points.iter().zip(colors) {
        let _ = writeln!(out, "{} {} {} {} {} {}", p[0], p[1], p[2], c[0], c[1], c[2]);
    }
    out
}

pub fn write_ply(path: &Path, points: &[[f32; 3]], colors: &[[u8; 3]]) -> Result<(), DataError> {
    std::fs::write(path, format_ply(points, colors)).map_err(|e| DataError::io(path, e))
}

pub fn export_cloud_ply(path: &Path, cloud: &PointCloud<f32>, labels: Option<&[usize]>) -> Result<(), DataError> {
    let colors: Vec<[u8; 3]> = match labels {
        Some(l) => l.iter().map(|&x| palette_color(x)).collect(),
        None => vec![PLAIN_COLOR; cloud.len()],
    };
    write_ply(path, cloud.points(), &colors)
}

/// Labels of stage `stage` points by their ancestor at `ancestor` (identity when equal).
fn stage_labels(trace: &GenerationTrace<f32>, stage: usize, ancestor: usize) -> Result<Vec<usize>, DataError> {
    if ancestor == stage && stage <= trace.depth() {
        return Ok((0..trace.stages[stage].len()).collect());
    }
    Ok(segment(trace, stage, ancestor)?)
}

/// `out_d3.ply` style path for stage files.
pub fn stage_path(path: &Path, stage: usize) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let ext = path.extension().map(|e| e.to_string_lossy().into_owned()).unwrap_or_else(|| "ply".into());
    path.with_file_name(format!("{stem}_d{stage}.{ext}"))
}

/// Writes a generation trace; returns the files written.
pub fn export_trace_ply(path: &Path, trace: &GenerationTrace<f32>, mode: ColorMode) -> Result<Vec<PathBuf>, DataError> {
    let depth = trace.depth();
    let leaves = trace.leaves();
    match mode {
        ColorMode::None => {
            write_ply(path, &leaves.points, &vec![PLAIN_COLOR; leaves.len()])?;
            Ok(vec![path.to_path_buf()])
        }
        ColorMode::ByAncestor(level) => {
            let labels = stage_labels(trace, depth, level)?;
            let colors: Vec<_> = labels.iter().map(|&l| palette_color(l)).collect();
            write_ply(path, &leaves.points, &colors)?;
            Ok(vec![path.to_path_buf()])
        }
        ColorMode::ByStage => {
            let mut written = Vec::with_capacity(depth + 1);
            for d in 0..=depth {
                let labels = if d == 0 {
                    vec![0]
                } else {
                    stage_labels(trace, d, 1)?
                };
                let colors: Vec<_> = labels.iter().map(|&l| palette_color(l)).collect();
                let p = stage_path(path, d);
                write_ply(&p, &trace.stages[d].points, &colors)?;
                written.push(p);
            }
            Ok(written)
        }
    }
}
