//! Point file formats.
//!
//! Text: one point per line, `x y z` separated by whitespace, with an
//! optional fourth integer column holding a part label (either every line has
//! one or none does). Blank lines and lines starting with `#` are skipped.
//!
//! Binary (little-endian): magic `RPGP`, `u32` version, `u64` point count,
//! then `count` triples of `f32`.

use std::fs;
use std::path::Path;

use super::{DataError, LabeledCloud};
use crate::geometry::PointCloud;

pub const POINTS_MAGIC: [u8; 4] = *b"RPGP";
pub const POINTS_VERSION: u32 = 1;

pub fn parse_text_cloud(text: &str) -> Result<LabeledCloud, DataError> {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut labelled: Option<bool> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |reason: &str| DataError::Parse {
            line: i + 1,
            reason: reason.to_string(),
        };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 && fields.len() != 4 {
            return Err(bad(&format!("expected 3 or 4 columns, found {}", fields.len())));
        }
        let mut p = [0.0f32; 3];
        for (c, f) in p.iter_mut().zip(&fields) {
            *c = f.parse().map_err(|_| bad(&format!("invalid coordinate {f:?}")))?;
            if !c.is_finite() {
                return Err(bad("non-finite coordinate"));
            }
        }
        let has_label = fields.len() == 4;
        if *labelled.get_or_insert(has_label) != has_label {
            return Err(bad("label column present on some lines only"));
        }
        if has_label {
            labels.push(fields[3].parse().map_err(|_| bad(&format!("invalid label {:?}", fields[3])))?);
        }
        points.push(p);
    }
    Ok(LabeledCloud {
        cloud: PointCloud::new(points)?,
        labels: labelled.unwrap_or(false).then_some(labels),
    })
}

pub fn parse_binary_cloud(bytes: &[u8]) -> Result<PointCloud<f32>, DataError> {
    if bytes.len() < 16 || bytes[..4] != POINTS_MAGIC {
        return Err(DataError::BadHeader);
    }
    let version = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    if version != POINTS_VERSION {
        return Err(DataError::Version(version));
    }
    let count = u64::from_le_bytes(bytes[8..16].try_into().unwrap());
    let body = &bytes[16..];
    if body.len() as u64 != count.saturating_mul(12) {
        return Err(DataError::CountMismatch {
            header: count,
            found: body.len() as u64 / 12,
        });
    }
    let points = body
        .chunks_exact(12)
        .map(|c| std::array::from_fn(|k| f32::from_le_bytes(c[4 * k..4 * k + 4].try_into().unwrap())))
        .collect();
    Ok(PointCloud::new(points)?)
}

/// Reads a raw (un-normalised) cloud; the format is chosen by the magic bytes.
pub fn load_cloud(path: &Path) -> Result<LabeledCloud, DataError> {
    let bytes = fs::read(path).map_err(|e| DataError::io(path, e))?;
    if bytes.starts_with(&POINTS_MAGIC) {
        return Ok(LabeledCloud {
            cloud: parse_binary_cloud(&bytes)?,
            labels: None,
        });
    }
    let text = String::from_utf8(bytes).map_err(|_| DataError::Parse {
        line: 0,
        reason: "file is neither RPGP binary nor UTF-8 text".into(),
    })?;
    parse_text_cloud(&text)
}

pub fn format_text_cloud(cloud: &PointCloud<f32>, labels: Option<&[usize]>) -> Result<String, DataError> {
    if let Some(l) = labels {
        if l.len() != cloud.len() {
            return Err(DataError::LabelCount {
                points: cloud.len(),
                labels: l.len(),
            });
        }
    }
    let mut out = String::with_capacity(cloud.len() * 32);
    for (i, p) in cloud.points().iter().enumerate() {
        out.push_str(&format!("{} {} {}", p[0], p[1], p[2]));
        if let Some(l) = labels {
            out.push_str(&format!(" {}", l[i]));
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn write_text_cloud(path: &Path, cloud: &PointCloud<f32>, labels: Option<&[usize]>) -> Result<(), DataError> {
    fs::write(path, format_text_cloud(cloud, labels)?).map_err(|e| DataError::io(path, e))
}

pub fn encode_binary_cloud(cloud: &PointCloud<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + 12 * cloud.len());
    out.extend_from_slice(&POINTS_MAGIC);
    out.extend_from_slice(&POINTS_VERSION.to_le_bytes());
    out.extend_from_slice(&(cloud.len() as u64).to_le_bytes());
    for p in cloud.points() {
        for c in p {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    out
}

pub fn write_binary_cloud(path: &Path, cloud: &PointCloud<f32>) -> Result<(), DataError> {
    fs::write(path, encode_binary_cloud(cloud)).map_err(|e| DataError::io(path, e))
}
