use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AffordanceField, OccupancyFrame, OccupancyGrid};
use crate::geom::{write_ply_points, MeshError, SurfacePointSet};

#[derive(Debug, Error)]
pub enum ExportError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error("{values} values for {points} points")]
    Length { values: usize, points: usize },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ExportError + '_ {
    move |source| ExportError::Io { path: path.display().to_string(), source }
}

/// Anchors of the color ramp (dark purple through teal to yellow), evenly
/// spaced on [0, 1].
const RAMP: [[u8; 3]; 8] = [
    [68, 1, 84],
    [70, 50, 127],
    [54, 92, 141],
    [39, 127, 142],
    [31, 161, 135],
    [74, 194, 109],
    [159, 218, 58],
    [253, 231, 37],
];

/// Linear interpolation along the ramp; `t` is clamped into [0, 1] and NaN
/// maps to the low end.
pub fn ramp_color(t: f64) -> [u8; 3] {
    let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
    let x = t * (RAMP.len() - 1) as f64;
    let k = (x.floor() as usize).min(RAMP.len() - 2);
    let f = x - k as f64;
    let (a, b) = (RAMP[k], RAMP[k + 1]);
    [0, 1, 2].map(|c| (a[c] as f64 + f * (b[c] as f64 - a[c] as f64)).round() as u8)
}

/// Colored point cloud; values are divided by their maximum before the ramp
/// and also written raw as `value`.
pub fn write_affordance_ply(
    path: impl AsRef<Path>,
    points: &SurfacePointSet,
    field: &AffordanceField,
) -> Result<(), ExportError> {
    if field.len() != points.len() {
        return Err(ExportError::Length { values: field.len(), points: points.len() });
    }
    let max = field.values.iter().cloned().fold(0.0, f64::max);
    let colors: Vec<[u8; 3]> =
        field.values.iter().map(|v| ramp_color(if max > 0.0 { v / max } else { 0.0 })).collect();
    write_ply_points(path, points, Some(&colors), Some(&field.values))?;
    Ok(())
}

/// `index,value` lines under a header.
pub fn write_affordance_csv(path: impl AsRef<Path>, field: &AffordanceField) -> Result<(), ExportError> {
    let path = path.as_ref();
    let mut s = String::from("index,value\n");
    for (i, v) in field.values.iter().enumerate() {
        s.push_str(&format!("{i},{v}\n"));
    }
    fs::write(path, s).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OccupancyHeader {
    pub resolution: usize,
    pub half_extent: f64,
    pub frame: OccupancyFrame,
    /// Always `"f32-le"`, x fastest.
    pub dtype: String,
    pub total: f64,
    pub data_file: String,
}

/// Writes `<stem>.raw` (little-endian f32 volume) and `<stem>.json`.
pub fn write_occupancy(dir: impl AsRef<Path>, stem: &str, grid: &OccupancyGrid) -> Result<OccupancyHeader, ExportError> {
    let dir = dir.as_ref();
    let g = grid.voxels.resolution();
    let raw_name = format!("{stem}.raw");
    let raw = dir.join(&raw_name);
    let mut bytes = Vec::with_capacity(grid.counts.len() * 4);
    // voxel flat index is x-major; write x fastest
    for z in 0..g {
        for y in 0..g {
            for x in 0..g {
                bytes.extend_from_slice(&(grid.counts[grid.voxels.flat(x, y, z)] as f32).to_le_bytes());
            }
        }
    }
    let mut f = fs::File::create(&raw).map_err(io_err(&raw))?;
    f.write_all(&bytes).map_err(io_err(&raw))?;
    let header = OccupancyHeader {
        resolution: g,
        half_extent: grid.voxels.half_extent(),
        frame: grid.frame,
        dtype: "f32-le".into(),
        total: grid.total(),
        data_file: raw_name,
    };
    let json = dir.join(format!("{stem}.json"));
    fs::write(&json, serde_json::to_string_pretty(&header)?).map_err(io_err(&json))?;
    Ok(header)
}
