//! On-disk field archive: a directory holding `header.json` and
//! `pairs.bin`.
//!
//! `pairs.bin` concatenates one block per stored pair in index-table order,
//! all little-endian `f64`. A dense block is `G³ × n_b` cell weights
//! (cell-major); a mixture block is `7 × components` values
//! (`p.xyz, n.xyz, w` per component).

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::distribution::{Component, GridSpec, KernelWidths, PrimitiveDistribution, Storage};
use super::field::{Direction, FieldError, PrimitiveField};
use crate::geom::SurfacePointSet;
use crate::Vec3;

pub const MAGIC: &str = "AFPRIM1";
pub const HEADER_FILE: &str = "header.json";
pub const PAIRS_FILE: &str = "pairs.bin";

#[derive(Debug, Error)]
pub enum ArchiveError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid header: {source}")]
    Header {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("bad magic {0:?}")]
    Magic(String),
    #[error("pairs.bin: {0}")]
    Blocks(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointsRecord {
    pub source: String,
    pub points: Vec<[f64; 3]>,
    pub normals: Vec<[f64; 3]>,
}

impl PointsRecord {
    pub fn from_set(s: &SurfacePointSet) -> Self {
        Self {
            source: s.source().to_string(),
            points: s.points().iter().map(|p| [p.x, p.y, p.z]).collect(),
            normals: s.normals().iter().map(|n| [n.x, n.y, n.z]).collect(),
        }
    }

    pub fn to_set(&self) -> Result<SurfacePointSet, String> {
        SurfacePointSet::new(
            self.points.iter().map(|&p| Vec3::from(p)).collect(),
            self.normals.iter().map(|&n| Vec3::from(n)).collect(),
            self.source.clone(),
        )
        .map_err(|e| e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum BlockKind {
    Dense,
    Mixture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PairEntry {
    i: u32,
    j: u32,
    kind: BlockKind,
    /// Offset into pairs.bin, in f64 values.
    offset: u64,
    /// Block length, in f64 values.
    len: u64,
    sample_count: u64,
    normalized: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    magic: String,
    grid: GridSpec,
    kernel: KernelWidths,
    direction: Direction,
    object_points: PointsRecord,
    human_points: PointsRecord,
    pairs: Vec<PairEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> ArchiveError + '_ {
    move |source| ArchiveError::Io { path: path.display().to_string(), source }
}

pub fn save_field(field: &PrimitiveField, dir: &Path) -> Result<(), ArchiveError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut blob: Vec<u8> = Vec::new();
    let mut pairs = Vec::with_capacity(field.len());
    let mut offset = 0u64;
    for (&(i, j), d) in field.distributions() {
        let (kind, values): (BlockKind, Vec<f64>) = match d.storage() {
            Storage::Dense(w) => (BlockKind::Dense, w.clone()),
            Storage::Mixture { components, .. } => (
                BlockKind::Mixture,
                components.iter().flat_map(|c| [c.p[0], c.p[1], c.p[2], c.n[0], c.n[1], c.n[2], c.w]).collect(),
            ),
        };
        for v in &values {
            blob.extend_from_slice(&v.to_le_bytes());
        }
        let len = values.len() as u64;
        pairs.push(PairEntry { i, j, kind, offset, len, sample_count: d.sample_count(), normalized: d.is_normalized() });
        offset += len;
    }
    let header = Header {
        magic: MAGIC.to_string(),
        grid: (**field.grid()).clone(),
        kernel: field.kernel(),
        direction: field.direction(),
        object_points: PointsRecord::from_set(field.object_points()),
        human_points: PointsRecord::from_set(field.human_points()),
        pairs,
    };
    let hp = dir.join(HEADER_FILE);
    let text = serde_json::to_string_pretty(&header).expect("header serializes");
    fs::write(&hp, text + "\n").map_err(io_err(&hp))?;
    let bp = dir.join(PAIRS_FILE);
    let mut f = fs::File::create(&bp).map_err(io_err(&bp))?;
    f.write_all(&blob).map_err(io_err(&bp))?;
    Ok(())
}

pub fn load_field(dir: &Path) -> Result<PrimitiveField, ArchiveError> {
    let hp = dir.join(HEADER_FILE);
    let text = fs::read_to_string(&hp).map_err(io_err(&hp))?;
    let header: Header =
        serde_json::from_str(&text).map_err(|source| ArchiveError::Header { path: hp.display().to_string(), source })?;
    if header.magic != MAGIC {
        return Err(ArchiveError::Magic(header.magic));
    }
    let bp = dir.join(PAIRS_FILE);
    let bytes = fs::read(&bp).map_err(io_err(&bp))?;
    if bytes.len() % 8 != 0 {
        return Err(ArchiveError::Blocks(format!("length {} is not a multiple of 8", bytes.len())));
    }
    let values: Vec<f64> = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
    let grid = Arc::new(header.grid);
    let mut distributions = BTreeMap::new();
    for e in &header.pairs {
        let (start, end) = (e.offset as usize, (e.offset + e.len) as usize);
        if end > values.len() || start > end {
            return Err(ArchiveError::Blocks(format!("pair ({}, {}) block out of bounds", e.i, e.j)));
        }
        let block = &values[start..end];
        let d = match e.kind {
            BlockKind::Dense => PrimitiveDistribution::from_dense(grid.clone(), block.to_vec(), e.sample_count),
            BlockKind::Mixture => {
                if block.len() % 7 != 0 {
                    return Err(ArchiveError::Blocks(format!("pair ({}, {}) mixture block length {}", e.i, e.j, block.len())));
                }
                let comps = block
                    .chunks_exact(7)
                    .map(|c| Component { p: [c[0], c[1], c[2]], n: [c[3], c[4], c[5]], w: c[6] })
                    .collect();
                PrimitiveDistribution::from_components(grid.clone(), header.kernel, comps, e.sample_count)
            }
        }
        .map_err(|err| ArchiveError::Blocks(format!("pair ({}, {}): {err}", e.i, e.j)))?;
        let d = if e.normalized { d.assume_normalized() } else { d };
        distributions.insert((e.i, e.j), d);
    }
    let object_points = header.object_points.to_set().map_err(ArchiveError::Blocks)?;
    let human_points = header.human_points.to_set().map_err(ArchiveError::Blocks)?;
    Ok(PrimitiveField::new(grid, header.kernel, header.direction, object_points, human_points, distributions)?)
}
