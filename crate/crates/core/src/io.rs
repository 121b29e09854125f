//! On-disk layouts: datasets of interaction samples (JSON + PLY per sample)
//! and view batches (JSON lines + one PGM mask per view).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{
    read_ply_points, write_ply_mesh, write_ply_points, load_mesh, Mask, MeshError, RasterError, RigidTransform,
    SurfacePointSet, TriMesh,
};
use crate::lifting::{BodyError, BodyModel, BodyModelSpec, LiftError, ViewObservation, ViewRecord};
use crate::synth::{HOISample, Provenance};
use crate::Vec3;

pub const DATASET_FORMAT: &str = "afford-dataset-1";
pub const MANIFEST_FILE: &str = "dataset.json";
pub const VIEWS_FILE: &str = "views.jsonl";
const OBJECT_MESH_FILE: &str = "object.ply";
const OBJECT_POINTS_FILE: &str = "object_points.ply";
/// Largest allowed gap between a stored surface and the re-posed body, m.
const SURFACE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("{path}: record {record}: {message}")]
    Schema { path: String, record: String, message: String },
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Body(#[from] BodyError),
    #[error(transparent)]
    Lift(#[from] LiftError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io { path: path.display().to_string(), source }
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| IoError::Json { path: path.display().to_string(), source })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|source| IoError::Json { path: path.display().to_string(), source })?;
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

fn create_dir(path: &Path) -> Result<(), IoError> {
    fs::create_dir_all(path).map_err(io_err(path))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format: String,
    #[serde(default)]
    pub scenario: Option<String>,
    pub seed: u64,
    pub body: BodyModelSpec,
    pub object_mesh: String,
    pub object_points: String,
    /// Sample JSON files relative to the dataset directory.
    pub samples: Vec<String>,
    /// View-batch directories relative to the dataset directory.
    #[serde(default)]
    pub views: Vec<String>,
}

/// One sample on disk. The body surface is re-derived from `joints`; the
/// PLY next to it is checked against the result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleRecord {
    pub object_pose: RigidTransform,
    pub provenance: Provenance,
    pub joints: Vec<[f64; 3]>,
    pub surface: String,
}

/// Samples sharing one object and one body model.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub scenario: Option<String>,
    pub seed: u64,
    pub body: BodyModelSpec,
    pub model: BodyModel,
    /// Object in its canonical frame.
    pub object: TriMesh,
    pub object_points: SurfacePointSet,
    pub samples: Vec<HOISample>,
    pub views: Vec<String>,
}

/// Writes `dir/dataset.json`, the object files and `dir/samples/*`.
pub fn write_dataset(dir: impl AsRef<Path>, data: &Dataset) -> Result<DatasetManifest, IoError> {
    let dir = dir.as_ref();
    create_dir(&dir.join("samples"))?;
    write_ply_mesh(dir.join(OBJECT_MESH_FILE), &data.object)?;
    write_ply_points(dir.join(OBJECT_POINTS_FILE), &data.object_points, None, None)?;
    let mut names = Vec::with_capacity(data.samples.len());
    for (k, s) in data.samples.iter().enumerate() {
        let stem = format!("samples/sample_{k:05}");
        let surface = format!("{stem}.ply");
        write_ply_points(dir.join(&surface), s.body.surface(), None, None)?;
        let record = SampleRecord {
            object_pose: s.object_pose,
            provenance: s.provenance.clone(),
            joints: s.body.joints().iter().map(|j| [j.x, j.y, j.z]).collect(),
            surface,
        };
        let json = format!("{stem}.json");
        write_json(&dir.join(&json), &record)?;
        names.push(json);
    }
    let manifest = DatasetManifest {
        format: DATASET_FORMAT.into(),
        scenario: data.scenario.clone(),
        seed: data.seed,
        body: data.body.clone(),
        object_mesh: OBJECT_MESH_FILE.into(),
        object_points: OBJECT_POINTS_FILE.into(),
        samples: names,
        views: data.views.clone(),
    };
    write_json(&dir.join(MANIFEST_FILE), &manifest)?;
    Ok(manifest)
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<DatasetManifest, IoError> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let m: DatasetManifest = read_json(&path)?;
    if m.format != DATASET_FORMAT {
        return Err(IoError::Schema {
            path: path.display().to_string(),
            record: "format".into(),
            message: format!("expected {DATASET_FORMAT:?}, found {:?}", m.format),
        });
    }
    Ok(m)
}

/// Reads a dataset, re-posing every body with the stored model.
pub fn read_dataset(dir: impl AsRef<Path>) -> Result<Dataset, IoError> {
    let dir = dir.as_ref();
    let m = read_manifest(dir)?;
    let model = m.body.build()?;
    let object = load_mesh(dir.join(&m.object_mesh))?;
    let object_points = read_ply_points(dir.join(&m.object_points))?.with_source(m.object_points.clone());
    let mut samples = Vec::with_capacity(m.samples.len());
    for name in &m.samples {
        let path = dir.join(name);
        let rec: SampleRecord = read_json(&path)?;
        let schema = |message: String| IoError::Schema {
            path: path.display().to_string(),
            record: name.clone(),
            message,
        };
        let joints: Vec<Vec3> = rec.joints.iter().map(|&j| Vec3::from(j)).collect();
        let body = model.pose(&joints).map_err(|e| schema(e.to_string()))?;
        let stored = read_ply_points(dir.join(&rec.surface))?;
        if stored.len() != body.surface().len() {
            return Err(schema(format!("{} surface points, model has {}", stored.len(), body.surface().len())));
        }
        let gap = stored.points().iter().zip(body.surface().points()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
        if gap > SURFACE_TOL {
            return Err(schema(format!("stored surface is {gap:e} m away from the posed body")));
        }
        samples.push(HOISample { object_pose: rec.object_pose, body, provenance: rec.provenance });
    }
    Ok(Dataset {
        scenario: m.scenario,
        seed: m.seed,
        body: m.body,
        model,
        object,
        object_points,
        samples,
        views: m.views,
    })
}

/// Writes `dir/views.jsonl` and `dir/masks/<view_id>.pgm`.
pub fn write_views(dir: impl AsRef<Path>, views: &[ViewObservation]) -> Result<(), IoError> {
    let dir = dir.as_ref();
    create_dir(&dir.join("masks"))?;
    let mut lines = String::new();
    for v in views {
        let mask_path = format!("masks/{}.pgm", v.view_id);
        v.human_mask.save_pgm(dir.join(&mask_path))?;
        let rec = ViewRecord::from_observation(v, mask_path);
        let path = dir.join(VIEWS_FILE);
        lines.push_str(
            &serde_json::to_string(&rec).map_err(|source| IoError::Json { path: path.display().to_string(), source })?,
        );
        lines.push('\n');
    }
    let path = dir.join(VIEWS_FILE);
    fs::write(&path, lines).map_err(io_err(&path))
}

/// Reads a view batch; every error names the offending line and view.
pub fn read_views(dir: impl AsRef<Path>) -> Result<Vec<ViewObservation>, IoError> {
    let dir = dir.as_ref();
    let path = dir.join(VIEWS_FILE);
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let label = || {
            let id = serde_json::from_str::<serde_json::Value>(line)
                .ok()
                .and_then(|v| v.get("view_id").and_then(|x| x.as_str()).map(str::to_string));
            match id {
                Some(id) => format!("line {} (view {id})", n + 1),
                None => format!("line {}", n + 1),
            }
        };
        let schema = |message: String| IoError::Schema { path: path.display().to_string(), record: label(), message };
        let rec: ViewRecord = serde_json::from_str(line).map_err(|e| schema(e.to_string()))?;
        let mask = Mask::load_pgm(dir.join(&rec.mask_path)).map_err(|e| schema(e.to_string()))?;
        out.push(rec.into_observation(mask).map_err(|e| schema(e.to_string()))?);
    }
    Ok(out)
}

/// View-batch directories listed in a manifest, resolved against `dir`.
pub fn view_dirs(dir: impl AsRef<Path>, manifest: &DatasetManifest) -> Vec<PathBuf> {
    manifest.views.iter().map(|v| dir.as_ref().join(v)).collect()
}
