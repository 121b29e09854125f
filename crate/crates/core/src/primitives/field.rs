//! Per point-pair distributions over a dataset of interaction samples.

use std::collections::BTreeMap;
use std::sync::Arc;

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::canonical::{canonical_rotation, NonUnitNormal};
use super::distribution::{DistributionError, GridSpec, KernelWidths, PrimitiveDistribution};
use super::sphere::fibonacci_sphere;
use super::voxel::VoxelGrid;
use crate::geom::{apply_rigid, SurfacePointSet};
use crate::synth::HOISample;
use crate::{Mat3, Vec3};

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("no sample matched the point counts ({objects} object, {humans} human points)")]
    NoUsableSample { objects: usize, humans: usize },
    #[error("invalid field config: {0}")]
    Config(String),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error(transparent)]
    Normal(#[from] NonUnitNormal),
    #[error("pair ({0}, {1}) is out of range")]
    PairIndex(u32, u32),
    #[error("fields differ in {0}")]
    Mismatch(&'static str),
}

/// Which surface supplies the reference normal and origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    /// Human point relative to the object point, in the object normal frame.
    #[default]
    ObjectToHuman,
    /// Object point relative to the human point, in the human normal frame.
    HumanToObject,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StorageMode {
    /// Kernel centers, evaluated on demand.
    #[default]
    Mixture,
    /// Full `G³ × n_b` arrays. Only practical for small grids.
    Dense,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FieldConfig {
    /// Half-width of the voxel grid, meters.
    pub half_extent: f64,
    /// Voxels per axis.
    pub resolution: usize,
    /// Sphere bins.
    pub n_b: usize,
    /// Defaults to one voxel.
    pub sigma_p: Option<f64>,
    /// Defaults to the mean lattice spacing.
    pub sigma_n: Option<f64>,
    /// Skip pairs farther apart than this (meters).
    pub pair_radius: Option<f64>,
    pub direction: Direction,
    pub storage: StorageMode,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            half_extent: 1.5,
            resolution: 32,
            n_b: 300,
            sigma_p: None,
            sigma_n: None,
            pair_radius: None,
            direction: Direction::ObjectToHuman,
            storage: StorageMode::Mixture,
        }
    }
}

impl FieldConfig {
    pub fn validate(&self) -> Result<(), FieldError> {
        if !(self.half_extent > 0.0 && self.half_extent.is_finite()) {
            return Err(FieldError::Config(format!("half_extent must be positive, got {}", self.half_extent)));
        }
        if self.resolution == 0 || self.resolution > 256 {
            return Err(FieldError::Config(format!("resolution must be in 1..=256, got {}", self.resolution)));
        }
        if self.n_b < 2 {
            return Err(FieldError::Config(format!("n_b must be at least 2, got {}", self.n_b)));
        }
        for (name, v) in [("sigma_p", self.sigma_p), ("sigma_n", self.sigma_n), ("pair_radius", self.pair_radius)] {
            if let Some(v) = v {
                if !(v > 0.0 && v.is_finite()) {
                    return Err(FieldError::Config(format!("{name} must be positive, got {v}")));
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Arc<GridSpec>, FieldError> {
        self.validate()?;
        let voxels = VoxelGrid::new(self.half_extent, self.resolution).map_err(FieldError::Config)?;
        Ok(GridSpec::new(voxels, fibonacci_sphere(self.n_b)))
    }

    pub fn kernel(&self, grid: &GridSpec) -> KernelWidths {
        KernelWidths {
            sigma_p: self.sigma_p.unwrap_or_else(|| grid.voxels.voxel_size()),
            sigma_n: self.sigma_n.unwrap_or_else(|| grid.sphere.mean_spacing()),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldStats {
    pub samples_used: usize,
    pub samples_skipped: usize,
    pub pairs: usize,
    pub kernels: u64,
    /// Kernels whose relative position fell outside the grid.
    pub clamped: u64,
}

/// Sparse map `(object index, human index) → P_ij`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitiveField {
    grid: Arc<GridSpec>,
    kernel: KernelWidths,
    direction: Direction,
    object_points: SurfacePointSet,
    human_points: SurfacePointSet,
    distributions: BTreeMap<(u32, u32), PrimitiveDistribution>,
}

impl PrimitiveField {
    pub fn new(
        grid: Arc<GridSpec>,
        kernel: KernelWidths,
        direction: Direction,
        object_points: SurfacePointSet,
        human_points: SurfacePointSet,
        distributions: BTreeMap<(u32, u32), PrimitiveDistribution>,
    ) -> Result<Self, FieldError> {
        for (&(i, j), d) in &distributions {
            if i as usize >= object_points.len() || j as usize >= human_points.len() {
                return Err(FieldError::PairIndex(i, j));
            }
            if **d.grid() != *grid {
                return Err(FieldError::Distribution(DistributionError::GridMismatch));
            }
        }
        Ok(Self { grid, kernel, direction, object_points, human_points, distributions })
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn kernel(&self) -> KernelWidths {
        self.kernel
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn object_points(&self) -> &SurfacePointSet {
        &self.object_points
    }

    pub fn human_points(&self) -> &SurfacePointSet {
        &self.human_points
    }

    pub fn get(&self, i: u32, j: u32) -> Option<&PrimitiveDistribution> {
        self.distributions.get(&(i, j))
    }

    pub fn distributions(&self) -> &BTreeMap<(u32, u32), PrimitiveDistribution> {
        &self.distributions
    }

    pub fn len(&self) -> usize {
        self.distributions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.distributions.is_empty()
    }

    /// All stored distributions normalized.
    pub fn is_normalized(&self) -> bool {
        self.distributions.values().all(|d| d.is_normalized())
    }

    pub fn normalize(&mut self) -> Result<(), FieldError> {
        for d in self.distributions.values_mut() {
            d.normalize()?;
        }
        Ok(())
    }

    /// Largest `|Σ P_ij − 1|` over stored pairs.
    pub fn normalization_audit(&self) -> f64 {
        self.distributions.values().map(|d| (d.total_mass() - 1.0).abs()).fold(0.0, f64::max)
    }

    /// Combines two normalized fields as if their samples had been
    /// accumulated together: each pair is rescaled to its sample count,
    /// summed and renormalized.
    pub fn merge_normalized(a: &Self, b: &Self) -> Result<Self, FieldError> {
        let raw = |f: &Self| Self {
            distributions: f.distributions.iter().map(|(k, d)| (*k, d.scaled(d.sample_count() as f64))).collect(),
            ..f.clone()
        };
        let mut out = Self::merge(&raw(a), &raw(b))?;
        out.normalize()?;
        Ok(out)
    }

    /// Pairwise sum of two raw fields over the same point sets and grid.
    pub fn merge(a: &Self, b: &Self) -> Result<Self, FieldError> {
        if a.grid != b.grid {
            return Err(FieldError::Mismatch("grid"));
        }
        if a.kernel != b.kernel {
            return Err(FieldError::Mismatch("kernel"));
        }
        if a.direction != b.direction {
            return Err(FieldError::Mismatch("direction"));
        }
        if a.object_points != b.object_points || a.human_points != b.human_points {
            return Err(FieldError::Mismatch("point sets"));
        }
        let mut out = a.distributions.clone();
        for (k, d) in &b.distributions {
            let merged = match out.get(k) {
                Some(x) => PrimitiveDistribution::merge(x, d)?,
                None => d.clone(),
            };
            out.insert(*k, merged);
        }
        Ok(Self { distributions: out, ..a.clone() })
    }
}

/// Accumulates unnormalized kernels for every sample. Samples whose body
/// surface does not have `human_points.len()` points are skipped.
pub fn accumulate_primitive_field(
    dataset: &[HOISample],
    object_points: &SurfacePointSet,
    human_points: &SurfacePointSet,
    config: &FieldConfig,
) -> Result<(PrimitiveField, FieldStats), FieldError> {
    if dataset.is_empty() {
        return Err(FieldError::EmptyDataset);
    }
    let grid = config.grid()?;
    let kernel = config.kernel(&grid);
    let (n_o, n_h) = (object_points.len(), human_points.len());
    let mut slots: Vec<Option<PrimitiveDistribution>> = vec![None; n_o * n_h];
    let mut stats = FieldStats::default();
    let object_frames: Vec<Mat3> =
        object_points.normals().iter().map(canonical_rotation).collect::<Result<_, _>>()?;
    let radius2 = config.pair_radius.map(|r| r * r);

    for (s, sample) in dataset.iter().enumerate() {
        let surface = sample.body.surface();
        if surface.len() != n_h {
            warn!("sample {s}: body has {} surface points, expected {n_h}; skipped", surface.len());
            stats.samples_skipped += 1;
            continue;
        }
        // human into the object's canonical frame
        let local = apply_rigid(surface, &sample.object_pose.inverse());
        let human_frames: Vec<Mat3> = match config.direction {
            Direction::HumanToObject => local.normals().iter().map(canonical_rotation).collect::<Result<_, _>>()?,
            Direction::ObjectToHuman => Vec::new(),
        };
        stats.samples_used += 1;
        for i in 0..n_o {
            let (v, n_o_i) = object_points.point(i);
            for j in 0..n_h {
                let (x, n_h_j) = local.point(j);
                let rel = x - v;
                if let Some(r2) = radius2 {
                    if rel.norm_squared() > r2 {
                        continue;
                    }
                }
                let (p, n): (Vec3, Vec3) = match config.direction {
                    Direction::ObjectToHuman => {
                        let r = &object_frames[i];
                        (r * rel, r * n_h_j)
                    }
                    Direction::HumanToObject => {
                        let r = &human_frames[j];
                        (r * (-rel), r * n_o_i)
                    }
                };
                let slot = &mut slots[i * n_h + j];
                let dist = match slot {
                    Some(d) => d,
                    None => slot.insert(match config.storage {
                        StorageMode::Mixture => PrimitiveDistribution::empty_mixture(grid.clone(), kernel)?,
                        StorageMode::Dense => PrimitiveDistribution::empty_dense(grid.clone()),
                    }),
                };
                if dist.accumulate(&p, &n, kernel.sigma_p, kernel.sigma_n)? {
                    stats.clamped += 1;
                }
                stats.kernels += 1;
            }
        }
    }
    if stats.samples_used == 0 {
        return Err(FieldError::NoUsableSample { objects: n_o, humans: n_h });
    }
    let mut distributions = BTreeMap::new();
    for (k, slot) in slots.into_iter().enumerate() {
        if let Some(mut d) = slot {
            d.canonicalize_order();
            distributions.insert(((k / n_h) as u32, (k % n_h) as u32), d);
        }
    }
    stats.pairs = distributions.len();
    let field = PrimitiveField::new(
        grid,
        kernel,
        config.direction,
        object_points.clone(),
        human_points.clone(),
        distributions,
    )?;
    Ok((field, stats))
}

/// Accumulates and normalizes every stored pair.
pub fn build_primitive_field(
    dataset: &[HOISample],
    object_points: &SurfacePointSet,
    human_points: &SurfacePointSet,
    config: &FieldConfig,
) -> Result<(PrimitiveField, FieldStats), FieldError> {
    let (mut field, stats) = accumulate_primitive_field(dataset, object_points, human_points, config)?;
    field.normalize()?;
    Ok((field, stats))
}
