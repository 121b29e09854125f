//! Discrete densities over (voxel, sphere bin) cells, built from normalized
//! separable Gaussian kernels.
//!
//! A distribution is stored either densely (`G³ × n_b` weights, cell-major)
//! or as a weighted mixture of kernel centers. The mixture form evaluates the
//! same cells on demand: every quantity below is computed from the kernel
//! factors without materializing the dense array, and [`PrimitiveDistribution::to_dense`]
//! produces the exact cellwise equivalent.

use std::cmp::Ordering;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::sphere::SphereGrid;
use super::voxel::VoxelGrid;
use crate::Vec3;

/// Kernel support radius in standard deviations.
pub const TRUNCATION: f64 = 3.0;

#[derive(Debug, Error, PartialEq)]
pub enum DistributionError {
    #[error("distributions live on different grids")]
    GridMismatch,
    #[error("mixtures use different kernel widths")]
    KernelMismatch,
    #[error("kernel widths must be positive (sigma_p = {0}, sigma_n = {1})")]
    Width(f64, f64),
    #[error("distribution has no mass to normalize")]
    ZeroMass,
    #[error("distribution is not normalized")]
    NotNormalized,
    #[error("expected {expected} weights, got {got}")]
    Length { expected: usize, got: usize },
    #[error("weights must be finite and nonnegative")]
    NegativeWeight,
}

/// Voxel and sphere grids shared by every distribution of a field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub voxels: VoxelGrid,
    pub sphere: SphereGrid,
}

impl GridSpec {
    pub fn new(voxels: VoxelGrid, sphere: SphereGrid) -> Arc<Self> {
        Arc::new(Self { voxels, sphere })
    }

    pub fn cells(&self) -> usize {
        self.voxels.cell_count() * self.sphere.len()
    }

    /// Normalized positional kernel weights around `p` (clamped into the
    /// grid box). Falls back to the containing voxel when no center lies
    /// within the support.
    pub fn voxel_kernel(&self, p: &Vec3, sigma_p: f64, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let g = &self.voxels;
        let p = g.clamp(p);
        let vs = g.voxel_size();
        let reach = TRUNCATION * sigma_p;
        let inv = 1.0 / (2.0 * sigma_p * sigma_p);
        let range = |c: f64| {
            let lo = ((c - reach + g.half_extent()) / vs - 0.5).ceil().max(0.0) as usize;
            let hi = ((c + reach + g.half_extent()) / vs - 0.5).floor();
            let hi = if hi < 0.0 { None } else { Some((hi as usize).min(g.resolution() - 1)) };
            hi.filter(|&h| h >= lo).map(|h| lo..=h)
        };
        let axes = [range(p.x), range(p.y), range(p.z)];
        if let [Some(rx), Some(ry), Some(rz)] = axes {
            let r2 = reach * reach;
            let mut total = 0.0;
            for ix in rx {
                let dx = g.axis_center(ix) - p.x;
                for iy in ry.clone() {
                    let dy = g.axis_center(iy) - p.y;
                    let dxy = dx * dx + dy * dy;
                    if dxy > r2 {
                        continue;
                    }
                    for iz in rz.clone() {
                        let dz = g.axis_center(iz) - p.z;
                        let d2 = dxy + dz * dz;
                        if d2 <= r2 {
                            let w = (-d2 * inv).exp();
                            total += w;
                            out.push((g.flat(ix, iy, iz), w));
                        }
                    }
                }
            }
            if total > 0.0 {
                for (_, w) in out.iter_mut() {
                    *w /= total;
                }
                return;
            }
            out.clear();
        }
        out.push((g.locate_clamped(&p), 1.0));
    }

    /// Normalized geodesic kernel weights around the unit vector `n`. Falls
    /// back to the nearest bin when no bin lies within the support.
    pub fn sphere_kernel(&self, n: &Vec3, sigma_n: f64, out: &mut Vec<(usize, f64)>) {
        out.clear();
        let reach = TRUNCATION * sigma_n;
        let cos_reach = if reach >= std::f64::consts::PI { -1.0 } else { reach.cos() };
        let inv = 1.0 / (2.0 * sigma_n * sigma_n);
        let mut total = 0.0;
        for (k, d) in self.sphere.directions().iter().enumerate() {
            let dot = d.dot(n);
            if dot >= cos_reach {
                let theta = dot.clamp(-1.0, 1.0).acos();
                if theta <= reach {
                    let w = (-theta * theta * inv).exp();
                    total += w;
                    out.push((k, w));
                }
            }
        }
        if total > 0.0 {
            for (_, w) in out.iter_mut() {
                *w /= total;
            }
        } else {
            out.clear();
            out.push((self.sphere.nearest(n), 1.0));
        }
    }
}

/// Positional and angular kernel widths (meters, radians).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelWidths {
    pub sigma_p: f64,
    pub sigma_n: f64,
}

impl KernelWidths {
    fn validate(&self) -> Result<(), DistributionError> {
        if self.sigma_p > 0.0 && self.sigma_n > 0.0 && self.sigma_p.is_finite() && self.sigma_n.is_finite() {
            Ok(())
        } else {
            Err(DistributionError::Width(self.sigma_p, self.sigma_n))
        }
    }
}

/// One unit kernel centered at (`p`, `n`) carrying mass `w`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Component {
    pub p: [f64; 3],
    pub n: [f64; 3],
    pub w: f64,
}

impl Component {
    fn canonical_cmp(&self, other: &Self) -> Ordering {
        let a = self.p.iter().chain(&self.n).chain([&self.w]);
        let b = other.p.iter().chain(&other.n).chain([&other.w]);
        for (x, y) in a.zip(b) {
            match x.total_cmp(y) {
                Ordering::Equal => continue,
                o => return o,
            }
        }
        Ordering::Equal
    }
}

#[derive(Debug, Clone)]
pub enum Storage {
    /// `weights[v · n_b + k]`.
    Dense(Vec<f64>),
    Mixture { kernel: KernelWidths, components: Vec<Component> },
}

/// Density `P_ij(p, n)` of one point pair.
#[derive(Debug, Clone)]
pub struct PrimitiveDistribution {
    grid: Arc<GridSpec>,
    storage: Storage,
    sample_count: u64,
    normalized: bool,
}

impl PartialEq for PrimitiveDistribution {
    /// Mixtures compare as multisets of components.
    fn eq(&self, other: &Self) -> bool {
        if self.grid != other.grid || self.sample_count != other.sample_count || self.normalized != other.normalized {
            return false;
        }
        match (&self.storage, &other.storage) {
            (Storage::Dense(a), Storage::Dense(b)) => a == b,
            (Storage::Mixture { kernel: ka, components: a }, Storage::Mixture { kernel: kb, components: b }) => {
                ka == kb && sorted(a) == sorted(b)
            }
            _ => false,
        }
    }
}

fn sorted(c: &[Component]) -> Vec<Component> {
    let mut v = c.to_vec();
    v.sort_by(Component::canonical_cmp);
    v
}

impl PrimitiveDistribution {
    /// Empty dense distribution (all weights zero).
    pub fn empty_dense(grid: Arc<GridSpec>) -> Self {
        let cells = grid.cells();
        Self { grid, storage: Storage::Dense(vec![0.0; cells]), sample_count: 0, normalized: false }
    }

    /// Empty mixture whose kernels all use `kernel`.
    pub fn empty_mixture(grid: Arc<GridSpec>, kernel: KernelWidths) -> Result<Self, DistributionError> {
        kernel.validate()?;
        Ok(Self { grid, storage: Storage::Mixture { kernel, components: Vec::new() }, sample_count: 0, normalized: false })
    }

    pub fn from_dense(grid: Arc<GridSpec>, weights: Vec<f64>, sample_count: u64) -> Result<Self, DistributionError> {
        if weights.len() != grid.cells() {
            return Err(DistributionError::Length { expected: grid.cells(), got: weights.len() });
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(DistributionError::NegativeWeight);
        }
        Ok(Self { grid, storage: Storage::Dense(weights), sample_count, normalized: false })
    }

    pub fn from_components(
        grid: Arc<GridSpec>,
        kernel: KernelWidths,
        components: Vec<Component>,
        sample_count: u64,
    ) -> Result<Self, DistributionError> {
        kernel.validate()?;
        if components.iter().any(|c| !(c.w >= 0.0 && c.w.is_finite())) {
            return Err(DistributionError::NegativeWeight);
        }
        Ok(Self { grid, storage: Storage::Mixture { kernel, components }, sample_count, normalized: false })
    }

    pub fn grid(&self) -> &Arc<GridSpec> {
        &self.grid
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn sample_count(&self) -> u64 {
        self.sample_count
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// Marks the distribution normalized without rescaling; for loaders that
    /// restore a previously normalized archive.
    pub fn assume_normalized(mut self) -> Self {
        self.normalized = true;
        self
    }

    /// Adds one unit-mass kernel at (`p`, `n`). Returns `true` when `p` lay
    /// outside the grid and was clamped to its boundary.
    pub fn accumulate(&mut self, p: &Vec3, n: &Vec3, sigma_p: f64, sigma_n: f64) -> Result<bool, DistributionError> {
        let kernel = KernelWidths { sigma_p, sigma_n };
        kernel.validate()?;
        let clamped = !self.grid.voxels.contains(p);
        let pc = self.grid.voxels.clamp(p);
        match &mut self.storage {
            Storage::Dense(weights) => {
                let nb = self.grid.sphere.len();
                let (mut vk, mut sk) = (Vec::new(), Vec::new());
                self.grid.voxel_kernel(&pc, sigma_p, &mut vk);
                self.grid.sphere_kernel(n, sigma_n, &mut sk);
                for &(v, a) in &vk {
                    for &(k, b) in &sk {
                        weights[v * nb + k] += a * b;
                    }
                }
            }
            Storage::Mixture { kernel: own, components } => {
                if *own != kernel {
                    return Err(DistributionError::KernelMismatch);
                }
                components.push(Component { p: pc.into(), n: (*n).into(), w: 1.0 });
            }
        }
        self.sample_count += 1;
        self.normalized = false;
        Ok(clamped)
    }

    /// Sum of two distributions on the same grid. Mixture components are
    /// kept in a canonical order, so the result does not depend on argument
    /// order.
    pub fn merge(a: &Self, b: &Self) -> Result<Self, DistributionError> {
        if a.grid != b.grid {
            return Err(DistributionError::GridMismatch);
        }
        let storage = match (&a.storage, &b.storage) {
            (Storage::Mixture { kernel: ka, components: ca }, Storage::Mixture { kernel: kb, components: cb }) => {
                if ka != kb {
                    return Err(DistributionError::KernelMismatch);
                }
                let mut all = Vec::with_capacity(ca.len() + cb.len());
                all.extend_from_slice(ca);
                all.extend_from_slice(cb);
                all.sort_by(Component::canonical_cmp);
                Storage::Mixture { kernel: *ka, components: all }
            }
            _ => {
                let (da, db) = (a.to_dense(), b.to_dense());
                Storage::Dense(da.iter().zip(&db).map(|(x, y)| x + y).collect())
            }
        };
        Ok(Self {
            grid: a.grid.clone(),
            storage,
            sample_count: a.sample_count + b.sample_count,
            normalized: false,
        })
    }

    /// Every weight multiplied by `c`; the result is marked unnormalized.
    pub fn scaled(&self, c: f64) -> Self {
        let storage = match &self.storage {
            Storage::Dense(w) => Storage::Dense(w.iter().map(|x| x * c).collect()),
            Storage::Mixture { kernel, components } => Storage::Mixture {
                kernel: *kernel,
                components: components.iter().map(|k| Component { w: k.w * c, ..*k }).collect(),
            },
        };
        Self { grid: self.grid.clone(), storage, sample_count: self.sample_count, normalized: false }
    }

    /// Sorts mixture components into the canonical order used by `merge`.
    pub fn canonicalize_order(&mut self) {
        if let Storage::Mixture { components, .. } = &mut self.storage {
            components.sort_by(Component::canonical_cmp);
        }
    }

    /// `Σ_{p,n} P`.
    pub fn total_mass(&self) -> f64 {
        match &self.storage {
            Storage::Dense(w) => w.iter().sum(),
            Storage::Mixture { .. } => self.marginal_n_raw().iter().sum(),
        }
    }

    /// Rescales to unit total mass.
    pub fn normalize(&mut self) -> Result<(), DistributionError> {
        let mass = self.total_mass();
        if !(mass > 0.0) {
            return Err(DistributionError::ZeroMass);
        }
        match &mut self.storage {
            Storage::Dense(w) => w.iter_mut().for_each(|x| *x /= mass),
            Storage::Mixture { components, .. } => components.iter_mut().for_each(|c| c.w /= mass),
        }
        self.normalized = true;
        Ok(())
    }

    /// Cellwise weights, `G³ × n_b`, cell-major.
    pub fn to_dense(&self) -> Vec<f64> {
        match &self.storage {
            Storage::Dense(w) => w.clone(),
            Storage::Mixture { kernel, components } => {
                let nb = self.grid.sphere.len();
                let mut out = vec![0.0; self.grid.cells()];
                let (mut vk, mut sk) = (Vec::new(), Vec::new());
                for c in components {
                    self.grid.voxel_kernel(&Vec3::from(c.p), kernel.sigma_p, &mut vk);
                    self.grid.sphere_kernel(&Vec3::from(c.n), kernel.sigma_n, &mut sk);
                    for &(v, a) in &vk {
                        for &(k, b) in &sk {
                            out[v * nb + k] += c.w * a * b;
                        }
                    }
                }
                out
            }
        }
    }

    fn marginal_n_raw(&self) -> Vec<f64> {
        let nb = self.grid.sphere.len();
        let mut out = vec![0.0; nb];
        match &self.storage {
            Storage::Dense(w) => {
                for cell in w.chunks_exact(nb) {
                    for (o, x) in out.iter_mut().zip(cell) {
                        *o += x;
                    }
                }
            }
            Storage::Mixture { kernel, components } => {
                let mut sk = Vec::new();
                for c in components {
                    self.grid.sphere_kernel(&Vec3::from(c.n), kernel.sigma_n, &mut sk);
                    for &(k, b) in &sk {
                        out[k] += c.w * b;
                    }
                }
            }
        }
        out
    }

    /// Histogram over sphere bins (sum over voxels).
    pub fn marginal_n(&self) -> Vec<f64> {
        self.marginal_n_raw()
    }

    /// Histogram over voxels (sum over sphere bins).
    pub fn marginal_p(&self) -> Vec<f64> {
        let nb = self.grid.sphere.len();
        match &self.storage {
            Storage::Dense(w) => w.chunks_exact(nb).map(|c| c.iter().sum()).collect(),
            Storage::Mixture { kernel, components } => {
                let mut out = vec![0.0; self.grid.voxels.cell_count()];
                let mut vk = Vec::new();
                for c in components {
                    self.grid.voxel_kernel(&Vec3::from(c.p), kernel.sigma_p, &mut vk);
                    for &(v, a) in &vk {
                        out[v] += c.w * a;
                    }
                }
                out
            }
        }
    }

    /// `Σ_{v,k} P(v,k) · h[v] · g[k]` for a function separable over voxel
    /// and bin.
    pub fn expectation_separable(&self, h: &[f64], g: &[f64]) -> f64 {
        let nb = self.grid.sphere.len();
        match &self.storage {
            Storage::Dense(w) => w
                .chunks_exact(nb)
                .zip(h)
                .map(|(cell, hv)| hv * cell.iter().zip(g).map(|(x, gk)| x * gk).sum::<f64>())
                .sum(),
            Storage::Mixture { kernel, components } => {
                let (mut vk, mut sk) = (Vec::new(), Vec::new());
                let mut total = 0.0;
                for c in components {
                    self.grid.voxel_kernel(&Vec3::from(c.p), kernel.sigma_p, &mut vk);
                    self.grid.sphere_kernel(&Vec3::from(c.n), kernel.sigma_n, &mut sk);
                    let hp: f64 = vk.iter().map(|&(v, a)| a * h[v]).sum();
                    let gn: f64 = sk.iter().map(|&(k, b)| b * g[k]).sum();
                    total += c.w * hp * gn;
                }
                total
            }
        }
    }

    /// Number of stored components (mixtures) or nonzero cells (dense).
    pub fn support_size(&self) -> usize {
        match &self.storage {
            Storage::Dense(w) => w.iter().filter(|&&x| x != 0.0).count(),
            Storage::Mixture { components, .. } => components.len(),
        }
    }
}
