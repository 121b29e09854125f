use serde::{Deserialize, Serialize};

use crate::Vec3;

/// Cubic grid of `G³` cells covering `[−L, L]³` around the canonicalized
/// object point. Cell `(ix, iy, iz)` has flat index `(ix·G + iy)·G + iz`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VoxelRepr", into = "VoxelRepr")]
pub struct VoxelGrid {
    half_extent: f64,
    resolution: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct VoxelRepr {
    half_extent: f64,
    resolution: usize,
}

impl TryFrom<VoxelRepr> for VoxelGrid {
    type Error = String;
    fn try_from(r: VoxelRepr) -> Result<Self, String> {
        VoxelGrid::new(r.half_extent, r.resolution)
    }
}

impl From<VoxelGrid> for VoxelRepr {
    fn from(v: VoxelGrid) -> Self {
        VoxelRepr { half_extent: v.half_extent, resolution: v.resolution }
    }
}

impl VoxelGrid {
    pub fn new(half_extent: f64, resolution: usize) -> Result<Self, String> {
        if !(half_extent > 0.0 && half_extent.is_finite()) {
            return Err(format!("voxel half-extent must be positive, got {half_extent}"));
        }
        if resolution == 0 {
            return Err("voxel resolution must be at least 1".into());
        }
        Ok(Self { half_extent, resolution })
    }

    pub fn half_extent(&self) -> f64 {
        self.half_extent
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn cell_count(&self) -> usize {
        self.resolution.pow(3)
    }

    /// Edge length `2L/G`.
    pub fn voxel_size(&self) -> f64 {
        2.0 * self.half_extent / self.resolution as f64
    }

    /// Center coordinate of cell `i` along one axis.
    pub fn axis_center(&self, i: usize) -> f64 {
        -self.half_extent + (i as f64 + 0.5) * self.voxel_size()
    }

    pub fn flat(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.resolution + iy) * self.resolution + iz
    }

    pub fn unflat(&self, v: usize) -> [usize; 3] {
        let g = self.resolution;
        [v / (g * g), (v / g) % g, v % g]
    }

    pub fn center(&self, v: usize) -> Vec3 {
        let [x, y, z] = self.unflat(v);
        Vec3::new(self.axis_center(x), self.axis_center(y), self.axis_center(z))
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        p.iter().all(|c| c.abs() <= self.half_extent)
    }

    fn axis_index(&self, c: f64) -> usize {
        let i = ((c + self.half_extent) / self.voxel_size()).floor();
        (i.max(0.0) as usize).min(self.resolution - 1)
    }

    /// Cell containing `p`, or `None` outside `[−L, L]³`.
    pub fn locate(&self, p: &Vec3) -> Option<usize> {
        self.contains(p).then(|| self.locate_clamped(p))
    }

    /// Cell containing the point of the grid box nearest to `p`.
    pub fn locate_clamped(&self, p: &Vec3) -> usize {
        self.flat(self.axis_index(p.x), self.axis_index(p.y), self.axis_index(p.z))
    }

    /// `p` projected into the grid box.
    pub fn clamp(&self, p: &Vec3) -> Vec3 {
        p.map(|c| c.clamp(-self.half_extent, self.half_extent))
    }
}
