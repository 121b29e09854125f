//! Per point-pair densities over canonicalized relative position and normal.

mod archive;
mod canonical;
mod distribution;
mod field;
mod sphere;
mod voxel;

pub use archive::{load_field, save_field, ArchiveError, PointsRecord, HEADER_FILE, MAGIC, PAIRS_FILE};
pub use canonical::{canonical_rotation, canonicalize, NonUnitNormal, ANTIPARALLEL_EPS};
pub use distribution::{
    Component, DistributionError, GridSpec, KernelWidths, PrimitiveDistribution, Storage, TRUNCATION,
};
pub use field::{
    accumulate_primitive_field, build_primitive_field, Direction, FieldConfig, FieldError, FieldStats,
    PrimitiveField, StorageMode,
};
pub use sphere::{fibonacci_sphere, SphereGrid};
pub use voxel::VoxelGrid;
