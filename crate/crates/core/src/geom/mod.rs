//! Triangle meshes, rigid transforms, surface point sampling, masks and a
//! minimal silhouette rasterizer.

pub(crate) mod mesh;
mod meshio;
mod raster;
mod rasterize;
mod sampling;
pub(crate) mod transform;

pub use mesh::{MeshError, TriMesh};
pub use meshio::{
    load_mesh, parse_obj, parse_ply, read_ply_points, write_ply_mesh, write_ply_points, PlyColumns,
};
pub use raster::{Image, Mask, RasterError, Rect};
pub use rasterize::{depth_buffer, rasterize_silhouette};
pub use sampling::{eliminate_samples, poisson_disk_sample, sample_surface, SampledSurface};
pub use transform::{apply_rigid, RigidTransform, SurfacePointSet, TransformError};
