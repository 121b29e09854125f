//! Single-view human placement: inlier views, depth initialization and
//! optimization, and sample filtering.

mod body;
mod depth;
mod filter;
mod inliers;
mod lift;
mod observation;

use thiserror::Error;

pub use body::{
    capsule_sdf, joint, ArticulatedBody, BodyError, BodyModel, BodyModelSpec, Bone, Skeleton, TwistRef,
};
pub use depth::{
    body_silhouette, collision_loss, init_depth, optimize_depth, penetration_ratio, reprojection_loss,
    reprojection_quadratic, AdamParams, DepthInit, DepthParams, DepthSolution, Quadratic, MESH_RINGS,
    MESH_SEGMENTS,
};
pub use filter::{filter_sample, FilterThresholds, Verdict};
pub use lift::{lift_view, LiftOutcome, LiftParams};
pub use inliers::{select_inliers, triangulate_views, InlierParams, InlierSet};
pub use observation::{ViewObservation, ViewRecord, CONSISTENCY_TOL};

#[derive(Debug, Error)]
pub enum LiftError {
    #[error("invalid observation: {0}")]
    Observation(String),
    #[error("inlier set is empty")]
    EmptyInliers,
    #[error("inlier view {0} is not in the view store")]
    UnknownView(String),
    #[error("depth diverged: |z| = {z} exceeds {limit}")]
    Divergence { z: f64, limit: f64 },
    #[error("invalid lifting parameters: {0}")]
    Config(String),
    #[error(transparent)]
    Body(#[from] BodyError),
}
