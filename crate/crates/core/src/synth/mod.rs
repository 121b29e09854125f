//! Synthetic interaction scenes with known ground truth.

use serde::{Deserialize, Serialize};

use crate::geom::RigidTransform;
use crate::lifting::ArticulatedBody;

/// Where a sample came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Provenance {
    Scenario { name: String, seed: u64, index: usize },
    Lifted { view_id: String, z: f64 },
}

/// One object pose and one placed body.
#[derive(Debug, Clone, PartialEq)]
pub struct HOISample {
    pub object_pose: RigidTransform,
    pub body: ArticulatedBody,
    pub provenance: Provenance,
}

mod poses;
mod scenarios;
mod views;

pub use poses::{crouched, elbows_forward, place_arm, rotate_subtree, seated, straddle, translate};
pub use scenarios::{
    body_regions, make_samples, make_scenario, scenario_from_object, Scenario, ScenarioName, SceneObject, Truth,
    CONTACT_ANGLE_DEG, CONTACT_DISTANCE,
};
pub use views::{render_views, RenderedViews, ViewOptions};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),
    #[error("jitter must be a finite non-negative number, got {0}")]
    Jitter(f64),
    #[error("invalid view options: {0}")]
    Options(String),
    #[error(transparent)]
    Body(#[from] crate::lifting::BodyError),
    #[error(transparent)]
    Mesh(#[from] crate::geom::MeshError),
    #[error(transparent)]
    Raster(#[from] crate::geom::RasterError),
    #[error(transparent)]
    Lift(#[from] crate::lifting::LiftError),
}
