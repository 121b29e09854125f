use serde::{Deserialize, Serialize};

use super::LiftError;
use crate::camera::WeakPerspectiveCamera;
use crate::geom::Mask;
use crate::{Vec2, Vec3};

/// Tolerance on `joints2d[j] = project(camera, joints3d[j])`, pixels.
pub const CONSISTENCY_TOL: f64 = 1e-6;

/// One generated view: its camera, the regressed body joints (world frame,
/// known only up to depth along the camera forward) and the predicted human
/// segmentation.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewObservation {
    pub view_id: String,
    pub prompt_id: String,
    pub camera: WeakPerspectiveCamera,
    pub joints2d: Vec<Vec2>,
    pub joints3d: Vec<Vec3>,
    pub human_mask: Mask,
}

impl ViewObservation {
    /// Derives `joints2d` by projecting `joints3d`.
    pub fn new(
        view_id: impl Into<String>,
        prompt_id: impl Into<String>,
        camera: WeakPerspectiveCamera,
        joints3d: Vec<Vec3>,
        human_mask: Mask,
    ) -> Self {
        let joints2d = joints3d.iter().map(|j| camera.project(j)).collect();
        Self { view_id: view_id.into(), prompt_id: prompt_id.into(), camera, joints2d, joints3d, human_mask }
    }

    /// Checks lengths and weak-perspective consistency.
    pub fn from_parts(
        view_id: impl Into<String>,
        prompt_id: impl Into<String>,
        camera: WeakPerspectiveCamera,
        joints2d: Vec<Vec2>,
        joints3d: Vec<Vec3>,
        human_mask: Mask,
    ) -> Result<Self, LiftError> {
        let view_id = view_id.into();
        if joints2d.len() != joints3d.len() {
            return Err(LiftError::Observation(format!(
                "view {view_id}: {} 2D joints but {} 3D joints",
                joints2d.len(),
                joints3d.len()
            )));
        }
        for (j, (u, x)) in joints2d.iter().zip(&joints3d).enumerate() {
            let err = (camera.project(x) - u).norm();
            if !(err <= CONSISTENCY_TOL * (1.0 + u.norm())) {
                return Err(LiftError::Observation(format!(
                    "view {view_id}: joint {j} projects {err:.3e} px away from its 2D position"
                )));
            }
        }
        Ok(Self { view_id, prompt_id: prompt_id.into(), camera, joints2d, joints3d, human_mask })
    }

    pub fn joint_count(&self) -> usize {
        self.joints2d.len()
    }

    /// Reference joints moved `z` along the camera forward.
    pub fn placed_joints(&self, z: f64) -> Vec<Vec3> {
        let f = self.camera.forward();
        self.joints3d.iter().map(|j| j + f * z).collect()
    }
}

/// JSON-lines layout of a view; the mask lives in a separate PGM.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewRecord {
    pub view_id: String,
    pub prompt_id: String,
    pub camera: WeakPerspectiveCamera,
    pub joints2d: Vec<[f64; 2]>,
    pub joints3d: Vec<[f64; 3]>,
    pub mask_path: String,
}

impl ViewRecord {
    pub fn from_observation(v: &ViewObservation, mask_path: impl Into<String>) -> Self {
        Self {
            view_id: v.view_id.clone(),
            prompt_id: v.prompt_id.clone(),
            camera: v.camera,
            joints2d: v.joints2d.iter().map(|u| [u.x, u.y]).collect(),
            joints3d: v.joints3d.iter().map(|x| [x.x, x.y, x.z]).collect(),
            mask_path: mask_path.into(),
        }
    }

    pub fn into_observation(self, human_mask: Mask) -> Result<ViewObservation, LiftError> {
        ViewObservation::from_parts(
            self.view_id,
            self.prompt_id,
            self.camera,
            self.joints2d.into_iter().map(Vec2::from).collect(),
            self.joints3d.into_iter().map(Vec3::from).collect(),
            human_mask,
        )
    }
}
