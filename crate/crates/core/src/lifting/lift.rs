use serde::{Deserialize, Serialize};

use super::{
    body_silhouette, filter_sample, init_depth, optimize_depth, penetration_ratio, select_inliers, ArticulatedBody,
    BodyModel, DepthInit, DepthParams, FilterThresholds, InlierParams, LiftError, Verdict, ViewObservation,
};
use crate::geom::{SurfacePointSet, TriMesh};

/// Everything the placement of one reference view needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LiftParams {
    pub inliers: InlierParams,
    /// Candidate count of the depth initialization.
    pub candidates: usize,
    pub spacing_mult: f64,
    pub depth: DepthParams,
    pub filter: FilterThresholds,
}

impl Default for LiftParams {
    fn default() -> Self {
        Self {
            inliers: InlierParams::default(),
            candidates: 7,
            spacing_mult: 0.3,
            depth: DepthParams::default(),
            filter: FilterThresholds::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct LiftOutcome {
    pub view_id: String,
    pub init: DepthInit,
    pub z: f64,
    pub body: ArticulatedBody,
    pub inliers: Vec<String>,
    pub iou: f64,
    pub penetration: f64,
    pub verdict: Verdict,
    pub initial_loss: f64,
    pub final_loss: f64,
}

/// Places the body of `views[reference]` in the world: inlier selection,
/// depth initialization against `object`, optimization and filtering.
pub fn lift_view(
    views: &[ViewObservation],
    reference: usize,
    model: &BodyModel,
    object: &TriMesh,
    object_points: &SurfacePointSet,
    params: &LiftParams,
) -> Result<LiftOutcome, LiftError> {
    let r = views
        .get(reference)
        .ok_or_else(|| LiftError::Config(format!("reference index {reference} out of {} views", views.len())))?;
    let others: Vec<ViewObservation> =
        views.iter().enumerate().filter(|&(k, _)| k != reference).map(|(_, v)| v.clone()).collect();
    let inliers = select_inliers(r, &others, &params.inliers);
    let body0 = model.pose(&r.joints3d)?;
    let init = init_depth(&body0, Some(object), &r.camera, &r.human_mask, params.candidates, params.spacing_mult)?;
    let (z, initial_loss, final_loss) = if inliers.is_empty() {
        (init.z0, f64::NAN, f64::NAN)
    } else {
        let sol = optimize_depth(init.z0, r, &inliers, views, &body0, object_points, &params.depth)?;
        (sol.z, sol.initial_loss(), sol.final_loss())
    };
    let body = body0.translated(&(r.camera.forward() * z));
    let res = (r.human_mask.width(), r.human_mask.height());
    let iou = body_silhouette(&body, Some(object), &r.camera, res)
        .iou(&r.human_mask)
        .map_err(|e| LiftError::Config(e.to_string()))?;
    let penetration = penetration_ratio(&model.interior_points(&body), object);
    let verdict = filter_sample(iou, inliers.len(), penetration, &params.filter);
    Ok(LiftOutcome {
        view_id: r.view_id.clone(),
        init,
        z,
        body,
        inliers: inliers.members.clone(),
        iou,
        penetration,
        verdict,
        initial_loss,
        final_loss,
    })
}
