//! Two-stage joint-reprojection consensus against a reference view.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use super::observation::ViewObservation;
use crate::camera::{triangulate_two_view, WeakPerspectiveCamera};
use crate::{Vec2, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InlierParams {
    /// Two-view residual above which a joint is dropped, pixels.
    pub tau_stage1: f64,
    /// Consensus residual below which a joint is kept, pixels.
    pub tau_stage2: f64,
    /// Surviving joints a view needs to count as an inlier.
    pub min_joints: usize,
}

impl Default for InlierParams {
    fn default() -> Self {
        Self { tau_stage1: 100.0, tau_stage2: 200.0, min_joints: 12 }
    }
}

/// Views semi-consistent with the reference, with their surviving joints.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct InlierSet {
    pub reference: String,
    /// Sorted by view id.
    pub members: Vec<String>,
    pub per_joint_inliers: BTreeMap<String, BTreeSet<usize>>,
}

impl InlierSet {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, view_id: &str) -> bool {
        self.per_joint_inliers.contains_key(view_id)
    }
}

/// Least-squares point seen at `obs[k].1` by camera `obs[k].0`. `None` when
/// the normal equations are singular.
pub fn triangulate_views(obs: &[(&WeakPerspectiveCamera, &Vec2)]) -> Option<Vec3> {
    let mut ata = Matrix3::zeros();
    let mut atb = Vec3::zeros();
    for (cam, u) in obs {
        let b = (*u - cam.offset()) / cam.scale();
        for r in 0..2 {
            let row = cam.rotation().row(r).transpose();
            ata += row * row.transpose();
            atb += row * b[r];
        }
    }
    ata.cholesky().map(|c| c.solve(&atb))
}

/// Stage 1 triangulates each joint against the reference and drops it when
/// the two-view residual exceeds `tau_stage1` (or the pair is degenerate).
/// Stage 2 re-triangulates each remaining joint over the reference and every
/// candidate that kept it, and keeps it in a view whose own reprojection
/// error is below `tau_stage2`. Views with at least `min_joints` survivors
/// are inliers.
pub fn select_inliers(reference: &ViewObservation, candidates: &[ViewObservation], params: &InlierParams) -> InlierSet {
    let mut out = InlierSet { reference: reference.view_id.clone(), ..Default::default() };
    let joints = reference.joint_count();
    // sorted by id so the consensus sums do not depend on input order
    let mut cands: Vec<&ViewObservation> = candidates
        .iter()
        .filter(|c| c.view_id != reference.view_id && c.joint_count() == joints)
        .collect();
    cands.sort_by(|a, b| a.view_id.cmp(&b.view_id));

    let stage1: Vec<BTreeSet<usize>> = cands
        .iter()
        .map(|c| {
            (0..joints)
                .filter(|&j| {
                    triangulate_two_view(&reference.camera, &reference.joints2d[j], &c.camera, &c.joints2d[j])
                        .map(|t| t.residual <= params.tau_stage1)
                        .unwrap_or(false)
                })
                .collect()
        })
        .collect();

    for (ci, c) in cands.iter().enumerate() {
        let kept: BTreeSet<usize> = stage1[ci]
            .iter()
            .copied()
            .filter(|&j| {
                let mut obs = vec![(&reference.camera, &reference.joints2d[j])];
                for (k, other) in cands.iter().enumerate() {
                    if stage1[k].contains(&j) {
                        obs.push((&other.camera, &other.joints2d[j]));
                    }
                }
                match triangulate_views(&obs) {
                    Some(x) => (c.camera.project(&x) - c.joints2d[j]).norm() < params.tau_stage2,
                    None => false,
                }
            })
            .collect();
        if !kept.is_empty() && kept.len() >= params.min_joints {
            out.members.push(c.view_id.clone());
            out.per_joint_inliers.insert(c.view_id.clone(), kept);
        }
    }
    out
}
