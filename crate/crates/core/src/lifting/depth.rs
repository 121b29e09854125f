//! Depth of a single-view body along its camera forward axis.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::body::ArticulatedBody;
use super::inliers::InlierSet;
use super::observation::ViewObservation;
use super::LiftError;
use crate::camera::WeakPerspectiveCamera;
use crate::geom::{rasterize_silhouette, Mask, SurfacePointSet, TriMesh};
use crate::Vec3;

/// Capsule tessellation used for silhouettes.
pub const MESH_SEGMENTS: usize = 16;
pub const MESH_RINGS: usize = 4;

/// `L(z) = a z² + b z + c`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadratic {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl Quadratic {
    pub fn eval(&self, z: f64) -> f64 {
        (self.a * z + self.b) * z + self.c
    }

    pub fn derivative(&self, z: f64) -> f64 {
        2.0 * self.a * z + self.b
    }

    /// `None` when the loss does not depend on `z`.
    pub fn minimizer(&self) -> Option<f64> {
        (self.a > 0.0).then(|| -self.b / (2.0 * self.a))
    }
}

fn inlier_views<'a>(
    inliers: &InlierSet,
    views: &'a [ViewObservation],
) -> Result<Vec<&'a ViewObservation>, LiftError> {
    if inliers.is_empty() {
        return Err(LiftError::EmptyInliers);
    }
    let by_id: HashMap<&str, &ViewObservation> = views.iter().map(|v| (v.view_id.as_str(), v)).collect();
    inliers
        .members
        .iter()
        .map(|id| by_id.get(id.as_str()).copied().ok_or_else(|| LiftError::UnknownView(id.clone())))
        .collect()
}

/// Mean over inlier views of the summed squared pixel distance between the
/// reference joints moved `z` along the reference forward and the inlier's
/// own 2D joints. Only each view's surviving joints take part.
pub fn reprojection_loss(
    z: f64,
    reference: &ViewObservation,
    inliers: &InlierSet,
    views: &[ViewObservation],
) -> Result<f64, LiftError> {
    let members = inlier_views(inliers, views)?;
    let placed = reference.placed_joints(z);
    let mut total = 0.0;
    for v in &members {
        for &j in &inliers.per_joint_inliers[&v.view_id] {
            total += (v.camera.project(&placed[j]) - v.joints2d[j]).norm_squared();
        }
    }
    Ok(total / members.len() as f64)
}

/// Coefficients of [`reprojection_loss`] as a polynomial in `z`.
pub fn reprojection_quadratic(
    reference: &ViewObservation,
    inliers: &InlierSet,
    views: &[ViewObservation],
) -> Result<Quadratic, LiftError> {
    let members = inlier_views(inliers, views)?;
    let f = reference.camera.forward();
    let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
    for v in &members {
        // Π(j + z f) − u = r + z d
        let df = v.camera.rotation() * f * v.camera.scale();
        let d = crate::Vec2::new(df.x, df.y);
        for &j in &inliers.per_joint_inliers[&v.view_id] {
            let r = v.camera.project(&reference.joints3d[j]) - v.joints2d[j];
            a += d.norm_squared();
            b += 2.0 * r.dot(&d);
            c += r.norm_squared();
        }
    }
    let n = members.len() as f64;
    Ok(Quadratic { a: a / n, b: b / n, c: c / n })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `1/N Σ σ(κ·sdf(v)) · 1[sdf(v) > 0]` over object points `v`.
pub fn collision_loss(body: &ArticulatedBody, object_points: &SurfacePointSet, kappa: f64) -> f64 {
    collision_loss_shifted(body, object_points.points(), &Vec3::zeros(), kappa)
}

/// Collision loss of `body` translated by `shift`.
fn collision_loss_shifted(body: &ArticulatedBody, points: &[Vec3], shift: &Vec3, kappa: f64) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let sum: f64 = points
        .iter()
        .map(|v| body.sdf(&(v - shift)))
        .filter(|&s| s > 0.0)
        .map(|s| sigmoid(kappa * s))
        .sum();
    sum / points.len() as f64
}

/// Fraction of `interior` points inside the (watertight) `object`.
pub fn penetration_ratio(interior: &[Vec3], object: &TriMesh) -> f64 {
    if interior.is_empty() {
        return 0.0;
    }
    let (lo, hi) = object.bounds();
    let inside = interior
        .iter()
        .filter(|q| (0..3).all(|k| q[k] >= lo[k] && q[k] <= hi[k]) && object.contains(q))
        .count();
    inside as f64 / interior.len() as f64
}

/// Occlusion-aware silhouette of `body` behind/in front of `object`.
pub fn body_silhouette(
    body: &ArticulatedBody,
    object: Option<&TriMesh>,
    camera: &WeakPerspectiveCamera,
    resolution: (usize, usize),
) -> Mask {
    let mesh = body.to_mesh(MESH_SEGMENTS, MESH_RINGS);
    let occluders: Vec<TriMesh> = object.into_iter().cloned().collect();
    rasterize_silhouette(&mesh, camera, resolution, &occluders)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthInit {
    pub z0: f64,
    /// Candidate depths, nearest first.
    pub candidates: Vec<f64>,
    pub ious: Vec<f64>,
    pub chosen: usize,
    /// Every candidate scored zero IoU; the center was returned.
    pub low_confidence: bool,
}

/// Point on the forward ray through the pelvis that minimizes the mean
/// distance to the object vertices; returns the offset along the ray.
fn ray_center(pelvis: &Vec3, f: &Vec3, vertices: &[Vec3]) -> f64 {
    if vertices.is_empty() {
        return 0.0;
    }
    let cost = |t: f64| {
        let c = pelvis + f * t;
        vertices.iter().map(|v| (c - v).norm()).sum::<f64>()
    };
    let proj: Vec<f64> = vertices.iter().map(|v| f.dot(&(v - pelvis))).collect();
    let (mut lo, mut hi) = proj.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    // convex in t, and the minimizer lies within the projected extent
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut f1, mut f2) = (cost(x1), cost(x2));
    for _ in 0..100 {
        if hi - lo < 1e-9 {
            break;
        }
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = cost(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = cost(x2);
        }
    }
    (lo + hi) / 2.0
}

/// `k` body copies spaced `spacing_mult ×` the body's extent along the
/// forward axis, centered where the pelvis is closest on average to the
/// object vertices; picks the copy whose occlusion-aware silhouette best
/// matches `human_mask`. Ties go to the copy nearest the center.
///
/// `body` sits at depth zero: the returned `z0` is the translation along
/// the camera forward to apply to it.
pub fn init_depth(
    body: &ArticulatedBody,
    object: Option<&TriMesh>,
    camera: &WeakPerspectiveCamera,
    human_mask: &Mask,
    k: usize,
    spacing_mult: f64,
) -> Result<DepthInit, LiftError> {
    if k == 0 {
        return Err(LiftError::Config("init_depth needs k >= 1".into()));
    }
    let f = camera.forward();
    let center = object.map(|o| ray_center(&body.pelvis(), &f, o.vertices())).unwrap_or(0.0);
    let spacing = spacing_mult * body.extent_along(&f);
    let mid = (k as f64 - 1.0) / 2.0;
    let candidates: Vec<f64> = (0..k).map(|m| center + (m as f64 - mid) * spacing).collect();
    let resolution = (human_mask.width(), human_mask.height());
    let mut ious = Vec::with_capacity(k);
    for &z in &candidates {
        let placed = body.translated(&(f * z));
        let sil = body_silhouette(&placed, object, camera, resolution);
        ious.push(sil.iou(human_mask).map_err(|e| LiftError::Config(e.to_string()))?);
    }
    let best = ious.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let chosen = (0..k)
        .filter(|&m| ious[m] == best)
        .min_by(|&a, &b| (a as f64 - mid).abs().total_cmp(&(b as f64 - mid).abs()).then(a.cmp(&b)))
        .expect("k >= 1");
    Ok(DepthInit { z0: candidates[chosen], candidates, ious, chosen, low_confidence: best <= 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamParams {
    pub lr: f64,
    pub iterations: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        Self { lr: 1e-2, iterations: 200, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DepthParams {
    pub lambda_collision: f64,
    /// Sigmoid sharpness of the collision term, 1/m.
    pub kappa: f64,
    /// Central-difference step for the collision gradient, m.
    pub fd_step: f64,
    pub adam: AdamParams,
}

impl Default for DepthParams {
    fn default() -> Self {
        Self { lambda_collision: 400.0, kappa: 50.0, fd_step: 1e-4, adam: AdamParams::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSolution {
    /// Lowest-loss iterate.
    pub z: f64,
    /// Total loss at every iterate, starting with `z0`.
    pub loss_trace: Vec<f64>,
    pub inliers: InlierSet,
}

impl DepthSolution {
    pub fn initial_loss(&self) -> f64 {
        self.loss_trace[0]
    }

    pub fn final_loss(&self) -> f64 {
        self.loss_trace.iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

/// Adam on `L(z) = L_reproj(z) + λ L_collision(z)`. The reprojection
/// gradient is analytic; the collision gradient is a central difference.
/// Aborts when `|z|` exceeds ten scene diameters.
#[allow(clippy::too_many_arguments)]
pub fn optimize_depth(
    z0: f64,
    reference: &ViewObservation,
    inliers: &InlierSet,
    views: &[ViewObservation],
    body: &ArticulatedBody,
    object_points: &SurfacePointSet,
    params: &DepthParams,
) -> Result<DepthSolution, LiftError> {
    let quad = reprojection_quadratic(reference, inliers, views)?;
    let f = reference.camera.forward();
    let pts = object_points.points();
    let collision = |z: f64| {
        if params.lambda_collision == 0.0 {
            0.0
        } else {
            collision_loss_shifted(body, pts, &(f * z), params.kappa)
        }
    };
    let total = |z: f64| quad.eval(z) + params.lambda_collision * collision(z);
    let limit = 10.0 * scene_diameter(body, pts);

    let AdamParams { lr, iterations, beta1, beta2, eps } = params.adam;
    let (mut m, mut v) = (0.0, 0.0);
    let mut z = z0;
    let mut trace = Vec::with_capacity(iterations + 1);
    let (mut best_z, mut best) = (z0, total(z0));
    trace.push(best);
    for t in 1..=iterations {
        let h = params.fd_step;
        let grad_col = if params.lambda_collision == 0.0 {
            0.0
        } else {
            (collision(z + h) - collision(z - h)) / (2.0 * h)
        };
        let g = quad.derivative(z) + params.lambda_collision * grad_col;
        m = beta1 * m + (1.0 - beta1) * g;
        v = beta2 * v + (1.0 - beta2) * g * g;
        let m_hat = m / (1.0 - beta1.powi(t as i32));
        let v_hat = v / (1.0 - beta2.powi(t as i32));
        z -= lr * m_hat / (v_hat.sqrt() + eps);
        if !z.is_finite() || z.abs() > limit {
            return Err(LiftError::Divergence { z, limit });
        }
        let l = total(z);
        trace.push(l);
        if l < best {
            best = l;
            best_z = z;
        }
    }
    Ok(DepthSolution { z: best_z, loss_trace: trace, inliers: inliers.clone() })
}

fn scene_diameter(body: &ArticulatedBody, object: &[Vec3]) -> f64 {
    let all = body.surface().points().iter().chain(object);
    let (lo, hi) = all.fold((Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)), |(lo, hi), p| {
        (lo.inf(p), hi.sup(p))
    });
    (hi - lo).norm().max(1.0)
}
