//! Multi-view renderings of a sample: per-view cameras, joints known up to
//! depth, and a segmentation mask, with some views swapped for outliers.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{HOISample, SynthError};
use crate::camera::CameraRig;
use crate::geom::{rasterize_silhouette, RigidTransform, TriMesh};
use crate::lifting::{joint as J, ArticulatedBody, BodyModel, ViewObservation};
use crate::seed::rng_for;
use crate::Vec3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ViewOptions {
    /// Square image side, pixels.
    pub resolution: usize,
    /// Capsule radius factor of the segmentation silhouette.
    pub seg_inflation: f64,
    /// Standard deviation of joint noise in the image plane, pixels.
    pub noise_px: f64,
    pub n_outliers: usize,
    /// Vertical displacement range of outlier bodies, meters.
    pub outlier_lift: (f64, f64),
    /// Largest horizontal displacement of outlier bodies, meters.
    pub outlier_shift: f64,
    pub prompt_id: String,
}

impl Default for ViewOptions {
    fn default() -> Self {
        Self {
            resolution: 768,
            seg_inflation: 1.5,
            noise_px: 0.0,
            n_outliers: 0,
            outlier_lift: (0.8, 1.5),
            outlier_shift: 0.5,
            prompt_id: "p0".into(),
        }
    }
}

impl ViewOptions {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Options(m.into()));
        if self.resolution == 0 {
            return bad("resolution must be positive");
        }
        if !(self.seg_inflation >= 1.0 && self.seg_inflation.is_finite()) {
            return bad("seg_inflation must be >= 1");
        }
        if !(self.noise_px >= 0.0 && self.noise_px.is_finite()) {
            return bad("noise_px must be >= 0");
        }
        let (lo, hi) = self.outlier_lift;
        if !(0.0 <= lo && lo <= hi && hi.is_finite()) || !(self.outlier_shift >= 0.0) {
            return bad("outlier ranges must be ordered and non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct RenderedViews {
    /// The first view is meant as the reference.
    pub views: Vec<ViewObservation>,
    /// Depth placing each view's joints at the true body.
    pub truth_z: Vec<f64>,
    pub outliers: Vec<String>,
}

impl RenderedViews {
    pub fn is_outlier(&self, view_id: &str) -> bool {
        self.outliers.iter().any(|v| v == view_id)
    }
}

fn outlier_body(
    body: &ArticulatedBody,
    model: &BodyModel,
    opts: &ViewOptions,
    rng: &mut impl Rng,
) -> Result<ArticulatedBody, SynthError> {
    let pelvis = body.pelvis();
    let yaw = rng.random_range(60f64..=180.0).to_radians() * if rng.random::<bool>() { 1.0 } else { -1.0 };
    let (lo, hi) = opts.outlier_lift;
    let lift = if lo == hi { lo } else { rng.random_range(lo..=hi) } * if rng.random::<bool>() { 1.0 } else { -1.0 };
    let dir: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let r: f64 = if opts.outlier_shift > 0.0 { rng.random_range(0.0..=opts.outlier_shift) } else { 0.0 };
    let shift = Vec3::new(r * dir.cos(), r * dir.sin(), lift);
    let up = RigidTransform::from_axis_angle(&Vec3::z(), yaw);
    let joints: Vec<Vec3> =
        body.joints().iter().map(|j| pelvis + up.apply_vector(&(j - pelvis)) + shift).collect();
    Ok(model.pose(&joints)?)
}

/// Renders `sample` (body and object already in the world frame) through
/// every view of `rig`, centering `center` on each camera's offset.
pub fn render_views(
    sample: &HOISample,
    object_world: &TriMesh,
    rig: &CameraRig,
    model: &BodyModel,
    center: &Vec3,
    opts: &ViewOptions,
    seed: u64,
) -> Result<RenderedViews, SynthError> {
    opts.validate()?;
    let rig_views = rig.views();
    let n = rig_views.len();
    if opts.n_outliers >= n {
        return Err(SynthError::Options(format!("{} outliers leave no inlier among {n} views", opts.n_outliers)));
    }
    let mut rng = rng_for(seed, "views", 0);
    let mut order: Vec<usize> = (1..n).collect();
    order.shuffle(&mut rng);
    let outlier_idx: Vec<usize> = order.into_iter().take(opts.n_outliers).collect();
    let recenter = RigidTransform::from_translation(-center);
    let res = (opts.resolution, opts.resolution);
    let occluders = [object_world.clone()];

    let mut views = Vec::with_capacity(n);
    let mut truth_z = Vec::with_capacity(n);
    let mut outliers = Vec::new();
    for (k, rv) in rig_views.iter().enumerate() {
        let camera = rv.effective.composed_with(&recenter);
        let view_id = format!("view-{k:03}");
        let mut vrng = rng_for(seed, "view", k as u64);
        let body = if outlier_idx.contains(&k) {
            outliers.push(view_id.clone());
            outlier_body(&sample.body, model, opts, &mut vrng)?
        } else {
            sample.body.clone()
        };
        let f = camera.forward();
        let z = f.dot(&body.joints()[J::PELVIS]);
        let noise = Normal::new(0.0, opts.noise_px / camera.scale()).expect("finite sigma");
        let joints3d: Vec<Vec3> = body
            .joints()
            .iter()
            .map(|j| {
                let mut e = Vec3::new(noise.sample(&mut vrng), noise.sample(&mut vrng), noise.sample(&mut vrng));
                e -= f * f.dot(&e);
                j - f * z + e
            })
            .collect();
        let seg = body.to_mesh_inflated(opts.seg_inflation, 16, 4);
        let mask = rasterize_silhouette(&seg, &camera, res, &occluders);
        views.push(ViewObservation::new(view_id, opts.prompt_id.clone(), camera, joints3d, mask));
        truth_z.push(z);
    }
    Ok(RenderedViews { views, truth_z, outliers })
}
