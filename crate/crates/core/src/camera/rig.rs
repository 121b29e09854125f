use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CameraError, WeakPerspectiveCamera};
use crate::geom::RigidTransform;
use crate::{Vec2, Vec3};

/// Largest elevation the rig builders accept without a warning, in degrees.
pub const MAX_ELEVATION_DEG: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RigKind {
    Static,
    Dynamic,
}

/// Shared optics of every camera in a rig.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigOptics {
    pub elevation_deg: f64,
    /// Pixels per meter.
    pub scale: f64,
    /// Pixel position of the world origin.
    pub offset: Vec2,
    /// Reject elevations outside [0, 30] instead of warning.
    pub strict_elevation: bool,
}

/// Uniform ranges `(lo, hi)` for object perturbations: yaw, pitch, roll in
/// degrees and x, y, z translation in meters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationRanges {
    pub euler_deg: [(f64, f64); 3],
    pub translation: [(f64, f64); 3],
}

/// Cameras installed at equal azimuth intervals around the origin. Dynamic
/// rigs also carry one object perturbation per round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RigRepr", into = "RigRepr")]
pub struct CameraRig {
    kind: RigKind,
    cameras: Vec<WeakPerspectiveCamera>,
    perturbations: Vec<RigidTransform>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigRepr {
    kind: RigKind,
    cameras: Vec<WeakPerspectiveCamera>,
    #[serde(default)]
    perturbations: Vec<RigidTransform>,
}

impl TryFrom<RigRepr> for CameraRig {
    type Error = CameraError;
    fn try_from(r: RigRepr) -> Result<Self, CameraError> {
        CameraRig::new(r.kind, r.cameras, r.perturbations)
    }
}

impl From<CameraRig> for RigRepr {
    fn from(r: CameraRig) -> Self {
        RigRepr { kind: r.kind, cameras: r.cameras, perturbations: r.perturbations }
    }
}

/// One rendered view: camera `camera_index` during `round`, and the camera
/// expressed in the unperturbed object frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigView {
    pub camera_index: usize,
    pub round: usize,
    pub perturbation: RigidTransform,
    pub effective: WeakPerspectiveCamera,
}

impl CameraRig {
    pub fn new(
        kind: RigKind,
        cameras: Vec<WeakPerspectiveCamera>,
        perturbations: Vec<RigidTransform>,
    ) -> Result<Self, CameraError> {
        if cameras.is_empty() {
            return Err(CameraError::Invalid("rig has no cameras".into()));
        }
        match kind {
            RigKind::Static if !perturbations.is_empty() => {
                return Err(CameraError::Invalid("static rig cannot carry perturbations".into()))
            }
            RigKind::Dynamic if perturbations.is_empty() => {
                return Err(CameraError::Invalid("dynamic rig needs at least one round".into()))
            }
            _ => {}
        }
        Ok(Self { kind, cameras, perturbations })
    }

    pub fn kind(&self) -> RigKind {
        self.kind
    }

    pub fn cameras(&self) -> &[WeakPerspectiveCamera] {
        &self.cameras
    }

    pub fn perturbations(&self) -> &[RigidTransform] {
        &self.perturbations
    }

    pub fn view_count(&self) -> usize {
        self.cameras.len() * self.perturbations.len().max(1)
    }

    /// Views ordered round-major, camera-minor.
    pub fn views(&self) -> Vec<RigView> {
        let identity = [RigidTransform::identity()];
        let rounds: &[RigidTransform] =
            if self.perturbations.is_empty() { &identity } else { &self.perturbations };
        let mut out = Vec::with_capacity(self.view_count());
        for (round, p) in rounds.iter().enumerate() {
            for (camera_index, c) in self.cameras.iter().enumerate() {
                out.push(RigView { camera_index, round, perturbation: *p, effective: c.composed_with(p) });
            }
        }
        out
    }
}

fn ring_cameras(n: usize, optics: &RigOptics) -> Result<Vec<WeakPerspectiveCamera>, CameraError> {
    if n == 0 {
        return Err(CameraError::Invalid("rig needs at least one camera".into()));
    }
    let el = optics.elevation_deg;
    if !(0.0..=MAX_ELEVATION_DEG).contains(&el) {
        if optics.strict_elevation || !el.is_finite() || el.abs() >= 90.0 {
            return Err(CameraError::Elevation(el));
        }
        log::warn!("camera elevation {el} degrees is outside [0, {MAX_ELEVATION_DEG}]");
    }
    let el = el.to_radians();
    (0..n)
        .map(|k| {
            let az = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
            // camera sits on the (az, el) ray and looks back at the origin
            let eye = Vec3::new(el.cos() * az.cos(), el.cos() * az.sin(), el.sin());
            WeakPerspectiveCamera::look_along(&(-eye), optics.scale, optics.offset)
        })
        .collect()
}

/// `n` cameras at azimuths `360k/n` degrees, all at the same elevation.
pub fn build_static_rig(n_cameras: usize, optics: &RigOptics) -> Result<CameraRig, CameraError> {
    CameraRig::new(RigKind::Static, ring_cameras(n_cameras, optics)?, Vec::new())
}

/// `n` fixed cameras plus `rounds` object perturbations drawn uniformly per
/// component from `ranges`.
pub fn build_dynamic_rig(
    n_cameras: usize,
    rounds: usize,
    ranges: &PerturbationRanges,
    seed: u64,
    optics: &RigOptics,
) -> Result<CameraRig, CameraError> {
    for (lo, hi) in ranges.euler_deg.iter().chain(&ranges.translation) {
        if !(lo <= hi) {
            return Err(CameraError::Invalid(format!("range ({lo}, {hi}) has lo > hi")));
        }
    }
    if rounds == 0 {
        return Err(CameraError::Invalid("dynamic rig needs at least one round".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |(lo, hi): (f64, f64)| if lo == hi { lo } else { rng.random_range(lo..=hi) };
    let perturbations = (0..rounds)
        .map(|_| {
            let [yaw, pitch, roll] = ranges.euler_deg.map(|r| draw(r).to_radians());
            let t = Vec3::from(ranges.translation.map(&mut draw));
            RigidTransform::from_euler(yaw, pitch, roll, t)
        })
        .collect();
    CameraRig::new(RigKind::Dynamic, ring_cameras(n_cameras, optics)?, perturbations)
}
