//! Weak-perspective cameras: orthographic projection followed by a uniform
//! scale and a 2D pixel offset. Depth along the camera forward axis never
//! changes the projection.

mod rig;
mod triangulate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::transform::{check_rotation, mat3_from_row_major, mat3_to_row_major};
use crate::geom::{RigidTransform, TransformError};
use crate::{Mat3, Vec2, Vec3};

pub use rig::{
    build_dynamic_rig, build_static_rig, CameraRig, PerturbationRanges, RigKind, RigOptics, RigView, MAX_ELEVATION_DEG,
};
pub use triangulate::{triangulate_two_view, Triangulation};

#[derive(Debug, Error, PartialEq)]
pub enum CameraError {
    #[error("camera scale must be positive and finite, got {0}")]
    Scale(f64),
    #[error("camera rotation invalid: {0}")]
    Rotation(#[from] TransformError),
    #[error("camera forward directions are within {angle_deg:.3} degrees of parallel")]
    NearParallel { angle_deg: f64 },
    #[error("triangulation normal matrix is ill-conditioned (condition number {0:e})")]
    IllConditioned(f64),
    #[error("elevation {0} degrees is outside [0, 30]")]
    Elevation(f64),
    #[error("{0}")]
    Invalid(String),
}

/// `u = s · (R x)_{xy} + o`; the third row of `R` is the forward axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraRepr", into = "CameraRepr")]
pub struct WeakPerspectiveCamera {
    rotation: Mat3,
    scale: f64,
    offset: Vec2,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraRepr {
    rotation: [f64; 9],
    scale: f64,
    offset: [f64; 2],
}

impl TryFrom<CameraRepr> for WeakPerspectiveCamera {
    type Error = CameraError;
    fn try_from(r: CameraRepr) -> Result<Self, CameraError> {
        WeakPerspectiveCamera::new(mat3_from_row_major(&r.rotation), r.scale, Vec2::from(r.offset))
    }
}

impl From<WeakPerspectiveCamera> for CameraRepr {
    fn from(c: WeakPerspectiveCamera) -> Self {
        CameraRepr {
            rotation: mat3_to_row_major(&c.rotation),
            scale: c.scale,
            offset: [c.offset.x, c.offset.y],
        }
    }
}

impl WeakPerspectiveCamera {
    pub fn new(rotation: Mat3, scale: f64, offset: Vec2) -> Result<Self, CameraError> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(CameraError::Scale(scale));
        }
        check_rotation(&rotation)?;
        Ok(Self { rotation, scale, offset })
    }

    /// Camera looking along `forward` with world +z pointing up in the image
    /// (image y grows downward). `forward` must not be vertical.
    pub fn look_along(forward: &Vec3, scale: f64, offset: Vec2) -> Result<Self, CameraError> {
        let f = forward.normalize();
        let right = f.cross(&Vec3::z());
        if right.norm() < 1e-9 {
            return Err(CameraError::Invalid("forward direction is vertical".into()));
        }
        let right = right.normalize();
        let down = f.cross(&right);
        let rotation = Mat3::from_rows(&[right.transpose(), down.transpose(), f.transpose()]);
        Self::new(rotation, scale, offset)
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn offset(&self) -> &Vec2 {
        &self.offset
    }

    pub fn forward(&self) -> Vec3 {
        self.rotation.row(2).transpose()
    }

    pub fn project(&self, x: &Vec3) -> Vec2 {
        let c = self.rotation * x;
        Vec2::new(c.x, c.y) * self.scale + self.offset
    }

    /// Coordinate along the forward axis (larger is farther).
    pub fn depth(&self, x: &Vec3) -> f64 {
        self.rotation.row(2).transpose().dot(x)
    }

    /// World point projecting to `u` at depth zero along the forward axis.
    pub fn unproject(&self, u: &Vec2) -> Vec3 {
        let xy = (u - self.offset) / self.scale;
        self.rotation.transpose() * Vec3::new(xy.x, xy.y, 0.0)
    }

    /// Camera that sees `x` the way `self` sees `t(x)`.
    pub fn composed_with(&self, t: &RigidTransform) -> WeakPerspectiveCamera {
        let rotation = self.rotation * t.rotation();
        let shift = self.rotation * t.translation();
        WeakPerspectiveCamera {
            rotation,
            scale: self.scale,
            offset: self.offset + Vec2::new(shift.x, shift.y) * self.scale,
        }
    }
}

/// Projection of a point, `s · (R x)_{xy} + o`.
pub fn project(camera: &WeakPerspectiveCamera, x: &Vec3) -> Vec2 {
    camera.project(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ident(scale: f64, offset: Vec2) -> WeakPerspectiveCamera {
        WeakPerspectiveCamera::new(Mat3::identity(), scale, offset).unwrap()
    }

    #[test]
    fn projection_definition() {
        let x = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(project(&ident(1.0, Vec2::zeros()), &x), Vec2::new(1.0, 2.0));
        assert_eq!(project(&ident(2.0, Vec2::new(10.0, 0.0)), &x), Vec2::new(12.0, 4.0));
    }

    #[test]
    fn look_along_keeps_up_in_image() {
        let c = WeakPerspectiveCamera::look_along(&Vec3::new(-1.0, 0.0, -0.2), 100.0, Vec2::new(50.0, 50.0))
            .unwrap();
        assert!((c.rotation().determinant() - 1.0).abs() < 1e-12);
        let top = c.project(&Vec3::new(0.0, 0.0, 1.0));
        let bottom = c.project(&Vec3::zeros());
        assert!(top.y < bottom.y);
        assert!((c.forward() - Vec3::new(-1.0, 0.0, -0.2).normalize()).norm() < 1e-12);
    }

    #[test]
    fn depth_invariance() {
        let c = WeakPerspectiveCamera::look_along(&Vec3::new(0.3, -1.0, -0.4), 256.0, Vec2::new(3.0, 4.0))
            .unwrap();
        let x = Vec3::new(0.2, 0.7, -1.1);
        for d in [-5.0, -0.1, 0.0, 2.5, 100.0] {
            assert!((c.project(&(x + c.forward() * d)) - c.project(&x)).norm() < 1e-12);
        }
    }

    #[test]
    fn composed_camera_matches_transformed_point() {
        let c = WeakPerspectiveCamera::look_along(&Vec3::new(1.0, 1.0, -0.3), 80.0, Vec2::new(5.0, 6.0)).unwrap();
        let t = RigidTransform::from_euler(0.4, -0.1, 0.2, Vec3::new(0.3, -0.2, 0.1));
        let x = Vec3::new(0.5, -0.4, 0.9);
        assert!((c.composed_with(&t).project(&x) - c.project(&t.apply_point(&x))).norm() < 1e-12);
    }

    #[test]
    fn json_round_trip_and_validation() {
        let c = ident(3.0, Vec2::new(1.0, 2.0));
        let s = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<WeakPerspectiveCamera>(&s).unwrap(), c);
        let bad = r#"{"rotation":[1,0,0,0,1,0,0,0,1],"scale":0.0,"offset":[0,0]}"#;
        assert!(serde_json::from_str::<WeakPerspectiveCamera>(bad).is_err());
    }
}
