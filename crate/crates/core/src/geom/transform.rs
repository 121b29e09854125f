use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{Mat3, Vec3};

const ORTHO_TOL: f64 = 1e-9;
const UNIT_TOL: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum TransformError {
    #[error("rotation is not orthonormal (max |RᵀR - I| = {0:e})")]
    NotOrthonormal(f64),
    #[error("rotation determinant is {0}, expected +1")]
    Reflection(f64),
    #[error("point/normal count mismatch: {points} points, {normals} normals")]
    LengthMismatch { points: usize, normals: usize },
    #[error("normal {index} has norm {norm}, expected 1")]
    NonUnitNormal { index: usize, norm: f64 },
}

/// Proper rigid motion `x ↦ R x + t`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RigidTransformRepr", into = "RigidTransformRepr")]
pub struct RigidTransform {
    rotation: Mat3,
    translation: Vec3,
}

/// JSON layout: `{rotation: [9 floats row-major], translation: [3]}`.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RigidTransformRepr {
    rotation: [f64; 9],
    translation: [f64; 3],
}

impl TryFrom<RigidTransformRepr> for RigidTransform {
    type Error = TransformError;
    fn try_from(r: RigidTransformRepr) -> Result<Self, Self::Error> {
        RigidTransform::new(mat3_from_row_major(&r.rotation), Vec3::from(r.translation))
    }
}

impl From<RigidTransform> for RigidTransformRepr {
    fn from(t: RigidTransform) -> Self {
        RigidTransformRepr {
            rotation: mat3_to_row_major(&t.rotation),
            translation: t.translation.into(),
        }
    }
}

pub(crate) fn mat3_from_row_major(v: &[f64; 9]) -> Mat3 {
    Mat3::from_row_slice(v)
}

pub(crate) fn mat3_to_row_major(m: &Mat3) -> [f64; 9] {
    let mut out = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            out[3 * r + c] = m[(r, c)];
        }
    }
    out
}

/// Checks `RᵀR = I` and `det R = +1` to 1e-9.
pub(crate) fn check_rotation(rotation: &Mat3) -> Result<(), TransformError> {
    let err = (rotation.transpose() * rotation - Mat3::identity()).abs().max();
    if err > ORTHO_TOL {
        return Err(TransformError::NotOrthonormal(err));
    }
    let det = rotation.determinant();
    if (det - 1.0).abs() > ORTHO_TOL {
        return Err(TransformError::Reflection(det));
    }
    Ok(())
}

impl RigidTransform {
    pub fn new(rotation: Mat3, translation: Vec3) -> Result<Self, TransformError> {
        check_rotation(&rotation)?;
        Ok(Self { rotation, translation })
    }

    pub fn identity() -> Self {
        Self { rotation: Mat3::identity(), translation: Vec3::zeros() }
    }

    pub fn from_translation(translation: Vec3) -> Self {
        Self { rotation: Mat3::identity(), translation }
    }

    /// Rotation of `angle` radians about `axis` (need not be normalised).
    pub fn from_axis_angle(axis: &Vec3, angle: f64) -> Self {
        let axis = nalgebra::Unit::new_normalize(*axis);
        let rotation = *nalgebra::Rotation3::from_axis_angle(&axis, angle).matrix();
        Self { rotation, translation: Vec3::zeros() }
    }

    /// Intrinsic yaw (z), pitch (y), roll (x), radians: `R = Rz(yaw) Ry(pitch) Rx(roll)`.
    pub fn from_euler(yaw: f64, pitch: f64, roll: f64, translation: Vec3) -> Self {
        let rotation = *nalgebra::Rotation3::from_euler_angles(roll, pitch, yaw).matrix();
        Self { rotation, translation }
    }

    pub fn rotation(&self) -> &Mat3 {
        &self.rotation
    }

    pub fn translation(&self) -> &Vec3 {
        &self.translation
    }

    pub fn apply_point(&self, x: &Vec3) -> Vec3 {
        self.rotation * x + self.translation
    }

    pub fn apply_vector(&self, v: &Vec3) -> Vec3 {
        self.rotation * v
    }

    /// `self ∘ other`: applies `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> RigidTransform {
        let rt = self.rotation.transpose();
        RigidTransform { rotation: rt, translation: -(rt * self.translation) }
    }
}

impl Default for RigidTransform {
    fn default() -> Self {
        Self::identity()
    }
}

/// Ordered surface points with unit normals. Index `i` always names the same
/// material point; transforms never reorder.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfacePointSet {
    points: Vec<Vec3>,
    normals: Vec<Vec3>,
    source: String,
}

impl SurfacePointSet {
    pub fn new(
        points: Vec<Vec3>,
        normals: Vec<Vec3>,
        source: impl Into<String>,
    ) -> Result<Self, TransformError> {
        if points.len() != normals.len() {
            return Err(TransformError::LengthMismatch {
                points: points.len(),
                normals: normals.len(),
            });
        }
        for (index, n) in normals.iter().enumerate() {
            let norm = n.norm();
            if !((norm - 1.0).abs() <= UNIT_TOL) {
                return Err(TransformError::NonUnitNormal { index, norm });
            }
        }
        Ok(Self { points, normals, source: source.into() })
    }

    pub fn empty(source: impl Into<String>) -> Self {
        Self { points: Vec::new(), normals: Vec::new(), source: source.into() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn normals(&self) -> &[Vec3] {
        &self.normals
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn point(&self, i: usize) -> (&Vec3, &Vec3) {
        (&self.points[i], &self.normals[i])
    }

    /// Keeps the listed indices, in the listed order.
    pub fn select(&self, indices: &[usize]) -> SurfacePointSet {
        SurfacePointSet {
            points: indices.iter().map(|&i| self.points[i]).collect(),
            normals: indices.iter().map(|&i| self.normals[i]).collect(),
            source: self.source.clone(),
        }
    }

    pub fn with_source(mut self, source: impl Into<String>) -> Self {
        self.source = source.into();
        self
    }
}

/// Maps points by `x ↦ Rx + t` and normals by `n ↦ Rn`, preserving order.
pub fn apply_rigid(points: &SurfacePointSet, t: &RigidTransform) -> SurfacePointSet {
    SurfacePointSet {
        points: points.points.iter().map(|p| t.apply_point(p)).collect(),
        normals: points.normals.iter().map(|n| t.apply_vector(n)).collect(),
        source: points.source.clone(),
    }
}
