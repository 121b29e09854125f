//! Articulated capsule body: a stand-in for a parametric human mesh that
//! keeps a fixed surface-point ordering across poses.
//!
//! Each surface point belongs to one bone and follows that bone rigidly. A
//! bone's frame is built from its direction and a reference direction taken
//! from the joints themselves (hip line or spine), so posing is equivariant
//! under any global rigid motion of the joints.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{eliminate_samples, RigidTransform, SurfacePointSet, TriMesh};
use crate::{Mat3, Vec3};

#[derive(Debug, Error, PartialEq)]
pub enum BodyError {
    #[error("expected {expected} joints, got {got}")]
    JointCount { expected: usize, got: usize },
    #[error("skeleton invalid: {0}")]
    Skeleton(String),
    #[error("bone {0} has a degenerate frame")]
    DegenerateBone(usize),
}

/// Which joint-derived direction fixes the twist of a bone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TwistRef {
    /// Left hip minus right hip.
    Lateral,
    /// First spine joint minus pelvis.
    Up,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bone {
    pub parent: usize,
    pub child: usize,
    pub radius: f64,
    pub twist: TwistRef,
}

/// Joint names and capsule bones. Joint 0 is the pelvis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Skeleton {
    pub joints: Vec<String>,
    pub bones: Vec<Bone>,
    /// Joints whose difference defines the lateral axis (left, right).
    pub lateral: (usize, usize),
    /// Joints whose difference defines the up axis (from, to).
    pub up: (usize, usize),
}

pub mod joint {
    pub const PELVIS: usize = 0;
    pub const L_HIP: usize = 1;
    pub const R_HIP: usize = 2;
    pub const SPINE1: usize = 3;
    pub const L_KNEE: usize = 4;
    pub const R_KNEE: usize = 5;
    pub const SPINE2: usize = 6;
    pub const L_ANKLE: usize = 7;
    pub const R_ANKLE: usize = 8;
    pub const SPINE3: usize = 9;
    pub const L_FOOT: usize = 10;
    pub const R_FOOT: usize = 11;
    pub const NECK: usize = 12;
    pub const L_COLLAR: usize = 13;
    pub const R_COLLAR: usize = 14;
    pub const HEAD: usize = 15;
    pub const L_SHOULDER: usize = 16;
    pub const R_SHOULDER: usize = 17;
    pub const L_ELBOW: usize = 18;
    pub const R_ELBOW: usize = 19;
    pub const L_WRIST: usize = 20;
    pub const R_WRIST: usize = 21;
    pub const L_HAND: usize = 22;
    pub const R_HAND: usize = 23;
}

impl Skeleton {
    /// 24-joint tree in the common SMPL body ordering.
    pub fn smpl24() -> Skeleton {
        let names = [
            "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee", "spine2", "left_ankle",
            "right_ankle", "spine3", "left_foot", "right_foot", "neck", "left_collar", "right_collar", "head",
            "left_shoulder", "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist",
            "left_hand", "right_hand",
        ];
        let parents = [0usize, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21];
        let radius = |c: usize| match c {
            1 | 2 => 0.075,
            3 => 0.11,
            4 | 5 => 0.075,
            6 => 0.12,
            7 | 8 => 0.055,
            9 => 0.12,
            10 | 11 => 0.04,
            12 => 0.055,
            13 | 14 => 0.06,
            15 => 0.1,
            16 | 17 => 0.05,
            18 | 19 => 0.045,
            20 | 21 => 0.04,
            _ => 0.035,
        };
        let twist = |c: usize| match c {
            1 | 2 | 13 | 14 | 16 | 17 => TwistRef::Up,
            _ => TwistRef::Lateral,
        };
        Skeleton {
            joints: names.iter().map(|s| s.to_string()).collect(),
            bones: (1..24).map(|c| Bone { parent: parents[c], child: c, radius: radius(c), twist: twist(c) }).collect(),
            lateral: (joint::L_HIP, joint::R_HIP),
            up: (joint::PELVIS, joint::SPINE1),
        }
    }

    /// Standing rest pose facing +x with +y to the body's left; feet on z = 0.
    pub fn smpl24_rest() -> Vec<Vec3> {
        let v = Vec3::new;
        vec![
            v(0.0, 0.0, 0.95),
            v(0.0, 0.09, 0.88),
            v(0.0, -0.09, 0.88),
            v(0.0, 0.0, 1.05),
            v(0.0, 0.09, 0.50),
            v(0.0, -0.09, 0.50),
            v(0.0, 0.0, 1.18),
            v(0.0, 0.09, 0.09),
            v(0.0, -0.09, 0.09),
            v(0.0, 0.0, 1.30),
            v(0.13, 0.09, 0.045),
            v(0.13, -0.09, 0.045),
            v(0.0, 0.0, 1.48),
            v(0.0, 0.07, 1.42),
            v(0.0, -0.07, 1.42),
            v(0.0, 0.0, 1.62),
            v(0.0, 0.18, 1.42),
            v(0.0, -0.18, 1.42),
            v(0.0, 0.22, 1.16),
            v(0.0, -0.22, 1.16),
            v(0.0, 0.25, 0.92),
            v(0.0, -0.25, 0.92),
            v(0.0, 0.26, 0.84),
            v(0.0, -0.26, 0.84),
        ]
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn validate(&self) -> Result<(), BodyError> {
        let n = self.joints.len();
        if n < 3 || self.bones.is_empty() {
            return Err(BodyError::Skeleton("need at least 3 joints and one bone".into()));
        }
        for b in &self.bones {
            if b.parent >= n || b.child >= n || !(b.radius > 0.0) {
                return Err(BodyError::Skeleton(format!("bad bone {} -> {}", b.parent, b.child)));
            }
        }
        for &j in [self.lateral.0, self.lateral.1, self.up.0, self.up.1].iter() {
            if j >= n {
                return Err(BodyError::Skeleton(format!("reference joint {j} out of range")));
            }
        }
        Ok(())
    }

    /// Indices of `j` and all joints below it.
    pub fn subtree(&self, j: usize) -> Vec<usize> {
        let mut out = vec![j];
        let mut k = 0;
        while k < out.len() {
            let p = out[k];
            out.extend(self.bones.iter().filter(|b| b.parent == p && b.child != p).map(|b| b.child));
            k += 1;
        }
        out
    }
}

fn segment_distance(q: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    (q - closest_on_segment(q, a, b)).norm()
}

fn closest_on_segment(q: &Vec3, a: &Vec3, b: &Vec3) -> Vec3 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((q - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    a + ab * t
}

/// Bone frame: columns are the bone direction, the twist reference made
/// orthogonal to it, and their cross product.
fn bone_frame(skel: &Skeleton, joints: &[Vec3], bone: usize) -> Result<Mat3, BodyError> {
    let b = &skel.bones[bone];
    let dir = joints[b.child] - joints[b.parent];
    let reference = match b.twist {
        TwistRef::Lateral => joints[skel.lateral.0] - joints[skel.lateral.1],
        TwistRef::Up => joints[skel.up.1] - joints[skel.up.0],
    };
    let len = dir.norm();
    if len < 1e-9 {
        return Err(BodyError::DegenerateBone(bone));
    }
    let x = dir / len;
    let y = reference - x * reference.dot(&x);
    if y.norm() < 1e-6 * reference.norm().max(1e-12) || y.norm() < 1e-12 {
        return Err(BodyError::DegenerateBone(bone));
    }
    let y = y.normalize();
    Ok(Mat3::from_columns(&[x, y, x.cross(&y)]))
}

/// Rigid transform of every bone taking `rest` joints to `posed` joints.
fn bone_transforms(skel: &Skeleton, rest: &[Vec3], posed: &[Vec3]) -> Result<Vec<RigidTransform>, BodyError> {
    (0..skel.bones.len())
        .map(|b| {
            let r = bone_frame(skel, posed, b)? * bone_frame(skel, rest, b)?.transpose();
            let p = skel.bones[b].parent;
            let t = posed[p] - r * rest[p];
            RigidTransform::new(r, t).map_err(|_| BodyError::DegenerateBone(b))
        })
        .collect()
}

/// A skeleton, its rest pose, and surface / interior samples attached to
/// bones.
#[derive(Debug, Clone, PartialEq)]
pub struct BodyModel {
    skeleton: Skeleton,
    rest_joints: Vec<Vec3>,
    surface: SurfacePointSet,
    surface_bone: Vec<usize>,
    interior: Vec<Vec3>,
    interior_bone: Vec<usize>,
    height: f64,
}

/// Parameters that regenerate a [`BodyModel`] exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BodyModelSpec {
    pub skeleton: Skeleton,
    pub rest_joints: Vec<[f64; 3]>,
    pub surface_points: usize,
    pub interior_points: usize,
    pub seed: u64,
}

impl BodyModelSpec {
    pub fn smpl24(surface_points: usize, interior_points: usize, seed: u64) -> Self {
        Self {
            skeleton: Skeleton::smpl24(),
            rest_joints: Skeleton::smpl24_rest().iter().map(|v| [v.x, v.y, v.z]).collect(),
            surface_points,
            interior_points,
            seed,
        }
    }

    pub fn build(&self) -> Result<BodyModel, BodyError> {
        BodyModel::new(
            self.skeleton.clone(),
            self.rest_joints.iter().map(|&v| Vec3::from(v)).collect(),
            self.surface_points,
            self.interior_points,
            self.seed,
        )
    }
}

fn capsule_sdf_raw(bones: &[Bone], joints: &[Vec3], q: &Vec3) -> f64 {
    bones
        .iter()
        .map(|b| b.radius - segment_distance(q, &joints[b.parent], &joints[b.child]))
        .fold(f64::NEG_INFINITY, f64::max)
}

impl BodyModel {
    pub fn new(
        skeleton: Skeleton,
        rest_joints: Vec<Vec3>,
        surface_points: usize,
        interior_points: usize,
        seed: u64,
    ) -> Result<Self, BodyError> {
        skeleton.validate()?;
        if rest_joints.len() != skeleton.joint_count() {
            return Err(BodyError::JointCount { expected: skeleton.joint_count(), got: rest_joints.len() });
        }
        if surface_points == 0 {
            return Err(BodyError::Skeleton("surface point count must be positive".into()));
        }
        for b in 0..skeleton.bones.len() {
            bone_frame(&skeleton, &rest_joints, b)?;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let bones = &skeleton.bones;
        let seg = |b: &Bone| (rest_joints[b.parent], rest_joints[b.child]);
        let areas: Vec<f64> = bones
            .iter()
            .map(|b| {
                let (a, c) = seg(b);
                2.0 * std::f64::consts::PI * b.radius * (c - a).norm() + 4.0 * std::f64::consts::PI * b.radius.powi(2)
            })
            .collect();
        let total_area: f64 = areas.iter().sum();

        // stratified oversample of every capsule, minus points buried in
        // other capsules
        let oversample = 6 * surface_points;
        let (mut cand, mut cand_n, mut cand_bone) = (Vec::new(), Vec::new(), Vec::new());
        for (bi, b) in bones.iter().enumerate() {
            let (a, c) = seg(b);
            let count = ((areas[bi] / total_area) * oversample as f64).ceil() as usize;
            let axis = c - a;
            let len = axis.norm();
            let w = axis / len;
            let (u, v) = crate::geom::mesh::orthonormal_pair(&w);
            let cyl = 2.0 * std::f64::consts::PI * b.radius * len;
            for _ in 0..count {
                let pick: f64 = rng.random::<f64>() * areas[bi];
                let phi: f64 = rng.random::<f64>() * std::f64::consts::TAU;
                let radial = u * phi.cos() + v * phi.sin();
                let (centre, n) = if pick < cyl {
                    (a + axis * rng.random::<f64>(), radial)
                } else {
                    // uniform on a hemisphere: height uniform in [0, 1]
                    let h: f64 = rng.random();
                    let s = (1.0 - h * h).sqrt();
                    if pick < cyl + 2.0 * std::f64::consts::PI * b.radius.powi(2) {
                        (a, (radial * s - w * h).normalize())
                    } else {
                        (c, (radial * s + w * h).normalize())
                    }
                };
                let p = centre + n * b.radius;
                let buried = bones.iter().enumerate().any(|(bj, o)| {
                    bj != bi && o.radius - segment_distance(&p, &rest_joints[o.parent], &rest_joints[o.child]) > 1e-9
                });
                if !buried {
                    cand.push(p);
                    cand_n.push(n);
                    cand_bone.push(bi);
                }
            }
        }
        let generated: usize = bones
            .iter()
            .enumerate()
            .map(|(bi, _)| ((areas[bi] / total_area) * oversample as f64).ceil() as usize)
            .sum();
        let union_area = total_area * cand.len() as f64 / generated as f64;
        let keep = eliminate_samples(&cand, surface_points, union_area);
        let surface = SurfacePointSet::new(
            keep.iter().map(|&i| cand[i]).collect(),
            keep.iter().map(|&i| cand_n[i]).collect(),
            "capsule-body",
        )
        .map_err(|e| BodyError::Skeleton(e.to_string()))?;
        let surface_bone = keep.iter().map(|&i| cand_bone[i]).collect();

        // uniform volume samples: a draw in capsule b counts only if no
        // lower-index capsule contains it, so overlaps are not double counted
        let vols: Vec<f64> = bones
            .iter()
            .map(|b| {
                let (a, c) = seg(b);
                std::f64::consts::PI * b.radius.powi(2) * ((c - a).norm() + 4.0 / 3.0 * b.radius)
            })
            .collect();
        let vol_total: f64 = vols.iter().sum();
        let (mut interior, mut interior_bone) = (Vec::new(), Vec::new());
        while interior.len() < interior_points {
            let mut pick = rng.random::<f64>() * vol_total;
            let mut bi = 0;
            while bi + 1 < bones.len() && pick >= vols[bi] {
                pick -= vols[bi];
                bi += 1;
            }
            let b = &bones[bi];
            let (a, c) = seg(b);
            let lo = a.inf(&c) - Vec3::repeat(b.radius);
            let hi = a.sup(&c) + Vec3::repeat(b.radius);
            let q = Vec3::new(
                rng.random_range(lo.x..hi.x),
                rng.random_range(lo.y..hi.y),
                rng.random_range(lo.z..hi.z),
            );
            if segment_distance(&q, &a, &c) > b.radius {
                continue;
            }
            let owned_earlier = bones[..bi]
                .iter()
                .any(|o| segment_distance(&q, &rest_joints[o.parent], &rest_joints[o.child]) <= o.radius);
            if owned_earlier {
                continue;
            }
            interior.push(q);
            interior_bone.push(bi);
        }
        let zs = surface.points().iter().map(|p| p.z);
        let height = zs.clone().fold(f64::NEG_INFINITY, f64::max) - zs.fold(f64::INFINITY, f64::min);
        Ok(Self { skeleton, rest_joints, surface, surface_bone, interior, interior_bone, height })
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.skeleton
    }

    pub fn rest_joints(&self) -> &[Vec3] {
        &self.rest_joints
    }

    pub fn surface_point_count(&self) -> usize {
        self.surface.len()
    }

    /// Bone owning each surface point.
    pub fn surface_bones(&self) -> &[usize] {
        &self.surface_bone
    }

    /// Vertical extent of the rest surface, meters.
    pub fn height(&self) -> f64 {
        self.height
    }

    pub fn rest(&self) -> ArticulatedBody {
        self.pose(&self.rest_joints).expect("rest pose is valid")
    }

    /// Body whose joints are `joints`; surface points follow their bones.
    pub fn pose(&self, joints: &[Vec3]) -> Result<ArticulatedBody, BodyError> {
        if joints.len() != self.skeleton.joint_count() {
            return Err(BodyError::JointCount { expected: self.skeleton.joint_count(), got: joints.len() });
        }
        let transforms = bone_transforms(&self.skeleton, &self.rest_joints, joints)?;
        let mut points = Vec::with_capacity(self.surface.len());
        let mut normals = Vec::with_capacity(self.surface.len());
        for (k, &b) in self.surface_bone.iter().enumerate() {
            let (p, n) = self.surface.point(k);
            points.push(transforms[b].apply_point(p));
            normals.push(transforms[b].apply_vector(n));
        }
        Ok(ArticulatedBody {
            joints: joints.to_vec(),
            bones: self.skeleton.bones.clone(),
            surface: SurfacePointSet::new(points, normals, "capsule-body").expect("rigid images of unit normals"),
            bone_transforms: transforms,
        })
    }

    /// Interior volume samples of a posed body (at least the configured
    /// count, uniform over the rest-pose capsule union).
    pub fn interior_points(&self, body: &ArticulatedBody) -> Vec<Vec3> {
        self.interior
            .iter()
            .zip(&self.interior_bone)
            .map(|(q, &b)| body.bone_transforms[b].apply_point(q))
            .collect()
    }
}

/// Posed capsule body.
#[derive(Debug, Clone, PartialEq)]
pub struct ArticulatedBody {
    joints: Vec<Vec3>,
    bones: Vec<Bone>,
    surface: SurfacePointSet,
    bone_transforms: Vec<RigidTransform>,
}

impl ArticulatedBody {
    pub fn joints(&self) -> &[Vec3] {
        &self.joints
    }

    pub fn bones(&self) -> &[Bone] {
        &self.bones
    }

    pub fn capsule_radii(&self) -> Vec<f64> {
        self.bones.iter().map(|b| b.radius).collect()
    }

    pub fn surface(&self) -> &SurfacePointSet {
        &self.surface
    }

    pub fn pelvis(&self) -> Vec3 {
        self.joints[joint::PELVIS]
    }

    pub fn transformed(&self, t: &RigidTransform) -> ArticulatedBody {
        ArticulatedBody {
            joints: self.joints.iter().map(|j| t.apply_point(j)).collect(),
            bones: self.bones.clone(),
            surface: crate::geom::apply_rigid(&self.surface, t),
            bone_transforms: self.bone_transforms.iter().map(|b| t.compose(b)).collect(),
        }
    }

    pub fn translated(&self, offset: &Vec3) -> ArticulatedBody {
        self.transformed(&RigidTransform::from_translation(*offset))
    }

    /// `max_b (r_b − dist(q, bone_b))`: positive inside the capsule union.
    pub fn sdf(&self, q: &Vec3) -> f64 {
        capsule_sdf_raw(&self.bones, &self.joints, q)
    }

    /// Extent of the surface points along `dir` (max − min).
    pub fn extent_along(&self, dir: &Vec3) -> f64 {
        let d = dir.normalize();
        let (lo, hi) = self
            .surface
            .points()
            .iter()
            .map(|p| p.dot(&d))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), x| (lo.min(x), hi.max(x)));
        hi - lo
    }

    /// Union of capsule meshes, for rasterization.
    pub fn to_mesh(&self, segments: usize, rings: usize) -> TriMesh {
        self.to_mesh_inflated(1.0, segments, rings)
    }

    /// Capsule meshes with every radius scaled by `factor`.
    pub fn to_mesh_inflated(&self, factor: f64, segments: usize, rings: usize) -> TriMesh {
        let parts: Vec<TriMesh> = self
            .bones
            .iter()
            .map(|b| TriMesh::capsule(&self.joints[b.parent], &self.joints[b.child], b.radius * factor, segments, rings))
            .collect();
        TriMesh::concat(&parts).expect("capsules are valid meshes")
    }
}

/// Signed distance to the capsule union, positive inside.
pub fn capsule_sdf(body: &ArticulatedBody, q: &Vec3) -> f64 {
    body.sdf(q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> BodyModel {
        BodyModelSpec::smpl24(300, 2000, 1).build().unwrap()
    }

    #[test]
    fn surface_points_lie_on_the_union_boundary() {
        let m = model();
        let body = m.rest();
        assert_eq!(body.surface().len(), 300);
        for p in body.surface().points() {
            assert!(body.sdf(p).abs() < 1e-9);
        }
        assert!(m.height() > 1.6 && m.height() < 1.8);
    }

    #[test]
    fn sdf_values() {
        let body = model().rest();
        let b = &body.bones()[0];
        let mid = (body.joints()[b.parent] + body.joints()[b.child]) / 2.0;
        // the pelvis-hip capsule may overlap others, so compare with the max
        assert!(body.sdf(&mid) >= b.radius - 1e-12);
        let far = Vec3::new(5.0, 5.0, 5.0);
        assert!(body.sdf(&far) < -4.0);
    }

    #[test]
    fn posing_is_equivariant() {
        let m = model();
        let rest = m.rest();
        let t = RigidTransform::from_euler(1.1, 0.2, -0.3, Vec3::new(0.4, -2.0, 0.7));
        let moved: Vec<Vec3> = m.rest_joints().iter().map(|j| t.apply_point(j)).collect();
        let posed = m.pose(&moved).unwrap();
        let expected = rest.transformed(&t);
        for (a, b) in posed.surface().points().iter().zip(expected.surface().points()) {
            assert!((a - b).norm() < 1e-12);
        }
        for (a, b) in posed.surface().normals().iter().zip(expected.surface().normals()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn limb_rotation_moves_only_the_limb() {
        let m = model();
        let mut joints = m.rest_joints().to_vec();
        let hip = joints[joint::L_HIP];
        let r = RigidTransform::from_axis_angle(&Vec3::y(), -std::f64::consts::FRAC_PI_2);
        for j in m.skeleton().subtree(joint::L_KNEE) {
            joints[j] = hip + r.apply_vector(&(joints[j] - hip));
        }
        let posed = m.pose(&joints).unwrap();
        let rest = m.rest();
        for (k, &b) in m.surface_bones().iter().enumerate() {
            let child = m.skeleton().bones[b].child;
            let moved = (posed.surface().points()[k] - rest.surface().points()[k]).norm() > 1e-9;
            let in_leg = [joint::L_KNEE, joint::L_ANKLE, joint::L_FOOT].contains(&child);
            assert_eq!(moved, in_leg, "point {k} on bone {b}");
        }
    }

    #[test]
    fn interior_points_are_inside() {
        let m = model();
        let body = m.rest();
        let pts = m.interior_points(&body);
        assert_eq!(pts.len(), 2000);
        assert!(pts.iter().all(|q| body.sdf(q) >= -1e-12));
    }
}
