//! Constructed interaction scenes with analytically known contacts.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::poses::{place_arm, seated, straddle, translate};
use super::{HOISample, Provenance, SynthError};
use crate::geom::{poisson_disk_sample, sample_surface, RigidTransform, SurfacePointSet, TriMesh};
use crate::lifting::{joint as J, ArticulatedBody, BodyModel};
use crate::seed::{derive_seed, rng_for};
use crate::Vec3;

/// Distance under which two surfaces count as touching, meters.
pub const CONTACT_DISTANCE: f64 = 0.01;
/// Largest angle between a normal and the negated partner normal.
pub const CONTACT_ANGLE_DEG: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ScenarioName {
    SeatedBox,
    PalmOnTable,
    RiderStraddle,
    HandOnHandle,
    /// Round stool; the body's azimuth about the stool axis is uniform.
    SeatedStool,
}

impl ScenarioName {
    pub const ALL: [ScenarioName; 5] = [
        ScenarioName::SeatedBox,
        ScenarioName::PalmOnTable,
        ScenarioName::RiderStraddle,
        ScenarioName::HandOnHandle,
        ScenarioName::SeatedStool,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioName::SeatedBox => "seated-box",
            ScenarioName::PalmOnTable => "palm-on-table",
            ScenarioName::RiderStraddle => "rider-straddle",
            ScenarioName::HandOnHandle => "hand-on-handle",
            ScenarioName::SeatedStool => "seated-stool",
        }
    }
}

impl fmt::Display for ScenarioName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioName {
    type Err = SynthError;
    fn from_str(s: &str) -> Result<Self, SynthError> {
        ScenarioName::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| SynthError::UnknownScenario(s.to_string()))
    }
}

/// Ground truth of a scene, indexed into its object and body point sets.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Truth {
    /// Object points within [`CONTACT_DISTANCE`] of the body with opposing normals.
    pub object_contacts: Vec<usize>,
    /// Body points within [`CONTACT_DISTANCE`] of the object with opposing normals.
    pub human_contacts: Vec<usize>,
    /// Each object contact paired with its nearest body point.
    pub contact_pairs: Vec<(u32, u32)>,
    pub object_regions: BTreeMap<String, Vec<usize>>,
    pub human_regions: BTreeMap<String, Vec<usize>>,
    /// Mean object-frame position of a body region.
    pub occupancy_offsets: BTreeMap<String, Vec3>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: ScenarioName,
    pub seed: u64,
    pub jitter: f64,
    /// Object in its canonical frame.
    pub object: TriMesh,
    pub object_points: SurfacePointSet,
    pub object_pose: RigidTransform,
    /// Body in the world frame.
    pub body: ArticulatedBody,
    pub truth: Truth,
}

impl Scenario {
    pub fn sample(&self, index: usize) -> HOISample {
        HOISample {
            object_pose: self.object_pose,
            body: self.body.clone(),
            provenance: Provenance::Scenario { name: self.name.to_string(), seed: self.seed, index },
        }
    }

    pub fn object_in_world(&self) -> TriMesh {
        self.object.transformed(&self.object_pose)
    }
}

/// Geometry shared by every sample of a scene.
#[derive(Debug, Clone)]
pub struct SceneObject {
    pub name: ScenarioName,
    pub mesh: TriMesh,
    pub points: SurfacePointSet,
    pub regions: BTreeMap<String, Vec<usize>>,
    layout: Layout,
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    seat_top: f64,
}

const SEAT_TOP: f64 = 0.45;
const HIP_X: f64 = -0.06;
const BEAM_TOP: f64 = 0.75;
const BEAM_HALF_WIDTH: f64 = 0.05;
const STRADDLE_DEG: f64 = 40.0;
const REACH: f64 = 0.46;

fn arm_chain(model: &BodyModel) -> f64 {
    let r = model.rest_joints();
    (r[J::R_ELBOW] - r[J::R_SHOULDER]).norm() + (r[J::R_WRIST] - r[J::R_ELBOW]).norm()
}

fn reach_dir(drop_deg: f64) -> Vec3 {
    let a = drop_deg.to_radians();
    Vec3::new(a.cos(), 0.0, -a.sin())
}

fn bone_radius(model: &BodyModel, child: usize) -> f64 {
    model.skeleton().bones.iter().find(|b| b.child == child).map(|b| b.radius).unwrap_or(0.04)
}

/// Seated joints with the hips `radius` above `seat_top`, hip line at `HIP_X`.
fn seated_joints(model: &BodyModel, seat_top: f64) -> Vec<Vec3> {
    let mut j = seated(model.rest_joints(), model.skeleton());
    let thigh = bone_radius(model, J::L_KNEE);
    let target = Vec3::new(HIP_X, j[J::L_HIP].y, seat_top + thigh);
    let by = target - j[J::L_HIP];
    translate(&mut j, &by);
    j
}

fn palm_joints(model: &BodyModel) -> (Vec<Vec3>, Vec3) {
    let mut j = model.rest_joints().to_vec();
    // stand so the torso front is 3 cm behind the table edge at x = 0
    let torso = bone_radius(model, J::SPINE2);
    let by = Vec3::new(-torso - 0.03 - j[J::PELVIS].x, 0.0, 0.0);
    translate(&mut j, &by);
    let wrist = j[J::R_SHOULDER] + reach_dir(60.0) * REACH.min(0.95 * arm_chain(model));
    assert!(place_arm(&mut j, true, &wrist, &Vec3::x(), &Vec3::new(-0.3, -1.0, 0.0)));
    (j, wrist)
}

fn handle_joints(model: &BodyModel) -> (Vec<Vec3>, [Vec3; 2]) {
    let mut j = seated_joints(model, SEAT_TOP);
    let mut wrists = [Vec3::zeros(); 2];
    for (k, right) in [false, true].into_iter().enumerate() {
        let s = if right { J::R_SHOULDER } else { J::L_SHOULDER };
        let out = if right { -1.0 } else { 1.0 };
        let w = j[s] + reach_dir(30.0) * REACH.min(0.95 * arm_chain(model));
        assert!(place_arm(&mut j, right, &w, &Vec3::x(), &Vec3::new(0.0, out, -0.5)));
        wrists[k] = w;
    }
    (j, wrists)
}

fn straddle_joints(model: &BodyModel) -> Vec<Vec3> {
    let mut j = straddle(model.rest_joints(), model.skeleton(), STRADDLE_DEG.to_radians());
    let by = Vec3::new(-j[J::PELVIS].x, -j[J::PELVIS].y, 0.0);
    translate(&mut j, &by);
    j
}

fn box_mesh(min: Vec3, max: Vec3) -> TriMesh {
    TriMesh::cuboid(min, max).faceted()
}

fn object_seed(name: ScenarioName, count: usize) -> u64 {
    derive_seed(0x0b1e_c7, name.as_str(), count as u64)
}

impl SceneObject {
    pub fn new(name: ScenarioName, model: &BodyModel, n_points: usize) -> Result<Self, SynthError> {
        let mut bar = None;
        let mesh = match name {
            ScenarioName::SeatedBox => box_mesh(Vec3::new(-0.25, -0.25, 0.0), Vec3::new(0.25, 0.25, SEAT_TOP)),
            ScenarioName::SeatedStool => TriMesh::cylinder(0.2, 0.0, SEAT_TOP, 48),
            ScenarioName::RiderStraddle => box_mesh(
                Vec3::new(-0.6, -BEAM_HALF_WIDTH, 0.0),
                Vec3::new(0.6, BEAM_HALF_WIDTH, BEAM_TOP),
            ),
            ScenarioName::PalmOnTable => {
                let (_, wrist) = palm_joints(model);
                let top = wrist.z - bone_radius(model, J::R_WRIST);
                let mut parts = vec![box_mesh(Vec3::new(0.0, -0.5, top - 0.04), Vec3::new(0.8, 0.5, top))];
                for (x, y) in [(0.0, -0.5), (0.75, -0.5), (0.0, 0.45), (0.75, 0.45)] {
                    parts.push(box_mesh(Vec3::new(x, y, 0.0), Vec3::new(x + 0.05, y + 0.05, top - 0.04)));
                }
                TriMesh::concat(&parts)?
            }
            ScenarioName::HandOnHandle => {
                let (j, wrists) = handle_joints(model);
                let hand_len = (j[J::R_HAND] - j[J::R_WRIST]).norm();
                let r_bar = 0.02;
                let x = wrists[1].x + hand_len / 2.0;
                let z = wrists[1].z - bone_radius(model, J::R_HAND) - r_bar - 0.003;
                let (a, b) = (Vec3::new(x, -0.35, z), Vec3::new(x, 0.35, z));
                bar = Some((a, b, r_bar));
                let seat = box_mesh(Vec3::new(-0.2, -0.2, 0.0), Vec3::new(0.2, 0.2, SEAT_TOP));
                TriMesh::concat(&[seat, TriMesh::capsule(&a, &b, r_bar, 24, 4)])?
            }
        };
        let points = poisson_disk_sample(&mesh, n_points, object_seed(name, n_points))?.with_source(name.as_str());
        let mut regions = BTreeMap::new();
        let (lo, hi) = mesh.bounds();
        let select = |pred: &dyn Fn(&Vec3, &Vec3) -> bool| -> Vec<usize> {
            (0..points.len()).filter(|&i| pred(&points.points()[i], &points.normals()[i])).collect()
        };
        regions.insert("top".to_string(), select(&|p, n| (p.z - hi.z).abs() < 1e-6 && n.z > 0.99));
        regions.insert("bottom".to_string(), select(&|p, n| (p.z - lo.z).abs() < 1e-6 && n.z < -0.99));
        if let Some((a, b, r)) = bar {
            let on_bar = move |p: &Vec3| segment_distance(p, &a, &b) < r + 1e-6;
            regions.insert("handle".to_string(), select(&|p, _| on_bar(p)));
            regions.insert("seat".to_string(), select(&|p, _| !on_bar(p)));
        }
        if name == ScenarioName::HandOnHandle {
            // the bar is higher than the seat, so "top" means the seat top
            regions.insert("top".to_string(), select(&|p, n| (p.z - SEAT_TOP).abs() < 1e-6 && n.z > 0.99));
        }
        Ok(Self { name, mesh, points, regions, layout: Layout { seat_top: SEAT_TOP } })
    }

    /// Body in the object frame, before jitter.
    fn base_joints(&self, model: &BodyModel, rng: &mut ChaCha8Rng) -> Result<Vec<Vec3>, SynthError> {
        Ok(match self.name {
            ScenarioName::SeatedBox => seated_joints(model, self.layout.seat_top),
            ScenarioName::SeatedStool => {
                let mut j = seated_joints(model, self.layout.seat_top);
                let az: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                let r = RigidTransform::from_axis_angle(&Vec3::z(), az);
                for p in j.iter_mut() {
                    *p = r.apply_point(p);
                }
                j
            }
            ScenarioName::PalmOnTable => palm_joints(model).0,
            ScenarioName::HandOnHandle => handle_joints(model).0,
            ScenarioName::RiderStraddle => {
                let j = straddle_joints(model);
                settle(model, j, &self.mesh)?
            }
        })
    }

    /// A body placed in the object frame with `jitter` applied: yaw within
    /// `±jitter / 0.5` rad about the pelvis and horizontal shift within
    /// `±jitter` m.
    pub fn place_body(&self, model: &BodyModel, jitter: f64, seed: u64) -> Result<ArticulatedBody, SynthError> {
        if !(jitter >= 0.0 && jitter.is_finite()) {
            return Err(SynthError::Jitter(jitter));
        }
        let mut rng = rng_for(seed, "body", 0);
        let mut j = self.base_joints(model, &mut rng)?;
        if jitter > 0.0 {
            let yaw: f64 = rng.random_range(-1.0..=1.0) * jitter / 0.5;
            let dx: f64 = rng.random_range(-jitter..=jitter);
            let dy: f64 = rng.random_range(-jitter..=jitter);
            let pelvis = j[J::PELVIS];
            let r = RigidTransform::from_axis_angle(&Vec3::z(), yaw);
            for p in j.iter_mut() {
                *p = pelvis + r.apply_vector(&(*p - pelvis)) + Vec3::new(dx, dy, 0.0);
            }
        }
        Ok(model.pose(&j)?)
    }
}

/// Lowers a body onto `object` until first contact (bisection on the
/// vertical offset against a dense surface sample).
fn settle(model: &BodyModel, joints: Vec<Vec3>, object: &TriMesh) -> Result<Vec<Vec3>, SynthError> {
    let dense = sample_surface(object, 6000, 17)?;
    let body = model.pose(&joints)?;
    let penetrates = |dz: f64| {
        let shift = Vec3::new(0.0, 0.0, dz);
        dense.points.points().iter().any(|p| body.sdf(&(p - shift)) > 0.0)
    };
    // find a free start, then bisect between free (hi) and blocked (lo)
    let mut hi = 0.0;
    while penetrates(hi) {
        hi += 0.1;
    }
    let mut lo = hi - 1.0;
    while !penetrates(lo) {
        lo -= 1.0;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if penetrates(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut j = joints;
    translate(&mut j, &Vec3::new(0.0, 0.0, hi));
    Ok(j)
}

fn segment_distance(q: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let ab = b - a;
    let t = ((q - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
    (q - (a + ab * t)).norm()
}

/// Outward normal of the body surface nearest to `q` (from the bone with the
/// largest signed distance).
fn body_normal_at(body: &ArticulatedBody, q: &Vec3) -> Vec3 {
    let joints = body.joints();
    let mut best = (f64::NEG_INFINITY, Vec3::z());
    for b in body.bones() {
        let (a, c) = (joints[b.parent], joints[b.child]);
        let ab = c - a;
        let t = ((q - a).dot(&ab) / ab.norm_squared()).clamp(0.0, 1.0);
        let foot = a + ab * t;
        let d = (q - foot).norm();
        if b.radius - d > best.0 {
            best = (b.radius - d, if d > 1e-12 { (q - foot) / d } else { Vec3::z() });
        }
    }
    best.1
}

/// Region name → surface indices on the body, from bone ownership.
pub fn body_regions(model: &BodyModel) -> BTreeMap<String, Vec<usize>> {
    let bones = &model.skeleton().bones;
    let rest = model.rest();
    let owned = |children: &[usize]| -> Vec<usize> {
        model
            .surface_bones()
            .iter()
            .enumerate()
            .filter(|(_, &b)| children.contains(&bones[b].child))
            .map(|(k, _)| k)
            .collect()
    };
    let mut out = BTreeMap::new();
    out.insert("hands".to_string(), owned(&[J::L_HAND, J::R_HAND]));
    out.insert("right-hand".to_string(), owned(&[J::R_HAND]));
    out.insert("pelvis".to_string(), owned(&[J::L_HIP, J::R_HIP, J::SPINE1]));
    out.insert("feet".to_string(), owned(&[J::L_FOOT, J::R_FOOT]));
    out.insert(
        "front-torso".to_string(),
        owned(&[J::SPINE1, J::SPINE2, J::SPINE3])
            .into_iter()
            .filter(|&k| rest.surface().normals()[k].x > 0.7)
            .collect(),
    );
    out
}

fn compute_truth(object: &SceneObject, body: &ArticulatedBody, model: &BodyModel) -> Truth {
    let cos = CONTACT_ANGLE_DEG.to_radians().cos();
    let pts = &object.points;
    let mut object_contacts = Vec::new();
    let mut contact_pairs = Vec::new();
    for i in 0..pts.len() {
        let (p, n) = pts.point(i);
        let gap = -body.sdf(p);
        if gap <= CONTACT_DISTANCE && gap >= -1e-6 && n.dot(&body_normal_at(body, p)) <= -cos {
            object_contacts.push(i);
            let j = body
                .surface()
                .points()
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - p).norm().total_cmp(&(b.1 - p).norm()))
                .map(|(j, _)| j)
                .expect("body has points");
            contact_pairs.push((i as u32, j as u32));
        }
    }
    let human_contacts = (0..body.surface().len())
        .filter(|&j| {
            let (x, n) = body.surface().point(j);
            let (_, f, d) = object.mesh.closest_point(x);
            d <= CONTACT_DISTANCE && object.mesh.face_normal(f).dot(n) <= -cos
        })
        .collect();
    let human_regions = body_regions(model);
    let mut occupancy_offsets = BTreeMap::new();
    for (name, idx) in &human_regions {
        if !idx.is_empty() {
            let mean = idx.iter().map(|&k| body.surface().points()[k]).sum::<Vec3>() / idx.len() as f64;
            occupancy_offsets.insert(name.clone(), mean);
        }
    }
    Truth {
        object_contacts,
        human_contacts,
        contact_pairs,
        object_regions: object.regions.clone(),
        human_regions,
        occupancy_offsets,
    }
}

/// Builds a named scene. The object and its surface sample depend only on
/// the name and `n_object_points`; the body placement depends on `seed`.
pub fn make_scenario(
    name: &str,
    jitter: f64,
    seed: u64,
    model: &BodyModel,
    n_object_points: usize,
) -> Result<Scenario, SynthError> {
    let name: ScenarioName = name.parse()?;
    let object = SceneObject::new(name, model, n_object_points)?;
    scenario_from_object(&object, jitter, seed, model)
}

pub fn scenario_from_object(
    object: &SceneObject,
    jitter: f64,
    seed: u64,
    model: &BodyModel,
) -> Result<Scenario, SynthError> {
    let body = object.place_body(model, jitter, seed)?;
    let truth = compute_truth(object, &body, model);
    Ok(Scenario {
        name: object.name,
        seed,
        jitter,
        object: object.mesh.clone(),
        object_points: object.points.clone(),
        object_pose: RigidTransform::identity(),
        body,
        truth,
    })
}

/// `count` samples of one scene, each with its own body jitter and a random
/// global pose (yaw and horizontal shift) applied to object and body alike.
pub fn make_samples(
    object: &SceneObject,
    count: usize,
    jitter: f64,
    seed: u64,
    model: &BodyModel,
) -> Result<Vec<HOISample>, SynthError> {
    (0..count)
        .map(|k| {
            let body = object.place_body(model, jitter, derive_seed(seed, "sample", k as u64))?;
            let mut rng = rng_for(seed, "global-pose", k as u64);
            let yaw: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let t = Vec3::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0), 0.0);
            let pose = RigidTransform::from_euler(yaw, 0.0, 0.0, t);
            Ok(HOISample {
                object_pose: pose,
                body: body.transformed(&pose),
                provenance: Provenance::Scenario { name: object.name.to_string(), seed, index: k },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lifting::{penetration_ratio, BodyModelSpec};

    fn model() -> BodyModel {
        BodyModelSpec::smpl24(400, 2000, 7).build().unwrap()
    }

    #[test]
    fn every_scene_has_contacts_and_no_deep_overlap() {
        let m = model();
        for name in ScenarioName::ALL {
            let s = make_scenario(name.as_str(), 0.0, 1, &m, 1000).unwrap();
            let pen = penetration_ratio(&m.interior_points(&s.body), &s.object);
            eprintln!(
                "{name}: {} object / {} human contacts, penetration {pen:.4}",
                s.truth.object_contacts.len(),
                s.truth.human_contacts.len()
            );
            assert!(pen < 0.005, "{name}: {pen}");
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let m = model();
        let a = make_scenario("seated-stool", 0.05, 3, &m, 200).unwrap();
        let b = make_scenario("seated-stool", 0.05, 3, &m, 200).unwrap();
        assert_eq!(a.body, b.body);
        assert_eq!(a.truth, b.truth);
        let c = make_scenario("seated-stool", 0.05, 4, &m, 200).unwrap();
        assert_ne!(a.body, c.body);
    }

    #[test]
    fn unknown_name_and_bad_jitter() {
        let m = model();
        assert!(matches!(make_scenario("sofa", 0.0, 0, &m, 100), Err(SynthError::UnknownScenario(_))));
        assert!(matches!(make_scenario("seated-box", -1.0, 0, &m, 100), Err(SynthError::Jitter(_))));
    }

    #[test]
    fn samples_share_object_pose_with_body() {
        let m = model();
        let obj = SceneObject::new(ScenarioName::SeatedBox, &m, 200).unwrap();
        let samples = make_samples(&obj, 3, 0.0, 9, &m).unwrap();
        let base = obj.place_body(&m, 0.0, 0).unwrap();
        for s in &samples {
            let back = s.body.transformed(&s.object_pose.inverse());
            for (a, b) in back.joints().iter().zip(base.joints()) {
                assert!((a - b).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn rider_beam_lies_between_the_legs() {
        let m = model();
        let s = make_scenario("rider-straddle", 0.0, 0, &m, 300).unwrap();
        let hip = s.body.joints()[J::L_HIP];
        let z = hip.z - 0.1;
        assert!(z < BEAM_TOP && z > 0.0);
        // a ray along y through the beam crosses right leg, beam, left leg
        let inside = |y: f64| s.body.sdf(&Vec3::new(hip.x, y, z)) > 0.0;
        let ys: Vec<f64> = (-400..=400).map(|k| k as f64 * 1e-3).collect();
        let left = ys.iter().filter(|&&y| inside(y)).filter(|&&y| y > BEAM_HALF_WIDTH).count();
        let right = ys.iter().filter(|&&y| inside(y)).filter(|&&y| y < -BEAM_HALF_WIDTH).count();
        let between = ys.iter().filter(|&&y| y.abs() <= BEAM_HALF_WIDTH).all(|&y| !inside(y));
        assert!(left > 0 && right > 0 && between, "{left} {right} {between}");
    }
}
