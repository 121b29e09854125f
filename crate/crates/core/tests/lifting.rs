use afford_core::camera::{build_static_rig, RigOptics, WeakPerspectiveCamera};
use afford_core::geom::{SurfacePointSet, TriMesh};
use afford_core::lifting::*;
use afford_core::{Vec2, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn cameras() -> Vec<WeakPerspectiveCamera> {
    let optics = RigOptics { elevation_deg: 15.0, scale: 300.0, offset: Vec2::new(384.0, 384.0), strict_elevation: true };
    build_static_rig(8, &optics).unwrap().cameras().to_vec()
}

fn model() -> BodyModel {
    BodyModelSpec::smpl24(300, 1000, 3).build().unwrap()
}

/// Views of `joints` from every rig camera; view `k` regresses the joints
/// shifted by `-z_k` along its own forward axis.
fn views_of(joints: &[Vec3], depths: &[f64], model: &BodyModel) -> Vec<ViewObservation> {
    let body = model.pose(joints).unwrap();
    cameras()
        .into_iter()
        .zip(depths)
        .enumerate()
        .map(|(k, (cam, z))| {
            let f = cam.forward();
            let j3: Vec<Vec3> = joints.iter().map(|j| j - f * *z).collect();
            let mask = body_silhouette(&body, None, &cam, (768, 768));
            ViewObservation::new(format!("v{k}"), "p", cam, j3, mask)
        })
        .collect()
}

fn two_bone_model(r: f64) -> BodyModel {
    let bone = |parent, child, twist| Bone { parent, child, radius: r, twist };
    let skeleton = Skeleton {
        joints: vec!["root".into(), "side".into(), "top".into()],
        bones: vec![bone(0, 1, TwistRef::Up), bone(0, 2, TwistRef::Lateral)],
        lateral: (1, 0),
        up: (0, 2),
    };
    let rest = vec![Vec3::zeros(), Vec3::new(0.4, 0.0, 0.0), Vec3::new(0.0, 0.0, 0.5)];
    BodyModel::new(skeleton, rest, 50, 200, 1).unwrap()
}

fn segment_distance_dense(q: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let n = 200_000;
    (0..=n).map(|i| (a + (b - a) * (i as f64 / n as f64) - q).norm()).fold(f64::INFINITY, f64::min)
}

#[test]
fn capsule_sdf_axis_exterior_and_brute_force() {
    let r = 0.05;
    let body = two_bone_model(r).rest();
    assert!((capsule_sdf(&body, &Vec3::new(0.0, 0.0, 0.25)) - r).abs() < 1e-15);
    assert!((capsule_sdf(&body, &Vec3::new(0.2, 0.0, 0.0)) - r).abs() < 1e-15);
    // 2r from both bones
    assert!((capsule_sdf(&body, &Vec3::new(0.1, 0.0, 0.1)) + r).abs() < 1e-15);

    let full = model().rest();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let q = Vec3::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), rng.random_range(-0.2..1.8));
        let brute = full
            .bones()
            .iter()
            .map(|b| b.radius - segment_distance_dense(&q, &full.joints()[b.parent], &full.joints()[b.child]))
            .fold(f64::NEG_INFINITY, f64::max);
        assert!((capsule_sdf(&full, &q) - brute).abs() < 1e-9, "{q:?}");
    }
}

fn points(p: Vec<Vec3>) -> SurfacePointSet {
    let n = vec![Vec3::z(); p.len()];
    SurfacePointSet::new(p, n, "test").unwrap()
}

#[test]
fn collision_loss_cases() {
    let r = 0.05;
    let kappa = 50.0;
    let body = two_bone_model(r).rest();
    let far = points(vec![Vec3::new(3.0, 0.0, 0.0), Vec3::new(0.0, 4.0, 0.0)]);
    assert_eq!(collision_loss(&body, &far, kappa), 0.0);

    let one_on_axis = points(vec![Vec3::new(0.0, 0.0, 0.25), Vec3::new(3.0, 0.0, 0.0), Vec3::new(0.0, 4.0, 0.0)]);
    let want = 1.0 / (1.0 + (-kappa * r).exp()) / 3.0;
    assert!((collision_loss(&body, &one_on_axis, kappa) - want).abs() < 1e-15);

    // points on the vertical bone's axis moved straight away from both bones
    let column: Vec<Vec3> = (0..20).map(|k| Vec3::new(0.0, 0.0, 0.1 + 0.3 * k as f64 / 19.0)).collect();
    for dir in [Vec3::y(), -Vec3::x(), Vec3::new(-1.0, 1.0, 0.0).normalize()] {
        let mut prev = f64::INFINITY;
        for step in 0..10 {
            let moved: Vec<Vec3> = column.iter().map(|p| p + dir * (step as f64 * 0.01)).collect();
            let l = collision_loss(&body, &points(moved), kappa);
            assert!(l < prev || l == 0.0, "direction {dir:?}, step {step}");
            prev = l;
        }
        assert_eq!(prev, 0.0);
    }
}

#[test]
fn select_inliers_cases() {
    let m = model();
    let joints = m.rest_joints().to_vec();
    let views = views_of(&joints, &[0.0; 8], &m);
    let params = InlierParams::default();
    let set = select_inliers(&views[0], &views[1..], &params);
    assert_eq!(set.len(), 7);
    assert!(set.per_joint_inliers.values().all(|j| j.len() == joints.len()));

    // three views with every 2D joint pushed 500 px off the epipolar lines
    let mut mixed = views[..6].to_vec();
    for v in &views[6..] {
        let mut bad = v.clone();
        for u in &mut bad.joints2d {
            u.y += 500.0;
        }
        mixed.push(bad);
    }
    let mut spoiled = mixed.clone();
    spoiled.swap(2, 7);
    let set = select_inliers(&mixed[0], &mixed[1..], &params);
    assert_eq!(set.members, vec!["v1", "v2", "v3", "v4", "v5"]);
    // candidate order does not matter
    assert_eq!(select_inliers(&spoiled[0], &spoiled[1..], &params), set);

    // a candidate seen by the reference camera itself cannot be triangulated
    let twin = ViewObservation::new("twin", "p", views[0].camera.clone(), views[0].joints3d.clone(), views[0].human_mask.clone());
    assert!(select_inliers(&views[0], &[twin], &params).is_empty());
}

#[test]
fn reprojection_quadratic_and_invariances() {
    let m = model();
    let joints = m.rest_joints().to_vec();
    let depths = [0.3, -0.2, 0.5, 0.1, -0.4, 0.0, 0.25, -0.1];
    let views = views_of(&joints, &depths, &m);
    let inl = select_inliers(&views[0], &views[1..], &InlierParams::default());
    assert_eq!(inl.len(), 7);
    assert!(reprojection_loss(depths[0], &views[0], &inl, &views).unwrap() < 1e-12);

    // noisy copy: the quadratic minimizer against a 1e-4 grid search
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let noisy: Vec<ViewObservation> = views
        .iter()
        .map(|v| {
            let f = v.camera.forward();
            let j3: Vec<Vec3> = v
                .joints3d
                .iter()
                .map(|j| {
                    let e = Vec3::new(rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02), rng.random_range(-0.02..0.02));
                    j + e - f * f.dot(&e)
                })
                .collect();
            ViewObservation::new(v.view_id.clone(), "p", v.camera.clone(), j3, v.human_mask.clone())
        })
        .collect();
    let inl = select_inliers(&noisy[0], &noisy[1..], &InlierParams::default());
    let quad = reprojection_quadratic(&noisy[0], &inl, &noisy).unwrap();
    let zq = quad.minimizer().unwrap();
    let (mut best, mut best_z) = (f64::INFINITY, 0.0);
    for i in 0..=20_000 {
        let z = -1.0 + i as f64 * 1e-4;
        let l = reprojection_loss(z, &noisy[0], &inl, &noisy).unwrap();
        if l < best {
            best = l;
            best_z = z;
        }
    }
    assert!((zq - best_z).abs() <= 1e-4, "{zq} vs {best_z}");
    for z in [-0.7, 0.0, 0.4] {
        let direct = reprojection_loss(z, &noisy[0], &inl, &noisy).unwrap();
        assert!((quad.eval(z) - direct).abs() < 1e-9 * (1.0 + direct));
    }

    // the same world offset on every view's joints
    let d = Vec3::new(0.3, -0.8, 0.2);
    let shifted: Vec<ViewObservation> = noisy
        .iter()
        .map(|v| {
            let j3 = v.joints3d.iter().map(|j| j + d).collect();
            ViewObservation::new(v.view_id.clone(), "p", v.camera.clone(), j3, v.human_mask.clone())
        })
        .collect();
    for z in [-0.3, 0.2] {
        let (a, b) = (
            reprojection_loss(z, &noisy[0], &inl, &noisy).unwrap(),
            reprojection_loss(z, &shifted[0], &inl, &shifted).unwrap(),
        );
        assert!((a - b).abs() < 1e-9 * (1.0 + a), "{a} vs {b}");
    }

    // gauge: slide the reference joints along its forward and compensate z
    let f = noisy[0].camera.forward();
    let mut gauged = noisy.clone();
    let c = 0.37;
    gauged[0] = ViewObservation::new(
        "v0",
        "p",
        noisy[0].camera.clone(),
        noisy[0].joints3d.iter().map(|j| j + f * c).collect(),
        noisy[0].human_mask.clone(),
    );
    for z in [-0.5, 0.1, 0.6] {
        let a = reprojection_loss(z, &noisy[0], &inl, &noisy).unwrap();
        let b = reprojection_loss(z - c, &gauged[0], &inl, &gauged).unwrap();
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn optimize_depth_cases() {
    let m = model();
    let joints = m.rest_joints().to_vec();
    let depths = [0.2, -0.3, 0.5, 0.1, -0.4, 0.0, 0.25, -0.1];
    let views = views_of(&joints, &depths, &m);
    let r = &views[0];
    let inl = select_inliers(r, &views[1..], &InlierParams::default());
    let body0 = m.pose(&r.joints3d).unwrap();
    let far = points(vec![Vec3::new(10.0, 10.0, 0.0)]);

    let free = DepthParams { lambda_collision: 0.0, ..Default::default() };
    let zq = reprojection_quadratic(r, &inl, &views).unwrap().minimizer().unwrap();
    assert!((zq - depths[0]).abs() < 1e-9);
    let sol = optimize_depth(-0.6, r, &inl, &views, &body0, &far, &free).unwrap();
    assert!((sol.z - zq).abs() < 1e-3, "{} vs {zq}", sol.z);
    assert!(sol.final_loss() <= sol.initial_loss());

    // already optimal with nothing to collide with
    let sol = optimize_depth(zq, r, &inl, &views, &body0, &far, &DepthParams::default()).unwrap();
    assert!((sol.z - zq).abs() < 1e-4);

    // a wall through the torso, normal to the reference forward
    let f = r.camera.forward();
    let centre = body0.pelvis() + f * zq + Vec3::new(0.0, 0.0, 0.3);
    let u = f.cross(&Vec3::z()).normalize();
    let wall: Vec<Vec3> = (0..900)
        .map(|k| centre + u * (-0.6 + 1.2 * ((k % 30) as f64 / 29.0)) + Vec3::z() * (-0.6 + 1.2 * ((k / 30) as f64 / 29.0)))
        .collect();
    let wall = SurfacePointSet::new(wall, vec![f; 900], "wall").unwrap();
    let params = DepthParams::default();
    let sol = optimize_depth(zq, r, &inl, &views, &body0, &wall, &params).unwrap();
    let col = |z: f64| collision_loss(&body0.translated(&(f * z)), &wall, params.kappa);
    assert!(col(zq) > 0.0);
    assert!(col(sol.z) < col(zq), "{} -> {}", col(zq), col(sol.z));
    assert!(sol.final_loss() <= sol.initial_loss());
}

#[test]
fn init_depth_ties_and_single_candidate() {
    let m = model();
    let body = m.rest();
    let cam = cameras()[1].clone();
    let mask = body_silhouette(&body, None, &cam, (768, 768));
    let init = init_depth(&body, None, &cam, &mask, 7, 0.3).unwrap();
    assert!(init.ious.iter().all(|&v| v == init.ious[0]));
    assert_eq!(init.chosen, 3);
    assert_eq!(init.z0, init.candidates[3]);

    let one = init_depth(&body, None, &cam, &mask, 1, 0.3).unwrap();
    assert_eq!((one.candidates.len(), one.z0), (1, one.candidates[0]));
    assert!(init_depth(&body, None, &cam, &mask, 0, 0.3).is_err());

    // a box in front of the lower body: the copy behind it is occluded
    let f = cam.forward();
    let wall = TriMesh::cuboid(Vec3::new(-0.3, -0.3, 0.0), Vec3::new(0.3, 0.3, 0.6)).translated(&(body.pelvis() - Vec3::new(0.0, 0.0, 0.9)));
    let truth = 0.6;
    let placed = body.translated(&(f * truth));
    let mask = body_silhouette(&placed, Some(&wall), &cam, (768, 768));
    let init = init_depth(&body, Some(&wall), &cam, &mask, 7, 0.3).unwrap();
    let spacing = init.candidates[1] - init.candidates[0];
    assert!((init.z0 - truth).abs() <= spacing, "{} vs {truth}", init.z0);
}

#[test]
fn lift_view_recovers_consistent_depth() {
    let m = model();
    let joints = m.rest_joints().to_vec();
    let depths = [0.2, -0.3, 0.5, 0.1, -0.4, 0.0, 0.25, -0.1];
    let views = views_of(&joints, &depths, &m);
    // a small box beside the true pelvis, clear of the body
    let f = views[0].camera.forward();
    let side = f.cross(&Vec3::z()).normalize();
    let c = m.rest().pelvis() + side * 0.8;
    let object = TriMesh::cuboid(Vec3::new(c.x - 0.1, c.y - 0.1, 0.0), Vec3::new(c.x + 0.1, c.y + 0.1, 0.3));
    let pts = points(object.vertices().to_vec());
    let out = lift_view(&views, 0, &m, &object, &pts, &LiftParams::default()).unwrap();
    assert!((out.z - depths[0]).abs() < 1e-3, "{} vs {}", out.z, depths[0]);
    assert_eq!(out.inliers.len(), 7);
    assert_eq!(out.penetration, 0.0);
    assert!(lift_view(&views, 8, &m, &object, &pts, &LiftParams::default()).is_err());
}

#[test]
fn observations_must_be_self_consistent() {
    let m = model();
    let v = &views_of(m.rest_joints(), &[0.0; 8], &m)[2];
    let ok = ViewObservation::from_parts(v.view_id.clone(), "p", v.camera.clone(), v.joints2d.clone(), v.joints3d.clone(), v.human_mask.clone());
    assert!(ok.unwrap() == *v);
    let mut off = v.joints2d.clone();
    off[4].y += 1e-3;
    assert!(ViewObservation::from_parts("a", "p", v.camera.clone(), off, v.joints3d.clone(), v.human_mask.clone()).is_err());
    let short = v.joints2d[1..].to_vec();
    assert!(ViewObservation::from_parts("a", "p", v.camera.clone(), short, v.joints3d.clone(), v.human_mask.clone()).is_err());
}
