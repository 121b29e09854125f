use afford_core::geom::{RigidTransform, SurfacePointSet};
use afford_core::lifting::BodyModelSpec;
use afford_core::primitives::*;
use afford_core::synth::*;
use afford_core::Vec3;

fn one_point(p: Vec3, n: Vec3) -> SurfacePointSet {
    SurfacePointSet::new(vec![p], vec![n], "one").unwrap()
}

#[test]
fn minimal_field_has_unit_mass() {
    let model = BodyModelSpec::smpl24(1, 10, 1).build().unwrap();
    let sample = HOISample {
        object_pose: RigidTransform::identity(),
        body: model.rest(),
        provenance: Provenance::Scenario { name: "minimal".into(), seed: 0, index: 0 },
    };
    assert_eq!(sample.body.surface().len(), 1);
    let obj = one_point(Vec3::new(0.0, 0.0, 0.45), Vec3::z());
    for storage in [StorageMode::Mixture, StorageMode::Dense] {
        let cfg = FieldConfig { resolution: 8, n_b: 20, storage, ..Default::default() };
        let (field, stats) = build_primitive_field(&[sample.clone()], &obj, sample.body.surface(), &cfg).unwrap();
        assert_eq!((stats.samples_used, field.len()), (1, 1));
        assert!((field.get(0, 0).unwrap().total_mass() - 1.0).abs() < 1e-12);
        // a mismatched surface count is skipped, and nothing usable is an error
        let two = one_point(Vec3::zeros(), Vec3::z());
        let two = SurfacePointSet::new([two.points(), two.points()].concat(), vec![Vec3::z(); 2], "two").unwrap();
        assert!(build_primitive_field(&[sample.clone()], &obj, &two, &cfg).is_err());
        assert!(build_primitive_field(&[], &obj, sample.body.surface(), &cfg).is_err());
    }
}

#[test]
fn palm_on_table_mass_sits_at_the_contact() {
    let model = BodyModelSpec::smpl24(2000, 200, 7).build().unwrap();
    // dense enough that some tabletop points fall under the palm
    let scene = make_scenario("palm-on-table", 0.0, 3, &model, 3000).unwrap();
    let (i, _) = *scene.truth.contact_pairs.first().expect("palm touches the table");
    let (v, n_o) = scene.object_points.point(i as usize);
    assert!(n_o.z > 0.99, "contact should be on the tabletop, normal {n_o:?}");
    // the nearest palm-underside point: within 5 cm, normal facing the table
    let local = afford_core::geom::apply_rigid(scene.body.surface(), &scene.object_pose.inverse());
    let j = (0..local.len())
        .filter(|&j| local.point(j).1.z < -0.9 && (local.point(j).0 - v).norm() < 0.05)
        .min_by(|&a, &b| (local.point(a).0 - v).norm().total_cmp(&(local.point(b).0 - v).norm()))
        .expect("palm underside point") as u32;

    let object = SceneObject::new(ScenarioName::PalmOnTable, &model, 3000).unwrap();
    let samples = make_samples(&object, 30, 0.02, 5, &model).unwrap();
    let cfg = FieldConfig { half_extent: 0.5, resolution: 20, n_b: 200, ..Default::default() };
    let obj = object.points.select(&[i as usize]);
    let (field, _) = build_primitive_field(&samples, &obj, model.rest().surface(), &cfg).unwrap();
    let d = field.get(0, j).unwrap();
    let grid = d.grid().clone();
    let nb = grid.sphere.len();
    let (mut near, mut down, mut both) = (0.0, 0.0, 0.0);
    let mut peak = (0.0, 0);
    for (c, w) in d.to_dense().into_iter().enumerate() {
        let p = grid.voxels.center(c / nb);
        let n = grid.sphere.directions()[c % nb];
        let is_near = p.norm() <= 0.1;
        let is_down = n.z <= -(30f64.to_radians().cos());
        near += if is_near { w } else { 0.0 };
        down += if is_down { w } else { 0.0 };
        both += if is_near && is_down { w } else { 0.0 };
        if w > peak.0 {
            peak = (w, c);
        }
    }
    let (pp, pn) = (grid.voxels.center(peak.1 / nb), grid.sphere.directions()[peak.1 % nb]);
    assert!(pp.norm() <= 0.05 && pn.z < -0.9, "peak at {pp:?}, {pn:?}");
    assert!(near > 0.5 && down > 0.5 && both > 0.4, "near {near:.3} down {down:.3} both {both:.3}");
}

#[test]
fn global_rigid_motion_leaves_the_field_unchanged() {
    let model = BodyModelSpec::smpl24(60, 100, 2).build().unwrap();
    let object = SceneObject::new(ScenarioName::SeatedBox, &model, 40).unwrap();
    let samples = make_samples(&object, 4, 0.02, 9, &model).unwrap();
    let g = RigidTransform::from_euler(1.1, -0.4, 0.7, Vec3::new(3.0, -2.0, 0.5));
    let moved: Vec<HOISample> = samples
        .iter()
        .map(|s| HOISample { object_pose: g.compose(&s.object_pose), body: s.body.transformed(&g), provenance: s.provenance.clone() })
        .collect();
    for direction in [Direction::ObjectToHuman, Direction::HumanToObject] {
        for storage in [StorageMode::Mixture, StorageMode::Dense] {
            let cfg = FieldConfig { resolution: 8, n_b: 40, direction, storage, ..Default::default() };
            let human = model.rest().surface().clone();
            let (a, _) = build_primitive_field(&samples, &object.points, &human, &cfg).unwrap();
            let (b, _) = build_primitive_field(&moved, &object.points, &human, &cfg).unwrap();
            assert_eq!(a.len(), b.len());
            let mut worst = 0.0f64;
            for (k, da) in a.distributions() {
                let (x, y) = (da.to_dense(), b.distributions()[k].to_dense());
                worst = x.iter().zip(&y).map(|(u, v)| (u - v).abs()).fold(worst, f64::max);
            }
            assert!(worst < 1e-9, "{direction:?} {storage:?}: {worst:e}");
        }
    }
}

#[test]
fn archive_round_trips_both_storage_modes() {
    let model = BodyModelSpec::smpl24(30, 100, 4).build().unwrap();
    let object = SceneObject::new(ScenarioName::HandOnHandle, &model, 20).unwrap();
    let samples = make_samples(&object, 3, 0.02, 1, &model).unwrap();
    for storage in [StorageMode::Mixture, StorageMode::Dense] {
        let cfg = FieldConfig { resolution: 6, n_b: 30, storage, ..Default::default() };
        let (field, _) = build_primitive_field(&samples, &object.points, model.rest().surface(), &cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_field(&field, dir.path()).unwrap();
        let back = load_field(dir.path()).unwrap();
        assert_eq!(back, field, "{storage:?}");
        assert!(back.is_normalized());
    }
    let dir = tempfile::tempdir().unwrap();
    assert!(load_field(dir.path()).is_err());
    std::fs::write(dir.path().join(HEADER_FILE), "{}").unwrap();
    assert!(load_field(dir.path()).is_err());
}
