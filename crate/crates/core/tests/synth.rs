use afford_core::affordance::{aggregate_pointwise, AffordanceKind, Reduction, Side};
use afford_core::camera::{build_static_rig, CameraRig, RigOptics};
use afford_core::geom::TriMesh;
use afford_core::lifting::*;
use afford_core::primitives::{build_primitive_field, FieldConfig};
use afford_core::synth::*;
use afford_core::{Vec2, Vec3};

fn rig() -> CameraRig {
    let optics = RigOptics { elevation_deg: 15.0, scale: 300.0, offset: Vec2::new(384.0, 384.0), strict_elevation: true };
    build_static_rig(8, &optics).unwrap()
}

#[test]
fn seated_box_contact_beats_the_bottom_face() {
    let model = BodyModelSpec::smpl24(200, 200, 7).build().unwrap();
    let object = SceneObject::new(ScenarioName::SeatedBox, &model, 300).unwrap();
    let samples = make_samples(&object, 200, 0.02, 11, &model).unwrap();
    let cfg = FieldConfig { resolution: 32, n_b: 300, ..Default::default() };
    let (field, _) = build_primitive_field(&samples, &object.points, model.rest().surface(), &cfg).unwrap();
    let scene = make_scenario("seated-box", 0.0, 11, &model, 300).unwrap();
    let c = aggregate_pointwise(&field, AffordanceKind::Contact, Side::OverObject, Reduction::Max, 0.1).unwrap();
    let truth = c.mean_over(&scene.truth.object_contacts);
    let bottom = c.mean_over(&object.regions["bottom"]);
    assert!(!scene.truth.object_contacts.is_empty());
    assert!(truth >= 5.0 * bottom, "truth {truth:.4} vs bottom {bottom:.4}");
}

#[test]
fn noise_free_views_are_all_inliers_and_reproducible() {
    let model = BodyModelSpec::smpl24(200, 400, 7).build().unwrap();
    let scene = make_scenario("seated-box", 0.0, 2, &model, 200).unwrap();
    let obj = scene.object_in_world();
    let (lo, hi) = obj.bounds();
    let center = (lo + hi) / 2.0;
    let opts = ViewOptions { noise_px: 0.0, n_outliers: 0, ..Default::default() };
    let rv = render_views(&scene.sample(0), &obj, &rig(), &model, &center, &opts, 5).unwrap();
    assert_eq!(rv.views.len(), 8);
    assert!(rv.outliers.is_empty());
    let set = select_inliers(&rv.views[0], &rv.views[1..], &InlierParams::default());
    assert_eq!(set.len(), 7);
    // truth depth reproduces the placed body exactly
    let loss = reprojection_loss(rv.truth_z[0], &rv.views[0], &set, &rv.views).unwrap();
    assert!(loss < 1e-12, "{loss:e}");

    let again = render_views(&scene.sample(0), &obj, &rig(), &model, &center, &opts, 5).unwrap();
    assert_eq!(again.views, rv.views);
    let bad = ViewOptions { n_outliers: 8, ..opts };
    assert!(render_views(&scene.sample(0), &obj, &rig(), &model, &center, &bad, 5).is_err());
}

#[test]
fn enclosed_body_has_an_empty_mask() {
    let model = BodyModelSpec::smpl24(100, 100, 7).build().unwrap();
    let body = model.rest();
    let shell = TriMesh::cuboid(Vec3::new(-3.0, -3.0, -3.0), Vec3::new(3.0, 3.0, 4.0));
    for cam in rig().cameras() {
        assert!(body_silhouette(&body, Some(&shell), cam, (768, 768)).is_empty());
        assert!(!body_silhouette(&body, None, cam, (768, 768)).is_empty());
    }
}
