use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use afford_core::affordance::{aggregate_pointwise, AffordanceKind, Side};
use afford_core::config::PipelineConfig;
use afford_core::io::{read_dataset, VIEWS_FILE};
use afford_core::pipeline::*;
use afford_core::primitives::{build_primitive_field, load_field, save_field, PrimitiveField};
use afford_core::synth::{body_regions, make_scenario};
use afford_core::Vec3;

fn small() -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.body.surface_points = 80;
    c.body.interior_points = 400;
    c.synth.samples = 6;
    c.synth.view_samples = 1;
    c.synth.object_points = 80;
    c.field.resolution = 12;
    c.field.n_b = 60;
    c
}

fn files(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().display().to_string(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_writes_requested_samples_and_is_reproducible() {
    let mut cfg = small();
    cfg.synth.samples = 5;
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let r = cmd_synth(&cfg, a.path()).unwrap();
    cmd_synth(&cfg, b.path()).unwrap();
    assert_eq!(r.samples, 5);
    assert_eq!(read_dataset(a.path()).unwrap().samples.len(), 5);
    let (fa, fb) = (files(a.path()), files(b.path()));
    assert!(fa.len() > 10);
    assert_eq!(fa, fb);

    cfg.seed += 1;
    let c = tempfile::tempdir().unwrap();
    cmd_synth(&cfg, c.path()).unwrap();
    assert_ne!(files(c.path()), fa);
}

#[test]
fn unknown_scenario_is_a_usage_error() {
    let mut cfg = small();
    cfg.synth.scenario = "hammock".into();
    let err = cmd_synth(&cfg, tempfile::tempdir().unwrap().path()).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn consistent_views_are_all_kept() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(&cfg, &dir.path().join("ds")).unwrap();
    let r = cmd_lift(&dir.path().join("ds"), &cfg, &dir.path().join("lifted")).unwrap();
    assert_eq!((r.views, r.kept), (8, 8));
    let lifted = read_dataset(&dir.path().join("lifted")).unwrap();
    assert_eq!(lifted.samples.len(), 8);
    let log = fs::read_to_string(dir.path().join("lifted").join(VERDICTS_FILE)).unwrap();
    assert_eq!(log.lines().count(), 8);
    assert!(log.lines().all(|l| l.contains("\"verdict\":\"keep\"")));
}

#[test]
fn pure_outlier_views_are_rejected_for_inliers() {
    let mut cfg = small();
    cfg.seed = 2;
    // every view but the first is re-posed independently and displaced far
    // enough that no view gathers enough agreeing partners
    cfg.views.n_outliers = 7;
    cfg.views.outlier_lift = (1.0, 3.0);
    cfg.views.outlier_shift = 1.5;
    let dir = tempfile::tempdir().unwrap();
    cmd_synth(&cfg, &dir.path().join("ds")).unwrap();

    let r = cmd_lift(&dir.path().join("ds"), &cfg, &dir.path().join("lifted")).unwrap();
    assert_eq!(r.kept, 0);
    let log = fs::read_to_string(dir.path().join("lifted").join(VERDICTS_FILE)).unwrap();
    assert_eq!(log.lines().count(), 8);
    for l in log.lines() {
        let v: serde_json::Value = serde_json::from_str(l).unwrap();
        assert_eq!(v["verdict"], "reject");
        assert_eq!(v["reason"], "inliers", "{l}");
    }
}

#[test]
fn missing_camera_names_the_record() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    cmd_synth(&cfg, &ds).unwrap();
    let views = ds.join("views/sample_00000").join(VIEWS_FILE);
    let text = fs::read_to_string(&views).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut rec: serde_json::Value = serde_json::from_str(&lines[2]).unwrap();
    rec.as_object_mut().unwrap().remove("camera");
    lines[2] = rec.to_string();
    fs::write(&views, lines.join("\n") + "\n").unwrap();
    let err = cmd_lift(&ds, &cfg, &dir.path().join("lifted")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let msg = err.to_string();
    assert!(msg.contains("line 3") && msg.contains("camera"), "{msg}");
}

#[test]
fn unreadable_dataset_is_exit_two() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let err = cmd_lift(&dir.path().join("nothing"), &cfg, &dir.path().join("out")).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let err = cmd_aggregate(&dir.path().join("nothing"), &cfg, &dir.path().join("out"), None, false).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn aggregation_round_trips_and_merges() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    cmd_synth(&cfg, &ds).unwrap();

    // one sample: archive equals the in-memory field
    let one = dir.path().join("one");
    let r = cmd_aggregate(&ds, &cfg, &one, Some("0..1".parse().unwrap()), false).unwrap();
    assert!(r.audit < 1e-9);
    let data = read_dataset(&ds).unwrap();
    let (direct, _) =
        build_primitive_field(&data.samples[..1], &data.object_points, data.model.rest().surface(), &cfg.field).unwrap();
    assert_eq!(load_field(&one).unwrap(), direct);

    // halves merged against the full aggregation
    let full = dir.path().join("full");
    cmd_aggregate(&ds, &cfg, &full, None, false).unwrap();
    let (h1, h2) = (dir.path().join("h1"), dir.path().join("h2"));
    cmd_aggregate(&ds, &cfg, &h1, Some("0..3".parse().unwrap()), false).unwrap();
    cmd_aggregate(&ds, &cfg, &h2, Some("3..6".parse().unwrap()), false).unwrap();
    let merged = dir.path().join("merged");
    let m = cmd_merge(&h1, &h2, &merged).unwrap();
    assert!(m.audit < 1e-9);
    let (fm, ff) = (load_field(&merged).unwrap(), load_field(&full).unwrap());
    assert_eq!(fm.len(), ff.len());
    for (k, d) in ff.distributions() {
        let (a, b) = (d.to_dense(), fm.get(k.0, k.1).unwrap().to_dense());
        assert!(a.iter().zip(&b).all(|(x, y)| (x - y).abs() < 1e-12), "pair {k:?}");
    }

    // the --merge path gives the same result
    cmd_aggregate(&ds, &cfg, &h1, Some("3..6".parse().unwrap()), true).unwrap();
    assert_eq!(load_field(&h1).unwrap(), fm);

    // different grids do not merge
    let mut coarse = cfg.clone();
    coarse.field.resolution = 10;
    let err = cmd_aggregate(&ds, &coarse, &full, None, true).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn sample_ranges_parse() {
    assert!("2..5".parse::<SampleRange>().is_ok());
    for bad in ["5..2", "3", "a..b", "4..4"] {
        assert_eq!(bad.parse::<SampleRange>().unwrap_err().exit_code(), 2, "{bad}");
    }
}

fn ply_vertex_count(path: &Path) -> usize {
    let text = String::from_utf8_lossy(&fs::read(path).unwrap()).into_owned();
    let line = text.lines().find(|l| l.starts_with("element vertex")).unwrap();
    line.split_whitespace().last().unwrap().parse().unwrap()
}

#[test]
fn derive_exports() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let (ds, field) = (dir.path().join("ds"), dir.path().join("field"));
    cmd_synth(&cfg, &ds).unwrap();
    cmd_aggregate(&ds, &cfg, &field, None, false).unwrap();
    let args = |kind, side, selection| DeriveArgs {
        kind,
        field: Some(field.clone()),
        dataset: Some(ds.clone()),
        side,
        selection,
        out: dir.path().join("out").join("x"),
    };

    let r = cmd_derive(&args(DeriveKind::Contact, Side::OverObject, Selection::All), &cfg).unwrap();
    assert_eq!(r.values, 80);
    assert_eq!(ply_vertex_count(&dir.path().join("out/x.ply")), 80);

    cmd_derive(&args(DeriveKind::Orientation, Side::OverHuman, Selection::All), &cfg).unwrap();
    let csv = fs::read_to_string(dir.path().join("out/x.csv")).unwrap();
    let values: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 80);
    assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));

    let sel = dir.path().join("hands.txt");
    fs::write(&sel, "# right hand\n3, 4\n5\n").unwrap();
    let r = cmd_derive(&args(DeriveKind::Contact, Side::OverObject, Selection::File(sel.clone())), &cfg).unwrap();
    assert_eq!(r.values, 80);

    fs::write(&sel, "# nothing selected\n").unwrap();
    let err = cmd_derive(&args(DeriveKind::Contact, Side::OverObject, Selection::File(sel.clone())), &cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    fs::write(&sel, "1 two\n").unwrap();
    let err = cmd_derive(&args(DeriveKind::Contact, Side::OverObject, Selection::File(sel)), &cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    let err = cmd_derive(&args(DeriveKind::Contact, Side::OverObject, Selection::Region("tail".into())), &cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);

    // regions resolve against the configured body when no dataset is given
    let region = |side| DeriveArgs { dataset: None, ..args(DeriveKind::Contact, side, Selection::Region("hands".into())) };
    let r = cmd_derive(&region(Side::OverObject), &cfg).unwrap();
    assert_eq!(r.values, 80);
    assert_eq!(cmd_derive(&region(Side::OverHuman), &cfg).unwrap_err().exit_code(), 2);
    let mut other = cfg.clone();
    other.body.surface_points += 1;
    assert_eq!(cmd_derive(&region(Side::OverObject), &other).unwrap_err().exit_code(), 2);
}

#[test]
fn spatial_volume_peaks_at_the_known_offset() {
    let mut cfg = small();
    cfg.synth.samples = 30;
    cfg.synth.view_samples = 0;
    cfg.field.resolution = 16;
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    cmd_synth(&cfg, &ds).unwrap();
    let data = read_dataset(&ds).unwrap();
    let hand = body_regions(&data.model)["right-hand"][0];
    let scene = make_scenario("seated-box", 0.0, 0, &data.model, cfg.synth.object_points).unwrap();
    let offset = scene.body.surface().points()[hand];
    let pelvis = scene.body.joints()[0];

    let sel = dir.path().join("hand.txt");
    fs::write(&sel, format!("{hand}\n")).unwrap();
    let args = DeriveArgs {
        kind: DeriveKind::Spatial,
        field: None,
        dataset: Some(ds),
        side: Side::OverObject,
        selection: Selection::File(sel),
        out: dir.path().join("vol"),
    };
    cmd_derive(&args, &cfg).unwrap();
    let header: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("vol.json")).unwrap()).unwrap();
    let g = header["resolution"].as_u64().unwrap() as usize;
    let h = header["half_extent"].as_f64().unwrap();
    let raw = fs::read(dir.path().join("vol.raw")).unwrap();
    let vals: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    assert_eq!(vals.len(), g * g * g);
    let best = (0..vals.len()).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    // x fastest
    let idx = [best % g, (best / g) % g, best / (g * g)];
    let size = 2.0 * h / g as f64;
    let lo = Vec3::from_fn(|k, _| -h + idx[k] as f64 * size);
    let hi = lo.add_scalar(size);
    let outside = Vec3::from_fn(|k, _| (lo[k] - offset[k]).max(offset[k] - hi[k]).max(0.0)).norm();
    // shift plus yaw about the pelvis moves the point by at most this much
    let r = ((offset.x - pelvis.x).powi(2) + (offset.y - pelvis.y).powi(2)).sqrt();
    let bound = cfg.synth.jitter * (2f64.sqrt() + r / 0.5);
    assert!(outside <= bound, "argmax voxel {idx:?} is {outside:.3} m from the offset {offset:?}");
}

fn sim(a: &[f64], b: &[f64]) -> f64 {
    let (sa, sb): (f64, f64) = (a.iter().sum(), b.iter().sum());
    100.0 * a.iter().zip(b).map(|(x, y)| (x / sa).min(y / sb)).sum::<f64>()
}

#[test]
fn eval_self_and_permuted() {
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let (ds, field) = (dir.path().join("ds"), dir.path().join("field"));
    cmd_synth(&cfg, &ds).unwrap();
    cmd_aggregate(&ds, &cfg, &field, None, false).unwrap();
    let r = cmd_eval(&field, &field, &ImageDirs::default(), &cfg).unwrap();
    assert_eq!((r.sim_human, r.sim_object), (Some(100.0), Some(100.0)));
    // a dataset as the reference is aggregated with the same settings
    let r = cmd_eval(&field, &ds, &ImageDirs::default(), &cfg).unwrap();
    assert_eq!((r.sim_human, r.sim_object), (Some(100.0), Some(100.0)));

    // relabel object points by a rotation of the index
    let f = load_field(&field).unwrap();
    let n = f.object_points().len() as u32;
    let moved: BTreeMap<(u32, u32), _> = f.distributions().iter().map(|(&(i, j), d)| (((i + 7) % n, j), d.clone())).collect();
    let g = PrimitiveField::new(f.grid().clone(), f.kernel(), f.direction(), f.object_points().clone(), f.human_points().clone(), moved)
        .unwrap();
    let permuted = dir.path().join("permuted");
    save_field(&g, &permuted).unwrap();
    let r = cmd_eval(&field, &permuted, &ImageDirs::default(), &cfg).unwrap();
    let values = |f: &PrimitiveField, side| {
        aggregate_pointwise(f, AffordanceKind::Contact, side, cfg.affordance.reduction, cfg.affordance.rho).unwrap().values
    };
    let want_o = sim(&values(&f, Side::OverObject), &values(&g, Side::OverObject));
    let want_h = sim(&values(&f, Side::OverHuman), &values(&g, Side::OverHuman));
    assert!(want_o < 100.0 - 1e-6);
    assert!((r.sim_object.unwrap() - want_o).abs() < 1e-9);
    assert!((r.sim_human.unwrap() - want_h).abs() < 1e-9);

    // point-count mismatch
    let mut other = cfg.clone();
    other.synth.object_points = 60;
    let ds2 = dir.path().join("ds2");
    cmd_synth(&other, &ds2).unwrap();
    let err = cmd_eval(&field, &ds2, &ImageDirs::default(), &cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn eval_reads_mask_directories() {
    use afford_core::geom::{Image, Mask};
    let cfg = small();
    let dir = tempfile::tempdir().unwrap();
    let (ds, field) = (dir.path().join("ds"), dir.path().join("field"));
    cmd_synth(&cfg, &ds).unwrap();
    cmd_aggregate(&ds, &cfg, &field, None, false).unwrap();
    let sub = |n: &str| {
        let p = dir.path().join(n);
        fs::create_dir_all(&p).unwrap();
        p
    };
    let (pm, tm, hm, pi, ti) = (sub("pm"), sub("tm"), sub("hm"), sub("pi"), sub("ti"));
    let bits = |v: &[u8]| Mask::from_bits(2, 2, v.iter().map(|&b| b == 1).collect()).unwrap();
    bits(&[1, 1, 0, 0]).save_pgm(pm.join("a.pgm")).unwrap();
    bits(&[1, 0, 0, 0]).save_pgm(tm.join("a.pgm")).unwrap();
    bits(&[0, 1, 0, 0]).save_pgm(hm.join("a.pgm")).unwrap();
    Image::from_data(2, 2, 1, vec![0.6, 1.0, 0.2, 0.2]).unwrap().save(pi.join("a.pgm")).unwrap();
    Image::from_data(2, 2, 1, vec![0.2, 0.2, 0.2, 0.6]).unwrap().save(ti.join("a.pgm")).unwrap();
    let dirs = ImageDirs {
        pred_masks: Some(pm),
        truth_masks: Some(tm),
        human_masks: Some(hm),
        pred_images: Some(pi),
        truth_images: Some(ti),
    };
    let r = cmd_eval(&field, &field, &dirs, &cfg).unwrap();
    assert_eq!(r.miou, Some(0.5));
    assert_eq!(r.miou_occlusion_aware, Some(1.0));
    let rmse = r.rmse_background.unwrap();
    let want = ((0.4f64.powi(2) + 0.0 + 0.4f64.powi(2)) / 3.0).sqrt();
    assert!((rmse - want).abs() < 1e-6, "{rmse} vs {want}");
    let j = serde_json::to_string(&r).unwrap();
    for col in ["RMSE_Background", "mIoU", "mIoU_OcclusionAware", "SIM_Human", "SIM_Object"] {
        assert!(j.contains(col), "{col}");
    }
}
