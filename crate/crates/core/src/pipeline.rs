//! End-to-end commands: synthesize samples and views, lift views to
//! samples, aggregate a field, derive affordances and evaluate.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::affordance::{
    aggregate_pointwise, object_frame_occupancy, regionwise_contact, write_affordance_csv, write_affordance_ply,
    write_occupancy, AffordanceField, AffordanceKind, Side,
};
use crate::config::PipelineConfig;
use crate::geom::{apply_rigid, Image, Mask, RigidTransform, TriMesh};
use crate::io::{read_dataset, read_views, write_dataset, write_views, Dataset, MANIFEST_FILE};
use crate::lifting::{lift_view, BodyModel, DepthInit, Verdict};
use crate::metrics::{histogram_similarity, miou, rmse_background, Histogram, MetricsReport};
use crate::primitives::{build_primitive_field, load_field, save_field, PrimitiveField, HEADER_FILE};
use crate::seed::derive_seed;
use crate::synth::{body_regions, make_samples, render_views, HOISample, Provenance, ScenarioName, SceneObject};
use crate::Vec3;

pub const SCENE_FILE: &str = "scene.json";
pub const VERDICTS_FILE: &str = "verdicts.jsonl";

/// Command failure with its process exit code: 2 for bad usage or
/// unreadable input, 3 for failures while running.
#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Runtime(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Usage(_) | PipelineError::Input(_) => 2,
            PipelineError::Runtime(_) => 3,
        }
    }
}

fn usage(e: impl ToString) -> PipelineError {
    PipelineError::Usage(e.to_string())
}

fn input(e: impl ToString) -> PipelineError {
    PipelineError::Input(e.to_string())
}

fn runtime(e: impl ToString) -> PipelineError {
    PipelineError::Runtime(e.to_string())
}

fn write_json<T: Serialize>(path: &Path, v: &T) -> Result<(), PipelineError> {
    let mut s = serde_json::to_string_pretty(v).map_err(runtime)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

/// Ground truth stored next to a view batch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneRecord {
    pub sample: usize,
    pub object_pose: RigidTransform,
    pub truth_z: Vec<f64>,
    pub outliers: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthReport {
    pub scenario: String,
    pub samples: usize,
    pub view_batches: usize,
}

fn world_center(object: &TriMesh) -> Vec3 {
    let (lo, hi) = object.bounds();
    (lo + hi) / 2.0
}

/// Writes a dataset of `cfg.synth.samples` jittered samples to `out`, plus
/// rendered view batches for the first `cfg.synth.view_samples`.
pub fn cmd_synth(cfg: &PipelineConfig, out: &Path) -> Result<SynthReport, PipelineError> {
    cfg.validate().map_err(usage)?;
    let name: ScenarioName = cfg.synth.scenario.parse().map_err(usage)?;
    let spec = cfg.body.spec();
    let model = spec.build().map_err(runtime)?;
    let object = SceneObject::new(name, &model, cfg.synth.object_points).map_err(runtime)?;
    let samples = make_samples(
        &object,
        cfg.synth.samples,
        cfg.synth.jitter,
        derive_seed(cfg.seed, "synth", 0),
        &model,
    )
    .map_err(runtime)?;
    let rig = cfg.rig().map_err(usage)?;
    let mut views = Vec::new();
    for (k, s) in samples.iter().take(cfg.synth.view_samples).enumerate() {
        let rel = format!("views/sample_{k:05}");
        let dir = out.join(&rel);
        let world = object.mesh.transformed(&s.object_pose);
        let rendered = render_views(
            s,
            &world,
            &rig,
            &model,
            &world_center(&world),
            &cfg.views,
            derive_seed(cfg.seed, "views", k as u64),
        )
        .map_err(runtime)?;
        write_views(&dir, &rendered.views).map_err(runtime)?;
        write_json(
            &dir.join(SCENE_FILE),
            &SceneRecord {
                sample: k,
                object_pose: s.object_pose,
                truth_z: rendered.truth_z,
                outliers: rendered.outliers,
            },
        )?;
        views.push(rel);
    }
    let data = Dataset {
        scenario: Some(name.to_string()),
        seed: cfg.seed,
        body: spec,
        model,
        object: object.mesh,
        object_points: object.points,
        samples,
        views,
    };
    write_dataset(out, &data).map_err(runtime)?;
    Ok(SynthReport { scenario: name.to_string(), samples: data.samples.len(), view_batches: data.views.len() })
}

/// One line of the lifting log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerdictRecord {
    pub batch: String,
    pub view_id: String,
    pub z: f64,
    pub init: DepthInit,
    pub inliers: Vec<String>,
    pub iou: f64,
    pub penetration: f64,
    pub initial_loss: f64,
    pub final_loss: f64,
    #[serde(flatten)]
    pub verdict: Verdict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiftReport {
    pub views: usize,
    pub kept: usize,
    pub rejected: usize,
}

/// Lifts every view of one batch; returns kept samples and the log lines.
pub fn lift_batch(
    cfg: &PipelineConfig,
    model: &BodyModel,
    object: &TriMesh,
    object_points: &crate::geom::SurfacePointSet,
    batch_dir: &Path,
    batch: &str,
) -> Result<(Vec<HOISample>, Vec<VerdictRecord>), PipelineError> {
    let views = read_views(batch_dir).map_err(input)?;
    let scene_path = batch_dir.join(SCENE_FILE);
    let pose = match fs::read_to_string(&scene_path) {
        Ok(text) => {
            serde_json::from_str::<SceneRecord>(&text)
                .map_err(|e| input(format!("{}: {e}", scene_path.display())))?
                .object_pose
        }
        Err(_) => RigidTransform::identity(),
    };
    let world = object.transformed(&pose);
    let world_points = apply_rigid(object_points, &pose);
    let mut kept = Vec::new();
    let mut log = Vec::new();
    for k in 0..views.len() {
        let out = lift_view(&views, k, model, &world, &world_points, &cfg.lift).map_err(runtime)?;
        if out.verdict.is_keep() {
            let f = views[k].camera.forward();
            let joints: Vec<Vec3> = views[k].joints3d.iter().map(|j| j + f * out.z).collect();
            kept.push(HOISample {
                object_pose: pose,
                body: model.pose(&joints).map_err(runtime)?,
                provenance: Provenance::Lifted { view_id: format!("{batch}/{}", out.view_id), z: out.z },
            });
        }
        log.push(VerdictRecord {
            batch: batch.to_string(),
            view_id: out.view_id,
            z: out.z,
            init: out.init,
            inliers: out.inliers,
            iou: out.iou,
            penetration: out.penetration,
            initial_loss: out.initial_loss,
            final_loss: out.final_loss,
            verdict: out.verdict,
        });
    }
    Ok((kept, log))
}

/// Lifts every view batch of the dataset at `input_dir` and writes the kept
/// placements as a new dataset at `out`, with `verdicts.jsonl`.
pub fn cmd_lift(input_dir: &Path, cfg: &PipelineConfig, out: &Path) -> Result<LiftReport, PipelineError> {
    cfg.validate().map_err(usage)?;
    let data = read_dataset(input_dir).map_err(input)?;
    if data.views.is_empty() {
        return Err(usage(format!("{}: dataset lists no view batches", input_dir.display())));
    }
    let mut samples = Vec::new();
    let mut log = Vec::new();
    for batch in &data.views {
        let (kept, lines) =
            lift_batch(cfg, &data.model, &data.object, &data.object_points, &input_dir.join(batch), batch)?;
        samples.extend(kept);
        log.extend(lines);
    }
    let report = LiftReport { views: log.len(), kept: samples.len(), rejected: log.len() - samples.len() };
    let lifted = Dataset { samples, views: Vec::new(), ..data };
    write_dataset(out, &lifted).map_err(runtime)?;
    let mut text = String::new();
    for l in &log {
        text.push_str(&serde_json::to_string(l).map_err(runtime)?);
        text.push('\n');
    }
    fs::write(out.join(VERDICTS_FILE), text).map_err(runtime)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub samples_used: usize,
    pub samples_skipped: usize,
    pub pairs: usize,
    pub kernels: u64,
    pub clamped: u64,
    /// Largest `|Σ P_ij − 1|` over stored pairs.
    pub audit: f64,
    pub merged: bool,
}

/// Half-open range of sample indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleRange {
    pub start: usize,
    pub end: usize,
}

impl std::str::FromStr for SampleRange {
    type Err = PipelineError;
    /// `start..end`
    fn from_str(s: &str) -> Result<Self, PipelineError> {
        let bad = || usage(format!("bad sample range {s:?}; expected start..end"));
        let (a, b) = s.split_once("..").ok_or_else(bad)?;
        let r = SampleRange { start: a.trim().parse().map_err(|_| bad())?, end: b.trim().parse().map_err(|_| bad())? };
        if r.start >= r.end {
            return Err(bad());
        }
        Ok(r)
    }
}

fn aggregate_field(
    data: &Dataset,
    cfg: &PipelineConfig,
    range: Option<SampleRange>,
) -> Result<(PrimitiveField, crate::primitives::FieldStats), PipelineError> {
    let samples = match range {
        Some(r) if r.end > data.samples.len() => {
            return Err(usage(format!("sample range {}..{} exceeds {} samples", r.start, r.end, data.samples.len())))
        }
        Some(r) => &data.samples[r.start..r.end],
        None => &data.samples[..],
    };
    if samples.is_empty() {
        return Err(usage("dataset has no samples"));
    }
    let rest = data.model.rest();
    build_primitive_field(samples, &data.object_points, rest.surface(), &cfg.field).map_err(runtime)
}

/// Builds a normalized field from the dataset at `input_dir` (optionally
/// only a range of its samples) and saves it to `out`. With `merge`, an
/// archive already at `out` is combined with the new one; its grid, kernel,
/// direction and point sets must match.
pub fn cmd_aggregate(
    input_dir: &Path,
    cfg: &PipelineConfig,
    out: &Path,
    range: Option<SampleRange>,
    merge: bool,
) -> Result<AggregateReport, PipelineError> {
    cfg.validate().map_err(usage)?;
    let data = read_dataset(input_dir).map_err(input)?;
    let (mut field, stats) = aggregate_field(&data, cfg, range)?;
    let mut merged = false;
    if merge && out.join(HEADER_FILE).exists() {
        let old = load_field(out).map_err(input)?;
        field = PrimitiveField::merge_normalized(&old, &field).map_err(usage)?;
        merged = true;
    }
    save_field(&field, out).map_err(runtime)?;
    Ok(AggregateReport {
        samples_used: stats.samples_used,
        samples_skipped: stats.samples_skipped,
        pairs: field.len(),
        kernels: stats.kernels,
        clamped: stats.clamped,
        audit: field.normalization_audit(),
        merged,
    })
}

/// Combines two archives built with the same settings into `out`.
pub fn cmd_merge(a: &Path, b: &Path, out: &Path) -> Result<AggregateReport, PipelineError> {
    let fa = load_field(a).map_err(input)?;
    let fb = load_field(b).map_err(input)?;
    let field = PrimitiveField::merge_normalized(&fa, &fb).map_err(usage)?;
    save_field(&field, out).map_err(runtime)?;
    Ok(AggregateReport {
        samples_used: field.distributions().values().map(|d| d.sample_count() as usize).max().unwrap_or(0),
        samples_skipped: 0,
        pairs: field.len(),
        kernels: 0,
        clamped: 0,
        audit: field.normalization_audit(),
        merged: true,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DeriveKind {
    Contact,
    Orientation,
    Spatial,
}

impl std::str::FromStr for DeriveKind {
    type Err = PipelineError;
    fn from_str(s: &str) -> Result<Self, PipelineError> {
        match s {
            "contact" => Ok(DeriveKind::Contact),
            "orientation" => Ok(DeriveKind::Orientation),
            "spatial" => Ok(DeriveKind::Spatial),
            _ => Err(usage(format!("unknown kind {s:?}; expected contact, orientation or spatial"))),
        }
    }
}

/// `all`, `region:<name>` (a body region) or a file of indices separated by
/// whitespace or commas, with `#` comments.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    All,
    Region(String),
    File(PathBuf),
}

impl Selection {
    pub fn parse(s: &str) -> Selection {
        if s == "all" {
            Selection::All
        } else if let Some(r) = s.strip_prefix("region:") {
            Selection::Region(r.to_string())
        } else {
            Selection::File(PathBuf::from(s))
        }
    }

    /// Resolves to indices; `None` means every index.
    pub fn resolve(&self, model: Option<&BodyModel>) -> Result<Option<Vec<usize>>, PipelineError> {
        match self {
            Selection::All => Ok(None),
            Selection::Region(name) => {
                let model = model.ok_or_else(|| usage("region selections need a body model"))?;
                let regions = body_regions(model);
                let idx = regions.get(name).ok_or_else(|| {
                    usage(format!("unknown region {name:?}; known: {}", regions.keys().cloned().collect::<Vec<_>>().join(", ")))
                })?;
                Ok(Some(idx.clone()))
            }
            Selection::File(path) => {
                let text = fs::read_to_string(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
                let mut out = Vec::new();
                for line in text.lines() {
                    let line = line.split('#').next().unwrap_or("");
                    for tok in line.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()) {
                        out.push(tok.parse::<usize>().map_err(|_| {
                            usage(format!("{}: {tok:?} is not an index", path.display()))
                        })?);
                    }
                }
                Ok(Some(out))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeriveArgs {
    pub kind: DeriveKind,
    /// Field archive, for contact and orientation.
    pub field: Option<PathBuf>,
    /// Dataset, for spatial (and for region selections).
    pub dataset: Option<PathBuf>,
    /// Side the values are reported on; selections index the other side.
    pub side: Side,
    pub selection: Selection,
    /// Output path without extension.
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeriveReport {
    pub files: Vec<String>,
    pub values: usize,
    pub min: f64,
    pub max: f64,
}

fn with_ext(p: &Path, ext: &str) -> PathBuf {
    let mut s = p.as_os_str().to_owned();
    s.push(".");
    s.push(ext);
    PathBuf::from(s)
}

fn summarize(files: Vec<PathBuf>, v: &[f64]) -> DeriveReport {
    DeriveReport {
        files: files.iter().map(|f| f.display().to_string()).collect(),
        values: v.len(),
        min: v.iter().cloned().fold(f64::INFINITY, f64::min),
        max: v.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
    }
}

pub fn cmd_derive(args: &DeriveArgs, cfg: &PipelineConfig) -> Result<DeriveReport, PipelineError> {
    cfg.validate().map_err(usage)?;
    if let Some(parent) = args.out.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(runtime)?;
        }
    }
    let dataset = match &args.dataset {
        Some(d) => Some(read_dataset(d).map_err(input)?),
        None => None,
    };
    // without a dataset, regions come from the configured body
    let configured;
    let model = match (&dataset, &args.selection) {
        (Some(d), _) => Some(&d.model),
        (None, Selection::Region(_)) => {
            configured = cfg.body.spec().build().map_err(usage)?;
            Some(&configured)
        }
        (None, _) => None,
    };
    let selected = args.selection.resolve(model)?;
    if matches!(&selected, Some(s) if s.is_empty()) {
        return Err(usage("selection is empty"));
    }
    if args.kind == DeriveKind::Spatial {
        let data = dataset.ok_or_else(|| usage("spatial derivation needs --dataset"))?;
        let n = data.model.surface_point_count();
        let subset = selected.unwrap_or_else(|| (0..n).collect());
        let voxels = cfg.field.grid().map_err(usage)?.voxels;
        let grid = object_frame_occupancy(&data.samples, &subset, &voxels).map_err(usage)?.normalized();
        let stem = args.out.file_name().ok_or_else(|| usage("output path has no file name"))?.to_string_lossy();
        let dir = args.out.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        write_occupancy(dir, &stem, &grid).map_err(runtime)?;
        return Ok(summarize(vec![with_ext(&args.out, "raw"), with_ext(&args.out, "json")], &grid.counts));
    }
    let path = args.field.as_ref().ok_or_else(|| usage("contact and orientation need --field"))?;
    let field = load_field(path).map_err(input)?;
    if let (Selection::Region(name), Some(m)) = (&args.selection, model) {
        if args.side == Side::OverHuman {
            return Err(usage(format!("region {name:?} selects body points; report it with --side object")));
        }
        if m.surface_point_count() != field.human_points().len() {
            return Err(usage(format!(
                "body has {} surface points but the field has {} human points",
                m.surface_point_count(),
                field.human_points().len()
            )));
        }
    }
    let rho = cfg.affordance.rho;
    let af: AffordanceField = match (args.kind, selected) {
        (DeriveKind::Contact, Some(sel)) => regionwise_contact(&field, args.side.opposite(), &sel, rho).map_err(usage)?,
        (DeriveKind::Orientation, Some(_)) => return Err(usage("orientation takes no selection; use all")),
        (kind, None) => {
            let k = if kind == DeriveKind::Contact { AffordanceKind::Contact } else { AffordanceKind::Orientation };
            aggregate_pointwise(&field, k, args.side, cfg.affordance.reduction, rho).map_err(runtime)?
        }
        (DeriveKind::Spatial, _) => unreachable!("handled above"),
    };
    let points = match args.side {
        Side::OverObject => field.object_points(),
        Side::OverHuman => field.human_points(),
    };
    let (ply, csv) = (with_ext(&args.out, "ply"), with_ext(&args.out, "csv"));
    write_affordance_ply(&ply, points, &af).map_err(runtime)?;
    write_affordance_csv(&csv, &af).map_err(runtime)?;
    Ok(summarize(vec![ply, csv], &af.values))
}

/// Directories of paired PGM/PPM files, matched by file name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ImageDirs {
    pub pred_masks: Option<PathBuf>,
    pub truth_masks: Option<PathBuf>,
    /// Predicted human regions, excluded from the occlusion-aware IoU and
    /// from the background RMSE.
    pub human_masks: Option<PathBuf>,
    pub pred_images: Option<PathBuf>,
    pub truth_images: Option<PathBuf>,
}

fn sorted_files(dir: &Path) -> Result<Vec<String>, PipelineError> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .map_err(|e| input(format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_file())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    Ok(names)
}

fn load_masks(dir: &Path, names: &[String]) -> Result<Vec<Mask>, PipelineError> {
    names.iter().map(|n| Mask::load_pgm(dir.join(n)).map_err(input)).collect()
}

fn contact_histograms(field: &PrimitiveField, cfg: &PipelineConfig, side: Side) -> Result<Histogram, PipelineError> {
    let af = aggregate_pointwise(field, AffordanceKind::Contact, side, cfg.affordance.reduction, cfg.affordance.rho)
        .map_err(runtime)?;
    Histogram::new(af.values).map_err(runtime)
}

/// Loads an archive, or aggregates a dataset directory with `cfg.field`.
fn field_or_dataset(path: &Path, cfg: &PipelineConfig) -> Result<PrimitiveField, PipelineError> {
    if path.join(MANIFEST_FILE).exists() {
        let data = read_dataset(path).map_err(input)?;
        Ok(aggregate_field(&data, cfg, None)?.0)
    } else {
        load_field(path).map_err(input)
    }
}

/// Contact-map similarity of two fields (×100) plus mask and background
/// metrics when image directories are given. `truth` may be an archive or a
/// dataset, which is aggregated first.
pub fn cmd_eval(
    pred: &Path,
    truth: &Path,
    images: &ImageDirs,
    cfg: &PipelineConfig,
) -> Result<MetricsReport, PipelineError> {
    cfg.validate().map_err(usage)?;
    let (p, t) = (load_field(pred).map_err(input)?, field_or_dataset(truth, cfg)?);
    for (what, a, b) in [
        ("object", p.object_points().len(), t.object_points().len()),
        ("human", p.human_points().len(), t.human_points().len()),
    ] {
        if a != b {
            return Err(usage(format!("{what} point counts differ: {a} vs {b}")));
        }
    }
    let mut report = MetricsReport::default();
    for (side, slot) in [(Side::OverHuman, &mut report.sim_human), (Side::OverObject, &mut report.sim_object)] {
        let (a, b) = (contact_histograms(&p, cfg, side)?, contact_histograms(&t, cfg, side)?);
        *slot = Some(100.0 * histogram_similarity(&a, &b).map_err(runtime)?);
    }
    if let (Some(pd), Some(td)) = (&images.pred_masks, &images.truth_masks) {
        let names = sorted_files(td)?;
        let (a, b) = (load_masks(pd, &names)?, load_masks(td, &names)?);
        report.miou = Some(miou(&a, &b, None).map_err(usage)?.miou);
        if let Some(hd) = &images.human_masks {
            let ex = load_masks(hd, &names)?;
            let r = miou(&a, &b, Some(&ex)).map_err(usage)?;
            report.miou_occlusion_aware = Some(r.miou);
            report.skipped_pairs = Some(r.skipped);
        }
    }
    if let (Some(pd), Some(td), Some(hd)) = (&images.pred_images, &images.truth_images, &images.human_masks) {
        let names = sorted_files(td)?;
        let mut total = 0.0;
        for n in &names {
            let a = Image::load(pd.join(n)).map_err(input)?;
            let b = Image::load(td.join(n)).map_err(input)?;
            let m = Mask::load_pgm(hd.join(Path::new(n).with_extension("pgm"))).map_err(input)?;
            total += rmse_background(&a, &b, &m).map_err(usage)?;
        }
        if !names.is_empty() {
            report.rmse_background = Some(total / names.len() as f64);
        }
    }
    Ok(report)
}
