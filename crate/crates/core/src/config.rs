//! One validated document holding every pipeline setting, loaded from JSON
//! with `AFFORD__SECTION__KEY=value` environment overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::affordance::Reduction;
use crate::camera::{build_dynamic_rig, build_static_rig, CameraRig, PerturbationRanges, RigKind, RigOptics, MAX_ELEVATION_DEG};
use crate::lifting::{BodyModelSpec, LiftParams};
use crate::primitives::FieldConfig;
use crate::synth::ViewOptions;
use crate::Vec2;

pub const ENV_PREFIX: &str = "AFFORD__";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    Read { path: String, message: String },
    #[error("config: {0}")]
    Parse(String),
    #[error("environment override {var}: {message}")]
    Env { var: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BodySection {
    pub surface_points: usize,
    pub interior_points: usize,
    pub seed: u64,
}

impl Default for BodySection {
    fn default() -> Self {
        Self { surface_points: 200, interior_points: 10_000, seed: 7 }
    }
}

impl BodySection {
    pub fn spec(&self) -> BodyModelSpec {
        BodyModelSpec::smpl24(self.surface_points, self.interior_points, self.seed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub scenario: String,
    pub samples: usize,
    pub jitter: f64,
    pub object_points: usize,
    /// Samples that also get a rendered view batch.
    pub view_samples: usize,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self { scenario: "seated-box".into(), samples: 50, jitter: 0.02, object_points: 200, view_samples: 4 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RigSection {
    pub kind: RigKind,
    pub cameras: usize,
    pub elevation_deg: f64,
    /// Pixels per meter.
    pub scale: f64,
    /// Dynamic rigs only.
    pub rounds: usize,
    pub perturbation: PerturbationRanges,
}

impl Default for RigSection {
    fn default() -> Self {
        Self {
            kind: RigKind::Static,
            cameras: 8,
            elevation_deg: 15.0,
            scale: 300.0,
            rounds: 1,
            perturbation: PerturbationRanges::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AffordanceSection {
    /// Length scale of the contact proximity term, m.
    pub rho: f64,
    pub reduction: Reduction,
}

impl Default for AffordanceSection {
    fn default() -> Self {
        Self { rho: 1.0, reduction: Reduction::Max }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub body: BodySection,
    pub synth: SynthSection,
    pub rig: RigSection,
    pub views: ViewOptions,
    pub lift: LiftParams,
    pub field: FieldConfig,
    pub affordance: AffordanceSection,
}

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Invalid(msg()))
    }
}

fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
    check(v > 0.0 && v.is_finite(), || format!("{name} must be positive, got {v}"))
}

fn unit(name: &str, v: f64) -> Result<(), ConfigError> {
    check((0.0..=1.0).contains(&v), || format!("{name} must lie in [0, 1], got {v}"))
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let b = &self.body;
        check(b.surface_points >= 10, || format!("body.surface_points must be >= 10, got {}", b.surface_points))?;
        check(b.interior_points >= 1, || "body.interior_points must be >= 1".into())?;
        let s = &self.synth;
        check(s.scenario.parse::<crate::synth::ScenarioName>().is_ok(), || {
            format!("synth.scenario {:?} is not a known scenario", s.scenario)
        })?;
        check(s.samples >= 1, || "synth.samples must be >= 1".into())?;
        check(s.jitter >= 0.0 && s.jitter.is_finite(), || format!("synth.jitter must be >= 0, got {}", s.jitter))?;
        check(s.object_points >= 1, || "synth.object_points must be >= 1".into())?;
        check(s.view_samples <= s.samples, || "synth.view_samples exceeds synth.samples".into())?;
        let r = &self.rig;
        check(r.cameras >= 2, || format!("rig.cameras must be >= 2, got {}", r.cameras))?;
        check((0.0..=MAX_ELEVATION_DEG).contains(&r.elevation_deg), || {
            format!("rig.elevation_deg must lie in [0, {MAX_ELEVATION_DEG}], got {}", r.elevation_deg)
        })?;
        positive("rig.scale", r.scale)?;
        check(r.rounds >= 1, || "rig.rounds must be >= 1".into())?;
        self.views.validate().map_err(|e| ConfigError::Invalid(format!("views: {e}")))?;
        let l = &self.lift;
        positive("lift.inliers.tau_stage1", l.inliers.tau_stage1)?;
        positive("lift.inliers.tau_stage2", l.inliers.tau_stage2)?;
        check(l.candidates >= 1, || "lift.candidates must be >= 1".into())?;
        positive("lift.spacing_mult", l.spacing_mult)?;
        check(l.depth.lambda_collision >= 0.0 && l.depth.lambda_collision.is_finite(), || {
            "lift.depth.lambda_collision must be >= 0".into()
        })?;
        positive("lift.depth.kappa", l.depth.kappa)?;
        positive("lift.depth.fd_step", l.depth.fd_step)?;
        positive("lift.depth.adam.lr", l.depth.adam.lr)?;
        check(l.depth.adam.iterations >= 1, || "lift.depth.adam.iterations must be >= 1".into())?;
        check((0.0..1.0).contains(&l.depth.adam.beta1) && (0.0..1.0).contains(&l.depth.adam.beta2), || {
            "lift.depth.adam betas must lie in [0, 1)".into()
        })?;
        positive("lift.depth.adam.eps", l.depth.adam.eps)?;
        let f = &l.filter;
        unit("lift.filter.iou_min", f.iou_min)?;
        unit("lift.filter.iou_max", f.iou_max)?;
        check(f.iou_min <= f.iou_max, || "lift.filter.iou_min exceeds iou_max".into())?;
        unit("lift.filter.max_penetration", f.max_penetration)?;
        self.field.validate().map_err(|e| ConfigError::Invalid(format!("field: {e}")))?;
        positive("affordance.rho", self.affordance.rho)?;
        Ok(())
    }

    /// Reads `path` (or defaults when `None`), applies overrides from `env`
    /// and validates.
    pub fn load(path: Option<&Path>, env: impl IntoIterator<Item = (String, String)>) -> Result<Self, ConfigError> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ConfigError::Read { path: p.display().to_string(), message: e.to_string() })?;
                serde_json::from_str::<Value>(&text)
                    .map_err(|e| ConfigError::Read { path: p.display().to_string(), message: e.to_string() })?
            }
            None => Value::Object(Default::default()),
        };
        apply_env(&mut doc, env)?;
        let cfg: PipelineConfig = serde_json::from_value(doc).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Like [`load`](Self::load) with the process environment.
    pub fn load_with_process_env(path: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load(path, std::env::vars())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn rig(&self) -> Result<CameraRig, ConfigError> {
        let half = self.views.resolution as f64 / 2.0;
        let optics = RigOptics {
            elevation_deg: self.rig.elevation_deg,
            scale: self.rig.scale,
            offset: Vec2::new(half, half),
            strict_elevation: true,
        };
        let rig = match self.rig.kind {
            RigKind::Static => build_static_rig(self.rig.cameras, &optics),
            RigKind::Dynamic => build_dynamic_rig(
                self.rig.cameras,
                self.rig.rounds,
                &self.rig.perturbation,
                crate::seed::derive_seed(self.seed, "rig", 0),
                &optics,
            ),
        };
        rig.map_err(|e| ConfigError::Invalid(format!("rig: {e}")))
    }
}

/// `AFFORD__LIFT__DEPTH__LAMBDA_COLLISION=0` sets `lift.depth.lambda_collision`.
/// Values parse as JSON when they can and are strings otherwise. Variables
/// are applied in name order.
pub fn apply_env(doc: &mut Value, env: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
    let mut vars: Vec<(String, String)> = env.into_iter().filter(|(k, _)| k.starts_with(ENV_PREFIX)).collect();
    vars.sort();
    for (var, raw) in vars {
        let path: Vec<String> = var[ENV_PREFIX.len()..].split("__").map(|s| s.to_ascii_lowercase()).collect();
        if path.iter().any(|p| p.is_empty()) {
            return Err(ConfigError::Env { var, message: "empty key segment".into() });
        }
        let value = serde_json::from_str::<Value>(&raw).unwrap_or(Value::String(raw));
        let mut node = &mut *doc;
        for key in &path[..path.len() - 1] {
            let obj = node
                .as_object_mut()
                .ok_or_else(|| ConfigError::Env { var: var.clone(), message: format!("{key} is not a section") })?;
            node = obj.entry(key.clone()).or_insert_with(|| Value::Object(Default::default()));
        }
        let obj = node
            .as_object_mut()
            .ok_or_else(|| ConfigError::Env { var: var.clone(), message: "parent is not a section".into() })?;
        obj.insert(path[path.len() - 1].clone(), value);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn defaults_validate_and_round_trip() {
        let c = PipelineConfig::load(None, env(&[])).unwrap();
        assert_eq!(c, PipelineConfig::default());
        let back: PipelineConfig = serde_json::from_str(&c.to_json()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn env_overrides_nested_keys() {
        let c = PipelineConfig::load(
            None,
            env(&[
                ("AFFORD__LIFT__DEPTH__LAMBDA_COLLISION", "0"),
                ("AFFORD__SYNTH__SCENARIO", "rider-straddle"),
                ("AFFORD__SEED", "9"),
                ("OTHER", "x"),
            ]),
        )
        .unwrap();
        assert_eq!(c.lift.depth.lambda_collision, 0.0);
        assert_eq!(c.synth.scenario, "rider-straddle");
        assert_eq!(c.seed, 9);
    }

    #[test]
    fn unknown_keys_and_bad_ranges_rejected() {
        assert!(matches!(PipelineConfig::load(None, env(&[("AFFORD__FIELD__VOXELS", "3")])), Err(ConfigError::Parse(_))));
        assert!(matches!(
            PipelineConfig::load(None, env(&[("AFFORD__LIFT__FILTER__IOU_MIN", "0.9")])),
            Err(ConfigError::Invalid(_))
        ));
        assert!(matches!(
            PipelineConfig::load(None, env(&[("AFFORD__SYNTH__SCENARIO", "sofa")])),
            Err(ConfigError::Invalid(_))
        ));
    }
}
