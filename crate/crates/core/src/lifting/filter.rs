use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterThresholds {
    pub iou_min: f64,
    pub iou_max: f64,
    /// Minimum inlier views, `τ_inlier`.
    pub min_inliers: usize,
    pub max_penetration: f64,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        Self { iou_min: 0.3, iou_max: 0.8, min_inliers: 3, max_penetration: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Verdict {
    Keep,
    Reject { reason: String },
}

impl Verdict {
    pub fn is_keep(&self) -> bool {
        matches!(self, Verdict::Keep)
    }
}

/// Reject when fewer than `min_inliers` views agree, when the silhouette IoU
/// is below `iou_min` or above `iou_max`, or when more than `max_penetration`
/// of the body volume lies inside the object. The reason names the first
/// failing rule in that order: `"inliers"`, `"iou"`, `"penetration"`. A
/// placement without agreeing views has no depth evidence, so that rule
/// goes first.
pub fn filter_sample(iou: f64, n_inliers: usize, penetration_ratio: f64, t: &FilterThresholds) -> Verdict {
    let reject = |r: &str| Verdict::Reject { reason: r.to_string() };
    if n_inliers < t.min_inliers {
        reject("inliers")
    } else if !(iou >= t.iou_min && iou <= t.iou_max) {
        reject("iou")
    } else if !(penetration_ratio <= t.max_penetration) {
        reject("penetration")
    } else {
        Verdict::Keep
    }
}
