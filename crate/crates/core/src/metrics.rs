//! Evaluation metrics: background RMSE, mask IoU and histogram intersection.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Image, Mask};

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("histograms have {0} and {1} bins")]
    BinCount(usize, usize),
    #[error("histogram has no mass")]
    ZeroMass,
    #[error("histogram has a negative or non-finite bin")]
    BadBin,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("mask covers every pixel")]
    NoBackground,
    #[error("mask lists have {0} and {1} entries")]
    ListLength(usize, usize),
}

/// Nonnegative bins; `normalized` records whether they sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bins: Vec<f64>,
    pub normalized: bool,
}

impl Histogram {
    pub fn new(bins: Vec<f64>) -> Result<Self, MetricError> {
        if bins.iter().any(|b| !(*b >= 0.0 && b.is_finite())) {
            return Err(MetricError::BadBin);
        }
        Ok(Self { bins, normalized: false })
    }

    pub fn normalized(&self) -> Result<Histogram, MetricError> {
        let total: f64 = self.bins.iter().sum();
        if !(total > 0.0) {
            return Err(MetricError::ZeroMass);
        }
        Ok(Histogram { bins: self.bins.iter().map(|b| b / total).collect(), normalized: true })
    }
}

/// `Σ_k min(a_k, b_k)` after scaling both to unit sum; in [0, 1].
///
/// The sum is divided by the larger rounded mass of the two scaled
/// histograms (one up to rounding), so identical inputs give exactly 1.
pub fn histogram_similarity(a: &Histogram, b: &Histogram) -> Result<f64, MetricError> {
    if a.bins.len() != b.bins.len() {
        return Err(MetricError::BinCount(a.bins.len(), b.bins.len()));
    }
    let (a, b) = (a.normalized()?, b.normalized()?);
    let mass = |h: &Histogram| h.bins.iter().sum::<f64>();
    let inter: f64 = a.bins.iter().zip(&b.bins).map(|(x, y)| x.min(*y)).sum();
    Ok(inter / mass(&a).max(mass(&b)))
}

/// RMS difference over all channels of the pixels where `human_mask` is false.
pub fn rmse_background(a: &Image, b: &Image, human_mask: &Mask) -> Result<f64, MetricError> {
    if !a.same_shape(b) {
        return Err(MetricError::Shape("images differ in size or channels".into()));
    }
    if human_mask.width() != a.width() || human_mask.height() != a.height() {
        return Err(MetricError::Shape("mask size differs from the images".into()));
    }
    let c = a.channels();
    let (mut sum, mut n) = (0.0, 0usize);
    for (p, &masked) in human_mask.bits().iter().enumerate() {
        if masked {
            continue;
        }
        for k in 0..c {
            let d = a.data()[p * c + k] - b.data()[p * c + k];
            sum += d * d;
        }
        n += c;
    }
    if n == 0 {
        return Err(MetricError::NoBackground);
    }
    Ok((sum / n as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiouResult {
    /// Mean over scored pairs; NaN when every pair was skipped.
    pub miou: f64,
    pub scored: usize,
    /// Pairs whose union was empty after exclusion.
    pub skipped: usize,
}

/// Mean IoU over mask pairs, with `exclude[k]` pixels removed from both masks
/// of pair `k` first.
pub fn miou(a: &[Mask], b: &[Mask], exclude: Option<&[Mask]>) -> Result<MiouResult, MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::ListLength(a.len(), b.len()));
    }
    if let Some(e) = exclude {
        if e.len() != a.len() {
            return Err(MetricError::ListLength(a.len(), e.len()));
        }
    }
    let (mut total, mut scored, mut skipped) = (0.0, 0, 0);
    for k in 0..a.len() {
        let (x, y) = (&a[k], &b[k]);
        if x.width() != y.width() || x.height() != y.height() {
            return Err(MetricError::Shape(format!("pair {k} masks differ in size")));
        }
        let ex = exclude.map(|e| &e[k]);
        if let Some(m) = ex {
            if m.width() != x.width() || m.height() != x.height() {
                return Err(MetricError::Shape(format!("pair {k} exclusion differs in size")));
            }
        }
        let (mut inter, mut union) = (0usize, 0usize);
        for p in 0..x.bits().len() {
            if ex.is_some_and(|m| m.bits()[p]) {
                continue;
            }
            let (u, v) = (x.bits()[p], y.bits()[p]);
            inter += (u && v) as usize;
            union += (u || v) as usize;
        }
        if union == 0 {
            skipped += 1;
        } else {
            total += inter as f64 / union as f64;
            scored += 1;
        }
    }
    Ok(MiouResult { miou: if scored > 0 { total / scored as f64 } else { f64::NAN }, scored, skipped })
}

/// Report columns, each optional; similarities are ×100.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    #[serde(rename = "RMSE_Background", skip_serializing_if = "Option::is_none", default)]
    pub rmse_background: Option<f64>,
    #[serde(rename = "mIoU", skip_serializing_if = "Option::is_none", default)]
    pub miou: Option<f64>,
    #[serde(rename = "mIoU_OcclusionAware", skip_serializing_if = "Option::is_none", default)]
    pub miou_occlusion_aware: Option<f64>,
    #[serde(rename = "SIM_Human", skip_serializing_if = "Option::is_none", default)]
    pub sim_human: Option<f64>,
    #[serde(rename = "SIM_Object", skip_serializing_if = "Option::is_none", default)]
    pub sim_object: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub skipped_pairs: Option<usize>,
}

impl MetricsReport {
    /// Two-line text table of the filled columns.
    pub fn table(&self) -> String {
        let cols = [
            ("RMSE_Background", self.rmse_background),
            ("mIoU", self.miou),
            ("mIoU_OcclusionAware", self.miou_occlusion_aware),
            ("SIM_Human", self.sim_human),
            ("SIM_Object", self.sim_object),
        ];
        let filled: Vec<_> = cols.iter().filter(|(_, v)| v.is_some()).collect();
        let head: Vec<String> = filled.iter().map(|(n, _)| format!("{n:>20}")).collect();
        let row: Vec<String> = filled.iter().map(|(_, v)| format!("{:>20.4}", v.unwrap())).collect();
        format!("{}\n{}\n", head.join(" "), row.join(" "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(bits: &[u8]) -> Mask {
        Mask::from_bits(bits.len(), 1, bits.iter().map(|&b| b == 1).collect()).unwrap()
    }

    #[test]
    fn similarity_examples() {
        let h = |v: Vec<f64>| Histogram::new(v).unwrap();
        assert_eq!(histogram_similarity(&h(vec![0.5, 0.5]), &h(vec![0.25, 0.75])).unwrap(), 0.75);
        assert_eq!(histogram_similarity(&h(vec![1.0, 0.0]), &h(vec![0.0, 3.0])).unwrap(), 0.0);
        assert_eq!(histogram_similarity(&h(vec![2.0, 6.0]), &h(vec![1.0, 3.0])).unwrap(), 1.0);
        assert_eq!(histogram_similarity(&h(vec![0.0]), &h(vec![0.0])), Err(MetricError::ZeroMass));
        assert_eq!(histogram_similarity(&h(vec![1.0]), &h(vec![1.0, 1.0])), Err(MetricError::BinCount(1, 2)));
    }

    #[test]
    fn rmse_ignores_masked_pixels() {
        let a = Image::from_data(2, 1, 1, vec![0.0, 10.0]).unwrap();
        let b = Image::from_data(2, 1, 1, vec![3.0, 0.0]).unwrap();
        assert_eq!(rmse_background(&a, &b, &mask(&[0, 1])).unwrap(), 3.0);
        assert_eq!(rmse_background(&a, &a, &mask(&[0, 0])).unwrap(), 0.0);
        assert_eq!(rmse_background(&a, &b, &mask(&[1, 1])), Err(MetricError::NoBackground));
    }

    #[test]
    fn miou_examples() {
        let (x, y) = (mask(&[1, 1, 0, 0]), mask(&[0, 0, 1, 1]));
        let r = miou(&[x.clone(), x.clone()], &[y.clone(), x.clone()], None).unwrap();
        assert_eq!(r.miou, 0.5);
        let ex = mask(&[1, 1, 1, 1]);
        let r = miou(&[x.clone(), x.clone()], &[y, x.clone()], Some(&[ex, mask(&[0, 0, 0, 0])])).unwrap();
        assert_eq!((r.miou, r.scored, r.skipped), (1.0, 1, 1));
        let (p, q) = (mask(&[1, 1, 0]), mask(&[1, 0, 1]));
        let r = miou(&[p], &[q], Some(&[mask(&[0, 1, 1])])).unwrap();
        assert_eq!(r.miou, 1.0);
    }

    #[test]
    fn report_uses_table_column_names() {
        let r = MetricsReport { sim_human: Some(100.0), sim_object: Some(87.5), ..Default::default() };
        let t = r.table();
        assert!(t.contains("SIM_Human") && t.contains("SIM_Object") && !t.contains("mIoU"));
        let j = serde_json::to_string(&r).unwrap();
        assert!(j.contains("\"SIM_Human\":100.0"));
    }
}
