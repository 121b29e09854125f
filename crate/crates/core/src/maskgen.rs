//! Sliding-window inpainting-mask proposals over an object silhouette.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Mask, Rect};

#[derive(Debug, Error, PartialEq)]
pub enum WindowError {
    #[error("window {0}x{1} must be positive")]
    Size(usize, usize),
    #[error("stride must satisfy 0 < stride <= window dimension")]
    Stride,
    #[error("overlap range must satisfy 0 <= lo <= hi <= 1 (got {0}, {1})")]
    Range(f64, f64),
}

/// How window/object overlap is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OverlapMode {
    /// `|W ∩ O| / |W ∪ O|`
    #[default]
    Iou,
    /// `|W ∩ O| / |O|`
    OverObject,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub width: usize,
    pub height: usize,
    pub stride_x: usize,
    pub stride_y: usize,
    pub iou_lo: f64,
    pub iou_hi: f64,
    #[serde(default)]
    pub mode: OverlapMode,
}

impl WindowSpec {
    pub fn validate(&self) -> Result<(), WindowError> {
        if self.width == 0 || self.height == 0 {
            return Err(WindowError::Size(self.width, self.height));
        }
        if self.stride_x == 0 || self.stride_y == 0 || self.stride_x > self.width || self.stride_y > self.height
        {
            return Err(WindowError::Stride);
        }
        if !(0.0 <= self.iou_lo && self.iou_lo <= self.iou_hi && self.iou_hi <= 1.0) {
            return Err(WindowError::Range(self.iou_lo, self.iou_hi));
        }
        Ok(())
    }
}

/// Windows (row-major) whose overlap with `object` lies in `[iou_lo, iou_hi]`
/// and whose center pixel falls inside the object's bounding box.
pub fn slide_windows(object: &Mask, spec: &WindowSpec) -> Result<Vec<Rect>, WindowError> {
    spec.validate()?;
    let Some(bbox) = object.bbox() else { return Ok(Vec::new()) };
    let (w, h) = (object.width(), object.height());
    // summed-area table with a zero border
    let mut sat = vec![0usize; (w + 1) * (h + 1)];
    for y in 0..h {
        let mut row = 0;
        for x in 0..w {
            row += object.get(x, y) as usize;
            sat[(y + 1) * (w + 1) + x + 1] = sat[y * (w + 1) + x + 1] + row;
        }
    }
    let object_area = object.count();
    let mut out = Vec::new();
    let mut y = 0;
    while y + spec.height <= h {
        let mut x = 0;
        while x + spec.width <= w {
            let r = Rect { x, y, w: spec.width, h: spec.height };
            if bbox.contains(x + spec.width / 2, y + spec.height / 2) {
                let at = |xx: usize, yy: usize| sat[yy * (w + 1) + xx];
                let inter = at(x + r.w, y + r.h) + at(x, y) - at(x + r.w, y) - at(x, y + r.h);
                let score = match spec.mode {
                    OverlapMode::Iou => inter as f64 / (r.area() + object_area - inter) as f64,
                    OverlapMode::OverObject => inter as f64 / object_area as f64,
                };
                if score >= spec.iou_lo && score <= spec.iou_hi {
                    out.push(r);
                }
            }
            x += spec.stride_x;
        }
        y += spec.stride_y;
    }
    Ok(out)
}

/// [`slide_windows`] rendered as filled rectangular masks.
pub fn slide_window_masks(object: &Mask, spec: &WindowSpec) -> Result<Vec<Mask>, WindowError> {
    Ok(slide_windows(object, spec)?
        .into_iter()
        .map(|r| Mask::from_rect(object.width(), object.height(), r).expect("object mask is nonempty"))
        .collect())
}
