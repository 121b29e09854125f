//! Adaptive-mask inpainting: a DDIM denoising loop whose inpainting mask is
//! re-derived from a segmentation of the predicted clean image at selected
//! timesteps. Models are abstract; [`toy`] supplies deterministic stand-ins.

mod schedule;
pub mod toy;

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{Image, Mask};

pub use schedule::{
    ddim_step, ddim_step_with, default_provoke_schedule, dilation_repeats, dilation_repeats_with, predict_x0,
    predict_x0_with, rescale_timesteps, DiffusionSchedule, DilationBand, ScheduleError, DEFAULT_DILATION_TABLE,
    REFERENCE_STEPS,
};

/// Error raised by a model behind one of the interfaces.
pub type ModelError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum InpaintError {
    #[error("{stage} failed at t = {t}: {source}")]
    Model {
        stage: &'static str,
        t: usize,
        #[source]
        source: ModelError,
    },
    #[error("{stage} at t = {t} returned a {got} output, expected {expected}")]
    Shape { stage: &'static str, t: usize, got: String, expected: String },
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("default mask is empty")]
    EmptyMask,
    #[error("default mask is {0}x{1} but the latent is {2}x{3}")]
    MaskSize(usize, usize, usize, usize),
}

/// Text prompt plus a guidance scale passed through to the denoiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub prompt: String,
    pub guidance_scale: f64,
}

impl Default for Condition {
    fn default() -> Self {
        Self { prompt: String::new(), guidance_scale: 11.0 }
    }
}

/// `ε_θ(x_t; c, m_t, I_orig, t)`.
pub trait Denoiser {
    fn predict_noise(
        &mut self,
        x_t: &Image,
        condition: &Condition,
        mask: &Mask,
        original: &Image,
        t: usize,
    ) -> Result<Image, ModelError>;
}

/// Latent autoencoder. Masks live at latent resolution.
pub trait Decoder {
    fn encode(&mut self, image: &Image) -> Result<Image, ModelError>;
    fn decode(&mut self, latent: &Image) -> Result<Image, ModelError>;
}

/// Human segmentation; `None` when nothing is found.
pub trait Segmenter {
    fn segment(&mut self, image: &Image) -> Result<Option<Mask>, ModelError>;
}

/// Binary dilation by the 3x3 all-ones element, `repeats` times. Equivalent
/// to a Chebyshev-radius `repeats` dilation clipped to the raster.
pub fn dilate(mask: &Mask, repeats: usize) -> Mask {
    if repeats == 0 {
        return mask.clone();
    }
    let (w, h) = (mask.width(), mask.height());
    let r = repeats;
    let mut rows = Mask::new(w, h).expect("same size");
    for y in 0..h {
        // distance to the nearest set pixel on each side within the row
        let mut last: Option<usize> = None;
        for x in 0..w {
            if mask.get(x, y) {
                last = Some(x);
            }
            if last.is_some_and(|l| x - l <= r) {
                rows.set(x, y, true);
            }
        }
        let mut next: Option<usize> = None;
        for x in (0..w).rev() {
            if mask.get(x, y) {
                next = Some(x);
            }
            if next.is_some_and(|n| n - x <= r) {
                rows.set(x, y, true);
            }
        }
    }
    let mut out = Mask::new(w, h).expect("same size");
    for x in 0..w {
        let mut last: Option<usize> = None;
        for y in 0..h {
            if rows.get(x, y) {
                last = Some(y);
            }
            if last.is_some_and(|l| y - l <= r) {
                out.set(x, y, true);
            }
        }
        let mut next: Option<usize> = None;
        for y in (0..h).rev() {
            if rows.get(x, y) {
                next = Some(y);
            }
            if next.is_some_and(|n| n - y <= r) {
                out.set(x, y, true);
            }
        }
    }
    out
}

/// Run settings. `None` overrides fall back to the default schedules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InpaintConfig {
    /// When false the mask stays at the default for the whole run.
    pub adaptive: bool,
    #[serde(default)]
    pub provoke: Option<Vec<usize>>,
    #[serde(default)]
    pub dilation_table: Option<Vec<DilationBand>>,
}

impl Default for InpaintConfig {
    fn default() -> Self {
        Self { adaptive: true, provoke: None, dilation_table: None }
    }
}

/// What happened while going from `t` to `t − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub t: usize,
    pub provoked: bool,
    /// Segmentation of the decoded `x̂_0` at provoke steps, if nonempty.
    pub segmentation: Option<Mask>,
    pub repeats: usize,
    /// `m_{t−1}`.
    pub mask: Mask,
}

#[derive(Debug, Clone)]
pub struct InpaintingRun {
    /// Decoded `x_0`.
    pub image: Image,
    pub steps: Vec<StepRecord>,
    /// `m_0`.
    pub final_mask: Mask,
}

impl InpaintingRun {
    /// Union of every mask the run used, `m_T` through `m_0`.
    pub fn covered(&self, default_mask: &Mask) -> Mask {
        self.steps.iter().fold(default_mask.clone(), |acc, s| acc.or(&s.mask).expect("same size"))
    }
}

fn check_shape(stage: &'static str, t: usize, got: &Image, want: &Image) -> Result<(), InpaintError> {
    if got.same_shape(want) {
        Ok(())
    } else {
        let fmt = |i: &Image| format!("{}x{}x{}", i.width(), i.height(), i.channels());
        Err(InpaintError::Shape { stage, t, got: fmt(got), expected: fmt(want) })
    }
}

/// Forward-noised original at level `a`, composited outside `mask`.
fn composite(x: &mut Image, mask: &Mask, orig: &Image, noise: &[f64], a: f64) {
    let c = x.channels();
    let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
    let data = x.data_mut();
    for (p, &inside) in mask.bits().iter().enumerate() {
        if !inside {
            for k in p * c..(p + 1) * c {
                data[k] = sa * orig.data()[k] + sn * noise[k];
            }
        }
    }
}

/// Denoises from `x_T ~ N(0, I)` to `x_0`, keeping pixels outside the current
/// mask tied to the forward-noised original. At provoke steps the mask
/// becomes the dilated segmentation of `D(x̂_0)`, or `default_mask` when the
/// segmentation is empty; otherwise it carries over.
#[allow(clippy::too_many_arguments)]
pub fn run_adaptive_inpainting(
    denoiser: &mut dyn Denoiser,
    decoder: &mut dyn Decoder,
    segmenter: &mut dyn Segmenter,
    schedule: &DiffusionSchedule,
    default_mask: &Mask,
    original_image: &Image,
    condition: &Condition,
    config: &InpaintConfig,
    seed: u64,
) -> Result<InpaintingRun, InpaintError> {
    if default_mask.is_empty() {
        return Err(InpaintError::EmptyMask);
    }
    let total = schedule.steps();
    let original = decoder
        .encode(original_image)
        .map_err(|source| InpaintError::Model { stage: "encoder", t: total, source })?;
    if default_mask.width() != original.width() || default_mask.height() != original.height() {
        return Err(InpaintError::MaskSize(
            default_mask.width(),
            default_mask.height(),
            original.width(),
            original.height(),
        ));
    }
    let provoke: BTreeSet<usize> = match &config.provoke {
        Some(list) => list.iter().copied().collect(),
        None => default_provoke_schedule(total),
    };
    let table = config.dilation_table.as_deref().unwrap_or(&DEFAULT_DILATION_TABLE);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = original.data().len();
    let mut normal = || -> Vec<f64> { (0..n).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let mut x = Image::from_data(original.width(), original.height(), original.channels(), normal())
        .expect("latent shape");
    // fixed noise used to forward-noise the original at every level
    let orig_noise = normal();

    let mut mask = default_mask.clone();
    composite(&mut x, &mask, &original, &orig_noise, schedule.alpha_bar(total)?);
    let mut steps = Vec::with_capacity(total);
    for t in (1..=total).rev() {
        let eps = denoiser
            .predict_noise(&x, condition, &mask, &original, t)
            .map_err(|source| InpaintError::Model { stage: "denoiser", t, source })?;
        check_shape("denoiser", t, &eps, &x)?;
        let x0 = predict_x0(x.data(), eps.data(), t, schedule)?;
        let x0_img = Image::from_data(x.width(), x.height(), x.channels(), x0).expect("latent shape");
        let provoked = config.adaptive && provoke.contains(&t);
        let mut segmentation = None;
        let mut repeats = 0;
        if provoked {
            let decoded = decoder
                .decode(&x0_img)
                .map_err(|source| InpaintError::Model { stage: "decoder", t, source })?;
            let seg = segmenter
                .segment(&decoded)
                .map_err(|source| InpaintError::Model { stage: "segmenter", t, source })?;
            match seg.filter(|s| !s.is_empty()) {
                Some(s) => {
                    if s.width() != mask.width() || s.height() != mask.height() {
                        return Err(InpaintError::Shape {
                            stage: "segmenter",
                            t,
                            got: format!("{}x{}", s.width(), s.height()),
                            expected: format!("{}x{}", mask.width(), mask.height()),
                        });
                    }
                    repeats = dilation_repeats_with(t, total, table);
                    mask = dilate(&s, repeats);
                    segmentation = Some(s);
                }
                None => mask = default_mask.clone(),
            }
        }
        let next = ddim_step(x.data(), x0_img.data(), t, schedule)?;
        x = Image::from_data(x.width(), x.height(), x.channels(), next).expect("latent shape");
        composite(&mut x, &mask, &original, &orig_noise, schedule.alpha_bar(t - 1)?);
        steps.push(StepRecord { t, provoked, segmentation, repeats, mask: mask.clone() });
    }
    let image = decoder
        .decode(&x)
        .map_err(|source| InpaintError::Model { stage: "decoder", t: 0, source })?;
    Ok(InpaintingRun { image, steps, final_mask: mask })
}
