//! Deterministic stand-ins for the diffusion, decoder and segmentation
//! models: an identity decoder, an oracle denoiser that always predicts the
//! true noise for a fixed target, a painter that inserts a bright blob and
//! hallucinates over the rest of its mask, and an intensity threshold.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Condition, Decoder, Denoiser, DiffusionSchedule, ModelError, Segmenter};
use crate::geom::{Image, Mask, Rect};

/// Latent space equals image space.
#[derive(Debug, Default, Clone, Copy)]
pub struct IdentityDecoder;

impl Decoder for IdentityDecoder {
    fn encode(&mut self, image: &Image) -> Result<Image, ModelError> {
        Ok(image.clone())
    }

    fn decode(&mut self, latent: &Image) -> Result<Image, ModelError> {
        Ok(latent.clone())
    }
}

fn noise_for(target: &[f64], x_t: &Image, t: usize, schedule: &DiffusionSchedule) -> Result<Image, ModelError> {
    let a = schedule.alpha_bar(t)?;
    let (sa, sn) = (a.sqrt(), (1.0 - a).sqrt());
    let data = x_t.data().iter().zip(target).map(|(x, y)| (x - sa * y) / sn).collect();
    Ok(Image::from_data(x_t.width(), x_t.height(), x_t.channels(), data)?)
}

/// Predicts the noise that makes `x̂_0` equal `target` exactly.
#[derive(Debug, Clone)]
pub struct OracleDenoiser {
    pub target: Image,
    pub schedule: DiffusionSchedule,
}

impl Denoiser for OracleDenoiser {
    fn predict_noise(&mut self, x_t: &Image, _: &Condition, _: &Mask, _: &Image, t: usize) -> Result<Image, ModelError> {
        noise_for(self.target.data(), x_t, t, &self.schedule)
    }
}

/// Inside the current mask, paints `blob` at `blob_value` and replaces
/// everything else with `hallucination`; outside the mask it reproduces the
/// original image.
#[derive(Debug, Clone)]
pub struct BlobPainter {
    pub blob: Mask,
    pub blob_value: f64,
    pub hallucination: Image,
    pub schedule: DiffusionSchedule,
}

impl Denoiser for BlobPainter {
    fn predict_noise(&mut self, x_t: &Image, _: &Condition, mask: &Mask, original: &Image, t: usize) -> Result<Image, ModelError> {
        let c = x_t.channels();
        let mut target = original.data().to_vec();
        for (p, &inside) in mask.bits().iter().enumerate() {
            if inside {
                for k in p * c..(p + 1) * c {
                    target[k] = if self.blob.bits()[p] { self.blob_value } else { self.hallucination.data()[k] };
                }
            }
        }
        noise_for(&target, x_t, t, &self.schedule)
    }
}

/// Pixels whose mean channel value exceeds `threshold`.
#[derive(Debug, Clone, Copy)]
pub struct ThresholdSegmenter {
    pub threshold: f64,
}

impl Segmenter for ThresholdSegmenter {
    fn segment(&mut self, image: &Image) -> Result<Option<Mask>, ModelError> {
        let c = image.channels();
        let bits: Vec<bool> = image
            .data()
            .chunks(c)
            .map(|px| px.iter().sum::<f64>() / c as f64 > self.threshold)
            .collect();
        let m = Mask::from_bits(image.width(), image.height(), bits)?;
        Ok((!m.is_empty()).then_some(m))
    }
}

/// Segmenter that never finds anything.
#[derive(Debug, Default, Clone, Copy)]
pub struct EmptySegmenter;

impl Segmenter for EmptySegmenter {
    fn segment(&mut self, _: &Image) -> Result<Option<Mask>, ModelError> {
        Ok(None)
    }
}

/// Flat background with a textured object, a default inpainting window
/// overlapping the object, and a disk-shaped blob inside the window.
#[derive(Debug, Clone)]
pub struct ToyScene {
    pub original: Image,
    pub default_mask: Mask,
    pub blob: Mask,
    pub hallucination: Image,
}

impl ToyScene {
    /// All intensities except the blob stay below 0.5.
    pub fn generate(seed: u64, size: usize) -> ToyScene {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = size as f64;
        let mut original = Image::filled(size, size, 1, 0.2).expect("positive size");
        let obj = Rect {
            x: rng.random_range(size / 8..size / 3),
            y: rng.random_range(size / 8..size / 3),
            w: size / 2,
            h: size / 2,
        };
        for y in obj.y..obj.y + obj.h {
            for x in obj.x..obj.x + obj.w {
                let texture = if (x / 3 + y / 3) % 2 == 0 { 0.05 } else { -0.05 };
                original.set(x, y, 0, 0.38 + texture);
            }
        }
        let win = Rect {
            x: rng.random_range(size / 4..size / 2 - size / 8),
            y: rng.random_range(size / 4..size / 2 - size / 8),
            w: size / 2,
            h: size / 2,
        };
        let default_mask = Mask::from_rect(size, size, win).expect("positive size");
        let radius = rng.random_range(0.08 * s..0.14 * s);
        let cx = win.x as f64 + rng.random_range(radius + 1.0..win.w as f64 - radius - 1.0);
        let cy = win.y as f64 + rng.random_range(radius + 1.0..win.h as f64 - radius - 1.0);
        let mut blob = Mask::new(size, size).expect("positive size");
        let mut hallucination = Image::new(size, size, 1).expect("positive size");
        let phase: f64 = rng.random_range(0.0..std::f64::consts::TAU);
        for y in 0..size {
            for x in 0..size {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                blob.set(x, y, dx * dx + dy * dy <= radius * radius);
                hallucination.set(x, y, 0, 0.3 + 0.1 * (0.4 * x as f64 + 0.3 * y as f64 + phase).sin());
            }
        }
        ToyScene { original, default_mask, blob, hallucination }
    }

    pub fn painter(&self, schedule: &DiffusionSchedule) -> BlobPainter {
        BlobPainter {
            blob: self.blob.clone(),
            blob_value: 1.0,
            hallucination: self.hallucination.clone(),
            schedule: schedule.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::super::{dilate, run_adaptive_inpainting, InpaintConfig};
    use super::*;

    fn schedule() -> DiffusionSchedule {
        DiffusionSchedule::linear(50, 0.9999, 0.01).unwrap()
    }

    #[test]
    fn empty_segmenter_keeps_default_mask() {
        let scene = ToyScene::generate(3, 32);
        let s = schedule();
        let run = run_adaptive_inpainting(
            &mut scene.painter(&s),
            &mut IdentityDecoder,
            &mut EmptySegmenter,
            &s,
            &scene.default_mask,
            &scene.original,
            &Condition::default(),
            &InpaintConfig::default(),
            1,
        )
        .unwrap();
        assert!(run.steps.iter().all(|r| r.mask == scene.default_mask));
    }

    #[test]
    fn perfect_denoiser_reproduces_original() {
        let scene = ToyScene::generate(4, 32);
        let s = schedule();
        let mut oracle = OracleDenoiser { target: scene.original.clone(), schedule: s.clone() };
        let run = run_adaptive_inpainting(
            &mut oracle,
            &mut IdentityDecoder,
            &mut ThresholdSegmenter { threshold: 0.5 },
            &s,
            &scene.default_mask,
            &scene.original,
            &Condition::default(),
            &InpaintConfig::default(),
            9,
        )
        .unwrap();
        for (a, b) in run.image.data().iter().zip(scene.original.data()) {
            assert!((a - b).abs() < 1e-4);
        }
    }

    #[test]
    fn blob_scene_adapts_to_the_blob() {
        for seed in 0..5 {
            let scene = ToyScene::generate(seed, 48);
            let s = schedule();
            let run = run_adaptive_inpainting(
                &mut scene.painter(&s),
                &mut IdentityDecoder,
                &mut ThresholdSegmenter { threshold: 0.5 },
                &s,
                &scene.default_mask,
                &scene.original,
                &Condition::default(),
                &InpaintConfig::default(),
                seed,
            )
            .unwrap();
            assert!(run.final_mask.is_subset_of(&dilate(&scene.blob, 1)));
            // every adapted mask is exactly the dilated segmentation
            for r in &run.steps {
                if let Some(seg) = &r.segmentation {
                    assert_eq!(r.mask, dilate(seg, r.repeats));
                }
            }
            // untouched pixels keep the original
            let covered = run.covered(&scene.default_mask);
            for (p, &c) in covered.bits().iter().enumerate() {
                if !c {
                    assert!((run.image.data()[p] - scene.original.data()[p]).abs() < 1e-4);
                }
            }
            let outside = scene.default_mask.not();
            for (p, &o) in outside.bits().iter().enumerate() {
                if o {
                    assert!((run.image.data()[p] - scene.original.data()[p]).abs() < 1e-6);
                }
            }
        }
    }
}
