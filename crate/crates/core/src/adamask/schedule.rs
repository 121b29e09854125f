//! Noise schedule, the DDIM (eta = 0) update and the dilation / provoke
//! timestep schedules. Timestep schedules are tabulated for 50-step runs and
//! rescaled linearly for other step counts.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ScheduleError {
    #[error("schedule needs at least one step")]
    Empty,
    #[error("alpha_bar[{t}] = {value} is outside (0, 1]")]
    OutOfRange { t: usize, value: f64 },
    #[error("alpha_bar must strictly decrease with t (violated at t = {0})")]
    NotDecreasing(usize),
    #[error("timestep {t} outside [1, {total}]")]
    Timestep { t: usize, total: usize },
    #[error("length mismatch: {0} vs {1}")]
    Length(usize, usize),
}

/// Cumulative signal levels `ᾱ_t` for `t = 1..=T`, with `ᾱ_0 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    alpha_bar: Vec<f64>,
}

impl DiffusionSchedule {
    /// `alpha_bar[k]` is `ᾱ_{k+1}`; values must lie in (0, 1] and strictly
    /// decrease.
    pub fn new(alpha_bar: Vec<f64>) -> Result<Self, ScheduleError> {
        if alpha_bar.is_empty() {
            return Err(ScheduleError::Empty);
        }
        for (k, &a) in alpha_bar.iter().enumerate() {
            if !(a > 0.0 && a <= 1.0) {
                return Err(ScheduleError::OutOfRange { t: k + 1, value: a });
            }
            if k > 0 && a >= alpha_bar[k - 1] {
                return Err(ScheduleError::NotDecreasing(k + 1));
            }
        }
        Ok(Self { alpha_bar })
    }

    /// `ᾱ_t` linear in `t` from `first` at `t = 1` to `last` at `t = T`.
    pub fn linear(steps: usize, first: f64, last: f64) -> Result<Self, ScheduleError> {
        if steps == 0 {
            return Err(ScheduleError::Empty);
        }
        if steps == 1 {
            return Self::new(vec![first]);
        }
        let step = (last - first) / (steps - 1) as f64;
        Self::new((0..steps).map(|k| first + step * k as f64).collect())
    }

    pub fn steps(&self) -> usize {
        self.alpha_bar.len()
    }

    /// `ᾱ_t`, with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64, ScheduleError> {
        match t {
            0 => Ok(1.0),
            t if t <= self.alpha_bar.len() => Ok(self.alpha_bar[t - 1]),
            t => Err(ScheduleError::Timestep { t, total: self.alpha_bar.len() }),
        }
    }
}

/// `x̂_0 = (x_t − √(1−ᾱ_t) ε) / √ᾱ_t`.
pub fn predict_x0(x_t: &[f64], eps: &[f64], t: usize, schedule: &DiffusionSchedule) -> Result<Vec<f64>, ScheduleError> {
    if t == 0 {
        return Err(ScheduleError::Timestep { t, total: schedule.steps() });
    }
    predict_x0_with(x_t, eps, schedule.alpha_bar(t)?)
}

pub fn predict_x0_with(x_t: &[f64], eps: &[f64], alpha_bar: f64) -> Result<Vec<f64>, ScheduleError> {
    if x_t.len() != eps.len() {
        return Err(ScheduleError::Length(x_t.len(), eps.len()));
    }
    if !(alpha_bar > 0.0) {
        return Err(ScheduleError::OutOfRange { t: 0, value: alpha_bar });
    }
    let (sa, sn) = (alpha_bar.sqrt(), (1.0 - alpha_bar).max(0.0).sqrt());
    Ok(x_t.iter().zip(eps).map(|(x, e)| (x - sn * e) / sa).collect())
}

/// Deterministic DDIM step from `t` to `t − 1`; returns `x̂_0` at `t = 1`.
pub fn ddim_step(x_t: &[f64], x0_hat: &[f64], t: usize, schedule: &DiffusionSchedule) -> Result<Vec<f64>, ScheduleError> {
    if t == 0 {
        return Err(ScheduleError::Timestep { t, total: schedule.steps() });
    }
    if t == 1 {
        return Ok(x0_hat.to_vec());
    }
    ddim_step_with(x_t, x0_hat, schedule.alpha_bar(t)?, schedule.alpha_bar(t - 1)?)
}

/// DDIM update between explicit levels `ᾱ_t` and `ᾱ_{t−1}`.
pub fn ddim_step_with(x_t: &[f64], x0_hat: &[f64], a_t: f64, a_prev: f64) -> Result<Vec<f64>, ScheduleError> {
    if x_t.len() != x0_hat.len() {
        return Err(ScheduleError::Length(x_t.len(), x0_hat.len()));
    }
    let n_t = (1.0 - a_t).max(0.0).sqrt();
    let n_prev = (1.0 - a_prev).max(0.0).sqrt();
    Ok(x_t
        .iter()
        .zip(x0_hat)
        .map(|(x, x0)| {
            // at a noiseless level the implied noise is zero
            let eps = if n_t > 0.0 { (x - a_t.sqrt() * x0) / n_t } else { 0.0 };
            a_prev.sqrt() * x0 + n_prev * eps
        })
        .collect())
}

/// One row of the dilation table: timesteps `t ≥ from` (50-step scale) use
/// `repeats`, unless a row with a larger `from` also applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DilationBand {
    pub from: usize,
    pub repeats: usize,
}

pub const DEFAULT_DILATION_TABLE: [DilationBand; 8] = [
    DilationBand { from: 45, repeats: 20 },
    DilationBand { from: 40, repeats: 10 },
    DilationBand { from: 35, repeats: 5 },
    DilationBand { from: 30, repeats: 4 },
    DilationBand { from: 25, repeats: 3 },
    DilationBand { from: 20, repeats: 2 },
    DilationBand { from: 15, repeats: 1 },
    DilationBand { from: 0, repeats: 0 },
];

/// Reference step count the timestep tables are written for.
pub const REFERENCE_STEPS: usize = 50;

/// Dilation repeats at timestep `t` of a `total_steps` run.
pub fn dilation_repeats(t: usize, total_steps: usize) -> usize {
    dilation_repeats_with(t, total_steps, &DEFAULT_DILATION_TABLE)
}

pub fn dilation_repeats_with(t: usize, total_steps: usize, table: &[DilationBand]) -> usize {
    let scaled = t as f64 * REFERENCE_STEPS as f64 / total_steps.max(1) as f64;
    table
        .iter()
        .filter(|b| scaled >= b.from as f64)
        .max_by_key(|b| b.from)
        .map_or(0, |b| b.repeats)
}

/// `{t | 40 ≥ t ≥ 2, t even} ∪ {45}` for 50 steps, each element mapped to
/// `round(t · total / 50)` clamped to `[1, total]` otherwise.
pub fn default_provoke_schedule(total_steps: usize) -> BTreeSet<usize> {
    let base = (2..=40).step_by(2).chain([45]);
    rescale_timesteps(base, total_steps)
}

pub fn rescale_timesteps(base: impl IntoIterator<Item = usize>, total_steps: usize) -> BTreeSet<usize> {
    let total = total_steps.max(1);
    base.into_iter()
        .map(|t| {
            let s = (t as f64 * total as f64 / REFERENCE_STEPS as f64).round() as usize;
            s.clamp(1, total)
        })
        .collect()
}
