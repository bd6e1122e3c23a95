//! Adaptive sampling-rate controller.
//!
//! On every sampled iteration the controller records the PSF norm and the
//! PSF/SGD norm ratio. From the last `N` sampled PSF norms it computes a
//! sliced variance `v` (sort, split into `M` slices, average the per-slice
//! population variances). Every `N` iterations after warmup the sample
//! budget is updated multiplicatively from the mean relative change of the
//! `v` and ratio histories:
//!
//! ```text
//! s ← clamp(s · (1 + α·ĉ_var + α·ĉ_norm), 1, p_max·N)
//! p ← s / N
//! ```

use std::collections::VecDeque;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Bernoulli(p) with the per-window cap.
    #[default]
    Adaptive,
    /// Sample on every iteration (the run degenerates to SAM).
    Always,
    /// Never sample after warmup.
    Never,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplerConfig {
    /// Window length `N`: buffer capacity and rate-update period.
    pub window: usize,
    /// Slice count `M` for the sliced variance.
    pub slices: usize,
    pub alpha: f64,
    /// Initial per-window sample budget `s₁`.
    pub s1: f64,
    /// Warmup iterations during which every step samples.
    pub i_start: usize,
    pub p_max: f64,
    /// Parameter segments whose norms feed the controller; empty selects
    /// the last two segments.
    pub subset_segments: Vec<String>,
    pub eps: f64,
    pub mode: SamplingMode,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            window: 50,
            slices: 5,
            alpha: 0.13,
            s1: 25.0,
            i_start: 250,
            p_max: 0.8,
            subset_segments: Vec::new(),
            eps: 1e-12,
            mode: SamplingMode::Adaptive,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.slices < 2 {
            return Err(Error::config("sampler slices (M) must be at least 2"));
        }
        if self.window == 0 || !self.window.is_multiple_of(self.slices) {
            return Err(Error::config(format!(
                "sampler window N = {} must be a positive multiple of M = {}",
                self.window, self.slices
            )));
        }
        if !(self.p_max > 0.0 && self.p_max <= 1.0) {
            return Err(Error::config("p_max must lie in (0, 1]"));
        }
        if !(self.s1 >= 1.0 && self.s1 <= self.budget_ceiling()) {
            return Err(Error::config(format!(
                "s1 = {} must lie in [1, p_max·N = {}]",
                self.s1,
                self.budget_ceiling()
            )));
        }
        if !(self.alpha.is_finite() && self.alpha >= 0.0) {
            return Err(Error::config("alpha must be finite and nonnegative"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::config("eps must be positive"));
        }
        Ok(())
    }

    /// Upper clamp for the budget `s`.
    pub fn budget_ceiling(&self) -> f64 {
        self.p_max * self.window as f64
    }

    /// Maximum samples that may fire inside one window.
    pub fn window_cap(&self) -> usize {
        (self.p_max * self.window as f64).floor() as usize
    }
}

/// Mean of the per-slice population variances of the sorted values.
///
/// Slice `j` of `n` sorted values covers indices `⌊j·n/M⌋ .. ⌊(j+1)·n/M⌋`,
/// so slices are equal when `M` divides `n` and differ by at most one
/// otherwise. With fewer than `M` values the population variance of all
/// values is returned (see [`is_degenerate`]).
pub fn sliced_variance(values: &[f64], slices: usize) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.len() < slices || slices <= 1 {
        return population_variance(&sorted);
    }
    let n = sorted.len();
    let total: f64 = (0..slices)
        .map(|j| population_variance(&sorted[j * n / slices..(j + 1) * n / slices]))
        .sum();
    total / slices as f64
}

/// True when [`sliced_variance`] falls back to the whole-list variance.
pub fn is_degenerate(len: usize, slices: usize) -> bool {
    len < slices
}

fn population_variance(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

/// Mean of consecutive relative changes `(h[i] − h[i−1]) / h[i−1]`.
///
/// A term whose denominator has magnitude below `eps` contributes 0 but
/// still counts toward the mean. Fewer than two entries give 0.
pub fn change_rate_series<'a>(history: impl IntoIterator<Item = &'a f64>, eps: f64) -> f64 {
    let mut prev: Option<f64> = None;
    let mut sum = 0.0;
    let mut terms = 0usize;
    for &h in history {
        if let Some(p) = prev {
            if p.abs() >= eps {
                sum += (h - p) / p;
            }
            terms += 1;
        }
        prev = Some(h);
    }
    if terms == 0 {
        0.0
    } else {
        sum / terms as f64
    }
}

/// `l2_psf / max(l2_sgd, eps)`
pub fn norm_ratio(l2_psf: f64, l2_sgd: f64, eps: f64) -> f64 {
    l2_psf / l2_sgd.max(eps)
}

/// Per-iteration view of the controller for logging.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SamplerSnapshot {
    pub p: f64,
    pub s: f64,
    pub c_var: f64,
    pub c_norm: f64,
    pub v: f64,
    pub r: f64,
    pub v_degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct SamplerState {
    gnorm: VecDeque<f64>,
    v_history: VecDeque<f64>,
    r_history: VecDeque<f64>,
    s: f64,
    p: f64,
    window_iter: usize,
    window_samples: usize,
    c_var: f64,
    c_norm: f64,
    v_degenerate: bool,
    rng: ChaCha8Rng,
}

fn push_bounded(buf: &mut VecDeque<f64>, cap: usize, v: f64) {
    if buf.len() == cap {
        buf.pop_front();
    }
    buf.push_back(v);
}

impl SamplerState {
    pub fn new(config: &SamplerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            gnorm: VecDeque::with_capacity(config.window),
            v_history: VecDeque::with_capacity(config.window),
            r_history: VecDeque::with_capacity(config.window),
            s: config.s1,
            p: config.s1 / config.window as f64,
            window_iter: 0,
            window_samples: 0,
            c_var: 0.0,
            c_norm: 0.0,
            v_degenerate: false,
            rng: rng::stream(seed, Stream::Sampler),
        })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn window_iter(&self) -> usize {
        self.window_iter
    }

    pub fn window_samples(&self) -> usize {
        self.window_samples
    }

    pub fn gnorm_buffer(&self) -> &VecDeque<f64> {
        &self.gnorm
    }

    pub fn v_history(&self) -> &VecDeque<f64> {
        &self.v_history
    }

    pub fn r_history(&self) -> &VecDeque<f64> {
        &self.r_history
    }

    pub fn snapshot(&self) -> SamplerSnapshot {
        SamplerSnapshot {
            p: self.p,
            s: self.s,
            c_var: self.c_var,
            c_norm: self.c_norm,
            v: self.v_history.back().copied().unwrap_or(0.0),
            r: self.r_history.back().copied().unwrap_or(0.0),
            v_degenerate: self.v_degenerate,
        }
    }

    /// Decides whether iteration `i` (1-based) samples.
    ///
    /// Warmup iterations always sample and sit outside any window; the
    /// first window opens at `i_start + 1`.
    pub fn should_sample(&mut self, config: &SamplerConfig, i: usize) -> bool {
        if i <= config.i_start {
            return true;
        }
        if i == config.i_start + 1 {
            self.window_iter = 0;
            self.window_samples = 0;
        }
        self.window_iter += 1;
        match config.mode {
            SamplingMode::Always => true,
            SamplingMode::Never => false,
            SamplingMode::Adaptive => {
                if self.window_samples >= config.window_cap() {
                    return false;
                }
                self.rng.gen::<f64>() < self.p
            }
        }
    }

    /// Records the (subset) norms of a sampled iteration.
    pub fn record_sample(&mut self, config: &SamplerConfig, l2_psf: f64, l2_sgd: f64) {
        let cap = config.window;
        push_bounded(&mut self.gnorm, cap, l2_psf);
        let values: Vec<f64> = self.gnorm.iter().copied().collect();
        let v = sliced_variance(&values, config.slices);
        self.v_degenerate = is_degenerate(values.len(), config.slices);
        push_bounded(&mut self.v_history, cap, v);
        push_bounded(
            &mut self.r_history,
            cap,
            norm_ratio(l2_psf, l2_sgd, config.eps),
        );
        self.window_samples += 1;
    }

    /// Window-boundary update of the budget `s` and rate `p`.
    pub fn update_rate(&mut self, config: &SamplerConfig) {
        self.c_var = change_rate_series(&self.v_history, config.eps);
        self.c_norm = change_rate_series(&self.r_history, config.eps);
        let factor = 1.0 + config.alpha * self.c_var + config.alpha * self.c_norm;
        self.s = (self.s * factor).clamp(1.0, config.budget_ceiling());
        self.p = self.s / config.window as f64;
        self.window_iter = 0;
        self.window_samples = 0;
    }
}
