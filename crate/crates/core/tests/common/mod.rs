//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use vsam::linalg::Matrix;
use vsam::objective::Batch;
use vsam::rng::{stream, Stream};
use vsam::sampler::SamplerConfig;

pub fn to_na(a: &Matrix) -> DMatrix<f64> {
    let n = a.dim();
    DMatrix::from_fn(n, n, |i, j| a[(i, j)])
}

pub fn random_spd<R: Rng>(rng: &mut R, n: usize) -> Matrix {
    let b = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let a = b.transpose() * &b + DMatrix::identity(n, n) * 0.05;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| 0.5 * (a[(i, j)] + a[(j, i)])).collect())
        .collect();
    Matrix::from_rows(&rows).unwrap()
}

pub fn random_vec<R: Rng>(rng: &mut R, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Mean cross-entropy of an mlp, computed layer by layer with nalgebra.
pub fn mlp_loss_oracle(widths: &[usize], relu: bool, w: &[f64], batch: &Batch) -> f64 {
    let mut offset = 0;
    let mut layers = Vec::new();
    for pair in widths.windows(2) {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let weight =
            DMatrix::from_row_slice(fan_out, fan_in, &w[offset..offset + fan_in * fan_out]);
        offset += fan_in * fan_out;
        let bias = DVector::from_column_slice(&w[offset..offset + fan_out]);
        offset += fan_out;
        layers.push((weight, bias));
    }
    assert_eq!(offset, w.len());
    let mut total = 0.0;
    for r in 0..batch.rows() {
        let mut a = DVector::from_column_slice(batch.row(r));
        for (l, (weight, bias)) in layers.iter().enumerate() {
            let z = weight * &a + bias;
            a = if l + 1 < layers.len() {
                z.map(|v| if relu { v.max(0.0) } else { v.tanh() })
            } else {
                z
            };
        }
        let m = a.max();
        let lse = m + a.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - a[batch.targets()[r]];
    }
    total / batch.rows() as f64
}

/// Brute-force sampler: keeps every recorded sample and recomputes all
/// statistics from scratch at each window boundary.
pub struct SamplerOracle {
    pub cfg: SamplerConfig,
    psf: Vec<f64>,
    sgd: Vec<f64>,
    pub s: f64,
    pub p: f64,
    pub c_var: f64,
    pub c_norm: f64,
    window_samples: usize,
    rng: ChaCha8Rng,
}

fn pop_var(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n
}

fn sliced(values: &[f64], m: usize) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if sorted.len() < m || m <= 1 {
        return pop_var(&sorted);
    }
    let n = sorted.len();
    let mut total = 0.0;
    for j in 0..m {
        total += pop_var(&sorted[j * n / m..(j + 1) * n / m]);
    }
    total / m as f64
}

fn mean_change(h: &[f64], eps: f64) -> f64 {
    if h.len() < 2 {
        return 0.0;
    }
    let mut sum = 0.0;
    for k in 1..h.len() {
        if h[k - 1].abs() >= eps {
            sum += (h[k] - h[k - 1]) / h[k - 1];
        }
    }
    sum / (h.len() - 1) as f64
}

fn tail(v: &[f64], n: usize) -> &[f64] {
    &v[v.len().saturating_sub(n)..]
}

impl SamplerOracle {
    pub fn new(cfg: SamplerConfig, seed: u64) -> Self {
        Self {
            s: cfg.s1,
            p: cfg.s1 / cfg.window as f64,
            c_var: 0.0,
            c_norm: 0.0,
            psf: Vec::new(),
            sgd: Vec::new(),
            window_samples: 0,
            rng: stream(seed, Stream::Sampler),
            cfg,
        }
    }

    pub fn should_sample(&mut self, i: usize) -> bool {
        let cfg = &self.cfg;
        if i <= cfg.i_start {
            return true;
        }
        if i == cfg.i_start + 1 {
            self.window_samples = 0;
        }
        let cap = (cfg.p_max * cfg.window as f64).floor() as usize;
        if self.window_samples >= cap {
            return false;
        }
        self.rng.gen::<f64>() < self.p
    }

    pub fn record(&mut self, l2_psf: f64, l2_sgd: f64) {
        self.psf.push(l2_psf);
        self.sgd.push(l2_sgd);
        self.window_samples += 1;
    }

    /// `v` after the `k`-th recorded sample (1-based).
    fn v_at(&self, k: usize) -> f64 {
        sliced(tail(&self.psf[..k], self.cfg.window), self.cfg.slices)
    }

    pub fn latest_v(&self) -> f64 {
        if self.psf.is_empty() {
            0.0
        } else {
            self.v_at(self.psf.len())
        }
    }

    pub fn latest_r(&self) -> f64 {
        match (self.psf.last(), self.sgd.last()) {
            (Some(p), Some(g)) => p / g.max(self.cfg.eps),
            _ => 0.0,
        }
    }

    pub fn update(&mut self) {
        let n = self.cfg.window;
        let total = self.psf.len();
        let first = total.saturating_sub(n);
        let v_hist: Vec<f64> = (first + 1..=total).map(|k| self.v_at(k)).collect();
        let r_hist: Vec<f64> = (first..total)
            .map(|k| self.psf[k] / self.sgd[k].max(self.cfg.eps))
            .collect();
        self.c_var = mean_change(&v_hist, self.cfg.eps);
        self.c_norm = mean_change(&r_hist, self.cfg.eps);
        let a = self.cfg.alpha;
        let next = self.s * (1.0 + a * self.c_var + a * self.c_norm);
        let ceiling = self.cfg.p_max * n as f64;
        self.s = if next < 1.0 {
            1.0
        } else if next > ceiling {
            ceiling
        } else {
            next
        };
        self.p = self.s / n as f64;
        self.window_samples = 0;
    }
}
