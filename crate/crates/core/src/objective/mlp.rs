//! Fully connected classifier with softmax cross-entropy, hand-written
//! forward and backward passes.
//!
//! Parameter layout, per layer `l` in order: `layer{l}.weight` (row-major,
//! `out × in`) then `layer{l}.bias` (`out`).

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{ParamVector, Segment};
use super::Batch;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }

    /// Derivative expressed through the pre-activation `z` and output `a`.
    fn derivative(self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    activation: Activation,
}

struct Forward {
    /// Inputs to each layer (`activations[0]` is the batch input), row-major.
    activations: Vec<Vec<f64>>,
    /// Pre-activations of each layer.
    pre: Vec<Vec<f64>>,
}

impl Mlp {
    pub fn new(widths: Vec<usize>, activation: Activation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::config(
                "mlp needs at least an input and an output width",
            ));
        }
        if widths.contains(&0) {
            return Err(Error::config("mlp layer widths must be at least 1"));
        }
        if *widths.last().unwrap() < 2 {
            return Err(Error::config(
                "mlp classifier needs at least 2 output classes",
            ));
        }
        Ok(Self { widths, activation })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn classes(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn layout(&self) -> Vec<Segment> {
        let mut segs = Vec::new();
        let mut start = 0;
        for (l, pair) in self.widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            segs.push(Segment::new(
                format!("layer{l}.weight"),
                start,
                fan_in * fan_out,
            ));
            start += fan_in * fan_out;
            segs.push(Segment::new(format!("layer{l}.bias"), start, fan_out));
            start += fan_out;
        }
        segs
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|p| p[0] * p[1] + p[1]).sum()
    }

    /// Weights and biases uniform in `±1/√fan_in`, drawn in layout order
    /// from the seed's init stream.
    pub fn init(&self, seed: u64) -> ParamVector {
        let mut rng = rng::stream(seed, Stream::Init);
        let mut values = Vec::with_capacity(self.param_count());
        for pair in self.widths.windows(2) {
            let bound = 1.0 / (pair[0] as f64).sqrt();
            for _ in 0..pair[0] * pair[1] + pair[1] {
                values.push(rng.gen_range(-bound..bound));
            }
        }
        ParamVector::new(values, self.layout()).expect("layout matches param count")
    }

    fn check_batch(&self, batch: &Batch) -> Result<()> {
        if batch.cols() != self.input_dim() {
            return Err(Error::config(format!(
                "batch has {} input columns but the mlp expects {}",
                batch.cols(),
                self.input_dim()
            )));
        }
        if let Some(&t) = batch.targets().iter().find(|&&t| t >= self.classes()) {
            return Err(Error::config(format!(
                "target class {t} out of range for {} classes",
                self.classes()
            )));
        }
        Ok(())
    }

    fn forward(&self, w: &[f64], batch: &Batch) -> Forward {
        let rows = batch.rows();
        let layers = self.widths.len() - 1;
        let mut activations = vec![batch.inputs().to_vec()];
        let mut pre = Vec::with_capacity(layers);
        let mut offset = 0;
        for l in 0..layers {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let weight = &w[offset..offset + fan_in * fan_out];
            let bias = &w[offset + fan_in * fan_out..offset + fan_in * fan_out + fan_out];
            offset += fan_in * fan_out + fan_out;
            let input = &activations[l];
            let mut z = vec![0.0; rows * fan_out];
            for r in 0..rows {
                let x = &input[r * fan_in..(r + 1) * fan_in];
                for o in 0..fan_out {
                    let row = &weight[o * fan_in..(o + 1) * fan_in];
                    z[r * fan_out + o] =
                        bias[o] + row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
                }
            }
            if l + 1 < layers {
                activations.push(z.iter().map(|&v| self.activation.apply(v)).collect());
            }
            pre.push(z);
        }
        Forward { activations, pre }
    }

    /// Mean cross-entropy over the batch (no regularization).
    pub fn loss(&self, w: &[f64], batch: &Batch) -> Result<f64> {
        self.check_batch(batch)?;
        let fwd = self.forward(w, batch);
        let logits = fwd.pre.last().unwrap();
        let k = self.classes();
        let total: f64 = batch
            .targets()
            .iter()
            .enumerate()
            .map(|(r, &t)| {
                let z = &logits[r * k..(r + 1) * k];
                log_sum_exp(z) - z[t]
            })
            .sum();
        Ok(total / batch.rows() as f64)
    }

    pub fn loss_and_gradient(&self, w: &[f64], batch: &Batch) -> Result<(f64, Vec<f64>)> {
        self.check_batch(batch)?;
        let rows = batch.rows();
        let inv_rows = 1.0 / rows as f64;
        let fwd = self.forward(w, batch);
        let k = self.classes();
        let logits = fwd.pre.last().unwrap();

        let mut loss = 0.0;
        let mut delta = vec![0.0; rows * k];
        for (r, &t) in batch.targets().iter().enumerate() {
            let z = &logits[r * k..(r + 1) * k];
            let lse = log_sum_exp(z);
            loss += lse - z[t];
            for c in 0..k {
                let p = (z[c] - lse).exp();
                delta[r * k + c] = (p - if c == t { 1.0 } else { 0.0 }) * inv_rows;
            }
        }
        loss *= inv_rows;

        let mut grad = vec![0.0; w.len()];
        let segs = self.layout();
        let layers = self.widths.len() - 1;
        for l in (0..layers).rev() {
            let (fan_in, fan_out) = (self.widths[l], self.widths[l + 1]);
            let w_seg = &segs[2 * l];
            let b_seg = &segs[2 * l + 1];
            let input = &fwd.activations[l];
            for r in 0..rows {
                let d = &delta[r * fan_out..(r + 1) * fan_out];
                let x = &input[r * fan_in..(r + 1) * fan_in];
                for o in 0..fan_out {
                    grad[b_seg.start + o] += d[o];
                    let gw = &mut grad[w_seg.start + o * fan_in..w_seg.start + (o + 1) * fan_in];
                    for (g, xi) in gw.iter_mut().zip(x) {
                        *g += d[o] * xi;
                    }
                }
            }
            if l == 0 {
                break;
            }
            let weight = &w[w_seg.range()];
            let z_prev = &fwd.pre[l - 1];
            let mut next = vec![0.0; rows * fan_in];
            for r in 0..rows {
                let d = &delta[r * fan_out..(r + 1) * fan_out];
                for i in 0..fan_in {
                    let back: f64 = (0..fan_out).map(|o| d[o] * weight[o * fan_in + i]).sum();
                    let idx = r * fan_in + i;
                    next[idx] = back * self.activation.derivative(z_prev[idx], input[idx]);
                }
            }
            delta = next;
        }
        Ok((loss, grad))
    }

    /// Fraction of rows whose arg-max logit matches the target.
    pub fn accuracy(&self, w: &[f64], batch: &Batch) -> Result<f64> {
        self.check_batch(batch)?;
        let fwd = self.forward(w, batch);
        let logits = fwd.pre.last().unwrap();
        let k = self.classes();
        let correct = batch
            .targets()
            .iter()
            .enumerate()
            .filter(|(r, &t)| {
                let z = &logits[r * k..(r + 1) * k];
                let best = (0..k).max_by(|&a, &b| z[a].total_cmp(&z[b])).unwrap_or(0);
                best == t
            })
            .count();
        Ok(correct as f64 / batch.rows() as f64)
    }

    /// Pre-activations of every hidden unit, for callers that need to stay
    /// away from relu kinks.
    pub fn hidden_preactivations(&self, w: &[f64], batch: &Batch) -> Vec<f64> {
        let fwd = self.forward(w, batch);
        let layers = fwd.pre.len();
        fwd.pre[..layers - 1].concat()
    }
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch() -> Batch {
        Batch::new(
            vec![0.5, -1.0, 1.5, 0.25, -0.75, 2.0],
            2,
            vec![0, 1, 1],
            vec![0, 1, 2],
        )
        .unwrap()
    }

    #[test]
    fn layout_names_and_sizes() {
        let m = Mlp::new(vec![2, 3, 2], Activation::Tanh).unwrap();
        let names: Vec<_> = m.layout().iter().map(|s| s.name.clone()).collect();
        assert_eq!(
            names,
            [
                "layer0.weight",
                "layer0.bias",
                "layer1.weight",
                "layer1.bias"
            ]
        );
        assert_eq!(m.param_count(), 6 + 3 + 6 + 2);
    }

    #[test]
    fn rejects_bad_widths_and_targets() {
        assert!(Mlp::new(vec![2], Activation::Tanh).is_err());
        assert!(Mlp::new(vec![2, 0, 2], Activation::Tanh).is_err());
        let m = Mlp::new(vec![2, 2], Activation::Tanh).unwrap();
        let bad = Batch::new(vec![0.0, 0.0], 2, vec![5], vec![0]).unwrap();
        assert!(m.loss(&vec![0.0; m.param_count()], &bad).is_err());
        let wrong_cols = Batch::new(vec![0.0; 3], 3, vec![0], vec![0]).unwrap();
        assert!(m.loss(&vec![0.0; m.param_count()], &wrong_cols).is_err());
    }

    #[test]
    fn zero_weights_give_log_k_loss() {
        let m = Mlp::new(vec![2, 4, 3], Activation::Relu).unwrap();
        let loss = m.loss(&vec![0.0; m.param_count()], &batch()).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn loss_agrees_between_paths() {
        let m = Mlp::new(vec![2, 5, 4, 2], Activation::Tanh).unwrap();
        let w = m.init(3);
        let (l, g) = m.loss_and_gradient(&w, &batch()).unwrap();
        assert_eq!(l, m.loss(&w, &batch()).unwrap());
        assert_eq!(g.len(), m.param_count());
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let m = Mlp::new(vec![4, 8, 2], Activation::Tanh).unwrap();
        assert_eq!(m.init(0), m.init(0));
        assert_ne!(m.init(0), m.init(1));
        let w = m.init(0);
        assert!(w
            .segment("layer0.weight")
            .unwrap()
            .iter()
            .all(|v| v.abs() < 0.5));
    }
}
