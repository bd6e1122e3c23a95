//! Differentiable objectives.
//!
//! Every objective returns the mean data loss plus `λ‖w‖²`, and its exact
//! gradient (including `2λw`). Analytic landscapes ignore the batch; the MLP
//! classifier requires one.

mod landscape;
mod mlp;
mod params;

use rand::Rng;

pub use landscape::{Basin, Quadratic, Rosenbrock, SharpFlat};
pub use mlp::{Activation, Mlp};
pub use params::{subset_norm, subset_ranges, validate_layout, ParamVector, Segment};

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::rng::{self, Stream};

/// Mini-batch of examples: row-major inputs, one class label per row, and
/// the source-row index of each example.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    inputs: Vec<f64>,
    cols: usize,
    targets: Vec<usize>,
    indices: Vec<usize>,
}

impl Batch {
    pub fn new(
        inputs: Vec<f64>,
        cols: usize,
        targets: Vec<usize>,
        indices: Vec<usize>,
    ) -> Result<Self> {
        if targets.is_empty() {
            return Err(Error::config("batch must contain at least one example"));
        }
        if cols == 0 || inputs.len() != targets.len() * cols {
            return Err(Error::config(format!(
                "batch has {} input values for {} rows of width {cols}",
                inputs.len(),
                targets.len()
            )));
        }
        if indices.len() != targets.len() {
            return Err(Error::config("batch index count differs from row count"));
        }
        Ok(Self {
            inputs,
            cols,
            targets,
            indices,
        })
    }

    pub fn rows(&self) -> usize {
        self.targets.len()
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn inputs(&self) -> &[f64] {
        &self.inputs
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.inputs[r * self.cols..(r + 1) * self.cols]
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObjectiveKind {
    Quadratic(Quadratic),
    Rosenbrock(Rosenbrock),
    SharpFlat(SharpFlat),
    MlpClassifier(Mlp),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectiveSpec {
    pub kind: ObjectiveKind,
    pub weight_decay: f64,
}

impl ObjectiveSpec {
    pub fn new(kind: ObjectiveKind, weight_decay: f64) -> Result<Self> {
        if !(weight_decay.is_finite() && weight_decay >= 0.0) {
            return Err(Error::config("weight_decay must be finite and nonnegative"));
        }
        Ok(Self { kind, weight_decay })
    }

    pub fn quadratic(a: Matrix, b: Vec<f64>, weight_decay: f64) -> Result<Self> {
        Self::new(
            ObjectiveKind::Quadratic(Quadratic::new(a, b)?),
            weight_decay,
        )
    }

    pub fn rosenbrock(dim: usize, weight_decay: f64) -> Result<Self> {
        Self::new(
            ObjectiveKind::Rosenbrock(Rosenbrock::new(dim, 1.0, 100.0)?),
            weight_decay,
        )
    }

    pub fn mlp(widths: Vec<usize>, activation: Activation, weight_decay: f64) -> Result<Self> {
        Self::new(
            ObjectiveKind::MlpClassifier(Mlp::new(widths, activation)?),
            weight_decay,
        )
    }

    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ObjectiveKind::Quadratic(_) => "quadratic",
            ObjectiveKind::Rosenbrock(_) => "rosenbrock",
            ObjectiveKind::SharpFlat(_) => "sharp_flat",
            ObjectiveKind::MlpClassifier(_) => "mlp_classifier",
        }
    }

    pub fn needs_data(&self) -> bool {
        matches!(self.kind, ObjectiveKind::MlpClassifier(_))
    }

    pub fn param_count(&self) -> usize {
        match &self.kind {
            ObjectiveKind::Quadratic(q) => q.dim(),
            ObjectiveKind::Rosenbrock(r) => r.dim,
            ObjectiveKind::SharpFlat(_) => 2,
            ObjectiveKind::MlpClassifier(m) => m.param_count(),
        }
    }

    pub fn layout(&self) -> Vec<Segment> {
        match &self.kind {
            ObjectiveKind::SharpFlat(_) => vec![Segment::new("x", 0, 1), Segment::new("y", 1, 1)],
            ObjectiveKind::MlpClassifier(m) => m.layout(),
            _ => vec![Segment::new("w", 0, self.param_count())],
        }
    }

    pub fn as_sharp_flat(&self) -> Option<&SharpFlat> {
        match &self.kind {
            ObjectiveKind::SharpFlat(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_quadratic(&self) -> Option<&Quadratic> {
        match &self.kind {
            ObjectiveKind::Quadratic(q) => Some(q),
            _ => None,
        }
    }

    pub fn as_mlp(&self) -> Option<&Mlp> {
        match &self.kind {
            ObjectiveKind::MlpClassifier(m) => Some(m),
            _ => None,
        }
    }

    /// Default initial point: the MLP's seeded init, uniform in `[-1, 1]^d`
    /// for the analytic landscapes.
    pub fn init_params(&self, seed: u64) -> ParamVector {
        match &self.kind {
            ObjectiveKind::MlpClassifier(m) => m.init(seed),
            _ => {
                let mut rng = rng::stream(seed, Stream::Init);
                let values = (0..self.param_count())
                    .map(|_| rng.gen_range(-1.0..1.0))
                    .collect();
                ParamVector::new(values, self.layout()).expect("layout matches param count")
            }
        }
    }

    /// Wraps raw values in this objective's layout.
    pub fn params(&self, values: Vec<f64>) -> Result<ParamVector> {
        if values.len() != self.param_count() {
            return Err(Error::config(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                values.len()
            )));
        }
        ParamVector::new(values, self.layout())
    }

    fn check(&self, w: &[f64], batch: Option<&Batch>) -> Result<()> {
        if w.len() != self.param_count() {
            return Err(Error::config(format!(
                "{} objective has {} parameters but got {}",
                self.kind_name(),
                self.param_count(),
                w.len()
            )));
        }
        if self.needs_data() && batch.is_none() {
            return Err(Error::config("mlp_classifier objective requires a batch"));
        }
        Ok(())
    }

    fn decay_term(&self, w: &[f64]) -> f64 {
        if self.weight_decay == 0.0 {
            0.0
        } else {
            self.weight_decay * linalg::dot(w, w)
        }
    }

    pub fn eval_loss(&self, w: &[f64], batch: Option<&Batch>) -> Result<f64> {
        self.check(w, batch)?;
        let data = match &self.kind {
            ObjectiveKind::Quadratic(q) => q.value(w),
            ObjectiveKind::Rosenbrock(r) => r.value(w),
            ObjectiveKind::SharpFlat(s) => s.value(w),
            ObjectiveKind::MlpClassifier(m) => m.loss(w, batch.expect("checked"))?,
        };
        let loss = data + self.decay_term(w);
        if !loss.is_finite() {
            return Err(Error::numeric(format!(
                "{} loss is not finite",
                self.kind_name()
            )));
        }
        Ok(loss)
    }

    pub fn eval_grad(&self, w: &[f64], batch: Option<&Batch>) -> Result<(f64, Vec<f64>)> {
        self.check(w, batch)?;
        let (data, mut grad) = match &self.kind {
            ObjectiveKind::Quadratic(q) => (q.value(w), q.gradient(w)),
            ObjectiveKind::Rosenbrock(r) => (r.value(w), r.gradient(w)),
            ObjectiveKind::SharpFlat(s) => (s.value(w), s.gradient(w)),
            ObjectiveKind::MlpClassifier(m) => m.loss_and_gradient(w, batch.expect("checked"))?,
        };
        if self.weight_decay != 0.0 {
            for (g, wi) in grad.iter_mut().zip(w) {
                *g += 2.0 * self.weight_decay * wi;
            }
        }
        let loss = data + self.decay_term(w);
        if !loss.is_finite() || !linalg::all_finite(&grad) {
            return Err(Error::numeric(format!(
                "{} loss or gradient is not finite",
                self.kind_name()
            )));
        }
        Ok((loss, grad))
    }

    /// Exact Hessian where it is constant or cheap in closed form.
    pub fn analytic_hessian(&self, w: &[f64]) -> Option<Matrix> {
        let mut h = match &self.kind {
            ObjectiveKind::Quadratic(q) => q.a.clone(),
            ObjectiveKind::SharpFlat(s) => s.hessian(w),
            _ => return None,
        };
        for i in 0..h.dim() {
            h[(i, i)] += 2.0 * self.weight_decay;
        }
        Some(h)
    }

    /// Classification accuracy; `None` for objectives without labels.
    pub fn accuracy(&self, w: &[f64], batch: &Batch) -> Result<Option<f64>> {
        match &self.kind {
            ObjectiveKind::MlpClassifier(m) => m.accuracy(w, batch).map(Some),
            _ => Ok(None),
        }
    }

    /// Central-difference gradient `(L(w + h eᵢ) − L(w − h eᵢ)) / 2h`.
    pub fn fd_gradient(&self, w: &[f64], batch: Option<&Batch>, h: f64) -> Result<Vec<f64>> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Precondition(format!(
                "finite-difference step must be positive, got {h}"
            )));
        }
        let mut probe = w.to_vec();
        (0..w.len())
            .map(|i| {
                probe[i] = w[i] + h;
                let plus = self.eval_loss(&probe, batch)?;
                probe[i] = w[i] - h;
                let minus = self.eval_loss(&probe, batch)?;
                probe[i] = w[i];
                Ok((plus - minus) / (2.0 * h))
            })
            .collect()
    }
}

/// Two-basin 2-D landscape: a narrow well (possibly deeper by `depth_gap`)
/// and a wide one, `separation` apart.
pub fn make_sharp_flat(
    width_sharp: f64,
    width_flat: f64,
    depth_gap: f64,
    separation: f64,
) -> Result<ObjectiveSpec> {
    ObjectiveSpec::new(
        ObjectiveKind::SharpFlat(SharpFlat::new(
            width_sharp,
            width_flat,
            depth_gap,
            separation,
        )?),
        0.0,
    )
}

/// Largest per-coordinate relative error, with an absolute floor of 1 on
/// the denominator so near-zero components compare absolutely.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1.0))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn batch_invariants() {
        assert!(Batch::new(vec![], 2, vec![], vec![]).is_err());
        assert!(Batch::new(vec![1.0; 3], 2, vec![0, 1], vec![0, 1]).is_err());
        assert!(Batch::new(vec![1.0; 4], 2, vec![0, 1], vec![0]).is_err());
        let b = Batch::new(vec![1.0, 2.0, 3.0, 4.0], 2, vec![0, 1], vec![7, 9]).unwrap();
        assert_eq!(b.row(1), &[3.0, 4.0]);
    }

    #[test]
    fn weight_decay_enters_gradient() {
        let spec = ObjectiveSpec::quadratic(Matrix::identity(2), vec![0.0, 0.0], 0.1).unwrap();
        let (_, g) = spec.eval_grad(&[1.0, 0.0], None).unwrap();
        assert!((g[0] - 1.2).abs() < 1e-15);
        assert_eq!(g[1], 0.0);
        assert!(ObjectiveSpec::quadratic(Matrix::identity(2), vec![0.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn fd_gradient_on_linear_gradient() {
        let spec = ObjectiveSpec::quadratic(Matrix::diag(&[2.0]), vec![0.0], 0.0).unwrap();
        let g = spec.fd_gradient(&[3.0], None, 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-8);
        assert!(matches!(
            spec.fd_gradient(&[3.0], None, 0.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let spec = ObjectiveSpec::rosenbrock(2, 0.0).unwrap();
        assert!(matches!(
            spec.eval_loss(&[0.0; 3], None),
            Err(Error::Config(_))
        ));
        let mlp = ObjectiveSpec::mlp(vec![2, 2], Activation::Tanh, 0.0).unwrap();
        assert!(matches!(
            mlp.eval_loss(&[0.0; 6], None),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn non_finite_loss_is_numeric_error() {
        let spec = ObjectiveSpec::rosenbrock(2, 0.0).unwrap();
        assert!(matches!(
            spec.eval_grad(&[1e200, 1e200], None),
            Err(Error::Numeric { .. })
        ));
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(max_relative_error(&[1e-9], &[2e-9]), 1e-9);
        assert_eq!(max_relative_error(&[100.0], &[101.0]), 1.0 / 101.0);
    }
}
