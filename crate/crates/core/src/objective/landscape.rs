//! Analytic landscapes: quadratic bowls, Rosenbrock, and a two-basin
//! sharp/flat surface with known minima.

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};

/// `½ wᵀAw − bᵀw`
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub a: Matrix,
    pub b: Vec<f64>,
}

impl Quadratic {
    pub fn new(a: Matrix, b: Vec<f64>) -> Result<Self> {
        if a.dim() == 0 {
            return Err(Error::config("quadratic matrix must be non-empty"));
        }
        if b.len() != a.dim() {
            return Err(Error::config(format!(
                "quadratic offset has length {} but matrix is {}x{}",
                b.len(),
                a.dim(),
                a.dim()
            )));
        }
        if !a.is_symmetric(1e-12 * (1.0 + a.as_slice().iter().fold(0.0f64, |m, x| m.max(x.abs()))))
        {
            return Err(Error::config("quadratic matrix must be symmetric"));
        }
        if !linalg::all_finite(a.as_slice()) || !linalg::all_finite(&b) {
            return Err(Error::config("quadratic coefficients must be finite"));
        }
        Ok(Self { a, b })
    }

    pub fn dim(&self) -> usize {
        self.a.dim()
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        0.5 * linalg::dot(w, &self.a.matvec(w)) - linalg::dot(&self.b, w)
    }

    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        self.a
            .matvec(w)
            .into_iter()
            .zip(&self.b)
            .map(|(aw, b)| aw - b)
            .collect()
    }
}

/// Chained Rosenbrock function `Σ b(x_{i+1} − x_i²)² + (a − x_i)²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rosenbrock {
    pub dim: usize,
    pub a: f64,
    pub b: f64,
}

impl Rosenbrock {
    pub fn new(dim: usize, a: f64, b: f64) -> Result<Self> {
        if dim < 2 {
            return Err(Error::config("rosenbrock needs at least 2 dimensions"));
        }
        if !(a.is_finite() && b.is_finite() && b > 0.0) {
            return Err(Error::config("rosenbrock requires finite a and b > 0"));
        }
        Ok(Self { dim, a, b })
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        x.windows(2)
            .map(|p| {
                let t = p[1] - p[0] * p[0];
                self.b * t * t + (self.a - p[0]) * (self.a - p[0])
            })
            .sum()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; x.len()];
        for i in 0..x.len() - 1 {
            let t = x[i + 1] - x[i] * x[i];
            g[i] += -4.0 * self.b * x[i] * t - 2.0 * (self.a - x[i]);
            g[i + 1] += 2.0 * self.b * t;
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basin {
    Sharp,
    Flat,
}

/// Two quadratic wells joined by a soft minimum:
///
/// ```text
/// q_s(w) = −gap + |w − c_s|² / (2 width_sharp²)
/// q_f(w) =        |w − c_f|² / (2 width_flat²)
/// L(w)   = −τ log(exp(−q_s/τ) + exp(−q_f/τ))
/// ```
///
/// with `c_s = (−separation/2, 0)` and `c_f = (separation/2, 0)`. The
/// temperature τ is set to 1/40 of the smaller well margin, so each well's
/// center is a critical point up to `exp(−40)` and its loss equals the
/// designed depth to the same order. The basin boundary is the circle where
/// `q_s = q_f`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharpFlat {
    pub width_sharp: f64,
    pub width_flat: f64,
    pub depth_gap: f64,
    pub separation: f64,
    tau: f64,
}

/// Ratio of the smaller well margin to the soft-min temperature.
const MARGIN_OVER_TAU: f64 = 40.0;

impl SharpFlat {
    pub fn new(width_sharp: f64, width_flat: f64, depth_gap: f64, separation: f64) -> Result<Self> {
        let finite = [width_sharp, width_flat, depth_gap, separation]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::config("sharp/flat parameters must be finite"));
        }
        if !(width_sharp > 0.0 && width_sharp < width_flat) {
            return Err(Error::config(format!(
                "sharp/flat requires 0 < width_sharp < width_flat (got {width_sharp}, {width_flat})"
            )));
        }
        if separation <= 0.0 {
            return Err(Error::config("sharp/flat separation must be positive"));
        }
        if depth_gap < 0.0 {
            return Err(Error::config("sharp/flat depth_gap must be nonnegative"));
        }
        let k_s = width_sharp.powi(-2);
        let k_f = width_flat.powi(-2);
        let margin_sharp = 0.5 * k_f * separation * separation + depth_gap;
        let margin_flat = 0.5 * k_s * separation * separation - depth_gap;
        if margin_flat <= 0.0 {
            return Err(Error::config(
                "depth_gap too large for the separation: the flat basin would vanish",
            ));
        }
        Ok(Self {
            width_sharp,
            width_flat,
            depth_gap,
            separation,
            tau: margin_sharp.min(margin_flat) / MARGIN_OVER_TAU,
        })
    }

    pub fn sharp_center(&self) -> [f64; 2] {
        [-0.5 * self.separation, 0.0]
    }

    pub fn flat_center(&self) -> [f64; 2] {
        [0.5 * self.separation, 0.0]
    }

    pub fn sharp_depth(&self) -> f64 {
        -self.depth_gap
    }

    pub fn flat_depth(&self) -> f64 {
        0.0
    }

    pub fn temperature(&self) -> f64 {
        self.tau
    }

    fn wells(&self, w: &[f64]) -> (f64, f64, [f64; 2], [f64; 2]) {
        let k_s = self.width_sharp.powi(-2);
        let k_f = self.width_flat.powi(-2);
        let cs = self.sharp_center();
        let cf = self.flat_center();
        let ds = [w[0] - cs[0], w[1] - cs[1]];
        let df = [w[0] - cf[0], w[1] - cf[1]];
        let qs = -self.depth_gap + 0.5 * k_s * (ds[0] * ds[0] + ds[1] * ds[1]);
        let qf = 0.5 * k_f * (df[0] * df[0] + df[1] * df[1]);
        (
            qs,
            qf,
            [k_s * ds[0], k_s * ds[1]],
            [k_f * df[0], k_f * df[1]],
        )
    }

    /// Weight of the sharp well in the soft minimum, computed without overflow.
    fn sharp_weight(&self, qs: f64, qf: f64) -> f64 {
        let z = (qs - qf) / self.tau;
        if z >= 0.0 {
            let e = (-z).exp();
            e / (1.0 + e)
        } else {
            1.0 / (1.0 + z.exp())
        }
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        let (qs, qf, _, _) = self.wells(w);
        qs.min(qf) - self.tau * (-(qs - qf).abs() / self.tau).exp().ln_1p()
    }

    pub fn gradient(&self, w: &[f64]) -> Vec<f64> {
        let (qs, qf, gs, gf) = self.wells(w);
        let ws = self.sharp_weight(qs, qf);
        let wf = 1.0 - ws;
        vec![ws * gs[0] + wf * gf[0], ws * gs[1] + wf * gf[1]]
    }

    pub fn hessian(&self, w: &[f64]) -> Matrix {
        let (qs, qf, gs, gf) = self.wells(w);
        let k_s = self.width_sharp.powi(-2);
        let k_f = self.width_flat.powi(-2);
        let ws = self.sharp_weight(qs, qf);
        let wf = 1.0 - ws;
        let d = [gs[0] - gf[0], gs[1] - gf[1]];
        let mix = ws * wf / self.tau;
        let mut h = Matrix::zeros(2);
        for i in 0..2 {
            for j in 0..2 {
                h[(i, j)] = -mix * d[i] * d[j];
            }
            h[(i, i)] += ws * k_s + wf * k_f;
        }
        h
    }

    pub fn basin(&self, w: &[f64]) -> Basin {
        let (qs, qf, _, _) = self.wells(w);
        if qs < qf {
            Basin::Sharp
        } else {
            Basin::Flat
        }
    }

    /// Largest distance from the sharp center to the basin boundary.
    ///
    /// The boundary is a circle whose center sits on the axis beyond `c_s`,
    /// away from `c_f`, so the farthest point is on that side.
    pub fn sharp_basin_outer_radius(&self) -> f64 {
        let k_s = self.width_sharp.powi(-2);
        let k_f = self.width_flat.powi(-2);
        let s = self.separation;
        // (k_s − k_f) r² − 2 k_f s r − (k_f s² + 2 gap) = 0
        let qa = k_s - k_f;
        let qb = -2.0 * k_f * s;
        let qc = -(k_f * s * s + 2.0 * self.depth_gap);
        (-qb + (qb * qb - 4.0 * qa * qc).sqrt()) / (2.0 * qa)
    }

    /// Perturbation radius that always carries the perturbed point out of
    /// the sharp basin: 1.5 × its outer radius.
    pub fn calibrated_rho(&self) -> f64 {
        1.5 * self.sharp_basin_outer_radius()
    }

    /// Largest stable plain-gradient step size on the sharp well (`2 / k_s`).
    pub fn stability_limit(&self) -> f64 {
        2.0 * self.width_sharp * self.width_sharp
    }
}
