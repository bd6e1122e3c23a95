//! Numerical checks of the SAM gradient decomposition and the PSF norm
//! bound, plus trace extraction.

use std::ops::RangeInclusive;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, Matrix};
use crate::metrics::{csv_error, fmt_f64, MetricsRecord};
use crate::objective::{Batch, ObjectiveSpec};
use crate::optim::{sam_gradient, DEGENERATE_GRAD_NORM};
use crate::rng::{self, Stream};

/// Largest matrix accepted by [`symmetric_eigen`].
pub const MAX_EIGEN_DIM: usize = 64;
const OFF_DIAGONAL_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;
/// Step for finite-difference Hessian-vector products.
pub const HVP_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct EigenDecomposition {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    /// Column `i` is the unit eigenvector of `eigenvalues[i]`.
    pub eigenvectors: Matrix,
}

impl EigenDecomposition {
    pub fn reconstruct(&self) -> Matrix {
        let n = self.eigenvalues.len();
        let u = &self.eigenvectors;
        let mut out = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..n {
                out[(i, j)] = (0..n)
                    .map(|k| u[(i, k)] * self.eigenvalues[k] * u[(j, k)])
                    .sum();
            }
        }
        out
    }
}

fn max_off_diagonal(a: &Matrix) -> f64 {
    let n = a.dim();
    let mut m = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                m = m.max(a[(i, j)].abs());
            }
        }
    }
    m
}

/// Cyclic Jacobi diagonalization.
///
/// Sweeps until every off-diagonal entry is below `1e-12 · max(1, ‖A‖_F)`.
pub fn symmetric_eigen(a: &Matrix) -> Result<EigenDecomposition> {
    let n = a.dim();
    if n == 0 || n > MAX_EIGEN_DIM {
        return Err(Error::Precondition(format!(
            "eigendecomposition supports dimensions 1..={MAX_EIGEN_DIM}, got {n}"
        )));
    }
    if !linalg::all_finite(a.as_slice()) {
        return Err(Error::Precondition("matrix has non-finite entries".into()));
    }
    let scale = linalg::norm(a.as_slice()).max(1.0);
    if !a.is_symmetric(1e-12 * scale) {
        return Err(Error::Precondition("matrix is not symmetric".into()));
    }
    let tol = OFF_DIAGONAL_TOL * scale;
    let mut m = a.clone();
    let mut v = Matrix::identity(n);
    let mut sweeps = 0;
    while max_off_diagonal(&m) >= tol {
        if sweeps == MAX_SWEEPS {
            return Err(Error::numeric(format!(
                "jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps"
            )));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[(j, j)].total_cmp(&m[(i, i)]));
    let eigenvalues = order.iter().map(|&k| m[(k, k)]).collect();
    let mut eigenvectors = Matrix::zeros(n);
    for (col, &k) in order.iter().enumerate() {
        for r in 0..n {
            eigenvectors[(r, col)] = v[(r, k)];
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

/// Zeroes `m[p][q]` with the rotation `m ← Jᵀ m J`, accumulating `v ← v J`.
fn rotate(m: &mut Matrix, v: &mut Matrix, p: usize, q: usize) {
    let apq = m[(p, q)];
    if apq == 0.0 {
        return;
    }
    let theta = (m[(q, q)] - m[(p, p)]) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    let n = m.dim();
    for k in 0..n {
        let (kp, kq) = (m[(k, p)], m[(k, q)]);
        m[(k, p)] = c * kp - s * kq;
        m[(k, q)] = s * kp + c * kq;
    }
    for k in 0..n {
        let (pk, qk) = (m[(p, k)], m[(q, k)]);
        m[(p, k)] = c * pk - s * qk;
        m[(q, k)] = s * pk + c * qk;
    }
    m[(p, q)] = 0.0;
    m[(q, p)] = 0.0;
    for k in 0..n {
        let (kp, kq) = (v[(k, p)], v[(k, q)]);
        v[(k, p)] = c * kp - s * kq;
        v[(k, q)] = s * kp + c * kq;
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheckResult {
    /// `ρ‖A·g‖/‖g‖`
    pub lhs: f64,
    /// `ρ·Σ δᵢ|cos θᵢ|`
    pub rhs: f64,
    pub satisfied: bool,
    pub slack: f64,
    /// `cos θᵢ` against each eigenvector, in eigenvalue order.
    pub cosines: Vec<f64>,
}

/// Compares the PSF norm of the quadratic with Hessian `a` against the
/// eigenvalue-weighted cosine bound.
pub fn psf_bound_check(a: &Matrix, g: &[f64], rho: f64) -> Result<BoundCheckResult> {
    if g.len() != a.dim() {
        return Err(Error::Precondition(format!(
            "gradient length {} does not match matrix dimension {}",
            g.len(),
            a.dim()
        )));
    }
    let gn = linalg::norm(g);
    if gn.is_nan() || gn <= 0.0 {
        return Err(Error::Precondition("gradient must be nonzero".into()));
    }
    let eig = symmetric_eigen(a)?;
    if let Some(d) = eig.eigenvalues.iter().find(|&&d| d <= 0.0) {
        return Err(Error::Precondition(format!(
            "matrix is not positive definite (eigenvalue {d})"
        )));
    }
    let lhs = rho * linalg::norm(&a.matvec(g)) / gn;
    let cosines: Vec<f64> = (0..a.dim())
        .map(|i| linalg::dot(&eig.eigenvectors.column(i), g) / gn)
        .collect();
    let rhs = rho
        * eig
            .eigenvalues
            .iter()
            .zip(&cosines)
            .map(|(d, c)| d * c.abs())
            .sum::<f64>();
    Ok(BoundCheckResult {
        lhs,
        rhs,
        satisfied: lhs <= rhs + 1e-12,
        slack: rhs - lhs,
        cosines,
    })
}

/// `BᵀB + 0.1·I` with standard-normal `B`: symmetric positive definite.
pub fn random_pd_matrix<R: Rng>(rng: &mut R, dim: usize) -> Matrix {
    let b: Vec<f64> = (0..dim * dim).map(|_| rng.sample(StandardNormal)).collect();
    let mut a = Matrix::zeros(dim);
    for i in 0..dim {
        for j in 0..=i {
            let v: f64 = (0..dim).map(|k| b[k * dim + i] * b[k * dim + j]).sum();
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
        a[(i, i)] += 0.1;
    }
    a
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundCase {
    pub dim: usize,
    /// The gradient was an eigenvector of the matrix.
    pub aligned: bool,
    pub result: BoundCheckResult,
}

/// For each case draws a random PD matrix and gradient, and also checks a
/// gradient along one of the matrix's eigenvectors.
pub fn psf_bound_sweep(
    cases: usize,
    seed: u64,
    dims: RangeInclusive<usize>,
    rho: f64,
) -> Result<Vec<BoundCase>> {
    if dims.is_empty() || *dims.start() == 0 || *dims.end() > MAX_EIGEN_DIM {
        return Err(Error::Precondition(format!(
            "dimension range must lie within 1..={MAX_EIGEN_DIM}"
        )));
    }
    let mut rng = rng::stream(seed, Stream::Probe);
    let mut out = Vec::with_capacity(2 * cases);
    for _ in 0..cases {
        let dim = rng.gen_range(dims.clone());
        let a = random_pd_matrix(&mut rng, dim);
        let g: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        out.push(BoundCase {
            dim,
            aligned: false,
            result: psf_bound_check(&a, &g, rho)?,
        });
        let eig = symmetric_eigen(&a)?;
        let scale: f64 = rng.gen_range(0.1..10.0);
        let aligned = linalg::scale(&eig.eigenvectors.column(rng.gen_range(0..dim)), scale);
        out.push(BoundCase {
            dim,
            aligned: true,
            result: psf_bound_check(&a, &aligned, rho)?,
        });
    }
    Ok(out)
}

/// `H·v`, exact where the objective has an analytic Hessian, otherwise a
/// central difference of the gradient with step [`HVP_STEP`].
pub fn hessian_vector_product(
    spec: &ObjectiveSpec,
    w: &[f64],
    batch: Option<&Batch>,
    v: &[f64],
) -> Result<Vec<f64>> {
    if let Some(h) = spec.analytic_hessian(w) {
        return Ok(h.matvec(v));
    }
    let (_, plus) = spec.eval_grad(&linalg::axpy(w, HVP_STEP, v), batch)?;
    let (_, minus) = spec.eval_grad(&linalg::axpy(w, -HVP_STEP, v), batch)?;
    Ok(plus
        .iter()
        .zip(&minus)
        .map(|(p, m)| (p - m) / (2.0 * HVP_STEP))
        .collect())
}

/// `‖psf − ρ·H·g/‖g‖‖`: how far the measured PSF is from its first-order
/// form.
pub fn decomposition_residual(
    spec: &ObjectiveSpec,
    w: &[f64],
    batch: Option<&Batch>,
    rho: f64,
) -> Result<f64> {
    let triple = sam_gradient(spec, w, batch, rho)?;
    let gn = triple.l2_sgd;
    if gn < DEGENERATE_GRAD_NORM {
        return Ok(linalg::norm(&triple.psf));
    }
    let dir = linalg::scale(&triple.g_sgd, 1.0 / gn);
    let hv = hessian_vector_product(spec, w, batch, &dir)?;
    Ok(linalg::norm(&linalg::axpy(&triple.psf, -rho, &hv)))
}

/// `‖g + γ·psf‖²`
pub fn combined_norm_sq(g: &[f64], psf: &[f64], gamma: f64) -> f64 {
    let v = linalg::axpy(g, gamma, psf);
    linalg::dot(&v, &v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceSeries {
    pub iterations: Vec<usize>,
    /// `‖g_sgd + γ·psf‖²` per iteration.
    pub values: Vec<f64>,
    /// Running mean of `values`.
    pub running_mean: Vec<f64>,
}

/// Per-iteration `‖g_sgd + γ·psf‖²`, expanded from the logged norms and
/// inner product, and its running mean. Rows without a PSF use `‖g_sgd‖²`.
pub fn convergence_metric(trace: &[MetricsRecord], gamma: f64) -> ConvergenceSeries {
    let mut out = ConvergenceSeries {
        iterations: Vec::with_capacity(trace.len()),
        values: Vec::with_capacity(trace.len()),
        running_mean: Vec::with_capacity(trace.len()),
    };
    let mut sum = 0.0;
    for (k, r) in trace.iter().enumerate() {
        let psf = r.l2_psf.unwrap_or(0.0);
        let v = (r.l2_sgd * r.l2_sgd + 2.0 * gamma * r.sgd_psf_dot + gamma * gamma * psf * psf)
            .max(0.0);
        sum += v;
        out.iterations.push(r.iteration);
        out.values.push(v);
        out.running_mean.push(sum / (k + 1) as f64);
    }
    out
}

pub const NORM_TRACE_HEADER: [&str; 7] = [
    "iteration",
    "l2_sgd",
    "l2_psf",
    "l2_sgd_subset",
    "l2_psf_subset",
    "psf_stale",
    "psf_age",
];

#[derive(Debug, Clone, PartialEq)]
pub struct NormTraceRow {
    pub iteration: usize,
    pub l2_sgd: f64,
    pub l2_psf: Option<f64>,
    pub l2_sgd_subset: f64,
    pub l2_psf_subset: Option<f64>,
    pub psf_stale: bool,
    pub psf_age: Option<usize>,
}

pub fn norm_trace(trace: &[MetricsRecord]) -> Vec<NormTraceRow> {
    trace
        .iter()
        .map(|r| NormTraceRow {
            iteration: r.iteration,
            l2_sgd: r.l2_sgd,
            l2_psf: r.l2_psf,
            l2_sgd_subset: r.l2_sgd_subset,
            l2_psf_subset: r.l2_psf_subset,
            psf_stale: r.psf_stale,
            psf_age: r.psf_age,
        })
        .collect()
}

pub fn write_norm_trace(path: &Path, rows: &[NormTraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(NORM_TRACE_HEADER)
        .map_err(|e| csv_error(path, e))?;
    let opt = |v: Option<f64>| v.map(fmt_f64).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.iteration.to_string(),
            fmt_f64(r.l2_sgd),
            opt(r.l2_psf),
            fmt_f64(r.l2_sgd_subset),
            opt(r.l2_psf_subset),
            if r.psf_stale { "1" } else { "0" }.to_string(),
            r.psf_age.map(|a| a.to_string()).unwrap_or_default(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_norm_trace(path: &Path) -> Result<Vec<NormTraceRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let header = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    if header.iter().ne(NORM_TRACE_HEADER) {
        return Err(Error::format(
            "norm trace header",
            path.display().to_string(),
        ));
    }
    let bad = |col: &str, raw: &str| Error::format("norm trace row", format!("{col}: {raw:?}"));
    let float = |raw: &str, col: &str| raw.parse::<f64>().map_err(|_| bad(col, raw));
    let opt = |raw: &str, col: &str| {
        if raw.is_empty() {
            Ok(None)
        } else {
            float(raw, col).map(Some)
        }
    };
    reader
        .records()
        .map(|row| {
            let row = row.map_err(|e| csv_error(path, e))?;
            if row.len() != NORM_TRACE_HEADER.len() {
                return Err(Error::format(
                    "norm trace row",
                    format!("{} fields", row.len()),
                ));
            }
            Ok(NormTraceRow {
                iteration: row[0].parse().map_err(|_| bad("iteration", &row[0]))?,
                l2_sgd: float(&row[1], "l2_sgd")?,
                l2_psf: opt(&row[2], "l2_psf")?,
                l2_sgd_subset: float(&row[3], "l2_sgd_subset")?,
                l2_psf_subset: opt(&row[4], "l2_psf_subset")?,
                psf_stale: match &row[5] {
                    "0" => false,
                    "1" => true,
                    other => return Err(bad("psf_stale", other)),
                },
                psf_age: if row[6].is_empty() {
                    None
                } else {
                    Some(row[6].parse().map_err(|_| bad("psf_age", &row[6]))?)
                },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_of_diagonal() {
        let e = symmetric_eigen(&Matrix::diag(&[2.0, 5.0])).unwrap();
        assert_eq!(e.eigenvalues, vec![5.0, 2.0]);
        assert_eq!(e.eigenvectors.column(0), vec![0.0, 1.0]);
        assert_eq!(e.eigenvectors.column(1), vec![1.0, 0.0]);
    }

    #[test]
    fn eigen_of_classic_2x2() {
        let a = Matrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = symmetric_eigen(&a).unwrap();
        assert!((e.eigenvalues[0] - 3.0).abs() < 1e-14);
        assert!((e.eigenvalues[1] - 1.0).abs() < 1e-14);
        let u0 = e.eigenvectors.column(0);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((u0[0].abs() - h).abs() < 1e-14 && (u0[0] - u0[1]).abs() < 1e-14);
        let u1 = e.eigenvectors.column(1);
        assert!((u1[0] + u1[1]).abs() < 1e-14);
        assert!(e.reconstruct().max_abs_diff(&a) < 1e-14);
    }

    #[test]
    fn eigen_rejects_bad_input() {
        let asym = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(
            symmetric_eigen(&asym),
            Err(Error::Precondition(_))
        ));
        assert!(symmetric_eigen(&Matrix::identity(65)).is_err());
    }

    #[test]
    fn psf_bound_examples() {
        let r = psf_bound_check(&Matrix::diag(&[2.0, 5.0]), &[1.0, 0.0], 0.1).unwrap();
        assert!((r.lhs - 0.2).abs() < 1e-15 && (r.rhs - 0.2).abs() < 1e-15);
        assert!(r.satisfied && r.slack.abs() < 1e-15);

        let r = psf_bound_check(&Matrix::identity(3), &[1.0, -2.0, 0.5], 1.0).unwrap();
        assert!((r.lhs - 1.0).abs() < 1e-15);
        assert!(r.rhs >= 1.0 && r.satisfied);
    }

    #[test]
    fn psf_bound_preconditions() {
        let indefinite = Matrix::diag(&[1.0, -1.0]);
        assert!(matches!(
            psf_bound_check(&indefinite, &[1.0, 1.0], 0.1),
            Err(Error::Precondition(_))
        ));
        assert!(psf_bound_check(&Matrix::identity(2), &[0.0, 0.0], 0.1).is_err());
    }

    #[test]
    fn residual_exact_on_quadratic() {
        let spec = ObjectiveSpec::quadratic(
            Matrix::from_rows(&[vec![3.0, 1.0], vec![1.0, 2.0]]).unwrap(),
            vec![1.0, -0.5],
            0.0,
        )
        .unwrap();
        assert!(decomposition_residual(&spec, &[0.7, 1.3], None, 0.05).unwrap() < 1e-9);
        // b = A·w*, so w* is critical
        let at_min = decomposition_residual(&spec, &[0.5, -0.5], None, 0.05).unwrap();
        assert_eq!(at_min, 0.0);
    }

    #[test]
    fn combined_norm_example() {
        assert!((combined_norm_sq(&[1.0, 0.0], &[0.0, 1.0], 0.7) - 1.49).abs() < 1e-15);
        assert_eq!(combined_norm_sq(&[0.0, 0.0], &[0.0, 0.0], 0.7), 0.0);
    }

    #[test]
    fn convergence_metric_from_records() {
        let r = MetricsRecord {
            iteration: 1,
            l2_sgd: 1.0,
            l2_psf: Some(1.0),
            sgd_psf_dot: 0.0,
            ..Default::default()
        };
        let s = convergence_metric(
            &[
                r.clone(),
                MetricsRecord {
                    iteration: 2,
                    l2_psf: None,
                    ..r
                },
            ],
            0.7,
        );
        assert!((s.values[0] - 1.49).abs() < 1e-15);
        assert_eq!(s.values[1], 1.0);
        assert!((s.running_mean[1] - 1.245).abs() < 1e-15);
    }

    #[test]
    fn norm_trace_round_trip() {
        let recs: Vec<MetricsRecord> = (1..=10)
            .map(|i| MetricsRecord {
                iteration: i,
                l2_sgd: 1.0 / i as f64,
                l2_psf: (i > 1).then_some(0.1 * i as f64),
                l2_psf_subset: (i > 1).then_some(0.01 * i as f64),
                psf_stale: i % 3 == 0,
                psf_age: (i > 1).then_some(i % 3),
                ..Default::default()
            })
            .collect();
        let rows = norm_trace(&recs);
        assert_eq!(rows.len(), 10);
        assert!(rows.windows(2).all(|w| w[0].iteration < w[1].iteration));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.csv");
        write_norm_trace(&path, &rows).unwrap();
        assert_eq!(read_norm_trace(&path).unwrap(), rows);
    }
}
