//! Update rules for SGD, SAM, periodic SAM-k, and vSAM's sampling and reuse
//! steps, plus the [`Optimizer`] that strings them together one iteration
//! at a time.
//!
//! The SAM gradient is split as `g_sam = g_sgd + psf`, where `psf` is the
//! gradient change caused by the normalized ascent step `ρ·g/‖g‖`. A vSAM
//! reuse iteration replaces the fresh PSF with the cached one scaled by
//! `γ^(i − i*)`.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::objective::{subset_norm, subset_ranges, Batch, ObjectiveSpec, Segment};
use crate::sampler::{SamplerConfig, SamplerSnapshot, SamplerState};

/// Gradients below this norm are treated as a critical point.
pub const DEGENERATE_GRAD_NORM: f64 = 1e-12;
/// Reuse coefficients below this are dropped.
pub const DECAY_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    Constant,
    #[default]
    Cosine,
    InverseT,
}

impl LrSchedule {
    /// Learning rate at 1-based iteration `i` of `total`.
    pub fn rate(self, eta0: f64, i: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => eta0,
            LrSchedule::Cosine => {
                let progress = (i.saturating_sub(1)) as f64 / total.max(1) as f64;
                0.5 * eta0 * (1.0 + (std::f64::consts::PI * progress).cos())
            }
            LrSchedule::InverseT => eta0 / i.max(1) as f64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub eta0: f64,
    pub rho: f64,
    pub gamma: f64,
    pub momentum: f64,
    pub lr_schedule: LrSchedule,
    pub grad_eval_budget: Option<u64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            eta0: 0.1,
            rho: 0.05,
            gamma: 0.9,
            momentum: 0.0,
            lr_schedule: LrSchedule::Cosine,
            grad_eval_budget: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta0 > 0.0 && self.eta0.is_finite()) {
            return Err(Error::config("eta0 must be positive"));
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::config("rho must be positive"));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return Err(Error::config("gamma must lie in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config("momentum must lie in [0, 1)"));
        }
        Ok(())
    }
}

/// `ρ·g/‖g‖`, or the zero vector when `‖g‖ < 1e-12`.
pub fn perturbation(g: &[f64], rho: f64) -> Vec<f64> {
    let n = linalg::norm(g);
    if n < DEGENERATE_GRAD_NORM {
        return vec![0.0; g.len()];
    }
    linalg::scale(g, rho / n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientTriple {
    /// Loss at `w` (before perturbation).
    pub loss: f64,
    pub g_sgd: Vec<f64>,
    pub g_sam: Vec<f64>,
    pub psf: Vec<f64>,
    pub l2_sgd: f64,
    pub l2_psf: f64,
    pub l2_sgd_subset: f64,
    pub l2_psf_subset: f64,
}

/// Completes a SAM gradient from an already evaluated `g_sgd`; costs one
/// gradient evaluation.
pub fn sam_gradient_from<F>(
    w: &[f64],
    loss: f64,
    g_sgd: Vec<f64>,
    rho: f64,
    subset: &[Range<usize>],
    grad: &mut F,
) -> Result<GradientTriple>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let eps = perturbation(&g_sgd, rho);
    let (_, g_sam) = grad(&linalg::add(w, &eps))?;
    if g_sam.len() != g_sgd.len() {
        return Err(Error::Contract(
            "gradient oracle changed output length between calls".into(),
        ));
    }
    let psf = linalg::sub(&g_sam, &g_sgd);
    Ok(GradientTriple {
        loss,
        l2_sgd: linalg::norm(&g_sgd),
        l2_psf: linalg::norm(&psf),
        l2_sgd_subset: subset_norm(&g_sgd, subset),
        l2_psf_subset: subset_norm(&psf, subset),
        g_sgd,
        g_sam,
        psf,
    })
}

/// Both SAM gradient evaluations on the same batch, with the PSF and all
/// norms. Norm subsets default to the objective's last two segments.
pub fn sam_gradient(
    spec: &ObjectiveSpec,
    w: &[f64],
    batch: Option<&Batch>,
    rho: f64,
) -> Result<GradientTriple> {
    let subset = subset_ranges(&spec.layout(), &[])?;
    let mut grad = |x: &[f64]| spec.eval_grad(x, batch);
    let (loss, g_sgd) = grad(w)?;
    sam_gradient_from(w, loss, g_sgd, rho, &subset, &mut grad)
}

/// Heavy-ball momentum on the combined update direction.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct MomentumState {
    pub coef: f64,
    pub buffer: Option<Vec<f64>>,
}

impl MomentumState {
    pub fn new(coef: f64) -> Self {
        Self { coef, buffer: None }
    }

    /// Applies `w ← w − η·v` with `v ← μ·v + d` (or `v = d` without momentum).
    fn apply(&mut self, w: &mut [f64], direction: &[f64], eta: f64) {
        if self.coef == 0.0 {
            for (wi, d) in w.iter_mut().zip(direction) {
                *wi -= eta * d;
            }
            return;
        }
        let buf = self
            .buffer
            .get_or_insert_with(|| vec![0.0; direction.len()]);
        for ((wi, b), d) in w.iter_mut().zip(buf.iter_mut()).zip(direction) {
            *b = self.coef * *b + d;
            *wi -= eta * *b;
        }
    }
}

/// The most recently sampled PSF.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PsfCache {
    entry: Option<CachedPsf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CachedPsf {
    pub psf: Vec<f64>,
    pub sampled_at: usize,
    pub l2: f64,
    pub l2_subset: f64,
}

impl PsfCache {
    pub fn is_valid(&self) -> bool {
        self.entry.is_some()
    }

    pub fn get(&self) -> Option<&CachedPsf> {
        self.entry.as_ref()
    }

    pub fn store(&mut self, triple: &GradientTriple, iteration: usize) {
        self.entry = Some(CachedPsf {
            psf: triple.psf.clone(),
            sampled_at: iteration,
            l2: triple.l2_psf,
            l2_subset: triple.l2_psf_subset,
        });
    }
}

pub fn step_sgd(w: &mut [f64], g_sgd: &[f64], eta: f64, momentum: &mut MomentumState) {
    momentum.apply(w, g_sgd, eta);
}

/// `w ← w − η·g_sam`, caching the PSF as sampled at `iteration`.
pub fn step_sampling(
    w: &mut [f64],
    triple: &GradientTriple,
    eta: f64,
    momentum: &mut MomentumState,
    cache: &mut PsfCache,
    iteration: usize,
) {
    momentum.apply(w, &triple.g_sam, eta);
    cache.store(triple, iteration);
}

/// `γ^staleness`, or 0 once it drops below the cutoff.
pub fn reuse_coefficient(gamma: f64, staleness: usize) -> f64 {
    let c = match i32::try_from(staleness) {
        Ok(k) => gamma.powi(k),
        Err(_) => 0.0,
    };
    if c < DECAY_CUTOFF {
        0.0
    } else {
        c
    }
}

/// `w ← w − η·(g_sgd + γ^(i − i*)·psf*)`. Returns the coefficient used.
pub fn step_reuse(
    w: &mut [f64],
    g_sgd: &[f64],
    cache: &PsfCache,
    iteration: usize,
    eta: f64,
    gamma: f64,
    momentum: &mut MomentumState,
) -> Result<f64> {
    let entry = cache.get().ok_or_else(|| {
        Error::Contract(format!(
            "reuse step at iteration {iteration} with no sampled PSF"
        ))
    })?;
    if iteration <= entry.sampled_at {
        return Err(Error::Contract(format!(
            "reuse step at iteration {iteration} does not follow the sample at {}",
            entry.sampled_at
        )));
    }
    let coef = reuse_coefficient(gamma, iteration - entry.sampled_at);
    if coef == 0.0 {
        momentum.apply(w, g_sgd, eta);
    } else {
        let direction = linalg::axpy(g_sgd, coef, &entry.psf);
        momentum.apply(w, &direction, eta);
    }
    Ok(coef)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Sgd,
    Sam,
    SamK { k: usize },
    Vsam(SamplerConfig),
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Sgd => "sgd".into(),
            Method::Sam => "sam".into(),
            Method::SamK { k } => format!("sam_{k}"),
            Method::Vsam(_) => "vsam".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Method::SamK { k } if *k == 0 => Err(Error::config("sam_k requires k >= 1")),
            Method::Vsam(cfg) => {
                cfg.validate()?;
                if cfg.i_start == 0 {
                    return Err(Error::config(
                        "vsam requires i_start >= 1 so the PSF cache is filled before reuse",
                    ));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// What happened in one iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    pub iteration: usize,
    pub lr: f64,
    pub loss: f64,
    pub sampled: bool,
    pub grad_evals: u64,
    pub l2_sgd: f64,
    pub l2_sgd_subset: f64,
    /// Norms of the PSF in effect (fresh when sampled, else the cached one).
    pub l2_psf: Option<f64>,
    pub l2_psf_subset: Option<f64>,
    /// `i − i*` for the PSF in effect.
    pub psf_age: Option<usize>,
    /// `⟨g_sgd, psf⟩` for the PSF in effect.
    pub sgd_psf_dot: f64,
    pub reuse_coef: Option<f64>,
    pub sampler: Option<SamplerSnapshot>,
}

/// One optimizer run's mutable state.
#[derive(Debug, Clone)]
pub struct Optimizer {
    method: Method,
    config: OptimizerConfig,
    momentum: MomentumState,
    cache: PsfCache,
    sampler: Option<SamplerState>,
    subset: Vec<Range<usize>>,
    total_iterations: usize,
    iteration: usize,
    grad_evals: u64,
    samples: u64,
}

impl Optimizer {
    pub fn new(
        method: Method,
        config: OptimizerConfig,
        layout: &[Segment],
        total_iterations: usize,
        seed: u64,
    ) -> Result<Self> {
        config.validate()?;
        method.validate()?;
        let (sampler, names) = match &method {
            Method::Vsam(cfg) => (
                Some(SamplerState::new(cfg, seed)?),
                cfg.subset_segments.clone(),
            ),
            _ => (None, Vec::new()),
        };
        Ok(Self {
            momentum: MomentumState::new(config.momentum),
            subset: subset_ranges(layout, &names)?,
            method,
            config,
            cache: PsfCache::default(),
            sampler,
            total_iterations,
            iteration: 0,
            grad_evals: 0,
            samples: 0,
        })
    }

    pub fn method(&self) -> &Method {
        &self.method
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.config
    }

    /// Completed iterations.
    pub fn iteration(&self) -> usize {
        self.iteration
    }

    pub fn grad_evals(&self) -> u64 {
        self.grad_evals
    }

    /// Iterations that computed a fresh PSF.
    pub fn samples(&self) -> u64 {
        self.samples
    }

    pub fn momentum(&self) -> &MomentumState {
        &self.momentum
    }

    pub fn psf_cache(&self) -> &PsfCache {
        &self.cache
    }

    pub fn sampler(&self) -> Option<&SamplerState> {
        self.sampler.as_ref()
    }

    /// Continues numbering (and the learning-rate schedule) after
    /// `completed` iterations run elsewhere, adopting their momentum.
    pub fn resume_at(&mut self, completed: usize, momentum: MomentumState) {
        self.iteration = completed;
        self.momentum = momentum;
    }

    /// True once the gradient-evaluation budget has been reached.
    pub fn budget_exhausted(&self) -> bool {
        self.config
            .grad_eval_budget
            .is_some_and(|b| self.grad_evals >= b)
    }

    fn wants_sam(&mut self, i: usize) -> bool {
        match &self.method {
            Method::Sgd => false,
            Method::Sam => true,
            Method::SamK { k } => i.is_multiple_of(*k),
            Method::Vsam(cfg) => self
                .sampler
                .as_mut()
                .expect("vsam has a sampler")
                .should_sample(cfg, i),
        }
    }

    /// Runs one iteration on `w`. `grad` evaluates loss and gradient on the
    /// current iteration's batch; every call counts as one evaluation.
    pub fn step<F>(&mut self, w: &mut [f64], mut grad: F) -> Result<StepReport>
    where
        F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        let i = self.iteration + 1;
        self.step_inner(w, &mut grad, i)
            .map_err(|e| e.at_iteration(i))
    }

    fn step_inner<F>(&mut self, w: &mut [f64], grad: &mut F, i: usize) -> Result<StepReport>
    where
        F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
    {
        let lr = self
            .config
            .lr_schedule
            .rate(self.config.eta0, i, self.total_iterations);
        let mut counted = |x: &[f64]| {
            let out = grad(x)?;
            if out.1.len() != x.len() {
                return Err(Error::Contract(format!(
                    "gradient has length {} for {} parameters",
                    out.1.len(),
                    x.len()
                )));
            }
            Ok(out)
        };
        let (loss, g_sgd) = counted(w)?;
        self.grad_evals += 1;
        let l2_sgd = linalg::norm(&g_sgd);
        let l2_sgd_subset = subset_norm(&g_sgd, &self.subset);

        let sampled = self.wants_sam(i);
        let mut reuse_coef = None;
        if sampled {
            let triple = sam_gradient_from(
                w,
                loss,
                g_sgd.clone(),
                self.config.rho,
                &self.subset,
                &mut counted,
            )?;
            self.grad_evals += 1;
            self.samples += 1;
            if let (Method::Vsam(cfg), Some(s)) = (&self.method, self.sampler.as_mut()) {
                s.record_sample(cfg, triple.l2_psf_subset, triple.l2_sgd_subset);
            }
            step_sampling(w, &triple, lr, &mut self.momentum, &mut self.cache, i);
        } else if matches!(self.method, Method::Vsam(_)) {
            reuse_coef = Some(step_reuse(
                w,
                &g_sgd,
                &self.cache,
                i,
                lr,
                self.config.gamma,
                &mut self.momentum,
            )?);
        } else {
            step_sgd(w, &g_sgd, lr, &mut self.momentum);
        }

        if let (Method::Vsam(cfg), Some(s)) = (&self.method, self.sampler.as_mut()) {
            if i > cfg.i_start && i.is_multiple_of(cfg.window) {
                s.update_rate(cfg);
            }
        }
        if !linalg::all_finite(w) {
            return Err(Error::numeric("parameters became non-finite"));
        }

        let cached = self.cache.get();
        self.iteration = i;
        Ok(StepReport {
            iteration: i,
            lr,
            loss,
            sampled,
            grad_evals: self.grad_evals,
            l2_sgd,
            l2_sgd_subset,
            l2_psf: cached.map(|c| c.l2),
            l2_psf_subset: cached.map(|c| c.l2_subset),
            psf_age: cached.map(|c| i - c.sampled_at),
            sgd_psf_dot: cached.map_or(0.0, |c| linalg::dot(&g_sgd, &c.psf)),
            reuse_coef,
            sampler: self.sampler.as_ref().map(SamplerState::snapshot),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    fn quad() -> ObjectiveSpec {
        ObjectiveSpec::quadratic(Matrix::diag(&[1.0, 10.0]), vec![0.0, 0.0], 0.0).unwrap()
    }

    #[test]
    fn perturbation_examples() {
        let e = perturbation(&[3.0, 4.0], 0.05);
        assert!((e[0] - 0.03).abs() < 1e-17 && (e[1] - 0.04).abs() < 1e-17);
        assert_eq!(perturbation(&[0.0, 0.0], 0.3), vec![0.0, 0.0]);
        assert_eq!(perturbation(&[1e-13, 0.0], 0.3), vec![0.0, 0.0]);
    }

    #[test]
    fn sam_gradient_on_diag_quadratic() {
        let t = sam_gradient(&quad(), &[1.0, 1.0], None, 0.1).unwrap();
        let r = 101f64.sqrt();
        assert!((t.psf[0] - 0.1 / r).abs() < 1e-12);
        assert!((t.psf[1] - 10.0 / r).abs() < 1e-12);
        assert!((t.psf[0] - 0.009950).abs() < 1e-6);
        assert!((t.psf[1] - 0.995037).abs() < 1e-6);
        for i in 0..2 {
            assert_eq!(t.psf[i], t.g_sam[i] - t.g_sgd[i]);
        }
        assert_eq!(t.l2_psf, linalg::norm(&t.psf));
    }

    #[test]
    fn psf_vanishes_at_critical_point() {
        let t = sam_gradient(&quad(), &[0.0, 0.0], None, 0.1).unwrap();
        assert_eq!(t.g_sam, t.g_sgd);
        assert_eq!(t.psf, vec![0.0, 0.0]);
    }

    #[test]
    fn psf_linear_in_rho_on_quadratic() {
        let a = sam_gradient(&quad(), &[0.3, -0.7], None, 0.01).unwrap();
        let b = sam_gradient(&quad(), &[0.3, -0.7], None, 0.02).unwrap();
        assert!((b.l2_psf - 2.0 * a.l2_psf).abs() < 1e-12);
    }

    #[test]
    fn sgd_steps() {
        let mut m = MomentumState::new(0.0);
        let mut w = vec![1.0, 1.0];
        step_sgd(&mut w, &[1.0, 10.0], 0.1, &mut m);
        assert!((w[0] - 0.9).abs() < 1e-15 && w[1].abs() < 1e-15);
        let mut w = vec![1.0, 1.0];
        step_sgd(&mut w, &[1.0, 10.0], 0.0, &mut m);
        assert_eq!(w, vec![1.0, 1.0]);
    }

    #[test]
    fn momentum_two_step_recurrence() {
        let (eta, mu, g) = (0.1, 0.9, [2.0, -1.0]);
        let mut m = MomentumState::new(mu);
        let mut w = vec![0.0, 0.0];
        step_sgd(&mut w, &g, eta, &mut m);
        step_sgd(&mut w, &g, eta, &mut m);
        // v1 = g, v2 = μg + g
        for k in 0..2 {
            let expected = -eta * g[k] - eta * (mu * g[k] + g[k]);
            assert!((w[k] - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn sampling_step_updates_cache() {
        let triple = GradientTriple {
            loss: 0.0,
            g_sgd: vec![1.0, 1.0],
            g_sam: vec![2.0, 2.0],
            psf: vec![1.0, 1.0],
            l2_sgd: 0.0,
            l2_psf: 0.0,
            l2_sgd_subset: 0.0,
            l2_psf_subset: 0.0,
        };
        let mut w = vec![1.0, 1.0];
        let mut cache = PsfCache::default();
        assert!(!cache.is_valid());
        step_sampling(
            &mut w,
            &triple,
            0.5,
            &mut MomentumState::new(0.0),
            &mut cache,
            7,
        );
        assert_eq!(w, vec![0.0, 0.0]);
        assert_eq!(cache.get().unwrap().sampled_at, 7);
    }

    #[test]
    fn sampling_then_closed_form() {
        // w − η A (w + ρ A w / ‖A w‖)
        let (eta, rho) = (0.01, 0.1);
        let w0 = [1.0, 1.0];
        let t = sam_gradient(&quad(), &w0, None, rho).unwrap();
        let mut w = w0.to_vec();
        step_sampling(
            &mut w,
            &t,
            eta,
            &mut MomentumState::new(0.0),
            &mut PsfCache::default(),
            1,
        );
        let aw = [1.0, 10.0];
        let n = 101f64.sqrt();
        let p = [w0[0] + rho * aw[0] / n, w0[1] + rho * aw[1] / n];
        let expected = [w0[0] - eta * p[0], w0[1] - eta * 10.0 * p[1]];
        assert!(linalg::max_abs_diff(&w, &expected) < 1e-15);
    }

    fn cache_with(psf: Vec<f64>, at: usize) -> PsfCache {
        let mut c = PsfCache::default();
        let t = GradientTriple {
            loss: 0.0,
            g_sgd: vec![0.0; psf.len()],
            g_sam: psf.clone(),
            psf,
            l2_sgd: 0.0,
            l2_psf: 0.0,
            l2_sgd_subset: 0.0,
            l2_psf_subset: 0.0,
        };
        c.store(&t, at);
        c
    }

    #[test]
    fn reuse_step_examples() {
        let cache = cache_with(vec![0.0, 1.0], 3);
        let mut m = MomentumState::new(0.0);
        let mut w = vec![0.0, 0.0];
        step_reuse(&mut w, &[1.0, 0.0], &cache, 5, 1.0, 0.7, &mut m).unwrap();
        assert_eq!(w[0], -1.0);
        assert!((w[1] + 0.49).abs() < 1e-15);

        let mut w = vec![0.0, 0.0];
        step_reuse(&mut w, &[1.0, 0.0], &cache, 4, 0.5, 1.0, &mut m).unwrap();
        assert_eq!(w, vec![-0.5, -0.5]);

        let mut w = vec![0.0, 0.0];
        let coef = step_reuse(&mut w, &[1.0, 0.0], &cache, 1003, 1.0, 0.7, &mut m).unwrap();
        assert_eq!(coef, 0.0);
        assert_eq!(w, vec![-1.0, 0.0]);
    }

    #[test]
    fn reuse_requires_valid_earlier_cache() {
        let mut w = vec![0.0];
        let mut m = MomentumState::new(0.0);
        let err = step_reuse(&mut w, &[1.0], &PsfCache::default(), 2, 1.0, 0.9, &mut m);
        assert!(matches!(err, Err(Error::Contract(_))));
        let cache = cache_with(vec![1.0], 5);
        assert!(step_reuse(&mut w, &[1.0], &cache, 5, 1.0, 0.9, &mut m).is_err());
    }

    #[test]
    fn reuse_coefficient_monotone() {
        assert_eq!(reuse_coefficient(0.8, 0), 1.0);
        let mut prev = 1.0;
        for k in 1..500 {
            let c = reuse_coefficient(0.8, k);
            assert!(c <= prev);
            prev = c;
        }
        assert_eq!(reuse_coefficient(0.7, 1000), 0.0);
        assert_eq!(reuse_coefficient(1.0, usize::MAX), 0.0);
    }

    #[test]
    fn schedules() {
        assert_eq!(LrSchedule::Constant.rate(0.5, 10, 100), 0.5);
        assert_eq!(LrSchedule::InverseT.rate(0.5, 10, 100), 0.05);
        assert_eq!(LrSchedule::Cosine.rate(0.5, 1, 100), 0.5);
        assert!((LrSchedule::Cosine.rate(0.5, 51, 100) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn config_validation() {
        let ok = OptimizerConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            OptimizerConfig {
                rho: 0.0,
                ..ok.clone()
            },
            OptimizerConfig {
                gamma: 0.0,
                ..ok.clone()
            },
            OptimizerConfig {
                gamma: 1.1,
                ..ok.clone()
            },
            OptimizerConfig {
                eta0: -1.0,
                ..ok.clone()
            },
            OptimizerConfig {
                momentum: 1.0,
                ..ok.clone()
            },
        ] {
            assert!(bad.validate().is_err());
        }
        assert!(Method::SamK { k: 0 }.validate().is_err());
        let no_warmup = SamplerConfig {
            i_start: 0,
            ..SamplerConfig::default()
        };
        assert!(Method::Vsam(no_warmup).validate().is_err());
    }

    #[test]
    fn sam_k_counts_evaluations() {
        let spec = quad();
        let mut opt = Optimizer::new(
            Method::SamK { k: 5 },
            OptimizerConfig {
                eta0: 0.01,
                lr_schedule: LrSchedule::Constant,
                ..Default::default()
            },
            &spec.layout(),
            100,
            0,
        )
        .unwrap();
        let mut w = vec![1.0, 1.0];
        for _ in 0..100 {
            opt.step(&mut w, |x| spec.eval_grad(x, None)).unwrap();
        }
        assert_eq!(opt.samples(), 20);
        assert_eq!(opt.grad_evals(), 120);
    }

    #[test]
    fn numeric_error_carries_iteration() {
        let spec = ObjectiveSpec::rosenbrock(2, 0.0).unwrap();
        let mut opt = Optimizer::new(
            Method::Sgd,
            OptimizerConfig {
                eta0: 10.0,
                lr_schedule: LrSchedule::Constant,
                ..Default::default()
            },
            &spec.layout(),
            100,
            0,
        )
        .unwrap();
        let mut w = vec![3.0, -3.0];
        let err = (0..100)
            .find_map(|_| opt.step(&mut w, |x| spec.eval_grad(x, None)).err())
            .expect("diverges");
        assert!(
            matches!(
                err,
                Error::Numeric {
                    iteration: Some(_),
                    ..
                }
            ),
            "{err}"
        );
    }
}
