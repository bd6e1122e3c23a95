//! Training loop: feeds per-iteration batches to an [`Optimizer`] and turns
//! each step into a [`MetricsRecord`].

use std::time::Instant;

use crate::data::{make_batches, Dataset};
use crate::error::{Error, Result};
use crate::metrics::MetricsRecord;
use crate::objective::{Batch, ObjectiveSpec};
use crate::optim::{Method, Optimizer, OptimizerConfig, StepReport};
use crate::sampler::SamplerConfig;

/// Train and held-out data for objectives that need examples.
#[derive(Debug, Clone, Copy)]
pub struct DataSplit<'a> {
    pub train: &'a Dataset,
    pub eval: &'a Dataset,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub iterations: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Starting point; the objective's seeded init when `None`.
    pub init: Option<Vec<f64>>,
    /// Keep the parameter vector after every iteration.
    pub record_trajectory: bool,
}

impl RunSettings {
    pub fn new(iterations: usize, seed: u64) -> Self {
        Self {
            iterations,
            batch_size: 32,
            seed,
            init: None,
            record_trajectory: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub records: Vec<MetricsRecord>,
    pub params: Vec<f64>,
    /// Parameters after each iteration (empty unless requested).
    pub trajectory: Vec<Vec<f64>>,
    pub stopped_by_budget: bool,
    pub grad_evals: u64,
    pub samples: u64,
}

/// Batch source for one run. Analytic objectives get a single empty slot
/// per epoch.
pub struct Trainer<'a> {
    spec: &'a ObjectiveSpec,
    data: Option<DataSplit<'a>>,
    batch_size: usize,
    seed: u64,
    cached_epoch: Option<usize>,
    batches: Vec<Batch>,
    eval_batch: Option<Batch>,
}

impl<'a> Trainer<'a> {
    pub fn new(
        spec: &'a ObjectiveSpec,
        data: Option<DataSplit<'a>>,
        batch_size: usize,
        seed: u64,
    ) -> Result<Self> {
        if spec.needs_data() && data.is_none() {
            return Err(Error::config(format!(
                "{} objective requires a dataset",
                spec.kind_name()
            )));
        }
        if data.is_some() && batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        let eval_batch = match data {
            Some(d) if spec.needs_data() && !d.eval.is_empty() => Some(d.eval.full_batch()?),
            _ => None,
        };
        Ok(Self {
            spec,
            data: data.filter(|_| spec.needs_data()),
            batch_size,
            seed,
            cached_epoch: None,
            batches: Vec::new(),
            eval_batch,
        })
    }

    pub fn batches_per_epoch(&self) -> usize {
        match self.data {
            Some(d) => d.train.len().div_ceil(self.batch_size),
            None => 1,
        }
    }

    /// 0-based epoch of 1-based iteration `i`.
    pub fn epoch_of(&self, i: usize) -> usize {
        (i - 1) / self.batches_per_epoch()
    }

    fn batch_for(&mut self, i: usize) -> Result<Option<&Batch>> {
        let Some(d) = self.data else {
            return Ok(None);
        };
        let epoch = self.epoch_of(i);
        if self.cached_epoch != Some(epoch) {
            self.batches = make_batches(d.train, self.batch_size, self.seed, epoch as u64)?;
            self.cached_epoch = Some(epoch);
        }
        Ok(Some(&self.batches[(i - 1) % self.batches.len()]))
    }

    fn evaluate(&self, w: &[f64]) -> Result<(Option<f64>, Option<f64>)> {
        match &self.eval_batch {
            Some(b) => Ok((
                Some(self.spec.eval_loss(w, Some(b))?),
                self.spec.accuracy(w, b)?,
            )),
            None => Ok((None, None)),
        }
    }

    /// Runs one optimizer iteration on `w` and builds its record (without
    /// wall clock).
    pub fn step(&mut self, opt: &mut Optimizer, w: &mut [f64]) -> Result<MetricsRecord> {
        let i = opt.iteration() + 1;
        let before = opt.grad_evals();
        let spec = self.spec;
        let batch = self.batch_for(i)?.cloned();
        let report = opt.step(w, |x| spec.eval_grad(x, batch.as_ref()))?;
        let mut record = record_from(&report, self.epoch_of(i), report.grad_evals - before);
        if i.is_multiple_of(self.batches_per_epoch()) {
            let (loss, acc) = self.evaluate(w).map_err(|e| e.at_iteration(i))?;
            record.eval_loss = loss;
            record.eval_accuracy = acc;
        }
        Ok(record)
    }

    /// Runs until `iterations` are complete or the gradient budget is
    /// spent, calling `observe` after every step. On error the records
    /// produced so far have already been observed.
    pub fn run<F>(
        &mut self,
        opt: &mut Optimizer,
        w: &mut [f64],
        iterations: usize,
        mut observe: F,
    ) -> Result<bool>
    where
        F: FnMut(&MetricsRecord, &[f64]) -> Result<()>,
    {
        let start = Instant::now();
        while opt.iteration() < iterations {
            if opt.budget_exhausted() {
                return Ok(true);
            }
            let mut record = self.step(opt, w)?;
            record.wall_clock_seconds = start.elapsed().as_secs_f64();
            observe(&record, w)?;
        }
        Ok(false)
    }
}

pub fn record_from(report: &StepReport, epoch: usize, step_evals: u64) -> MetricsRecord {
    let snap = report.sampler.as_ref();
    MetricsRecord {
        iteration: report.iteration,
        epoch,
        lr: report.lr,
        train_loss: report.loss,
        eval_loss: None,
        eval_accuracy: None,
        l2_sgd: report.l2_sgd,
        l2_psf: report.l2_psf,
        l2_sgd_subset: report.l2_sgd_subset,
        l2_psf_subset: report.l2_psf_subset,
        psf_stale: report.l2_psf.is_some() && !report.sampled,
        psf_age: report.psf_age,
        sgd_psf_dot: report.sgd_psf_dot,
        sampled: report.sampled,
        p: snap.map(|s| s.p),
        s: snap.map(|s| s.s),
        c_var: snap.map(|s| s.c_var),
        c_norm: snap.map(|s| s.c_norm),
        step_grad_evals: step_evals,
        cumulative_grad_evals: report.grad_evals,
        wall_clock_seconds: 0.0,
    }
}

/// Runs `method` from scratch and collects every record.
pub fn run(
    spec: &ObjectiveSpec,
    data: Option<DataSplit<'_>>,
    method: Method,
    config: &OptimizerConfig,
    settings: &RunSettings,
) -> Result<RunResult> {
    let mut opt = Optimizer::new(
        method,
        config.clone(),
        &spec.layout(),
        settings.iterations,
        settings.seed,
    )?;
    let mut w = match &settings.init {
        Some(w0) => spec.params(w0.clone())?.into_values(),
        None => spec.init_params(settings.seed).into_values(),
    };
    let mut trainer = Trainer::new(spec, data, settings.batch_size, settings.seed)?;
    let mut records = Vec::with_capacity(settings.iterations);
    let mut trajectory = Vec::new();
    let stopped_by_budget = trainer.run(&mut opt, &mut w, settings.iterations, |r, w| {
        records.push(r.clone());
        if settings.record_trajectory {
            trajectory.push(w.to_vec());
        }
        Ok(())
    })?;
    Ok(RunResult {
        records,
        params: w,
        trajectory,
        stopped_by_budget,
        grad_evals: opt.grad_evals(),
        samples: opt.samples(),
    })
}

pub fn run_vsam(
    spec: &ObjectiveSpec,
    data: Option<DataSplit<'_>>,
    config: &OptimizerConfig,
    sampler: &SamplerConfig,
    settings: &RunSettings,
) -> Result<RunResult> {
    run(spec, data, Method::Vsam(sampler.clone()), config, settings)
}

pub fn run_sam_k(
    spec: &ObjectiveSpec,
    data: Option<DataSplit<'_>>,
    config: &OptimizerConfig,
    k: usize,
    settings: &RunSettings,
) -> Result<RunResult> {
    run(spec, data, Method::SamK { k }, config, settings)
}
