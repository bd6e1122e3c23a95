//! C ABI over the `vsam` optimizer toolkit.
//!
//! Every fallible function returns a [`VsamStatus`]; on failure the message is
//! available from [`vsam_last_error`] on the same thread. Handles are opaque
//! and owned by the caller, who releases them with the matching `_free`.

use std::cell::RefCell;
use std::ffi::{c_char, c_void, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use vsam::linalg::Matrix;
use vsam::objective::{make_sharp_flat, ObjectiveSpec, Segment};
use vsam::optim::{LrSchedule, Method, Optimizer, OptimizerConfig, StepReport};
use vsam::sampler::{SamplerConfig, SamplerState, SamplingMode};
use vsam::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VsamStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Numeric = 3,
    Contract = 4,
    CallbackFailed = 5,
    Panic = 6,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VsamMethod {
    Sgd = 0,
    Sam = 1,
    SamK = 2,
    Vsam = 3,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VsamLrSchedule {
    Constant = 0,
    Cosine = 1,
    InverseT = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VsamSamplingMode {
    Adaptive = 0,
    Always = 1,
    Never = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VsamSamplerConfig {
    pub window: usize,
    pub slices: usize,
    pub alpha: f64,
    pub s1: f64,
    pub i_start: usize,
    pub p_max: f64,
    pub eps: f64,
    pub mode: VsamSamplingMode,
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VsamOptimizerConfig {
    pub eta0: f64,
    pub rho: f64,
    pub gamma: f64,
    pub momentum: f64,
    pub lr_schedule: VsamLrSchedule,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct VsamSamplerSnapshot {
    pub p: f64,
    pub s: f64,
    pub c_var: f64,
    pub c_norm: f64,
    pub v: f64,
    pub r: f64,
}

/// One iteration's outcome. Optional quantities are NaN (or -1 for
/// `psf_age`) when absent.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct VsamStepReport {
    pub iteration: usize,
    pub lr: f64,
    pub loss: f64,
    pub sampled: bool,
    pub grad_evals: u64,
    pub l2_sgd: f64,
    pub l2_psf: f64,
    pub psf_age: i64,
    pub sampler: VsamSamplerSnapshot,
}

/// Evaluates loss and gradient at `w` (length `n`). Writes the loss to
/// `*loss` and `n` gradient entries to `grad`. Nonzero return aborts the step.
pub type VsamGradFn = Option<
    unsafe extern "C" fn(
        w: *const f64,
        n: usize,
        loss: *mut f64,
        grad: *mut f64,
        user: *mut c_void,
    ) -> i32,
>;

pub struct VsamObjective {
    spec: ObjectiveSpec,
}

pub struct VsamSampler {
    config: SamplerConfig,
    state: SamplerState,
}

pub struct VsamOptimizer {
    inner: Optimizer,
    dim: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> VsamStatus {
    match e {
        Error::Config(_) | Error::Precondition(_) | Error::Format { .. } | Error::Io { .. } => {
            VsamStatus::InvalidArgument
        }
        Error::Numeric { .. } => VsamStatus::Numeric,
        Error::Contract(_) => VsamStatus::Contract,
    }
}

fn fail(status: VsamStatus, msg: impl Into<String>) -> VsamStatus {
    set_error(msg.into());
    status
}

fn guard(f: impl FnOnce() -> Result<(), VsamStatus>) -> VsamStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => VsamStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(VsamStatus::Panic, "internal panic"),
    }
}

fn check(r: vsam::Result<()>) -> Result<(), VsamStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn lift<T>(r: vsam::Result<T>) -> Result<T, VsamStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), VsamStatus> {
    if p.is_null() {
        Err(fail(VsamStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], VsamStatus> {
    if n == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a>(p: *mut f64, n: usize, what: &str) -> Result<&'a mut [f64], VsamStatus> {
    if n == 0 {
        return Ok(&mut []);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn emit<T>(out: *mut *mut T, value: T) -> Result<(), VsamStatus> {
    non_null(out, "output handle pointer")?;
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn vsam_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn vsam_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn vsam_sampler_config_default() -> VsamSamplerConfig {
    let d = SamplerConfig::default();
    VsamSamplerConfig {
        window: d.window,
        slices: d.slices,
        alpha: d.alpha,
        s1: d.s1,
        i_start: d.i_start,
        p_max: d.p_max,
        eps: d.eps,
        mode: VsamSamplingMode::Adaptive,
    }
}

#[no_mangle]
pub extern "C" fn vsam_optimizer_config_default() -> VsamOptimizerConfig {
    let d = OptimizerConfig::default();
    VsamOptimizerConfig {
        eta0: d.eta0,
        rho: d.rho,
        gamma: d.gamma,
        momentum: d.momentum,
        lr_schedule: VsamLrSchedule::Cosine,
    }
}

fn sampler_config(c: &VsamSamplerConfig) -> SamplerConfig {
    SamplerConfig {
        window: c.window,
        slices: c.slices,
        alpha: c.alpha,
        s1: c.s1,
        i_start: c.i_start,
        p_max: c.p_max,
        eps: c.eps,
        mode: match c.mode {
            VsamSamplingMode::Adaptive => SamplingMode::Adaptive,
            VsamSamplingMode::Always => SamplingMode::Always,
            VsamSamplingMode::Never => SamplingMode::Never,
        },
        subset_segments: Vec::new(),
    }
}

fn optimizer_config(c: &VsamOptimizerConfig) -> OptimizerConfig {
    OptimizerConfig {
        eta0: c.eta0,
        rho: c.rho,
        gamma: c.gamma,
        momentum: c.momentum,
        lr_schedule: match c.lr_schedule {
            VsamLrSchedule::Constant => LrSchedule::Constant,
            VsamLrSchedule::Cosine => LrSchedule::Cosine,
            VsamLrSchedule::InverseT => LrSchedule::InverseT,
        },
        grad_eval_budget: None,
    }
}

fn snapshot(s: &vsam::sampler::SamplerSnapshot) -> VsamSamplerSnapshot {
    VsamSamplerSnapshot {
        p: s.p,
        s: s.s,
        c_var: s.c_var,
        c_norm: s.c_norm,
        v: s.v,
        r: s.r,
    }
}

fn report(r: &StepReport) -> VsamStepReport {
    VsamStepReport {
        iteration: r.iteration,
        lr: r.lr,
        loss: r.loss,
        sampled: r.sampled,
        grad_evals: r.grad_evals,
        l2_sgd: r.l2_sgd,
        l2_psf: r.l2_psf.unwrap_or(f64::NAN),
        psf_age: r.psf_age.map_or(-1, |a| a as i64),
        sampler: r
            .sampler
            .as_ref()
            .map(snapshot)
            .unwrap_or(VsamSamplerSnapshot {
                p: f64::NAN,
                s: f64::NAN,
                c_var: f64::NAN,
                c_norm: f64::NAN,
                v: f64::NAN,
                r: f64::NAN,
            }),
    }
}

/// Quadratic `½wᵀAw − bᵀw` with row-major `a` (`dim × dim`) and `b` (`dim`).
///
/// # Safety
/// `a` and `b` must point to `dim²` and `dim` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn vsam_objective_quadratic(
    a: *const f64,
    b: *const f64,
    dim: usize,
    weight_decay: f64,
    out: *mut *mut VsamObjective,
) -> VsamStatus {
    guard(|| {
        let a = slice(a, dim * dim, "a")?;
        let b = slice(b, dim, "b")?;
        let rows: Vec<Vec<f64>> = a.chunks(dim.max(1)).map(<[f64]>::to_vec).collect();
        let m = Matrix::from_rows(&rows).ok_or_else(|| {
            fail(
                VsamStatus::InvalidArgument,
                "a must be a non-empty square matrix",
            )
        })?;
        let spec = lift(ObjectiveSpec::quadratic(m, b.to_vec(), weight_decay))?;
        emit(out, VsamObjective { spec })
    })
}

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vsam_objective_rosenbrock(
    dim: usize,
    weight_decay: f64,
    out: *mut *mut VsamObjective,
) -> VsamStatus {
    guard(|| {
        let spec = lift(ObjectiveSpec::rosenbrock(dim, weight_decay))?;
        emit(out, VsamObjective { spec })
    })
}

/// Two-dimensional landscape with a sharp and a flat basin.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vsam_objective_sharp_flat(
    width_sharp: f64,
    width_flat: f64,
    depth_gap: f64,
    separation: f64,
    out: *mut *mut VsamObjective,
) -> VsamStatus {
    guard(|| {
        let spec = lift(make_sharp_flat(
            width_sharp,
            width_flat,
            depth_gap,
            separation,
        ))?;
        emit(out, VsamObjective { spec })
    })
}

/// # Safety
/// `obj` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vsam_objective_param_count(obj: *const VsamObjective) -> usize {
    obj.as_ref().map_or(0, |o| o.spec.param_count())
}

/// Loss and gradient at `w`; `grad` receives `n` entries and may be null.
///
/// # Safety
/// `w` and `grad` must hold `n` doubles, `loss` must be writable.
#[no_mangle]
pub unsafe extern "C" fn vsam_objective_loss_grad(
    obj: *const VsamObjective,
    w: *const f64,
    n: usize,
    loss: *mut f64,
    grad: *mut f64,
) -> VsamStatus {
    guard(|| {
        non_null(obj, "objective")?;
        non_null(loss, "loss")?;
        let spec = &(*obj).spec;
        if n != spec.param_count() {
            return Err(fail(
                VsamStatus::InvalidArgument,
                format!("expected {} parameters, got {n}", spec.param_count()),
            ));
        }
        let (l, g) = lift(spec.eval_grad(slice(w, n, "w")?, None))?;
        *loss = l;
        if !grad.is_null() {
            slice_mut(grad, n, "grad")?.copy_from_slice(&g);
        }
        Ok(())
    })
}

/// # Safety
/// `obj` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vsam_objective_free(obj: *mut VsamObjective) {
    if !obj.is_null() {
        drop(Box::from_raw(obj));
    }
}

/// # Safety
/// `config` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn vsam_sampler_new(
    config: *const VsamSamplerConfig,
    seed: u64,
    out: *mut *mut VsamSampler,
) -> VsamStatus {
    guard(|| {
        non_null(config, "config")?;
        let config = sampler_config(&*config);
        check(config.validate())?;
        let state = lift(SamplerState::new(&config, seed))?;
        emit(out, VsamSampler { config, state })
    })
}

/// Sampling decision for 1-based iteration `i`.
///
/// # Safety
/// `s` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn vsam_sampler_should_sample(
    s: *mut VsamSampler,
    i: usize,
    out: *mut bool,
) -> VsamStatus {
    guard(|| {
        non_null(s, "sampler")?;
        non_null(out, "out")?;
        let s = &mut *s;
        *out = s.state.should_sample(&s.config, i);
        Ok(())
    })
}

/// # Safety
/// `s` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vsam_sampler_record(
    s: *mut VsamSampler,
    l2_psf: f64,
    l2_sgd: f64,
) -> VsamStatus {
    guard(|| {
        non_null(s, "sampler")?;
        if !(l2_psf.is_finite() && l2_sgd.is_finite() && l2_psf >= 0.0 && l2_sgd >= 0.0) {
            return Err(fail(
                VsamStatus::InvalidArgument,
                "norms must be finite and non-negative",
            ));
        }
        let s = &mut *s;
        s.state.record_sample(&s.config, l2_psf, l2_sgd);
        Ok(())
    })
}

/// Closes the current window and updates the sampling rate.
///
/// # Safety
/// `s` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn vsam_sampler_update(s: *mut VsamSampler) -> VsamStatus {
    guard(|| {
        non_null(s, "sampler")?;
        let s = &mut *s;
        s.state.update_rate(&s.config);
        Ok(())
    })
}

/// # Safety
/// `s` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn vsam_sampler_snapshot(
    s: *const VsamSampler,
    out: *mut VsamSamplerSnapshot,
) -> VsamStatus {
    guard(|| {
        non_null(s, "sampler")?;
        non_null(out, "out")?;
        *out = snapshot(&(*s).state.snapshot());
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vsam_sampler_free(s: *mut VsamSampler) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// Creates an optimizer over `dim` parameters. `sampler` is read only for
/// `VSAM_METHOD_VSAM` and `k` only for `VSAM_METHOD_SAM_K`.
///
/// # Safety
/// `config` and `out` must be valid; `sampler` must be valid for vsam.
#[no_mangle]
pub unsafe extern "C" fn vsam_optimizer_new(
    method: VsamMethod,
    k: usize,
    sampler: *const VsamSamplerConfig,
    config: *const VsamOptimizerConfig,
    dim: usize,
    total_iterations: usize,
    seed: u64,
    out: *mut *mut VsamOptimizer,
) -> VsamStatus {
    guard(|| {
        non_null(config, "config")?;
        let method = match method {
            VsamMethod::Sgd => Method::Sgd,
            VsamMethod::Sam => Method::Sam,
            VsamMethod::SamK => Method::SamK { k },
            VsamMethod::Vsam => {
                non_null(sampler, "sampler config")?;
                Method::Vsam(sampler_config(&*sampler))
            }
        };
        if dim == 0 {
            return Err(fail(VsamStatus::InvalidArgument, "dim must be positive"));
        }
        let layout = [Segment::new("w", 0, dim)];
        let inner = lift(Optimizer::new(
            method,
            optimizer_config(&*config),
            &layout,
            total_iterations,
            seed,
        ))?;
        emit(out, VsamOptimizer { inner, dim })
    })
}

/// Runs one iteration on `w`, calling `grad` once per gradient evaluation.
///
/// # Safety
/// `w` must hold `n` doubles; `grad` must follow the [`VsamGradFn`] contract.
#[no_mangle]
pub unsafe extern "C" fn vsam_optimizer_step(
    opt: *mut VsamOptimizer,
    w: *mut f64,
    n: usize,
    grad: VsamGradFn,
    user: *mut c_void,
    out: *mut VsamStepReport,
) -> VsamStatus {
    guard(|| {
        non_null(opt, "optimizer")?;
        let Some(cb) = grad else {
            return Err(fail(VsamStatus::NullPointer, "gradient callback is null"));
        };
        let opt = &mut *opt;
        if n != opt.dim {
            return Err(fail(
                VsamStatus::InvalidArgument,
                format!("expected {} parameters, got {n}", opt.dim),
            ));
        }
        let w = slice_mut(w, n, "w")?;
        let mut callback_code = 0;
        let result = opt.inner.step(w, |x| {
            let mut loss = f64::NAN;
            let mut g = vec![0.0; x.len()];
            let code = cb(x.as_ptr(), x.len(), &mut loss, g.as_mut_ptr(), user);
            if code != 0 {
                callback_code = code;
                return Err(Error::Contract(format!(
                    "gradient callback returned {code}"
                )));
            }
            Ok((loss, g))
        });
        match result {
            Ok(r) => {
                if !out.is_null() {
                    *out = report(&r);
                }
                Ok(())
            }
            Err(e) if callback_code != 0 => Err(fail(VsamStatus::CallbackFailed, e.to_string())),
            Err(e) => Err(fail(status_of(&e), e.to_string())),
        }
    })
}

/// Runs one iteration using an analytic objective as the gradient source.
///
/// # Safety
/// `w` must hold `n` doubles; handles must be valid.
#[no_mangle]
pub unsafe extern "C" fn vsam_optimizer_step_objective(
    opt: *mut VsamOptimizer,
    obj: *const VsamObjective,
    w: *mut f64,
    n: usize,
    out: *mut VsamStepReport,
) -> VsamStatus {
    guard(|| {
        non_null(opt, "optimizer")?;
        non_null(obj, "objective")?;
        let (opt, spec) = (&mut *opt, &(*obj).spec);
        if n != opt.dim || n != spec.param_count() {
            return Err(fail(
                VsamStatus::InvalidArgument,
                format!(
                    "parameter count mismatch: optimizer {}, objective {}, got {n}",
                    opt.dim,
                    spec.param_count()
                ),
            ));
        }
        let w = slice_mut(w, n, "w")?;
        let r = lift(opt.inner.step(w, |x| spec.eval_grad(x, None)))?;
        if !out.is_null() {
            *out = report(&r);
        }
        Ok(())
    })
}

/// # Safety
/// `opt` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vsam_optimizer_grad_evals(opt: *const VsamOptimizer) -> u64 {
    opt.as_ref().map_or(0, |o| o.inner.grad_evals())
}

/// # Safety
/// `opt` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn vsam_optimizer_samples(opt: *const VsamOptimizer) -> u64 {
    opt.as_ref().map_or(0, |o| o.inner.samples())
}

/// # Safety
/// `opt` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn vsam_optimizer_free(opt: *mut VsamOptimizer) {
    if !opt.is_null() {
        drop(Box::from_raw(opt));
    }
}
