#ifndef VSAM_H
#define VSAM_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum VsamLrSchedule {
  VSAM_LR_SCHEDULE_CONSTANT = 0,
  VSAM_LR_SCHEDULE_COSINE = 1,
  VSAM_LR_SCHEDULE_INVERSE_T = 2,
} VsamLrSchedule;

typedef enum VsamMethod {
  VSAM_METHOD_SGD = 0,
  VSAM_METHOD_SAM = 1,
  VSAM_METHOD_SAM_K = 2,
  VSAM_METHOD_VSAM = 3,
} VsamMethod;

typedef enum VsamSamplingMode {
  VSAM_SAMPLING_MODE_ADAPTIVE = 0,
  VSAM_SAMPLING_MODE_ALWAYS = 1,
  VSAM_SAMPLING_MODE_NEVER = 2,
} VsamSamplingMode;

typedef enum VsamStatus {
  VSAM_STATUS_OK = 0,
  VSAM_STATUS_NULL_POINTER = 1,
  VSAM_STATUS_INVALID_ARGUMENT = 2,
  VSAM_STATUS_NUMERIC = 3,
  VSAM_STATUS_CONTRACT = 4,
  VSAM_STATUS_CALLBACK_FAILED = 5,
  VSAM_STATUS_PANIC = 6,
} VsamStatus;

typedef struct VsamObjective VsamObjective;

typedef struct VsamOptimizer VsamOptimizer;

typedef struct VsamSampler VsamSampler;

typedef struct VsamSamplerConfig {
  size_t window;
  size_t slices;
  double alpha;
  double s1;
  size_t i_start;
  double p_max;
  double eps;
  enum VsamSamplingMode mode;
} VsamSamplerConfig;

typedef struct VsamOptimizerConfig {
  double eta0;
  double rho;
  double gamma;
  double momentum;
  enum VsamLrSchedule lr_schedule;
} VsamOptimizerConfig;

typedef struct VsamSamplerSnapshot {
  double p;
  double s;
  double c_var;
  double c_norm;
  double v;
  double r;
} VsamSamplerSnapshot;

/**
 * Evaluates loss and gradient at `w` (length `n`). Writes the loss to
 * `*loss` and `n` gradient entries to `grad`. Nonzero return aborts the step.
 */
typedef int32_t (*VsamGradFn)(const double *w, size_t n, double *loss, double *grad, void *user);

/**
 * One iteration's outcome. Optional quantities are NaN (or -1 for
 * `psf_age`) when absent.
 */
typedef struct VsamStepReport {
  size_t iteration;
  double lr;
  double loss;
  bool sampled;
  uint64_t grad_evals;
  double l2_sgd;
  double l2_psf;
  int64_t psf_age;
  struct VsamSamplerSnapshot sampler;
} VsamStepReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *vsam_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *vsam_version(void);

struct VsamSamplerConfig vsam_sampler_config_default(void);

struct VsamOptimizerConfig vsam_optimizer_config_default(void);

/**
 * Quadratic `½wᵀAw − bᵀw` with row-major `a` (`dim × dim`) and `b` (`dim`).
 *
 * # Safety
 * `a` and `b` must point to `dim²` and `dim` readable doubles.
 */
enum VsamStatus vsam_objective_quadratic(const double *a,
                                         const double *b,
                                         size_t dim,
                                         double weight_decay,
                                         struct VsamObjective **out);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum VsamStatus vsam_objective_rosenbrock(size_t dim,
                                          double weight_decay,
                                          struct VsamObjective **out);

/**
 * Two-dimensional landscape with a sharp and a flat basin.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum VsamStatus vsam_objective_sharp_flat(double width_sharp,
                                          double width_flat,
                                          double depth_gap,
                                          double separation,
                                          struct VsamObjective **out);

/**
 * # Safety
 * `obj` must be null or a live handle.
 */
size_t vsam_objective_param_count(const struct VsamObjective *obj);

/**
 * Loss and gradient at `w`; `grad` receives `n` entries and may be null.
 *
 * # Safety
 * `w` and `grad` must hold `n` doubles, `loss` must be writable.
 */
enum VsamStatus vsam_objective_loss_grad(const struct VsamObjective *obj,
                                         const double *w,
                                         size_t n,
                                         double *loss,
                                         double *grad);

/**
 * # Safety
 * `obj` must be null or a handle not yet freed.
 */
void vsam_objective_free(struct VsamObjective *obj);

/**
 * # Safety
 * `config` and `out` must be valid pointers.
 */
enum VsamStatus vsam_sampler_new(const struct VsamSamplerConfig *config,
                                 uint64_t seed,
                                 struct VsamSampler **out);

/**
 * Sampling decision for 1-based iteration `i`.
 *
 * # Safety
 * `s` and `out` must be valid pointers.
 */
enum VsamStatus vsam_sampler_should_sample(struct VsamSampler *s, size_t i, bool *out);

/**
 * # Safety
 * `s` must be a valid pointer.
 */
enum VsamStatus vsam_sampler_record(struct VsamSampler *s, double l2_psf, double l2_sgd);

/**
 * Closes the current window and updates the sampling rate.
 *
 * # Safety
 * `s` must be a valid pointer.
 */
enum VsamStatus vsam_sampler_update(struct VsamSampler *s);

/**
 * # Safety
 * `s` and `out` must be valid pointers.
 */
enum VsamStatus vsam_sampler_snapshot(const struct VsamSampler *s, struct VsamSamplerSnapshot *out);

/**
 * # Safety
 * `s` must be null or a handle not yet freed.
 */
void vsam_sampler_free(struct VsamSampler *s);

/**
 * Creates an optimizer over `dim` parameters. `sampler` is read only for
 * `VSAM_METHOD_VSAM` and `k` only for `VSAM_METHOD_SAM_K`.
 *
 * # Safety
 * `config` and `out` must be valid; `sampler` must be valid for vsam.
 */
enum VsamStatus vsam_optimizer_new(enum VsamMethod method,
                                   size_t k,
                                   const struct VsamSamplerConfig *sampler,
                                   const struct VsamOptimizerConfig *config,
                                   size_t dim,
                                   size_t total_iterations,
                                   uint64_t seed,
                                   struct VsamOptimizer **out);

/**
 * Runs one iteration on `w`, calling `grad` once per gradient evaluation.
 *
 * # Safety
 * `w` must hold `n` doubles; `grad` must follow the [`VsamGradFn`] contract.
 */
enum VsamStatus vsam_optimizer_step(struct VsamOptimizer *opt,
                                    double *w,
                                    size_t n,
                                    VsamGradFn grad,
                                    void *user,
                                    struct VsamStepReport *out);

/**
 * Runs one iteration using an analytic objective as the gradient source.
 *
 * # Safety
 * `w` must hold `n` doubles; handles must be valid.
 */
enum VsamStatus vsam_optimizer_step_objective(struct VsamOptimizer *opt,
                                              const struct VsamObjective *obj,
                                              double *w,
                                              size_t n,
                                              struct VsamStepReport *out);

/**
 * # Safety
 * `opt` must be null or a live handle.
 */
uint64_t vsam_optimizer_grad_evals(const struct VsamOptimizer *opt);

/**
 * # Safety
 * `opt` must be null or a live handle.
 */
uint64_t vsam_optimizer_samples(const struct VsamOptimizer *opt);

/**
 * # Safety
 * `opt` must be null or a handle not yet freed.
 */
void vsam_optimizer_free(struct VsamOptimizer *opt);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VSAM_H */
