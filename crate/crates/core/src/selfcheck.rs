//! Quick invariant suite behind the `selfcheck` subcommand.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::data::{generate_dataset, DatasetKind};
use crate::diagnostics::{
    decomposition_residual, psf_bound_sweep, random_pd_matrix, symmetric_eigen,
};
use crate::harness::Check;
use crate::linalg::{self, Matrix};
use crate::objective::{make_sharp_flat, max_relative_error, Activation, ObjectiveSpec};
use crate::optim::{perturbation, sam_gradient, Method, OptimizerConfig};
use crate::rng::{self, Stream};
use crate::sampler::{SamplerConfig, SamplingMode};
use crate::train::{run, DataSplit, RunSettings};

fn check(name: &str, outcome: crate::Result<(bool, String)>) -> Check {
    match outcome {
        Ok((passed, detail)) => Check {
            name: name.into(),
            passed,
            detail,
        },
        Err(e) => Check {
            name: name.into(),
            passed: false,
            detail: e.to_string(),
        },
    }
}

fn normal_vec<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.sample(StandardNormal)).collect()
}

pub fn run_selfcheck(seed: u64) -> Vec<Check> {
    let mut rng = rng::stream(seed, Stream::Probe);
    let mut checks = Vec::new();

    let g = normal_vec(&mut rng, 100);
    let err = (linalg::norm(&perturbation(&g, 0.1)) - 0.1).abs();
    checks.push(check(
        "perturbation norm",
        Ok((err <= 1e-12, format!("|‖ε‖ − ρ| = {err:.3e}"))),
    ));

    checks.push(check(
        "psf closed form on quadratics",
        (|| {
            let mut worst = 0.0f64;
            for _ in 0..20 {
                let dim = rng.gen_range(2..=20);
                let a = random_pd_matrix(&mut rng, dim);
                let spec = ObjectiveSpec::quadratic(a.clone(), normal_vec(&mut rng, dim), 0.0)?;
                let w = normal_vec(&mut rng, dim);
                let t = sam_gradient(&spec, &w, None, 0.05)?;
                let expected = linalg::scale(&a.matvec(&t.g_sgd), 0.05 / t.l2_sgd);
                worst = worst.max(linalg::max_abs_diff(&t.psf, &expected));
            }
            Ok((worst <= 1e-9, format!("max abs error {worst:.3e}")))
        })(),
    ));

    checks.push(check(
        "eigen reconstruction",
        (|| {
            let a = random_pd_matrix(&mut rng, 8);
            let e = symmetric_eigen(&a)?;
            let err = e.reconstruct().max_abs_diff(&a);
            Ok((err <= 1e-9, format!("max abs error {err:.3e}")))
        })(),
    ));

    checks.push(check(
        "psf norm bound sweep",
        (|| {
            let cases = psf_bound_sweep(200, seed, 2..=8, 0.1)?;
            let violations = cases.iter().filter(|c| !c.result.satisfied).count();
            let loose = cases
                .iter()
                .filter(|c| c.aligned && c.result.slack.abs() > 1e-10)
                .count();
            Ok((
                violations == 0 && loose == 0,
                format!("{violations} violations, {loose} aligned cases not tight"),
            ))
        })(),
    ));

    checks.push(check(
        "gradients vs finite differences",
        (|| {
            let data = generate_dataset(DatasetKind::Moons, 40, 0.1, seed)?;
            let batch = data.full_batch()?;
            let objectives = [
                ObjectiveSpec::quadratic(random_pd_matrix(&mut rng, 4), vec![0.5; 4], 0.01)?,
                ObjectiveSpec::rosenbrock(4, 0.0)?,
                make_sharp_flat(0.3, 1.0, 0.05, 1.5)?,
                ObjectiveSpec::mlp(vec![2, 6, 2], Activation::Tanh, 1e-3)?,
            ];
            let mut worst = 0.0f64;
            for spec in &objectives {
                let b = spec.needs_data().then_some(&batch);
                for k in 0..5 {
                    let w = spec.init_params(seed * 31 + k).into_values();
                    let (_, g) = spec.eval_grad(&w, b)?;
                    worst = worst.max(max_relative_error(&g, &spec.fd_gradient(&w, b, 1e-5)?));
                }
            }
            Ok((worst <= 1e-5, format!("max relative error {worst:.3e}")))
        })(),
    ));

    checks.push(check(
        "decomposition residual on a quadratic",
        (|| {
            let spec = ObjectiveSpec::quadratic(random_pd_matrix(&mut rng, 5), vec![0.0; 5], 0.0)?;
            let r = decomposition_residual(&spec, &normal_vec(&mut rng, 5), None, 0.05)?;
            Ok((r <= 1e-9, format!("residual {r:.3e}")))
        })(),
    ));

    let cfg = OptimizerConfig {
        eta0: 0.05,
        ..Default::default()
    };
    checks.push(check(
        "always-sampling vsam equals sam",
        (|| {
            let spec = &ObjectiveSpec::quadratic(
                Matrix::diag(&[1.0, 4.0, 9.0]),
                vec![1.0, 0.0, -1.0],
                0.0,
            )?;
            let settings = RunSettings::new(200, seed);
            let always = SamplerConfig {
                mode: SamplingMode::Always,
                ..Default::default()
            };
            let a = run(spec, None, Method::Vsam(always), &cfg, &settings)?;
            let b = run(spec, None, Method::Sam, &cfg, &settings)?;
            Ok((a.params == b.params, String::new()))
        })(),
    ));

    checks.push(check(
        "vsam accounting and window cap",
        (|| {
            let full = generate_dataset(DatasetKind::Moons, 200, 0.2, seed)?;
            let (train, eval) = full.split(0.8, seed)?;
            let spec = ObjectiveSpec::mlp(vec![2, 8, 2], Activation::Tanh, 0.0)?;
            let sampler = SamplerConfig {
                i_start: 50,
                window: 20,
                s1: 10.0,
                ..Default::default()
            };
            let settings = RunSettings {
                batch_size: 16,
                ..RunSettings::new(600, seed)
            };
            let out = run(
                &spec,
                Some(DataSplit {
                    train: &train,
                    eval: &eval,
                }),
                Method::Vsam(sampler.clone()),
                &cfg,
                &settings,
            )?;
            let sampled = out.records.iter().filter(|r| r.sampled).count() as u64;
            let cap = sampler.window_cap();
            // windows close at multiples of N
            let mut per_window = std::collections::BTreeMap::new();
            for r in out
                .records
                .iter()
                .filter(|r| r.iteration > sampler.i_start && r.sampled)
            {
                *per_window
                    .entry((r.iteration - 1) / sampler.window)
                    .or_insert(0usize) += 1;
            }
            let over = per_window.values().filter(|&&n| n > cap).count();
            Ok((
                out.grad_evals == 600 + sampled && over == 0,
                format!(
                    "{} evals, {sampled} sampled, {over} windows over cap",
                    out.grad_evals
                ),
            ))
        })(),
    ));

    checks
}
