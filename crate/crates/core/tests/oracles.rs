mod common;

use nalgebra::{DVector, SymmetricEigen};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{mlp_loss_oracle, random_spd, to_na};
use vsam::data::{generate_dataset, DatasetKind};
use vsam::diagnostics::{hessian_vector_product, symmetric_eigen};
use vsam::linalg;
use vsam::metrics::{read_metrics, write_metrics, MetricsRecord};
use vsam::objective::{Activation, ObjectiveSpec};
use vsam::optim::{perturbation, sam_gradient};
use vsam::sampler::sliced_variance;

#[test]
fn mlp_loss_matches_independent_forward_pass() {
    let data = generate_dataset(DatasetKind::Blobs, 60, 0.3, 2).unwrap();
    let batch = data.full_batch().unwrap();
    for (act, relu) in [(Activation::Tanh, false), (Activation::Relu, true)] {
        for widths in [vec![2, 5, 3], vec![2, 8, 8, 3]] {
            let spec = ObjectiveSpec::mlp(widths.clone(), act, 0.0).unwrap();
            for seed in 0..5 {
                let w = spec.init_params(seed).into_values();
                let ours = spec.eval_loss(&w, Some(&batch)).unwrap();
                let oracle = mlp_loss_oracle(&widths, relu, &w, &batch);
                assert!(
                    (ours - oracle).abs() <= 1e-12 * oracle.abs().max(1.0),
                    "{ours} vs {oracle}"
                );
            }
        }
    }
}

#[test]
fn eigensolver_agrees_with_nalgebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for n in 1..=24 {
        let a = random_spd(&mut rng, n);
        let ours = symmetric_eigen(&a).unwrap();
        let theirs = SymmetricEigen::new(to_na(&a));
        let mut ev: Vec<f64> = theirs.eigenvalues.iter().copied().collect();
        ev.sort_by(|x, y| y.total_cmp(x));
        for (x, y) in ours.eigenvalues.iter().zip(&ev) {
            assert!((x - y).abs() <= 1e-10 * y.abs().max(1.0));
        }
        assert!(ours.reconstruct().max_abs_diff(&a) <= 1e-10);
    }
}

#[test]
fn hessian_vector_product_matches_dense_product() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = random_spd(&mut rng, 6);
    let spec = ObjectiveSpec::quadratic(a.clone(), vec![0.0; 6], 0.0).unwrap();
    let v: Vec<f64> = (0..6).map(|k| (k as f64).sin()).collect();
    let w = vec![0.1; 6];
    let hv = hessian_vector_product(&spec, &w, None, &v).unwrap();
    let dense = to_na(&a) * DVector::from_vec(v);
    for (x, y) in hv.iter().zip(dense.iter()) {
        assert!((x - y).abs() < 1e-9);
    }
}

#[test]
fn metrics_round_trip_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let rows: Vec<MetricsRecord> = (1..=5)
        .map(|i| MetricsRecord {
            iteration: i,
            lr: 0.1 / i as f64,
            train_loss: 1.0 / 3.0 * i as f64,
            l2_psf: (i % 2 == 0).then_some(std::f64::consts::PI),
            sampled: i % 2 == 0,
            cumulative_grad_evals: 2 * i as u64,
            ..Default::default()
        })
        .collect();
    write_metrics(&path, &rows).unwrap();
    assert_eq!(read_metrics(&path).unwrap(), rows);
}

proptest! {
    #[test]
    fn perturbation_has_radius_rho(g in prop::collection::vec(-1e3f64..1e3, 1..40), rho in 1e-3f64..2.0) {
        prop_assume!(linalg::norm(&g) > 1e-6);
        let e = perturbation(&g, rho);
        prop_assert!((linalg::norm(&e) - rho).abs() <= 1e-12 * rho.max(1.0));
    }

    #[test]
    fn psf_vanishes_for_zero_radius(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_spd(&mut rng, 4);
        let spec = ObjectiveSpec::quadratic(a, vec![1.0, 0.0, -1.0, 0.5], 0.0).unwrap();
        let t = sam_gradient(&spec, &[0.3, 0.2, 0.1, 0.0], None, 0.0).unwrap();
        prop_assert!(t.psf.iter().all(|&x| x == 0.0));
        prop_assert_eq!(t.g_sam, t.g_sgd);
    }

    #[test]
    fn single_slice_is_population_variance(v in prop::collection::vec(-50f64..50.0, 1..60)) {
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let sv = sliced_variance(&v, 1);
        prop_assert!((sv - var).abs() <= 1e-9 * var.max(1.0));
    }

    #[test]
    fn sliced_variance_never_exceeds_total(v in prop::collection::vec(-50f64..50.0, 10..60), m in 2usize..6) {
        prop_assert!(sliced_variance(&v, m) <= sliced_variance(&v, 1) + 1e-9);
    }
}
