mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use slq_core::io::SpectralJson;
use slq_core::linalg::{identity, max_abs_diff, norm2, zeros};
use slq_core::model::{model_constants, model_spectral_data};
use slq_core::problem::{build_index_set, uniform_grid};
use slq_core::spectral::{shift_reconstruction, unshift_reconstruction};
use slq_core::Sigma;

use common::{random_hermitian, random_projector};

proptest! {
    #![proptest_config(ProptestConfig { failure_persistence: None, ..ProptestConfig::with_cases(24) })]

    #[test]
    fn model_projectors_partition_identity(seed in 0u64..10_000, m in 1usize..4, r1 in 0usize..4, r2 in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t1 = random_projector(&mut rng, m, r1.min(m));
        let t2 = random_projector(&mut rng, m, r2.min(m));
        let k = model_constants(&t1, &t2).unwrap();
        let sum = k.ak.iter().fold(zeros(m), |acc, a| acc + a);
        prop_assert!(max_abs_diff(&sum, &identity(m)) < 1e-9);
        prop_assert!(k.rk.iter().all(|&r| (0.0..1.0).contains(&r)));
        prop_assert_eq!(k.classes.iter().map(Vec::len).sum::<usize>(), m);
    }

    #[test]
    fn index_set_cardinality(seed in 0u64..10_000, m in 1usize..4, r1 in 0usize..4, r2 in 0usize..4, n_max in 0usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t1 = random_projector(&mut rng, m, r1.min(m));
        let t2 = random_projector(&mut rng, m, r2.min(m));
        let k = model_constants(&t1, &t2).unwrap();
        prop_assert_eq!(build_index_set(m, &t1, &t2, n_max).len(), m * n_max + m - k.p_perp);
    }

    #[test]
    fn model_weights_are_hermitian_psd(seed in 0u64..10_000, m in 1usize..4, r1 in 0usize..4, r2 in 0usize..4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t1 = random_projector(&mut rng, m, r1.min(m));
        let t2 = random_projector(&mut rng, m, r2.min(m));
        let k = model_constants(&t1, &t2).unwrap();
        for e in &model_spectral_data(&t1, &k, 3).entries {
            prop_assert!(norm2(&(&e.alpha - e.alpha.adjoint())) < 1e-9);
            let (vals, _) = slq_core::linalg::hermitian_eigen(&e.alpha);
            prop_assert!(vals[0] > -1e-9);
        }
    }

    #[test]
    fn shift_then_unshift_is_identity(seed in 0u64..10_000, c in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h2 = random_hermitian(&mut rng, 2, 1.0);
        let t2 = random_projector(&mut rng, 2, 1);
        let x = uniform_grid(17);
        let values = x.iter().map(|_| random_hermitian(&mut rng, 2, 1.0)).collect();
        let sigma = Sigma::Grid { x: x.clone(), values };
        let (s1, h1) = shift_reconstruction(&sigma, &h2, &t2, c);
        let (s2, h) = unshift_reconstruction(&s1, &h1, &t2, c);
        prop_assert!(max_abs_diff(&h, &h2) < 1e-12);
        for &t in &x {
            prop_assert!(max_abs_diff(&s2.eval(t), &sigma.eval(t)) < 1e-12);
        }
    }

    #[test]
    fn spectral_json_round_trip_is_exact(seed in 0u64..10_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t1 = random_projector(&mut rng, 2, 1);
        let t2 = random_projector(&mut rng, 2, 1);
        let k = model_constants(&t1, &t2).unwrap();
        let d = model_spectral_data(&t1, &k, 4);
        let text = serde_json::to_string(&SpectralJson::from_data(&d)).unwrap();
        let back = serde_json::from_str::<SpectralJson>(&text).unwrap().to_data(1e-8).unwrap();
        for e in &d.entries {
            let b = back.get(e.index).unwrap();
            prop_assert_eq!(b.lambda, e.lambda);
            prop_assert_eq!(&b.alpha, &e.alpha);
        }
    }
}
