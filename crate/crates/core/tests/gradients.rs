mod common;

use common::*;
use hatcn::model::{HatcnConfig, Variant};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn attention_model_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2718);
    for case in 0..24 {
        let (model, x, label) = random_gradient_case(&mut rng);
        let check = check_gradients(&model, &x, label, Variant::Hatcn);
        assert!(
            check.worst_relative < FD_REL_TOL,
            "case {case} ({:?}): worst relative error {:.3e}",
            model.config,
            check.worst_relative
        );
    }
}

#[test]
fn plain_tcn_gradients_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for case in 0..12 {
        let (model, x, label) = random_gradient_case(&mut rng);
        let check = check_gradients(&model, &x, label, Variant::Tcn);
        assert!(check.worst_relative < FD_REL_TOL, "case {case}: {:.3e}", check.worst_relative);
    }
}

#[test]
fn long_kernel_gradients_match_central_differences() {
    // The production kernel length, on a short input.
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut done = 0;
    while done < 2 {
        let model = random_model(&mut rng, HatcnConfig::new(2, 2, 50, 60), 0.3);
        let x: Vec<f64> = (0..60).map(|t| ((t as f64) / 7.0).sin().abs()).collect();
        if !clear_of_kinks(&model, &x) {
            continue;
        }
        let check = check_gradients(&model, &x, 1.0, Variant::Hatcn);
        assert!(check.worst_relative < FD_REL_TOL, "{:.3e}", check.worst_relative);
        done += 1;
    }
}
