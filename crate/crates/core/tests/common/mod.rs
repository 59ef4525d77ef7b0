//! Oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use hatcn::autodiff::dilated_causal_conv;
use hatcn::explain::Selection;
use hatcn::model::{HatcnConfig, HatcnModel, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;
/// Denominator floor of the relative error, so coordinates whose true
/// gradient is zero are judged by absolute error instead.
pub const FD_FLOOR: f64 = 1e-6;
/// Pre-activations closer than this to the rectifier kink are avoided, since
/// a finite difference across the kink measures a one-sided slope.
pub const KINK_MARGIN: f64 = 1e-3;

/// A small model with every parameter (attention vectors included) drawn
/// uniformly from `[-scale, scale]`.
pub fn random_model(rng: &mut ChaCha8Rng, cfg: HatcnConfig, scale: f64) -> HatcnModel {
    let mut model = HatcnModel::new(cfg, rng).unwrap();
    for p in model.parameters_mut() {
        for v in p.as_mut_slice() {
            *v = rng.random_range(-scale..=scale);
        }
    }
    model
}

/// Conv outputs before the rectifier, recomputed layer by layer.
pub fn preactivations(model: &HatcnModel, x: &[f64]) -> Vec<Vec<f64>> {
    let mut input = hatcn::TensorGrid::row_vector(x);
    let mut out = Vec::new();
    for (i, layer) in model.conv.iter().enumerate() {
        let z = dilated_causal_conv(&input, &layer.kernel, &layer.bias, model.config.dilation(i), model.config.kernel_size).unwrap();
        out.push(z.as_slice().to_vec());
        input = z.map(|v| v.max(0.0));
    }
    out
}

pub fn clear_of_kinks(model: &HatcnModel, x: &[f64]) -> bool {
    preactivations(model, x).iter().flatten().all(|v| v.abs() > KINK_MARGIN)
}

/// Worst relative error between analytic and central-difference gradients.
pub struct GradientCheck {
    pub worst_relative: f64,
    pub coordinates: usize,
}

pub fn check_gradients(model: &HatcnModel, x: &[f64], label: f64, variant: Variant) -> GradientCheck {
    let (_, grads) = model.loss_and_gradients(x, label, variant).unwrap();
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    let mut coordinates = 0;
    for (pi, g) in grads.iter().enumerate() {
        for k in 0..g.as_slice().len() {
            let orig = probe.parameters()[pi].as_slice()[k];
            probe.parameters_mut()[pi].as_mut_slice()[k] = orig + FD_STEP;
            let up = probe.loss(x, label, variant).unwrap();
            probe.parameters_mut()[pi].as_mut_slice()[k] = orig - FD_STEP;
            let down = probe.loss(x, label, variant).unwrap();
            probe.parameters_mut()[pi].as_mut_slice()[k] = orig;
            let numeric = (up - down) / (2.0 * FD_STEP);
            let analytic = g.as_slice()[k];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_FLOOR);
            worst = worst.max(rel);
            coordinates += 1;
        }
    }
    GradientCheck { worst_relative: worst, coordinates }
}

/// A random small configuration and input whose pre-activations avoid the
/// rectifier kink; `rng` is advanced past rejected draws.
pub fn random_gradient_case(rng: &mut ChaCha8Rng) -> (HatcnModel, Vec<f64>, f64) {
    loop {
        let cfg = HatcnConfig::new(rng.random_range(1..=3), rng.random_range(1..=4), rng.random_range(2..=5), rng.random_range(4..=32));
        let model = random_model(rng, cfg.clone(), 0.8);
        let x: Vec<f64> = (0..cfg.input_length).map(|_| rng.random_range(-1.0..=1.0)).collect();
        let label = f64::from(rng.random_range(0..=1u8));
        if clear_of_kinks(&model, &x) {
            return (model, x, label);
        }
    }
}

/// Brute-force dependency map: `map[i][t][j]` is true when perturbing input
/// step `j` changes `H_i[:, t]`. Weights, biases and inputs are strictly
/// positive so every path is live and no cancellation can hide one.
pub fn dependency_map(layers: usize, kernel_size: usize, len: usize) -> Vec<Vec<Vec<bool>>> {
    let cfg = HatcnConfig::new(layers, 2, kernel_size, len);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut model = random_model(&mut rng, cfg, 1.0);
    for l in &mut model.conv {
        l.kernel = l.kernel.map(|v| 0.1 + v.abs());
        l.bias = l.bias.map(|v| 0.1 + v.abs());
    }
    let x: Vec<f64> = (0..len).map(|j| 1.0 + 0.01 * j as f64).collect();
    let base = model.conv_stack(&x).unwrap();
    let mut map = vec![vec![vec![false; len]; len]; layers];
    for j in 0..len {
        let mut y = x.clone();
        y[j] += 1.0;
        let h = model.conv_stack(&y).unwrap();
        for i in 0..layers {
            for t in 0..len {
                map[i][t][j] = base[i].column(t) != h[i].column(t);
            }
        }
    }
    map
}

/// Exhaustive count `Freq_j = #{(i, t) selected : j in field(i, t)}`.
pub fn triple_loop_frequency(sel: &Selection, kernel_size: usize, len: usize) -> Vec<u32> {
    let mut freq = vec![0u32; len];
    for &layer in &sel.layers {
        for t in 0..len {
            if !sel.steps.contains(&(layer, t)) {
                continue;
            }
            let reach = ((1usize << (layer + 1)) - 1) * (kernel_size - 1);
            for (j, f) in freq.iter_mut().enumerate() {
                if j <= t && j + reach >= t {
                    *f += 1;
                }
            }
        }
    }
    freq
}
