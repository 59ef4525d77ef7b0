//! The hierarchical attention TCN and its plain-TCN sibling.
//!
//! Both variants share one stack of dilated causal convolutions with a
//! rectifier after every layer. The attention variant summarises each
//! hidden layer over time (within-layer attention), then summarises the
//! per-layer summaries across depth (across-layer attention), and feeds the
//! result to a one-unit affine + sigmoid head. The plain variant feeds the
//! last time column of the deepest layer to the same head.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};
use crate::grid::TensorGrid;

/// Dilation factor per hidden layer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum DilationSchedule {
    /// `d_i = 2^i` for layer `i = 0..K`.
    PowersOfTwo,
    /// Explicit per-layer factors.
    Custom(Vec<usize>),
}

impl DilationSchedule {
    pub fn is_powers_of_two(&self) -> bool {
        match self {
            DilationSchedule::PowersOfTwo => true,
            DilationSchedule::Custom(d) => d.iter().enumerate().all(|(i, &v)| v == 1 << i),
        }
    }
}

/// Which classification head reads the conv stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Hatcn,
    Tcn,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Hatcn => "hatcn",
            Variant::Tcn => "tcn",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hatcn" => Ok(Variant::Hatcn),
            "tcn" => Ok(Variant::Tcn),
            other => Err(Error::Usage(format!("unknown model variant '{other}' (expected hatcn or tcn)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HatcnConfig {
    /// Number of hidden conv layers `K`.
    pub layers: usize,
    /// Filters per hidden layer `C`.
    pub channels: usize,
    /// Kernel size `l`.
    pub kernel_size: usize,
    /// Series length `T`.
    pub input_length: usize,
    pub dilations: DilationSchedule,
}

impl HatcnConfig {
    pub fn new(layers: usize, channels: usize, kernel_size: usize, input_length: usize) -> Self {
        Self { layers, channels, kernel_size, input_length, dilations: DilationSchedule::PowersOfTwo }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers < 1 || self.channels < 1 || self.kernel_size < 2 || self.input_length < 1 {
            return Err(Error::Config(format!(
                "need K >= 1, C >= 1, l >= 2, T >= 1; got K={}, C={}, l={}, T={}",
                self.layers, self.channels, self.kernel_size, self.input_length
            )));
        }
        if let DilationSchedule::Custom(d) = &self.dilations {
            if d.len() != self.layers || d.iter().any(|&v| v == 0) {
                return Err(Error::Config(format!(
                    "custom dilation schedule must list {} positive factors, got {:?}",
                    self.layers, d
                )));
            }
        }
        Ok(())
    }

    pub fn dilation(&self, layer: usize) -> usize {
        match &self.dilations {
            DilationSchedule::PowersOfTwo => 1 << layer,
            DilationSchedule::Custom(d) => d[layer],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvLayer {
    /// `C_out x (C_in * l)`, see [`crate::autodiff::dilated_causal_conv`].
    pub kernel: TensorGrid,
    /// `C_out x 1`.
    pub bias: TensorGrid,
}

/// All trainable parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HatcnModel {
    pub config: HatcnConfig,
    pub conv: Vec<ConvLayer>,
    /// Within-layer attention vectors `w_i`, each `C x 1`.
    pub layer_attention: Vec<TensorGrid>,
    /// Across-layer attention vector `w`, `C x 1`.
    pub across_attention: TensorGrid,
    /// `1 x C`.
    pub head_weight: TensorGrid,
    /// `1 x 1`.
    pub head_bias: TensorGrid,
}

/// Every intermediate quantity of one attention forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    /// Hidden activations `H_i`, each `C x T`, after the rectifier.
    pub activations: Vec<TensorGrid>,
    /// Within-layer weights `α_i` (length `T`).
    pub layer_weights: Vec<Vec<f64>>,
    /// Layer summaries `γ_i` (length `C`).
    pub layer_summaries: Vec<Vec<f64>>,
    /// `M = [γ_0 .. γ_{K-1}]`, `C x K`.
    pub summary_matrix: TensorGrid,
    /// Across-layer weights `α` (length `K`).
    pub across_weights: Vec<f64>,
    /// Final summary `γ` (length `C`).
    pub summary: Vec<f64>,
    pub logit: f64,
    pub probability: f64,
}

/// Handles into a recorded forward pass.
struct Graph {
    params: Vec<Var>,
    activations: Vec<Var>,
    layer_weights: Vec<Var>,
    layer_summaries: Vec<Var>,
    summary_matrix: Option<Var>,
    across_weights: Option<Var>,
    summary: Option<Var>,
    logit: Var,
    probability: Var,
}

/// Records `α = softmax(tanh(wᵀ H))`, `γ = relu(H αᵀ)` and returns `(α, γ)`.
fn attention(tape: &mut Tape, h: Var, w: Var) -> Result<(Var, Var)> {
    let wt = tape.transpose(w);
    let scores = tape.matmul(wt, h)?;
    let squashed = tape.tanh(scores);
    let alpha = tape.softmax_rows(squashed);
    let alpha_t = tape.transpose(alpha);
    let pooled = tape.matmul(h, alpha_t)?;
    let gamma = tape.relu(pooled);
    Ok((alpha, gamma))
}

fn check_attention_shapes(h: &TensorGrid, w: &[f64]) -> Result<()> {
    if h.rows() != w.len() {
        return Err(Error::Config(format!(
            "attention vector has {} entries but activations have {} channels",
            w.len(),
            h.rows()
        )));
    }
    Ok(())
}

/// Within-layer attention over time: returns `(α_i, γ_i)`.
pub fn within_layer_attention(h: &TensorGrid, w: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    check_attention_shapes(h, w)?;
    let mut tape = Tape::new();
    let hv = tape.leaf(h.clone());
    let wv = tape.leaf(TensorGrid::column_vector(w));
    let (a, g) = attention(&mut tape, hv, wv)?;
    Ok((tape.value(a).as_slice().to_vec(), tape.value(g).as_slice().to_vec()))
}

/// Across-layer attention over the `C x K` summary matrix: returns `(α, γ)`.
///
/// Same arithmetic as [`within_layer_attention`] with layers in place of time.
pub fn across_layer_attention(m: &TensorGrid, w: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    within_layer_attention(m, w)
}

fn uniform_grid(rng: &mut impl Rng, rows: usize, cols: usize, bound: f64) -> TensorGrid {
    let data = (0..rows * cols).map(|_| rng.random_range(-bound..=bound)).collect();
    TensorGrid::from_vec(rows, cols, data).expect("dimensions checked by config")
}

impl HatcnModel {
    /// Fresh model: conv and head weights uniform in `±sqrt(1/fan_in)`,
    /// biases zero, attention vectors zero (uniform attention at start).
    pub fn new(config: HatcnConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let c = config.channels;
        let l = config.kernel_size;
        let conv = (0..config.layers)
            .map(|i| {
                let c_in = if i == 0 { 1 } else { c };
                let fan_in = (c_in * l) as f64;
                ConvLayer { kernel: uniform_grid(rng, c, c_in * l, (1.0 / fan_in).sqrt()), bias: TensorGrid::zeros(c, 1) }
            })
            .collect();
        Ok(Self {
            conv,
            layer_attention: vec![TensorGrid::zeros(c, 1); config.layers],
            across_attention: TensorGrid::zeros(c, 1),
            head_weight: uniform_grid(rng, 1, c, (1.0 / c as f64).sqrt()),
            head_bias: TensorGrid::zeros(1, 1),
            config,
        })
    }

    /// All-zero model of the given shape; the starting point for loading.
    pub fn zeros(config: HatcnConfig) -> Self {
        let c = config.channels;
        let l = config.kernel_size;
        let conv = (0..config.layers)
            .map(|i| {
                let c_in = if i == 0 { 1 } else { c };
                ConvLayer { kernel: TensorGrid::zeros(c, c_in * l), bias: TensorGrid::zeros(c, 1) }
            })
            .collect();
        Self {
            conv,
            layer_attention: vec![TensorGrid::zeros(c, 1); config.layers],
            across_attention: TensorGrid::zeros(c, 1),
            head_weight: TensorGrid::zeros(1, c),
            head_bias: TensorGrid::zeros(1, 1),
            config,
        }
    }

    /// Parameters in a fixed order: per-layer kernel and bias, within-layer
    /// attention vectors, across-layer vector, head weight, head bias.
    pub fn parameters(&self) -> Vec<&TensorGrid> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for layer in &self.conv {
            out.push(&layer.kernel);
            out.push(&layer.bias);
        }
        out.extend(self.layer_attention.iter());
        out.push(&self.across_attention);
        out.push(&self.head_weight);
        out.push(&self.head_bias);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut TensorGrid> {
        let mut out = Vec::with_capacity(self.parameter_count());
        for layer in &mut self.conv {
            out.push(&mut layer.kernel);
            out.push(&mut layer.bias);
        }
        out.extend(self.layer_attention.iter_mut());
        out.push(&mut self.across_attention);
        out.push(&mut self.head_weight);
        out.push(&mut self.head_bias);
        out
    }

    pub fn parameter_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for i in 0..self.conv.len() {
            out.push(format!("conv{i}.kernel"));
            out.push(format!("conv{i}.bias"));
        }
        for i in 0..self.layer_attention.len() {
            out.push(format!("attention{i}"));
        }
        out.extend(["across_attention".into(), "head.weight".into(), "head.bias".into()]);
        out
    }

    pub fn parameter_count(&self) -> usize {
        2 * self.conv.len() + self.layer_attention.len() + 3
    }

    /// Checks that every parameter has the shape the config implies.
    pub fn validate(&self) -> Result<()> {
        self.config.validate()?;
        let cfg = &self.config;
        let (c, l, k) = (cfg.channels, cfg.kernel_size, cfg.layers);
        let bad = |what: &str| Err(Error::Config(format!("parameter {what} inconsistent with config")));
        if self.conv.len() != k || self.layer_attention.len() != k {
            return bad("layer count");
        }
        for (i, layer) in self.conv.iter().enumerate() {
            let c_in = if i == 0 { 1 } else { c };
            if layer.kernel.shape() != (c, c_in * l) || layer.bias.shape() != (c, 1) {
                return bad(&format!("conv{i}"));
            }
        }
        if self.layer_attention.iter().any(|w| w.shape() != (c, 1)) || self.across_attention.shape() != (c, 1) {
            return bad("attention");
        }
        if self.head_weight.shape() != (1, c) || self.head_bias.shape() != (1, 1) {
            return bad("head");
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.parameters().iter().all(|p| p.is_finite())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.config.input_length {
            return Err(Error::Data(format!(
                "series has {} steps but the model expects {}",
                x.len(),
                self.config.input_length
            )));
        }
        Ok(())
    }

    fn record(&self, tape: &mut Tape, x: &[f64], variant: Variant) -> Result<Graph> {
        self.check_input(x)?;
        let params: Vec<Var> = self.parameters().into_iter().map(|p| tape.leaf(p.clone())).collect();
        let k = self.config.layers;
        let l = self.config.kernel_size;
        let mut h = tape.leaf(TensorGrid::row_vector(x));
        let mut activations = Vec::with_capacity(k);
        for i in 0..k {
            let pre = tape.conv(h, params[2 * i], params[2 * i + 1], self.config.dilation(i), l)?;
            h = tape.relu(pre);
            activations.push(h);
        }
        let head_w = params[3 * k + 1];
        let head_b = params[3 * k + 2];
        let mut graph = Graph {
            params: params.clone(),
            activations,
            layer_weights: Vec::new(),
            layer_summaries: Vec::new(),
            summary_matrix: None,
            across_weights: None,
            summary: None,
            logit: h,
            probability: h,
        };
        let features = match variant {
            Variant::Hatcn => {
                for i in 0..k {
                    let (a, g) = attention(tape, graph.activations[i], params[2 * k + i])?;
                    graph.layer_weights.push(a);
                    graph.layer_summaries.push(g);
                }
                let m = tape.concat_cols(&graph.layer_summaries)?;
                let (a, g) = attention(tape, m, params[3 * k])?;
                graph.summary_matrix = Some(m);
                graph.across_weights = Some(a);
                graph.summary = Some(g);
                g
            }
            Variant::Tcn => tape.column(h, self.config.input_length - 1)?,
        };
        let z = tape.matmul(head_w, features)?;
        graph.logit = tape.add(z, head_b)?;
        graph.probability = tape.sigmoid(graph.logit);
        Ok(graph)
    }

    /// Attention forward pass with the full trace retained.
    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace> {
        let mut tape = Tape::new();
        let g = self.record(&mut tape, x, Variant::Hatcn)?;
        let vec_of = |v: Var| tape.value(v).as_slice().to_vec();
        Ok(ForwardTrace {
            activations: g.activations.iter().map(|&v| tape.value(v).clone()).collect(),
            layer_weights: g.layer_weights.iter().map(|&v| vec_of(v)).collect(),
            layer_summaries: g.layer_summaries.iter().map(|&v| vec_of(v)).collect(),
            summary_matrix: tape.value(g.summary_matrix.expect("attention graph")).clone(),
            across_weights: vec_of(g.across_weights.expect("attention graph")),
            summary: vec_of(g.summary.expect("attention graph")),
            logit: tape.value(g.logit).item(),
            probability: tape.value(g.probability).item(),
        })
    }

    /// Plain-TCN probability from the last column of the deepest layer.
    pub fn tcn_forward(&self, x: &[f64]) -> Result<f64> {
        let mut tape = Tape::new();
        let g = self.record(&mut tape, x, Variant::Tcn)?;
        Ok(tape.value(g.probability).item())
    }

    /// Hidden activations only (shared by both variants).
    pub fn conv_stack(&self, x: &[f64]) -> Result<Vec<TensorGrid>> {
        let mut tape = Tape::new();
        let g = self.record(&mut tape, x, Variant::Tcn)?;
        Ok(g.activations.iter().map(|&v| tape.value(v).clone()).collect())
    }

    pub fn predict(&self, x: &[f64], variant: Variant) -> Result<f64> {
        match variant {
            Variant::Hatcn => Ok(self.forward(x)?.probability),
            Variant::Tcn => self.tcn_forward(x),
        }
    }

    /// Binary cross-entropy of one sample and its gradient with respect to
    /// every parameter, in [`HatcnModel::parameters`] order.
    pub fn loss_and_gradients(&self, x: &[f64], label: f64, variant: Variant) -> Result<(f64, Vec<TensorGrid>)> {
        let mut tape = Tape::new();
        let g = self.record(&mut tape, x, variant)?;
        let loss = tape.bce_with_logits(g.logit, label)?;
        tape.backward(loss)?;
        let grads = g.params.iter().map(|&p| tape.grad(p).clone()).collect();
        Ok((tape.value(loss).item(), grads))
    }

    pub fn loss(&self, x: &[f64], label: f64, variant: Variant) -> Result<f64> {
        let mut tape = Tape::new();
        let g = self.record(&mut tape, x, variant)?;
        let loss = tape.bce_with_logits(g.logit, label)?;
        Ok(tape.value(loss).item())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn eye2() -> TensorGrid {
        TensorGrid::from_vec(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn within_layer_zero_vector_is_uniform() {
        let h = TensorGrid::from_vec(2, 4, vec![1., -3., 2., 4., -1., -1., -2., -4.]).unwrap();
        let (a, g) = within_layer_attention(&h, &[0.0, 0.0]).unwrap();
        assert!(a.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert_abs_diff_eq!(g[0], 1.0, epsilon = 1e-12);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn within_layer_hand_evaluation() {
        let (a, g) = within_layer_attention(&eye2(), &[1.0, 0.0]).unwrap();
        // scores (tanh 1, tanh 0); softmax by hand
        let e = 1f64.tanh().exp();
        let expect = [e / (e + 1.0), 1.0 / (e + 1.0)];
        for i in 0..2 {
            assert_abs_diff_eq!(a[i], expect[i], epsilon = 1e-12);
            assert_abs_diff_eq!(g[i], expect[i], epsilon = 1e-12);
        }
        assert_abs_diff_eq!(a[0], 0.6816, epsilon = 1e-4);
        assert_abs_diff_eq!(a[1], 0.3184, epsilon = 1e-4);
    }

    #[test]
    fn within_layer_time_permutation() {
        let h = TensorGrid::from_vec(2, 3, vec![0.5, 1.0, -0.2, 0.1, 0.9, 0.3]).unwrap();
        let w = [0.7, -1.3];
        let perm = [2, 0, 1];
        let mut hp = TensorGrid::zeros(2, 3);
        for r in 0..2 {
            for (c, &p) in perm.iter().enumerate() {
                hp.set(r, c, h.get(r, p));
            }
        }
        let (a, g) = within_layer_attention(&h, &w).unwrap();
        let (ap, gp) = within_layer_attention(&hp, &w).unwrap();
        for (c, &p) in perm.iter().enumerate() {
            assert_abs_diff_eq!(ap[c], a[p], epsilon = 1e-15);
        }
        for i in 0..2 {
            assert_abs_diff_eq!(gp[i], g[i], epsilon = 1e-12);
        }
    }

    #[test]
    fn across_layer_examples() {
        let m = TensorGrid::column_vector(&[0.3, -0.4]);
        let (a, g) = across_layer_attention(&m, &[2.0, 1.0]).unwrap();
        assert_eq!(a, vec![1.0]);
        assert_eq!(g, vec![0.3, 0.0]);

        let m = TensorGrid::from_vec(2, 3, vec![1., 2., 3., -1., 0., 4.]).unwrap();
        let (_, g) = across_layer_attention(&m, &[0.0, 0.0]).unwrap();
        assert_abs_diff_eq!(g[0], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(g[1], 1.0, epsilon = 1e-12);

        let (a, _) = across_layer_attention(&eye2(), &[1.0, 0.0]).unwrap();
        assert_abs_diff_eq!(a[0], 0.6816, epsilon = 1e-4);
        assert_abs_diff_eq!(a[1], 0.3184, epsilon = 1e-4);
    }

    #[test]
    fn attention_shape_mismatch() {
        assert!(within_layer_attention(&eye2(), &[1.0]).is_err());
    }

    #[test]
    fn zero_input_propagates_head_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut model = HatcnModel::new(HatcnConfig::new(2, 3, 4, 20), &mut rng).unwrap();
        model.head_bias.set(0, 0, 0.8);
        let x = vec![0.0; 20];
        let trace = model.forward(&x).unwrap();
        assert!(trace.activations.iter().all(|h| h.as_slice().iter().all(|&v| v == 0.0)));
        assert!(trace.summary.iter().all(|&v| v == 0.0));
        let expect = crate::autodiff::sigmoid(0.8);
        assert_eq!(trace.probability, expect);
        assert_eq!(model.tcn_forward(&x).unwrap(), expect);
    }

    #[test]
    fn identity_conv_reduces_to_attention_on_series() {
        // K=1, C=1, kernel [1, 0]: H_0 = relu(x) = x for nonnegative x.
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut model = HatcnModel::new(HatcnConfig::new(1, 1, 2, 4), &mut rng).unwrap();
        model.conv[0].kernel = TensorGrid::row_vector(&[1.0, 0.0]);
        model.layer_attention[0] = TensorGrid::scalar(1.5);
        model.across_attention = TensorGrid::scalar(-0.7);
        model.head_weight = TensorGrid::scalar(2.0);
        model.head_bias = TensorGrid::scalar(-0.5);
        let x = [0.1, 0.9, 0.4, 0.0];
        let trace = model.forward(&x).unwrap();

        let e: Vec<f64> = x.iter().map(|v| (1.5 * v).tanh().exp()).collect();
        let z: f64 = e.iter().sum();
        let alpha: Vec<f64> = e.iter().map(|v| v / z).collect();
        let gamma: f64 = x.iter().zip(&alpha).map(|(a, b)| a * b).sum();
        let p = 1.0 / (1.0 + (-(2.0 * gamma - 0.5)).exp());
        for i in 0..4 {
            assert_abs_diff_eq!(trace.layer_weights[0][i], alpha[i], epsilon = 1e-14);
        }
        assert_eq!(trace.across_weights, vec![1.0]);
        assert_abs_diff_eq!(trace.summary[0], gamma, epsilon = 1e-14);
        assert_abs_diff_eq!(trace.probability, p, epsilon = 1e-14);
    }

    #[test]
    fn tcn_ignores_inputs_outside_last_field() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = HatcnModel::new(HatcnConfig::new(1, 4, 3, 750), &mut rng).unwrap();
        let x: Vec<f64> = (0..750).map(|t| (t as f64 / 100.0).sin().abs()).collect();
        let mut y = x.clone();
        y[0] = 0.77;
        assert_eq!(model.tcn_forward(&x).unwrap(), model.tcn_forward(&y).unwrap());
    }

    #[test]
    fn both_heads_share_the_conv_stack() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let model = HatcnModel::new(HatcnConfig::new(3, 3, 3, 40), &mut rng).unwrap();
        let x: Vec<f64> = (0..40).map(|t| ((t * 7) % 11) as f64 / 10.0).collect();
        let trace = model.forward(&x).unwrap();
        assert_eq!(trace.activations, model.conv_stack(&x).unwrap());
    }

    #[test]
    fn wrong_length_is_data_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = HatcnModel::new(HatcnConfig::new(1, 2, 2, 10), &mut rng).unwrap();
        assert!(matches!(model.forward(&[0.0; 9]), Err(Error::Data(_))));
        assert!(matches!(model.tcn_forward(&[0.0; 11]), Err(Error::Data(_))));
    }

    #[test]
    fn config_validation() {
        assert!(HatcnConfig::new(0, 2, 3, 10).validate().is_err());
        assert!(HatcnConfig::new(1, 2, 1, 10).validate().is_err());
        let mut cfg = HatcnConfig::new(2, 2, 3, 10);
        cfg.dilations = DilationSchedule::Custom(vec![1]);
        assert!(cfg.validate().is_err());
        cfg.dilations = DilationSchedule::Custom(vec![1, 3]);
        assert!(cfg.validate().is_ok());
        assert!(!cfg.dilations.is_powers_of_two());
        assert!(DilationSchedule::Custom(vec![1, 2, 4]).is_powers_of_two());
    }

    #[test]
    fn parameter_views_agree() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut model = HatcnModel::new(HatcnConfig::new(2, 3, 3, 10), &mut rng).unwrap();
        model.validate().unwrap();
        let n = model.parameter_count();
        assert_eq!(model.parameters().len(), n);
        assert_eq!(model.parameter_names().len(), n);
        assert_eq!(model.parameters_mut().len(), n);
        assert!(model.layer_attention.iter().all(|w| w.as_slice().iter().all(|&v| v == 0.0)));
    }
}
