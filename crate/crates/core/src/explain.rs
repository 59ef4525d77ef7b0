//! Tracing a decision back to input segments.
//!
//! Because the network is a plain stack of dilated causal convolutions, the
//! input interval that can influence an activation at `(layer, t)` is known
//! exactly. The explanation picks the layers and time steps with the largest
//! attention weights, counts for every input step how many of their
//! receptive fields contain it, and reports the contiguous runs of the most
//! frequently covered steps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DilationSchedule, ForwardTrace, HatcnModel};

/// Input interval `[start, time]` feeding the activation at `(layer, time)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReceptiveField {
    pub layer: usize,
    pub time: usize,
    pub start: usize,
}

impl ReceptiveField {
    pub fn new(layer: usize, time: usize, kernel_size: usize, schedule: &DilationSchedule) -> Result<Self> {
        let start = receptive_field_start(time, layer, kernel_size, schedule)?;
        Ok(Self { layer, time, start })
    }

    pub fn contains(&self, j: usize) -> bool {
        self.start <= j && j <= self.time
    }
}

/// First input step that can reach layer `layer` at time `t`:
/// `max(0, t - (2^(layer+1) - 1) * (l - 1))`.
///
/// The closed form only holds for the `2^i` dilation schedule; any other
/// schedule is rejected.
pub fn receptive_field_start(t: usize, layer: usize, kernel_size: usize, schedule: &DilationSchedule) -> Result<usize> {
    if !schedule.is_powers_of_two() {
        return Err(Error::Config(format!(
            "receptive-field start is only defined for the 2^i dilation schedule, got {schedule:?}"
        )));
    }
    if kernel_size < 2 {
        return Err(Error::Config(format!("kernel size must be >= 2, got {kernel_size}")));
    }
    let span = ((1usize << (layer + 1)) - 1).saturating_mul(kernel_size - 1);
    Ok(t.saturating_sub(span))
}

/// Number of entries in the top `fraction` of `n` values: `ceil(fraction * n)`, at least one.
pub fn top_count(n: usize, fraction: f64) -> usize {
    // the epsilon absorbs representation error such as 0.1 * 750 = 75.000...01
    let raw = (fraction * n as f64 - 1e-9).ceil();
    (raw.max(1.0) as usize).min(n)
}

/// Indices of the `top_count(values.len(), fraction)` largest values, ties
/// going to the earliest index. Returned in ascending index order.
pub fn top_indices(values: &[f64], fraction: f64) -> Vec<usize> {
    if values.is_empty() {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    order.truncate(top_count(values.len(), fraction));
    order.sort_unstable();
    order
}

fn check_fraction(name: &str, p: f64) -> Result<()> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(Error::Usage(format!("{name} must lie in (0, 1], got {p}")));
    }
    Ok(())
}

/// Relevant layers `RL` and relevant `(layer, time)` steps `RT`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub layers: Vec<usize>,
    pub steps: Vec<(usize, usize)>,
}

/// Picks the top `layer_fraction` layers by across-layer weight and, within
/// each of them, the top `step_fraction` time steps by within-layer weight.
pub fn select_relevant(trace: &ForwardTrace, layer_fraction: f64, step_fraction: f64) -> Result<Selection> {
    check_fraction("layer percentile", layer_fraction)?;
    check_fraction("step percentile", step_fraction)?;
    if trace.across_weights.is_empty() || trace.layer_weights.len() != trace.across_weights.len() {
        return Err(Error::Usage("forward trace has no attention weights".into()));
    }
    let layers = top_indices(&trace.across_weights, layer_fraction);
    let mut steps = Vec::new();
    for &i in &layers {
        steps.extend(top_indices(&trace.layer_weights[i], step_fraction).into_iter().map(|t| (i, t)));
    }
    Ok(Selection { layers, steps })
}

/// `Freq_j`: how many selected receptive fields contain input step `j`.
pub fn relevance_frequency(
    selection: &Selection,
    kernel_size: usize,
    len: usize,
    schedule: &DilationSchedule,
) -> Result<Vec<u32>> {
    // difference array over [start, t]
    let mut delta = vec![0i64; len + 1];
    for &(layer, t) in &selection.steps {
        if !selection.layers.contains(&layer) {
            return Err(Error::Usage(format!("step ({layer}, {t}) refers to a layer outside the relevant set")));
        }
        if t >= len {
            return Err(Error::Usage(format!("time step {t} outside series of length {len}")));
        }
        let s = receptive_field_start(t, layer, kernel_size, schedule)?;
        delta[s] += 1;
        delta[t + 1] -= 1;
    }
    let mut running = 0i64;
    Ok(delta[..len]
        .iter()
        .map(|d| {
            running += d;
            running as u32
        })
        .collect())
}

/// Inclusive index interval.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub start: usize,
    pub end: usize,
}

impl Segment {
    pub fn len(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, j: usize) -> bool {
        self.start <= j && j <= self.end
    }
}

/// Frequency cut-off: the value at rank `top_count` among the nonzero
/// frequencies sorted in descending order. `None` when all are zero.
pub fn frequency_threshold(freq: &[u32], fraction: f64) -> Option<u32> {
    let mut positive: Vec<u32> = freq.iter().copied().filter(|&f| f > 0).collect();
    if positive.is_empty() {
        return None;
    }
    positive.sort_unstable_by(|a, b| b.cmp(a));
    Some(positive[top_count(positive.len(), fraction) - 1])
}

/// Marks the steps whose frequency reaches the top-`fraction` threshold and
/// merges neighbours into maximal runs.
pub fn extract_segments(freq: &[u32], fraction: f64) -> Result<Vec<Segment>> {
    check_fraction("segment percentile", fraction)?;
    let Some(threshold) = frequency_threshold(freq, fraction) else {
        return Ok(Vec::new());
    };
    let mut segments = Vec::new();
    let mut open: Option<usize> = None;
    for (j, &f) in freq.iter().enumerate() {
        match (f >= threshold, open) {
            (true, None) => open = Some(j),
            (false, Some(s)) => {
                segments.push(Segment { start: s, end: j - 1 });
                open = None;
            }
            _ => {}
        }
    }
    if let Some(s) = open {
        segments.push(Segment { start: s, end: freq.len() - 1 });
    }
    Ok(segments)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelevanceProfile {
    pub freq: Vec<u32>,
    pub relevant_layers: Vec<usize>,
    pub relevant_steps: Vec<(usize, usize)>,
    pub segments: Vec<Segment>,
}

impl RelevanceProfile {
    /// `Σ Freq_j` over the steps covered by segments.
    pub fn segment_mass(&self) -> u64 {
        self.segments.iter().flat_map(|s| s.start..=s.end).map(|j| u64::from(self.freq[j])).sum()
    }

    /// Share of the segment mass lying in `[start, end]`; 0 when there is no mass.
    pub fn mass_fraction_within(&self, start: usize, end: usize) -> f64 {
        let total = self.segment_mass();
        if total == 0 {
            return 0.0;
        }
        let inside: u64 = self
            .segments
            .iter()
            .flat_map(|s| s.start.max(start)..=s.end.min(end))
            .map(|j| u64::from(self.freq[j]))
            .sum();
        inside as f64 / total as f64
    }
}

/// Pointwise mean of equally long frequency curves.
pub fn mean_frequency<'a>(curves: impl IntoIterator<Item = &'a [u32]>) -> Vec<f64> {
    let mut sum: Vec<f64> = Vec::new();
    let mut n = 0usize;
    for c in curves {
        if sum.is_empty() {
            sum = vec![0.0; c.len()];
        }
        for (acc, &v) in sum.iter_mut().zip(c) {
            *acc += f64::from(v);
        }
        n += 1;
    }
    sum.iter_mut().for_each(|v| *v /= n.max(1) as f64);
    sum
}

/// Percentiles driving the explanation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainSettings {
    pub layer_fraction: f64,
    pub step_fraction: f64,
    pub segment_fraction: f64,
}

impl Default for ExplainSettings {
    fn default() -> Self {
        Self { layer_fraction: 0.10, step_fraction: 0.10, segment_fraction: 0.10 }
    }
}

/// A forward pass plus the relevance profile it induces.
#[derive(Clone, Debug)]
pub struct Explanation {
    pub trace: ForwardTrace,
    pub profile: RelevanceProfile,
}

pub fn relevance_profile(
    trace: &ForwardTrace,
    kernel_size: usize,
    schedule: &DilationSchedule,
    settings: &ExplainSettings,
) -> Result<RelevanceProfile> {
    let len = trace.activations.first().map(|h| h.cols()).ok_or_else(|| Error::Usage("empty forward trace".into()))?;
    let selection = select_relevant(trace, settings.layer_fraction, settings.step_fraction)?;
    let freq = relevance_frequency(&selection, kernel_size, len, schedule)?;
    let segments = extract_segments(&freq, settings.segment_fraction)?;
    Ok(RelevanceProfile { freq, relevant_layers: selection.layers, relevant_steps: selection.steps, segments })
}

pub fn explain(model: &HatcnModel, x: &[f64], settings: &ExplainSettings) -> Result<Explanation> {
    let trace = model.forward(x)?;
    let profile = relevance_profile(&trace, model.config.kernel_size, &model.config.dilations, settings)?;
    Ok(Explanation { trace, profile })
}

/// Per-sample JSON document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationReport {
    pub series_id: String,
    pub probability: f64,
    pub across_weights: Vec<f64>,
    /// `(layer, α_layer)` for the relevant layers only.
    pub layer_weights: Vec<LayerWeights>,
    pub freq: Vec<u32>,
    pub segments: Vec<Segment>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerWeights {
    pub layer: usize,
    pub weights: Vec<f64>,
}

impl ExplanationReport {
    pub fn new(series_id: &str, explanation: &Explanation) -> Self {
        let trace = &explanation.trace;
        Self {
            series_id: series_id.to_string(),
            probability: trace.probability,
            across_weights: trace.across_weights.clone(),
            layer_weights: explanation
                .profile
                .relevant_layers
                .iter()
                .map(|&i| LayerWeights { layer: i, weights: trace.layer_weights[i].clone() })
                .collect(),
            freq: explanation.profile.freq.clone(),
            segments: explanation.profile.segments.clone(),
        }
    }
}
