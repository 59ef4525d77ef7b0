//! Handcrafted relaxation-time feature and a linear margin classifier on it.
//!
//! The relaxation phase is located by thresholding at half the strength
//! range, keeping the strongest 85% of the supra-threshold samples, and
//! taking the latest of them. RT90-5 is the time the signal needs to fall
//! from 90% to 5% of the strength at that point.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::data::{Label, Series};
use crate::error::{Error, Result};

/// Share of supra-threshold samples kept when locating the release.
pub const KEEP_FRACTION: f64 = 0.85;
pub const UPPER_LEVEL: f64 = 0.90;
pub const LOWER_LEVEL: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxationAnalysis {
    /// Strength threshold `(max - min) / 2`.
    pub eta: f64,
    /// Steps with strength above `eta`, in time order.
    pub candidates: Vec<usize>,
    /// Start of the relaxation phase.
    pub start: usize,
}

/// RT90-5 measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RelaxationTime {
    /// Duration in samples.
    pub duration: f64,
    /// The signal never dropped to the lower level; `duration` is then the
    /// length of the relaxation segment.
    pub censored: bool,
}

pub fn detect_relaxation_start(x: &[f64]) -> Result<RelaxationAnalysis> {
    if x.len() < 3 {
        return Err(Error::Data(format!("need at least 3 samples, got {}", x.len())));
    }
    let (lo, hi) = x.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) {
        return Err(Error::Data("constant series has no relaxation phase".into()));
    }
    let eta = (hi - lo) / 2.0;
    let candidates: Vec<usize> = (0..x.len()).filter(|&t| x[t] > eta).collect();
    if candidates.is_empty() {
        // only reachable when min < 0 pushes the maximum below eta
        return Err(Error::Data("no sample exceeds the strength threshold".into()));
    }
    let mut ranked = candidates.clone();
    // strongest first; equal strengths keep the later step
    ranked.sort_by(|&a, &b| x[b].total_cmp(&x[a]).then(b.cmp(&a)));
    let keep = ((KEEP_FRACTION * ranked.len() as f64 - 1e-9).ceil() as usize).clamp(1, ranked.len());
    let start = ranked[..keep].iter().copied().max().expect("keep >= 1");
    Ok(RelaxationAnalysis { eta, candidates, start })
}

/// Fractional index where `x` first drops to `level` after `from`, linearly
/// interpolated between the bracketing samples.
fn crossing(x: &[f64], from: usize, level: f64) -> Option<f64> {
    (from + 1..x.len()).find(|&k| x[k] <= level).map(|k| {
        let (a, b) = (x[k - 1], x[k]);
        if a <= level {
            k as f64
        } else {
            (k - 1) as f64 + (a - level) / (a - b)
        }
    })
}

/// RT90-5 measured from `start` relative to the strength there.
pub fn rt90_5(x: &[f64], start: usize) -> Result<RelaxationTime> {
    if start >= x.len() {
        return Err(Error::Data(format!("relaxation start {start} outside series of length {}", x.len())));
    }
    let level = x[start];
    if !(level > 0.0) {
        return Err(Error::Data("strength at relaxation start must be positive".into()));
    }
    let hi = crossing(x, start, UPPER_LEVEL * level);
    let lo = crossing(x, start, LOWER_LEVEL * level);
    Ok(match (hi, lo) {
        (Some(a), Some(b)) => RelaxationTime { duration: b - a, censored: false },
        _ => RelaxationTime { duration: (x.len() - start) as f64, censored: true },
    })
}

/// One line of the feature dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureRow {
    pub series_id: String,
    pub subject_id: String,
    pub label: u8,
    pub eta: f64,
    pub start_index: usize,
    pub rt90_5: f64,
    pub censored: bool,
}

pub fn extract_feature(series: &Series) -> Result<FeatureRow> {
    let analysis = detect_relaxation_start(&series.values)?;
    let rt = rt90_5(&series.values, analysis.start)?;
    Ok(FeatureRow {
        series_id: series.id.clone(),
        subject_id: series.subject_id.clone(),
        label: series.label.as_u8(),
        eta: analysis.eta,
        start_index: analysis.start,
        rt90_5: rt.duration,
        censored: rt.censored,
    })
}

pub fn write_feature_csv(rows: &[FeatureRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginConfig {
    /// L2 penalty on the weight.
    pub lambda: f64,
    pub iterations: usize,
    pub step: f64,
}

impl Default for MarginConfig {
    fn default() -> Self {
        Self { lambda: 0.01, iterations: 2000, step: 0.5 }
    }
}

/// Soft-margin linear classifier on one standardised feature.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginClassifier {
    pub mean: f64,
    pub scale: f64,
    pub weight: f64,
    pub bias: f64,
}

impl MarginClassifier {
    pub fn score(&self, feature: f64) -> f64 {
        self.weight * (feature - self.mean) / self.scale + self.bias
    }

    pub fn predict(&self, feature: f64) -> Label {
        if self.score(feature) >= 0.0 {
            Label::Patient
        } else {
            Label::Healthy
        }
    }

    /// Feature value where the decision flips, if the weight is nonzero.
    pub fn boundary(&self) -> Option<f64> {
        (self.weight != 0.0).then(|| self.mean - self.bias * self.scale / self.weight)
    }
}

/// `λ/2 w² + mean(max(0, 1 - y (w z + b)))` on standardised features.
pub fn hinge_objective(z: &[f64], y: &[f64], lambda: f64, w: f64, b: f64) -> f64 {
    let hinge: f64 = z.iter().zip(y).map(|(&zi, &yi)| (1.0 - yi * (w * zi + b)).max(0.0)).sum();
    0.5 * lambda * w * w + hinge / z.len() as f64
}

/// Full-batch subgradient descent with step `step / sqrt(t)`, returning the
/// best iterate seen.
pub fn train_margin_classifier(features: &[(f64, Label)], cfg: &MarginConfig) -> Result<MarginClassifier> {
    let has = |l: Label| features.iter().any(|&(_, x)| x == l);
    if !has(Label::Patient) || !has(Label::Healthy) {
        return Err(Error::Training("margin classifier needs both classes".into()));
    }
    if features.iter().any(|(f, _)| !f.is_finite()) {
        return Err(Error::Training("non-finite feature value".into()));
    }
    let n = features.len() as f64;
    let mean = features.iter().map(|(f, _)| f).sum::<f64>() / n;
    let var = features.iter().map(|(f, _)| (f - mean).powi(2)).sum::<f64>() / n;
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    let z: Vec<f64> = features.iter().map(|(f, _)| (f - mean) / scale).collect();
    let y: Vec<f64> = features.iter().map(|(_, l)| if *l == Label::Patient { 1.0 } else { -1.0 }).collect();

    let (mut w, mut b) = (0.0, 0.0);
    let mut best = (hinge_objective(&z, &y, cfg.lambda, w, b), w, b);
    for t in 1..=cfg.iterations {
        let (mut gw, mut gb) = (cfg.lambda * w, 0.0);
        for (&zi, &yi) in z.iter().zip(&y) {
            if yi * (w * zi + b) < 1.0 {
                gw -= yi * zi / n;
                gb -= yi / n;
            }
        }
        let eta = cfg.step / (t as f64).sqrt();
        w -= eta * gw;
        b -= eta * gb;
        let obj = hinge_objective(&z, &y, cfg.lambda, w, b);
        if obj < best.0 {
            best = (obj, w, b);
        }
    }
    Ok(MarginClassifier { mean, scale, weight: best.1, bias: best.2 })
}
