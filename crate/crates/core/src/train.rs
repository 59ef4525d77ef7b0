//! Training, evaluation and the subject-level cross-validation driver.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::baseline::{extract_feature, train_margin_classifier, MarginConfig};
use crate::data::{subject_kfold, Dataset, Fold, Label, Series};
use crate::error::{Error, Result};
use crate::grid::TensorGrid;
use crate::metrics::{Confusion, Metrics, Summary};
use crate::model::{HatcnConfig, HatcnModel, Variant};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub variant: Variant,
    /// Update only the classifier head; everything else stays at its initial value.
    pub head_only: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            epochs: 100,
            batch_size: 32,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            variant: Variant::Hatcn,
            head_only: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning rate must be finite and >= 0, got {}", self.learning_rate)));
        }
        if self.epochs < 1 || self.batch_size < 1 {
            return Err(Error::Config("epochs and batch size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return Err(Error::Config("moment coefficients must lie in [0, 1) and epsilon > 0".into()));
        }
        Ok(())
    }
}

/// Adaptive-moment optimizer state, one slot per parameter grid.
#[derive(Clone, Debug)]
pub struct Adam {
    m: Vec<TensorGrid>,
    v: Vec<TensorGrid>,
    step: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
}

impl Adam {
    pub fn new(params: &[&TensorGrid], cfg: &TrainConfig) -> Self {
        let zeros = |p: &&TensorGrid| TensorGrid::zeros(p.rows(), p.cols());
        Self {
            m: params.iter().map(zeros).collect(),
            v: params.iter().map(zeros).collect(),
            step: 0,
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            epsilon: cfg.epsilon,
        }
    }

    /// Applies one update; `active[i] == false` leaves parameter `i` untouched.
    pub fn update(&mut self, params: Vec<&mut TensorGrid>, grads: &[TensorGrid], active: &[bool]) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for (i, p) in params.into_iter().enumerate() {
            if !active[i] {
                continue;
            }
            let m = self.m[i].as_mut_slice();
            let v = self.v[i].as_mut_slice();
            for (((w, &g), mi), vi) in p.as_mut_slice().iter_mut().zip(grads[i].as_slice()).zip(m).zip(v) {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * g;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * g * g;
                let mhat = *mi / c1;
                let vhat = *vi / c2;
                *w -= self.lr * mhat / (vhat.sqrt() + self.epsilon);
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: HatcnModel,
    /// Mean loss over the training set before the first update.
    pub initial_loss: f64,
    /// Mean per-sample loss of each epoch, accumulated during the epoch.
    pub loss_curve: Vec<f64>,
    /// Ids of every series that contributed a gradient.
    pub seen_ids: BTreeSet<String>,
}

fn check_classes(series: &[Series]) -> Result<()> {
    if series.is_empty() {
        return Err(Error::Training("training set is empty".into()));
    }
    let has = |l: Label| series.iter().any(|s| s.label == l);
    if !has(Label::Patient) || !has(Label::Healthy) {
        return Err(Error::Training("training set must contain both classes".into()));
    }
    Ok(())
}

pub fn mean_loss(model: &HatcnModel, series: &[Series], variant: Variant) -> Result<f64> {
    let mut total = 0.0;
    for s in series {
        total += model.loss(&s.values, s.label.target(), variant)?;
    }
    Ok(total / series.len() as f64)
}

/// Minimises mean binary cross-entropy with mini-batch Adam. Samples are
/// reshuffled every epoch from `cfg.seed`.
pub fn train(mut model: HatcnModel, series: &[Series], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    model.validate()?;
    check_classes(series)?;
    let variant = cfg.variant;
    let initial_loss = mean_loss(&model, series, variant)?;
    let n_params = model.parameter_count();
    let active: Vec<bool> = (0..n_params).map(|i| !cfg.head_only || i + 2 >= n_params).collect();
    let mut adam = Adam::new(&model.parameters(), cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x7261_696e);
    let mut order: Vec<usize> = (0..series.len()).collect();
    let mut loss_curve = Vec::with_capacity(cfg.epochs);
    let mut seen_ids = BTreeSet::new();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
            let mut grads: Vec<TensorGrid> = model.parameters().iter().map(|p| TensorGrid::zeros(p.rows(), p.cols())).collect();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let s = &series[i];
                let (loss, g) = model.loss_and_gradients(&s.values, s.label.target(), variant)?;
                if !loss.is_finite() {
                    return Err(Error::Training(format!(
                        "loss became {loss} at epoch {epoch}, batch {b}, series {}",
                        s.id
                    )));
                }
                epoch_loss += loss;
                for (acc, gi) in grads.iter_mut().zip(&g) {
                    acc.add_scaled(gi, scale);
                }
                if epoch == 0 {
                    seen_ids.insert(s.id.clone());
                }
            }
            adam.update(model.parameters_mut(), &grads, &active);
            if !model.is_finite() {
                let names = model.parameter_names();
                let bad: Vec<&str> = model
                    .parameters()
                    .iter()
                    .zip(&names)
                    .filter(|(p, _)| !p.is_finite())
                    .map(|(_, n)| n.as_str())
                    .collect();
                return Err(Error::Training(format!("non-finite parameters {bad:?} after epoch {epoch}, batch {b}")));
            }
        }
        loss_curve.push(epoch_loss / series.len() as f64);
    }
    Ok(TrainOutcome { model, initial_loss, loss_curve, seen_ids })
}

/// Per-sample prediction from an evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub series_id: String,
    pub label: u8,
    pub probability: f64,
    pub predicted: u8,
}

pub fn predict_all(model: &HatcnModel, series: &[Series], variant: Variant, threshold: f64) -> Result<Vec<Prediction>> {
    series
        .iter()
        .map(|s| {
            let p = model.predict(&s.values, variant)?;
            Ok(Prediction {
                series_id: s.id.clone(),
                label: s.label.as_u8(),
                probability: p,
                predicted: u8::from(p >= threshold),
            })
        })
        .collect()
}

/// Accuracy and F1 (patients positive) at the given decision threshold.
pub fn evaluate(model: &HatcnModel, series: &[Series], variant: Variant, threshold: f64) -> Result<Metrics> {
    if series.is_empty() {
        return Err(Error::Usage("cannot evaluate on an empty test set".into()));
    }
    let preds = predict_all(model, series, variant, threshold)?;
    let pairs = preds.iter().map(|p| {
        (Label::from_u8(p.label).expect("stored labels are valid"), Label::from_u8(p.predicted).expect("0 or 1"))
    });
    Confusion::from_pairs(pairs).metrics()
}

const GOLDEN: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the fold partition: `splitmix64(master)`.
pub fn fold_seed(master: u64) -> u64 {
    splitmix64(master)
}

/// Seed of repeat `r`, fold `f`: `splitmix64(master + GOLDEN * (1 + 1000 r + f))`.
/// Drives both the model initialisation and the epoch shuffles.
pub fn run_seed(master: u64, repeat: usize, fold: usize) -> u64 {
    splitmix64(master.wrapping_add(GOLDEN.wrapping_mul(1 + 1000 * repeat as u64 + fold as u64)))
}

/// Everything a cross-validation run needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub model: HatcnConfig,
    pub train: TrainConfig,
    pub folds: usize,
    pub repeats: usize,
    pub master_seed: u64,
    pub threshold: f64,
    /// Worker threads; 1 runs sequentially.
    pub jobs: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub repeat: usize,
    pub fold: usize,
    pub seed: u64,
    pub test_subjects: Vec<String>,
    pub train_subjects: Vec<String>,
    pub n_train: usize,
    pub n_test: usize,
    pub final_loss: f64,
    pub metrics: Metrics,
}

/// Deterministic part of a cross-validation result.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub variant: Variant,
    pub layers: usize,
    pub channels: usize,
    pub kernel_size: usize,
    pub folds: usize,
    pub repeats: usize,
    pub master_seed: u64,
    pub runs: Vec<RunRecord>,
    pub summary: Summary,
}

impl CvReport {
    /// Canonical metrics document: pretty JSON with a trailing newline.
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}

/// Wall-clock costs, kept apart from the report so the report is reproducible.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvTimings {
    pub total_seconds: f64,
    pub run_seconds: Vec<f64>,
}

fn subjects_of(series: &[Series]) -> Vec<String> {
    let set: BTreeSet<&str> = series.iter().map(|s| s.subject_id.as_str()).collect();
    set.into_iter().map(String::from).collect()
}

fn run_fold(dataset: &Dataset, fold: &Fold, cfg: &CvConfig, repeat: usize, f: usize) -> Result<(RunRecord, f64)> {
    let started = Instant::now();
    let seed = run_seed(cfg.master_seed, repeat, f);
    let train_set: Vec<Series> = fold.train.iter().map(|&i| dataset.series[i].clone()).collect();
    let test_set: Vec<Series> = fold.test.iter().map(|&i| dataset.series[i].clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = HatcnModel::new(cfg.model.clone(), &mut rng)?;
    let tcfg = TrainConfig { seed, ..cfg.train.clone() };
    let outcome = train(model, &train_set, &tcfg)?;
    let metrics = evaluate(&outcome.model, &test_set, tcfg.variant, cfg.threshold)?;
    let train_subjects = {
        let seen: Vec<Series> = train_set.iter().filter(|s| outcome.seen_ids.contains(&s.id)).cloned().collect();
        subjects_of(&seen)
    };
    let record = RunRecord {
        repeat,
        fold: f,
        seed,
        test_subjects: fold.test_subjects.clone(),
        train_subjects,
        n_train: train_set.len(),
        n_test: test_set.len(),
        final_loss: outcome.loss_curve.last().copied().unwrap_or(f64::NAN),
        metrics,
    };
    Ok((record, started.elapsed().as_secs_f64()))
}

/// Repeats × folds of fresh-model training and evaluation.
///
/// `dataset` must already be preprocessed. Folds are fixed by the master
/// seed; every repeat re-initialises the model with a new derived seed.
pub fn cross_validate(dataset: &Dataset, cfg: &CvConfig) -> Result<(CvReport, CvTimings)> {
    cfg.model.validate()?;
    cfg.train.validate()?;
    if cfg.repeats < 1 {
        return Err(Error::Usage("repeats must be >= 1".into()));
    }
    let started = Instant::now();
    let folds = subject_kfold(dataset, cfg.folds, fold_seed(cfg.master_seed))?;
    let jobs: Vec<(usize, usize)> = (0..cfg.repeats).flat_map(|r| (0..folds.len()).map(move |f| (r, f))).collect();
    let run = |&(r, f): &(usize, usize)| run_fold(dataset, &folds[f], cfg, r, f);
    let results: Vec<Result<(RunRecord, f64)>> = if cfg.jobs > 1 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.jobs)
            .build()
            .map_err(|e| Error::Usage(format!("cannot start worker pool: {e}")))?;
        pool.install(|| jobs.par_iter().map(run).collect())
    } else {
        jobs.iter().map(run).collect()
    };
    let mut runs = Vec::with_capacity(results.len());
    let mut run_seconds = Vec::with_capacity(results.len());
    for r in results {
        let (record, secs) = r?;
        runs.push(record);
        run_seconds.push(secs);
    }
    let summary = Summary::of(&runs.iter().map(|r| r.metrics).collect::<Vec<_>>());
    let report = CvReport {
        variant: cfg.train.variant,
        layers: cfg.model.layers,
        channels: cfg.model.channels,
        kernel_size: cfg.model.kernel_size,
        folds: cfg.folds,
        repeats: cfg.repeats,
        master_seed: cfg.master_seed,
        runs,
        summary,
    };
    Ok((report, CvTimings { total_seconds: started.elapsed().as_secs_f64(), run_seconds }))
}

/// Checks that no run trained on a series of one of its test subjects.
pub fn audit_provenance(report: &CvReport) -> Result<()> {
    for run in &report.runs {
        if let Some(s) = run.test_subjects.iter().find(|s| run.train_subjects.contains(s)) {
            return Err(Error::Training(format!(
                "repeat {} fold {}: test subject {s} also appears in training",
                run.repeat, run.fold
            )));
        }
    }
    Ok(())
}

/// Cross-validated margin classifier on RT90-5, using the same subject folds.
///
/// `raw` holds unpreprocessed series; features are measured on them.
pub fn baseline_cross_validate(raw: &Dataset, folds: usize, master_seed: u64, cfg: &MarginConfig) -> Result<(Vec<Metrics>, Summary)> {
    let features = raw.series.iter().map(extract_feature).collect::<Result<Vec<_>>>()?;
    let partition = subject_kfold(raw, folds, fold_seed(master_seed))?;
    let mut per_fold = Vec::with_capacity(partition.len());
    for fold in &partition {
        let train: Vec<(f64, Label)> =
            fold.train.iter().map(|&i| (features[i].rt90_5, raw.series[i].label)).collect();
        let clf = train_margin_classifier(&train, cfg)?;
        let pairs = fold.test.iter().map(|&i| (raw.series[i].label, clf.predict(features[i].rt90_5)));
        per_fold.push(Confusion::from_pairs(pairs).metrics()?);
    }
    let summary = Summary::of(&per_fold);
    Ok((per_fold, summary))
}

/// One row of the model-comparison table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub model: String,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub f1_mean: f64,
    pub f1_std: f64,
}

impl TableRow {
    pub fn new(model: &str, summary: &Summary) -> Self {
        Self {
            model: model.to_string(),
            accuracy_mean: summary.accuracy.mean,
            accuracy_std: summary.accuracy.std,
            f1_mean: summary.f1.mean,
            f1_std: summary.f1.std,
        }
    }
}

/// One point of the depth sweep: accuracy and total run time per depth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub variant: Variant,
    pub depth: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub f1_mean: f64,
    pub total_seconds: f64,
}

/// Cross-validates every `(variant, depth)` pair with the same master seed.
pub fn depth_sweep(dataset: &Dataset, base: &CvConfig, variants: &[Variant], depths: &[usize]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &variant in variants {
        for &depth in depths {
            let mut cfg = base.clone();
            cfg.model.layers = depth;
            cfg.train.variant = variant;
            let (report, timings) = cross_validate(dataset, &cfg)?;
            rows.push(SweepRow {
                variant,
                depth,
                accuracy_mean: report.summary.accuracy.mean,
                accuracy_std: report.summary.accuracy.std,
                f1_mean: report.summary.f1.mean,
                total_seconds: timings.total_seconds,
            });
        }
    }
    Ok(rows)
}

pub fn write_csv_rows<T: Serialize>(rows: &[T], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
