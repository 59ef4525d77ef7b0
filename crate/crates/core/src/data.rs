//! Series ingestion, preprocessing, fold construction and a synthetic
//! handgrip cohort.
//!
//! Two CSV layouts are accepted:
//!
//! * long: `series_id,subject_id,label,t,value`, one row per sample;
//! * wide: `series_id,subject_id,label,v0,v1,...`, one row per series.
//!   Rows may have different lengths.
//!
//! Labels are `1` for patients and `0` for healthy controls.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Length every series is cut or padded to before it reaches the network.
pub const SERIES_LENGTH: usize = 750;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Healthy,
    Patient,
}

impl Label {
    pub fn from_u8(v: u8) -> Result<Self> {
        match v {
            0 => Ok(Label::Healthy),
            1 => Ok(Label::Patient),
            other => Err(Error::Data(format!("label must be 0 or 1, got {other}"))),
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Label::Healthy => 0,
            Label::Patient => 1,
        }
    }

    pub fn target(self) -> f64 {
        f64::from(self.as_u8())
    }
}

/// One handgrip recording.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub id: String,
    pub subject_id: String,
    pub label: Label,
    pub values: Vec<f64>,
    /// Samples per second, when known.
    pub sample_rate: Option<f64>,
}

/// Truncates or right-pads with zeros to `len`, then min-max scales the
/// original (unpadded) samples to `[0, 1]`. Padding stays at zero.
pub fn preprocess_to(raw: &Series, len: usize) -> Result<Series> {
    if raw.values.is_empty() {
        return Err(Error::Data(format!("series {} is empty", raw.id)));
    }
    let kept = &raw.values[..raw.values.len().min(len)];
    let (lo, hi) = kept.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Data(format!("series {} is constant or non-finite; cannot normalise", raw.id)));
    }
    let range = hi - lo;
    let mut values: Vec<f64> = kept.iter().map(|v| (v - lo) / range).collect();
    values.resize(len, 0.0);
    Ok(Series { values, ..raw.clone() })
}

pub fn preprocess(raw: &Series) -> Result<Series> {
    preprocess_to(raw, SERIES_LENGTH)
}

/// Inclusive numeric range used by the generator.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    fn sample(&self, rng: &mut impl Rng) -> f64 {
        if self.max > self.min {
            rng.random_range(self.min..=self.max)
        } else {
            self.min
        }
    }

    fn sample_steps(&self, rng: &mut impl Rng) -> usize {
        self.sample(rng).round() as usize
    }
}

/// Squeeze / hold / release generator settings. Durations are in samples.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub patients: usize,
    pub healthy: usize,
    /// Recordings per subject (inclusive range).
    pub trials_per_subject: (usize, usize),
    pub sample_rate: f64,
    /// Quiet lead-in before the squeeze.
    pub lead_in: Range,
    pub rise: Range,
    /// Hold at maximum force, about three seconds.
    pub hold: Range,
    /// Relative force lost over the hold (fatigue drift).
    pub hold_drift: Range,
    /// Relaxation time constant of healthy subjects.
    pub healthy_tau: Range,
    /// Relaxation time constant of patients; entirely above `healthy_tau`.
    pub patient_tau: Range,
    /// Trial-level multiplicative jitter on the subject's time constant.
    pub tau_jitter: f64,
    /// Subject peak force in arbitrary units.
    pub peak: Range,
    /// Total raw recording length.
    pub length: Range,
    /// Gaussian noise standard deviation as a fraction of the peak.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            patients: 37,
            healthy: 18,
            trials_per_subject: (12, 15),
            sample_rate: 100.0,
            lead_in: Range::new(0.0, 0.0),
            rise: Range::new(40.0, 80.0),
            hold: Range::new(260.0, 340.0),
            hold_drift: Range::new(0.0, 0.08),
            healthy_tau: Range::new(4.0, 10.0),
            patient_tau: Range::new(18.0, 45.0),
            tau_jitter: 0.1,
            peak: Range::new(20.0, 60.0),
            length: Range::new(680.0, 900.0),
            noise: 0.02,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let ranges = [
            ("lead_in", self.lead_in),
            ("rise", self.rise),
            ("hold", self.hold),
            ("hold_drift", self.hold_drift),
            ("healthy_tau", self.healthy_tau),
            ("patient_tau", self.patient_tau),
            ("peak", self.peak),
            ("length", self.length),
        ];
        for (name, r) in ranges {
            if !(r.min <= r.max) || r.min < 0.0 || !r.max.is_finite() {
                return Err(Error::Config(format!("{name} range [{}, {}] is invalid", r.min, r.max)));
            }
        }
        if self.healthy_tau.min <= 0.0 || self.rise.min < 1.0 || self.peak.min <= 0.0 {
            return Err(Error::Config("time constants, rise and peak must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.tau_jitter) || self.noise < 0.0 || self.hold_drift.max >= 1.0 {
            return Err(Error::Config("jitter must be in [0,1), noise >= 0, drift < 1".into()));
        }
        let healthy_top = self.healthy_tau.max * (1.0 + self.tau_jitter);
        let patient_bottom = self.patient_tau.min * (1.0 - self.tau_jitter);
        if patient_bottom <= healthy_top {
            return Err(Error::Config(format!(
                "patient time constants (from {patient_bottom:.3}) must lie strictly above healthy ones (up to {healthy_top:.3})"
            )));
        }
        let (lo, hi) = self.trials_per_subject;
        if lo == 0 || lo > hi || self.patients + self.healthy == 0 {
            return Err(Error::Config("need at least one subject and one trial per subject".into()));
        }
        Ok(())
    }
}

/// Ground truth for one generated recording (raw sample indices).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub series_id: String,
    pub subject_id: String,
    pub label: u8,
    /// First sample of the exponential release.
    pub relax_start: usize,
    /// Sample where the noiseless curve reaches 5% of its release level.
    pub relax_end: usize,
    pub tau: f64,
    pub release_level: f64,
}

impl Annotation {
    /// Whether `j` lies in `[relax_start, relax_end]`.
    pub fn in_relaxation(&self, j: usize) -> bool {
        self.relax_start <= j && j <= self.relax_end
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub series: Vec<Series>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.series.len()
    }

    pub fn is_empty(&self) -> bool {
        self.series.is_empty()
    }

    pub fn preprocessed(&self) -> Result<Dataset> {
        Ok(Dataset { series: self.series.iter().map(preprocess).collect::<Result<_>>()? })
    }

    pub fn subjects(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.series.iter().map(|s| s.subject_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset { series: indices.iter().map(|&i| self.series[i].clone()).collect() }
    }
}

/// Generated cohort plus its ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCohort {
    pub dataset: Dataset,
    pub annotations: Vec<Annotation>,
}

fn synth_series(cfg: &SynthConfig, rng: &mut ChaCha8Rng, peak: f64, tau: f64) -> (Vec<f64>, usize, f64) {
    let lead = cfg.lead_in.sample_steps(rng);
    let rise = cfg.rise.sample_steps(rng).max(1);
    let hold = cfg.hold.sample_steps(rng).max(1);
    let drift = cfg.hold_drift.sample(rng);
    let relax_start = lead + rise + hold;
    let len = cfg.length.sample_steps(rng).max(relax_start + 1);
    let release_level = peak * (1.0 - drift);
    let noise = Normal::new(0.0, cfg.noise * peak).expect("noise level validated");
    let mut values = Vec::with_capacity(len);
    for t in 0..len {
        let clean = if t < lead {
            0.0
        } else if t < lead + rise {
            // raised-cosine squeeze
            let phase = (t - lead) as f64 / rise as f64;
            peak * 0.5 * (1.0 - (std::f64::consts::PI * phase).cos())
        } else if t < relax_start {
            let phase = (t - lead - rise) as f64 / hold as f64;
            peak * (1.0 - drift * phase)
        } else {
            release_level * (-((t - relax_start) as f64) / tau).exp()
        };
        let noisy = if cfg.noise > 0.0 { clean + noise.sample(rng) } else { clean };
        values.push(noisy.max(0.0));
    }
    (values, relax_start, release_level)
}

/// Builds a cohort from `cfg`; the seed fully determines the output.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SyntheticCohort> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut series = Vec::new();
    let mut annotations = Vec::new();
    let subjects = (0..cfg.patients)
        .map(|i| (format!("P{i:03}"), Label::Patient))
        .chain((0..cfg.healthy).map(|i| (format!("H{i:03}"), Label::Healthy)));
    for (subject_id, label) in subjects {
        let tau_range = match label {
            Label::Patient => cfg.patient_tau,
            Label::Healthy => cfg.healthy_tau,
        };
        let subject_tau = tau_range.sample(&mut rng);
        let peak = cfg.peak.sample(&mut rng);
        let trials = rng.random_range(cfg.trials_per_subject.0..=cfg.trials_per_subject.1);
        for trial in 0..trials {
            let jitter = if cfg.tau_jitter > 0.0 { rng.random_range(-cfg.tau_jitter..=cfg.tau_jitter) } else { 0.0 };
            let tau = subject_tau * (1.0 + jitter);
            let (values, relax_start, release_level) = synth_series(cfg, &mut rng, peak, tau);
            let id = format!("{subject_id}-{trial:02}");
            let relax_end = relax_start + (tau * 20f64.ln()).ceil() as usize;
            annotations.push(Annotation {
                series_id: id.clone(),
                subject_id: subject_id.clone(),
                label: label.as_u8(),
                relax_start,
                relax_end,
                tau,
                release_level,
            });
            series.push(Series { id, subject_id: subject_id.clone(), label, values, sample_rate: Some(cfg.sample_rate) });
        }
    }
    Ok(SyntheticCohort { dataset: Dataset { series }, annotations })
}

/// Train/test indices into a dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
    pub test_subjects: Vec<String>,
}

/// Partitions subjects (never individual series) into `k` folds, stratified
/// by class.
///
/// Subjects of each class are shuffled with `seed`, then dealt round-robin,
/// patients first and healthy controls continuing from where the patients
/// stopped, so fold sizes differ by at most one subject overall and per class.
pub fn subject_kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    let mut subject_label: BTreeMap<&str, Label> = BTreeMap::new();
    for s in &dataset.series {
        if let Some(prev) = subject_label.insert(&s.subject_id, s.label) {
            if prev != s.label {
                return Err(Error::Data(format!("subject {} has series with both labels", s.subject_id)));
            }
        }
    }
    if k < 2 || k > subject_label.len() {
        return Err(Error::Usage(format!(
            "need 2 <= k <= number of subjects ({}), got k = {k}",
            subject_label.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignment: HashMap<&str, usize> = HashMap::new();
    let mut next = 0usize;
    for class in [Label::Patient, Label::Healthy] {
        let mut members: Vec<&str> = subject_label.iter().filter(|(_, &l)| l == class).map(|(&s, _)| s).collect();
        members.shuffle(&mut rng);
        for s in members {
            assignment.insert(s, next % k);
            next += 1;
        }
    }
    let mut folds: Vec<Fold> = (0..k).map(|_| Fold { train: vec![], test: vec![], test_subjects: vec![] }).collect();
    for (i, s) in dataset.series.iter().enumerate() {
        let f = assignment[s.subject_id.as_str()];
        for (j, fold) in folds.iter_mut().enumerate() {
            if j == f {
                fold.test.push(i);
            } else {
                fold.train.push(i);
            }
        }
    }
    for s in subject_label.keys() {
        folds[assignment[s]].test_subjects.push((*s).to_string());
    }
    Ok(folds)
}

fn parse_label(field: &str, line: u64) -> Result<Label> {
    let v: u8 = field.trim().parse().map_err(|_| Error::Data(format!("line {line}: bad label '{field}'")))?;
    Label::from_u8(v)
}

fn parse_value(field: &str, line: u64) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Data(format!("line {line}: bad number '{field}'")))?;
    if !v.is_finite() {
        return Err(Error::Data(format!("line {line}: non-finite value")));
    }
    Ok(v)
}

/// Reads either CSV layout, deciding by the header.
pub fn read_csv(reader: impl Read) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names.len() < 4 || names[0] != "series_id" || names[1] != "subject_id" || names[2] != "label" {
        return Err(Error::Data(format!("unrecognised CSV header: {}", names.join(","))));
    }
    let long = names.len() == 5 && names[3] == "t" && names[4] == "value";
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, (String, Label, Vec<(usize, f64)>)> = HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() < 4 {
            return Err(Error::Data(format!("line {line}: too few fields")));
        }
        let id = rec[0].trim().to_string();
        let subject = rec[1].trim().to_string();
        let label = parse_label(&rec[2], line)?;
        let entry = by_id.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            (subject.clone(), label, Vec::new())
        });
        if entry.0 != subject || entry.1 != label {
            return Err(Error::Data(format!("line {line}: series {id} changes subject or label")));
        }
        if long {
            if rec.len() != 5 {
                return Err(Error::Data(format!("line {line}: expected 5 fields")));
            }
            let t: usize =
                rec[3].trim().parse().map_err(|_| Error::Data(format!("line {line}: bad time index '{}'", &rec[3])))?;
            entry.2.push((t, parse_value(&rec[4], line)?));
        } else {
            if !entry.2.is_empty() {
                return Err(Error::Data(format!("line {line}: series {id} repeated in wide layout")));
            }
            for (t, f) in rec.iter().skip(3).filter(|f| !f.trim().is_empty()).enumerate() {
                entry.2.push((t, parse_value(f, line)?));
            }
        }
    }
    let mut series = Vec::with_capacity(order.len());
    for id in order {
        let (subject_id, label, mut samples) = by_id.remove(&id).expect("recorded above");
        samples.sort_by_key(|&(t, _)| t);
        for (expect, &(t, _)) in samples.iter().enumerate() {
            if t != expect {
                return Err(Error::Data(format!("series {id}: time indices must be 0..n without gaps")));
            }
        }
        if samples.is_empty() {
            return Err(Error::Data(format!("series {id} has no samples")));
        }
        series.push(Series { id, subject_id, label, values: samples.into_iter().map(|(_, v)| v).collect(), sample_rate: None });
    }
    Ok(Dataset { series })
}

pub fn read_csv_path(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::Data(format!("cannot open {}: {e}", path.display())))?;
    read_csv(file)
}

/// Long layout, one row per sample.
pub fn write_long_csv(dataset: &Dataset, mut out: impl Write) -> Result<()> {
    writeln!(out, "series_id,subject_id,label,t,value")?;
    for s in &dataset.series {
        for (t, v) in s.values.iter().enumerate() {
            writeln!(out, "{},{},{},{},{}", s.id, s.subject_id, s.label.as_u8(), t, v)?;
        }
    }
    Ok(())
}

/// Wide layout, one row per series.
pub fn write_wide_csv(dataset: &Dataset, mut out: impl Write) -> Result<()> {
    let width = dataset.series.iter().map(|s| s.values.len()).max().unwrap_or(0);
    let cols: Vec<String> = (0..width).map(|i| format!("v{i}")).collect();
    writeln!(out, "series_id,subject_id,label,{}", cols.join(","))?;
    for s in &dataset.series {
        let vals: Vec<String> = s.values.iter().map(|v| v.to_string()).collect();
        writeln!(out, "{},{},{},{}", s.id, s.subject_id, s.label.as_u8(), vals.join(","))?;
    }
    Ok(())
}
