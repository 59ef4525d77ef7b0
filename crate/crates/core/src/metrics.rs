use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};

/// Binary confusion counts with patients as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut c = Confusion::default();
        for (truth, predicted) in pairs {
            match (truth, predicted) {
                (Label::Patient, Label::Patient) => c.tp += 1,
                (Label::Healthy, Label::Patient) => c.fp += 1,
                (Label::Healthy, Label::Healthy) => c.tn += 1,
                (Label::Patient, Label::Healthy) => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        (self.tp + self.tn) as f64 / self.total() as f64
    }

    pub fn precision(&self) -> Option<f64> {
        let d = self.tp + self.fp;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    pub fn recall(&self) -> Option<f64> {
        let d = self.tp + self.fn_;
        (d > 0).then(|| self.tp as f64 / d as f64)
    }

    /// `(F1, degenerate)`; degenerate when precision or recall is undefined
    /// or both are zero, in which case F1 is reported as 0.
    pub fn f1(&self) -> (f64, bool) {
        match (self.precision(), self.recall()) {
            (Some(p), Some(r)) if p + r > 0.0 => (2.0 * p * r / (p + r), false),
            _ => (0.0, true),
        }
    }

    pub fn metrics(&self) -> Result<Metrics> {
        if self.total() == 0 {
            return Err(Error::Usage("cannot score an empty test set".into()));
        }
        let (f1, f1_degenerate) = self.f1();
        Ok(Metrics { accuracy: self.accuracy(), f1, f1_degenerate, confusion: *self })
    }
}

/// Scores of one evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub f1: f64,
    pub f1_degenerate: bool,
    pub confusion: Confusion,
}

/// Mean and sample standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: f64::NAN, std: f64::NAN };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

/// Aggregate over folds and repeats.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub accuracy: MeanStd,
    pub f1: MeanStd,
}

impl Summary {
    pub fn of(runs: &[Metrics]) -> Self {
        let acc: Vec<f64> = runs.iter().map(|m| m.accuracy).collect();
        let f1: Vec<f64> = runs.iter().map(|m| m.f1).collect();
        Self { accuracy: MeanStd::of(&acc), f1: MeanStd::of(&f1) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn direct_formulas() {
        let c = Confusion { tp: 3, fp: 1, fn_: 1, tn: 5 };
        let m = c.metrics().unwrap();
        assert_abs_diff_eq!(m.accuracy, 0.8, epsilon = 1e-15);
        assert_abs_diff_eq!(c.precision().unwrap(), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(c.recall().unwrap(), 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(m.f1, 0.75, epsilon = 1e-15);
        assert!(!m.f1_degenerate);
    }

    #[test]
    fn all_correct() {
        let c = Confusion::from_pairs([(Label::Patient, Label::Patient), (Label::Healthy, Label::Healthy)]);
        let m = c.metrics().unwrap();
        assert_eq!((m.accuracy, m.f1), (1.0, 1.0));
    }

    #[test]
    fn all_negative_is_degenerate() {
        let c = Confusion::from_pairs([(Label::Patient, Label::Healthy), (Label::Healthy, Label::Healthy)]);
        let m = c.metrics().unwrap();
        assert_eq!(m.f1, 0.0);
        assert!(m.f1_degenerate);
        assert_eq!(m.accuracy, 0.5);
    }

    #[test]
    fn empty_set_is_usage_error() {
        assert!(matches!(Confusion::default().metrics(), Err(Error::Usage(_))));
    }

    #[test]
    fn mean_std() {
        let s = MeanStd::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(s.mean, 2.5);
        assert_abs_diff_eq!(s.std, (5.0f64 / 3.0).sqrt(), epsilon = 1e-15);
        assert_eq!(MeanStd::of(&[0.7]).std, 0.0);
    }
}
