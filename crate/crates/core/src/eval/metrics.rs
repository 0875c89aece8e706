use serde::{Deserialize, Serialize};

use super::EvalError;

/// Counts with claim (label 1) as the positive class.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn from_predictions(predictions: &[usize], golds: &[usize]) -> Result<Self, EvalError> {
        if predictions.len() != golds.len() {
            return Err(EvalError::LengthMismatch {
                left: predictions.len(),
                right: golds.len(),
            });
        }
        let mut m = Self::default();
        for (&p, &g) in predictions.iter().zip(golds) {
            match (p, g) {
                (1, 1) => m.tp += 1,
                (1, 0) => m.fp += 1,
                (0, 1) => m.fn_ += 1,
                (0, 0) => m.tn += 1,
                _ => return Err(EvalError::BadLabel(p.max(g))),
            }
        }
        Ok(m)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Scores {
    /// Scores of a class from its true positives, false positives and false
    /// negatives; undefined ratios are 0.
    pub fn from_counts(tp: u64, fp: u64, fn_: u64) -> Self {
        let precision = ratio(tp, tp + fp);
        let recall = ratio(tp, tp + fn_);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        Self { precision, recall, f1 }
    }

    fn map2(a: Self, b: Self, f: impl Fn(f64, f64) -> f64) -> Self {
        Self {
            precision: f(a.precision, b.precision),
            recall: f(a.recall, b.recall),
            f1: f(a.f1, b.f1),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PerClass {
    pub claim: Scores,
    pub non_claim: Scores,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub per_class: PerClass,
    /// Unweighted mean of the two classes.
    #[serde(rename = "macro")]
    pub macro_avg: Scores,
}

impl EvalReport {
    pub fn from_confusion(m: &ConfusionMatrix) -> Self {
        let claim = Scores::from_counts(m.tp, m.fp, m.fn_);
        let non_claim = Scores::from_counts(m.tn, m.fn_, m.fp);
        Self {
            per_class: PerClass { claim, non_claim },
            macro_avg: Scores::map2(claim, non_claim, |a, b| (a + b) / 2.0),
        }
    }

    fn values(&self) -> [f64; 9] {
        let PerClass { claim: c, non_claim: n } = self.per_class;
        let m = self.macro_avg;
        [c.precision, c.recall, c.f1, n.precision, n.recall, n.f1, m.precision, m.recall, m.f1]
    }

    fn from_values(v: [f64; 9]) -> Self {
        let s = |i: usize| Scores {
            precision: v[i],
            recall: v[i + 1],
            f1: v[i + 2],
        };
        Self {
            per_class: PerClass {
                claim: s(0),
                non_claim: s(3),
            },
            macro_avg: s(6),
        }
    }
}

pub fn compute_metrics(predictions: &[usize], golds: &[usize]) -> Result<EvalReport, EvalError> {
    if golds.is_empty() {
        return Err(EvalError::Empty("predictions"));
    }
    Ok(EvalReport::from_confusion(&ConfusionMatrix::from_predictions(predictions, golds)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: EvalReport,
    /// Population standard deviation of every metric.
    pub sd: EvalReport,
    pub n: usize,
}

/// Metric-wise mean and population standard deviation.
pub fn aggregate_runs(reports: &[EvalReport]) -> Result<Aggregate, EvalError> {
    if reports.is_empty() {
        return Err(EvalError::Empty("reports"));
    }
    let n = reports.len() as f64;
    // offsets from the first report keep identical inputs exact
    let first = reports[0].values();
    let mut mean = first;
    for r in reports {
        for ((m, v), f) in mean.iter_mut().zip(r.values()).zip(first) {
            *m += (v - f) / n;
        }
    }
    let mut var = [0.0; 9];
    for r in reports {
        for ((s, v), m) in var.iter_mut().zip(r.values()).zip(mean) {
            *s += (v - m) * (v - m) / n;
        }
    }
    Ok(Aggregate {
        mean: EvalReport::from_values(mean),
        sd: EvalReport::from_values(var.map(f64::sqrt)),
        n: reports.len(),
    })
}
