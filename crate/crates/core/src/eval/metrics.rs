use crate::error::{Error, Result};

/// Square count matrix; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        Self {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Usage("confusion matrix must be square".into()));
        }
        Ok(Self {
            num_classes: n,
            counts: rows.concat(),
        })
    }

    pub fn from_pairs(num_classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut m = Self::new(num_classes);
        for (t, p) in pairs {
            m.record(t, p);
        }
        m
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.num_classes + predicted] += 1;
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.num_classes + predicted]
    }

    pub fn row(&self, truth: usize) -> &[u64] {
        &self.counts[truth * self.num_classes..(truth + 1) * self.num_classes]
    }

    pub fn support(&self, class: usize) -> u64 {
        self.row(class).iter().sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// `2·TP / (2·TP + FP + FN)` per class, 0 when the denominator is 0.
    pub fn per_class_f1(&self) -> Vec<f64> {
        let n = self.num_classes;
        (0..n)
            .map(|c| {
                let tp = self.get(c, c);
                let fn_ = self.support(c) - tp;
                let fp = (0..n).map(|t| self.get(t, c)).sum::<u64>() - tp;
                let denom = 2 * tp + fp + fn_;
                if denom == 0 {
                    0.0
                } else {
                    (2 * tp) as f64 / denom as f64
                }
            })
            .collect()
    }
}

/// Unweighted mean of per-class F1 over classes present in the test labels.
pub fn macro_f1(confusion: &ConfusionMatrix) -> Result<f64> {
    if confusion.num_classes() == 0 {
        return Err(Error::Usage("macro F1 of an empty confusion matrix".into()));
    }
    let f1 = confusion.per_class_f1();
    let present: Vec<f64> = (0..confusion.num_classes())
        .filter(|&c| confusion.support(c) > 0)
        .map(|c| f1[c])
        .collect();
    if present.is_empty() {
        return Err(Error::Usage(
            "macro F1 of a confusion matrix with no samples".into(),
        ));
    }
    Ok(present.iter().sum::<f64>() / present.len() as f64)
}

/// Evaluation of one agent at one epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRecord {
    pub agent_id: usize,
    pub epoch: u64,
    pub macro_f1: f64,
    pub per_class_f1: Vec<f64>,
    pub confusion: ConfusionMatrix,
    pub mean_loss: f64,
}
