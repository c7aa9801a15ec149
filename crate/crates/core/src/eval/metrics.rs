use serde::Serialize;

use crate::data::{Dataset, Split};
use crate::error::{Error, Result};
use crate::models::Network;

/// Accuracy, per-class accuracy and confusion matrix of one split.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub split: Split,
    pub num_classes: usize,
    pub total: usize,
    pub loss: f64,
    pub accuracy: f64,
    /// `None` for classes with no samples in the split.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub ids: Vec<String>,
    pub predictions: Vec<usize>,
}

impl EvalReport {
    pub fn from_predictions(
        split: Split,
        num_classes: usize,
        ids: Vec<String>,
        labels: &[usize],
        predictions: Vec<usize>,
        loss: f64,
    ) -> Result<Self> {
        if labels.len() != predictions.len() || labels.len() != ids.len() {
            return Err(Error::shape("predictions", &[labels.len()], &[predictions.len()]));
        }
        if labels.is_empty() {
            return Err(Error::EmptySplit(split.to_string()));
        }
        let mut confusion = vec![vec![0usize; num_classes]; num_classes];
        for (&t, &p) in labels.iter().zip(&predictions) {
            if t >= num_classes || p >= num_classes {
                return Err(Error::LabelOutOfRange {
                    label: t.max(p),
                    num_classes,
                });
            }
            confusion[t][p] += 1;
        }
        let correct: usize = (0..num_classes).map(|c| confusion[c][c]).sum();
        let per_class_accuracy = confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let n: usize = row.iter().sum();
                (n > 0).then(|| row[c] as f64 / n as f64)
            })
            .collect();
        Ok(EvalReport {
            split,
            num_classes,
            total: labels.len(),
            loss,
            accuracy: correct as f64 / labels.len() as f64,
            per_class_accuracy,
            confusion,
            ids,
            predictions,
        })
    }

    pub fn confusion_csv(&self) -> String {
        let mut s = String::from("true\\pred");
        for c in 0..self.num_classes {
            s.push_str(&format!(",{c}"));
        }
        s.push('\n');
        for (t, row) in self.confusion.iter().enumerate() {
            s.push_str(&t.to_string());
            for v in row {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }

    pub fn to_text(&self) -> String {
        let mut s = format!(
            "split {}  samples {}  loss {:.4}  accuracy {:.4}\n",
            self.split, self.total, self.loss, self.accuracy
        );
        s.push_str("class  accuracy\n");
        for (c, a) in self.per_class_accuracy.iter().enumerate() {
            match a {
                Some(a) => s.push_str(&format!("{c:>5}  {a:.4}\n")),
                None => s.push_str(&format!("{c:>5}  -\n")),
            }
        }
        s
    }
}

/// Evaluates `net` on one split; batches run in parallel.
pub fn evaluate(net: &Network, data: &Dataset, split: Split, batch_size: usize) -> Result<EvalReport> {
    let examples = data.split(split);
    if examples.is_empty() {
        return Err(Error::EmptySplit(split.to_string()));
    }
    let score = net.score(&examples, batch_size)?;
    let labels: Vec<usize> = examples.iter().map(|e| e.label).collect();
    let ids = examples.iter().map(|e| e.id.clone()).collect();
    EvalReport::from_predictions(split, data.num_classes, ids, &labels, score.predictions, score.loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confusion_and_per_class() {
        let ids = (0..5).map(|i| i.to_string()).collect();
        let r = EvalReport::from_predictions(Split::Test, 3, ids, &[0, 0, 1, 1, 1], vec![0, 1, 1, 1, 0], 0.0).unwrap();
        assert_eq!(r.confusion, vec![vec![1, 1, 0], vec![1, 2, 0], vec![0, 0, 0]]);
        assert!((r.accuracy - 0.6).abs() < 1e-15);
        assert_eq!(r.per_class_accuracy, vec![Some(0.5), Some(2.0 / 3.0), None]);
        assert!(r.confusion_csv().starts_with("true\\pred,0,1,2\n0,1,1,0\n"));
    }
}
