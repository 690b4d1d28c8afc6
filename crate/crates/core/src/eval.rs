//! Accuracy metrics and the federated-vs-pooled accuracy gap.

use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{shape, Result};
use crate::model::{cross_entropy, forward, predict, ModelSpec};
use crate::params::ParamVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub num_samples: usize,
    pub accuracy: f64,
    /// `None` for classes that do not occur in the evaluation set.
    pub per_label_accuracy: Vec<Option<f64>>,
    /// `confusion[true_class][predicted_class]`.
    pub confusion: Vec<Vec<u64>>,
    pub mean_loss: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon_gap: Option<GapCheck>,
}

impl EvalReport {
    /// Builds the counting part of a report from parallel label/prediction lists.
    pub fn from_predictions(
        labels: &[usize],
        predictions: &[usize],
        num_classes: usize,
        mean_loss: f64,
    ) -> Result<Self> {
        if labels.is_empty() || labels.len() != predictions.len() {
            return Err(shape("need equally many labels and predictions, at least one"));
        }
        let mut confusion = vec![vec![0u64; num_classes]; num_classes];
        for (&y, &p) in labels.iter().zip(predictions) {
            if y >= num_classes || p >= num_classes {
                return Err(shape(format!("class index out of range for {num_classes} classes")));
            }
            confusion[y][p] += 1;
        }
        let correct: u64 = (0..num_classes).map(|c| confusion[c][c]).sum();
        let per_label_accuracy = confusion
            .iter()
            .enumerate()
            .map(|(c, row)| {
                let total: u64 = row.iter().sum();
                (total > 0).then(|| row[c] as f64 / total as f64)
            })
            .collect();
        Ok(Self {
            num_samples: labels.len(),
            accuracy: correct as f64 / labels.len() as f64,
            per_label_accuracy,
            confusion,
            mean_loss,
            epsilon_gap: None,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.confusion.len()
    }

    /// Row sums of the confusion matrix, i.e. the evaluation set's class counts.
    pub fn class_totals(&self) -> Vec<u64> {
        self.confusion.iter().map(|row| row.iter().sum()).collect()
    }
}

pub fn evaluate(spec: &ModelSpec, params: &ParamVector, dataset: &LabeledDataset) -> Result<EvalReport> {
    if dataset.num_classes() != spec.num_classes() {
        return Err(shape(format!(
            "dataset has {} classes, model has {}",
            dataset.num_classes(),
            spec.num_classes()
        )));
    }
    let logits = forward(spec, params, &dataset.as_batch())?;
    let mut predictions = Vec::with_capacity(dataset.len());
    let mut total_loss = 0.0;
    for (row, &y) in logits.iter_rows().zip(dataset.labels()) {
        predictions.push(predict(row)?);
        total_loss += cross_entropy(row, y);
    }
    EvalReport::from_predictions(
        dataset.labels(),
        &predictions,
        spec.num_classes(),
        total_loss / dataset.len() as f64,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapCheck {
    pub v_fed: f64,
    pub v_sum: f64,
    pub gap: f64,
    pub epsilon: f64,
    pub pass: bool,
}

/// `|v_fed - v_sum|`, rounded to 12 decimal places so that decimal inputs
/// give their decimal difference, and a strict `gap < epsilon` verdict.
pub fn epsilon_gap(v_fed: f64, v_sum: f64, epsilon: f64) -> GapCheck {
    let gap = ((v_fed - v_sum).abs() * 1e12).round() / 1e12;
    GapCheck {
        v_fed,
        v_sum,
        gap,
        epsilon,
        pass: gap < epsilon,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn counting_example() {
        let r = EvalReport::from_predictions(&[0, 0, 1], &[0, 1, 1], 2, 0.0).unwrap();
        assert!((r.accuracy - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.per_label_accuracy, vec![Some(0.5), Some(1.0)]);
        assert_eq!(r.confusion, vec![vec![1, 1], vec![0, 1]]);
    }

    #[test]
    fn constant_predictor() {
        let labels = [0, 1, 2, 0, 1, 2];
        let r = EvalReport::from_predictions(&labels, &[0; 6], 3, 0.0).unwrap();
        assert!((r.accuracy - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(r.per_label_accuracy, vec![Some(1.0), Some(0.0), Some(0.0)]);
    }

    #[test]
    fn absent_class_is_undefined() {
        let r = EvalReport::from_predictions(&[0, 0], &[0, 1], 3, 0.0).unwrap();
        assert_eq!(r.per_label_accuracy[1], None);
        assert_eq!(r.per_label_accuracy[2], None);
    }

    #[test]
    fn perfect_classifier_on_real_model() {
        // class c has a huge bias on its own indicator feature
        let spec = ModelSpec::softmax_regression(2, 2);
        let params = ParamVector::new(vec![50.0, 0.0, 0.0, 50.0, 0.0, 0.0]);
        let ds = LabeledDataset::new(vec![1.0, 0.0, 0.0, 1.0, 2.0, 0.0], vec![0, 1, 0], 2, 2).unwrap();
        let r = evaluate(&spec, &params, &ds).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.confusion, vec![vec![2, 0], vec![0, 1]]);
        assert!(r.mean_loss < 1e-12);
        assert_eq!(r.class_totals(), vec![2, 1]);
    }

    #[test]
    fn class_mismatch_is_a_shape_error() {
        let spec = ModelSpec::softmax_regression(1, 3);
        let ds = LabeledDataset::new(vec![1.0], vec![0], 1, 2).unwrap();
        assert!(evaluate(&spec, &ParamVector::zeros(6), &ds).is_err());
    }

    #[test]
    fn gap_examples() {
        let g = epsilon_gap(0.9126, 0.9107, 0.05);
        assert_eq!(g.gap, 0.0019);
        assert!(g.pass);
        let g = epsilon_gap(0.7, 0.7, 1e-9);
        assert_eq!(g.gap, 0.0);
        assert!(g.pass);
        let g = epsilon_gap(0.9, 0.8, 0.1);
        assert_eq!(g.gap, 0.1);
        assert!(!g.pass);
    }

    proptest! {
        #[test]
        fn report_invariants(pairs in prop::collection::vec((0usize..4, 0usize..4), 1..200)) {
            let (labels, preds): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let r = EvalReport::from_predictions(&labels, &preds, 4, 0.0).unwrap();
            let total: u64 = r.confusion.iter().flatten().sum();
            prop_assert_eq!(total as usize, labels.len());
            let counts = crate::data::class_counts(labels.iter().copied(), 4);
            prop_assert_eq!(r.class_totals(), counts.iter().map(|&c| c as u64).collect::<Vec<_>>());
            let weighted: f64 = r.per_label_accuracy.iter().zip(&counts)
                .map(|(a, &n)| a.unwrap_or(0.0) * n as f64).sum::<f64>() / labels.len() as f64;
            prop_assert!((weighted - r.accuracy).abs() < 1e-12);
            prop_assert!(r.per_label_accuracy.iter().flatten().all(|a| (0.0..=1.0).contains(a)));
        }

        #[test]
        fn gap_is_symmetric(a in 0.0f64..1.0, b in 0.0f64..1.0, eps in 1e-6f64..1.0) {
            let x = epsilon_gap(a, b, eps);
            let y = epsilon_gap(b, a, eps);
            prop_assert_eq!(x.gap, y.gap);
            prop_assert_eq!(x.pass, y.pass);
            prop_assert!(x.gap >= 0.0);
        }
    }
}
