use serde::{Deserialize, Serialize};

use crate::datasets::SingleView;
use crate::encoders::TrainedModel;
use crate::error::{Error, Result};
use crate::training::predict_labels;

/// Predicted and true labels of one model over a split, in sample-id order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub sample_ids: Vec<usize>,
    pub predicted: Vec<usize>,
    pub truth: Vec<usize>,
    pub model_id: String,
}

impl PredictionSet {
    pub fn new(sample_ids: Vec<usize>, predicted: Vec<usize>, truth: Vec<usize>, model_id: impl Into<String>) -> Result<Self> {
        if predicted.len() != sample_ids.len() || truth.len() != sample_ids.len() {
            return Err(Error::Shape(format!(
                "{} sample ids, {} predictions, {} labels",
                sample_ids.len(),
                predicted.len(),
                truth.len()
            )));
        }
        Ok(PredictionSet { sample_ids, predicted, truth, model_id: model_id.into() })
    }

    /// Canonical ids `0..n`.
    pub fn from_labels(predicted: Vec<usize>, truth: Vec<usize>, model_id: impl Into<String>) -> Result<Self> {
        Self::new((0..predicted.len()).collect(), predicted, truth, model_id)
    }

    pub fn len(&self) -> usize {
        self.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sample_ids.is_empty()
    }
}

/// Eval-mode predictions of `model` on every sample of `view`.
pub fn predict(model: &TrainedModel, view: &SingleView, model_id: impl Into<String>) -> Result<PredictionSet> {
    PredictionSet::from_labels(predict_labels(model, view)?, view.labels.clone(), model_id)
}

/// Fraction of samples predicted correctly.
pub fn accuracy(preds: &PredictionSet) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::InvalidInput("accuracy of an empty prediction set".into()));
    }
    let hits = preds.predicted.iter().zip(&preds.truth).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Fraction of samples on which both models predict the true label.
pub fn mutual_agreement(i: &PredictionSet, j: &PredictionSet) -> Result<f64> {
    if i.sample_ids != j.sample_ids {
        return Err(Error::InvalidInput(format!("prediction sets '{}' and '{}' cover different samples", i.model_id, j.model_id)));
    }
    if i.truth != j.truth {
        return Err(Error::InvalidInput(format!("prediction sets '{}' and '{}' disagree on true labels", i.model_id, j.model_id)));
    }
    if i.is_empty() {
        return Err(Error::InvalidInput("agreement of empty prediction sets".into()));
    }
    let both = (0..i.len()).filter(|&k| i.predicted[k] == i.truth[k] && j.predicted[k] == i.truth[k]).count();
    Ok(both as f64 / i.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(pred: &[usize], truth: &[usize]) -> PredictionSet {
        PredictionSet::from_labels(pred.to_vec(), truth.to_vec(), "m").unwrap()
    }

    #[test]
    fn examples() {
        assert_eq!(accuracy(&set(&[1, 2, 3], &[1, 2, 3])).unwrap(), 1.0);
        assert_eq!(accuracy(&set(&[1, 2, 3], &[1, 2, 0])).unwrap(), 2.0 / 3.0);
        let y = [1, 2, 3];
        assert_eq!(mutual_agreement(&set(&[1, 2, 3], &y), &set(&[1, 0, 3], &y)).unwrap(), 2.0 / 3.0);
        assert_eq!(mutual_agreement(&set(&y, &y), &set(&y, &y)).unwrap(), 1.0);
    }

    #[test]
    fn misalignment_is_an_error() {
        assert!(PredictionSet::from_labels(vec![1], vec![1, 2], "m").is_err());
        let a = set(&[1, 2], &[1, 2]);
        let mut b = a.clone();
        b.sample_ids = vec![0, 2];
        assert!(mutual_agreement(&a, &b).is_err());
        let mut c = a.clone();
        c.truth = vec![1, 1];
        assert!(mutual_agreement(&a, &c).is_err());
        assert!(accuracy(&set(&[], &[])).is_err());
    }

    proptest! {
        #[test]
        fn agreement_bounded_by_accuracies(
            rows in proptest::collection::vec((0usize..4, 0usize..4, 0usize..4), 1..40),
        ) {
            let truth: Vec<_> = rows.iter().map(|r| r.0).collect();
            let a = set(&rows.iter().map(|r| r.1).collect::<Vec<_>>(), &truth);
            let b = set(&rows.iter().map(|r| r.2).collect::<Vec<_>>(), &truth);
            let m = mutual_agreement(&a, &b).unwrap();
            prop_assert!(m <= accuracy(&a).unwrap().min(accuracy(&b).unwrap()));
        }
    }
}
