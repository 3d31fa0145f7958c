//! Evaluation metrics for assembled sequences: order-insensitive IoU,
//! position-wise sequence matching (SMS), and Recall@K over the beam's
//! top-K output sequences.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Reference shot sequence; ids are unique within the sequence.
#[derive(Debug, Clone)]
pub struct GroundTruth {
    shots: Vec<String>,
}

impl GroundTruth {
    pub fn new(shots: Vec<String>) -> Result<Self> {
        if shots.is_empty() {
            return Err(Error::Param("ground truth must be non-empty".into()));
        }
        let unique: HashSet<&String> = shots.iter().collect();
        if unique.len() != shots.len() {
            return Err(Error::Param("ground-truth shot ids must be unique".into()));
        }
        Ok(Self { shots })
    }

    pub fn shots(&self) -> &[String] {
        &self.shots
    }

    pub fn len(&self) -> usize {
        self.shots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shots.is_empty()
    }
}

/// Sequence Matching Score: fraction of ground-truth positions whose
/// predicted shot matches exactly, comparing up to the shorter length but
/// always dividing by the ground-truth length.
pub fn sms(gt: &GroundTruth, predicted: &[String]) -> f64 {
    let upto = gt.len().min(predicted.len());
    let matches = (0..upto).filter(|&i| gt.shots[i] == predicted[i]).count();
    matches as f64 / gt.len() as f64
}

/// Order-insensitive overlap between the predicted and ground-truth shot
/// sets: |intersection| / |union|.
pub fn iou(gt: &GroundTruth, predicted: &[String]) -> f64 {
    let gt_set: HashSet<&String> = gt.shots.iter().collect();
    let pred_set: HashSet<&String> = predicted.iter().collect();
    let intersection = gt_set.intersection(&pred_set).count();
    let union = gt_set.union(&pred_set).count();
    if union == 0 {
        0.0
    } else {
        intersection as f64 / union as f64
    }
}

/// Recall@K over the top-K predicted sequences: the fraction of ground-truth
/// positions whose shot appears at that position in at least one of them.
pub fn recall_at_k(gt: &GroundTruth, top_sequences: &[Vec<String>]) -> Result<f64> {
    if top_sequences.is_empty() {
        return Err(Error::Param("recall_at_k needs at least one sequence".into()));
    }
    let matched = (0..gt.len())
        .filter(|&i| {
            top_sequences
                .iter()
                .any(|seq| seq.get(i).is_some_and(|s| *s == gt.shots[i]))
        })
        .count();
    Ok(matched as f64 / gt.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(names: &[&str]) -> Vec<String> {
        names.iter().map(|s| s.to_string()).collect()
    }

    fn gt(names: &[&str]) -> GroundTruth {
        GroundTruth::new(ids(names)).unwrap()
    }

    #[test]
    fn ground_truth_validation() {
        assert!(GroundTruth::new(vec![]).is_err());
        assert!(GroundTruth::new(ids(&["a", "a"])).is_err());
        assert!(GroundTruth::new(ids(&["a", "b"])).is_ok());
    }

    #[test]
    fn sms_examples() {
        let g = gt(&["a", "b", "c", "d"]);
        assert_eq!(sms(&g, &ids(&["a", "b", "c", "d"])), 1.0);
        assert_eq!(sms(&g, &ids(&["a", "x", "c", "y"])), 0.5);
        // shorter prediction: min(n, n~) positions compared, divided by n
        assert_eq!(sms(&g, &ids(&["a", "b"])), 0.5);
        assert_eq!(sms(&g, &[]), 0.0);
    }

    #[test]
    fn iou_examples() {
        let g = gt(&["a", "b", "c", "d"]);
        assert_eq!(iou(&g, &ids(&["d", "c", "b", "a"])), 1.0); // order-insensitive
        assert!((iou(&g, &ids(&["a", "b", "x", "y"])) - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(iou(&g, &ids(&["x", "y", "z"])), 0.0);
    }

    #[test]
    fn recall_examples() {
        let g = gt(&["a", "b"]);
        assert_eq!(recall_at_k(&g, &[ids(&["a", "b"])]).unwrap(), 1.0);
        // position 1 matched by the first sequence, position 2 by the second
        let seqs = vec![ids(&["a", "x"]), ids(&["y", "b"])];
        assert_eq!(recall_at_k(&g, &seqs).unwrap(), 1.0);
        assert!(recall_at_k(&g, &[]).is_err());
    }

    #[test]
    fn recall_at_one_equals_sms_for_full_length_predictions() {
        let g = gt(&["a", "b", "c"]);
        for pred in [ids(&["a", "b", "c"]), ids(&["a", "x", "c"]), ids(&["x", "y", "z"])] {
            assert_eq!(recall_at_k(&g, std::slice::from_ref(&pred)).unwrap(), sms(&g, &pred));
        }
    }

    #[test]
    fn recall_monotone_in_k() {
        let g = gt(&["a", "b", "c", "d"]);
        let seqs = [
            ids(&["a", "x", "x", "x"]),
            ids(&["x", "b", "x", "x"]),
            ids(&["x", "x", "c", "x"]),
        ];
        let mut last = 0.0;
        for k in 1..=seqs.len() {
            let r = recall_at_k(&g, &seqs[..k]).unwrap();
            assert!(r >= last);
            last = r;
        }
        assert_eq!(last, 0.75);
    }

    #[test]
    fn sms_bounded_by_recall_of_superset() {
        let g = gt(&["a", "b", "c"]);
        let pred = ids(&["a", "x", "c"]);
        let extra = ids(&["x", "b", "x"]);
        let r = recall_at_k(&g, &[pred.clone(), extra]).unwrap();
        assert!(sms(&g, &pred) <= r);
    }
}
