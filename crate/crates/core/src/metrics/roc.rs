use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// A sample is called positive when its score is `>= threshold`.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub class: usize,
    /// Ordered by decreasing threshold, so both rates rise along the list.
    /// The first point is the `+inf` sentinel at (0, 0); the last, at the
    /// smallest score, is (1, 1).
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// One-vs-rest ROC curve of `class` from per-sample scores.
///
/// The area is integrated with the trapezoid rule over the swept points,
/// which counts tied positive/negative pairs as half concordant.
pub fn roc(scores: &[f64], labels: &[usize], class: usize) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(Error::validation("one score per label is required"));
    }
    if let Some(s) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
        return Err(Error::validation(format!("score {s} outside [0, 1]")));
    }
    let positives = labels.iter().filter(|&&y| y == class).count();
    let negatives = labels.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::RocUndefined(format!(
            "class {class} has {positives} positive and {negatives} negative samples"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        while i < order.len() && scores[order[i]] == threshold {
            if labels[order[i]] == class {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint {
            threshold,
            fpr: fp as f64 / negatives as f64,
            tpr: tp as f64 / positives as f64,
        });
    }
    let auc = points
        .windows(2)
        .map(|w| (w[1].fpr - w[0].fpr) * (w[1].tpr + w[0].tpr) / 2.0)
        .sum();
    Ok(RocCurve { class, points, auc })
}

/// Probability that a random positive outscores a random negative (ties
/// count one half), by enumerating every pair.
pub fn mann_whitney_auc(scores: &[f64], labels: &[usize], class: usize) -> f64 {
    let (mut wins, mut pairs) = (0.0, 0usize);
    for (i, &si) in scores.iter().enumerate() {
        if labels[i] != class {
            continue;
        }
        for (j, &sj) in scores.iter().enumerate() {
            if labels[j] == class {
                continue;
            }
            pairs += 1;
            wins += if si > sj {
                1.0
            } else if si == sj {
                0.5
            } else {
                0.0
            };
        }
    }
    wins / pairs as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn separating_scores() {
        let c = roc(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0], 1).unwrap();
        assert_eq!(c.auc, 1.0);
        let first = c.points[0];
        let last = *c.points.last().unwrap();
        assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
        assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
    }

    #[test]
    fn constant_scores_are_chance() {
        assert_eq!(roc(&[0.5; 6], &[0, 1, 0, 1, 1, 0], 1).unwrap().auc, 0.5);
    }

    #[test]
    fn hand_enumerated_example() {
        // positives 0.9, 0.4; negatives 0.8, 0.3: pairs (0.9>0.8), (0.9>0.3),
        // (0.4<0.8), (0.4>0.3) -> 3 of 4 concordant
        let c = roc(&[0.9, 0.8, 0.4, 0.3], &[1, 0, 1, 0], 1).unwrap();
        assert_eq!(c.auc, 0.75);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(roc(&[0.1, 0.2], &[1, 1], 1), Err(Error::RocUndefined(_))));
        assert!(roc(&[1.5, 0.2], &[1, 0], 1).is_err());
    }

    proptest! {
        #[test]
        fn auc_equals_pairwise_concordance(
            samples in proptest::collection::vec((0u8..=20, 0usize..3), 2..100),
        ) {
            // coarse scores force plenty of ties
            let scores: Vec<f64> = samples.iter().map(|&(s, _)| s as f64 / 20.0).collect();
            let labels: Vec<usize> = samples.iter().map(|&(_, y)| y).collect();
            let pos = labels.iter().filter(|&&y| y == 1).count();
            prop_assume!(pos > 0 && pos < labels.len());
            let curve = roc(&scores, &labels, 1).unwrap();
            prop_assert!((curve.auc - mann_whitney_auc(&scores, &labels, 1)).abs() <= 1e-12);
            for w in curve.points.windows(2) {
                prop_assert!(w[0].threshold > w[1].threshold);
                prop_assert!(w[0].fpr <= w[1].fpr && w[0].tpr <= w[1].tpr);
            }
        }
    }
}
