//! Stratified train/test split.

use rand::seq::SliceRandom;

use super::{class_counts, FeatureMatrix};
use crate::error::{Error, Result};
use crate::seed::{self, Purpose};

/// Splits row indices class by class.
///
/// Each class with `n` rows contributes `round(fraction * n)` rows to the
/// training side, clamped to `[1, n - 1]` so both sides see every class.
/// Returned index lists are sorted ascending.
pub fn stratified_split(
    labels: &[usize],
    num_classes: usize,
    fraction: f64,
    seed: u64,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::validation(format!("split fraction {fraction} must lie in (0, 1)")));
    }
    let counts = class_counts(labels, num_classes);
    if let Some(k) = counts.iter().position(|&n| n < 2) {
        return Err(Error::Split(format!(
            "class {k} has {} row(s); at least 2 are needed to appear on both sides",
            counts[k]
        )));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for k in 0..num_classes {
        let mut rows: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == k).collect();
        let n = rows.len();
        let take = ((fraction * n as f64).round() as usize).clamp(1, n - 1);
        let mut rng = seed::rng(seed::derive(seed, Purpose::Split, 0, k as u64));
        rows.shuffle(&mut rng);
        train.extend_from_slice(&rows[..take]);
        test.extend_from_slice(&rows[take..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

pub fn split_train_test(matrix: &FeatureMatrix, fraction: f64, seed: u64) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let (train, test) = stratified_split(&matrix.y, matrix.num_classes, fraction, seed)?;
    Ok((matrix.select(&train), matrix.select(&test)))
}
