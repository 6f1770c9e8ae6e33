//! Gaussian class blobs standing in for flow-record datasets.
//!
//! Class `k` of `K` is drawn from `N(mu_k * 1, I)` with the level shift
//! `mu_k = separation * (k - (K - 1) / 2)`, so adjacent classes sit
//! `separation` standard deviations apart along every feature. A shift of
//! the whole feature vector survives global average pooling, which keeps the
//! classes separable for the convolutional model.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::FeatureMatrix;
use crate::error::{Error, Result};
use crate::nn::Tensor;
use crate::seed::{self, Purpose};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub features: usize,
    pub rows: usize,
    /// Distance between adjacent class means, in standard deviations.
    pub separation: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_classes: 4,
            features: 8,
            rows: 2000,
            separation: 4.0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 || self.features == 0 || self.rows == 0 {
            return Err(Error::validation(
                "synthetic data needs >= 2 classes and positive feature and row counts",
            ));
        }
        if self.rows < self.num_classes {
            return Err(Error::validation(format!(
                "{} rows cannot cover {} classes",
                self.rows, self.num_classes
            )));
        }
        if !(self.separation >= 0.0 && self.separation.is_finite()) {
            return Err(Error::validation("separation must be finite and non-negative"));
        }
        Ok(())
    }

    pub fn class_mean(&self, class: usize) -> f64 {
        self.separation * (class as f64 - (self.num_classes as f64 - 1.0) / 2.0)
    }
}

/// Balanced classes (the first `rows % K` classes get one extra row), rows
/// in shuffled order.
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<FeatureMatrix> {
    spec.validate()?;
    let k = spec.num_classes;
    let mut rng = seed::rng(seed::derive(seed, Purpose::Synthetic, 0, 0));
    let mut y: Vec<usize> = (0..spec.rows).map(|i| i % k).collect();
    y.shuffle(&mut rng);
    let mut data = Vec::with_capacity(spec.rows * spec.features);
    for &class in &y {
        let mu = spec.class_mean(class);
        for _ in 0..spec.features {
            let z: f64 = rng.sample(StandardNormal);
            data.push(mu + z);
        }
    }
    FeatureMatrix::new(Tensor::new(vec![spec.rows, spec.features], data)?, y, k)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(k: usize, f: usize, rows: usize, sep: f64) -> SyntheticSpec {
        SyntheticSpec {
            num_classes: k,
            features: f,
            rows,
            separation: sep,
        }
    }

    #[test]
    fn classes_are_balanced() {
        let m = generate_synthetic(&spec(4, 8, 400, 4.0), 1).unwrap();
        assert_eq!(m.class_counts(), vec![100; 4]);
        let m = generate_synthetic(&spec(4, 8, 402, 4.0), 1).unwrap();
        assert_eq!(m.class_counts(), vec![101, 101, 100, 100]);
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate_synthetic(&spec(3, 5, 60, 2.0), 11).unwrap();
        assert_eq!(a, generate_synthetic(&spec(3, 5, 60, 2.0), 11).unwrap());
        assert_ne!(a, generate_synthetic(&spec(3, 5, 60, 2.0), 12).unwrap());
    }

    #[test]
    fn invalid_dimensions() {
        assert!(generate_synthetic(&spec(4, 0, 10, 1.0), 0).is_err());
        assert!(generate_synthetic(&spec(4, 2, 3, 1.0), 0).is_err());
        assert!(generate_synthetic(&spec(1, 2, 3, 1.0), 0).is_err());
    }

    fn threshold_accuracy(m: &FeatureMatrix, s: &SyntheticSpec) -> f64 {
        // nearest class mean on the row average
        let correct = (0..m.rows())
            .filter(|&i| {
                let avg = m.x.row(i).iter().sum::<f64>() / m.features() as f64;
                let guess = (0..s.num_classes)
                    .min_by(|&a, &b| (avg - s.class_mean(a)).abs().total_cmp(&(avg - s.class_mean(b)).abs()))
                    .unwrap();
                guess == m.y[i]
            })
            .count();
        correct as f64 / m.rows() as f64
    }

    #[test]
    fn six_sigma_is_separable_by_threshold() {
        // single feature so the row average is the raw draw; 6 sigma apart
        // puts the threshold 3 sigma from each mean (error ~ 0.13%)
        let s = spec(2, 1, 4000, 6.0);
        let m = generate_synthetic(&s, 5).unwrap();
        assert!(threshold_accuracy(&m, &s) >= 0.99);
    }

    #[test]
    fn zero_separation_is_chance() {
        let s = spec(4, 4, 4000, 0.0);
        let m = generate_synthetic(&s, 5).unwrap();
        for k in 0..4 {
            assert_eq!(s.class_mean(k), 0.0);
        }
        // every guess goes to class 0 (ties), so accuracy equals its share
        assert!((threshold_accuracy(&m, &s) - 0.25).abs() < 0.03);
    }
}
