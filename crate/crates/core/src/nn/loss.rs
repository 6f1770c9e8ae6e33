//! SoftMax, Gumbel-SoftMax and the hybrid classification loss.
//!
//! The Gumbel-SoftMax relaxation of a row of logits `z` is
//! `y_k = exp((log p_k + g_k) / T) / sum_j exp((log p_j + g_j) / T)` with
//! `p = softmax(z)` and `g_k = -log(-log u_k)`, `u_k ~ U(0, 1)`. Because
//! `log p_k = z_k - logsumexp(z)` and the shift cancels, this is evaluated as
//! `softmax((z + g) / T)`. The hybrid loss mixes plain cross-entropy with the
//! cross-entropy of that relaxation:
//! `alpha * CE(softmax(z)) + (1 - alpha) * CE(gumbel_softmax(z))`.

use rand::Rng;
use rand_distr::Open01;
use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GumbelMode {
    /// Fresh Gumbel noise per element, drawn from the supplied seed.
    Stochastic,
    /// All noise fixed at zero.
    Deterministic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HybridLossConfig {
    pub alpha: f64,
    pub temperature: f64,
    pub gumbel_mode: GumbelMode,
}

impl Default for HybridLossConfig {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            temperature: 0.5,
            gumbel_mode: GumbelMode::Stochastic,
        }
    }
}

impl HybridLossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::validation(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        check_temperature(self.temperature)
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if t > 0.0 && t.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(format!("temperature must be > 0, got {t}")))
    }
}

fn check_logits(logits: &Tensor) -> Result<(usize, usize)> {
    match *logits.shape() {
        [b, k] if logits.all_finite() => Ok((b, k)),
        [_, _] => Err(Error::validation("logits contain non-finite values")),
        ref s => Err(Error::structural(format!("logits must be [B, K], got {s:?}"))),
    }
}

/// Gumbel(0, 1) noise, one value per logit, row-major.
pub fn gumbel_noise(len: usize, mode: GumbelMode, seed: u64) -> Vec<f64> {
    match mode {
        GumbelMode::Deterministic => vec![0.0; len],
        GumbelMode::Stochastic => {
            let mut rng = seed::rng(seed);
            (0..len)
                .map(|_| {
                    let u: f64 = rng.sample(Open01);
                    -(-u.ln()).ln()
                })
                .collect()
        }
    }
}

fn softmax_into(scores: &[f64], out: &mut [f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &s) in out.iter_mut().zip(scores) {
        *o = (s - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
    // log-sum-exp of the scores
    max + sum.ln()
}

/// Row-wise SoftMax.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let (_, k) = check_logits(logits)?;
    let mut out = vec![0.0; logits.len()];
    for (row, o) in logits.values().chunks_exact(k).zip(out.chunks_exact_mut(k)) {
        softmax_into(row, o);
    }
    Tensor::new(logits.shape().to_vec(), out)
}

fn relaxed_scores(logits: &[f64], noise: &[f64], temperature: f64) -> Vec<f64> {
    logits
        .iter()
        .zip(noise)
        .map(|(&z, &g)| (z + g) / temperature)
        .collect()
}

/// Row-wise Gumbel-SoftMax. Deterministic mode with `T = 1` reproduces
/// [`softmax`] exactly.
pub fn gumbel_softmax(logits: &Tensor, temperature: f64, mode: GumbelMode, seed: u64) -> Result<Tensor> {
    check_temperature(temperature)?;
    let (_, k) = check_logits(logits)?;
    let noise = gumbel_noise(logits.len(), mode, seed);
    let scores = relaxed_scores(logits.values(), &noise, temperature);
    let mut out = vec![0.0; logits.len()];
    for (row, o) in scores.chunks_exact(k).zip(out.chunks_exact_mut(k)) {
        softmax_into(row, o);
    }
    Tensor::new(logits.shape().to_vec(), out)
}

/// Components of the hybrid loss, each averaged over the batch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub softmax_ce: f64,
    pub gumbel_ce: f64,
}

/// Hybrid loss and its gradient with respect to the logits.
pub fn hybrid_loss(logits: &Tensor, labels: &[usize], cfg: &HybridLossConfig, seed: u64) -> Result<(f64, Tensor)> {
    let (parts, grad) = hybrid_loss_parts(logits, labels, cfg, seed)?;
    let loss = cfg.alpha * parts.softmax_ce + (1.0 - cfg.alpha) * parts.gumbel_ce;
    Ok((loss, grad))
}

pub fn hybrid_loss_parts(
    logits: &Tensor,
    labels: &[usize],
    cfg: &HybridLossConfig,
    seed: u64,
) -> Result<(LossParts, Tensor)> {
    cfg.validate()?;
    let (b, k) = check_logits(logits)?;
    if b == 0 {
        return Err(Error::validation("empty batch"));
    }
    if labels.len() != b {
        return Err(Error::validation(format!("{} labels for a batch of {b}", labels.len())));
    }
    if let Some(&bad) = labels.iter().find(|&&y| y >= k) {
        return Err(Error::validation(format!("label {bad} out of range for {k} classes")));
    }
    let t = cfg.temperature;
    let noise = gumbel_noise(logits.len(), cfg.gumbel_mode, seed);
    let scores = relaxed_scores(logits.values(), &noise, t);
    let inv_b = 1.0 / b as f64;
    let mut p = vec![0.0; k];
    let mut q = vec![0.0; k];
    let mut grad = vec![0.0; b * k];
    let (mut ce_soft, mut ce_gumbel) = (0.0, 0.0);
    for n in 0..b {
        let z = &logits.values()[n * k..(n + 1) * k];
        let s = &scores[n * k..(n + 1) * k];
        let y = labels[n];
        let lse_z = softmax_into(z, &mut p);
        let lse_s = softmax_into(s, &mut q);
        ce_soft += lse_z - z[y];
        ce_gumbel += lse_s - s[y];
        let g = &mut grad[n * k..(n + 1) * k];
        for j in 0..k {
            let onehot = if j == y { 1.0 } else { 0.0 };
            g[j] = (cfg.alpha * (p[j] - onehot) + (1.0 - cfg.alpha) * (q[j] - onehot) / t) * inv_b;
        }
    }
    let grad = Tensor::new(vec![b, k], grad)?;
    Ok((
        LossParts {
            softmax_ce: ce_soft * inv_b,
            gumbel_ce: ce_gumbel * inv_b,
        },
        grad,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(v: &[f64]) -> Tensor {
        Tensor::new(vec![1, v.len()], v.to_vec()).unwrap()
    }

    fn det(alpha: f64, temperature: f64) -> HybridLossConfig {
        HybridLossConfig {
            alpha,
            temperature,
            gumbel_mode: GumbelMode::Deterministic,
        }
    }

    #[test]
    fn equal_logits_give_uniform_output() {
        for t in [0.1, 0.5, 1.0, 7.0] {
            let y = gumbel_softmax(&row(&[0.0, 0.0, 0.0]), t, GumbelMode::Deterministic, 0).unwrap();
            for v in y.values() {
                assert!((v - 1.0 / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn deterministic_unit_temperature_is_softmax() {
        let logits = row(&[1.0, 2.0, 3.0]);
        let g = gumbel_softmax(&logits, 1.0, GumbelMode::Deterministic, 0).unwrap();
        let s = softmax(&logits).unwrap();
        assert_eq!(g, s);
        // e^k / (e + e^2 + e^3)
        let denom = 1f64.exp() + 2f64.exp() + 3f64.exp();
        let expected = [1f64.exp() / denom, 2f64.exp() / denom, 3f64.exp() / denom];
        for (a, e) in s.values().iter().zip(expected) {
            assert!((a - e).abs() < 1e-15);
        }
        assert!((s.values()[0] - 0.0900).abs() < 5e-5);
        assert!((s.values()[1] - 0.2447).abs() < 5e-5);
        assert!((s.values()[2] - 0.6652).abs() < 5e-5);
    }

    #[test]
    fn non_positive_temperature_rejected() {
        for t in [0.0, -1.0, f64::NAN] {
            assert!(matches!(
                gumbel_softmax(&row(&[1.0, 2.0]), t, GumbelMode::Deterministic, 0),
                Err(Error::Validation(_))
            ));
        }
    }

    #[test]
    fn temperature_sharpens_deterministic_output() {
        let logits = row(&[0.5, 1.5, -2.0]);
        let mut last = 0.0;
        for t in [1.0, 0.5, 0.1, 0.01] {
            let y = gumbel_softmax(&logits, t, GumbelMode::Deterministic, 0).unwrap();
            let max = y.values().iter().copied().fold(0.0, f64::max);
            assert!(max >= last);
            last = max;
        }
        assert!(last > 0.99);
    }

    #[test]
    fn uniform_logits_cross_entropy_is_ln_k() {
        let logits = Tensor::new(vec![2, 4], vec![0.3; 8]).unwrap();
        let (loss, _) = hybrid_loss(&logits, &[1, 3], &det(1.0, 0.5), 0).unwrap();
        assert!((loss - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn half_mix_at_unit_temperature_is_plain_cross_entropy() {
        let logits = row(&[0.2, -1.3, 2.2]);
        let (plain, g1) = hybrid_loss(&logits, &[0], &det(1.0, 1.0), 0).unwrap();
        let (mixed, g2) = hybrid_loss(&logits, &[0], &det(0.5, 1.0), 0).unwrap();
        assert_eq!(plain, mixed);
        for (a, b) in g1.values().iter().zip(g2.values()) {
            assert!((a - b).abs() < 1e-16);
        }
    }

    #[test]
    fn paper_defaults_on_two_logits() {
        // CE(softmax([2, 0]), 0) = ln(1 + e^-2); tempered scores [4, 0] give
        // ln(1 + e^-4).
        let expected = 0.5 * (1.0 + (-2f64).exp()).ln() + 0.5 * (1.0 + (-4f64).exp()).ln();
        let (loss, _) = hybrid_loss(&row(&[2.0, 0.0]), &[0], &det(0.5, 0.5), 0).unwrap();
        assert!((loss - expected).abs() < 1e-15);
        assert!((loss - 0.072538969).abs() < 1e-9);
    }

    #[test]
    fn bad_labels_rejected() {
        assert!(matches!(
            hybrid_loss(&row(&[0.0, 1.0]), &[2], &det(0.5, 0.5), 0),
            Err(Error::Validation(_))
        ));
        assert!(hybrid_loss(&row(&[0.0, 1.0]), &[0, 1], &det(0.5, 0.5), 0).is_err());
        let bad_alpha = HybridLossConfig { alpha: 1.5, ..det(0.5, 0.5) };
        assert!(hybrid_loss(&row(&[0.0, 1.0]), &[0], &bad_alpha, 0).is_err());
    }

    proptest! {
        #[test]
        fn rows_are_stochastic(
            logits in proptest::collection::vec(-30.0f64..30.0, 12),
            t in 0.05f64..5.0,
            seed in any::<u64>(),
        ) {
            let x = Tensor::new(vec![3, 4], logits).unwrap();
            for mode in [GumbelMode::Stochastic, GumbelMode::Deterministic] {
                let y = gumbel_softmax(&x, t, mode, seed).unwrap();
                for r in 0..3 {
                    let row = y.row(r);
                    prop_assert!(row.iter().all(|&v| v >= 0.0));
                    prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn loss_is_linear_in_alpha(
            logits in proptest::collection::vec(-5.0f64..5.0, 6),
            alpha in 0.0f64..=1.0,
            t in 0.1f64..2.0,
            seed in any::<u64>(),
        ) {
            let x = Tensor::new(vec![2, 3], logits).unwrap();
            let cfg = |a| HybridLossConfig { alpha: a, temperature: t, gumbel_mode: GumbelMode::Stochastic };
            let (l, _) = hybrid_loss(&x, &[0, 2], &cfg(alpha), seed).unwrap();
            let (l1, _) = hybrid_loss(&x, &[0, 2], &cfg(1.0), seed).unwrap();
            let (l0, _) = hybrid_loss(&x, &[0, 2], &cfg(0.0), seed).unwrap();
            prop_assert!(l >= 0.0);
            prop_assert!((l - (alpha * l1 + (1.0 - alpha) * l0)).abs() < 1e-12);
        }
    }
}
