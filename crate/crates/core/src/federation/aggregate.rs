//! Size-weighted parameter averaging at cluster heads and at the server.

use crate::error::{Error, Result};
use crate::nn::ModelParameters;

/// `sum_i (n_i / sum n) * w_i`, entry by entry.
///
/// The sum starts from the first weighted term rather than from zero, so a
/// single member comes back bit-for-bit (its weight is exactly 1).
pub fn weighted_average(members: &[(&ModelParameters, usize)]) -> Result<ModelParameters> {
    let (first, _) = members
        .first()
        .ok_or_else(|| Error::validation("aggregation needs at least one member"))?;
    if let Some(pos) = members.iter().position(|&(_, n)| n == 0) {
        return Err(Error::validation(format!("member {pos} reports zero samples")));
    }
    for (i, (p, _)) in members.iter().enumerate().skip(1) {
        if !p.congruent(first) {
            return Err(Error::structural(format!("member {i} is not congruent with member 0")));
        }
    }
    let total: usize = members.iter().map(|&(_, n)| n).sum();
    let weights: Vec<f64> = members.iter().map(|&(_, n)| n as f64 / total as f64).collect();

    let mut out = (*first).clone();
    for t in out.tensors_mut() {
        for v in t.values_mut() {
            *v *= weights[0];
        }
    }
    for ((p, _), &w) in members.iter().zip(&weights).skip(1) {
        for (dst, src) in out.tensors_mut().zip(p.tensors()) {
            for (d, s) in dst.values_mut().iter_mut().zip(src.values()) {
                *d += w * s;
            }
        }
    }
    Ok(out)
}

/// Cluster model from its members' models and local data sizes.
pub fn aggregate_intra_cluster(members: &[(&ModelParameters, usize)]) -> Result<ModelParameters> {
    weighted_average(members)
}

/// Global model from cluster models and cluster data sizes.
pub fn aggregate_inter_cluster(clusters: &[(&ModelParameters, usize)]) -> Result<ModelParameters> {
    weighted_average(clusters)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{ModelSpec, Tensor};
    use crate::nn::ParamEntry;
    use proptest::prelude::*;

    fn scalar(v: f64) -> ModelParameters {
        ModelParameters {
            entries: vec![ParamEntry {
                name: "0.dense".into(),
                weights: Tensor::new(vec![1, 1], vec![v]).unwrap(),
                biases: Tensor::new(vec![1], vec![0.0]).unwrap(),
            }],
            round: 0,
        }
    }

    fn value(p: &ModelParameters) -> f64 {
        p.entries[0].weights.values()[0]
    }

    #[test]
    fn single_member_is_identity() {
        let p = ModelParameters::init(&ModelSpec::lightweight(8, 4, 0.1), 3).unwrap();
        let out = aggregate_intra_cluster(&[(&p, 17)]).unwrap();
        let a: Vec<u64> = p.flat_values().iter().map(|v| v.to_bits()).collect();
        let b: Vec<u64> = out.flat_values().iter().map(|v| v.to_bits()).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn hand_computed_means() {
        let (a, b) = (scalar(1.0), scalar(3.0));
        assert_eq!(value(&aggregate_intra_cluster(&[(&a, 1), (&b, 3)]).unwrap()), 2.5);
        let (z, t) = (scalar(0.0), scalar(10.0));
        assert_eq!(value(&aggregate_inter_cluster(&[(&z, 5), (&t, 5)]).unwrap()), 5.0);
    }

    #[test]
    fn equal_sizes_match_plain_mean() {
        let spec = ModelSpec::lightweight(6, 3, 0.0);
        let models: Vec<ModelParameters> = (0..5).map(|s| ModelParameters::init(&spec, s).unwrap()).collect();
        let members: Vec<(&ModelParameters, usize)> = models.iter().map(|m| (m, 7)).collect();
        let avg = aggregate_intra_cluster(&members).unwrap().flat_values();
        let flats: Vec<Vec<f64>> = models.iter().map(|m| m.flat_values()).collect();
        for (j, &v) in avg.iter().enumerate() {
            let mean = flats.iter().map(|f| f[j]).sum::<f64>() / 5.0;
            assert!((v - mean).abs() <= 1e-12);
        }
    }

    #[test]
    fn rejects_bad_members() {
        let a = scalar(1.0);
        assert!(matches!(aggregate_intra_cluster(&[]), Err(Error::Validation(_))));
        assert!(matches!(aggregate_intra_cluster(&[(&a, 0)]), Err(Error::Validation(_))));
        let other = ModelParameters::zeros(&ModelSpec::lightweight(4, 2, 0.0)).unwrap();
        assert!(matches!(aggregate_intra_cluster(&[(&a, 1), (&other, 1)]), Err(Error::Structural(_))));
    }

    fn random_models(seed: u64, n: usize) -> Vec<ModelParameters> {
        let spec = ModelSpec::lightweight(4, 3, 0.0);
        (0..n).map(|i| ModelParameters::init(&spec, seed.wrapping_add(i as u64)).unwrap()).collect()
    }

    proptest! {
        #[test]
        fn hierarchy_collapses_to_flat_average(
            seed in any::<u64>(),
            shape in proptest::collection::vec(proptest::collection::vec(1usize..500, 1..6), 1..5),
        ) {
            let n: usize = shape.iter().map(Vec::len).sum();
            let models = random_models(seed, n);
            let mut it = models.iter();
            let mut cluster_models = Vec::new();
            let mut flat = Vec::new();
            for sizes in &shape {
                let members: Vec<(&ModelParameters, usize)> = sizes.iter().map(|&s| (it.next().unwrap(), s)).collect();
                flat.extend(members.iter().copied());
                cluster_models.push((aggregate_intra_cluster(&members).unwrap(), sizes.iter().sum::<usize>()));
            }
            let refs: Vec<(&ModelParameters, usize)> = cluster_models.iter().map(|(m, s)| (m, *s)).collect();
            let two_level = aggregate_inter_cluster(&refs).unwrap();
            let total: usize = flat.iter().map(|&(_, s)| s).sum();
            let oracle: Vec<f64> = (0..two_level.param_count())
                .map(|j| flat.iter().map(|(m, s)| *s as f64 / total as f64 * m.flat_values()[j]).sum())
                .collect();
            let got = two_level.flat_values();
            for (g, o) in got.iter().zip(&oracle) {
                prop_assert!((g - o).abs() <= 1e-12);
            }
        }

        #[test]
        fn convex_and_permutation_invariant(
            seed in any::<u64>(),
            sizes in proptest::collection::vec(1usize..1000, 1..8),
            rot in 0usize..8,
        ) {
            let models = random_models(seed, sizes.len());
            let members: Vec<(&ModelParameters, usize)> = models.iter().zip(&sizes).map(|(m, &s)| (m, s)).collect();
            let avg = weighted_average(&members).unwrap().flat_values();
            let flats: Vec<Vec<f64>> = models.iter().map(|m| m.flat_values()).collect();
            for (j, &v) in avg.iter().enumerate() {
                let lo = flats.iter().map(|f| f[j]).fold(f64::INFINITY, f64::min);
                let hi = flats.iter().map(|f| f[j]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
            }
            let mut rotated = members.clone();
            rotated.rotate_left(rot % members.len());
            let again = weighted_average(&rotated).unwrap().flat_values();
            for (a, b) in avg.iter().zip(&again) {
                prop_assert!((a - b).abs() <= 1e-12);
            }
            let total: usize = sizes.iter().sum();
            let wsum: f64 = sizes.iter().map(|&s| s as f64 / total as f64).sum();
            prop_assert!((wsum - 1.0).abs() <= 1e-12);
        }
    }
}
