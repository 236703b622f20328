//! Permutation feature importance and rank averaging across models.

use ndarray::ArrayView2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::auc_roc;
use crate::models::ProbabilisticClassifier;
use crate::preprocess::FeatureGroup;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureImportance {
    pub feature: String,
    /// Mean of `baseline AUC - permuted AUC`.
    pub mean: f64,
    /// Population standard deviation over repeats.
    pub std: f64,
    pub repeats: usize,
    pub deltas: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceResult {
    pub baseline_auc: f64,
    pub features: Vec<FeatureImportance>,
}

impl ImportanceResult {
    pub fn feature_names(&self) -> Vec<&str> {
        self.features.iter().map(|f| f.feature.as_str()).collect()
    }
}

/// Uniform random permutation of `0..n` that is not the identity when
/// `n >= 2`.
fn non_identity_permutation(n: usize, r: &mut rng::Rng) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    loop {
        perm.shuffle(r);
        if n < 2 || perm.iter().enumerate().any(|(i, &p)| i != p) {
            return perm;
        }
    }
}

/// Drop in AUC when each group's columns are permuted jointly across rows.
/// Task `(g, r)` draws its permutation from a stream derived from
/// `(seed, g, r)`, so results do not depend on scheduling.
pub fn permutation_importance<M: ProbabilisticClassifier + ?Sized>(
    model: &M,
    x: ArrayView2<f64>,
    y: &[u8],
    groups: &[FeatureGroup],
    repeats: usize,
    seed: u64,
) -> Result<ImportanceResult> {
    if repeats == 0 {
        return Err(Error::InvalidArgument("importance needs at least one repeat".into()));
    }
    let baseline = auc_roc(&model.predict_proba(x)?, y)?;
    let tasks: Vec<(usize, usize)> = (0..groups.len()).flat_map(|g| (0..repeats).map(move |r| (g, r))).collect();
    let deltas = tasks
        .par_iter()
        .map(|&(g, rep)| {
            let mut r = rng::derived_rng(seed, &[rng::tag("importance"), g as u64, rep as u64]);
            let perm = non_identity_permutation(x.nrows(), &mut r);
            let mut xp = x.to_owned();
            for &slot in &groups[g].slots {
                let col = x.column(slot);
                for (i, &src) in perm.iter().enumerate() {
                    xp[[i, slot]] = col[src];
                }
            }
            Ok(baseline - auc_roc(&model.predict_proba(xp.view())?, y)?)
        })
        .collect::<Result<Vec<f64>>>()?;
    let features = groups
        .iter()
        .enumerate()
        .map(|(g, group)| {
            let d = deltas[g * repeats..(g + 1) * repeats].to_vec();
            let mean = d.iter().sum::<f64>() / repeats as f64;
            let var = d.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / repeats as f64;
            FeatureImportance {
                feature: group.source.clone(),
                mean,
                std: var.sqrt(),
                repeats,
                deltas: d,
            }
        })
        .collect();
    Ok(ImportanceResult {
        baseline_auc: baseline,
        features,
    })
}

/// Ranks by descending value (1 = largest); tied values share the average
/// of the ranks they span.
pub fn tie_averaged_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = avg;
        }
        i = j;
    }
    ranks
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelRanks {
    pub model: String,
    pub ranks: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankTable {
    pub features: Vec<String>,
    pub per_model: Vec<ModelRanks>,
    /// Mean rank across models, aligned with `features`.
    pub mean_rank: Vec<f64>,
}

impl RankTable {
    /// `(feature, mean rank)` from most to least important; ties keep the
    /// feature order.
    pub fn ordered(&self) -> Vec<(String, f64)> {
        let mut out: Vec<(String, f64)> = self.features.iter().cloned().zip(self.mean_rank.iter().copied()).collect();
        out.sort_by(|a, b| a.1.total_cmp(&b.1));
        out
    }

    pub fn top(&self, k: usize) -> Vec<String> {
        self.ordered().into_iter().take(k).map(|(f, _)| f).collect()
    }
}

pub fn average_ranks(results: &[(String, ImportanceResult)]) -> Result<RankTable> {
    let Some((_, first)) = results.first() else {
        return Err(Error::InvalidArgument("no importance results to rank".into()));
    };
    let features: Vec<String> = first.features.iter().map(|f| f.feature.clone()).collect();
    let mut per_model = Vec::with_capacity(results.len());
    let mut sum = vec![0.0; features.len()];
    for (model, res) in results {
        if res.feature_names() != features.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::MismatchedFeatures);
        }
        let means: Vec<f64> = res.features.iter().map(|f| f.mean).collect();
        let ranks = tie_averaged_ranks(&means);
        for (s, r) in sum.iter_mut().zip(&ranks) {
            *s += r;
        }
        per_model.push(ModelRanks {
            model: model.clone(),
            ranks,
        });
    }
    let k = results.len() as f64;
    Ok(RankTable {
        features,
        per_model,
        mean_rank: sum.into_iter().map(|s| s / k).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{Logistic, LogisticParams};
    use ndarray::Array2;
    use proptest::prelude::*;
    use rand::Rng;

    fn groups(d: usize) -> Vec<FeatureGroup> {
        (0..d)
            .map(|j| FeatureGroup {
                source: format!("f{j}"),
                slots: vec![j],
            })
            .collect()
    }

    fn result(means: &[f64]) -> ImportanceResult {
        ImportanceResult {
            baseline_auc: 0.8,
            features: means
                .iter()
                .enumerate()
                .map(|(j, &m)| FeatureImportance {
                    feature: format!("f{j}"),
                    mean: m,
                    std: 0.0,
                    repeats: 1,
                    deltas: vec![m],
                })
                .collect(),
        }
    }

    #[test]
    fn constant_feature_scores_zero() {
        let mut r = rng::rng(1);
        let x = Array2::from_shape_fn((200, 3), |(_, j)| if j == 1 { 2.5 } else { r.random::<f64>() });
        let y: Vec<u8> = x.rows().into_iter().map(|row| (row[0] > 0.5) as u8).collect();
        let m = Logistic::fit(x.view(), &y, &LogisticParams::default()).unwrap();
        let res = permutation_importance(&m, x.view(), &y, &groups(3), 10, 4).unwrap();
        assert!(res.features[1].deltas.iter().all(|&d| d == 0.0));
        assert!(res.features[0].mean > 0.1);
    }

    #[test]
    fn zero_coefficient_scores_zero() {
        let mut r = rng::rng(2);
        let x = Array2::from_shape_fn((100, 2), |_| r.random::<f64>());
        let y: Vec<u8> = (0..100).map(|i| (i % 3 == 0) as u8).collect();
        let m = Logistic {
            intercept: 0.1,
            coefficients: vec![1.5, 0.0],
            iterations: 0,
            gradient_norm: 0.0,
        };
        let res = permutation_importance(&m, x.view(), &y, &groups(2), 5, 0).unwrap();
        assert!(res.features[1].deltas.iter().all(|&d| d == 0.0));
    }

    #[test]
    fn grouped_slots_move_together() {
        let x = Array2::from_shape_fn((50, 3), |(i, j)| match j {
            0 => (i % 2) as f64,
            1 => 1.0 - (i % 2) as f64,
            _ => i as f64,
        });
        let y: Vec<u8> = (0..50).map(|i| (i % 2) as u8).collect();
        struct RowCheck;
        impl ProbabilisticClassifier for RowCheck {
            fn n_features(&self) -> usize {
                3
            }
            fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
                assert!(x.rows().into_iter().all(|r| r[0] + r[1] == 1.0));
                Ok(x.column(0).to_vec())
            }
        }
        let g = vec![
            FeatureGroup { source: "cat".into(), slots: vec![0, 1] },
            FeatureGroup { source: "num".into(), slots: vec![2] },
        ];
        let res = permutation_importance(&RowCheck, x.view(), &y, &g, 3, 1).unwrap();
        assert_eq!(res.feature_names(), vec!["cat", "num"]);
        assert!(res.features[0].mean > 0.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let mut r = rng::rng(5);
        let x = Array2::from_shape_fn((80, 3), |_| r.random::<f64>());
        let y: Vec<u8> = x.rows().into_iter().map(|row| (row[0] + row[2] > 1.0) as u8).collect();
        let m = Logistic::fit(x.view(), &y, &LogisticParams::default()).unwrap();
        let a = permutation_importance(&m, x.view(), &y, &groups(3), 4, 9).unwrap();
        let b = permutation_importance(&m, x.view(), &y, &groups(3), 4, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rank_examples() {
        let t = average_ranks(&[("lr".into(), result(&[0.1, 0.3, 0.2]))]).unwrap();
        assert_eq!(t.mean_rank, vec![3.0, 1.0, 2.0]);
        let t = average_ranks(&[("a".into(), result(&[0.2, 0.1])), ("b".into(), result(&[0.1, 0.2]))]).unwrap();
        assert_eq!(t.mean_rank, vec![1.5, 1.5]);
        assert_eq!(tie_averaged_ranks(&[0.5, 0.5, 0.1]), vec![1.5, 1.5, 3.0]);
        let mut other = result(&[0.1, 0.2]);
        other.features[1].feature = "zzz".into();
        assert!(matches!(
            average_ranks(&[("a".into(), result(&[0.2, 0.1])), ("b".into(), other)]),
            Err(Error::MismatchedFeatures)
        ));
    }

    #[test]
    fn permutations_are_never_identity() {
        let mut r = rng::rng(0);
        for _ in 0..500 {
            let p = non_identity_permutation(2, &mut r);
            assert_eq!(p, vec![1, 0]);
        }
    }

    proptest! {
        #[test]
        fn rank_sum_is_triangular(v in prop::collection::vec((0u8..5).prop_map(f64::from), 1..30)) {
            let n = v.len() as f64;
            let s: f64 = tie_averaged_ranks(&v).iter().sum();
            prop_assert!((s - n * (n + 1.0) / 2.0).abs() < 1e-9);
        }
    }
}
