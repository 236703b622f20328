//! Platt sigmoid calibration, fitted with cross-validation.

use ndarray::{ArrayView2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::stratified_kfold_labels;
use crate::error::{Error, Result};
use crate::models::{FittedModel, Hyperparams, ProbabilisticClassifier};
use crate::rng;

const SCORE_CLAMP: f64 = 15.0;

/// Raw score fed to the sigmoid: the probability's logit, clamped to ±15.
pub fn probability_score(p: f64) -> f64 {
    if p <= 0.0 {
        -SCORE_CLAMP
    } else if p >= 1.0 {
        SCORE_CLAMP
    } else {
        (p / (1.0 - p)).ln().clamp(-SCORE_CLAMP, SCORE_CLAMP)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

/// Maps a raw score `s` to `σ(a·s + b)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SigmoidCalibrator {
    pub a: f64,
    pub b: f64,
}

impl SigmoidCalibrator {
    pub fn apply(&self, score: f64) -> f64 {
        sigmoid(self.a * score + self.b)
    }

    /// Calibrated version of a model probability.
    pub fn calibrate(&self, p: f64) -> f64 {
        self.apply(probability_score(p))
    }
}

fn smoothed_targets(y: &[u8]) -> Vec<f64> {
    let n_pos = y.iter().filter(|&&v| v == 1).count() as f64;
    let n_neg = y.len() as f64 - n_pos;
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    y.iter().map(|&v| if v == 1 { hi } else { lo }).collect()
}

/// Mean negative log-likelihood of `σ(a·s + b)` against targets `t`.
pub fn platt_objective(scores: &[f64], t: &[f64], a: f64, b: f64) -> f64 {
    scores
        .iter()
        .zip(t)
        .map(|(&s, &t)| {
            let z = a * s + b;
            softplus(z) - t * z
        })
        .sum::<f64>()
        / scores.len() as f64
}

/// Fits `(a, b)` by Newton's method on Platt-smoothed targets until the
/// mean-gradient norm drops below 1e-8.
pub fn fit_platt(scores: &[f64], y: &[u8]) -> Result<SigmoidCalibrator> {
    if scores.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: y.len(),
            found: scores.len(),
        });
    }
    let n_pos = y.iter().filter(|&&v| v == 1).count();
    if n_pos == 0 || n_pos == y.len() {
        return Err(Error::SingleClass("Platt scaling needs both labels".into()));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("calibration score {s}")));
    }
    let t = smoothed_targets(y);
    let n = scores.len() as f64;
    let first = scores[0];
    if scores.iter().all(|&s| s == first) {
        let mean_t = t.iter().sum::<f64>() / n;
        return Ok(SigmoidCalibrator {
            a: 0.0,
            b: (mean_t / (1.0 - mean_t)).ln(),
        });
    }
    let mean_t = t.iter().sum::<f64>() / n;
    let (mut a, mut b) = (0.0, (mean_t / (1.0 - mean_t)).ln());
    let mut f = platt_objective(scores, &t, a, b);
    for _ in 0..200 {
        let (mut ga, mut gb, mut haa, mut hab, mut hbb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&s, &t) in scores.iter().zip(&t) {
            let p = sigmoid(a * s + b);
            let r = p - t;
            let w = p * (1.0 - p);
            ga += r * s;
            gb += r;
            haa += w * s * s;
            hab += w * s;
            hbb += w;
        }
        let (ga, gb, haa, hab, hbb) = (ga / n, gb / n, haa / n, hab / n, hbb / n);
        if (ga * ga + gb * gb).sqrt() < 1e-8 {
            break;
        }
        let mut mu = 1e-12;
        loop {
            let (h11, h22) = (haa + mu, hbb + mu);
            let det = h11 * h22 - hab * hab;
            let (da, db) = if det > 0.0 {
                ((h22 * ga - hab * gb) / det, (h11 * gb - hab * ga) / det)
            } else {
                (ga, gb)
            };
            let mut step = 1.0;
            let mut accepted = false;
            while step > 1e-10 {
                let (na, nb) = (a - step * da, b - step * db);
                let nf = platt_objective(scores, &t, na, nb);
                if nf <= f + 1e-4 * step * -(ga * da + gb * db) {
                    a = na;
                    b = nb;
                    f = nf;
                    accepted = true;
                    break;
                }
                step *= 0.5;
            }
            if accepted || mu > 1e6 {
                break;
            }
            mu = (mu * 100.0).max(1e-6);
        }
    }
    Ok(SigmoidCalibrator { a, b })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibratedMember<M> {
    pub model: M,
    pub calibrator: SigmoidCalibrator,
}

/// Ensemble of fold models, each with its own sigmoid fitted on the fold it
/// did not see; predictions average the calibrated probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibratedModel<M> {
    members: Vec<CalibratedMember<M>>,
}

impl<M> CalibratedModel<M> {
    pub fn members(&self) -> &[CalibratedMember<M>] {
        &self.members
    }
}

impl<M: ProbabilisticClassifier> ProbabilisticClassifier for CalibratedModel<M> {
    fn n_features(&self) -> usize {
        self.members[0].model.n_features()
    }

    fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
        let mut sum = vec![0.0; x.nrows()];
        for m in &self.members {
            for (s, p) in sum.iter_mut().zip(m.model.predict_proba(x)?) {
                *s += m.calibrator.calibrate(p);
            }
        }
        let k = self.members.len() as f64;
        Ok(sum.into_iter().map(|s| s / k).collect())
    }
}

/// Cross-validated calibration of an arbitrary fitting routine. Fold `f`'s
/// member is trained on the other folds with seed derived from `(seed, f)`.
pub fn calibrate_cv_with<M, F>(fit: F, x: ArrayView2<f64>, y: &[u8], k: usize, seed: u64) -> Result<CalibratedModel<M>>
where
    M: ProbabilisticClassifier,
    F: Fn(ArrayView2<f64>, &[u8], u64) -> Result<M> + Sync,
{
    if k < 2 {
        return Err(Error::InvalidArgument(format!("calibration needs k >= 2 folds, got {k}")));
    }
    let plan = stratified_kfold_labels(y, k, rng::derive_seed(seed, &[rng::tag("calibration_folds")]))?;
    let members = (0..k)
        .into_par_iter()
        .map(|f| {
            let (train, held) = plan.split(f);
            let xt = x.select(Axis(0), &train);
            let yt: Vec<u8> = train.iter().map(|&i| y[i]).collect();
            let model = fit(xt.view(), &yt, rng::derive_seed(seed, &[rng::tag("calibration_member"), f as u64]))?;
            let xh = x.select(Axis(0), &held);
            let yh: Vec<u8> = held.iter().map(|&i| y[i]).collect();
            let scores: Vec<f64> = model.predict_proba(xh.view())?.into_iter().map(probability_score).collect();
            let calibrator = fit_platt(&scores, &yh)?;
            Ok(CalibratedMember { model, calibrator })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CalibratedModel { members })
}

pub fn calibrate_cv(
    hyper: &Hyperparams,
    x: ArrayView2<f64>,
    y: &[u8],
    k: usize,
    seed: u64,
) -> Result<CalibratedModel<FittedModel>> {
    calibrate_cv_with(|x, y, s| hyper.fit(x, y, s), x, y, k, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{auc_roc, ece};
    use ndarray::Array2;
    use rand::Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn simulate(n: usize, slope: f64, seed: u64) -> (Vec<f64>, Vec<u8>) {
        let mut r = rng::rng(seed);
        let s: Vec<f64> = (0..n).map(|_| 2.0 * Distribution::<f64>::sample(&StandardNormal, &mut r)).collect();
        let y = s.iter().map(|&v| (r.random::<f64>() < sigmoid(slope * v)) as u8).collect();
        (s, y)
    }

    #[test]
    fn true_logits_need_identity_map() {
        let (s, y) = simulate(10_000, 1.0, 1);
        let c = fit_platt(&s, &y).unwrap();
        assert!((0.9..=1.1).contains(&c.a), "{c:?}");
        assert!((-0.1..=0.1).contains(&c.b), "{c:?}");
    }

    #[test]
    fn recovers_slope() {
        let (s, y) = simulate(10_000, 0.5, 2);
        let c = fit_platt(&s, &y).unwrap();
        assert!((c.a - 0.5).abs() < 0.05, "{c:?}");
    }

    #[test]
    fn constant_scores_give_smoothed_prevalence() {
        let y = [1, 0, 0, 0, 1, 0, 0, 0, 0, 0];
        let c = fit_platt(&[0.3; 10], &y).unwrap();
        assert_eq!(c.a, 0.0);
        let t = smoothed_targets(&y);
        assert!((c.apply(0.3) - t.iter().sum::<f64>() / 10.0).abs() < 1e-12);
        assert!(matches!(fit_platt(&[0.1, 0.2], &[0, 0]), Err(Error::SingleClass(_))));
    }

    #[test]
    fn matches_grid_search() {
        for seed in 0..5 {
            let (s, y) = simulate(40, 0.8, 10 + seed);
            let c = fit_platt(&s, &y).unwrap();
            let t = smoothed_targets(&y);
            let best = platt_objective(&s, &t, c.a, c.b);
            let mut grid_best = f64::INFINITY;
            for i in 0..=200 {
                for j in 0..=200 {
                    let a = -1.0 + 4.0 * i as f64 / 200.0;
                    let b = -3.0 + 6.0 * j as f64 / 200.0;
                    grid_best = grid_best.min(platt_objective(&s, &t, a, b));
                }
            }
            assert!(best <= grid_best + 1e-12, "seed {seed}");
            assert!(grid_best - best < 1e-3, "seed {seed}");
        }
    }

    /// Reads the true logit from column 0 and exaggerates it threefold.
    #[derive(Clone, Debug, PartialEq)]
    struct Overconfident;

    impl ProbabilisticClassifier for Overconfident {
        fn n_features(&self) -> usize {
            1
        }

        fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Vec<f64>> {
            Ok(x.column(0).iter().map(|&z| sigmoid(3.0 * z)).collect())
        }
    }

    #[test]
    fn calibration_repairs_overconfidence() {
        let mut r = rng::rng(3);
        let s: Vec<f64> = (0..5000).map(|_| Distribution::<f64>::sample(&StandardNormal, &mut r)).collect();
        let y: Vec<u8> = s.iter().map(|&v| (r.random::<f64>() < sigmoid(v)) as u8).collect();
        let x = Array2::from_shape_vec((5000, 1), s.clone()).unwrap();
        let raw = Overconfident.predict_proba(x.view()).unwrap();
        let cal = calibrate_cv_with(|_, _, _| Ok(Overconfident), x.view(), &y, 5, 7).unwrap();
        let p = cal.predict_proba(x.view()).unwrap();
        let (before, after) = (ece(&raw, &y, 10).unwrap(), ece(&p, &y, 10).unwrap());
        assert!(after <= 0.5 * before, "{before} -> {after}");
        assert!(p.iter().all(|&v| v > 0.0 && v < 1.0));
        for m in cal.members() {
            assert!(m.calibrator.a > 0.0);
            let member_raw = m.model.predict_proba(x.view()).unwrap();
            let member_cal: Vec<f64> = member_raw.iter().map(|&v| m.calibrator.calibrate(v)).collect();
            assert!((auc_roc(&member_raw, &y).unwrap() - auc_roc(&member_cal, &y).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn identical_members_collapse_to_one() {
        let x = Array2::from_shape_fn((30, 1), |(i, _)| i as f64 / 10.0 - 1.5);
        let member = CalibratedMember { model: Overconfident, calibrator: SigmoidCalibrator { a: 0.4, b: -0.2 } };
        let single = CalibratedModel { members: vec![member.clone()] };
        let pair = CalibratedModel { members: vec![member.clone(), member] };
        assert_eq!(pair.predict_proba(x.view()).unwrap(), single.predict_proba(x.view()).unwrap());
    }
}
