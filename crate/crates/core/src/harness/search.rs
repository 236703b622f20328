//! Seeded random search over hyperparameter spaces.

use std::collections::BTreeMap;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};
use crate::models::Hyperparams;
use crate::rng;

/// Range of one hyperparameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamRange {
    Uniform(f64, f64),
    LogUniform(f64, f64),
    /// Inclusive integer range.
    Int(i64, i64),
    Choice(Vec<Value>),
}

impl ParamRange {
    pub fn validate(&self, name: &str) -> Result<()> {
        let ok = match self {
            ParamRange::Uniform(lo, hi) => lo.is_finite() && hi.is_finite() && lo <= hi,
            ParamRange::LogUniform(lo, hi) => *lo > 0.0 && hi.is_finite() && lo <= hi,
            ParamRange::Int(lo, hi) => lo <= hi,
            ParamRange::Choice(v) => !v.is_empty(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("empty or invalid range for `{name}`: {self:?}")))
        }
    }

    fn sample(&self, r: &mut rng::Rng) -> Value {
        match self {
            ParamRange::Uniform(lo, hi) => Value::from(lo + (hi - lo) * r.random::<f64>()),
            ParamRange::LogUniform(lo, hi) => {
                let (a, b) = (lo.ln(), hi.ln());
                Value::from((a + (b - a) * r.random::<f64>()).exp())
            }
            ParamRange::Int(lo, hi) => Value::from(r.random_range(*lo..=*hi)),
            ParamRange::Choice(v) => v[r.random_range(0..v.len())].clone(),
        }
    }
}

pub type SearchSpace = BTreeMap<String, ParamRange>;

pub type Candidate = BTreeMap<String, Value>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trial {
    pub params: Candidate,
    /// `None` when the objective failed or was not finite.
    pub score: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub best: Candidate,
    pub best_score: Option<f64>,
    pub trials: Vec<Trial>,
}

pub fn validate_space(space: &SearchSpace) -> Result<()> {
    space.iter().try_for_each(|(k, r)| r.validate(k))
}

/// Draws `budget` candidates from one seeded stream, scores them in
/// parallel, and returns the highest score (ties go to the earliest draw).
pub fn random_search<F>(space: &SearchSpace, budget: usize, seed: u64, objective: F) -> Result<SearchOutcome>
where
    F: Fn(&Candidate) -> Result<f64> + Sync,
{
    if budget == 0 {
        return Err(Error::InvalidArgument("search budget must be at least 1".into()));
    }
    validate_space(space)?;
    let mut r = rng::derived_rng(seed, &[rng::tag("random_search")]);
    let candidates: Vec<Candidate> = (0..budget)
        .map(|_| space.iter().map(|(k, range)| (k.clone(), range.sample(&mut r))).collect())
        .collect();
    let trials: Vec<Trial> = candidates
        .into_par_iter()
        .map(|params| {
            let score = match objective(&params) {
                Ok(s) if s.is_finite() => Some(s),
                Ok(s) => {
                    log::warn!("search objective returned {s} for {params:?}");
                    None
                }
                Err(e) => {
                    log::warn!("search objective failed for {params:?}: {e}");
                    None
                }
            };
            Trial { params, score }
        })
        .collect();
    let mut best = 0;
    for (i, t) in trials.iter().enumerate() {
        let better = match (t.score, trials[best].score) {
            (Some(s), Some(b)) => s > b,
            (Some(_), None) => true,
            _ => false,
        };
        if better {
            best = i;
        }
    }
    Ok(SearchOutcome {
        best: trials[best].params.clone(),
        best_score: trials[best].score,
        trials,
    })
}

/// Family defaults, then `fixed`, then `sampled`, checked key by key so a
/// misspelled hyperparameter is an error rather than silently ignored.
pub fn merge_hyperparams(family: &str, fixed: Option<&Value>, sampled: &Candidate) -> Result<Hyperparams> {
    let base = Hyperparams::default_for(family)
        .ok_or_else(|| Error::InvalidArgument(format!("unknown model family `{family}`")))?;
    let Value::Object(mut obj) = serde_json::to_value(&base)? else {
        unreachable!("hyperparameters serialize as an object");
    };
    let mut apply = |over: &Map<String, Value>| -> Result<()> {
        for (k, v) in over {
            if k == "family" || !obj.contains_key(k) {
                return Err(Error::InvalidArgument(format!("`{k}` is not a {family} hyperparameter")));
            }
            obj.insert(k.clone(), v.clone());
        }
        Ok(())
    };
    match fixed {
        None | Some(Value::Null) => {}
        Some(Value::Object(m)) => apply(m)?,
        Some(other) => {
            return Err(Error::InvalidArgument(format!(
                "hyperparameter overrides must be an object, got {other}"
            )))
        }
    }
    apply(&sampled.iter().map(|(k, v)| (k.clone(), v.clone())).collect())?;
    let h: Hyperparams = serde_json::from_value(Value::Object(obj))
        .map_err(|e| Error::InvalidArgument(format!("{family} hyperparameters: {e}")))?;
    h.validate()?;
    Ok(h)
}

/// Search dimensions shipped for each family when a model asks for tuning
/// without naming its own space.
pub fn default_space(family: &str) -> Option<SearchSpace> {
    let s = |v: &[(&str, ParamRange)]| v.iter().map(|(k, r)| (k.to_string(), r.clone())).collect();
    Some(match family {
        "logistic" => s(&[("l2_strength", ParamRange::LogUniform(1e-4, 10.0))]),
        "random_forest" => s(&[
            ("n_trees", ParamRange::Int(100, 400)),
            ("max_depth", ParamRange::Int(3, 12)),
            ("min_leaf", ParamRange::Int(1, 10)),
            (
                "max_features",
                ParamRange::Choice(vec![Value::from("sqrt"), Value::from("log2")]),
            ),
        ]),
        "gbdt" => s(&[
            ("n_rounds", ParamRange::Int(50, 400)),
            ("max_depth", ParamRange::Int(2, 6)),
            ("learning_rate", ParamRange::LogUniform(0.01, 0.3)),
            ("subsample", ParamRange::Uniform(0.5, 1.0)),
            ("colsample", ParamRange::Uniform(0.5, 1.0)),
            ("lambda", ParamRange::LogUniform(0.1, 10.0)),
        ]),
        "kan" => s(&[
            ("grid_size", ParamRange::Int(3, 10)),
            ("spline_order", ParamRange::Int(2, 3)),
            ("learning_rate", ParamRange::LogUniform(1e-3, 5e-2)),
            ("positive_class_weight", ParamRange::Uniform(1.0, 10.0)),
        ]),
        _ => return None,
    })
}
