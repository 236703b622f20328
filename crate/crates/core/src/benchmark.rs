//! Seeded synthetic benchmark: 2,044 PCI-style patients, 158 cardiac deaths,
//! 21 clinical features plus one sparse laboratory column. The outcome
//! depends on four features only; everything else is noise with realistic
//! marginals.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde_json::json;

use crate::data::{Column, ColumnSchema, EdgeDistribution, Schema, Table, TargetSpec};
use crate::error::{Error, Result};
use crate::rng;

pub const N_ROWS: usize = 2044;
pub const N_POSITIVES: usize = 158;
pub const TARGET: &str = "cardiac_death";
pub const DEFAULT_SEED: u64 = 2044;

/// Columns that drive the outcome.
pub const PLANTED: [&str; 4] = [
    "age",
    "ejection_fraction",
    "cerebrovascular_disease",
    "single_vessel_disease",
];

/// Logit weights of the planted features (numerics per standard deviation).
const W_AGE: f64 = 0.75;
const W_EF: f64 = -0.75;
const W_CEREBRO: f64 = 1.5;
const W_SINGLE_VESSEL: f64 = -1.5;
/// Scale of the logistic noise added to the risk score before the top
/// `N_POSITIVES` rows are labelled positive.
const NOISE: f64 = 1.0;

enum Kind {
    Normal { mu: f64, sigma: f64, lo: f64, hi: f64, step: f64, edge_mu: f64, edge_sigma: f64 },
    Binary { p: f64, edge_p: f64 },
}

struct Feature {
    name: &'static str,
    kind: Kind,
    missing: f64,
}

const fn num(name: &'static str, mu: f64, sigma: f64, lo: f64, hi: f64, step: f64, edge: (f64, f64), missing: f64) -> Feature {
    Feature {
        name,
        kind: Kind::Normal {
            mu,
            sigma,
            lo,
            hi,
            step,
            edge_mu: edge.0,
            edge_sigma: edge.1,
        },
        missing,
    }
}

const fn bin(name: &'static str, p: f64, edge_p: f64, missing: f64) -> Feature {
    Feature {
        name,
        kind: Kind::Binary { p, edge_p },
        missing,
    }
}

const FEATURES: [Feature; 22] = [
    num("age", 63.9, 9.85, 30.0, 99.0, 1.0, (92.5, 4.33), 0.0),
    bin("anemia", 0.05, 0.9, 0.0),
    num("ejection_fraction", 56.2, 10.6, 15.0, 80.0, 1.0, (22.5, 4.33), 0.03),
    bin("cerebrovascular_disease", 0.123, 0.9, 0.0),
    num("ckd_egfr", 75.3, 16.8, 10.0, 150.0, 0.1, (30.0, 8.66), 0.05),
    bin("peripheral_artery_disease", 0.078, 0.85, 0.0),
    bin("aortic_stenosis", 0.024, 0.8, 0.0),
    bin("single_vessel_disease", 0.465, 0.9, 0.0),
    bin("coronary_calcium", 0.209, 0.9, 0.02),
    bin("stent_calypso", 0.362, 0.7, 0.0),
    bin("medina_side", 0.336, 0.8, 0.0),
    bin("atrial_fibrillation", 0.143, 0.8, 0.0),
    bin("definition_score", 0.006, 0.9, 0.0),
    bin("history_of_cancer", 0.051, 0.6, 0.0),
    bin("stent_synergy", 0.01, 0.7, 0.0),
    num("stent_diameter", 3.25, 0.513, 2.0, 5.0, 0.25, (2.375, 0.22), 0.0),
    num("stent_length", 24.5, 8.34, 8.0, 48.0, 1.0, (33.0, 2.89), 0.0),
    bin("ad_hoc_pci", 0.407, 0.8, 0.0),
    bin("previous_pci", 0.413, 0.8, 0.0),
    bin("stent_xience", 0.12, 0.7, 0.0),
    bin("cto_bifurcation", 0.081, 0.8, 0.0),
    num("ldl_cholesterol", 100.0, 35.0, 30.0, 250.0, 1.0, (160.0, 25.0), 0.4),
];

pub fn schema() -> Schema {
    let columns = FEATURES
        .iter()
        .map(|f| match f.kind {
            Kind::Normal { edge_mu, edge_sigma, .. } => ColumnSchema::numeric(f.name).with_edge(EdgeDistribution::Normal {
                mu: edge_mu,
                sigma: edge_sigma,
            }),
            Kind::Binary { edge_p, .. } => ColumnSchema::categorical(f.name, ["0", "1"]).with_edge(EdgeDistribution::Categorical {
                probs: BTreeMap::from([("0".to_string(), round6(1.0 - edge_p)), ("1".to_string(), edge_p)]),
            }),
        })
        .collect();
    Schema {
        target: TargetSpec::new(TARGET),
        columns,
    }
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

fn quantize(v: f64, lo: f64, hi: f64, step: f64) -> f64 {
    let q = (v.clamp(lo, hi) / step).round() * step;
    (q * 1e6).round() / 1e6
}

/// Logistic draw with scale `s`.
fn logistic(r: &mut rng::Rng, s: f64) -> f64 {
    let u: f64 = r.random_range(1e-12..1.0 - 1e-12);
    s * (u / (1.0 - u)).ln()
}

/// The benchmark table for `seed`. The bundled files use [`DEFAULT_SEED`].
pub fn generate(seed: u64) -> Result<Table> {
    generate_with(seed, [W_AGE, W_EF, W_CEREBRO, W_SINGLE_VESSEL], NOISE)
}

fn generate_with(seed: u64, w: [f64; 4], noise: f64) -> Result<Table> {
    let mut r = rng::derived_rng(seed, &[rng::tag("benchmark")]);
    let std_normal = Normal::new(0.0, 1.0).expect("valid normal");
    let n = N_ROWS;
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(n); FEATURES.len()];
    let mut risk = Vec::with_capacity(n);
    for _ in 0..n {
        let z_age: f64 = std_normal.sample(&mut r);
        let mut row = Vec::with_capacity(FEATURES.len());
        for f in &FEATURES {
            let v = match f.kind {
                Kind::Normal { mu, sigma, lo, hi, step, .. } => {
                    let z = match f.name {
                        "age" => z_age,
                        "ckd_egfr" => -0.35 * z_age + (1.0f64 - 0.35 * 0.35).sqrt() * std_normal.sample(&mut r),
                        _ => std_normal.sample(&mut r),
                    };
                    quantize(mu + sigma * z, lo, hi, step)
                }
                Kind::Binary { p, .. } => f64::from(u8::from(r.random::<f64>() < p)),
            };
            row.push(v);
        }
        let z = |name: &str| {
            let i = FEATURES.iter().position(|f| f.name == name).expect("known feature");
            match FEATURES[i].kind {
                Kind::Normal { mu, sigma, .. } => (row[i] - mu) / sigma,
                Kind::Binary { .. } => row[i],
            }
        };
        let score = w[0] * z("age")
            + w[1] * z("ejection_fraction")
            + w[2] * z("cerebrovascular_disease")
            + w[3] * z("single_vessel_disease")
            + logistic(&mut r, noise);
        risk.push(score);
        for (c, v) in cols.iter_mut().zip(row) {
            c.push(v);
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| risk[b].total_cmp(&risk[a]));
    let mut target = vec![0u8; n];
    for &i in &order[..N_POSITIVES] {
        target[i] = 1;
    }
    let schema = schema();
    let columns = FEATURES
        .iter()
        .zip(cols)
        .zip(schema.columns)
        .map(|((f, values), s)| {
            let cells: Vec<Option<f64>> = values
                .into_iter()
                .map(|v| (f.missing == 0.0 || r.random::<f64>() >= f.missing).then_some(v))
                .collect();
            Column::from_options(s, &cells)
        })
        .collect();
    Table::with_source_ids(columns, target)
}

/// Experiment config matching the bundled files.
pub fn config() -> serde_json::Value {
    json!({
        "dataset": "benchmark.csv",
        "schema": "benchmark_schema.json",
        "test_frac": 0.2,
        "k_folds": 10,
        "seed": DEFAULT_SEED,
        "cv": true,
        "models": [
            {"name": "logistic", "family": "logistic", "hyper": {"l2_strength": 0.2}},
            {"name": "random_forest", "family": "random_forest", "hyper": {"n_trees": 150}},
            {"name": "gbdt", "family": "gbdt", "hyper": {"n_rounds": 100}},
            {"name": "kan", "family": "kan"}
        ],
        "regimes": [
            {"kind": "none"},
            {"kind": "generator", "generator": "arf", "n": 500},
            {"kind": "generator", "generator": "copula", "n": 500},
            {"kind": "generator", "generator": "tvae", "n": 500},
            {"kind": "edge", "n": 500},
            {"kind": "generator_plus_edge", "generator": "arf", "n": 500, "n_edge": 500}
        ],
        "stress": {"n": 200},
        "metrics": {"ece_bins": 10, "threshold": 0.5},
        "importance": {"enabled": true, "repeats": 10},
        "out_dir": "../out"
    })
}

/// Writes `benchmark.csv`, `benchmark_schema.json` and
/// `benchmark_config.json` into `dir`.
pub fn write_bundle(dir: impl AsRef<Path>, seed: u64) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let schema = schema();
    generate(seed)?.write_csv(dir.join("benchmark.csv"), &schema.target)?;
    let write = |name: &str, v: String| {
        let p = dir.join(name);
        fs::write(&p, v + "\n").map_err(|e| Error::io(p, e))
    };
    write("benchmark_schema.json", serde_json::to_string_pretty(&schema)?)?;
    let mut cfg = config();
    cfg["seed"] = json!(seed);
    write("benchmark_config.json", serde_json::to_string_pretty(&cfg)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_shape() {
        let t = generate(DEFAULT_SEED).unwrap();
        assert_eq!(t.n_rows(), N_ROWS);
        assert_eq!(t.positives(), N_POSITIVES);
        assert_eq!(t.n_cols(), 22);
        let ldl = t.column("ldl_cholesterol").unwrap().missing_count();
        assert!(ldl > 700 && ldl < 950, "{ldl}");
        schema().validate().unwrap();
        let target = TargetSpec::new(TARGET);
        assert_eq!(
            generate(DEFAULT_SEED).unwrap().to_csv_string(&target).unwrap(),
            t.to_csv_string(&target).unwrap()
        );
    }

    #[test]
    fn marginals_follow_their_targets() {
        let t = generate(1).unwrap();
        let mean = |name: &str| {
            let c = t.column(name).unwrap();
            let v: Vec<f64> = (0..c.len()).filter_map(|i| c.get(i)).collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        assert!((mean("age") - 63.9).abs() < 1.0);
        assert!((mean("ejection_fraction") - 56.2).abs() < 1.0);
        assert!((mean("single_vessel_disease") - 0.465).abs() < 0.04);
    }
}
