use std::fs;
use std::path::PathBuf;

use tabrisk::benchmark;
use tabrisk::config::ExperimentConfig;
use tabrisk::data::load_csv;

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

#[test]
fn bundled_files_match_the_generator() {
    let dir = tempfile::tempdir().unwrap();
    benchmark::write_bundle(dir.path(), benchmark::DEFAULT_SEED).unwrap();
    for name in ["benchmark.csv", "benchmark_schema.json", "benchmark_config.json"] {
        let fresh = fs::read_to_string(dir.path().join(name)).unwrap();
        let bundled = fs::read_to_string(data_dir().join(name)).unwrap();
        assert!(fresh == bundled, "{name} is stale; regenerate with `tabrisk bench-data`");
    }
}

#[test]
fn bundled_config_validates_and_loads() {
    let cfg = ExperimentConfig::load(data_dir().join("benchmark_config.json")).unwrap();
    cfg.validate().unwrap();
    let schema = cfg.load_schema().unwrap();
    assert!(schema.columns.iter().all(|c| c.edge.is_some()));
    let t = load_csv(&cfg.dataset, &schema, &cfg.target_name(&schema)).unwrap();
    assert_eq!((t.n_rows(), t.positives()), (benchmark::N_ROWS, benchmark::N_POSITIVES));
    assert_eq!(t.n_cols(), 22);
}
