use lapkf::bench::{export_csv, read_csv, run_benchmark, BenchmarkConfig};
use lapkf::LtvModel;

#[test]
fn config_on_disk_resolves_model_and_round_trips_csv() {
    let dir = tempfile::tempdir().unwrap();
    let sub = dir.path().join("models");
    std::fs::create_dir(&sub).unwrap();
    std::fs::write(sub.join("m.json"), LtvModel::example_two_state().to_json_string()).unwrap();
    let config_path = dir.path().join("bench.json");
    std::fs::write(
        &config_path,
        r#"{"model": "models/m.json", "horizon": 6, "trials": 20, "seed": 4,
            "estimators": [{"kind": "linear"}, {"kind": "randomized", "ensemble_size": 8}]}"#,
    )
    .unwrap();

    let config = BenchmarkConfig::load(&config_path).unwrap();
    let result = run_benchmark(&config).unwrap();
    let out = dir.path().join("r.csv");
    export_csv(&result, &out).unwrap();

    let rows = read_csv(std::fs::File::open(&out).unwrap()).unwrap();
    assert_eq!(rows.len(), 2 * 7);
    for row in &rows {
        let curve = result.curve(&row.estimator).unwrap();
        assert_eq!(row.mse, curve.mse[row.k]);
        assert_eq!(row.analytic_trace, curve.analytic_trace.as_ref().map(|t| t[row.k]));
    }
}

#[test]
fn missing_model_file_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("bench.json");
    std::fs::write(&config_path, r#"{"model": "absent.json", "horizon": 3, "estimators": [{"kind": "linear"}]}"#).unwrap();
    let config = BenchmarkConfig::load(&config_path).unwrap();
    assert!(run_benchmark(&config).is_err());
}
