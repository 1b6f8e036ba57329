use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const TWO_STATE: &str = r#"{
  "n": 2, "p": 1,
  "A": [[0.9, 1.0], [0.0, 0.8]],
  "C": [[1.0, 0.0]],
  "W": {"diag": [1.0, 1.5]},
  "V": [[10.0]],
  "X0": [[0.0, 0.0], [0.0, 0.0]]
}"#;

const TWO_OUTPUTS: &str = r#"{
  "n": 2, "p": 2,
  "A": [[0.5, 0.0], [0.0, 0.5]],
  "C": [[1.0, 0.0], [0.0, 1.0]],
  "W": {"diag": [1.0, 1.0]},
  "V": {"diag": [2.0, 3.0]},
  "X0": {"diag": [1.0, 1.0]}
}"#;

fn lapkf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lapkf"))
        .args(args)
        .env_remove("LAPLACE_EST_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn validate_reports_model() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", TWO_STATE);
    let o = lapkf(&["validate", s(&model)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("n = 2, p = 1"));
    assert!(out.contains("spectral radius of A: 0.900000"));
}

#[test]
fn validate_rejects_bad_models() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.json", &TWO_STATE.replace("[[10.0]]", "[[-1.0]]"));
    let o = lapkf(&["validate", s(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("V"), "{}", stderr(&o));
    let missing = dir.path().join("nope.json");
    assert_eq!(lapkf(&["validate", s(&missing)]).status.code(), Some(2));
    let garbage = write(dir.path(), "g.json", "{not json");
    assert_eq!(lapkf(&["validate", s(&garbage)]).status.code(), Some(2));
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(lapkf(&[]).status.code(), Some(1));
    assert_eq!(lapkf(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(lapkf(&["simulate", "m.json"]).status.code(), Some(1));
    assert_eq!(lapkf(&["estimate", "m.json", "--method", "bogus", "--traj", "t.csv"]).status.code(), Some(1));
    assert_eq!(lapkf(&["--help"]).status.code(), Some(0));
}

#[test]
fn simulate_then_estimate_every_method() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", TWO_STATE);
    let traj = dir.path().join("traj.csv");
    let o = lapkf(&["simulate", s(&model), "--horizon", "8", "--seed", "3", "--out", s(&traj)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&traj).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "k,x_0,x_1,y_0");
    assert_eq!(lines.len(), 10);

    for method in ["randomized", "linear", "map", "map-w1", "particle"] {
        let est = dir.path().join(format!("{method}.csv"));
        let o = lapkf(&[
            "estimate", s(&model), "--method", method, "--traj", s(&traj), "--out", s(&est),
            "--ensemble-size", "20", "--particles", "200",
        ]);
        assert_eq!(o.status.code(), Some(0), "{method}: {}", stderr(&o));
        let text = std::fs::read_to_string(&est).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "k,xhat_0,xhat_1");
        assert_eq!(lines.len(), 10, "{method}");
    }
}

#[test]
fn outputs_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", TWO_STATE);
    let run = |name: &str| {
        let traj = dir.path().join(format!("{name}.csv"));
        lapkf(&["simulate", s(&model), "--horizon", "5", "--seed", "9", "--out", s(&traj)]);
        let est = dir.path().join(format!("{name}-est.csv"));
        lapkf(&[
            "estimate", s(&model), "--method", "randomized", "--traj", s(&traj), "--out",
            s(&est), "--ensemble-size", "30", "--seed", "4",
        ]);
        (std::fs::read(traj).unwrap(), std::fs::read(est).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn window_one_map_needs_scalar_measurements() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", TWO_OUTPUTS);
    let traj = dir.path().join("traj.csv");
    assert_eq!(
        lapkf(&["simulate", s(&model), "--horizon", "3", "--out", s(&traj)]).status.code(),
        Some(0)
    );
    let o = lapkf(&["estimate", s(&model), "--method", "map-w1", "--traj", s(&traj)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("scalar measurements required"));
}

#[test]
fn estimate_rejects_mismatched_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", TWO_OUTPUTS);
    let traj = write(dir.path(), "t.csv", "k,x_0,x_1,y_0\n0,0,0,1.0\n");
    let o = lapkf(&["estimate", s(&model), "--method", "linear", "--traj", s(&traj)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("y_1"));
}

#[test]
fn theorem_arithmetic() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", TWO_STATE);
    let o = lapkf(&["theorem", s(&model), "--epsilon", "0.5", "--delta", "0.1", "--m", "2"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).lines().any(|l| l == "I = 80"), "{}", stdout(&o));
    let o = lapkf(&["theorem", s(&model), "--epsilon", "0.5", "--delta", "1.5", "--m", "2"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("delta"));
}

#[test]
fn theorem_estimates_m() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", TWO_STATE);
    let o = lapkf(&[
        "theorem", s(&model), "--epsilon", "0.5", "--delta", "0.1", "--horizon", "5",
        "--trials", "5", "--reference-size", "50",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("k,M,stderr"));
    assert!(out.lines().any(|l| l.starts_with("I = ")));
}

#[test]
fn benchmark_writes_csv() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "m.json", TWO_STATE);
    let config = write(
        dir.path(),
        "bench.json",
        r#"{"model": "m.json", "horizon": 4, "trials": 3, "seed": 2,
            "estimators": [{"kind": "randomized", "ensemble_size": 10}, {"kind": "linear"},
                           {"kind": "particle", "particles": 50}, {"kind": "map"}]}"#,
    );
    let out = dir.path().join("r.csv");
    let o = lapkf(&["--threads", "2", "benchmark", "--config", s(&config), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("estimator,k,mse,stderr,analytic_trace\n"));
    assert_eq!(text.lines().count(), 1 + 4 * 5);

    let o = lapkf(&["benchmark", "--config", s(&config)]);
    assert_eq!(o.status.code(), Some(1), "no output path");
    let bad = write(dir.path(), "bad.json", r#"{"model": "m.json", "horizon": 4, "estimators": []}"#);
    let o = lapkf(&["benchmark", "--config", s(&bad), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("estimators"));
}

#[test]
fn thread_override_must_be_numeric() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "m.json", TWO_STATE);
    let o = Command::new(env!("CARGO_BIN_EXE_lapkf"))
        .args(["validate", s(&model)])
        .env("LAPLACE_EST_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("LAPLACE_EST_THREADS"));
}

/// Every flag of every subcommand must appear in its help text with a
/// description.
#[test]
fn help_documents_every_flag() {
    let expected: &[(&str, &[&str])] = &[
        ("validate", &[]),
        ("simulate", &["--horizon", "--seed", "--x0", "--out", "--threads"]),
        (
            "estimate",
            &[
                "--method", "--traj", "--out", "--ensemble-size", "--sampler", "--particles",
                "--map-tol", "--map-max-iter", "--seed",
            ],
        ),
        ("benchmark", &["--config", "--out"]),
        (
            "theorem",
            &[
                "--epsilon", "--delta", "--horizon", "--trials", "--reference-size", "--sampler",
                "--m", "--seed",
            ],
        ),
    ];
    for (sub, flags) in expected {
        let o = lapkf(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0));
        let help = stdout(&o);
        let lines: Vec<&str> = help.lines().collect();
        let mut listed = 0;
        for (i, line) in lines.iter().enumerate() {
            let t = line.trim_start();
            if let Some(rest) = t.strip_prefix("--") {
                listed += 1;
                let name = rest.split([' ', '<', '=']).next().unwrap();
                // Description on the same line, or on the next when wrapped.
                let inline = t.split("  ").filter(|s| !s.trim().is_empty()).count() >= 2;
                let next = lines.get(i + 1).map(|l| l.trim_start()).unwrap_or("");
                let below = !next.is_empty() && !next.starts_with('-');
                assert!(inline || below, "`{sub} --{name}` lacks a description:\n{help}");
            }
        }
        for f in *flags {
            assert!(help.contains(f), "`{sub}` help misses {f}:\n{help}");
        }
        // --help and --version add two; validate only lists global flags.
        assert!(listed >= flags.len(), "{sub}: {listed} flags listed");
    }
}
