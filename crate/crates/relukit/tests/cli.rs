//! End-to-end checks of the command-line surface: every document one
//! subcommand emits is accepted by the subcommands that consume it, runs are
//! deterministic under a fixed seed, and exit codes follow the contract.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_relukit"))
}

fn run_ok(args: &[&str]) -> String {
    let out = bin().args(args).output().expect("spawn relukit");
    assert!(
        out.status.success(),
        "relukit {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn run_code(args: &[&str]) -> i32 {
    bin()
        .args(args)
        .output()
        .expect("spawn relukit")
        .status
        .code()
        .unwrap_or(-1)
}

fn path_str(dir: &Path, name: &str) -> String {
    dir.join(name).to_str().unwrap().to_string()
}

#[test]
fn spline_pipeline_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let spline = path_str(dir.path(), "spline.json");
    std::fs::write(
        &spline,
        r#"{"knots":[0.25,0.5,0.75],"pieces":[{"a":1.0,"b":0.0},{"a":-1.0,"b":0.5},{"a":2.0,"b":-1.0},{"a":0.0,"b":0.5}]}"#,
    )
    .unwrap();
    for basis in ["one-sided", "added", "substituted", "compound"] {
        let net = path_str(dir.path(), &format!("net-{basis}.json"));
        run_ok(&[
            "compile-spline1d",
            "--spline",
            &spline,
            "--basis",
            basis,
            "--out",
            &net,
        ]);
        let report = run_ok(&[
            "verify", "--net", &net, "--target", &spline, "--samples", "5000",
        ]);
        let value: serde_json::Value = serde_json::from_str(&report).unwrap();
        let max_abs = value["max_abs_err"].as_f64().unwrap();
        assert!(max_abs <= 1e-9, "{basis}: max_abs_err {max_abs}");
    }
}

#[test]
fn train_analyze_verify_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = path_str(dir.path(), "data.csv");
    run_ok(&["make-data", "--fn", "quad", "--n", "2", "--step", "0.25", "--out", &data]);
    let first = std::fs::read_to_string(&data).unwrap();
    assert!(first.starts_with("x1,x2,z\n"));
    assert_eq!(first.lines().count(), 26); // header + 5x5 lattice

    let net = path_str(dir.path(), "net.json");
    let report = path_str(dir.path(), "report.json");
    run_ok(&[
        "train", "--data", &data, "--units", "5", "--lr", "0.01", "--steps", "400",
        "--seed", "7", "--out", &net, "--report", &report,
    ]);
    let rep: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert!(rep["epsilon"].as_f64().unwrap().is_finite());
    assert_eq!(rep["samples"].as_u64().unwrap(), 25);

    // Determinism: identical seed gives byte-identical output files.
    let net2 = path_str(dir.path(), "net2.json");
    run_ok(&[
        "train", "--data", &data, "--units", "5", "--lr", "0.01", "--steps", "400",
        "--seed", "7", "--out", &net2,
    ]);
    assert_eq!(
        std::fs::read(&net).unwrap(),
        std::fs::read(&net2).unwrap()
    );

    let analysis = path_str(dir.path(), "analysis.json");
    let svg = path_str(dir.path(), "diagram.svg");
    run_ok(&["analyze", "--net", &net, "--report", &analysis, "--svg", &svg]);
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&analysis).unwrap()).unwrap();
    assert!(parsed["coverage"].as_f64().unwrap() >= 0.0);
    assert!(std::fs::read_to_string(&svg).unwrap().contains("<svg"));

    let verdict = run_ok(&[
        "verify", "--net", &net, "--target", "quad", "--samples", "1000", "--seed", "3",
    ]);
    let value: serde_json::Value = serde_json::from_str(&verdict).unwrap();
    assert!(value["epsilon"].as_f64().unwrap().is_finite());

    let out = run_ok(&["eval", "--net", &net, "--point", "0.5,0.5"]);
    let _: f64 = out.trim().parse().unwrap();
}

#[test]
fn approximate_and_construct_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let net = path_str(dir.path(), "approx.json");
    let fit = path_str(dir.path(), "fit.json");
    let out = run_ok(&[
        "approximate", "--fn", "poly16", "--M", "5", "--n", "2", "--out", &net,
        "--report", &fit, "--samples", "41",
    ]);
    assert!(out.contains("epsilon"));
    let fit: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&fit).unwrap()).unwrap();
    assert!(fit["epsilon"].as_f64().unwrap() < 0.1);

    // Emit a target document from the library, feed it to `construct`, and
    // verify the constructed network against the same document.
    let target = path_str(dir.path(), "target.json");
    {
        use relukit::construct::GridSpec;
        use relukit::network::{AffinePiece, PiecewiseLinear};
        let grid = GridSpec::new(2, vec![3, 3]).unwrap();
        let pieces = grid
            .arrangement()
            .regions
            .iter()
            .map(|r| {
                // Additive target: hinge in x plus linear in y.
                let kx = (r.witness[0] * 3.0).floor();
                AffinePiece::new(vec![kx + 1.0, 0.5], -kx * (kx + 1.0) / 6.0)
            })
            .collect::<Vec<_>>();
        let pl = PiecewiseLinear {
            arrangement: grid.arrangement().clone(),
            pieces,
        };
        relukit::json::write_file(Path::new(&target), &pl).unwrap();
    }
    let built = path_str(dir.path(), "built.json");
    run_ok(&["construct", "--grid", "3", "--n", "2", "--target", &target, "--out", &built]);
    let verdict = run_ok(&[
        "verify", "--net", &built, "--target", &target, "--samples", "2000",
    ]);
    let value: serde_json::Value = serde_json::from_str(&verdict).unwrap();
    assert!(value["max_abs_err"].as_f64().unwrap() <= 1e-8);
}

#[test]
fn exit_codes_follow_the_contract() {
    let dir = tempfile::tempdir().unwrap();
    // Unknown flags and missing files are validation errors.
    assert_eq!(run_code(&["eval", "--nonsense"]), 1);
    assert_eq!(run_code(&["eval", "--net", "missing.json", "--point", "0.5"]), 1);
    assert_eq!(run_code(&["make-data", "--fn", "nope", "--n", "1", "--step", "0.5", "--out", &path_str(dir.path(), "x.csv")]), 1);
    // Dimension mismatch is validation.
    let net = path_str(dir.path(), "net.json");
    std::fs::write(&net, r#"{"n":1,"output_bias":0.0,"units":[{"w":[1.0],"b":-0.5,"lambda":1.0}]}"#).unwrap();
    assert_eq!(run_code(&["eval", "--net", &net, "--point", "0.5,0.5"]), 1);
    // Divergence is a numeric failure.
    let data = path_str(dir.path(), "data.csv");
    run_ok(&["make-data", "--fn", "poly16", "--n", "1", "--step", "0.25", "--out", &data]);
    assert_eq!(
        run_code(&["train", "--data", &data, "--units", "4", "--lr", "1e200", "--steps", "50", "--seed", "0", "--out", &path_str(dir.path(), "d.json")]),
        2
    );
    // Help prints and exits cleanly.
    assert_eq!(run_code(&["--help"]), 0);
}
