//! End-to-end checks of the command-line surface: exit codes, output
//! schemas, and the reproducibility manifest.

use twinfock::cli::parse_and_dispatch;
use twinfock::output::sha256_hex;

fn run(args: &[&str]) -> i32 {
    let argv: Vec<String> = std::iter::once("twinfock".to_string())
        .chain(args.iter().map(|s| s.to_string()))
        .collect();
    parse_and_dispatch(argv)
}

#[test]
fn dist_hong_ou_mandel_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dist.csv");
    let code = run(&[
        "dist",
        "--photons",
        "2",
        "--phase",
        "1.5707963",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("m,probability"));
    let rows: Vec<(i64, f64)> = lines
        .map(|l| {
            let (m, p) = l.split_once(',').unwrap();
            (m.parse().unwrap(), p.parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 3);
    assert_eq!((rows[0].0, rows[1].0, rows[2].0), (-1, 0, 1));
    assert!((rows[0].1 - 0.5).abs() < 1e-9);
    assert!(rows[1].1 < 1e-12);
    assert!((rows[2].1 - 0.5).abs() < 1e-9);
}

#[test]
fn odd_photon_total_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let code = run(&[
        "simulate",
        "--photons",
        "10001",
        "--phase",
        "0.1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 2);
    assert!(!out.exists());
}

#[test]
fn unknown_flag_is_usage_error() {
    assert_eq!(run(&["dist", "--photons", "2", "--bogus", "1"]), 2);
}

#[test]
fn malformed_photon_list_is_usage_error() {
    assert_eq!(
        run(&["sweep", "--photons", "10,abc", "--trials", "1", "--out", "-"]),
        2
    );
}

#[test]
fn unwritable_output_path_is_runtime_error() {
    assert_eq!(
        run(&[
            "dist",
            "--photons",
            "2",
            "--phase",
            "0.3",
            "--out",
            "/nonexistent-dir/never/out.csv",
        ]),
        1
    );
}

#[test]
fn sweep_schema_manifest_and_rerun_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let args = [
        "sweep",
        "--photons",
        "10,20",
        "--efficiency",
        "1.0",
        "--bursts",
        "3",
        "--trials",
        "4",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ];
    assert_eq!(run(&args), 0);
    let first = std::fs::read(&out).unwrap();
    let text = String::from_utf8(first.clone()).unwrap();
    assert_eq!(
        text.lines().next(),
        Some("N,eta,mean_abs_error,trial_stddev,mean_sigma_post,hl,snl,true_snl,trials,excluded")
    );
    assert_eq!(text.lines().count(), 3);

    let manifest_path = format!("{}.manifest.json", out.to_str().unwrap());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 5);
    assert_eq!(
        manifest["outputs"][0]["sha256"].as_str().unwrap(),
        sha256_hex(&first)
    );

    // Rerunning the identical command reproduces the bytes exactly.
    assert_eq!(run(&args), 0);
    let second = std::fs::read(&out).unwrap();
    assert_eq!(first, second);
}

#[test]
fn simulate_emits_posterior_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("post.csv");
    let code = run(&[
        "simulate",
        "--photons",
        "100",
        "--phase",
        "0.3",
        "--bursts",
        "5",
        "--seed",
        "9",
        "--grid",
        "64",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next(), Some("phase,relative_probability"));
    assert_eq!(text.lines().count(), 65);
    let peak = text
        .lines()
        .skip(1)
        .map(|l| l.split_once(',').unwrap().1.parse::<f64>().unwrap())
        .fold(0.0f64, f64::max);
    assert!((peak - 1.0).abs() < 1e-12, "posterior not peak-normalized");
}

#[test]
fn phase_scan_emits_ordered_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("scan.csv");
    let code = run(&[
        "phase-scan",
        "--photons",
        "20",
        "--phases",
        "0.1,0.5",
        "--bursts",
        "3",
        "--trials",
        "5",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&out).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("phase_true,mean_phi_hat,trial_stddev,mean_sigma_post,mean_abs_error,trials,excluded")
    );
    let phases: Vec<f64> = lines
        .map(|l| l.split(',').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(phases, vec![0.1, 0.5]);
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(run(&["--help"]), 0);
    assert_eq!(run(&["--version"]), 0);
}

#[test]
fn json_format_emits_valid_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dist.json");
    let code = run(&[
        "dist",
        "--photons",
        "4",
        "--phase",
        "0.7",
        "--format",
        "json",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let rows: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(rows.as_array().unwrap().len(), 5);
}
