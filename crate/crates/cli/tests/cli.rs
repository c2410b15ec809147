use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use blinkfit::io::{read_trace, PosteriorFile};
use blinkfit::posterior::Param;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blinkfit"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn simulate_single(dir: &Path, n: &str, seed: &str) -> std::path::PathBuf {
    let trace = dir.join(format!("trace_{n}_{seed}.csv"));
    ok(&[
        "simulate",
        "--model",
        "single",
        "--alpha",
        "0.1",
        "--beta",
        "0.15",
        "--lambda",
        "20",
        "--mu",
        "2",
        "--n",
        n,
        "--seed",
        seed,
        "--out",
        p(&trace),
    ]);
    trace
}

#[test]
fn simulate_is_deterministic_and_writes_truth() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    let truth = dir.path().join("truth.csv");
    for (out, t) in [(&a, Some(&truth)), (&b, None)] {
        let mut args = vec![
            "simulate",
            "--model",
            "ctmc",
            "--r-alpha",
            "1",
            "--r-beta",
            "0.5",
            "--lambda",
            "20",
            "--mu",
            "2",
            "--n",
            "500",
            "--seed",
            "11",
            "--out",
            p(out),
        ];
        if let Some(t) = t {
            args.extend(["--truth", p(t)]);
        }
        let stdout = ok(&args);
        assert!(stdout.contains("seed 11"));
    }
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let truth_text = fs::read_to_string(&truth).unwrap();
    assert!(truth_text.starts_with("t,state,on_fraction\n"));
    assert_eq!(truth_text.lines().count(), 501);
    let trace = read_trace(fs::read(&a).unwrap().as_slice()).unwrap();
    assert_eq!(trace.len(), 500);
}

#[test]
fn simulate_rejects_bad_requests() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let zero = run(&[
        "simulate",
        "--alpha",
        "0.1",
        "--beta",
        "0.1",
        "--lambda",
        "20",
        "--mu",
        "2",
        "--n",
        "0",
        "--out",
        p(&out),
    ]);
    assert!(!zero.status.success());
    let missing = run(&[
        "simulate",
        "--model",
        "ctmc",
        "--lambda",
        "20",
        "--mu",
        "2",
        "--n",
        "10",
        "--out",
        p(&out),
    ]);
    assert!(!missing.status.success());
    let unwritable = run(&[
        "simulate",
        "--alpha",
        "0.1",
        "--beta",
        "0.1",
        "--lambda",
        "20",
        "--mu",
        "2",
        "--n",
        "5",
        "--out",
        "/nonexistent-dir/x.csv",
    ]);
    assert!(!unwritable.status.success());
}

#[test]
fn infer_with_known_emissions_has_two_axes() {
    let dir = tempfile::tempdir().unwrap();
    let trace = simulate_single(dir.path(), "2000", "5");
    let post = dir.path().join("post.json");
    let stdout = ok(&[
        "infer",
        "--model",
        "single",
        "--grid",
        "alpha=0.01:0.4:40",
        "--grid",
        "beta=0.01:0.4:40",
        "--fix",
        "lambda=20",
        "--fix",
        "mu=2",
        "--in",
        p(&trace),
        "--out",
        p(&post),
    ]);
    assert!(stdout.starts_with("mode "));
    let text = fs::read_to_string(&post).unwrap();
    let file = PosteriorFile::from_json(&text).unwrap();
    assert_eq!(file.axes.len(), 2);
    assert_eq!(file.shape, vec![40, 40]);
    assert_eq!(file.credible_regions.len(), 3);
    assert_eq!(file.to_json().unwrap(), text);
    let alpha = file.mode_value(Param::Alpha).unwrap();
    let beta = file.mode_value(Param::Beta).unwrap();
    assert!(
        (alpha - 0.1).abs() < 0.04 && (beta - 0.15).abs() < 0.05,
        "{alpha} {beta}"
    );
}

#[test]
fn infer_output_is_worker_invariant() {
    let dir = tempfile::tempdir().unwrap();
    let trace = simulate_single(dir.path(), "400", "9");
    let mut outputs = Vec::new();
    for workers in ["1", "3"] {
        let out = dir.path().join(format!("post{workers}.json"));
        ok(&[
            "infer",
            "--model",
            "ctmc",
            "--quad-nodes",
            "16",
            "--grid",
            "r_alpha=0.05:0.5:6",
            "--grid",
            "r_beta=0.05:0.5:5",
            "--grid",
            "mu=1:3:3",
            "--fix",
            "lambda=20",
            "--workers",
            workers,
            "--in",
            p(&trace),
            "--out",
            p(&out),
        ]);
        outputs.push(fs::read(&out).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn multistep_reports_selected_d() {
    let dir = tempfile::tempdir().unwrap();
    let trace = simulate_single(dir.path(), "200", "2");
    let out = dir.path().join("post.json");
    let stdout = ok(&[
        "infer",
        "--model",
        "multistep",
        "--grid",
        "r_alpha=0.1:2:4",
        "--grid",
        "r_beta=0.1:2:4",
        "--fix",
        "lambda=20",
        "--fix",
        "mu=2",
        "--in",
        p(&trace),
        "--out",
        p(&out),
    ]);
    // 2 * 2 = 4 needs 0.1 d^2 > 4, so d = 8
    assert!(stdout.contains("selected d = 8"), "{stdout}");
    let file = PosteriorFile::from_json(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(file.d, Some(8));
}

#[test]
fn infer_rejects_inconsistent_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let trace = simulate_single(dir.path(), "50", "1");
    let out = dir.path().join("post.json");
    let cases: [&[&str]; 4] = [
        &[
            "--model",
            "single",
            "--grid",
            "r_alpha=0.1:1:4",
            "--fix",
            "beta=0.1",
            "--fix",
            "lambda=20",
            "--fix",
            "mu=2",
        ],
        &[
            "--model",
            "single",
            "--d",
            "4",
            "--fix",
            "alpha=0.1",
            "--fix",
            "beta=0.1",
            "--fix",
            "lambda=20",
            "--fix",
            "mu=2",
        ],
        &[
            "--model",
            "ctmc",
            "--grid",
            "r_alpha=0.1:1:4",
            "--fix",
            "r_beta=0.1",
            "--fix",
            "lambda=20",
        ],
        &[
            "--model",
            "single",
            "--quad-nodes",
            "32",
            "--fix",
            "alpha=0.1",
            "--fix",
            "beta=0.1",
            "--fix",
            "lambda=20",
            "--fix",
            "mu=2",
        ],
    ];
    for extra in cases {
        let mut args = vec!["infer", "--in", p(&trace), "--out", p(&out)];
        args.extend_from_slice(extra);
        assert!(!run(&args).status.success(), "{extra:?} should fail");
    }
    let missing = run(&[
        "infer",
        "--fix",
        "alpha=0.1",
        "--fix",
        "beta=0.1",
        "--fix",
        "lambda=20",
        "--fix",
        "mu=2",
        "--in",
        "/nonexistent.csv",
        "--out",
        p(&out),
    ]);
    assert!(!missing.status.success());
}

#[test]
fn infer_state_writes_probabilities() {
    let dir = tempfile::tempdir().unwrap();
    let trace = simulate_single(dir.path(), "300", "4");
    let (a, b) = (dir.path().join("s1.csv"), dir.path().join("s2.csv"));
    for out in [&a, &b] {
        ok(&[
            "infer-state",
            "--grid",
            "alpha=0.02:0.3:8",
            "--grid",
            "beta=0.02:0.3:8",
            "--fix",
            "lambda=20",
            "--fix",
            "mu=2",
            "--in",
            p(&trace),
            "--out",
            p(out),
        ]);
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,p_on"));
    let values: Vec<f64> = lines.map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(values.len(), 300);
    assert!(values.iter().all(|v| (0.0..=1.0).contains(v)));

    let wrong = run(&[
        "infer-state",
        "--model",
        "ctmc",
        "--fix",
        "r_alpha=0.1",
        "--fix",
        "r_beta=0.1",
        "--fix",
        "lambda=20",
        "--fix",
        "mu=2",
        "--in",
        p(&trace),
        "--out",
        p(&a),
    ]);
    assert!(!wrong.status.success());
}

#[test]
fn threshold_table_layout() {
    let dir = tempfile::tempdir().unwrap();
    let trace = simulate_single(dir.path(), "5000", "8");
    let out = dir.path().join("thr.csv");
    ok(&["threshold", "--in", p(&trace), "--out", p(&out)]);
    let text = fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "record,threshold,bins,alpha_hat,beta_hat");
    assert_eq!(lines.iter().filter(|l| l.starts_with("sweep,")).count(), 50);
    for rule in [
        "rule_between_peaks",
        "rule_background_two_sigma",
        "rule_background_last_count",
        "rule_peak_midpoint",
    ] {
        assert!(lines.iter().any(|l| l.starts_with(rule)), "{rule}");
    }
    assert!(lines.iter().any(|l| l.starts_with("summary_mean,,25,")));
    assert!(lines.iter().any(|l| l.starts_with("summary_sd,,25,")));
}

#[test]
fn interval_converts_physical_rates() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    ok(&[
        "simulate",
        "--model",
        "ctmc",
        "--r-alpha",
        "1",
        "--r-beta",
        "0.5",
        "--lambda",
        "20",
        "--mu",
        "2",
        "--n",
        "300",
        "--seed",
        "3",
        "--out",
        p(&a),
    ]);
    ok(&[
        "simulate",
        "--model",
        "ctmc",
        "--r-alpha",
        "2",
        "--r-beta",
        "1",
        "--lambda",
        "40",
        "--mu",
        "4",
        "--n",
        "300",
        "--seed",
        "3",
        "--interval",
        "0.5",
        "--out",
        p(&b),
    ]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    let post = dir.path().join("post.json");
    let stdout = ok(&[
        "infer",
        "--model",
        "ctmc",
        "--quad-nodes",
        "16",
        "--grid",
        "r_alpha=0.4:4:10",
        "--grid",
        "r_beta=0.2:2:10",
        "--fix",
        "lambda=40",
        "--fix",
        "mu=4",
        "--interval",
        "0.5",
        "--in",
        p(&a),
        "--out",
        p(&post),
    ]);
    let file = PosteriorFile::from_json(&fs::read_to_string(&post).unwrap()).unwrap();
    assert_eq!(file.axes[0].upper, 2.0);
    assert!(stdout.contains("lambda=40"), "{stdout}");
    let bad = run(&[
        "simulate",
        "--alpha",
        "0.1",
        "--beta",
        "0.1",
        "--lambda",
        "20",
        "--mu",
        "2",
        "--n",
        "5",
        "--interval",
        "0",
        "--out",
        p(&a),
    ]);
    assert!(!bad.status.success());
}
