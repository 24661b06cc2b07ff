use std::path::Path;
use std::process::Command;

fn cglm(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_cglm"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &std::process::Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const DATA: &str = "y,x1,x2\n1.2,0.1,1.0\n2.3,0.9,0.4\n0.7,-0.3,0.8\n3.1,1.4,-0.2\n1.9,0.6,0.1\n2.8,1.1,0.5\n0.4,-0.8,0.9\n";

#[test]
fn fit_lm_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "d.csv", DATA);
    write(dir.path(), "c.json", r#"{"R": [[1, 0, 0], [0, 0, 1]], "b": [0, 0]}"#);
    let run = |out: &str, threads: &str| {
        let o = cglm(
            dir.path(),
            &[
                "--seed", "5", "--threads", threads, "--out-dir", out, "fit-lm", "--data", "d.csv", "--add-intercept",
                "--constraints", "c.json", "--iters", "1500", "--burnin", "300", "--chains", "3",
            ],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(dir.path().join(out).join("samples.csv")).unwrap()
    };
    let a = run("a", "1");
    let b = run("b", "4");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("intercept,x1,x2\n"));
    assert_eq!(text.lines().count(), 1 + 3 * 600);
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["coefficients"].as_array().unwrap().len(), 3);
    assert!(summary["dic"].as_f64().unwrap().is_finite());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "d.csv", DATA);
    write(dir.path(), "bad.csv", "y,x1\n1,2\n3,oops\n");
    write(dir.path(), "empty.csv", "");
    write(dir.path(), "infeasible.json", r#"{"R": [[1, 0], [-1, 0]], "b": [1, 0]}"#);

    let o = cglm(dir.path(), &["fit-lm", "--data", "d.csv", "--constraints", "infeasible.json"]);
    assert_eq!(code(&o), 2);
    for bad in ["bad.csv", "empty.csv", "missing.csv"] {
        assert_eq!(code(&cglm(dir.path(), &["fit-lm", "--data", bad])), 3, "{bad}");
    }
    let o = cglm(dir.path(), &["fit-lm", "--data", "d.csv", "--response", "nope"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope"));
    assert_eq!(code(&cglm(dir.path(), &["fit-glm", "--no-such-flag"])), 3);
    // negative counts are outside the Poisson support
    write(dir.path(), "neg.csv", "y,x1\n1,0.5\n-2,0.1\n3,0.9\n");
    let o = cglm(dir.path(), &["fit-glm", "--data", "neg.csv", "--family", "poisson"]);
    assert_eq!(code(&o), 3);
    assert_eq!(code(&cglm(dir.path(), &["--help"])), 0);
}

#[test]
fn poisson_fit_with_offset_and_ergodicity() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "p.csv", "y,x,t\n1,0.1,7000\n0,0.4,3500\n3,0.8,7000\n2,0.3,14000\n5,0.9,7000\n1,0.2,7000\n");
    write(dir.path(), "c.json", r#"{"R": [[0, 1]], "b": [0]}"#);
    let o = cglm(
        dir.path(),
        &[
            "fit-glm", "--data", "p.csv", "--family", "poisson", "--offset", "log(t/7000)", "--add-intercept",
            "--constraints", "c.json", "--iters", "1200", "--burnin", "200", "--prior", "empirical", "--ergodicity-mc",
            "500", "--trace",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("summary.json")).unwrap()).unwrap();
    let h = summary["ergodicity"]["h_hat"].as_f64().unwrap();
    assert!(h > 0.0 && h <= 1.0);
    let samples = std::fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    assert!(samples.starts_with("intercept,x\n"));
    for line in samples.lines().skip(1) {
        let slope: f64 = line.split(',').nth(1).unwrap().parse().unwrap();
        assert!(slope >= -1e-8);
    }
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("chain,draw,intercept,x\n"));
}

#[test]
fn bernstein_design_feeds_fit_lm() {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::from("y,dose\n");
    for i in 0..30 {
        let d = i as f64 / 29.0;
        text.push_str(&format!("{},{}\n", (3.0 * d).tanh() + 0.05 * ((i * 7) % 5) as f64, d));
    }
    write(dir.path(), "s.csv", &text);
    let o = cglm(
        dir.path(),
        &["--out-dir", "b", "design-bernstein", "--degree", "4", "--mode", "mono-inc", "--data", "s.csv", "--cols", "dose"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = cglm(
        dir.path(),
        &[
            "--out-dir", "f", "fit-lm", "--data", "b/design.csv", "--constraints", "b/constraints.json", "--iters", "1500",
            "--burnin", "300",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let header = std::fs::read_to_string(dir.path().join("f/samples.csv")).unwrap();
    assert!(header.starts_with("intercept,dose_b1,dose_b2,dose_b3,dose_b4\n"));
}

#[test]
fn sample_tmvn_stays_in_region() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "t.json",
        r#"{"mu": [0, 0], "sigma": [[1, 0], [0, 1]], "R": [[1, 0], [0, 1], [1, 1]], "lower": [0, 0, 0.5], "upper": [null, null, 1]}"#,
    );
    let o = cglm(dir.path(), &["--seed", "2", "sample-tmvn", "--spec", "t.json", "--iters", "3000", "--burnin", "100"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("samples.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 2900);
    for line in text.lines().skip(1) {
        let v: Vec<f64> = line.split(',').map(|s| s.parse().unwrap()).collect();
        assert!(v[0] >= 0.0 && v[1] >= 0.0 && v[0] + v[1] >= 0.5 - 1e-12 && v[0] + v[1] <= 1.0 + 1e-12);
    }
}

#[test]
fn simulate_and_run_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let o = cglm(dir.path(), &["--seed", "4", "--out-dir", "s", "simulate", "--scenario", "C", "--replicates", "2"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep = std::fs::read_to_string(dir.path().join("s/replicate_002.csv")).unwrap();
    assert_eq!(rep.lines().count(), 101);
    assert_eq!(rep.lines().next().unwrap().split(',').count(), 12);

    let run = |out: &str| {
        let o = cglm(
            dir.path(),
            &[
                "--seed", "4", "--out-dir", out, "run-scenario", "--scenario", "a1", "--replicates", "3", "--iters", "800",
                "--burnin", "200",
            ],
        );
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read_to_string(dir.path().join(out).join("scenario_report.json")).unwrap()
    };
    let a = run("r1");
    assert_eq!(a, run("r2"));
    let report: serde_json::Value = serde_json::from_str(&a).unwrap();
    assert!(report["coefficients"]["beta2"]["variance_ratio"].as_f64().unwrap() > 0.0);
    assert_eq!(report["baseline"], "ols");
}
