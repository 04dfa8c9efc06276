use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spatial-css"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    run(dir, args).status.code().expect("exit code")
}

fn values(path: &Path) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().skip(1).map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect()
}

fn files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn synth_writes_one_row_per_cell() {
    let t = tempfile::tempdir().unwrap();
    ok(t.path(), &["synth", "--rows", "20", "--cols", "20", "--bumps", "3", "--seed", "7", "--out", "dir"]);
    let text = std::fs::read_to_string(t.path().join("dir/truth.csv")).unwrap();
    assert_eq!(text.lines().next(), Some("row,col,value"));
    assert_eq!(text.lines().count(), 401);

    ok(t.path(), &["synth", "--bumps", "0", "--noise", "0", "--out", "zero"]);
    assert!(values(&t.path().join("zero/truth.csv")).iter().all(|&v| v == 0.0));
}

#[test]
fn exit_codes() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path();
    assert_eq!(code(p, &["synth", "--bumps", "5-2", "--out", "x"]), 2);
    assert_eq!(code(p, &["synth", "--width-typo", "--out", "x"]), 2);
    assert_eq!(code(p, &["recover", "--synth", "--stations", "5", "--rho", "0", "--out", "x"]), 2);
    assert_eq!(code(p, &["recover", "--synth", "--stations", "5", "--method", "magic", "--out", "x"]), 2);
    assert_eq!(code(p, &["recover", "--truth", "missing.csv", "--stations", "5", "--out", "x"]), 2);
    std::fs::write(p.join("bad.csv"), "row,col,value\n0,0,abc\n").unwrap();
    assert_eq!(code(p, &["recover", "--truth", "bad.csv", "--stations", "1", "--out", "x"]), 2);
    assert_eq!(code(p, &["plot", "--out", "x"]), 2);
    assert_eq!(code(p, &["--help"]), 0);

    // All-zero truth: nothing to sample from, a runtime failure.
    ok(p, &["synth", "--bumps", "0", "--out", "zero"]);
    assert_eq!(code(p, &["recover", "--truth", "zero/truth.csv", "--stations", "3", "--out", "x"]), 1);
}

#[test]
fn pe_on_a_single_patch_is_a_uniform_split() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path();
    std::fs::write(p.join("domain.csv"), "row,col,value\n0,0,0\n0,1,0\n1,0,0\n1,1,0\n").unwrap();
    std::fs::write(p.join("stations.csv"), "station_id,row,col\n0,1,1\n").unwrap();
    std::fs::write(p.join("z.csv"), "station_id,volume\n0,10\n").unwrap();
    ok(
        p,
        &[
            "recover", "--station-file", "stations.csv", "--aggregates", "z.csv", "--domain", "domain.csv",
            "--method", "pe,css", "--out", "r",
        ],
    );
    assert_eq!(values(&p.join("r/estimate_pe.csv")), vec![2.5; 4]);
    for v in values(&p.join("r/estimate_css.csv")) {
        assert!((v - 2.5).abs() < 1e-9);
    }
}

#[test]
fn step_by_step_pipeline_matches_recover() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path();
    ok(p, &["synth", "--background", "1", "--seed", "3", "--out", "s"]);
    ok(p, &["stations", "--truth", "s/truth.csv", "--stations", "12", "--seed", "3", "--out", "st"]);
    ok(p, &["aggregate", "--truth", "s/truth.csv", "--station-file", "st/stations.csv", "--out", "ag"]);
    ok(p, &["recover", "--truth", "s/truth.csv", "--stations", "12", "--seed", "3", "--method", "pe", "--out", "r"]);
    let read = |f: &str| std::fs::read(p.join(f)).unwrap();
    assert_eq!(read("st/stations.csv"), read("r/stations.csv"));
    assert_eq!(read("ag/aggregates.csv"), read("r/aggregates.csv"));
    let patches = std::fs::read_to_string(p.join("st/patches.csv")).unwrap();
    assert!(patches.starts_with("row,col,station_id,weight\n"));
}

#[test]
fn css_run_is_aggregate_consistent_after_evaluation() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path();
    ok(p, &["synth", "--background", "1", "--seed", "5", "--out", "s"]);
    ok(p, &["recover", "--truth", "s/truth.csv", "--stations", "15", "--seed", "5", "--method", "css", "--out", "r"]);
    ok(p, &["evaluate", "--run", "r", "--out", "e"]);
    let eval: serde_json::Value = serde_json::from_slice(&std::fs::read(p.join("e/evaluation.json")).unwrap()).unwrap();
    let v = eval["entries"][0]["constraint_max_violation"].as_f64().unwrap();
    assert!(v <= 1e-9, "{v}");
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(p.join("r/manifest.json")).unwrap()).unwrap();
    let m = &manifest["runs"][0]["methods"][0];
    assert!(m["constraint_max_violation"].as_f64().unwrap() <= 1e-9);
    assert!(m["min_value"].as_f64().unwrap() >= -1e-12);
    assert!(m["converged"].is_boolean());
    assert!(manifest["generator"].as_str().unwrap().contains("ChaCha8"));
    let diag = std::fs::read_to_string(p.join("r/diagnostics_css.csv")).unwrap();
    assert_eq!(diag.lines().next(), Some("iter,primal_residual,dual_residual,objective"));
}

#[test]
fn estimate_equal_to_truth_scores_zero() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path();
    ok(p, &["synth", "--background", "1", "--out", "s"]);
    std::fs::copy(p.join("s/truth.csv"), p.join("estimate_css.csv")).unwrap();
    ok(p, &["evaluate", "--truth", "s/truth.csv", "--estimate", "estimate_css.csv", "--out", "e"]);
    let report = std::fs::read_to_string(p.join("e/report.csv")).unwrap();
    assert_eq!(report, "method,seed,mre,excluded\nCSS,,0.0,0\n");
}

#[test]
fn five_method_sweep_and_figures() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path();
    ok(
        p,
        &[
            "recover", "--synth", "--background", "1", "--districts", "--stations", "15", "--seed", "2",
            "--method", "all", "--out", "r",
        ],
    );
    for m in ["pe", "pe-ssr1", "pe-ssr2", "css", "css-features"] {
        let text = std::fs::read_to_string(p.join(format!("r/estimate_{m}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 401, "{m}");
    }
    ok(p, &["evaluate", "--run", "r", "--out", "e"]);
    let report = std::fs::read_to_string(p.join("e/report.csv")).unwrap();
    assert_eq!(report.lines().count(), 6);

    // Two methods' CDFs in one chart.
    let cdf = std::fs::read_to_string(p.join("e/cdf.csv")).unwrap();
    let two: String = cdf
        .lines()
        .filter(|l| l.starts_with("method") || l.starts_with("PE,") || l.starts_with("CSS,"))
        .map(|l| format!("{l}\n"))
        .collect();
    std::fs::write(p.join("two.csv"), two).unwrap();
    ok(p, &["plot", "--cdf", "two.csv", "--report", "e/report.csv", "--field", "r/estimate_css.csv", "--out", "fig"]);
    let svg = std::fs::read_to_string(p.join("fig/cdf.svg")).unwrap();
    let paths: Vec<&str> = svg.lines().filter(|l| l.starts_with("<path")).collect();
    assert_eq!(paths.len(), 2);
    for path in paths {
        // Step curves only move right and up (decreasing y in SVG).
        let d = path.split("d=\"").nth(1).unwrap().split('"').next().unwrap();
        let (mut x, mut y) = (f64::NEG_INFINITY, f64::INFINITY);
        for tok in d.split_whitespace() {
            let (cmd, num) = tok.split_at(1);
            match cmd {
                "M" => {
                    let (a, b) = num.split_once(',').unwrap();
                    x = a.parse().unwrap();
                    y = b.parse().unwrap();
                }
                "H" => {
                    let v: f64 = num.parse().unwrap();
                    assert!(v >= x);
                    x = v;
                }
                "V" => {
                    let v: f64 = num.parse().unwrap();
                    assert!(v <= y);
                    y = v;
                }
                _ => panic!("unexpected path command {cmd}"),
            }
        }
    }
    assert!(p.join("fig/mre.svg").exists());
    assert!(p.join("fig/estimate_css.svg").exists());
}

#[test]
fn constant_field_heatmap_is_one_color() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path();
    ok(p, &["synth", "--bumps", "0", "--background", "2", "--rows", "5", "--cols", "6", "--out", "s"]);
    ok(p, &["plot", "--field", "s/truth.csv", "--out", "fig"]);
    let svg = std::fs::read_to_string(p.join("fig/truth.svg")).unwrap();
    let mut fills: Vec<&str> = svg
        .lines()
        .filter(|l| l.starts_with("<rect x="))
        .map(|l| l.split("fill=\"").nth(1).unwrap().split('"').next().unwrap())
        .collect();
    fills.sort();
    fills.dedup();
    assert_eq!(fills.len(), 1);
}

fn pipeline(p: &Path, out: &str, jobs: &str) {
    ok(p, &["synth", "--background", "1", "--seed", "9", "--districts", "--out", &format!("{out}/s")]);
    ok(
        p,
        &[
            "recover", "--synth", "--background", "1", "--districts", "--stations", "15", "--seed", "9", "--runs",
            "2", "--method", "all", "--jobs", jobs, "--mesh", "--out", &format!("{out}/r"),
        ],
    );
    ok(p, &["evaluate", "--run", &format!("{out}/r"), "--out", &format!("{out}/e")]);
    ok(
        p,
        &[
            "plot", "--field", &format!("{out}/s/truth.csv"), "--cdf", &format!("{out}/e/cdf.csv"), "--report",
            &format!("{out}/e/report.csv"), "--out", &format!("{out}/fig"),
        ],
    );
}

#[test]
fn pipeline_is_byte_identical_across_reruns_and_jobs() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path();
    pipeline(p, "a", "1");
    pipeline(p, "b", "1");
    pipeline(p, "c", "4");
    let fa = files(&p.join("a"));
    assert!(fa.iter().any(|f| f.ends_with("cdf.svg")));
    assert!(fa.iter().any(|f| f.ends_with("mesh_triangles.csv")));
    for other in ["b", "c"] {
        assert_eq!(files(&p.join(other)), fa);
        for f in &fa {
            if f.extension().is_some_and(|e| e == "csv" || e == "svg") {
                assert_eq!(
                    std::fs::read(p.join("a").join(f)).unwrap(),
                    std::fs::read(p.join(other).join(f)).unwrap(),
                    "{other}/{}",
                    f.display()
                );
            }
        }
    }
}

#[test]
fn manifest_rerun_reproduces_estimates() {
    let t = tempfile::tempdir().unwrap();
    let p = t.path();
    ok(p, &["synth", "--background", "1", "--seed", "4", "--out", "s"]);
    ok(
        p,
        &[
            "recover", "--truth", "s/truth.csv", "--stations", "10", "--seed", "4", "--method", "pe-ssr2,css",
            "--lambda", "3", "--rho", "2", "--out", "r1",
        ],
    );
    ok(p, &["recover", "--manifest", "r1/manifest.json", "--out", "r2"]);
    for f in ["estimate_css.csv", "estimate_pe-ssr2.csv", "diagnostics_css.csv", "stations.csv"] {
        assert_eq!(std::fs::read(p.join("r1").join(f)).unwrap(), std::fs::read(p.join("r2").join(f)).unwrap(), "{f}");
    }
    assert_eq!(
        std::fs::read(p.join("r1/manifest.json")).unwrap(),
        std::fs::read(p.join("r2/manifest.json")).unwrap()
    );
}
