use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const FAST: [&str; 8] = ["--chains", "2", "--warmup", "150", "--iters", "200", "--thin", "1"];

fn spmrf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spmrf"))
        .args(args)
        .env_remove("SPMRF_OUT_DIR")
        .env_remove("SPMRF_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn series(dir: &Path) -> String {
    let path = dir.join("series.csv");
    let y = [3.1, 2.7, 3.4, 2.9, 3.0, 7.8, 8.4, 8.1, 7.6, 8.0];
    let body: String = y.iter().enumerate().map(|(i, v)| format!("{},{v}\n", i + 1)).collect();
    fs::write(&path, format!("x,y\n{body}")).unwrap();
    path.to_str().unwrap().to_string()
}

fn fit(dir: &Path, out: &str, extra: &[&str]) -> Output {
    let input = series(dir);
    let out = dir.join(out);
    let mut args = vec!["fit", "--input", &input, "--prior", "laplace", "--zeta", "0.5", "--out", out.to_str().unwrap()];
    args.extend_from_slice(&FAST);
    args.extend_from_slice(extra);
    spmrf(&args)
}

#[test]
fn smoke_fit_writes_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    ok(&fit(dir.path(), "fit", &["--draws"]));
    let out = dir.path().join("fit");
    for f in ["summary.csv", "diagnostics.csv", "report.txt", "plot.csv", "draws.csv", "manifest.json", "timing.json"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 11);
    assert!(summary.starts_with("location,median,q025,q975,natural_median"));
    let draws = fs::read_to_string(out.join("draws.csv")).unwrap();
    assert_eq!(draws.lines().count(), 1 + 2 * 200);
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["zeta"]["source"], "fixed");
    assert_eq!(manifest["seed"], 1);
}

#[test]
fn manifest_reproduces_the_fit() {
    let dir = tempfile::tempdir().unwrap();
    ok(&fit(dir.path(), "a", &[]));
    let manifest = dir.path().join("a/manifest.json");
    let b = dir.path().join("b");
    ok(&spmrf(&["fit", "--config", manifest.to_str().unwrap(), "--out", b.to_str().unwrap()]));
    for f in ["summary.csv", "diagnostics.csv", "report.txt", "plot.csv", "manifest.json"] {
        assert_eq!(fs::read(dir.path().join("a").join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn diagnose_reproduces_diagnostics_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    ok(&fit(dir.path(), "fit", &["--draws"]));
    let fit_dir = dir.path().join("fit");
    let again = dir.path().join("again");
    ok(&spmrf(&["diagnose", "--draws", fit_dir.join("draws.csv").to_str().unwrap(), "--out", again.to_str().unwrap()]));
    assert_eq!(fs::read(fit_dir.join("diagnostics.csv")).unwrap(), fs::read(again.join("diagnostics.csv")).unwrap());
}

#[test]
fn auto_zeta_is_recorded_with_its_intermediates() {
    let dir = tempfile::tempdir().unwrap();
    let input = series(dir.path());
    let out = dir.path().join("cal");
    let res = spmrf(&["calibrate", "--input", &input, "--out", out.to_str().unwrap()]);
    ok(&res);
    let text = String::from_utf8(res.stdout).unwrap();
    for key in ["U:", "omega^2:", "sigma_ref:", "alpha:", "zeta:"] {
        assert!(text.contains(key), "{text}");
    }
    let direct = spmrf(&["calibrate", "--upper", "0.860", "--sigma-ref", "6.47"]);
    ok(&direct);
    assert!(String::from_utf8(direct.stdout).unwrap().contains("zeta: 0.01046"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.csv");
    let out = dir.path().join("o");
    let code = |o: Output| o.status.code().unwrap();
    assert_eq!(code(spmrf(&["fit", "--input", missing.to_str().unwrap(), "--out", out.to_str().unwrap()])), 4);
    let input = series(dir.path());
    assert_eq!(code(spmrf(&["fit", "--input", &input, "--y-col", "count", "--out", out.to_str().unwrap()])), 2);
    assert_eq!(code(spmrf(&["fit", "--input", &input, "--order", "3", "--out", out.to_str().unwrap()])), 2);
    assert_eq!(code(spmrf(&["fit", "--input", &input, "--zeta", "0", "--out", out.to_str().unwrap()])), 2);
    assert_eq!(code(spmrf(&["fit", "--input", &input, "--obs", "poisson", "--out", out.to_str().unwrap()])), 2);
    assert_eq!(code(spmrf(&["simulate", "--replicates", "0", "--out", out.to_str().unwrap()])), 2);
}

fn synthetic_fit_dir(dir: &Path, order: usize, draws: &[Vec<f64>]) {
    fs::create_dir_all(dir).unwrap();
    let n = draws[0].len();
    fs::write(dir.join("manifest.json"), format!("{{\"config\": {{\"order\": {order}}}}}\n")).unwrap();
    let mut summary = String::from("location,median,q025,q975,natural_median,natural_q025,natural_q975\n");
    for i in 1..=n {
        summary.push_str(&format!("{i},0,0,0,0,0,0\n"));
    }
    fs::write(dir.join("summary.csv"), summary).unwrap();
    let names: Vec<String> = (1..=n).map(|i| format!("theta[{i}]")).collect();
    let mut text = format!("chain,draw,{},gamma\n", names.join(","));
    for (i, d) in draws.iter().enumerate() {
        let vals: Vec<String> = d.iter().map(|v| v.to_string()).collect();
        text.push_str(&format!("0,{i},{},1\n", vals.join(",")));
    }
    fs::write(dir.join("draws.csv"), text).unwrap();
}

#[test]
fn changepoint_of_a_step_function() {
    let dir = tempfile::tempdir().unwrap();
    let step: Vec<f64> = (1..=100).map(|i| if i < 40 { 2.0 } else { 0.5 }).collect();
    let fit_dir = dir.path().join("fit");
    synthetic_fit_dir(&fit_dir, 1, &vec![step; 20]);
    let res = spmrf(&["changepoint", "--fit-dir", fit_dir.to_str().unwrap()]);
    ok(&res);
    assert!(res.stderr.is_empty());
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(fit_dir.join("changepoint.json")).unwrap()).unwrap();
    assert_eq!(summary["mode"], 40.0);
    assert_eq!(summary["iqr"], 0.0);
    let hist = fs::read_to_string(fit_dir.join("changepoint.csv")).unwrap();
    let row = hist.lines().find(|l| l.starts_with("4.0000000000000000e1,")).unwrap();
    assert!(row.starts_with("4.0000000000000000e1,20,1.0"), "{row}");
}

#[test]
fn changepoint_ties_and_order_two_warning() {
    let dir = tempfile::tempdir().unwrap();
    let fit_dir = dir.path().join("fit");
    synthetic_fit_dir(&fit_dir, 2, &[vec![0.0, 1.0, 2.0, 3.0, 4.0]]);
    let res = spmrf(&["changepoint", "--fit-dir", fit_dir.to_str().unwrap()]);
    ok(&res);
    assert!(String::from_utf8_lossy(&res.stderr).contains("warning"));
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(fit_dir.join("changepoint.json")).unwrap()).unwrap();
    assert_eq!(summary["mode"], 2.0);

    let missing = dir.path().join("empty");
    fs::create_dir_all(&missing).unwrap();
    assert_eq!(spmrf(&["changepoint", "--fit-dir", missing.to_str().unwrap()]).status.code(), Some(2));
}

#[test]
fn sweep_fits_each_prior_at_three_levels() {
    let dir = tempfile::tempdir().unwrap();
    let coal = concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/coal.csv");
    let out = dir.path().join("sweep");
    let mut args = vec![
        "simulate", "--sweep-zeta", "--input", coal, "--x-col", "year", "--y-col", "count", "--obs", "poisson",
        "--priors", "normal,laplace", "--out", out.to_str().unwrap(),
    ];
    args.extend_from_slice(&["--chains", "1", "--warmup", "100", "--iters", "50", "--thin", "1"]);
    ok(&spmrf(&args));
    let fits = fs::read_to_string(out.join("sweep_fits.csv")).unwrap();
    assert_eq!(fits.lines().count(), 1 + 2 * 3);
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(sweep.lines().count(), 1 + 2 * 3 * 112);
}

#[test]
fn small_study_runs_from_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("study");
    let mut args = vec![
        "simulate", "--trends", "piecewise", "--priors", "normal", "--replicates", "1", "--n", "20", "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(&FAST);
    ok(&spmrf(&args));
    for f in ["study.csv", "study_timing.csv", "study_summary.csv"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
}
