use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_gauss-edf"))
}

fn run(args: &[&str], config: Option<(&Path, &str)>) -> Output {
    if let Some((p, text)) = config {
        fs::write(p, text).unwrap();
    }
    bin().args(args).output().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

fn dir_contents(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn diagnose_equi_is_finite_theta() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("d.json");
    let out = tmp.path().join("out");
    let o = run(
        &["diagnose", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        Some((
            &cfg,
            r#"{"model":{"family":"equi","rho":{"coef":2,"exponent":-1}},"m_grid":[100,1000,10000]}"#,
        )),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let j = read_json(&out.join("diagnose.json"));
    let r = &j["reports"][0];
    assert_eq!(r["regime"], "finite-theta");
    let theta = r["theta_estimate"].as_f64().unwrap();
    assert!((theta - 2.0).abs() < 1e-3);
    assert!(j["config"]["m_grid"].is_array());
    let csv = fs::read_to_string(out.join("conditions.csv")).unwrap();
    assert!(csv.starts_with("# config: "));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 4);
}

#[test]
fn diagnose_table1_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("d.json");
    let out = tmp.path().join("out");
    let o = run(
        &["diagnose", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        Some((
            &cfg,
            r#"{"sweep":[
                {"family":"weak_range","D":0.5,"rho":{"coef":1,"exponent":-0.25}},
                {"family":"weak_range","D":2.0,"rho":{"coef":1,"exponent":-0.25}},
                {"family":"weak_range","D":2.0,"rho":0.5}
            ],"m_grid":[1000,4000,16000,64000]}"#,
        )),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let regimes = fs::read_to_string(out.join("regimes.csv")).unwrap();
    let rows: Vec<&str> = regimes.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].contains("infinite-theta"), "{}", rows[0]);
    // D >= 1 is never infinite-theta
    assert!(!rows[1].contains("infinite-theta"));
    assert!(!rows[2].contains("infinite-theta"));
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    let out = tmp.path().join("out");
    let args = ["diagnose", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];

    let o = run(&args, Some((&cfg, r#"{"model":{"rho":0.1},"m_grid":[10,20,40]}"#)));
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("family"));

    let o = run(&args, Some((&cfg, r#"{"model":{"family":"equi","rho":0.1},"m_grid":[10,20]}"#)));
    assert_eq!(o.status.code(), Some(2));

    let o = run(&args, Some((&cfg, r#"{"schema":"v9","model":{"family":"identity"},"m_grid":[10,20,40]}"#)));
    assert_eq!(o.status.code(), Some(2));

    let o = run(&args, Some((&cfg, "{ not json")));
    assert_eq!(o.status.code(), Some(2));

    let missing = tmp.path().join("nope.json");
    let o = bin()
        .args(["edf-sim", "--config", missing.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));

    let o = run(
        &["edf-sim", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        Some((&cfg, r#"{"model":{"m":10,"family":"equi","rho":0.1},"reps":5,"master_seed":1}"#)),
    );
    assert_eq!(o.status.code(), Some(2), "reps below the minimum");

    // bad flag value is rejected by the argument parser
    let o = bin().args(["figure1", "--seed", "-3"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    let out = tmp.path().join("out");
    // long-range with a constant slowly varying part is not PSD at this size
    let o = run(
        &["edf-sim", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        Some((&cfg, r#"{"model":{"m":50,"family":"long_range","D":0.5},"reps":100,"master_seed":1}"#)),
    );
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn edf_sim_outputs_and_seed_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let c = tmp.path().join("c");
    fs::write(
        &cfg,
        r#"{"model":{"m":50,"family":"equi","rho":0.05},"reps":300,"grid":17,"master_seed":4,
            "scale":"sqrt_m","target":{"kind":"exact_cov"}}"#,
    )
    .unwrap();
    let go = |out: &Path, extra: &[&str]| {
        let mut args = vec!["edf-sim", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        let o = bin().args(&args).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    };
    go(&a, &["--workers", "1"]);
    go(&b, &["--workers", "3"]);
    go(&c, &["--seed", "99"]);
    assert_eq!(dir_contents(&a), dir_contents(&b));
    let sa = read_json(&a.join("summary.json"));
    let sc = read_json(&c.join("summary.json"));
    assert_eq!(sa["master_seed"], 4);
    assert_eq!(sc["master_seed"], 99);
    assert_eq!(sc["config"]["master_seed"], 99);
    assert_ne!(sa["variance"], sc["variance"]);
    for name in ["moments.csv", "pairs.csv"] {
        let text = fs::read_to_string(a.join(name)).unwrap();
        assert!(text.starts_with("# config: "));
        assert!(text.contains("# seed: 4"));
    }
}

#[test]
fn limit_and_fdp_sim_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    let out = tmp.path().join("lim");
    let o = run(
        &["limit-sim", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        Some((&cfg, r#"{"theta":"inf","reps":200,"grid":9,"brownian_steps":64,"master_seed":2}"#)),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_json(&out.join("summary.json"))["experiment"], "limit");

    let out = tmp.path().join("fdp");
    let o = run(
        &["fdp-sim", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        Some((
            &cfg,
            r#"{"two_group":{"model":{"m":300,"family":"identity"},"delta":3,"pi0":0.9,"alpha":0.25},
                "reps":200,"master_seed":5,"histogram_bins":20}"#,
        )),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let j = read_json(&out.join("fdp.json"));
    assert_eq!(j["samples"].as_array().unwrap().len(), 200);
    assert_eq!(j["approx"]["mean"].as_f64().unwrap(), 0.9 * 0.25);
    let hist = fs::read_to_string(out.join("histogram.csv")).unwrap();
    assert_eq!(hist.lines().filter(|l| !l.starts_with('#')).count(), 21);
}

#[test]
fn figure1_default_panels_and_reload() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("f1");
    let o = bin().args(["figure1", "--out", out.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    for label in ["0", "2", "100", "1000"] {
        let p = out.join(format!("figure1_mgamma_{label}.csv"));
        let text = fs::read_to_string(&p).unwrap();
        let path = gauss_edf::ProcessPath::from_csv_str(&text).unwrap();
        assert_eq!(path.values.len(), 513);
        assert_eq!(path.values[0], 0.0);
    }
    let m = read_json(&out.join("manifest.json"));
    assert_eq!(m["config"]["m"], 10000);
    assert_eq!(m["files"].as_array().unwrap().len(), 4);

    let again = tmp.path().join("f1b");
    bin().args(["figure1", "--out", again.to_str().unwrap(), "--workers", "7"]).output().unwrap();
    assert_eq!(dir_contents(&out), dir_contents(&again));
}

#[test]
fn figure2_small_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.json");
    let out = tmp.path().join("f2");
    let o = run(
        &["figure2", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()],
        Some((&cfg, r#"{"m":400,"m_rho":[0,10],"reps":150,"histogram_bins":10}"#)),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let j = read_json(&out.join("figure2_approximation.json"));
    let panels = j["panels"].as_array().unwrap();
    assert_eq!(panels.len(), 2);
    for p in panels {
        assert!((p["approximation"]["mean"].as_f64().unwrap() - 0.225).abs() < 1e-15);
    }
    assert!(out.join("figure2_mrho_10_histogram.csv").exists());
    assert!(out.join("manifest.json").exists());
}
