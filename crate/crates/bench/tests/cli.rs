use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_evs-bench");

fn evs(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("EVS_SEED").output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let o = evs(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

fn headers(path: &Path) -> Vec<String> {
    csv::Reader::from_path(path).unwrap().headers().unwrap().iter().map(String::from).collect()
}

fn col(path: &Path, name: &str) -> Vec<String> {
    let i = headers(path).iter().position(|h| h == name).unwrap();
    rows(path).iter().map(|r| r[i].to_string()).collect()
}

/// CSV contents with the wall_time column dropped.
fn without_wall_time(path: &Path) -> Vec<Vec<String>> {
    let h = headers(path);
    let keep: Vec<usize> = (0..h.len()).filter(|&i| h[i] != "wall_time").collect();
    std::iter::once(keep.iter().map(|&i| h[i].clone()).collect())
        .chain(rows(path).iter().map(|r| keep.iter().map(|&i| r[i].to_string()).collect()))
        .collect()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn gen_writes_items_and_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, full) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("full"));
    ok(&["gen", "--items", "1", "--out", p(&a)]);
    ok(&["gen", "--items", "1", "--out", p(&b)]);
    let names: Vec<_> = std::fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(names.len(), 2);
    let index: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("dataset.json")).unwrap()).unwrap();
    assert_eq!(index["items"].as_array().unwrap().len(), 1);
    for f in ["item_000.evslat", "dataset.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    ok(&["gen", "--out", p(&full)]);
    let n = std::fs::read_dir(&full).unwrap().filter(|e| {
        e.as_ref().unwrap().path().extension().is_some_and(|x| x == "evslat")
    });
    assert_eq!(n.count(), 93);
}

#[test]
fn run_rows_report_budgets_and_replay() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&["gen", "--items", "5", "--out", p(&data)]);

    let t2i = tmp.path().join("t2i");
    ok(&["run", "--pipeline", "t2i", "--dataset", p(&data), "--out", p(&t2i)]);
    let csv = t2i.join("run.csv");
    assert_eq!(
        headers(&csv),
        ["pipeline", "seed", "ms", "sc", "iq", "psnr", "overall", "nfe_t2i", "nfe_t2v", "wall_time"]
    );
    assert_eq!(rows(&csv).len(), 5);
    assert!(col(&csv, "nfe_t2i").iter().all(|v| v == "20"));
    assert!(col(&csv, "nfe_t2v").iter().all(|v| v == "0"));

    let run_evs = tmp.path().join("evs");
    ok(&["run", "--pipeline", "evs", "--dataset", p(&data), "--out", p(&run_evs)]);
    let m = manifest(&run_evs);
    for row in m["rows"].as_array().unwrap() {
        let t2v = row["stage_log"].as_array().unwrap().iter().filter(|s| s["role"] == "t2v").count();
        assert_eq!(t2v, 1);
    }
    assert!(col(&run_evs.join("run.csv"), "nfe_t2v").iter().all(|v| v == "6"));

    let replayed = tmp.path().join("replayed");
    ok(&["run", "--manifest", p(&run_evs.join("manifest.json")), "--out", p(&replayed)]);
    assert_eq!(without_wall_time(&run_evs.join("run.csv")), without_wall_time(&replayed.join("run.csv")));
    assert_eq!(manifest(&replayed)["content_hash"], m["content_hash"]);
    assert_eq!(
        std::fs::read(run_evs.join("outputs.evslat")).unwrap(),
        std::fs::read(replayed.join("outputs.evslat")).unwrap()
    );

    let iterated = tmp.path().join("iterated");
    ok(&["run", "--pipeline", "iterated", "--dataset", p(&data), "--out", p(&iterated)]);
    let report = tmp.path().join("report");
    ok(&[
        "report",
        p(&run_evs.join("manifest.json")),
        p(&iterated.join("manifest.json")),
        "--out",
        p(&report),
    ]);
    let summary = report.join("summary.csv");
    let pipelines = col(&summary, "pipeline");
    let speedup = col(&summary, "speedup");
    let nfe = col(&summary, "nfe_total");
    let evs_row = pipelines.iter().position(|x| x == "evs").unwrap();
    let it_row = pipelines.iter().position(|x| x == "iterated").unwrap();
    assert_eq!(nfe[evs_row].parse::<f64>().unwrap(), 26.0);
    assert_eq!(nfe[it_row].parse::<f64>().unwrap(), 48.0);
    assert!((speedup[evs_row].parse::<f64>().unwrap() - 48.0 / 26.0).abs() < 1e-9);
    assert!((speedup[it_row].parse::<f64>().unwrap() - 1.0).abs() < 1e-12);
    let ms: Vec<f64> = col(&run_evs.join("run.csv"), "ms").iter().map(|v| v.parse().unwrap()).collect();
    let mean = ms.iter().sum::<f64>() / ms.len() as f64;
    assert!((col(&summary, "ms")[evs_row].parse::<f64>().unwrap() - mean).abs() < 1e-9);

    let svg = std::fs::read_to_string(report.join("summary.svg")).unwrap();
    assert!(svg.contains("<metadata>manifest-sha256:"));
}

#[test]
fn single_point_sweep_matches_run() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    ok(&["gen", "--items", "3", "--out", p(&data)]);
    let run = tmp.path().join("run");
    let sweep = tmp.path().join("sweep");
    ok(&["run", "--pipeline", "evs", "--dataset", p(&data), "--out", p(&run)]);
    ok(&["sweep", "--axis", "t_V", "--grid", "4", "--dataset", p(&data), "--out", p(&sweep)]);
    let a = without_wall_time(&run.join("run.csv"));
    let b = without_wall_time(&sweep.join("sweep_rows.csv"));
    assert_eq!(a, b);
    assert_eq!(rows(&sweep.join("sweep.csv")).len(), 1);
    let hash = manifest(&sweep)["content_hash"].as_str().unwrap().to_string();
    let svg = std::fs::read_to_string(sweep.join("sweep_ms.svg")).unwrap();
    assert!(svg.contains(&format!("<metadata>manifest-sha256:{hash}</metadata>")));
}

#[test]
fn invalid_grid_point_is_named() {
    let tmp = tempfile::tempdir().unwrap();
    let o = evs(&["sweep", "--axis", "n_V", "--grid", "2,9", "--out", p(tmp.path())]);
    assert_eq!(code(&o), 3);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("grid point n_v=9"), "{err}");
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    // usage
    assert_eq!(code(&evs(&["run", "--pipeline", "nope", "--out", p(&out)])), 2);
    assert_eq!(code(&evs(&["frobnicate"])), 2);
    assert_eq!(code(&evs(&["gen", "--set", "seed", "--out", p(&out)])), 2);
    assert_eq!(code(&evs(&["sweep", "--axis", "zeta", "--grid", "1", "--out", p(&out)])), 2);
    // config
    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"pipeline": {"t_v": 0}}"#).unwrap();
    assert_eq!(code(&evs(&["gen", "--config", p(&bad), "--out", p(&out)])), 3);
    std::fs::write(&bad, r#"{"schema_version": 99}"#).unwrap();
    assert_eq!(code(&evs(&["gen", "--config", p(&bad), "--out", p(&out)])), 3);
    std::fs::write(&bad, r#"{"no_such_key": 1}"#).unwrap();
    assert_eq!(code(&evs(&["gen", "--config", p(&bad), "--out", p(&out)])), 3);
    // io / malformed
    let missing = tmp.path().join("missing");
    assert_eq!(code(&evs(&["run", "--pipeline", "evs", "--dataset", p(&missing), "--out", p(&out)])), 4);
    std::fs::write(&bad, "{ not json").unwrap();
    assert_eq!(code(&evs(&["gen", "--config", p(&bad), "--out", p(&out)])), 3);
    let data = tmp.path().join("data");
    ok(&["gen", "--items", "2", "--out", p(&data)]);
    std::fs::write(data.join("item_001.evslat"), b"EVSLAT truncated").unwrap();
    let o = evs(&["run", "--pipeline", "t2i", "--dataset", p(&data), "--out", p(&out)]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("item_001.evslat"));
    // numeric: training diverges
    let net = tmp.path().join("net.evsnet");
    let o = evs(&[
        "train",
        "--set",
        "train.lr=1e6",
        "--set",
        "train.steps=40",
        "--set",
        "train.batch=1",
        "--out",
        p(&net),
    ]);
    assert_eq!(code(&o), 5, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn report_rejects_schema_mismatch() {
    let tmp = tempfile::tempdir().unwrap();
    let run = tmp.path().join("run");
    ok(&["gen", "--items", "2", "--out", p(&tmp.path().join("d"))]);
    ok(&["run", "--pipeline", "t2v", "--dataset", p(&tmp.path().join("d")), "--out", p(&run)]);
    let mut m = manifest(&run);
    m["schema_version"] = 42.into();
    std::fs::write(run.join("manifest.json"), serde_json::to_vec(&m).unwrap()).unwrap();
    let o = evs(&["report", p(&run.join("manifest.json")), "--out", p(&tmp.path().join("r"))]);
    assert_eq!(code(&o), 3);
}

#[test]
fn seed_flag_beats_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let run = |dir: &str, env: Option<&str>, flag: Option<&str>| {
        let out = tmp.path().join(dir);
        let mut c = Command::new(BIN);
        c.env_remove("EVS_SEED").args(["gen", "--items", "1", "--out", p(&out)]);
        if let Some(s) = env {
            c.env("EVS_SEED", s);
        }
        if let Some(s) = flag {
            c.args(["--seed", s]);
        }
        assert!(c.output().unwrap().status.success());
        std::fs::read(out.join("item_000.evslat")).unwrap()
    };
    let env5 = run("env5", Some("5"), None);
    let flag5 = run("flag5", None, Some("5"));
    let both = run("both", Some("6"), Some("5"));
    let default = run("default", None, None);
    assert_eq!(env5, flag5);
    assert_eq!(both, flag5);
    assert_ne!(default, flag5);
}

#[test]
fn small_frontier_has_identity_anchor() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("f");
    ok(&[
        "frontier",
        "--set",
        "train.steps=20",
        "--set",
        "frontier.items=2",
        "--set",
        "frontier.sdedit_timesteps=[0,4]",
        "--set",
        "frontier.sfi_timesteps=[2]",
        "--set",
        "frontier.gammas=[1.0]",
        "--out",
        p(&out),
    ]);
    let m = manifest(&out);
    let f = &m["frontier"];
    let points = f["points"].as_array().unwrap();
    assert_eq!(points.len(), 2 + 3);
    let anchor = points.iter().find(|pt| pt["method"] == "sdedit" && pt["t"] == 0).unwrap();
    assert_eq!(anchor["psnr"].as_f64().unwrap(), 99.0);
    assert_eq!(anchor["ms"].as_f64(), f["input_ms"].as_f64());
    let d = f["dominance"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&d));
    assert_eq!(rows(&out.join("frontier.csv")).len(), 5);
    let svg = std::fs::read_to_string(out.join("frontier.svg")).unwrap();
    assert!(svg.contains(m["content_hash"].as_str().unwrap()));
    assert!(out.join("net.evsnet").exists());
}
