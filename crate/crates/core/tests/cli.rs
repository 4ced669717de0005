use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const SYNTH_CONF: &str = "\
synth.seed = 17
synth.filtered_per_bracket = 4
synth.bracket.B2 = 200 0.5 0.45 0.1
synth.bracket.B3 = 200 0.55 0.55 0.7
synth.bracket.B4 = 100 0.62 0.72 0.93
synth.bracket.B5 = 100 0.55 0.62 0.78
synth.bracket.B5@2017 = 40 0.25 0.5 0.75
";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ems-equity"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Writes a synth config and generates a dataset under `root/data`.
fn dataset(root: &Path) -> PathBuf {
    let conf = root.join("synth.conf");
    fs::write(&conf, SYNTH_CONF).unwrap();
    let data = root.join("data");
    let out = run(&["synth", "--config", p(&conf), "--out", p(&data)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    data
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn files_under(dir: &Path) -> Vec<String> {
    let mut v = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let e = e.unwrap().path();
            if e.is_dir() {
                stack.push(e);
            } else {
                v.push(e.strip_prefix(dir).unwrap().to_string_lossy().into_owned());
            }
        }
    }
    v.sort();
    v
}

#[test]
fn synth_writes_files_and_repeats_digests() {
    let t = tempfile::tempdir().unwrap();
    let a = dataset(t.path());
    for f in
        ["incidents.csv", "stations.csv", "ers.csv", "income.csv", "population.csv", "analyze.conf", "manifest.json"]
    {
        assert!(a.join(f).is_file(), "{f}");
    }
    let b = t.path().join("again");
    let out = run(&["synth", "--config", p(&t.path().join("synth.conf")), "--out", p(&b)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(manifest(&a)["files"], manifest(&b)["files"]);
}

#[test]
fn synth_rejects_empty_config() {
    let t = tempfile::tempdir().unwrap();
    let conf = t.path().join("empty.conf");
    fs::write(&conf, "# nothing here\n").unwrap();
    let out = run(&["synth", "--config", p(&conf), "--out", p(&t.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!t.path().join("o").exists());
}

#[test]
fn analyze_synth_dataset() {
    let t = tempfile::tempdir().unwrap();
    let data = dataset(t.path());
    let res = t.path().join("res");
    let out = run(&["analyze", "--config", p(&data.join("analyze.conf")), "--out", p(&res)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let files = files_under(&res);
    for f in [
        "manifest.json",
        "records.csv",
        "figures/response_time.svg",
        "figures/station_distance.svg",
        "figures/er_distance.svg",
        "models/response_time.json",
        "models/station_distance.json",
        "models/er_distance.json",
        "tables/brackets_all_calls.md",
        "tables/brackets_ems_calls.csv",
        "tables/categories.json",
        "tables/zips.csv",
        "tables/summary.csv",
        "tables/fits.md",
    ] {
        assert!(files.iter().any(|x| x == f), "missing {f} in {files:?}");
    }

    let gen = manifest(&data);
    let m = manifest(&res);
    let n: u64 = gen["summary"]["groups"].as_array().unwrap().iter().map(|g| g["n"].as_u64().unwrap()).sum();
    let stages = &m["counts"]["stages"];
    assert_eq!(stages["parse"]["input_count"], gen["summary"]["incident_rows"]);
    assert_eq!(stages["all_calls"]["retained_count"].as_u64(), Some(n));
    let removed: u64 =
        stages["all_calls"]["removed_by_rule"].as_object().unwrap().values().map(|v| v.as_u64().unwrap()).sum();
    assert_eq!(removed, gen["summary"]["filtered_rows"].as_u64().unwrap());
    assert_eq!(m["counts"]["conserved"], true);
    assert_eq!(m["outputs"].as_object().unwrap().len(), files.len() - 1);
}

#[test]
fn analyze_is_byte_identical_across_runs() {
    let t = tempfile::tempdir().unwrap();
    let data = dataset(t.path());
    let conf = data.join("analyze.conf");
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    assert!(run(&["analyze", "--config", p(&conf), "--out", p(&a)]).status.success());
    assert!(run(&["analyze", "--config", p(&conf), "--out", p(&b)]).status.success());
    let files = files_under(&a);
    assert_eq!(files, files_under(&b));
    for f in files {
        assert_eq!(fs::read(a.join(&f)).unwrap(), fs::read(b.join(&f)).unwrap(), "{f}");
    }
}

#[test]
fn year_filter_reaches_regression() {
    let t = tempfile::tempdir().unwrap();
    let data = dataset(t.path());
    let res = t.path().join("res");
    let out = run(&["analyze", "--config", p(&data.join("analyze.conf")), "--out", p(&res), "--year", "2017"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(&res);
    assert_eq!(m["counts"]["stages"]["all_calls"]["retained_count"], 40);
    assert_eq!(m["counts"]["regression"]["response_time"]["observations"], 40);
    assert_eq!(m["effective"]["year"], 2017);
}

#[test]
fn metric_selection_presets_and_overrides() {
    let t = tempfile::tempdir().unwrap();
    let data = dataset(t.path());
    let res = t.path().join("res");
    let out = run(&[
        "analyze",
        "--config",
        p(&data.join("analyze.conf")),
        "--out",
        p(&res),
        "--reproduce-paper",
        "--metric",
        "er_distance",
        "--metric",
        "response_time",
        "--threshold.er_distance",
        "1.14",
        "--format",
        "csv",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let files = files_under(&res);
    assert!(!files.iter().any(|f| f.ends_with(".md")));
    assert!(!files.iter().any(|f| f == "models/station_distance.json"));
    let m = manifest(&res);
    assert_eq!(m["effective"]["references"]["response_time"], "B5");
    assert_eq!(m["effective"]["references"]["er_distance"], "B3");
    assert_eq!(m["effective"]["thresholds"]["er_miles"], 1.14);
    assert_eq!(m["effective"]["thresholds"]["response_seconds"], 300.0);
    let fits = fs::read_to_string(res.join("tables/fits.csv")).unwrap();
    assert!(fits.lines().any(|l| l.starts_with("response_time,B5,")), "{fits}");
}

#[test]
fn missing_incident_file_is_fatal_and_named() {
    let t = tempfile::tempdir().unwrap();
    let data = dataset(t.path());
    fs::remove_file(data.join("incidents.csv")).unwrap();
    let res = t.path().join("res");
    let out = run(&["analyze", "--config", p(&data.join("analyze.conf")), "--out", p(&res)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("incidents.csv"));
    assert!(!res.exists());
}

#[test]
fn failed_write_leaves_no_partial_outputs() {
    let t = tempfile::tempdir().unwrap();
    let data = dataset(t.path());
    let res = t.path().join("res");
    fs::create_dir(&res).unwrap();
    // A file where the tables directory should go makes the last writes fail.
    fs::write(res.join("tables"), "blocker").unwrap();
    let out = run(&["analyze", "--config", p(&data.join("analyze.conf")), "--out", p(&res)]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(files_under(&res), ["tables"]);
}

#[test]
fn validate_clean_bad_mapping_and_unreadable() {
    let t = tempfile::tempdir().unwrap();
    let data = dataset(t.path());
    let conf = data.join("analyze.conf");
    let out = run(&["validate", "--config", p(&conf)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));

    let base = fs::read_to_string(&conf).unwrap();
    let bad = data.join("bad_mapping.conf");
    fs::write(&bad, format!("{base}incidents.col.zip = postal_code\n")).unwrap();
    let out = run(&["validate", "--config", p(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stdout);
    let problems: Vec<&str> = text.lines().filter(|l| l.starts_with("problem:")).collect();
    assert_eq!(problems.len(), 1, "{text}");
    assert!(problems[0].contains("incidents.col.zip"));

    let missing = data.join("missing.conf");
    fs::write(&missing, base.replace("income.csv", "nowhere/income.csv")).unwrap();
    let out = run(&["validate", "--config", p(&missing)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("nowhere/income.csv"));
}

#[test]
fn help_lists_every_key() {
    let out = run(&["--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for k in ems_equity::config::ANALYZE_KEYS.iter().chain(ems_equity::config::SYNTH_KEYS) {
        assert!(text.contains(k.key), "{}", k.key);
    }
}
