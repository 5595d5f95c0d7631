use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/france/france.toml")
}

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phillips-lf"))
        .arg("--out")
        .arg(out)
        .args(args)
        .env("SOURCE_DATE_EPOCH", "1700000000")
        .output()
        .unwrap()
}

fn cfg() -> String {
    config().display().to_string()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

#[test]
fn estimate_writes_record_and_hashed_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let r = run(&out, &["estimate", &cfg(), "cpi_l3"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    for f in [
        "cpi_l3.json",
        "cpi_l3_annual.csv",
        "cpi_l3_cumulative.csv",
        "cpi_l3_grid.csv",
        "cpi_l3_annual.svg",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let m = manifest(&out);
    assert_eq!(m["timestamp_unix"], 1_700_000_000u64);
    assert_eq!(m["seed"], 20_130_601u64);
    assert!(
        m["series"]["l_oecd"]["prepared_sha256"]
            .as_str()
            .unwrap()
            .len()
            == 64
    );
    for o in m["outputs"].as_array().unwrap() {
        let bytes = std::fs::read(out.join(o["path"].as_str().unwrap())).unwrap();
        let want = o["sha256"].as_str().unwrap();
        assert_eq!(phillips_lf_cli::output::sha256_hex(&bytes), want);
    }
    let rec: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("cpi_l3.json")).unwrap()).unwrap();
    assert_eq!(rec["form"]["predictors"][0]["smooth"], 3);
    let csv = std::fs::read_to_string(out.join("cpi_l3_annual.csv")).unwrap();
    assert!(csv.starts_with("year,observed,fitted,residual\n1970,"));
}

#[test]
fn overrides_change_the_search() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let r = run(
        &out,
        &[
            "estimate",
            &cfg(),
            "cpi_l",
            "--smooth",
            "5",
            "--lag-grid",
            "2:3",
            "--break-grid",
            "1990:1991",
        ],
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let rec: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("cpi_l.json")).unwrap()).unwrap();
    assert_eq!(rec["grid"].as_array().unwrap().len(), 4);
    assert_eq!(rec["form"]["predictors"][0]["smooth"], 5);
    let r = run(&out, &["estimate", &cfg(), "cpi_l", "--smooth", "4"]);
    assert_eq!(r.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two_and_run_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let r = run(&out, &["estimate", &cfg(), "no_such_model"]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("known models"));
    assert_eq!(run(&out, &["estimate"]).status.code(), Some(2));
    assert_eq!(run(&out, &["bogus"]).status.code(), Some(2));
    assert_eq!(
        run(&out, &["test", &cfg(), "--test", "adf"]).status.code(),
        Some(2)
    );
    assert_eq!(
        run(&out, &["test", &cfg(), "--test", "johansen"])
            .status
            .code(),
        Some(2)
    );
    let missing = tmp.path().join("missing.toml");
    let r = run(&out, &["estimate", missing.to_str().unwrap(), "cpi_l"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(!out.exists(), "failed runs leave no output");
}

#[test]
fn tests_write_flat_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let r = run(
        &out,
        &[
            "test",
            &cfg(),
            "--series",
            "cpi_oecd",
            "--test",
            "adf",
            "--window",
            "1970:2012",
        ],
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = std::fs::read_to_string(out.join("test_cpi_oecd_adf.csv")).unwrap();
    assert!(csv.contains("stat.tau,"));
    assert!(csv.contains("cv.tau.5pct,"));
    let r = run(
        &out,
        &[
            "test",
            &cfg(),
            "--series",
            "cpi_oecd",
            "--test",
            "pp",
            "--diff",
        ],
    );
    assert!(r.status.success());
    assert!(out.join("test_cpi_oecd_diff_pp.json").is_file());
    let r = run(
        &out,
        &["test", &cfg(), "--model", "dgdp_l3", "--test", "johansen"],
    );
    assert!(r.status.success());
    let j: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("test_dgdp_l3_johansen.json")).unwrap())
            .unwrap();
    assert!(j["statistics"]["trace_r0"]["value"].is_number());
    let r = run(
        &out,
        &["test", &cfg(), "--model", "cpi_l", "--test", "cadf"],
    );
    assert!(r.status.success());
    // Merged installs keep earlier files.
    assert!(out.join("test_cpi_oecd_adf.csv").is_file());
}

#[test]
fn forecast_horizons() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    let r = run(&out, &["forecast", &cfg(), "dgdp_l3", "--horizon", "0"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = std::fs::read_to_string(out.join("forecast_dgdp_l3.csv")).unwrap();
    assert_eq!(csv, "year,annual,cumulative\n");
    let r = run(
        &out,
        &["forecast", &cfg(), "dgdp_l3", "--horizon", "2", "--vecm"],
    );
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = std::fs::read_to_string(out.join("forecast_dgdp_l3.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "year,annual,cumulative,vecm_annual,vecm_cumulative"
    );
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("2013,"));
    let r = run(&out, &["forecast", &cfg(), "dgdp_l3", "--horizon", "40"]);
    assert_eq!(r.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&r.stderr).contains("last forecastable year"));
}

#[test]
fn report_refuses_foreign_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("o");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join("notes.txt"), "mine").unwrap();
    let r = run(&out, &["report", &cfg(), "--mc-reps", "10"]);
    assert_eq!(r.status.code(), Some(1));
    assert_eq!(
        std::fs::read_to_string(out.join("notes.txt")).unwrap(),
        "mine"
    );
    let staging: Vec<_> = std::fs::read_dir(tmp.path()).unwrap().collect();
    assert_eq!(staging.len(), 1, "staging directory cleaned up");
}

#[test]
fn report_bundle_contents() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("bundle");
    let r = run(&out, &["report", &cfg(), "--mc-reps", "20"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    for f in [
        "tables/unit_root_tests.csv",
        "tables/descriptive_statistics.csv",
        "tables/break_models.csv",
        "tables/generalized_models.csv",
        "tables/forecast_errors.csv",
        "tables/cointegration_tests.csv",
        "tables/vecm_models.csv",
        "tables/monte_carlo_calibration.csv",
        "figures/inflation_rates.svg",
        "figures/labour_force_rate.csv",
        "figures/cpi_early_extended.svg",
        "forecasts/cpi_l_early.csv",
        "models/dgdp_l3.json",
        "reference_diff.csv",
        "reference_diff.md",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let diff = std::fs::read_to_string(out.join("reference_diff.csv")).unwrap();
    assert!(diff.starts_with("check,item,quantity,reference,reproduced,diff,tolerance,gate,pass\n"));
    assert!(diff.contains("break_models,cpi_l,slope1,16.304,"));
    let bm = std::fs::read_to_string(out.join("tables/break_models.csv")).unwrap();
    assert_eq!(bm.lines().count(), 1 + 12);
}
