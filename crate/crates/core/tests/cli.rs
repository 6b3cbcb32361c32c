mod common;

use carboneval::calibration::CalibrationReport;
use carboneval::pipeline::{EstimateReport, ModelEstimate};
use common::run_cli;

#[test]
fn documented_invocations_match_goldens() {
    let failures: Vec<String> = common::golden_cases()
        .into_iter()
        .filter_map(|(name, r)| r.err().map(|e| format!("{name}: {e}")))
        .collect();
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn calibrated_stats_hold_three_a100_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("stats.json");
    let r = run_cli(&["calibrate", "--records", "fixtures/table2.csv", "--out", out.to_str().unwrap()]);
    assert_eq!(r.code, 0);
    let stats = CalibrationReport::load(&out).unwrap().stats_by_family();
    assert_eq!(stats["A100"].n, 3);
}

#[test]
fn output_is_deterministic() {
    let args = ["estimate", "--flops", "3.12e23", "--device", "NVIDIA A100 80GB", "--region", "DE", "--alpha-mode", "interval", "--format", "csv"];
    let a = run_cli(&args);
    let b = run_cli(&args);
    assert_eq!(a.code, 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn interval_json_orders_bounds() {
    let r = run_cli(&["estimate", "--params", "176e9", "--data-size", "366e9", "--device", "A100", "--intensity", "57", "--alpha-mode", "interval", "--format", "json"]);
    assert_eq!(r.code, 0);
    let rep: EstimateReport = serde_json::from_slice(&r.stdout).unwrap();
    let [lo, hi] = rep.operational_interval_kg.unwrap();
    assert!(lo <= rep.operational_kg && rep.operational_kg <= hi);
    let [elo, ehi] = rep.embodied_interval_kg.unwrap();
    assert!(elo <= rep.embodied_kg && rep.embodied_kg <= ehi);
}

#[test]
fn calibrate_then_midpoint_reproduces_single_record() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("one.csv");
    let stats = dir.path().join("stats.json");
    std::fs::write(
        &corpus,
        "model,params,data_size,total_flops,device,device_count,gpu_hours,wall_hours,region,intensity_g_per_kwh,actual_tco2,metric_name,metric_value\n\
         run,7e9,2e12,,NVIDIA H100 SXM5,512,,400,US-TX,,,,\n",
    )
    .unwrap();
    let r = run_cli(&["calibrate", "--records", corpus.to_str().unwrap(), "--out", stats.to_str().unwrap()]);
    assert_eq!(r.code, 0, "{}", String::from_utf8_lossy(&r.stderr));
    let r = run_cli(&[
        "estimate", "--params", "7e9", "--data-size", "2e12", "--device", "H100", "--region", "US-TX",
        "--alpha-mode", "midpoint", "--alpha-stats", stats.to_str().unwrap(), "--format", "json",
    ]);
    assert_eq!(r.code, 0, "{}", String::from_utf8_lossy(&r.stderr));
    let rep: EstimateReport = serde_json::from_slice(&r.stdout).unwrap();
    let want = 512.0 * 400.0;
    assert!((rep.gpu_hours - want).abs() / want < 1e-6, "{} vs {want}", rep.gpu_hours);
}

#[test]
fn batch_estimates_feed_report() {
    let dir = tempfile::tempdir().unwrap();
    let est = dir.path().join("estimates.json");
    let r = run_cli(&["estimate", "--records", "fixtures/table2.csv", "--alpha-mode", "midpoint", "--format", "json"]);
    assert_eq!(r.code, 0, "{}", String::from_utf8_lossy(&r.stderr));
    let parsed: Vec<ModelEstimate> = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(parsed.len(), 6);
    std::fs::write(&est, &r.stdout).unwrap();
    let r = run_cli(&["report", "--records", "fixtures/table2.csv", "--estimates", est.to_str().unwrap()]);
    assert_eq!(r.code, 0);
    let text = String::from_utf8(r.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("model,total_tco2,metric_name,metric_value"));
    assert_eq!(lines.count(), 4);
    assert!(String::from_utf8_lossy(&r.stderr).contains("BLOOM"));
}

#[test]
fn compare_emits_method_matrix() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = dir.path().join("alpha.json");
    std::fs::copy(common::fixture("table2_alpha.json"), &fixtures).unwrap();
    let r = run_cli(&[
        "compare", "--train", "fixtures/table2.csv", "--eval", "fixtures/table2.csv", "--alpha-fixtures",
        fixtures.to_str().unwrap(), "--degree", "1",
    ]);
    assert_eq!(r.code, 0, "{}", String::from_utf8_lossy(&r.stderr));
    let text = String::from_utf8(r.stdout).unwrap();
    assert!(text.starts_with("method,GLM,BLOOM,StarCoder,LLaMa-3,ViT-L/16,Swin-L\n"), "{text}");
    assert!(text.contains("dynamic_tco2,276.9"), "{text}");
}

#[test]
fn env_database_is_layered_over_builtin() {
    let dir = tempfile::tempdir().unwrap();
    let db = dir.path().join("db.json");
    std::fs::write(
        &db,
        r#"[{"key":"CS2","tdp_w":20000,"peak_tflops":7500,"alpha_log10_lo":30,"alpha_log10_hi":40,"beta_g_per_gpuh":null,"die_mm2":null,"process_nm":null}]"#,
    )
    .unwrap();
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_carboneval"))
        .args(["estimate", "--flops", "1e22", "--device", "Cerebras CS2", "--intensity", "100"])
        .env("CARBONEVAL_DEVICES_DB", &db)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("CS2"));
    let r = run_cli(&["estimate", "--flops", "1e22", "--device", "A100", "--intensity", "100", "--devices-db", db.to_str().unwrap()]);
    assert_eq!(r.code, 0);
}

#[test]
fn bad_inputs_exit_two() {
    for args in [
        vec!["estimate", "--flops", "1e21", "--device", "A100", "--intensity", "100", "--pue", "0.5"],
        vec!["estimate", "--flops", "-1", "--device", "A100", "--intensity", "100"],
        vec!["calibrate", "--records", "does/not/exist.csv"],
        vec!["report"],
        vec![],
    ] {
        let r = run_cli(&args);
        assert_eq!(r.code, 2, "{args:?}");
        assert!(!r.stderr.is_empty());
    }
}
