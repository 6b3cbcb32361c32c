#![allow(dead_code)]

use std::path::PathBuf;

use carboneval::calibration::{ingest_records, TrainingRecord};
use carboneval::pipeline::AlphaFixture;

pub fn workspace_root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

pub fn fixture(name: &str) -> PathBuf {
    workspace_root().join("fixtures").join(name)
}

pub fn golden(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

pub fn reference_records() -> Vec<TrainingRecord> {
    let ingested = ingest_records(fixture("table2.csv")).unwrap();
    assert!(ingested.rejections.is_empty(), "{:?}", ingested.rejections);
    ingested.records
}

pub fn reference_alpha() -> Vec<AlphaFixture> {
    let text = std::fs::read_to_string(fixture("table2_alpha.json")).unwrap();
    serde_json::from_str(&text).unwrap()
}

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, rel_tol: f64) -> f64 {
    fn rule(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = rule(fa, flm, fm, a, m);
        let right = rule(fm, frm, fb, m, b);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = rule(fa, fm, fb, a, b);
    // absolute tolerance scaled off a coarse estimate of the integral
    let scale = whole.abs().max(f64::MIN_POSITIVE);
    recurse(f, a, b, fa, fm, fb, whole, rel_tol * scale, 50)
}

pub struct CliRun {
    pub code: i32,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
}

/// Runs the built binary from the workspace root with no device DB override.
pub fn run_cli(args: &[&str]) -> CliRun {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_carboneval"))
        .args(args)
        .current_dir(workspace_root())
        .env_remove("CARBONEVAL_DEVICES_DB")
        .output()
        .unwrap();
    CliRun {
        code: out.status.code().unwrap_or(-1),
        stdout: out.stdout,
        stderr: out.stderr,
    }
}

/// Compares `actual` with a checked-in golden file. `CARBONEVAL_UPDATE_GOLDEN=1`
/// rewrites the file instead.
pub fn check_golden(name: &str, actual: &[u8]) -> Result<(), String> {
    let path = golden(name);
    if std::env::var_os("CARBONEVAL_UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let want = std::fs::read(&path).map_err(|e| format!("{}: {e}", path.display()))?;
    if want == actual {
        Ok(())
    } else {
        Err(format!(
            "{name} differs from golden\n--- want\n{}\n--- got\n{}",
            String::from_utf8_lossy(&want),
            String::from_utf8_lossy(actual)
        ))
    }
}

/// The documented invocations, each checked against its golden output and
/// expected exit code.
pub fn golden_cases() -> Vec<(&'static str, Result<(), String>)> {
    let mut results = Vec::new();

    let r = run_cli(&["estimate", "--flops", "6.3e24", "--device", "H100", "--intensity", "424", "--alpha", "104.78", "--format", "json"]);
    results.push(("estimate H100 json, exit 0", expect(&r, 0).and_then(|_| check_golden("estimate_h100.json", &r.stdout))));

    let r = run_cli(&["estimate", "--device", "Cerebras CS-2", "--flops", "6.3e24", "--intensity", "424"]);
    results.push((
        "estimate unknown device, exit 2",
        expect(&r, 2).and_then(|_| check_golden("estimate_unknown_device.stderr", &r.stderr)),
    ));

    let dir = tempfile::tempdir().unwrap();
    let stats = dir.path().join("stats.json");
    let r = run_cli(&["calibrate", "--records", "fixtures/table2.csv", "--out", stats.to_str().unwrap()]);
    results.push((
        "calibrate reference runs, exit 0",
        expect(&r, 0).and_then(|_| check_golden("calibrate_table2.json", &std::fs::read(&stats).unwrap())),
    ));

    let r = run_cli(&[
        "estimate", "--flops", "6.3e24", "--device", "H100", "--intensity", "424", "--alpha", "104.78", "--max-iterations", "2",
    ]);
    results.push((
        "estimate with iteration cap 2, exit 3",
        expect(&r, 3).and_then(|_| check_golden("estimate_no_convergence.stderr", &r.stderr)),
    ));
    results
}

fn expect(r: &CliRun, code: i32) -> Result<(), String> {
    if r.code == code {
        Ok(())
    } else {
        Err(format!("exit {} (want {code}); stderr: {}", r.code, String::from_utf8_lossy(&r.stderr)))
    }
}
