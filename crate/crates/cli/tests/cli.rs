use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lmn_fusion::io::read_tensor;
use lmn_fusion::model::LmnModel;
use serde_json::{json, Value};
use tempfile::TempDir;

fn lmnfuse(command: &str, config: &Value, dir: &Path, name: &str) -> (Output, PathBuf) {
    let config_path = dir.join(format!("{name}.json"));
    fs::write(&config_path, serde_json::to_string_pretty(config).unwrap()).unwrap();
    let out = dir.join(name);
    let output = Command::new(env!("CARGO_BIN_EXE_lmnfuse"))
        .args([command, "--config"])
        .arg(&config_path)
        .arg("--output-dir")
        .arg(&out)
        .output()
        .unwrap();
    (output, out)
}

fn ok(command: &str, config: &Value, dir: &Path, name: &str) -> PathBuf {
    let (output, out) = lmnfuse(command, config, dir, name);
    assert!(
        output.status.success(),
        "{command} failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    out
}

fn error_json(output: &Output) -> Value {
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    serde_json::from_str(stderr.trim()).unwrap_or_else(|_| panic!("stderr is not JSON: {stderr}"))
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn desk(seed: u64) -> Value {
    json!({
        "synthetic": {
            "dims_sri": [24, 24, 32], "ratio": 2, "k_m": 8, "r": 2,
            "ranks": { "l": 3, "m": 3, "n": 3 }, "seed": seed
        }
    })
}

fn fuse_config(sim: &Path, extra: Value) -> Value {
    let mut config = json!({
        "hsi": sim.join("Y_H.t3b"),
        "msi": sim.join("Y_M.t3b"),
        "degradation": sim.join("degradation.json"),
        "reference": sim.join("Y_S.t3b"),
    });
    for (k, v) in extra.as_object().unwrap() {
        config[k] = v.clone();
    }
    config
}

#[test]
fn simulate_writes_data_and_passing_conditions() {
    let dir = TempDir::new().unwrap();
    let out = ok("simulate", &desk(0), dir.path(), "sim");
    for f in ["Y_S.t3b", "Y_H.t3b", "Y_M.t3b", "degradation.json", "truth_model.json"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let report = read_json(&out.join("conditions.json"));
    assert_eq!(report["known"]["all_hold"], true);
    assert_eq!(report["blind"]["all_hold"], true);
    assert_eq!(read_tensor(&out.join("Y_H.t3b")).unwrap().dims(), [12, 12, 32]);
    assert_eq!(read_tensor(&out.join("Y_M.t3b")).unwrap().dims(), [24, 24, 8]);
}

#[test]
fn identity_preset_keeps_the_hsi_equal_to_the_sri() {
    let dir = TempDir::new().unwrap();
    let preset = json!({ "blur_size": 1, "ratio": 1, "band_windows": (0..12).map(|k| vec![k]).collect::<Vec<_>>() });
    fs::write(dir.path().join("identity.json"), preset.to_string()).unwrap();
    let config = json!({
        "synthetic": { "dims_sri": [10, 9, 12], "ratio": 1, "k_m": 12, "r": 2, "ranks": { "l": 2, "m": 2, "n": 3 } },
        "degradation": "identity.json"
    });
    let out = ok("simulate", &config, dir.path(), "sim");
    let sri = read_tensor(&out.join("Y_S.t3b")).unwrap();
    assert_eq!(read_tensor(&out.join("Y_H.t3b")).unwrap(), sri);
    assert_eq!(read_tensor(&out.join("Y_M.t3b")).unwrap(), sri);
}

#[test]
fn missing_preset_path_is_named_and_nothing_is_written() {
    let dir = TempDir::new().unwrap();
    let mut config = desk(0);
    config["degradation"] = json!("no/such/preset.json");
    let (output, out) = lmnfuse("simulate", &config, dir.path(), "sim");
    let err = error_json(&output);
    assert_eq!(err["error"]["kind"], "missing_input");
    assert!(err["error"]["message"].as_str().unwrap().contains("no/such/preset.json"));
    assert!(!out.exists());
}

#[test]
fn unknown_or_missing_keys_are_rejected_before_writing() {
    let dir = TempDir::new().unwrap();
    let mut config = desk(0);
    config["synthetic"]["colour"] = json!("blue");
    let (output, out) = lmnfuse("simulate", &config, dir.path(), "unknown");
    assert_eq!(error_json(&output)["error"]["kind"], "config_parse");
    assert!(!out.exists());

    let sim = ok("simulate", &desk(0), dir.path(), "sim");
    let mut config = fuse_config(&sim, json!({ "r": 2, "ranks": { "l": 3, "m": 3, "n": 3 } }));
    config.as_object_mut().unwrap().remove("msi");
    let (output, out) = lmnfuse("fuse", &config, dir.path(), "missing");
    assert_eq!(error_json(&output)["error"]["kind"], "config_parse");
    assert!(!out.exists());

    let config = fuse_config(&sim, json!({ "init": { "kind": "standard" }, "solver": { "max_iter": 1, "tolerance": 1 } }));
    let (output, out) = lmnfuse("fuse", &config, dir.path(), "nested");
    assert_eq!(error_json(&output)["error"]["kind"], "config_parse");
    assert!(!out.exists());
}

#[test]
fn inconsistent_shapes_fail_without_output() {
    let dir = TempDir::new().unwrap();
    let sim = ok("simulate", &desk(0), dir.path(), "sim");
    let other = ok(
        "simulate",
        &json!({ "synthetic": { "dims_sri": [20, 20, 32], "ratio": 2, "k_m": 8, "r": 2, "ranks": { "l": 3, "m": 3, "n": 3 } } }),
        dir.path(),
        "other",
    );
    let mut config = fuse_config(&sim, json!({ "r": 2, "ranks": { "l": 3, "m": 3, "n": 3 } }));
    config["msi"] = json!(other.join("Y_M.t3b"));
    let (output, out) = lmnfuse("fuse", &config, dir.path(), "fused");
    assert_eq!(error_json(&output)["error"]["kind"], "dimension_mismatch");
    assert!(!out.exists());
}

#[test]
fn fuse_from_perturbed_truth_recovers_the_sri() {
    let dir = TempDir::new().unwrap();
    let sim = ok("simulate", &desk(1), dir.path(), "sim");
    let config = fuse_config(
        &sim,
        json!({ "init": { "kind": "perturbed_truth", "model": sim.join("truth_model.json"), "perturb": 0.01 } }),
    );
    let out = ok("fuse", &config, dir.path(), "fused");
    for f in ["sri_estimate.t3b", "model.json", "fit_report.json", "trace.csv", "metrics.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let nre = read_json(&out.join("metrics.json"))["nre"].as_f64().unwrap();
    assert!(nre <= 1e-4, "NRE {nre}");
    let report = read_json(&out.join("fit_report.json"));
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), report["iterations"].as_u64().unwrap() as usize + 2);
}

#[test]
fn blind_fuse_recovers_the_sri() {
    let dir = TempDir::new().unwrap();
    let sim = ok("simulate", &desk(2), dir.path(), "sim");
    let windows = read_json(&sim.join("degradation.json"))["band_windows"].clone();
    let mut config = fuse_config(
        &sim,
        json!({ "blind": true, "band_windows": windows, "r": 2, "ranks": { "l": 3, "m": 3, "n": 3 } }),
    );
    config.as_object_mut().unwrap().remove("degradation");
    let out = ok("fuse", &config, dir.path(), "fused");
    let nre = read_json(&out.join("metrics.json"))["nre"].as_f64().unwrap();
    assert!(nre <= 1e-2, "NRE {nre}");
    let manifest = read_json(&out.join("model.json"));
    assert!(manifest["terms"][0]["a_tilde"].is_string());
}

#[test]
fn zero_iterations_return_the_initialization() {
    let dir = TempDir::new().unwrap();
    let sim = ok("simulate", &desk(3), dir.path(), "sim");
    let truth_path = sim.join("truth_model.json");
    let config = fuse_config(
        &sim,
        json!({
            "init": { "kind": "perturbed_truth", "model": truth_path, "perturb": 0.05 },
            "solver": { "max_iter": 0, "seed": 9 }
        }),
    );
    let out = ok("fuse", &config, dir.path(), "fused");
    let start = LmnModel::load(&truth_path).unwrap().perturbed(0.05, 9);
    assert_eq!(LmnModel::load(&out.join("model.json")).unwrap(), start);
    assert_eq!(read_tensor(&out.join("sri_estimate.t3b")).unwrap(), start.reconstruct().unwrap());
    assert_eq!(read_json(&out.join("fit_report.json"))["iterations"], 0);
}

#[test]
fn blind_mode_without_a_spectral_response_is_rejected() {
    let dir = TempDir::new().unwrap();
    let sim = ok("simulate", &desk(0), dir.path(), "sim");
    let mut config = fuse_config(&sim, json!({ "blind": true, "r": 2, "ranks": { "l": 3, "m": 3, "n": 3 } }));
    config.as_object_mut().unwrap().remove("degradation");
    let (output, out) = lmnfuse("fuse", &config, dir.path(), "fused");
    assert_eq!(error_json(&output)["error"]["kind"], "invalid_config");
    assert!(!out.exists());
}

#[test]
fn reruns_are_bitwise_identical() {
    let dir = TempDir::new().unwrap();
    let a = ok("simulate", &desk(4), dir.path(), "a");
    let b = ok("simulate", &desk(4), dir.path(), "b");
    for f in ["Y_S.t3b", "Y_H.t3b", "Y_M.t3b", "truth_model_t1_core.t3b"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let config = fuse_config(&a, json!({ "r": 2, "ranks": { "l": 3, "m": 3, "n": 3 }, "solver": { "max_iter": 20 } }));
    let x = ok("fuse", &config, dir.path(), "x");
    let y = ok("fuse", &config, dir.path(), "y");
    for f in ["sri_estimate.t3b", "model_t0_a.t3b", "model_t1_core.t3b"] {
        assert_eq!(fs::read(x.join(f)).unwrap(), fs::read(y.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn sweep_emits_one_row_per_grid_point_and_resumes() {
    let dir = TempDir::new().unwrap();
    let sim = ok("simulate", &desk(0), dir.path(), "sim");
    let config = fuse_config(
        &sim,
        json!({
            "r": 2, "ranks": { "l": 3, "m": 3, "n": 3 },
            "solver": { "max_iter": 10 },
            "grid": { "lambda": [0.0, 0.001], "eta": [0.0, 0.01] }
        }),
    );
    let out = ok("sweep", &config, dir.path(), "sweep");
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(csv.starts_with("row,lambda,eta,l,m,n,iterations,rsnr_db"));

    let row0 = out.join("rows/row_0000/row.json");
    let mut record = read_json(&row0);
    record["metrics"]["rsnr_db"] = json!(-1.0);
    fs::write(&row0, record.to_string()).unwrap();
    ok("sweep", &config, dir.path(), "sweep");
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap().split(',').nth(7), Some("-1"));
}

#[test]
fn sweep_over_ranks_sets_both_spatial_ranks() {
    let dir = TempDir::new().unwrap();
    let sim = ok("simulate", &desk(0), dir.path(), "sim");
    let config = fuse_config(
        &sim,
        json!({
            "r": 2, "ranks": { "l": 3, "m": 3, "n": 3 },
            "solver": { "max_iter": 2 },
            "grid": { "l": [2, 3], "n": [3, 4] }
        }),
    );
    let out = ok("sweep", &config, dir.path(), "sweep");
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let shapes: Vec<String> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').skip(3).take(3).collect::<Vec<_>>().join(","))
        .collect();
    assert_eq!(shapes, ["2,2,3", "2,2,4", "3,3,3", "3,3,4"]);
}

#[test]
fn matched_budget_fit_favours_lmn() {
    let dir = TempDir::new().unwrap();
    let mut lmn_best = 0;
    for seed in 0..10 {
        let config = json!({
            "synthetic": { "dims": [24, 24, 16], "r": 3, "ranks": { "l": 4, "m": 4, "n": 4 }, "seed": seed },
            "models": [
                { "kind": "cpd", "f": 15 },
                { "kind": "tucker", "ranks": { "l": 10, "m": 10, "n": 4 } },
                { "kind": "ll1", "r": 3, "l": 6 },
                { "kind": "lmn", "r": 3, "ranks": { "l": 4, "m": 4, "n": 4 } }
            ],
            "solver": { "seed": seed }
        });
        let out = ok("fit", &config, dir.path(), &format!("fit{seed}"));
        let rows = read_json(&out.join("fit.json"));
        let nre: Vec<f64> = rows.as_array().unwrap().iter().map(|r| r["nre"].as_f64().unwrap()).collect();
        let params: Vec<u64> = rows.as_array().unwrap().iter().map(|r| r["params"].as_u64().unwrap()).collect();
        assert!(params.iter().all(|&p| (900..=1000).contains(&p)), "{params:?}");
        lmn_best += usize::from(nre[3] <= nre[..3].iter().cloned().fold(f64::INFINITY, f64::min));
    }
    assert!(lmn_best >= 8, "LMN smallest in {lmn_best}/10 seeds");
}

#[test]
fn spectrum_of_a_term_reveals_its_multilinear_rank() {
    let dir = TempDir::new().unwrap();
    let config = json!({
        "synthetic": { "dims_sri": [16, 16, 24], "ratio": 2, "k_m": 8, "r": 2, "ranks": { "l": 2, "m": 3, "n": 4 } }
    });
    let sim = ok("simulate", &config, dir.path(), "sim");
    let out = ok("spectrum", &json!({ "model": sim.join("truth_model.json"), "term": 1 }), dir.path(), "spec");
    let modes = read_json(&out.join("spectrum.json"));
    let ranks: Vec<u64> = modes.as_array().unwrap().iter().map(|m| m["rank_index"].as_u64().unwrap()).collect();
    assert_eq!(ranks, [2, 3, 4]);
    assert!(out.join("spectrum_mode3.csv").exists());

    let (output, _) = lmnfuse("spectrum", &json!({ "model": sim.join("truth_model.json"), "term": 5 }), dir.path(), "bad");
    assert_eq!(error_json(&output)["error"]["kind"], "invalid_config");
}

#[test]
fn smoothness_writes_profiles() {
    let dir = TempDir::new().unwrap();
    let sim = ok("simulate", &desk(0), dir.path(), "sim");
    let out = ok("smoothness", &json!({ "input": sim.join("Y_S.t3b") }), dir.path(), "smooth");
    let csv = fs::read_to_string(out.join("smoothness.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let p = read_tensor(&out.join("profile_mode3.t3b")).unwrap();
    assert_eq!(p.dims(), [24, 24, 30]);
    assert!(p.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
}

#[test]
fn metrics_of_identical_tensors_hit_the_sentinels() {
    let dir = TempDir::new().unwrap();
    let sim = ok("simulate", &desk(0), dir.path(), "sim");
    let y = sim.join("Y_S.t3b");
    let out = ok("metrics", &json!({ "reference": y, "estimate": y, "ratio": 2 }), dir.path(), "m");
    let m = read_json(&out.join("metrics.json"));
    assert_eq!(m["rsnr_db"], 300.0);
    assert_eq!(m["nre"], 0.0);
    assert_eq!(m["ssim"], 1.0);
    assert!(fs::read_to_string(out.join("metrics.csv")).unwrap().starts_with("rsnr_db,ssim"));
}

#[test]
fn usage_errors_are_reported_as_json() {
    let output = Command::new(env!("CARGO_BIN_EXE_lmnfuse")).arg("fuse").output().unwrap();
    assert_eq!(output.status.code(), Some(2));
    assert_eq!(error_json(&output)["error"]["kind"], "usage");
}
