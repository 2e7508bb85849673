//! End-to-end tests of the `varpo` binary: exit codes, byte-determinism of
//! report files, and the side files the experiments emit.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn varpo(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varpo"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn tempdir(name: &str) -> std::path::PathBuf {
    let dir = std::env::temp_dir().join(format!("varpo_cli_{name}_{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn bandit3_reports_are_byte_identical_across_runs_and_worker_counts() {
    let dir = tempdir("determinism");
    for (out, workers) in [("a.csv", "1"), ("b.csv", "4")] {
        let result = Command::new(env!("CARGO_BIN_EXE_varpo"))
            .args(["bandit3", "--seed", "9", "--trials", "4000", "--out", out, "--format", "csv"])
            .env("VARPO_WORKERS", workers)
            .current_dir(&dir)
            .output()
            .unwrap();
        assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    }
    let a = fs::read(dir.join("a.csv")).unwrap();
    let b = fs::read(dir.join("b.csv")).unwrap();
    assert_eq!(a, b);
    // histogram side files exist and are identical too
    let ha = fs::read(dir.join("a_hist_returns_vanilla.csv")).unwrap();
    let hb = fs::read(dir.join("b_hist_returns_vanilla.csv")).unwrap();
    assert_eq!(ha, hb);
    assert!(ha.starts_with(b"bin_left,bin_right,count\n"));
}

#[test]
fn json_format_mirrors_rows() {
    let dir = tempdir("json");
    let result = varpo(
        &["bandit3", "--seed", "3", "--trials", "500", "--out", "r.json", "--format", "json"],
        &dir,
    );
    assert!(result.status.success());
    let text = fs::read_to_string(dir.join("r.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["experiment"], "bandit3");
    assert_eq!(v["seed"], 3);
    let rows = v["rows"].as_array().unwrap();
    assert!(rows.iter().any(|r| r["metric"] == "reference_return" && r["std_error"] == "exact"));
    assert!(rows.iter().any(|r| r["metric"] == "mc_risk_vanilla" && r["std_error"].is_number()));
}

#[test]
fn config_file_is_honored_and_flags_override_it() {
    let dir = tempdir("config");
    fs::write(dir.join("run.toml"), "seed = 5\ntrials = 300\n[bandit3]\nepsilon = 0.02\n")
        .unwrap();
    let result = varpo(&["bandit3", "--config", "run.toml", "--out", "c.csv"], &dir);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));
    let text = fs::read_to_string(dir.join("c.csv")).unwrap();
    assert!(text.contains("bandit3,epsilon,0.02,exact,0,5"));
    assert!(text.contains(",300,5\n"));

    // same config, seed overridden on the command line
    let result = varpo(&["bandit3", "--config", "run.toml", "--seed", "6", "--out", "d.csv"], &dir);
    assert!(result.status.success());
    let text = fs::read_to_string(dir.join("d.csv")).unwrap();
    assert!(text.contains("bandit3,epsilon,0.02,exact,0,6"));
}

#[test]
fn unknown_config_keys_exit_with_config_error() {
    let dir = tempdir("badkey");
    fs::write(dir.join("bad.toml"), "sead = 5\n").unwrap();
    let result = varpo(&["bandit3", "--config", "bad.toml"], &dir);
    assert_eq!(result.status.code(), Some(2));

    fs::write(dir.join("bad2.toml"), "[bandit3]\nepsilonn = 0.01\n").unwrap();
    let result = varpo(&["bandit3", "--config", "bad2.toml"], &dir);
    assert_eq!(result.status.code(), Some(2));

    let result = varpo(&["bandit3", "--config", "missing.toml"], &dir);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn invalid_variance_range_is_a_config_error() {
    let dir = tempdir("badrange");
    fs::write(dir.join("bad.toml"), "[fig_distribution]\nvariance_ranges = [[5.0, 2.0]]\n")
        .unwrap();
    let result = varpo(&["fig-distribution", "--config", "bad.toml"], &dir);
    assert_eq!(result.status.code(), Some(2));
}

#[test]
fn check_failures_exit_with_code_four() {
    // the stats-report reference critical value is inconsistent with the
    // exact F quantile, so its --check is expected to fail
    let dir = tempdir("check");
    let result = varpo(&["stats-report", "--check", "--out", "s.csv"], &dir);
    assert_eq!(result.status.code(), Some(4));
    let stderr = String::from_utf8_lossy(&result.stderr);
    assert!(stderr.contains("[FAIL] f_critical_matches_reference"));
    assert!(stderr.contains("[PASS] f_score_gpt2"));

    // coverage checks pass
    let result = varpo(&["coverage", "--seed", "2", "--check", "--out", "cov.csv"], &dir);
    assert_eq!(result.status.code(), Some(0), "{}", String::from_utf8_lossy(&result.stderr));
}

#[test]
fn rlhf_sim_writes_population_dump_and_scenario_files_load() {
    let dir = tempdir("rlhf");
    let scenario = serde_json::json!({
        "num_prompts": 1,
        "num_responses": 3,
        "pairs": [
            {"pair_id": 0, "a": 40.0, "b": 60.0},
            {"pair_id": 1, "a": 46.0, "b": 50.0},
            {"pair_id": 2, "a": 3.0, "b": 99.0}
        ]
    });
    fs::write(dir.join("env.json"), scenario.to_string()).unwrap();
    fs::write(
        dir.join("run.toml"),
        "[rlhf_sim]\nscenario_file = \"env.json\"\npopulation = 6\neval_prompts = 64\n",
    )
    .unwrap();
    let result =
        varpo(&["rlhf-sim", "--config", "run.toml", "--seed", "4", "--out", "pop.csv"], &dir);
    assert!(result.status.success(), "{}", String::from_utf8_lossy(&result.stderr));

    let dump = fs::read_to_string(dir.join("pop_population.json")).unwrap();
    let records: serde_json::Value = serde_json::from_str(&dump).unwrap();
    let records = records.as_array().unwrap();
    assert_eq!(records.len(), 12); // 6 per method
    for rec in records {
        assert!(rec["method"] == "vanilla" || rec["method"] == "variance_aware");
        assert!(rec["eval_return"].is_number());
        assert!(rec["final_logits"].is_array());
        assert!(rec["seed"].is_number());
        assert!(rec["policy_index"].is_number());
    }
}

#[test]
fn project_simplex_drops_analytic_rows() {
    let dir = tempdir("proj");
    let result = varpo(
        &["bandit3", "--seed", "2", "--trials", "400", "--project-simplex", "--out", "p.csv"],
        &dir,
    );
    assert!(result.status.success());
    let text = fs::read_to_string(dir.join("p.csv")).unwrap();
    assert!(!text.contains("analytic_risk_vanilla"));
    assert!(text.contains("mc_risk_vanilla"));
}
