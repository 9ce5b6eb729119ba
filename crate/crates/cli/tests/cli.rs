use std::path::Path;
use std::process::Command;

const TINY: &str = r#"
name = "tiny"
problem = "corr_linear"
replicates = 2
schemes = ["sequential", "pd_based", "ha_only"]
models = ["rf"]
filters = [false, true]

[training]
rf_trees = 5

[static]
pd_repeats = 1
prior_fit = { epochs = 200 }
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hybridfit"))
}

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn run_writes_records_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "tiny.toml", TINY);
    let out = dir.path().join("out");
    let status = bin().arg("run").arg(&cfg).arg("--out").arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));

    let records = std::fs::read_to_string(out.join("records.jsonl")).unwrap();
    // sequential and pd_based with and without filter, ha_only unfiltered
    assert_eq!(records.lines().count(), 2 * 5);
    let first: serde_json::Value = serde_json::from_str(records.lines().next().unwrap()).unwrap();
    assert_eq!(first["problem"], "corr_linear");

    let summary = std::fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("problem,n_train,scheme,model,filtered,metric,n,failed,mean,sd"));
    assert!(summary.contains("pd_based,rf,true,d_hat,2,0,"));
}

#[test]
fn seed_override_changes_results_and_summarize_rebuilds_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "tiny.toml", TINY);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(bin().arg("run").arg(&cfg).arg("--out").arg(&a).status().unwrap().success());
    assert!(bin().args(["--seed", "7"]).arg("run").arg(&cfg).arg("--out").arg(&b).status().unwrap().success());
    let ra = std::fs::read_to_string(a.join("records.jsonl")).unwrap();
    let rb = std::fs::read_to_string(b.join("records.jsonl")).unwrap();
    assert_ne!(ra, rb);

    let again = dir.path().join("again.csv");
    let status = bin().arg("summarize").arg(a.join("records.jsonl")).arg("--out").arg(&again).status().unwrap();
    assert!(status.success());
    assert_eq!(std::fs::read_to_string(again).unwrap(), std::fs::read_to_string(a.join("summary.csv")).unwrap());
}

#[test]
fn failed_replicates_give_exit_code_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = format!(
        "name = \"missing\"\nproblem = \"ccpp_ext\"\nschemes = [\"ha_only\"]\nmodels = [\"rf\"]\ndata_dir = \"{}\"\n",
        dir.path().join("nowhere").display()
    );
    let cfg = write(dir.path(), "missing.toml", &text);
    let status = bin().arg("run").arg(&cfg).arg("--out").arg(dir.path().join("out")).status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn invalid_config_gives_exit_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", "name = \"bad\"\nproblem = \"friedman\"\nschemes = [\"no_such_scheme\"]\n");
    let status = bin().arg("run").arg(&cfg).arg("--out").arg(dir.path().join("out")).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn export_data_writes_splits() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fr");
    let status = bin().args(["export-data", "friedman", "3"]).arg(&out).status().unwrap();
    assert!(status.success());
    for f in ["train.csv", "val.csv", "test.csv", "manifest.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
}
