use std::path::Path;
use std::process::{Command, Output};

fn suspvisc(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_suspvisc"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("SUSPVISC_OUT")
        .output()
        .expect("binary runs")
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn phi_out_of_range_exits_with_validation_code() {
    let dir = tempfile::tempdir().unwrap();
    let o = suspvisc(&["gen", "--phi", "0.5"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("phi out of range"));
    assert!(o.stdout.is_empty());
}

#[test]
fn non_convergence_exits_with_code_three() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["solve", "--dim", "2", "--L", "8", "--n", "32", "--phi", "0.1", "--max-iter", "2", "--tol", "1e-10"];
    let o = suspvisc(&args, dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn inconsistent_voxel_size_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = suspvisc(&["converge", "--dim", "2", "--L", "8,12.1,16", "--voxel", "0.25"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_process_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let o = suspvisc(&["gen", "--process", "hexagonal"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_file_round_trips_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("campaign.toml");
    let args = ["effvisc", "--dim", "2", "--L", "8", "--n", "32", "--phi", "0.05", "--configs", "2", "--seed", "7"];
    let mut full: Vec<&str> = args.to_vec();
    let cfg_str = cfg.to_str().unwrap();
    full.extend(["--emit-config", cfg_str]);
    assert!(suspvisc(&full, dir.path()).status.success());
    let text = String::from_utf8(read(&cfg)).unwrap();
    assert!(text.contains("seed = 7"));

    let again = dir.path().join("again.toml");
    let o = suspvisc(&["effvisc", "--config", cfg_str, "--emit-config", again.to_str().unwrap()], dir.path());
    assert!(o.status.success());
    assert_eq!(read(&again), text.as_bytes());

    let over = dir.path().join("over.toml");
    let o = suspvisc(
        &["effvisc", "--config", cfg_str, "--seed", "9", "--emit-config", over.to_str().unwrap()],
        dir.path(),
    );
    assert!(o.status.success());
    let t = String::from_utf8(read(&over)).unwrap();
    assert!(t.contains("seed = 9") && t.contains("n = 32"));
}

#[test]
fn effvisc_artifacts_are_reproducible_and_embed_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["effvisc", "--dim", "2", "--L", "8", "--n", "32", "--phi", "0.05", "--configs", "2", "--seed", "3"];
    let o = suspvisc(&args, dir.path());
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let json = read(&dir.path().join("effvisc.json"));
    let csv = read(&dir.path().join("effvisc.csv"));
    assert!(dir.path().join("effvisc.log").exists());

    let v: serde_json::Value = serde_json::from_slice(&json).unwrap();
    assert_eq!(v["seed"], 3);
    assert_eq!(v["config"]["solver"]["n"], 32);
    let b = v["result"]["B"][0][0].as_f64().unwrap();
    let se = v["result"]["stderr"][0][0].as_f64().unwrap();
    assert!(b > 1.0 && b < 1.5, "B00 = {b}");
    assert!(se >= 0.0);
    let text = String::from_utf8(csv.clone()).unwrap();
    assert!(text.starts_with("# seed = 3\n# config = "));

    let o = suspvisc(&args, dir.path());
    assert!(o.status.success());
    assert_eq!(read(&dir.path().join("effvisc.json")), json);
    assert_eq!(read(&dir.path().join("effvisc.csv")), csv);
}

#[test]
fn gen_writes_configurations_with_split_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let o = suspvisc(&["gen", "--dim", "2", "--L", "16", "--phi", "0.05", "--configs", "3"], dir.path());
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_slice(&read(&dir.path().join("configs.json"))).unwrap();
    let configs = v["result"]["configurations"].as_array().unwrap();
    assert_eq!(configs.len(), 3);
    assert_ne!(configs[0]["seed"], configs[1]["seed"]);
}

#[test]
fn cluster_refuses_large_subsets_without_override() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["cluster", "--dim", "2", "--L", "16", "--n", "32", "--phi", "0.15", "--particles", "5"];
    let o = suspvisc(&args, dir.path());
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));
}
