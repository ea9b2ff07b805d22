use std::path::Path;
use std::process::Command;

use mixnas::runner::{read_final, read_manifest, FINAL_FILE, MANIFEST_FILE};

fn mixnas(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mixnas")).args(args).output().expect("binary runs")
}

fn config(dir: &Path) -> String {
    let path = dir.join("small.toml");
    std::fs::write(
        &path,
        "seed = 1\nt_theta = 50\nepsilons = [0.0, 1.0]\n[evaluator]\nkind = \"tradeoff\"\ndims = 3\ncategories = 3\n",
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn flags_override_config_and_replay_matches() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path());
    let out = tmp.path().join("run");
    let out_s = out.display().to_string();
    let o = mixnas(&[
        "search", "--config", &cfg, "--method", "method2", "--seed", "9", "--epsilons", "0,0.5,2", "--lambda", "3",
        "--out", &out_s,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let m = read_manifest(&out.join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.seed, 9);
    assert_eq!(m.config.epsilons, vec![0.0, 0.5, 2.0]);
    assert_eq!(m.config.lambda, 3);
    assert_eq!(m.config.t_theta, 50);
    assert_eq!(read_final(&out.join(FINAL_FILE)).unwrap().architectures.len(), 3);

    let again = tmp.path().join("again").display().to_string();
    let o = mixnas(&["replay", &out_s, "--out", &again]);
    assert!(o.status.success());
    assert!(String::from_utf8_lossy(&o.stdout).contains("final.toml: identical"));
}

#[test]
fn pareto_oracle_prints_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let o = mixnas(&["pareto-oracle", "--config", &config(tmp.path())]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert!(text.starts_with("complexity,loss,choices\n"));
    assert!(text.lines().count() > 1);
}

#[test]
fn gradcheck_passes_and_bad_input_fails() {
    assert!(mixnas(&["gradcheck", "--cases", "5"]).status.success());
    let o = mixnas(&["search", "--lambda", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("lambda"));
}
