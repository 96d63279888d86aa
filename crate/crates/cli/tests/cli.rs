use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const EXAMPLE1_CONSTANTS: &str = r#"
[conditions]
a1_c = 110.19630006628847
growth_c = 0.1353352832366127
growth_alpha = 1.0
psi_c1 = 54.598150033144236
"#;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("config.in.toml");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_sdelimit"))
        .arg("--config")
        .arg(&path)
        .args(args)
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn small_example1(paths: usize, k_max: i32) -> String {
    format!(
        "[model]\nname = \"example1\"\n[schedule]\nk_min = 3\nk_max = {k_max}\n[sim]\nseed = 11\npaths = {paths}\n{EXAMPLE1_CONSTANTS}"
    )
}

#[test]
fn example1_check_passes() {
    let tmp = TempDir::new().unwrap();
    let out = run(tmp.path(), &small_example1(10, 10), &["check", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("conditions.csv")).unwrap();
    assert!(csv.starts_with("# config_sha256="));
    for c in ["a0_integral", "a1_max_violation", "a2_max_ratio"] {
        assert!(csv.contains(c), "missing {c}");
    }
    let meta = fs::read_to_string(tmp.path().join("metadata.json")).unwrap();
    assert!(meta.contains("timestamp_unix"));
}

#[test]
fn constant_integrand_fails_a3() {
    let tmp = TempDir::new().unwrap();
    let cfg = "[model]\nname = \"zero_drift\"\nintegrand = \"const:1\"\n[sim]\nseed = 3\n[conditions]\nchecks = [\"A3:theorem3\"]\n";
    let out = run(tmp.path(), cfg, &["check", "--out", tmp.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stdout).contains("A3:theorem3"));
}

#[test]
fn usage_errors_exit_2() {
    let tmp = TempDir::new().unwrap();
    let o = tmp.path().to_str().unwrap();
    let empty = "[model]\nname = \"example1\"\n[schedule]\nvalues = []\n[sim]\nseed = 1\n";
    assert_eq!(code(&run(tmp.path(), empty, &["check", "--out", o])), 2);
    let no_seed = "[model]\nname = \"example1\"\n";
    assert_eq!(code(&run(tmp.path(), no_seed, &["check", "--out", o])), 2);
    let unknown_key = "[model]\nname = \"example1\"\nfoo = 1\n[sim]\nseed = 1\n";
    assert_eq!(code(&run(tmp.path(), unknown_key, &["check", "--out", o])), 2);
    let unknown = Command::new(env!("CARGO_BIN_EXE_sdelimit"))
        .args(["example", "example3", "--out", o])
        .output()
        .unwrap();
    assert_eq!(code(&unknown), 2);
}

#[test]
fn seed_flag_satisfies_missing_seed() {
    let tmp = TempDir::new().unwrap();
    let cfg = "[model]\nname = \"example1\"\n[sim]\npaths = 4\n";
    let o = tmp.path().to_str().unwrap();
    let out = run(tmp.path(), cfg, &["simulate", "--b", "8", "--seed", "5", "--out", o]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("paths_b8.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap() == "path_id,t,xi,dW");
}

#[test]
fn dump_transform_writes_table() {
    let tmp = TempDir::new().unwrap();
    let cfg = "[model]\nname = \"example2\"\n[sim]\nseed = 1\n";
    let o = tmp.path().to_str().unwrap();
    let out = run(tmp.path(), cfg, &["dump-transform", "--b", "16", "--out", o]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("transform_b16.csv")).unwrap();
    assert_eq!(csv.lines().nth(1).unwrap(), "x,f_prime,f,G,phi");
    assert!(csv.lines().count() > 1000);
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn reports_are_byte_identical_across_runs_and_workers() {
    let cfg = small_example1(300, 6);
    let mut outputs = Vec::new();
    for workers in ["1", "1", "3"] {
        let tmp = TempDir::new().unwrap();
        let o = tmp.path().to_str().unwrap().to_string();
        for args in [
            vec!["verify", "--theorem", "2"],
            vec!["verify", "--theorem", "1"],
            vec!["simulate", "--b", "16"],
        ] {
            let mut args = args.clone();
            args.extend(["--workers", workers, "--out", &o]);
            let out = run(tmp.path(), &cfg, &args);
            assert_ne!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
        }
        outputs.push(csv_files(tmp.path()));
    }
    assert!(outputs[0].len() >= 4);
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(outputs[0], outputs[2]);
}

#[test]
fn example1_pipeline_passes() {
    let tmp = TempDir::new().unwrap();
    // The built-in example constants apply; only the ensemble size is reduced.
    let cfg = "[model]\nname = \"example1\"\n[sim]\nseed = 20170922\npaths = 200\n".to_string() + EXAMPLE1_CONSTANTS;
    let out = run(tmp.path(), &cfg, &["example", "example1", "--out", tmp.path().to_str().unwrap()]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(code(&out), 0, "{stdout}\n{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout.contains("theorem 2 (zeta): pass"));
    assert!(tmp.path().join("theorem2.csv").exists());
}
