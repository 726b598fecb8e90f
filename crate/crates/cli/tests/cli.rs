use std::path::Path;
use std::process::{Command, Output};

fn ssep(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssep"))
        .args(args)
        .arg("--out-dir")
        .arg(dir)
        .env_remove("SSEP_OUTPUT_DIR")
        .output()
        .expect("spawn ssep")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

fn without_timestamp(text: &str) -> String {
    text.lines().filter(|l| !l.starts_with("# timestamp=")).collect::<Vec<_>>().join("\n")
}

#[test]
fn evolve_writes_trajectory_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = ssep(dir.path(), &["evolve", "--n", "50", "--k", "2", "--j", "1", "--init", "const:0.5", "--t-final", "0.5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(&dir.path().join("evolve.csv"));
    let lines = data_lines(&text);
    assert_eq!(lines[0], "t,x,rho");
    assert_eq!(lines.len(), 1 + 11 * 101);
    assert!(text.contains("#! n=50\n") && text.contains("#! init=const:0.5\n"));
    for line in &lines[1..] {
        let rho: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((0.0..=1.0).contains(&rho));
    }
}

#[test]
fn macro_reaches_stationary_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = ssep(dir.path(), &["macro", "--j", "1", "--k", "1", "--init", "const:0.5", "--t-final", "20", "--n-times", "2", "--nr", "101"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = read(&dir.path().join("macro_flux.csv"));
    let lines = data_lines(&text);
    assert_eq!(lines[0], "t,slope_plus,flux_plus,slope_minus,flux_minus");
    let last: Vec<f64> = lines.last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(last[0], 20.0);
    assert!((last[1] - 0.25).abs() < 1e-3, "slope {}", last[1]);
    assert!((last[3] - 0.25).abs() < 1e-3, "slope {}", last[3]);
}

#[test]
fn same_seed_gives_identical_files_for_any_thread_count() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["simulate", "--n", "10", "--init", "step:0.8,0.2", "--t-final", "0.1", "--n-times", "3", "--replicas", "300", "--seed", "7"];
    let mut one = args.to_vec();
    one.extend(["--threads", "1"]);
    let mut two = args.to_vec();
    two.extend(["--threads", "3"]);
    assert!(ssep(a.path(), &one).status.success());
    assert!(ssep(b.path(), &two).status.success());
    let strip = |text: String| {
        without_timestamp(&text)
            .lines()
            .filter(|l| !l.starts_with("#! threads=") && !l.starts_with("#! out-dir="))
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_eq!(strip(read(&a.path().join("simulate.csv"))), strip(read(&b.path().join("simulate.csv"))));

    let c = tempfile::tempdir().unwrap();
    assert!(ssep(c.path(), &one).status.success());
    let first = without_timestamp(&read(&a.path().join("simulate.csv")));
    let again = without_timestamp(&read(&c.path().join("simulate.csv")));
    assert_eq!(first.replace(&a.path().display().to_string(), "DIR"), again.replace(&c.path().display().to_string(), "DIR"));
}

#[test]
fn artifact_header_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = ssep(dir.path(), &["evolve", "--n", "12", "--k", "2", "--j", "0.7", "--init", "linear:0.5,0.3", "--t-final", "0.2", "--times", "0.05,0.2"]);
    assert!(out.status.success());
    let artifact = dir.path().join("evolve.csv");
    let first = read(&artifact);
    let rerun = tempfile::tempdir().unwrap();
    let out = ssep(rerun.path(), &["evolve", "--config", artifact.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let second = read(&rerun.path().join("evolve.csv"));
    assert_eq!(data_lines(&first), data_lines(&second));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# oracle run\nn = 1\nk = 1\nj = 2\ntimes = 0,0.25\n").unwrap();
    let out = ssep(dir.path(), &["oracle", "--config", cfg.to_str().unwrap(), "--j", "0.5", "--format", "both"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = read(&dir.path().join("oracle.csv"));
    assert!(csv.contains("#! j=0.5\n"));
    let json: serde_json::Value = serde_json::from_str(&read(&dir.path().join("oracle.json"))).unwrap();
    assert_eq!(json["columns"], serde_json::json!(["t", "x", "rho"]));
    assert_eq!(json["rows"].as_array().unwrap().len(), data_lines(&csv).len() - 1);
    assert_eq!(json["metadata"]["config"]["j"], "0.5");
    // the marginals of the law table agree with the marginal table
    let law = read(&dir.path().join("oracle_law.csv"));
    let total: f64 = data_lines(&law)[1..]
        .iter()
        .filter(|l| l.starts_with("0.25,"))
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(ssep(dir.path(), &["evolve", "--n", "0"]).status.code(), Some(1));
    assert_eq!(ssep(dir.path(), &["evolve", "--init", "const:1.5"]).status.code(), Some(1));
    assert_eq!(ssep(dir.path(), &["evolve", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(ssep(dir.path(), &["oracle", "--n", "40"]).status.code(), Some(1));
    let abort = ssep(dir.path(), &["macro", "--j", "1000", "--h", "0.1", "--t-final", "1", "--n-times", "2", "--nr", "5"]);
    assert_eq!(abort.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&abort.stderr).contains("numerical abort"));
}

#[test]
fn output_dir_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_ssep"))
        .args(["kernels", "--kind", "boundary", "--t-final", "1", "--n-times", "3"])
        .env("SSEP_OUTPUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = read(&dir.path().join("kernels.csv"));
    assert_eq!(data_lines(&text)[0], "t,x,y,value");
    assert_eq!(data_lines(&text).len(), 1 + 2 * 2);
}
