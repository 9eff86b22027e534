use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn symctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_symctl"))
        .args(args)
        .env_remove("SYMCTL_MAX_VISITS")
        .env_remove("SYMCTL_MAX_DEPTH")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn scalar_text() -> String {
    fs::read_to_string(configs().join("scalar.toml")).unwrap()
}

/// Writes `text` as a config inside `dir` and returns its path.
fn variant(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn report_prints_timing_and_checks() {
    let o = symctl(&["report", path_str(&configs().join("unicycle.toml"))]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("N_min 1 N_max 2"), "{out}");
    assert!(out.contains("22 bits") && out.contains("6 bits"), "{out}");
    assert!(out.contains("abstraction_params ok"), "{out}");
    assert!(out.contains("synthesis_params ok"), "{out}");
}

#[test]
fn certify_passes_and_understated_rate_fails() {
    let o = symctl(&["certify", path_str(&configs().join("scalar.toml"))]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("result pass"));
    let dir = TempDir::new().unwrap();
    let cfg = variant(&dir, "slow.toml", &scalar_text().replace("lambda = 2.0", "lambda = -2.0"));
    let o = symctl(&["certify", &cfg]);
    assert_eq!(code(&o), 1, "{}", stdout(&o));
    assert!(stdout(&o).contains("result fail"));
}

#[test]
fn missing_certificate_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let text = scalar_text();
    let start = text.find("[certificate]").unwrap();
    let end = text.find("[network]").unwrap();
    let cfg = variant(&dir, "bare.toml", &format!("{}{}", &text[..start], &text[end..]));
    let out = dir.path().join("c.txt");
    let o = symctl(&["synthesize", &cfg, "-o", path_str(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("certificate"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn violated_inequality_is_named() {
    let dir = TempDir::new().unwrap();
    let cfg = variant(&dir, "tight.toml", &scalar_text().replace("eps = 0.3", "eps = 0.2"));
    let o = symctl(&["synthesize", &cfg, "-o", path_str(&dir.path().join("c.txt"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("μx + θ ≤ ε"), "{}", stderr(&o));
}

#[test]
fn unknown_field_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = variant(&dir, "typo.toml", &scalar_text().replace("seed = 7", "sed = 7"));
    let o = symctl(&["report", &cfg]);
    assert_eq!(code(&o), 2);
}

#[test]
fn visit_budget_exits_with_three() {
    let dir = TempDir::new().unwrap();
    let text = fs::read_to_string(configs().join("unicycle_coarse.toml")).unwrap();
    let cfg = variant(&dir, "small.toml", &text.replace("[params]\n", "[params]\nmax_visits = 10\n"));
    let o = symctl(&["synthesize", &cfg, "-o", path_str(&dir.path().join("c.txt"))]);
    assert_eq!(code(&o), 3, "{}{}", stdout(&o), stderr(&o));
}

#[test]
fn integrated_controller_simulates_deterministically() {
    let dir = TempDir::new().unwrap();
    let cfg = configs().join("scalar.toml");
    let ctrl = dir.path().join("c.txt");
    let o = symctl(&["synthesize", path_str(&cfg), "--mode", "integrated", "-o", path_str(&ctrl)]);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    assert!(stdout(&o).contains("found true"));
    let mut csv = Vec::new();
    for run in ["a", "b"] {
        let out_dir = dir.path().join(run);
        let o = symctl(&["simulate", path_str(&cfg), "--controller", path_str(&ctrl), "--realizations", "3", "--out-dir", path_str(&out_dir)]);
        assert!([0, 1].contains(&code(&o)), "{}", stderr(&o));
        let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
        assert_eq!(summary.lines().count(), 4);
        let trace = fs::read_to_string(out_dir.join("trace_0002.csv")).unwrap();
        assert!(trace.starts_with("k,t,x1,u1,N_k,y1\n"));
        csv.push((summary, trace));
    }
    assert_eq!(csv[0], csv[1]);
}

#[test]
fn naive_mode_writes_a_controller_file() {
    let dir = TempDir::new().unwrap();
    let ctrl = dir.path().join("naive.txt");
    let o = symctl(&["synthesize", path_str(&configs().join("scalar.toml")), "--mode", "naive", "-o", path_str(&ctrl)]);
    assert!([0, 1].contains(&code(&o)), "{}", stderr(&o));
    assert!(stdout(&o).contains("peak_extended_states"));
    assert!(ctrl.exists());
}

#[test]
fn empty_and_naive_controllers_are_refused() {
    let dir = TempDir::new().unwrap();
    let cfg = configs().join("scalar.toml");
    let ctrl = dir.path().join("c.txt");
    assert_eq!(code(&symctl(&["synthesize", path_str(&cfg), "-o", path_str(&ctrl)])), 0);
    let text = fs::read_to_string(&ctrl).unwrap();
    let head = &text[..text.find("entries ").unwrap()];
    let empty = dir.path().join("empty.txt");
    fs::write(&empty, format!("{head}entries 0\nbad 0\n")).unwrap();
    let runs = dir.path().join("runs");
    let o = symctl(&["simulate", path_str(&cfg), "--controller", path_str(&empty), "--out-dir", path_str(&runs)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("empty"), "{}", stderr(&o));
    let naive = dir.path().join("naive.txt");
    assert!([0, 1].contains(&code(&symctl(&["synthesize", path_str(&cfg), "--mode", "naive", "-o", path_str(&naive)]))));
    let o = symctl(&["simulate", path_str(&cfg), "--controller", path_str(&naive), "--out-dir", path_str(&runs)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("naive-mode"), "{}", stderr(&o));
    assert!(!runs.exists());
}

#[test]
fn grid_mismatch_is_refused() {
    let dir = TempDir::new().unwrap();
    let cfg = configs().join("scalar.toml");
    let ctrl = dir.path().join("c.txt");
    assert_eq!(code(&symctl(&["synthesize", path_str(&cfg), "-o", path_str(&ctrl)])), 0);
    let other = variant(&dir, "fine.toml", &scalar_text().replace("mu_x = 0.1", "mu_x = 0.05"));
    let o = symctl(&["simulate", &other, "--controller", path_str(&ctrl), "--out-dir", path_str(&dir.path().join("runs"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("grids"), "{}", stderr(&o));
}
