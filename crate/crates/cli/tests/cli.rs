use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BASE: &str = r#"
version = 1
seed = 11

[params]
alpha = 1.5
c_plus = 0.5
c_minus = 0.5

[truncation]
small_cutoff = 0.05
big_cutoff = 1.0

[domain]
horizon = 1.0
length = 1.0

[grid]
n_t = 32
n_x = 16
"#;

struct Run {
    dir: TempDir,
}

impl Run {
    fn new(config: &str) -> Self {
        let dir = TempDir::new().unwrap();
        fs::write(dir.path().join("run.toml"), config).unwrap();
        Run { dir }
    }

    fn out(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn exec(&self, cmd: &str, out: &str, extra: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_levyheat"))
            .arg(cmd)
            .arg("--config")
            .arg(self.dir.path().join("run.toml"))
            .arg("--out")
            .arg(self.out(out))
            .args(extra)
            .output()
            .unwrap()
    }
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn json(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_str(&read(dir, name)).unwrap()
}

#[test]
fn sample_noise_is_deterministic_and_columnar() {
    let run = Run::new(BASE);
    assert_eq!(code(&run.exec("sample-noise", "a", &[])), 0);
    assert_eq!(code(&run.exec("sample-noise", "b", &["--threads", "3"])), 0);
    let a = read(&run.out("a"), "noise.csv");
    assert_eq!(a, read(&run.out("b"), "noise.csv"));
    assert!(a.starts_with("# levyheat-noise v1\n"));
    let meta = json(&run.out("a"), "noise.json");
    let jumps = meta["jumps"].as_u64().unwrap() as usize;
    let rows: Vec<&str> = a.lines().skip_while(|l| *l != "tau,x,z").skip(1).collect();
    assert_eq!(rows.len(), jumps);
    assert!(jumps > 0);

    assert_eq!(code(&run.exec("sample-noise", "c", &["--seed", "12"])), 0);
    assert_ne!(a, read(&run.out("c"), "noise.csv"));
}

#[test]
fn effective_config_is_echoed() {
    let run = Run::new(BASE);
    assert_eq!(code(&run.exec("sample-noise", "a", &["--seed", "99"])), 0);
    let echoed = read(&run.out("a"), "config.toml");
    assert!(echoed.contains("seed = 99"), "{echoed}");
    assert!(echoed.contains("[solve]"), "defaults resolved: {echoed}");
    // the echo is itself a valid config
    let again = Run::new(&echoed);
    assert_eq!(code(&again.exec("sample-noise", "a", &[])), 0);
    assert_eq!(read(&run.out("a"), "noise.csv"), read(&again.out("a"), "noise.csv"));
}

#[test]
fn invalid_configs_exit_with_validation_code() {
    let inverted = BASE.replace("small_cutoff = 0.05", "small_cutoff = 1.5");
    assert_eq!(code(&Run::new(&inverted).exec("sample-noise", "o", &[])), 2);
    let unknown_family = format!("{BASE}\n[drift]\nfamily = \"cubic\"\n");
    assert_eq!(code(&Run::new(&unknown_family).exec("solve", "o", &[])), 2);
    let missing_family = format!("{BASE}\n[drift]\nvalue = 1.0\n");
    assert_eq!(code(&Run::new(&missing_family).exec("solve", "o", &[])), 2);
    let unknown_key = format!("{BASE}\ncolour = \"blue\"\n");
    assert_eq!(code(&Run::new(&unknown_key).exec("solve", "o", &[])), 2);
    let no_version = BASE.replace("version = 1", "");
    assert_eq!(code(&Run::new(&no_version).exec("solve", "o", &[])), 2);
    assert_eq!(
        code(&Run::new(BASE).exec("verify", "o", &[])),
        2,
        "no experiments selected"
    );
}

#[test]
fn missing_config_file_is_an_io_error() {
    let out = Command::new(env!("CARGO_BIN_EXE_levyheat"))
        .args(["solve", "--config", "/nonexistent/run.toml"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 5);
}

#[test]
fn deterministic_solve_matches_heat_flow() {
    let cfg = format!(
        "{}\n[init]\nfamily = \"sine_mode\"\nmode = 1\namplitude = 1.0\n\n[solve]\nsolver = \"both\"\nmodes = 8\n",
        BASE.replace("n_t = 32\nn_x = 16", "n_t = 128\nn_x = 64")
    );
    let run = Run::new(&cfg);
    let o = run.exec("solve", "s", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = run.out("s");
    for name in ["mild.json", "galerkin.json"] {
        let err = json(&dir, name)["analytic_sup_error"].as_f64().unwrap();
        assert!(err < 1e-12, "{name}: {err}");
    }
    assert!(json(&dir, "discrepancy.json")["max_discrepancy"].as_f64().unwrap() < 1e-12);

    let csv = read(&dir, "mild.csv");
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 1 + 129);
    assert_eq!(lines[0].split(',').count(), 1 + 65);
    // u(1, 1/2) = exp(-pi^2 / 2)
    let mid: f64 = lines[129].split(',').nth(1 + 32).unwrap().parse().unwrap();
    assert!((mid - (-std::f64::consts::PI.powi(2) / 2.0).exp()).abs() < 1e-12);
}

#[test]
fn stochastic_solve_with_both_solvers_reports_discrepancy() {
    let cfg = format!(
        "{BASE}\n[noise_coef]\nfamily = \"clipped_linear\"\nslope = 0.5\ncap = 1.0\n\n\
         [init]\nfamily = \"bump\"\ncenter = 0.5\nwidth = 0.3\nheight = 1.0\n\n[solve]\nsolver = \"both\"\nmodes = 8\n"
    );
    let run = Run::new(&cfg);
    let o = run.exec("solve", "s", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d = json(&run.out("s"), "discrepancy.json")["max_discrepancy"]
        .as_f64()
        .unwrap();
    assert!(d.is_finite() && d > 0.0);
    assert!(json(&run.out("s"), "mild.json").get("analytic_sup_error").is_none());
}

#[test]
fn exhausted_picard_budget_is_a_numerical_failure() {
    let cfg = format!(
        "{BASE}\n[noise_coef]\nfamily = \"constant\"\nvalue = 1.0\n\n[drift]\nfamily = \"sine_modulated\"\namplitude = 0.5\nfrequency = 2.0\n\n\
         [solve]\nmax_iter = 1\n"
    );
    let o = Run::new(&cfg).exec("solve", "s", &[]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn stopping_law_only_verify_passes() {
    let cfg = format!("{BASE}\n[[experiments]]\nkind = \"stopping_law\"\ncutoff = 1.0\nn_paths = 2000\n");
    let run = Run::new(&cfg);
    let o = run.exec("verify", "v", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let dir = run.out("v");
    let report = json(&dir, "01_stopping_law.json");
    assert_eq!(report["pass"], true);
    assert_eq!(report["n_paths"], 2000);
    assert!(report.get("runtime_seconds").is_none());
    assert_eq!(read(&dir, "01_stopping_law.csv").lines().count(), 2001);
    assert_eq!(json(&dir, "timings.json").as_array().unwrap().len(), 1);
}

#[test]
fn comparison_with_non_monotone_phi_fails_its_precondition() {
    let cfg = format!(
        "{}\n[noise_coef]\nfamily = \"sine_modulated\"\namplitude = 1.0\nfrequency = 3.0\n\n\
         [[experiments]]\nkind = \"comparison\"\nn_paths = 4\n",
        BASE.replace("c_plus = 0.5\nc_minus = 0.5", "c_plus = 1.0\nc_minus = 0.0")
    );
    let o = Run::new(&cfg).exec("verify", "v", &[]);
    assert_eq!(code(&o), 6, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn failing_experiment_is_named_and_exits_with_code_four() {
    let cfg = format!(
        "{BASE}\n[[experiments]]\nkind = \"stopping_law\"\ncutoff = 1.0\nn_paths = 500\n\n\
         [[experiments]]\nkind = \"deterministic_oracle\"\nmodes = 4\ntol = 1e-30\n"
    );
    let run = Run::new(&cfg);
    let o = run.exec("verify", "v", &[]);
    assert_eq!(code(&o), 4);
    assert!(String::from_utf8_lossy(&o.stderr).contains("02_deterministic_oracle"));
    assert!(run.out("v").join("02_deterministic_oracle.json").exists());
}

#[test]
fn reports_are_identical_across_thread_counts() {
    let cfg = format!(
        "{BASE}\n[drift]\nfamily = \"sine_modulated\"\namplitude = 0.5\nfrequency = 2.0\n\n\
         [noise_coef]\nfamily = \"clipped_linear\"\nslope = 1.0\ncap = 2.0\n\n\
         [init]\nfamily = \"bump\"\ncenter = 0.5\nwidth = 0.3\nheight = 1.0\n\n\
         [[experiments]]\nkind = \"consistency\"\nk_small = 0.5\nk_large = 1.0\nn_paths = 12\n\n\
         [[experiments]]\nkind = \"moment\"\nn_paths = 12\n\n\
         [[experiments]]\nkind = \"jump_moment\"\nn_paths = 500\n"
    );
    let run = Run::new(&cfg);
    let a = run.exec("verify", "one", &["--threads", "1"]);
    let b = run.exec("verify", "four", &["--threads", "4"]);
    assert!(code(&a) == 0 || code(&a) == 4, "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(code(&a), code(&b));
    for name in [
        "01_consistency.json",
        "01_consistency.csv",
        "02_moment_estimate.json",
        "02_moment_estimate.csv",
        "03_jump_moment.json",
        "03_jump_moment.csv",
    ] {
        assert_eq!(read(&run.out("one"), name), read(&run.out("four"), name), "{name}");
    }
}
