use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn lamespec() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lamespec"))
}

struct Run {
    dir: TempDir,
    out: PathBuf,
    output: Output,
}

impl Run {
    fn code(&self) -> i32 {
        self.output.status.code().expect("exit code")
    }

    fn stderr(&self) -> String {
        String::from_utf8_lossy(&self.output.stderr).into_owned()
    }

    fn json(&self, name: &str) -> Value {
        let text = std::fs::read_to_string(self.out.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"));
        serde_json::from_str(&text).expect("valid json")
    }

    fn text(&self, name: &str) -> String {
        std::fs::read_to_string(self.out.join(name)).unwrap()
    }
}

fn run_with(cmd: &str, config: &str, extra: &[&str], env: &[(&str, &str)]) -> Run {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("experiment.toml");
    std::fs::write(&cfg, config).unwrap();
    let out = dir.path().join("out");
    let mut c = lamespec();
    c.arg(cmd).arg(&cfg).arg("--out").arg(&out).args(extra);
    for (k, v) in env {
        c.env(k, v);
    }
    let output = c.output().unwrap();
    Run { dir, out, output }
}

fn run(cmd: &str, config: &str) -> Run {
    run_with(cmd, config, &[], &[])
}

fn ok(r: &Run) {
    assert_eq!(r.code(), 0, "stderr: {}", r.stderr());
}

const RANDOM_3D: &str = r#"
seed = 9
[lattice]
dim = 3
n = 8
period = 6.0
"#;

#[test]
fn decompose_random_field_satisfies_identities() {
    let r = run("decompose", RANDOM_3D);
    ok(&r);
    let rep = &r.json("decompose.json")["result"];
    assert!(rep["pythagorean_residual"].as_f64().unwrap() < 1e-12);
    assert!(rep["divergence_residual"].as_f64().unwrap() < 1e-12);
    assert!(rep["gradient_residual"].as_f64().unwrap() < 1e-12);
    for f in ["f.csv", "f_s.csv", "f_p.csv", "metadata.json"] {
        assert!(r.out.join(f).exists(), "{f} missing");
    }
    assert_eq!(r.text("f.csv").lines().count(), 1 + 3 * 512);
}

#[test]
fn decompose_gradient_field_has_no_solenoidal_part() {
    let r = run("decompose", &format!("{RANDOM_3D}\n[field]\nkind = \"gradient\"\nwrite_binary = true\n"));
    ok(&r);
    let rep = &r.json("decompose.json")["result"];
    let ratio = rep["norm_solenoidal"].as_f64().unwrap() / rep["norm_f"].as_f64().unwrap();
    assert!(ratio < 1e-12, "{ratio}");
    assert_eq!(std::fs::metadata(r.out.join("f.bin")).unwrap().len(), 3 * 512 * 16);
}

#[test]
fn decompose_reads_a_field_file() {
    let first = run("decompose", RANDOM_3D);
    ok(&first);
    let src = first.out.join("f_s.csv");
    let cfg = format!("{RANDOM_3D}\n[field]\nkind = \"file\"\npath = \"{}\"\n", src.display());
    let r = run("decompose", &cfg);
    ok(&r);
    let rep = &r.json("decompose.json")["result"];
    assert!(rep["norm_potential"].as_f64().unwrap() / rep["norm_f"].as_f64().unwrap() < 1e-12);
}

#[test]
fn odd_grid_is_rejected_with_the_field_named() {
    let r = run("decompose", "[lattice]\ndim = 2\nn = 15\nperiod = 1.0\n");
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("lattice.n"), "{}", r.stderr());
    assert!(!r.out.join("decompose.json").exists());
}

#[test]
fn unknown_keys_are_rejected() {
    let r = run("decompose", "[lattice]\ndim = 2\nn = 16\nperiod = 1.0\nsize = 3\n");
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("size"), "{}", r.stderr());
}

#[test]
fn bad_thread_count_is_a_config_error() {
    let r = run_with("decompose", RANDOM_3D, &[], &[("LAMESPEC_THREADS", "zero")]);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("LAMESPEC_THREADS"));
}

#[test]
fn zero_potential_has_empty_spectrum() {
    let r = run("spectrum", "[lattice]\ndim = 2\nn = 8\nperiod = 6.0\n");
    ok(&r);
    assert_eq!(r.json("spectrum.json")["result"]["eigenvalues"].as_array().unwrap().len(), 0);
    assert_eq!(r.text("eigenvalues.csv").trim(), "");
}

/// Lowest even bound state of `-c u'' - v0 1_{|x|<a} u = z u` on the line.
fn square_well_ground_state(c: f64, v0: f64, a: f64) -> f64 {
    let f = |z: f64| {
        let k = ((z + v0) / c).sqrt();
        k * (k * a).tan() - (-z / c).sqrt()
    };
    let k_max = std::f64::consts::FRAC_PI_2 / a;
    let (mut lo, mut hi) = (-v0 + 1e-12, (c * k_max * k_max - v0).min(-1e-12));
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(lo) * f(mid) <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn square_well_spectrum_matches_shooting_oracle() {
    let cfg = r#"
[lattice]
dim = 1
n = 512
period = 20.0
[lame]
lambda = 1.0
mu = 1.0
[potential]
family = "square_well"
depth = [-5.0, 0.0]
half_width = 1.0
[solver]
discretization = "galerkin"
filter = 1e-3
"#;
    let r = run("spectrum", cfg);
    ok(&r);
    let oracle = square_well_ground_state(3.0, 5.0, 1.0);
    let text = r.text("eigenvalues.csv");
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let re: Vec<f64> = rows.records().map(|row| row.unwrap()[1].parse().unwrap()).collect();
    assert_eq!(re.len(), 1, "one bound state expected: {re:?}");
    assert!((re[0] - oracle).abs() < 1e-6, "{} vs {oracle}", re[0]);
}

#[test]
fn dense_budget_exceeded_exits_with_four() {
    let cfg = "[lattice]\ndim = 3\nn = 16\nperiod = 8.0\n[potential]\nfamily = \"gaussian\"\ndepth = [-3.0, 0.0]\nwidth = 0.4\n[solver]\nmemory_budget_mib = 1\n";
    let r = run("spectrum", cfg);
    assert_eq!(r.code(), 4, "{}", r.stderr());
}

#[test]
fn potential_outside_central_half_is_rejected() {
    let cfg = "[lattice]\ndim = 1\nn = 64\nperiod = 8.0\n[potential]\nfamily = \"square_well\"\ndepth = [-1.0, 0.0]\nhalf_width = 3.0\n";
    let r = run("spectrum", cfg);
    assert_eq!(r.code(), 2);
    assert!(r.stderr().contains("central half"), "{}", r.stderr());
}

// Default filter: at this grid it sits well above the shift <V> of the
// periodic continuum modes and below the bound states.
const WELL_1D: &str = r#"
[lattice]
dim = 1
n = 128
period = 20.0
[potential]
family = "square_well"
depth = [-4.0, 1.5]
half_width = 1.0
[solver]
discretization = "galerkin"
[[theorems]]
theorem = "T1d"
gamma = 0.5
"#;

#[test]
fn one_dimensional_enclosure_verdicts_are_inside() {
    let r = run("enclosure", WELL_1D);
    ok(&r);
    let res = &r.json("enclosure.json")["result"];
    assert_eq!(res["all_inside"], Value::Bool(true));
    let verdicts = res["reports"][0]["verdicts"].as_array().unwrap();
    assert!(!verdicts.is_empty());
    for v in verdicts {
        assert_eq!(v["kind"], "inside");
        assert!(v["margin"].as_f64().unwrap() > 0.0);
    }
    let plot = r.text("enclosure_plot.csv");
    assert!(plot.starts_with("theorem,gamma,re,im,ratio,enclosure_radius\nT1d,"));
}

#[test]
fn morrey_campanato_at_open_endpoint_is_a_hypothesis_violation() {
    // d = 3, gamma = 0: the open lower end of the p range is exactly 1.
    let cfg = "[lattice]\ndim = 3\nn = 4\nperiod = 4.0\n[[theorems]]\ntheorem = \"T_MC\"\ngamma = 0.0\np = 1.0\n";
    let r = run("enclosure", cfg);
    assert_eq!(r.code(), 3);
    assert!(r.stderr().contains("T_MC"), "{}", r.stderr());
    assert!(r.stderr().contains("< p = 1"), "{}", r.stderr());
}

const ENSEMBLE_1D: &str = r#"
seed = 4
[lattice]
dim = 1
n = 128
period = 20.0
[[theorems]]
theorem = "T1d"
gamma = 0.5
[[theorems]]
theorem = "T_Lp"
gamma = 0.5
[ensemble]
count = 6
min_depth = 2.0
max_depth = 6.0
lame = [[1.0, 1.0], [0.0, 1.0]]
skip_empty = true
"#;

#[test]
fn calibrate_reports_the_empirical_constant() {
    let r = run("calibrate", ENSEMBLE_1D);
    ok(&r);
    let res = &r.json("calibrate.json")["result"];
    let cals = res["calibrations"].as_array().unwrap();
    assert_eq!(cals.len(), 2);
    let kept = res["kept"].as_array().unwrap().len();
    assert!(kept > 0);
    for c in cals {
        let ratios: Vec<f64> = c["member_ratios"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
        assert_eq!(ratios.len(), kept);
        let max = ratios.iter().copied().fold(f64::MIN, f64::max);
        assert_eq!(c["constant"].as_f64().unwrap(), max);
        assert_eq!(c["fingerprint"], res["fingerprint"]);
    }
    assert_eq!(r.text("calibrate.csv").lines().count(), 1 + 2 * kept);
}

fn result_files(out: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.file_name().unwrap() != "metadata.json")
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn identical_config_and_seed_give_identical_outputs() {
    let a = run_with("calibrate", ENSEMBLE_1D, &[], &[("LAMESPEC_THREADS", "1")]);
    let b = run_with("calibrate", ENSEMBLE_1D, &[], &[("LAMESPEC_THREADS", "3")]);
    ok(&a);
    ok(&b);
    assert_eq!(result_files(&a.out), result_files(&b.out));
    assert_eq!(a.json("metadata.json")["threads"], 1);
    assert_eq!(b.json("metadata.json")["threads"], 3);
}

#[test]
fn seed_flag_overrides_config() {
    let a = run_with("decompose", RANDOM_3D, &["--seed", "10"], &[]);
    let b = run("decompose", RANDOM_3D);
    ok(&a);
    ok(&b);
    assert_eq!(a.json("decompose.json")["seed"], 10);
    assert_ne!(a.text("f.csv"), b.text("f.csv"));
}

#[test]
fn norms_command_reports_each_norm() {
    let cfg = r#"
[lattice]
dim = 2
n = 16
period = 8.0
[potential]
family = "square_well"
depth = [-2.0, 0.0]
half_width = 1.0
[[norms]]
name = "lp"
p = 1.0
[[norms]]
name = "morrey_campanato"
alpha = 1.25
p = 1.1
[[norms]]
name = "kerman_sayer"
alpha = 1.5
"#;
    let r = run("norms", cfg);
    ok(&r);
    let res = r.json("norms.json")["result"].as_array().unwrap().clone();
    assert_eq!(res.len(), 3);
    // Face points carry half depth, so the sampled L1 norm equals depth * area = 2 * 4.
    let l1 = res[0]["value"].as_f64().unwrap();
    assert!((l1 - 8.0).abs() < 1e-12, "{l1}");
    assert_eq!(res[1]["norm_name"], "morrey_campanato");
    assert!(res[1]["witness"].is_object());
}

#[test]
fn bs_check_at_eigenvalues_is_near_zero() {
    let cfg = r#"
[lattice]
dim = 1
n = 128
period = 20.0
[potential]
family = "gaussian"
depth = [-4.0, 1.0]
width = 0.5
[solver]
filter = 0.05
"#;
    let r = run("bs-check", cfg);
    ok(&r);
    let entries = r.json("bs.json")["result"].as_array().unwrap().clone();
    assert!(!entries.is_empty());
    for e in entries {
        assert_eq!(e["source"], "eigenvalue");
        assert!(e["distance_to_minus_one"].as_f64().unwrap() < 1e-8);
    }
}

#[test]
fn resolvent_check_rejects_points_on_the_ray() {
    let r = run("resolvent-check", "[lattice]\ndim = 2\nn = 16\nperiod = 8.0\n[resolvent]\nz = [[2.0, 0.0]]\n");
    assert_eq!(r.code(), 2, "{}", r.stderr());
    let r = run("resolvent-check", "[lattice]\ndim = 2\nn = 16\nperiod = 8.0\n[resolvent]\nz = [[-1.0, 1.0]]\n");
    ok(&r);
    let est = r.json("resolvent.json")["result"]["estimates"].as_array().unwrap().clone();
    assert_eq!(est.len(), 2);
    assert!(est.iter().all(|e| e["value"].as_f64().unwrap() > 0.0));
    drop(r.dir);
}
