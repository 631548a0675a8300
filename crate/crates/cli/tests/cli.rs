use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use deom::bath::ModeTable;
use deom::hierarchy::ddo_count;
use deom::observables::SpectrumTable;
use deom_cli::parse_config;

fn deom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_deom"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

const NONINTERACTING: &str = r#"
[model]
kind = "single-dot"
eps = 0.0
u = 0.0

[[bath]]
label = "L"
width = 10.0
beta = 10.0

[decomposition]
method = "pade"
k = 4

[hierarchy]
level = 3

[solver]
tol = 1e-9

[observables]
spectral = [0]
currents = false

[grid]
min = -10.0
max = 10.0
points = 11
"#;

fn exact_a(w: f64) -> f64 {
    let sigma = 10.0 / num_complex::Complex64::new(w, 10.0);
    let g = 1.0 / (w - sigma);
    -g.im / std::f64::consts::PI
}

fn read_spectrum(p: &Path) -> SpectrumTable {
    SpectrumTable::read_csv(fs::File::open(p).unwrap()).unwrap()
}

#[test]
fn count_matches_formula() {
    let out = deom(&["count", "--J", "48", "--L", "5"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), ddo_count(48, 5).to_string());
    let out = deom(&["count", "--J", "65", "--L", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn noninteracting_run_writes_spectrum_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", NONINTERACTING);
    let out_dir = dir.path().join("out");
    let out = deom(&["run", &cfg, "--out", out_dir.to_str().unwrap(), "--workers", "2"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = read_spectrum(&out_dir.join("A_0_0.csv"));
    for (w, v) in a.omegas.iter().zip(a.real()) {
        let e = exact_a(*w);
        assert!(((v - e) / e).abs() < 0.05, "w={w}: {v} vs {e}");
    }
    let manifest = fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains(&format!("DDOs {}", ddo_count(16, 3))), "{manifest}");
    assert!(manifest.contains("status = ok"));
    assert!(manifest.contains("residual"));
    assert!(manifest.contains("wall_time_s"));
    let modes = ModeTable::read_csv(fs::File::open(out_dir.join("modes.csv")).unwrap()).unwrap();
    assert_eq!(modes.len(), 16);
    assert!(!out_dir.join("A_0_0.csv.partial").exists());
}

#[test]
fn reruns_are_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
[model]
kind = "single-dot"
u = 2.0

[[bath]]
label = "L"
delta = 0.5
width = 5.0
beta = 2.0
mu = 0.5

[[bath]]
label = "R"
delta = 0.5
width = 5.0
beta = 2.0
mu = -0.5

[decomposition]
method = "prony"
k = 2
tol = 0.1

[hierarchy]
level = 2

[observables]
spectral = [0]
noise = true

[grid]
min = -3.0
max = 3.0
points = 7
"#;
    let cfg = write_config(dir.path(), "c.toml", text);
    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let d = dir.path().join(run);
        let out = deom(&["run", &cfg, "--out", d.to_str().unwrap(), "--workers", "3"]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        outputs.push(d);
    }
    for f in ["A_0_0.csv", "S_L_L.csv", "S_R_R.csv", "S_L_R.csv", "S_total.csv", "dSdw.csv", "modes.csv"] {
        let a = fs::read(outputs[0].join(f)).unwrap();
        let b = fs::read(outputs[1].join(f)).unwrap();
        assert!(a == b, "{f} differs between runs");
    }
    let lr = read_spectrum(&outputs[0].join("S_L_R.csv"));
    assert!(lr.complex);
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &NONINTERACTING.replace("[hierarchy]", "[hierarchy]\ndepth = 2"));
    let out = deom(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("c.toml: line 17") && err.contains("depth"), "{err}");
    let cfg = write_config(dir.path(), "d.toml", &NONINTERACTING.replace("beta = 10.0", "beta = 0.0"));
    let out = deom(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 10"));
    let out = deom(&["run", dir.path().join("missing.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn convergence_failure_keeps_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.toml", &NONINTERACTING.replace("tol = 1e-9", "tol = 1e-9\nmax_iter = 2"));
    let out_dir = dir.path().join("out");
    let out = deom(&["run", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
    assert!(out_dir.join("modes.csv.partial").exists());
    assert!(!out_dir.join("modes.csv").exists());
    let manifest = fs::read_to_string(out_dir.join("manifest.txt.partial")).unwrap();
    assert!(manifest.contains("status = failed (exit code 3)"), "{manifest}");
}

#[test]
fn oversized_hierarchy_is_a_capacity_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = NONINTERACTING.replace("level = 3", "level = 3\nmemory_gb = 0.0001");
    let cfg = write_config(dir.path(), "c.toml", &text);
    let out = deom(&["run", &cfg, "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn fit_bath_writes_mode_table_and_enforces_tolerance() {
    let dir = tempfile::tempdir().unwrap();
    let text = NONINTERACTING.replace("k = 4", "tol = 0.02");
    let cfg = write_config(dir.path(), "c.toml", &text);
    let out_dir = dir.path().join("out");
    let out = deom(&["fit-bath", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success());
    let modes = ModeTable::read_csv(fs::File::open(out_dir.join("modes.csv")).unwrap()).unwrap();
    assert!(modes.fit_error.is_none());
    assert!(modes.len() >= 16);
    let text = NONINTERACTING.replace("k = 4", "k = 1\ntol = 0.02");
    let cfg = write_config(dir.path(), "d.toml", &text);
    let out = deom(&["fit-bath", &cfg, "--out", dir.path().join("o2").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn decoupled_dot_shows_peaks_at_the_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let text = r#"
[model]
kind = "single-dot"
eps = -1.0
u = 2.0

[hierarchy]
level = 1

[solver]
broadening = 0.05

[observables]
spectral = [0]
currents = false

[grid]
min = -2.0
max = 2.0
points = 81
"#;
    let cfg = write_config(dir.path(), "c.toml", text);
    let out_dir = dir.path().join("out");
    let out = deom(&["run", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = read_spectrum(&out_dir.join("A_0_0.csv"));
    let v = a.real();
    let peaks: Vec<f64> = (1..v.len() - 1)
        .filter(|&k| v[k] > v[k - 1] && v[k] > v[k + 1])
        .map(|k| a.omegas[k])
        .collect();
    assert_eq!(peaks.len(), 2, "{peaks:?}");
    assert!((peaks[0] + 1.0).abs() < 1e-9 && (peaks[1] - 1.0).abs() < 1e-9, "{peaks:?}");
    // Lorentzian of width η and weight ½ at each gap
    let k = a.omegas.iter().position(|&w| (w - 1.0).abs() < 1e-9).unwrap();
    assert!((v[k] - 0.5 / (std::f64::consts::PI * 0.05)).abs() < 1e-2 * v[k]);
}

#[test]
fn hopping_sign_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let base = r#"
[model]
kind = "dqd"
u = 4.0
u_c = 2.0
t_c = TC

[[bath]]
label = "L"
width = 8.0
beta = 2.0
mu = 0.5

[[bath]]
label = "R"
width = 8.0
beta = 2.0
mu = -0.5

[decomposition]
method = "prony"
k = 2

[hierarchy]
level = 2

[observables]
spectral = [0]

[grid]
min = -4.0
max = 4.0
points = 5
"#;
    let mut spectra = Vec::new();
    for (name, tc) in [("p", "0.5"), ("m", "-0.5")] {
        let cfg = write_config(dir.path(), &format!("{name}.toml"), &base.replace("TC", tc));
        let d = dir.path().join(name);
        let out = deom(&["run", &cfg, "--out", d.to_str().unwrap()]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        spectra.push(read_spectrum(&d.join("A_0_0.csv")).real());
    }
    for (a, b) in spectra[0].iter().zip(&spectra[1]) {
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
    }
}

#[test]
fn shipped_configs_parse() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for sub in ["", "ci"] {
        for entry in fs::read_dir(root.join(sub)).unwrap() {
            let p = entry.unwrap().path();
            if p.extension().and_then(|e| e.to_str()) != Some("toml") {
                continue;
            }
            let cfg = parse_config(&fs::read_to_string(&p).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            let name = p.file_stem().unwrap().to_str().unwrap();
            assert_eq!(cfg.expensive, sub.is_empty(), "{name}");
            if name == "fig2" {
                let sc = cfg.scenarios();
                assert_eq!(sc.len(), 3);
                assert_eq!(cfg.decomposition.k, Some(6));
                assert_eq!(cfg.level, 5);
                assert!(sc.iter().all(|s| s.baths.iter().all(|b| b.width == 50.0 && b.beta == 20.0)));
            }
            if name == "fig4" {
                let mus: Vec<f64> = cfg.scenarios().iter().map(|s| s.baths[0].mu).collect();
                assert_eq!(mus, vec![1.0, 2.0]);
            }
            seen += 1;
        }
    }
    assert_eq!(seen, 8);
}
