use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use peacock_lab::call_surface::{bachelier_surface, black_scholes_surface, surface_from_family};
use peacock_lab::io;
use peacock_lab::numerics::linspace;
use peacock_lab::{CallSurface, Convention, GridMeasure, PeacockFamily};
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_peacock-lab"));
    c.env_remove("PEACOCK_LAB_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_surface(dir: &Path, name: &str, surf: &CallSurface) -> PathBuf {
    let p = dir.join(name);
    io::save_surface(&p, surf).unwrap();
    p
}

fn bachelier(nt: usize, nx: usize) -> CallSurface {
    bachelier_surface(0.0, 1.0, &linspace(0.1, 1.1, nt), &linspace(-6.0, 6.0, nx)).unwrap()
}

#[test]
fn calibrate_bachelier_recovers_unit_vol() {
    let dir = tempfile::tempdir().unwrap();
    let surf = write_surface(dir.path(), "bachelier.csv", &bachelier(101, 201));
    let out = dir.path().join("out");
    let o = run(&["calibrate", "--surface", s(&surf), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lv = io::read_local_vol(&out.join("local_vol.csv")).unwrap();
    let surface = bachelier(101, 201);
    for i in 0..lv.times().len() {
        for j in 0..lv.strikes().len() {
            if surface.is_interior(i, j) && !lv.is_clamped(i, j) {
                assert!((lv.sigma().get(i, j) - 1.0).abs() < 1e-3);
            }
        }
    }
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["command"], "calibrate");
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    assert!(m["outputs"].as_array().unwrap().iter().any(|f| f["path"] == "local_vol.csv"));
    assert_eq!(json(&out.join("calibrate_report.json"))["schema_version"], 1);
}

#[test]
fn calibrate_rejects_concave_surface() {
    let dir = tempfile::tempdir().unwrap();
    let good = bachelier(11, 21);
    let mut prices = good.prices().clone();
    prices.set(5, 10, prices.get(5, 10) * 1.5);
    let bad = CallSurface::new(good.times().to_vec(), good.strikes().to_vec(), prices, Convention::Additive, None).unwrap();
    let surf = write_surface(dir.path(), "bad.csv", &bad);
    let out = dir.path().join("out");
    let o = run(&["calibrate", "--surface", s(&surf), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    let rep = json(&out.join("surface_violations.json"));
    let v = rep["violations"].as_array().unwrap();
    assert!(v.iter().any(|v| v["kind"] == "not_convex" && v["strike_index"] == 10));
}

#[test]
fn calibrate_black_scholes_multiplicative() {
    let dir = tempfile::tempdir().unwrap();
    let strikes: Vec<f64> = linspace(0.3f64.ln(), 3.0f64.ln(), 81).into_iter().map(f64::exp).collect();
    let bs = black_scholes_surface(1.0, 0.2, &linspace(0.1, 1.1, 41), &strikes).unwrap();
    // the sidecar says additive; the flag overrides it
    let additive = CallSurface::new(bs.times().to_vec(), strikes.clone(), bs.prices().clone(), Convention::Additive, None).unwrap();
    let surf = write_surface(dir.path(), "bs.csv", &additive);
    let out = dir.path().join("out");
    let o = run(&["calibrate", "--surface", s(&surf), "--convention", "multiplicative", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let lv = io::read_local_vol(&out.join("local_vol.csv")).unwrap();
    assert_eq!(lv.convention(), Convention::Multiplicative);
    let (i, j) = (20, 40);
    assert!((lv.sigma().get(i, j) - 0.2).abs() < 2e-3, "{}", lv.sigma().get(i, j));
}

#[test]
fn roundtrip_thresholds() {
    let dir = tempfile::tempdir().unwrap();
    let surf = write_surface(dir.path(), "bachelier.csv", &bachelier(101, 201));
    let out = dir.path().join("ok");
    let o = run(&["roundtrip", "--surface", s(&surf), "--threshold", "0.01", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep = json(&out.join("roundtrip_report.json"));
    assert_eq!(rep["pass"], true);
    assert!(rep["reprice_error_max_rel"].as_f64().unwrap() < 0.01);
    let fam = io::read_family(&out.join("family").join("marginal.json")).unwrap();
    assert_eq!(fam.len(), 101);

    let coarse = write_surface(dir.path(), "coarse.csv", &bachelier(11, 21));
    let out = dir.path().join("coarse");
    let o = run(&["roundtrip", "--surface", s(&coarse), "--threshold", "0.001", "--out", s(&out)]);
    assert_eq!(code(&o), 3);
    assert_eq!(json(&out.join("roundtrip_report.json"))["pass"], false);
}

#[test]
fn roundtrip_flat_surface() {
    let dir = tempfile::tempdir().unwrap();
    let grid = linspace(-5.0, 5.0, 101);
    let m = GridMeasure::gaussian(0.0, 1.0, grid.clone()).unwrap();
    let fam = PeacockFamily::new(linspace(0.0, 1.0, 6), vec![m; 6]).unwrap();
    let surf = write_surface(dir.path(), "flat.csv", &surface_from_family(&fam, &grid).unwrap());
    let out = dir.path().join("out");
    let o = run(&["roundtrip", "--surface", s(&surf), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(json(&out.join("roundtrip_report.json"))["reprice_error_max_rel"].as_f64().unwrap() < 1e-10);
}

fn write_spec(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn gallery_easy_and_excursion() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "pair.json",
        r#"{"processes":[{"kind":"easy","n_paths":20000,"steps":600,"seed":3},
                         {"kind":"excursion","n_paths":20000,"steps":600,"seed":3}],
            "checks":{"regularity":null,"monotonicity":null}}"#,
    );
    let out = dir.path().join("out");
    let o = run(&["gallery", "--spec", s(&spec), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep = json(&out.join("gallery_report.json"));
    let pair = &rep["pairs"][0];
    assert_eq!(pair["marginals_match"], true);
    assert_eq!(pair["joint_laws_differ"], true);
    let ens = io::read_ensemble(&out.join("ensembles").join("01_excursion.bin")).unwrap();
    assert_eq!(ens.n_paths(), 20000);
    assert!(out.join("marginals").join("00_easy_t1.csv").exists());
}

#[test]
fn gallery_kernel_checks() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "single.json",
        r#"{"processes":[{"kind":"easy","n_paths":50000,"steps":600,"seed":9},
                         {"kind":"brownian","n_paths":50000,"steps":600,"seed":9}],
            "checks":{"distinguisher":null}}"#,
    );
    let out = dir.path().join("out");
    let o = run(&["gallery", "--spec", s(&spec), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rep = json(&out.join("gallery_report.json"));
    let easy = &rep["processes"][0];
    assert_eq!(easy["monotonicity"]["pass"], false);
    let atom = easy["monotonicity"]["atom_rows"][0].as_u64().unwrap();
    let near_atom = easy["monotonicity"]["violations"]
        .as_array()
        .unwrap()
        .iter()
        .any(|v| v["row"].as_u64().unwrap() + 1 >= atom && v["row"].as_u64().unwrap() <= atom);
    assert!(near_atom);
    let bm = &rep["processes"][1];
    assert_eq!(bm["pass"], true, "{bm}");
}

#[test]
fn gallery_is_reproducible_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(
        dir.path(),
        "spec.json",
        r#"{"processes":[{"kind":"excursion","n_paths":3000,"steps":120,"seed":1},
                         {"kind":"cantor","n_paths":3000,"steps":120,"depth":5,"seed":1}],
            "checks":{"regularity":null,"monotonicity":null}}"#,
    );
    let outputs = |threads: &str, name: &str| {
        let out = dir.path().join(name);
        let o = bin()
            .env("PEACOCK_LAB_THREADS", threads)
            .args(["gallery", "--spec", s(&spec), "--seed", "42", "--out", s(&out)])
            .output()
            .unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let m = json(&out.join("manifest.json"));
        assert_eq!(m["seed"], 42);
        (m["outputs"].clone(), m["config_sha256"].clone())
    };
    assert_eq!(outputs("1", "a"), outputs("4", "b"));
}

fn write_family(dir: &Path, sds: &[f64]) -> PathBuf {
    let grid = linspace(-8.0, 8.0, 161);
    let times: Vec<f64> = (1..=sds.len()).map(|k| k as f64).collect();
    let ms = sds.iter().map(|&sd| GridMeasure::gaussian(0.0, sd, grid.clone()).unwrap()).collect();
    io::save_family(dir, "family", &PeacockFamily::new(times, ms).unwrap()).unwrap()
}

#[test]
fn verify_peacock_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let cases: [(&str, &[f64], i32); 3] = [("grow", &[0.5, 1.0, 1.5], 0), ("shrink", &[1.0, 1.5, 0.8], 2), ("single", &[1.0], 0)];
    for (name, sds, expected) in cases {
        let fam = write_family(&dir.path().join(name), sds);
        let out = dir.path().join(format!("{name}_out"));
        let o = run(&["verify-peacock", "--family", s(&fam), "--out", s(&out)]);
        assert_eq!(code(&o), expected, "{name}");
        let rep = json(&out.join("peacock_verdict.json"));
        assert_eq!(rep["holds"], expected == 0);
        if expected != 0 {
            assert_eq!(rep["verdict"]["verdict"], "fails");
            assert_eq!(rep["verdict"]["interval"], 1);
        }
    }
}

fn write_measure(dir: &Path, name: &str, grid: Vec<f64>, w: Vec<f64>) -> PathBuf {
    let p = dir.join(name);
    io::save_measure(&p, &GridMeasure::new(grid, w).unwrap()).unwrap();
    p
}

#[test]
fn couple_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let mu = write_measure(dir.path(), "mu.csv", vec![-1.0, 0.0, 1.0], vec![0.25, 0.5, 0.25]);
    let nu = write_measure(dir.path(), "nu.csv", vec![-2.0, 0.0, 2.0], vec![0.25, 0.5, 0.25]);

    let out = dir.path().join("ordered");
    let o = run(&["couple", "--mu", s(&mu), "--nu", s(&nu), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let k = io::read_kernel(&out.join("kernel.csv")).unwrap();
    assert!(k.martingale_defect() < 1e-9);
    let rep = json(&out.join("coupling_report.json"));
    assert!(rep["lipschitz"]["pass"].is_boolean());

    let out = dir.path().join("reversed");
    let o = run(&["couple", "--mu", s(&nu), "--nu", s(&mu), "--out", s(&out)]);
    assert_eq!(code(&o), 3);
    let cert = json(&out.join("infeasibility_certificate.json"));
    assert!(cert["witness"].is_object());

    let out = dir.path().join("identical");
    let o = run(&["couple", "--mu", s(&mu), "--nu", s(&mu), "--objective", "squared", "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let k = io::read_kernel(&out.join("kernel.csv")).unwrap();
    for (x, row) in k.source().iter().zip(k.rows()) {
        assert_eq!(row.grid(), &[*x]);
    }
}

#[test]
fn usage_and_input_errors() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["calibrate"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["roundtrip", "--surface", "x", "--convention", "sideways", "--out", "y"])), 1);
    let o = bin().env("PEACOCK_LAB_THREADS", "zero").args(["verify-peacock", "--family", "f", "--out", "o"]).output().unwrap();
    assert_eq!(code(&o), 1);

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = run(&["verify-peacock", "--family", s(&dir.path().join("missing.json")), "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(out.join("error.json").exists() && out.join("manifest.json").exists());

    let garbage = write_spec(dir.path(), "garbage.csv", "t,1,2\n0.5,abc,0.1\n");
    let o = run(&["calibrate", "--surface", s(&garbage), "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    assert_eq!(json(&out.join("error.json"))["exit_code"], 2);
}

#[test]
fn config_file_is_applied_and_hashed() {
    let dir = tempfile::tempdir().unwrap();
    let surf = write_surface(dir.path(), "b.csv", &bachelier(21, 41));
    let cfg = write_spec(dir.path(), "cfg.json", r#"{"dupire":{"sigma_max":0.5}}"#);
    let out = dir.path().join("out");
    let o = run(&["calibrate", "--surface", s(&surf), "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(code(&o), 0);
    let lv = io::read_local_vol(&out.join("local_vol.csv")).unwrap();
    assert!(lv.max_sigma() <= 0.5);
    assert!(!lv.clamps().is_empty());
    let m = json(&out.join("manifest.json"));
    assert_eq!(m["config"]["config"]["dupire"]["sigma_max"], 0.5);

    let bad = write_spec(dir.path(), "bad.json", r#"{"dupre":{}}"#);
    let o = run(&["calibrate", "--surface", s(&surf), "--config", s(&bad), "--out", s(&dir.path().join("o2"))]);
    assert_eq!(code(&o), 2);
}
