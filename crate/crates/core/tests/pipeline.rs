//! End-to-end flows through the public API and the file formats.

use peacock_lab::call_surface::{bachelier_surface, bl_density, validate_surface};
use peacock_lab::dupire::local_vol;
use peacock_lab::io;
use peacock_lab::mc::{empirical_marginal, increment_mean, simulate_localvol, Initial};
use peacock_lab::measures::check_convex_order;
use peacock_lab::numerics::linspace;
use peacock_lab::transport::{chain_kernels, Objective};
use peacock_lab::{DupireConfig, GridMeasure, PeacockFamily};
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

#[test]
fn surface_file_to_simulated_marginal() {
    let dir = tempfile::tempdir().unwrap();
    let s = bachelier_surface(0.0, 0.8, &linspace(0.1, 1.0, 46), &linspace(-5.0, 5.0, 101)).unwrap();
    let path = dir.path().join("s.csv");
    io::save_surface(&path, &s).unwrap();
    let s = io::read_surface(&path).unwrap();
    assert!(validate_surface(&s).passed());

    let lv = local_vol(&s, &DupireConfig::default()).unwrap();
    let lv_path = dir.path().join("lv.csv");
    io::save_local_vol(&lv_path, &lv).unwrap();
    let lv = io::read_local_vol(&lv_path).unwrap();

    let p0 = bl_density(&s, 0).unwrap().measure;
    let ens = simulate_localvol(&lv, &Initial::Measure(p0), 20_000, 4, 5).unwrap();
    let ens_path = dir.path().join("paths.bin");
    io::save_ensemble(&ens_path, &ens).unwrap();
    let back = io::read_ensemble(&ens_path).unwrap();
    assert_eq!(back, ens);

    // the terminal law is N(0, 0.64) up to the lattice of the initial
    // density, the calibrated vol and sampling
    let m = empirical_marginal(&back, 1.0).unwrap();
    let oracle = Normal::new(0.0, 0.8).unwrap();
    let ks = m
        .grid()
        .iter()
        .zip(m.cdf_values())
        .map(|(&x, f)| (f - oracle.cdf(x)).abs())
        .fold(0.0, f64::max);
    assert!(ks < 1.63 / (20_000f64).sqrt() + 0.01, "KS distance {ks}");
    let inc = increment_mean(&back, 0, back.times().len() - 1);
    assert!(inc.mean.abs() < 4.0 * inc.std_error());
}

#[test]
fn family_files_to_kernel_chain() {
    let dir = tempfile::tempdir().unwrap();
    let grid = linspace(-4.0, 4.0, 9);
    let fam = PeacockFamily::new(
        vec![1.0, 2.0, 3.0],
        [0.6, 1.0, 1.4]
            .iter()
            .map(|&sd| GridMeasure::gaussian(0.0, sd, grid.clone()).unwrap())
            .collect(),
    )
    .unwrap();
    let p = io::save_family(dir.path(), "fam", &fam).unwrap();
    let fam = io::read_family(&p).unwrap();
    assert!(fam.verify().holds());
    let chain = chain_kernels(&fam, Objective::FeasibleOnly).unwrap();
    for (k, kernel) in chain.kernels.iter().enumerate() {
        let kp = dir.path().join(format!("k{k}.csv"));
        io::save_kernel(&kp, kernel).unwrap();
        let back = io::read_kernel(&kp).unwrap();
        assert!(back.martingale_defect() < 1e-8);
    }
    for (m, target) in chain.marginals().unwrap().iter().zip(fam.measures()) {
        assert!(peacock_lab::measures::w1_distance(m, target) < 1e-8);
    }
}

proptest! {
    #[test]
    fn measure_files_roundtrip(points in prop::collection::btree_map(-1_000_000i64..1_000_000, 1u32..1000, 1..40)) {
        let grid: Vec<f64> = points.keys().map(|&k| k as f64 / 997.0).collect();
        let w: Vec<f64> = points.values().map(|&v| f64::from(v)).collect();
        let m = GridMeasure::normalized(grid, w).unwrap();
        let back = io::parse_measure_csv(&io::write_measure_csv(&m)).unwrap();
        prop_assert_eq!(back.grid(), m.grid());
        prop_assert_eq!(back.weights(), m.weights());
        prop_assert!(matches!(check_convex_order(&m, &back), peacock_lab::measures::ConvexOrderVerdict::Holds));
    }
}
