//! Writes the example inputs used in the README into a directory
//! (default `fixtures/`).
//!
//! ```text
//! cargo run -p peacock-lab --example make_fixtures -- fixtures
//! ```

use std::path::{Path, PathBuf};

use peacock_lab::call_surface::{bachelier_surface, black_scholes_surface};
use peacock_lab::io;
use peacock_lab::numerics::linspace;
use peacock_lab::{CallSurface, GridMeasure, PeacockFamily};

fn family(dir: &Path, sds: &[f64]) -> peacock_lab::Result<PathBuf> {
    let grid = linspace(-8.0, 8.0, 161);
    let times = (1..=sds.len()).map(|k| k as f64).collect();
    let ms = sds
        .iter()
        .map(|&sd| GridMeasure::gaussian(0.0, sd, grid.clone()))
        .collect::<peacock_lab::Result<Vec<_>>>()?;
    io::save_family(dir, "family", &PeacockFamily::new(times, ms)?)
}

fn main() -> peacock_lab::Result<()> {
    let root = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    let times = linspace(0.1, 1.1, 101);

    let bachelier = bachelier_surface(0.0, 1.0, &times, &linspace(-6.0, 6.0, 201))?;
    io::save_surface(&root.join("surfaces/bachelier.csv"), &bachelier)?;
    let coarse = bachelier_surface(0.0, 1.0, &linspace(0.1, 1.1, 11), &linspace(-6.0, 6.0, 21))?;
    io::save_surface(&root.join("surfaces/bachelier_coarse.csv"), &coarse)?;

    let strikes: Vec<f64> = linspace(0.3f64.ln(), 3.0f64.ln(), 201).into_iter().map(f64::exp).collect();
    io::save_surface(&root.join("surfaces/black_scholes.csv"), &black_scholes_surface(1.0, 0.2, &times, &strikes)?)?;

    let mut prices = bachelier.prices().clone();
    prices.set(50, 100, prices.get(50, 100) * 1.1);
    let concave = CallSurface::new(times.clone(), bachelier.strikes().to_vec(), prices, bachelier.convention(), None)?;
    io::save_surface(&root.join("surfaces/concave.csv"), &concave)?;

    family(&root.join("families/gaussian"), &[0.5, 1.0, 1.5])?;
    family(&root.join("families/shrinking"), &[1.0, 1.5, 0.8])?;

    let measures = root.join("measures");
    io::save_measure(&measures.join("mu.csv"), &GridMeasure::new(vec![-1.0, 0.0, 1.0], vec![0.25, 0.5, 0.25])?)?;
    io::save_measure(&measures.join("nu.csv"), &GridMeasure::new(vec![-2.0, 0.0, 2.0], vec![0.25, 0.5, 0.25])?)?;

    let gallery = root.join("gallery");
    io::save_text(
        &gallery.join("easy_excursion.json"),
        r#"{
  "processes": [
    {"kind": "easy", "n_paths": 100000, "steps": 600, "seed": 1},
    {"kind": "excursion", "n_paths": 100000, "steps": 600, "seed": 1}
  ]
}
"#,
    )?;
    io::save_text(
        &gallery.join("brownian.json"),
        r#"{
  "processes": [{"kind": "brownian", "n_paths": 100000, "steps": 600, "seed": 1}],
  "checks": {"distinguisher": null}
}
"#,
    )?;
    io::save_text(
        &gallery.join("cantor.json"),
        r#"{
  "processes": [{"kind": "cantor", "n_paths": 50000, "steps": 600, "record": 60, "depth": 8, "seed": 1}]
}
"#,
    )?;
    println!("fixtures written to {}", root.display());
    Ok(())
}
