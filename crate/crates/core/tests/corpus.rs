//! Replays the fuzz corpus through the parsers on a stable toolchain.

use std::fs;
use std::path::Path;

use peacock_lab::io;

fn split_nul(data: &[u8]) -> (&[u8], Option<&[u8]>) {
    match data.iter().position(|&b| b == 0) {
        Some(i) => (&data[..i], Some(&data[i + 1..])),
        None => (data, None),
    }
}

fn seeds(target: &str) -> Vec<Vec<u8>> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut files: Vec<_> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .collect();
    files.sort();
    assert!(!files.is_empty(), "no seeds for {target}");
    files.into_iter().map(|p| fs::read(p).unwrap()).collect()
}

fn text(b: &[u8]) -> &str {
    std::str::from_utf8(b).unwrap_or("")
}

#[test]
fn measure_seeds() {
    let parsed: Vec<_> = seeds("measure_csv").iter().map(|s| io::parse_measure_csv(text(s)).is_ok()).collect();
    assert!(parsed.contains(&true) && parsed.contains(&false));
}

#[test]
fn surface_and_local_vol_seeds() {
    for s in seeds("surface_csv") {
        let (csv, meta) = split_nul(&s);
        let _ = io::parse_surface(text(csv), meta.map(text));
    }
    let ok = seeds("local_vol_csv")
        .iter()
        .filter(|s| {
            let (csv, meta) = split_nul(s);
            io::parse_local_vol(text(csv), meta.map(text)).is_ok()
        })
        .count();
    assert!(ok >= 1);
}

#[test]
fn json_seeds() {
    for s in seeds("family_manifest") {
        let _ = io::parse_family_manifest(text(&s));
    }
    assert!(seeds("gallery_spec").iter().all(|s| io::parse_gallery_run(text(s)).is_ok()));
}

#[test]
fn binary_seeds() {
    let decoded: Vec<bool> = seeds("ensemble")
        .iter()
        .map(|s| {
            let (h, b) = split_nul(s);
            io::decode_ensemble(text(h), b.unwrap_or_default()).is_ok()
        })
        .collect();
    assert!(decoded.contains(&true) && decoded.contains(&false));
    for s in seeds("kernel") {
        let (h, c) = split_nul(&s);
        let k = io::decode_kernel(text(h), text(c.unwrap_or_default())).unwrap();
        assert!(k.martingale_defect() < 1e-12);
    }
}
