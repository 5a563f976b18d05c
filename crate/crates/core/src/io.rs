//! File formats.
//!
//! | object | format |
//! |---|---|
//! | measure | CSV, header `x,w` |
//! | family | JSON manifest `{"times": [...], "files": [...]}` of measure CSVs |
//! | call surface | CSV grid (first row strikes, first column times) + JSON sidecar |
//! | local vol | CSV grid + JSON sidecar with the convention and clamp list |
//! | path ensemble | little-endian `f64`, column-major, + JSON header |
//! | kernel | JSON header + CSV matrix (rows = source points) |
//! | reports | JSON with a `schema_version` field |
//!
//! Every parser takes text or bytes and never panics on malformed input;
//! the `read_*`/`write_*` helpers add the file system. Floats are written
//! in Rust's shortest round-trip form, so write → parse is bitwise exact.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::call_surface::{CallSurface, Convention};
use crate::dupire::{ClampEvent, LocalVolSurface};
use crate::error::{Error, Result};
use crate::gallery::GalleryRun;
use crate::mc::PathEnsemble;
use crate::measures::{GridMeasure, PeacockFamily, MASS_TOLERANCE};
use crate::numerics::Matrix;
use crate::transport::MartingaleKernel;

/// Version stamped on every JSON header and report.
pub const SCHEMA_VERSION: u32 = 1;

/// Mass slack accepted when reading a measure file; the weights are then
/// rescaled to unit mass.
pub const FILE_MASS_TOLERANCE: f64 = 1e-6;

/// Byte layout tag of ensemble payloads.
pub const ENSEMBLE_LAYOUT: &str = "f64-le-column-major";

fn parse_err(msg: impl Into<String>) -> Error {
    Error::Parse(msg.into())
}

fn parse_f64(cell: &str, what: &str) -> Result<f64> {
    let v: f64 = cell
        .trim()
        .parse()
        .map_err(|_| parse_err(format!("{what}: cannot parse '{cell}' as a number")))?;
    if !v.is_finite() {
        return Err(parse_err(format!("{what}: non-finite value '{cell}'")));
    }
    Ok(v)
}

/// Reads CSV records, skipping blank lines and `#` comments.
fn csv_records(text: &str) -> Result<Vec<Vec<String>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| parse_err(format!("csv: {e}")))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        out.push(rec.iter().map(str::to_owned).collect());
    }
    Ok(out)
}

fn fmt_row(cells: impl IntoIterator<Item = f64>) -> String {
    cells.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------- measures

/// Parses a measure CSV with header `x,w`. Rows may come in any order;
/// weights within [`FILE_MASS_TOLERANCE`] of unit mass are rescaled.
pub fn parse_measure_csv(text: &str) -> Result<GridMeasure> {
    let records = csv_records(text)?;
    let Some((header, body)) = records.split_first() else {
        return Err(parse_err("measure file is empty"));
    };
    if header.len() != 2 || header[0] != "x" || header[1] != "w" {
        return Err(parse_err(format!("measure header must be 'x,w', got '{}'", header.join(","))));
    }
    if body.is_empty() {
        return Err(parse_err("measure file has no atoms"));
    }
    let mut atoms = Vec::with_capacity(body.len());
    for (line, rec) in body.iter().enumerate() {
        if rec.len() != 2 {
            return Err(parse_err(format!("measure row {}: expected 2 fields, got {}", line + 1, rec.len())));
        }
        atoms.push((parse_f64(&rec[0], "x")?, parse_f64(&rec[1], "w")?));
    }
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (grid, weights): (Vec<f64>, Vec<f64>) = atoms.into_iter().unzip();
    measure_from_file(grid, weights)
}

/// Accepts weights within [`FILE_MASS_TOLERANCE`] of unit mass.
fn measure_from_file(grid: Vec<f64>, weights: Vec<f64>) -> Result<GridMeasure> {
    let sum: f64 = weights.iter().sum();
    if !((sum - 1.0).abs() <= FILE_MASS_TOLERANCE) {
        return Err(Error::NotNormalized { sum });
    }
    if (sum - 1.0).abs() <= MASS_TOLERANCE {
        GridMeasure::new(grid, weights)
    } else {
        GridMeasure::normalized(grid, weights)
    }
}

pub fn write_measure_csv(m: &GridMeasure) -> String {
    let mut out = String::from("x,w\n");
    for (&x, &w) in m.grid().iter().zip(m.weights()) {
        out.push_str(&fmt_row([x, w]));
        out.push('\n');
    }
    out
}

pub fn read_measure(path: &Path) -> Result<GridMeasure> {
    parse_measure_csv(&read_text(path)?)
}

pub fn save_measure(path: &Path, m: &GridMeasure) -> Result<()> {
    write_text(path, &write_measure_csv(m))
}

/// Family manifest: measure files listed against their times. Relative
/// paths resolve against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilyManifest {
    #[serde(default)]
    pub schema_version: Option<u32>,
    pub times: Vec<f64>,
    pub files: Vec<String>,
}

pub fn parse_family_manifest(text: &str) -> Result<FamilyManifest> {
    let m: FamilyManifest = serde_json::from_str(text)?;
    if m.times.len() != m.files.len() {
        return Err(parse_err(format!(
            "family manifest lists {} times but {} files",
            m.times.len(),
            m.files.len()
        )));
    }
    if m.times.is_empty() {
        return Err(parse_err("family manifest is empty"));
    }
    Ok(m)
}

pub fn read_family(path: &Path) -> Result<PeacockFamily> {
    let manifest = parse_family_manifest(&read_text(path)?)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let measures = manifest
        .files
        .iter()
        .map(|f| read_measure(&base.join(f)))
        .collect::<Result<Vec<_>>>()?;
    PeacockFamily::new(manifest.times, measures)
}

/// Writes `manifest.json`-style output: `<dir>/<stem>.json` plus one
/// `<stem>_<k>.csv` per member.
pub fn save_family(dir: &Path, stem: &str, fam: &PeacockFamily) -> Result<PathBuf> {
    let files: Vec<String> = (0..fam.len()).map(|k| format!("{stem}_{k:04}.csv")).collect();
    for (f, m) in files.iter().zip(fam.measures()) {
        save_measure(&dir.join(f), m)?;
    }
    let manifest = FamilyManifest {
        schema_version: Some(SCHEMA_VERSION),
        times: fam.times().to_vec(),
        files,
    };
    let path = dir.join(format!("{stem}.json"));
    write_text(&path, &serde_json::to_string_pretty(&manifest)?)?;
    Ok(path)
}

// ---------------------------------------------------------------- grids

/// A table indexed by time (rows) and strike (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    pub times: Vec<f64>,
    pub strikes: Vec<f64>,
    pub values: Matrix,
}

/// Parses a grid CSV: the first row holds a corner label and the strikes,
/// each later row a time followed by one value per strike.
pub fn parse_grid_csv(text: &str) -> Result<GridTable> {
    let records = csv_records(text)?;
    let Some((header, body)) = records.split_first() else {
        return Err(parse_err("grid file is empty"));
    };
    if header.len() < 2 {
        return Err(parse_err("grid header needs at least one strike"));
    }
    let strikes = header[1..]
        .iter()
        .map(|c| parse_f64(c, "strike"))
        .collect::<Result<Vec<_>>>()?;
    if body.is_empty() {
        return Err(parse_err("grid file has no time rows"));
    }
    let mut times = Vec::with_capacity(body.len());
    let mut data = Vec::with_capacity(body.len() * strikes.len());
    for (line, rec) in body.iter().enumerate() {
        if rec.len() != strikes.len() + 1 {
            return Err(parse_err(format!(
                "grid row {}: expected {} fields, got {}",
                line + 1,
                strikes.len() + 1,
                rec.len()
            )));
        }
        times.push(parse_f64(&rec[0], "time")?);
        for c in &rec[1..] {
            data.push(parse_f64(c, "value")?);
        }
    }
    let values = Matrix::from_vec(times.len(), strikes.len(), data)?;
    Ok(GridTable { times, strikes, values })
}

pub fn write_grid_csv(corner: &str, times: &[f64], strikes: &[f64], values: &Matrix) -> String {
    let mut out = format!("{corner},{}\n", fmt_row(strikes.iter().copied()));
    for (i, &t) in times.iter().enumerate() {
        out.push_str(&fmt_row(std::iter::once(t).chain(values.row(i).iter().copied())));
        out.push('\n');
    }
    out
}

/// Sidecar of a surface CSV. Missing fields default to the additive
/// convention without a forward.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurfaceMeta {
    #[serde(default)]
    pub schema_version: Option<u32>,
    #[serde(default)]
    pub convention: Convention,
    #[serde(default)]
    pub forward: Option<f64>,
}

/// Parses a surface from its CSV and optional JSON sidecar. The surface
/// is structurally validated but not checked for arbitrage.
pub fn parse_surface(csv_text: &str, meta_json: Option<&str>) -> Result<CallSurface> {
    let meta: SurfaceMeta = match meta_json {
        Some(j) => serde_json::from_str(j)?,
        None => SurfaceMeta::default(),
    };
    let g = parse_grid_csv(csv_text)?;
    CallSurface::new(g.times, g.strikes, g.values, meta.convention, meta.forward)
}

/// Sidecar path of a grid file: `<file>.json` next to `<file>`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    with_suffix(path, ".json")
}

/// Reads a surface CSV and its sidecar, if present.
pub fn read_surface(path: &Path) -> Result<CallSurface> {
    let csv_text = read_text(path)?;
    let side = sidecar_path(path);
    let meta = if side.exists() { Some(read_text(&side)?) } else { None };
    parse_surface(&csv_text, meta.as_deref())
}

pub fn save_surface(path: &Path, s: &CallSurface) -> Result<()> {
    write_text(path, &write_grid_csv("t\\x", s.times(), s.strikes(), s.prices()))?;
    let meta = SurfaceMeta {
        schema_version: Some(SCHEMA_VERSION),
        convention: s.convention(),
        forward: s.forward(),
    };
    write_text(&sidecar_path(path), &serde_json::to_string_pretty(&meta)?)
}

/// Sidecar of a local-vol CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalVolMeta {
    #[serde(default)]
    pub schema_version: Option<u32>,
    #[serde(default)]
    pub convention: Convention,
    #[serde(default)]
    pub clamps: Vec<ClampEvent>,
}

pub fn parse_local_vol(csv_text: &str, meta_json: Option<&str>) -> Result<LocalVolSurface> {
    let meta: LocalVolMeta = match meta_json {
        Some(j) => serde_json::from_str(j)?,
        None => LocalVolMeta {
            schema_version: None,
            convention: Convention::default(),
            clamps: Vec::new(),
        },
    };
    let g = parse_grid_csv(csv_text)?;
    LocalVolSurface::new(g.times, g.strikes, g.values, meta.convention, meta.clamps)
}

pub fn read_local_vol(path: &Path) -> Result<LocalVolSurface> {
    let csv_text = read_text(path)?;
    let side = sidecar_path(path);
    let meta = if side.exists() { Some(read_text(&side)?) } else { None };
    parse_local_vol(&csv_text, meta.as_deref())
}

pub fn save_local_vol(path: &Path, lv: &LocalVolSurface) -> Result<()> {
    write_text(path, &write_grid_csv("t\\x", lv.times(), lv.strikes(), lv.sigma()))?;
    let meta = LocalVolMeta {
        schema_version: Some(SCHEMA_VERSION),
        convention: lv.convention(),
        clamps: lv.clamps().to_vec(),
    };
    write_text(&sidecar_path(path), &serde_json::to_string_pretty(&meta)?)
}

// ---------------------------------------------------------------- ensembles

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleHeader {
    pub schema_version: u32,
    pub layout: String,
    pub n_paths: usize,
    pub times: Vec<f64>,
    pub seed: u64,
    pub generator_id: String,
}

/// Header JSON and payload bytes. Column `i` (time `times[i]`) occupies
/// bytes `[8·n·i, 8·n·(i+1))`.
pub fn encode_ensemble(ens: &PathEnsemble) -> Result<(String, Vec<u8>)> {
    let header = EnsembleHeader {
        schema_version: SCHEMA_VERSION,
        layout: ENSEMBLE_LAYOUT.to_string(),
        n_paths: ens.n_paths(),
        times: ens.times().to_vec(),
        seed: ens.seed(),
        generator_id: ens.generator_id().to_string(),
    };
    let p = ens.paths();
    let mut bytes = Vec::with_capacity(8 * p.rows() * p.cols());
    for j in 0..p.cols() {
        for i in 0..p.rows() {
            bytes.extend_from_slice(&p.get(i, j).to_le_bytes());
        }
    }
    Ok((serde_json::to_string_pretty(&header)?, bytes))
}

pub fn parse_ensemble_header(text: &str) -> Result<EnsembleHeader> {
    let h: EnsembleHeader = serde_json::from_str(text)?;
    if h.layout != ENSEMBLE_LAYOUT {
        return Err(parse_err(format!("unsupported ensemble layout '{}'", h.layout)));
    }
    if h.schema_version > SCHEMA_VERSION {
        return Err(parse_err(format!("unsupported schema version {}", h.schema_version)));
    }
    Ok(h)
}

pub fn decode_ensemble(header_json: &str, bytes: &[u8]) -> Result<PathEnsemble> {
    let h = parse_ensemble_header(header_json)?;
    let (n, t) = (h.n_paths, h.times.len());
    let expected = n.checked_mul(t).and_then(|c| c.checked_mul(8));
    if expected != Some(bytes.len()) {
        return Err(parse_err(format!(
            "ensemble payload has {} bytes, header implies {n} paths x {t} times",
            bytes.len()
        )));
    }
    let mut data = vec![0.0; n * t];
    for (k, chunk) in bytes.chunks_exact(8).enumerate() {
        let (j, i) = (k / n, k % n);
        let mut b = [0u8; 8];
        b.copy_from_slice(chunk);
        data[i * t + j] = f64::from_le_bytes(b);
    }
    PathEnsemble::new(h.times, Matrix::from_vec(n, t, data)?, h.seed, h.generator_id)
}

/// Writes `<path>` (payload) and `<path>.json` (header).
pub fn save_ensemble(path: &Path, ens: &PathEnsemble) -> Result<()> {
    let (header, bytes) = encode_ensemble(ens)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    write_text(&sidecar_path(path), &header)
}

pub fn read_ensemble(path: &Path) -> Result<PathEnsemble> {
    let header = read_text(&sidecar_path(path))?;
    decode_ensemble(&header, &fs::read(path)?)
}

// ---------------------------------------------------------------- kernels

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelHeader {
    pub schema_version: u32,
    pub source: Vec<f64>,
    pub target: Vec<f64>,
    #[serde(default)]
    pub source_weights: Option<Vec<f64>>,
}

/// Header JSON and CSV matrix. Zero-weight atoms are not represented, so
/// a row read back keeps only its positive entries.
pub fn encode_kernel(k: &MartingaleKernel) -> Result<(String, String)> {
    let (target, m) = k.dense_rows();
    let header = KernelHeader {
        schema_version: SCHEMA_VERSION,
        source: k.source().to_vec(),
        target,
        source_weights: k.source_weights().map(<[f64]>::to_vec),
    };
    let mut csv_text = String::new();
    for row in m.iter_rows() {
        csv_text.push_str(&fmt_row(row.iter().copied()));
        csv_text.push('\n');
    }
    Ok((serde_json::to_string_pretty(&header)?, csv_text))
}

pub fn decode_kernel(header_json: &str, csv_text: &str) -> Result<MartingaleKernel> {
    let h: KernelHeader = serde_json::from_str(header_json)?;
    if h.schema_version > SCHEMA_VERSION {
        return Err(parse_err(format!("unsupported schema version {}", h.schema_version)));
    }
    let records = csv_records(csv_text)?;
    if records.len() != h.source.len() {
        return Err(parse_err(format!(
            "kernel matrix has {} rows for {} source points",
            records.len(),
            h.source.len()
        )));
    }
    let mut rows = Vec::with_capacity(records.len());
    for (i, rec) in records.iter().enumerate() {
        if rec.len() != h.target.len() {
            return Err(parse_err(format!(
                "kernel row {i}: {} entries for {} target points",
                rec.len(),
                h.target.len()
            )));
        }
        let mut grid = Vec::new();
        let mut weights = Vec::new();
        for (&y, c) in h.target.iter().zip(rec) {
            let w = parse_f64(c, "kernel weight")?;
            if w != 0.0 {
                grid.push(y);
                weights.push(w);
            }
        }
        rows.push(measure_from_file(grid, weights)?);
    }
    MartingaleKernel::new(h.source, rows, h.source_weights)
}

/// Writes `<path>` (CSV matrix) and `<path>.json` (header).
pub fn save_kernel(path: &Path, k: &MartingaleKernel) -> Result<()> {
    let (header, csv_text) = encode_kernel(k)?;
    write_text(path, &csv_text)?;
    write_text(&sidecar_path(path), &header)
}

pub fn read_kernel(path: &Path) -> Result<MartingaleKernel> {
    decode_kernel(&read_text(&sidecar_path(path))?, &read_text(path)?)
}

// ---------------------------------------------------------------- specs, reports

pub fn parse_gallery_run(text: &str) -> Result<GalleryRun> {
    Ok(serde_json::from_str(text)?)
}

/// A JSON report: `schema_version`, a `kind` tag and the body's fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report<T> {
    pub schema_version: u32,
    pub kind: String,
    #[serde(flatten)]
    pub body: T,
}

impl<T> Report<T> {
    pub fn new(kind: impl Into<String>, body: T) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            kind: kind.into(),
            body,
        }
    }
}

pub fn save_report<T: Serialize>(path: &Path, kind: &str, body: &T) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(&Report::new(kind, body))?)
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write_text(path, &serde_json::to_string_pretty(value)?)
}

pub fn save_text(path: &Path, text: &str) -> Result<()> {
    write_text(path, text)
}

pub fn read_to_string(path: &Path) -> Result<String> {
    read_text(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::call_surface::bachelier_surface;
    use crate::gallery::{build_easy, TimeGrid};
    use crate::numerics::linspace;
    use proptest::prelude::*;

    #[test]
    fn measure_csv_roundtrip_is_bitwise() {
        let m = GridMeasure::gaussian(0.1, 0.7, linspace(-3.0, 3.0, 41)).unwrap();
        let back = parse_measure_csv(&write_measure_csv(&m)).unwrap();
        assert_eq!(back.grid(), m.grid());
        assert_eq!(back.weights(), m.weights());
    }

    #[test]
    fn measure_csv_rejects_bad_input() {
        for bad in [
            "",
            "x,w\n",
            "a,b\n1,1\n",
            "x,w\n1,0.5\n",
            "x,w\n1,nan\n",
            "x,w\n1,0.5\n1,0.5\n",
            "x,w\n1,2,3\n",
            "x,w\n0,-1\n1,2\n",
        ] {
            assert!(parse_measure_csv(bad).is_err(), "{bad:?}");
        }
        let m = parse_measure_csv("# comment\nx,w\n\n2,0.25\n0, 0.75\n").unwrap();
        assert_eq!(m.grid(), &[0.0, 2.0]);
    }

    #[test]
    fn surface_roundtrip_with_sidecar() {
        let s = bachelier_surface(0.0, 1.0, &linspace(0.1, 1.0, 5), &linspace(-2.0, 2.0, 9)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.csv");
        save_surface(&p, &s).unwrap();
        assert_eq!(read_surface(&p).unwrap(), s);
        let mult = parse_surface("t,1,2\n0.5,0.3,0.1\n", Some(r#"{"convention":"multiplicative"}"#)).unwrap();
        assert_eq!(mult.convention(), Convention::Multiplicative);
        assert!(parse_surface("t,1,2\n0.5,0.3\n", None).is_err());
        assert!(parse_surface("t,1,2\n0.5,0.3,0.1\n", Some(r#"{"bogus":1}"#)).is_err());
    }

    #[test]
    fn ensemble_roundtrip() {
        let ens = build_easy(50, TimeGrid::new(60, 6).unwrap(), 11).unwrap();
        let (h, b) = encode_ensemble(&ens).unwrap();
        assert_eq!(b.len(), 8 * 50 * 7);
        // column-major: the first n values are the initial states
        assert_eq!(f64::from_le_bytes(b[..8].try_into().unwrap()), 1.0);
        assert_eq!(decode_ensemble(&h, &b).unwrap(), ens);
        assert!(decode_ensemble(&h, &b[..b.len() - 1]).is_err());
    }

    #[test]
    fn json_headers_keep_every_bit() {
        let times = vec![0.0, 0.1 * 7.0, 0.8200000000000001, 1.0];
        let paths = Matrix::from_fn(3, 4, |i, j| (i as f64 + 0.1) * (j as f64 + 0.3).sqrt());
        let ens = PathEnsemble::new(times, paths, u64::MAX, "g").unwrap();
        let (h, b) = encode_ensemble(&ens).unwrap();
        assert_eq!(decode_ensemble(&h, &b).unwrap(), ens);
    }

    #[test]
    fn kernel_roundtrip() {
        let k = MartingaleKernel::heat(&linspace(-1.0, 1.0, 5), 0.3, 0.1, 4).unwrap();
        let (h, c) = encode_kernel(&k).unwrap();
        let back = decode_kernel(&h, &c).unwrap();
        assert_eq!(back.source(), k.source());
        for (a, b) in back.rows().iter().zip(k.rows()) {
            assert_eq!(a.weights(), b.weights());
        }
    }

    #[test]
    fn family_manifest_roundtrip() {
        let times = vec![0.5, 1.0];
        let fam = PeacockFamily::new(
            times.clone(),
            times
                .iter()
                .map(|&t| GridMeasure::gaussian(0.0, t.sqrt(), linspace(-5.0, 5.0, 51)).unwrap())
                .collect(),
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let p = save_family(dir.path(), "fam", &fam).unwrap();
        assert_eq!(read_family(&p).unwrap(), fam);
        assert!(parse_family_manifest(r#"{"times":[1],"files":[]}"#).is_err());
    }

    proptest! {
        #[test]
        fn parsers_never_panic(s in "\\PC*") {
            let _ = parse_measure_csv(&s);
            let _ = parse_grid_csv(&s);
            let _ = parse_family_manifest(&s);
            let _ = parse_gallery_run(&s);
            let _ = decode_ensemble(&s, s.as_bytes());
            let _ = decode_kernel(&s, &s);
        }
    }
}
