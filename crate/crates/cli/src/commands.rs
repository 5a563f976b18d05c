//! Subcommand bodies. Each writes its outputs and a manifest under `--out`
//! and returns the process exit code.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use peacock_lab::call_surface::{validate_surface, SurfaceReport};
use peacock_lab::dupire::{implied_diffusion_check, local_vol, ClampReason};
use peacock_lab::forward_pde::{roundtrip as run_roundtrip, RoundtripReport};
use peacock_lab::gallery::{run_gallery, GalleryRun};
use peacock_lab::io;
use peacock_lab::measures::PeacockVerdict;
use peacock_lab::transport::{
    dominance_equivalence_check, lipschitz_kernel_check, solve_martingale_coupling, CouplingOutcome, EquivalenceReport,
    LipschitzReport, Objective,
};
use peacock_lab::{CallSurface, Convention, DupireConfig, Error, FpConfig};

use crate::{manifest, ObjectiveArg, EXIT_NUMERICAL, EXIT_OK, EXIT_USAGE, EXIT_VALIDATION};

/// Default tolerance of the Lipschitz report written by `couple`.
pub const DEFAULT_LIPSCHITZ_TOLERANCE: f64 = 1e-8;

pub struct Context {
    pub threads: Option<usize>,
}

/// Maps a library error onto the exit-code contract.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EXIT_USAGE,
        Error::InvalidInput(_)
        | Error::InvalidGrid(_)
        | Error::NotNormalized { .. }
        | Error::TimeNotOnGrid { .. }
        | Error::NonPositiveDensity { .. }
        | Error::NotConvex { .. }
        | Error::NotPeacock { .. }
        | Error::MeanMismatch { .. }
        | Error::NegativeTimeDerivative { .. }
        | Error::Parse(_)
        | Error::Json(_) => EXIT_VALIDATION,
        _ => EXIT_NUMERICAL,
    }
}

/// Optional `--config` file. Every section falls back to its defaults.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub dupire: DupireConfig,
    pub fp: FpConfig,
    pub lipschitz_tolerance: Option<f64>,
}

fn load_config(path: Option<&Path>) -> peacock_lab::Result<ConfigFile> {
    match path {
        Some(p) => Ok(serde_json::from_str(&io::read_to_string(p)?)?),
        None => Ok(ConfigFile::default()),
    }
}

#[derive(Serialize)]
struct ErrorReport {
    exit_code: u8,
    message: String,
}

/// Runs `body`, turning errors into an `error.json` report, then writes the
/// manifest.
fn finish<C: Serialize>(
    ctx: &Context,
    out: &Path,
    command: &str,
    config: &C,
    seed: Option<u64>,
    inputs: &[&Path],
    result: peacock_lab::Result<u8>,
) -> u8 {
    let code = match result {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            let code = exit_code(&e);
            let report = ErrorReport {
                exit_code: code,
                message: e.to_string(),
            };
            if let Err(w) = io::save_report(&out.join("error.json"), "error", &report) {
                eprintln!("error: cannot write error report: {w}");
            }
            code
        }
    };
    match manifest::write(out, command, config, seed, ctx.threads, code, inputs) {
        Ok(()) => code,
        Err(e) => {
            eprintln!("error: cannot write manifest: {e}");
            if code == EXIT_OK {
                EXIT_USAGE
            } else {
                code
            }
        }
    }
}

fn load_surface(path: &Path, convention: Option<Convention>) -> peacock_lab::Result<CallSurface> {
    let s = io::read_surface(path)?;
    match convention {
        Some(c) => s.with_convention(c),
        None => Ok(s),
    }
}

/// Writes the violation list and reports whether the surface is usable.
fn check_surface(s: &CallSurface, out: &Path) -> peacock_lab::Result<bool> {
    let report: SurfaceReport = validate_surface(s);
    if report.passed() {
        return Ok(true);
    }
    eprintln!("surface fails validation at {} nodes", report.violations.len());
    io::save_report(&out.join("surface_violations.json"), "surface_violations", &report)?;
    Ok(false)
}

#[derive(Debug, Serialize)]
struct SurfaceRunConfig<'a> {
    surface: String,
    convention: Option<Convention>,
    config: &'a ConfigFile,
    threshold: Option<f64>,
}

#[derive(Serialize)]
struct CalibrateReport {
    convention: Convention,
    times: usize,
    strikes: usize,
    max_sigma: f64,
    clamp_counts: BTreeMap<ClampReason, usize>,
    residual_max_abs: f64,
    residual_l2: f64,
    residual_max_abs_clamped: f64,
    interior_nodes: usize,
    clamped_interior_nodes: usize,
}

pub fn calibrate(ctx: &Context, surface: &Path, convention: Option<Convention>, config: Option<&Path>, out: &Path) -> u8 {
    let cfg = load_config(config);
    let cfg_resolved = cfg.as_ref().cloned().unwrap_or_default();
    let run = SurfaceRunConfig {
        surface: surface.display().to_string(),
        convention,
        config: &cfg_resolved,
        threshold: None,
    };
    let result = (|| {
        let cfg = cfg?;
        let s = load_surface(surface, convention)?;
        if !check_surface(&s, out)? {
            return Ok(EXIT_VALIDATION);
        }
        let lv = local_vol(&s, &cfg.dupire)?;
        let residual = implied_diffusion_check(&s, &lv, cfg.dupire.stencil_points)?;
        io::save_local_vol(&out.join("local_vol.csv"), &lv)?;
        io::save_text(
            &out.join("residuals.csv"),
            &io::write_grid_csv("t\\x", s.times(), s.strikes(), &residual.residuals),
        )?;
        let mut clamp_counts = BTreeMap::new();
        for c in lv.clamps() {
            *clamp_counts.entry(c.reason).or_insert(0) += 1;
        }
        let report = CalibrateReport {
            convention: lv.convention(),
            times: lv.times().len(),
            strikes: lv.strikes().len(),
            max_sigma: lv.max_sigma(),
            clamp_counts,
            residual_max_abs: residual.max_abs,
            residual_l2: residual.l2,
            residual_max_abs_clamped: residual.max_abs_clamped,
            interior_nodes: residual.interior_nodes,
            clamped_interior_nodes: residual.clamped_interior_nodes,
        };
        io::save_report(&out.join("calibrate_report.json"), "calibrate", &report)?;
        Ok(EXIT_OK)
    })();
    finish(ctx, out, "calibrate", &run, None, &[surface], result)
}

#[derive(Serialize)]
struct RoundtripOutput<'a> {
    threshold: f64,
    pass: bool,
    #[serde(flatten)]
    report: &'a RoundtripReport,
}

pub fn roundtrip(
    ctx: &Context,
    surface: &Path,
    convention: Option<Convention>,
    config: Option<&Path>,
    threshold: f64,
    out: &Path,
) -> u8 {
    let cfg = load_config(config);
    let cfg_resolved = cfg.as_ref().cloned().unwrap_or_default();
    let run = SurfaceRunConfig {
        surface: surface.display().to_string(),
        convention,
        config: &cfg_resolved,
        threshold: Some(threshold),
    };
    let result = (|| {
        let cfg = cfg?;
        if !(threshold.is_finite() && threshold > 0.0) {
            return Err(Error::InvalidInput(format!("threshold must be positive, got {threshold}")));
        }
        let s = load_surface(surface, convention)?;
        if !check_surface(&s, out)? {
            return Ok(EXIT_VALIDATION);
        }
        let rt = run_roundtrip(&s, &cfg.dupire, &cfg.fp)?;
        io::save_local_vol(&out.join("local_vol.csv"), &rt.local_vol)?;
        io::save_family(&out.join("family"), "marginal", &rt.family)?;
        let pass = rt.report.reprice_error_max_rel <= threshold;
        let report = RoundtripOutput {
            threshold,
            pass,
            report: &rt.report,
        };
        io::save_report(&out.join("roundtrip_report.json"), "roundtrip", &report)?;
        if !pass {
            eprintln!(
                "max relative reprice error {:.3e} exceeds threshold {threshold:.3e}",
                rt.report.reprice_error_max_rel
            );
            return Ok(EXIT_NUMERICAL);
        }
        Ok(EXIT_OK)
    })();
    finish(ctx, out, "roundtrip", &run, None, &[surface], result)
}

pub fn gallery(ctx: &Context, spec: &Path, seed: Option<u64>, paths: Option<usize>, out: &Path) -> u8 {
    let parsed = io::read_to_string(spec).and_then(|t| io::parse_gallery_run(&t)).map(|mut run: GalleryRun| {
        for p in &mut run.processes {
            if let Some(s) = seed {
                p.seed = s;
            }
            if let Some(n) = paths {
                p.n_paths = n;
            }
        }
        run
    });
    let resolved = parsed.as_ref().ok().cloned();
    let result = (|| {
        let run = parsed?;
        let (ensembles, report) = run_gallery(&run)?;
        for (k, (ens, p)) in ensembles.iter().zip(&run.processes).enumerate() {
            let kind = serde_json::to_value(p.kind)?;
            let name = format!("{k:02}_{}", kind.as_str().unwrap_or("process"));
            io::save_ensemble(&out.join("ensembles").join(format!("{name}.bin")), ens)?;
            for &t in &run.checks.marginal_times {
                let m = peacock_lab::mc::empirical_marginal(ens, t)?;
                io::save_measure(&out.join("marginals").join(format!("{name}_t{t}.csv")), &m)?;
            }
        }
        io::save_report(&out.join("gallery_report.json"), "gallery", &report)?;
        Ok(EXIT_OK)
    })();
    finish(ctx, out, "gallery", &resolved, seed, &[spec], result)
}

#[derive(Serialize)]
struct VerifyReport {
    holds: bool,
    times: Vec<f64>,
    means: Vec<f64>,
    second_moments: Vec<f64>,
    verdict: PeacockVerdict,
}

pub fn verify_peacock(ctx: &Context, family: &Path, out: &Path) -> u8 {
    let run = BTreeMap::from([("family", family.display().to_string())]);
    let result = (|| {
        let fam = io::read_family(family)?;
        let verdict = fam.verify();
        let report = VerifyReport {
            holds: verdict.holds(),
            times: fam.times().to_vec(),
            means: fam.measures().iter().map(|m| m.mean()).collect(),
            second_moments: fam.second_moments(),
            verdict,
        };
        io::save_report(&out.join("peacock_verdict.json"), "peacock_verdict", &report)?;
        if report.holds {
            Ok(EXIT_OK)
        } else {
            eprintln!("family is not increasing in convex order");
            Ok(EXIT_VALIDATION)
        }
    })();
    finish(ctx, out, "verify-peacock", &run, None, &[family], result)
}

#[derive(Serialize)]
struct CoupleConfig {
    mu: String,
    nu: String,
    objective: ObjectiveArg,
    lipschitz_tolerance: f64,
}

#[derive(Serialize)]
struct CoupleReport {
    objective_value: f64,
    martingale_defect: f64,
    lipschitz: LipschitzReport,
    equivalence: EquivalenceReport,
}

pub fn couple(
    ctx: &Context,
    mu: &Path,
    nu: &Path,
    objective: ObjectiveArg,
    config: Option<&Path>,
    out: &Path,
) -> u8 {
    let cfg = load_config(config);
    let tol = cfg
        .as_ref()
        .ok()
        .and_then(|c| c.lipschitz_tolerance)
        .unwrap_or(DEFAULT_LIPSCHITZ_TOLERANCE);
    let run = CoupleConfig {
        mu: mu.display().to_string(),
        nu: nu.display().to_string(),
        objective,
        lipschitz_tolerance: tol,
    };
    let result = (|| {
        cfg?;
        let (m, n) = (io::read_measure(mu)?, io::read_measure(nu)?);
        let obj = match objective {
            ObjectiveArg::Feasible => Objective::FeasibleOnly,
            ObjectiveArg::AbsDistance => Objective::Minimize(|x, y| (x - y).abs()),
            ObjectiveArg::Squared => Objective::Minimize(|x, y| (x - y) * (x - y)),
        };
        match solve_martingale_coupling(&m, &n, obj)? {
            CouplingOutcome::Coupled(c) => {
                io::save_kernel(&out.join("kernel.csv"), &c.kernel)?;
                let target = n.compact();
                if c.joint.cols() == target.len() {
                    io::save_text(
                        &out.join("joint.csv"),
                        &io::write_grid_csv("x\\y", c.kernel.source(), target.grid(), &c.joint),
                    )?;
                }
                let report = CoupleReport {
                    objective_value: c.objective_value,
                    martingale_defect: c.kernel.martingale_defect(),
                    lipschitz: lipschitz_kernel_check(&c.kernel, tol),
                    equivalence: dominance_equivalence_check(&c.kernel, tol),
                };
                io::save_report(&out.join("coupling_report.json"), "coupling", &report)?;
                Ok(EXIT_OK)
            }
            CouplingOutcome::Infeasible(cert) => {
                eprintln!("no martingale coupling exists: the measures are not in convex order");
                io::save_report(&out.join("infeasibility_certificate.json"), "infeasibility_certificate", &cert)?;
                Ok(EXIT_NUMERICAL)
            }
        }
    })();
    finish(ctx, out, "couple", &run, None, &[mu, nu], result)
}
