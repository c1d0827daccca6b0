use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, Context, Result};
use lipinvert::certify::{
    ball_inclusion_certificate_with, jf_regular_check, radial_profile_with, submersion_check_with, uniform_rho_schedule, BallOptions,
    Certificate, ProfileOptions, SubmersionOptions, Verdict,
};
use lipinvert::invert::{global_invert, perturbation_certificate, LiftOptions, PerturbationOptions};
use lipinvert::registry::{lookup, lookup_map};
use lipinvert::{linop, Error, MapUnderStudy64, Norm64, RegistryEntry64};
use nalgebra::DVector;
use serde_json::json;

use crate::config::{CertKind, RunConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_REFUTED: i32 = 2;
pub const EXIT_INCONCLUSIVE: i32 = 3;

pub fn verdict_code(v: Verdict) -> i32 {
    match v {
        Verdict::Certified => EXIT_OK,
        Verdict::Refuted => EXIT_REFUTED,
        Verdict::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

/// Write through a temp file in the same directory, then rename.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| anyhow!("cannot write {}: {}", path.display(), e.error))?;
    Ok(())
}

fn load_map(cfg: &RunConfig) -> Result<(MapUnderStudy64, RegistryEntry64)> {
    let (mut f, entry) = lookup_map::<f64>(&cfg.map)?;
    if let Some(spec) = &cfg.norm {
        let n_in = Norm64::parse(spec, f.dim_in())?;
        let n_out = Norm64::parse(spec, f.tangent_dim_out())?;
        f = f.with_norms(n_in, n_out)?;
    }
    Ok((f, entry))
}

fn base_point(cfg: &RunConfig, f: &MapUnderStudy64) -> Result<DVector<f64>> {
    let x = cfg.x0.clone().unwrap_or_else(|| vec![0.0; f.dim_in()]);
    if x.len() != f.dim_in() {
        return Err(Error::DimensionMismatch { expected: f.dim_in(), got: x.len() }.into());
    }
    Ok(DVector::from_vec(x))
}

fn target_point(cfg: &RunConfig, f: &MapUnderStudy64) -> Result<DVector<f64>> {
    let y = cfg.target.clone().ok_or_else(|| anyhow!("missing `target`"))?;
    if y.len() != f.dim_out() {
        return Err(Error::DimensionMismatch { expected: f.dim_out(), got: y.len() }.into());
    }
    Ok(DVector::from_vec(y))
}

fn lift_options(cfg: &RunConfig) -> LiftOptions<f64> {
    LiftOptions { trust_radius: cfg.trust_radius, seed: cfg.seed, ..LiftOptions::default() }
}

fn ball_options(cfg: &RunConfig, entry: &RegistryEntry64) -> BallOptions<f64> {
    BallOptions {
        shells: cfg.shells,
        per_shell: cfg.per_shell,
        profile: ProfileOptions { index_schedule: cfg.index_schedule.clone(), index_count: cfg.index_count },
        lift: lift_options(cfg),
        residual_tol: cfg.tol,
        asserted: entry.asserted_hypotheses(),
    }
}

fn stamp(cert: &mut Certificate, cfg: &RunConfig) {
    cert.provenance("map", json!(cfg.map));
    if cfg.timestamp {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        cert.provenance("timestamp", json!(secs));
    }
}

fn max_r(cfg: &RunConfig) -> f64 {
    cfg.r.iter().copied().fold(0.0, f64::max)
}

pub fn cmd_certify(cfg: &RunConfig) -> Result<i32> {
    let (f, entry) = load_map(cfg)?;
    let x0 = base_point(cfg, &f)?;
    let mut profile_csv = None;
    let mut cert = match cfg.kind {
        CertKind::Ball => {
            let (cert, profile) = ball_inclusion_certificate_with(&f, &x0, max_r(cfg), cfg.target_count, cfg.seed, &ball_options(cfg, &entry))?;
            profile_csv = Some(profile.to_csv());
            cert
        }
        CertKind::JfRegular => jf_regular_check(&f, &x0, &cfg.index_schedule, cfg.index_count, cfg.seed, linop::ISO_EPS)?,
        CertKind::Perturbation => {
            let gname = cfg.perturbation.as_deref().ok_or_else(|| anyhow!("kind=perturbation needs `perturbation`"))?;
            let (g, _) = lookup_map::<f64>(gname)?;
            let g = match &cfg.norm {
                Some(_) => g.with_norms(f.norm_in().clone(), f.norm_out().clone())?,
                None => g,
            };
            let sigma = lookup::<f64>(&cfg.combiner)?.combiner().cloned().ok_or_else(|| anyhow!("`{}` is not a combiner", cfg.combiner))?;
            let wname = cfg.weight.as_deref().ok_or_else(|| anyhow!("kind=perturbation needs `weight`"))?;
            let omega = lookup::<f64>(wname)?.weight().cloned().ok_or_else(|| anyhow!("`{wname}` is not a weight"))?;
            let opts = PerturbationOptions {
                index_schedule: cfg.index_schedule.clone(),
                index_count: cfg.index_count,
                check_radii: cfg.r.clone(),
                check_targets: cfg.target_count,
                lift: lift_options(cfg),
                ..PerturbationOptions::default()
            };
            perturbation_certificate(&f, &g, &sigma, &omega, &x0, &opts, cfg.seed)?
        }
        CertKind::Submersion => {
            let k = vec![target_point(cfg, &f)?];
            let opts = SubmersionOptions {
                index_schedule: cfg.index_schedule.clone(),
                index_count: cfg.index_count,
                lift: lift_options(cfg),
                ..SubmersionOptions::default()
            };
            submersion_check_with(&f, &k, cfg.target_count, cfg.seed, &opts)?
        }
    };
    stamp(&mut cert, cfg);
    let path = cfg.out.join("certificate.json");
    write_atomic(&path, &(cert.to_json() + "\n"))?;
    if let Some(csv) = profile_csv {
        write_atomic(&cfg.out.join("profile.csv"), &csv)?;
    }
    println!("{}: {} ({})", cert.kind, cert.verdict, path.display());
    for (k, w) in &cert.witnesses {
        if matches!(k.as_str(), "zero_index_point" | "violating_point" | "failing_target" | "collapse_point") {
            println!("witness {k} = {w}");
        }
    }
    Ok(verdict_code(cert.verdict))
}

fn format_point(x: &DVector<f64>) -> String {
    let parts: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
    format!("({})", parts.join(", "))
}

pub fn cmd_invert(cfg: &RunConfig) -> Result<i32> {
    let (f, _) = load_map(cfg)?;
    let x0 = base_point(cfg, &f)?;
    let y = target_point(cfg, &f)?;
    let trace_path = cfg.out.join("trace.csv");
    match global_invert(&f, &x0, &y, &lift_options(cfg)) {
        Ok((x, trace)) => {
            write_atomic(&trace_path, &trace.to_csv())?;
            let res = f.residual(&x, &y);
            println!("x = {}", format_point(&x));
            println!("residual = {res:e}");
            if res <= cfg.tol {
                Ok(EXIT_OK)
            } else {
                eprintln!("residual above tolerance {:e}", cfg.tol);
                Ok(EXIT_INCONCLUSIVE)
            }
        }
        Err(Error::LiftFailure { t, trace }) => {
            write_atomic(&trace_path, &trace.to_csv())?;
            eprintln!("lift failed at t = {t}; smallest index along the path {:e}; trace in {}", trace.min_index(), trace_path.display());
            Ok(EXIT_INCONCLUSIVE)
        }
        Err(e @ Error::NoConvergence { .. }) => {
            eprintln!("{e}");
            Ok(EXIT_INCONCLUSIVE)
        }
        Err(e) => Err(e.into()),
    }
}

pub fn cmd_radius(cfg: &RunConfig) -> Result<i32> {
    let (f, entry) = load_map(cfg)?;
    let x0 = base_point(cfg, &f)?;
    let opts = ball_options(cfg, &entry);
    let mut csv = String::from("r,rho,verdict\n");
    let mut certs = String::new();
    let mut code = EXIT_OK;
    println!("{:>12} {:>14}  verdict", "r", "rho");
    for (i, &r) in cfg.r.iter().enumerate() {
        let seed = lipinvert::rng::derive_seed(cfg.seed, &[i as u64]);
        let (mut cert, _) = ball_inclusion_certificate_with(&f, &x0, r, cfg.target_count, seed, &opts)?;
        stamp(&mut cert, cfg);
        let rho = cert.numbers.get("varrho").copied().unwrap_or(f64::NAN);
        println!("{r:>12} {rho:>14.8}  {}", cert.verdict);
        writeln!(csv, "{r},{rho},{}", cert.verdict)?;
        certs.push_str(&cert.to_json());
        certs.push('\n');
        code = code.max(match cert.verdict {
            Verdict::Certified => EXIT_OK,
            Verdict::Refuted => EXIT_REFUTED,
            Verdict::Inconclusive => EXIT_INCONCLUSIVE,
        });
    }
    write_atomic(&cfg.out.join("radius.csv"), &csv)?;
    write_atomic(&cfg.out.join("radius-certificates.jsonl"), &certs)?;
    Ok(code)
}

pub fn cmd_profile(cfg: &RunConfig) -> Result<i32> {
    let (f, _) = load_map(cfg)?;
    let x0 = base_point(cfg, &f)?;
    let popts = ProfileOptions { index_schedule: cfg.index_schedule.clone(), index_count: cfg.index_count };
    let sched = uniform_rho_schedule(max_r(cfg), cfg.shells);
    let profile = radial_profile_with(&f, &x0, &sched, cfg.per_shell, cfg.seed, &popts)?;
    let csv = profile.to_csv();
    write_atomic(&cfg.out.join("profile.csv"), &csv)?;
    print!("{csv}");
    Ok(EXIT_OK)
}
