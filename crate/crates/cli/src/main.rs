//! `lipinvert` command-line front end.
//!
//! Exit codes: 0 certified / solved, 1 usage error, 2 refuted,
//! 3 inconclusive or lift failure.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{cmd_certify, cmd_invert, cmd_profile, cmd_radius, EXIT_USAGE};
use config::RunConfig;

#[derive(Parser)]
#[command(name = "lipinvert", version, about = "Invertibility certificates and path-lifting inversion for Lipschitz maps")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a certificate (ball inclusion by default) and write its JSON.
    Certify(Common),
    /// Invert the map at `--target` by path lifting from `--x0`.
    Invert(Common),
    /// Tabulate the covered radius ϱ(r) for each r in `--r`.
    Radius(Common),
    /// Write the radial profile of the regularity index around `--x0`.
    Profile(Common),
}

#[derive(Args)]
struct Common {
    /// Flat key=value config file; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Registry map name.
    #[arg(long)]
    map: Option<String>,
    /// Base point, e.g. `1,2`.
    #[arg(long, allow_hyphen_values = true)]
    x0: Option<String>,
    /// Target point for `invert` and submersion checks.
    #[arg(long, allow_hyphen_values = true)]
    target: Option<String>,
    /// Norm on both spaces: l1, l2, linf, lp:<p>, wlp:<w..>:<p>, poly:<v;..>.
    #[arg(long)]
    norm: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Registry weight, e.g. `weight:const:2`.
    #[arg(long)]
    weight: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
    /// Leave wall-clock time out of reports.
    #[arg(long)]
    no_timestamp: bool,
    /// Radii r, comma separated.
    #[arg(long)]
    r: Option<String>,
    /// Certificate kind: ball, jf-regular, perturbation, submersion.
    #[arg(long)]
    kind: Option<String>,
    /// Registry map added to `--map` for perturbation certificates.
    #[arg(long)]
    perturbation: Option<String>,
    /// Any other config key.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut pairs = match &self.config {
            Some(p) => config::read_file(p)?,
            None => Default::default(),
        };
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| anyhow::anyhow!("--set expects KEY=VALUE, got `{kv}`"))?;
            pairs.insert(k.trim().to_string(), v.trim().to_string());
        }
        let flags = [
            ("map", &self.map),
            ("x0", &self.x0),
            ("target", &self.target),
            ("norm", &self.norm),
            ("seed", &self.seed),
            ("weight", &self.weight),
            ("out", &self.out),
            ("r", &self.r),
            ("kind", &self.kind),
            ("perturbation", &self.perturbation),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                pairs.insert(k.to_string(), v.clone());
            }
        }
        if self.no_timestamp {
            pairs.insert("no_timestamp".into(), "true".into());
        }
        RunConfig::from_pairs(&pairs)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE as u8 } else { 0 });
        }
    };
    let (common, run): (&Common, fn(&RunConfig) -> anyhow::Result<i32>) = match &cli.cmd {
        Cmd::Certify(c) => (c, cmd_certify),
        Cmd::Invert(c) => (c, cmd_invert),
        Cmd::Radius(c) => (c, cmd_radius),
        Cmd::Profile(c) => (c, cmd_profile),
    };
    let code = common.resolve().and_then(|cfg| run(&cfg)).unwrap_or_else(|e| {
        eprintln!("error: {e:#}");
        EXIT_USAGE
    });
    ExitCode::from(code as u8)
}
