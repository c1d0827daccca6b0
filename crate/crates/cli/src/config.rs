//! Run configuration: a flat `key=value` file merged with command-line
//! overrides, then validated into a [`RunConfig`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};

/// Keys accepted in config files and `--set`.
pub const KEYS: &[&str] = &[
    "map",
    "x0",
    "target",
    "norm",
    "seed",
    "weight",
    "out",
    "no_timestamp",
    "kind",
    "perturbation",
    "combiner",
    "r",
    "index_schedule",
    "index_count",
    "shells",
    "per_shell",
    "target_count",
    "trust_radius",
    "tol",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CertKind {
    Ball,
    JfRegular,
    Perturbation,
    Submersion,
}

impl CertKind {
    fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "ball" => Self::Ball,
            "jf-regular" => Self::JfRegular,
            "perturbation" => Self::Perturbation,
            "submersion" => Self::Submersion,
            _ => bail!("unknown certificate kind `{s}` (ball, jf-regular, perturbation, submersion)"),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub map: String,
    pub x0: Option<Vec<f64>>,
    pub target: Option<Vec<f64>>,
    pub norm: Option<String>,
    pub seed: u64,
    pub weight: Option<String>,
    pub out: PathBuf,
    pub timestamp: bool,
    pub kind: CertKind,
    pub perturbation: Option<String>,
    pub combiner: String,
    pub r: Vec<f64>,
    pub index_schedule: Vec<f64>,
    pub index_count: usize,
    pub shells: usize,
    pub per_shell: usize,
    pub target_count: usize,
    pub trust_radius: f64,
    pub tol: f64,
}

/// Read `key=value` lines; `#` starts a comment, blank lines are skipped.
pub fn read_file(path: &Path) -> Result<BTreeMap<String, String>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    parse_pairs(&text).with_context(|| format!("in config {}", path.display()))
}

pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| anyhow!("line {}: expected key=value", no + 1))?;
        out.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(out)
}

/// Parse `1,2`, `[1, 2]` or `1 2`.
pub fn parse_vector(s: &str) -> Result<Vec<f64>> {
    let inner = s.trim().trim_start_matches('[').trim_end_matches(']');
    let v = inner
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| t.parse::<f64>().map_err(|_| anyhow!("`{t}` is not a number")))
        .collect::<Result<Vec<_>>>()?;
    if v.is_empty() || v.iter().any(|x| !x.is_finite()) {
        bail!("malformed vector `{s}`");
    }
    Ok(v)
}

fn positive_list(key: &str, s: &str) -> Result<Vec<f64>> {
    let v = parse_vector(s).with_context(|| format!("key `{key}`"))?;
    if v.iter().any(|x| *x <= 0.0) {
        bail!("key `{key}`: every entry must be positive");
    }
    Ok(v)
}

fn parse_num<N: std::str::FromStr>(key: &str, s: &str) -> Result<N> {
    s.trim().parse().map_err(|_| anyhow!("key `{key}`: cannot parse `{s}`"))
}

fn parse_bool(key: &str, s: &str) -> Result<bool> {
    match s.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => bail!("key `{key}`: expected a boolean, got `{s}`"),
    }
}

impl RunConfig {
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(k) = pairs.keys().find(|k| !KEYS.contains(&k.as_str())) {
            bail!("unknown config key `{k}`");
        }
        let get = |k: &str| pairs.get(k).map(String::as_str);
        let map = get("map").ok_or_else(|| anyhow!("missing `map`"))?.to_string();
        let seed = get("seed").ok_or_else(|| anyhow!("missing `seed` (runs are seeded explicitly)"))?;
        let seed: u64 = parse_num("seed", seed)?;
        let cfg = Self {
            map,
            x0: get("x0").map(parse_vector).transpose().context("key `x0`")?,
            target: get("target").map(parse_vector).transpose().context("key `target`")?,
            norm: get("norm").map(str::to_string),
            seed,
            weight: get("weight").map(str::to_string),
            out: PathBuf::from(get("out").unwrap_or(".")),
            timestamp: !get("no_timestamp").map(|s| parse_bool("no_timestamp", s)).transpose()?.unwrap_or(false),
            kind: CertKind::parse(get("kind").unwrap_or("ball"))?,
            perturbation: get("perturbation").map(str::to_string),
            combiner: get("combiner").unwrap_or("combiner:add").to_string(),
            r: positive_list("r", get("r").unwrap_or("1"))?,
            index_schedule: positive_list("index_schedule", get("index_schedule").unwrap_or("0.1,0.01,0.001"))?,
            index_count: parse_num("index_count", get("index_count").unwrap_or("16"))?,
            shells: parse_num("shells", get("shells").unwrap_or("32"))?,
            per_shell: parse_num("per_shell", get("per_shell").unwrap_or("16"))?,
            target_count: parse_num("target_count", get("target_count").unwrap_or("12"))?,
            trust_radius: parse_num("trust_radius", get("trust_radius").unwrap_or("1"))?,
            tol: parse_num("tol", get("tol").unwrap_or("1e-8"))?,
        };
        for (k, v) in [("index_count", cfg.index_count), ("shells", cfg.shells), ("per_shell", cfg.per_shell), ("target_count", cfg.target_count)] {
            if v == 0 {
                bail!("key `{k}` must be positive");
            }
        }
        if !(cfg.trust_radius > 0.0 && cfg.trust_radius.is_finite()) {
            bail!("key `trust_radius` must be positive");
        }
        if cfg.tol.is_nan() || cfg.tol <= 0.0 {
            bail!("key `tol` must be positive");
        }
        if cfg.index_schedule.windows(2).any(|w| w[1] >= w[0]) {
            bail!("key `index_schedule` must be strictly decreasing");
        }
        Ok(cfg)
    }
}
