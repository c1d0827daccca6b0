//! Certificates: Jf-regularity, empirical covering rates, radial index
//! profiles, the domain-of-invertibility radius ϱ(r), ball inclusion and
//! sampled submersion checks.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::invert::{global_invert, local_invert, sample_in_norm_ball, LiftOptions, LocalOptions};
use crate::pseudojac::{
    clarke_sample, default_schedule, hull_min_constant, index_with, Constant, HullPoint, IndexOptions, MapUnderStudy,
    TargetGeometry,
};
use crate::rng::{derive_seed, rng_from};
use crate::{Error, Real, Result};

fn to_f64<T: Real>(v: &DVector<T>) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

/// Right-continuous nondecreasing positive step function `ω` on `[0, ∞)`:
/// `ω(s) = values[k]` for `breakpoints[k−1] ≤ s < breakpoints[k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Weight<T: Real> {
    breakpoints: Vec<T>,
    values: Vec<T>,
}

impl<T: Real> Weight<T> {
    pub fn new(breakpoints: Vec<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != breakpoints.len() + 1 {
            return Err(Error::InvalidArgument("a weight needs one more value than breakpoints".into()));
        }
        if values.iter().any(|v| !(*v > T::zero()) || !v.is_finite()) {
            return Err(Error::InvalidArgument("weight values must be positive and finite".into()));
        }
        if values.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidArgument("weight values must be nondecreasing".into()));
        }
        if breakpoints.iter().any(|b| !(*b > T::zero())) || breakpoints.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument("breakpoints must be positive and strictly increasing".into()));
        }
        Ok(Self { breakpoints, values })
    }

    pub fn constant(c: T) -> Result<Self> {
        Self::new(vec![], vec![c])
    }

    /// `ω(s) = 1 + ⌊s⌋` on `[0, 32)`, then `33`.
    pub fn linear_steps() -> Self {
        let breakpoints = (1..=32).map(T::of_usize).collect();
        let values = (1..=33).map(T::of_usize).collect();
        Self { breakpoints, values }
    }

    pub fn breakpoints(&self) -> &[T] {
        &self.breakpoints
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn eval(&self, s: T) -> T {
        self.values[self.breakpoints.partition_point(|b| *b <= s)]
    }

    /// `∫₀ʳ 1/ω(s) ds`, exact.
    pub fn integral_reciprocal(&self, r: T) -> T {
        let mut acc = T::zero();
        let mut lo = T::zero();
        for (k, &v) in self.values.iter().enumerate() {
            let hi = self.breakpoints.get(k).copied().unwrap_or(T::infinity()).min(r);
            if hi > lo {
                acc += (hi - lo) / v;
            }
            if hi >= r {
                break;
            }
            lo = hi;
        }
        acc
    }
}

impl<T: Real> fmt::Display for Weight<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.breakpoints.is_empty() {
            return write!(f, "const:{}", self.values[0]);
        }
        let b: Vec<String> = self.breakpoints.iter().map(|x| x.to_string()).collect();
        let v: Vec<String> = self.values.iter().map(|x| x.to_string()).collect();
        write!(f, "steps:{}|{}", b.join(","), v.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Certified,
    Refuted,
    Inconclusive,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Certified => "certified",
            Self::Refuted => "refuted",
            Self::Inconclusive => "inconclusive",
        })
    }
}

/// Serializable verdict with the numbers, witnesses and hypotheses behind it.
/// Maps are ordered so identical runs give identical JSON.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub kind: String,
    pub subject: String,
    pub verdict: Verdict,
    pub theorem_tags: Vec<String>,
    pub numbers: BTreeMap<String, f64>,
    pub witnesses: BTreeMap<String, Value>,
    pub hypotheses_checked: Vec<String>,
    pub hypotheses_asserted: Vec<String>,
    pub notes: Vec<String>,
    pub provenance: BTreeMap<String, Value>,
}

impl Certificate {
    pub fn new(kind: &str, subject: &str) -> Self {
        Self {
            kind: kind.into(),
            subject: subject.into(),
            verdict: Verdict::Inconclusive,
            theorem_tags: vec![],
            numbers: BTreeMap::new(),
            witnesses: BTreeMap::new(),
            hypotheses_checked: vec![],
            hypotheses_asserted: vec![],
            notes: vec![],
            provenance: BTreeMap::new(),
        }
    }

    pub fn number(&mut self, key: &str, v: f64) {
        self.numbers.insert(key.into(), v);
    }

    pub fn witness(&mut self, key: &str, v: Value) {
        self.witnesses.insert(key.into(), v);
    }

    pub fn provenance(&mut self, key: &str, v: Value) {
        self.provenance.insert(key.into(), v);
    }

    pub fn note(&mut self, s: &str) {
        self.notes.push(s.into());
    }

    pub fn check_hypothesis(&mut self, s: &str) {
        self.hypotheses_checked.push(s.into());
    }

    pub fn assert_hypothesis(&mut self, s: &str) {
        self.hypotheses_asserted.push(s.into());
    }

    /// Compact JSON; non-finite numbers become `null`.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("certificate serializes")
    }
}

/// Tolerance above which an index counts as positive.
pub const INDEX_TOL: f64 = 1e-9;

/// Jf-regularity at `x`: positive regularity index and no operator of the
/// certified hull that fails to be an isomorphism.
///
/// The hull at the radius achieving the index is probed at its vertices,
/// 200 random convex combinations and the minimizer of `C*`; an operator
/// with `C* < ε_iso · max(1, max|T_ij|)` refutes.
pub fn jf_regular_check<T: Real>(f: &MapUnderStudy<T>, x: &DVector<T>, schedule: &[T], count: usize, seed: u64, eps_iso: T) -> Result<Certificate> {
    let mut cert = Certificate::new("jf-regular", f.name());
    cert.theorem_tags.push("Thm 5.4".into());
    cert.provenance("seed", json!(seed));
    cert.provenance("schedule", json!(schedule.iter().map(|r| r.as_f64()).collect::<Vec<_>>()));
    cert.provenance("count", json!(count));
    cert.witness("base_point", json!(to_f64(x)));
    if !f.is_square() {
        cert.verdict = Verdict::Refuted;
        cert.note("non-square Jacobians are never isomorphisms");
        return Ok(cert);
    }
    let est = index_with(f, x, schedule, count, seed, Constant::Primal, IndexOptions::default())?;
    cert.number("regularity_index", est.value.as_f64());
    let (k, row) = est
        .table
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.value.partial_cmp(&b.1.value).unwrap_or(std::cmp::Ordering::Equal))
        .expect("nonempty schedule");
    cert.number("radius", row.radius.as_f64());
    let h = MapUnderStudy::default_fd_step(x);
    let set = clarke_sample(f, x, row.radius, count, h, derive_seed(seed, &[k as u64, 0]))?;
    if !(est.value > T::c(INDEX_TOL)) {
        cert.verdict = Verdict::Refuted;
        let op = set.combine(&row.witness);
        cert.witness("hull_weights", json!(row.witness.weights.iter().map(|w| w.as_f64()).collect::<Vec<_>>()));
        cert.witness("hull_operator", json!(op.rows_f64()));
        cert.note("the hull contains an operator with vanishing Banach constant");
        return Ok(cert);
    }
    let mut probes: Vec<HullPoint<T>> = (0..set.len()).map(|i| HullPoint::vertex(set.len(), i)).collect();
    let mut rng = rng_from(derive_seed(seed, &[u64::MAX]));
    for _ in 0..200 {
        let w: Vec<T> = (0..set.len()).map(|_| T::c(-(1.0 - rng.random::<f64>()).ln())).collect();
        probes.push(HullPoint::normalized(w));
    }
    probes.push(hull_min_constant(&set, Constant::Dual, 20, derive_seed(seed, &[k as u64, 2]))?.witness);
    let results: Vec<(T, T)> = probes
        .par_iter()
        .enumerate()
        .map(|(i, w)| {
            let op = set.combine(w);
            let scale = crate::dense::max_abs(op.matrix().as_slice()).max(T::one());
            (op.dual_banach_constant(64, derive_seed(seed, &[7, i as u64])), eps_iso * scale)
        })
        .collect();
    let mut min_dual = T::infinity();
    for (i, (c, thr)) in results.iter().enumerate() {
        min_dual = min_dual.min(*c);
        if *c < *thr {
            cert.verdict = Verdict::Refuted;
            cert.number("min_dual_constant", c.as_f64());
            cert.witness("hull_weights", json!(probes[i].weights.iter().map(|w| w.as_f64()).collect::<Vec<_>>()));
            cert.witness("hull_operator", json!(set.combine(&probes[i]).rows_f64()));
            cert.note("a probed hull operator is not an isomorphism");
            return Ok(cert);
        }
    }
    cert.number("min_dual_constant", min_dual.as_f64());
    cert.number("probes", probes.len() as f64);
    cert.check_hypothesis("regularity index positive");
    cert.check_hypothesis("sampled hull operators are isomorphisms");
    cert.verdict = Verdict::Certified;
    Ok(cert)
}

/// `min d(f(x + t v), f(x)) / (t‖v‖)` over sampled unit directions and the
/// given steps; an upper bound on the lower Dini rate `D⁻f(x)`.
pub fn dini_lower<T: Real>(f: &MapUnderStudy<T>, x: &DVector<T>, count: usize, steps: &[T], seed: u64) -> Result<T> {
    if count == 0 || steps.is_empty() {
        return Err(Error::InvalidArgument("need at least one direction and one step".into()));
    }
    let fx = f.eval(x);
    let mut best = T::infinity();
    for v in f.norm_in().sample_unit_sphere(count, seed) {
        for &t in steps {
            best = best.min(f.target_distance(&f.eval(&(x + &v * t)), &fx) / t);
        }
    }
    Ok(best)
}

/// Targets `f(x) ⊕ s·d` for tangent directions `d` on the output unit
/// sphere and scale factors `s`.
fn target_ring<T: Real>(f: &MapUnderStudy<T>, center: &DVector<T>, radii: &[T], count: usize, seed: u64) -> Vec<DVector<T>> {
    let dirs = f.norm_out().sample_unit_sphere(count.max(1), seed);
    let mut out = Vec::new();
    for &r in radii {
        for d in &dirs {
            out.push(f.target_step(center, &(d * r)));
        }
    }
    out
}

/// Largest `α` (to 1e−3) such that for every `r` in the schedule, sampled
/// targets of `B(f(x); αr)` are reached by [`local_invert`] inside `B(x; r)`.
/// Solver failures count as misses, so the estimate errs low.
pub fn cov_estimate_empirical<T: Real>(f: &MapUnderStudy<T>, x: &DVector<T>, r_schedule: &[T], target_count: usize, seed: u64) -> Result<T> {
    if r_schedule.is_empty() || r_schedule.iter().any(|r| !(*r > T::zero())) {
        return Err(Error::InvalidArgument("radii must be positive".into()));
    }
    let fx = f.eval(x);
    let reached = |alpha: T| -> bool {
        r_schedule.iter().enumerate().all(|(k, &r)| {
            let targets = target_ring(f, &fx, &[alpha * r, alpha * r * T::c(0.5)], target_count, derive_seed(seed, &[k as u64]));
            targets.par_iter().enumerate().all(|(i, y)| {
                let opts = LocalOptions {
                    trust_radius: r,
                    tol: T::c(1e-10) * T::one().max(euclid_of(y)),
                    max_iter: 60,
                    sample_count: 3,
                    seed: derive_seed(seed, &[k as u64, i as u64]),
                };
                local_invert(f, x, y, opts).is_ok()
            })
        })
    };
    let res = T::c(1e-3);
    let (mut lo, mut hi) = (T::zero(), T::one());
    if reached(hi) {
        lo = hi;
        hi = hi + hi;
        while reached(hi) {
            lo = hi;
            hi = hi + hi;
            if hi > T::c(1e6) {
                return Ok(lo);
            }
        }
    }
    while hi - lo > res {
        let mid = (lo + hi) * T::c(0.5);
        if reached(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

fn euclid_of<T: Real>(v: &DVector<T>) -> T {
    crate::dense::euclid(v)
}

/// Regularity-index settings used at each sampled point of a profile.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileOptions<T: Real> {
    pub index_schedule: Vec<T>,
    pub index_count: usize,
}

impl<T: Real> Default for ProfileOptions<T> {
    fn default() -> Self {
        Self { index_schedule: default_schedule(), index_count: 16 }
    }
}

/// Sampled `m(ρ) = inf { C(Jf(x)) : d(x, x*) ≤ ρ }`, made nonincreasing by
/// a running minimum over the nested balls.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RadialProfile {
    pub rows: Vec<(f64, f64)>,
    /// Point attaining the running minimum at each row.
    pub argmin: Vec<Vec<f64>>,
}

impl RadialProfile {
    /// A constant profile `α` on `[0, rho_max]`.
    pub fn constant(alpha: f64, rho_max: f64) -> Self {
        Self { rows: vec![(rho_max, alpha)], argmin: vec![vec![]] }
    }

    pub fn max_rho(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("rho,inf_index\n");
        for (rho, m) in &self.rows {
            let _ = writeln!(out, "{rho},{m}");
        }
        out
    }
}

pub fn radial_profile<T: Real>(f: &MapUnderStudy<T>, x_star: &DVector<T>, rho_schedule: &[T], per_shell_count: usize, seed: u64) -> Result<RadialProfile> {
    radial_profile_with(f, x_star, rho_schedule, per_shell_count, seed, &ProfileOptions::default())
}

/// Each shell samples the boundary sphere (norm-sphere directions) and the
/// interior of `B(x*; ρ)`, half each; `x*` itself opens the first shell.
pub fn radial_profile_with<T: Real>(
    f: &MapUnderStudy<T>,
    x_star: &DVector<T>,
    rho_schedule: &[T],
    per_shell_count: usize,
    seed: u64,
    opts: &ProfileOptions<T>,
) -> Result<RadialProfile> {
    if rho_schedule.is_empty() || rho_schedule.iter().any(|r| !(*r > T::zero())) || rho_schedule.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidArgument("rho schedule must be positive and increasing".into()));
    }
    let norm = f.norm_in();
    let half = per_shell_count.div_ceil(2).max(1);
    let mut shells: Vec<Vec<DVector<T>>> = Vec::with_capacity(rho_schedule.len());
    for (k, &rho) in rho_schedule.iter().enumerate() {
        let mut pts: Vec<DVector<T>> = if k == 0 { vec![x_star.clone()] } else { vec![] };
        for d in norm.sample_unit_sphere(half, derive_seed(seed, &[k as u64, 0])) {
            pts.push(x_star + d * rho);
        }
        let mut rng = rng_from(derive_seed(seed, &[k as u64, 1]));
        for _ in 0..half {
            pts.push(sample_in_norm_ball(&mut rng, norm, x_star, rho));
        }
        shells.push(pts);
    }
    let flat: Vec<(usize, usize, &DVector<T>)> =
        shells.iter().enumerate().flat_map(|(k, s)| s.iter().enumerate().map(move |(i, p)| (k, i, p))).collect();
    let values: Vec<Result<(usize, T, &DVector<T>)>> = flat
        .par_iter()
        .map(|&(k, i, p)| {
            let s = derive_seed(seed, &[k as u64, 2, i as u64]);
            let v = index_with(f, p, &opts.index_schedule, opts.index_count, s, Constant::Primal, IndexOptions::default())?.value;
            Ok((k, v, p))
        })
        .collect();
    let mut per_shell: Vec<(T, Option<&DVector<T>>)> = vec![(T::infinity(), None); rho_schedule.len()];
    for v in values {
        let (k, val, p) = v?;
        if val < per_shell[k].0 {
            per_shell[k] = (val, Some(p));
        }
    }
    let mut rows = Vec::with_capacity(rho_schedule.len());
    let mut argmin = Vec::with_capacity(rho_schedule.len());
    let mut running = T::infinity();
    let mut arg: Vec<f64> = to_f64(x_star);
    for (k, &rho) in rho_schedule.iter().enumerate() {
        if per_shell[k].0 < running {
            running = per_shell[k].0;
            arg = to_f64(per_shell[k].1.expect("nonempty shell"));
        }
        rows.push((rho.as_f64(), running.as_f64()));
        argmin.push(arg.clone());
    }
    Ok(RadialProfile { rows, argmin })
}

/// `ϱ(r) ≈ ∫₀ʳ m(ρ) dρ` by a lower Riemann sum: on `(ρ_{k−1}, ρ_k]` the
/// nonincreasing profile is bounded below by its value at `ρ_k`.
pub fn domain_radius(profile: &RadialProfile, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument("r must be nonnegative".into()));
    }
    let max = profile.max_rho();
    if r > max * (1.0 + 1e-12) {
        return Err(Error::OutOfRange { r, max });
    }
    let mut acc = 0.0;
    let mut lo = 0.0;
    for &(rho, m) in &profile.rows {
        if lo >= r {
            break;
        }
        let hi = rho.min(r);
        acc += (hi - lo) * m.max(0.0);
        lo = rho;
    }
    Ok(acc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct BallOptions<T: Real> {
    pub shells: usize,
    pub per_shell: usize,
    pub profile: ProfileOptions<T>,
    pub lift: LiftOptions<T>,
    pub residual_tol: T,
    /// Hypotheses echoed into the certificate as asserted by the user.
    pub asserted: Vec<String>,
}

impl<T: Real> Default for BallOptions<T> {
    fn default() -> Self {
        Self {
            shells: 32,
            per_shell: 16,
            profile: ProfileOptions::default(),
            lift: LiftOptions::default(),
            residual_tol: T::c(1e-8),
            asserted: vec!["X complete".into(), "Y simply connected".into()],
        }
    }
}

/// Shells `r·k/shells`, `k = 1..=shells`.
pub fn uniform_rho_schedule<T: Real>(r: T, shells: usize) -> Vec<T> {
    (1..=shells.max(1)).map(|k| r * T::of_usize(k) / T::of_usize(shells.max(1))).collect()
}

pub fn ball_inclusion_certificate<T: Real>(f: &MapUnderStudy<T>, x_star: &DVector<T>, r: T, target_count: usize, seed: u64) -> Result<(Certificate, RadialProfile)> {
    ball_inclusion_certificate_with(f, x_star, r, target_count, seed, &BallOptions::default())
}

/// `B(f(x*); ϱ(r)) ⊂ f(B(x*; r))` on sampled targets at distance up to
/// `0.98·ϱ(r)`: each is inverted by path lifting and must land in
/// `B(x*; r)` with residual at most `residual_tol`.
pub fn ball_inclusion_certificate_with<T: Real>(
    f: &MapUnderStudy<T>,
    x_star: &DVector<T>,
    r: T,
    target_count: usize,
    seed: u64,
    opts: &BallOptions<T>,
) -> Result<(Certificate, RadialProfile)> {
    if !(r > T::zero()) {
        return Err(Error::InvalidArgument("r must be positive".into()));
    }
    let mut cert = Certificate::new("ball-inclusion", f.name());
    cert.theorem_tags = vec!["Thm 6.1".into(), "Cor 6.7".into()];
    cert.provenance("seed", json!(seed));
    cert.provenance("shells", json!(opts.shells));
    cert.provenance("per_shell", json!(opts.per_shell));
    cert.provenance("index_schedule", json!(opts.profile.index_schedule.iter().map(|v| v.as_f64()).collect::<Vec<_>>()));
    cert.provenance("safety_factor", json!(0.98));
    for a in &opts.asserted {
        cert.assert_hypothesis(a);
    }
    cert.assert_hypothesis("divergence of the index integral (not decidable numerically)");
    cert.witness("x_star", json!(to_f64(x_star)));
    let sched = uniform_rho_schedule(r, opts.shells);
    let profile = radial_profile_with(f, x_star, &sched, opts.per_shell, derive_seed(seed, &[0]), &opts.profile)?;
    let rho = domain_radius(&profile, r.as_f64())?;
    cert.number("r", r.as_f64());
    cert.number("varrho", rho);
    cert.number("profile_min", profile.rows.last().map_or(f64::NAN, |p| p.1));
    if !(rho > 0.0) {
        cert.verdict = Verdict::Refuted;
        cert.witness("zero_index_point", json!(profile.argmin.first().cloned().unwrap_or_default()));
        cert.note("the regularity index vanishes at the witness point, so ϱ(r) = 0 and no target ball is covered");
        return Ok((cert, profile));
    }
    cert.check_hypothesis("ϱ(r) > 0 from the sampled radial profile");
    let fx = f.eval(x_star);
    let rho_t = T::c(rho * 0.98);
    let targets = target_ring(f, &fx, &[rho_t, rho_t * T::c(0.5)], target_count.div_ceil(2), derive_seed(seed, &[1]));
    let solved: Vec<(DVector<T>, Result<DVector<T>>)> = targets
        .par_iter()
        .enumerate()
        .map(|(i, y)| {
            let lo = LiftOptions { seed: derive_seed(seed, &[2, i as u64]), ..opts.lift.clone() };
            (y.clone(), global_invert(f, x_star, y, &lo).map(|(x, _)| x))
        })
        .collect();
    let mut max_res = T::zero();
    let mut max_dist = T::zero();
    let mut inconclusive = false;
    for (y, s) in &solved {
        match s {
            Ok(x) => {
                let res = f.residual(x, y);
                let dist = f.norm_in().eval_unchecked(&(x - x_star));
                max_res = max_res.max(res);
                max_dist = max_dist.max(dist);
                if res > opts.residual_tol {
                    inconclusive = true;
                    cert.witness("unconverged_target", json!(to_f64(y)));
                } else if dist > r * T::c(1.0 + 1e-9) {
                    cert.verdict = Verdict::Refuted;
                    cert.number("max_residual", max_res.as_f64());
                    cert.number("preimage_distance", dist.as_f64());
                    cert.witness("failing_target", json!(to_f64(y)));
                    cert.witness("preimage", json!(to_f64(x)));
                    cert.note("the preimage of the witness target lies outside B(x*, r)");
                    return Ok((cert, profile));
                }
            }
            Err(_) => {
                inconclusive = true;
                cert.witness("unsolved_target", json!(to_f64(y)));
            }
        }
    }
    cert.number("targets", solved.len() as f64);
    cert.number("max_residual", max_res.as_f64());
    cert.number("max_preimage_distance", max_dist.as_f64());
    if inconclusive {
        cert.verdict = Verdict::Inconclusive;
        cert.note("a target could not be inverted; solver failure is not a counterexample");
    } else {
        cert.check_hypothesis("every sampled target has a preimage in B(x*, r)");
        cert.verdict = Verdict::Certified;
    }
    Ok((cert, profile))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubmersionOptions<T: Real> {
    pub index_schedule: Vec<T>,
    pub index_count: usize,
    pub lift: LiftOptions<T>,
    /// Starts are `0` and points of the unit ball.
    pub start_radius: T,
    pub tol: T,
}

impl<T: Real> Default for SubmersionOptions<T> {
    fn default() -> Self {
        Self { index_schedule: default_schedule(), index_count: 16, lift: LiftOptions::default(), start_radius: T::one(), tol: T::c(1e-3) }
    }
}

pub fn submersion_check<T: Real>(f: &MapUnderStudy<T>, k_sample: &[DVector<T>], preimage_count: usize, seed: u64) -> Result<Certificate> {
    submersion_check_with(f, k_sample, preimage_count, seed, &SubmersionOptions::default())
}

enum Found<T: Real> {
    Preimage(DVector<T>, T),
    /// Lift failed after the index collapsed along it.
    Collapse(Vec<f64>, f64),
    Unreachable,
}

/// Sampled form of the criterion `C(Jf(x)) ≥ α_K` on `f⁻¹(K)`: preimages of
/// each target are found by lifting from several starts and the regularity
/// index is evaluated at each. A lift that stalls because the index
/// collapses is itself a witness sequence against the criterion.
pub fn submersion_check_with<T: Real>(
    f: &MapUnderStudy<T>,
    k_sample: &[DVector<T>],
    preimage_count: usize,
    seed: u64,
    opts: &SubmersionOptions<T>,
) -> Result<Certificate> {
    if k_sample.is_empty() {
        return Err(Error::InvalidArgument("K sample must be nonempty".into()));
    }
    let mut cert = Certificate::new("submersion", f.name());
    cert.theorem_tags.push("Thm 6.8".into());
    cert.provenance("seed", json!(seed));
    cert.provenance("preimage_count", json!(preimage_count));
    cert.note("a sampled pass is necessary evidence only; a sampled failure refutes every equivalent criterion");
    let n = f.dim_in();
    let mut rng = rng_from(derive_seed(seed, &[0]));
    let mut starts = vec![DVector::zeros(n)];
    while starts.len() < preimage_count.max(1) {
        starts.push(sample_in_norm_ball(&mut rng, f.norm_in(), &DVector::zeros(n), opts.start_radius));
    }
    let found: Vec<Vec<Found<T>>> = k_sample
        .par_iter()
        .enumerate()
        .map(|(i, y)| {
            starts
                .iter()
                .enumerate()
                .map(|(j, x0)| {
                    let lo = LiftOptions { seed: derive_seed(seed, &[1, i as u64, j as u64]), ..opts.lift.clone() };
                    match global_invert(f, x0, y, &lo) {
                        Ok((x, _)) => {
                            let s = derive_seed(seed, &[2, i as u64, j as u64]);
                            match index_with(f, &x, &opts.index_schedule, opts.index_count, s, Constant::Primal, IndexOptions::default()) {
                                Ok(est) => Found::Preimage(x, est.value),
                                Err(_) => Found::Unreachable,
                            }
                        }
                        Err(Error::LiftFailure { trace, .. }) if trace.min_index() <= opts.tol.as_f64() => {
                            let k = trace
                                .index_estimates
                                .iter()
                                .enumerate()
                                .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
                                .map_or(0, |p| p.0);
                            Found::Collapse(trace.points[k].clone(), trace.index_estimates[k])
                        }
                        Err(_) => Found::Unreachable,
                    }
                })
                .collect()
        })
        .collect();
    let mut alpha = f64::INFINITY;
    let mut witness: Option<Vec<f64>> = None;
    let mut unreachable = Vec::new();
    for (y, per) in k_sample.iter().zip(&found) {
        let mut any = false;
        for fnd in per {
            match fnd {
                Found::Preimage(x, c) => {
                    any = true;
                    if c.as_f64() < alpha {
                        alpha = c.as_f64();
                        witness = Some(to_f64(x));
                    }
                }
                Found::Collapse(p, c) => {
                    any = true;
                    if *c < alpha {
                        alpha = *c;
                        witness = Some(p.clone());
                    }
                }
                Found::Unreachable => {}
            }
        }
        if !any {
            unreachable.push(to_f64(y));
        }
    }
    cert.number("alpha_k", alpha);
    cert.number("targets", k_sample.len() as f64);
    if let Some(w) = &witness {
        cert.witness("argmin_point", json!(w));
    }
    if alpha <= opts.tol.as_f64() {
        cert.verdict = Verdict::Refuted;
        cert.note("the regularity index vanishes (to tolerance) over the preimage of K");
    } else if !unreachable.is_empty() {
        cert.verdict = Verdict::Inconclusive;
        cert.witness("unreachable_targets", json!(unreachable));
    } else {
        cert.verdict = Verdict::Certified;
        cert.check_hypothesis("C(Jf(x)) ≥ α_K > 0 on sampled preimages of K");
    }
    if f.target() == TargetGeometry::UnitCircle {
        cert.note("targets on the circle are reached along the shorter arc");
    }
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use nalgebra::DMatrix;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn scalar(name: &str, f: fn(f64) -> f64, df: fn(f64) -> f64) -> MapUnderStudy<f64> {
        MapUnderStudy::new(name, 1, 1, move |x: &DVector<f64>| v(&[f(x[0])]))
            .with_jacobian(move |x: &DVector<f64>| DMatrix::from_element(1, 1, df(x[0])))
    }

    fn sin_id() -> MapUnderStudy<f64> {
        scalar("sin", |x| x + 0.5 * x.sin(), |x| 1.0 + 0.5 * x.cos())
    }

    fn diag23() -> MapUnderStudy<f64> {
        MapUnderStudy::new("diag", 2, 2, |x: &DVector<f64>| v(&[2.0 * x[0], 3.0 * x[1]]))
            .with_jacobian(|_: &DVector<f64>| DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]))
    }

    /// Composite Simpson on each piece between breakpoints.
    fn quad(w: &Weight<f64>, r: f64) -> f64 {
        let mut cuts = vec![0.0];
        cuts.extend(w.breakpoints().iter().copied().filter(|&b| b < r));
        cuts.push(r);
        cuts.windows(2)
            .map(|c| {
                let (a, b) = (c[0], c[1]);
                let n = 64;
                let h = (b - a) / n as f64;
                // evaluate slightly inside to respect right-continuity
                let g = |s: f64| 1.0 / w.eval(s.clamp(a, b - 1e-15 * (1.0 + b)));
                (0..=n).map(|i| g(a + i as f64 * h) * if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 }).sum::<f64>() * h / 3.0
            })
            .sum()
    }

    #[test]
    fn weight_integral_matches_quadrature() {
        let mut rng = rng_from(9);
        for _ in 0..50 {
            let k = rng.random_range(0..6);
            let mut b: Vec<f64> = (0..k).map(|_| rng.random::<f64>() * 10.0 + 0.01).collect();
            b.sort_by(|a, c| a.partial_cmp(c).unwrap());
            b.dedup();
            let mut vals: Vec<f64> = (0..=b.len()).map(|_| rng.random::<f64>() * 3.0 + 0.1).collect();
            vals.sort_by(|a, c| a.partial_cmp(c).unwrap());
            let w = Weight::new(b, vals).unwrap();
            let r = rng.random::<f64>() * 12.0;
            assert_abs_diff_eq!(w.integral_reciprocal(r), quad(&w, r), epsilon = 1e-10);
        }
        assert_abs_diff_eq!(Weight::constant(2.0).unwrap().integral_reciprocal(10.0), 5.0, epsilon = 1e-15);
        assert!(Weight::new(vec![1.0], vec![2.0, 1.0]).is_err());
        assert!(Weight::new(vec![], vec![0.0]).is_err());
        let ls = Weight::<f64>::linear_steps();
        assert_eq!(ls.eval(0.0), 1.0);
        assert_eq!(ls.eval(1.0), 2.0);
        assert_eq!(ls.eval(100.0), 33.0);
    }

    #[test]
    fn jf_regular_examples() {
        let k23 = scalar("kink-23", |x| 2.0 * x + x.abs(), |x| if x >= 0.0 { 3.0 } else { 1.0 });
        let c = jf_regular_check(&k23, &v(&[0.0]), &[1e-1, 1e-2], 32, 1, 1e-8).unwrap();
        assert_eq!(c.verdict, Verdict::Certified);
        assert_abs_diff_eq!(c.numbers["regularity_index"], 1.0, epsilon = 1e-9);

        let abs = scalar("abs", f64::abs, |x| x.signum());
        let c = jf_regular_check(&abs, &v(&[0.0]), &[1e-1, 1e-2], 32, 1, 1e-8).unwrap();
        assert_eq!(c.verdict, Verdict::Refuted);
        let op = c.witnesses["hull_operator"][0][0].as_f64().unwrap();
        assert!(op.abs() < 1e-12);

        let c = jf_regular_check(&diag23(), &v(&[0.0, 0.0]), &[1e-1], 8, 1, 1e-8).unwrap();
        assert_eq!(c.verdict, Verdict::Certified);
        assert_abs_diff_eq!(c.numbers["regularity_index"], 2.0, epsilon = 1e-6);

        let wide = MapUnderStudy::new("proj", 2, 1, |x: &DVector<f64>| v(&[x[0]]));
        assert_eq!(jf_regular_check(&wide, &v(&[0.0, 0.0]), &[1e-1], 4, 1, 1e-8).unwrap().verdict, Verdict::Refuted);
    }

    #[test]
    fn dini_examples() {
        let steps = [1e-2, 1e-3, 1e-4];
        let id = MapUnderStudy::new("id", 2, 2, |x: &DVector<f64>| x.clone());
        assert_abs_diff_eq!(dini_lower(&id, &v(&[0.3, 0.2]), 16, &steps, 1).unwrap(), 1.0, epsilon = 1e-12);
        let k23 = scalar("kink-23", |x| 2.0 * x + x.abs(), |_| 0.0);
        assert_abs_diff_eq!(dini_lower(&k23, &v(&[0.0]), 4, &steps, 1).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(dini_lower(&sin_id(), &v(&[0.0]), 4, &[1e-6], 1).unwrap(), 1.5, epsilon = 1e-6);
        assert_abs_diff_eq!(dini_lower(&sin_id(), &v(&[std::f64::consts::PI]), 4, &[1e-6], 1).unwrap(), 0.5, epsilon = 1e-6);
    }

    #[test]
    fn cov_examples() {
        let id = MapUnderStudy::new("id", 1, 1, |x: &DVector<f64>| x.clone());
        assert_abs_diff_eq!(cov_estimate_empirical(&id, &v(&[0.2]), &[1e-2, 1e-3], 8, 1).unwrap(), 1.0, epsilon = 1e-3);
        let c = cov_estimate_empirical(&diag23(), &v(&[0.1, 0.1]), &[1e-2, 1e-3], 8, 1).unwrap();
        assert_abs_diff_eq!(c, 2.0, epsilon = 2e-2);
    }

    #[test]
    fn profile_examples() {
        let sched: Vec<f64> = (1..=16).map(|k| k as f64 * 0.5).collect();
        let p = radial_profile(&sin_id(), &v(&[0.0]), &sched, 48, 3).unwrap();
        for &(rho, m) in &p.rows {
            if rho >= std::f64::consts::PI {
                assert_abs_diff_eq!(m, 0.5, epsilon = 2e-2);
            }
        }
        assert!(p.rows.windows(2).all(|w| w[1].1 <= w[0].1));
        let p = radial_profile(&diag23(), &v(&[0.0, 0.0]), &[0.5, 1.0], 8, 3).unwrap();
        assert!(p.rows.iter().all(|&(_, m)| (m - 2.0).abs() < 1e-6));
        let id = MapUnderStudy::new("id", 1, 1, |x: &DVector<f64>| x.clone());
        let p = radial_profile(&id, &v(&[0.0]), &[1.0, 2.0], 8, 3).unwrap();
        assert!(p.rows.iter().all(|&(_, m)| (m - 1.0).abs() < 1e-6));
        assert!(p.to_csv().starts_with("rho,inf_index\n"));
    }

    #[test]
    fn domain_radius_examples() {
        let p = RadialProfile::constant(0.7, 10.0);
        assert_abs_diff_eq!(domain_radius(&p, 4.0).unwrap(), 2.8, epsilon = 1e-15);
        assert_eq!(domain_radius(&p, 0.0).unwrap(), 0.0);
        assert!(matches!(domain_radius(&p, 11.0), Err(Error::OutOfRange { .. })));
        let p = RadialProfile { rows: vec![(1.0, 3.0), (2.0, 2.0), (3.0, 1.0)], argmin: vec![vec![]; 3] };
        // lower sum: 3 + 2 + 0.5·1
        assert_abs_diff_eq!(domain_radius(&p, 2.5).unwrap(), 5.5, epsilon = 1e-15);
        let mut last = 0.0;
        for k in 0..=30 {
            let r = k as f64 * 0.1;
            let d = domain_radius(&p, r).unwrap();
            assert!(d >= last && d <= 3.0 * r + 1e-12);
            last = d;
        }
    }

    #[test]
    fn ball_inclusion_examples() {
        let id = MapUnderStudy::new("id", 1, 1, |x: &DVector<f64>| x.clone());
        let (c, _) = ball_inclusion_certificate(&id, &v(&[0.0]), 2.0, 6, 1).unwrap();
        assert_eq!(c.verdict, Verdict::Certified);
        assert_abs_diff_eq!(c.numbers["varrho"], 2.0, epsilon = 1e-6);

        let (c, _) = ball_inclusion_certificate(&sin_id(), &v(&[0.0]), 5.0, 8, 1).unwrap();
        assert_eq!(c.verdict, Verdict::Certified, "{c:?}");
        assert!(c.numbers["varrho"] >= 2.5 * 0.95);
        assert!(c.to_json().contains("\"theorem_tags\":[\"Thm 6.1\",\"Cor 6.7\"]"));

        let abs = scalar("abs", f64::abs, |x| x.signum());
        let (c, _) = ball_inclusion_certificate(&abs, &v(&[0.0]), 1.0, 4, 1).unwrap();
        assert_eq!(c.verdict, Verdict::Refuted);
        assert_eq!(c.witnesses["zero_index_point"], json!([0.0]));
    }

    #[test]
    fn submersion_examples() {
        let k: Vec<DVector<f64>> = (-10..=10).map(|i| v(&[i as f64])).collect();
        let c = submersion_check(&sin_id(), &k, 2, 1).unwrap();
        assert_eq!(c.verdict, Verdict::Certified);
        assert!(c.numbers["alpha_k"] >= 0.5 - 2e-2);

        let cube = scalar("cube", |x| x.powi(3), |x| 3.0 * x * x);
        let c = submersion_check(&cube, &[v(&[0.0]), v(&[1.0])], 2, 1).unwrap();
        assert_eq!(c.verdict, Verdict::Refuted);

        let c = submersion_check(&diag23(), &[v(&[1.0, 1.0]), v(&[-2.0, 0.5])], 1, 1).unwrap();
        assert_eq!(c.verdict, Verdict::Certified);
        assert_abs_diff_eq!(c.numbers["alpha_k"], 2.0, epsilon = 1e-6);
    }

    #[test]
    fn certificates_are_reproducible() {
        let (a, _) = ball_inclusion_certificate(&sin_id(), &v(&[0.0]), 1.0, 4, 5).unwrap();
        let (b, _) = ball_inclusion_certificate(&sin_id(), &v(&[0.0]), 1.0, 4, 5).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }
}
