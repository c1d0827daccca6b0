//! Local inversion with a trust region, global inversion by path lifting,
//! Lipschitz estimates and perturbation certificates.

use std::fmt::{self, Write as _};
use std::sync::Arc;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::certify::{Certificate, Verdict, Weight};
use crate::dense::{self, euclid};
use crate::pseudojac::{
    angle_of, clarke_sample, hull_min_constant_with, index_with, wrap_angle, Constant, HullOptions, IndexOptions,
    MapUnderStudy, TargetGeometry,
};
use crate::rng::{derive_seed, rng_from};
use crate::{Error, Norm, Real, Result};

/// Uniform sample from the `norm` ball of radius `radius` around `center`.
pub(crate) fn sample_in_norm_ball<T: Real, R: Rng>(rng: &mut R, norm: &Norm<T>, center: &DVector<T>, radius: T) -> DVector<T> {
    let n = center.len();
    let dir = norm.random_unit(rng);
    let u: f64 = rng.random();
    center + dir * (radius * T::c(u.powf(1.0 / n as f64)))
}

fn to_f64<T: Real>(v: &DVector<T>) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

/// Residual vector `y − f(x)` in target tangent coordinates.
fn tangent_residual<T: Real>(f: &MapUnderStudy<T>, fx: &DVector<T>, y: &DVector<T>) -> DVector<T> {
    match f.target() {
        TargetGeometry::Flat => y - fx,
        TargetGeometry::UnitCircle => DVector::from_element(1, wrap_angle(angle_of(y) - angle_of(fx))),
    }
}

/// Residual size used for convergence: the target distance, which for
/// circle targets is the arc length and so bounds the chord.
fn residual_size<T: Real>(f: &MapUnderStudy<T>, fx: &DVector<T>, y: &DVector<T>) -> T {
    f.target_distance(fx, y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalOptions<T: Real> {
    pub trust_radius: T,
    pub tol: T,
    pub max_iter: usize,
    /// Jacobians sampled per iterate; the one nearest the iterate is used.
    pub sample_count: usize,
    pub seed: u64,
}

impl<T: Real> Default for LocalOptions<T> {
    fn default() -> Self {
        Self { trust_radius: T::one(), tol: T::c(1e-10), max_iter: 60, sample_count: 3, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalSolution<T: Real> {
    pub x: DVector<T>,
    pub residual: T,
    pub iterations: usize,
}

/// Damped Newton on `f(x) = y` inside `B(x₀; trust_radius)`.
///
/// Each iterate uses the pseudo-Jacobian sample nearest to it, solves the
/// linearized system in the least-squares sense, and backtracks on the
/// residual; steps leaving the trust region are rejected like failed ones.
pub fn local_invert<T: Real>(f: &MapUnderStudy<T>, x0: &DVector<T>, y: &DVector<T>, opts: LocalOptions<T>) -> Result<LocalSolution<T>> {
    if x0.len() != f.dim_in() {
        return Err(Error::DimensionMismatch { expected: f.dim_in(), got: x0.len() });
    }
    if y.len() != f.dim_out() {
        return Err(Error::DimensionMismatch { expected: f.dim_out(), got: y.len() });
    }
    if !(opts.trust_radius > T::zero()) || !(opts.tol > T::zero()) {
        return Err(Error::InvalidArgument("trust radius and tolerance must be positive".into()));
    }
    let norm_in = f.norm_in();
    let mut x = x0.clone();
    let mut fx = f.eval(&x);
    let mut res = residual_size(f, &fx, y);
    for it in 0..opts.max_iter {
        if res <= opts.tol {
            return Ok(LocalSolution { x, residual: res, iterations: it });
        }
        let h = MapUnderStudy::default_fd_step(&x);
        let radius = T::c(1e-7) * T::one().max(euclid(&x));
        let set = clarke_sample(f, &x, radius, opts.sample_count.max(1), h, derive_seed(opts.seed, &[it as u64]))?;
        let op = set.nearest(&x);
        let r = tangent_residual(f, &fx, y);
        let dx = dense::pinv_solve(op.matrix(), &r, T::c(1e-12));
        if !dense::all_finite(dx.as_slice()) || euclid(&dx) == T::zero() {
            break;
        }
        let mut lambda = T::one();
        let mut accepted = false;
        for _ in 0..40 {
            let cand = &x + &dx * lambda;
            if norm_in.eval_unchecked(&(&cand - x0)) <= opts.trust_radius {
                let fc = f.eval(&cand);
                let rc = residual_size(f, &fc, y);
                if rc <= res * (T::one() - T::c(1e-4) * lambda) {
                    x = cand;
                    fx = fc;
                    res = rc;
                    accepted = true;
                    break;
                }
            }
            lambda *= T::c(0.5);
        }
        if !accepted {
            break;
        }
    }
    if res <= opts.tol {
        return Ok(LocalSolution { x, residual: res, iterations: opts.max_iter });
    }
    Err(Error::NoConvergence { iterations: opts.max_iter, best: to_f64(&x), residual: res.as_f64() })
}

/// A target path `[0, 1] → Y`.
#[derive(Debug, Clone, PartialEq)]
pub enum TargetPath<T: Real> {
    /// Straight segment in target coordinates.
    Segment { from: DVector<T>, to: DVector<T> },
    /// Arc on the unit circle starting at angle `start` and sweeping `sweep`
    /// radians (may wind several times).
    Arc { start: T, sweep: T },
}

impl<T: Real> TargetPath<T> {
    pub fn point(&self, t: T) -> DVector<T> {
        match self {
            Self::Segment { from, to } => from + (to - from) * t,
            Self::Arc { start, sweep } => {
                let a = *start + *sweep * t;
                DVector::from_vec(vec![a.cos(), a.sin()])
            }
        }
    }

    /// Path length in the map's target metric.
    pub fn length(&self, f: &MapUnderStudy<T>) -> T {
        match self {
            Self::Segment { from, to } => f.norm_out().eval_unchecked(&(to - from)),
            Self::Arc { sweep, .. } => sweep.abs(),
        }
    }

    /// Segment from `f(x₀)` to `y`, or the shorter arc for circle targets.
    pub fn default_for(f: &MapUnderStudy<T>, x0: &DVector<T>, y: &DVector<T>) -> Self {
        let y0 = f.eval(x0);
        match f.target() {
            TargetGeometry::Flat => Self::Segment { from: y0, to: y.clone() },
            TargetGeometry::UnitCircle => {
                let start = angle_of(&y0);
                Self::Arc { start, sweep: wrap_angle(angle_of(y) - start) }
            }
        }
    }
}

/// Record of a path lift; row `k` holds the accepted lift point at `t[k]`.
#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct LiftTrace {
    pub t: Vec<f64>,
    pub points: Vec<Vec<f64>>,
    pub steps: Vec<f64>,
    pub newton_iters: Vec<usize>,
    pub index_estimates: Vec<f64>,
    /// `‖f(q(t_k)) − p(t_k)‖` at each accepted point.
    pub path_residuals: Vec<f64>,
    /// Minimum of `Ĉ · ω(d(x*, q))` over the lift, when a weight was given.
    pub min_weight_product: Option<f64>,
}

impl LiftTrace {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn min_index(&self) -> f64 {
        self.index_estimates.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// CSV with header `t,x1,..,xn,step,newton_iters,index_estimate`.
    pub fn to_csv(&self) -> String {
        let n = self.points.first().map_or(0, Vec::len);
        let mut out = String::from("t");
        for i in 1..=n {
            let _ = write!(out, ",x{i}");
        }
        out.push_str(",step,newton_iters,index_estimate\n");
        for k in 0..self.t.len() {
            let _ = write!(out, "{}", self.t[k]);
            for v in &self.points[k] {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{},{},{}", self.steps[k], self.newton_iters[k], self.index_estimates[k]);
        }
        out
    }

    fn push(&mut self, t: f64, q: Vec<f64>, step: f64, iters: usize, index: f64, residual: f64) {
        self.t.push(t);
        self.points.push(q);
        self.steps.push(step);
        self.newton_iters.push(iters);
        self.index_estimates.push(index);
        self.path_residuals.push(residual);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftOptions<T: Real> {
    /// Largest ball radius probed around each lift point.
    pub trust_radius: T,
    pub step_safety: T,
    pub tol: T,
    /// Radii `trust_radius · 4⁻ᵏ`, `k < radius_levels`, are probed.
    pub radius_levels: usize,
    pub index_count: usize,
    pub hull: HullOptions,
    pub max_steps: usize,
    pub newton_max_iter: usize,
    pub weight: Option<Weight<T>>,
    /// Base point of the weight; defaults to `x₀`.
    pub x_star: Option<DVector<T>>,
    pub seed: u64,
}

impl<T: Real> Default for LiftOptions<T> {
    fn default() -> Self {
        Self {
            trust_radius: T::one(),
            step_safety: T::c(0.5),
            tol: T::c(1e-10),
            radius_levels: 10,
            index_count: 8,
            hull: HullOptions { restarts: 4, sphere_count: 32, outer_rounds: 4, weight_steps: 30 },
            max_steps: 100_000,
            newton_max_iter: 60,
            weight: None,
            x_star: None,
            seed: 0,
        }
    }
}

/// Smallest admissible parameter step before a lift is declared failed.
pub const MIN_PARAMETER_STEP: f64 = 1e-12;

/// Index probe at a lift point: for radii `R_k` the hull minimum `C_k` over
/// `B(q; R_k)`; the ball `B(f(q); C_k R_k)` is then covered by `f(B(q; R_k))`.
struct Probe<T: Real> {
    index: T,
    reach: T,
    radius: T,
}

fn probe<T: Real>(f: &MapUnderStudy<T>, q: &DVector<T>, opts: &LiftOptions<T>, seed: u64) -> Result<Probe<T>> {
    let h = MapUnderStudy::default_fd_step(q);
    let rows: Vec<Result<(T, T)>> = (0..opts.radius_levels.max(1))
        .into_par_iter()
        .map(|k| {
            let r = opts.trust_radius * T::c(0.25f64.powi(k as i32));
            let set = clarke_sample(f, q, r, opts.index_count, h, derive_seed(seed, &[k as u64, 0]))?;
            let hm = hull_min_constant_with(&set, Constant::Primal, derive_seed(seed, &[k as u64, 1]), opts.hull)?;
            Ok((r, hm.value))
        })
        .collect();
    let rows = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let mut best = Probe { index: T::zero(), reach: T::zero(), radius: opts.trust_radius };
    // nested balls: the true hull minimum cannot grow with the radius, so
    // sampled values are capped by those of smaller balls
    let mut cap = T::infinity();
    for &(r, c) in rows.iter().rev() {
        let c = c.min(cap);
        cap = c;
        best.index = best.index.max(c);
        if c * r > best.reach {
            best.reach = c * r;
            best.radius = r;
        }
    }
    Ok(best)
}

/// Jacobian samples along the segment `[a, b]` in the target tangent space.
const SEGMENT_SAMPLES: usize = 16;

/// Hull minimum of `C` over Jacobians sampled along `[a, b]` (endpoints
/// and evenly spaced interior points).
fn segment_hull_min<T: Real>(f: &MapUnderStudy<T>, a: &DVector<T>, b: &DVector<T>, opts: &LiftOptions<T>, seed: u64) -> Result<T> {
    let h = MapUnderStudy::default_fd_step(a);
    let m = SEGMENT_SAMPLES + 1;
    let mut points = Vec::with_capacity(m + 1);
    let mut ops = Vec::with_capacity(m + 1);
    for k in 0..=m {
        let p = a + (b - a) * (T::of_usize(k) / T::of_usize(m));
        let jac = f.tangent_jacobian(&p, h);
        if !dense::all_finite(jac.as_slice()) {
            return Err(Error::NonFiniteJacobian { point: to_f64(&p) });
        }
        ops.push(crate::LinOp::new(jac, f.norm_in().clone(), f.norm_out().clone())?);
        points.push(p);
    }
    let radius = f.norm_in().eval_unchecked(&(b - a));
    let set = crate::pseudojac::OperatorSet::new(a.clone(), radius, ops, points)?;
    Ok(hull_min_constant_with(&set, Constant::Primal, seed, opts.hull)?.value)
}

/// Invert `f` at `y` by lifting the default target path from `f(x₀)`.
pub fn global_invert<T: Real>(f: &MapUnderStudy<T>, x0: &DVector<T>, y: &DVector<T>, opts: &LiftOptions<T>) -> Result<(DVector<T>, LiftTrace)> {
    if y.len() != f.dim_out() {
        return Err(Error::DimensionMismatch { expected: f.dim_out(), got: y.len() });
    }
    let path = TargetPath::default_for(f, x0, y);
    global_invert_along(f, x0, &path, opts)
}

/// Lift `path` through `f` starting from `x₀` (which must lie over `path(0)`).
///
/// Each step probes the local index `Ĉ` at the current lift point, advances
/// the target by at most `step_safety · C_R · R` for the best probed ball
/// `B(q; R)`, and solves locally inside that ball. Failed solves halve the
/// parameter step; a step below [`MIN_PARAMETER_STEP`] is a lift failure.
/// A solved step is accepted only if the hull minimum along the lifted
/// segment, times its length, still covers `step_safety` times the target
/// increment, which rejects steps that pass through degenerate points.
pub fn global_invert_along<T: Real>(
    f: &MapUnderStudy<T>,
    x0: &DVector<T>,
    path: &TargetPath<T>,
    opts: &LiftOptions<T>,
) -> Result<(DVector<T>, LiftTrace)> {
    if x0.len() != f.dim_in() {
        return Err(Error::DimensionMismatch { expected: f.dim_in(), got: x0.len() });
    }
    if !(opts.step_safety > T::zero() && opts.step_safety < T::one()) {
        return Err(Error::InvalidArgument("step_safety must lie in (0, 1)".into()));
    }
    let x_star = opts.x_star.clone().unwrap_or_else(|| x0.clone());
    let length = path.length(f);
    let mut trace = LiftTrace::default();
    let mut q = x0.clone();
    let start_res = residual_size(f, &f.eval(&q), &path.point(T::zero()));
    if start_res > opts.tol.max(T::c(1e-8)) {
        return Err(Error::InvalidArgument(format!("x0 does not lie over the path start (residual {:e})", start_res.as_f64())));
    }
    let mut t = T::zero();
    let mut min_product: Option<T> = None;
    let mut step_no = 0u64;
    let mut pr = probe(f, &q, opts, derive_seed(opts.seed, &[0, 0]))?;
    let track = |pr: &Probe<T>, q: &DVector<T>, min_product: &mut Option<T>| {
        if let Some(w) = &opts.weight {
            let prod = pr.index * w.eval(f.norm_in().eval_unchecked(&(q - &x_star)));
            *min_product = Some(min_product.map_or(prod, |m: T| m.min(prod)));
        }
    };
    track(&pr, &q, &mut min_product);
    trace.push(0.0, to_f64(&q), 0.0, 0, pr.index.as_f64(), start_res.as_f64());
    let min_dt = T::c(MIN_PARAMETER_STEP);
    while t < T::one() {
        if trace.len() > opts.max_steps {
            trace.min_weight_product = min_product.map(|m| m.as_f64());
            return Err(Error::LiftFailure { t: t.as_f64(), trace: Box::new(trace) });
        }
        let mut dt = if length > T::zero() { (opts.step_safety * pr.reach / length).min(T::one() - t) } else { T::one() - t };
        let mut accepted = None;
        let mut attempt = 0u64;
        while dt >= min_dt || (dt > T::zero() && t + dt >= T::one()) {
            // a remainder below the minimum step is roundoff: finish the path
            let t_new = if t + dt >= T::one() - min_dt { T::one() } else { t + dt };
            let target = path.point(t_new);
            let lo = LocalOptions {
                trust_radius: pr.radius,
                tol: opts.tol,
                max_iter: opts.newton_max_iter,
                sample_count: 3,
                seed: derive_seed(opts.seed, &[step_no, attempt, 1]),
            };
            if let Ok(sol) = local_invert(f, &q, &target, lo) {
                let dp = f.target_distance(&path.point(t), &target);
                let dq = f.norm_in().eval_unchecked(&(&sol.x - &q));
                let c = segment_hull_min(f, &q, &sol.x, opts, derive_seed(opts.seed, &[step_no, attempt, 2]))?;
                let roundoff = t_new == T::one() && dp <= opts.tol;
                if roundoff || c * dq >= opts.step_safety * dp {
                    accepted = Some((t_new, sol));
                    break;
                }
            }
            dt *= T::c(0.5);
            attempt += 1;
        }
        let Some((t_new, sol)) = accepted else {
            trace.min_weight_product = min_product.map(|m| m.as_f64());
            return Err(Error::LiftFailure { t: t.as_f64(), trace: Box::new(trace) });
        };
        step_no += 1;
        let step = t_new - t;
        t = t_new;
        q = sol.x;
        pr = probe(f, &q, opts, derive_seed(opts.seed, &[step_no, 0]))?;
        track(&pr, &q, &mut min_product);
        trace.push(t.as_f64(), to_f64(&q), step.as_f64(), sol.iterations, pr.index.as_f64(), sol.residual.as_f64());
    }
    trace.min_weight_product = min_product.map(|m| m.as_f64());
    Ok((q, trace))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipEstimate<T: Real> {
    /// Minimum over the schedule of the per-radius maxima; an under-estimate
    /// of the local Lipschitz constant.
    pub value: T,
    pub table: Vec<(T, T)>,
}

/// `lip g(x) ≈ inf_R sup { d(g(u), g(u')) / ‖u − u'‖ : u, u' ∈ B(x; R) }`
/// from `pair_count` sampled pairs per radius.
pub fn lip_estimate<T: Real>(g: &MapUnderStudy<T>, x: &DVector<T>, schedule: &[T], pair_count: usize, seed: u64) -> Result<LipEstimate<T>> {
    crate::pseudojac::validate_schedule(schedule)?;
    if pair_count < 2 {
        return Err(Error::InvalidArgument("pair_count must be at least 2".into()));
    }
    let norm = g.norm_in();
    let table: Vec<(T, T)> = schedule
        .par_iter()
        .enumerate()
        .map(|(k, &r)| {
            let mut rng = rng_from(derive_seed(seed, &[k as u64]));
            let mut best = T::zero();
            for _ in 0..pair_count {
                let u = sample_in_norm_ball(&mut rng, norm, x, r);
                let v = sample_in_norm_ball(&mut rng, norm, x, r);
                let d = norm.eval_unchecked(&(&u - &v));
                if d > T::zero() {
                    best = best.max(g.target_distance(&g.eval(&u), &g.eval(&v)) / d);
                }
            }
            (r, best)
        })
        .collect();
    let value = table.iter().map(|&(_, v)| v).fold(T::infinity(), T::min);
    Ok(LipEstimate { value, table })
}

/// Largest radius of `schedule` on which the sampled injectivity hull
/// minimum is at least `alpha`: a neighborhood where `f` separates points
/// at rate `alpha`.
pub fn injectivity_radius<T: Real>(
    f: &MapUnderStudy<T>,
    x: &DVector<T>,
    alpha: T,
    schedule: &[T],
    count: usize,
    seed: u64,
) -> Result<Option<T>> {
    let est = index_with(f, x, schedule, count, seed, Constant::Dual, IndexOptions::default())?;
    Ok(est.table.iter().filter(|row| row.value >= alpha).map(|row| row.radius).fold(None, |acc: Option<T>, r| {
        Some(acc.map_or(r, |a| a.max(r)))
    }))
}

/// Smallest sampled ratio `d(f(u), f(u')) / ‖u − u'‖` over pairs in `B(x; radius)`.
pub fn injectivity_margin<T: Real>(f: &MapUnderStudy<T>, x: &DVector<T>, radius: T, pairs: usize, seed: u64) -> T {
    let norm = f.norm_in();
    let mut rng = rng_from(seed);
    let mut worst = T::infinity();
    for _ in 0..pairs {
        let u = sample_in_norm_ball(&mut rng, norm, x, radius);
        let v = sample_in_norm_ball(&mut rng, norm, x, radius);
        let d = norm.eval_unchecked(&(&u - &v));
        if d > T::zero() {
            worst = worst.min(f.target_distance(&f.eval(&u), &f.eval(&v)) / d);
        }
    }
    worst
}

pub type CombineFn<T> = Arc<dyn Fn(&DVector<T>, &DVector<T>) -> DVector<T> + Send + Sync>;

/// Binary operation `σ(y, z)` used to combine a map with a perturbation.
#[derive(Clone)]
pub struct Combiner<T: Real> {
    name: String,
    sigma: CombineFn<T>,
}

impl<T: Real> fmt::Debug for Combiner<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Combiner").field("name", &self.name).finish()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombinerReport {
    pub samples: usize,
    pub max_symmetry_error: f64,
    pub max_isometry_rel_error: f64,
    pub symmetric: bool,
    pub local_isometry: bool,
}

impl CombinerReport {
    pub fn passed(&self) -> bool {
        self.symmetric && self.local_isometry
    }
}

impl<T: Real> Combiner<T> {
    pub fn new(name: impl Into<String>, sigma: impl Fn(&DVector<T>, &DVector<T>) -> DVector<T> + Send + Sync + 'static) -> Self {
        Self { name: name.into(), sigma: Arc::new(sigma) }
    }

    /// `σ(y, z) = y + z`.
    pub fn add() -> Self {
        Self::new("add", |y, z| y + z)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn apply(&self, y: &DVector<T>, z: &DVector<T>) -> DVector<T> {
        (self.sigma)(y, z)
    }

    /// Symmetry (absolute 1e−10) and local isometry in the first argument
    /// (relative 1e−6) on samples around `center`.
    pub fn check(&self, center: &DVector<T>, norm: &Norm<T>, samples: usize, seed: u64) -> CombinerReport {
        let mut rng = rng_from(seed);
        let mut sym = 0.0f64;
        let mut iso = 0.0f64;
        for _ in 0..samples {
            let y = sample_in_norm_ball(&mut rng, norm, center, T::one());
            let z = sample_in_norm_ball(&mut rng, norm, center, T::one());
            sym = sym.max(norm.eval_unchecked(&(self.apply(&y, &z) - self.apply(&z, &y))).as_f64());
            let y2 = sample_in_norm_ball(&mut rng, norm, &y, T::c(1e-2));
            let d = norm.eval_unchecked(&(&y - &y2));
            if d > T::zero() {
                let e = norm.eval_unchecked(&(self.apply(&y, &z) - self.apply(&y2, &z)));
                iso = iso.max(((e - d) / d).abs().as_f64());
            }
        }
        CombinerReport {
            samples,
            max_symmetry_error: sym,
            max_isometry_rel_error: iso,
            symmetric: sym <= 1e-10,
            local_isometry: iso <= 1e-6,
        }
    }
}

/// `F(x) = σ(f(x), g(x))` with finite-difference Jacobian.
pub fn combine_maps<T: Real>(f: &MapUnderStudy<T>, g: &MapUnderStudy<T>, sigma: &Combiner<T>) -> Result<MapUnderStudy<T>> {
    if f.dim_in() != g.dim_in() || f.dim_out() != g.dim_out() {
        return Err(Error::DimensionMismatch { expected: f.dim_out(), got: g.dim_out() });
    }
    let (f2, g2, s2) = (f.clone(), g.clone(), sigma.clone());
    MapUnderStudy::new(
        format!("{}({},{})", sigma.name(), f.name(), g.name()),
        f.dim_in(),
        f.dim_out(),
        move |x: &DVector<T>| s2.apply(&f2.eval(x), &g2.eval(x)),
    )
    .with_norms(f.norm_in().clone(), f.norm_out().clone())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PerturbationOptions<T: Real> {
    /// Distances from `x*` at which points are sampled.
    pub sample_radii: Vec<T>,
    pub points_per_radius: usize,
    pub index_schedule: Vec<T>,
    pub index_count: usize,
    pub lip_schedule: Vec<T>,
    pub lip_pairs: usize,
    /// Relative inflation of the Lipschitz estimate.
    pub margin_guard: T,
    /// Radii `r` whose balls `B(F(x*); ϱ(r))` are spot-checked.
    pub check_radii: Vec<T>,
    pub check_targets: usize,
    pub tol: T,
    pub lift: LiftOptions<T>,
}

impl<T: Real> Default for PerturbationOptions<T> {
    fn default() -> Self {
        Self {
            sample_radii: vec![T::c(0.5), T::one(), T::c(2.0), T::c(4.0)],
            points_per_radius: 8,
            index_schedule: crate::pseudojac::default_schedule(),
            index_count: 16,
            lip_schedule: vec![T::c(1e-2), T::c(1e-3)],
            lip_pairs: 64,
            margin_guard: T::c(0.1),
            check_radii: vec![T::one()],
            check_targets: 12,
            tol: T::c(1e-10),
            lift: LiftOptions::default(),
        }
    }
}

/// Points `x*` plus, for each radius, the norm-sphere directions scaled
/// to that radius (basis directions first).
pub(crate) fn shell_points<T: Real>(norm: &Norm<T>, center: &DVector<T>, radii: &[T], per_radius: usize, seed: u64) -> Vec<DVector<T>> {
    let mut pts = vec![center.clone()];
    for (k, &r) in radii.iter().enumerate() {
        for d in norm.sample_unit_sphere(per_radius.max(1), derive_seed(seed, &[k as u64])) {
            pts.push(center + d * r);
        }
    }
    pts
}

/// Point, index, Lipschitz bound of the perturbation, required margin.
type SampleRow<T> = (DVector<T>, T, T, T);

/// Certificate for `F = σ(f, g)` from the pointwise inequality
/// `C(Jf(x)) − lip g(x) ≥ 1/ω(d(x, x*))`.
///
/// The Lipschitz estimate is inflated by `margin_guard`, and capped by the
/// perturbation's declared Lipschitz bound when it has one. When the
/// inequality holds at every sample, `F` is inverted on sampled targets of
/// `B(F(x*); ϱ(r))` with `ϱ(r) = ∫₀ʳ 1/ω`, and the inverse Lipschitz bound
/// is checked on all target pairs.
pub fn perturbation_certificate<T: Real>(
    f: &MapUnderStudy<T>,
    g: &MapUnderStudy<T>,
    sigma: &Combiner<T>,
    omega: &Weight<T>,
    x_star: &DVector<T>,
    opts: &PerturbationOptions<T>,
    seed: u64,
) -> Result<Certificate> {
    let mut cert = Certificate::new("perturbation", &format!("{}({}, {})", sigma.name(), f.name(), g.name()));
    cert.theorem_tags.push("Thm 7.1".into());
    if sigma.name() == "add" {
        cert.theorem_tags.push("Cor 7.2".into());
    }
    cert.provenance("seed", json!(seed));
    cert.provenance("weight", json!(omega.to_string()));
    cert.provenance("margin_guard", json!(opts.margin_guard.as_f64()));
    cert.provenance("index_schedule", json!(opts.index_schedule.iter().map(|r| r.as_f64()).collect::<Vec<_>>()));
    cert.assert_hypothesis("X complete (registry flag)");
    cert.assert_hypothesis("Y simply connected (registry flag)");

    let y_star = f.eval(x_star);
    let report = sigma.check(&y_star, f.norm_out(), 64, derive_seed(seed, &[0]));
    cert.witness("combiner_report", json!(report));
    if !report.symmetric {
        cert.verdict = Verdict::Refuted;
        cert.note("combiner fails the symmetry hypothesis σ(y,z) = σ(z,y)");
        return Ok(cert);
    }
    if !report.local_isometry {
        cert.verdict = Verdict::Refuted;
        cert.note("combiner fails the local isometry hypothesis");
        return Ok(cert);
    }
    cert.check_hypothesis("combiner symmetry on samples");
    cert.check_hypothesis("combiner local isometry on samples");

    let points = shell_points(f.norm_in(), x_star, &opts.sample_radii, opts.points_per_radius, derive_seed(seed, &[1]));
    let guard = T::one() + opts.margin_guard;
    let rows: Vec<Result<SampleRow<T>>> = points
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let c = index_with(f, x, &opts.index_schedule, opts.index_count, derive_seed(seed, &[2, i as u64]), Constant::Primal, IndexOptions::default())?.value;
            let est = lip_estimate(g, x, &opts.lip_schedule, opts.lip_pairs, derive_seed(seed, &[3, i as u64]))?.value * guard;
            let lip = g.lipschitz_hint().map_or(est, |h| est.min(h));
            let need = omega.eval(f.norm_in().eval_unchecked(&(x - x_star))).recip();
            Ok((x.clone(), c, lip, need))
        })
        .collect();
    let mut min_margin = T::infinity();
    let mut worst: Option<SampleRow<T>> = None;
    for row in rows {
        let (x, c, lip, need) = row?;
        let margin = c - lip - need;
        if margin < min_margin {
            min_margin = margin;
            worst = Some((x, c, lip, need));
        }
    }
    cert.number("sampled_points", T::of_usize(points.len()).as_f64());
    cert.number("min_margin", min_margin.as_f64());
    let slack = T::c(1e-9);
    if let Some((x, c, lip, need)) = &worst {
        cert.number("index_at_worst", c.as_f64());
        cert.number("lip_bound_at_worst", lip.as_f64());
        cert.number("inverse_weight_at_worst", need.as_f64());
        if min_margin < -slack {
            cert.verdict = Verdict::Refuted;
            cert.witness("violating_point", json!(to_f64(x)));
            cert.note("C(Jf(x)) − lip g(x) < 1/ω(d(x, x*)) at the witness point");
            return Ok(cert);
        }
    }
    cert.check_hypothesis("C(Jf(x)) − lip g(x) ≥ 1/ω(d(x,x*)) on sampled points");

    let big_f = combine_maps(f, g, sigma)?;
    let fy_star = big_f.eval(x_star);
    let mut verdict = Verdict::Certified;
    for (j, &r) in opts.check_radii.iter().enumerate() {
        let rho = omega.integral_reciprocal(r);
        let targets = shell_points(
            big_f.norm_out(),
            &fy_star,
            &[rho * T::c(0.98), rho * T::c(0.5), rho * T::c(0.1)],
            opts.check_targets.div_ceil(3),
            derive_seed(seed, &[4, j as u64]),
        );
        let solved: Vec<Result<(DVector<T>, LiftTrace)>> = targets
            .par_iter()
            .enumerate()
            .map(|(i, y)| {
                let lo = LiftOptions { seed: derive_seed(seed, &[5, j as u64, i as u64]), ..opts.lift.clone() };
                global_invert(&big_f, x_star, y, &lo)
            })
            .collect();
        let mut xs = Vec::with_capacity(targets.len());
        for (y, s) in targets.iter().zip(solved) {
            match s {
                Ok((x, _)) => xs.push(x),
                Err(_) => {
                    verdict = Verdict::Inconclusive;
                    cert.witness(&format!("unsolved_target_r{}", r.as_f64()), json!(to_f64(y)));
                    cert.note("a spot-check inversion failed; solver failure is not a counterexample");
                }
            }
        }
        if xs.len() != targets.len() {
            continue;
        }
        let bound = omega.eval(r);
        let mut max_ratio = T::zero();
        let mut max_dist = T::zero();
        for a in 0..xs.len() {
            max_dist = max_dist.max(big_f.norm_in().eval_unchecked(&(&xs[a] - x_star)));
            for b in (a + 1)..xs.len() {
                let dy = big_f.norm_out().eval_unchecked(&(&targets[a] - &targets[b]));
                if dy > T::c(1e-6) {
                    max_ratio = max_ratio.max(big_f.norm_in().eval_unchecked(&(&xs[a] - &xs[b])) / dy);
                }
            }
        }
        let key = r.as_f64();
        cert.number(&format!("rho_r{key}"), rho.as_f64());
        cert.number(&format!("max_inverse_lip_ratio_r{key}"), max_ratio.as_f64());
        cert.number(&format!("max_preimage_distance_r{key}"), max_dist.as_f64());
        if max_ratio > bound * T::c(1.0 + 1e-6) || max_dist > r * T::c(1.0 + 1e-9) {
            cert.verdict = Verdict::Refuted;
            cert.note("sampled inverse pairs violate lip F⁻¹ ≤ ω or leave B(x*, r)");
            return Ok(cert);
        }
    }
    if verdict == Verdict::Certified {
        cert.check_hypothesis("global inversion spot checks and inverse Lipschitz bound on sampled pairs");
    }
    cert.verdict = verdict;
    Ok(cert)
}
