//! Pseudo-Jacobian sets: Clarke-style sampling, directional verification,
//! and the regularity / injectivity indices over convex hulls.
//!
//! A pseudo-Jacobian at `x` is a set of operators whose support functionals
//! dominate the upper Dini derivatives of every scalarization `⟨y*, f⟩`.
//! Here it is represented by a finite sample of Jacobians taken in a ball
//! around `x`; its convex hull is implied and is compact automatically.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dense::{self, dot, euclid, max_abs};
use crate::linop::{min_ratio, DescentOptions, LinOpRecord};
use crate::rng::{derive_seed, gaussian_vector, rng_from};
use crate::{Error, LinOp, Norm, Real, Result};

pub type VecFn<T> = Arc<dyn Fn(&DVector<T>) -> DVector<T> + Send + Sync>;
pub type MatFn<T> = Arc<dyn Fn(&DVector<T>) -> DMatrix<T> + Send + Sync>;

/// Geometry of the target space as seen by the map's output coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TargetGeometry {
    /// Outputs are points of a normed space.
    Flat,
    /// Outputs are points of the unit circle in ℝ², with arc-length metric;
    /// Jacobians are read in the angle chart at the image point.
    UnitCircle,
}

/// A locally Lipschitz map `ℝⁿ → ℝᵐ` (or into the unit circle) together
/// with the norms its indices are measured in.
#[derive(Clone)]
pub struct MapUnderStudy<T: Real> {
    name: String,
    dim_in: usize,
    dim_out: usize,
    eval: VecFn<T>,
    jacobian: Option<MatFn<T>>,
    lipschitz_hint: Option<T>,
    norm_in: Norm<T>,
    norm_out: Norm<T>,
    target: TargetGeometry,
}

impl<T: Real> fmt::Debug for MapUnderStudy<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MapUnderStudy")
            .field("name", &self.name)
            .field("dim_in", &self.dim_in)
            .field("dim_out", &self.dim_out)
            .field("analytic_jacobian", &self.jacobian.is_some())
            .field("norm_in", &self.norm_in.to_string())
            .field("norm_out", &self.norm_out.to_string())
            .field("target", &self.target)
            .finish()
    }
}

impl<T: Real> MapUnderStudy<T> {
    /// Map between Euclidean spaces, Jacobian by finite differences.
    pub fn new(
        name: impl Into<String>,
        dim_in: usize,
        dim_out: usize,
        eval: impl Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim_in,
            dim_out,
            eval: Arc::new(eval),
            jacobian: None,
            lipschitz_hint: None,
            norm_in: Norm::l2(dim_in),
            norm_out: Norm::l2(dim_out),
            target: TargetGeometry::Flat,
        }
    }

    pub fn with_jacobian(mut self, jac: impl Fn(&DVector<T>) -> DMatrix<T> + Send + Sync + 'static) -> Self {
        self.jacobian = Some(Arc::new(jac));
        self
    }

    pub fn without_jacobian(mut self) -> Self {
        self.jacobian = None;
        self
    }

    pub fn with_lipschitz_hint(mut self, l: T) -> Self {
        self.lipschitz_hint = Some(l);
        self
    }

    /// Replace the norms; dimensions must match the tangent dimensions.
    pub fn with_norms(mut self, norm_in: Norm<T>, norm_out: Norm<T>) -> Result<Self> {
        if norm_in.dim() != self.dim_in {
            return Err(Error::DimensionMismatch { expected: self.dim_in, got: norm_in.dim() });
        }
        if norm_out.dim() != self.tangent_dim_out() {
            return Err(Error::DimensionMismatch { expected: self.tangent_dim_out(), got: norm_out.dim() });
        }
        self.norm_in = norm_in;
        self.norm_out = norm_out;
        Ok(self)
    }

    /// Declare the outputs to live on the unit circle in ℝ².
    pub fn onto_circle(mut self) -> Self {
        assert_eq!(self.dim_out, 2, "circle-valued maps have two output coordinates");
        self.target = TargetGeometry::UnitCircle;
        self.norm_out = Norm::l2(1);
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    /// Dimension of the target tangent space (1 for circle-valued maps).
    pub fn tangent_dim_out(&self) -> usize {
        match self.target {
            TargetGeometry::Flat => self.dim_out,
            TargetGeometry::UnitCircle => 1,
        }
    }

    pub fn is_square(&self) -> bool {
        self.dim_in == self.tangent_dim_out()
    }

    pub fn norm_in(&self) -> &Norm<T> {
        &self.norm_in
    }

    pub fn norm_out(&self) -> &Norm<T> {
        &self.norm_out
    }

    pub fn target(&self) -> TargetGeometry {
        self.target
    }

    pub fn lipschitz_hint(&self) -> Option<T> {
        self.lipschitz_hint
    }

    pub fn has_jacobian(&self) -> bool {
        self.jacobian.is_some()
    }

    pub fn eval(&self, x: &DVector<T>) -> DVector<T> {
        (self.eval)(x)
    }

    /// Analytic Jacobian when available, else central differences.
    pub fn jacobian_at(&self, x: &DVector<T>, fd_step: T) -> DMatrix<T> {
        match &self.jacobian {
            Some(j) => j(x),
            None => central_difference(&*self.eval, x, self.dim_out, fd_step),
        }
    }

    /// Jacobian read in the target tangent space at `f(x)`.
    pub fn tangent_jacobian(&self, x: &DVector<T>, fd_step: T) -> DMatrix<T> {
        let j = self.jacobian_at(x, fd_step);
        match self.target {
            TargetGeometry::Flat => j,
            TargetGeometry::UnitCircle => {
                let y = self.eval(x);
                let r = euclid(&y);
                // angle derivative: (−y₂, y₁)/|y|² · J
                let b = DMatrix::from_row_slice(1, 2, &[-y[1] / (r * r), y[0] / (r * r)]);
                b * j
            }
        }
    }

    /// Distance between two target points.
    pub fn target_distance(&self, a: &DVector<T>, b: &DVector<T>) -> T {
        match self.target {
            TargetGeometry::Flat => self.norm_out.eval_unchecked(&(a - b)),
            TargetGeometry::UnitCircle => wrap_angle(angle_of(b) - angle_of(a)).abs(),
        }
    }

    /// Move from target point `y` along tangent vector `v`.
    pub fn target_step(&self, y: &DVector<T>, v: &DVector<T>) -> DVector<T> {
        match self.target {
            TargetGeometry::Flat => y + v,
            TargetGeometry::UnitCircle => {
                let a = angle_of(y) + v[0];
                DVector::from_vec(vec![a.cos(), a.sin()])
            }
        }
    }

    /// Residual used by solvers: the target distance, or Euclidean distance
    /// in output coordinates for circle targets.
    pub fn residual(&self, x: &DVector<T>, y: &DVector<T>) -> T {
        match self.target {
            TargetGeometry::Flat => self.norm_out.eval_unchecked(&(self.eval(x) - y)),
            TargetGeometry::UnitCircle => euclid(&(self.eval(x) - y)),
        }
    }

    /// Default finite-difference step `∛ε · max(1, |x|)`.
    pub fn default_fd_step(x: &DVector<T>) -> T {
        T::epsilon().cbrt() * T::one().max(euclid(x))
    }
}

pub(crate) fn angle_of<T: Real>(y: &DVector<T>) -> T {
    y[1].atan2(y[0])
}

/// Wrap an angle into `(−π, π]`.
pub(crate) fn wrap_angle<T: Real>(a: T) -> T {
    let two_pi = T::PI() + T::PI();
    let mut w = a - two_pi * ((a + T::PI()) / two_pi).floor();
    if w <= -T::PI() {
        w += two_pi;
    }
    w
}

pub fn central_difference<T: Real>(
    f: &(dyn Fn(&DVector<T>) -> DVector<T> + Send + Sync),
    x: &DVector<T>,
    dim_out: usize,
    h: T,
) -> DMatrix<T> {
    let n = x.len();
    let mut j = DMatrix::zeros(dim_out, n);
    let two = T::c(2.0);
    for k in 0..n {
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[k] += h;
        xm[k] -= h;
        let col = (f(&xp) - f(&xm)) / (two * h);
        j.set_column(k, &col);
    }
    j
}

/// Finite sample of operators representing the pseudo-Jacobian over
/// `B(center; radius)`, with the sample points kept for audit.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorSet<T: Real> {
    center: DVector<T>,
    radius: T,
    ops: Vec<LinOp<T>>,
    points: Vec<DVector<T>>,
}

impl<T: Real> OperatorSet<T> {
    pub fn new(center: DVector<T>, radius: T, ops: Vec<LinOp<T>>, points: Vec<DVector<T>>) -> Result<Self> {
        let first = ops.first().ok_or(Error::EmptySet)?;
        if !(radius >= T::zero()) {
            return Err(Error::InvalidArgument("radius must be nonnegative".into()));
        }
        for op in &ops {
            if op.norm_in() != first.norm_in() || op.norm_out() != first.norm_out() {
                return Err(Error::InvalidArgument("operators must share norms".into()));
            }
        }
        if points.len() != ops.len() {
            return Err(Error::InvalidArgument("one sample point per operator".into()));
        }
        Ok(Self { center, radius, ops, points })
    }

    /// Set made of explicit operators, all attributed to the center.
    pub fn from_ops(center: DVector<T>, ops: Vec<LinOp<T>>) -> Result<Self> {
        let points = vec![center.clone(); ops.len()];
        Self::new(center, T::zero(), ops, points)
    }

    pub fn center(&self) -> &DVector<T> {
        &self.center
    }

    pub fn radius(&self) -> T {
        self.radius
    }

    pub fn ops(&self) -> &[LinOp<T>] {
        &self.ops
    }

    pub fn points(&self) -> &[DVector<T>] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Operator at a hull point.
    pub fn combine(&self, w: &HullPoint<T>) -> LinOp<T> {
        let first = &self.ops[0];
        let mut m = DMatrix::zeros(first.dim_out(), first.dim_in());
        for (op, &l) in self.ops.iter().zip(&w.weights) {
            m += op.matrix() * l;
        }
        first.with_matrix(m).expect("shared dimensions")
    }

    /// Operator sampled nearest to `x` (Euclidean distance in coordinates).
    pub fn nearest(&self, x: &DVector<T>) -> &LinOp<T> {
        let k = self
            .points
            .iter()
            .map(|p| euclid(&(p - x)))
            .enumerate()
            .min_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(k, _)| k)
            .unwrap_or(0);
        &self.ops[k]
    }

    pub fn to_record(&self) -> OperatorSetRecord {
        OperatorSetRecord {
            center: self.center.iter().map(|x| x.as_f64()).collect(),
            radius: self.radius.as_f64(),
            points: self.points.iter().map(|p| p.iter().map(|x| x.as_f64()).collect()).collect(),
            ops: self.ops.iter().map(LinOpRecord::from).collect(),
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct OperatorSetRecord {
    pub center: Vec<f64>,
    pub radius: f64,
    pub points: Vec<Vec<f64>>,
    pub ops: Vec<LinOpRecord>,
}

/// Convex-combination weights over the operators of a set.
#[derive(Debug, Clone, PartialEq)]
pub struct HullPoint<T: Real> {
    pub weights: Vec<T>,
}

impl<T: Real> HullPoint<T> {
    pub fn new(weights: Vec<T>) -> Result<Self> {
        let sum = weights.iter().fold(T::zero(), |a, &w| a + w);
        if weights.is_empty() || weights.iter().any(|w| *w < T::zero()) || (sum - T::one()).abs() > T::c(1e-12) {
            return Err(Error::InvalidArgument("hull weights must be nonnegative and sum to 1".into()));
        }
        Ok(Self { weights })
    }

    pub fn vertex(len: usize, k: usize) -> Self {
        let mut weights = vec![T::zero(); len];
        weights[k] = T::one();
        Self { weights }
    }

    /// Rescale positive weights onto the simplex.
    pub fn normalized(mut weights: Vec<T>) -> Self {
        let sum = weights.iter().fold(T::zero(), |a, &w| a + w);
        for w in &mut weights {
            *w /= sum;
        }
        Self { weights }
    }
}

/// Sample the pseudo-Jacobian of `f` over `B(x; radius)`.
///
/// Points are drawn in the `norm_in` ball and jittered by `radius · 1e−6`
/// to avoid measure-zero kink sets; each parallel sample derives its own
/// seed so the result depends only on `seed`.
pub fn clarke_sample<T: Real>(
    f: &MapUnderStudy<T>,
    x: &DVector<T>,
    radius: T,
    count: usize,
    fd_step: T,
    seed: u64,
) -> Result<OperatorSet<T>> {
    if x.len() != f.dim_in {
        return Err(Error::DimensionMismatch { expected: f.dim_in, got: x.len() });
    }
    if !(radius > T::zero()) {
        return Err(Error::InvalidArgument("sampling radius must be positive".into()));
    }
    if count == 0 {
        return Err(Error::InvalidArgument("sample count must be positive".into()));
    }
    let n = f.dim_in;
    let samples: Vec<Result<(DVector<T>, DMatrix<T>)>> = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = rng_from(derive_seed(seed, &[i as u64]));
            let dir = f.norm_in.random_unit(&mut rng);
            let u: f64 = rng.random();
            let r = radius * T::c(u.powf(1.0 / n as f64));
            let jitter_dir: DVector<T> = gaussian_vector(&mut rng, n);
            let jn = euclid(&jitter_dir);
            let jitter = if jn > T::zero() { jitter_dir * (radius * T::c(1e-6) / jn) } else { DVector::zeros(n) };
            let p = x + dir * r + jitter;
            let jac = f.tangent_jacobian(&p, fd_step);
            if !dense::all_finite(jac.as_slice()) {
                return Err(Error::NonFiniteJacobian { point: p.iter().map(|v| v.as_f64()).collect() });
            }
            Ok((p, jac))
        })
        .collect();
    let mut ops = Vec::with_capacity(count);
    let mut points = Vec::with_capacity(count);
    for s in samples {
        let (p, jac) = s?;
        ops.push(LinOp::new(jac, f.norm_in.clone(), f.norm_out.clone())?);
        points.push(p);
    }
    OperatorSet::new(x.clone(), radius, ops, points)
}

/// One failed comparison in a pseudo-Jacobian check.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct DiniViolation {
    pub direction: Vec<f64>,
    pub functional: Vec<f64>,
    pub dini_estimate: f64,
    pub support: f64,
    pub margin: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PseudoJacobianReport {
    pub pairs_checked: usize,
    /// Smallest `support − dini` over all pairs.
    pub min_margin: f64,
    pub tolerance: f64,
    pub violations: Vec<DiniViolation>,
}

impl PseudoJacobianReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Default Dini steps `{1e−2, …, 1e−7} · scale`.
pub fn default_dini_steps<T: Real>(scale: T) -> Vec<T> {
    (2..=7).map(|k| T::c(10f64.powi(-k)) * scale).collect()
}

/// Default tolerance on the pseudo-Jacobian margin.
pub const DINI_TOL: f64 = 1e-4;

/// Compare upper Dini derivatives of `⟨y*, f⟩` at `x` against the support
/// function of the set: `(y*∘f)'₊(x; v) ≤ sup_T ⟨y*, T v⟩`.
///
/// The Dini derivative is estimated by the largest difference quotient over
/// `steps`, a lower estimate of the lim sup, so reported violations are
/// genuine up to rounding. The support over the hull is attained at the
/// sampled operators.
pub fn check_pseudojacobian<T: Real>(
    f: &MapUnderStudy<T>,
    x: &DVector<T>,
    set: &OperatorSet<T>,
    dirs: &[DVector<T>],
    functionals: &[DVector<T>],
    steps: &[T],
) -> Result<PseudoJacobianReport> {
    check_pseudojacobian_with_tol(f, x, set, dirs, functionals, steps, T::c(DINI_TOL))
}

pub fn check_pseudojacobian_with_tol<T: Real>(
    f: &MapUnderStudy<T>,
    x: &DVector<T>,
    set: &OperatorSet<T>,
    dirs: &[DVector<T>],
    functionals: &[DVector<T>],
    steps: &[T],
    tol: T,
) -> Result<PseudoJacobianReport> {
    if dirs.is_empty() || functionals.is_empty() || steps.is_empty() {
        return Err(Error::InvalidArgument("directions, functionals and steps must be nonempty".into()));
    }
    if steps.iter().any(|s| !(*s > T::zero())) {
        return Err(Error::InvalidArgument("steps must be positive".into()));
    }
    let fx = f.eval(x);
    let mut violations = Vec::new();
    let mut min_margin = T::infinity();
    let mut pairs = 0;
    for v in dirs {
        let images: Vec<DVector<T>> = set.ops.iter().map(|op| op.matrix() * v).collect();
        let moved: Vec<(T, DVector<T>)> = steps.iter().map(|&t| (t, f.eval(&(x + v * t)))).collect();
        for ys in functionals {
            pairs += 1;
            let dini = moved
                .iter()
                .map(|(t, fxt)| (scalarize(f, ys, fxt, &fx)) / *t)
                .fold(T::neg_infinity(), T::max);
            let support = images.iter().map(|tv| dot(ys, tv)).fold(T::neg_infinity(), T::max);
            let margin = support - dini;
            min_margin = min_margin.min(margin);
            if margin < -tol {
                violations.push(DiniViolation {
                    direction: v.iter().map(|c| c.as_f64()).collect(),
                    functional: ys.iter().map(|c| c.as_f64()).collect(),
                    dini_estimate: dini.as_f64(),
                    support: support.as_f64(),
                    margin: margin.as_f64(),
                });
            }
        }
    }
    Ok(PseudoJacobianReport { pairs_checked: pairs, min_margin: min_margin.as_f64(), tolerance: tol.as_f64(), violations })
}

/// `⟨y*, f(x+tv)⟩ − ⟨y*, f(x)⟩`, read in the target tangent coordinates.
fn scalarize<T: Real>(f: &MapUnderStudy<T>, ys: &DVector<T>, fxt: &DVector<T>, fx: &DVector<T>) -> T {
    match f.target {
        TargetGeometry::Flat => dot(ys, &(fxt - fx)),
        TargetGeometry::UnitCircle => ys[0] * wrap_angle(angle_of(fxt) - angle_of(fx)),
    }
}

/// Which Banach constant to minimize over the hull.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Constant {
    /// `C(T)`: surjectivity.
    Primal,
    /// `C*(T)`: injectivity.
    Dual,
}

/// Options shared by the hull minimization and the index computations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HullOptions {
    pub restarts: usize,
    pub sphere_count: usize,
    pub outer_rounds: usize,
    pub weight_steps: usize,
}

impl Default for HullOptions {
    fn default() -> Self {
        Self { restarts: 20, sphere_count: 64, outer_rounds: 8, weight_steps: 60 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HullMin<T: Real> {
    pub value: T,
    pub witness: HullPoint<T>,
}

/// `inf { C(T) : T ∈ co S }` (or `C*`).
///
/// Exact for 1×1 operators: the hull is an interval and the constant is
/// `|t|` rescaled by the two norms. Otherwise alternates between the sphere
/// minimizer of the current hull operator and exponentiated-gradient steps on
/// the simplex weights, from the vertices, the barycenter and random starts;
/// edges between the best vertices are searched directly.
pub fn hull_min_constant<T: Real>(set: &OperatorSet<T>, which: Constant, restarts: usize, seed: u64) -> Result<HullMin<T>> {
    hull_min_constant_with(set, which, seed, HullOptions { restarts, ..HullOptions::default() })
}

/// Vertices whose pairwise edges get their own starts.
const EDGE_VERTICES: usize = 4;

pub fn hull_min_constant_with<T: Real>(
    set: &OperatorSet<T>,
    which: Constant,
    seed: u64,
    opts: HullOptions,
) -> Result<HullMin<T>> {
    if set.ops.is_empty() {
        return Err(Error::EmptySet);
    }
    let first = &set.ops[0];
    if first.dim_in() == 1 && first.dim_out() == 1 {
        return Ok(hull_min_scalar(set));
    }
    let (dom, cod) = match which {
        Constant::Primal => (first.norm_out().dual(), first.norm_in().dual()),
        Constant::Dual => (first.norm_in().clone(), first.norm_out().clone()),
    };
    let mats: Vec<DMatrix<T>> = set
        .ops
        .iter()
        .map(|op| match which {
            Constant::Primal => op.matrix().transpose(),
            Constant::Dual => op.matrix().clone(),
        })
        .collect();
    let k = mats.len();
    let dopts = DescentOptions { restarts: 4, iterations: 50 };
    let mixed = |w: &[T]| {
        let mut m = DMatrix::zeros(mats[0].nrows(), mats[0].ncols());
        for (a, &l) in mats.iter().zip(w) {
            m += a * l;
        }
        m
    };

    let mut starts: Vec<Vec<T>> = (0..k).map(|i| HullPoint::vertex(k, i).weights).collect();
    // vertices are cheap to score; keep the best few plus the barycenter and random points
    let vertex_scores: Vec<T> = starts
        .par_iter()
        .map(|w| min_ratio(&mixed(w), &dom, &cod, opts.sphere_count, seed, dopts).value)
        .collect();
    let mut best = HullMin { value: T::infinity(), witness: HullPoint::vertex(k, 0) };
    for (i, &v) in vertex_scores.iter().enumerate() {
        if v < best.value {
            best = HullMin { value: v, witness: HullPoint::vertex(k, i) };
        }
    }
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| vertex_scores[a].partial_cmp(&vertex_scores[b]).unwrap_or(std::cmp::Ordering::Equal));
    let keep = opts.restarts.max(1).min(k);
    starts = order.iter().take(keep / 2 + 1).map(|&i| starts[i].clone()).collect();
    starts.push(vec![T::one() / T::of_usize(k); k]);
    let mut rng = rng_from(derive_seed(seed, &[0x6875_6c6c]));
    while starts.len() < opts.restarts.max(2) {
        let w: Vec<T> = (0..k).map(|_| T::c(-(rng.random::<f64>().max(1e-300)).ln())).collect();
        starts.push(HullPoint::normalized(w).weights);
    }

    let refined: Vec<HullMin<T>> = starts
        .into_par_iter()
        .enumerate()
        .map(|(s, w0)| {
            let seed_s = derive_seed(seed, &[s as u64]);
            refine_weights(&mats, &dom, &cod, w0, seed_s, opts, dopts)
        })
        .collect();
    // singular combinations of two operators sit on edges, where the
    // objective has a kink that weight steps approach only slowly
    let top = &order[..k.min(EDGE_VERTICES)];
    let pairs: Vec<(usize, usize)> = top.iter().enumerate().flat_map(|(a, &i)| top[a + 1..].iter().map(move |&j| (i, j))).collect();
    let edges: Vec<HullMin<T>> = pairs
        .par_iter()
        .map(|&(i, j)| edge_search(&mats[i], &mats[j], i, j, k, &dom, &cod, derive_seed(seed, &[0x65, i as u64, j as u64]), opts, dopts))
        .collect();
    for r in refined.into_iter().chain(edges) {
        if r.value < best.value {
            best = r;
        }
    }
    Ok(best)
}

/// Scan points per edge before golden-section refinement.
const EDGE_SCAN: usize = 32;

/// Minimize over the edge `(1 − s)A + sB`: dense scan, then golden-section
/// search in the bracket around the best scan point.
#[allow(clippy::too_many_arguments)]
fn edge_search<T: Real>(
    a: &DMatrix<T>,
    b: &DMatrix<T>,
    i: usize,
    j: usize,
    k: usize,
    dom: &Norm<T>,
    cod: &Norm<T>,
    seed: u64,
    opts: HullOptions,
    dopts: DescentOptions,
) -> HullMin<T> {
    let g = |s: T| min_ratio(&(a * (T::one() - s) + b * s), dom, cod, opts.sphere_count, seed, dopts).value;
    let n = T::of_usize(EDGE_SCAN);
    let vals: Vec<T> = (0..=EDGE_SCAN).map(|q| g(T::of_usize(q) / n)).collect();
    let q = (0..=EDGE_SCAN).fold(0, |m, q| if vals[q] < vals[m] { q } else { m });
    let (mut best_s, mut best_v) = (T::of_usize(q) / n, vals[q]);
    let mut lo = T::of_usize(q.saturating_sub(1)) / n;
    let mut hi = T::of_usize((q + 1).min(EDGE_SCAN)) / n;
    let ratio = T::c(0.5 * (5f64.sqrt() - 1.0));
    let mut x1 = hi - (hi - lo) * ratio;
    let mut x2 = lo + (hi - lo) * ratio;
    let (mut f1, mut f2) = (g(x1), g(x2));
    for _ in 0..60 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - (hi - lo) * ratio;
            f1 = g(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + (hi - lo) * ratio;
            f2 = g(x2);
        }
        for (x, f) in [(x1, f1), (x2, f2)] {
            if f < best_v {
                best_v = f;
                best_s = x;
            }
        }
    }
    let mut w = vec![T::zero(); k];
    w[i] = T::one() - best_s;
    w[j] = best_s;
    HullMin { value: best_v, witness: HullPoint { weights: w } }
}

fn hull_min_scalar<T: Real>(set: &OperatorSet<T>) -> HullMin<T> {
    let first = &set.ops[0];
    let one = DVector::from_element(1, T::one());
    let scale = first.norm_out().eval_unchecked(&one) / first.norm_in().eval_unchecked(&one);
    let vals: Vec<T> = set.ops.iter().map(|op| op.matrix()[(0, 0)]).collect();
    let k = vals.len();
    let (imin, imax) = vals.iter().enumerate().fold((0, 0), |(lo, hi), (i, &v)| {
        (if v < vals[lo] { i } else { lo }, if v > vals[hi] { i } else { hi })
    });
    let (a, b) = (vals[imin], vals[imax]);
    if a <= T::zero() && b >= T::zero() {
        let mut w = vec![T::zero(); k];
        if a == b {
            w[imin] = T::one();
        } else {
            // λa + (1−λ)b = 0
            let lam = b / (b - a);
            w[imin] += lam;
            w[imax] += T::one() - lam;
        }
        return HullMin { value: T::zero(), witness: HullPoint { weights: w } };
    }
    let i = if a.abs() <= b.abs() { imin } else { imax };
    HullMin { value: vals[i].abs() * scale, witness: HullPoint::vertex(k, i) }
}

/// Alternating minimization of `cod(Σ λᵢ Aᵢ u) / dom(u)` over the simplex
/// and the sphere.
fn refine_weights<T: Real>(
    mats: &[DMatrix<T>],
    dom: &Norm<T>,
    cod: &Norm<T>,
    mut w: Vec<T>,
    seed: u64,
    opts: HullOptions,
    dopts: DescentOptions,
) -> HullMin<T> {
    let mixed = |w: &[T]| {
        let mut m = DMatrix::zeros(mats[0].nrows(), mats[0].ncols());
        for (a, &l) in mats.iter().zip(w) {
            m += a * l;
        }
        m
    };
    let mut cur = min_ratio(&mixed(&w), dom, cod, opts.sphere_count, seed, dopts);
    let mut best = HullMin { value: cur.value, witness: HullPoint { weights: w.clone() } };
    for round in 0..opts.outer_rounds {
        let u = cur.argmin.clone();
        let du = dom.eval_unchecked(&u);
        let images: Vec<DVector<T>> = mats.iter().map(|a| a * &u).collect();
        let objective = |w: &[T]| {
            let mut s = DVector::zeros(images[0].len());
            for (b, &l) in images.iter().zip(w) {
                s += b * l;
            }
            cod.eval_unchecked(&s) / du
        };
        let mut val = objective(&w);
        let mut eta = T::one();
        for _ in 0..opts.weight_steps {
            let mut s = DVector::zeros(images[0].len());
            for (b, &l) in images.iter().zip(&w) {
                s += b * l;
            }
            let g = cod.subgradient(&s);
            let grads: Vec<T> = images.iter().map(|b| dot(&g, b) / du).collect();
            let gmax = max_abs(&grads);
            if gmax == T::zero() {
                break;
            }
            let mut accepted = false;
            for _ in 0..30 {
                let step = eta / gmax;
                let trial = HullPoint::normalized(
                    w.iter().zip(&grads).map(|(&wi, &gi)| wi * (-(step * gi)).exp()).collect(),
                )
                .weights;
                let tv = objective(&trial);
                if tv < val {
                    w = trial;
                    val = tv;
                    eta = (eta * T::c(2.0)).min(T::c(64.0));
                    accepted = true;
                    break;
                }
                eta *= T::c(0.5);
            }
            if !accepted {
                break;
            }
        }
        let next = min_ratio(&mixed(&w), dom, cod, opts.sphere_count, derive_seed(seed, &[round as u64 + 1]), dopts);
        if next.value < best.value {
            best = HullMin { value: next.value, witness: HullPoint { weights: w.clone() } };
        }
        let improved = next.value < cur.value * (T::one() - T::c(1e-10));
        cur = next;
        if !improved {
            break;
        }
    }
    best
}

/// One row of an index table.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexRow<T: Real> {
    pub radius: T,
    pub value: T,
    pub witness: HullPoint<T>,
}

/// Index estimate: the maximum over the radius schedule (the finite
/// surrogate of the supremum over `R > 0`) together with the per-radius table.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexEstimate<T: Real> {
    pub value: T,
    pub table: Vec<IndexRow<T>>,
}

/// Knobs of the index computations; `fd_step = None` picks
/// [`MapUnderStudy::default_fd_step`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexOptions<T: Real> {
    pub fd_step: Option<T>,
    pub hull: HullOptions,
}

impl<T: Real> Default for IndexOptions<T> {
    fn default() -> Self {
        Self { fd_step: None, hull: HullOptions::default() }
    }
}

/// Regularity index `C(Jf(x)) = sup_R inf { C(T) : T ∈ co Jf(B(x; R)) }`.
pub fn regularity_index<T: Real>(
    f: &MapUnderStudy<T>,
    x: &DVector<T>,
    schedule: &[T],
    count: usize,
    seed: u64,
) -> Result<IndexEstimate<T>> {
    index_with(f, x, schedule, count, seed, Constant::Primal, IndexOptions::default())
}

/// Local-injectivity index `C*(Jf(x))`, same construction with `C*`.
pub fn injectivity_index<T: Real>(
    f: &MapUnderStudy<T>,
    x: &DVector<T>,
    schedule: &[T],
    count: usize,
    seed: u64,
) -> Result<IndexEstimate<T>> {
    index_with(f, x, schedule, count, seed, Constant::Dual, IndexOptions::default())
}

pub fn index_with<T: Real>(
    f: &MapUnderStudy<T>,
    x: &DVector<T>,
    schedule: &[T],
    count: usize,
    seed: u64,
    which: Constant,
    opts: IndexOptions<T>,
) -> Result<IndexEstimate<T>> {
    validate_schedule(schedule)?;
    let h = opts.fd_step.unwrap_or_else(|| MapUnderStudy::default_fd_step(x));
    let rows: Vec<Result<IndexRow<T>>> = schedule
        .par_iter()
        .enumerate()
        .map(|(k, &r)| {
            let set = clarke_sample(f, x, r, count, h, derive_seed(seed, &[k as u64, 0]))?;
            let hm = hull_min_constant_with(&set, which, derive_seed(seed, &[k as u64, 1]), opts.hull)?;
            Ok(IndexRow { radius: r, value: hm.value, witness: hm.witness })
        })
        .collect();
    let table = rows.into_iter().collect::<Result<Vec<_>>>()?;
    let value = table.iter().map(|r| r.value).fold(T::neg_infinity(), T::max);
    Ok(IndexEstimate { value, table })
}

/// Radius schedules must be positive and strictly decreasing.
pub fn validate_schedule<T: Real>(schedule: &[T]) -> Result<()> {
    if schedule.is_empty() {
        return Err(Error::InvalidArgument("empty radius schedule".into()));
    }
    if schedule.iter().any(|r| !(*r > T::zero())) {
        return Err(Error::InvalidArgument("radii must be positive".into()));
    }
    if schedule.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::InvalidArgument("radius schedule must be strictly decreasing".into()));
    }
    Ok(())
}

/// Default schedule `R = 10⁻¹, 10⁻², 10⁻³`.
pub fn default_schedule<T: Real>() -> Vec<T> {
    vec![T::c(1e-1), T::c(1e-2), T::c(1e-3)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_map(name: &str, g: fn(f64) -> f64) -> MapUnderStudy<f64> {
        MapUnderStudy::new(name, 1, 1, move |x: &DVector<f64>| DVector::from_element(1, g(x[0])))
    }

    fn pt(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    fn scalar_set(vals: &[f64]) -> OperatorSet<f64> {
        let ops = vals.iter().map(|&v| LinOp::euclidean(DMatrix::from_element(1, 1, v))).collect();
        OperatorSet::from_ops(pt(&[0.0]), ops).unwrap()
    }

    #[test]
    fn clarke_sample_of_abs() {
        let f = scalar_map("abs", f64::abs);
        let s = clarke_sample(&f, &pt(&[0.0]), 0.5, 100, 1e-8, 1).unwrap();
        let vals: Vec<f64> = s.ops().iter().map(|o| o.matrix()[(0, 0)]).collect();
        assert!(vals.iter().all(|v| (v.abs() - 1.0).abs() <= 1e-6));
        assert!(vals.iter().any(|v| *v > 0.0) && vals.iter().any(|v| *v < 0.0));
    }

    #[test]
    fn clarke_sample_of_kink_23() {
        // hand derivative: 3 on x > 0, 1 on x < 0
        let f = scalar_map("kink", |x| 2.0 * x + x.abs());
        let s = clarke_sample(&f, &pt(&[0.0]), 0.5, 100, 1e-8, 2).unwrap();
        for op in s.ops() {
            let v = op.matrix()[(0, 0)];
            assert!((v - 1.0).abs() <= 1e-6 || (v - 3.0).abs() <= 1e-6, "{v}");
        }
    }

    #[test]
    fn clarke_sample_of_linear_map_is_constant() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, -0.5, 3.0]);
        let a2 = a.clone();
        let f = MapUnderStudy::new("lin", 2, 2, move |x: &DVector<f64>| &a2 * x);
        let s = clarke_sample(&f, &pt(&[0.3, -1.0]), 0.2, 30, 1e-5, 3).unwrap();
        for op in s.ops() {
            assert_abs_diff_eq!(*op.matrix(), a, epsilon = 1e-9);
        }
    }

    #[test]
    fn clarke_sample_is_deterministic_and_validates() {
        let f = scalar_map("sin", f64::sin);
        let a = clarke_sample(&f, &pt(&[0.2]), 0.1, 40, 1e-6, 9).unwrap();
        let b = clarke_sample(&f, &pt(&[0.2]), 0.1, 40, 1e-6, 9).unwrap();
        assert_eq!(a, b);
        assert!(clarke_sample(&f, &pt(&[0.2]), 0.0, 40, 1e-6, 9).is_err());
        assert!(clarke_sample(&f, &pt(&[0.2]), 0.1, 0, 1e-6, 9).is_err());
        let bad = scalar_map("bad", |x| if x > 0.0 { f64::NAN } else { x });
        assert!(matches!(
            clarke_sample(&bad, &pt(&[0.0]), 0.1, 20, 1e-6, 9),
            Err(Error::NonFiniteJacobian { .. })
        ));
    }

    #[test]
    fn check_examples() {
        let f = scalar_map("abs", f64::abs);
        let x = pt(&[0.0]);
        let steps = default_dini_steps(1.0);
        let dirs = [pt(&[1.0]), pt(&[-1.0])];
        let full = scalar_set(&[-1.0, 1.0]);
        let rep = check_pseudojacobian(&f, &x, &full, &dirs, &dirs, &steps).unwrap();
        assert!(rep.passed());
        assert_eq!(rep.pairs_checked, 4);

        let truncated = scalar_set(&[1.0]);
        let rep = check_pseudojacobian(&f, &x, &truncated, &[pt(&[-1.0])], &[pt(&[1.0])], &steps).unwrap();
        assert_eq!(rep.violations.len(), 1);
        let v = &rep.violations[0];
        assert_abs_diff_eq!(v.dini_estimate, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(v.support, -1.0, epsilon = 1e-12);

        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0]);
        let a2 = a.clone();
        let lin = MapUnderStudy::new("lin", 2, 2, move |x: &DVector<f64>| &a2 * x);
        let set = OperatorSet::from_ops(pt(&[0.0, 0.0]), vec![LinOp::euclidean(a)]).unwrap();
        let dirs = Norm::l2(2).sample_unit_sphere(8, 0);
        let rep = check_pseudojacobian(&lin, &pt(&[0.0, 0.0]), &set, &dirs, &dirs, &steps).unwrap();
        assert!(rep.passed());
        assert!(rep.min_margin.abs() <= 1e-12);
    }

    #[test]
    fn scalar_hull_examples() {
        let h = hull_min_constant(&scalar_set(&[-1.0, 1.0]), Constant::Primal, 20, 0).unwrap();
        assert_eq!(h.value, 0.0);
        let w = scalar_set(&[-1.0, 1.0]).combine(&h.witness);
        assert_abs_diff_eq!(w.matrix()[(0, 0)], 0.0, epsilon = 1e-15);

        let s = scalar_set(&[1.0, 3.0]);
        let grid = (0..=10_000).map(|k| 1.0 + 2.0 * k as f64 / 10_000.0).fold(f64::INFINITY, |a, t| a.min(t.abs()));
        let h = hull_min_constant(&s, Constant::Primal, 20, 0).unwrap();
        assert_abs_diff_eq!(h.value, grid, epsilon = 1e-12);
        assert_eq!(hull_min_constant(&s, Constant::Dual, 20, 0).unwrap().value, h.value);
    }

    #[test]
    fn matrix_hull_single_operator() {
        let set = OperatorSet::from_ops(pt(&[0.0, 0.0]), vec![LinOp::euclidean(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]))]).unwrap();
        for which in [Constant::Primal, Constant::Dual] {
            let h = hull_min_constant(&set, which, 20, 0).unwrap();
            assert_abs_diff_eq!(h.value, 2.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn matrix_hull_finds_singular_interior_point() {
        // co{diag(1,1), diag(-1,1)} contains diag(0,1), singular
        let ops = vec![
            LinOp::euclidean(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0])),
            LinOp::euclidean(DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0])),
        ];
        let set = OperatorSet::from_ops(pt(&[0.0, 0.0]), ops).unwrap();
        let h = hull_min_constant(&set, Constant::Primal, 20, 4).unwrap();
        assert!(h.value <= 1e-6, "{}", h.value);
        let op = set.combine(&h.witness);
        assert!(op.banach_constant(200, 0) <= 1e-6);
    }

    #[test]
    fn hull_point_validation() {
        assert!(HullPoint::new(vec![0.5, 0.5]).is_ok());
        assert!(HullPoint::new(vec![0.5, 0.6]).is_err());
        assert!(HullPoint::new(vec![-0.5, 1.5]).is_err());
        assert!(OperatorSet::<f64>::from_ops(pt(&[0.0]), vec![]).is_err());
    }

    #[test]
    fn index_examples() {
        let sched = default_schedule::<f64>();
        let kink = scalar_map("kink", |x| 2.0 * x + x.abs());
        let r = regularity_index(&kink, &pt(&[0.0]), &sched, 50, 1).unwrap();
        assert_abs_diff_eq!(r.value, 1.0, epsilon = 1e-3);
        assert_eq!(r.table.len(), 3);
        let i = injectivity_index(&kink, &pt(&[0.0]), &sched, 50, 1).unwrap();
        assert_abs_diff_eq!(i.value, 1.0, epsilon = 1e-3);

        let abs = scalar_map("abs", f64::abs);
        assert_abs_diff_eq!(regularity_index(&abs, &pt(&[0.0]), &sched, 50, 1).unwrap().value, 0.0, epsilon = 1e-6);

        let d = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let lin = MapUnderStudy::new("lin", 2, 2, move |x: &DVector<f64>| &d * x);
        assert_abs_diff_eq!(regularity_index(&lin, &pt(&[0.5, 0.5]), &sched, 20, 1).unwrap().value, 2.0, epsilon = 1e-6);

        let proj = MapUnderStudy::new("proj", 2, 2, |x: &DVector<f64>| DVector::from_vec(vec![x[0], 0.0]));
        assert!(injectivity_index(&proj, &pt(&[0.1, 0.2]), &sched, 20, 1).unwrap().value <= 1e-8);
        assert!(regularity_index(&proj, &pt(&[0.1, 0.2]), &[0.1, 0.2], 20, 1).is_err());
    }

    #[test]
    fn circle_valued_jacobian_is_read_in_angle_chart() {
        let f = MapUnderStudy::new("cover", 1, 2, |x: &DVector<f64>| DVector::from_vec(vec![x[0].cos(), x[0].sin()]))
            .onto_circle();
        let j = f.tangent_jacobian(&pt(&[2.0]), 1e-6);
        assert_abs_diff_eq!(j[(0, 0)], 1.0, epsilon = 1e-8);
        let r = regularity_index(&f, &pt(&[0.7]), &default_schedule(), 20, 3).unwrap();
        assert_abs_diff_eq!(r.value, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(wrap_angle(3.0 * std::f64::consts::PI), std::f64::consts::PI, epsilon = 1e-12);
    }
}
