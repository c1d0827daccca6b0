//! Charted Finsler manifolds at desk scale.
//!
//! Points are stored in ambient coordinates; each chart maps an open set of
//! them to ℝⁿ, and the Finsler structure assigns a norm to every tangent
//! space as seen through a chart. Distances are certified only as upper
//! bounds (length of an explicit path) and chord-based lower bounds.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::dense::{self, euclid};
use crate::pseudojac::{central_difference, MapUnderStudy, MatFn, VecFn};
use crate::rng::{derive_seed, rng_from, uniform_in_ball};
use crate::{Error, Norm, Real, Result};

pub type PointPredicate<T> = Arc<dyn Fn(&DVector<T>) -> bool + Send + Sync>;
pub type NormField<T> = Arc<dyn Fn(usize, &DVector<T>) -> Norm<T> + Send + Sync>;

/// Default quadrature subdivisions per path segment.
pub const DEFAULT_SUBDIVISIONS: usize = 64;

#[derive(Clone)]
pub struct Chart<T: Real> {
    name: String,
    dim: usize,
    ambient_dim: usize,
    forward: VecFn<T>,
    inverse: VecFn<T>,
    d_forward: Option<MatFn<T>>,
    /// Predicate on chart coordinates.
    domain: PointPredicate<T>,
}

impl<T: Real> fmt::Debug for Chart<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Chart").field("name", &self.name).field("dim", &self.dim).finish()
    }
}

impl<T: Real> Chart<T> {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        ambient_dim: usize,
        forward: impl Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static,
        inverse: impl Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static,
        domain: impl Fn(&DVector<T>) -> bool + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            dim,
            ambient_dim,
            forward: Arc::new(forward),
            inverse: Arc::new(inverse),
            d_forward: None,
            domain: Arc::new(domain),
        }
    }

    /// Identity chart on all of ℝⁿ.
    pub fn identity(name: impl Into<String>, dim: usize) -> Self {
        Self::new(name, dim, dim, |p| p.clone(), |u| u.clone(), |_| true)
            .with_derivative(move |_| DMatrix::identity(dim, dim))
    }

    pub fn with_derivative(mut self, d: impl Fn(&DVector<T>) -> DMatrix<T> + Send + Sync + 'static) -> Self {
        self.d_forward = Some(Arc::new(d));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ambient_dim(&self) -> usize {
        self.ambient_dim
    }

    pub fn forward(&self, p: &DVector<T>) -> DVector<T> {
        (self.forward)(p)
    }

    pub fn inverse(&self, u: &DVector<T>) -> DVector<T> {
        (self.inverse)(u)
    }

    pub fn contains_coords(&self, u: &DVector<T>) -> bool {
        u.len() == self.dim && (self.domain)(u)
    }

    /// Whether an ambient point lies in the chart's domain.
    pub fn contains(&self, p: &DVector<T>) -> bool {
        let u = self.forward(p);
        self.contains_coords(&u) && euclid(&(self.inverse(&u) - p)) <= T::c(1e-9) * (T::one() + euclid(p))
    }

    /// Derivative of the chart at an ambient point (finite differences when
    /// no closed form was supplied).
    pub fn d_forward(&self, p: &DVector<T>) -> DMatrix<T> {
        match &self.d_forward {
            Some(d) => d(p),
            None => central_difference(&*self.forward, p, self.dim, T::epsilon().cbrt() * T::one().max(euclid(p))),
        }
    }

    /// Derivative of the inverse chart at chart coordinates `u`.
    pub fn d_inverse(&self, u: &DVector<T>) -> DMatrix<T> {
        central_difference(&*self.inverse, u, self.ambient_dim, T::epsilon().cbrt() * T::one().max(euclid(u)))
    }

    /// Round-trip and derivative consistency on `samples` chart points drawn
    /// in `B(center; radius)` (chart coordinates).
    pub fn validate(&self, center: &DVector<T>, radius: T, samples: usize, seed: u64) -> ChartReport {
        let mut rng = rng_from(seed);
        let mut round_trip = 0.0f64;
        let mut derivative = 0.0f64;
        let mut checked = 0;
        for _ in 0..samples {
            let u = uniform_in_ball(&mut rng, center, radius);
            if !self.contains_coords(&u) {
                continue;
            }
            checked += 1;
            let p = self.inverse(&u);
            round_trip = round_trip.max(euclid(&(self.forward(&p) - &u)).as_f64());
            let analytic = self.d_forward(&p);
            let fd = central_difference(&*self.forward, &p, self.dim, T::c(1e-6) * T::one().max(euclid(&p)));
            let scale = dense::max_abs(fd.as_slice()).max(T::one());
            derivative = derivative.max((dense::max_abs((analytic - fd).as_slice()) / scale).as_f64());
        }
        ChartReport { chart: self.name.clone(), checked, max_round_trip_error: round_trip, max_derivative_rel_error: derivative }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ChartReport {
    pub chart: String,
    pub checked: usize,
    pub max_round_trip_error: f64,
    pub max_derivative_rel_error: f64,
}

/// Hypothesis flags carried by a manifold; they are asserted, never inferred.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Default)]
pub struct ManifoldFlags {
    pub complete: bool,
    pub simply_connected: bool,
    pub smooth_norm: bool,
}

#[derive(Clone)]
pub struct FinslerStructure<T: Real> {
    name: String,
    atlas: Vec<Chart<T>>,
    norm_field: NormField<T>,
    flags: ManifoldFlags,
}

impl<T: Real> fmt::Debug for FinslerStructure<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FinslerStructure")
            .field("name", &self.name)
            .field("atlas", &self.atlas)
            .field("flags", &self.flags)
            .finish()
    }
}

impl<T: Real> FinslerStructure<T> {
    pub fn new(
        name: impl Into<String>,
        atlas: Vec<Chart<T>>,
        norm_field: impl Fn(usize, &DVector<T>) -> Norm<T> + Send + Sync + 'static,
        flags: ManifoldFlags,
    ) -> Result<Self> {
        if atlas.is_empty() {
            return Err(Error::InvalidArgument("atlas must contain at least one chart".into()));
        }
        Ok(Self { name: name.into(), atlas, norm_field: Arc::new(norm_field), flags })
    }

    /// ℝⁿ with the constant norm `norm` and the identity chart.
    pub fn flat(norm: Norm<T>) -> Self {
        let n = norm.dim();
        let smooth = norm.is_smooth();
        Self {
            name: format!("euclidean:{n}:{norm}"),
            atlas: vec![Chart::identity("identity", n)],
            norm_field: Arc::new(move |_, _| norm.clone()),
            flags: ManifoldFlags { complete: true, simply_connected: true, smooth_norm: smooth },
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn atlas(&self) -> &[Chart<T>] {
        &self.atlas
    }

    pub fn flags(&self) -> ManifoldFlags {
        self.flags
    }

    pub fn chart_index(&self, name: &str) -> Result<usize> {
        self.atlas
            .iter()
            .position(|c| c.name == name)
            .ok_or_else(|| Error::InvalidArgument(format!("no chart named `{name}`")))
    }

    pub fn chart(&self, name: &str) -> Result<&Chart<T>> {
        Ok(&self.atlas[self.chart_index(name)?])
    }

    /// Norm `‖·‖_{x,φ}` on the chart's coordinate space at chart point `u`.
    pub fn norm_at(&self, chart: usize, u: &DVector<T>) -> Norm<T> {
        (self.norm_field)(chart, u)
    }

    /// First chart whose domain holds every given ambient point.
    pub fn common_chart(&self, points: &[&DVector<T>]) -> Result<usize> {
        self.atlas
            .iter()
            .position(|c| points.iter().all(|p| c.contains(p)))
            .ok_or(Error::NoCommonChart)
    }
}

/// Piecewise-linear path in one chart.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyPath<T: Real> {
    pub chart: String,
    pub waypoints: Vec<DVector<T>>,
}

impl<T: Real> PolyPath<T> {
    pub fn new(chart: impl Into<String>, waypoints: Vec<DVector<T>>) -> Self {
        Self { chart: chart.into(), waypoints }
    }

    pub fn waypoints_f64(&self) -> Vec<Vec<f64>> {
        self.waypoints.iter().map(|w| w.iter().map(|x| x.as_f64()).collect()).collect()
    }
}

fn segment_length<T: Real>(m: &FinslerStructure<T>, chart: usize, a: &DVector<T>, b: &DVector<T>, subdivisions: usize) -> T {
    let s = T::of_usize(subdivisions);
    let step = (b - a) / s;
    (0..subdivisions).fold(T::zero(), |acc, k| {
        let mid = a + &step * (T::of_usize(k) + T::c(0.5));
        acc + m.norm_at(chart, &mid).eval_unchecked(&step)
    })
}

/// Length `∫ ‖σ'(t)‖_{σ(t)} dt` by composite midpoint quadrature on each
/// segment.
pub fn finsler_length<T: Real>(path: &PolyPath<T>, m: &FinslerStructure<T>, subdivisions: usize) -> Result<T> {
    if subdivisions == 0 {
        return Err(Error::InvalidArgument("subdivisions must be positive".into()));
    }
    let ci = m.chart_index(&path.chart)?;
    let chart = &m.atlas[ci];
    for w in &path.waypoints {
        if !chart.contains_coords(w) {
            return Err(Error::OutsideChart { chart: chart.name.clone(), point: w.iter().map(|x| x.as_f64()).collect() });
        }
    }
    Ok(path
        .waypoints
        .windows(2)
        .fold(T::zero(), |acc, w| acc + segment_length(m, ci, &w[0], &w[1], subdivisions)))
}

/// Upper bound on the Finsler distance between two ambient points sharing a
/// chart: coordinate descent on the interior waypoints of a polygonal path,
/// started from the straight chord. The bound never exceeds the chord length.
pub fn finsler_distance<T: Real>(
    u: &DVector<T>,
    v: &DVector<T>,
    m: &FinslerStructure<T>,
    mesh: usize,
) -> Result<(T, PolyPath<T>)> {
    let ci = m.common_chart(&[u, v])?;
    let chart = &m.atlas[ci];
    let (a, b) = (chart.forward(u), chart.forward(v));
    Ok(distance_in_chart(m, ci, &a, &b, mesh, DEFAULT_SUBDIVISIONS))
}

/// [`finsler_distance`] for points given in chart coordinates.
pub fn distance_in_chart<T: Real>(
    m: &FinslerStructure<T>,
    ci: usize,
    a: &DVector<T>,
    b: &DVector<T>,
    mesh: usize,
    subdivisions: usize,
) -> (T, PolyPath<T>) {
    let chart = &m.atlas[ci];
    let n = a.len();
    let segs = mesh + 1;
    let mut pts: Vec<DVector<T>> = (0..=segs).map(|k| a + (b - a) * (T::of_usize(k) / T::of_usize(segs))).collect();
    let seg = |p: &DVector<T>, q: &DVector<T>| segment_length(m, ci, p, q, subdivisions);
    let mut lens: Vec<T> = pts.windows(2).map(|w| seg(&w[0], &w[1])).collect();
    let chord = lens.iter().fold(T::zero(), |s, &l| s + l);
    let mut delta = euclid(&(b - a)) / T::of_usize(segs) * T::c(0.5);
    let floor = delta * T::c(1e-6);
    while mesh > 0 && delta > floor {
        let mut improved = false;
        for i in 1..segs {
            for j in 0..n {
                for sgn in [T::one(), -T::one()] {
                    let mut cand = pts[i].clone();
                    cand[j] += sgn * delta;
                    if !chart.contains_coords(&cand) {
                        continue;
                    }
                    let (l0, l1) = (seg(&pts[i - 1], &cand), seg(&cand, &pts[i + 1]));
                    if l0 + l1 < (lens[i - 1] + lens[i]) * (T::one() - T::c(1e-12)) {
                        pts[i] = cand;
                        lens[i - 1] = l0;
                        lens[i] = l1;
                        improved = true;
                    }
                }
            }
        }
        if !improved {
            delta *= T::c(0.5);
        }
    }
    let total = lens.iter().fold(T::zero(), |s, &l| s + l).min(chord);
    (total, PolyPath::new(chart.name.clone(), pts))
}

/// Outcome of a bi-Lipschitz comparison at one trial radius.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BilipschitzRow {
    pub radius: f64,
    pub pairs: usize,
    pub passed: bool,
    /// Largest `d_upper / chord` over the pairs.
    pub max_upper_ratio: f64,
    /// Smallest `d_lower / chord` over the pairs.
    pub min_lower_ratio: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BilipschitzReport {
    pub chart: String,
    pub epsilon: f64,
    pub rows: Vec<BilipschitzRow>,
    /// Largest trial radius at which it and every smaller radius passed.
    pub empirical_radius: Option<f64>,
}

/// Check `(1+ε)⁻¹‖u−u'‖_{x,φ} ≤ d(u,u') ≤ (1+ε)‖u−u'‖_{x,φ}` on sampled pairs
/// around chart point `x`, over the radii `trial_radius · 2⁻ᵏ`, k = 0..10.
///
/// A pair passes only when the path upper bound satisfies the right
/// inequality and the lower bound satisfies the left one. Pairs are drawn
/// once in the unit ball and rescaled, so regions are nested.
pub fn bilipschitz_check<T: Real>(
    m: &FinslerStructure<T>,
    chart: &str,
    x: &DVector<T>,
    epsilon: T,
    trial_radius: T,
    samples: usize,
    seed: u64,
) -> Result<BilipschitzReport> {
    if !(epsilon > T::zero()) {
        return Err(Error::InvalidArgument("epsilon must be positive".into()));
    }
    let ci = m.chart_index(chart)?;
    let n = x.len();
    let base = m.norm_at(ci, x);
    let mut rng = rng_from(seed);
    let zero = DVector::zeros(n);
    let unit_pairs: Vec<(DVector<T>, DVector<T>)> = (0..samples)
        .map(|_| (uniform_in_ball(&mut rng, &zero, T::one()), uniform_in_ball(&mut rng, &zero, T::one())))
        .collect();
    let mut rows = Vec::new();
    for k in 0..=10 {
        let r = trial_radius * T::c(0.5f64.powi(k));
        let mut max_up = T::zero();
        let mut min_lo = T::infinity();
        let mut ok = true;
        let mut pairs = 0;
        for (p, q) in &unit_pairs {
            let (a, b) = (x + p * r, x + q * r);
            if !m.atlas[ci].contains_coords(&a) || !m.atlas[ci].contains_coords(&b) {
                ok = false;
                continue;
            }
            let chord = base.eval_unchecked(&(&b - &a));
            if chord == T::zero() {
                continue;
            }
            pairs += 1;
            let (up, _) = distance_in_chart(m, ci, &a, &b, 4, 32);
            let lo = lower_distance_bound(m, ci, x, &base, &a, &b, r);
            max_up = max_up.max(up / chord);
            min_lo = min_lo.min(lo / chord);
            if up > (T::one() + epsilon) * chord || lo < chord / (T::one() + epsilon) {
                ok = false;
            }
        }
        rows.push(BilipschitzRow {
            radius: r.as_f64(),
            pairs,
            passed: ok,
            max_upper_ratio: max_up.as_f64(),
            min_lower_ratio: min_lo.as_f64(),
        });
    }
    let mut empirical = None;
    for row in rows.iter().rev() {
        if row.passed {
            empirical = Some(row.radius);
        } else {
            break;
        }
    }
    Ok(BilipschitzReport { chart: chart.to_string(), epsilon: epsilon.as_f64(), rows, empirical_radius: empirical })
}

/// Chord-based lower bound on `d(a, b)`.
///
/// In one dimension every path sweeps `[a, b]`, so the straight length is
/// exact. Otherwise `m_lo · min(chord, exit)`, where `m_lo` bounds the norm
/// field from below against the base norm on the ball `B(x; 2r)` and `exit`
/// is the base-norm distance needed to leave that ball and come back.
fn lower_distance_bound<T: Real>(
    m: &FinslerStructure<T>,
    ci: usize,
    x: &DVector<T>,
    base: &Norm<T>,
    a: &DVector<T>,
    b: &DVector<T>,
    r: T,
) -> T {
    if x.len() == 1 {
        return segment_length(m, ci, a, b, DEFAULT_SUBDIVISIONS);
    }
    let big = r * T::c(2.0);
    let dirs = base.sample_unit_sphere(32, 1);
    let mut rng = rng_from(derive_seed(7, &[x.len() as u64]));
    let mut m_lo = T::infinity();
    let mut probe = vec![a.clone(), b.clone(), x.clone()];
    for _ in 0..32 {
        probe.push(uniform_in_ball(&mut rng, x, big));
    }
    for z in probe.iter().filter(|z| m.atlas[ci].contains_coords(z)) {
        let nz = m.norm_at(ci, z);
        for d in &dirs {
            m_lo = m_lo.min(nz.eval_unchecked(d));
        }
    }
    let chord = base.eval_unchecked(&(b - a));
    let exit = (big - base.eval_unchecked(&(a - x))).max(T::zero()) + (big - base.eval_unchecked(&(b - x))).max(T::zero());
    m_lo * chord.min(exit)
}

/// Comparability constant `m` with `(1/m)|v|₂ ≤ ‖v‖_{x,φ} ≤ m|v|₂`, from
/// Euclidean sphere samples at chart point `u`.
pub fn pullback_comparability<T: Real>(m: &FinslerStructure<T>, chart: usize, u: &DVector<T>, samples: usize, seed: u64) -> T {
    let norm = m.norm_at(chart, u);
    let sphere = Norm::l2(u.len()).sample_unit_sphere(samples.max(1), seed);
    sphere.iter().fold(T::one(), |acc, v| {
        let r = norm.eval_unchecked(v);
        acc.max(r).max(r.recip())
    })
}

/// Local representative `ψ ∘ g ∘ φ⁻¹` of an ambient map `g: M → N`, with the
/// norms frozen at the base point: `‖·‖_{x,φ}` on the source and
/// `‖·‖_{g(x),ψ}` on the target.
pub fn chart_representative<T: Real>(
    name: impl Into<String>,
    g: impl Fn(&DVector<T>) -> DVector<T> + Send + Sync + 'static,
    source: &FinslerStructure<T>,
    source_chart: &str,
    target: &FinslerStructure<T>,
    target_chart: &str,
    base: &DVector<T>,
) -> Result<(MapUnderStudy<T>, DVector<T>)> {
    let si = source.chart_index(source_chart)?;
    let ti = target.chart_index(target_chart)?;
    let phi = source.atlas[si].clone();
    let psi = target.atlas[ti].clone();
    if !phi.contains(base) {
        return Err(Error::OutsideChart { chart: phi.name.clone(), point: base.iter().map(|x| x.as_f64()).collect() });
    }
    let gx = g(base);
    if !psi.contains(&gx) {
        return Err(Error::OutsideChart { chart: psi.name.clone(), point: gx.iter().map(|x| x.as_f64()).collect() });
    }
    let xb = phi.forward(base);
    let yb = psi.forward(&gx);
    let norm_in = source.norm_at(si, &xb);
    let norm_out = target.norm_at(ti, &yb);
    let (n, k) = (phi.dim, psi.dim);
    let rep = MapUnderStudy::new(name, n, k, move |u: &DVector<T>| psi.forward(&g(&phi.inverse(u))))
        .with_norms(norm_in, norm_out)?;
    Ok((rep, xb))
}

/// Unit circle in ℝ² with two overlapping angle charts: `angle` on
/// `(−π, π)` and `angle-shifted` on `(0, 2π)`, both arc-length.
pub fn circle<T: Real>() -> FinslerStructure<T> {
    let angle = Chart::new(
        "angle",
        1,
        2,
        |p: &DVector<T>| DVector::from_element(1, p[1].atan2(p[0])),
        |u: &DVector<T>| DVector::from_vec(vec![u[0].cos(), u[0].sin()]),
        |u: &DVector<T>| u[0] > -T::PI() && u[0] < T::PI(),
    )
    .with_derivative(|p: &DVector<T>| {
        let r2 = p[0] * p[0] + p[1] * p[1];
        DMatrix::from_row_slice(1, 2, &[-p[1] / r2, p[0] / r2])
    });
    let shifted = Chart::new(
        "angle-shifted",
        1,
        2,
        |p: &DVector<T>| {
            let a = p[1].atan2(p[0]);
            DVector::from_element(1, if a <= T::zero() { a + T::PI() + T::PI() } else { a })
        },
        |u: &DVector<T>| DVector::from_vec(vec![u[0].cos(), u[0].sin()]),
        |u: &DVector<T>| u[0] > T::zero() && u[0] < T::PI() + T::PI(),
    )
    .with_derivative(|p: &DVector<T>| {
        let r2 = p[0] * p[0] + p[1] * p[1];
        DMatrix::from_row_slice(1, 2, &[-p[1] / r2, p[0] / r2])
    });
    FinslerStructure {
        name: "circle".into(),
        atlas: vec![angle, shifted],
        norm_field: Arc::new(|_, _| Norm::l2(1)),
        flags: ManifoldFlags { complete: true, simply_connected: false, smooth_norm: true },
    }
}

/// ℝ with the conformal field `(1 + |u|)·|·|`.
pub fn conformal1d<T: Real>() -> FinslerStructure<T> {
    FinslerStructure {
        name: "conformal1d".into(),
        atlas: vec![Chart::identity("identity", 1)],
        norm_field: Arc::new(|_, u: &DVector<T>| {
            Norm::weighted_lp(vec![T::one() + u[0].abs()], T::c(2.0)).expect("positive weight")
        }),
        flags: ManifoldFlags { complete: true, simply_connected: true, smooth_norm: true },
    }
}

/// Flat torus through its angle chart on `(−π, π)²`.
pub fn torus<T: Real>() -> FinslerStructure<T> {
    let chart = Chart::new(
        "angles",
        2,
        2,
        |p: &DVector<T>| p.clone(),
        |u: &DVector<T>| u.clone(),
        |u: &DVector<T>| u.iter().all(|&a| a > -T::PI() && a < T::PI()),
    )
    .with_derivative(|_| DMatrix::identity(2, 2));
    FinslerStructure {
        name: "torus".into(),
        atlas: vec![chart],
        norm_field: Arc::new(|_, _| Norm::l2(2)),
        flags: ManifoldFlags { complete: true, simply_connected: false, smooth_norm: true },
    }
}
