//! Norms on ℝⁿ with exact duals.
//!
//! Every norm knows its dual in closed form: ℓp pairs with ℓq, a weighted
//! ℓp with weights `w` pairs with the ℓq norm weighted by `1/w`, and a
//! polyhedral norm given by the vertices of its unit ball pairs with the
//! polyhedral norm whose vertices are the facet normals. A linear pullback
//! `v ↦ ‖M v‖` (used for chart transport) pairs with `y ↦ ‖M⁻ᵀ y‖_*`.

use std::fmt;

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::dense::{self, dot, euclid, max_abs};
use crate::rng::{gaussian_vector, rng_from};
use crate::{Error, Real, Result};

/// Absolute tolerance on `‖v‖ = 1` for vectors produced by
/// [`Norm::sample_unit_sphere`].
pub const UNIT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum NormKind<T: Real> {
    /// `p = ∞` is represented by `T::infinity()`.
    Lp { p: T },
    /// `‖v‖ = ‖(w₁v₁, …, wₙvₙ)‖_p`.
    WeightedLp { weights: Vec<T>, p: T },
    /// Gauge of the convex hull of a symmetric vertex list. Facet normals
    /// `a` (with `⟨a, x⟩ ≤ 1` on the ball) are enumerated at construction.
    Polyhedral {
        vertices: Vec<DVector<T>>,
        facets: Vec<DVector<T>>,
    },
    /// `‖v‖ = ‖M v‖_base`; `map_inv` caches `M⁻¹`.
    Linear {
        base: Box<Norm<T>>,
        map: DMatrix<T>,
        map_inv: DMatrix<T>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Norm<T: Real> {
    kind: NormKind<T>,
    dim: usize,
}

fn conjugate_exponent<T: Real>(p: T) -> T {
    if p == T::one() {
        T::infinity()
    } else if p.is_infinite() {
        T::one()
    } else {
        p / (p - T::one())
    }
}

fn lp_eval<T: Real>(v: impl Iterator<Item = T> + Clone, p: T) -> T {
    if p == T::one() {
        v.fold(T::zero(), |acc, x| acc + x.abs())
    } else if p.is_infinite() {
        v.fold(T::zero(), |acc, x| acc.max(x.abs()))
    } else {
        let m = v.clone().fold(T::zero(), |acc, x| acc.max(x.abs()));
        if m == T::zero() || !m.is_finite() {
            return m;
        }
        if p == T::c(2.0) {
            let s = v.fold(T::zero(), |acc, x| acc + (x / m) * (x / m));
            return m * s.sqrt();
        }
        let s = v.fold(T::zero(), |acc, x| acc + (x.abs() / m).powf(p));
        m * s.powf(p.recip())
    }
}

/// Gradient of the ℓp norm at `v` (a subgradient at kinks, zero at `v = 0`).
fn lp_subgradient<T: Real>(v: &[T], p: T) -> DVector<T> {
    let n = v.len();
    let norm = lp_eval(v.iter().copied(), p);
    if norm == T::zero() {
        return DVector::zeros(n);
    }
    if p == T::one() {
        DVector::from_iterator(n, v.iter().map(|&x| if x == T::zero() { T::zero() } else { x.signum() }))
    } else if p.is_infinite() {
        let k = (0..n)
            .max_by(|&i, &j| v[i].abs().partial_cmp(&v[j].abs()).unwrap_or(std::cmp::Ordering::Equal))
            .unwrap_or(0);
        let mut g = DVector::zeros(n);
        g[k] = v[k].signum();
        g
    } else {
        DVector::from_iterator(
            n,
            v.iter().map(|&x| x.signum() * (x.abs() / norm).powf(p - T::one())),
        )
    }
}

impl<T: Real> Norm<T> {
    pub fn lp(dim: usize, p: T) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidNorm("dimension must be positive".into()));
        }
        if !(p >= T::one()) {
            return Err(Error::InvalidNorm(format!("lp exponent {p} < 1")));
        }
        Ok(Self { kind: NormKind::Lp { p }, dim })
    }

    pub fn l1(dim: usize) -> Self {
        Self { kind: NormKind::Lp { p: T::one() }, dim }
    }

    pub fn l2(dim: usize) -> Self {
        Self { kind: NormKind::Lp { p: T::c(2.0) }, dim }
    }

    pub fn linf(dim: usize) -> Self {
        Self { kind: NormKind::Lp { p: T::infinity() }, dim }
    }

    pub fn weighted_lp(weights: Vec<T>, p: T) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidNorm("empty weight list".into()));
        }
        if weights.iter().any(|w| !(*w > T::zero()) || !w.is_finite()) {
            return Err(Error::InvalidNorm("weights must be positive and finite".into()));
        }
        if !(p >= T::one()) {
            return Err(Error::InvalidNorm(format!("lp exponent {p} < 1")));
        }
        let dim = weights.len();
        Ok(Self { kind: NormKind::WeightedLp { weights, p }, dim })
    }

    /// `c · ℓ₂` on ℝⁿ.
    pub fn scaled_l2(dim: usize, c: T) -> Result<Self> {
        Self::weighted_lp(vec![c; dim], T::c(2.0))
    }

    /// Polyhedral norm whose unit ball is the convex hull of `vertices`.
    ///
    /// The list must be symmetric (`v` and `−v` both present) and span ℝⁿ.
    pub fn polyhedral(vertices: Vec<DVector<T>>) -> Result<Self> {
        let dim = vertices.first().map(|v| v.len()).ok_or_else(|| Error::InvalidNorm("empty vertex list".into()))?;
        if dim == 0 || vertices.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidNorm("vertices must share a positive dimension".into()));
        }
        let tol = T::c(1e-9);
        for v in &vertices {
            if max_abs(v.as_slice()) == T::zero() {
                return Err(Error::InvalidNorm("zero vertex".into()));
            }
            let neg = -v;
            if !vertices.iter().any(|w| max_abs((w - &neg).as_slice()) <= tol * (T::one() + max_abs(v.as_slice()))) {
                return Err(Error::InvalidNorm("vertex list is not symmetric".into()));
            }
        }
        let facets = enumerate_facets(&vertices, dim);
        if facets.is_empty() {
            return Err(Error::InvalidNorm("vertices do not span the space".into()));
        }
        Ok(Self { kind: NormKind::Polyhedral { vertices, facets }, dim })
    }

    /// Pullback `v ↦ ‖M v‖_base`; `M` must be square and invertible.
    pub fn linear(base: Norm<T>, map: DMatrix<T>) -> Result<Self> {
        let dim = base.dim;
        if map.nrows() != dim || map.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: map.nrows() });
        }
        let map_inv = dense::inverse(&map, T::c(1e-13))
            .ok_or_else(|| Error::InvalidNorm("pullback map is singular".into()))?;
        if map == DMatrix::identity(dim, dim) {
            return Ok(base);
        }
        // pullback of a pullback collapses into one map
        if let NormKind::Linear { base: inner, map: m1, map_inv: m1_inv } = base.kind {
            return Ok(Self {
                kind: NormKind::Linear { base: inner, map: m1 * &map, map_inv: map_inv * m1_inv },
                dim,
            });
        }
        Ok(Self { kind: NormKind::Linear { base: Box::new(base), map, map_inv }, dim })
    }

    pub fn kind(&self) -> &NormKind<T> {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Whether the norm is smooth away from the origin (ℓp and weighted ℓp
    /// with `1 < p < ∞`). Only used to decide which results a certificate
    /// may cite.
    pub fn is_smooth(&self) -> bool {
        match &self.kind {
            NormKind::Lp { p } | NormKind::WeightedLp { p, .. } => *p > T::one() && p.is_finite(),
            NormKind::Polyhedral { .. } => false,
            NormKind::Linear { base, .. } => base.is_smooth(),
        }
    }

    pub fn is_euclidean(&self) -> bool {
        matches!(self.kind, NormKind::Lp { p } if p == T::c(2.0))
    }

    /// `M` with `‖v‖ = |M v|₂`, when the unit ball is an ellipsoid.
    pub fn euclidean_factor(&self) -> Option<DMatrix<T>> {
        match &self.kind {
            NormKind::Lp { p } if *p == T::c(2.0) => Some(DMatrix::identity(self.dim, self.dim)),
            NormKind::WeightedLp { weights, p } if *p == T::c(2.0) => {
                Some(DMatrix::from_diagonal(&DVector::from_column_slice(weights)))
            }
            NormKind::Linear { base, map, .. } => base.euclidean_factor().map(|b| b * map),
            _ => None,
        }
    }

    /// Functionals `a` with `‖v‖ = max_a ⟨a, v⟩`, when the unit ball is a
    /// polytope. `None` when the list would exceed `cap` entries.
    pub fn facet_functionals(&self, cap: usize) -> Option<Vec<DVector<T>>> {
        let n = self.dim;
        match &self.kind {
            NormKind::Lp { p } | NormKind::WeightedLp { p, .. } if p.is_infinite() || *p == T::one() => {
                let w: Vec<T> = match &self.kind {
                    NormKind::WeightedLp { weights, .. } => weights.clone(),
                    _ => vec![T::one(); n],
                };
                if p.is_infinite() {
                    Some(
                        (0..n)
                            .flat_map(|i| {
                                let wi = w[i];
                                [T::one(), -T::one()].into_iter().map(move |s| {
                                    let mut e = DVector::zeros(n);
                                    e[i] = s * wi;
                                    e
                                })
                            })
                            .collect(),
                    )
                } else {
                    if n >= usize::BITS as usize - 1 || (1usize << n) > cap {
                        return None;
                    }
                    Some(
                        (0..1usize << n)
                            .map(|mask| {
                                DVector::from_fn(n, |i, _| if mask >> i & 1 == 1 { -w[i] } else { w[i] })
                            })
                            .collect(),
                    )
                }
            }
            NormKind::Polyhedral { facets, .. } => (facets.len() <= cap).then(|| facets.clone()),
            NormKind::Linear { base, map, .. } => base
                .facet_functionals(cap)
                .map(|fs| fs.into_iter().map(|a| map.transpose() * a).collect()),
            _ => None,
        }
    }

    fn check_dim(&self, v: &DVector<T>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: v.len() });
        }
        Ok(())
    }

    pub fn eval(&self, v: &DVector<T>) -> Result<T> {
        self.check_dim(v)?;
        Ok(self.eval_unchecked(v))
    }

    pub fn dual_eval(&self, y: &DVector<T>) -> Result<T> {
        self.check_dim(y)?;
        Ok(self.dual_eval_unchecked(y))
    }

    pub(crate) fn eval_unchecked(&self, v: &DVector<T>) -> T {
        match &self.kind {
            NormKind::Lp { p } => lp_eval(v.iter().copied(), *p),
            NormKind::WeightedLp { weights, p } => lp_eval(v.iter().zip(weights).map(|(&x, &w)| x * w), *p),
            NormKind::Polyhedral { facets, .. } => facets.iter().fold(T::zero(), |acc, a| acc.max(dot(a, v))),
            NormKind::Linear { base, map, .. } => base.eval_unchecked(&(map * v)),
        }
    }

    pub(crate) fn dual_eval_unchecked(&self, y: &DVector<T>) -> T {
        match &self.kind {
            NormKind::Lp { p } => lp_eval(y.iter().copied(), conjugate_exponent(*p)),
            NormKind::WeightedLp { weights, p } => {
                lp_eval(y.iter().zip(weights).map(|(&x, &w)| x / w), conjugate_exponent(*p))
            }
            NormKind::Polyhedral { vertices, .. } => vertices.iter().fold(T::zero(), |acc, v| acc.max(dot(v, y))),
            NormKind::Linear { base, map_inv, .. } => base.dual_eval_unchecked(&(map_inv.transpose() * y)),
        }
    }

    /// The dual norm as a [`Norm`] in its own right.
    pub fn dual(&self) -> Norm<T> {
        let kind = match &self.kind {
            NormKind::Lp { p } => NormKind::Lp { p: conjugate_exponent(*p) },
            NormKind::WeightedLp { weights, p } => NormKind::WeightedLp {
                weights: weights.iter().map(|w| w.recip()).collect(),
                p: conjugate_exponent(*p),
            },
            NormKind::Polyhedral { vertices, facets } => NormKind::Polyhedral {
                vertices: facets.clone(),
                facets: vertices.clone(),
            },
            NormKind::Linear { base, map, map_inv } => NormKind::Linear {
                base: Box::new(base.dual()),
                map: map_inv.transpose(),
                map_inv: map.transpose(),
            },
        };
        Norm { kind, dim: self.dim }
    }

    /// A subgradient `g` of the norm at `v`: `⟨g, v⟩ = ‖v‖` and `‖g‖_* ≤ 1`.
    pub fn subgradient(&self, v: &DVector<T>) -> DVector<T> {
        match &self.kind {
            NormKind::Lp { p } => lp_subgradient(v.as_slice(), *p),
            NormKind::WeightedLp { weights, p } => {
                let w = DVector::from_column_slice(weights);
                let scaled = v.component_mul(&w);
                lp_subgradient(scaled.as_slice(), *p).component_mul(&w)
            }
            NormKind::Polyhedral { facets, .. } => {
                if max_abs(v.as_slice()) == T::zero() {
                    return DVector::zeros(self.dim);
                }
                facets
                    .iter()
                    .max_by(|a, b| dot(a, v).partial_cmp(&dot(b, v)).unwrap_or(std::cmp::Ordering::Equal))
                    .cloned()
                    .unwrap_or_else(|| DVector::zeros(self.dim))
            }
            NormKind::Linear { base, map, .. } => map.transpose() * base.subgradient(&(map * v)),
        }
    }

    /// Deterministic sample of unit vectors: the normalized `±eᵢ` first,
    /// then Gaussian directions rescaled onto the sphere.
    pub fn sample_unit_sphere(&self, count: usize, seed: u64) -> Vec<DVector<T>> {
        let mut out = Vec::with_capacity(count);
        'basis: for i in 0..self.dim {
            for s in [T::one(), -T::one()] {
                if out.len() == count {
                    break 'basis;
                }
                let mut e = DVector::zeros(self.dim);
                e[i] = s;
                out.push(self.normalize(e));
            }
        }
        let mut rng = rng_from(seed);
        while out.len() < count {
            let g: DVector<T> = gaussian_vector(&mut rng, self.dim);
            if max_abs(g.as_slice()) > T::zero() {
                out.push(self.normalize(g));
            }
        }
        out
    }

    /// Rescale a nonzero vector onto the unit sphere.
    pub fn normalize(&self, v: DVector<T>) -> DVector<T> {
        let n = self.eval_unchecked(&v);
        let mut u = v / n;
        // one correction pass absorbs the rounding of the division
        let n2 = self.eval_unchecked(&u);
        if (n2 - T::one()).abs() > T::epsilon() {
            u /= n2;
        }
        u
    }

    /// Uniform-direction random vector on the unit sphere (not uniform in
    /// surface measure for non-Euclidean norms).
    pub fn random_unit<R: Rng>(&self, rng: &mut R) -> DVector<T> {
        loop {
            let g: DVector<T> = gaussian_vector(rng, self.dim);
            if euclid(&g) > T::zero() {
                return self.normalize(g);
            }
        }
    }

    /// Parse a config-file name: `l1`, `l2`, `linf`, `lp:<p>`,
    /// `wlp:<w1,...,wn>:<p>` or `poly:<v1>;<v2>;...` with comma-separated
    /// coordinates. `dim` is required for the unweighted families.
    pub fn parse(spec: &str, dim: usize) -> Result<Self> {
        let bad = || Error::InvalidNorm(spec.to_string());
        let num = |s: &str| -> Result<T> {
            let s = s.trim();
            if s.eq_ignore_ascii_case("inf") {
                return Ok(T::infinity());
            }
            s.parse::<f64>().map(T::c).map_err(|_| bad())
        };
        let norm = match spec.trim() {
            "l1" => Self::l1(dim),
            "l2" => Self::l2(dim),
            "linf" => Self::linf(dim),
            s if s.starts_with("lp:") => Self::lp(dim, num(&s[3..])?)?,
            s if s.starts_with("wlp:") => {
                let (w, p) = s[4..].rsplit_once(':').ok_or_else(bad)?;
                let weights = w.split(',').map(num).collect::<Result<Vec<_>>>()?;
                Self::weighted_lp(weights, num(p)?)?
            }
            s if s.starts_with("poly:") => {
                let verts = s[5..]
                    .split(';')
                    .map(|v| v.split(',').map(num).collect::<Result<Vec<_>>>().map(DVector::from_vec))
                    .collect::<Result<Vec<_>>>()?;
                Self::polyhedral(verts)?
            }
            _ => return Err(bad()),
        };
        if dim != 0 && norm.dim != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: norm.dim });
        }
        Ok(norm)
    }
}

impl<T: Real> fmt::Display for Norm<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p_str = |p: T| if p.is_infinite() { "inf".to_string() } else { format!("{p}") };
        match &self.kind {
            NormKind::Lp { p } if *p == T::one() => write!(f, "l1"),
            NormKind::Lp { p } if *p == T::c(2.0) => write!(f, "l2"),
            NormKind::Lp { p } if p.is_infinite() => write!(f, "linf"),
            NormKind::Lp { p } => write!(f, "lp:{}", p_str(*p)),
            NormKind::WeightedLp { weights, p } => {
                write!(f, "wlp:{}:{}", weights.iter().map(|w| format!("{w}")).join(","), p_str(*p))
            }
            NormKind::Polyhedral { vertices, .. } => write!(
                f,
                "poly:{}",
                vertices.iter().map(|v| v.iter().map(|x| format!("{x}")).join(",")).join(";")
            ),
            NormKind::Linear { base, map, .. } => {
                write!(f, "pullback({base}; {:?})", map.transpose().as_slice())
            }
        }
    }
}

/// Facet normals of the convex hull of a symmetric, spanning vertex set.
///
/// Brute force over n-subsets: each affinely independent subset determines a
/// hyperplane `⟨a, x⟩ = 1`, kept when every vertex satisfies `⟨a, v⟩ ≤ 1`.
fn enumerate_facets<T: Real>(vertices: &[DVector<T>], dim: usize) -> Vec<DVector<T>> {
    let tol = T::c(1e-9);
    let ones = DVector::from_element(dim, T::one());
    let mut facets: Vec<DVector<T>> = Vec::new();
    for subset in (0..vertices.len()).combinations(dim) {
        let m = DMatrix::from_fn(dim, dim, |r, c| vertices[subset[r]][c]);
        let Some(a) = dense::lu_solve(&m, &ones, T::c(1e-12)) else {
            continue;
        };
        if vertices.iter().all(|v| dot(&a, v) <= T::one() + tol)
            && !facets.iter().any(|f| max_abs((f - &a).as_slice()) <= tol * (T::one() + max_abs(a.as_slice())))
        {
            facets.push(a);
        }
    }
    facets
}
