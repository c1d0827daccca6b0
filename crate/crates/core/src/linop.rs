//! Linear operators between normed spaces and their Banach constants.
//!
//! For `T: (ℝⁿ, ‖·‖_in) → (ℝᵐ, ‖·‖_out)`:
//!
//! * `C(T)  = inf { ‖Tᵀ y‖_in*  : ‖y‖_out* = 1 }` (positive iff onto),
//! * `C*(T) = inf { ‖T u‖_out   : ‖u‖_in   = 1 }` (positive iff injective).
//!
//! Both are instances of one problem, `inf ‖A u‖_cod / ‖u‖_dom`, solved by
//! [`min_ratio`]. Ellipsoidal norm pairs are solved through singular values
//! and polyhedral pairs by enumerating vertices of the linearity arrangement;
//! every other pair goes through sampled starts plus projected descent.

use itertools::Itertools;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::dense::{self, euclid, max_abs};
use crate::{Error, Norm, Real, Result};

/// Relative singularity threshold: an operator counts as an isomorphism when
/// its constant exceeds `ISO_EPS · max(1, ‖T‖)`.
pub const ISO_EPS: f64 = 1e-8;

/// Upper bound on the number of hyperplane subsets visited by the exact
/// polyhedral route before it gives up.
pub const EXACT_SUBSET_CAP: usize = 400_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescentOptions {
    pub restarts: usize,
    pub iterations: usize,
}

impl Default for DescentOptions {
    fn default() -> Self {
        Self { restarts: 20, iterations: 50 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinOp<T: Real> {
    matrix: DMatrix<T>,
    norm_in: Norm<T>,
    norm_out: Norm<T>,
}

impl<T: Real> LinOp<T> {
    pub fn new(matrix: DMatrix<T>, norm_in: Norm<T>, norm_out: Norm<T>) -> Result<Self> {
        if matrix.ncols() != norm_in.dim() {
            return Err(Error::DimensionMismatch { expected: norm_in.dim(), got: matrix.ncols() });
        }
        if matrix.nrows() != norm_out.dim() {
            return Err(Error::DimensionMismatch { expected: norm_out.dim(), got: matrix.nrows() });
        }
        Ok(Self { matrix, norm_in, norm_out })
    }

    /// Operator between Euclidean spaces.
    pub fn euclidean(matrix: DMatrix<T>) -> Self {
        let (m, n) = matrix.shape();
        Self { matrix, norm_in: Norm::l2(n), norm_out: Norm::l2(m) }
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.matrix
    }

    pub fn norm_in(&self) -> &Norm<T> {
        &self.norm_in
    }

    pub fn norm_out(&self) -> &Norm<T> {
        &self.norm_out
    }

    pub fn dim_in(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn dim_out(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, v: &DVector<T>) -> Result<DVector<T>> {
        if v.len() != self.dim_in() {
            return Err(Error::DimensionMismatch { expected: self.dim_in(), got: v.len() });
        }
        Ok(&self.matrix * v)
    }

    pub fn is_finite(&self) -> bool {
        dense::all_finite(self.matrix.as_slice())
    }

    /// Same norms, different matrix.
    pub fn with_matrix(&self, matrix: DMatrix<T>) -> Result<Self> {
        Self::new(matrix, self.norm_in.clone(), self.norm_out.clone())
    }

    /// `‖T‖ = sup ‖T u‖_out` over `‖u‖_in = 1`; exact for ellipsoidal norm
    /// pairs, otherwise the best of `sphere_count` sphere samples.
    pub fn operator_norm(&self, sphere_count: usize, seed: u64) -> T {
        if let (Some(m), Some(n)) = (self.norm_in.euclidean_factor(), self.norm_out.euclidean_factor()) {
            if let Some(m_inv) = dense::inverse(&m, T::c(1e-14)) {
                let s = dense::singular_values(&(n * &self.matrix * m_inv));
                return if s.is_empty() { T::zero() } else { s[0] };
            }
        }
        self.norm_in
            .sample_unit_sphere(sphere_count.max(1), seed)
            .iter()
            .map(|u| self.norm_out.eval_unchecked(&(&self.matrix * u)))
            .fold(T::zero(), T::max)
    }

    /// Banach constant `C(T)`.
    pub fn banach_constant(&self, sphere_count: usize, seed: u64) -> T {
        self.banach_constant_with(sphere_count, seed, DescentOptions::default())
    }

    pub fn banach_constant_with(&self, sphere_count: usize, seed: u64, opts: DescentOptions) -> T {
        min_ratio(
            &self.matrix.transpose(),
            &self.norm_out.dual(),
            &self.norm_in.dual(),
            sphere_count,
            seed,
            opts,
        )
        .value
    }

    /// Dual Banach constant `C*(T)`.
    pub fn dual_banach_constant(&self, sphere_count: usize, seed: u64) -> T {
        self.dual_banach_constant_with(sphere_count, seed, DescentOptions::default())
    }

    pub fn dual_banach_constant_with(&self, sphere_count: usize, seed: u64, opts: DescentOptions) -> T {
        min_ratio(&self.matrix, &self.norm_in, &self.norm_out, sphere_count, seed, opts).value
    }

    /// Regularity modulus `reg T = 1 / C(T)`, through `cov · reg = 1`;
    /// infinite when `T` is not onto.
    pub fn regularity_modulus(&self, sphere_count: usize, seed: u64) -> T {
        let c = self.banach_constant(sphere_count, seed);
        if c > T::zero() {
            c.recip()
        } else {
            T::infinity()
        }
    }

    /// Scale-relative isomorphism threshold `ISO_EPS · max(1, ‖T‖)`.
    pub fn iso_threshold(&self) -> T {
        T::c(ISO_EPS) * T::one().max(self.operator_norm(64, 0))
    }

    /// Row-major nested arrays, as printed in reports.
    pub fn rows_f64(&self) -> Vec<Vec<f64>> {
        matrix_rows(&self.matrix)
    }
}

pub fn matrix_rows<T: Real>(m: &DMatrix<T>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().map(|x| x.as_f64()).collect()).collect()
}

/// Result of [`min_ratio`]: the infimum estimate and a unit-sphere minimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct RatioMin<T: Real> {
    pub value: T,
    pub argmin: DVector<T>,
}

/// `inf { ‖A u‖_cod : ‖u‖_dom = 1 }`.
///
/// The returned value never exceeds any candidate the routine evaluated,
/// including every sphere sample.
pub fn min_ratio<T: Real>(
    a: &DMatrix<T>,
    dom: &Norm<T>,
    cod: &Norm<T>,
    sphere_count: usize,
    seed: u64,
    opts: DescentOptions,
) -> RatioMin<T> {
    let ratio = |u: &DVector<T>| cod.eval_unchecked(&(a * u)) / dom.eval_unchecked(u);
    let samples = dom.sample_unit_sphere(sphere_count.max(1), seed);
    let mut scored: Vec<(T, DVector<T>)> = samples.into_iter().map(|u| (ratio(&u), u)).collect();
    scored.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap_or(std::cmp::Ordering::Equal));
    let mut best = RatioMin { value: scored[0].0, argmin: scored[0].1.clone() };

    let exact = exact_ellipsoidal(a, dom, cod).or_else(|| exact_polyhedral(a, dom, cod));
    if let Some(e) = exact {
        if e.value <= best.value {
            best = e;
        }
        return best;
    }

    let starts: Vec<DVector<T>> = scored.iter().take(opts.restarts.max(1)).map(|(_, u)| u.clone()).collect();
    let refined: Vec<(T, DVector<T>)> =
        starts.into_par_iter().map(|u| descend(a, dom, cod, u, opts.iterations)).collect();
    for (v, u) in refined {
        if v < best.value {
            best = RatioMin { value: v, argmin: u };
        }
    }
    best
}

/// Projected subgradient descent of the homogeneous ratio with backtracking;
/// only decreasing steps are accepted.
fn descend<T: Real>(a: &DMatrix<T>, dom: &Norm<T>, cod: &Norm<T>, mut u: DVector<T>, iterations: usize) -> (T, DVector<T>) {
    let ratio = |u: &DVector<T>| cod.eval_unchecked(&(a * u)) / dom.eval_unchecked(u);
    let mut val = ratio(&u);
    let mut step = T::c(0.5);
    for _ in 0..iterations {
        if val == T::zero() {
            break;
        }
        let au = a * &u;
        let g = (a.transpose() * cod.subgradient(&au) - dom.subgradient(&u) * val) / dom.eval_unchecked(&u);
        let gn = euclid(&g);
        if gn == T::zero() || !gn.is_finite() {
            break;
        }
        let dir = g * (euclid(&u) / gn);
        let mut accepted = false;
        let mut t = (step * T::c(2.0)).min(T::one());
        for _ in 0..40 {
            let cand = &u - &dir * t;
            if max_abs(cand.as_slice()) > T::zero() {
                let cand = dom.normalize(cand);
                let cv = ratio(&cand);
                if cv < val {
                    u = cand;
                    val = cv;
                    step = t;
                    accepted = true;
                    break;
                }
            }
            t *= T::c(0.5);
        }
        if !accepted {
            break;
        }
    }
    (val, u)
}

/// `inf |N A M⁻¹ w|₂` over the Euclidean sphere when `dom = |M·|₂` and
/// `cod = |N·|₂`: the smallest singular value (zero when `A` has a kernel).
fn exact_ellipsoidal<T: Real>(a: &DMatrix<T>, dom: &Norm<T>, cod: &Norm<T>) -> Option<RatioMin<T>> {
    let m = dom.euclidean_factor()?;
    let n = cod.euclidean_factor()?;
    let m_inv = dense::inverse(&m, T::c(1e-14))?;
    let b = n * a * &m_inv;
    let d = dense::svd(&b);
    let k = b.ncols();
    if b.nrows() < k {
        // nontrivial kernel
        let kern = kernel_vector(&b);
        let u = dom.normalize(&m_inv * kern);
        return Some(RatioMin { value: T::zero(), argmin: u });
    }
    let w = d.v.column(k - 1).into_owned();
    Some(RatioMin { value: d.sigma[k - 1], argmin: dom.normalize(&m_inv * w) })
}

fn kernel_vector<T: Real>(b: &DMatrix<T>) -> DVector<T> {
    // right singular vector of the padded square matrix
    let k = b.ncols();
    let mut sq = DMatrix::zeros(k, k);
    sq.rows_mut(0, b.nrows()).copy_from(b);
    let d = dense::svd(&sq);
    d.v.column(k - 1).into_owned()
}

/// Exact minimum for polyhedral `dom` and `cod`.
///
/// The ratio is piecewise linear on the polyhedral sphere, so its minimum is
/// attained at a vertex of the arrangement formed by the sphere's facet
/// hyperplanes `⟨a, u⟩ = 1` and the breakpoint hyperplanes
/// `⟨Aᵀ(cⱼ − cₖ), u⟩ = 0` of `u ↦ max_c ⟨c, A u⟩`. Every n-subset containing
/// at least one facet hyperplane is solved and scored.
pub fn exact_polyhedral<T: Real>(a: &DMatrix<T>, dom: &Norm<T>, cod: &Norm<T>) -> Option<RatioMin<T>> {
    let n = a.ncols();
    let facets = dom.facet_functionals(4096)?;
    let cod_funcs = cod.facet_functionals(4096)?;
    let tol = T::c(1e-10);
    let mut pulled: Vec<DVector<T>> = Vec::new();
    for c in &cod_funcs {
        let b = a.transpose() * c;
        if !pulled.iter().any(|p| max_abs((p - &b).as_slice()) <= tol * (T::one() + max_abs(b.as_slice()))) {
            pulled.push(b);
        }
    }
    let mut breaks: Vec<DVector<T>> = Vec::new();
    for (j, k) in (0..pulled.len()).tuple_combinations() {
        let h = &pulled[j] - &pulled[k];
        let hn = max_abs(h.as_slice());
        if hn <= tol {
            continue;
        }
        let h = h / hn;
        if !breaks.iter().any(|p| {
            max_abs((p - &h).as_slice()) <= tol * T::c(100.0) || max_abs((p + &h).as_slice()) <= tol * T::c(100.0)
        }) {
            breaks.push(h);
        }
    }
    // (normal, rhs) list: facets first
    let planes: Vec<(DVector<T>, T)> = facets
        .iter()
        .map(|f| (f.clone(), T::one()))
        .chain(breaks.into_iter().map(|h| (h, T::zero())))
        .collect();
    let total = binomial(planes.len(), n)?;
    if total > EXACT_SUBSET_CAP {
        return None;
    }
    let mut best: Option<RatioMin<T>> = None;
    for subset in (0..planes.len()).combinations(n) {
        if subset[0] >= facets.len() {
            continue;
        }
        let m = DMatrix::from_fn(n, n, |r, c| planes[subset[r]].0[c]);
        let rhs = DVector::from_fn(n, |r, _| planes[subset[r]].1);
        let Some(u) = dense::lu_solve(&m, &rhs, T::c(1e-12)) else {
            continue;
        };
        let du = dom.eval_unchecked(&u);
        if (du - T::one()).abs() > T::c(1e-9) {
            continue;
        }
        let v = cod.eval_unchecked(&(a * &u)) / du;
        if best.as_ref().is_none_or(|b| v < b.value) {
            best = Some(RatioMin { value: v, argmin: u });
        }
    }
    best
}

fn binomial(n: usize, k: usize) -> Option<usize> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > usize::MAX as u128 {
            return None;
        }
    }
    Some(acc as usize)
}

/// Express `Tb` (an operator between chart coordinate spaces) as an operator
/// between the spaces reached through `dphi_inv` and `dpsi_inv`:
/// the matrix becomes `dpsi_inv · Tb · dphi_inv⁻¹` and the norms become the
/// push-forwards `‖v‖ = ‖dphi_inv⁻¹ v‖_in`, `‖w‖ = ‖dpsi_inv⁻¹ w‖_out`, so
/// both Banach constants are unchanged.
pub fn transport_operator<T: Real>(tb: &LinOp<T>, dphi_inv: &DMatrix<T>, dpsi_inv: &DMatrix<T>) -> Result<LinOp<T>> {
    let check = |m: &DMatrix<T>, name: &str, dim: usize| -> Result<DMatrix<T>> {
        if m.nrows() != dim || m.ncols() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: m.nrows() });
        }
        let s = dense::singular_values(m);
        let threshold = T::c(ISO_EPS) * T::one().max(s[0]);
        if !(s[dim - 1] > threshold) {
            return Err(Error::SingularChart { chart: name.to_string() });
        }
        dense::inverse(m, T::c(1e-14)).ok_or_else(|| Error::SingularChart { chart: name.to_string() })
    };
    let phi_inv = check(dphi_inv, "domain chart (dphi_inv)", tb.dim_in())?;
    let psi_inv = check(dpsi_inv, "target chart (dpsi_inv)", tb.dim_out())?;
    let matrix = dpsi_inv * &tb.matrix * &phi_inv;
    LinOp::new(
        matrix,
        Norm::linear(tb.norm_in.clone(), phi_inv)?,
        Norm::linear(tb.norm_out.clone(), psi_inv)?,
    )
}

/// JSON view of an operator.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LinOpRecord {
    pub matrix: Vec<Vec<f64>>,
    pub norm_in: String,
    pub norm_out: String,
}

impl<T: Real> From<&LinOp<T>> for LinOpRecord {
    fn from(op: &LinOp<T>) -> Self {
        Self { matrix: op.rows_f64(), norm_in: op.norm_in.to_string(), norm_out: op.norm_out.to_string() }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{gaussian_vector, rng_from};
    use approx::assert_abs_diff_eq;

    fn m(r: usize, c: usize, xs: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(r, c, xs)
    }

    fn with_norms(a: DMatrix<f64>, nin: Norm<f64>, nout: Norm<f64>) -> LinOp<f64> {
        LinOp::new(a, nin, nout).unwrap()
    }

    #[test]
    fn regularity_modulus_inverts_the_constant() {
        // for an invertible T under ℓ₂, reg T = ‖T⁻¹‖ = 1/σ_min
        let op = LinOp::euclidean(m(2, 2, &[2.0, 0.0, 0.0, 3.0]));
        assert_abs_diff_eq!(op.regularity_modulus(64, 1), 0.5, epsilon = 1e-12);
        let flat = LinOp::euclidean(m(2, 2, &[1.0, 2.0, 2.0, 4.0]));
        assert!(flat.regularity_modulus(64, 1) > 1e7);
    }

    /// σ_min via a dense grid over the unit circle (independent of SVD).
    fn grid_min_2d(a: &DMatrix<f64>, count: usize) -> f64 {
        (0..count)
            .map(|k| {
                let t = 2.0 * std::f64::consts::PI * k as f64 / count as f64;
                let y = DVector::from_vec(vec![t.cos(), t.sin()]);
                (a.transpose() * y).norm()
            })
            .fold(f64::INFINITY, f64::min)
    }

    #[test]
    fn identity_and_diagonal() {
        let id = LinOp::euclidean(DMatrix::<f64>::identity(2, 2));
        assert_abs_diff_eq!(id.banach_constant(100, 0), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(id.dual_banach_constant(100, 0), 1.0, epsilon = 1e-12);
        let d = m(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let oracle = grid_min_2d(&d, 10_000);
        assert_abs_diff_eq!(oracle, 2.0, epsilon = 1e-6);
        let op = LinOp::euclidean(d);
        assert_abs_diff_eq!(op.banach_constant(100, 0), oracle, epsilon = 1e-6);
        assert_abs_diff_eq!(op.banach_constant(100, 0), op.dual_banach_constant(100, 0), epsilon = 1e-8);
    }

    #[test]
    fn degenerate_operators() {
        let op = LinOp::euclidean(m(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert_abs_diff_eq!(op.banach_constant(100, 0), 0.0, epsilon = 1e-14);
        let nil = LinOp::euclidean(m(2, 2, &[0.0, 1.0, 0.0, 0.0]));
        assert_abs_diff_eq!(nil.dual_banach_constant(100, 0), 0.0, epsilon = 1e-14);
        // wide matrix: onto but not injective
        let wide = LinOp::euclidean(m(1, 2, &[3.0, 4.0]));
        assert_abs_diff_eq!(wide.banach_constant(100, 0), 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(wide.dual_banach_constant(100, 0), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn linf_diagonal_matches_edge_enumeration() {
        // C(T) = inf over the ℓ¹ unit sphere of ‖Tᵀ y‖₁: walk its four edges.
        let d = m(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        let mut oracle = f64::INFINITY;
        let corners = [(1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0), (1.0, 0.0)];
        for w in corners.windows(2) {
            for k in 0..=1000 {
                let t = k as f64 / 1000.0;
                let y = DVector::from_vec(vec![w[0].0 * (1.0 - t) + w[1].0 * t, w[0].1 * (1.0 - t) + w[1].1 * t]);
                oracle = oracle.min((d.transpose() * y).abs().sum());
            }
        }
        let op = with_norms(d, Norm::linf(2), Norm::linf(2));
        assert_abs_diff_eq!(op.banach_constant(50, 1), oracle, epsilon = 1e-12);
        assert_abs_diff_eq!(oracle, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn exact_polyhedral_agrees_with_descent() {
        let mut rng = rng_from(21);
        for _ in 0..20 {
            let a = DMatrix::from_fn(3, 3, |_, _| gaussian_vector::<f64, _>(&mut rng, 1)[0]);
            for (nin, nout) in [(Norm::l1(3), Norm::linf(3)), (Norm::linf(3), Norm::l1(3)), (Norm::l1(3), Norm::l1(3))] {
                let exact = exact_polyhedral(&a, &nin, &nout).unwrap().value;
                let sampled = nin
                    .sample_unit_sphere(20_000, 4)
                    .iter()
                    .map(|u| nout.eval(&(&a * u)).unwrap())
                    .fold(f64::INFINITY, f64::min);
                let descent = {
                    let scored = nin.sample_unit_sphere(200, 5);
                    scored
                        .into_iter()
                        .map(|u| descend(&a, &nin, &nout, u, 200).0)
                        .fold(f64::INFINITY, f64::min)
                };
                assert!(exact <= sampled + 1e-12);
                assert!(exact <= descent + 1e-9);
                assert!(descent <= exact * 1.05 + 1e-6, "descent {descent} exact {exact}");
            }
        }
    }

    #[test]
    fn transport_examples() {
        let tb = LinOp::euclidean(DMatrix::<f64>::identity(2, 2));
        let same = transport_operator(&tb, &DMatrix::identity(2, 2), &DMatrix::identity(2, 2)).unwrap();
        assert_eq!(same, tb);

        let t = transport_operator(&tb, &DMatrix::identity(2, 2), &m(2, 2, &[2.0, 0.0, 0.0, 2.0])).unwrap();
        assert_abs_diff_eq!(*t.matrix(), m(2, 2, &[2.0, 0.0, 0.0, 2.0]), epsilon = 1e-15);
        // direct evaluation: pullback output norm is |w/2|, so C = inf |Tᵀy|_in* over |2y|=1 = 1
        assert_abs_diff_eq!(t.banach_constant(200, 0), 1.0, epsilon = 1e-12);

        let err = transport_operator(&tb, &m(2, 2, &[1.0, 1.0, 1.0, 1.0]), &DMatrix::identity(2, 2)).unwrap_err();
        assert!(matches!(err, Error::SingularChart { ref chart } if chart.contains("dphi_inv")));
    }

    #[test]
    fn transport_round_trip_and_invariance() {
        let mut rng = rng_from(8);
        for _ in 0..20 {
            let a = DMatrix::from_fn(2, 2, |_, _| gaussian_vector::<f64, _>(&mut rng, 1)[0]);
            let p = DMatrix::from_fn(2, 2, |_, _| gaussian_vector::<f64, _>(&mut rng, 1)[0]) + DMatrix::identity(2, 2) * 3.0;
            let q = DMatrix::from_fn(2, 2, |_, _| gaussian_vector::<f64, _>(&mut rng, 1)[0]) + DMatrix::identity(2, 2) * 3.0;
            for (nin, nout) in [(Norm::l2(2), Norm::l2(2)), (Norm::linf(2), Norm::l1(2)), (Norm::lp(2, 3.0).unwrap(), Norm::l2(2))] {
                let op = with_norms(a.clone(), nin, nout);
                let t = transport_operator(&op, &p, &q).unwrap();
                let back = transport_operator(&t, &p.clone().try_inverse().unwrap(), &q.clone().try_inverse().unwrap()).unwrap();
                assert_abs_diff_eq!(*back.matrix(), a, epsilon = 1e-12);
                let c0 = op.banach_constant(400, 3);
                let c1 = t.banach_constant(400, 3);
                assert_abs_diff_eq!(c0, c1, epsilon = 1e-6 * (1.0 + c0));
            }
        }
    }

    #[test]
    fn monotone_refinement_in_sphere_count() {
        let mut rng = rng_from(13);
        for _ in 0..10 {
            let a = DMatrix::from_fn(3, 3, |_, _| gaussian_vector::<f64, _>(&mut rng, 1)[0]);
            let op = with_norms(a, Norm::lp(3, 1.5).unwrap(), Norm::lp(3, 4.0).unwrap());
            let coarse = op.banach_constant(50, 2);
            let fine = op.banach_constant(500, 2);
            assert!(fine <= coarse + 1e-6, "fine {fine} coarse {coarse}");
        }
    }

    #[test]
    fn rank_deficient_gives_zero() {
        let mut rng = rng_from(31);
        for _ in 0..20 {
            let u: DVector<f64> = gaussian_vector(&mut rng, 3);
            let v: DVector<f64> = gaussian_vector(&mut rng, 3);
            let w: DVector<f64> = gaussian_vector(&mut rng, 3);
            let a = &u * v.transpose() + &w * u.transpose();
            let rank = a.clone().col_piv_qr().r().diagonal().iter().filter(|d| d.abs() > 1e-10).count();
            assert_eq!(rank, 2);
            let op = LinOp::euclidean(a.clone());
            let scale = op.operator_norm(10, 0);
            assert!(op.banach_constant(100, 0) <= 1e-8 * scale);
            assert!(op.dual_banach_constant(100, 0) <= 1e-8 * scale);
        }
    }

    #[test]
    fn nan_hygiene() {
        let op = with_norms(m(2, 2, &[1.0, 2.0, 3.0, 4.0]), Norm::lp(2, 1.3).unwrap(), Norm::linf(2));
        assert!(op.is_finite());
        assert!(op.operator_norm(200, 1).is_finite());
        assert!(op.banach_constant(200, 1).is_finite());
        assert!(LinOp::new(m(2, 3, &[0.0; 6]), Norm::l2(2), Norm::l2(2)).is_err());
    }

    #[test]
    fn single_precision_instance() {
        let op = LinOp::<f32>::euclidean(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]));
        assert!((op.banach_constant(50, 0) - 2.0).abs() < 1e-5);
    }
}
