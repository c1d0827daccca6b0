use std::f64::consts::PI;

use lipinvert::certify::{ball_inclusion_certificate, domain_radius, RadialProfile, Weight};
use lipinvert::invert::{global_invert, global_invert_along, injectivity_radius, local_invert, LiftOptions, LocalOptions, TargetPath};
use lipinvert::pseudojac::{clarke_sample, hull_min_constant, regularity_index, Constant, OperatorSet};
use lipinvert::registry::{lookup_map, MAP_NAMES};
use lipinvert::{LinOp, Norm};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

fn lq(y: &[f64], q: f64) -> f64 {
    if q.is_infinite() {
        y.iter().fold(0.0, |m: f64, a| m.max(a.abs()))
    } else {
        y.iter().map(|a| a.abs().powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

fn square(n: usize, entries: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(n, n, &entries[..n * n])
}

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig { cases, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(config(100))]

    #[test]
    fn dual_of_lp_is_lq(y in prop::collection::vec(-5.0f64..5.0, 1..5), pi in 0usize..5) {
        let p = [1.0, 1.5, 2.0, 3.0, f64::INFINITY][pi];
        let q = if p == 1.0 { f64::INFINITY } else if p.is_infinite() { 1.0 } else { p / (p - 1.0) };
        let norm = Norm::lp(y.len(), p).unwrap();
        let got = norm.dual_eval(&DVector::from_vec(y.clone())).unwrap();
        let want = lq(&y, q);
        prop_assert!((got - want).abs() <= 1e-10 * want.max(1.0), "p = {p}: {got} vs {want}");
    }

    #[test]
    fn sampled_bidual_approaches_norm(x in prop::collection::vec(-3.0f64..3.0, 2..4), pi in 0usize..4, seed in 0u64..1000) {
        let p = [1.0, 1.5, 3.0, f64::INFINITY][pi];
        let norm = Norm::lp(x.len(), p).unwrap();
        let x = DVector::from_vec(x);
        let nx = norm.eval(&x).unwrap();
        prop_assume!(nx > 1e-3);
        let sup = norm.dual().sample_unit_sphere(1000, seed).iter().map(|y| y.dot(&x)).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(sup <= nx * (1.0 + 1e-9));
        // 2-D spheres are sampled densely enough for a 2% gap; in 3-D the
        // same count leaves gaps up to a few percent near vertices of ℓ₁/ℓ∞
        if x.len() == 2 {
            prop_assert!(sup >= 0.98 * nx, "sup {sup} vs {nx}");
        }
    }

    #[test]
    fn euclidean_constants_are_sigma_min(n in 2usize..4, e in prop::collection::vec(-2.0f64..2.0, 9), seed in 0u64..1000) {
        let a = square(n, &e);
        let sv = a.clone().svd(false, false).singular_values;
        prop_assume!(sv.min() > 0.05 * sv.max());
        let op = LinOp::euclidean(a);
        prop_assert!((op.banach_constant(64, seed) - sv.min()).abs() <= 1e-8);
        prop_assert!((op.dual_banach_constant(64, seed) - sv.min()).abs() <= 1e-8);
    }

    #[test]
    fn rank_deficient_constant_vanishes(n in 2usize..4, u in prop::collection::vec(-2.0f64..2.0, 3), w in prop::collection::vec(-2.0f64..2.0, 3), pi in 0usize..3) {
        let (u, w) = (DVector::from_column_slice(&u[..n]), DVector::from_column_slice(&w[..n]));
        let a = &u * w.transpose();
        let norm = a.norm();
        prop_assume!(norm > 1e-3);
        // rank oracle: pivoted QR
        let qr = a.clone().col_piv_qr();
        let rank = (0..n).filter(|&i| qr.r()[(i, i)].abs() > 1e-10 * norm).count();
        prop_assert!(rank < n);
        let nm = [Norm::l1(n), Norm::l2(n), Norm::lp(n, 3.0).unwrap()][pi].clone();
        let op = LinOp::new(a, nm.clone(), nm).unwrap();
        prop_assert!(op.banach_constant(64, 1).abs() <= 1e-8 * norm);
    }

    #[test]
    fn refinement_never_raises_the_constant(e in prop::collection::vec(-2.0f64..2.0, 4), seed in 0u64..1000) {
        let a = square(2, &e);
        let op = LinOp::new(a, Norm::lp(2, 3.0).unwrap(), Norm::lp(2, 1.5).unwrap()).unwrap();
        let coarse = op.banach_constant(16, seed);
        let fine = op.banach_constant(256, seed);
        prop_assert!(fine <= coarse + 1e-6, "{fine} > {coarse}");
    }

    #[test]
    fn hull_1d_matches_interval_oracle(vals in prop::collection::vec(-4.0f64..4.0, 1..6), seed in 0u64..1000) {
        let ops = vals.iter().map(|&c| LinOp::euclidean(DMatrix::from_element(1, 1, c))).collect();
        let set = OperatorSet::from_ops(v(&[0.0]), ops).unwrap();
        let got = hull_min_constant(&set, Constant::Primal, 4, seed).unwrap().value;
        // dense grid over [min, max], refined by bisection at a sign change
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let grid: Vec<f64> = (0..=10_000).map(|i| lo + (hi - lo) * i as f64 / 10_000.0).collect();
        let mut oracle = grid.iter().fold(f64::INFINITY, |m, c| m.min(c.abs()));
        for w in grid.windows(2) {
            if w[0] * w[1] <= 0.0 {
                let (mut a, mut b) = (w[0], w[1]);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if a * m <= 0.0 { b = m } else { a = m }
                }
                oracle = oracle.min(a.abs().min(b.abs()));
            }
        }
        prop_assert!((got - oracle).abs() <= 1e-9, "{got} vs {oracle}");
    }

    #[test]
    fn superset_never_raises_hull_minimum(e in prop::collection::vec(-2.0f64..2.0, 12), seed in 0u64..1000) {
        let ops: Vec<_> = (0..3).map(|k| LinOp::euclidean(DMatrix::from_column_slice(2, 2, &e[4 * k..4 * k + 4]))).collect();
        let small = OperatorSet::from_ops(v(&[0.0, 0.0]), ops[..2].to_vec()).unwrap();
        let big = OperatorSet::from_ops(v(&[0.0, 0.0]), ops).unwrap();
        let a = hull_min_constant(&small, Constant::Primal, 8, seed).unwrap().value;
        let b = hull_min_constant(&big, Constant::Primal, 8, seed).unwrap().value;
        prop_assert!(b <= a + 1e-6, "{b} > {a}");
    }

    #[test]
    fn weight_integral_matches_adaptive_quadrature(
        steps in prop::collection::vec((0.05f64..2.0, 0.2f64..5.0), 1..6),
        last in 0.2f64..5.0,
        r in 0.1f64..12.0,
    ) {
        let mut b = 0.0;
        let breakpoints: Vec<f64> = steps.iter().map(|(d, _)| { b += d; b }).collect();
        let mut values: Vec<f64> = steps.iter().map(|(_, c)| *c).collect();
        values.push(last);
        let mut sorted = values.clone();
        sorted.sort_by(f64::total_cmp);
        let w = Weight::new(breakpoints, sorted).unwrap();
        let got = w.integral_reciprocal(r);
        let want = adaptive_simpson(&|s| 1.0 / w.eval(s), 0.0, r, 1e-13, 60);
        prop_assert!((got - want).abs() <= 1e-10, "{got} vs {want}");
    }

    #[test]
    fn domain_radius_monotone_and_bounded(drops in prop::collection::vec(0.0f64..0.3, 4..12), alpha in 0.1f64..3.0, r1 in 0.0f64..1.0, r2 in 0.0f64..1.0) {
        let n = drops.len();
        let mut m = alpha;
        let rows: Vec<(f64, f64)> = drops.iter().enumerate().map(|(k, d)| { m = (m - d).max(0.0); ((k + 1) as f64 / n as f64, m) }).collect();
        let profile = RadialProfile { rows, argmin: vec![vec![0.0]; n] };
        let (a, b) = (r1.min(r2), r1.max(r2));
        let (ra, rb) = (domain_radius(&profile, a).unwrap(), domain_radius(&profile, b).unwrap());
        prop_assert!(ra <= rb + 1e-15);
        prop_assert!(rb <= alpha * b + 1e-12);
    }
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let simpson = |a: f64, b: f64| (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b));
    fn rec(simpson: &dyn Fn(f64, f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (l, r) = (simpson(a, m), simpson(m, b));
        if depth == 0 || (l + r - whole).abs() <= 15.0 * tol {
            return l + r + (l + r - whole) / 15.0;
        }
        rec(simpson, a, m, l, 0.5 * tol, depth - 1) + rec(simpson, m, b, r, 0.5 * tol, depth - 1)
    }
    rec(&simpson, a, b, simpson(a, b), tol, depth)
}

proptest! {
    #![proptest_config(config(24))]

    #[test]
    fn clarke_sample_is_deterministic(mi in 0usize..MAP_NAMES.len(), x in -3.0f64..3.0, seed in any::<u64>()) {
        let (f, _) = lookup_map::<f64>(MAP_NAMES[mi]).unwrap();
        let p = DVector::from_element(f.dim_in(), x);
        let a = clarke_sample(&f, &p, 0.1, 16, 1e-6, seed).unwrap();
        let b = clarke_sample(&f, &p, 0.1, 16, 1e-6, seed).unwrap();
        prop_assert_eq!(a.points(), b.points());
        for (s, t) in a.ops().iter().zip(b.ops()) {
            prop_assert!(s.matrix().iter().zip(t.matrix().iter()).all(|(u, w)| u.to_bits() == w.to_bits()));
        }
    }

    #[test]
    fn index_table_grows_as_radius_shrinks(mi in 0usize..MAP_NAMES.len(), x in -3.0f64..3.0, seed in 0u64..1000) {
        let (f, _) = lookup_map::<f64>(MAP_NAMES[mi]).unwrap();
        let p = DVector::from_element(f.dim_in(), x);
        let est = regularity_index(&f, &p, &[1.0, 1e-1, 1e-2, 1e-3], 16, seed).unwrap();
        for w in est.table.windows(2) {
            prop_assert!(w[1].value >= w[0].value * 0.95 - 1e-9, "{:?}", est.table.iter().map(|r| r.value).collect::<Vec<_>>());
        }
    }

    #[test]
    fn returned_inverses_meet_tolerance(mi in 0usize..4, y in -40.0f64..40.0, y2 in -40.0f64..40.0, seed in 0u64..1000) {
        let name = ["sin-perturbed-identity", "identity:2", "linear:[[2,1],[0,3]]", "kink-23"][mi];
        let (f, _) = lookup_map::<f64>(name).unwrap();
        let target = if f.dim_out() == 1 { v(&[y]) } else { v(&[y, y2]) };
        let opts = LiftOptions { seed, ..LiftOptions::default() };
        let (x, trace) = global_invert(&f, &DVector::zeros(f.dim_in()), &target, &opts).unwrap();
        prop_assert!(f.residual(&x, &target) <= opts.tol * target.norm().max(1.0) * 10.0);
        // every accepted lift point lies over the path within the path tolerance
        let path = TargetPath::default_for(&f, &DVector::zeros(f.dim_in()), &target);
        for (t, q) in trace.t.iter().zip(&trace.points) {
            let d = f.target_distance(&f.eval(&DVector::from_vec(q.clone())), &path.point(*t));
            prop_assert!(d <= 1e-8 * target.norm().max(1.0), "t = {t}: {d}");
        }
    }

    #[test]
    fn certified_neighborhood_separates_points(x in -3.0f64..3.0, frac in 0.3f64..0.95, seed in 0u64..1000) {
        let (f, _) = lookup_map::<f64>("sin-perturbed-identity").unwrap();
        let alpha = frac * (1.0 + 0.5 * x.cos());
        let Some(radius) = injectivity_radius(&f, &v(&[x]), alpha, &[1.0, 0.1, 0.01], 16, seed).unwrap() else {
            return Err(TestCaseError::fail("no neighborhood at alpha below the index"));
        };
        let mut rng = lipinvert::rng::rng_from(seed);
        for _ in 0..200 {
            let u: f64 = lipinvert::rng::uniform(&mut rng, x - radius, x + radius);
            let w: f64 = lipinvert::rng::uniform(&mut rng, x - radius, x + radius);
            if u == w { continue; }
            let fu = u + 0.5 * u.sin();
            let fw = w + 0.5 * w.sin();
            prop_assert!((fu - fw).abs() >= (alpha - 5e-2) * (u - w).abs());
            // local inverse Lipschitz bound on the same pair
            let lo = LocalOptions { trust_radius: radius, seed, ..LocalOptions::default() };
            let (iu, iw) = (local_invert(&f, &v(&[x]), &v(&[fu]), lo).unwrap().x[0], local_invert(&f, &v(&[x]), &v(&[fw]), lo).unwrap().x[0]);
            prop_assert!((iu - iw).abs() <= (fu - fw).abs() / (alpha - 5e-2) * (1.0 + 1e-6) + 1e-9);
        }
    }
}

#[test]
fn circle_fibers_from_integer_starts() {
    let (f, _) = lookup_map::<f64>("circle-cover").unwrap();
    let target = v(&[2f64.cos(), 2f64.sin()]);
    let mut width: f64 = 0.0;
    for k in 0..=20 {
        let (x, _) = global_invert(&f, &v(&[k as f64]), &target, &LiftOptions { seed: k, ..LiftOptions::default() }).unwrap();
        let m = ((x[0] - 2.0) / (2.0 * PI)).round();
        width = width.max((x[0] - 2.0 - 2.0 * PI * m).abs());
    }
    assert!(width < 1e-6, "{width}");
    // winding path: lifted endpoint counts the loops
    let (x, _) = global_invert_along(&f, &v(&[0.0]), &TargetPath::Arc { start: 0.0, sweep: -4.0 * PI }, &LiftOptions::default()).unwrap();
    assert!((x[0] + 4.0 * PI).abs() < 1e-6);
}

#[test]
fn certificates_are_reproducible() {
    let (f, _) = lookup_map::<f64>("sin-perturbed-identity").unwrap();
    let a = ball_inclusion_certificate(&f, &v(&[0.3]), 2.0, 8, 99).unwrap().0.to_json();
    let b = ball_inclusion_certificate(&f, &v(&[0.3]), 2.0, 8, 99).unwrap().0.to_json();
    assert_eq!(a, b);
}
