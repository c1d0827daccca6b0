//! The library is generic over the scalar; spot checks in `f32`.

use lipinvert::certify::ball_inclusion_certificate;
use lipinvert::invert::{global_invert, LiftOptions};
use lipinvert::pseudojac::regularity_index;
use lipinvert::registry::lookup_map;
use lipinvert::{LinOp, Norm};
use nalgebra::{DMatrix, DVector};

#[test]
fn kink_index_in_f32() {
    let (f, e) = lookup_map::<f32>("kink-23").unwrap();
    let idx = regularity_index(&f, &DVector::from_element(1, 0.0f32), &[1e-1, 1e-2], 32, 3).unwrap().value;
    assert!((idx as f64 - e.ground_truth["index_at_0"]).abs() < 1e-4, "{idx}");
}

#[test]
fn banach_constant_in_f32() {
    let op = LinOp::euclidean(DMatrix::from_row_slice(2, 2, &[2.0f32, 1.0, 0.0, 3.0]));
    let want = DMatrix::from_row_slice(2, 2, &[2.0f64, 1.0, 0.0, 3.0]).svd(false, false).singular_values.min();
    assert!((op.banach_constant(64, 1) as f64 - want).abs() < 1e-5);
    let l1 = LinOp::new(DMatrix::identity(2, 2), Norm::<f32>::l1(2), Norm::l1(2)).unwrap();
    assert!((l1.banach_constant(64, 1) - 1.0).abs() < 1e-5);
}

#[test]
fn lift_in_f32() {
    let (f, _) = lookup_map::<f32>("sin-perturbed-identity").unwrap();
    let opts = LiftOptions { tol: 1e-5f32, ..LiftOptions::default() };
    let (x, _) = global_invert(&f, &DVector::from_element(1, 0.0f32), &DVector::from_element(1, 10.0f32), &opts).unwrap();
    assert!((x[0] + 0.5 * x[0].sin() - 10.0).abs() < 1e-4);
    let (cert, _) = ball_inclusion_certificate(&lookup_map::<f32>("identity:1").unwrap().0, &DVector::from_element(1, 0.0f32), 1.0, 4, 2).unwrap();
    assert!(cert.numbers["varrho"] > 0.99);
}
