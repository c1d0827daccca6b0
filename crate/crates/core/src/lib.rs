//! Certification and solving toolkit for locally Lipschitz maps between
//! finite-dimensional normed spaces and charted Finsler manifolds.
//!
//! Everything is generic over the scalar type (`f32` or `f64`) through
//! [`Real`]; the `*64` aliases below fix it to `f64`.

// `!(x > 0)` style guards are deliberate: they also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod certify;
pub mod dense;
pub mod error;
pub mod invert;
pub mod linop;
pub mod manifold;
pub mod norms;
pub mod pseudojac;
pub mod registry;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use linop::LinOp;
pub use norms::{Norm, NormKind};
pub use scalar::Real;

pub type Norm64 = Norm<f64>;
pub type LinOp64 = LinOp<f64>;
pub type MapUnderStudy64 = pseudojac::MapUnderStudy<f64>;
pub type OperatorSet64 = pseudojac::OperatorSet<f64>;
pub type FinslerStructure64 = manifold::FinslerStructure<f64>;
pub type Weight64 = certify::Weight<f64>;
pub type Combiner64 = invert::Combiner<f64>;
pub type RegistryEntry64 = registry::RegistryEntry<f64>;
