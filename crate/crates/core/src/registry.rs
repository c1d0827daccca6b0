//! Built-in maps, manifolds, weights and combiners with known ground truth.
//!
//! Ground-truth values sit next to the entries and each carries a note with
//! the closed form it comes from; the test suite re-derives every one.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::certify::Weight;
use crate::invert::Combiner;
use crate::manifold::{self, FinslerStructure, ManifoldFlags};
use crate::pseudojac::MapUnderStudy;
use crate::{dense, Error, Norm, Real, Result};

#[derive(Debug, Clone)]
pub enum EntryKind<T: Real> {
    Map(MapUnderStudy<T>),
    Manifold(FinslerStructure<T>),
    Weight(Weight<T>),
    Combiner(Combiner<T>),
}

#[derive(Debug, Clone)]
pub struct RegistryEntry<T: Real> {
    pub name: String,
    pub kind: EntryKind<T>,
    pub ground_truth: BTreeMap<String, f64>,
    /// Closed form behind each ground-truth value.
    pub provenance: BTreeMap<String, String>,
    pub flags: ManifoldFlags,
}

impl<T: Real> RegistryEntry<T> {
    fn new(name: &str, kind: EntryKind<T>, flags: ManifoldFlags) -> Self {
        Self { name: name.into(), kind, ground_truth: BTreeMap::new(), provenance: BTreeMap::new(), flags }
    }

    fn truth(mut self, key: &str, value: f64, note: &str) -> Self {
        self.ground_truth.insert(key.into(), value);
        self.provenance.insert(key.into(), note.into());
        self
    }

    pub fn map(&self) -> Option<&MapUnderStudy<T>> {
        match &self.kind {
            EntryKind::Map(m) => Some(m),
            _ => None,
        }
    }

    pub fn manifold(&self) -> Option<&FinslerStructure<T>> {
        match &self.kind {
            EntryKind::Manifold(m) => Some(m),
            _ => None,
        }
    }

    pub fn weight(&self) -> Option<&Weight<T>> {
        match &self.kind {
            EntryKind::Weight(w) => Some(w),
            _ => None,
        }
    }

    pub fn combiner(&self) -> Option<&Combiner<T>> {
        match &self.kind {
            EntryKind::Combiner(c) => Some(c),
            _ => None,
        }
    }

    /// Hypotheses a certificate should echo as asserted rather than checked.
    pub fn asserted_hypotheses(&self) -> Vec<String> {
        let mut out = vec![];
        if self.flags.complete {
            out.push("X complete (registry flag)".into());
        }
        if self.flags.simply_connected {
            out.push("Y simply connected (registry flag)".into());
        }
        if self.flags.smooth_norm {
            out.push("smooth norm (registry flag)".into());
        }
        out
    }
}

/// Fixed names in the catalogue; parameterized families are
/// `identity:<n>`, `linear:<matrix>`, `euclidean:<n>:<norm>` and
/// `weight:const:<c>`.
pub const NAMES: &[&str] = &[
    "identity:1",
    "identity:2",
    "linear:[[2,0],[0,3]]",
    "abs-kink",
    "kink-23",
    "sin-perturbed-identity",
    "cube",
    "circle-cover",
    "half-sin",
    "two-sin",
    "conformal1d",
    "circle",
    "torus",
    "euclidean:2:l2",
    "weight:const:2",
    "weight:linear-steps",
    "combiner:add",
];

/// Registry maps (the CLI's map vocabulary) used by property sweeps.
pub const MAP_NAMES: &[&str] = &[
    "identity:1",
    "identity:2",
    "linear:[[2,0],[0,3]]",
    "abs-kink",
    "kink-23",
    "sin-perturbed-identity",
    "cube",
    "circle-cover",
    "half-sin",
    "two-sin",
];

const FLAT: ManifoldFlags = ManifoldFlags { complete: true, simply_connected: true, smooth_norm: true };

fn scalar_map<T: Real>(name: &str, f: fn(T) -> T, df: fn(T) -> T) -> MapUnderStudy<T> {
    MapUnderStudy::new(name, 1, 1, move |x: &DVector<T>| DVector::from_element(1, f(x[0])))
        .with_jacobian(move |x: &DVector<T>| DMatrix::from_element(1, 1, df(x[0])))
}

/// Parse `[[a,b],[c,d]]` or `a,b;c,d` into a dense matrix.
pub fn parse_matrix<T: Real>(s: &str) -> Result<DMatrix<T>> {
    let bad = || Error::InvalidArgument(format!("malformed matrix `{s}`"));
    let t = s.trim();
    let rows: Vec<&str> = if t.starts_with("[[") {
        let inner = t.strip_prefix('[').and_then(|x| x.strip_suffix(']')).ok_or_else(bad)?;
        inner.split("],").map(|r| r.trim().trim_start_matches('[').trim_end_matches(']')).collect()
    } else {
        t.split(';').collect()
    };
    let parsed: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| r.split(',').map(|v| v.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>>>())
        .collect::<Result<_>>()?;
    let m = parsed.len();
    let n = parsed.first().map_or(0, Vec::len);
    if m == 0 || n == 0 || parsed.iter().any(|r| r.len() != n) || parsed.iter().flatten().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    Ok(DMatrix::from_fn(m, n, |i, j| T::c(parsed[i][j])))
}

pub fn lookup<T: Real>(name: &str) -> Result<RegistryEntry<T>> {
    let unknown = || Error::UnknownEntry(name.to_string());
    if let Some(n) = name.strip_prefix("identity:") {
        let n: usize = n.parse().map_err(|_| unknown())?;
        if n == 0 {
            return Err(unknown());
        }
        let m = MapUnderStudy::new(name, n, n, |x: &DVector<T>| x.clone())
            .with_jacobian(move |_| DMatrix::identity(n, n))
            .with_lipschitz_hint(T::one());
        return Ok(RegistryEntry::new(name, EntryKind::Map(m), FLAT)
            .truth("index", 1.0, "C(I) = 1")
            .truth("lip", 1.0, "‖I‖ = 1"));
    }
    if let Some(spec) = name.strip_prefix("linear:") {
        let a: DMatrix<T> = parse_matrix(spec)?;
        let (rows, cols) = a.shape();
        let sv = dense::singular_values(&a);
        let smax = sv[0].as_f64();
        let smin = if rows == cols { sv[sv.len() - 1].as_f64() } else { f64::NAN };
        let a2 = a.clone();
        let m = MapUnderStudy::new(name, cols, rows, move |x: &DVector<T>| &a2 * x)
            .with_jacobian(move |_| a.clone())
            .with_lipschitz_hint(T::c(smax));
        return Ok(RegistryEntry::new(name, EntryKind::Map(m), FLAT)
            .truth("index", smin, "smallest singular value (ℓ₂ norms, square matrix)")
            .truth("lip", smax, "largest singular value"));
    }
    if let Some(rest) = name.strip_prefix("euclidean:") {
        let (n, norm) = rest.split_once(':').ok_or_else(unknown)?;
        let n: usize = n.parse().map_err(|_| unknown())?;
        let norm = Norm::parse(norm, n)?;
        let flags = ManifoldFlags { smooth_norm: norm.is_smooth(), ..FLAT };
        return Ok(RegistryEntry::new(name, EntryKind::Manifold(FinslerStructure::flat(norm)), flags));
    }
    if let Some(c) = name.strip_prefix("weight:const:") {
        let c: f64 = c.parse().map_err(|_| unknown())?;
        let w = Weight::constant(T::c(c))?;
        return Ok(RegistryEntry::new(name, EntryKind::Weight(w), ManifoldFlags::default())
            .truth("integral_reciprocal_10", 10.0 / c, "∫₀¹⁰ 1/c = 10/c"));
    }
    let entry = match name {
        "abs-kink" => RegistryEntry::new(
            name,
            EntryKind::Map(scalar_map(name, |x: T| x.abs(), |x: T| if x >= T::zero() { T::one() } else { -T::one() }).with_lipschitz_hint(T::one())),
            FLAT,
        )
        .truth("index_at_0", 0.0, "hull [−1, 1] of the one-sided derivatives contains 0")
        .truth("lip", 1.0, "||x| − |y|| ≤ |x − y|"),
        "kink-23" => RegistryEntry::new(
            name,
            EntryKind::Map(
                scalar_map(name, |x: T| x + x + x.abs(), |x: T| if x >= T::zero() { T::c(3.0) } else { T::one() })
                    .with_lipschitz_hint(T::c(3.0)),
            ),
            FLAT,
        )
        .truth("index_at_0", 1.0, "hull [1, 3] of the derivatives 1 (x < 0) and 3 (x > 0)")
        .truth("inverse_of_3", 1.0, "f(x) = 3x on x > 0")
        .truth("lip", 3.0, "largest one-sided derivative"),
        "sin-perturbed-identity" => RegistryEntry::new(
            name,
            EntryKind::Map(
                scalar_map(name, |x: T| x + T::c(0.5) * x.sin(), |x: T| T::one() + T::c(0.5) * x.cos()).with_lipschitz_hint(T::c(1.5)),
            ),
            FLAT,
        )
        .truth("global_index_lb", 0.5, "f'(x) = 1 + ½cos x ≥ ½")
        .truth("index_at_0", 1.5, "f'(0) = 3/2")
        .truth("index_at_pi", 0.5, "f'(π) = 1/2")
        .truth("lip", 1.5, "f'(x) ≤ 3/2"),
        "cube" => RegistryEntry::new(name, EntryKind::Map(scalar_map(name, |x: T| x * x * x, |x: T| T::c(3.0) * x * x)), FLAT)
            .truth("index_at_0", 0.0, "f'(0) = 0")
            .truth("inverse_of_minus_1", -1.0, "(−1)³ = −1"),
        "circle-cover" => {
            let m = MapUnderStudy::new(name, 1, 2, |x: &DVector<T>| DVector::from_vec(vec![x[0].cos(), x[0].sin()]))
                .with_jacobian(|x: &DVector<T>| DMatrix::from_column_slice(2, 1, &[-x[0].sin(), x[0].cos()]))
                .with_lipschitz_hint(T::one())
                .onto_circle();
            RegistryEntry::new(name, EntryKind::Map(m), ManifoldFlags { complete: true, simply_connected: false, smooth_norm: true })
                .truth("index", 1.0, "unit speed in the angle chart")
                .truth("fiber_spacing", 2.0 * PI, "θ ↦ (cos θ, sin θ) has fibers θ + 2πℤ")
                .truth("three_loop_endpoint", 6.0 * PI, "lift of the 3-loop arc from angle 0")
        }
        "half-sin" => RegistryEntry::new(
            name,
            EntryKind::Map(scalar_map(name, |x: T| T::c(0.5) * x.sin(), |x: T| T::c(0.5) * x.cos()).with_lipschitz_hint(T::c(0.5))),
            FLAT,
        )
        .truth("lip", 0.5, "|g'(x)| = ½|cos x| ≤ ½, equality at 0"),
        "two-sin" => RegistryEntry::new(
            name,
            EntryKind::Map(scalar_map(name, |x: T| T::c(2.0) * x.sin(), |x: T| T::c(2.0) * x.cos()).with_lipschitz_hint(T::c(2.0))),
            FLAT,
        )
        .truth("lip", 2.0, "|g'(x)| = 2|cos x| ≤ 2, equality at 0"),
        "conformal1d" => RegistryEntry::new(name, EntryKind::Manifold(manifold::conformal1d()), FLAT)
            .truth("length_0_1", 1.5, "∫₀¹ (1 + s) ds"),
        "circle" => RegistryEntry::new(
            name,
            EntryKind::Manifold(manifold::circle()),
            ManifoldFlags { complete: true, simply_connected: false, smooth_norm: true },
        )
        .truth("circumference", 2.0 * PI, "arc length of the unit circle"),
        "torus" => RegistryEntry::new(
            name,
            EntryKind::Manifold(manifold::torus()),
            ManifoldFlags { complete: true, simply_connected: false, smooth_norm: true },
        ),
        "weight:linear-steps" => RegistryEntry::new(name, EntryKind::Weight(Weight::linear_steps()), ManifoldFlags::default())
            .truth("integral_reciprocal_10", (1..=10).map(|k| 1.0 / k as f64).sum(), "Σ_{k=1}^{10} 1/k"),
        "combiner:add" => RegistryEntry::new(name, EntryKind::Combiner(Combiner::add()), ManifoldFlags::default()),
        _ => return Err(unknown()),
    };
    Ok(entry)
}

/// Shorthand for registry maps.
pub fn lookup_map<T: Real>(name: &str) -> Result<(MapUnderStudy<T>, RegistryEntry<T>)> {
    let e = lookup::<T>(name)?;
    let m = e.map().cloned().ok_or_else(|| Error::InvalidArgument(format!("`{name}` is not a map")))?;
    Ok((m, e))
}
