//! The parameter space: a flat torus given by a box with periodic identification.
//!
//! Straight-line moves `theta + eta * v` are realized by wrapping each coordinate
//! back into its period, so the compact space never needs a retraction.

use std::ops::Deref;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// A box `[lower_i, lower_i + side_i)` with opposite faces identified.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DomainSpec", into = "DomainSpec")]
pub struct TorusDomain {
    lower: Vec<f64>,
    sides: Vec<f64>,
}

/// Serialized form: `{dim, side_lengths}` with an optional `lower` corner
/// (zeros when absent).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DomainSpec {
    pub dim: usize,
    pub side_lengths: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
}

impl TryFrom<DomainSpec> for TorusDomain {
    type Error = Error;

    fn try_from(spec: DomainSpec) -> Result<Self> {
        check_dim(spec.dim, spec.side_lengths.len())?;
        let lower = spec.lower.unwrap_or_else(|| vec![0.0; spec.dim]);
        TorusDomain::with_lower(lower, spec.side_lengths)
    }
}

impl From<TorusDomain> for DomainSpec {
    fn from(d: TorusDomain) -> Self {
        let lower = if d.lower.iter().all(|&x| x == 0.0) {
            None
        } else {
            Some(d.lower)
        };
        DomainSpec {
            dim: d.sides.len(),
            side_lengths: d.sides,
            lower,
        }
    }
}

impl TorusDomain {
    /// Box `[0, s_i)` in every dimension.
    pub fn new(sides: Vec<f64>) -> Result<Self> {
        let lower = vec![0.0; sides.len()];
        Self::with_lower(lower, sides)
    }

    pub fn with_lower(lower: Vec<f64>, sides: Vec<f64>) -> Result<Self> {
        if sides.is_empty() {
            return Err(Error::InvalidDomain("dimension must be at least 1".into()));
        }
        check_dim(sides.len(), lower.len())?;
        if let Some(s) = sides.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
            return Err(Error::InvalidDomain(format!(
                "side lengths must be positive and finite, got {s}"
            )));
        }
        if lower.iter().any(|l| !l.is_finite()) {
            return Err(Error::InvalidDomain("lower corner must be finite".into()));
        }
        Ok(Self { lower, sides })
    }

    /// Common side length `side` in `dim` dimensions, starting at the origin.
    pub fn cube(dim: usize, side: f64) -> Result<Self> {
        Self::new(vec![side; dim])
    }

    /// Box centered on the origin: `[-s/2, s/2)` per dimension.
    pub fn centered(sides: Vec<f64>) -> Result<Self> {
        let lower = sides.iter().map(|s| -0.5 * s).collect();
        Self::with_lower(lower, sides)
    }

    pub fn dim(&self) -> usize {
        self.sides.len()
    }

    pub fn sides(&self) -> &[f64] {
        &self.sides
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.sides).map(|(l, s)| l + s).collect()
    }

    /// Largest geodesic distance on the torus: half the norm of the side vector.
    pub fn diameter(&self) -> f64 {
        0.5 * self.sides.iter().map(|s| s * s).sum::<f64>().sqrt()
    }

    pub fn volume(&self) -> f64 {
        self.sides.iter().product()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.sides))
                .all(|(&x, (&l, &s))| x >= l && x < l + s)
    }

    pub fn wrap(&self, raw: &[f64]) -> Result<Point> {
        check_dim(self.dim(), raw.len())?;
        let mut coords = raw.to_vec();
        self.wrap_in_place(&mut coords);
        Ok(Point(coords))
    }

    /// Canonicalizes `x` into the box. The caller guarantees `x.len() == dim`.
    pub fn wrap_in_place(&self, x: &mut [f64]) {
        debug_assert_eq!(x.len(), self.dim());
        for ((xi, &l), &s) in x.iter_mut().zip(&self.lower).zip(&self.sides) {
            let offset = *xi - l;
            if (0.0..s).contains(&offset) {
                continue;
            }
            let mut r = offset.rem_euclid(s);
            // rem_euclid can round up to exactly `s` for tiny negative offsets.
            if r >= s {
                r = 0.0;
            }
            *xi = l + r;
        }
    }

    /// Writes `wrap(base + t * dir)` into `out`.
    pub fn advance_into(&self, base: &[f64], dir: &[f64], t: f64, out: &mut [f64]) {
        for ((o, b), v) in out.iter_mut().zip(base).zip(dir) {
            *o = b + t * v;
        }
        self.wrap_in_place(out);
    }

    /// Per-coordinate minimal signed displacement from `a` to `b`.
    pub fn displacement(&self, a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), a.len())?;
        check_dim(self.dim(), b.len())?;
        Ok(a.iter()
            .zip(b)
            .zip(&self.sides)
            .map(|((a, b), s)| {
                let d = (b - a).rem_euclid(*s);
                if d > 0.5 * s {
                    d - s
                } else {
                    d
                }
            })
            .collect())
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        let d = self.displacement(a, b)?;
        Ok(d.iter().map(|x| x * x).sum::<f64>().sqrt())
    }

    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        let mut coords: Vec<f64> = self
            .lower
            .iter()
            .zip(&self.sides)
            .map(|(l, s)| l + s * rng.random::<f64>())
            .collect();
        self.wrap_in_place(&mut coords);
        Point(coords)
    }
}

/// A canonical point of a [`TorusDomain`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Point(Vec<f64>);

impl Point {
    /// Wraps `coords` into `domain`.
    pub fn new(domain: &TorusDomain, coords: Vec<f64>) -> Result<Self> {
        domain.wrap(&coords)
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn coords_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl AsRef<[f64]> for Point {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

impl Deref for Point {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sq(sides: &[f64]) -> TorusDomain {
        TorusDomain::new(sides.to_vec()).unwrap()
    }

    #[test]
    fn wrap_examples() {
        let d = sq(&[10.0, 10.0]);
        assert_eq!(d.wrap(&[3.5, 4.0]).unwrap().coords(), &[3.5, 4.0]);
        assert_eq!(d.wrap(&[12.5, -1.0]).unwrap().coords(), &[2.5, 9.0]);
        let d1 = sq(&[10.0]);
        assert_eq!(d1.wrap(&[-23.0]).unwrap().coords(), &[7.0]);
    }

    #[test]
    fn wrap_rejects_wrong_dimension() {
        let d = sq(&[10.0, 10.0]);
        assert!(matches!(
            d.wrap(&[1.0]),
            Err(Error::DimensionMismatch { expected: 2, found: 1 })
        ));
    }

    #[test]
    fn tiny_negative_offsets_stay_in_range() {
        let d = sq(&[10.0]);
        let p = d.wrap(&[-1e-18]).unwrap();
        assert!(p[0] >= 0.0 && p[0] < 10.0);
    }

    #[test]
    fn distance_examples() {
        let d = sq(&[10.0, 10.0]);
        assert_eq!(d.distance(&[1.0, 1.0], &[1.0, 1.0]).unwrap(), 0.0);
        assert_eq!(sq(&[10.0]).distance(&[1.0], &[9.0]).unwrap(), 2.0);
        let far = d.distance(&[0.0, 0.0], &[5.0, 5.0]).unwrap();
        assert!((far - 50f64.sqrt()).abs() < 1e-12);
        assert!((far - d.diameter()).abs() < 1e-12);
    }

    #[test]
    fn invalid_domains() {
        assert!(TorusDomain::new(vec![]).is_err());
        assert!(TorusDomain::new(vec![1.0, 0.0]).is_err());
        assert!(TorusDomain::new(vec![-1.0]).is_err());
        assert!(TorusDomain::with_lower(vec![0.0], vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn serde_shape() {
        let d = sq(&[10.0, 10.0]);
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(json, r#"{"dim":2,"side_lengths":[10.0,10.0]}"#);
        let c = TorusDomain::centered(vec![4.0]).unwrap();
        let back: TorusDomain = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        assert!(serde_json::from_str::<TorusDomain>(r#"{"dim":2,"side_lengths":[1.0]}"#).is_err());
    }

    #[test]
    fn triangle_inequality_on_random_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for dim in 1..=4 {
            let sides: Vec<f64> = (0..dim).map(|i| 3.0 + i as f64 * 2.5).collect();
            let d = TorusDomain::centered(sides).unwrap();
            for _ in 0..1000 {
                let a = d.sample_uniform(&mut rng);
                let b = d.sample_uniform(&mut rng);
                let c = d.sample_uniform(&mut rng);
                let ab = d.distance(&a, &b).unwrap();
                let bc = d.distance(&b, &c).unwrap();
                let ac = d.distance(&a, &c).unwrap();
                assert!(ac <= ab + bc + 1e-12);
                assert!(ab <= d.diameter() + 1e-12);
                assert!((ab - d.distance(&b, &a).unwrap()).abs() < 1e-12);
            }
        }
    }

    proptest! {
        #[test]
        fn wrap_lands_in_box_and_is_idempotent(
            raw in prop::collection::vec(-1e6f64..1e6, 3),
            sides in prop::collection::vec(0.1f64..50.0, 3),
            lower in prop::collection::vec(-20f64..20.0, 3),
        ) {
            let d = TorusDomain::with_lower(lower, sides).unwrap();
            let p = d.wrap(&raw).unwrap();
            prop_assert!(d.contains(&p));
            let q = d.wrap(&p).unwrap();
            prop_assert_eq!(p, q);
        }

        #[test]
        fn distance_bounded_by_diameter(
            a in prop::collection::vec(-100f64..100.0, 2),
            b in prop::collection::vec(-100f64..100.0, 2),
        ) {
            let d = TorusDomain::new(vec![7.0, 3.0]).unwrap();
            let dist = d.distance(&a, &b).unwrap();
            prop_assert!(dist <= d.diameter() + 1e-9);
        }
    }
}
