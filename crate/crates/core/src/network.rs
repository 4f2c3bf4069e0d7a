//! Geometry of the compact star-shaped network.
//!
//! The network is a union of `I` rays, each isometric to `[0, R]`, glued at a
//! single junction point (the vertex). A point is addressed by a 1-based ray
//! index together with a coordinate in `[0, R]`; every point with coordinate
//! zero belongs to the same equivalence class, the vertex. The geodesic
//! metric measures distance within a ray directly and across rays through
//! the vertex.

use std::sync::Arc;

use crate::error::{Error, Result};

/// Relative tolerance for vertex agreement of [`VertexRule::Continuous`]
/// functions. Discrete solutions carry solver tolerance, so exact equality
/// is not demanded.
pub const VERTEX_CONTINUITY_RTOL: f64 = 1e-9;

/// A compact star-shaped network: `ray_count` rays of common length
/// `ray_length` joined at one vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StarNetwork {
    ray_count: usize,
    ray_length: f64,
}

impl StarNetwork {
    /// Requires at least two rays and a strictly positive length.
    pub fn new(ray_count: usize, ray_length: f64) -> Result<Self> {
        if ray_count < 2 {
            return Err(Error::Domain(format!(
                "a star network needs at least 2 rays, got {ray_count}"
            )));
        }
        if !ray_length.is_finite() || ray_length <= 0.0 {
            return Err(Error::Domain(format!(
                "ray length must be finite and positive, got {ray_length}"
            )));
        }
        Ok(Self { ray_count, ray_length })
    }

    pub fn ray_count(&self) -> usize {
        self.ray_count
    }

    pub fn ray_length(&self) -> f64 {
        self.ray_length
    }

    /// Builds a point on ray `ray` (1-based) at coordinate `coord`.
    pub fn point(&self, ray: usize, coord: f64) -> Result<NetworkPoint> {
        if ray == 0 || ray > self.ray_count {
            return Err(Error::Domain(format!(
                "ray index {ray} outside 1..={}",
                self.ray_count
            )));
        }
        if !coord.is_finite() || coord < 0.0 || coord > self.ray_length {
            return Err(Error::Domain(format!(
                "coordinate {coord} outside [0, {}]",
                self.ray_length
            )));
        }
        Ok(NetworkPoint { ray, coord })
    }

    /// The junction point. Its ray index is conventional: all rays meet here.
    pub fn vertex(&self) -> NetworkPoint {
        NetworkPoint { ray: 1, coord: 0.0 }
    }
}

/// A point `(x, i)` of the network. Points with `coord == 0` are identified
/// with each other regardless of the ray index.
#[derive(Debug, Clone, Copy)]
pub struct NetworkPoint {
    ray: usize,
    coord: f64,
}

impl NetworkPoint {
    pub fn ray(&self) -> usize {
        self.ray
    }

    pub fn coord(&self) -> f64 {
        self.coord
    }

    pub fn is_vertex(&self) -> bool {
        self.coord == 0.0
    }
}

impl PartialEq for NetworkPoint {
    fn eq(&self, other: &Self) -> bool {
        // The vertex is one equivalence class: (0, i) == (0, j).
        if self.is_vertex() && other.is_vertex() {
            return true;
        }
        self.ray == other.ray && self.coord == other.coord
    }
}

/// Geodesic distance on the star network: `|x - y|` within a ray, `x + y`
/// across distinct rays (the path runs through the vertex).
pub fn geodesic_distance(
    network: &StarNetwork,
    p: &NetworkPoint,
    q: &NetworkPoint,
) -> Result<f64> {
    for pt in [p, q] {
        if !pt.coord.is_finite() || pt.coord < 0.0 || pt.coord > network.ray_length() {
            return Err(Error::Domain(format!(
                "coordinate {} outside [0, {}]",
                pt.coord,
                network.ray_length()
            )));
        }
        if pt.ray == 0 || pt.ray > network.ray_count() {
            return Err(Error::Domain(format!(
                "ray index {} outside 1..={}",
                pt.ray,
                network.ray_count()
            )));
        }
    }
    if p.ray == q.ray {
        Ok((p.coord - q.coord).abs())
    } else {
        Ok(p.coord + q.coord)
    }
}

/// How a [`RayFunction`] resolves its value at the vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VertexRule {
    /// All rays must agree at 0 (within [`VERTEX_CONTINUITY_RTOL`]).
    Continuous,
    /// Vertex value is `min_j f_j(0)`, the lower semicontinuous envelope.
    LowerEnvelope,
    /// Vertex value is `max_j f_j(0)`, the upper semicontinuous envelope.
    UpperEnvelope,
}

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A real function on the network given by one scalar function per ray plus
/// a vertex rule. Immutable after construction.
#[derive(Clone)]
pub struct RayFunction {
    per_ray: Vec<ScalarFn>,
    rule: VertexRule,
}

impl std::fmt::Debug for RayFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RayFunction")
            .field("rays", &self.per_ray.len())
            .field("rule", &self.rule)
            .finish()
    }
}

impl RayFunction {
    /// Wraps closures, one per ray.
    pub fn from_closures<F>(fns: Vec<F>, rule: VertexRule) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        if fns.len() < 2 {
            return Err(Error::Domain(format!(
                "a ray function needs at least 2 rays, got {}",
                fns.len()
            )));
        }
        Ok(Self {
            per_ray: fns.into_iter().map(|f| Arc::new(f) as ScalarFn).collect(),
            rule,
        })
    }

    /// Linear interpolation of per-ray samples on a uniform grid over
    /// `[0, ray_length]`. Values outside the grid hold the end values.
    pub fn from_grids(grids: Vec<Vec<f64>>, ray_length: f64, rule: VertexRule) -> Result<Self> {
        if grids.len() < 2 {
            return Err(Error::Domain(format!(
                "a ray function needs at least 2 rays, got {}",
                grids.len()
            )));
        }
        if !ray_length.is_finite() || ray_length <= 0.0 {
            return Err(Error::Domain(format!(
                "ray length must be finite and positive, got {ray_length}"
            )));
        }
        let mut per_ray: Vec<ScalarFn> = Vec::with_capacity(grids.len());
        for (i, values) in grids.into_iter().enumerate() {
            if values.len() < 2 {
                return Err(Error::Shape(format!(
                    "ray {}: a grid needs at least 2 samples, got {}",
                    i + 1,
                    values.len()
                )));
            }
            let h = ray_length / (values.len() - 1) as f64;
            per_ray.push(Arc::new(move |x: f64| {
                let t = (x / h).clamp(0.0, (values.len() - 1) as f64);
                let k = (t.floor() as usize).min(values.len() - 2);
                let w = t - k as f64;
                values[k] * (1.0 - w) + values[k + 1] * w
            }));
        }
        Ok(Self { per_ray, rule })
    }

    pub fn ray_count(&self) -> usize {
        self.per_ray.len()
    }

    pub fn rule(&self) -> VertexRule {
        self.rule
    }

    /// Evaluates ray `ray` (1-based) at coordinate `x`. At `x == 0` this is
    /// the raw per-ray limit, not the vertex value.
    pub fn eval_on_ray(&self, ray: usize, x: f64) -> Result<f64> {
        if ray == 0 || ray > self.per_ray.len() {
            return Err(Error::Domain(format!(
                "ray index {ray} outside 1..={}",
                self.per_ray.len()
            )));
        }
        Ok((self.per_ray[ray - 1])(x))
    }

    /// Evaluates at a network point, resolving the vertex by the declared rule.
    pub fn eval(&self, point: &NetworkPoint) -> Result<f64> {
        if point.is_vertex() {
            vertex_value(self)
        } else {
            self.eval_on_ray(point.ray(), point.coord())
        }
    }
}

/// Applies the declared vertex rule to the ray limits at 0.
///
/// For the continuous rule the limits must agree within
/// `VERTEX_CONTINUITY_RTOL * max(1, |f_1(0)|)`; the error names the two rays
/// that disagree the most.
pub fn vertex_value(f: &RayFunction) -> Result<f64> {
    let at_zero: Vec<f64> = (1..=f.ray_count())
        .map(|i| f.eval_on_ray(i, 0.0))
        .collect::<Result<_>>()?;
    match f.rule {
        VertexRule::LowerEnvelope => Ok(at_zero.iter().copied().fold(f64::INFINITY, f64::min)),
        VertexRule::UpperEnvelope => Ok(at_zero.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
        VertexRule::Continuous => {
            let (mut lo, mut hi) = (0usize, 0usize);
            for (k, &v) in at_zero.iter().enumerate() {
                if v < at_zero[lo] {
                    lo = k;
                }
                if v > at_zero[hi] {
                    hi = k;
                }
            }
            let tolerance = VERTEX_CONTINUITY_RTOL * at_zero[0].abs().max(1.0);
            if at_zero[hi] - at_zero[lo] > tolerance {
                return Err(Error::VertexMismatch {
                    ray_a: lo + 1,
                    ray_b: hi + 1,
                    value_a: at_zero[lo],
                    value_b: at_zero[hi],
                    tolerance,
                });
            }
            Ok(at_zero[0])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn net() -> StarNetwork {
        StarNetwork::new(2, 1.0).unwrap()
    }

    #[test]
    fn rejects_degenerate_networks() {
        assert!(StarNetwork::new(1, 1.0).is_err());
        assert!(StarNetwork::new(2, 0.0).is_err());
        assert!(StarNetwork::new(2, -1.0).is_err());
    }

    #[test]
    fn distance_same_ray() {
        let n = net();
        let p = n.point(1, 0.3).unwrap();
        let q = n.point(1, 0.5).unwrap();
        let d = geodesic_distance(&n, &p, &q).unwrap();
        assert!((d - 0.2).abs() < 1e-15);
    }

    #[test]
    fn distance_across_rays() {
        let n = net();
        let p = n.point(1, 0.3).unwrap();
        let q = n.point(2, 0.5).unwrap();
        let d = geodesic_distance(&n, &p, &q).unwrap();
        assert!((d - 0.8).abs() < 1e-15);
    }

    #[test]
    fn vertex_is_one_point() {
        let n = net();
        let p = n.point(1, 0.0).unwrap();
        let q = n.point(2, 0.0).unwrap();
        assert_eq!(p, q);
        assert_eq!(geodesic_distance(&n, &p, &q).unwrap(), 0.0);
    }

    #[test]
    fn distance_rejects_out_of_range() {
        let n = net();
        let p = NetworkPoint { ray: 1, coord: 1.5 };
        let q = n.vertex();
        assert!(matches!(geodesic_distance(&n, &p, &q), Err(Error::Domain(_))));
    }

    #[test]
    fn zero_iff_equal_under_identification() {
        let n = net();
        let p = n.point(1, 0.4).unwrap();
        let q = n.point(2, 0.4).unwrap();
        let d = geodesic_distance(&n, &p, &q).unwrap();
        assert!(d > 0.0);
        assert_ne!(p, q);
        let same = n.point(1, 0.4).unwrap();
        assert_eq!(geodesic_distance(&n, &p, &same).unwrap(), 0.0);
        assert_eq!(p, same);
    }

    /// Triangle inequality over 10^4 random triples, exact up to 1e-12, and
    /// distance-to-vertex identity.
    #[test]
    fn triangle_inequality_random_triples() {
        let n = StarNetwork::new(4, 2.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let draw = |rng: &mut ChaCha8Rng| {
            let ray = rng.random_range(1..=4);
            let coord = rng.random_range(0.0..2.5);
            n.point(ray, coord).unwrap()
        };
        for _ in 0..10_000 {
            let (p, q, r) = (draw(&mut rng), draw(&mut rng), draw(&mut rng));
            let pq = geodesic_distance(&n, &p, &q).unwrap();
            let qr = geodesic_distance(&n, &q, &r).unwrap();
            let pr = geodesic_distance(&n, &p, &r).unwrap();
            assert!(pr <= pq + qr + 1e-12, "triangle violated: {pr} > {pq} + {qr}");
            assert!(
                (geodesic_distance(&n, &p, &n.vertex()).unwrap() - p.coord()).abs() <= 1e-15,
                "distance to vertex must equal the coordinate"
            );
        }
    }

    #[test]
    fn vertex_rules() {
        let f = RayFunction::from_closures(
            vec![|_x: f64| 1.0, |_x: f64| 0.5],
            VertexRule::LowerEnvelope,
        )
        .unwrap();
        assert_eq!(vertex_value(&f).unwrap(), 0.5);

        let g = RayFunction::from_closures(
            vec![|_x: f64| 1.0, |_x: f64| 0.5],
            VertexRule::UpperEnvelope,
        )
        .unwrap();
        assert_eq!(vertex_value(&g).unwrap(), 1.0);

        let h = RayFunction::from_closures(
            vec![|_x: f64| 1.0, |_x: f64| 1.0],
            VertexRule::Continuous,
        )
        .unwrap();
        assert_eq!(vertex_value(&h).unwrap(), 1.0);
    }

    #[test]
    fn continuity_violation_names_rays() {
        let f = RayFunction::from_closures(
            vec![|_x: f64| 1.0, |_x: f64| 0.5, |_x: f64| 0.9],
            VertexRule::Continuous,
        )
        .unwrap();
        match vertex_value(&f) {
            Err(Error::VertexMismatch { ray_a, ray_b, .. }) => {
                assert_eq!((ray_a, ray_b), (2, 1));
            }
            other => panic!("expected vertex mismatch, got {other:?}"),
        }
    }

    #[test]
    fn grid_interpolation_is_linear() {
        let f = RayFunction::from_grids(
            vec![vec![0.0, 1.0, 4.0], vec![0.0, -1.0, -4.0]],
            1.0,
            VertexRule::Continuous,
        )
        .unwrap();
        // Midpoint of the first segment on ray 1: average of 0 and 1.
        assert!((f.eval_on_ray(1, 0.25).unwrap() - 0.5).abs() < 1e-15);
        assert!((f.eval_on_ray(1, 0.75).unwrap() - 2.5).abs() < 1e-15);
        assert!((f.eval_on_ray(2, 0.75).unwrap() + 2.5).abs() < 1e-15);
        assert_eq!(vertex_value(&f).unwrap(), 0.0);
    }
}
