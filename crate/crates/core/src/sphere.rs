//! Maps onto the unit sphere and the stereographic planes used to edit them.

use nalgebra::{Matrix3, Rotation3, Unit};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::mesh::Vec3;

pub type C64 = Complex64;

/// Vertices closer than this to a projection pole are rejected.
pub const POLE_TOLERANCE: f64 = 1e-9;

/// Per-vertex positions on the unit sphere.
#[derive(Debug, Clone, PartialEq)]
pub struct SphericalMap {
    points: Vec<Vec3>,
}

impl SphericalMap {
    /// Normalizes every point; fails on a zero or non-finite point.
    pub fn new(points: Vec<Vec3>) -> Result<Self> {
        let points = points
            .into_iter()
            .enumerate()
            .map(|(i, p)| {
                let n = p.norm();
                if n > 0.0 && n.is_finite() {
                    Ok(p / n)
                } else {
                    Err(Error::InvalidInput(format!("point {i} cannot be normalized")))
                }
            })
            .collect::<Result<_>>()?;
        Ok(SphericalMap { points })
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn into_points(self) -> Vec<Vec3> {
        self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn rotated(&self, r: &Matrix3<f64>) -> SphericalMap {
        SphericalMap {
            points: self.points.iter().map(|p| (r * p).normalize()).collect(),
        }
    }

    /// Largest Euclidean distance between corresponding points.
    pub fn max_displacement(&self, other: &SphericalMap) -> f64 {
        self.points
            .iter()
            .zip(&other.points)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }
}

/// Per-vertex complex coordinates in a stereographic plane.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanarMap {
    pub points: Vec<C64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pole {
    North,
    South,
}

/// North: `(x + iy) / (1 - z)`; south: `(x + iy) / (1 + z)`.
#[inline]
pub fn project_point(p: &Vec3, pole: Pole) -> C64 {
    match pole {
        Pole::North => C64::new(p.x, p.y) / (1.0 - p.z),
        Pole::South => C64::new(p.x, p.y) / (1.0 + p.z),
    }
}

#[inline]
pub fn unproject_point(w: C64, pole: Pole) -> Vec3 {
    let r2 = w.norm_sqr();
    let d = 1.0 + r2;
    match pole {
        Pole::North => Vec3::new(2.0 * w.re / d, 2.0 * w.im / d, (r2 - 1.0) / d),
        Pole::South => Vec3::new(2.0 * w.re / d, 2.0 * w.im / d, (1.0 - r2) / d),
    }
}

pub fn stereographic(map: &SphericalMap, pole: Pole) -> Result<PlanarMap> {
    let pole_point = match pole {
        Pole::North => Vec3::new(0.0, 0.0, 1.0),
        Pole::South => Vec3::new(0.0, 0.0, -1.0),
    };
    let points = map
        .points()
        .iter()
        .enumerate()
        .map(|(vertex, p)| {
            if (p - pole_point).norm() <= POLE_TOLERANCE {
                Err(Error::VertexAtPole { vertex })
            } else {
                Ok(project_point(p, pole))
            }
        })
        .collect::<Result<_>>()?;
    Ok(PlanarMap { points })
}

pub fn inverse_stereographic(plane: &PlanarMap, pole: Pole) -> SphericalMap {
    SphericalMap {
        points: plane
            .points
            .iter()
            .map(|&w| unproject_point(w, pole).normalize())
            .collect(),
    }
}

/// Homogeneous coordinates `(p : q)` with `p / q` the north-pole projection.
/// Well conditioned everywhere, including at the north pole itself.
#[inline]
pub fn to_homogeneous(x: &Vec3) -> (C64, C64) {
    if x.z <= 0.0 {
        (C64::new(x.x, x.y), C64::new(1.0 - x.z, 0.0))
    } else {
        // (x + iy)/(1 - z) = (1 + z)/(x - iy) on the sphere.
        (C64::new(1.0 + x.z, 0.0), C64::new(x.x, -x.y))
    }
}

#[inline]
pub fn from_homogeneous(p: C64, q: C64) -> Vec3 {
    let pq = p * q.conj();
    let (a, b) = (p.norm_sqr(), q.norm_sqr());
    let s = a + b;
    Vec3::new(2.0 * pq.re / s, 2.0 * pq.im / s, (a - b) / s).normalize()
}

/// Rotation taking the unit direction `from` onto `to`.
pub fn rotation_between(from: &Vec3, to: &Vec3) -> Matrix3<f64> {
    match Rotation3::rotation_between(from, to) {
        Some(r) => *r.matrix(),
        None => {
            // Antipodal: half turn about any axis orthogonal to `from`.
            let helper = if from.x.abs() < 0.9 {
                Vec3::new(1.0, 0.0, 0.0)
            } else {
                Vec3::new(0.0, 1.0, 0.0)
            };
            let axis = Unit::new_normalize(from.cross(&helper));
            *Rotation3::from_axis_angle(&axis, std::f64::consts::PI).matrix()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z).normalize()
    }

    #[test]
    fn known_values() {
        assert_eq!(project_point(&Vec3::new(0.0, 0.0, -1.0), Pole::North), C64::new(0.0, 0.0));
        assert_eq!(project_point(&Vec3::new(1.0, 0.0, 0.0), Pole::North), C64::new(1.0, 0.0));
        assert_eq!(unproject_point(C64::new(0.0, 0.0), Pole::North), Vec3::new(0.0, 0.0, -1.0));
        assert_eq!(unproject_point(C64::new(1.0, 0.0), Pole::North), Vec3::new(1.0, 0.0, 0.0));
        assert_eq!(unproject_point(C64::new(0.0, 0.0), Pole::South), Vec3::new(0.0, 0.0, 1.0));
    }

    #[test]
    fn large_values_approach_north_pole() {
        let mut last = -1.0;
        for k in 0..12 {
            let z = unproject_point(C64::new(10f64.powi(k), 0.0), Pole::North).z;
            assert!(z >= last);
            last = z;
        }
        assert!(1.0 - last < 1e-20 + 1e-15);
    }

    #[test]
    fn vertex_at_pole_rejected() {
        let m = SphericalMap::new(vec![Vec3::new(0.0, 0.0, 1.0), Vec3::new(1.0, 0.0, 0.0)]).unwrap();
        assert!(matches!(stereographic(&m, Pole::North), Err(Error::VertexAtPole { vertex: 0 })));
        assert!(stereographic(&m, Pole::South).is_ok());
    }

    #[test]
    fn antipodal_rotation() {
        let a = Vec3::new(0.0, 0.0, 1.0);
        let r = rotation_between(&a, &-a);
        assert!((r * a + a).norm() < 1e-15);
        assert!((r.determinant() - 1.0).abs() < 1e-14);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn roundtrip_both_poles(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -0.99f64..0.99) {
            prop_assume!(x * x + y * y > 1e-2);
            let p = unit(x, y, z);
            for pole in [Pole::North, Pole::South] {
                let q = unproject_point(project_point(&p, pole), pole);
                prop_assert!((p - q).norm() < 1e-12);
            }
        }

        #[test]
        fn homogeneous_roundtrip(x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
            prop_assume!(x * x + y * y + z * z > 1e-6);
            let p = unit(x, y, z);
            let (a, b) = to_homogeneous(&p);
            prop_assert!((from_homogeneous(a, b) - p).norm() < 1e-12);
            if p.z < 0.9 {
                let w = project_point(&p, Pole::North);
                prop_assert!((a / b - w).norm() < 1e-9 * (1.0 + w.norm()));
            }
        }
    }
}
