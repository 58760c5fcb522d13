use crate::error::{Error, Result};
use crate::mesh::{TriMesh, Vec3};
use crate::sphere::SphericalMap;

/// Containment slack on the normalized edge determinants.
const EDGE_TOLERANCE: f64 = 1e-12;

/// A face of the spherical image and barycentric coordinates of the query's
/// gnomonic projection onto that face's plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Location {
    pub face: usize,
    pub bary: [f64; 3],
}

/// Uniform grid over `[-1, 1]³` bucketing the faces of a spherical map.
#[derive(Debug, Clone)]
pub struct SphereLocator {
    faces: Vec<[usize; 3]>,
    points: Vec<Vec3>,
    sign: f64,
    cells: usize,
    buckets: Vec<Vec<usize>>,
}

fn det(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    a.dot(&b.cross(c))
}

impl SphereLocator {
    pub fn new(mesh: &TriMesh, map: &SphericalMap) -> Result<Self> {
        if map.len() != mesh.num_vertices() {
            return Err(Error::InvalidInput("map does not match the mesh".into()));
        }
        let points = map.points().to_vec();
        let cells = ((mesh.num_faces() as f64).sqrt() / 2.0).ceil().clamp(1.0, 128.0) as usize;
        let mut buckets = vec![Vec::new(); cells * cells * cells];
        let cell = |x: f64| (((x + 1.0) / 2.0 * cells as f64).floor() as isize).clamp(0, cells as isize - 1) as usize;
        for (fi, f) in mesh.faces().iter().enumerate() {
            let p = [points[f[0]], points[f[1]], points[f[2]]];
            let edge = (0..3).map(|k| (p[k] - p[(k + 1) % 3]).norm()).fold(0.0, f64::max);
            // The spherical patch bulges past its chord triangle by at most 1 − cos θ.
            let pad = edge * edge / 2.0 + 1e-9;
            let mut lo = [0usize; 3];
            let mut hi = [0usize; 3];
            for d in 0..3 {
                let min = p.iter().map(|v| v[d]).fold(f64::INFINITY, f64::min) - pad;
                let max = p.iter().map(|v| v[d]).fold(f64::NEG_INFINITY, f64::max) + pad;
                lo[d] = cell(min);
                hi[d] = cell(max);
            }
            for i in lo[0]..=hi[0] {
                for j in lo[1]..=hi[1] {
                    for k in lo[2]..=hi[2] {
                        buckets[(i * cells + j) * cells + k].push(fi);
                    }
                }
            }
        }
        Ok(SphereLocator {
            faces: mesh.faces().to_vec(),
            points,
            sign: mesh.orientation(),
            cells,
            buckets,
        })
    }

    fn test(&self, fi: usize, q: &Vec3) -> Option<[f64; 3]> {
        let f = self.faces[fi];
        let (a, b, c) = (&self.points[f[0]], &self.points[f[1]], &self.points[f[2]]);
        if q.dot(&(a + b + c)) <= 0.0 {
            return None;
        }
        let w = [
            self.sign * det(q, b, c),
            self.sign * det(a, q, c),
            self.sign * det(a, b, q),
        ];
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return None;
        }
        let bary = [w[0] / total, w[1] / total, w[2] / total];
        if bary.iter().all(|&x| x >= -EDGE_TOLERANCE) {
            Some(bary)
        } else {
            None
        }
    }

    fn search(&self, candidates: impl Iterator<Item = usize>, q: &Vec3) -> Option<Location> {
        candidates
            .filter_map(|fi| self.test(fi, q).map(|bary| Location { face: fi, bary }))
            .min_by_key(|l| l.face)
    }

    /// Locate a unit vector; points on an edge go to the lowest-index incident face.
    pub fn locate(&self, query: &Vec3) -> Result<Location> {
        let n = query.norm();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::InvalidInput("query is not a direction".into()));
        }
        let q = query / n;
        let c = |x: f64| (((x + 1.0) / 2.0 * self.cells as f64).floor() as isize).clamp(0, self.cells as isize - 1) as usize;
        let bucket = &self.buckets[(c(q.x) * self.cells + c(q.y)) * self.cells + c(q.z)];
        self.search(bucket.iter().copied(), &q)
            .or_else(|| self.search(0..self.faces.len(), &q))
            .ok_or(Error::Location)
    }

    /// Barycentric combination of `positions` at a location.
    pub fn interpolate(&self, loc: &Location, positions: &[Vec3]) -> Vec3 {
        let f = self.faces[loc.face];
        positions[f[0]] * loc.bary[0] + positions[f[1]] * loc.bary[1] + positions[f[2]] * loc.bary[2]
    }
}

/// One-off location; build a [`SphereLocator`] for repeated queries.
pub fn sphere_point_locate(map: &SphericalMap, mesh: &TriMesh, query: &Vec3) -> Result<Location> {
    SphereLocator::new(mesh, map)?.locate(query)
}
