use crate::apps::locate::{Location, SphereLocator};
use crate::error::{Error, Result};
use crate::mesh::{TriMesh, Vec3};
use crate::sphere::SphericalMap;

/// For each vertex of mesh A, its location on the spherical image of mesh B.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceCorrespondence {
    pub locations: Vec<Location>,
}

impl SurfaceCorrespondence {
    /// Positions on B's surface, `g⁻¹ ∘ f` applied to every A vertex.
    pub fn pull_back(&self, mesh_b: &TriMesh) -> Vec<Vec3> {
        let vb = mesh_b.vertices();
        self.locations
            .iter()
            .map(|l| {
                let f = mesh_b.faces()[l.face];
                vb[f[0]] * l.bary[0] + vb[f[1]] * l.bary[1] + vb[f[2]] * l.bary[2]
            })
            .collect()
    }
}

/// Locate `f(v)` for every vertex `v` of A on `g(B)`.
pub fn register(
    mesh_a: &TriMesh,
    mesh_b: &TriMesh,
    map_a: &SphericalMap,
    map_b: &SphericalMap,
) -> Result<SurfaceCorrespondence> {
    if map_a.len() != mesh_a.num_vertices() {
        return Err(Error::InvalidInput("map A does not match mesh A".into()));
    }
    let locator = SphereLocator::new(mesh_b, map_b)?;
    let locations = map_a
        .points()
        .iter()
        .map(|p| locator.locate(p))
        .collect::<Result<Vec<_>>>()?;
    Ok(SurfaceCorrespondence { locations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::conformal::initial_conformal_map;
    use crate::overlap::count_flips;
    use crate::primitives;

    #[test]
    fn self_registration_is_identity() {
        let m = primitives::warped_blob(6, [1.3, 1.0, 0.9], &[(Vec3::new(1.0, 0.0, 0.0), 0.3, 0.2)]);
        let f = initial_conformal_map(&m).unwrap();
        let c = register(&m, &m, &f, &f).unwrap();
        let p = c.pull_back(&m);
        let mean: f64 = p.iter().zip(m.vertices()).map(|(a, b)| (a - b).norm()).sum::<f64>() / p.len() as f64;
        assert!(mean <= 1e-8);
    }

    #[test]
    fn round_trip_and_flip_free_pull_back() {
        let a = primitives::icosphere(6);
        let b = primitives::warped_blob(8, [1.2, 1.0, 0.8], &[]);
        let fa = SphericalMap::new(a.vertices().to_vec()).unwrap();
        let fb = initial_conformal_map(&b).unwrap();
        let ab = register(&a, &b, &fa, &fb).unwrap();
        let pos = ab.pull_back(&b);
        let pulled = TriMesh::new(pos.clone(), a.faces().to_vec()).unwrap();
        // Sphere images of the pulled-back vertices, re-mapped through B's map.
        let images: Vec<Vec3> = ab
            .locations
            .iter()
            .map(|l| {
                let t = b.faces()[l.face];
                (fb.points()[t[0]] * l.bary[0] + fb.points()[t[1]] * l.bary[1] + fb.points()[t[2]] * l.bary[2]).normalize()
            })
            .collect();
        assert_eq!(count_flips(&pulled, &images), 0);
        for (img, p) in images.iter().zip(fa.points()) {
            assert!((img - p).norm() < 1e-10);
        }
    }

    #[test]
    fn there_and_back_on_matched_meshes() {
        let m = primitives::warped_blob(5, [1.0, 1.2, 0.9], &[]);
        let f = initial_conformal_map(&m).unwrap();
        let copy = TriMesh::new(m.vertices().to_vec(), m.faces().to_vec()).unwrap();
        let there = register(&m, &copy, &f, &f).unwrap().pull_back(&copy);
        let back = register(&copy, &m, &f, &f).unwrap().pull_back(&m);
        for ((a, b), c) in there.iter().zip(&back).zip(m.vertices()) {
            assert!((a - c).norm() < 2e-10 && (b - c).norm() < 2e-10);
        }
    }
}
