//! Discrete operators assembled from a mesh and a set of vertex positions.

use crate::error::{Error, Result};
use crate::geometry::{corners, face_areas};
use crate::mesh::{TriMesh, Vec3};
use crate::sparse::SparseOperator;

/// Cotangent Laplacian with `L_ij = -(cot α_ij + cot β_ij) / 2` and zero row sums.
///
/// Negative weights from obtuse angles are kept.
pub fn cotangent_laplacian(mesh: &TriMesh, positions: &[Vec3]) -> Result<SparseOperator> {
    assemble_cotangent(mesh, positions, None)
}

/// Cotangent Laplacian of the mesh with face `puncture` removed.
pub fn punctured_cotangent_laplacian(
    mesh: &TriMesh,
    positions: &[Vec3],
    puncture: usize,
) -> Result<SparseOperator> {
    assemble_cotangent(mesh, positions, Some(puncture))
}

fn assemble_cotangent(mesh: &TriMesh, positions: &[Vec3], skip: Option<usize>) -> Result<SparseOperator> {
    let n = mesh.num_vertices();
    let mut t = Vec::with_capacity(mesh.num_faces() * 12);
    for (fi, f) in mesh.faces().iter().enumerate() {
        if Some(fi) == skip {
            continue;
        }
        let (a, b, c) = corners(positions, f);
        let double_area = (b - a).cross(&(c - a)).norm();
        if !(double_area > 0.0) || !double_area.is_finite() {
            return Err(Error::DegenerateFace { face: fi });
        }
        let p = [a, b, c];
        for k in 0..3 {
            // Angle at corner k is opposite edge (k+1, k+2).
            let i = f[(k + 1) % 3];
            let j = f[(k + 2) % 3];
            let u = p[(k + 1) % 3] - p[k];
            let v = p[(k + 2) % 3] - p[k];
            let w = 0.5 * u.dot(&v) / double_area;
            t.push((i, j, -w));
            t.push((j, i, -w));
            t.push((i, i, w));
            t.push((j, j, w));
        }
    }
    Ok(SparseOperator::from_triplets(n, n, &t))
}

/// Diagonal vertex areas: one third of the summed incident face areas.
pub fn lumped_mass(mesh: &TriMesh, positions: &[Vec3]) -> SparseOperator {
    SparseOperator::diagonal(&vertex_areas(mesh, positions))
}

pub fn vertex_areas(mesh: &TriMesh, positions: &[Vec3]) -> Vec<f64> {
    let areas = face_areas(mesh, positions);
    let mut d = vec![0.0; mesh.num_vertices()];
    for (f, a) in mesh.faces().iter().zip(&areas) {
        for &v in f {
            d[v] += a / 3.0;
        }
    }
    d
}

/// `|V| × |F|` area-weighted averaging from faces to vertices; rows sum to one.
pub fn face_to_vertex_matrix(mesh: &TriMesh, positions: &[Vec3]) -> SparseOperator {
    let areas = face_areas(mesh, positions);
    let mut t = Vec::with_capacity(mesh.num_faces() * 3);
    for v in 0..mesh.num_vertices() {
        let incident = mesh.vertex_faces(v);
        let total: f64 = incident.iter().map(|&f| areas[f]).sum();
        for &f in incident {
            t.push((v, f, areas[f] / total));
        }
    }
    SparseOperator::from_triplets(mesh.num_vertices(), mesh.num_faces(), &t)
}
