//! Per-face and per-vertex geometric quantities evaluated at arbitrary vertex positions.
//!
//! Every function takes the connectivity from a [`TriMesh`] and the positions
//! separately, so the same code measures the input surface and any spherical
//! image of it. Face-domain results have length `|F|`, vertex-domain `|V|`.

use crate::error::{Error, Result};
use crate::mesh::{TriMesh, Vec3};

#[inline]
pub(crate) fn corners(positions: &[Vec3], f: &[usize; 3]) -> (Vec3, Vec3, Vec3) {
    (positions[f[0]], positions[f[1]], positions[f[2]])
}

/// Area of triangle `(a, b, c)`.
#[inline]
pub fn triangle_area(a: &Vec3, b: &Vec3, c: &Vec3) -> f64 {
    0.5 * (b - a).cross(&(c - a)).norm()
}

pub fn face_areas(mesh: &TriMesh, positions: &[Vec3]) -> Vec<f64> {
    mesh.faces()
        .iter()
        .map(|f| {
            let (a, b, c) = corners(positions, f);
            triangle_area(&a, &b, &c)
        })
        .collect()
}

/// Unit face normals following the mesh winding. Zero for degenerate faces.
pub fn face_normals(mesh: &TriMesh, positions: &[Vec3]) -> Vec<Vec3> {
    mesh.faces()
        .iter()
        .map(|f| {
            let (a, b, c) = corners(positions, f);
            (b - a).cross(&(c - a)).try_normalize(0.0).unwrap_or_else(Vec3::zeros)
        })
        .collect()
}

/// Angle-weighted vertex normals.
///
/// Each incident face contributes its unit normal weighted by the interior angle
/// at the vertex. The result follows the mesh winding, so it points outward for
/// an outward-oriented surface.
pub fn vertex_normals(mesh: &TriMesh, positions: &[Vec3]) -> Result<Vec<Vec3>> {
    let fnormals = face_normals(mesh, positions);
    let mut acc = vec![Vec3::zeros(); mesh.num_vertices()];
    for (f, n) in mesh.faces().iter().zip(&fnormals) {
        for k in 0..3 {
            let p = positions[f[k]];
            let e1 = positions[f[(k + 1) % 3]] - p;
            let e2 = positions[f[(k + 2) % 3]] - p;
            let angle = e1.cross(&e2).norm().atan2(e1.dot(&e2));
            acc[f[k]] += n * angle;
        }
    }
    acc.into_iter()
        .enumerate()
        .map(|(v, n)| {
            n.try_normalize(1e-300)
                .ok_or_else(|| Error::InvalidMesh(format!("zero-length normal at vertex {v}")))
        })
        .collect()
}

/// Piecewise-linear gradient of a vertex function, one 3-vector per face:
/// `n × (u_i e_jk + u_j e_ki + u_k e_ij) / (2 Area)`.
pub fn face_gradient(mesh: &TriMesh, positions: &[Vec3], u: &[f64]) -> Vec<Vec3> {
    debug_assert_eq!(u.len(), mesh.num_vertices());
    mesh.faces()
        .iter()
        .map(|f| {
            let [i, j, k] = *f;
            let (xi, xj, xk) = corners(positions, f);
            let cross = (xj - xi).cross(&(xk - xi));
            let double_area = cross.norm();
            if double_area == 0.0 {
                return Vec3::zeros();
            }
            let n = cross / double_area;
            let s = (xk - xj) * u[i] + (xi - xk) * u[j] + (xj - xi) * u[k];
            n.cross(&s) / double_area
        })
        .collect()
}

/// Regularity of every face, its spread to vertices, and the one-ring average.
#[derive(Debug, Clone)]
pub struct Regularity {
    /// Per face: `Σ |e_j / (e_1 + e_2 + e_3) - 1/3|` over the three edge lengths.
    pub face: Vec<f64>,
    /// Per vertex: one third of the summed scores of incident faces.
    pub vertex: Vec<f64>,
    /// Per face: mean vertex score over its three corners.
    pub ring: Vec<f64>,
    /// Face with the smallest ring score; lowest index wins ties.
    pub most_regular: usize,
}

pub fn regularity_scores(mesh: &TriMesh, positions: &[Vec3]) -> Regularity {
    let face: Vec<f64> = mesh
        .faces()
        .iter()
        .map(|f| {
            let (a, b, c) = corners(positions, f);
            let l = [(b - a).norm(), (c - b).norm(), (a - c).norm()];
            let total: f64 = l.iter().sum();
            l.iter().map(|e| (e / total - 1.0 / 3.0).abs()).sum()
        })
        .collect();
    let mut vertex = vec![0.0; mesh.num_vertices()];
    for (f, r) in mesh.faces().iter().zip(&face) {
        for &v in f {
            vertex[v] += r / 3.0;
        }
    }
    let ring: Vec<f64> = mesh
        .faces()
        .iter()
        .map(|f| f.iter().map(|&v| vertex[v]).sum::<f64>() / 3.0)
        .collect();
    let most_regular = ring
        .iter()
        .enumerate()
        .fold(0, |best, (i, &r)| if r < ring[best] { i } else { best });
    Regularity {
        face,
        vertex,
        ring,
        most_regular,
    }
}
