//! Closed, oriented, genus-0 triangle meshes.

use std::collections::HashMap;

use nalgebra::Vector3;

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;

/// Relative tolerance for rejecting degenerate faces: a face is degenerate when
/// its area falls below this fraction of the mean face area.
pub const DEGENERATE_AREA_FRACTION: f64 = 1e-14;

/// Two vertices closer than this are treated as duplicates.
pub const DUPLICATE_VERTEX_TOL: f64 = 1e-12;

/// An immutable genus-0 closed triangle mesh.
///
/// Construction validates that every edge is shared by exactly two faces with
/// opposite directions, the surface is connected, its Euler characteristic is 2,
/// no face is degenerate and no two vertices coincide.
#[derive(Debug, Clone)]
pub struct TriMesh {
    vertices: Vec<Vec3>,
    faces: Vec<[usize; 3]>,
    edges: Vec<[usize; 2]>,
    vertex_faces_offsets: Vec<usize>,
    vertex_faces: Vec<usize>,
    orientation: f64,
}

impl TriMesh {
    pub fn new(vertices: Vec<Vec3>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if faces.is_empty() {
            return Err(Error::InvalidMesh("mesh has no faces".into()));
        }
        for (fi, f) in faces.iter().enumerate() {
            if f.iter().any(|&v| v >= n) {
                return Err(Error::InvalidMesh(format!("face {fi} references a missing vertex")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::DegenerateFace { face: fi });
            }
        }
        if let Some(v) = vertices.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidMesh(format!("vertex {v} has a non-finite coordinate")));
        }

        // Directed half-edge counts tell both manifoldness and orientation.
        let mut directed: HashMap<(usize, usize), usize> = HashMap::with_capacity(faces.len() * 3);
        for f in &faces {
            for k in 0..3 {
                *directed.entry((f[k], f[(k + 1) % 3])).or_default() += 1;
            }
        }
        let mut edges: Vec<[usize; 2]> = Vec::with_capacity(faces.len() * 3 / 2);
        for (&(a, b), &count) in &directed {
            let back = directed.get(&(b, a)).copied().unwrap_or(0);
            let total = count + back;
            if total != 2 {
                let (lo, hi) = (a.min(b), a.max(b));
                return Err(Error::NonManifoldEdge(lo, hi, total));
            }
            if count != 1 {
                return Err(Error::Orientation(a.min(b), a.max(b)));
            }
            if a < b {
                edges.push([a, b]);
            }
        }
        edges.sort_unstable();

        let mut degree = vec![0usize; n];
        for f in &faces {
            for &v in f {
                degree[v] += 1;
            }
        }
        if let Some(v) = degree.iter().position(|&d| d == 0) {
            return Err(Error::InvalidMesh(format!("vertex {v} is not referenced by any face")));
        }

        let euler = n as i64 - edges.len() as i64 + faces.len() as i64;
        if euler != 2 {
            return Err(Error::Genus { euler });
        }

        let mut vertex_faces_offsets = vec![0usize; n + 1];
        for v in 0..n {
            vertex_faces_offsets[v + 1] = vertex_faces_offsets[v] + degree[v];
        }
        let mut fill = vertex_faces_offsets.clone();
        let mut vertex_faces = vec![0usize; vertex_faces_offsets[n]];
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                vertex_faces[fill[v]] = fi;
                fill[v] += 1;
            }
        }

        let mesh = TriMesh {
            vertices,
            faces,
            edges,
            vertex_faces_offsets,
            vertex_faces,
            orientation: 1.0,
        };
        mesh.check_connected()?;
        mesh.check_duplicates()?;
        mesh.check_face_areas()?;

        let volume = mesh.signed_volume();
        Ok(TriMesh {
            orientation: if volume < 0.0 { -1.0 } else { 1.0 },
            ..mesh
        })
    }

    pub fn vertices(&self) -> &[Vec3] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Undirected edges as sorted `[lo, hi]` pairs, in lexicographic order.
    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.faces.len()
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn euler_characteristic(&self) -> i64 {
        self.num_vertices() as i64 - self.num_edges() as i64 + self.num_faces() as i64
    }

    /// Faces incident to vertex `v`, in increasing face order.
    pub fn vertex_faces(&self, v: usize) -> &[usize] {
        &self.vertex_faces[self.vertex_faces_offsets[v]..self.vertex_faces_offsets[v + 1]]
    }

    /// `+1` if faces wind outward (positive enclosed volume), `-1` otherwise.
    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    pub fn signed_volume(&self) -> f64 {
        let c = self.centroid();
        self.faces
            .iter()
            .map(|f| {
                let a = self.vertices[f[0]] - c;
                let b = self.vertices[f[1]] - c;
                let d = self.vertices[f[2]] - c;
                a.dot(&b.cross(&d)) / 6.0
            })
            .sum()
    }

    pub fn centroid(&self) -> Vec3 {
        self.vertices.iter().sum::<Vec3>() / self.vertices.len() as f64
    }

    pub fn total_area(&self) -> f64 {
        crate::geometry::face_areas(self, &self.vertices).iter().sum()
    }

    /// A copy of this mesh with new vertex positions and the same connectivity.
    ///
    /// Only finiteness is checked; callers keep the positions non-degenerate.
    pub fn with_vertices(&self, vertices: Vec<Vec3>) -> Result<Self> {
        if vertices.len() != self.vertices.len() {
            return Err(Error::InvalidInput(format!(
                "expected {} vertices, got {}",
                self.vertices.len(),
                vertices.len()
            )));
        }
        let mut out = self.clone();
        out.vertices = vertices;
        out.orientation = if out.signed_volume() < 0.0 { -1.0 } else { 1.0 };
        Ok(out)
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.num_vertices();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(v) = stack.pop() {
            for &f in self.vertex_faces(v) {
                for &w in &self.faces[f] {
                    if !seen[w] {
                        seen[w] = true;
                        count += 1;
                        stack.push(w);
                    }
                }
            }
        }
        if count != n {
            return Err(Error::InvalidMesh(format!(
                "mesh is disconnected ({count} of {n} vertices reachable)"
            )));
        }
        Ok(())
    }

    fn check_duplicates(&self) -> Result<()> {
        let mut order: Vec<usize> = (0..self.num_vertices()).collect();
        order.sort_by(|&a, &b| self.vertices[a].x.total_cmp(&self.vertices[b].x));
        for (k, &a) in order.iter().enumerate() {
            for &b in &order[k + 1..] {
                if self.vertices[b].x - self.vertices[a].x > DUPLICATE_VERTEX_TOL {
                    break;
                }
                if (self.vertices[a] - self.vertices[b]).norm() <= DUPLICATE_VERTEX_TOL {
                    return Err(Error::DuplicateVertex(a.min(b), a.max(b)));
                }
            }
        }
        Ok(())
    }

    fn check_face_areas(&self) -> Result<()> {
        let areas = crate::geometry::face_areas(self, &self.vertices);
        let mean = areas.iter().sum::<f64>() / areas.len() as f64;
        match areas.iter().position(|&a| !(a >= DEGENERATE_AREA_FRACTION * mean) || mean <= 0.0) {
            Some(face) => Err(Error::DegenerateFace { face }),
            None => Ok(()),
        }
    }
}
