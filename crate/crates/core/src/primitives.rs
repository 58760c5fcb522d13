//! Procedural closed meshes: platonic solids, geodesic icospheres and warped blobs.

use std::collections::HashMap;

use crate::mesh::{TriMesh, Vec3};

/// Regular tetrahedron with unit edge length, centred at the origin.
pub fn tetrahedron() -> TriMesh {
    let s = 1.0 / (2.0 * 2f64.sqrt());
    let verts = vec![
        Vec3::new(s, s, s),
        Vec3::new(s, -s, -s),
        Vec3::new(-s, s, -s),
        Vec3::new(-s, -s, s),
    ];
    let faces = orient_outward(&verts, vec![[0, 1, 2], [0, 1, 3], [0, 2, 3], [1, 2, 3]]);
    TriMesh::new(verts, faces).expect("tetrahedron is valid")
}

fn icosahedron_raw() -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let verts: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    let faces = orient_outward(&verts, faces);
    (verts, faces)
}

/// Unit icosahedron (12 vertices, 20 faces).
pub fn icosahedron() -> TriMesh {
    let (v, f) = icosahedron_raw();
    TriMesh::new(v, f).expect("icosahedron is valid")
}

/// Geodesic sphere: every icosahedron face split into `frequency²` triangles and
/// projected onto the unit sphere. Has `10 f² + 2` vertices and `20 f²` faces.
pub fn icosphere(frequency: usize) -> TriMesh {
    let (v, f) = icosphere_raw(frequency.max(1));
    TriMesh::new(v, f).expect("icosphere is valid")
}

pub(crate) fn icosphere_raw(n: usize) -> (Vec<Vec3>, Vec<[usize; 3]>) {
    let (base_v, base_f) = icosahedron_raw();
    let mut verts = base_v.clone();
    let mut edge_points: HashMap<(usize, usize, usize), usize> = HashMap::new();
    let mut faces = Vec::with_capacity(20 * n * n);

    for &[a, b, c] in &base_f {
        // Grid index (i, j): weight i on b, j on c, n - i - j on a.
        let mut grid = vec![vec![usize::MAX; n + 1]; n + 1];
        for i in 0..=n {
            for j in 0..=n - i {
                let k = n - i - j;
                let id = if i == n {
                    b
                } else if j == n {
                    c
                } else if k == n {
                    a
                } else if i == 0 || j == 0 || k == 0 {
                    // On an edge of the base face; key by the sorted endpoint pair and
                    // the step count measured from the lower endpoint.
                    let (p, q, steps_from_p) = if i == 0 {
                        (a, c, j)
                    } else if j == 0 {
                        (a, b, i)
                    } else {
                        (b, c, j)
                    };
                    let key = if p < q { (p, q, steps_from_p) } else { (q, p, n - steps_from_p) };
                    *edge_points.entry(key).or_insert_with(|| {
                        let t = key.2 as f64 / n as f64;
                        verts.push((base_v[key.0] * (1.0 - t) + base_v[key.1] * t).normalize());
                        verts.len() - 1
                    })
                } else {
                    let p = (base_v[a] * k as f64 + base_v[b] * i as f64 + base_v[c] * j as f64)
                        / n as f64;
                    verts.push(p.normalize());
                    verts.len() - 1
                };
                grid[i][j] = id;
            }
        }
        for i in 0..n {
            for j in 0..n - i {
                faces.push([grid[i][j], grid[i + 1][j], grid[i][j + 1]]);
                if i + j + 1 < n {
                    faces.push([grid[i + 1][j], grid[i + 1][j + 1], grid[i][j + 1]]);
                }
            }
        }
    }
    let faces = orient_outward(&verts, faces);
    (verts, faces)
}

/// Radially warped icosphere: vertex `x` on the unit sphere moves to
/// `r(x) · S x` with `S = diag(scale)` and `r` a smooth bump field.
///
/// `bumps` entries are `(direction, amplitude, width)`; each adds
/// `amplitude · exp(-(1 - d·x) / width)` to the radius.
pub fn warped_blob(frequency: usize, scale: [f64; 3], bumps: &[(Vec3, f64, f64)]) -> TriMesh {
    let (v, f) = icosphere_raw(frequency.max(1));
    let v = v
        .into_iter()
        .map(|x| {
            let r = 1.0
                + bumps
                    .iter()
                    .map(|(d, amp, width)| amp * (-(1.0 - d.normalize().dot(&x)) / width).exp())
                    .sum::<f64>();
            Vec3::new(x.x * scale[0], x.y * scale[1], x.z * scale[2]) * r
        })
        .collect();
    TriMesh::new(v, f).expect("warped blob is valid")
}

/// Vertices of a `(major × minor)` torus grid; genus 1, used to exercise rejection paths.
pub fn torus_vertices(major: usize, minor: usize, r_major: f64, r_minor: f64) -> Vec<Vec3> {
    let mut v = Vec::with_capacity(major * minor);
    for i in 0..major {
        let u = i as f64 / major as f64 * std::f64::consts::TAU;
        for j in 0..minor {
            let w = j as f64 / minor as f64 * std::f64::consts::TAU;
            let rr = r_major + r_minor * w.cos();
            v.push(Vec3::new(rr * u.cos(), rr * u.sin(), r_minor * w.sin()));
        }
    }
    v
}

pub fn torus_faces(major: usize, minor: usize) -> Vec<[usize; 3]> {
    let id = |i: usize, j: usize| (i % major) * minor + (j % minor);
    let mut f = Vec::with_capacity(2 * major * minor);
    for i in 0..major {
        for j in 0..minor {
            f.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            f.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    f
}

/// Flip any face whose normal points towards the centroid.
fn orient_outward(verts: &[Vec3], faces: Vec<[usize; 3]>) -> Vec<[usize; 3]> {
    let c = verts.iter().sum::<Vec3>() / verts.len() as f64;
    faces
        .into_iter()
        .map(|[a, b, d]| {
            let n = (verts[b] - verts[a]).cross(&(verts[d] - verts[a]));
            let centre = (verts[a] + verts[b] + verts[d]) / 3.0 - c;
            if n.dot(&centre) < 0.0 {
                [a, d, b]
            } else {
                [a, b, d]
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn icosphere_counts() {
        for n in [1, 2, 3, 8, 16] {
            let m = icosphere(n);
            assert_eq!(m.num_vertices(), 10 * n * n + 2);
            assert_eq!(m.num_faces(), 20 * n * n);
            assert_eq!(m.orientation(), 1.0);
            assert!(m.vertices().iter().all(|v| (v.norm() - 1.0).abs() < 1e-14));
        }
    }

    #[test]
    fn tetrahedron_has_unit_edges() {
        let t = tetrahedron();
        for e in t.edges() {
            let l = (t.vertices()[e[0]] - t.vertices()[e[1]]).norm();
            assert!((l - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn warped_blob_is_valid_genus_zero() {
        let m = warped_blob(6, [1.6, 1.0, 0.8], &[(Vec3::new(0.0, 0.0, 1.0), 0.3, 0.2)]);
        assert_eq!(m.euler_characteristic(), 2);
        assert_eq!(m.orientation(), 1.0);
    }
}
