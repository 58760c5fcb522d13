use std::collections::HashSet;

use crate::apps::locate::SphereLocator;
use crate::error::{Error, Result};
use crate::mesh::{TriMesh, Vec3};
use crate::primitives::icosphere_raw;
use crate::sphere::SphericalMap;

/// Near-uniform sphere mesh with exactly `target` vertices when `target ≥ 12`.
///
/// Starts from the smallest subdivided icosahedron with at least `target`
/// vertices and collapses the shortest admissible edges into their midpoints.
pub fn uniform_sphere(target: usize) -> Result<TriMesh> {
    if target < 12 {
        return Err(Error::InvalidInput(format!("cannot build a sphere mesh with {target} vertices")));
    }
    let mut level = 1;
    while 10 * level * level + 2 < target {
        level += 1;
    }
    let (mut verts, faces) = icosphere_raw(level);
    let mut faces: Vec<Option<[usize; 3]>> = faces.into_iter().map(Some).collect();
    let mut alive = vec![true; verts.len()];
    let mut count = verts.len();
    let mut blocked: HashSet<(usize, usize)> = HashSet::new();
    while count > target {
        let (a, b) = match shortest_edge(&verts, &faces, &blocked) {
            Some(e) => e,
            None => break,
        };
        if try_collapse(&mut verts, &mut faces, a, b) {
            alive[b] = false;
            count -= 1;
            blocked.clear();
        } else {
            blocked.insert((a, b));
        }
    }
    let mut remap = vec![usize::MAX; verts.len()];
    let mut out_v = Vec::with_capacity(count);
    for (i, v) in verts.iter().enumerate() {
        if alive[i] {
            remap[i] = out_v.len();
            out_v.push(*v);
        }
    }
    let out_f = faces
        .into_iter()
        .flatten()
        .map(|f| [remap[f[0]], remap[f[1]], remap[f[2]]])
        .collect();
    TriMesh::new(out_v, out_f)
}

fn shortest_edge(verts: &[Vec3], faces: &[Option<[usize; 3]>], blocked: &HashSet<(usize, usize)>) -> Option<(usize, usize)> {
    let mut best: Option<(f64, usize, usize)> = None;
    for f in faces.iter().flatten() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            if a > b || blocked.contains(&(a, b)) {
                continue;
            }
            let l = (verts[a] - verts[b]).norm_squared();
            if best.map_or(true, |(bl, ..)| l < bl) {
                best = Some((l, a, b));
            }
        }
    }
    best.map(|(_, a, b)| (a, b))
}

/// Merge `b` into `a` at the edge midpoint if the link condition holds and no
/// surviving face turns over.
fn try_collapse(verts: &mut [Vec3], faces: &mut [Option<[usize; 3]>], a: usize, b: usize) -> bool {
    let ring = |v: usize| -> HashSet<usize> {
        faces
            .iter()
            .flatten()
            .filter(|f| f.contains(&v))
            .flat_map(|f| f.iter().copied())
            .filter(|&x| x != v)
            .collect()
    };
    let (ra, rb) = (ring(a), ring(b));
    if ra.intersection(&rb).count() != 2 || ra.len() + rb.len() - 2 < 6 {
        return false;
    }
    let mid = ((verts[a] + verts[b]) * 0.5).normalize();
    for f in faces.iter().flatten() {
        let touches = f.contains(&a) || f.contains(&b);
        if !touches || (f.contains(&a) && f.contains(&b)) {
            continue;
        }
        let p: Vec<Vec3> = f.iter().map(|&v| if v == a || v == b { mid } else { verts[v] }).collect();
        if p[0].dot(&p[1].cross(&p[2])) <= 0.0 {
            return false;
        }
    }
    verts[a] = mid;
    for slot in faces.iter_mut() {
        if let Some(f) = slot {
            if f.contains(&a) && f.contains(&b) {
                *slot = None;
            } else {
                for v in f.iter_mut() {
                    if *v == b {
                        *v = a;
                    }
                }
            }
        }
    }
    true
}

/// Build a near-uniform sphere mesh with about `target_vertices` vertices and
/// pull it back onto the surface through `map`.
pub fn remesh(mesh: &TriMesh, map: &SphericalMap, target_vertices: usize) -> Result<TriMesh> {
    let sphere = uniform_sphere(target_vertices)?;
    let locator = SphereLocator::new(mesh, map)?;
    let positions = sphere
        .vertices()
        .iter()
        .map(|q| locator.locate(q).map(|l| locator.interpolate(&l, mesh.vertices())))
        .collect::<Result<Vec<_>>>()?;
    let faces = if mesh.orientation() < 0.0 {
        sphere.faces().iter().map(|f| [f[0], f[2], f[1]]).collect()
    } else {
        sphere.faces().to_vec()
    };
    TriMesh::new(positions, faces)
}
