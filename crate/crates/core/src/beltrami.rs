//! Beltrami coefficients of piecewise-affine maps and the linear Beltrami solver.

use crate::error::{Error, Result};
use crate::mesh::{TriMesh, Vec3};
use crate::sparse::{solve_with_fixed, SparseOperator};
use crate::sphere::{PlanarMap, C64};

/// `|f_z|` below this on a face is treated as a collapse of the conformal factor.
pub const COLLAPSE_TOLERANCE: f64 = 1e-14;

/// Per-face complex dilatation `f_z̄ / f_z`.
pub type BeltramiField = Vec<C64>;

/// Coefficients `(a, b)` of the affine map `a z + b z̄ + c` taking triangle `z` to `w`,
/// or `None` when the source triangle is degenerate.
pub fn affine_coefficients(z: [C64; 3], w: [C64; 3]) -> Option<(C64, C64)> {
    let (d1, d2) = (z[1] - z[0], z[2] - z[0]);
    let (e1, e2) = (w[1] - w[0], w[2] - w[0]);
    let det = d1 * d2.conj() - d2 * d1.conj();
    if det.norm() == 0.0 || !det.is_finite() {
        return None;
    }
    let a = (e1 * d2.conj() - e2 * d1.conj()) / det;
    let b = (d1 * e2 - d2 * e1) / det;
    Some((a, b))
}

fn face_mu(face: usize, z: [C64; 3], w: [C64; 3]) -> Result<C64> {
    let (a, b) = affine_coefficients(z, w).ok_or(Error::DegenerateFace { face })?;
    if !(a.norm() >= COLLAPSE_TOLERANCE) {
        return Err(Error::ConformalCollapse { face });
    }
    Ok(b / a)
}

fn gather(p: &[C64], f: &[usize; 3]) -> [C64; 3] {
    [p[f[0]], p[f[1]], p[f[2]]]
}

/// Per-face Beltrami coefficient of the piecewise-affine map `source → target`.
pub fn beltrami_coefficient(mesh: &TriMesh, source: &PlanarMap, target: &PlanarMap) -> Result<BeltramiField> {
    mesh.faces()
        .iter()
        .enumerate()
        .map(|(fi, f)| face_mu(fi, gather(&source.points, f), gather(&target.points, f)))
        .collect()
}

/// Like [`beltrami_coefficient`], restricted to `active` faces; other faces and
/// collapsed faces get `None`.
pub fn beltrami_on(mesh: &TriMesh, source: &[C64], target: &[C64], active: &[bool]) -> Vec<Option<C64>> {
    mesh.faces()
        .iter()
        .enumerate()
        .map(|(fi, f)| {
            if active[fi] {
                face_mu(fi, gather(source, f), gather(target, f)).ok()
            } else {
                None
            }
        })
        .collect()
}

/// Rescale `|μ| ≥ 1` to modulus `1 - δ`, keeping the argument. Faces outside
/// `active` pass through untouched.
pub fn truncate_mu(mu: &[C64], delta: f64, active: Option<&[bool]>) -> BeltramiField {
    mu.iter()
        .enumerate()
        .map(|(i, &m)| {
            let on = active.map(|a| a[i]).unwrap_or(true);
            let r = m.norm();
            if on && r >= 1.0 {
                m * ((1.0 - delta) / r)
            } else {
                m
            }
        })
        .collect()
}

/// Solve `div(P(μ) ∇u) = 0` and `div(P(μ) ∇v) = 0` over `layout` with the given
/// vertices pinned, returning `u + iv`.
///
/// Faces whose vertices are all pinned contribute nothing to the free unknowns,
/// so their `μ` is never read beyond the modulus check.
pub fn lbs_reconstruct(
    mesh: &TriMesh,
    layout: &PlanarMap,
    mu: &[C64],
    fixed: &[usize],
    values: &[C64],
) -> Result<PlanarMap> {
    if fixed.is_empty() {
        return Err(Error::SingularSystem("no fixed vertices".into()));
    }
    let n = mesh.num_vertices();
    let mut t = Vec::with_capacity(mesh.num_faces() * 9);
    for (fi, f) in mesh.faces().iter().enumerate() {
        let m = mu[fi];
        let r2 = m.norm_sqr();
        if r2 >= 1.0 || !r2.is_finite() {
            return Err(Error::BeltramiTooLarge {
                face: fi,
                modulus: r2.sqrt(),
            });
        }
        let denom = 1.0 - r2;
        let a11 = ((1.0 - m.re).powi(2) + m.im * m.im) / denom;
        let a12 = -2.0 * m.im / denom;
        let a22 = ((1.0 + m.re).powi(2) + m.im * m.im) / denom;
        let p = gather(&layout.points, f);
        let twice = (p[1] - p[0]).re * (p[2] - p[0]).im - (p[2] - p[0]).re * (p[1] - p[0]).im;
        if twice == 0.0 || !twice.is_finite() {
            return Err(Error::DegenerateFace { face: fi });
        }
        // Hat-function gradients: rotated opposite edges over twice the signed area.
        let grad: [(f64, f64); 3] = std::array::from_fn(|k| {
            let (j, l) = ((k + 1) % 3, (k + 2) % 3);
            ((p[j].im - p[l].im) / twice, (p[l].re - p[j].re) / twice)
        });
        let area = 0.5 * twice.abs();
        for a in 0..3 {
            for b in 0..3 {
                let (ga, gb) = (grad[a], grad[b]);
                let v = area
                    * (ga.0 * (a11 * gb.0 + a12 * gb.1) + ga.1 * (a12 * gb.0 + a22 * gb.1));
                t.push((f[a], f[b], v));
            }
        }
    }
    let k = SparseOperator::from_triplets(n, n, &t);
    let vals = vec![
        values.iter().map(|c| c.re).collect(),
        values.iter().map(|c| c.im).collect(),
    ];
    let x = solve_with_fixed(&k, &[vec![0.0; n], vec![0.0; n]], fixed, &vals)?;
    Ok(PlanarMap {
        points: x[0].iter().zip(&x[1]).map(|(&u, &v)| C64::new(u, v)).collect(),
    })
}

/// Coordinates of a triangle in the plane orthogonal to `n`, relative to its first vertex.
fn tangent_layout(p: [Vec3; 3], n: &Vec3) -> [C64; 3] {
    let e = p[1] - p[0];
    let e1 = (e - n * n.dot(&e)).normalize();
    let e2 = n.cross(&e1);
    std::array::from_fn(|k| {
        let d = p[k] - p[0];
        C64::new(d.dot(&e1), d.dot(&e2))
    })
}

fn corners(x: &[Vec3], f: &[usize; 3]) -> [Vec3; 3] {
    [x[f[0]], x[f[1]], x[f[2]]]
}

fn sphere_layout(p: [Vec3; 3]) -> [C64; 3] {
    let n = (p[0] + p[1] + p[2]).normalize();
    tangent_layout(p, &n)
}

fn surface_layout(p: [Vec3; 3], orientation: f64) -> [C64; 3] {
    let n = (p[1] - p[0]).cross(&(p[2] - p[0])).normalize() * orientation;
    tangent_layout(p, &n)
}

/// Where the source triangles of an intrinsic Beltrami measurement live.
#[derive(Debug, Clone, Copy)]
pub enum SourceMetric<'a> {
    /// A surface in space; each triangle is laid out isometrically in its own plane,
    /// oriented by the outward normal.
    Surface(&'a [Vec3]),
    /// Another map onto the sphere; treated exactly like the target.
    Sphere(&'a [Vec3]),
}

/// Per-face `μ` of a map onto the unit sphere, measured intrinsically.
///
/// Each mapped triangle is projected onto the tangent plane at its centroid
/// direction, so a triangle folded over on the sphere has `|μ| > 1`. `None` marks
/// a face whose image collapses.
pub fn intrinsic_beltrami(mesh: &TriMesh, source: SourceMetric, map: &[Vec3]) -> Vec<Option<C64>> {
    mesh.faces()
        .iter()
        .enumerate()
        .map(|(fi, f)| {
            let z = match source {
                SourceMetric::Surface(x) => surface_layout(corners(x, f), mesh.orientation()),
                SourceMetric::Sphere(x) => sphere_layout(corners(x, f)),
            };
            face_mu(fi, z, sphere_layout(corners(map, f))).ok()
        })
        .collect()
}

/// Isometric layout of every source face, oriented so that an orientation-preserving
/// map onto the sphere has positively oriented planar images.
pub fn surface_face_layouts(mesh: &TriMesh, surface: &[Vec3]) -> Vec<[C64; 3]> {
    mesh.faces()
        .iter()
        .map(|f| surface_layout(corners(surface, f), mesh.orientation()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives;
    use proptest::prelude::*;

    fn grid(n: usize) -> (TriMesh, PlanarMap, Vec<usize>) {
        // Square grid on [0,1]² closed into a sphere by a single apex above it,
        // so the mesh is a valid closed surface. The apex is pinned.
        let mut v = Vec::new();
        for j in 0..=n {
            for i in 0..=n {
                v.push(Vec3::new(i as f64 / n as f64, j as f64 / n as f64, 0.0));
            }
        }
        let id = |i: usize, j: usize| j * (n + 1) + i;
        let mut f = Vec::new();
        for j in 0..n {
            for i in 0..n {
                f.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
                f.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
            }
        }
        let apex = v.len();
        v.push(Vec3::new(0.5, 0.5, -1.0));
        let mut ring = Vec::new();
        for i in 0..n {
            ring.push(id(i, 0));
        }
        for j in 0..n {
            ring.push(id(n, j));
        }
        for i in (1..=n).rev() {
            ring.push(id(i, n));
        }
        for j in (1..=n).rev() {
            ring.push(id(0, j));
        }
        for k in 0..ring.len() {
            f.push([ring[(k + 1) % ring.len()], ring[k], apex]);
        }
        let mesh = TriMesh::new(v.clone(), f).unwrap();
        let layout = PlanarMap {
            points: v.iter().map(|p| C64::new(p.x, p.y)).collect(),
        };
        let mut boundary = ring;
        boundary.push(apex);
        (mesh, layout, boundary)
    }

    #[test]
    fn analytic_affine_maps() {
        let m = primitives::icosahedron();
        let src = PlanarMap {
            points: m.vertices().iter().map(|p| C64::new(p.x + 0.3 * p.z, p.y)).collect(),
        };
        let cases: [(fn(C64) -> C64, C64); 3] = [
            (|z| z, C64::new(0.0, 0.0)),
            (|z| z + 0.5 * z.conj(), C64::new(0.5, 0.0)),
            (|z| 2.0 * z, C64::new(0.0, 0.0)),
        ];
        for (map, expect) in cases {
            let dst = PlanarMap {
                points: src.points.iter().map(|&z| map(z)).collect(),
            };
            // Faces flattened by the projection are skipped.
            for (fi, f) in m.faces().iter().enumerate() {
                if let Ok(mu) = face_mu(fi, gather(&src.points, f), gather(&dst.points, f)) {
                    assert!((mu - expect).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn collapse_is_reported() {
        let z = [C64::new(0.0, 0.0), C64::new(1.0, 0.0), C64::new(0.0, 1.0)];
        let w = z.map(|z| z.conj());
        assert!(matches!(face_mu(3, z, w), Err(Error::ConformalCollapse { face: 3 })));
    }

    #[test]
    fn truncation_examples() {
        let mu = vec![
            C64::new(0.5, 0.0),
            C64::from_polar(1.3, std::f64::consts::FRAC_PI_4),
            C64::new(0.0, 0.0),
        ];
        let t = truncate_mu(&mu, 0.1, None);
        assert_eq!(t[0], mu[0]);
        assert!((t[1] - C64::from_polar(0.9, std::f64::consts::FRAC_PI_4)).norm() < 1e-15);
        assert_eq!(t[2], mu[2]);
        let inactive = truncate_mu(&mu, 0.1, Some(&[true, false, true]));
        assert_eq!(inactive[1], mu[1]);
    }

    #[test]
    fn lbs_identity_and_constant_mu() {
        let (mesh, layout, boundary) = grid(16);
        let zero = vec![C64::new(0.0, 0.0); mesh.num_faces()];
        let vals: Vec<C64> = boundary.iter().map(|&v| layout.points[v]).collect();
        let out = lbs_reconstruct(&mesh, &layout, &zero, &boundary, &vals).unwrap();
        for (a, b) in out.points.iter().zip(&layout.points) {
            assert!((a - b).norm() < 1e-10);
        }
        let k = C64::new(0.3, 0.0);
        let target = |z: C64| z + k * z.conj();
        let mu = vec![k; mesh.num_faces()];
        let vals: Vec<C64> = boundary.iter().map(|&v| target(layout.points[v])).collect();
        let out = lbs_reconstruct(&mesh, &layout, &mu, &boundary, &vals).unwrap();
        for (a, z) in out.points.iter().zip(&layout.points) {
            assert!((a - target(*z)).norm() < 1e-8);
        }
    }

    #[test]
    fn lbs_reproduces_a_nonlinear_quasiconformal_map() {
        // f(z) = z + 0.2 z̄² has |μ| = 0.4|z| < 0.6 on the unit square.
        let f = |z: C64| z + 0.2 * z.conj() * z.conj();
        let mut errors = Vec::new();
        for n in [8, 16, 32] {
            let (mesh, layout, boundary) = grid(n);
            let target = PlanarMap {
                points: layout.points.iter().map(|&z| f(z)).collect(),
            };
            let mu = beltrami_coefficient(&mesh, &layout, &target).unwrap();
            let vals: Vec<C64> = boundary.iter().map(|&v| target.points[v]).collect();
            let out = lbs_reconstruct(&mesh, &layout, &mu, &boundary, &vals).unwrap();
            let err = out
                .points
                .iter()
                .zip(&target.points)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            errors.push(err);
        }
        // The piecewise-affine interpolant satisfies the discrete equations exactly.
        assert!(errors.iter().all(|&e| e < 1e-10), "{errors:?}");
    }

    #[test]
    fn lbs_rejects_large_mu() {
        let (mesh, layout, boundary) = grid(4);
        let mut mu = vec![C64::new(0.0, 0.0); mesh.num_faces()];
        mu[3] = C64::new(1.0, 0.0);
        let vals: Vec<C64> = boundary.iter().map(|&v| layout.points[v]).collect();
        assert!(matches!(
            lbs_reconstruct(&mesh, &layout, &mu, &boundary, &vals),
            Err(Error::BeltramiTooLarge { face: 3, .. })
        ));
        assert!(lbs_reconstruct(&mesh, &layout, &vec![C64::new(0.0, 0.0); mesh.num_faces()], &[], &[]).is_err());
    }

    #[test]
    fn intrinsic_mu_of_rotation_vanishes() {
        let m = primitives::icosphere(6);
        let r = nalgebra::Rotation3::from_euler_angles(0.3, -1.1, 2.0);
        let rotated: Vec<Vec3> = m.vertices().iter().map(|p| r * p).collect();
        let mu = intrinsic_beltrami(&m, SourceMetric::Sphere(m.vertices()), &rotated);
        assert!(mu.iter().all(|x| x.unwrap().norm() < 1e-12));
        let mu = intrinsic_beltrami(&m, SourceMetric::Surface(m.vertices()), m.vertices());
        // Chordal triangles of a fine sphere mesh against their own tangent projection.
        assert!(mu.iter().all(|x| x.unwrap().norm() < 1e-2));
    }

    #[test]
    fn intrinsic_mu_detects_reflection() {
        let m = primitives::icosphere(3);
        let reflected: Vec<Vec3> = m.vertices().iter().map(|p| Vec3::new(p.x, p.y, -p.z)).collect();
        let mu = intrinsic_beltrami(&m, SourceMetric::Sphere(m.vertices()), &reflected);
        // A reflection is anti-conformal: f_z vanishes, so every face collapses.
        assert!(mu.iter().all(|x| x.map_or(true, |m| m.norm() > 1.0)));
    }

    proptest! {
        #[test]
        fn truncation_idempotent(re in prop::collection::vec(-2.0f64..2.0, 20), im in prop::collection::vec(-2.0f64..2.0, 20), delta in 0.01f64..0.99) {
            let mu: Vec<C64> = re.iter().zip(&im).map(|(&a, &b)| C64::new(a, b)).collect();
            let once = truncate_mu(&mu, delta, None);
            prop_assert_eq!(truncate_mu(&once, delta, None), once.clone());
            prop_assert!(once.iter().all(|m| m.norm() < 1.0));
        }

        #[test]
        fn affine_mu_recovered(kr in -0.9f64..0.9, ki in -0.9f64..0.9, ar in 0.2f64..3.0, ai in -3.0f64..3.0) {
            prop_assume!(kr * kr + ki * ki < 0.81);
            let k = C64::new(kr, ki);
            let a = C64::new(ar, ai);
            let z = [C64::new(0.1, 0.2), C64::new(1.3, -0.4), C64::new(0.5, 1.1)];
            let w = z.map(|z| a * z + a * k * z.conj() + C64::new(3.0, -1.0));
            let mu = face_mu(0, z, w).unwrap();
            prop_assert!((mu - k).norm() < 1e-12);
        }
    }
}
