//! Initial spherical conformal parameterization and Möbius area balancing.

use crate::beltrami::{affine_coefficients, lbs_reconstruct, surface_face_layouts, truncate_mu};
use crate::error::{Error, Result};
use crate::geometry::{face_areas, regularity_scores};
use crate::mesh::{TriMesh, Vec3};
use crate::metrics::log_ratio;
use crate::operators::punctured_cotangent_laplacian;
use crate::overlap::count_flips;
use crate::sparse::solve_with_fixed;
use crate::sphere::{
    from_homogeneous, inverse_stereographic, project_point, to_homogeneous, unproject_point,
    PlanarMap, Pole, SphericalMap, C64,
};

/// Circumradius of the triangle the punctured face is pinned to.
pub const PUNCTURE_RADIUS: f64 = 1e3;

/// Quantiles of the face-centre radius, in the south-pole plane, bounding the
/// taper of the correction coefficient and the fixed cap.
const TAPER_START: f64 = 0.90;
const CAP_START: f64 = 0.98;

/// Map a genus-0 mesh conformally onto the unit sphere, then balance its area
/// distortion with a Möbius transformation.
pub fn initial_conformal_map(mesh: &TriMesh) -> Result<SphericalMap> {
    let f = harmonic_sphere_map(mesh)?;
    let f = south_pole_correction(mesh, f)?;
    let flips = count_flips(mesh, f.points());
    if flips > 0 {
        return Err(Error::FlipsRemain { count: flips });
    }
    Ok(mobius_area_correction(mesh, &f).map)
}

/// Harmonic map of the mesh minus its most regular face into the plane, pulled
/// back onto the sphere through the north pole.
pub fn harmonic_sphere_map(mesh: &TriMesh) -> Result<SphericalMap> {
    let puncture = regularity_scores(mesh, mesh.vertices()).most_regular;
    let l = punctured_cotangent_laplacian(mesh, mesh.vertices(), puncture)?;
    let fixed = mesh.faces()[puncture].to_vec();
    let corner = |k: usize| C64::from_polar(PUNCTURE_RADIUS, k as f64 * std::f64::consts::TAU / 3.0);
    let vals = vec![
        (0..3).map(|k| corner(k).re).collect(),
        (0..3).map(|k| corner(k).im).collect(),
    ];
    let n = mesh.num_vertices();
    let x = solve_with_fixed(&l, &[vec![0.0; n], vec![0.0; n]], &fixed, &vals)?;
    let mut z: Vec<C64> = x[0].iter().zip(&x[1]).map(|(&u, &v)| C64::new(u, v)).collect();

    // Uniform scaling is conformal; it puts the bulk of the surface near the equator.
    let mut radii: Vec<f64> = z.iter().map(|z| z.norm()).collect();
    radii.sort_by(f64::total_cmp);
    let median = radii[radii.len() / 2];
    if median > 0.0 {
        for w in &mut z {
            *w /= median;
        }
    }
    let mut f = inverse_stereographic(&PlanarMap { points: z }, Pole::North);
    if 2 * count_flips(mesh, f.points()) > mesh.num_faces() {
        f = SphericalMap::new(f.points().iter().map(|p| Vec3::new(p.x, -p.y, p.z)).collect())?;
    }
    Ok(f)
}

/// Remove the angle distortion left around the puncture by rebuilding the map in
/// the south-pole plane with the inverse distortion as its Beltrami coefficient.
pub fn south_pole_correction(mesh: &TriMesh, f: SphericalMap) -> Result<SphericalMap> {
    let w: Vec<C64> = f.points().iter().map(|p| project_point(p, Pole::South)).collect();
    if w.iter().any(|w| !w.is_finite()) {
        return Ok(f);
    }
    let layouts = surface_face_layouts(mesh, mesh.vertices());
    let radius: Vec<f64> = mesh
        .faces()
        .iter()
        .map(|t| {
            let c = (f.points()[t[0]] + f.points()[t[1]] + f.points()[t[2]]).normalize();
            project_point(&c, Pole::South).norm()
        })
        .collect();
    let mut sorted = radius.clone();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| sorted[((p * (sorted.len() - 1) as f64) as usize).min(sorted.len() - 1)];
    let (r0, r1) = (q(TAPER_START), q(CAP_START));

    let mut mu = Vec::with_capacity(mesh.num_faces());
    let mut pinned = vec![false; mesh.num_vertices()];
    for (fi, t) in mesh.faces().iter().enumerate() {
        let src = [w[t[0]], w[t[1]], w[t[2]]];
        let m = match affine_coefficients(src, layouts[fi]) {
            Some((a, b)) if a.norm() > 0.0 => b / a,
            _ => C64::new(0.0, 0.0),
        };
        let r = radius[fi];
        let weight = if r >= r1 {
            for &v in t {
                pinned[v] = true;
            }
            0.0
        } else if r <= r0 || r1 <= r0 {
            1.0
        } else {
            let s = (r - r0) / (r1 - r0);
            1.0 - s * s * (3.0 - 2.0 * s)
        };
        mu.push(m * weight);
    }
    let mu = truncate_mu(&mu, 0.1, None);
    let fixed: Vec<usize> = (0..mesh.num_vertices()).filter(|&v| pinned[v]).collect();
    let values: Vec<C64> = fixed.iter().map(|&v| w[v]).collect();
    let g = match lbs_reconstruct(mesh, &PlanarMap { points: w }, &mu, &fixed, &values) {
        Ok(g) => g,
        Err(e) => {
            log::warn!("south-pole correction skipped: {e}");
            return Ok(f);
        }
    };
    let corrected = SphericalMap::new(g.points.iter().map(|&w| unproject_point(w, Pole::South)).collect())?;
    if count_flips(mesh, corrected.points()) > 0 && count_flips(mesh, f.points()) == 0 {
        log::debug!("south-pole correction introduced flips; keeping the harmonic map");
        return Ok(f);
    }
    Ok(corrected)
}

/// Parameters of `z ↦ e^s (z − a) / (1 + ā z)` on the north-pole plane.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MobiusParams {
    pub a: C64,
    pub s: f64,
}

impl MobiusParams {
    fn from_vec(x: [f64; 3]) -> Self {
        MobiusParams {
            a: C64::new(x[0], x[1]),
            s: x[2],
        }
    }

    /// Parameter vector `(Re a, Im a, s)`.
    pub fn as_array(&self) -> [f64; 3] {
        [self.a.re, self.a.im, self.s]
    }

    /// Apply to points on the sphere in homogeneous coordinates, so points at or
    /// near the north pole are handled exactly.
    pub fn apply(&self, points: &[Vec3]) -> Vec<Vec3> {
        let (up, down) = ((self.s / 2.0).exp(), (-self.s / 2.0).exp());
        points
            .iter()
            .map(|x| {
                let (p, q) = to_homogeneous(x);
                let (p2, q2) = (p - self.a * q, self.a.conj() * p + q);
                from_homogeneous(p2 * up, q2 * down)
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct MobiusOutcome {
    pub map: SphericalMap,
    pub params: MobiusParams,
    pub objective_before: f64,
    pub objective_after: f64,
    pub iterations: usize,
    /// Set when the objective could not be evaluated and the input was returned.
    pub diverged: bool,
}

const MOBIUS_MAX_ITER: usize = 200;
const MOBIUS_GRAD_TOL: f64 = 1e-9;
const FD_STEP: f64 = 1e-6;

/// Area-weighted `Σ Area(T) d_area(T)²` with weights normalized to sum to one.
pub fn area_distortion_objective(mesh: &TriMesh, map: &[Vec3]) -> f64 {
    let src = face_areas(mesh, mesh.vertices());
    objective_with(&src, mesh, map)
}

fn objective_with(src: &[f64], mesh: &TriMesh, map: &[Vec3]) -> f64 {
    let total: f64 = src.iter().sum();
    match log_ratio(src, &face_areas(mesh, map)) {
        Ok(d) => d.iter().zip(src).map(|(d, a)| a / total * d * d).sum(),
        Err(_) => f64::INFINITY,
    }
}

/// Minimize the area distortion objective over Möbius transformations by gradient
/// descent with central differences and step halving.
pub fn mobius_area_correction(mesh: &TriMesh, map: &SphericalMap) -> MobiusOutcome {
    let src = face_areas(mesh, mesh.vertices());
    let eval = |x: [f64; 3]| objective_with(&src, mesh, &MobiusParams::from_vec(x).apply(map.points()));
    let start = objective_with(&src, mesh, map.points());
    if !start.is_finite() {
        log::warn!("area objective is not finite; Möbius correction skipped");
        return MobiusOutcome {
            map: map.clone(),
            params: MobiusParams::default(),
            objective_before: start,
            objective_after: start,
            iterations: 0,
            diverged: true,
        };
    }
    let mut x = [0.0; 3];
    let mut fx = start;
    let mut step = 1.0;
    let mut iterations = 0;
    for it in 0..MOBIUS_MAX_ITER {
        iterations = it;
        let mut g = [0.0; 3];
        for k in 0..3 {
            let (mut xp, mut xm) = (x, x);
            xp[k] += FD_STEP;
            xm[k] -= FD_STEP;
            g[k] = (eval(xp) - eval(xm)) / (2.0 * FD_STEP);
        }
        let gn = g.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(gn >= MOBIUS_GRAD_TOL) {
            break;
        }
        let mut accepted = false;
        while step > 1e-14 {
            let trial = [x[0] - step * g[0], x[1] - step * g[1], x[2] - step * g[2]];
            let ft = eval(trial);
            if ft < fx {
                x = trial;
                fx = ft;
                accepted = true;
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    if x == [0.0; 3] {
        return MobiusOutcome {
            map: map.clone(),
            params: MobiusParams::default(),
            objective_before: start,
            objective_after: start,
            iterations,
            diverged: false,
        };
    }
    let params = MobiusParams::from_vec(x);
    MobiusOutcome {
        map: SphericalMap::new(params.apply(map.points())).expect("unit points"),
        params,
        objective_before: start,
        objective_after: fx,
        iterations,
        diverged: false,
    }
}
