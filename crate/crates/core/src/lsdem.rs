//! Landmark-aligned density-equalizing maps.
//!
//! The combined energy `E = α ∫‖∇ρ‖² + β ∫‖∇f‖² + γ Σ‖f(p_i) − q_i‖²` is reduced by
//! alternating a best-fit rigid rotation of the landmarks with a tangential
//! descent step, followed by overlap repair and density re-coupling.

use nalgebra::Matrix3;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{face_areas, face_gradient};
use crate::mesh::{TriMesh, Vec3};
use crate::operators::{cotangent_laplacian, face_to_vertex_matrix};
use crate::overlap::{correct_overlaps, count_flips, CorrectionConfig, CorrectionStatus};
use crate::sdem::{diffuse_with_halving, recouple_density, validate_population, DensityField, IterationRecord};
use crate::sparse::SparseOperator;
use crate::sphere::SphericalMap;

/// Vertex indices paired with target points on the unit sphere.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LandmarkSet {
    pairs: Vec<(usize, Vec3)>,
}

impl LandmarkSet {
    /// Targets are normalized; indices must be distinct and below `num_vertices`.
    pub fn new(pairs: Vec<(usize, Vec3)>, num_vertices: usize) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::with_capacity(pairs.len());
        for (v, q) in pairs {
            if v >= num_vertices {
                return Err(Error::InvalidInput(format!("landmark vertex {v} out of range")));
            }
            if !seen.insert(v) {
                return Err(Error::InvalidInput(format!("landmark vertex {v} listed twice")));
            }
            let n = q.norm();
            if !(n > 0.0) || !n.is_finite() {
                return Err(Error::InvalidInput(format!("landmark target for vertex {v} is not a direction")));
            }
            out.push((v, q / n));
        }
        Ok(LandmarkSet { pairs: out })
    }

    pub fn empty() -> Self {
        LandmarkSet::default()
    }

    pub fn pairs(&self) -> &[(usize, Vec3)] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn targets(&self) -> Vec<Vec3> {
        self.pairs.iter().map(|p| p.1).collect()
    }

    /// Current landmark positions under `map`.
    pub fn positions(&self, map: &[Vec3]) -> Vec<Vec3> {
        self.pairs.iter().map(|p| map[p.0]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for EnergyWeights {
    fn default() -> Self {
        EnergyWeights {
            alpha: 1.0,
            beta: 2.0,
            gamma: 5.0,
        }
    }
}

impl EnergyWeights {
    pub fn validate(&self) -> Result<()> {
        let w = [self.alpha, self.beta, self.gamma];
        if w.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) || w.iter().all(|x| *x == 0.0) {
            return Err(Error::InvalidInput(format!(
                "weights must be nonnegative and not all zero, got {w:?}"
            )));
        }
        Ok(())
    }
}

/// Angles of `R_x(φ) R_y(ψ) R_z(θ)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct RotationAngles {
    pub phi: f64,
    pub psi: f64,
    pub theta: f64,
}

fn wrap_angle(a: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let r = a - tau * (a / tau).round();
    if r <= -std::f64::consts::PI {
        r + tau
    } else {
        r
    }
}

fn rx(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(1.0, 0.0, 0.0, 0.0, c, -s, 0.0, s, c)
}

fn ry(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, 0.0, s, 0.0, 1.0, 0.0, -s, 0.0, c)
}

fn rz(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0)
}

fn drx(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(0.0, 0.0, 0.0, 0.0, -s, -c, 0.0, c, -s)
}

fn dry(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, 0.0, c, 0.0, 0.0, 0.0, -c, 0.0, -s)
}

fn drz(a: f64) -> Matrix3<f64> {
    let (s, c) = a.sin_cos();
    Matrix3::new(-s, -c, 0.0, c, -s, 0.0, 0.0, 0.0, 0.0)
}

impl RotationAngles {
    pub fn new(phi: f64, psi: f64, theta: f64) -> Self {
        RotationAngles {
            phi: wrap_angle(phi),
            psi: wrap_angle(psi),
            theta: wrap_angle(theta),
        }
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        rx(self.phi) * ry(self.psi) * rz(self.theta)
    }

    fn as_array(&self) -> [f64; 3] {
        [self.phi, self.psi, self.theta]
    }
}

/// `L(φ, ψ, θ) = Σ ‖R_x R_y R_z p_i − q_i‖²`.
pub fn rotation_mismatch(angles: &RotationAngles, current: &[Vec3], targets: &[Vec3]) -> f64 {
    let r = angles.matrix();
    current.iter().zip(targets).map(|(p, q)| (r * p - q).norm_squared()).sum()
}

/// Partial derivatives of [`rotation_mismatch`] in `(φ, ψ, θ)`.
pub fn rotation_gradient(angles: &RotationAngles, current: &[Vec3], targets: &[Vec3]) -> [f64; 3] {
    let (x, y, z) = (rx(angles.phi), ry(angles.psi), rz(angles.theta));
    let r = x * y * z;
    let parts = [drx(angles.phi) * y * z, x * dry(angles.psi) * z, x * y * drz(angles.theta)];
    let mut g = [0.0; 3];
    for (p, q) in current.iter().zip(targets) {
        let res = r * p - q;
        for (gk, dk) in g.iter_mut().zip(&parts) {
            *gk += 2.0 * res.dot(&(dk * p));
        }
    }
    g
}

const ROTATION_STEP: f64 = 0.1;
const ROTATION_GRADIENT_TOL: f64 = 1e-8;
const ROTATION_MAX_ITER: usize = 500;
const ROTATION_MAX_HALVINGS: usize = 60;

/// Gradient descent on `L` from zero angles with step 0.1 and backtracking halving.
pub fn optimal_rotation(current: &[Vec3], targets: &[Vec3]) -> RotationAngles {
    let mut a = RotationAngles::default();
    if current.is_empty() {
        return a;
    }
    let mut l = rotation_mismatch(&a, current, targets);
    let mut step = ROTATION_STEP;
    for _ in 0..ROTATION_MAX_ITER {
        let g = rotation_gradient(&a, current, targets);
        let gn = g.iter().map(|x| x * x).sum::<f64>().sqrt();
        if gn <= ROTATION_GRADIENT_TOL {
            break;
        }
        let mut moved = false;
        for _ in 0..ROTATION_MAX_HALVINGS {
            let x = a.as_array();
            let trial = RotationAngles {
                phi: x[0] - step * g[0],
                psi: x[1] - step * g[1],
                theta: x[2] - step * g[2],
            };
            let lt = rotation_mismatch(&trial, current, targets);
            if lt < l {
                a = trial;
                l = lt;
                moved = true;
                // Accepted steps grow so flat valleys do not exhaust the iteration budget.
                step *= 2.0;
                break;
            }
            step *= 0.5;
        }
        if !moved {
            break;
        }
    }
    RotationAngles::new(a.phi, a.psi, a.theta)
}

pub fn apply_rotation(map: &SphericalMap, angles: &RotationAngles) -> SphericalMap {
    map.rotated(&angles.matrix())
}

/// `Σ_T Area(T) ‖∇ρ(T)‖²` of a vertex function on `positions`.
pub fn dirichlet_energy(mesh: &TriMesh, positions: &[Vec3], u: &[f64]) -> f64 {
    face_gradient(mesh, positions, u)
        .iter()
        .zip(face_areas(mesh, positions))
        .map(|(g, a)| a * g.norm_squared())
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Energies {
    pub total: f64,
    pub density: f64,
    pub harmonic: f64,
    pub landmark: f64,
}

/// Reusable state for evaluating the combined energy on one mesh.
#[derive(Debug, Clone)]
pub struct EnergyModel {
    laplacian: SparseOperator,
    weights: EnergyWeights,
}

impl EnergyModel {
    pub fn new(mesh: &TriMesh, weights: EnergyWeights) -> Result<Self> {
        weights.validate()?;
        Ok(EnergyModel {
            laplacian: cotangent_laplacian(mesh, mesh.vertices())?,
            weights,
        })
    }

    pub fn weights(&self) -> &EnergyWeights {
        &self.weights
    }

    /// `Σ_c f_cᵀ L f_c` with `L` the cotangent Laplacian of the input surface.
    pub fn harmonic(&self, map: &[Vec3]) -> f64 {
        let lf = self.laplacian.mul_vec3(map);
        map.iter().zip(&lf).map(|(f, l)| f.dot(l)).sum()
    }

    pub fn energies(&self, mesh: &TriMesh, map: &[Vec3], density: &DensityField, lm: &LandmarkSet) -> Energies {
        let w = &self.weights;
        let density_term = w.alpha * dirichlet_energy(mesh, map, &density.vertex_density);
        let harmonic = w.beta * self.harmonic(map);
        let landmark = w.gamma * crate::metrics::landmark_error(map, lm.pairs()).powi(2);
        Energies {
            total: density_term + harmonic + landmark,
            density: density_term,
            harmonic,
            landmark,
        }
    }

    /// `dE = α ṽ + β Δ̄f + dE_3`, all tangential to the sphere at each vertex.
    ///
    /// `ṽ` is the tangential part of `−∇ρ/ρ` on the current map after one implicit
    /// diffusion step of length `α · step`, the time the density flow advances in
    /// one update of size `step`. `Δf = −L f` is the
    /// Laplacian of the map over the input surface, and the landmark term is
    /// `−γ (f(p_i) − q_i)` at landmark vertices only.
    pub fn descent_direction(
        &self,
        mesh: &TriMesh,
        map: &[Vec3],
        density: &DensityField,
        lm: &LandmarkSet,
        step: f64,
    ) -> Result<Vec<Vec3>> {
        let w = &self.weights;
        let mut d = vec![Vec3::zeros(); map.len()];
        if w.alpha > 0.0 {
            let (rho, _) = diffuse_with_halving(mesh, map, &density.vertex_density, w.alpha * step)?;
            let grad = face_to_vertex_matrix(mesh, map).mul_vec3(&face_gradient(mesh, map, &rho));
            for ((d, g), r) in d.iter_mut().zip(&grad).zip(&rho) {
                *d -= g * (w.alpha / r);
            }
        }
        if w.beta > 0.0 {
            for (d, l) in d.iter_mut().zip(self.laplacian.mul_vec3(map)) {
                *d -= l * w.beta;
            }
        }
        for (v, q) in lm.pairs() {
            d[*v] -= (map[*v] - q) * w.gamma;
        }
        for (d, n) in d.iter_mut().zip(map) {
            *d -= n * d.dot(n);
        }
        Ok(d)
    }
}

pub fn combined_energy(
    mesh: &TriMesh,
    map: &SphericalMap,
    density: &DensityField,
    lm: &LandmarkSet,
    weights: &EnergyWeights,
) -> Result<Energies> {
    Ok(EnergyModel::new(mesh, *weights)?.energies(mesh, map.points(), density, lm))
}

pub fn descent_direction(
    mesh: &TriMesh,
    map: &SphericalMap,
    density: &DensityField,
    lm: &LandmarkSet,
    weights: &EnergyWeights,
) -> Result<Vec<Vec3>> {
    EnergyModel::new(mesh, *weights)?.descent_direction(mesh, map.points(), density, lm, LsdemConfig::default().dt)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LsdemConfig {
    pub dt: f64,
    /// Stop once the largest vertex displacement of an iteration falls below this.
    pub eps: f64,
    pub max_iter: usize,
}

impl Default for LsdemConfig {
    fn default() -> Self {
        LsdemConfig {
            dt: 0.01,
            eps: 1e-3,
            max_iter: 200,
        }
    }
}

impl LsdemConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.eps > 0.0) || self.max_iter < 1 {
            return Err(Error::InvalidInput(format!(
                "invalid solver settings: dt {}, eps {}, max_iter {}",
                self.dt, self.eps, self.max_iter
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LsdemTrace {
    pub initial_energy: Option<Energies>,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    pub stalled: bool,
}

pub fn lsdem_run(
    mesh: &TriMesh,
    population: &[f64],
    f0: &SphericalMap,
    lm: &LandmarkSet,
    weights: &EnergyWeights,
    cfg: &LsdemConfig,
) -> Result<(SphericalMap, LsdemTrace)> {
    lsdem_run_with(mesh, population, f0, lm, weights, cfg, &CorrectionConfig::default(), |_| {})
}

#[allow(clippy::too_many_arguments)]
pub fn lsdem_run_with(
    mesh: &TriMesh,
    population: &[f64],
    f0: &SphericalMap,
    lm: &LandmarkSet,
    weights: &EnergyWeights,
    cfg: &LsdemConfig,
    correction: &CorrectionConfig,
    mut observe: impl FnMut(&IterationRecord),
) -> Result<(SphericalMap, LsdemTrace)> {
    cfg.validate()?;
    validate_population(mesh, population)?;
    if f0.len() != mesh.num_vertices() {
        return Err(Error::InvalidInput("initial map does not match the mesh".into()));
    }
    if let Some((v, _)) = lm.pairs().iter().find(|(v, _)| *v >= mesh.num_vertices()) {
        return Err(Error::InvalidInput(format!("landmark vertex {v} out of range")));
    }
    let model = EnergyModel::new(mesh, *weights)?;
    let targets = lm.targets();
    let mut f = f0.clone();
    let mut density = recouple_density(mesh, f.points(), population)?;
    let mut trace = LsdemTrace {
        initial_energy: Some(model.energies(mesh, f.points(), &density, lm)),
        ..Default::default()
    };
    for n in 0..cfg.max_iter {
        let angles = optimal_rotation(&lm.positions(f.points()), &targets);
        let rotated = apply_rotation(&f, &angles);
        let d = model.descent_direction(mesh, rotated.points(), &density, lm, cfg.dt)?;
        let proposal = SphericalMap::new(
            rotated
                .points()
                .iter()
                .zip(&d)
                .map(|(x, d)| x + d * cfg.dt)
                .collect(),
        )?;
        let fixed = correct_overlaps(mesh, &rotated, &proposal, correction)?;
        let halvings = match fixed.status {
            CorrectionStatus::Unchanged => None,
            CorrectionStatus::Repaired { halvings } => Some(halvings),
            CorrectionStatus::Stalled => {
                trace.stalled = true;
                f = rotated;
                break;
            }
        };
        let max_displacement = fixed.map.max_displacement(&f);
        f = fixed.map;
        density = recouple_density(mesh, f.points(), population)?;
        let e = model.energies(mesh, f.points(), &density, lm);
        let record = IterationRecord {
            iteration: n + 1,
            ratio: density.ratio(),
            flip_count: count_flips(mesh, f.points()),
            max_displacement,
            dt: cfg.dt,
            correction_halvings: halvings,
            energy: Some(e.total),
        };
        log::debug!("iteration {}: energy {:.6e}", record.iteration, e.total);
        observe(&record);
        trace.records.push(record);
        if max_displacement < cfg.eps {
            trace.converged = true;
            break;
        }
    }
    Ok((f, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::landmark_error;
    use crate::primitives;
    use nalgebra::{Rotation3, Unit};
    use proptest::prelude::*;

    fn perturbed_sphere(n: usize, amp: f64) -> (TriMesh, SphericalMap) {
        let m = primitives::icosphere(n);
        let pts = m
            .vertices()
            .iter()
            .map(|p| p + Vec3::new((3.0 * p.y).sin(), (2.0 * p.z).cos(), (4.0 * p.x).sin()) * amp)
            .collect();
        (m, SphericalMap::new(pts).unwrap())
    }

    fn angle_between(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
        let r = a.transpose() * b;
        ((r.trace() - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
    }

    #[test]
    fn angles_canonicalized() {
        let a = RotationAngles::new(3.0 * std::f64::consts::PI, -std::f64::consts::PI, 7.0);
        assert!((a.phi - std::f64::consts::PI).abs() < 1e-12);
        assert!((a.psi - std::f64::consts::PI).abs() < 1e-12);
        assert!((a.theta - (7.0 - std::f64::consts::TAU)).abs() < 1e-12);
    }

    #[test]
    fn rotation_matrix_examples() {
        assert_eq!(RotationAngles::default().matrix(), Matrix3::identity());
        let half = RotationAngles::new(0.0, 0.0, std::f64::consts::PI);
        let (m, _) = perturbed_sphere(3, 0.0);
        let f = SphericalMap::new(m.vertices().to_vec()).unwrap();
        let twice = apply_rotation(&apply_rotation(&f, &half), &half);
        assert!(twice.max_displacement(&f) < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let cur = [Vec3::new(0.3, 0.5, 0.8).normalize(), Vec3::new(-0.7, 0.1, 0.2).normalize()];
        let tgt = [Vec3::new(0.1, 0.9, 0.2).normalize(), Vec3::new(0.0, -0.4, 0.9).normalize()];
        let a = RotationAngles::new(0.3, -0.7, 1.1);
        let g = rotation_gradient(&a, &cur, &tgt);
        let h = 1e-6;
        let x = a.as_array();
        for k in 0..3 {
            let mut p = x;
            let mut q = x;
            p[k] += h;
            q[k] -= h;
            let lp = rotation_mismatch(&RotationAngles { phi: p[0], psi: p[1], theta: p[2] }, &cur, &tgt);
            let lq = rotation_mismatch(&RotationAngles { phi: q[0], psi: q[1], theta: q[2] }, &cur, &tgt);
            assert!((g[k] - (lp - lq) / (2.0 * h)).abs() < 1e-7);
        }
    }

    #[test]
    fn optimal_rotation_recovers_z_rotation() {
        let cur: Vec<Vec3> = [(1.0, 0.2, 0.3), (-0.3, 0.9, -0.2), (0.1, -0.4, 0.9)]
            .iter()
            .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
            .collect();
        assert_eq!(optimal_rotation(&cur, &cur), RotationAngles::default());
        let r = rz(30f64.to_radians());
        let tgt: Vec<Vec3> = cur.iter().map(|p| r * p).collect();
        let a = optimal_rotation(&cur, &tgt);
        assert!(angle_between(&a.matrix(), &r) < 1e-4);
        assert!(optimal_rotation(&[], &[]) == RotationAngles::default());
    }

    #[test]
    fn landmark_set_validation() {
        assert!(LandmarkSet::new(vec![(0, Vec3::x()), (0, Vec3::y())], 5).is_err());
        assert!(LandmarkSet::new(vec![(7, Vec3::x())], 5).is_err());
        assert!(LandmarkSet::new(vec![(1, Vec3::zeros())], 5).is_err());
        let l = LandmarkSet::new(vec![(1, Vec3::new(0.0, 2.0, 0.0))], 5).unwrap();
        assert_eq!(l.pairs()[0].1, Vec3::y());
        assert!(EnergyWeights { alpha: 0.0, beta: 0.0, gamma: 0.0 }.validate().is_err());
        assert!(EnergyWeights { alpha: -1.0, beta: 1.0, gamma: 0.0 }.validate().is_err());
    }

    #[test]
    fn energy_terms_vanish_where_expected() {
        let (m, f) = perturbed_sphere(4, 0.05);
        let pop = face_areas(&m, f.points());
        let d = recouple_density(&m, f.points(), &pop).unwrap();
        let lm = LandmarkSet::new(vec![(3, f.points()[3]), (10, f.points()[10])], m.num_vertices()).unwrap();
        let e = combined_energy(&m, &f, &d, &lm, &EnergyWeights::default()).unwrap();
        assert!(e.landmark == 0.0);
        assert!(e.density < 1e-20);
        assert!((e.total - e.harmonic).abs() < 1e-12 * e.total);
    }

    #[test]
    fn density_energy_dual_routes_agree() {
        let (m, f) = perturbed_sphere(5, 0.1);
        let rho: Vec<f64> = f.points().iter().map(|p| 2.0 + p.x * p.y + 0.5 * p.z).collect();
        let direct = dirichlet_energy(&m, f.points(), &rho);
        let l = cotangent_laplacian(&m, f.points()).unwrap();
        let quad: f64 = rho.iter().zip(l.mul_vec(&rho)).map(|(a, b)| a * b).sum();
        assert!((direct - quad).abs() < 1e-10 * quad);
    }

    #[test]
    fn descent_is_tangential_and_supported() {
        let (m, f) = perturbed_sphere(4, 0.08);
        let pop: Vec<f64> = (0..m.num_faces()).map(|i| 1.0 + (i % 3) as f64).collect();
        let d = recouple_density(&m, f.points(), &pop).unwrap();
        let lm = LandmarkSet::new(vec![(5, Vec3::x()), (40, Vec3::z())], m.num_vertices()).unwrap();
        let dir = descent_direction(&m, &f, &d, &lm, &EnergyWeights::default()).unwrap();
        for (v, n) in dir.iter().zip(f.points()) {
            assert!(v.dot(n).abs() < 1e-12);
        }
        let only_landmarks = EnergyWeights { alpha: 0.0, beta: 0.0, gamma: 5.0 };
        let dir = descent_direction(&m, &f, &d, &lm, &only_landmarks).unwrap();
        let support: Vec<usize> = (0..dir.len()).filter(|&v| dir[v] != Vec3::zeros()).collect();
        assert_eq!(support, vec![5, 40]);
    }

    #[test]
    fn small_step_lowers_energy() {
        let (m, f) = perturbed_sphere(4, 0.15);
        let pop: Vec<f64> = face_areas(&m, m.vertices());
        let d = recouple_density(&m, f.points(), &pop).unwrap();
        let lm = LandmarkSet::new(vec![(5, Vec3::x()), (40, Vec3::z())], m.num_vertices()).unwrap();
        let model = EnergyModel::new(&m, EnergyWeights::default()).unwrap();
        let e0 = model.energies(&m, f.points(), &d, &lm).total;
        let dir = model.descent_direction(&m, f.points(), &d, &lm, 0.01).unwrap();
        let g = SphericalMap::new(f.points().iter().zip(&dir).map(|(x, v)| x + v * 1e-3).collect()).unwrap();
        let d1 = recouple_density(&m, g.points(), &pop).unwrap();
        assert!(model.energies(&m, g.points(), &d1, &lm).total < e0);
    }

    #[test]
    fn run_reduces_landmark_error_without_flips() {
        let m = primitives::icosphere(6);
        let f0 = SphericalMap::new(m.vertices().to_vec()).unwrap();
        let r = Rotation3::from_axis_angle(&Unit::new_normalize(Vec3::new(1.0, 2.0, 0.5)), 0.6);
        let idx = [0usize, 37, 120, 211, 300];
        let pairs: Vec<(usize, Vec3)> = idx
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let q = r * f0.points()[v] + Vec3::new(0.05, -0.04, 0.03) * (k as f64 - 2.0);
                (v, q)
            })
            .collect();
        let lm = LandmarkSet::new(pairs, m.num_vertices()).unwrap();
        let pop = face_areas(&m, m.vertices());
        let before = landmark_error(f0.points(), lm.pairs());
        let (f, trace) = lsdem_run(&m, &pop, &f0, &lm, &EnergyWeights::default(), &LsdemConfig::default()).unwrap();
        assert!(!trace.stalled);
        assert_eq!(count_flips(&m, f.points()), 0);
        assert!(landmark_error(f.points(), lm.pairs()) < 0.1 * before);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(20))]

        #[test]
        fn energies_rotation_invariant(a in -3.1f64..3.1, b in -1.5f64..1.5, c in -3.1f64..3.1) {
            let (m, f) = perturbed_sphere(4, 0.1);
            let pop: Vec<f64> = (0..m.num_faces()).map(|i| 1.0 + (i % 5) as f64).collect();
            let d = recouple_density(&m, f.points(), &pop).unwrap();
            let model = EnergyModel::new(&m, EnergyWeights::default()).unwrap();
            let e = model.energies(&m, f.points(), &d, &LandmarkSet::empty());
            let g = apply_rotation(&f, &RotationAngles::new(a, b, c));
            let dg = recouple_density(&m, g.points(), &pop).unwrap();
            let eg = model.energies(&m, g.points(), &dg, &LandmarkSet::empty());
            prop_assert!((e.density - eg.density).abs() <= 1e-10 * e.density);
            prop_assert!((e.harmonic - eg.harmonic).abs() <= 1e-10 * e.harmonic);
        }

        #[test]
        fn rotation_never_increases_mismatch(seed in prop::collection::vec(-1.0f64..1.0, 30)) {
            let pts: Vec<Vec3> = seed.chunks(3).map(|c| Vec3::new(c[0] + 1e-3, c[1], c[2]).normalize()).collect();
            let (cur, tgt) = pts.split_at(5);
            let a = optimal_rotation(cur, tgt);
            prop_assert!(rotation_mismatch(&a, cur, tgt) <= rotation_mismatch(&RotationAngles::default(), cur, tgt));
        }
    }
}
