//! Spherical density-equalizing flow.
//!
//! Each iteration diffuses the vertex density with one implicit step on the
//! current spherical mesh, moves vertices along the tangential part of
//! `-∇ρ / ρ`, repairs any fold-overs and recomputes the density from the fixed
//! per-face populations and the new face areas.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{face_areas, face_gradient, vertex_normals};
use crate::mesh::{TriMesh, Vec3};
use crate::metrics::{mean, std_dev};
use crate::operators::{cotangent_laplacian, face_to_vertex_matrix, lumped_mass};
use crate::overlap::{correct_overlaps, count_flips, CorrectionConfig, CorrectionStatus};
use crate::sparse::solve_linear;
use crate::sphere::SphericalMap;

/// Times the diffusion step may be halved when it produces a nonpositive density.
const MAX_DT_HALVINGS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdemConfig {
    pub dt: f64,
    /// Stop once `sd(ρ_V) / mean(ρ_V)` falls below this.
    pub eps: f64,
    pub max_iter: usize,
}

impl Default for SdemConfig {
    fn default() -> Self {
        SdemConfig {
            dt: 0.1,
            eps: 1e-3,
            max_iter: 200,
        }
    }
}

impl SdemConfig {
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

/// Population, face density and vertex density of one configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub population: Vec<f64>,
    pub face_density: Vec<f64>,
    pub vertex_density: Vec<f64>,
}

impl DensityField {
    /// `sd(ρ_V) / mean(ρ_V)`.
    pub fn ratio(&self) -> f64 {
        density_ratio(&self.vertex_density)
    }
}

pub fn density_ratio(rho: &[f64]) -> f64 {
    std_dev(rho) / mean(rho)
}

/// One line of the iteration log.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct IterationRecord {
    pub iteration: usize,
    /// Density ratio after the step.
    pub ratio: f64,
    pub flip_count: usize,
    pub max_displacement: f64,
    /// Time step actually used after any halving.
    pub dt: f64,
    /// Step halvings performed by the overlap corrector, if it ran.
    pub correction_halvings: Option<usize>,
    /// Combined energy, for runs that track one.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub energy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SdemTrace {
    pub initial_ratio: f64,
    pub records: Vec<IterationRecord>,
    pub converged: bool,
    /// The overlap corrector could not produce a flip-free step.
    pub stalled: bool,
}

/// Solve `(A + δt L) ρ' = A ρ` with operators built from `positions`.
pub fn diffusion_step(mesh: &TriMesh, positions: &[Vec3], rho_v: &[f64], dt: f64) -> Result<Vec<f64>> {
    let a = lumped_mass(mesh, positions);
    let l = cotangent_laplacian(mesh, positions)?;
    let sys = a.add_scaled(&l, dt);
    let rhs = a.mul_vec(rho_v);
    let x = solve_linear(&sys, &[rhs])?.pop().expect("one column");
    if let Some(vertex) = x.iter().position(|&r| !(r > 0.0)) {
        return Err(Error::NonPositiveDensity { vertex });
    }
    Ok(x)
}

/// `v = -(M ∇ρ) / ρ` per vertex.
pub fn velocity_field(mesh: &TriMesh, positions: &[Vec3], rho_v: &[f64]) -> Vec<Vec3> {
    let grad = face_gradient(mesh, positions, rho_v);
    let m = face_to_vertex_matrix(mesh, positions);
    m.mul_vec3(&grad)
        .into_iter()
        .zip(rho_v)
        .map(|(g, r)| -g / *r)
        .collect()
}

/// `ṽ = v - (v·n) n`.
pub fn project_velocity(v: &[Vec3], normals: &[Vec3]) -> Vec<Vec3> {
    v.iter().zip(normals).map(|(v, n)| v - n * v.dot(n)).collect()
}

/// Move every vertex by `δt ṽ` and renormalize onto the sphere.
///
/// The update follows the velocity, `x + δt ṽ`, which integrates the flow forward.
pub fn displace_and_renormalize(positions: &SphericalMap, v: &[Vec3], dt: f64) -> Result<SphericalMap> {
    SphericalMap::new(
        positions
            .points()
            .iter()
            .zip(v)
            .map(|(x, v)| x + v * dt)
            .collect(),
    )
}

/// `ρ_F = population / mapped area`, `ρ_V = M ρ_F`.
pub fn recouple_density(mesh: &TriMesh, positions: &[Vec3], population: &[f64]) -> Result<DensityField> {
    let areas = face_areas(mesh, positions);
    let face_density = population
        .iter()
        .zip(&areas)
        .enumerate()
        .map(|(face, (p, a))| if *a > 0.0 { Ok(p / a) } else { Err(Error::ZeroArea { face }) })
        .collect::<Result<Vec<_>>>()?;
    let vertex_density = face_to_vertex_matrix(mesh, positions).mul_vec(&face_density);
    Ok(DensityField {
        population: population.to_vec(),
        face_density,
        vertex_density,
    })
}

pub(crate) fn validate_population(mesh: &TriMesh, population: &[f64]) -> Result<()> {
    if population.len() != mesh.num_faces() {
        return Err(Error::InvalidInput(format!(
            "population has {} entries for {} faces",
            population.len(),
            mesh.num_faces()
        )));
    }
    if let Some(f) = population.iter().position(|p| !(*p > 0.0) || !p.is_finite()) {
        return Err(Error::InvalidInput(format!("population of face {f} is not positive")));
    }
    Ok(())
}

/// Diffusion with automatic time-step halving on nonpositive output.
pub(crate) fn diffuse_with_halving(
    mesh: &TriMesh,
    positions: &[Vec3],
    rho_v: &[f64],
    dt: f64,
) -> Result<(Vec<f64>, f64)> {
    let mut dt = dt;
    for _ in 0..=MAX_DT_HALVINGS {
        match diffusion_step(mesh, positions, rho_v, dt) {
            Ok(r) => return Ok((r, dt)),
            Err(Error::NonPositiveDensity { vertex }) => {
                log::info!("nonpositive density at vertex {vertex}; halving dt to {}", dt / 2.0);
                dt /= 2.0;
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::NonPositiveDensity { vertex: 0 })
}

/// Run the density-equalizing flow from the flip-free map `f0`.
pub fn sdem_run(
    mesh: &TriMesh,
    population: &[f64],
    f0: &SphericalMap,
    cfg: &SdemConfig,
) -> Result<(SphericalMap, SdemTrace)> {
    sdem_run_with(mesh, population, f0, cfg, &CorrectionConfig::default(), |_| {})
}

/// [`sdem_run`] with an explicit corrector configuration and a per-iteration callback.
pub fn sdem_run_with(
    mesh: &TriMesh,
    population: &[f64],
    f0: &SphericalMap,
    cfg: &SdemConfig,
    correction: &CorrectionConfig,
    mut observe: impl FnMut(&IterationRecord),
) -> Result<(SphericalMap, SdemTrace)> {
    cfg.validate()?;
    validate_population(mesh, population)?;
    if f0.len() != mesh.num_vertices() {
        return Err(Error::InvalidInput("initial map does not match the mesh".into()));
    }
    let mut f = f0.clone();
    let mut density = recouple_density(mesh, f.points(), population)?;
    let mut trace = SdemTrace {
        initial_ratio: density.ratio(),
        ..Default::default()
    };
    for n in 0..cfg.max_iter {
        if density.ratio() < cfg.eps {
            trace.converged = true;
            break;
        }
        let (rho, dt) = diffuse_with_halving(mesh, f.points(), &density.vertex_density, cfg.dt)?;
        let v = velocity_field(mesh, f.points(), &rho);
        let normals = vertex_normals(mesh, f.points())?;
        let v = project_velocity(&v, &normals);
        let proposal = displace_and_renormalize(&f, &v, dt)?;
        let fixed = correct_overlaps(mesh, &f, &proposal, correction)?;
        let halvings = match fixed.status {
            CorrectionStatus::Unchanged => None,
            CorrectionStatus::Repaired { halvings } => Some(halvings),
            CorrectionStatus::Stalled => {
                trace.stalled = true;
                break;
            }
        };
        let max_displacement = fixed.map.max_displacement(&f);
        f = fixed.map;
        density = recouple_density(mesh, f.points(), population)?;
        let record = IterationRecord {
            iteration: n + 1,
            ratio: density.ratio(),
            flip_count: count_flips(mesh, f.points()),
            max_displacement,
            dt,
            correction_halvings: halvings,
            energy: None,
        };
        log::debug!("iteration {}: ratio {:.3e}", record.iteration, record.ratio);
        observe(&record);
        trace.records.push(record);
    }
    if !trace.converged && !trace.stalled && density.ratio() < cfg.eps {
        trace.converged = true;
    }
    Ok((f, trace))
}

/// Density-equalizing flow with the input face areas as population, which makes
/// the result area-preserving.
pub fn area_preserving_param(
    mesh: &TriMesh,
    f0: &SphericalMap,
    cfg: &SdemConfig,
) -> Result<(SphericalMap, SdemTrace)> {
    let population = face_areas(mesh, mesh.vertices());
    sdem_run(mesh, &population, f0, cfg)
}
