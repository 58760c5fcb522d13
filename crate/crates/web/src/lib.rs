//! Browser bindings for the density-equalizing demo page in `www/`.
//!
//! Every export takes and returns plain numbers or flat arrays so the page
//! needs no glue beyond the generated module.

use num_complex::Complex64 as C64;
use sdem::beltrami::{lbs_reconstruct, truncate_mu};
use sdem::conformal::MobiusParams;
use sdem::geometry::face_areas;
use sdem::overlap::count_flips;
use sdem::primitives::icosphere;
use sdem::sdem::{recouple_density, sdem_run, SdemConfig};
use sdem::sphere::{PlanarMap, SphericalMap};
use sdem::{TriMesh, Vec3};
use wasm_bindgen::prelude::*;

/// A unit sphere carrying a face population that can be edited and flowed.
#[wasm_bindgen]
pub struct DensityDemo {
    mesh: TriMesh,
    population: Vec<f64>,
    map: SphericalMap,
    iteration: usize,
    dt: f64,
}

#[wasm_bindgen]
impl DensityDemo {
    /// Icosphere with `20·frequency²` faces (frequency clamped to 1..=24) and
    /// population proportional to face area.
    #[wasm_bindgen(constructor)]
    pub fn new(frequency: usize) -> DensityDemo {
        let mesh = icosphere(frequency.clamp(1, 24));
        let population = face_areas(&mesh, mesh.vertices());
        let map = SphericalMap::new(mesh.vertices().to_vec()).expect("icosphere vertices are unit");
        DensityDemo { mesh, population, map, iteration: 0, dt: 0.1 }
    }

    #[wasm_bindgen(js_name = setTimeStep)]
    pub fn set_time_step(&mut self, dt: f64) {
        if dt > 0.0 && dt.is_finite() {
            self.dt = dt;
        }
    }

    /// Multiply the population of every face whose mapped centroid lies within
    /// `radius` radians of the direction `(x, y, z)`. Returns the faces touched.
    pub fn raise(&mut self, x: f64, y: f64, z: f64, radius: f64, factor: f64) -> usize {
        let d = Vec3::new(x, y, z);
        if !(d.norm() > 0.0) || !(factor > 0.0) || !factor.is_finite() {
            return 0;
        }
        let d = d.normalize();
        let cos_r = radius.cos();
        let p = self.map.points();
        let mut touched = 0;
        for (f, t) in self.mesh.faces().iter().enumerate() {
            let c = (p[t[0]] + p[t[1]] + p[t[2]]).normalize();
            if c.dot(&d) >= cos_r {
                self.population[f] *= factor;
                touched += 1;
            }
        }
        touched
    }

    /// Run up to `n` density-equalizing iterations; returns the density ratio.
    pub fn step(&mut self, n: usize) -> f64 {
        for _ in 0..n {
            let cfg = SdemConfig { dt: self.dt, eps: 1e-4, max_iter: 1 };
            match sdem_run(&self.mesh, &self.population, &self.map, &cfg) {
                Ok((f, trace)) if !trace.records.is_empty() => {
                    self.map = f;
                    self.iteration += 1;
                    if trace.stalled {
                        break;
                    }
                }
                _ => break,
            }
        }
        self.ratio()
    }

    /// Push the current map through a Möbius transformation of the sphere.
    pub fn mobius(&mut self, re: f64, im: f64, s: f64) {
        let a = C64::new(re, im);
        if !(a.norm() < 0.95) || !s.is_finite() {
            return;
        }
        let moved = MobiusParams { a, s }.apply(self.map.points());
        if let Ok(m) = SphericalMap::new(moved) {
            self.map = m;
        }
    }

    /// Restore the uniform population and the identity map.
    pub fn reset(&mut self) {
        self.population = face_areas(&self.mesh, self.mesh.vertices());
        self.map = SphericalMap::new(self.mesh.vertices().to_vec()).expect("icosphere vertices are unit");
        self.iteration = 0;
    }

    /// Vertex density `sd/mean` of the current map.
    pub fn ratio(&self) -> f64 {
        recouple_density(&self.mesh, self.map.points(), &self.population).map_or(f64::NAN, |d| d.ratio())
    }

    pub fn flips(&self) -> usize {
        count_flips(&self.mesh, self.map.points())
    }

    pub fn iteration(&self) -> usize {
        self.iteration
    }

    /// Flat `x, y, z` per vertex.
    pub fn positions(&self) -> Vec<f64> {
        self.map.points().iter().flat_map(|p| [p.x, p.y, p.z]).collect()
    }

    /// Flat vertex triples per face.
    pub fn faces(&self) -> Vec<u32> {
        self.mesh.faces().iter().flat_map(|f| f.map(|v| v as u32)).collect()
    }

    /// `log(ρ / mean ρ)` per face, with `ρ` = population / mapped area.
    #[wasm_bindgen(js_name = logDensity)]
    pub fn log_density(&self) -> Vec<f64> {
        let areas = face_areas(&self.mesh, self.map.points());
        let rho: Vec<f64> = self.population.iter().zip(&areas).map(|(p, a)| p / a).collect();
        let mean = self.population.iter().sum::<f64>() / areas.iter().sum::<f64>();
        rho.iter().map(|r| (r / mean).ln()).collect()
    }
}

/// Square grid on `[-1, 1]²` closed into a sphere by an apex below it.
/// Returns the mesh, its planar layout and the pinned vertices (ring then apex).
fn closed_grid(n: usize) -> (TriMesh, PlanarMap, Vec<usize>) {
    let id = |i: usize, j: usize| j * (n + 1) + i;
    let mut v = Vec::with_capacity((n + 1) * (n + 1) + 1);
    for j in 0..=n {
        for i in 0..=n {
            v.push(Vec3::new(2.0 * i as f64 / n as f64 - 1.0, 2.0 * j as f64 / n as f64 - 1.0, 0.0));
        }
    }
    let mut f = Vec::new();
    for j in 0..n {
        for i in 0..n {
            f.push([id(i, j), id(i + 1, j), id(i + 1, j + 1)]);
            f.push([id(i, j), id(i + 1, j + 1), id(i, j + 1)]);
        }
    }
    let apex = v.len();
    v.push(Vec3::new(0.0, 0.0, -1.0));
    let mut ring: Vec<usize> = (0..n).map(|i| id(i, 0)).collect();
    ring.extend((0..n).map(|j| id(n, j)));
    ring.extend((1..=n).rev().map(|i| id(i, n)));
    ring.extend((1..=n).rev().map(|j| id(0, j)));
    for k in 0..ring.len() {
        f.push([ring[(k + 1) % ring.len()], ring[k], apex]);
    }
    let layout = PlanarMap { points: v.iter().map(|p| C64::new(p.x, p.y)).collect() };
    let mesh = TriMesh::new(v, f).expect("closed grid is a valid sphere");
    ring.push(apex);
    (mesh, layout, ring)
}

/// Quasi-conformal deformation of an `n × n` grid on `[-1, 1]²` with the
/// boundary held fixed and Beltrami coefficient `μ` inside the disk of
/// `radius` around the origin. Returns flat `x, y` for the `(n+1)²` grid
/// vertices in row-major order, or an empty array if the solve fails.
#[wasm_bindgen(js_name = lbsGrid)]
pub fn lbs_grid(n: usize, mu_re: f64, mu_im: f64, radius: f64) -> Vec<f64> {
    let n = n.clamp(2, 96);
    let (mesh, layout, fixed) = closed_grid(n);
    let grid_faces = 2 * n * n;
    let mu: Vec<C64> = mesh
        .faces()
        .iter()
        .enumerate()
        .map(|(k, t)| {
            let c = (layout.points[t[0]] + layout.points[t[1]] + layout.points[t[2]]) / 3.0;
            if k < grid_faces && c.norm() < radius {
                C64::new(mu_re, mu_im)
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    let mu = truncate_mu(&mu, 0.01, None);
    let values: Vec<C64> = fixed.iter().map(|&v| layout.points[v]).collect();
    match lbs_reconstruct(&mesh, &layout, &mu, &fixed, &values) {
        Ok(out) => out.points[..(n + 1) * (n + 1)].iter().flat_map(|z| [z.re, z.im]).collect(),
        Err(_) => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_grid_is_a_sphere() {
        let (m, layout, fixed) = closed_grid(5);
        assert_eq!(m.euler_characteristic(), 2);
        assert_eq!(layout.points.len(), m.num_vertices());
        assert_eq!(fixed.len(), 4 * 5 + 1);
    }

    #[test]
    fn raise_counts_faces_in_cap() {
        let mut d = DensityDemo::new(4);
        assert_eq!(d.raise(0.0, 0.0, 1.0, std::f64::consts::PI, 2.0), d.mesh.num_faces());
        assert_eq!(d.raise(0.0, 0.0, 0.0, 1.0, 2.0), 0);
    }
}
