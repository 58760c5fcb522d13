//! Flip detection and the two-pole quasi-conformal overlap correction.

use crate::beltrami::{beltrami_on, intrinsic_beltrami, lbs_reconstruct, truncate_mu, SourceMetric};
use crate::error::{Error, Result};
use crate::geometry::regularity_scores;
use crate::mesh::{TriMesh, Vec3};
use crate::sphere::{project_point, rotation_between, unproject_point, Pole, SphericalMap, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionConfig {
    /// Truncated coefficients get modulus `1 - delta`.
    pub delta: f64,
    /// Fraction of vertices, furthest from the projection centre, treated as the
    /// fixed outer region.
    pub fixed_region_quantile: f64,
    pub max_halvings: usize,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        CorrectionConfig {
            delta: 0.1,
            fixed_region_quantile: 0.02,
            max_halvings: 5,
        }
    }
}

impl CorrectionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidInput(format!("delta {} outside (0, 1)", self.delta)));
        }
        if !(self.fixed_region_quantile > 0.0 && self.fixed_region_quantile < 0.5) {
            return Err(Error::InvalidInput(format!(
                "fixed region quantile {} outside (0, 0.5)",
                self.fixed_region_quantile
            )));
        }
        if self.max_halvings < 1 {
            return Err(Error::InvalidInput("max_halvings must be at least 1".into()));
        }
        Ok(())
    }
}

/// Faces whose signed volume `det[x_i, x_j, x_k]` disagrees with the mesh orientation.
pub fn flipped_faces(mesh: &TriMesh, map: &[Vec3]) -> Vec<bool> {
    let o = mesh.orientation();
    mesh.faces()
        .iter()
        .map(|f| {
            let det = map[f[0]].dot(&map[f[1]].cross(&map[f[2]]));
            !(det * o > 0.0)
        })
        .collect()
}

pub fn count_flips(mesh: &TriMesh, map: &[Vec3]) -> usize {
    flipped_faces(mesh, map).into_iter().filter(|&b| b).count()
}

/// What [`correct_overlaps`] did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorrectionStatus {
    /// The proposed map was already bijective.
    Unchanged,
    /// Flips were removed after `halvings` step halvings.
    Repaired { halvings: usize },
    /// No flip-free map was found; the previous map was returned.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct Correction {
    pub map: SphericalMap,
    pub status: CorrectionStatus,
}

fn is_bijective_step(mesh: &TriMesh, prev: &[Vec3], curr: &[Vec3]) -> bool {
    count_flips(mesh, curr) == 0
        && intrinsic_beltrami(mesh, SourceMetric::Sphere(prev), curr)
            .iter()
            .all(|m| matches!(m, Some(m) if m.norm() < 1.0))
}

/// Remove fold-overs from `curr`, the proposed successor of the flip-free map `prev`.
///
/// A bijective proposal is returned bit-unchanged. Otherwise the step
/// `prev → curr` is rebuilt in the stereographic plane from its truncated
/// Beltrami coefficient, once from each pole, and the step is halved while flips
/// remain.
pub fn correct_overlaps(
    mesh: &TriMesh,
    prev: &SphericalMap,
    curr: &SphericalMap,
    cfg: &CorrectionConfig,
) -> Result<Correction> {
    cfg.validate()?;
    if is_bijective_step(mesh, prev.points(), curr.points()) {
        return Ok(Correction {
            map: curr.clone(),
            status: CorrectionStatus::Unchanged,
        });
    }
    let pole_face = regularity_scores(mesh, prev.points()).most_regular;
    let f = mesh.faces()[pole_face];
    let centre = (prev.points()[f[0]] + prev.points()[f[1]] + prev.points()[f[2]]).normalize();
    let rot = rotation_between(&centre, &Vec3::new(0.0, 0.0, 1.0));
    let prev_r = prev.rotated(&rot);

    let mut proposal = curr.clone();
    for halvings in 0..=cfg.max_halvings {
        if halvings > 0 {
            let scale = 0.5f64.powi(halvings as i32);
            let pts = prev
                .points()
                .iter()
                .zip(curr.points())
                .map(|(p, c)| p + (c - p) * scale)
                .collect();
            proposal = SphericalMap::new(pts)?;
            if is_bijective_step(mesh, prev.points(), proposal.points()) {
                return Ok(Correction {
                    map: proposal,
                    status: CorrectionStatus::Repaired { halvings },
                });
            }
        }
        let mut fixed = proposal.rotated(&rot);
        for pole in [Pole::North, Pole::South] {
            match pole_pass(mesh, &prev_r, &fixed, pole, cfg) {
                Ok(next) => fixed = next,
                Err(e) => log::debug!("overlap correction pass failed: {e}"),
            }
        }
        let back = fixed.rotated(&rot.transpose());
        let flips = count_flips(mesh, back.points());
        log::debug!("overlap correction after {halvings} halvings: {flips} flips");
        if flips == 0 {
            return Ok(Correction {
                map: back,
                status: CorrectionStatus::Repaired { halvings },
            });
        }
    }
    log::warn!("overlap correction stalled; keeping the previous map");
    Ok(Correction {
        map: prev.clone(),
        status: CorrectionStatus::Stalled,
    })
}

/// One stereographic pass: rebuild `curr` from `prev` with the outer region pinned.
fn pole_pass(
    mesh: &TriMesh,
    prev: &SphericalMap,
    curr: &SphericalMap,
    pole: Pole,
    cfg: &CorrectionConfig,
) -> Result<SphericalMap> {
    let zp: Vec<C64> = prev.points().iter().map(|p| project_point(p, pole)).collect();
    let zc: Vec<C64> = curr.points().iter().map(|p| project_point(p, pole)).collect();
    if zp.iter().chain(&zc).any(|z| !z.is_finite()) {
        return Err(Error::VertexAtPole { vertex: 0 });
    }
    let central = central_faces(mesh, &zp, cfg.fixed_region_quantile);
    let mu = beltrami_on(mesh, &zp, &zc, &central);
    let mu: Vec<C64> = mu.into_iter().map(|m| m.unwrap_or_default()).collect();
    let mu = truncate_mu(&mu, cfg.delta, Some(&central));

    let mut pinned = vec![false; mesh.num_vertices()];
    for (f, &c) in mesh.faces().iter().zip(&central) {
        if !c {
            for &v in f {
                pinned[v] = true;
            }
        }
    }
    let fixed: Vec<usize> = (0..mesh.num_vertices()).filter(|&v| pinned[v]).collect();
    let values: Vec<C64> = fixed.iter().map(|&v| zc[v]).collect();
    let layout = crate::sphere::PlanarMap { points: zp };
    let w = lbs_reconstruct(mesh, &layout, &mu, &fixed, &values)?;
    SphericalMap::new(w.points.iter().map(|&w| unproject_point(w, pole)).collect())
}

/// Faces whose three vertices all lie inside the `(1 - q)` radial quantile.
pub fn central_faces(mesh: &TriMesh, z: &[C64], q: f64) -> Vec<bool> {
    let mut r: Vec<f64> = z.iter().map(|z| z.norm()).collect();
    r.sort_by(f64::total_cmp);
    let k = (((1.0 - q) * (r.len() - 1) as f64).floor() as usize).min(r.len() - 1);
    let cut = r[k];
    mesh.faces()
        .iter()
        .map(|f| f.iter().all(|&v| z[v].norm() < cut))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives;

    #[test]
    fn identity_and_reflection() {
        let m = primitives::icosphere(4);
        assert_eq!(count_flips(&m, m.vertices()), 0);
        let r: Vec<Vec3> = m.vertices().iter().map(|p| Vec3::new(p.x, p.y, -p.z)).collect();
        assert_eq!(count_flips(&m, &r), m.num_faces());
    }

    #[test]
    fn inside_out_mesh_uses_its_own_orientation() {
        let t = primitives::icosahedron();
        let faces = t.faces().iter().map(|f| [f[0], f[2], f[1]]).collect();
        let m = TriMesh::new(t.vertices().to_vec(), faces).unwrap();
        assert_eq!(count_flips(&m, m.vertices()), 0);
    }

    fn push_across(m: &TriMesh) -> (usize, Vec<Vec3>) {
        // Move one vertex past the far edge of an incident face.
        let v = 37;
        let f = m.faces()[m.vertex_faces(v)[0]];
        let others: Vec<usize> = f.iter().copied().filter(|&w| w != v).collect();
        let mid = (m.vertices()[others[0]] + m.vertices()[others[1]]) * 0.5;
        let p = m.vertices()[v];
        let mut pts = m.vertices().to_vec();
        pts[v] = (p + (mid - p) * 1.6).normalize();
        (v, pts)
    }

    #[test]
    fn pushed_vertex_flips_faces() {
        let m = primitives::icosphere(5);
        let (_, pts) = push_across(&m);
        assert!(count_flips(&m, &pts) >= 1);
    }

    #[test]
    fn bijective_proposal_passes_unchanged() {
        let m = primitives::icosphere(5);
        let prev = SphericalMap::new(m.vertices().to_vec()).unwrap();
        let pts: Vec<Vec3> = m.vertices().iter().map(|p| p + Vec3::new(0.01, 0.0, 0.0)).collect();
        let curr = SphericalMap::new(pts).unwrap();
        let out = correct_overlaps(&m, &prev, &curr, &CorrectionConfig::default()).unwrap();
        assert_eq!(out.status, CorrectionStatus::Unchanged);
        assert_eq!(out.map, curr);
    }

    #[test]
    fn synthetic_flip_is_repaired() {
        let m = primitives::icosphere(6);
        let prev = SphericalMap::new(m.vertices().to_vec()).unwrap();
        let (_, pts) = push_across(&m);
        let curr = SphericalMap::new(pts).unwrap();
        assert!(count_flips(&m, curr.points()) > 0);
        let out = correct_overlaps(&m, &prev, &curr, &CorrectionConfig::default()).unwrap();
        assert!(matches!(out.status, CorrectionStatus::Repaired { .. }), "{:?}", out.status);
        assert_eq!(count_flips(&m, out.map.points()), 0);
        assert!(out.map.points().iter().all(|p| (p.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn config_validation() {
        let bad = CorrectionConfig {
            delta: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(CorrectionConfig::default().validate().is_ok());
    }
}
