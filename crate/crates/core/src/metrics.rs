//! Distortion and alignment measures reported for every run.

use serde::{Deserialize, Serialize};

use crate::beltrami::{intrinsic_beltrami, SourceMetric};
use crate::error::{Error, Result};
use crate::geometry::face_areas;
use crate::mesh::{TriMesh, Vec3};

/// `log[(A_f(T) / ΣA_f) / (A(T) / ΣA)]` per face, with `A` the area on the input
/// surface and `A_f` the area of the mapped chordal triangle.
pub fn logged_area_ratio(mesh: &TriMesh, map: &[Vec3]) -> Result<Vec<f64>> {
    let src = face_areas(mesh, mesh.vertices());
    let dst = face_areas(mesh, map);
    log_ratio(&src, &dst)
}

pub(crate) fn log_ratio(src: &[f64], dst: &[f64]) -> Result<Vec<f64>> {
    let (ts, td): (f64, f64) = (src.iter().sum(), dst.iter().sum());
    src.iter()
        .zip(dst)
        .enumerate()
        .map(|(face, (&a, &b))| {
            if !(a > 0.0) || !(b > 0.0) {
                Err(Error::ZeroArea { face })
            } else {
                Ok(((b / td) / (a / ts)).ln())
            }
        })
        .collect()
}

pub fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Population standard deviation.
pub fn std_dev(x: &[f64]) -> f64 {
    let m = mean(x);
    (x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

pub fn mean_abs(x: &[f64]) -> f64 {
    x.iter().map(|v| v.abs()).sum::<f64>() / x.len() as f64
}

/// Variance of `ρ / mean(ρ)`.
pub fn normalized_density_variance(rho: &[f64]) -> f64 {
    let m = mean(rho);
    let n: Vec<f64> = rho.iter().map(|r| r / m).collect();
    std_dev(&n).powi(2)
}

pub const HISTOGRAM_BINS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BeltramiStats {
    pub mean: f64,
    pub max: f64,
    /// Counts of `|μ|` in ten equal bins over `[0, 1)`; the last bin also holds `|μ| ≥ 0.9`.
    pub histogram: [usize; HISTOGRAM_BINS],
}

/// `|μ|` statistics of `map` measured against `source`.
pub fn beltrami_stats(mesh: &TriMesh, source: SourceMetric, map: &[Vec3]) -> Result<BeltramiStats> {
    let mu = intrinsic_beltrami(mesh, source, map);
    let mut histogram = [0; HISTOGRAM_BINS];
    let mut abs = Vec::with_capacity(mu.len());
    for (face, m) in mu.into_iter().enumerate() {
        let r = m.ok_or(Error::ConformalCollapse { face })?.norm();
        histogram[((r * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1)] += 1;
        abs.push(r);
    }
    Ok(BeltramiStats {
        mean: mean(&abs),
        max: abs.iter().cloned().fold(0.0, f64::max),
        histogram,
    })
}

/// `sqrt(Σ ‖f(p_i) − q_i‖²)`.
pub fn landmark_error(map: &[Vec3], landmarks: &[(usize, Vec3)]) -> f64 {
    landmarks
        .iter()
        .map(|(p, q)| (map[*p] - q).norm_squared())
        .sum::<f64>()
        .sqrt()
}

/// One run summarized as a JSON document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub struct MetricsReport {
    pub mesh_name: String,
    pub face_count: usize,
    /// Seconds spent in the mapping call, excluding IO.
    pub wall_time: f64,
    pub var_initial: Option<f64>,
    pub var_final: Option<f64>,
    /// Mean of `|d_area|`.
    pub d_area_mean_initial: Option<f64>,
    #[serde(rename = "dAreaSDInitial")]
    pub d_area_sd_initial: Option<f64>,
    pub d_area_mean_final: Option<f64>,
    #[serde(rename = "dAreaSDFinal")]
    pub d_area_sd_final: Option<f64>,
    pub mu_mean: Option<f64>,
    pub landmark_error_initial: Option<f64>,
    pub landmark_error_final: Option<f64>,
    pub flip_count: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives;

    #[test]
    fn identity_has_zero_log_ratio() {
        let m = primitives::icosphere(4);
        let d = logged_area_ratio(&m, m.vertices()).unwrap();
        assert!(d.iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn doubled_face_area_gives_log_two() {
        let src = vec![1.0; 1000];
        let mut dst = vec![1.0; 1000];
        dst[7] = 2.0;
        let d = log_ratio(&src, &dst).unwrap();
        // Normalization shifts every face by log(1000/1001).
        let shift = (1000.0f64 / 1001.0).ln();
        assert!((d[7] - (2f64.ln() + shift)).abs() < 1e-12);
        assert!((d[0] - shift).abs() < 1e-12);
        let total: f64 = d.iter().zip(&src).map(|(x, a)| x.exp() * a / 1000.0).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_area_reported() {
        assert!(matches!(log_ratio(&[1.0, 1.0], &[1.0, 0.0]), Err(Error::ZeroArea { face: 1 })));
    }

    #[test]
    fn density_variance_examples() {
        assert_eq!(normalized_density_variance(&[2.0; 8]), 0.0);
        let half: Vec<f64> = (0..10).map(|i| if i % 2 == 0 { 1.0 } else { 3.0 }).collect();
        assert!((normalized_density_variance(&half) - 0.25).abs() < 1e-15);
        let scaled: Vec<f64> = half.iter().map(|x| 7.0 * x).collect();
        assert!((normalized_density_variance(&scaled) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn landmark_error_examples() {
        let map = vec![Vec3::new(1.0, 0.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
        assert_eq!(landmark_error(&map, &[(0, map[0]), (1, map[1])]), 0.0);
        let q = Vec3::new(1.0, 0.3, 0.0);
        assert!((landmark_error(&map, &[(0, q)]) - 0.3).abs() < 1e-15);
        let r = nalgebra::Rotation3::from_euler_angles(0.4, 1.0, -0.2);
        let rmap: Vec<Vec3> = map.iter().map(|p| r * p).collect();
        assert!((landmark_error(&rmap, &[(0, r * q)]) - 0.3).abs() < 1e-12);
    }

    #[test]
    fn stats_of_identity_and_rotation() {
        let m = primitives::icosphere(5);
        let s = beltrami_stats(&m, SourceMetric::Sphere(m.vertices()), m.vertices()).unwrap();
        assert_eq!(s.mean, 0.0);
        assert_eq!(s.histogram[0], m.num_faces());
        let r = nalgebra::Rotation3::from_euler_angles(1.0, 0.5, 2.5);
        let rot: Vec<Vec3> = m.vertices().iter().map(|p| r * p).collect();
        let s = beltrami_stats(&m, SourceMetric::Sphere(m.vertices()), &rot).unwrap();
        assert!(s.mean <= 1e-8);
    }

    #[test]
    fn report_field_names() {
        let r = MetricsReport {
            flip_count: 0,
            ..Default::default()
        };
        let v = serde_json::to_value(&r).unwrap();
        for key in [
            "meshName",
            "faceCount",
            "wallTime",
            "varInitial",
            "varFinal",
            "dAreaMeanInitial",
            "dAreaSDInitial",
            "dAreaMeanFinal",
            "dAreaSDFinal",
            "muMean",
            "landmarkErrorInitial",
            "landmarkErrorFinal",
            "flipCount",
        ] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v.as_object().unwrap().len(), 13);
    }
}
