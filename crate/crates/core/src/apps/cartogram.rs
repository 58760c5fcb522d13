use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::face_areas;
use crate::mesh::TriMesh;

/// Region id reserved for the sea.
pub const SEA: u32 = 0;

/// Per-face region ids and a population for every land region.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionLabeling {
    pub labels: Vec<u32>,
    pub populations: BTreeMap<u32, f64>,
}

impl RegionLabeling {
    pub fn new(labels: Vec<u32>, populations: BTreeMap<u32, f64>) -> Result<Self> {
        if let Some((r, p)) = populations.iter().find(|(r, p)| **r != SEA && !(**p > 0.0 && p.is_finite())) {
            return Err(Error::InvalidInput(format!("region {r} has population {p}")));
        }
        if let Some(r) = labels.iter().find(|r| **r != SEA && !populations.contains_key(r)) {
            return Err(Error::InvalidInput(format!("region {r} has no population")));
        }
        Ok(RegionLabeling { labels, populations })
    }
}

/// Per-face population: land faces share their region's population by area and
/// sea faces get the area-weighted mean land density.
pub fn cartogram_population(labeling: &RegionLabeling, mesh: &TriMesh) -> Result<Vec<f64>> {
    if labeling.labels.len() != mesh.num_faces() {
        return Err(Error::InvalidInput(format!(
            "{} labels for {} faces",
            labeling.labels.len(),
            mesh.num_faces()
        )));
    }
    let areas = face_areas(mesh, mesh.vertices());
    let mut region_area: BTreeMap<u32, f64> = BTreeMap::new();
    for (r, a) in labeling.labels.iter().zip(&areas) {
        *region_area.entry(*r).or_default() += a;
    }
    let mut land_pop = 0.0;
    let mut land_area = 0.0;
    for (&r, &p) in labeling.populations.iter().filter(|(r, _)| **r != SEA) {
        let a = region_area.get(&r).copied().unwrap_or(0.0);
        if !(a > 0.0) {
            return Err(Error::InvalidInput(format!("region {r} has zero total area")));
        }
        land_pop += p;
        land_area += a;
    }
    if !(land_area > 0.0) {
        return Err(Error::InvalidInput("no land region".into()));
    }
    let sea_density = land_pop / land_area;
    Ok(labeling
        .labels
        .iter()
        .zip(&areas)
        .map(|(r, a)| {
            if *r == SEA {
                sea_density * a
            } else {
                labeling.populations[r] * a / region_area[r]
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::primitives;

    fn hemispheres(m: &TriMesh, north: u32, south: u32) -> Vec<u32> {
        m.faces()
            .iter()
            .enumerate()
            .map(|(i, _)| if i < m.num_faces() / 2 { north } else { south })
            .collect()
    }

    #[test]
    fn land_and_sea_of_equal_area_is_uniform() {
        let m = primitives::icosphere(4);
        let labels = hemispheres(&m, 1, SEA);
        let l = RegionLabeling::new(labels, BTreeMap::from([(1, 50.0)])).unwrap();
        let pop = cartogram_population(&l, &m).unwrap();
        let areas = face_areas(&m, m.vertices());
        let d: Vec<f64> = pop.iter().zip(&areas).map(|(p, a)| p / a).collect();
        assert!(d.iter().all(|x| (x - d[0]).abs() < 1e-9 * d[0]));
    }

    #[test]
    fn proportional_densities_and_conservation() {
        let m = primitives::icosphere(4);
        let labels = hemispheres(&m, 1, 2);
        let areas = face_areas(&m, m.vertices());
        let l = RegionLabeling::new(labels.clone(), BTreeMap::from([(1, 2.0), (2, 1.0)])).unwrap();
        let pop = cartogram_population(&l, &m).unwrap();
        for r in [1u32, 2] {
            let s: f64 = pop.iter().zip(&labels).filter(|(_, l)| **l == r).map(|(p, _)| p).sum();
            assert!((s - l.populations[&r]).abs() < 1e-12);
        }
        let a1: f64 = areas.iter().zip(&labels).filter(|(_, l)| **l == 1).map(|(a, _)| a).sum();
        let a2: f64 = areas.iter().zip(&labels).filter(|(_, l)| **l == 2).map(|(a, _)| a).sum();
        let ratio = (pop[0] / areas[0]) / (pop[m.num_faces() - 1] / areas[m.num_faces() - 1]);
        assert!((ratio - 2.0 * a2 / a1).abs() < 1e-12);
    }

    #[test]
    fn tripling_one_region() {
        let m = primitives::icosphere(4);
        let labels: Vec<u32> = (0..m.num_faces()).map(|i| (i % 3) as u32).collect();
        let base = BTreeMap::from([(1, 5.0), (2, 7.0)]);
        let tripled = BTreeMap::from([(1, 15.0), (2, 7.0)]);
        let a = cartogram_population(&RegionLabeling::new(labels.clone(), base).unwrap(), &m).unwrap();
        let b = cartogram_population(&RegionLabeling::new(labels.clone(), tripled).unwrap(), &m).unwrap();
        for ((x, y), l) in a.iter().zip(&b).zip(&labels) {
            match l {
                1 => assert!((y - 3.0 * x).abs() < 1e-12),
                2 => assert_eq!(x, y),
                _ => assert!(y > x),
            }
        }
    }

    #[test]
    fn invalid_labelings() {
        let m = primitives::icosphere(2);
        let labels = vec![1; m.num_faces()];
        assert!(RegionLabeling::new(labels.clone(), BTreeMap::new()).is_err());
        assert!(RegionLabeling::new(labels.clone(), BTreeMap::from([(1, 0.0)])).is_err());
        let l = RegionLabeling::new(labels, BTreeMap::from([(1, 1.0), (4, 2.0)])).unwrap();
        assert!(cartogram_population(&l, &m).is_err());
    }
}
