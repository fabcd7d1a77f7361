use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::{normalize_angle, solve_anomalies, GeometryError, OrbitalElements};

pub const INCLINATION_TOLERANCE_DEG: f64 = 0.5;
pub const RAAN_TOLERANCE_DEG: f64 = 1.0;

/// One orbital plane: its reference inclination/RAAN and the satellites in
/// it ordered by true anomaly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Orbit {
    pub inclination: f64,
    pub raan: f64,
    pub satellites: Vec<u32>,
}

/// Orbits ordered by RAAN, each a list of satellite ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstellationGeometry {
    pub orbits: Vec<Orbit>,
}

impl ConstellationGeometry {
    pub fn num_satellites(&self) -> usize {
        self.orbits.iter().map(|o| o.satellites.len()).sum()
    }

    /// Satellite ids flattened in orbit-major order.
    pub fn satellite_order(&self) -> Vec<u32> {
        self.orbits
            .iter()
            .flat_map(|o| o.satellites.iter().copied())
            .collect()
    }

    /// The "list of lists" view.
    pub fn as_lists(&self) -> Vec<Vec<u32>> {
        self.orbits.iter().map(|o| o.satellites.clone()).collect()
    }
}

fn circular_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Buckets satellites into orbits by (inclination, RAAN) and sorts each
/// bucket by true anomaly at the latest epoch among the inputs.
pub fn group_orbits(elements: &[OrbitalElements]) -> Result<ConstellationGeometry, GeometryError> {
    let Some(reference) = elements.iter().map(|e| e.epoch).max() else {
        return Ok(ConstellationGeometry { orbits: Vec::new() });
    };

    let mut order: Vec<&OrbitalElements> = elements.iter().collect();
    order.sort_by(|a, b| {
        a.raan
            .total_cmp(&b.raan)
            .then(a.inclination.total_cmp(&b.inclination))
            .then(a.satellite_id.cmp(&b.satellite_id))
    });

    let inc_tol = INCLINATION_TOLERANCE_DEG.to_radians();
    let raan_tol = RAAN_TOLERANCE_DEG.to_radians();
    let mut buckets: Vec<(f64, f64, Vec<(f64, u32)>)> = Vec::new();

    for el in order {
        let dt = (reference - el.epoch).num_microseconds().unwrap_or(0) as f64 * 1e-6;
        let m = normalize_angle(el.mean_anomaly + el.mean_motion_rad_s() * dt);
        let nu = solve_anomalies(m, el.eccentricity)?.true_anomaly;

        let slot = buckets.iter_mut().find(|(inc, raan, _)| {
            (el.inclination - *inc).abs() <= inc_tol && circular_diff(el.raan, *raan) <= raan_tol
        });
        match slot {
            Some((_, _, members)) => members.push((nu, el.satellite_id)),
            None => buckets.push((el.inclination, el.raan, vec![(nu, el.satellite_id)])),
        }
    }

    buckets.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.total_cmp(&b.0)));
    let orbits = buckets
        .into_iter()
        .map(|(inclination, raan, mut members)| {
            members.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            Orbit {
                inclination,
                raan,
                satellites: members.into_iter().map(|(_, id)| id).collect(),
            }
        })
        .collect();
    Ok(ConstellationGeometry { orbits })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::generate_walker;
    use chrono::{TimeZone, Utc};
    use std::collections::BTreeSet;

    fn epoch() -> chrono::DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
    }

    #[test]
    fn small_walker_groups_by_plane() {
        let els = generate_walker(2, 3, 550.0, 53.0, 0, epoch()).unwrap();
        let geo = group_orbits(&els).unwrap();
        assert_eq!(geo.as_lists(), vec![vec![1, 2, 3], vec![4, 5, 6]]);
    }

    #[test]
    fn sorted_by_true_anomaly_not_input_order() {
        let mut els = generate_walker(1, 5, 550.0, 53.0, 0, epoch()).unwrap();
        els.reverse();
        els.swap(1, 3);
        let geo = group_orbits(&els).unwrap();
        assert_eq!(geo.as_lists(), vec![vec![1, 2, 3, 4, 5]]);
    }

    #[test]
    fn shell_one_structure() {
        let els = generate_walker(72, 22, 550.0, 53.0, 1, epoch()).unwrap();
        let geo = group_orbits(&els).unwrap();
        assert_eq!(geo.orbits.len(), 72);
        assert!(geo.orbits.iter().all(|o| o.satellites.len() == 22));
    }

    #[test]
    fn nearby_raan_shares_bucket() {
        let base = OrbitalElements::circular_for_test();
        let a = OrbitalElements {
            satellite_id: 1,
            raan: 10.0f64.to_radians(),
            ..base.clone()
        };
        let b = OrbitalElements {
            satellite_id: 2,
            raan: 10.3f64.to_radians(),
            mean_anomaly: 2.0,
            ..base.clone()
        };
        let c = OrbitalElements {
            satellite_id: 3,
            raan: 12.0f64.to_radians(),
            ..base
        };
        let geo = group_orbits(&[a, b, c]).unwrap();
        assert_eq!(geo.as_lists(), vec![vec![1, 2], vec![3]]);
    }

    #[test]
    fn raan_wraps_around_zero() {
        let base = OrbitalElements::circular_for_test();
        let a = OrbitalElements {
            satellite_id: 1,
            raan: 359.6f64.to_radians(),
            ..base.clone()
        };
        let b = OrbitalElements {
            satellite_id: 2,
            raan: 0.2f64.to_radians(),
            mean_anomaly: 2.0,
            ..base
        };
        let geo = group_orbits(&[a, b]).unwrap();
        assert_eq!(geo.orbits.len(), 1);
    }

    #[test]
    fn grouping_is_a_partition() {
        let els = generate_walker(7, 5, 700.0, 70.0, 3, epoch()).unwrap();
        let geo = group_orbits(&els).unwrap();
        let flat = geo.satellite_order();
        let set: BTreeSet<u32> = flat.iter().copied().collect();
        assert_eq!(flat.len(), set.len());
        assert_eq!(set, els.iter().map(|e| e.satellite_id).collect());
    }
}
