use std::f64::consts::TAU;

use chrono::{DateTime, Utc};

use super::{normalize_angle, GeometryError, OrbitalElements, EARTH_RADIUS_KM, MU_EARTH};

/// Mean motion (rev/day) of a circular orbit at the given altitude.
pub fn mean_motion_for_altitude(altitude_km: f64) -> f64 {
    let a = EARTH_RADIUS_KM + altitude_km;
    let period_s = TAU * (a * a * a / MU_EARTH).sqrt();
    86_400.0 / period_s
}

/// Generates circular Walker-delta elements.
///
/// RAAN is spread evenly over 2π, mean anomaly evenly within each orbit,
/// and each successive orbit is shifted by `phasing·2π/(orbits·sats_per_orbit)`.
/// Satellite ids run from 1 in orbit-major order.
pub fn generate_walker(
    orbits: u32,
    sats_per_orbit: u32,
    altitude_km: f64,
    inclination_deg: f64,
    phasing: u32,
    epoch: DateTime<Utc>,
) -> Result<Vec<OrbitalElements>, GeometryError> {
    if orbits == 0 || sats_per_orbit == 0 {
        return Err(GeometryError::Shape(format!(
            "need at least one orbit and one satellite, got {orbits}x{sats_per_orbit}"
        )));
    }
    if !(300.0..=2000.0).contains(&altitude_km) {
        return Err(GeometryError::Altitude(altitude_km));
    }
    if !(0.0..=180.0).contains(&inclination_deg) {
        return Err(GeometryError::Elements(format!(
            "inclination {inclination_deg} deg not in [0, 180]"
        )));
    }

    let mean_motion = mean_motion_for_altitude(altitude_km);
    let total = f64::from(orbits) * f64::from(sats_per_orbit);
    let phase_step = f64::from(phasing) * TAU / total;

    let mut out = Vec::with_capacity(total as usize);
    for p in 0..orbits {
        let raan = TAU * f64::from(p) / f64::from(orbits);
        for s in 0..sats_per_orbit {
            let m = TAU * f64::from(s) / f64::from(sats_per_orbit) + f64::from(p) * phase_step;
            let id = p * sats_per_orbit + s + 1;
            out.push(OrbitalElements {
                satellite_id: id,
                name: format!("WALKER-{p:03}-{s:03}"),
                epoch,
                inclination: inclination_deg.to_radians(),
                raan: normalize_angle(raan),
                eccentricity: 0.0,
                arg_perigee: 0.0,
                mean_anomaly: normalize_angle(m),
                mean_motion,
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;
    use std::f64::consts::PI;

    fn epoch() -> DateTime<Utc> {
        Utc.with_ymd_and_hms(2024, 1, 1, 0, 0, 0).unwrap()
    }

    #[test]
    fn single_orbit_even_spacing() {
        let els = generate_walker(1, 4, 550.0, 53.0, 0, epoch()).unwrap();
        let m: Vec<f64> = els.iter().map(|e| e.mean_anomaly).collect();
        let expected = [0.0, PI / 2.0, PI, 1.5 * PI];
        for (a, b) in m.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(els.iter().all(|e| e.eccentricity == 0.0));
    }

    #[test]
    fn shell_one_size() {
        assert_eq!(generate_walker(72, 22, 550.0, 53.0, 0, epoch()).unwrap().len(), 1584);
    }

    #[test]
    fn mean_motion_at_550_km() {
        // T = 2π√(a³/μ), a = 6928.137 km → 15.0549 rev/day
        let n = mean_motion_for_altitude(550.0);
        assert!((n - 15.054_906_459).abs() < 1e-6);
        assert!((n - 15.05).abs() < 0.01);
    }

    #[test]
    fn altitude_out_of_range() {
        assert!(matches!(
            generate_walker(2, 2, 250.0, 53.0, 0, epoch()),
            Err(GeometryError::Altitude(_))
        ));
        assert!(generate_walker(2, 2, 2500.0, 53.0, 0, epoch()).is_err());
    }

    #[test]
    fn phasing_offsets_successive_orbits() {
        let els = generate_walker(4, 3, 550.0, 53.0, 1, epoch()).unwrap();
        let step = TAU / 12.0;
        assert!((els[3].mean_anomaly - step).abs() < 1e-12);
        assert!((els[6].mean_anomaly - 2.0 * step).abs() < 1e-12);
        assert!((els[3].raan - PI / 2.0).abs() < 1e-12);
    }
}
