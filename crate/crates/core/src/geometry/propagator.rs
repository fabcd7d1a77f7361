use std::f64::consts::TAU;

use chrono::{DateTime, TimeZone, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{
    normalize_angle, solve_anomalies, OrbitalElements, EARTH_RADIUS_KM, EARTH_ROTATION_RAD_S,
    WGS84_FLATTENING,
};

pub type Vec3 = [f64; 3];

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: Vec3) -> f64 {
    dot(a, a).sqrt()
}

/// Euclidean distance between two points.
pub fn distance(a: Vec3, b: Vec3) -> f64 {
    norm(sub(a, b))
}

/// Position of one satellite at one instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SatelliteState {
    pub time: DateTime<Utc>,
    pub ecef_km: Vec3,
    pub lat_deg: f64,
    pub lon_deg: f64,
    /// Radial altitude above the equatorial radius, km.
    pub altitude_km: f64,
}

/// Anything that can place a satellite at a time.
pub trait Propagator: Send + Sync {
    fn propagate(&self, elements: &OrbitalElements, t: DateTime<Utc>) -> SatelliteState;
}

/// Two-body Keplerian propagation with Earth rotation.
#[derive(Debug, Clone, Copy, Default)]
pub struct Keplerian;

impl Propagator for Keplerian {
    fn propagate(&self, elements: &OrbitalElements, t: DateTime<Utc>) -> SatelliteState {
        propagate(elements, t)
    }
}

fn seconds_between(from: DateTime<Utc>, to: DateTime<Utc>) -> f64 {
    (to - from).num_microseconds().unwrap_or(i64::MAX) as f64 * 1e-6
}

/// Earth rotation angle (rad) at `t`, anchored at J2000.
pub fn earth_rotation_angle(t: DateTime<Utc>) -> f64 {
    let j2000 = Utc.with_ymd_and_hms(2000, 1, 1, 12, 0, 0).unwrap();
    let seconds = seconds_between(j2000, t);
    normalize_angle(TAU * 0.779_057_273_264 + EARTH_ROTATION_RAD_S * seconds)
}

/// Inertial position (km) from two-body motion.
pub fn eci_position(elements: &OrbitalElements, t: DateTime<Utc>) -> Vec3 {
    let dt = seconds_between(elements.epoch, t);
    let m = normalize_angle(elements.mean_anomaly + elements.mean_motion_rad_s() * dt);
    let e = elements.eccentricity;
    let anomaly = solve_anomalies(m, e).expect("validated elements always converge");
    let a = elements.semi_major_axis_km();
    let r = a * (1.0 - e * anomaly.eccentric_anomaly.cos());
    let (p, q) = (r * anomaly.true_anomaly.cos(), r * anomaly.true_anomaly.sin());

    let (so, co) = elements.raan.sin_cos();
    let (sw, cw) = elements.arg_perigee.sin_cos();
    let (si, ci) = elements.inclination.sin_cos();
    [
        p * (co * cw - so * sw * ci) - q * (co * sw + so * cw * ci),
        p * (so * cw + co * sw * ci) + q * (cw * co * ci - so * sw),
        p * (sw * si) + q * (cw * si),
    ]
}

/// WGS-84 geodetic coordinates to Earth-fixed position, km.
pub fn geodetic_to_ecef(lat_deg: f64, lon_deg: f64, alt_km: f64) -> Vec3 {
    let e2 = WGS84_FLATTENING * (2.0 - WGS84_FLATTENING);
    let (slat, clat) = lat_deg.to_radians().sin_cos();
    let (slon, clon) = lon_deg.to_radians().sin_cos();
    let n = EARTH_RADIUS_KM / (1.0 - e2 * slat * slat).sqrt();
    [
        (n + alt_km) * clat * clon,
        (n + alt_km) * clat * slon,
        (n * (1.0 - e2) + alt_km) * slat,
    ]
}

/// Earth-fixed position to geodetic `(lat_deg, lon_deg, height_km)`.
pub fn ecef_to_geodetic(r: Vec3) -> (f64, f64, f64) {
    let e2 = WGS84_FLATTENING * (2.0 - WGS84_FLATTENING);
    let lon = r[1].atan2(r[0]);
    let p = r[0].hypot(r[1]);
    let mut lat = r[2].atan2(p * (1.0 - e2));
    let mut height = 0.0;
    for _ in 0..6 {
        let s = lat.sin();
        let n = EARTH_RADIUS_KM / (1.0 - e2 * s * s).sqrt();
        height = if lat.cos().abs() > 1e-9 {
            p / lat.cos() - n
        } else {
            r[2].abs() - n * (1.0 - e2)
        };
        lat = r[2].atan2(p * (1.0 - e2 * n / (n + height)));
    }
    (lat.to_degrees(), lon.to_degrees(), height)
}

/// Keplerian propagation of one satellite to `t`.
pub fn propagate(elements: &OrbitalElements, t: DateTime<Utc>) -> SatelliteState {
    let eci = eci_position(elements, t);
    let (s, c) = earth_rotation_angle(t).sin_cos();
    let ecef = [c * eci[0] + s * eci[1], -s * eci[0] + c * eci[1], eci[2]];
    let (lat_deg, lon_deg, _) = ecef_to_geodetic(ecef);
    SatelliteState {
        time: t,
        ecef_km: ecef,
        lat_deg,
        lon_deg,
        altitude_km: norm(ecef) - EARTH_RADIUS_KM,
    }
}

/// Propagates every satellite in parallel; output order matches input.
pub fn propagate_all<P: Propagator + ?Sized>(
    propagator: &P,
    elements: &[OrbitalElements],
    t: DateTime<Utc>,
) -> Vec<SatelliteState> {
    elements.par_iter().map(|e| propagator.propagate(e, t)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{generate_walker, solve_eccentric_anomaly, true_anomaly};
    use chrono::Duration;

    #[test]
    fn circular_altitude_is_constant() {
        let el = OrbitalElements::circular_for_test();
        for minutes in (0..=24 * 60).step_by(17) {
            let st = propagate(&el, el.epoch + Duration::minutes(minutes));
            assert!((st.altitude_km - 550.0).abs() < 1.0, "{}", st.altitude_km);
        }
    }

    #[test]
    fn zero_elapsed_matches_anomaly_solution() {
        let el = OrbitalElements {
            eccentricity: 0.05,
            arg_perigee: 0.0,
            raan: 0.0,
            inclination: 0.0,
            ..OrbitalElements::circular_for_test()
        };
        let r = eci_position(&el, el.epoch);
        let nu = true_anomaly(solve_eccentric_anomaly(el.mean_anomaly, el.eccentricity).unwrap(), 0.05);
        // equatorial, zero RAAN and perigee: position angle is ν
        assert!((normalize_angle(r[1].atan2(r[0])) - nu).abs() < 1e-12);
    }

    #[test]
    fn one_period_returns_to_start() {
        let el = OrbitalElements {
            eccentricity: 0.01,
            arg_perigee: 1.3,
            ..OrbitalElements::circular_for_test()
        };
        let period_us = (el.period_s() * 1e6).round() as i64;
        let a = eci_position(&el, el.epoch);
        let b = eci_position(&el, el.epoch + Duration::microseconds(period_us));
        assert!(distance(a, b) < 1.0);
    }

    #[test]
    fn geodetic_round_trip() {
        for (lat, lon, h) in [(51.5, -0.12, 0.05), (-33.9, 151.2, 0.0), (0.0, 0.0, 550.0), (53.0, 179.0, 10.0)] {
            let r = geodetic_to_ecef(lat, lon, h);
            let (la, lo, hh) = ecef_to_geodetic(r);
            assert!((la - lat).abs() < 1e-9 && (lo - lon).abs() < 1e-9 && (hh - h).abs() < 1e-6);
        }
    }

    #[test]
    fn latitude_bounded_by_inclination() {
        let el = OrbitalElements::circular_for_test();
        for minutes in 0..200 {
            let st = propagate(&el, el.epoch + Duration::minutes(minutes));
            assert!(st.lat_deg.abs() < 53.2);
        }
    }

    #[test]
    fn parallel_matches_serial() {
        let els = generate_walker(6, 5, 600.0, 60.0, 1, chrono::Utc::now()).unwrap();
        let t = els[0].epoch + Duration::seconds(1234);
        let par = propagate_all(&Keplerian, &els, t);
        let ser: Vec<_> = els.iter().map(|e| propagate(e, t)).collect();
        assert_eq!(par, ser);
    }
}
