//! Orbital geometry: element sets, anomaly solving, orbit grouping and
//! propagation to Earth-fixed positions.

mod grouping;
mod kepler;
mod propagator;
mod tle;
mod walker;

use std::f64::consts::TAU;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grouping::{group_orbits, ConstellationGeometry, Orbit, INCLINATION_TOLERANCE_DEG, RAAN_TOLERANCE_DEG};
pub use kepler::{normalize_angle, solve_anomalies, solve_eccentric_anomaly, true_anomaly, AnomalySolution};
pub use propagator::{
    distance, ecef_to_geodetic, eci_position, geodetic_to_ecef, earth_rotation_angle, propagate, propagate_all,
    Keplerian, Propagator, SatelliteState, Vec3,
};
pub use tle::{checksum as tle_checksum, format_tle, parse_tle};
pub use walker::generate_walker;

/// Earth gravitational parameter, km³/s².
pub const MU_EARTH: f64 = 398_600.441_8;
/// WGS-84 equatorial radius, km.
pub const EARTH_RADIUS_KM: f64 = 6_378.137;
/// WGS-84 flattening.
pub const WGS84_FLATTENING: f64 = 1.0 / 298.257_223_563;
/// Earth sidereal rotation rate, rad/s.
pub const EARTH_ROTATION_RAD_S: f64 = 7.292_115_9e-5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("TLE checksum mismatch on line {line}: expected {expected}, found {found}")]
    TleChecksum { line: usize, expected: u8, found: u8 },
    #[error("malformed TLE field `{field}` on line {line}: {detail}")]
    TleMalformed {
        line: usize,
        field: &'static str,
        detail: String,
    },
    #[error("eccentricity {0} outside [0, 1)")]
    Eccentricity(f64),
    #[error("Kepler solver did not converge for M={mean_anomaly}, e={eccentricity}")]
    KeplerNonConvergence { mean_anomaly: f64, eccentricity: f64 },
    #[error("altitude {0} km outside the supported 300-2000 km range")]
    Altitude(f64),
    #[error("invalid constellation shape: {0}")]
    Shape(String),
    #[error("invalid orbital elements: {0}")]
    Elements(String),
}

/// Classical orbital elements of one satellite, angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrbitalElements {
    pub satellite_id: u32,
    pub name: String,
    pub epoch: DateTime<Utc>,
    pub inclination: f64,
    pub raan: f64,
    pub eccentricity: f64,
    pub arg_perigee: f64,
    pub mean_anomaly: f64,
    /// Revolutions per day.
    pub mean_motion: f64,
}

impl OrbitalElements {
    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(0.0..1.0).contains(&self.eccentricity) {
            return Err(GeometryError::Eccentricity(self.eccentricity));
        }
        if !(self.mean_motion > 0.0) {
            return Err(GeometryError::Elements(format!(
                "mean motion {} must be positive",
                self.mean_motion
            )));
        }
        for (name, v) in [
            ("raan", self.raan),
            ("arg_perigee", self.arg_perigee),
            ("mean_anomaly", self.mean_anomaly),
        ] {
            if !(0.0..TAU).contains(&v) {
                return Err(GeometryError::Elements(format!("{name} {v} not in [0, 2π)")));
            }
        }
        if !(0.0..=std::f64::consts::PI).contains(&self.inclination) {
            return Err(GeometryError::Elements(format!(
                "inclination {} not in [0, π]",
                self.inclination
            )));
        }
        Ok(())
    }

    /// Mean motion in rad/s.
    pub fn mean_motion_rad_s(&self) -> f64 {
        self.mean_motion * TAU / 86_400.0
    }

    /// Semi-major axis from mean motion via Kepler's third law, km.
    pub fn semi_major_axis_km(&self) -> f64 {
        let n = self.mean_motion_rad_s();
        (MU_EARTH / (n * n)).cbrt()
    }

    pub fn period_s(&self) -> f64 {
        86_400.0 / self.mean_motion
    }

    #[cfg(test)]
    pub(crate) fn circular_for_test() -> Self {
        use chrono::TimeZone;
        Self {
            satellite_id: 42,
            name: "TEST-42".into(),
            epoch: Utc.with_ymd_and_hms(2024, 3, 1, 12, 0, 0).unwrap(),
            inclination: 53f64.to_radians(),
            raan: 10f64.to_radians(),
            eccentricity: 0.0,
            arg_perigee: 0.0,
            mean_anomaly: 1.0,
            mean_motion: walker::mean_motion_for_altitude(550.0),
        }
    }
}
