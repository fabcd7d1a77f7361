//! Kepler's equation and the eccentric → true anomaly conversion.

use std::f64::consts::{PI, TAU};

use super::GeometryError;

const MAX_ITERATIONS: usize = 50;
const RESIDUAL_TOLERANCE: f64 = 1e-13;

/// Eccentric and true anomaly for one mean anomaly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnomalySolution {
    pub eccentric_anomaly: f64,
    pub true_anomaly: f64,
}

/// Solves `M = E - e sin E` for `E` with Newton's method.
///
/// Starts from `E = M` (or `E = π` for `e > 0.8`) and stops once the
/// residual is below 1e-13.
pub fn solve_eccentric_anomaly(mean_anomaly: f64, eccentricity: f64) -> Result<f64, GeometryError> {
    if !(0.0..1.0).contains(&eccentricity) {
        return Err(GeometryError::Eccentricity(eccentricity));
    }
    if eccentricity == 0.0 {
        return Ok(mean_anomaly);
    }

    let mut e_anom = if eccentricity > 0.8 { PI } else { mean_anomaly };
    for _ in 0..MAX_ITERATIONS {
        let residual = e_anom - eccentricity * e_anom.sin() - mean_anomaly;
        if residual.abs() < RESIDUAL_TOLERANCE {
            return Ok(e_anom);
        }
        let slope = 1.0 - eccentricity * e_anom.cos();
        e_anom -= residual / slope;
    }
    let residual = e_anom - eccentricity * e_anom.sin() - mean_anomaly;
    if residual.abs() < RESIDUAL_TOLERANCE {
        return Ok(e_anom);
    }
    Err(GeometryError::KeplerNonConvergence {
        mean_anomaly,
        eccentricity,
    })
}

/// True anomaly from eccentric anomaly, normalized to `[0, 2π)`.
///
/// Uses the half-angle form `tan(ν/2) = √((1+e)/(1−e))·tan(E/2)` through
/// `atan2`, so `ν` stays in the same half-plane as `E`.
pub fn true_anomaly(eccentric_anomaly: f64, eccentricity: f64) -> f64 {
    let half = eccentric_anomaly / 2.0;
    let nu = 2.0
        * ((1.0 + eccentricity).sqrt() * half.sin()).atan2((1.0 - eccentricity).sqrt() * half.cos());
    normalize_angle(nu)
}

pub fn solve_anomalies(mean_anomaly: f64, eccentricity: f64) -> Result<AnomalySolution, GeometryError> {
    let eccentric_anomaly = solve_eccentric_anomaly(mean_anomaly, eccentricity)?;
    Ok(AnomalySolution {
        eccentric_anomaly,
        true_anomaly: true_anomaly(eccentric_anomaly, eccentricity),
    })
}

/// Wraps an angle into `[0, 2π)`.
pub fn normalize_angle(angle: f64) -> f64 {
    let wrapped = angle.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if wrapped >= TAU {
        0.0
    } else {
        wrapped
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent oracle: bisection on `E - e sin E - M` over `[0, 2π]`.
    fn bisect(mean_anomaly: f64, e: f64) -> f64 {
        let (mut lo, mut hi) = (0.0_f64, TAU);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid - e * mid.sin() - mean_anomaly > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn zero_mean_anomaly_gives_zero() {
        for e in [0.0, 0.3, 0.7, 0.95] {
            assert!(solve_eccentric_anomaly(0.0, e).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn half_orbit_is_fixed_point() {
        let e_anom = solve_eccentric_anomaly(PI, 0.5).unwrap();
        assert!((e_anom - PI).abs() < 1e-12);
    }

    #[test]
    fn matches_bisection_oracle() {
        // bisection gives 1.0885977523978938
        let e_anom = solve_eccentric_anomaly(1.0, 0.1).unwrap();
        assert!((e_anom - bisect(1.0, 0.1)).abs() < 1e-12);
        assert!((e_anom - 1.088_597_752_397_893_8).abs() < 1e-12);
    }

    #[test]
    fn rejects_hyperbolic() {
        assert!(matches!(
            solve_eccentric_anomaly(1.0, 1.0),
            Err(GeometryError::Eccentricity(_))
        ));
    }

    #[test]
    fn circular_true_anomaly_is_identity() {
        for i in 0..100 {
            let e_anom = i as f64 * TAU / 100.0;
            assert!((true_anomaly(e_anom, 0.0) - e_anom).abs() < 1e-12);
        }
    }

    #[test]
    fn true_anomaly_at_apoapsis() {
        assert!((true_anomaly(PI, 0.3) - PI).abs() < 1e-12);
    }

    #[test]
    fn true_anomaly_matches_cosine_form() {
        // cos form and half-angle form agree at 1.179469262699769
        let e = 0.1;
        let e_anom = 1.088_597_752_397_893_8;
        let nu = true_anomaly(e_anom, e);
        let cos_form = ((e_anom.cos() - e) / (1.0 - e * e_anom.cos())).acos();
        assert!((nu - cos_form).abs() < 1e-12);
        assert!((nu - 1.179_469_262_699_769).abs() < 1e-9);
    }

    #[test]
    fn true_anomaly_monotone_in_eccentric_anomaly() {
        for e in [0.0, 0.2, 0.5, 0.9] {
            let mut prev = -1.0;
            for i in 0..1000 {
                let nu = true_anomaly(i as f64 * TAU / 1000.0, e);
                assert!(nu > prev, "e={e} i={i}");
                prev = nu;
            }
        }
    }

    #[test]
    fn normalize_handles_negative_and_large() {
        assert!((normalize_angle(-PI / 2.0) - 1.5 * PI).abs() < 1e-12);
        assert!((normalize_angle(5.0 * PI) - PI).abs() < 1e-12);
        assert_eq!(normalize_angle(-1e-300), 0.0);
    }
}
