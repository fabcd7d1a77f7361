//! Single-layer power-law rain attenuation.

use super::WeatherSample;

/// Fixed rain height above the ground segment, km.
pub const RAIN_HEIGHT_KM: f64 = 4.0;
/// Cap on the slant path through rain, km.
pub const MAX_RAIN_PATH_KM: f64 = 20.0;

// frequency GHz, kH, αH, kV, αV (ITU-R P.838-3)
const COEFFICIENTS: [(f64, f64, f64, f64, f64); 8] = [
    (10.0, 0.012_17, 1.2571, 0.011_29, 1.2156),
    (12.0, 0.023_86, 1.1825, 0.024_55, 1.1216),
    (15.0, 0.044_81, 1.1233, 0.050_08, 1.0440),
    (20.0, 0.091_64, 1.0568, 0.096_11, 0.9847),
    (25.0, 0.157_1, 0.9991, 0.153_3, 0.9491),
    (30.0, 0.240_3, 0.9485, 0.229_1, 0.9129),
    (35.0, 0.337_4, 0.9047, 0.322_4, 0.8761),
    (40.0, 0.443_1, 0.8673, 0.427_4, 0.8421),
];

/// Circular-polarization `(k, α)` at one table row.
fn circular(row: (f64, f64, f64, f64, f64)) -> (f64, f64) {
    let (_, kh, ah, kv, av) = row;
    let k = 0.5 * (kh + kv);
    (k, (kh * ah + kv * av) / (2.0 * k))
}

/// `(k, α)` at `frequency_hz`: log k and α interpolated linearly in log f,
/// clamped to the table's 10–40 GHz span.
pub fn rain_coefficients(frequency_hz: f64) -> (f64, f64) {
    let f_ghz = frequency_hz / 1e9;
    let first = COEFFICIENTS[0];
    let last = COEFFICIENTS[COEFFICIENTS.len() - 1];
    if f_ghz <= first.0 {
        return circular(first);
    }
    if f_ghz >= last.0 {
        return circular(last);
    }
    let hi = COEFFICIENTS.iter().position(|r| r.0 >= f_ghz).unwrap_or(COEFFICIENTS.len() - 1);
    let (lo_row, hi_row) = (COEFFICIENTS[hi - 1], COEFFICIENTS[hi]);
    let (k0, a0) = circular(lo_row);
    let (k1, a1) = circular(hi_row);
    let w = (f_ghz.ln() - lo_row.0.ln()) / (hi_row.0.ln() - lo_row.0.ln());
    let k = (k0.ln() + w * (k1.ln() - k0.ln())).exp();
    (k, a0 + w * (a1 - a0))
}

/// Specific attenuation γ = k·R^α, dB/km.
pub fn specific_attenuation(rain_rate_mm_h: f64, frequency_hz: f64) -> f64 {
    if rain_rate_mm_h <= 0.0 {
        return 0.0;
    }
    let (k, alpha) = rain_coefficients(frequency_hz);
    k * rain_rate_mm_h.powf(alpha)
}

/// Slant path through the rain layer, km.
pub fn rain_path_km(elevation_deg: f64) -> f64 {
    let s = elevation_deg.to_radians().sin();
    if s <= 0.0 {
        return MAX_RAIN_PATH_KM;
    }
    (RAIN_HEIGHT_KM / s).min(MAX_RAIN_PATH_KM)
}

/// Total rain attenuation along the slant path, dB.
pub fn rain_attenuation(weather: &WeatherSample, frequency_hz: f64, elevation_deg: f64) -> f64 {
    if weather.rain_rate <= 0.0 {
        return 0.0;
    }
    specific_attenuation(weather.rain_rate, frequency_hz) * rain_path_km(elevation_deg)
}
