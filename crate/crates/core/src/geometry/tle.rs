//! Two-line element sets: parsing with checksum verification, and formatting.

use chrono::{DateTime, Datelike, Duration, TimeZone, Utc};

use super::{GeometryError, OrbitalElements};

const LINE_LEN: usize = 69;

/// Modulo-10 checksum over the first 68 columns: digits count at face
/// value, `-` counts as one, everything else as zero.
pub fn checksum(line: &str) -> u8 {
    let sum: u32 = line
        .bytes()
        .take(LINE_LEN - 1)
        .map(|b| match b {
            b'0'..=b'9' => u32::from(b - b'0'),
            b'-' => 1,
            _ => 0,
        })
        .sum();
    (sum % 10) as u8
}

/// Parses a document of 2-line or 3-line (name + 2 lines) records.
pub fn parse_tle(text: &str) -> Result<Vec<OrbitalElements>, GeometryError> {
    let lines: Vec<(usize, &str)> = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end()))
        .filter(|(_, l)| !l.is_empty())
        .collect();

    let mut out = Vec::new();
    let mut i = 0;
    while i < lines.len() {
        let (line_no, line) = lines[i];
        let (name, first) = if line.starts_with("1 ") {
            (None, i)
        } else {
            let name = line.strip_prefix("0 ").unwrap_or(line).trim().to_string();
            (Some(name), i + 1)
        };
        let (Some(&(n1, l1)), Some(&(n2, l2))) = (lines.get(first), lines.get(first + 1)) else {
            return Err(GeometryError::TleMalformed {
                line: line_no,
                field: "record",
                detail: "incomplete record".into(),
            });
        };
        out.push(parse_record(name, (n1, l1), (n2, l2))?);
        i = first + 2;
    }
    Ok(out)
}

fn parse_record(
    name: Option<String>,
    (n1, l1): (usize, &str),
    (n2, l2): (usize, &str),
) -> Result<OrbitalElements, GeometryError> {
    validate_line(l1, n1, '1')?;
    validate_line(l2, n2, '2')?;

    let satellite_id: u32 = field(l1, n1, 2..7, "catalog number")?;
    let id_line2: u32 = field(l2, n2, 2..7, "catalog number")?;
    if satellite_id != id_line2 {
        return Err(GeometryError::TleMalformed {
            line: n2,
            field: "catalog number",
            detail: format!("line 1 has {satellite_id}, line 2 has {id_line2}"),
        });
    }

    let year: i32 = field(l1, n1, 18..20, "epoch year")?;
    let day: f64 = field(l1, n1, 20..32, "epoch day")?;
    let epoch = epoch_from_tle(year, day).ok_or_else(|| GeometryError::TleMalformed {
        line: n1,
        field: "epoch day",
        detail: format!("{day}"),
    })?;

    let inclination: f64 = field(l2, n2, 8..16, "inclination")?;
    let raan: f64 = field(l2, n2, 17..25, "raan")?;
    let ecc_digits = &l2[26..33];
    if !ecc_digits.trim().bytes().all(|b| b.is_ascii_digit()) || ecc_digits.trim().is_empty() {
        return Err(GeometryError::TleMalformed {
            line: n2,
            field: "eccentricity",
            detail: ecc_digits.to_string(),
        });
    }
    let eccentricity: f64 = format!("0.{}", ecc_digits.trim()).parse().map_err(|_| {
        GeometryError::TleMalformed {
            line: n2,
            field: "eccentricity",
            detail: ecc_digits.to_string(),
        }
    })?;
    let arg_perigee: f64 = field(l2, n2, 34..42, "argument of perigee")?;
    let mean_anomaly: f64 = field(l2, n2, 43..51, "mean anomaly")?;
    let mean_motion: f64 = field(l2, n2, 52..63, "mean motion")?;

    let elements = OrbitalElements {
        satellite_id,
        name: name.unwrap_or_else(|| satellite_id.to_string()),
        epoch,
        inclination: inclination.to_radians(),
        raan: super::normalize_angle(raan.to_radians()),
        eccentricity,
        arg_perigee: super::normalize_angle(arg_perigee.to_radians()),
        mean_anomaly: super::normalize_angle(mean_anomaly.to_radians()),
        mean_motion,
    };
    elements.validate().map_err(|e| GeometryError::TleMalformed {
        line: n2,
        field: "elements",
        detail: e.to_string(),
    })?;
    Ok(elements)
}

fn validate_line(line: &str, line_no: usize, expected: char) -> Result<(), GeometryError> {
    if !line.is_ascii() || line.len() != LINE_LEN {
        return Err(GeometryError::TleMalformed {
            line: line_no,
            field: "line length",
            detail: format!("expected {LINE_LEN} ascii characters, got {}", line.len()),
        });
    }
    if !line.starts_with(expected) {
        return Err(GeometryError::TleMalformed {
            line: line_no,
            field: "line number",
            detail: format!("expected '{expected}'"),
        });
    }
    let found = line.as_bytes()[LINE_LEN - 1];
    if !found.is_ascii_digit() {
        return Err(GeometryError::TleMalformed {
            line: line_no,
            field: "checksum",
            detail: format!("'{}' is not a digit", found as char),
        });
    }
    let expected_sum = checksum(line);
    let found = found - b'0';
    if found != expected_sum {
        return Err(GeometryError::TleChecksum {
            line: line_no,
            expected: expected_sum,
            found,
        });
    }
    Ok(())
}

fn field<T: std::str::FromStr>(
    line: &str,
    line_no: usize,
    cols: std::ops::Range<usize>,
    name: &'static str,
) -> Result<T, GeometryError> {
    let raw = line[cols].trim();
    raw.parse().map_err(|_| GeometryError::TleMalformed {
        line: line_no,
        field: name,
        detail: raw.to_string(),
    })
}

fn epoch_from_tle(two_digit_year: i32, day_of_year: f64) -> Option<DateTime<Utc>> {
    if !(1.0..367.0).contains(&day_of_year) {
        return None;
    }
    let year = if two_digit_year < 57 {
        2000 + two_digit_year
    } else {
        1900 + two_digit_year
    };
    let start = Utc.with_ymd_and_hms(year, 1, 1, 0, 0, 0).single()?;
    let micros = ((day_of_year - 1.0) * 86_400e6).round() as i64;
    Some(start + Duration::microseconds(micros))
}

fn day_of_year(epoch: DateTime<Utc>) -> f64 {
    let start = Utc
        .with_ymd_and_hms(epoch.year(), 1, 1, 0, 0, 0)
        .single()
        .expect("January 1st exists");
    let micros = (epoch - start).num_microseconds().unwrap_or(0);
    1.0 + micros as f64 / 86_400e6
}

fn degrees_4(rad: f64) -> f64 {
    let deg = (rad.to_degrees() * 1e4).round() / 1e4;
    if deg >= 360.0 {
        deg - 360.0
    } else {
        deg
    }
}

fn with_checksum(mut body: String) -> String {
    let sum = checksum(&body);
    body.push(char::from(b'0' + sum));
    body
}

/// Formats elements as a 3-line record (name line plus two element lines,
/// each terminated by `\n`). Angles are written to 1e-4 degrees, which is
/// the precision of the format.
pub fn format_tle(elements: &OrbitalElements) -> String {
    let epoch = elements.epoch;
    let line1 = format!(
        "1 {:05}U {:<8} {:02}{:012.8}  .00000000  00000-0  00000-0 0 {:>4}",
        elements.satellite_id % 100_000,
        format!("{:02}001A", epoch.year() % 100),
        epoch.year() % 100,
        day_of_year(epoch),
        999,
    );
    let ecc = (elements.eccentricity * 1e7).round() as u64;
    let line2 = format!(
        "2 {:05} {:8.4} {:8.4} {:07} {:8.4} {:8.4} {:11.8}{:>5}",
        elements.satellite_id % 100_000,
        degrees_4(elements.inclination),
        degrees_4(elements.raan),
        ecc.min(9_999_999),
        degrees_4(elements.arg_perigee),
        degrees_4(elements.mean_anomaly),
        elements.mean_motion,
        0,
    );
    format!(
        "{}\n{}\n{}\n",
        elements.name,
        with_checksum(line1),
        with_checksum(line2)
    )
}
