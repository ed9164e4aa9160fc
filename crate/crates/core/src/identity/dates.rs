//! Conversions between Unix timestamps and MRZ `YYMMDD` dates.

use crate::Timestamp;

const SECS_PER_DAY: i64 = 86_400;

// Howard Hinnant's days_from_civil / civil_from_days.
fn days_from_civil(y: i64, m: u32, d: u32) -> i64 {
    let y = if m <= 2 { y - 1 } else { y };
    let era = if y >= 0 { y } else { y - 399 } / 400;
    let yoe = y - era * 400;
    let mp = (m as i64 + 9) % 12;
    let doy = (153 * mp + 2) / 5 + d as i64 - 1;
    let doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    era * 146_097 + doe - 719_468
}

fn civil_from_days(z: i64) -> (i64, u32, u32) {
    let z = z + 719_468;
    let era = if z >= 0 { z } else { z - 146_096 } / 146_097;
    let doe = z - era * 146_097;
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let y = yoe + era * 400;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = (doy - (153 * mp + 2) / 5 + 1) as u32;
    let m = if mp < 10 { mp + 3 } else { mp - 9 } as u32;
    (if m <= 2 { y + 1 } else { y }, m, d)
}

pub fn to_yymmdd(ts: Timestamp) -> String {
    let (y, m, d) = civil_from_days(ts.div_euclid(SECS_PER_DAY));
    format!("{:02}{:02}{:02}", y.rem_euclid(100), m, d)
}

/// Last second of the given `YYMMDD` day, read in the 2000s.
pub fn expiry_end_of_day(yymmdd: &str) -> Option<Timestamp> {
    let (y, m, d) = parse(yymmdd)?;
    Some(days_from_civil(2000 + y, m, d) * SECS_PER_DAY + SECS_PER_DAY - 1)
}

fn parse(s: &str) -> Option<(i64, u32, u32)> {
    if s.len() != 6 || !s.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let y: i64 = s[0..2].parse().ok()?;
    let m: u32 = s[2..4].parse().ok()?;
    let d: u32 = s[4..6].parse().ok()?;
    if !(1..=12).contains(&m) || !(1..=31).contains(&d) {
        return None;
    }
    Some((y, m, d))
}

pub fn is_valid_yymmdd(s: &str) -> bool {
    parse(s).is_some()
}
