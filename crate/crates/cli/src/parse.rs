//! Angle, grid and count parsing for command-line flags.

use std::f64::consts::PI;

/// Parses `0.3`, `pi`, `-pi/2`, `3pi/4`, `3*pi/4`, `45deg`.
pub fn angle(text: &str) -> Result<f64, String> {
    let s: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let s = s.to_ascii_lowercase();
    if s.is_empty() {
        return Err("empty angle".into());
    }
    if let Some(deg) = s.strip_suffix("deg") {
        return number(deg).map(|d| d.to_radians());
    }
    if !s.contains("pi") {
        return number(&s);
    }
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n, number(d)?),
        None => (s.as_str(), 1.0),
    };
    if den == 0.0 {
        return Err(format!("{text:?} divides by zero"));
    }
    let coeff = num
        .strip_suffix("pi")
        .ok_or_else(|| format!("cannot parse angle {text:?}"))?;
    let coeff = coeff.strip_suffix('*').unwrap_or(coeff);
    let k = match coeff {
        "" | "+" => 1.0,
        "-" => -1.0,
        c => number(c)?,
    };
    Ok(k * PI / den)
}

fn number(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("cannot parse number {s:?}"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{s:?} is not finite"))
    }
}

/// `start:stop:steps` (inclusive, `steps + 1` points), a comma list, or one angle.
pub fn angle_grid(text: &str) -> Result<Vec<f64>, String> {
    let parts: Vec<&str> = text.split(':').collect();
    match parts.as_slice() {
        [start, stop, steps] => {
            let (a, b) = (angle(start)?, angle(stop)?);
            let k: usize = steps
                .trim()
                .parse()
                .map_err(|_| format!("grid step count {steps:?} is not a whole number"))?;
            if k == 0 {
                return Ok(vec![a]);
            }
            // the last point is pinned to `stop` so endpoints are exact
            Ok((0..=k)
                .map(|i| if i == k { b } else { a + (b - a) * i as f64 / k as f64 })
                .collect())
        }
        [single] => single.split(',').map(angle).collect(),
        _ => Err(format!("cannot parse grid {text:?}; expected start:stop:steps")),
    }
}

/// `1..50` (inclusive), `1..=50`, a comma list, or one value.
pub fn int_range(text: &str) -> Result<Vec<u64>, String> {
    let int = |s: &str| -> Result<u64, String> {
        s.trim().parse().map_err(|_| format!("cannot parse integer {s:?}"))
    };
    if let Some((a, b)) = text.split_once("..") {
        let b = b.strip_prefix('=').unwrap_or(b);
        let (a, b) = (int(a)?, int(b)?);
        if a > b {
            return Err(format!("empty range {text:?}"));
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(int).collect()
}

/// Counts written as `1000000`, `1e6` or `1_000_000`.
pub fn count(text: &str) -> Result<u64, String> {
    let s = text.replace('_', "");
    if let Ok(n) = s.parse::<u64>() {
        return Ok(n);
    }
    let v = number(&s)?;
    if v < 0.0 || v.fract() != 0.0 || v > 9.0e15 {
        return Err(format!("{text:?} is not a whole count"));
    }
    Ok(v as u64)
}

/// Value rounded to 12 significant digits, printed in its shortest form.
pub fn sig12(x: f64) -> String {
    let rounded: f64 = format!("{x:.11e}").parse().expect("float formatting round-trips");
    let rounded = if rounded == 0.0 { 0.0 } else { rounded };
    format!("{rounded}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::FRAC_PI_4;

    #[test]
    fn angles() {
        assert_eq!(angle("pi/4").unwrap(), FRAC_PI_4);
        assert_eq!(angle("3pi/4").unwrap(), 3.0 * PI / 4.0);
        assert_eq!(angle("3*pi/4").unwrap(), 3.0 * PI / 4.0);
        assert_eq!(angle("-pi").unwrap(), -PI);
        assert_eq!(angle("0.25").unwrap(), 0.25);
        assert!((angle("90deg").unwrap() - PI / 2.0).abs() < 1e-15);
        assert!(angle("pie").is_err());
        assert!(angle("pi/0").is_err());
        assert!(angle("").is_err());
    }

    #[test]
    fn grids() {
        let g = angle_grid("0:pi/2:90").unwrap();
        assert_eq!(g.len(), 91);
        assert_eq!(g[0], 0.0);
        assert_eq!(g[90], PI / 2.0);
        assert_eq!(angle_grid("0,pi/4").unwrap(), vec![0.0, FRAC_PI_4]);
        assert!(angle_grid("0:1").is_err());
        assert_eq!(int_range("1..50").unwrap().len(), 50);
        assert_eq!(int_range("3").unwrap(), vec![3]);
        assert!(int_range("5..1").is_err());
    }

    #[test]
    fn counts_and_digits() {
        assert_eq!(count("1e6").unwrap(), 1_000_000);
        assert_eq!(count("1_000").unwrap(), 1000);
        assert!(count("1.5").is_err());
        assert_eq!(sig12(1.0), "1");
        assert_eq!(sig12(0.75), "0.75");
        assert_eq!(sig12(2.0f64.sqrt()), "1.41421356237");
        assert_eq!(sig12(-0.0), "0");
    }
}
