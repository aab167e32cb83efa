//! `a..b` inclusive ranges and comma lists.

use altserve::{Error, Result};

/// Parses `2..6`, `1,3,5` or a mix such as `1..3,10`.
pub fn parse_steps(raw: &str) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        if let Some((a, b)) = part.split_once("..") {
            let a = parse_usize(a)?;
            let b = parse_usize(b)?;
            if a > b {
                return Err(Error::parse(part, "range start exceeds its end"));
            }
            out.extend(a..=b);
        } else {
            out.push(parse_usize(part)?);
        }
    }
    if out.is_empty() {
        return Err(Error::parse(raw, "empty range"));
    }
    Ok(out)
}

/// Parses a comma list of reals; `a..b:m` expands to m evenly spaced points.
pub fn parse_reals(raw: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for part in raw.split(',') {
        let part = part.trim();
        if let Some((a, rest)) = part.split_once("..") {
            let (b, m) = rest
                .split_once(':')
                .ok_or_else(|| Error::parse(part, "real ranges need a point count, e.g. 0..4:9"))?;
            let (a, b) = (parse_real(a)?, parse_real(b)?);
            let m = parse_usize(m)?;
            if m < 2 || a > b {
                return Err(Error::parse(part, "need at least 2 points and start <= end"));
            }
            out.extend((0..m).map(|i| a + (b - a) * i as f64 / (m - 1) as f64));
        } else {
            out.push(parse_real(part)?);
        }
    }
    if out.is_empty() {
        return Err(Error::parse(raw, "empty list"));
    }
    Ok(out)
}

fn parse_usize(raw: &str) -> Result<usize> {
    raw.trim()
        .parse()
        .map_err(|_| Error::parse(raw.trim(), "not a nonnegative integer"))
}

fn parse_real(raw: &str) -> Result<f64> {
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| Error::parse(raw.trim(), "not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::parse(raw.trim(), "number must be finite"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges_are_inclusive() {
        assert_eq!(parse_steps("2..6").unwrap(), vec![2, 3, 4, 5, 6]);
        assert_eq!(parse_steps("1..2,7").unwrap(), vec![1, 2, 7]);
        assert!(parse_steps("5..2").is_err());
        assert_eq!(parse_reals("0,1e9").unwrap(), vec![0.0, 1e9]);
        assert_eq!(parse_reals("0..1:3").unwrap(), vec![0.0, 0.5, 1.0]);
        let err = parse_reals("0,x").unwrap_err();
        assert!(matches!(err, Error::Parse { ref token, .. } if token == "x"));
    }
}
