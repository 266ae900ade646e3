use std::fmt::Write as _;

use crate::error::{CiqError, Result};

fn is_comment(l: &str) -> bool {
    let t = l.trim_start();
    t.is_empty() || t.starts_with('#') || t.starts_with('%')
}

fn number(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .trim()
        .parse()
        .map_err(|_| CiqError::parse(line, format!("invalid number {:?}", tok.trim())))?;
    if !v.is_finite() {
        return Err(CiqError::parse(line, format!("non-finite value {:?}", tok.trim())));
    }
    Ok(v)
}

/// Whitespace-separated reals; lines starting with `#` or `%` are comments.
pub fn parse_vector(text: &str) -> Result<Vec<f64>> {
    let mut v = Vec::new();
    for (i, l) in text.lines().enumerate() {
        if is_comment(l) {
            continue;
        }
        for tok in l.split_whitespace() {
            v.push(number(tok, i + 1)?);
        }
    }
    if v.is_empty() {
        return Err(CiqError::parse(1, "no values found"));
    }
    Ok(v)
}

/// One value per line, full precision.
pub fn format_vector(v: &[f64]) -> String {
    let mut s = String::with_capacity(v.len() * 24);
    for x in v {
        let _ = writeln!(s, "{x:.17e}");
    }
    s
}

fn csv_rows(text: &str) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut rows = Vec::new();
    let mut width = None;
    let mut first_data = true;
    for (i, l) in text.lines().enumerate() {
        let ln = i + 1;
        if is_comment(l) {
            continue;
        }
        let fields: Vec<&str> = l.split(',').collect();
        let parsed: Result<Vec<f64>> = fields.iter().map(|f| number(f, ln)).collect();
        let row = match parsed {
            Ok(r) => r,
            // A non-numeric first row is a header.
            Err(_) if first_data => {
                first_data = false;
                width = Some(fields.len());
                continue;
            }
            Err(e) => return Err(e),
        };
        first_data = false;
        match width {
            Some(w) if w != row.len() => {
                return Err(CiqError::parse(ln, format!("expected {w} columns, found {}", row.len())))
            }
            _ => width = Some(row.len()),
        }
        rows.push((ln, row));
    }
    if rows.is_empty() {
        return Err(CiqError::parse(1, "no data rows"));
    }
    Ok(rows)
}

/// CSV with one point per row and an optional header line.
pub fn parse_points_csv(text: &str) -> Result<Vec<Vec<f64>>> {
    Ok(csv_rows(text)?.into_iter().map(|(_, r)| r).collect())
}

/// CSV of training data: every column but the last is a coordinate and the
/// last column is the target.
pub fn parse_xy_csv(text: &str) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    let rows = csv_rows(text)?;
    let mut xs = Vec::with_capacity(rows.len());
    let mut ys = Vec::with_capacity(rows.len());
    for (ln, mut r) in rows {
        if r.len() < 2 {
            return Err(CiqError::parse(ln, "need at least one coordinate and a target"));
        }
        ys.push(r.pop().expect("nonempty"));
        xs.push(r);
    }
    Ok((xs, ys))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vector_roundtrip() {
        let v = vec![1.0, -2.5e-300, std::f64::consts::PI];
        assert_eq!(parse_vector(&format_vector(&v)).unwrap(), v);
        assert_eq!(parse_vector("# c\n1 2\n 3\n").unwrap(), vec![1.0, 2.0, 3.0]);
        assert!(parse_vector("").is_err());
        assert!(parse_vector("1 x").is_err());
    }

    #[test]
    fn csv_with_and_without_header() {
        let a = parse_points_csv("x,y\n1,2\n3,4\n").unwrap();
        let b = parse_points_csv("1,2\n3,4\n").unwrap();
        assert_eq!(a, b);
        assert!(parse_points_csv("1,2\n3\n").is_err());
        assert!(parse_points_csv("x,y\n").is_err());
        assert!(parse_points_csv("1,2\nx,y\n").is_err());
    }

    #[test]
    fn xy_split() {
        let (x, y) = parse_xy_csv("x,y\n0.5,1\n0.25,-1\n").unwrap();
        assert_eq!(x, vec![vec![0.5], vec![0.25]]);
        assert_eq!(y, vec![1.0, -1.0]);
        assert!(parse_xy_csv("1\n2\n").is_err());
    }
}
