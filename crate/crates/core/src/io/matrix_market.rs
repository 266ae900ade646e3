use std::fmt::Write as _;

use super::MAX_DIM;
use crate::error::{CiqError, Result};

#[derive(Clone, Copy, PartialEq)]
enum Layout {
    Coordinate,
    Array,
}

#[derive(Clone, Copy, PartialEq)]
enum Symmetry {
    General,
    Symmetric,
}

fn parse_f64(tok: &str, line: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| CiqError::parse(line, format!("invalid number {tok:?}")))?;
    if !v.is_finite() {
        return Err(CiqError::parse(line, format!("non-finite value {tok:?}")));
    }
    Ok(v)
}

fn parse_usize(tok: &str, line: usize) -> Result<usize> {
    tok.parse()
        .map_err(|_| CiqError::parse(line, format!("invalid integer {tok:?}")))
}

/// Parses a real square MatrixMarket matrix (`coordinate` or `array`,
/// `general` or `symmetric`) into dense rows.
pub fn parse_matrix_market(text: &str) -> Result<Vec<Vec<f64>>> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (_, header) = lines.next().ok_or_else(|| CiqError::parse(1, "empty input"))?;
    let fields: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(CiqError::parse(1, "expected '%%MatrixMarket matrix <layout> <field> <symmetry>'"));
    }
    let layout = match fields[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(CiqError::parse(1, format!("unsupported layout {other:?}"))),
    };
    if !matches!(fields[3].as_str(), "real" | "integer" | "double") {
        return Err(CiqError::parse(1, format!("unsupported field {:?}", fields[3])));
    }
    let symmetry = match fields[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        other => return Err(CiqError::parse(1, format!("unsupported symmetry {other:?}"))),
    };

    let mut data = lines.filter(|(_, l)| {
        let t = l.trim();
        !t.is_empty() && !t.starts_with('%')
    });
    let (size_line, size) = data.next().ok_or_else(|| CiqError::parse(1, "missing size line"))?;
    let toks: Vec<&str> = size.split_whitespace().collect();
    let expected = if layout == Layout::Coordinate { 3 } else { 2 };
    if toks.len() != expected {
        return Err(CiqError::parse(size_line, format!("size line needs {expected} integers")));
    }
    let rows = parse_usize(toks[0], size_line)?;
    let cols = parse_usize(toks[1], size_line)?;
    if rows != cols {
        return Err(CiqError::parse(size_line, format!("matrix must be square, got {rows}x{cols}")));
    }
    if rows == 0 || rows > MAX_DIM {
        return Err(CiqError::parse(size_line, format!("dimension {rows} outside 1..={MAX_DIM}")));
    }
    let n = rows;
    let mut m = vec![vec![0.0; n]; n];

    match layout {
        Layout::Coordinate => {
            let nnz = parse_usize(toks[2], size_line)?;
            let mut seen = 0usize;
            for (ln, l) in data {
                let t: Vec<&str> = l.split_whitespace().collect();
                if t.len() != 3 {
                    return Err(CiqError::parse(ln, "coordinate entry needs 'row col value'"));
                }
                let i = parse_usize(t[0], ln)?;
                let j = parse_usize(t[1], ln)?;
                if i == 0 || j == 0 || i > n || j > n {
                    return Err(CiqError::parse(ln, format!("index ({i}, {j}) out of range 1..={n}")));
                }
                let v = parse_f64(t[2], ln)?;
                if symmetry == Symmetry::Symmetric && j > i {
                    return Err(CiqError::parse(ln, "symmetric storage expects the lower triangle"));
                }
                m[i - 1][j - 1] += v;
                if symmetry == Symmetry::Symmetric && i != j {
                    m[j - 1][i - 1] += v;
                }
                seen += 1;
                if seen > nnz {
                    return Err(CiqError::parse(ln, format!("more than the declared {nnz} entries")));
                }
            }
            if seen != nnz {
                return Err(CiqError::parse(size_line, format!("declared {nnz} entries, found {seen}")));
            }
        }
        Layout::Array => {
            // Column-major; symmetric stores the lower triangle only.
            let mut slots = Vec::new();
            for j in 0..n {
                let start = if symmetry == Symmetry::Symmetric { j } else { 0 };
                for i in start..n {
                    slots.push((i, j));
                }
            }
            let mut k = 0usize;
            for (ln, l) in data {
                for tok in l.split_whitespace() {
                    let &(i, j) = slots
                        .get(k)
                        .ok_or_else(|| CiqError::parse(ln, "more values than the matrix holds"))?;
                    let v = parse_f64(tok, ln)?;
                    m[i][j] = v;
                    if symmetry == Symmetry::Symmetric {
                        m[j][i] = v;
                    }
                    k += 1;
                }
            }
            if k != slots.len() {
                return Err(CiqError::parse(size_line, format!("expected {} values, found {k}", slots.len())));
            }
        }
    }
    Ok(m)
}

/// Dense rows as a `array real general` MatrixMarket document.
pub fn write_matrix_market(rows: &[Vec<f64>]) -> String {
    let n = rows.len();
    let mut s = String::from("%%MatrixMarket matrix array real general\n");
    let _ = writeln!(s, "{n} {n}");
    for j in 0..n {
        for row in rows {
            let _ = writeln!(s, "{:e}", row[j]);
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coordinate_symmetric() {
        let text = "%%MatrixMarket matrix coordinate real symmetric\n% c\n2 2 3\n1 1 4\n2 1 1\n2 2 9\n";
        assert_eq!(parse_matrix_market(text).unwrap(), vec![vec![4.0, 1.0], vec![1.0, 9.0]]);
    }

    #[test]
    fn array_general_roundtrip() {
        let m = vec![vec![1.0, 2.5], vec![2.5, -3.0]];
        assert_eq!(parse_matrix_market(&write_matrix_market(&m)).unwrap(), m);
    }

    #[test]
    fn array_symmetric() {
        let text = "%%MatrixMarket matrix array real symmetric\n2 2\n1\n2\n3\n";
        assert_eq!(parse_matrix_market(text).unwrap(), vec![vec![1.0, 2.0], vec![2.0, 3.0]]);
    }

    #[test]
    fn malformed_inputs() {
        for bad in [
            "",
            "%%MatrixMarket matrix coordinate complex general\n1 1 1\n1 1 1\n",
            "%%MatrixMarket matrix coordinate real general\n2 3 0\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n",
            "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n",
            "%%MatrixMarket matrix array real general\n2 2\n1 2 3\n",
            "%%MatrixMarket matrix array real general\n1 1\nnan\n",
            "%%MatrixMarket matrix array real general\n99999999 99999999\n",
        ] {
            assert!(parse_matrix_market(bad).is_err(), "{bad:?}");
        }
    }
}
