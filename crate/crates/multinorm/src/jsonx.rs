//! Shared JSON number handling: decimal floats, exact-rational strings
//! `"a/b"`, and `"inf"` for infinities.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Serialize, Deserialize, Clone, Debug)]
#[serde(untagged)]
pub enum RawScalar {
    F(f64),
    S(String),
}

impl RawScalar {
    pub fn parse(&self) -> Result<f64, String> {
        match self {
            RawScalar::F(x) => Ok(*x),
            RawScalar::S(s) => {
                let s = s.trim();
                if s.eq_ignore_ascii_case("inf") || s.eq_ignore_ascii_case("infinity") {
                    return Ok(f64::INFINITY);
                }
                if s.eq_ignore_ascii_case("-inf") || s.eq_ignore_ascii_case("-infinity") {
                    return Ok(f64::NEG_INFINITY);
                }
                if let Some((a, b)) = s.split_once('/') {
                    let num: f64 = a.trim().parse().map_err(|_| format!("bad rational {s}"))?;
                    let den: f64 = b.trim().parse().map_err(|_| format!("bad rational {s}"))?;
                    if den == 0.0 {
                        return Err(format!("zero denominator in {s}"));
                    }
                    return Ok(num / den);
                }
                s.parse().map_err(|_| format!("bad scalar {s}"))
            }
        }
    }

    pub fn from_f64(x: f64) -> RawScalar {
        if x == f64::INFINITY {
            RawScalar::S("inf".into())
        } else if x == f64::NEG_INFINITY {
            RawScalar::S("-inf".into())
        } else {
            RawScalar::F(x)
        }
    }
}

pub fn parse_vec(raw: &[RawScalar]) -> Result<DVector<f64>, String> {
    raw.iter()
        .map(|s| s.parse())
        .collect::<Result<Vec<f64>, _>>()
        .map(DVector::from_vec)
}

pub fn emit_vec(v: &DVector<f64>) -> Vec<RawScalar> {
    v.iter().map(|&x| RawScalar::from_f64(x)).collect()
}

pub fn parse_vecs(raw: Vec<Vec<RawScalar>>) -> Result<Vec<DVector<f64>>, String> {
    raw.iter().map(|v| parse_vec(v)).collect()
}

pub fn emit_vecs(vs: &[DVector<f64>]) -> Vec<Vec<RawScalar>> {
    vs.iter().map(emit_vec).collect()
}

/// Row-major matrix parse: `raw[i][j]` becomes entry `(i, j)`.
pub fn parse_matrix(raw: &[Vec<RawScalar>]) -> Result<DMatrix<f64>, String> {
    let rows = raw.len();
    let cols = raw.first().map(|r| r.len()).unwrap_or(0);
    if raw.iter().any(|r| r.len() != cols) {
        return Err("ragged coefficient rows".into());
    }
    let mut m = DMatrix::zeros(rows, cols);
    for (i, row) in raw.iter().enumerate() {
        for (j, s) in row.iter().enumerate() {
            m[(i, j)] = s.parse()?;
        }
    }
    Ok(m)
}

pub fn emit_matrix(m: &DMatrix<f64>) -> Vec<Vec<RawScalar>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| RawScalar::from_f64(m[(i, j)])).collect())
        .collect()
}
