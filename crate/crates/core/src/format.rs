//! JSON encodings shared by every document the crate reads or writes.
//!
//! Complex scalars are two-element arrays `[re, im]`; matrices are row-major
//! arrays of rows.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector, C64};

pub type JsonComplex = [f64; 2];
pub type JsonMatrix = Vec<Vec<JsonComplex>>;

pub fn complex_to_json(z: C64) -> JsonComplex {
    [z.re, z.im]
}

pub fn json_to_complex(z: JsonComplex) -> C64 {
    C64::new(z[0], z[1])
}

pub fn matrix_to_json(m: &CMatrix) -> JsonMatrix {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| complex_to_json(m[(i, j)])).collect())
        .collect()
}

/// Decode a row-major matrix, checking it is rectangular, finite and non-empty.
pub fn json_to_matrix(rows: &JsonMatrix, field: &str) -> Result<CMatrix> {
    let nrows = rows.len();
    if nrows == 0 {
        return Err(Error::Parse(format!("{field}: matrix has no rows")));
    }
    let ncols = rows[0].len();
    if ncols == 0 {
        return Err(Error::Parse(format!("{field}: matrix has empty rows")));
    }
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(Error::Parse(format!(
                "{field}: row {i} has {} entries, expected {ncols}",
                row.len()
            )));
        }
        if let Some(j) = row.iter().position(|z| !(z[0].is_finite() && z[1].is_finite())) {
            return Err(Error::Parse(format!("{field}: non-finite entry at ({i}, {j})")));
        }
    }
    Ok(CMatrix::from_fn(nrows, ncols, |i, j| json_to_complex(rows[i][j])))
}

pub fn vector_to_json(v: &CVector) -> Vec<JsonComplex> {
    v.iter().map(|&z| complex_to_json(z)).collect()
}

pub fn json_to_vector(entries: &[JsonComplex]) -> CVector {
    CVector::from_iterator(entries.len(), entries.iter().map(|&z| json_to_complex(z)))
}

/// Deserialize a JSON document, reporting the failing field path and position.
pub fn from_json_str<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if path.is_empty() || path == "." {
            Error::Parse(inner.to_string())
        } else {
            Error::Parse(format!("field {path}: {inner}"))
        }
    })
}

/// `serde(with = ...)` adapter for [`CMatrix`] fields.
pub mod matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> std::result::Result<S::Ok, S::Error> {
        matrix_to_json(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CMatrix, D::Error> {
        let rows = JsonMatrix::deserialize(d)?;
        json_to_matrix(&rows, "matrix").map_err(serde::de::Error::custom)
    }
}

/// `serde(with = ...)` adapter for [`CVector`] fields.
pub mod vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &CVector, s: S) -> std::result::Result<S::Ok, S::Error> {
        vector_to_json(v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CVector, D::Error> {
        let entries = Vec::<JsonComplex>::deserialize(d)?;
        Ok(json_to_vector(&entries))
    }
}

/// `serde(with = ...)` adapter for [`C64`] fields.
pub mod complex {
    use super::*;

    pub fn serialize<S: Serializer>(z: &C64, s: S) -> std::result::Result<S::Ok, S::Error> {
        complex_to_json(*z).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<C64, D::Error> {
        Ok(json_to_complex(JsonComplex::deserialize(d)?))
    }
}

/// Indices are 0-based in memory and 1-based in every document.
pub mod one_based {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[usize], s: S) -> std::result::Result<S::Ok, S::Error> {
        v.iter().map(|i| i + 1).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<usize>, D::Error> {
        let v = Vec::<usize>::deserialize(d)?;
        v.into_iter()
            .map(|i| {
                i.checked_sub(1)
                    .ok_or_else(|| serde::de::Error::custom("indices are 1-based"))
            })
            .collect()
    }
}

/// [`one_based`] for optional index lists.
pub mod one_based_opt {
    use super::*;

    pub fn serialize<S: Serializer>(v: &Option<Vec<usize>>, s: S) -> std::result::Result<S::Ok, S::Error> {
        v.as_ref()
            .map(|v| v.iter().map(|i| i + 1).collect::<Vec<_>>())
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Vec<usize>>, D::Error> {
        let v = Option::<Vec<usize>>::deserialize(d)?;
        v.map(|v| {
            v.into_iter()
                .map(|i| {
                    i.checked_sub(1)
                        .ok_or_else(|| serde::de::Error::custom("indices are 1-based"))
                })
                .collect()
        })
        .transpose()
    }
}

/// Nested 1-based index lists, e.g. SJED blocks.
pub mod one_based_nested {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[Vec<usize>], s: S) -> std::result::Result<S::Ok, S::Error> {
        v.iter()
            .map(|b| b.iter().map(|i| i + 1).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Vec<usize>>, D::Error> {
        let v = Vec::<Vec<usize>>::deserialize(d)?;
        v.into_iter()
            .map(|b| {
                b.into_iter()
                    .map(|i| {
                        i.checked_sub(1)
                            .ok_or_else(|| serde::de::Error::custom("indices are 1-based"))
                    })
                    .collect()
            })
            .collect()
    }
}
