//! Serialization helpers for nalgebra and complex values in JSON reports.

use nalgebra::{DMatrix, DVector};
use serde::ser::SerializeSeq;
use serde::Serializer;

/// Matrix as an array of rows.
pub fn matrix_rows<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for i in 0..m.nrows() {
        let row: Vec<f64> = m.row(i).iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}

pub fn vector<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(v.iter())
}
