//! Exponential dichotomy analysis for linear systems `x' = A(t) x`.
//!
//! The crate propagates fundamental matrices on a uniform grid, extracts
//! dichotomy projections and constants, solves the bounded inhomogeneous
//! problem through Green's kernel, and checks robustness of the splitting
//! under small perturbations.

pub mod cli;
pub mod dichotomy;
pub mod envelope;
pub mod green;
pub mod linalg;
pub mod propagator;
pub mod roughness;
pub mod system;

use serde::ser::{SerializeSeq, Serializer};

use crate::linalg::Matrix;

/// Serializes a matrix as a list of rows.
pub fn serialize_matrix<S: Serializer>(m: &Matrix, s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(m.nrows()))?;
    for i in 0..m.nrows() {
        let row: Vec<f64> = m.row(i).iter().copied().collect();
        seq.serialize_element(&row)?;
    }
    seq.end()
}
