//! Exact arithmetic over prime fields: scalars, dense matrices and
//! matrix-valued polynomials.

mod field;
mod matrix;
mod poly;

pub use field::{is_prime, PrimeField, MAX_MODULUS};
pub use matrix::FieldMatrix;
pub use poly::{interpolate, lagrange_basis, MatrixPoly};
