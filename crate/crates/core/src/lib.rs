//! Closed null-geodesics of planar symmetric tensor families and their use
//! as objective vortex boundaries in two-dimensional flows.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod advect;
pub mod contour;
pub mod error;
pub mod export;
pub mod fieldgrid;
pub mod geometry;
pub mod ingest;
pub mod nullgeo;
pub mod ode;
pub mod selftest;
pub mod strain;
pub mod tensor;
pub mod vortex;

pub use error::{Error, Result};
pub use fieldgrid::{Grid2D, ScalarField, SymTensorField, VectorField2D};
pub use tensor::{Mat2, Point2, SymTensor2, Vec2};
