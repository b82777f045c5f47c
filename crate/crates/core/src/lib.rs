//! Numerical laboratory for anomalous dissipation of a passive scalar
//! advected by alternating shear flows, and for the forced Navier–Stokes
//! lift built from the same fields.
//!
//! Conventions: the torus is [0, 1)^d with cell-centered nodes
//! x_i = (i + ½)/n; 2D values are stored [y][x] and 3D values [z][y][x];
//! `energy` is the mean square ∫θ².

pub mod cascade;
pub mod diagnostics;
pub mod error;
pub mod fields;
pub mod grid;
pub mod ns4d;
pub mod oracle;
pub mod serde_ext;
pub mod smooth;
pub mod solver;
pub mod spectral;
pub mod sum;

pub use error::{Error, Result};
