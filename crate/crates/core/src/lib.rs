//! Discrete toolkit for congruent-cube John–Nirenberg–Campanato and
//! Riesz–Morrey norms, Calderón–Zygmund operators with Taylor-corrected
//! kernels, and atoms and molecules of the associated Hardy-type spaces.
//!
//! Everything lives on a uniform lattice over a truncated window of ℝⁿ with
//! `n ∈ {1, 2}`; integrals are midpoint sums and region measure is counted in
//! cells.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod czkernel;
pub mod error;
pub mod hardy;
pub mod lab;
pub mod lattice;
pub mod polyproj;
pub mod spaces;
pub mod tol;

pub use error::{Error, Result};
pub use lattice::{annulus, GridFunction, Point, Policy, Region, Window};
pub use polyproj::{moment_projection, Frame, MultiIndex, Polynomial};
pub use spaces::{jn_con_norm, rm_con_norm, NormParams, NormReport, SearchConfig};
