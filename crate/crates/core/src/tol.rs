//! Numerical thresholds shared by the library, the experiments and the tests.

/// Relative uniformity of the pitch across axes.
pub const PITCH_REL: f64 = 1e-12;

/// Largest admissible condition number of a projection Gram matrix.
pub const GRAM_CONDITION_MAX: f64 = 1e10;

/// Residual moments of a projection, relative to `‖f‖₁ · size^|γ|`.
pub const MOMENT_REL: f64 = 1e-8;

/// Coefficient error when projecting a polynomial onto its own space.
pub const REPRODUCTION_REL: f64 = 1e-10;

/// Slack on the atom and molecule size bounds.
pub const NORM_SLACK: f64 = 1e-10;

/// Moment defect below which an operator is declared to have vanishing moments.
pub const VANISHING_MOMENT: f64 = 5e-3;

/// Relative mismatch allowed between the two sides of a duality pairing.
pub const DUALITY_REL: f64 = 1e-3;

/// Molecular reconstruction residual, relative to `‖M‖₁`.
pub const RECONSTRUCTION_REL: f64 = 1e-6;

/// Cauchy increment of the truncation ladder, relative to `‖f‖_∞`.
pub const CZ_INCREMENT_REL: f64 = 1e-3;

/// Largest window accepted by the exhaustive partition oracle.
pub const ORACLE_MAX_CELLS: usize = 16;

/// Highest polynomial degree supported by the projection machinery.
pub const MAX_DEGREE: usize = 4;
