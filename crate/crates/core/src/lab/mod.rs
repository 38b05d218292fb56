//! Configuration, seeded families, experiments and reports.

pub mod config;
pub mod experiments;
pub mod families;
pub mod reports;

pub use config::{DomainSpec, ExperimentConfig, ExperimentName, FamilyKind, FamilySpec, Tolerances, SCHEMA_VERSION};
pub use experiments::{
    run, run_atom_image, run_decomposition, run_duality, run_equivalence, run_jn_boundedness, run_rm_boundedness,
    run_vanishing_moments,
};
pub use reports::{ExperimentResult, PropertyCheck, RowStatus};
