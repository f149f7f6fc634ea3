//! LMI families, feasibility checks and parameter searches.

mod augmented;
mod builder;
mod instance;
pub mod search;
mod theorems;

pub use augmented::{assemble_augmented, AugmentedMatrices};
pub use builder::BlockBuilder;
pub use instance::{
    check_feasibility, matrix_rows, CheckSettings, DecisionVar, FeasibilityReport, FeasibilityStatus, InstanceMeta,
    LmiConstraint, LmiInstance, Sense, Verification, VerificationEntry, DEFAULT_STRICTNESS, DEFAULT_VARIABLE_BOUND,
};
pub use theorems::{
    assemble_thm1, assemble_thm2, assemble_thm3, assemble_thm4, DelayBounds, FamilyParams, FamilyRegistry, LmiFamily,
    DELTA_FLOOR,
};
