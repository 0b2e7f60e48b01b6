//! Model-assisted sensitivity analysis for unmeasured confounding.

pub mod audit;
pub mod interval;
pub mod model;
pub mod pooling;
pub mod power;
pub mod sigma;

pub use audit::{
    gamma_model_audit, pair_assignment_probability, AuditReport, AuditRequest, AuditStratum,
};
pub use interval::{
    delta_grid, heatmap_grid, sensitivity_interval, write_heatmap_csv, HeatmapCell,
    SensitivityInterval, SensitivityOptions, SensitivityZone,
};
pub use model::{
    impute_u, solve_lambda0, standardize_residual, tau_of, ConfounderModel, RootBranch,
    StandardizedResidual,
};
pub use pooling::{pooled_ci, rubin_pool, Interval, PooledEstimate};
pub use power::{
    power_study, power_study_with_progress, sensitivity_power, write_power_csv, NamedDesign,
    PowerRow, PowerScenario, PowerStudy,
};
pub use sigma::{estimate_sigma, SigmaEstimate, SigmaMethod};
