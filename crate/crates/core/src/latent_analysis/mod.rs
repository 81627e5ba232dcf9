//! Downstream analysis of latent codes: kernel regression with
//! cross-validated model selection, and 2-D projections for inspection.

mod grid;
mod projection;
mod report;
mod svr;

pub use grid::{fold_assignment, grid_search_cv, GridResult, GridRow, GridSpec};
pub use projection::{
    canonical_sign, fingerprint, pca_fit, pls_fit, project, ProjectionMatrix, ProjectionMethod,
};
pub use report::{grid_csv, projection_csv, regression_csv, spearman, RegressionRow};
pub use svr::{
    dual_objective, kkt_violation, solve_dual, svr_fit, svr_predict, DualSolution, Kernel, KernelKind,
    Standardizer, SvrModel, SvrParams,
};
