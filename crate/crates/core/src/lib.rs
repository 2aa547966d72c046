//! Difference-in-differences estimation with selection-based sensitivity
//! analysis, plus a Monte Carlo laboratory for parallel-trends conditions.
//!
//! The estimation side works on a balanced [`PanelDataset`]: two-group DiD,
//! regression adjustment on baseline covariates, the pre-period selection bias,
//! persistence estimates, and `ATT(ρ₂) = DiD − (ρ₂ − 1)·bias` with
//! influence-function standard errors. Staggered designs get group-time ATTs
//! against the never-treated group.
//!
//! The [`sim`] module draws panels from explicit outcome models, error
//! processes and selection mechanisms and measures the parallel-trends gap.


#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod did;
pub mod error;
pub mod multi_period;
pub mod panel;
pub mod regression;
pub mod rng;
pub mod sim;
pub mod stats;

pub use did::{
    att_at_rho, baseline_bias, did_2x2, estimate_rho, identified_set, influence_se_oracle_check,
    reg_adjusted_did, rho_bounds_from_change, sensitivity_curve, DidEstimate, IdentifiedSet,
    OracleReport, RhoEstimate, SensitivityCurve, TwoPeriodSample,
};
pub use error::{Error, Result};
pub use multi_period::{
    att_gt, att_gt_table, pt_mp_check, GroupTimeAttTable, GroupTimeCell, PreTrendGap,
};
pub use panel::{
    group_mean, load_panel_csv, read_panel_csv, write_panel_csv, CsvSchema, GroupFilter,
    GroupLabel, GroupMode, PanelDataset, Transform, UnitRecord,
};
pub use regression::{build_design, ols, residualize, DesignSpec, FitResult, Matrix, Term};
