//! Monte Carlo laboratory: panels drawn from explicit outcome models, error
//! processes and selection mechanisms, with the parallel-trends gap measured
//! on the untreated potential outcomes.

pub mod gap;
pub mod gaussian;
pub mod mechanism;
pub mod model;
pub mod scenarios;
pub mod simulate;

pub use gap::{
    measure_conditional_gap, measure_pt_gap, measure_staggered_gap, Conditioning, GapMeasure,
};
pub use mechanism::{
    majority, majority_vote_select, CohortAssignment, InfoTag, PreparedMechanism, SelectionContext,
    SelectionMechanism, SymFn, UnitDraw,
};
pub use model::{
    AlphaLambdaLaw, AlphaLaw, CostLaw, CovFn, CovariateLaw, ErrorProcess, HomogeneousLaw,
    LambdaComponent, OutcomeModel, StructFn, TreatmentEffect,
};
pub use scenarios::{
    replicate, run, run_scenario, scenario, scenario_ids, Expected, Scenario, SimVerdict,
    DEFAULT_REPS, DEFAULT_SEED,
};
pub use simulate::{simulate_panel, simulate_with_rng, Assignment, LatentPanel, SimConfig};
