//! Registered scenarios, each pairing a data-generating process with the
//! verdict the theory predicts for the parallel-trends gap.
//!
//! Sizing: two-group scenarios use n = 20,000 and 200 replications, giving a
//! Monte Carlo SE of `Δ_post` near 0.001 to 0.002; every violation scenario has
//! a population gap above 0.05, i.e. beyond 25 MC SEs. Voting scenarios use
//! 4,000 aggregates of 5 members; staggered ones 10,000 units over 4 periods.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::gap::{measure_conditional_gap, measure_pt_gap, measure_staggered_gap, Conditioning};
use super::mechanism::{CohortAssignment, InfoTag, SelectionMechanism, SymFn};
use super::model::{
    AlphaLambdaLaw, AlphaLaw, CostLaw, CovFn, CovariateLaw, ErrorProcess, HomogeneousLaw,
    LambdaComponent, OutcomeModel, StructFn, TreatmentEffect,
};
use super::simulate::{simulate_with_rng, Assignment, SimConfig};
use crate::error::{Error, Result};
use crate::rng::{keyed_seed, substream};
use crate::stats::mean_and_mcse;

/// Seed used by the shipped verification runs.
pub const DEFAULT_SEED: u64 = 20_240_917;

pub const DEFAULT_REPS: usize = 200;

/// Below this absolute size a gap counts as zero whatever its MC SE; it covers
/// designs where the gap vanishes identically up to rounding.
const ZERO_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expected {
    Zero,
    Positive,
    Negative,
}

impl std::fmt::Display for Expected {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Expected::Zero => "zero",
            Expected::Positive => "positive",
            Expected::Negative => "negative",
        })
    }
}

impl Expected {
    /// Zero: `|Δ| < 3·mcse`. Signed: `|Δ| > 3·mcse` with the predicted sign.
    pub fn judge(self, delta: f64, mcse: f64) -> bool {
        let band = 3.0 * mcse;
        match self {
            Expected::Zero => delta.abs() < band || delta.abs() < ZERO_FLOOR,
            Expected::Positive => delta > band,
            Expected::Negative => delta < -band,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub summary: String,
    pub config: SimConfig,
    pub conditioning: Conditioning,
    pub use_latents: bool,
    pub expected: Expected,
    pub reps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimVerdict {
    pub id: String,
    pub delta_post: f64,
    pub mcse: f64,
    pub deltapost1: Option<f64>,
    pub deltapost2: Option<f64>,
    pub expected: Expected,
    pub pass: bool,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
}

const IDS: &[&str] = &[
    "RANDOM",
    "ANYDIST-RANDOM",
    "PROP1-VIOLATION",
    "PROP1-STATIC",
    "PROP2-VIOLATION",
    "PROP2-MARTINGALE",
    "PROP3-VIOLATION",
    "PROP3-TIMEHOMOG",
    "SUFF-IF",
    "SUFF-FE",
    "SC1",
    "SC1-NONEXCH",
    "SC2-MARTINGALE",
    "SC3",
    "AC-AR1",
    "ROY-FORESIGHT",
    "MAJ-FE",
    "MAJ-AR1",
    "SC1-X",
    "SC2-X",
    "SC3-X",
    "PTX-UNCONDITIONAL",
    "RC-TIMEVARYING",
    "SC1-NSP",
    "SC2-NSP",
    "SC3-NSP",
    "TH-CRE",
    "NSP-LAMBDA-SEL",
    "MP-FE",
    "MP-IF-MARTINGALE",
    "MP-AR1",
];

pub fn scenario_ids() -> &'static [&'static str] {
    IDS
}

const LAMBDA: [f64; 3] = [0.0, 0.5, 1.0];

fn two_way_config(errors: ErrorProcess, mechanism: SelectionMechanism) -> SimConfig {
    SimConfig {
        n: 20_000,
        periods: 3,
        outcome: OutcomeModel::TwoWay {
            lambda: LAMBDA.to_vec(),
        },
        errors,
        alpha: AlphaLaw::standard(),
        covariate: None,
        assignment: Assignment::Binary { mechanism },
        effect: TreatmentEffect::constant(1.0),
    }
}

fn three_point_covariate(switch_prob: f64) -> CovariateLaw {
    CovariateLaw {
        support: vec![0.0, 1.0, 2.0],
        probs: vec![0.3, 0.4, 0.3],
        switch_prob,
    }
}

/// `α + λ_t + γ_t(X_t) + ε_t` with a trend in `γ_t` and `α` loading on `X`.
fn covariate_config(errors: ErrorProcess, mechanism: SelectionMechanism) -> SimConfig {
    SimConfig {
        outcome: OutcomeModel::CovariateSeparable {
            lambda: LAMBDA.to_vec(),
            gamma: vec![
                CovFn::Affine { a: 0.0, b: 0.5 },
                CovFn::Identity,
                CovFn::Quadratic {
                    a: 0.0,
                    b: 0.0,
                    c: 1.0,
                },
            ],
        },
        alpha: AlphaLaw {
            mean: 0.0,
            sd: 1.0,
            x_loading: 0.5,
        },
        covariate: Some(three_point_covariate(0.3)),
        ..two_way_config(errors, mechanism)
    }
}

/// `μ(X^μ, α^μ, ε^μ_t) + λ_t(X^λ_t, α^λ, ε^λ_t)` with time-varying `λ_t`.
fn nsp_config(
    mu: StructFn,
    errors: ErrorProcess,
    mechanism: SelectionMechanism,
    alpha_corr: f64,
) -> SimConfig {
    let lambda = (0..3)
        .map(|t| {
            let s = t as f64 * 0.5;
            StructFn::Affine {
                c0: s,
                cx: s,
                ca: s,
                ce: 1.0,
            }
        })
        .collect();
    SimConfig {
        outcome: OutcomeModel::NonseparableMuLambda {
            mu,
            time_varying: LambdaComponent {
                lambda,
                alpha: AlphaLambdaLaw {
                    corr: alpha_corr,
                    x_loading: 1.0,
                    sd: 1.0,
                },
                errors: ErrorProcess::IidNormal { sigma: 1.0 },
                covariate: CovariateLaw {
                    support: vec![0.0, 1.0],
                    probs: vec![0.5, 0.5],
                    switch_prob: 0.3,
                },
            },
        },
        covariate: Some(three_point_covariate(0.3)),
        ..two_way_config(errors, mechanism)
    }
}

fn staggered_config(errors: ErrorProcess, cohorts: CohortAssignment) -> SimConfig {
    SimConfig {
        n: 10_000,
        periods: 4,
        outcome: OutcomeModel::TwoWay {
            lambda: vec![0.0, 0.5, 1.0, 1.5],
        },
        errors,
        alpha: AlphaLaw::standard(),
        covariate: None,
        assignment: Assignment::Staggered { cohorts },
        effect: TreatmentEffect::constant(1.0),
    }
}

fn ar1() -> ErrorProcess {
    ErrorProcess::Ar1 {
        rho: 0.5,
        sigma: 1.0,
    }
}

fn martingale() -> ErrorProcess {
    ErrorProcess::Martingale {
        sigma0: 1.0,
        sigma_zeta: 1.0,
    }
}

fn iid() -> ErrorProcess {
    ErrorProcess::IidNormal { sigma: 1.0 }
}

fn exchangeable() -> ErrorProcess {
    ErrorProcess::ExchangeableNormal { sigma: 1.0, r: 0.5 }
}

fn fe(c: f64, x_loading: f64) -> SelectionMechanism {
    SelectionMechanism::FixedEffectThreshold {
        c,
        x_loading,
        nu_sd: 0.5,
    }
}

fn pre_shock(alpha: f64, x_loading: f64, c: f64) -> SelectionMechanism {
    SelectionMechanism::PreShockThreshold {
        alpha,
        eps_pre: 1.0,
        x_loading,
        nu_sd: 0.5,
        c,
    }
}

fn symmetric(x_loading: f64, c: f64) -> SelectionMechanism {
    SelectionMechanism::SymmetricIndexThreshold {
        h: 1.0,
        s: SymFn::Linear { b: 1.0 },
        x_loading,
        nu_sd: 1.0,
        c,
    }
}

/// `G = 1{E[Y_pre(0) | α, ε_pre] ≤ λ_pre}`, i.e. `α + ε_pre ≤ 0`.
fn ashenfelter() -> SelectionMechanism {
    SelectionMechanism::AshenfelterThreshold {
        beta: 0.0,
        info: vec![InfoTag::Alpha, InfoTag::EpsPre],
        cost: CostLaw {
            mean: LAMBDA[1],
            sd: 0.0,
            nu_loading: 0.0,
            eta1_loading: 0.0,
        },
    }
}

fn necessity(info: Vec<InfoTag>) -> SelectionMechanism {
    SelectionMechanism::NecessitySign { info, c: -0.5 }
}

fn cohorts(alpha: f64, eps_first: f64, cutpoints: [f64; 3]) -> CohortAssignment {
    CohortAssignment {
        alpha,
        eps_first,
        x_loading: 0.0,
        nu_sd: 0.5,
        cutpoints: cutpoints.to_vec(),
    }
}

/// Looks up a registered scenario.
pub fn scenario(id: &str) -> Result<Scenario> {
    use Expected::*;
    use InfoTag::*;
    let all = vec![Alpha, EpsPre, EpsPost];
    let (summary, config, conditioning, expected) = match id {
        "RANDOM" => (
            "assignment independent of all latents",
            two_way_config(ar1(), SelectionMechanism::Random { p: 0.3 }),
            Conditioning::None,
            Zero,
        ),
        "ANYDIST-RANDOM" => (
            "random assignment under a random-coefficient model with scale-mixture shocks",
            SimConfig {
                outcome: OutcomeModel::RandomCoefficient {
                    lambda: LAMBDA.to_vec(),
                    gamma: vec![
                        CovFn::Affine { a: 1.0, b: 0.5 },
                        CovFn::Quadratic { a: 1.0, b: 0.0, c: 0.3 },
                        CovFn::Affine { a: 0.5, b: 1.0 },
                    ],
                },
                alpha: AlphaLaw { mean: 0.5, sd: 1.0, x_loading: 0.5 },
                covariate: Some(three_point_covariate(0.3)),
                ..two_way_config(
                    ErrorProcess::TimeHomogeneousGivenAlpha { law: HomogeneousLaw::AlphaScale { k: 0.5 }, sigma: 1.0 },
                    SelectionMechanism::Random { p: 0.4 },
                )
            },
            Conditioning::None,
            Zero,
        ),
        "PROP1-VIOLATION" => (
            "sign-of-expected-change selection with full information and i.i.d. shocks",
            two_way_config(iid(), necessity(all)),
            Conditioning::None,
            Negative,
        ),
        "PROP1-STATIC" => (
            "sign-of-expected-change selection when untreated outcomes never change relative to the mean",
            two_way_config(ErrorProcess::ExchangeableNormal { sigma: 1.0, r: 1.0 }, necessity(all)),
            Conditioning::None,
            Zero,
        ),
        "PROP2-VIOLATION" => (
            "imperfect-foresight sign selection with AR(1) shocks",
            two_way_config(ar1(), necessity(vec![Alpha, EpsPre])),
            Conditioning::None,
            Negative,
        ),
        "PROP2-MARTINGALE" => (
            "imperfect-foresight sign selection with martingale shocks",
            two_way_config(martingale(), necessity(vec![Alpha, EpsPre])),
            Conditioning::None,
            Zero,
        ),
        "PROP3-VIOLATION" => (
            "fixed-effect sign selection when the effect of α grows over time",
            SimConfig {
                outcome: OutcomeModel::RandomCoefficient {
                    lambda: LAMBDA.to_vec(),
                    gamma: vec![CovFn::constant(1.0), CovFn::constant(1.0), CovFn::constant(1.5)],
                },
                ..two_way_config(iid(), necessity(vec![Alpha]))
            },
            Conditioning::None,
            Negative,
        ),
        "PROP3-TIMEHOMOG" => (
            "fixed-effect sign selection with shocks time-homogeneous given α",
            two_way_config(
                ErrorProcess::TimeHomogeneousGivenAlpha { law: HomogeneousLaw::AlphaShift { k: 0.5 }, sigma: 1.0 },
                necessity(vec![Alpha]),
            ),
            Conditioning::None,
            Zero,
        ),
        "SUFF-IF" => (
            "Roy selection on α, the pre-period shock and cost shocks, with martingale shocks",
            SimConfig {
                effect: TreatmentEffect { tau: 1.0, tau_alpha: 0.5, gain_sd: 0.5, tau_eps: 0.0 },
                ..two_way_config(
                    ErrorProcess::Martingale { sigma0: 1.0, sigma_zeta: 0.7 },
                    SelectionMechanism::Roy {
                        info: vec![Alpha, EpsPre, Nu, EtaPre],
                        cost: CostLaw { mean: 1.0, sd: 1.0, nu_loading: 1.0, eta1_loading: 0.5 },
                    },
                )
            },
            Conditioning::None,
            Zero,
        ),
        "SUFF-FE" => (
            "fixed-effect threshold with shocks time-homogeneous given α",
            two_way_config(
                ErrorProcess::TimeHomogeneousGivenAlpha { law: HomogeneousLaw::AlphaShift { k: 0.5 }, sigma: 1.0 },
                fe(0.0, 0.0),
            ),
            Conditioning::None,
            Zero,
        ),
        "SC1" => (
            "selection symmetric in the two shocks with exchangeable shocks",
            two_way_config(exchangeable(), symmetric(0.0, 1.0)),
            Conditioning::None,
            Zero,
        ),
        "SC1-NONEXCH" => (
            "selection symmetric in the two shocks with non-exchangeable (martingale) shocks",
            two_way_config(martingale(), symmetric(0.0, 1.0)),
            Conditioning::None,
            Positive,
        ),
        "SC2-MARTINGALE" => (
            "selection on α and the pre-period shock with martingale shocks",
            two_way_config(martingale(), ashenfelter()),
            Conditioning::None,
            Zero,
        ),
        "SC3" => ("fixed-effect threshold with stationary AR(1) shocks", two_way_config(ar1(), fe(0.0, 0.0)), Conditioning::None, Zero),
        "AC-AR1" => (
            "selection on a low pre-period outcome with mean-reverting shocks",
            two_way_config(ar1(), ashenfelter()),
            Conditioning::None,
            Positive,
        ),
        "ROY-FORESIGHT" => (
            "Roy selection on the post-period shock",
            SimConfig {
                effect: TreatmentEffect { tau: 1.0, tau_alpha: 0.0, gain_sd: 0.0, tau_eps: 1.0 },
                ..two_way_config(
                    iid(),
                    SelectionMechanism::Roy {
                        info: vec![EpsPost, Nu],
                        cost: CostLaw { mean: 1.0, sd: 0.0, nu_loading: 1.0, eta1_loading: 0.0 },
                    },
                )
            },
            Conditioning::None,
            Positive,
        ),
        "MAJ-FE" => (
            "majority vote of members selecting on their fixed effects",
            SimConfig {
                n: 4_000,
                ..two_way_config(iid(), SelectionMechanism::MajorityVote { member: Box::new(fe(0.0, 0.0)), m: 5 })
            },
            Conditioning::None,
            Zero,
        ),
        "MAJ-AR1" => (
            "majority vote of members selecting on low pre-period shocks, AR(1) shocks",
            SimConfig {
                n: 4_000,
                ..two_way_config(
                    ar1(),
                    SelectionMechanism::MajorityVote { member: Box::new(pre_shock(0.0, 0.0, 0.0)), m: 5 },
                )
            },
            Conditioning::None,
            Positive,
        ),
        "SC1-X" => (
            "symmetric selection given covariates, exchangeable shocks, conditional on the covariate path",
            covariate_config(exchangeable(), symmetric(1.0, 1.5)),
            Conditioning::CovariateTrajectory,
            Zero,
        ),
        "SC2-X" => (
            "selection on covariates, α and the pre-period shock, martingale shocks, conditional on the covariate path",
            covariate_config(martingale(), pre_shock(1.0, 1.0, 1.0)),
            Conditioning::CovariateTrajectory,
            Zero,
        ),
        "SC3-X" => (
            "fixed-effect selection with covariates, conditional on the covariate path",
            covariate_config(ar1(), fe(0.5, 1.0)),
            Conditioning::CovariateTrajectory,
            Zero,
        ),
        "PTX-UNCONDITIONAL" => (
            "the SC3-X process compared without conditioning on covariates",
            covariate_config(ar1(), fe(0.5, 1.0)),
            Conditioning::None,
            Negative,
        ),
        "RC-TIMEVARYING" => (
            "random coefficient on α that changes over time, fixed-effect selection, conditional on the covariate path",
            SimConfig {
                outcome: OutcomeModel::RandomCoefficient {
                    lambda: LAMBDA.to_vec(),
                    gamma: vec![
                        CovFn::Affine { a: 1.0, b: 0.25 },
                        CovFn::Affine { a: 1.0, b: 0.25 },
                        CovFn::Affine { a: 1.0, b: 0.75 },
                    ],
                },
                covariate: Some(three_point_covariate(0.2)),
                ..two_way_config(iid(), fe(0.0, 0.0))
            },
            Conditioning::CovariateTrajectory,
            Negative,
        ),
        "SC1-NSP" => (
            "nonseparable model, symmetric selection, exchangeable shocks, X^μ-stable subpopulation",
            nsp_config(StructFn::Quadratic { scale: 0.5 }, exchangeable(), symmetric(1.0, 1.5), 0.0),
            Conditioning::NspSubpopulation,
            Zero,
        ),
        "SC2-NSP" => (
            "nonseparable model, selection on α^μ and the pre-period shock, martingale shocks",
            nsp_config(StructFn::Interaction { scale: 0.5 }, martingale(), pre_shock(1.0, 1.0, 1.0), 0.0),
            Conditioning::NspSubpopulation,
            Zero,
        ),
        "SC3-NSP" => (
            "nonseparable model, fixed-effect selection, i.i.d. shocks",
            nsp_config(StructFn::Quadratic { scale: 0.5 }, iid(), fe(0.5, 1.0), 0.0),
            Conditioning::NspSubpopulation,
            Zero,
        ),
        "TH-CRE" => (
            "shocks time-homogeneous given α^μ, α^λ depending on covariates only",
            nsp_config(
                StructFn::Quadratic { scale: 0.5 },
                ErrorProcess::TimeHomogeneousGivenAlpha { law: HomogeneousLaw::AlphaScale { k: 0.5 }, sigma: 1.0 },
                fe(0.5, 1.0),
                0.0,
            ),
            Conditioning::NspSubpopulation,
            Zero,
        ),
        "NSP-LAMBDA-SEL" => (
            "as TH-CRE but α^λ correlated with the selected α^μ",
            nsp_config(
                StructFn::Quadratic { scale: 0.5 },
                ErrorProcess::TimeHomogeneousGivenAlpha { law: HomogeneousLaw::AlphaScale { k: 0.5 }, sigma: 1.0 },
                fe(0.5, 1.0),
                0.8,
            ),
            Conditioning::NspSubpopulation,
            Negative,
        ),
        "MP-FE" => (
            "staggered adoption ordered by α with i.i.d. shocks",
            staggered_config(iid(), cohorts(1.0, 0.0, [-0.8, -0.2, 0.4])),
            Conditioning::None,
            Zero,
        ),
        "MP-IF-MARTINGALE" => (
            "staggered adoption ordered by α and the first-period shock, martingale shocks",
            staggered_config(martingale(), cohorts(1.0, 1.0, [-1.2, -0.3, 0.6])),
            Conditioning::None,
            Zero,
        ),
        "MP-AR1" => (
            "staggered adoption by low first-period shocks, AR(1) shocks",
            staggered_config(ar1(), cohorts(0.0, 1.0, [-0.9, -0.25, 0.45])),
            Conditioning::None,
            Positive,
        ),
        other => return Err(Error::Catalog(other.to_string())),
    };
    let use_latents = config.outcome.is_separable()
        && !config.is_staggered()
        && conditioning == Conditioning::None;
    Ok(Scenario {
        id: id.to_string(),
        summary: summary.to_string(),
        config,
        conditioning,
        use_latents,
        expected,
        reps: DEFAULT_REPS,
    })
}

/// Gap of one simulated panel plus its components when available.
pub fn replicate(scenario: &Scenario, seed: u64, rep: u64) -> Result<(f64, Option<(f64, f64)>)> {
    let mut rng = substream(seed, rep);
    let latent = simulate_with_rng(&scenario.config, &mut rng)?;
    let m = if scenario.config.is_staggered() {
        measure_staggered_gap(&latent)?
    } else if scenario.conditioning == Conditioning::None {
        measure_pt_gap(&latent, scenario.use_latents)?
    } else {
        measure_conditional_gap(&latent, scenario.conditioning)?
    };
    Ok((m.delta_post, m.components))
}

/// Runs `reps` independent panels of the scenario in parallel and compares the
/// average gap with the predicted verdict. `None` keeps the registered size.
pub fn run_scenario(
    id: &str,
    n: Option<usize>,
    reps: Option<usize>,
    seed: u64,
) -> Result<SimVerdict> {
    let mut s = scenario(id)?;
    if let Some(n) = n {
        s.config.n = n;
    }
    if let Some(r) = reps {
        s.reps = r;
    }
    run(&s, seed)
}

pub fn run(scenario: &Scenario, seed: u64) -> Result<SimVerdict> {
    if scenario.reps < 2 {
        return Err(Error::Argument(
            "at least two replications are needed for a Monte Carlo SE".into(),
        ));
    }
    let key = keyed_seed(seed, &scenario.id);
    let draws = (0..scenario.reps as u64)
        .into_par_iter()
        .map(|r| replicate(scenario, key, r))
        .collect::<Result<Vec<_>>>()?;
    let deltas: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let (delta, mcse) = mean_and_mcse(&deltas);
    let component = |f: fn(&(f64, f64)) -> f64| -> Option<f64> {
        let values: Option<Vec<f64>> = draws.iter().map(|d| d.1.as_ref().map(f)).collect();
        values.map(|v| mean_and_mcse(&v).0)
    };
    Ok(SimVerdict {
        id: scenario.id.clone(),
        delta_post: delta,
        mcse,
        deltapost1: component(|c| c.0),
        deltapost2: component(|c| c.1),
        expected: scenario.expected,
        pass: scenario.expected.judge(delta, mcse),
        n: scenario.config.n,
        reps: scenario.reps,
        seed,
    })
}
