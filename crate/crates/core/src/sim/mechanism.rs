//! Selection mechanisms mapping a unit's latents to its treatment decision.

use serde::{Deserialize, Serialize};

use super::gaussian::LinearPredictor;
use super::model::{AlphaLaw, CostLaw, ErrorProcess, OutcomeModel, TreatmentEffect};
use crate::error::{Error, Result};

/// Latent variables a unit may know when it decides. `EpsPre`/`EtaPre` refer to
/// the last untreated period and `EpsPost`/`EtaPost` to the treated one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InfoTag {
    Alpha,
    EpsPre,
    EpsPost,
    Nu,
    EtaPre,
    EtaPost,
}

/// `s(e)` in a symmetric index.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SymFn {
    Linear { b: f64 },
    Square { b: f64 },
}

impl SymFn {
    pub fn eval(&self, e: f64) -> f64 {
        match *self {
            SymFn::Linear { b } => b * e,
            SymFn::Square { b } => b * e * e,
        }
    }
}

/// Two-group selection rules. In nonseparable models `α` and `ε` denote the
/// time-invariant components `α^μ`, `ε^μ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionMechanism {
    /// `G = 1{U < p}`.
    Random { p: f64 },
    /// `G = 1{α + x_loading·x̄ + nu_sd·ν ≤ c}`.
    FixedEffectThreshold {
        c: f64,
        #[serde(default)]
        x_loading: f64,
        #[serde(default)]
        nu_sd: f64,
    },
    /// `G = 1{alpha·α + eps_pre·ε_pre + x_loading·x̄ + nu_sd·ν ≤ c}`.
    PreShockThreshold {
        alpha: f64,
        eps_pre: f64,
        #[serde(default)]
        x_loading: f64,
        #[serde(default)]
        nu_sd: f64,
        c: f64,
    },
    /// `G = 1{E[Y_pre(0) + β·Y_post(0) | ω] ≤ E[C | ω]}`.
    AshenfelterThreshold {
        beta: f64,
        info: Vec<InfoTag>,
        cost: CostLaw,
    },
    /// `G = 1{E[Y_post(1) − Y_post(0) | ω] ≥ E[C | ω]}`.
    Roy { info: Vec<InfoTag>, cost: CostLaw },
    /// `G = 1{h·α + s(ε_pre) + s(ε_post) + x_loading·x̄ + nu_sd·ν > c}`.
    SymmetricIndexThreshold {
        h: f64,
        s: SymFn,
        #[serde(default)]
        x_loading: f64,
        #[serde(default)]
        nu_sd: f64,
        c: f64,
    },
    /// `G = 1{ν > c}·1{E[ΔẎ(0) | ω] ≤ 0}`.
    NecessitySign { info: Vec<InfoTag>, c: f64 },
    /// Aggregate of `m` members deciding by `G = 1{share of member votes ≥ 1/2}`.
    MajorityVote {
        member: Box<SelectionMechanism>,
        m: usize,
    },
}

/// Staggered adoption: score `s = alpha·α + eps_first·ε_1 + x_loading·x̄ + nu_sd·ν`;
/// the unit adopts in the `k`-th period after the first, where `k` is the first
/// cutpoint with `s ≤ cutpoints[k−1]`, and never adopts otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortAssignment {
    pub alpha: f64,
    pub eps_first: f64,
    #[serde(default)]
    pub x_loading: f64,
    #[serde(default)]
    pub nu_sd: f64,
    pub cutpoints: Vec<f64>,
}

impl CohortAssignment {
    pub(crate) fn validate(&self, periods: usize) -> Result<()> {
        if self.cutpoints.is_empty() || self.cutpoints.len() >= periods {
            return Err(Error::Config(format!(
                "need between 1 and {} cutpoints",
                periods - 1
            )));
        }
        if self.cutpoints.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Config(
                "cutpoints must be strictly increasing".into(),
            ));
        }
        Ok(())
    }

    /// Index (into the period list) of the adoption period, or `None` for never.
    pub fn cohort_index(&self, draw: &UnitDraw) -> Option<usize> {
        let s = self.alpha * draw.alpha
            + self.eps_first * draw.eps[0]
            + self.x_loading * draw.x_mean()
            + self.nu_sd * draw.nu;
        self.cutpoints.iter().position(|&c| s <= c).map(|k| k + 1)
    }
}

/// One unit's latent draws; vectors have one entry per period.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitDraw {
    pub x: Vec<f64>,
    pub x_lambda: Vec<f64>,
    pub alpha: f64,
    pub alpha_lambda: f64,
    pub eps: Vec<f64>,
    pub eps_lambda: Vec<f64>,
    pub nu: f64,
    pub eta: Vec<f64>,
    pub kappa: f64,
    pub uniform: f64,
}

impl UnitDraw {
    pub fn zeros(periods: usize) -> Self {
        Self {
            x: vec![0.0; periods],
            x_lambda: vec![0.0; periods],
            alpha: 0.0,
            alpha_lambda: 0.0,
            eps: vec![0.0; periods],
            eps_lambda: vec![0.0; periods],
            nu: 0.0,
            eta: vec![0.0; periods],
            kappa: 0.0,
            uniform: 0.0,
        }
    }

    pub fn x_mean(&self) -> f64 {
        self.x.iter().sum::<f64>() / self.x.len() as f64
    }
}

/// The parts of a configuration a decision rule may need.
#[derive(Debug, Clone, Copy)]
pub struct SelectionContext<'a> {
    pub outcome: &'a OutcomeModel,
    pub errors: &'a ErrorProcess,
    pub alpha: &'a AlphaLaw,
    pub effect: &'a TreatmentEffect,
    pub periods: usize,
    pub has_covariate: bool,
}

impl SelectionContext<'_> {
    /// Covariance of `z = (α, ε_1, …, ε_T)` given the covariate path.
    fn latent_covariance(&self) -> Vec<f64> {
        let t = self.periods;
        let d = t + 1;
        let sd2 = self.alpha.sd * self.alpha.sd;
        let k = self.errors.alpha_shift();
        let mean_abs = (self.alpha.mean.powi(2) + sd2).sqrt();
        let base = self.errors.covariance(t, mean_abs);
        let mut cov = vec![0.0; d * d];
        cov[0] = sd2;
        for s in 0..t {
            cov[s + 1] = k * sd2;
            cov[(s + 1) * d] = k * sd2;
            for u in 0..t {
                cov[(s + 1) * d + u + 1] = base[s * t + u] + k * k * sd2;
            }
        }
        cov
    }

    fn latent_mean(&self, draw: &UnitDraw, out: &mut [f64]) {
        let m_alpha = self.alpha.conditional_mean(draw.x[0]);
        let k = self.errors.alpha_shift();
        out[0] = m_alpha;
        out[1..].iter_mut().for_each(|m| *m = k * m_alpha);
    }

    fn z_index(&self, tag: InfoTag) -> Option<usize> {
        match tag {
            InfoTag::Alpha => Some(0),
            InfoTag::EpsPre => Some(self.periods - 1),
            InfoTag::EpsPost => Some(self.periods),
            _ => None,
        }
    }
}

/// A mechanism with its linear predictors precomputed.
#[derive(Debug, Clone)]
pub struct PreparedMechanism<'a> {
    mechanism: &'a SelectionMechanism,
    ctx: SelectionContext<'a>,
    predictor: Option<LinearPredictor>,
    member: Option<Box<PreparedMechanism<'a>>>,
}

/// Tolerance for the sign test of a predicted change that is zero in exact arithmetic.
const SIGN_TOLERANCE: f64 = 1e-10;

impl<'a> PreparedMechanism<'a> {
    pub fn new(mechanism: &'a SelectionMechanism, ctx: SelectionContext<'a>) -> Result<Self> {
        let needs_model = matches!(
            mechanism,
            SelectionMechanism::AshenfelterThreshold { .. }
                | SelectionMechanism::Roy { .. }
                | SelectionMechanism::NecessitySign { .. }
        );
        if needs_model && !ctx.outcome.is_separable() {
            return Err(Error::Config(
                "expectation-based mechanisms require a separable outcome model".into(),
            ));
        }
        let mut predictor = None;
        let mut member = None;
        match mechanism {
            SelectionMechanism::Random { p } if !(*p > 0.0 && *p < 1.0) => {
                return Err(Error::Config(format!(
                    "random assignment probability {p} must lie in (0, 1)"
                )));
            }
            SelectionMechanism::AshenfelterThreshold { beta, info, .. } => {
                if !(0.0..=1.0).contains(beta) {
                    return Err(Error::Config("discount factor must lie in [0, 1]".into()));
                }
                predictor = Some(Self::predictor(&ctx, info)?);
            }
            SelectionMechanism::Roy { info, .. } => predictor = Some(Self::predictor(&ctx, info)?),
            SelectionMechanism::NecessitySign { info, .. } => {
                if ctx.has_covariate {
                    return Err(Error::Config(
                        "the necessity mechanism is defined for models without covariates".into(),
                    ));
                }
                predictor = Some(Self::predictor(&ctx, info)?);
            }
            SelectionMechanism::MajorityVote { member: inner, m } => {
                if *m == 0 {
                    return Err(Error::Config(
                        "majority vote needs at least one member".into(),
                    ));
                }
                if matches!(**inner, SelectionMechanism::MajorityVote { .. }) {
                    return Err(Error::Config(
                        "nested majority votes are not supported".into(),
                    ));
                }
                member = Some(Box::new(PreparedMechanism::new(inner, ctx)?));
            }
            _ => {}
        }
        Ok(Self {
            mechanism,
            ctx,
            predictor,
            member,
        })
    }

    fn predictor(ctx: &SelectionContext<'_>, info: &[InfoTag]) -> Result<LinearPredictor> {
        let known: Vec<usize> = info.iter().filter_map(|&t| ctx.z_index(t)).collect();
        LinearPredictor::new(&ctx.latent_covariance(), ctx.periods + 1, &known)
    }

    pub fn mechanism(&self) -> &SelectionMechanism {
        self.mechanism
    }

    /// Members per aggregate unit (1 unless the mechanism is a vote).
    pub fn members(&self) -> usize {
        match self.mechanism {
            SelectionMechanism::MajorityVote { m, .. } => *m,
            _ => 1,
        }
    }

    /// Decision of a single unit. For a vote, the decision of the aggregate
    /// formed by `draws`.
    pub fn decide(&self, draws: &[UnitDraw]) -> bool {
        if let Some(member) = &self.member {
            return majority(draws.iter().map(|d| member.decide(std::slice::from_ref(d))));
        }
        let d = &draws[0];
        match *self.mechanism {
            SelectionMechanism::Random { p } => d.uniform < p,
            SelectionMechanism::FixedEffectThreshold {
                c,
                x_loading,
                nu_sd,
            } => d.alpha + x_loading * d.x_mean() + nu_sd * d.nu <= c,
            SelectionMechanism::PreShockThreshold {
                alpha,
                eps_pre,
                x_loading,
                nu_sd,
                c,
            } => {
                let pre = d.eps[self.ctx.periods - 2];
                alpha * d.alpha + eps_pre * pre + x_loading * d.x_mean() + nu_sd * d.nu <= c
            }
            SelectionMechanism::SymmetricIndexThreshold {
                h,
                s,
                x_loading,
                nu_sd,
                c,
            } => {
                let t = self.ctx.periods;
                h * d.alpha
                    + s.eval(d.eps[t - 2])
                    + s.eval(d.eps[t - 1])
                    + x_loading * d.x_mean()
                    + nu_sd * d.nu
                    > c
            }
            SelectionMechanism::AshenfelterThreshold {
                beta,
                ref info,
                cost,
            } => {
                let t = self.ctx.periods;
                let value = self.expected_y0(d, t - 2) + beta * self.expected_y0(d, t - 1);
                value <= expected_cost(&cost, info, d, t)
            }
            SelectionMechanism::Roy { ref info, cost } => {
                let t = self.ctx.periods;
                let gain = self.expected_gain(d, info);
                gain >= expected_cost(&cost, info, d, t)
            }
            SelectionMechanism::NecessitySign { c, .. } => {
                d.nu > c && self.expected_centered_change(d) <= SIGN_TOLERANCE
            }
            SelectionMechanism::MajorityVote { .. } => unreachable!("handled above"),
        }
    }

    fn predicted_latents(&self, d: &UnitDraw) -> (Vec<f64>, Vec<f64>) {
        let dim = self.ctx.periods + 1;
        let mut z = vec![0.0; dim];
        z[0] = d.alpha;
        z[1..].copy_from_slice(&d.eps);
        let mut m = vec![0.0; dim];
        self.ctx.latent_mean(d, &mut m);
        (z, m)
    }

    /// `E[Y_t(0) | ω, X]` for period index `t`.
    fn expected_y0(&self, d: &UnitDraw, t: usize) -> f64 {
        let p = self.predictor.as_ref().expect("prepared with a predictor");
        let (z, m) = self.predicted_latents(d);
        let (a, b) = self
            .ctx
            .outcome
            .loading(t, d.x[t])
            .expect("separable model");
        a * p.predict(0, &z, &m) + b + p.predict(t + 1, &z, &m)
    }

    fn expected_gain(&self, d: &UnitDraw, info: &[InfoTag]) -> f64 {
        let p = self.predictor.as_ref().expect("prepared with a predictor");
        let (z, m) = self.predicted_latents(d);
        let t = self.ctx.periods;
        let e = self.ctx.effect;
        let kappa = if info.contains(&InfoTag::EtaPost) {
            d.kappa
        } else {
            0.0
        };
        e.effect(p.predict(0, &z, &m), kappa, p.predict(t, &z, &m))
    }

    /// `E[ΔY(0) | ω] − E[ΔY(0)]` across the last two periods (no covariates).
    fn expected_centered_change(&self, d: &UnitDraw) -> f64 {
        let p = self.predictor.as_ref().expect("prepared with a predictor");
        let (z, m) = self.predicted_latents(d);
        let t = self.ctx.periods;
        let (a_pre, _) = self
            .ctx
            .outcome
            .loading(t - 2, 0.0)
            .expect("separable model");
        let (a_post, _) = self
            .ctx
            .outcome
            .loading(t - 1, 0.0)
            .expect("separable model");
        let alpha_dev = p.predict(0, &z, &m) - m[0];
        let eps_change = (p.predict(t, &z, &m) - m[t]) - (p.predict(t - 1, &z, &m) - m[t - 1]);
        (a_post - a_pre) * alpha_dev + eps_change
    }
}

fn expected_cost(cost: &CostLaw, info: &[InfoTag], d: &UnitDraw, periods: usize) -> f64 {
    let mut c = cost.mean;
    if info.contains(&InfoTag::Nu) {
        c += cost.nu_loading * d.nu;
    }
    if info.contains(&InfoTag::EtaPre) {
        c += cost.eta1_loading * d.eta[periods - 2];
    }
    if info.contains(&InfoTag::EtaPost) {
        c += cost.sd * d.eta[periods - 1];
    }
    c
}

/// `1{share of true votes ≥ 1/2}`; an empty vote is `false`.
pub fn majority<I: IntoIterator<Item = bool>>(votes: I) -> bool {
    let (yes, total) = votes
        .into_iter()
        .fold((0usize, 0usize), |(y, n), v| (y + v as usize, n + 1));
    total > 0 && 2 * yes >= total
}

/// Decision of an aggregate whose members have latents `members`, each voting
/// according to `member`.
pub fn majority_vote_select(
    member: &SelectionMechanism,
    members: &[UnitDraw],
    ctx: SelectionContext<'_>,
) -> Result<bool> {
    if members.is_empty() {
        return Err(Error::Config(
            "majority vote needs at least one member".into(),
        ));
    }
    let prepared = PreparedMechanism::new(member, ctx)?;
    Ok(majority(
        members
            .iter()
            .map(|d| prepared.decide(std::slice::from_ref(d))),
    ))
}
