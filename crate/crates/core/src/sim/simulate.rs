//! Drawing panels from a configuration.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::mechanism::{
    CohortAssignment, PreparedMechanism, SelectionContext, SelectionMechanism, UnitDraw,
};
use super::model::{
    validate_alpha, AlphaLaw, CovariateLaw, ErrorProcess, OutcomeModel, TreatmentEffect,
};
use crate::did::TwoPeriodSample;
use crate::error::{Error, Result};
use crate::panel::{GroupLabel, PanelDataset, UnitRecord};
use crate::rng::{substream, SimRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Assignment {
    /// Treatment in the last period for the selected units.
    Binary {
        mechanism: SelectionMechanism,
    },
    Staggered {
        cohorts: CohortAssignment,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub n: usize,
    pub periods: usize,
    pub outcome: OutcomeModel,
    pub errors: ErrorProcess,
    #[serde(default = "AlphaLaw::standard")]
    pub alpha: AlphaLaw,
    /// Law of `X` (of `X^μ` in nonseparable models); `X ≡ 0` when absent.
    #[serde(default)]
    pub covariate: Option<CovariateLaw>,
    pub assignment: Assignment,
    pub effect: TreatmentEffect,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.periods < 2 {
            return Err(Error::Config("need at least two periods".into()));
        }
        if self.n < 2 {
            return Err(Error::Config("need at least two units".into()));
        }
        self.outcome.validate(self.periods)?;
        self.errors.validate(self.periods)?;
        validate_alpha(&self.alpha)?;
        if let Some(law) = &self.covariate {
            law.validate()?;
        }
        match &self.assignment {
            Assignment::Binary { .. } => {
                self.prepare()?;
            }
            Assignment::Staggered { cohorts } => cohorts.validate(self.periods)?,
        }
        Ok(())
    }

    pub fn is_staggered(&self) -> bool {
        matches!(self.assignment, Assignment::Staggered { .. })
    }

    pub fn context(&self) -> SelectionContext<'_> {
        SelectionContext {
            outcome: &self.outcome,
            errors: &self.errors,
            alpha: &self.alpha,
            effect: &self.effect,
            periods: self.periods,
            has_covariate: self.covariate.is_some(),
        }
    }

    fn prepare(&self) -> Result<Option<PreparedMechanism<'_>>> {
        match &self.assignment {
            Assignment::Binary { mechanism } => {
                Ok(Some(PreparedMechanism::new(mechanism, self.context())?))
            }
            Assignment::Staggered { .. } => Ok(None),
        }
    }

    /// Period labels `1, …, T`.
    pub fn period_labels(&self) -> Vec<i64> {
        (1..=self.periods as i64).collect()
    }

    /// Draws all latents of one unit into `draw`.
    pub fn draw_unit<R: Rng + ?Sized>(&self, rng: &mut R, draw: &mut UnitDraw) {
        match &self.covariate {
            Some(law) => law.draw(rng, &mut draw.x),
            None => draw.x.iter_mut().for_each(|x| *x = 0.0),
        }
        let nsp = match &self.outcome {
            OutcomeModel::NonseparableMuLambda { time_varying, .. } => Some(time_varying),
            _ => None,
        };
        if let Some(tv) = nsp {
            tv.covariate.draw(rng, &mut draw.x_lambda);
        }
        let z: f64 = rng.sample(StandardNormal);
        draw.alpha = self.alpha.conditional_mean(draw.x[0]) + self.alpha.sd * z;
        if let Some(tv) = nsp {
            let z: f64 = rng.sample(StandardNormal);
            draw.alpha_lambda = tv.alpha.corr * draw.alpha
                + tv.alpha.x_loading * draw.x_lambda[0]
                + tv.alpha.sd * z;
        }
        self.errors.draw(draw.alpha, rng, &mut draw.eps);
        if let Some(tv) = nsp {
            tv.errors.draw(draw.alpha_lambda, rng, &mut draw.eps_lambda);
        }
        draw.nu = rng.sample(StandardNormal);
        draw.eta
            .iter_mut()
            .for_each(|e| *e = rng.sample(StandardNormal));
        draw.kappa = rng.sample(StandardNormal);
        draw.uniform = rng.random();
    }

    /// `Y_t(0)` at period index `t`.
    pub fn untreated_outcome(&self, d: &UnitDraw, t: usize) -> f64 {
        match &self.outcome {
            OutcomeModel::NonseparableMuLambda { mu, time_varying } => {
                mu.eval(d.x[t], d.alpha, d.eps[t])
                    + time_varying.lambda[t].eval(d.x_lambda[t], d.alpha_lambda, d.eps_lambda[t])
            }
            model => {
                let (a, b) = model.loading(t, d.x[t]).expect("separable model");
                a * d.alpha + b + d.eps[t]
            }
        }
    }

    /// `E[Y_T(0) | α, ε_1, …, ε_{T−1}, X]` for separable models.
    pub fn post_conditional_mean(&self, d: &UnitDraw) -> Option<f64> {
        let t = self.periods - 1;
        let (a, b) = self.outcome.loading(t, d.x[t])?;
        Some(a * d.alpha + b + self.errors.last_mean_given_past(d.alpha, &d.eps[..t]))
    }
}

/// Simulated units with their latents. Per-period arrays are unit-major with
/// `periods.len()` entries per unit. For aggregate (voting) units every latent
/// is the mean over members.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentPanel {
    pub periods: Vec<i64>,
    pub groups: Vec<GroupLabel>,
    pub alpha: Vec<f64>,
    pub alpha_lambda: Vec<f64>,
    pub nu: Vec<f64>,
    pub kappa: Vec<f64>,
    pub x: Vec<f64>,
    pub x_lambda: Vec<f64>,
    pub eps: Vec<f64>,
    pub eps_lambda: Vec<f64>,
    pub eta: Vec<f64>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    /// `E[Y_T(0) | α, ε_1, …, ε_{T−1}, X]`, available for separable binary designs.
    pub post_mean: Option<Vec<f64>>,
    pub has_covariate: bool,
    pub nonseparable: bool,
}

impl LatentPanel {
    pub fn n(&self) -> usize {
        self.groups.len()
    }

    pub fn t(&self) -> usize {
        self.periods.len()
    }

    pub fn at(&self, values: &[f64], i: usize, t: usize) -> f64 {
        values[i * self.t() + t]
    }

    pub fn is_staggered(&self) -> bool {
        self.groups
            .iter()
            .any(|g| matches!(g, GroupLabel::Cohort(_) | GroupLabel::Never))
    }

    pub fn treated_at(&self, i: usize, t: usize) -> bool {
        match self.groups[i] {
            GroupLabel::Binary(b) => b && t + 1 == self.t(),
            GroupLabel::Cohort(g) => self.periods[t] >= g,
            GroupLabel::Never => false,
        }
    }

    pub fn observed(&self, i: usize, t: usize) -> f64 {
        if self.treated_at(i, t) {
            self.at(&self.y1, i, t)
        } else {
            self.at(&self.y0, i, t)
        }
    }

    /// Treated indicator for two-group panels.
    pub fn treated_mask(&self) -> Vec<bool> {
        self.groups
            .iter()
            .map(|g| matches!(g, GroupLabel::Binary(true)))
            .collect()
    }

    pub fn treated_share(&self) -> f64 {
        let treated = self
            .groups
            .iter()
            .filter(|g| matches!(g, GroupLabel::Binary(true) | GroupLabel::Cohort(_)))
            .count();
        treated as f64 / self.n() as f64
    }

    /// Average of `Y_t(1) − Y_t(0)` over treated unit-periods.
    pub fn true_att(&self) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for i in 0..self.n() {
            for t in 0..self.t() {
                if self.treated_at(i, t) {
                    sum += self.at(&self.y1, i, t) - self.at(&self.y0, i, t);
                    count += 1;
                }
            }
        }
        sum / count as f64
    }

    /// `ATT(g, t)` of the realized cohort `g` at period label `t`.
    pub fn true_att_gt(&self, g: i64, t: i64) -> Option<f64> {
        let ti = self.periods.iter().position(|&p| p == t)?;
        let members: Vec<usize> = (0..self.n())
            .filter(|&i| self.groups[i] == GroupLabel::Cohort(g))
            .collect();
        if members.is_empty() {
            return None;
        }
        let sum: f64 = members
            .iter()
            .map(|&i| self.at(&self.y1, i, ti) - self.at(&self.y0, i, ti))
            .sum();
        Some(if t >= g {
            sum / members.len() as f64
        } else {
            0.0
        })
    }

    /// Observed outcomes of two period indices for two-group estimation.
    pub fn two_period(&self, pre: usize, post: usize) -> Result<TwoPeriodSample> {
        let y_pre = (0..self.n()).map(|i| self.observed(i, pre)).collect();
        let y_post = (0..self.n()).map(|i| self.observed(i, post)).collect();
        TwoPeriodSample::new(y_pre, y_post, self.treated_mask(), None)
    }

    /// The observable panel. With a covariate the first-period value is kept
    /// as the time-invariant covariate `x1`.
    pub fn dataset(&self) -> Result<PanelDataset> {
        let names = if self.has_covariate {
            vec!["x1".to_string()]
        } else {
            vec![]
        };
        let units = (0..self.n())
            .map(|i| UnitRecord {
                id: format!("u{i}"),
                group: self.groups[i],
                outcomes: (0..self.t()).map(|t| self.observed(i, t)).collect(),
                covariates: if self.has_covariate {
                    vec![self.at(&self.x, i, 0)]
                } else {
                    vec![]
                },
            })
            .collect();
        PanelDataset::new(self.periods.clone(), names, units)
    }
}

/// Draws a panel; `seed` fixes every latent.
pub fn simulate_panel(config: &SimConfig, seed: u64) -> Result<LatentPanel> {
    simulate_with_rng(config, &mut substream(seed, 0))
}

pub fn simulate_with_rng(config: &SimConfig, rng: &mut SimRng) -> Result<LatentPanel> {
    config.validate()?;
    let n = config.n;
    let t = config.periods;
    let prepared = config.prepare()?;
    let members = prepared.as_ref().map_or(1, |p| p.members());
    let separable_binary = config.outcome.is_separable() && !config.is_staggered();

    let mut panel = LatentPanel {
        periods: config.period_labels(),
        groups: Vec::with_capacity(n),
        alpha: vec![0.0; n],
        alpha_lambda: vec![0.0; n],
        nu: vec![0.0; n],
        kappa: vec![0.0; n],
        x: vec![0.0; n * t],
        x_lambda: vec![0.0; n * t],
        eps: vec![0.0; n * t],
        eps_lambda: vec![0.0; n * t],
        eta: vec![0.0; n * t],
        y0: vec![0.0; n * t],
        y1: vec![0.0; n * t],
        post_mean: separable_binary.then(|| vec![0.0; n]),
        has_covariate: config.covariate.is_some(),
        nonseparable: !config.outcome.is_separable(),
    };
    let mut draws: Vec<UnitDraw> = (0..members).map(|_| UnitDraw::zeros(t)).collect();
    let w = 1.0 / members as f64;

    for i in 0..n {
        for d in draws.iter_mut() {
            config.draw_unit(rng, d);
        }
        let group = match (&prepared, &config.assignment) {
            (Some(p), _) => GroupLabel::Binary(p.decide(&draws)),
            (None, Assignment::Staggered { cohorts }) => match cohorts.cohort_index(&draws[0]) {
                Some(k) => GroupLabel::Cohort(panel.periods[k]),
                None => GroupLabel::Never,
            },
            (None, Assignment::Binary { .. }) => {
                unreachable!("binary assignment is always prepared")
            }
        };
        panel.groups.push(group);
        let row = i * t;
        for d in &draws {
            panel.alpha[i] += w * d.alpha;
            panel.alpha_lambda[i] += w * d.alpha_lambda;
            panel.nu[i] += w * d.nu;
            panel.kappa[i] += w * d.kappa;
            for s in 0..t {
                let y0 = config.untreated_outcome(d, s);
                let gain = config.effect.effect(d.alpha, d.kappa, d.eps[s]);
                panel.x[row + s] += w * d.x[s];
                panel.x_lambda[row + s] += w * d.x_lambda[s];
                panel.eps[row + s] += w * d.eps[s];
                panel.eps_lambda[row + s] += w * d.eps_lambda[s];
                panel.eta[row + s] += w * d.eta[s];
                panel.y0[row + s] += w * y0;
                panel.y1[row + s] += w * (y0 + gain);
            }
            if let Some(pm) = panel.post_mean.as_mut() {
                pm[i] += w * config.post_conditional_mean(d).expect("separable model");
            }
        }
    }

    let treated = panel
        .groups
        .iter()
        .filter(|g| matches!(g, GroupLabel::Binary(true) | GroupLabel::Cohort(_)))
        .count();
    if treated == 0 || treated == n {
        return Err(Error::Degeneracy {
            share: treated as f64 / n as f64,
        });
    }
    Ok(panel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::model::HomogeneousLaw;

    fn two_way(mechanism: SelectionMechanism) -> SimConfig {
        SimConfig {
            n: 500,
            periods: 3,
            outcome: OutcomeModel::TwoWay {
                lambda: vec![0.0, 1.0, 2.0],
            },
            errors: ErrorProcess::IidNormal { sigma: 1.0 },
            alpha: AlphaLaw::standard(),
            covariate: None,
            assignment: Assignment::Binary { mechanism },
            effect: TreatmentEffect::constant(2.0),
        }
    }

    #[test]
    fn reproducible_and_consistent() {
        let cfg = two_way(SelectionMechanism::Random { p: 0.5 });
        let a = simulate_panel(&cfg, 7).unwrap();
        let b = simulate_panel(&cfg, 7).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, simulate_panel(&cfg, 8).unwrap());
        for i in 0..a.n() {
            for t in 0..a.t() {
                let expect = if a.treated_at(i, t) {
                    a.at(&a.y1, i, t)
                } else {
                    a.at(&a.y0, i, t)
                };
                assert_eq!(a.observed(i, t), expect);
            }
        }
        assert!((a.true_att() - 2.0).abs() < 1e-12);
        let ds = a.dataset().unwrap();
        assert_eq!(ds.n_units(), 500);
    }

    #[test]
    fn degenerate_selection_is_reported() {
        let cfg = two_way(SelectionMechanism::FixedEffectThreshold {
            c: 100.0,
            x_loading: 0.0,
            nu_sd: 0.0,
        });
        match simulate_panel(&cfg, 1) {
            Err(Error::Degeneracy { share }) => assert_eq!(share, 1.0),
            other => panic!("expected degeneracy, got {other:?}"),
        }
    }

    #[test]
    fn config_errors() {
        let mut cfg = two_way(SelectionMechanism::Random { p: 1.0 });
        assert!(matches!(simulate_panel(&cfg, 1), Err(Error::Config(_))));
        cfg.assignment = Assignment::Binary {
            mechanism: SelectionMechanism::Random { p: 0.5 },
        };
        cfg.periods = 4;
        assert!(matches!(simulate_panel(&cfg, 1), Err(Error::Config(_))));
        let mut cfg = two_way(SelectionMechanism::Random { p: 0.5 });
        cfg.errors = ErrorProcess::TimeHomogeneousGivenAlpha {
            law: HomogeneousLaw::AlphaScale { k: 0.5 },
            sigma: 0.0,
        };
        assert!(matches!(simulate_panel(&cfg, 1), Err(Error::Config(_))));
    }

    #[test]
    fn config_round_trips_through_toml() {
        let cfg = two_way(SelectionMechanism::MajorityVote {
            member: Box::new(SelectionMechanism::FixedEffectThreshold {
                c: 0.0,
                x_loading: 0.0,
                nu_sd: 1.0,
            }),
            m: 5,
        });
        let text = toml::to_string(&cfg).unwrap();
        let back: SimConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn staggered_cohorts() {
        let mut cfg = two_way(SelectionMechanism::Random { p: 0.5 });
        cfg.periods = 4;
        cfg.outcome = OutcomeModel::TwoWay {
            lambda: vec![0.0; 4],
        };
        cfg.assignment = Assignment::Staggered {
            cohorts: CohortAssignment {
                alpha: 1.0,
                eps_first: 0.0,
                x_loading: 0.0,
                nu_sd: 0.0,
                cutpoints: vec![-0.5, 0.0, 0.5],
            },
        };
        let p = simulate_panel(&cfg, 2).unwrap();
        assert!(p.is_staggered() && p.post_mean.is_none());
        for g in [2, 3, 4] {
            assert!((p.true_att_gt(g, 4).unwrap() - 2.0).abs() < 1e-12);
        }
        let ds = p.dataset().unwrap();
        assert_eq!(ds.cohorts(), vec![2, 3, 4]);
    }
}
