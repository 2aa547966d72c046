//! Outcome models, error processes and the laws of the latent variables.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Function of a scalar covariate, used for `γ_t(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovFn {
    Identity,
    Affine { a: f64, b: f64 },
    Quadratic { a: f64, b: f64, c: f64 },
}

impl CovFn {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            CovFn::Identity => x,
            CovFn::Affine { a, b } => a + b * x,
            CovFn::Quadratic { a, b, c } => a + b * x + c * x * x,
        }
    }

    pub fn constant(a: f64) -> Self {
        CovFn::Affine { a, b: 0.0 }
    }
}

/// Structural function `f(x, a, e)` of a covariate, a unit effect and a shock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StructFn {
    /// `x + a + e`
    Additive,
    /// `c0 + cx·x + ca·a + ce·e`
    Affine { c0: f64, cx: f64, ca: f64, ce: f64 },
    /// `scale·(x + a + e)²`
    Quadratic { scale: f64 },
    /// `(1 + scale·x)·a + e`
    Interaction { scale: f64 },
}

impl StructFn {
    pub fn eval(&self, x: f64, a: f64, e: f64) -> f64 {
        match *self {
            StructFn::Additive => x + a + e,
            StructFn::Affine { c0, cx, ca, ce } => c0 + cx * x + ca * a + ce * e,
            StructFn::Quadratic { scale } => {
                let s = x + a + e;
                scale * s * s
            }
            StructFn::Interaction { scale } => (1.0 + scale * x) * a + e,
        }
    }
}

/// Laws of the unobservables entering the time-varying component of a
/// nonseparable model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaComponent {
    /// One structural function per period.
    pub lambda: Vec<StructFn>,
    pub alpha: AlphaLambdaLaw,
    pub errors: ErrorProcess,
    pub covariate: CovariateLaw,
}

/// Untreated potential outcome `Y_t(0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutcomeModel {
    /// `α + λ_t + ε_t`
    TwoWay { lambda: Vec<f64> },
    /// `α + λ_t + γ_t(X_t) + ε_t`
    CovariateSeparable { lambda: Vec<f64>, gamma: Vec<CovFn> },
    /// `α·γ_t(X_t) + λ_t + ε_t`
    RandomCoefficient { lambda: Vec<f64>, gamma: Vec<CovFn> },
    /// `μ(X^μ_t, α^μ, ε^μ_t) + λ_t(X^λ_t, α^λ, ε^λ_t)`; `α`, `ε` and the primary
    /// covariate of the configuration play the role of the μ-components.
    NonseparableMuLambda {
        mu: StructFn,
        time_varying: LambdaComponent,
    },
}

impl OutcomeModel {
    pub fn periods(&self) -> usize {
        match self {
            OutcomeModel::TwoWay { lambda }
            | OutcomeModel::CovariateSeparable { lambda, .. }
            | OutcomeModel::RandomCoefficient { lambda, .. } => lambda.len(),
            OutcomeModel::NonseparableMuLambda { time_varying, .. } => time_varying.lambda.len(),
        }
    }

    pub fn is_separable(&self) -> bool {
        !matches!(self, OutcomeModel::NonseparableMuLambda { .. })
    }

    pub fn uses_covariate(&self) -> bool {
        !matches!(self, OutcomeModel::TwoWay { .. })
    }

    /// For separable models `Y_t(0) = a·α + b + ε_t`; returns `(a, b)` at period
    /// index `t` and covariate value `x`.
    pub fn loading(&self, t: usize, x: f64) -> Option<(f64, f64)> {
        match self {
            OutcomeModel::TwoWay { lambda } => Some((1.0, lambda[t])),
            OutcomeModel::CovariateSeparable { lambda, gamma } => {
                Some((1.0, lambda[t] + gamma[t].eval(x)))
            }
            OutcomeModel::RandomCoefficient { lambda, gamma } => {
                Some((gamma[t].eval(x), lambda[t]))
            }
            OutcomeModel::NonseparableMuLambda { .. } => None,
        }
    }

    pub(crate) fn validate(&self, periods: usize) -> Result<()> {
        let lens_ok = match self {
            OutcomeModel::TwoWay { lambda } => lambda.len() == periods,
            OutcomeModel::CovariateSeparable { lambda, gamma }
            | OutcomeModel::RandomCoefficient { lambda, gamma } => {
                lambda.len() == periods && gamma.len() == periods
            }
            OutcomeModel::NonseparableMuLambda { time_varying, .. } => {
                time_varying.errors.validate(periods)?;
                time_varying.covariate.validate()?;
                time_varying.alpha.validate()?;
                time_varying.lambda.len() == periods
            }
        };
        if !lens_ok {
            return Err(Error::Config(format!(
                "outcome model needs one entry per period ({periods})"
            )));
        }
        Ok(())
    }
}

/// Conditional law of `ε_t` given `α` when the shocks are i.i.d. over time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HomogeneousLaw {
    /// `ε_t = k·α + σ·u_t`
    AlphaShift { k: f64 },
    /// `ε_t = σ·(1 + k·|α|)·u_t`
    AlphaScale { k: f64 },
}

/// Time-varying shocks `ε_1, …, ε_T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ErrorProcess {
    IidNormal {
        sigma: f64,
    },
    /// `ε_1 ~ N(0, σ₀²)`, `ε_t = ε_{t−1} + ζ_t`, `ζ_t ~ N(0, σ_ζ²)`.
    Martingale {
        sigma0: f64,
        sigma_zeta: f64,
    },
    /// `ε_t = ρ·ε_{t−1} + u_t`, `u_t ~ N(0, σ²)`, started from the stationary law
    /// (or `N(0, σ²)` when `|ρ| = 1`).
    Ar1 {
        rho: f64,
        sigma: f64,
    },
    /// Equicorrelated normal shocks with correlation `r ∈ [0, 1]`, independent of `α`.
    ExchangeableNormal {
        sigma: f64,
        r: f64,
    },
    TimeHomogeneousGivenAlpha {
        law: HomogeneousLaw,
        sigma: f64,
    },
}

impl ErrorProcess {
    pub(crate) fn validate(&self, _periods: usize) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("error process: {m}")));
        match *self {
            ErrorProcess::IidNormal { sigma }
            | ErrorProcess::TimeHomogeneousGivenAlpha { sigma, .. }
                if !(sigma > 0.0) =>
            {
                bad("sigma must be positive")
            }
            ErrorProcess::Martingale { sigma0, sigma_zeta }
                if !(sigma0 >= 0.0 && sigma_zeta > 0.0) =>
            {
                bad("sigma_zeta must be positive and sigma0 nonnegative")
            }
            ErrorProcess::Ar1 { rho, sigma } if !(rho.abs() <= 1.0 && sigma > 0.0) => {
                bad("need |rho| <= 1 and sigma > 0")
            }
            ErrorProcess::ExchangeableNormal { sigma, r }
                if !(sigma > 0.0 && (0.0..=1.0).contains(&r)) =>
            {
                bad("need sigma > 0 and 0 <= r <= 1")
            }
            _ => Ok(()),
        }
    }

    /// Fills `out` with one draw of `(ε_1, …, ε_T)` given `α`.
    pub fn draw<R: Rng + ?Sized>(&self, alpha: f64, rng: &mut R, out: &mut [f64]) {
        let mut z = || -> f64 { rng.sample(StandardNormal) };
        match *self {
            ErrorProcess::IidNormal { sigma } => out.iter_mut().for_each(|e| *e = sigma * z()),
            ErrorProcess::Martingale { sigma0, sigma_zeta } => {
                let mut level = sigma0 * z();
                for (t, e) in out.iter_mut().enumerate() {
                    if t > 0 {
                        level += sigma_zeta * z();
                    }
                    *e = level;
                }
            }
            ErrorProcess::Ar1 { rho, sigma } => {
                let mut level = start_sd(rho, sigma) * z();
                for (t, e) in out.iter_mut().enumerate() {
                    if t > 0 {
                        level = rho * level + sigma * z();
                    }
                    *e = level;
                }
            }
            ErrorProcess::ExchangeableNormal { sigma, r } => {
                let common = r.sqrt() * z();
                let idio = (1.0 - r).sqrt();
                out.iter_mut()
                    .for_each(|e| *e = sigma * (common + idio * z()));
            }
            ErrorProcess::TimeHomogeneousGivenAlpha { law, sigma } => match law {
                HomogeneousLaw::AlphaShift { k } => {
                    out.iter_mut().for_each(|e| *e = k * alpha + sigma * z())
                }
                HomogeneousLaw::AlphaScale { k } => {
                    let s = sigma * (1.0 + k * alpha.abs());
                    out.iter_mut().for_each(|e| *e = s * z());
                }
            },
        }
    }

    /// `E[ε_T | α, ε_1, …, ε_{T−1}]` in closed form.
    pub fn last_mean_given_past(&self, alpha: f64, past: &[f64]) -> f64 {
        let last = past.last().copied().unwrap_or(0.0);
        match *self {
            ErrorProcess::IidNormal { .. } => 0.0,
            ErrorProcess::Martingale { .. } => {
                if past.is_empty() {
                    0.0
                } else {
                    last
                }
            }
            ErrorProcess::Ar1 { rho, .. } => rho * last,
            ErrorProcess::ExchangeableNormal { sigma, r } => {
                let a2 = sigma * sigma * r;
                let b2 = sigma * sigma * (1.0 - r);
                let denom = b2 + past.len() as f64 * a2;
                if denom > 0.0 {
                    a2 * past.iter().sum::<f64>() / denom
                } else {
                    0.0
                }
            }
            ErrorProcess::TimeHomogeneousGivenAlpha { law, .. } => match law {
                HomogeneousLaw::AlphaShift { k } => k * alpha,
                HomogeneousLaw::AlphaScale { .. } => 0.0,
            },
        }
    }

    /// `E[ε_t | α] = shift·α`.
    pub fn alpha_shift(&self) -> f64 {
        match *self {
            ErrorProcess::TimeHomogeneousGivenAlpha {
                law: HomogeneousLaw::AlphaShift { k },
                ..
            } => k,
            _ => 0.0,
        }
    }

    /// Covariance of `(ε_1, …, ε_T)` net of the `α`-shift (row-major `T×T`).
    /// For the scale law the variance is evaluated at `|α| = mean_abs_alpha`.
    pub fn covariance(&self, periods: usize, mean_abs_alpha: f64) -> Vec<f64> {
        let mut c = vec![0.0; periods * periods];
        match *self {
            ErrorProcess::IidNormal { sigma } => {
                (0..periods).for_each(|t| c[t * periods + t] = sigma * sigma)
            }
            ErrorProcess::Martingale { sigma0, sigma_zeta } => {
                for s in 0..periods {
                    for t in 0..periods {
                        c[s * periods + t] =
                            sigma0 * sigma0 + s.min(t) as f64 * sigma_zeta * sigma_zeta;
                    }
                }
            }
            ErrorProcess::Ar1 { rho, sigma } => {
                let mut var = vec![start_sd(rho, sigma).powi(2); periods];
                for t in 1..periods {
                    var[t] = rho * rho * var[t - 1] + sigma * sigma;
                }
                for s in 0..periods {
                    for t in s..periods {
                        let v = rho.powi((t - s) as i32) * var[s];
                        c[s * periods + t] = v;
                        c[t * periods + s] = v;
                    }
                }
            }
            ErrorProcess::ExchangeableNormal { sigma, r } => {
                for s in 0..periods {
                    for t in 0..periods {
                        c[s * periods + t] = if s == t {
                            sigma * sigma
                        } else {
                            r * sigma * sigma
                        };
                    }
                }
            }
            ErrorProcess::TimeHomogeneousGivenAlpha { law, sigma } => {
                let v = match law {
                    HomogeneousLaw::AlphaShift { .. } => sigma * sigma,
                    HomogeneousLaw::AlphaScale { k } => {
                        (sigma * (1.0 + k * mean_abs_alpha)).powi(2)
                    }
                };
                (0..periods).for_each(|t| c[t * periods + t] = v);
            }
        }
        c
    }
}

fn start_sd(rho: f64, sigma: f64) -> f64 {
    if rho.abs() < 1.0 {
        sigma / (1.0 - rho * rho).sqrt()
    } else {
        sigma
    }
}

/// `α = mean + x_loading·x_1 + sd·z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaLaw {
    pub mean: f64,
    pub sd: f64,
    #[serde(default)]
    pub x_loading: f64,
}

impl AlphaLaw {
    pub fn standard() -> Self {
        Self {
            mean: 0.0,
            sd: 1.0,
            x_loading: 0.0,
        }
    }

    pub fn conditional_mean(&self, x1: f64) -> f64 {
        self.mean + self.x_loading * x1
    }

    fn validate(&self) -> Result<()> {
        if !(self.sd >= 0.0) {
            return Err(Error::Config("alpha sd must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `α^λ = corr·α^μ + x_loading·x^λ_1 + sd·z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaLambdaLaw {
    pub corr: f64,
    pub x_loading: f64,
    pub sd: f64,
}

impl AlphaLambdaLaw {
    fn validate(&self) -> Result<()> {
        if !(self.sd >= 0.0) {
            return Err(Error::Config("alpha-lambda sd must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Discrete covariate path: `x_1` from `probs` over `support`; in each later
/// period the value is redrawn from the same law with probability `switch_prob`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateLaw {
    pub support: Vec<f64>,
    pub probs: Vec<f64>,
    #[serde(default)]
    pub switch_prob: f64,
}

impl CovariateLaw {
    pub(crate) fn validate(&self) -> Result<()> {
        if self.support.is_empty() || self.support.len() != self.probs.len() {
            return Err(Error::Config(
                "covariate support and probabilities must be nonempty and aligned".into(),
            ));
        }
        let total: f64 = self.probs.iter().sum();
        if self.probs.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(
                "covariate probabilities must be nonnegative and sum to 1".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.switch_prob) {
            return Err(Error::Config("switch_prob must lie in [0, 1]".into()));
        }
        Ok(())
    }

    fn pick<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (x, p) in self.support.iter().zip(&self.probs) {
            acc += p;
            if u < acc {
                return *x;
            }
        }
        *self.support.last().expect("validated nonempty")
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [f64]) {
        let mut current = self.pick(rng);
        for (t, x) in out.iter_mut().enumerate() {
            if t > 0 && self.switch_prob > 0.0 && rng.random::<f64>() < self.switch_prob {
                current = self.pick(rng);
            }
            *x = current;
        }
    }

    pub fn mean(&self) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .map(|(x, p)| x * p)
            .sum()
    }
}

/// `Y_t(1) − Y_t(0) = τ + τ_α·α + gain_sd·κ + tau_eps·ε_t` in treated periods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreatmentEffect {
    pub tau: f64,
    #[serde(default)]
    pub tau_alpha: f64,
    #[serde(default)]
    pub gain_sd: f64,
    #[serde(default)]
    pub tau_eps: f64,
}

impl TreatmentEffect {
    pub fn constant(tau: f64) -> Self {
        Self {
            tau,
            tau_alpha: 0.0,
            gain_sd: 0.0,
            tau_eps: 0.0,
        }
    }

    pub fn effect(&self, alpha: f64, kappa: f64, eps: f64) -> f64 {
        self.tau + self.tau_alpha * alpha + self.gain_sd * kappa + self.tau_eps * eps
    }
}

/// Cost of treatment `C = mean + nu_loading·ν + eta1_loading·η_pre + sd·η_post`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostLaw {
    pub mean: f64,
    #[serde(default)]
    pub sd: f64,
    #[serde(default)]
    pub nu_loading: f64,
    #[serde(default)]
    pub eta1_loading: f64,
}

pub(crate) fn validate_alpha(alpha: &AlphaLaw) -> Result<()> {
    alpha.validate()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn ar1_stationary_moments() {
        let p = ErrorProcess::Ar1 {
            rho: 0.5,
            sigma: 1.0,
        };
        let c = p.covariance(3, 0.0);
        let v = 1.0 / 0.75;
        assert!((c[0] - v).abs() < 1e-12 && (c[4] - v).abs() < 1e-12);
        assert!((c[2] - 0.25 * v).abs() < 1e-12);
        let mut rng = substream(1, 0);
        let mut buf = [0.0; 3];
        let (mut s11, mut s12) = (0.0, 0.0);
        let reps = 200_000;
        for _ in 0..reps {
            p.draw(0.0, &mut rng, &mut buf);
            s11 += buf[1] * buf[1];
            s12 += buf[1] * buf[2];
        }
        assert!((s12 / s11 - 0.5).abs() < 0.01);
    }

    #[test]
    fn exchangeable_conditional_mean() {
        let p = ErrorProcess::ExchangeableNormal { sigma: 2.0, r: 1.0 };
        assert!((p.last_mean_given_past(0.0, &[1.5, 1.5]) - 1.5).abs() < 1e-12);
        let p = ErrorProcess::ExchangeableNormal { sigma: 1.0, r: 0.5 };
        // a² = b² = 0.5: E = 0.5·(e0+e1)/(0.5 + 1)
        assert!((p.last_mean_given_past(0.0, &[1.0, 2.0]) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn covariate_path_switches() {
        let law = CovariateLaw {
            support: vec![0.0, 1.0],
            probs: vec![0.5, 0.5],
            switch_prob: 0.0,
        };
        let mut rng = substream(3, 0);
        let mut buf = [0.0; 4];
        law.draw(&mut rng, &mut buf);
        assert!(buf.iter().all(|x| *x == buf[0]));
        assert!(CovariateLaw {
            support: vec![0.0],
            probs: vec![0.7],
            switch_prob: 0.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn struct_fns() {
        assert_eq!(StructFn::Quadratic { scale: 2.0 }.eval(1.0, 1.0, 1.0), 18.0);
        assert_eq!(
            StructFn::Interaction { scale: 0.5 }.eval(2.0, 3.0, 1.0),
            7.0
        );
        assert_eq!(
            CovFn::Quadratic {
                a: 1.0,
                b: 0.0,
                c: 2.0
            }
            .eval(3.0),
            19.0
        );
    }
}
