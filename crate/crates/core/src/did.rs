//! Two-group DiD, regression adjustment, pre-period selection bias, persistence
//! estimates and the `ATT(ρ₂)` sensitivity analysis.
//!
//! Every estimator here is a difference of treated means and a (possibly
//! covariate-adjusted) comparison, so all of them share [`adjusted_gap`]: the
//! point estimate `E_n[r − m̂(X) | G=1]`, where `m̂` is the control-group mean of
//! `r` or its OLS projection on the design, together with its influence function.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::panel::{GroupFilter, PanelDataset};
use crate::regression::{design_matrix, inner, DesignSpec, Matrix, NormalFactor};
use crate::rng::substream;
use crate::stats::{influence_se, mean, neumaier_sum, sd, Z_95};

/// Point estimate with per-unit influence contributions.
///
/// `se² = mean(influence²) / n`, with no degrees-of-freedom correction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DidEstimate {
    pub point: f64,
    pub se: f64,
    #[serde(skip)]
    pub influence: Vec<f64>,
}

impl DidEstimate {
    fn from_influence(point: f64, influence: Vec<f64>) -> Self {
        let se = influence_se(&influence);
        Self {
            point,
            se,
            influence,
        }
    }

    /// `self − c·other`, with influence functions combined the same way.
    pub fn minus_scaled(&self, c: f64, other: &DidEstimate) -> DidEstimate {
        let influence = self
            .influence
            .iter()
            .zip(&other.influence)
            .map(|(a, b)| a - c * b)
            .collect();
        Self::from_influence(self.point - c * other.point, influence)
    }

    pub fn ci(&self) -> (f64, f64) {
        (self.point - Z_95 * self.se, self.point + Z_95 * self.se)
    }
}

/// One-period persistence and its power over `horizon` steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RhoEstimate {
    pub per_step: f64,
    pub horizon: u32,
    pub adjusted: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SensitivityCurve {
    pub grid: Vec<f64>,
    pub att: Vec<f64>,
    pub se: Vec<f64>,
    pub ci_lo: Vec<f64>,
    pub ci_hi: Vec<f64>,
}

impl SensitivityCurve {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// CSV with columns `rho,att,se,ci_lo,ci_hi`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["rho", "att", "se", "ci_lo", "ci_hi"])
            .map_err(io)?;
        for i in 0..self.len() {
            w.write_record([
                self.grid[i].to_string(),
                self.att[i].to_string(),
                self.se[i].to_string(),
                self.ci_lo[i].to_string(),
                self.ci_hi[i].to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// ATT identified set for `ρ₂ ∈ [lo, hi]`, plus the union of pointwise 95% CIs
/// over the same range (conservative robust interval).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentifiedSet {
    pub lo: f64,
    pub hi: f64,
    pub rho_bounds: (f64, f64),
    pub robust_ci: (f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleReport {
    pub point: f64,
    pub influence_se: f64,
    pub bootstrap_se: f64,
    /// `|bootstrap − influence| / influence`; 0 when both are 0.
    pub relative_gap: f64,
    pub reps: usize,
}

/// Outcomes in a pre and a post period with the treatment indicator and an
/// optional design matrix of baseline covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPeriodSample {
    pub y_pre: Vec<f64>,
    pub y_post: Vec<f64>,
    pub treated: Vec<bool>,
    pub design: Option<Matrix>,
}

impl TwoPeriodSample {
    pub fn new(
        y_pre: Vec<f64>,
        y_post: Vec<f64>,
        treated: Vec<bool>,
        design: Option<Matrix>,
    ) -> Result<Self> {
        let n = treated.len();
        if y_pre.len() != n || y_post.len() != n || design.as_ref().is_some_and(|d| d.rows() != n) {
            return Err(Error::Argument("sample components differ in length".into()));
        }
        Ok(Self {
            y_pre,
            y_post,
            treated,
            design,
        })
    }

    pub fn from_dataset(
        dataset: &PanelDataset,
        pre: i64,
        post: i64,
        spec: Option<&DesignSpec>,
    ) -> Result<Self> {
        let treated = dataset.treated_mask()?;
        let y_pre = dataset.outcomes_at(pre)?.to_vec();
        let y_post = dataset.outcomes_at(post)?.to_vec();
        let design = match spec {
            Some(s) => {
                s.validate(dataset)?;
                Some(design_matrix(dataset, s)?)
            }
            None => None,
        };
        Self::new(y_pre, y_post, treated, design)
    }

    pub fn n(&self) -> usize {
        self.treated.len()
    }

    pub fn n_treated(&self) -> usize {
        self.treated.iter().filter(|&&g| g).count()
    }

    pub fn n_control(&self) -> usize {
        self.n() - self.n_treated()
    }

    fn change(&self) -> Vec<f64> {
        self.y_post
            .iter()
            .zip(&self.y_pre)
            .map(|(b, a)| b - a)
            .collect()
    }

    /// Plain or regression-adjusted DiD, depending on whether a design is attached.
    pub fn did(&self) -> Result<DidEstimate> {
        adjusted_gap(&self.change(), &self.treated, self.design.as_ref())
    }

    /// Pre-period selection bias, covariate-adjusted when a design is attached.
    pub fn bias(&self) -> Result<DidEstimate> {
        adjusted_gap(&self.y_pre, &self.treated, self.design.as_ref())
    }

    pub fn att_at_rho(&self, rho2: f64) -> Result<DidEstimate> {
        Ok(self.did()?.minus_scaled(rho2 - 1.0, &self.bias()?))
    }

    pub fn sensitivity_curve(&self, grid: &[f64]) -> Result<SensitivityCurve> {
        if grid.is_empty() {
            return Err(Error::Argument("empty rho grid".into()));
        }
        if grid.iter().any(|r| !r.is_finite()) {
            return Err(Error::Argument(
                "rho grid contains a non-finite value".into(),
            ));
        }
        let did = self.did()?;
        let bias = self.bias()?;
        let mut curve = SensitivityCurve {
            grid: grid.to_vec(),
            att: Vec::with_capacity(grid.len()),
            se: Vec::with_capacity(grid.len()),
            ci_lo: Vec::with_capacity(grid.len()),
            ci_hi: Vec::with_capacity(grid.len()),
        };
        for &rho in grid {
            let est = did.minus_scaled(rho - 1.0, &bias);
            let (lo, hi) = est.ci();
            curve.att.push(est.point);
            curve.se.push(est.se);
            curve.ci_lo.push(lo);
            curve.ci_hi.push(hi);
        }
        Ok(curve)
    }

    pub fn identified_set(&self, rho_lo: f64, rho_hi: f64) -> Result<IdentifiedSet> {
        if !(rho_lo <= rho_hi) {
            return Err(Error::Argument(format!(
                "rho bounds reversed or invalid: lo={rho_lo} > hi={rho_hi}"
            )));
        }
        let curve = self.sensitivity_curve(&[rho_lo, rho_hi])?;
        // ATT(ρ₂) is affine, so its range is attained at the endpoints. The CI
        // lower bound is concave and the upper bound convex in ρ₂ (se is the
        // square root of a quadratic), so the union is also attained there.
        Ok(IdentifiedSet {
            lo: curve.att[0].min(curve.att[1]),
            hi: curve.att[0].max(curve.att[1]),
            rho_bounds: (rho_lo, rho_hi),
            robust_ci: (
                curve.ci_lo[0].min(curve.ci_lo[1]),
                curve.ci_hi[0].max(curve.ci_hi[1]),
            ),
        })
    }

    /// Units drawn by index (with repetition).
    pub fn resample(&self, index: &[usize]) -> Self {
        Self {
            y_pre: index.iter().map(|&i| self.y_pre[i]).collect(),
            y_post: index.iter().map(|&i| self.y_post[i]).collect(),
            treated: index.iter().map(|&i| self.treated[i]).collect(),
            design: self.design.as_ref().map(|d| d.select_rows(index)),
        }
    }

    /// Compares the influence-function se of `ATT(ρ₂)` with a nonparametric unit
    /// bootstrap. Replicate `b` draws from substream `(seed, b)`; a draw that leaves
    /// a group empty is redrawn from the same substream.
    pub fn oracle_check(&self, rho2: f64, reps: usize, seed: u64) -> Result<OracleReport> {
        if reps < 200 {
            return Err(Error::Argument(format!(
                "bootstrap needs at least 200 replications, got {reps}"
            )));
        }
        let est = self.att_at_rho(rho2)?;
        let n = self.n();
        let points = (0..reps)
            .into_par_iter()
            .map(|b| {
                let mut rng = substream(seed, b as u64);
                let index = loop {
                    let index: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
                    let treated = index.iter().filter(|&&i| self.treated[i]).count();
                    if treated > 0 && treated < n {
                        break index;
                    }
                };
                self.resample(&index).att_at_rho(rho2).map(|e| e.point)
            })
            .collect::<Result<Vec<f64>>>()?;
        let bootstrap_se = sd(&points);
        let relative_gap = if est.se > 0.0 {
            (bootstrap_se - est.se).abs() / est.se
        } else if bootstrap_se == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        Ok(OracleReport {
            point: est.point,
            influence_se: est.se,
            bootstrap_se,
            relative_gap,
            reps,
        })
    }
}

/// `E_n[r − m̂(X) | G=1]` with `m̂` fit on controls, and its influence function.
///
/// Without a design `m̂` is the control mean and the influence function is the
/// two-sample one, `(G/p̂)(r − m₁) − ((1−G)/(1−p̂))(r − m₀)`. With a design `P`,
/// `m̂ = P'θ̂` by OLS over controls and the influence is
/// `(G/p̂)(e − att) − P̄₁' M⁻¹ (1−G) P e`, `M = E_n[(1−G) P P']`, `e = r − P'θ̂`.
pub fn adjusted_gap(r: &[f64], treated: &[bool], design: Option<&Matrix>) -> Result<DidEstimate> {
    let n = treated.len();
    let n1 = treated.iter().filter(|&&g| g).count();
    let n0 = n - n1;
    if n1 == 0 || n0 == 0 {
        return Err(Error::Estimation(format!(
            "empty group: {n1} treated, {n0} control"
        )));
    }
    let nf = n as f64;
    let p = n1 as f64 / nf;
    match design {
        None => {
            let m1 = neumaier_sum(r.iter().zip(treated).filter(|(_, g)| **g).map(|(v, _)| *v))
                / n1 as f64;
            let m0 = neumaier_sum(r.iter().zip(treated).filter(|(_, g)| !**g).map(|(v, _)| *v))
                / n0 as f64;
            let influence = r
                .iter()
                .zip(treated)
                .map(|(v, &g)| {
                    if g {
                        (v - m1) / p
                    } else {
                        -(v - m0) / (1.0 - p)
                    }
                })
                .collect();
            Ok(DidEstimate::from_influence(m1 - m0, influence))
        }
        Some(x) => {
            if n0 < x.cols() {
                return Err(Error::Estimation(format!(
                    "{n0} control units cannot identify {} coefficients",
                    x.cols()
                )));
            }
            let factor = NormalFactor::from_design(x, |i| !treated[i])?;
            let k = x.cols();
            let mut xty = vec![0.0; k];
            let mut pbar1 = vec![0.0; k];
            for i in 0..n {
                let row = x.row(i);
                if treated[i] {
                    for (acc, v) in pbar1.iter_mut().zip(row) {
                        *acc += v;
                    }
                } else {
                    for (acc, v) in xty.iter_mut().zip(row) {
                        *acc += v * r[i];
                    }
                }
            }
            pbar1.iter_mut().for_each(|v| *v /= n1 as f64);
            let theta = factor.solve(&xty);
            let resid: Vec<f64> = (0..n).map(|i| r[i] - inner(x.row(i), &theta)).collect();
            let att = neumaier_sum(
                resid
                    .iter()
                    .zip(treated)
                    .filter(|(_, g)| **g)
                    .map(|(e, _)| *e),
            ) / n1 as f64;
            // M⁻¹ P̄₁ with M = X₀'X₀ / n.
            let w: Vec<f64> = factor.solve(&pbar1).into_iter().map(|v| v * nf).collect();
            let influence = (0..n)
                .map(|i| {
                    if treated[i] {
                        (resid[i] - att) / p
                    } else {
                        -inner(x.row(i), &w) * resid[i]
                    }
                })
                .collect();
            Ok(DidEstimate::from_influence(att, influence))
        }
    }
}

pub fn did_2x2(dataset: &PanelDataset, pre: i64, post: i64) -> Result<DidEstimate> {
    TwoPeriodSample::from_dataset(dataset, pre, post, None)?.did()
}

pub fn reg_adjusted_did(
    dataset: &PanelDataset,
    pre: i64,
    post: i64,
    spec: &DesignSpec,
) -> Result<DidEstimate> {
    TwoPeriodSample::from_dataset(dataset, pre, post, Some(spec))?.did()
}

pub fn baseline_bias(
    dataset: &PanelDataset,
    pre: i64,
    spec: Option<&DesignSpec>,
) -> Result<DidEstimate> {
    TwoPeriodSample::from_dataset(dataset, pre, pre, spec)?.bias()
}

pub fn att_at_rho(
    dataset: &PanelDataset,
    pre: i64,
    post: i64,
    rho2: f64,
    spec: Option<&DesignSpec>,
) -> Result<DidEstimate> {
    TwoPeriodSample::from_dataset(dataset, pre, post, spec)?.att_at_rho(rho2)
}

pub fn sensitivity_curve(
    dataset: &PanelDataset,
    pre: i64,
    post: i64,
    grid: &[f64],
    spec: Option<&DesignSpec>,
) -> Result<SensitivityCurve> {
    TwoPeriodSample::from_dataset(dataset, pre, post, spec)?.sensitivity_curve(grid)
}

pub fn identified_set(
    dataset: &PanelDataset,
    pre: i64,
    post: i64,
    rho_lo: f64,
    rho_hi: f64,
    spec: Option<&DesignSpec>,
) -> Result<IdentifiedSet> {
    TwoPeriodSample::from_dataset(dataset, pre, post, spec)?.identified_set(rho_lo, rho_hi)
}

#[allow(clippy::too_many_arguments)]
pub fn influence_se_oracle_check(
    dataset: &PanelDataset,
    pre: i64,
    post: i64,
    rho2: f64,
    spec: Option<&DesignSpec>,
    reps: usize,
    seed: u64,
) -> Result<OracleReport> {
    TwoPeriodSample::from_dataset(dataset, pre, post, spec)?.oracle_check(rho2, reps, seed)
}

/// Bounds `ρ̂₁(1 − b), ρ̂₁(1 + b)` implied by `|%Δρ| ≤ b`, returned in ascending order.
pub fn rho_bounds_from_change(rho1: f64, b: f64) -> Result<(f64, f64)> {
    if !(b >= 0.0) || !rho1.is_finite() {
        return Err(Error::Argument(format!(
            "need finite rho and nonnegative bound, got rho={rho1}, b={b}"
        )));
    }
    let (a, c) = (rho1 * (1.0 - b), rho1 * (1.0 + b));
    Ok((a.min(c), a.max(c)))
}

/// Evenly spaced grid `lo, lo+step, …` up to and including `hi` (up to rounding).
pub fn rho_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Argument(format!("invalid grid {lo}:{hi}:{step}")));
    }
    let count = ((hi - lo) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|i| lo + i as f64 * step).collect())
}

/// Persistence of the centered outcome from `from` to `to`, raised to `horizon`.
///
/// Without a design the outcomes are demeaned over all units; with one, each
/// period's outcome is residualized on the design fit over all units.
pub fn estimate_rho(
    dataset: &PanelDataset,
    from: i64,
    to: i64,
    horizon: u32,
    spec: Option<&DesignSpec>,
) -> Result<RhoEstimate> {
    if horizon == 0 {
        return Err(Error::Argument("horizon must be at least 1".into()));
    }
    let (a, b) = match spec {
        None => (
            demean(dataset.outcomes_at(from)?),
            demean(dataset.outcomes_at(to)?),
        ),
        Some(s) => (
            crate::regression::residualize(dataset, from, s, &GroupFilter::All, &GroupFilter::All)?,
            crate::regression::residualize(dataset, to, s, &GroupFilter::All, &GroupFilter::All)?,
        ),
    };
    rho_from_centered(&a, &b, horizon)
}

pub fn rho_from_centered(from: &[f64], to: &[f64], horizon: u32) -> Result<RhoEstimate> {
    let denom = inner(from, from);
    let scale = from.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if !(denom > 0.0) || scale == 0.0 {
        return Err(Error::DegenerateVariance(
            "pre-period outcome has no variation".into(),
        ));
    }
    let per_step = inner(from, to) / denom;
    Ok(RhoEstimate {
        per_step,
        horizon,
        adjusted: per_step.powi(horizon as i32),
    })
}

fn demean(y: &[f64]) -> Vec<f64> {
    let m = mean(y);
    y.iter().map(|v| v - m).collect()
}
