//! Group-time ATTs for staggered adoption, using never-treated units as the
//! comparison group and the period before adoption as the base period.

use rayon::prelude::*;
use serde::Serialize;

use crate::did::{adjusted_gap, DidEstimate};
use crate::error::{Error, Result};
use crate::panel::{GroupLabel, GroupMode, PanelDataset};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GroupTimeCell {
    pub g: i64,
    pub t: i64,
    pub estimate: f64,
    pub se: f64,
    /// `t < g`: a placebo, not an effect.
    pub is_pretreatment: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupTimeAttTable {
    pub cells: Vec<GroupTimeCell>,
}

impl GroupTimeAttTable {
    pub fn get(&self, g: i64, t: i64) -> Option<&GroupTimeCell> {
        self.cells.iter().find(|c| c.g == g && c.t == t)
    }

    /// CSV with columns `g,t,estimate,se,is_pretreatment`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        w.write_record(["g", "t", "estimate", "se", "is_pretreatment"])
            .map_err(io)?;
        for c in &self.cells {
            w.write_record([
                c.g.to_string(),
                c.t.to_string(),
                c.estimate.to_string(),
                c.se.to_string(),
                c.is_pretreatment.to_string(),
            ])
            .map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One-period pre-treatment gap `E_n[Y_t − Y_{t−1} | G=g] − E_n[Y_t − Y_{t−1} | G=∞]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PreTrendGap {
    pub g: i64,
    pub t: i64,
    pub gap: f64,
    pub se: f64,
}

fn check_staggered(dataset: &PanelDataset) -> Result<()> {
    if dataset.mode() != GroupMode::Staggered {
        return Err(Error::Estimation(
            "group-time estimation requires staggered group labels".into(),
        ));
    }
    if !dataset.groups().contains(&GroupLabel::Never) {
        return Err(Error::Estimation(
            "no never-treated units to serve as comparison group".into(),
        ));
    }
    Ok(())
}

/// Two-sample gap in `Y_t − Y_base` between cohort `g` and never-treated units.
/// The influence vector covers only the units of those two groups, in unit order.
fn cohort_gap(dataset: &PanelDataset, g: i64, t: i64, base: i64) -> Result<DidEstimate> {
    let yt = dataset.outcomes_at(t)?;
    let yb = dataset.outcomes_at(base)?;
    let mut r = Vec::new();
    let mut treated = Vec::new();
    for (i, label) in dataset.groups().iter().enumerate() {
        let member = match label {
            GroupLabel::Cohort(c) if *c == g => true,
            GroupLabel::Never => false,
            _ => continue,
        };
        r.push(yt[i] - yb[i]);
        treated.push(member);
    }
    if !treated.iter().any(|&m| m) {
        return Err(Error::Estimation(format!("cohort {g} has no units")));
    }
    adjusted_gap(&r, &treated, None)
}

/// The period immediately preceding `g` in the panel.
fn base_period(dataset: &PanelDataset, g: i64) -> Result<i64> {
    let idx = dataset.period_index(g)?;
    if idx == 0 {
        return Err(Error::Estimation(format!(
            "cohort {g} is treated in the first period; no base period"
        )));
    }
    Ok(dataset.periods()[idx - 1])
}

/// `ATT(g, t)` estimated by the long difference `Y_t − Y_{g−1}` against never-treated units.
pub fn att_gt(dataset: &PanelDataset, g: i64, t: i64) -> Result<DidEstimate> {
    check_staggered(dataset)?;
    let base = base_period(dataset, g)?;
    dataset.period_index(t)?;
    cohort_gap(dataset, g, t, base)
}

/// All cells `(g, t)` for every cohort `g` and every period after the first.
pub fn att_gt_table(dataset: &PanelDataset) -> Result<GroupTimeAttTable> {
    check_staggered(dataset)?;
    let pairs: Vec<(i64, i64)> = dataset
        .cohorts()
        .into_iter()
        .flat_map(|g| dataset.periods()[1..].iter().map(move |&t| (g, t)))
        .collect();
    let cells = pairs
        .par_iter()
        .map(|&(g, t)| {
            let est = att_gt(dataset, g, t)?;
            Ok(GroupTimeCell {
                g,
                t,
                estimate: est.point,
                se: est.se,
                is_pretreatment: t < g,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(GroupTimeAttTable { cells })
}

/// One-period gaps for every cohort `g` and every period `t < g` after the first.
pub fn pt_mp_check(dataset: &PanelDataset) -> Result<Vec<PreTrendGap>> {
    check_staggered(dataset)?;
    let periods = dataset.periods();
    let mut out = Vec::new();
    for g in dataset.cohorts() {
        for w in periods.windows(2) {
            let (prev, t) = (w[0], w[1]);
            if t >= g {
                break;
            }
            let est = cohort_gap(dataset, g, t, prev)?;
            out.push(PreTrendGap {
                g,
                t,
                gap: est.point,
                se: est.se,
            });
        }
    }
    Ok(out)
}
