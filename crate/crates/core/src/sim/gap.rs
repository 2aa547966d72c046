//! The parallel-trends gap `Δ_post` measured on untreated potential outcomes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::simulate::LatentPanel;
use crate::error::{Error, Result};
use crate::panel::GroupLabel;

/// How units are compared when measuring the gap.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditioning {
    None,
    /// Strata defined by the full covariate path.
    CovariateTrajectory,
    /// Units whose `X^μ` is the same in the last two periods, stratified by
    /// that value and by the path of `X^λ`.
    NspSubpopulation,
}

/// `Δ_post` and, when available, its split into the part due to selection on
/// the post-period shock and the part due to unpredictability of the post
/// outcome from the past.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapMeasure {
    pub delta_post: f64,
    pub components: Option<(f64, f64)>,
    pub treated_share: f64,
}

fn binary_mask(latent: &LatentPanel) -> Result<Vec<bool>> {
    if latent.is_staggered() {
        return Err(Error::Config(
            "two-group gap requested on a staggered panel".into(),
        ));
    }
    let g = latent.treated_mask();
    let treated = g.iter().filter(|&&b| b).count();
    if treated == 0 || treated == g.len() {
        return Err(Error::Degeneracy {
            share: treated as f64 / g.len() as f64,
        });
    }
    Ok(g)
}

/// Unconditional gap `E_n[ΔY(0) | G=1] − E_n[ΔY(0) | G=0]` over the last two
/// periods. With `use_latents`, components are computed from
/// `m_i = E[Y_T(0) | α, ε_1, …, ε_{T−1}, X]`:
/// `Σ G_i (Y_T(0) − m_i)` and `Σ G_i (m_i − c_T − Y_{T−1}(0) + c_{T−1})`, both
/// scaled by `1/(n·p̂·(1−p̂))`, where `c_t` are sample means. They add up to the
/// gap exactly.
pub fn measure_pt_gap(latent: &LatentPanel, use_latents: bool) -> Result<GapMeasure> {
    let g = binary_mask(latent)?;
    let n = latent.n();
    let (pre, post) = (latent.t() - 2, latent.t() - 1);
    let p = g.iter().filter(|&&b| b).count() as f64 / n as f64;
    let y = |i: usize, t: usize| latent.at(&latent.y0, i, t);
    let c_pre = (0..n).map(|i| y(i, pre)).sum::<f64>() / n as f64;
    let c_post = (0..n).map(|i| y(i, post)).sum::<f64>() / n as f64;
    let scale = 1.0 / (n as f64 * p * (1.0 - p));

    let mut delta = 0.0;
    for i in (0..n).filter(|&i| g[i]) {
        delta += (y(i, post) - c_post) - (y(i, pre) - c_pre);
    }
    delta *= scale;

    let components = match (use_latents, &latent.post_mean) {
        (true, Some(m)) => {
            let (mut d1, mut d2) = (0.0, 0.0);
            for i in (0..n).filter(|&i| g[i]) {
                d1 += y(i, post) - m[i];
                d2 += (m[i] - c_post) - (y(i, pre) - c_pre);
            }
            Some((d1 * scale, d2 * scale))
        }
        _ => None,
    };
    Ok(GapMeasure {
        delta_post: delta,
        components,
        treated_share: p,
    })
}

#[derive(Default)]
struct Cell {
    sum1: f64,
    n1: usize,
    sum0: f64,
    n0: usize,
}

/// Gap within covariate strata, averaged with weights proportional to the
/// number of treated units in each stratum. Strata lacking either group are
/// dropped.
pub fn measure_conditional_gap(
    latent: &LatentPanel,
    conditioning: Conditioning,
) -> Result<GapMeasure> {
    if conditioning == Conditioning::None {
        return measure_pt_gap(latent, false);
    }
    let g = binary_mask(latent)?;
    let t = latent.t();
    let (pre, post) = (t - 2, t - 1);
    let mut cells: BTreeMap<Vec<u64>, Cell> = BTreeMap::new();
    for (i, &treated) in g.iter().enumerate() {
        let key: Vec<u64> = match conditioning {
            Conditioning::CovariateTrajectory => (0..t)
                .map(|s| latent.at(&latent.x, i, s).to_bits())
                .collect(),
            Conditioning::NspSubpopulation => {
                let (a, b) = (latent.at(&latent.x, i, pre), latent.at(&latent.x, i, post));
                if a != b {
                    continue;
                }
                std::iter::once(a.to_bits())
                    .chain((0..t).map(|s| latent.at(&latent.x_lambda, i, s).to_bits()))
                    .collect()
            }
            Conditioning::None => unreachable!(),
        };
        let change = latent.at(&latent.y0, i, post) - latent.at(&latent.y0, i, pre);
        let cell = cells.entry(key).or_default();
        if treated {
            cell.sum1 += change;
            cell.n1 += 1;
        } else {
            cell.sum0 += change;
            cell.n0 += 1;
        }
    }
    let (mut weighted, mut weight) = (0.0, 0usize);
    for c in cells.values().filter(|c| c.n1 > 0 && c.n0 > 0) {
        weighted += c.n1 as f64 * (c.sum1 / c.n1 as f64 - c.sum0 / c.n0 as f64);
        weight += c.n1;
    }
    if weight == 0 {
        return Err(Error::Estimation(
            "no stratum contains both treated and comparison units".into(),
        ));
    }
    let p = g.iter().filter(|&&b| b).count() as f64 / g.len() as f64;
    Ok(GapMeasure {
        delta_post: weighted / weight as f64,
        components: None,
        treated_share: p,
    })
}

/// Average over cohorts `g` and periods `2 ≤ t ≤ T` of the one-period gap in
/// untreated outcomes between cohort `g` and never-treated units.
pub fn measure_staggered_gap(latent: &LatentPanel) -> Result<GapMeasure> {
    if !latent.is_staggered() {
        return Err(Error::Config(
            "staggered gap requested on a two-group panel".into(),
        ));
    }
    let t = latent.t();
    let mut by_group: BTreeMap<i64, (Vec<f64>, usize)> = BTreeMap::new();
    let never = i64::MAX;
    for (i, label) in latent.groups.iter().enumerate() {
        let key = match label {
            GroupLabel::Cohort(g) => *g,
            GroupLabel::Never => never,
            GroupLabel::Binary(_) => unreachable!("checked staggered"),
        };
        let entry = by_group.entry(key).or_insert_with(|| (vec![0.0; t - 1], 0));
        for s in 1..t {
            entry.0[s - 1] += latent.at(&latent.y0, i, s) - latent.at(&latent.y0, i, s - 1);
        }
        entry.1 += 1;
    }
    let (control, nc) = by_group
        .remove(&never)
        .ok_or(Error::Degeneracy { share: 1.0 })?;
    if by_group.is_empty() {
        return Err(Error::Degeneracy { share: 0.0 });
    }
    let mut total = 0.0;
    let mut cells = 0usize;
    for (sums, ng) in by_group.values() {
        for s in 0..t - 1 {
            total += sums[s] / *ng as f64 - control[s] / nc as f64;
            cells += 1;
        }
    }
    Ok(GapMeasure {
        delta_post: total / cells as f64,
        components: None,
        treated_share: latent.treated_share(),
    })
}
