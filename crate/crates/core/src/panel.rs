//! Balanced long-form panel data: ingestion, validation, and subgroup means.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::neumaier_sum;

/// Treatment-group label of a unit.
///
/// Two-group panels use `Binary`; staggered-adoption panels label each unit
/// by the first period it is treated (`Cohort`) or `Never`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GroupLabel {
    Binary(bool),
    Cohort(i64),
    Never,
}

impl GroupLabel {
    pub const TREATED: GroupLabel = GroupLabel::Binary(true);
    pub const CONTROL: GroupLabel = GroupLabel::Binary(false);

    fn mode(self) -> GroupMode {
        match self {
            GroupLabel::Binary(_) => GroupMode::Binary,
            _ => GroupMode::Staggered,
        }
    }
}

impl fmt::Display for GroupLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GroupLabel::Binary(b) => write!(f, "{}", u8::from(*b)),
            GroupLabel::Cohort(g) => write!(f, "{g}"),
            GroupLabel::Never => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupMode {
    Binary,
    Staggered,
}

/// Selects a subset of units by group label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GroupFilter {
    All,
    Only(GroupLabel),
    AnyOf(Vec<GroupLabel>),
}

impl GroupFilter {
    pub fn treated() -> Self {
        GroupFilter::Only(GroupLabel::TREATED)
    }

    pub fn control() -> Self {
        GroupFilter::Only(GroupLabel::CONTROL)
    }

    pub fn matches(&self, label: GroupLabel) -> bool {
        match self {
            GroupFilter::All => true,
            GroupFilter::Only(g) => *g == label,
            GroupFilter::AnyOf(gs) => gs.contains(&label),
        }
    }
}

impl From<GroupLabel> for GroupFilter {
    fn from(label: GroupLabel) -> Self {
        GroupFilter::Only(label)
    }
}

/// Outcome transform used by [`group_mean`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transform {
    Level,
    /// `Y_period − Y_from`.
    DifferenceFrom(i64),
}

/// One unit's record, with outcomes aligned to the dataset's period order.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitRecord {
    pub id: String,
    pub group: GroupLabel,
    pub outcomes: Vec<f64>,
    pub covariates: Vec<f64>,
}

/// A balanced panel stored column-major by period.
///
/// Immutable once constructed. Every unit has an outcome in every period, and
/// covariates are baseline (time-invariant) characteristics.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    ids: Vec<String>,
    groups: Vec<GroupLabel>,
    periods: Vec<i64>,
    /// `outcomes[t][i]`.
    outcomes: Vec<Vec<f64>>,
    covariate_names: Vec<String>,
    /// `covariates[k][i]`.
    covariates: Vec<Vec<f64>>,
    mode: GroupMode,
}

impl PanelDataset {
    /// Builds and validates a dataset. `periods` must be strictly increasing and
    /// each record must carry one outcome per period and one value per covariate.
    pub fn new(
        periods: Vec<i64>,
        covariate_names: Vec<String>,
        units: Vec<UnitRecord>,
    ) -> Result<Self> {
        if periods.is_empty() {
            return Err(Error::Validation {
                message: "panel has no periods".into(),
                units: vec![],
            });
        }
        if periods.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Validation {
                message: "periods must be strictly increasing".into(),
                units: vec![],
            });
        }
        let mut seen = BTreeSet::new();
        for name in &covariate_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!(
                    "duplicate covariate column '{name}'"
                )));
            }
        }
        if units.is_empty() {
            return Err(Error::Validation {
                message: "panel has no units".into(),
                units: vec![],
            });
        }

        let mut ids_seen = HashMap::with_capacity(units.len());
        let mut dup = Vec::new();
        let mut bad_shape = Vec::new();
        for u in &units {
            if ids_seen.insert(u.id.as_str(), ()).is_some() {
                dup.push(u.id.clone());
            }
            if u.outcomes.len() != periods.len() {
                bad_shape.push(u.id.clone());
            }
            if u.covariates.len() != covariate_names.len() {
                return Err(Error::Validation {
                    message: format!(
                        "unit '{}' has {} covariate values, expected {}",
                        u.id,
                        u.covariates.len(),
                        covariate_names.len()
                    ),
                    units: vec![u.id.clone()],
                });
            }
        }
        if !dup.is_empty() {
            return Err(Error::Validation {
                message: "duplicate unit ids".into(),
                units: dup,
            });
        }
        if !bad_shape.is_empty() {
            return Err(Error::Validation {
                message: "unbalanced panel".into(),
                units: bad_shape,
            });
        }

        let mode = units[0].group.mode();
        let mixed: Vec<String> = units
            .iter()
            .filter(|u| u.group.mode() != mode)
            .map(|u| u.id.clone())
            .collect();
        if !mixed.is_empty() {
            return Err(Error::Validation {
                message: "binary and staggered group labels mixed".into(),
                units: mixed,
            });
        }
        if mode == GroupMode::Staggered {
            let first = periods[0];
            let bad: Vec<String> = units
                .iter()
                .filter(|u| match u.group {
                    GroupLabel::Cohort(g) => g <= first || !periods.contains(&g),
                    _ => false,
                })
                .map(|u| u.id.clone())
                .collect();
            if !bad.is_empty() {
                return Err(Error::Validation {
                    message: format!(
                        "cohort labels must be panel periods after the first period {first}"
                    ),
                    units: bad,
                });
            }
        }
        let (n_treated, n_comparison) =
            units
                .iter()
                .fold((0usize, 0usize), |(t, c), u| match u.group {
                    GroupLabel::Binary(true) | GroupLabel::Cohort(_) => (t + 1, c),
                    GroupLabel::Binary(false) | GroupLabel::Never => (t, c + 1),
                });
        if n_treated == 0 || n_comparison == 0 {
            return Err(Error::Validation {
                message: format!("need at least one treated and one comparison unit (got {n_treated} treated, {n_comparison} comparison)"),
                units: vec![],
            });
        }

        let n = units.len();
        let mut outcomes = vec![Vec::with_capacity(n); periods.len()];
        let mut covariates = vec![Vec::with_capacity(n); covariate_names.len()];
        let mut ids = Vec::with_capacity(n);
        let mut groups = Vec::with_capacity(n);
        for u in units {
            for (t, y) in u.outcomes.iter().enumerate() {
                outcomes[t].push(*y);
            }
            for (k, x) in u.covariates.iter().enumerate() {
                covariates[k].push(*x);
            }
            ids.push(u.id);
            groups.push(u.group);
        }
        Ok(Self {
            ids,
            groups,
            periods,
            outcomes,
            covariate_names,
            covariates,
            mode,
        })
    }

    pub fn n_units(&self) -> usize {
        self.ids.len()
    }

    pub fn periods(&self) -> &[i64] {
        &self.periods
    }

    /// Always true: unbalanced input is rejected at construction.
    pub fn balanced(&self) -> bool {
        true
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn groups(&self) -> &[GroupLabel] {
        &self.groups
    }

    pub fn mode(&self) -> GroupMode {
        self.mode
    }

    pub fn covariate_names(&self) -> &[String] {
        &self.covariate_names
    }

    pub fn period_index(&self, period: i64) -> Result<usize> {
        self.periods
            .iter()
            .position(|&p| p == period)
            .ok_or_else(|| {
                Error::Argument(format!(
                    "period {period} not in panel (periods: {:?})",
                    self.periods
                ))
            })
    }

    /// Outcomes of all units in `period`, in unit order.
    pub fn outcomes_at(&self, period: i64) -> Result<&[f64]> {
        Ok(&self.outcomes[self.period_index(period)?])
    }

    pub fn covariate(&self, name: &str) -> Option<&[f64]> {
        self.covariate_names
            .iter()
            .position(|n| n == name)
            .map(|k| self.covariates[k].as_slice())
    }

    /// Treatment indicator for two-group panels.
    pub fn treated_mask(&self) -> Result<Vec<bool>> {
        if self.mode != GroupMode::Binary {
            return Err(Error::Estimation(
                "two-group estimator requires binary group labels".into(),
            ));
        }
        Ok(self
            .groups
            .iter()
            .map(|g| *g == GroupLabel::TREATED)
            .collect())
    }

    /// Distinct cohort periods present (staggered panels), ascending.
    pub fn cohorts(&self) -> Vec<i64> {
        let set: BTreeSet<i64> = self
            .groups
            .iter()
            .filter_map(|g| match g {
                GroupLabel::Cohort(c) => Some(*c),
                _ => None,
            })
            .collect();
        set.into_iter().collect()
    }

    pub fn units(&self) -> impl Iterator<Item = UnitRecord> + '_ {
        (0..self.n_units()).map(move |i| UnitRecord {
            id: self.ids[i].clone(),
            group: self.groups[i],
            outcomes: self.outcomes.iter().map(|col| col[i]).collect(),
            covariates: self.covariates.iter().map(|col| col[i]).collect(),
        })
    }

    /// Returns a copy with group labels remapped (used for relabeling checks).
    pub fn with_groups(&self, groups: Vec<GroupLabel>) -> Result<Self> {
        if groups.len() != self.n_units() {
            return Err(Error::Argument(
                "group vector length differs from unit count".into(),
            ));
        }
        let units = self
            .units()
            .zip(groups)
            .map(|(mut u, g)| {
                u.group = g;
                u
            })
            .collect();
        Self::new(self.periods.clone(), self.covariate_names.clone(), units)
    }
}

/// Column names used to read and write long-form panel CSVs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub id_col: String,
    pub period_col: String,
    pub outcome_col: String,
    pub group_col: String,
    /// Forces the group interpretation; `None` infers binary when every label is 0 or 1.
    pub group_mode: Option<GroupMode>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            id_col: "id".into(),
            period_col: "period".into(),
            outcome_col: "y".into(),
            group_col: "group".into(),
            group_mode: None,
        }
    }
}

impl CsvSchema {
    pub fn new(id: &str, period: &str, outcome: &str, group: &str) -> Self {
        Self {
            id_col: id.into(),
            period_col: period.into(),
            outcome_col: outcome.into(),
            group_col: group.into(),
            group_mode: None,
        }
    }
}

pub fn load_panel_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<PanelDataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_panel_csv(file, schema)
}

struct RawUnit {
    id: String,
    group: String,
    group_row: usize,
    outcomes: Vec<(i64, f64)>,
    covariates: Vec<f64>,
    covariate_row: usize,
}

pub fn read_panel_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::Schema(format!("cannot read header: {e}")))?
        .clone();
    if headers.is_empty() || headers.iter().all(str::is_empty) {
        return Err(Error::Schema("empty file: header row required".into()));
    }
    let find = |name: &str| {
        headers.iter().position(|h| h == name).ok_or_else(|| {
            Error::Schema(format!(
                "missing column '{name}' (header: {})",
                headers.iter().collect::<Vec<_>>().join(",")
            ))
        })
    };
    let id_idx = find(&schema.id_col)?;
    let period_idx = find(&schema.period_col)?;
    let y_idx = find(&schema.outcome_col)?;
    let group_idx = find(&schema.group_col)?;
    let reserved = [id_idx, period_idx, y_idx, group_idx];
    let cov_idx: Vec<usize> = (0..headers.len())
        .filter(|i| !reserved.contains(i))
        .collect();
    let covariate_names: Vec<String> = cov_idx.iter().map(|&i| headers[i].to_string()).collect();

    let mut order: HashMap<String, usize> = HashMap::new();
    let mut raw: Vec<RawUnit> = Vec::new();
    let mut n_rows = 0usize;
    for (k, rec) in rdr.records().enumerate() {
        let row = k + 2;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        n_rows += 1;
        let field = |i: usize| rec.get(i).unwrap_or("");
        let id = field(id_idx).to_string();
        if id.is_empty() {
            return Err(Error::Parse {
                row,
                message: "empty unit id".into(),
            });
        }
        let period: i64 = field(period_idx).parse().map_err(|_| Error::Parse {
            row,
            message: format!("period '{}' is not an integer", field(period_idx)),
        })?;
        let y: f64 = parse_real(field(y_idx)).ok_or_else(|| Error::Parse {
            row,
            message: format!("non-numeric outcome '{}'", field(y_idx)),
        })?;
        let mut covs = Vec::with_capacity(cov_idx.len());
        for (&ci, name) in cov_idx.iter().zip(&covariate_names) {
            let v = parse_real(field(ci)).ok_or_else(|| Error::Parse {
                row,
                message: format!("non-numeric value '{}' in covariate '{name}'", field(ci)),
            })?;
            covs.push(v);
        }
        let group = field(group_idx).to_string();

        let slot = match order.get(&id) {
            Some(&s) => s,
            None => {
                order.insert(id.clone(), raw.len());
                raw.push(RawUnit {
                    id: id.clone(),
                    group: group.clone(),
                    group_row: row,
                    outcomes: Vec::new(),
                    covariates: covs.clone(),
                    covariate_row: row,
                });
                raw.len() - 1
            }
        };
        let u = &mut raw[slot];
        if u.group != group {
            return Err(Error::Validation {
                message: format!(
                    "group label changes within unit (rows {} and {row})",
                    u.group_row
                ),
                units: vec![id],
            });
        }
        if u.covariates != covs {
            return Err(Error::Validation {
                message: format!(
                    "covariates must be time-invariant (rows {} and {row} differ)",
                    u.covariate_row
                ),
                units: vec![id],
            });
        }
        u.outcomes.push((period, y));
    }
    if n_rows == 0 {
        return Err(Error::Schema("file has a header but no data rows".into()));
    }

    let periods: Vec<i64> = raw
        .iter()
        .flat_map(|u| u.outcomes.iter().map(|(p, _)| *p))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();

    let mut duplicated = Vec::new();
    let mut unbalanced = Vec::new();
    for u in &mut raw {
        u.outcomes.sort_by_key(|(p, _)| *p);
        if u.outcomes.windows(2).any(|w| w[0].0 == w[1].0) {
            duplicated.push(u.id.clone());
        } else if u.outcomes.len() != periods.len() {
            unbalanced.push(u.id.clone());
        }
    }
    if !duplicated.is_empty() {
        return Err(Error::Validation {
            message: "duplicate period within unit".into(),
            units: duplicated,
        });
    }
    if !unbalanced.is_empty() {
        return Err(Error::Validation {
            message: format!("unbalanced panel: units missing some of periods {periods:?}"),
            units: unbalanced,
        });
    }

    let mode = match schema.group_mode {
        Some(m) => m,
        None if raw.iter().all(|u| is_binary_token(&u.group)) => GroupMode::Binary,
        None => GroupMode::Staggered,
    };
    let mut units = Vec::with_capacity(raw.len());
    for u in raw {
        let group = parse_group(&u.group, mode).ok_or_else(|| Error::Parse {
            row: u.group_row,
            message: format!("invalid {mode:?} group label '{}'", u.group),
        })?;
        units.push(UnitRecord {
            id: u.id,
            group,
            outcomes: u.outcomes.into_iter().map(|(_, y)| y).collect(),
            covariates: u.covariates,
        });
    }
    PanelDataset::new(periods, covariate_names, units)
}

fn parse_real(s: &str) -> Option<f64> {
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn is_binary_token(s: &str) -> bool {
    matches!(s.parse::<f64>(), Ok(v) if v == 0.0 || v == 1.0)
}

fn parse_group(s: &str, mode: GroupMode) -> Option<GroupLabel> {
    match mode {
        GroupMode::Binary => match s.parse::<f64>().ok()? {
            0.0 => Some(GroupLabel::CONTROL),
            1.0 => Some(GroupLabel::TREATED),
            _ => None,
        },
        GroupMode::Staggered => {
            if matches!(
                s.to_ascii_lowercase().as_str(),
                "inf" | "infinity" | "never"
            ) {
                return Some(GroupLabel::Never);
            }
            s.parse::<i64>().ok().map(GroupLabel::Cohort)
        }
    }
}

/// Writes the dataset in long form; reading it back with the same schema
/// reproduces the dataset exactly.
pub fn write_panel_csv<W: Write>(
    writer: W,
    dataset: &PanelDataset,
    schema: &CsvSchema,
) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        schema.id_col.clone(),
        schema.period_col.clone(),
        schema.outcome_col.clone(),
        schema.group_col.clone(),
    ];
    header.extend(dataset.covariate_names.iter().cloned());
    w.write_record(&header).map_err(csv_io)?;
    let mut row = Vec::with_capacity(header.len());
    for i in 0..dataset.n_units() {
        for (t, p) in dataset.periods.iter().enumerate() {
            row.clear();
            row.push(dataset.ids[i].clone());
            row.push(p.to_string());
            row.push(dataset.outcomes[t][i].to_string());
            row.push(dataset.groups[i].to_string());
            row.extend(dataset.covariates.iter().map(|c| c[i].to_string()));
            w.write_record(&row).map_err(csv_io)?;
        }
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

/// Arithmetic mean of the (optionally differenced) outcome over a subgroup.
pub fn group_mean(
    dataset: &PanelDataset,
    period: i64,
    group: &GroupFilter,
    transform: Transform,
) -> Result<f64> {
    let y = dataset.outcomes_at(period)?;
    let base = match transform {
        Transform::Level => None,
        Transform::DifferenceFrom(p) => Some(dataset.outcomes_at(p)?),
    };
    let vals: Vec<f64> = dataset
        .groups
        .iter()
        .enumerate()
        .filter(|(_, g)| group.matches(**g))
        .map(|(i, _)| base.map_or(y[i], |b| y[i] - b[i]))
        .collect();
    if vals.is_empty() {
        return Err(Error::Estimation(format!("empty subgroup {group:?}")));
    }
    Ok(neumaier_sum(vals.iter().copied()) / vals.len() as f64)
}
