//! Basis expansion of baseline covariates and least squares via the normal equations.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{GroupFilter, PanelDataset};
use crate::stats::neumaier_sum;

/// Pivot ratio (smallest over largest, after unit-diagonal scaling) below which
/// the normal matrix is declared singular.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Term {
    Intercept,
    Linear(String),
    Power(String, u32),
}

impl Term {
    fn covariate(&self) -> Option<&str> {
        match self {
            Term::Intercept => None,
            Term::Linear(n) | Term::Power(n, _) => Some(n),
        }
    }
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Intercept => f.write_str("1"),
            Term::Linear(n) => f.write_str(n),
            Term::Power(n, k) => write!(f, "{n}^{k}"),
        }
    }
}

impl FromStr for Term {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.is_empty() {
            return Err(Error::Spec("empty term".into()));
        }
        if s == "1" {
            return Ok(Term::Intercept);
        }
        match s.split_once('^') {
            None => Ok(Term::Linear(s.to_string())),
            Some((name, exp)) => {
                let name = name.trim();
                let k: u32 = exp
                    .trim()
                    .parse()
                    .map_err(|_| Error::Spec(format!("bad exponent in term '{s}'")))?;
                if name.is_empty() {
                    return Err(Error::Spec(format!("missing covariate in term '{s}'")));
                }
                match k {
                    0 => Err(Error::Spec(format!("exponent must be at least 1 in '{s}'"))),
                    1 => Ok(Term::Linear(name.to_string())),
                    _ => Ok(Term::Power(name.to_string(), k)),
                }
            }
        }
    }
}

/// Ordered list of basis terms `P(x)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DesignSpec {
    terms: Vec<Term>,
}

impl DesignSpec {
    pub fn new(terms: Vec<Term>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::Spec("design has no terms".into()));
        }
        for (i, t) in terms.iter().enumerate() {
            if terms[..i].contains(t) {
                return Err(Error::Spec(format!("duplicate term '{t}'")));
            }
        }
        Ok(Self { terms })
    }

    pub fn intercept_only() -> Self {
        Self {
            terms: vec![Term::Intercept],
        }
    }

    /// Intercept, the six baseline covariates of the job-training sample, age²,
    /// age³ and educ².
    pub fn nsw_default() -> Self {
        "1,age,educ,nodegree,married,black,hisp,age^2,age^3,educ^2"
            .parse()
            .expect("valid literal")
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn column_names(&self) -> Vec<String> {
        self.terms.iter().map(ToString::to_string).collect()
    }

    /// Checks that every referenced covariate exists in `dataset`.
    pub fn validate(&self, dataset: &PanelDataset) -> Result<()> {
        for t in &self.terms {
            if let Some(name) = t.covariate() {
                if dataset.covariate(name).is_none() {
                    return Err(Error::Spec(format!(
                        "unknown covariate '{name}' (available: {})",
                        dataset.covariate_names().join(", ")
                    )));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for DesignSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.column_names();
        f.write_str(&parts.join(","))
    }
}

impl FromStr for DesignSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let terms = s
            .split(',')
            .map(str::parse)
            .collect::<Result<Vec<Term>>>()?;
        Self::new(terms)
    }
}

/// Dense row-major matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    names: Vec<String>,
}

impl Matrix {
    pub fn from_rows(rows: usize, cols: usize, data: Vec<f64>, names: Vec<String>) -> Result<Self> {
        if data.len() != rows * cols || names.len() != cols {
            return Err(Error::Argument(format!(
                "matrix shape {rows}x{cols} does not match {} values / {} names",
                data.len(),
                names.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            data,
            names,
        })
    }

    /// Builds a matrix from columns of equal length.
    pub fn from_columns(columns: &[Vec<f64>], names: Vec<String>) -> Result<Self> {
        let cols = columns.len();
        let rows = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != rows) {
            return Err(Error::Argument("columns differ in length".into()));
        }
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            data.extend(columns.iter().map(|c| c[i]));
        }
        Self::from_rows(rows, cols, data, names)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    /// Rows selected (and possibly repeated) by index.
    pub fn select_rows(&self, index: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(index.len() * self.cols);
        for &i in index {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: index.len(),
            cols: self.cols,
            data,
            names: self.names.clone(),
        }
    }

    pub fn mul_vec(&self, beta: &[f64]) -> Vec<f64> {
        (0..self.rows).map(|i| dot(self.row(i), beta)).collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn evaluate(term: &Term, dataset: &PanelDataset) -> Result<Vec<f64>> {
    let column = |name: &str| {
        dataset.covariate(name).ok_or_else(|| {
            Error::Spec(format!(
                "unknown covariate '{name}' (available: {})",
                dataset.covariate_names().join(", ")
            ))
        })
    };
    Ok(match term {
        Term::Intercept => vec![1.0; dataset.n_units()],
        Term::Linear(n) => column(n)?.to_vec(),
        Term::Power(n, k) => column(n)?.iter().map(|x| x.powi(*k as i32)).collect(),
    })
}

/// Design matrix over all units, one row per unit in dataset order.
pub fn design_matrix(dataset: &PanelDataset, spec: &DesignSpec) -> Result<Matrix> {
    let columns = spec
        .terms
        .iter()
        .map(|t| evaluate(t, dataset))
        .collect::<Result<Vec<_>>>()?;
    Matrix::from_columns(&columns, spec.column_names())
}

/// Design matrix restricted to the units in `subset`, preserving unit order.
pub fn build_design(
    dataset: &PanelDataset,
    spec: &DesignSpec,
    subset: &GroupFilter,
) -> Result<Matrix> {
    let full = design_matrix(dataset, spec)?;
    let index = subset_index(dataset, subset);
    Ok(full.select_rows(&index))
}

pub(crate) fn subset_index(dataset: &PanelDataset, subset: &GroupFilter) -> Vec<usize> {
    dataset
        .groups()
        .iter()
        .enumerate()
        .filter(|(_, g)| subset.matches(**g))
        .map(|(i, _)| i)
        .collect()
}

/// Cholesky factor of a scaled Gram matrix `D⁻¹ (X'WX) D⁻¹`, `D = diag(sqrt(X'WX))`.
#[derive(Debug, Clone)]
pub struct NormalFactor {
    lower: Vec<f64>,
    scale: Vec<f64>,
    k: usize,
    /// Smallest over largest pivot of the scaled matrix.
    pub pivot_ratio: f64,
}

impl NormalFactor {
    /// Factors `X'X` accumulated over the rows of `design` with `include[i]` set.
    pub fn from_design(design: &Matrix, include: impl Fn(usize) -> bool) -> Result<Self> {
        let k = design.cols;
        let mut gram = vec![0.0; k * k];
        for i in (0..design.rows).filter(|&i| include(i)) {
            let r = design.row(i);
            for a in 0..k {
                let ra = r[a];
                for b in 0..=a {
                    gram[a * k + b] += ra * r[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                gram[b * k + a] = gram[a * k + b];
            }
        }
        Self::factor(gram, k, design.names())
    }

    fn factor(mut gram: Vec<f64>, k: usize, names: &[String]) -> Result<Self> {
        let zero: Vec<String> = (0..k)
            .filter(|&j| !(gram[j * k + j] > 0.0))
            .map(|j| names[j].clone())
            .collect();
        if !zero.is_empty() {
            return Err(Error::Singular {
                columns: zero,
                ratio: 0.0,
            });
        }
        let scale: Vec<f64> = (0..k).map(|j| gram[j * k + j].sqrt()).collect();
        for a in 0..k {
            for b in 0..k {
                gram[a * k + b] /= scale[a] * scale[b];
            }
        }
        let mut lower = vec![0.0; k * k];
        let mut pivots = vec![0.0; k];
        for j in 0..k {
            let mut d = gram[j * k + j];
            for p in 0..j {
                d -= lower[j * k + p] * lower[j * k + p];
            }
            pivots[j] = d;
            let ljj = if d > 0.0 { d.sqrt() } else { f64::NAN };
            lower[j * k + j] = ljj;
            for i in j + 1..k {
                let mut s = gram[i * k + j];
                for p in 0..j {
                    s -= lower[i * k + p] * lower[j * k + p];
                }
                lower[i * k + j] = s / ljj;
            }
        }
        let max = pivots.iter().cloned().fold(f64::MIN, f64::max);
        let min = pivots.iter().cloned().fold(f64::MAX, f64::min);
        let ratio = if max > 0.0 { min / max } else { 0.0 };
        if !(ratio >= SINGULAR_PIVOT_RATIO) {
            let columns = (0..k)
                .filter(|&j| !(pivots[j] >= SINGULAR_PIVOT_RATIO * max))
                .map(|j| names[j].clone())
                .collect();
            return Err(Error::Singular {
                columns,
                ratio: ratio.max(0.0),
            });
        }
        Ok(Self {
            lower,
            scale,
            k,
            pivot_ratio: ratio,
        })
    }

    /// Solves `(X'X) b = rhs`.
    #[allow(clippy::needless_range_loop)]
    pub fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let k = self.k;
        let mut z: Vec<f64> = rhs.iter().zip(&self.scale).map(|(r, s)| r / s).collect();
        for i in 0..k {
            let mut s = z[i];
            for p in 0..i {
                s -= self.lower[i * k + p] * z[p];
            }
            z[i] = s / self.lower[i * k + i];
        }
        for i in (0..k).rev() {
            let mut s = z[i];
            for p in i + 1..k {
                s -= self.lower[p * k + i] * z[p];
            }
            z[i] = s / self.lower[i * k + i];
        }
        z.iter().zip(&self.scale).map(|(v, s)| v / s).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult {
    pub coefficients: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Smallest-to-largest pivot ratio of the scaled normal matrix; small values
    /// indicate near-collinearity.
    pub condition: f64,
}

/// Least squares fit of `response` on the columns of `design`.
pub fn ols(design: &Matrix, response: &[f64]) -> Result<FitResult> {
    ols_subset(design, response, |_| true)
}

/// Least squares over the rows with `include[i]`; residuals are returned for all rows.
pub fn ols_subset(
    design: &Matrix,
    response: &[f64],
    include: impl Fn(usize) -> bool + Copy,
) -> Result<FitResult> {
    if response.len() != design.rows {
        return Err(Error::Argument(format!(
            "response has {} values but design has {} rows",
            response.len(),
            design.rows
        )));
    }
    let used = (0..design.rows).filter(|&i| include(i)).count();
    if used < design.cols {
        return Err(Error::Estimation(format!(
            "{used} observations cannot identify {} coefficients",
            design.cols
        )));
    }
    let factor = NormalFactor::from_design(design, include)?;
    let mut xty = vec![0.0; design.cols];
    for i in (0..design.rows).filter(|&i| include(i)) {
        for (acc, x) in xty.iter_mut().zip(design.row(i)) {
            *acc += x * response[i];
        }
    }
    let coefficients = factor.solve(&xty);
    let fitted = design.mul_vec(&coefficients);
    let residuals = response.iter().zip(&fitted).map(|(y, f)| y - f).collect();
    Ok(FitResult {
        coefficients,
        residuals,
        condition: factor.pivot_ratio,
    })
}

/// Outcome in `period` minus its linear projection on `spec`, fit on `fit` and
/// returned for the units in `apply` (in unit order).
pub fn residualize(
    dataset: &PanelDataset,
    period: i64,
    spec: &DesignSpec,
    fit: &GroupFilter,
    apply: &GroupFilter,
) -> Result<Vec<f64>> {
    spec.validate(dataset)?;
    let y = dataset.outcomes_at(period)?;
    let design = design_matrix(dataset, spec)?;
    let groups = dataset.groups();
    if !groups.iter().any(|g| fit.matches(*g)) {
        return Err(Error::Estimation(format!("empty fit subset {fit:?}")));
    }
    let res = ols_subset(&design, y, |i| fit.matches(groups[i]))?;
    Ok(res
        .residuals
        .into_iter()
        .zip(groups)
        .filter(|(_, g)| apply.matches(**g))
        .map(|(r, _)| r)
        .collect())
}

/// `Σ x_i y_i`, compensated.
pub(crate) fn inner(a: &[f64], b: &[f64]) -> f64 {
    neumaier_sum(a.iter().zip(b).map(|(x, y)| x * y))
}
