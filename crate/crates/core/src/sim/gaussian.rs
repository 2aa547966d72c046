//! Linear prediction of jointly distributed latents from a known subset.
//!
//! For Gaussian laws the best linear predictor is the conditional mean; the
//! scale-mixture error law is the one registered process where it is only the
//! linear projection.

use crate::error::{Error, Result};

/// Coefficients of `E[z | z_K] = m + Σ_{·K} Σ_KK⁻¹ (z_K − m_K)`.
#[derive(Debug, Clone)]
pub struct LinearPredictor {
    dim: usize,
    kept: Vec<usize>,
    /// `coef[j * kept.len() + k]`
    coef: Vec<f64>,
}

/// Relative conditional variance below which a known coordinate is treated
/// as a linear function of the coordinates kept before it.
const REDUNDANT: f64 = 1e-12;

impl LinearPredictor {
    /// `cov` is row-major `dim × dim`; `known` lists the observed coordinates.
    pub fn new(cov: &[f64], dim: usize, known: &[usize]) -> Result<Self> {
        if cov.len() != dim * dim || known.iter().any(|&k| k >= dim) {
            return Err(Error::Config("predictor dimensions do not match".into()));
        }
        let mut kept: Vec<usize> = Vec::new();
        for &k in known {
            if kept.contains(&k) {
                continue;
            }
            let var = cov[k * dim + k];
            let resid = var - explained(cov, dim, &kept, k, k)?;
            if resid > REDUNDANT * var.max(f64::MIN_POSITIVE) {
                kept.push(k);
            }
        }
        let q = kept.len();
        let mut coef = vec![0.0; dim * q];
        if q > 0 {
            let skk = sub(cov, dim, &kept, &kept);
            for j in 0..dim {
                let rhs: Vec<f64> = kept.iter().map(|&k| cov[j * dim + k]).collect();
                let w = solve(&skk, q, &rhs)?;
                coef[j * q..(j + 1) * q].copy_from_slice(&w);
            }
        }
        Ok(Self { dim, kept, coef })
    }

    /// Prediction of coordinate `j` given the full vector `z` (only kept
    /// coordinates are read) and the mean vector `m`.
    pub fn predict(&self, j: usize, z: &[f64], m: &[f64]) -> f64 {
        debug_assert!(j < self.dim);
        let q = self.kept.len();
        let w = &self.coef[j * q..(j + 1) * q];
        m[j] + w
            .iter()
            .zip(&self.kept)
            .map(|(c, &k)| c * (z[k] - m[k]))
            .sum::<f64>()
    }
}

fn sub(cov: &[f64], dim: usize, rows: &[usize], cols: &[usize]) -> Vec<f64> {
    rows.iter()
        .flat_map(|&r| cols.iter().map(move |&c| cov[r * dim + c]))
        .collect()
}

/// `Σ_{aK} Σ_KK⁻¹ Σ_{Kb}`.
fn explained(cov: &[f64], dim: usize, kept: &[usize], a: usize, b: usize) -> Result<f64> {
    if kept.is_empty() {
        return Ok(0.0);
    }
    let skk = sub(cov, dim, kept, kept);
    let rhs: Vec<f64> = kept.iter().map(|&k| cov[k * dim + b]).collect();
    let w = solve(&skk, kept.len(), &rhs)?;
    Ok(kept
        .iter()
        .zip(&w)
        .map(|(&k, c)| cov[a * dim + k] * c)
        .sum())
}

/// Gaussian elimination with partial pivoting for a small dense system.
fn solve(a: &[f64], q: usize, b: &[f64]) -> Result<Vec<f64>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..q {
        let piv = (col..q)
            .max_by(|&i, &j| m[i * q + col].abs().total_cmp(&m[j * q + col].abs()))
            .expect("nonempty range");
        if m[piv * q + col] == 0.0 {
            return Err(Error::Config(
                "singular covariance among known latents".into(),
            ));
        }
        if piv != col {
            for k in 0..q {
                m.swap(piv * q + k, col * q + k);
            }
            x.swap(piv, col);
        }
        for r in col + 1..q {
            let f = m[r * q + col] / m[col * q + col];
            for k in col..q {
                m[r * q + k] -= f * m[col * q + k];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..q).rev() {
        let s: f64 = (col + 1..q).map(|k| m[col * q + k] * x[k]).sum();
        x[col] = (x[col] - s) / m[col * q + col];
    }
    Ok(x)
}
