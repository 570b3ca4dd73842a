//! Log-log gravity regression.
//!
//! The model is `ln C = ln k + alpha ln M_i + beta ln M_j + g ln d + e`,
//! fitted by ordinary least squares through a Householder QR decomposition.
//! `g` is reported as the signed coefficient of `ln d`: the classical
//! formulation writes the distance term as `-gamma ln d`, so a distance decay
//! shows up here as a negative `g`.
//!
//! Standard errors are heteroskedasticity-consistent (White sandwich, HC0 or
//! HC1 with the `n / (n - 4)` correction). p-values are two-sided, from a t
//! distribution with `n - 4` degrees of freedom.

use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::flows::FlowObservation;

const PARAMS: usize = 4;
pub const COLUMN_NAMES: [&str; PARAMS] = ["intercept", "ln_m_i", "ln_m_j", "ln_d"];

/// Relative size below which a pivot of R marks a column as collinear.
const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum RegressError {
    #[error("observation {index}: {field} = {value} is not strictly positive")]
    NonPositive { index: usize, field: &'static str, value: f64 },
    #[error("row {index} has a non-finite value")]
    NonFinite { index: usize },
    #[error("need at least {PARAMS_PLUS_ONE} rows, got {n}")]
    TooFewRows { n: usize },
    #[error("design is rank deficient: {} collinear with preceding columns", columns.join(", "))]
    Collinear { columns: Vec<&'static str> },
    #[error("p-value {0} outside [0, 1]")]
    Probability(f64),
}

const PARAMS_PLUS_ONE: usize = PARAMS + 1;

/// One regression row in natural logs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DesignRow {
    pub y: f64,
    pub ln_m_i: f64,
    pub ln_m_j: f64,
    pub ln_d: f64,
}

impl DesignRow {
    fn regressors(&self) -> [f64; PARAMS] {
        [1.0, self.ln_m_i, self.ln_m_j, self.ln_d]
    }

    fn canonical_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.y
            .total_cmp(&other.y)
            .then(self.ln_m_i.total_cmp(&other.ln_m_i))
            .then(self.ln_m_j.total_cmp(&other.ln_m_j))
            .then(self.ln_d.total_cmp(&other.ln_d))
    }
}

pub fn log_transform(observations: &[FlowObservation]) -> Result<Vec<DesignRow>, RegressError> {
    observations
        .iter()
        .enumerate()
        .map(|(index, o)| {
            let fields = [
                ("cites", o.cites as f64),
                ("m_i", o.m_i),
                ("m_j", o.m_j),
                ("d_km", o.d_km),
            ];
            for (field, value) in fields {
                if !(value > 0.0 && value.is_finite()) {
                    return Err(RegressError::NonPositive { index, field, value });
                }
            }
            Ok(DesignRow {
                y: (o.cites as f64).ln(),
                ln_m_i: o.m_i.ln(),
                ln_m_j: o.m_j.ln(),
                ln_d: o.d_km.ln(),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HcVariant {
    Hc0,
    #[default]
    Hc1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Significance {
    #[serde(rename = "***")]
    ThreeStars,
    #[serde(rename = "**")]
    TwoStars,
    #[serde(rename = "*")]
    OneStar,
    #[serde(rename = "ns")]
    NotSignificant,
}

impl Significance {
    pub fn as_str(self) -> &'static str {
        match self {
            Significance::ThreeStars => "***",
            Significance::TwoStars => "**",
            Significance::OneStar => "*",
            Significance::NotSignificant => "ns",
        }
    }

    pub fn is_significant(self) -> bool {
        self != Significance::NotSignificant
    }
}

impl fmt::Display for Significance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Mark for a p-value; thresholds are compared with strict inequality.
pub fn classify(p: f64, thresholds: [f64; 3]) -> Result<Significance, RegressError> {
    if !(0.0..=1.0).contains(&p) {
        return Err(RegressError::Probability(p));
    }
    Ok(if p < thresholds[0] {
        Significance::ThreeStars
    } else if p < thresholds[1] {
        Significance::TwoStars
    } else if p < thresholds[2] {
        Significance::OneStar
    } else {
        Significance::NotSignificant
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Coefficient {
    pub estimate: f64,
    pub robust_se: f64,
    pub t: f64,
    pub p_value: f64,
    pub mark: Significance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GravityFit {
    pub n: usize,
    pub ln_k: Coefficient,
    pub alpha: Coefficient,
    pub beta: Coefficient,
    /// Signed coefficient of `ln d`.
    pub distance: Coefficient,
    pub r2: f64,
    pub covariance: HcVariant,
}

impl GravityFit {
    pub fn coefficients(&self) -> [&Coefficient; PARAMS] {
        [&self.ln_k, &self.alpha, &self.beta, &self.distance]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub covariance: HcVariant,
    pub thresholds: [f64; 3],
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            covariance: HcVariant::Hc1,
            thresholds: [0.01, 0.05, 0.1],
        }
    }
}

pub fn fit_ols(rows: &[DesignRow]) -> Result<GravityFit, RegressError> {
    fit_ols_with(rows, &FitOptions::default())
}

/// Fit with explicit covariance variant and thresholds.
///
/// Rows are put in a canonical order before any arithmetic, so permuting
/// the input yields a bit-identical fit.
pub fn fit_ols_with(rows: &[DesignRow], options: &FitOptions) -> Result<GravityFit, RegressError> {
    let n = rows.len();
    if n < PARAMS + 1 {
        return Err(RegressError::TooFewRows { n });
    }
    if let Some(index) = rows
        .iter()
        .position(|r| !(r.y.is_finite() && r.regressors().iter().all(|v| v.is_finite())))
    {
        return Err(RegressError::NonFinite { index });
    }
    let mut sorted = rows.to_vec();
    sorted.sort_by(DesignRow::canonical_cmp);

    let x: Vec<[f64; PARAMS]> = sorted.iter().map(DesignRow::regressors).collect();
    let y: Vec<f64> = sorted.iter().map(|r| r.y).collect();
    let qr = HouseholderQr::factor(&x, &y)?;
    let beta = qr.solve();

    let residuals: Vec<f64> = x
        .iter()
        .zip(&y)
        .map(|(xi, yi)| yi - dot(xi, &beta))
        .collect();
    let ssr: f64 = residuals.iter().map(|e| e * e).sum();
    let mean_y = y.iter().sum::<f64>() / n as f64;
    let sst: f64 = y.iter().map(|v| (v - mean_y).powi(2)).sum();
    let r2 = if sst > 0.0 { (1.0 - ssr / sst).clamp(0.0, 1.0) } else { 1.0 };

    let cov = qr.sandwich(&x, &residuals, options.covariance);
    let df = (n - PARAMS) as f64;
    let t_dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    let mut coefficients = [Coefficient {
        estimate: 0.0,
        robust_se: 0.0,
        t: 0.0,
        p_value: 1.0,
        mark: Significance::NotSignificant,
    }; PARAMS];
    for (k, coefficient) in coefficients.iter_mut().enumerate() {
        let se = cov[k][k].max(0.0).sqrt();
        let estimate = beta[k];
        let (t, p_value) = if se > 0.0 {
            let t = estimate / se;
            (t, (2.0 * t_dist.sf(t.abs())).min(1.0))
        } else if estimate == 0.0 {
            (0.0, 1.0)
        } else {
            (estimate.signum() * f64::INFINITY, 0.0)
        };
        *coefficient = Coefficient {
            estimate,
            robust_se: se,
            t,
            p_value,
            mark: classify(p_value, options.thresholds)?,
        };
    }
    let [ln_k, alpha, beta, distance] = coefficients;
    Ok(GravityFit {
        n,
        ln_k,
        alpha,
        beta,
        distance,
        r2,
        covariance: options.covariance,
    })
}

fn dot(a: &[f64; PARAMS], b: &[f64; PARAMS]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Thin QR of an `n x 4` design, keeping only R and Q'y.
struct HouseholderQr {
    r: [[f64; PARAMS]; PARAMS],
    qty: [f64; PARAMS],
}

impl HouseholderQr {
    fn factor(x: &[[f64; PARAMS]], y: &[f64]) -> Result<Self, RegressError> {
        let n = x.len();
        let mut cols: Vec<Vec<f64>> = (0..PARAMS).map(|j| x.iter().map(|row| row[j]).collect()).collect();
        let mut rhs = y.to_vec();
        let norms: Vec<f64> = cols.iter().map(|c| c.iter().map(|v| v * v).sum::<f64>().sqrt()).collect();
        let mut r = [[0.0; PARAMS]; PARAMS];
        let mut deficient = Vec::new();

        for k in 0..PARAMS {
            let norm = cols[k][k..].iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm <= RANK_TOLERANCE * norms[k].max(f64::MIN_POSITIVE) {
                deficient.push(COLUMN_NAMES[k]);
                continue;
            }
            let alpha = if cols[k][k] > 0.0 { -norm } else { norm };
            let mut v = cols[k][k..].to_vec();
            v[0] -= alpha;
            let vnorm2: f64 = v.iter().map(|a| a * a).sum();
            let reflect = |target: &mut [f64]| {
                let proj: f64 = v.iter().zip(target.iter()).map(|(a, b)| a * b).sum();
                let scale = 2.0 * proj / vnorm2;
                for (t, a) in target.iter_mut().zip(&v) {
                    *t -= scale * a;
                }
            };
            for col in cols.iter_mut().skip(k + 1) {
                reflect(&mut col[k..]);
            }
            reflect(&mut rhs[k..n]);
            cols[k][k] = alpha;
            for v in cols[k][k + 1..].iter_mut() {
                *v = 0.0;
            }
            for (j, col) in cols.iter().enumerate().skip(k) {
                r[k][j] = col[k];
            }
        }
        if !deficient.is_empty() {
            return Err(RegressError::Collinear { columns: deficient });
        }
        let mut qty = [0.0; PARAMS];
        qty.copy_from_slice(&rhs[..PARAMS]);
        Ok(HouseholderQr { r, qty })
    }

    fn solve(&self) -> [f64; PARAMS] {
        let mut beta = [0.0; PARAMS];
        for k in (0..PARAMS).rev() {
            let tail: f64 = (k + 1..PARAMS).map(|j| self.r[k][j] * beta[j]).sum();
            beta[k] = (self.qty[k] - tail) / self.r[k][k];
        }
        beta
    }

    fn r_inverse(&self) -> [[f64; PARAMS]; PARAMS] {
        let mut inv = [[0.0; PARAMS]; PARAMS];
        for col in 0..PARAMS {
            for row in (0..=col).rev() {
                let rhs = if row == col { 1.0 } else { 0.0 };
                let tail: f64 = (row + 1..=col).map(|j| self.r[row][j] * inv[j][col]).sum();
                inv[row][col] = (rhs - tail) / self.r[row][row];
            }
        }
        inv
    }

    /// `(X'X)^-1 X' diag(w e^2) X (X'X)^-1` evaluated as
    /// `R^-1 (sum e_i^2 q_i q_i') R^-T` with `q_i = R^-T x_i`.
    fn sandwich(&self, x: &[[f64; PARAMS]], residuals: &[f64], variant: HcVariant) -> [[f64; PARAMS]; PARAMS] {
        let n = x.len();
        let mut meat = [[0.0; PARAMS]; PARAMS];
        for (xi, e) in x.iter().zip(residuals) {
            let mut q = [0.0; PARAMS];
            for k in 0..PARAMS {
                let head: f64 = (0..k).map(|j| self.r[j][k] * q[j]).sum();
                q[k] = (xi[k] - head) / self.r[k][k];
            }
            let w = e * e;
            for a in 0..PARAMS {
                for b in 0..PARAMS {
                    meat[a][b] += w * q[a] * q[b];
                }
            }
        }
        let scale = match variant {
            HcVariant::Hc0 => 1.0,
            HcVariant::Hc1 => n as f64 / (n - PARAMS) as f64,
        };
        let inv = self.r_inverse();
        let mut cov = [[0.0; PARAMS]; PARAMS];
        for a in 0..PARAMS {
            for b in 0..PARAMS {
                let mut acc = 0.0;
                for c in 0..PARAMS {
                    for d in 0..PARAMS {
                        acc += inv[a][c] * meat[c][d] * inv[b][d];
                    }
                }
                cov[a][b] = scale * acc;
            }
        }
        cov
    }
}
