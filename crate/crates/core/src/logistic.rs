//! Weighted logistic regression by iteratively reweighted least squares.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major design with binary responses and case weights.
#[derive(Debug, Clone, Default)]
pub struct DesignRows {
    ncols: usize,
    x: Vec<f64>,
    y: Vec<f64>,
    w: Vec<f64>,
}

impl DesignRows {
    pub fn new(ncols: usize) -> Self {
        Self {
            ncols,
            ..Default::default()
        }
    }

    pub fn with_capacity(ncols: usize, rows: usize) -> Self {
        Self {
            ncols,
            x: Vec::with_capacity(ncols * rows),
            y: Vec::with_capacity(rows),
            w: Vec::with_capacity(rows),
        }
    }

    pub fn push(&mut self, features: &[f64], response: bool, weight: f64) {
        debug_assert_eq!(features.len(), self.ncols);
        self.x.extend_from_slice(features);
        self.y.push(if response { 1.0 } else { 0.0 });
        self.w.push(weight);
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.ncols..(i + 1) * self.ncols]
    }

    /// Weighted count of positive and negative responses.
    pub fn class_weights(&self) -> (f64, f64) {
        let mut pos = 0.0;
        let mut neg = 0.0;
        for (&y, &w) in self.y.iter().zip(&self.w) {
            if y > 0.5 {
                pos += w;
            } else {
                neg += w;
            }
        }
        (pos, neg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticOptions {
    /// Convergence threshold on the weight-normalized score norm.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Coefficient norm above which the fit is declared separated.
    pub separation_threshold: f64,
}

impl Default for LogisticOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-9,
            max_iterations: 100,
            separation_threshold: 1e4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub coefficients: Vec<f64>,
    pub iterations: usize,
    pub gradient_norm: f64,
}

/// Linear predictor magnitude (fitted probability within ~2e-9 of 0 or 1)
/// treated as the signature of (quasi-)complete separation.
const SEPARATED_ETA: f64 = 20.0;

#[inline]
pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

// log(1 + exp(x)) without overflow
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// In-place Cholesky of a symmetric positive definite `p x p` matrix (lower
/// triangle). Returns the first pivot index that fails the relative tolerance.
fn cholesky(a: &mut [f64], p: usize, rel_tol: f64) -> std::result::Result<(), usize> {
    for j in 0..p {
        let mut d = a[j * p + j];
        for k in 0..j {
            d -= a[j * p + k] * a[j * p + k];
        }
        if !(d > rel_tol) {
            return Err(j);
        }
        let d = d.sqrt();
        a[j * p + j] = d;
        for i in (j + 1)..p {
            let mut s = a[i * p + j];
            for k in 0..j {
                s -= a[i * p + k] * a[j * p + k];
            }
            a[i * p + j] = s / d;
        }
    }
    Ok(())
}

fn cholesky_solve(l: &[f64], p: usize, b: &mut [f64]) {
    for i in 0..p {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * p + k] * b[k];
        }
        b[i] = s / l[i * p + i];
    }
    for i in (0..p).rev() {
        let mut s = b[i];
        for k in (i + 1)..p {
            s -= l[k * p + i] * b[k];
        }
        b[i] = s / l[i * p + i];
    }
}

/// Indices of columns that are linear combinations of earlier columns on the
/// weighted sample.
pub fn dependent_columns(rows: &DesignRows) -> Vec<usize> {
    let p = rows.ncols;
    let mut gram = vec![0.0; p * p];
    for i in 0..rows.len() {
        let x = rows.row(i);
        let w = rows.w[i];
        for a in 0..p {
            for b in 0..=a {
                gram[a * p + b] += w * x[a] * x[b];
            }
        }
    }
    // scale to unit diagonal, then greedily keep independent columns
    let scale: Vec<f64> = (0..p).map(|j| gram[j * p + j].sqrt()).collect();
    let mut kept: Vec<usize> = Vec::new();
    let mut dependent = Vec::new();
    for j in 0..p {
        if scale[j] == 0.0 {
            dependent.push(j);
            continue;
        }
        let mut trial = kept.clone();
        trial.push(j);
        let q = trial.len();
        let mut sub = vec![0.0; q * q];
        for (r, &ca) in trial.iter().enumerate() {
            for (c, &cb) in trial.iter().enumerate() {
                let (hi, lo) = if ca >= cb { (ca, cb) } else { (cb, ca) };
                sub[r * q + c] = gram[hi * p + lo] / (scale[ca] * scale[cb]);
            }
        }
        if cholesky(&mut sub, q, 1e-10).is_ok() {
            kept.push(j);
        } else {
            dependent.push(j);
        }
    }
    dependent
}

fn log_likelihood(rows: &DesignRows, beta: &[f64]) -> f64 {
    (0..rows.len())
        .map(|i| {
            let eta = dot(rows.row(i), beta);
            rows.w[i] * (rows.y[i] * eta - softplus(eta))
        })
        .sum()
}

/// Maximum-likelihood logistic coefficients (no implicit intercept column).
pub fn fit_logistic(rows: &DesignRows, opts: &LogisticOptions) -> Result<LogisticFit> {
    fit_logistic_from(rows, opts, None)
}

/// As [`fit_logistic`], starting Newton iterations from `start`.
pub fn fit_logistic_from(rows: &DesignRows, opts: &LogisticOptions, start: Option<&[f64]>) -> Result<LogisticFit> {
    let p = rows.ncols;
    if rows.is_empty() {
        return Err(Error::EmptyPopulation("logistic fit with no rows".into()));
    }
    let total_w: f64 = rows.w.iter().sum();
    if !(total_w > 0.0) {
        return Err(Error::EmptyPopulation("logistic fit with zero total weight".into()));
    }
    let dependent = dependent_columns(rows);
    if !dependent.is_empty() {
        return Err(Error::SingularDesign {
            columns: dependent.iter().map(|j| format!("x{j}")).collect(),
        });
    }
    let (pos, neg) = rows.class_weights();
    if pos == 0.0 || neg == 0.0 {
        return Err(Error::Separation("single-class response".into()));
    }

    let mut beta = match start {
        Some(s) if s.len() == p && s.iter().all(|v| v.is_finite()) => s.to_vec(),
        _ => vec![0.0; p],
    };
    let mut grad = vec![0.0; p];
    let mut hess = vec![0.0; p * p];
    let mut ll = log_likelihood(rows, &beta);
    let mut gnorm = f64::INFINITY;

    for iter in 0..=opts.max_iterations {
        grad.iter_mut().for_each(|g| *g = 0.0);
        hess.iter_mut().for_each(|h| *h = 0.0);
        let mut max_eta: f64 = 0.0;
        for i in 0..rows.len() {
            let x = rows.row(i);
            let eta = dot(x, &beta);
            max_eta = max_eta.max(eta.abs());
            let mu = expit(eta);
            let w = rows.w[i];
            let r = w * (rows.y[i] - mu);
            let v = w * mu * (1.0 - mu);
            for a in 0..p {
                grad[a] += r * x[a];
                let vx = v * x[a];
                for b in 0..=a {
                    hess[a * p + b] += vx * x[b];
                }
            }
        }
        gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt() / total_w;
        let converged = gnorm <= opts.tolerance;
        if converged && max_eta > SEPARATED_ETA {
            return Err(Error::Separation(format!("fitted linear predictor reached {max_eta:.1}")));
        }
        if iter == opts.max_iterations && !converged {
            break;
        }
        let hscale = hess.iter().step_by(p + 1).fold(0.0_f64, |m, &d| m.max(d));
        if cholesky(&mut hess, p, 1e-14 * hscale.max(f64::MIN_POSITIVE)).is_err() {
            return Err(Error::Separation("information matrix became singular".into()));
        }
        let mut step = grad.clone();
        cholesky_solve(&hess, p, &mut step);
        if converged {
            // one full Newton step from inside the quadratic basin squares the
            // remaining error, so saturated fits reproduce empirical proportions
            let candidate: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + s).collect();
            if log_likelihood(rows, &candidate) >= ll - 1e-12 * ll.abs().max(1.0) {
                beta = candidate;
            }
            return Ok(LogisticFit {
                coefficients: beta,
                iterations: iter + 1,
                gradient_norm: gnorm,
            });
        }

        let mut t = 1.0;
        let mut accepted = false;
        let mut candidate = vec![0.0; p];
        for _ in 0..40 {
            for j in 0..p {
                candidate[j] = beta[j] + t * step[j];
            }
            let ll_new = log_likelihood(rows, &candidate);
            if ll_new >= ll - 1e-12 * ll.abs().max(1.0) {
                ll = ll_new;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // no ascent possible at machine precision
            return if max_eta > SEPARATED_ETA {
                Err(Error::Separation(format!("fitted linear predictor reached {max_eta:.1}")))
            } else {
                Ok(LogisticFit {
                    coefficients: beta,
                    iterations: iter,
                    gradient_norm: gnorm,
                })
            };
        }
        let max_step = (0..p).map(|j| (candidate[j] - beta[j]).abs()).fold(0.0, f64::max);
        std::mem::swap(&mut beta, &mut candidate);
        let norm = beta.iter().map(|b| b * b).sum::<f64>().sqrt();
        if !norm.is_finite() || norm > opts.separation_threshold {
            return Err(Error::Separation(format!("coefficient norm {norm:.3e} exceeds threshold")));
        }
        if max_step < 1e-13 * (1.0 + norm) && gnorm < 1e3 * opts.tolerance {
            return Ok(LogisticFit {
                coefficients: beta,
                iterations: iter + 1,
                gradient_norm: gnorm,
            });
        }
    }
    let max_eta = (0..rows.len()).map(|i| dot(rows.row(i), &beta).abs()).fold(0.0, f64::max);
    if max_eta > SEPARATED_ETA {
        return Err(Error::Separation(format!("fitted linear predictor reached {max_eta:.1}")));
    }
    Err(Error::NotConverged {
        iterations: opts.max_iterations,
        gradient_norm: gnorm,
    })
}
