use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::covariance::{covariance, CovarianceEstimator, ScoreCovariance};
use super::design::{HazardDesign, TimeSlot};
use super::{Link, ModelSpec};
use crate::error::FitError;
use crate::linalg;
use crate::survival::AugmentedDataset;

/// Hazards used inside scores and weights are kept in this band.
pub const MU_CLAMP: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub max_iter: usize,
    /// Relative log-likelihood change for convergence.
    pub rel_tol: f64,
    /// Maximum absolute score column sum divided by n.
    pub score_tol: f64,
    /// Largest admissible |linear predictor| before separation is declared.
    pub max_eta: f64,
    pub covariance: CovarianceEstimator,
    pub warm_start: Option<Vec<f64>>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iter: 50,
            rel_tol: 1e-10,
            score_tol: 1e-8,
            max_eta: 30.0,
            covariance: CovarianceEstimator::Sandwich,
            warm_start: None,
        }
    }
}

/// A converged discrete hazard model together with the per-row quantities
/// the instability tests need.
#[derive(Clone, Debug)]
pub struct FittedHazardModel {
    pub design: HazardDesign,
    pub theta: Vec<f64>,
    pub loglik: f64,
    /// Fitted hazard per augmented row (pinned rows carry their fixed hazard).
    pub mu: Vec<f64>,
    /// `n x d` score contributions at `theta`.
    pub scores: DMatrix<f64>,
    /// Observed information `XᵀWX` from the final IRLS weights.
    pub information: DMatrix<f64>,
    pub covariance: ScoreCovariance,
    pub converged: bool,
    pub iterations: usize,
    /// Log-likelihood after each accepted update.
    pub loglik_trace: Vec<f64>,
}

impl FittedHazardModel {
    pub fn n(&self) -> usize {
        self.mu.len()
    }

    pub fn dim(&self) -> usize {
        self.theta.len()
    }

    pub fn link(&self) -> Link {
        self.design.link
    }

    /// Hazards at `1..=len` for covariates `x_row`.
    pub fn hazards(&self, x_row: &[f64], len: usize) -> Vec<Option<f64>> {
        (1..=len as u32)
            .map(|t| self.design.hazard(&self.theta, t, x_row))
            .collect()
    }

    pub fn summary(&self) -> ModelSummary {
        ModelSummary {
            link: self.design.link,
            coefficients: self
                .design
                .names
                .iter()
                .cloned()
                .zip(self.theta.iter().copied())
                .collect(),
            loglik: self.loglik,
            converged: self.converged,
            iterations: self.iterations,
            n_rows: self.n(),
            covariance: self.covariance.estimator,
            bread: "observed".to_string(),
        }
    }
}

/// Serializable view of a fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub link: Link,
    pub coefficients: Vec<(String, f64)>,
    pub loglik: f64,
    pub converged: bool,
    pub iterations: usize,
    pub n_rows: usize,
    pub covariance: CovarianceEstimator,
    pub bread: String,
}

struct Pass {
    loglik: f64,
    grad: DVector<f64>,
    info: DMatrix<f64>,
    max_abs_eta: f64,
}

#[inline]
fn clamp_mu(mu: f64) -> f64 {
    mu.clamp(MU_CLAMP, 1.0 - MU_CLAMP)
}

#[inline]
fn bernoulli_loglik(y: u8, mu: f64) -> f64 {
    let mu = clamp_mu(mu);
    if y == 1 {
        mu.ln()
    } else {
        (-mu).ln_1p()
    }
}

/// Score multiplier `h'(η)(y − μ) / (μ(1 − μ))` and IRLS weight `h'(η)² / (μ(1 − μ))`.
#[inline]
fn score_and_weight(link: Link, eta: f64, y: u8) -> (f64, f64) {
    let mu = clamp_mu(link.inverse(eta));
    let dh = link.derivative(eta);
    let v = mu * (1.0 - mu);
    (dh * (y as f64 - mu) / v, dh * dh / v)
}

fn loglik_only(aug: &AugmentedDataset, design: &HazardDesign, theta: &[f64]) -> (f64, f64) {
    let mut ll = 0.0;
    let mut max_eta = 0.0f64;
    for r in 0..aug.n() {
        if let TimeSlot::Coef(j) = design.slot(aug.t_star[r]) {
            let eta = design.eta(theta, j, aug.x_row(r));
            max_eta = max_eta.max(eta.abs());
            ll += bernoulli_loglik(aug.y[r], design.link.inverse(eta));
        }
    }
    (ll, max_eta)
}

fn full_pass(aug: &AugmentedDataset, design: &HazardDesign, theta: &[f64]) -> Pass {
    let d = design.dim();
    let nt = design.n_time;
    let mut grad = DVector::zeros(d);
    let mut info = DMatrix::zeros(d, d);
    let mut ll = 0.0;
    let mut max_eta = 0.0f64;
    for r in 0..aug.n() {
        let TimeSlot::Coef(j) = design.slot(aug.t_star[r]) else {
            continue;
        };
        let x = aug.x_row(r);
        let eta = design.eta(theta, j, x);
        max_eta = max_eta.max(eta.abs());
        ll += bernoulli_loglik(aug.y[r], design.link.inverse(eta));
        let (s, w) = score_and_weight(design.link, eta, aug.y[r]);
        grad[j] += s;
        info[(j, j)] += w;
        for (k, &tk) in design.x_terms.iter().enumerate() {
            let xk = x[tk];
            grad[nt + k] += s * xk;
            info[(nt + k, j)] += w * xk;
            for (l, &tl) in design.x_terms.iter().enumerate().take(k + 1) {
                info[(nt + k, nt + l)] += w * xk * x[tl];
            }
        }
    }
    for a in 0..d {
        for b in (a + 1)..d {
            info[(a, b)] = info[(b, a)];
        }
    }
    Pass {
        loglik: ll,
        grad,
        info,
        max_abs_eta: max_eta,
    }
}

/// Bernoulli log-likelihood of the augmented rows at `theta`.
pub fn loglik(aug: &AugmentedDataset, theta: &[f64], spec: &ModelSpec) -> f64 {
    let design = HazardDesign::for_augmented(aug, spec);
    loglik_only(aug, &design, theta).0
}

/// Per-row scores `h'(η_r)(y_r − μ_r)/(μ_r(1 − μ_r)) · x*_r`, where `x*_r` is
/// the full design row (time dummy followed by x terms).
pub fn score_rows(aug: &AugmentedDataset, theta: &[f64], spec: &ModelSpec) -> DMatrix<f64> {
    let design = HazardDesign::for_augmented(aug, spec);
    design_scores(aug, &design, theta).0
}

fn design_scores(aug: &AugmentedDataset, design: &HazardDesign, theta: &[f64]) -> (DMatrix<f64>, Vec<f64>) {
    let d = design.dim();
    let nt = design.n_time;
    let n = aug.n();
    let mut scores = DMatrix::zeros(n, d);
    let mut mu = vec![0.0; n];
    for r in 0..n {
        match design.slot(aug.t_star[r]) {
            TimeSlot::Coef(j) => {
                let x = aug.x_row(r);
                let eta = design.eta(theta, j, x);
                mu[r] = design.link.inverse(eta);
                let (s, _) = score_and_weight(design.link, eta, aug.y[r]);
                scores[(r, j)] = s;
                for (k, &tk) in design.x_terms.iter().enumerate() {
                    scores[(r, nt + k)] = s * x[tk];
                }
            }
            TimeSlot::Fixed(h) => mu[r] = h,
            TimeSlot::Absent => unreachable!("rows exist at every time with a slot"),
        }
    }
    (scores, mu)
}

fn start_values(aug: &AugmentedDataset, design: &HazardDesign) -> Vec<f64> {
    let mut theta = vec![0.0; design.dim()];
    for (i, &(n, d)) in aug.time_counts().iter().enumerate() {
        if let TimeSlot::Coef(j) = design.slots[i] {
            theta[j] = design.link.link(d as f64 / n as f64);
        }
    }
    theta
}

/// Maximum likelihood fit by iteratively reweighted least squares (Fisher
/// scoring) with step halving.
pub fn fit(aug: &AugmentedDataset, spec: &ModelSpec, opts: &FitOptions) -> Result<FittedHazardModel, FitError> {
    let design = HazardDesign::for_augmented(aug, spec);
    fit_with_design(aug, design, opts)
}

pub(crate) fn fit_with_design(
    aug: &AugmentedDataset,
    design: HazardDesign,
    opts: &FitOptions,
) -> Result<FittedHazardModel, FitError> {
    let n = aug.n();
    if n == 0 {
        return Err(FitError::NoRows);
    }
    let d = design.dim();
    if design.n_time == 0 && d > 0 {
        // Every row is pinned, so the x coefficients are not identified.
        return Err(FitError::RankDeficient(f64::INFINITY));
    }
    let mut theta = match &opts.warm_start {
        Some(w) if w.len() == d && w.iter().all(|v| v.is_finite()) => w.clone(),
        _ => start_values(aug, &design),
    };

    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    let mut prev_ll: Option<f64> = None;
    let mut last_change = f64::INFINITY;
    let mut pass = full_pass(aug, &design, &theta);
    if d > 0 {
        let (min, max) = linalg::min_max_eigen(&pass.info);
        if !(min > 1e-12 * max.max(1e-300)) {
            return Err(FitError::RankDeficient(max / min.max(0.0)));
        }
    }
    loop {
        let score_ok = pass.grad.amax() / n as f64 <= opts.score_tol;
        if let Some(prev) = prev_ll {
            last_change = (pass.loglik - prev).abs() / (pass.loglik.abs() + 0.1);
            if last_change < opts.rel_tol && score_ok {
                converged = true;
                break;
            }
        } else if d == 0 {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        iterations += 1;
        let chol = pass
            .info
            .clone()
            .cholesky()
            .ok_or(FitError::RankDeficient(f64::INFINITY))?;
        let step = chol.solve(&pass.grad);
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + scale * s).collect();
            let (ll, max_eta) = loglik_only(aug, &design, &cand);
            if ll.is_finite() && ll >= pass.loglik - 1e-12 * pass.loglik.abs() {
                accepted = Some((cand, max_eta));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, max_eta)) = accepted else {
            // No ascent direction left at working precision.
            converged = score_ok;
            break;
        };
        if max_eta > opts.max_eta {
            return Err(FitError::Separation(max_eta));
        }
        if cand.iter().any(|v| !v.is_finite()) {
            return Err(FitError::NonFiniteTheta);
        }
        theta = cand;
        prev_ll = Some(pass.loglik);
        pass = full_pass(aug, &design, &theta);
        trace.push(pass.loglik);
    }
    if !converged {
        return Err(FitError::NotConverged {
            iterations,
            last_change,
        });
    }
    if pass.max_abs_eta > opts.max_eta {
        return Err(FitError::Separation(pass.max_abs_eta));
    }
    let (scores, mu) = design_scores(aug, &design, &theta);
    let cov = covariance(&scores, opts.covariance, Some(&pass.info))?;
    Ok(FittedHazardModel {
        design,
        theta,
        loglik: pass.loglik,
        mu,
        scores,
        information: pass.info,
        covariance: cov,
        converged,
        iterations,
        loglik_trace: trace,
    })
}
