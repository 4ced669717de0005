//! Dummy-coded logistic regression of a binary outcome on income bracket.
//!
//! The model is `ln(odds) = β0 + Σ βj·xj`, where `xj` indicates membership in
//! the j-th non-reference bracket. Coefficients are fitted by maximum
//! likelihood with Newton–Raphson (IRLS), halving the step whenever a full
//! step would lower the log-likelihood.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ingest::IncomeBracket;

/// Fitted probabilities closer than this to 0 or 1 signal separation.
const SEPARATION_EPS: f64 = 1e-12;
/// Smallest eigenvalue ratio of XᵀX accepted as full rank.
const RANK_RTOL: f64 = 1e-12;
const MAX_HALVINGS: usize = 40;
/// Relative log-likelihood change below which a step counts as no change.
/// Near the optimum the quadratic gain of a Newton step is far below the
/// rounding noise of the likelihood sum.
const LL_NOISE_RTOL: f64 = 1e-12;

pub fn sigmoid(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// ln(1 + e^η) without overflow.
fn softplus(eta: f64) -> f64 {
    eta.max(0.0) + (-eta.abs()).exp().ln_1p()
}

/// Which brackets occur and which one is absorbed into the intercept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Encoding {
    brackets_present: Vec<IncomeBracket>,
    reference: IncomeBracket,
    /// Keeps a dummy for the reference bracket too; always rank deficient.
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    full_dummy: bool,
}

impl Encoding {
    pub fn new(present: impl IntoIterator<Item = IncomeBracket>, reference: IncomeBracket) -> Result<Self> {
        let mut brackets_present: Vec<IncomeBracket> = present.into_iter().collect();
        brackets_present.sort();
        brackets_present.dedup();
        if !brackets_present.contains(&reference) {
            return Err(Error::Config(format!(
                "reference bracket {reference} does not occur in the data (present: {})",
                brackets_present.iter().map(|b| b.code()).collect::<Vec<_>>().join(", ")
            )));
        }
        Ok(Self { brackets_present, reference, full_dummy: false })
    }

    /// Uses the lowest present bracket as reference.
    pub fn lowest_reference(present: impl IntoIterator<Item = IncomeBracket>) -> Result<Self> {
        let present: Vec<IncomeBracket> = present.into_iter().collect();
        let lowest = present.iter().min().copied().ok_or_else(|| Error::Domain("no brackets present".into()))?;
        Self::new(present, lowest)
    }

    /// An intercept plus one dummy per bracket, as some packages build by
    /// default. Useful only to demonstrate the rank deficiency.
    pub fn with_full_dummies(mut self) -> Self {
        self.full_dummy = true;
        self
    }

    pub fn brackets_present(&self) -> &[IncomeBracket] {
        &self.brackets_present
    }

    pub fn reference(&self) -> IncomeBracket {
        self.reference
    }

    /// Brackets with a dummy column, in bracket order.
    pub fn dummies(&self) -> Vec<IncomeBracket> {
        self.brackets_present.iter().copied().filter(|b| self.full_dummy || *b != self.reference).collect()
    }

    pub fn n_columns(&self) -> usize {
        1 + self.dummies().len()
    }

    /// Design row `(1, x1, …)` for `bracket`.
    pub fn row(&self, bracket: IncomeBracket) -> Result<Vec<f64>> {
        if !self.brackets_present.contains(&bracket) {
            return Err(Error::Domain(format!("bracket {bracket} is not part of the encoding")));
        }
        let mut row = Vec::with_capacity(self.n_columns());
        row.push(1.0);
        row.extend(self.dummies().into_iter().map(|d| if d == bracket { 1.0 } else { 0.0 }));
        Ok(row)
    }
}

/// Row-major design matrix with its 0/1 response.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    encoding: Encoding,
    n_cols: usize,
    x: Vec<f64>,
    y: Vec<f64>,
}

pub fn build_design(outcomes: &[(IncomeBracket, bool)], encoding: &Encoding) -> Result<Design> {
    if encoding.full_dummy {
        return Err(Error::RankDeficient(
            "intercept plus a dummy for every bracket: the dummies sum to the intercept column".into(),
        ));
    }
    let n_cols = encoding.n_columns();
    let mut x = Vec::with_capacity(outcomes.len() * n_cols);
    let mut y = Vec::with_capacity(outcomes.len());
    for &(b, outcome) in outcomes {
        x.extend(encoding.row(b)?);
        y.push(if outcome { 1.0 } else { 0.0 });
    }
    Ok(Design { encoding: encoding.clone(), n_cols, x, y })
}

impl Design {
    pub fn n_rows(&self) -> usize {
        self.y.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn response(&self) -> &[f64] {
        &self.y
    }

    pub fn encoding(&self) -> &Encoding {
        &self.encoding
    }

    fn eta(&self, i: usize, beta: &[f64]) -> f64 {
        self.row(i).iter().zip(beta).map(|(a, b)| a * b).sum()
    }

    /// Bernoulli log-likelihood at `beta`.
    pub fn log_likelihood(&self, beta: &[f64]) -> f64 {
        (0..self.n_rows())
            .map(|i| {
                let eta = self.eta(i, beta);
                self.y[i] * eta - softplus(eta)
            })
            .sum()
    }

    /// Score vector Xᵀ(y − p).
    pub fn score(&self, beta: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.n_cols];
        for i in 0..self.n_rows() {
            let r = self.y[i] - sigmoid(self.eta(i, beta));
            for (gj, xj) in g.iter_mut().zip(self.row(i)) {
                *gj += xj * r;
            }
        }
        g
    }

    /// Score, observed information XᵀWX, and the smallest fitted min(p, 1−p).
    fn newton_terms(&self, beta: &[f64]) -> (DVector<f64>, DMatrix<f64>, f64) {
        let k = self.n_cols;
        let mut g = DVector::zeros(k);
        let mut h = DMatrix::zeros(k, k);
        let mut closest = 0.5f64;
        for i in 0..self.n_rows() {
            let eta = self.eta(i, beta);
            let p = sigmoid(eta);
            closest = closest.min(sigmoid(-eta.abs()));
            let w = p * (1.0 - p);
            let r = self.y[i] - p;
            let row = self.row(i);
            for a in 0..k {
                g[a] += row[a] * r;
                if row[a] == 0.0 {
                    continue;
                }
                for b in a..k {
                    h[(a, b)] += w * row[a] * row[b];
                }
            }
        }
        for a in 0..k {
            for b in 0..a {
                h[(a, b)] = h[(b, a)];
            }
        }
        (g, h, closest)
    }

    fn check_rank(&self) -> Result<()> {
        let k = self.n_cols;
        let mut xtx = DMatrix::<f64>::zeros(k, k);
        for i in 0..self.n_rows() {
            let row = self.row(i);
            for a in 0..k {
                for b in 0..k {
                    xtx[(a, b)] += row[a] * row[b];
                }
            }
        }
        let eig = xtx.symmetric_eigenvalues();
        let max = eig.iter().copied().fold(0.0f64, f64::max);
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        if max <= 0.0 || min <= RANK_RTOL * max {
            return Err(Error::RankDeficient(format!(
                "XᵀX eigenvalue ratio {:.3e} over {} columns",
                if max > 0.0 { min / max } else { 0.0 },
                k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitSettings {
    /// Stop once no coefficient moves by more than this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Score max-norm required before a fit is reported as converged.
    pub gradient_tolerance: f64,
}

impl Default for FitSettings {
    fn default() -> Self {
        Self { tolerance: 1e-10, max_iterations: 50, gradient_tolerance: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LogitModel {
    pub encoding: Encoding,
    /// β0 followed by one coefficient per dummy, in bracket order.
    pub beta: Vec<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
    pub n_observations: usize,
    pub gradient_max_norm: f64,
    /// Log-likelihood at the start and after each iteration.
    #[serde(skip)]
    pub log_likelihood_trace: Vec<f64>,
}

fn max_abs(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// Maximum-likelihood fit starting from β = 0.
pub fn fit(design: &Design, settings: &FitSettings) -> Result<LogitModel> {
    let (n, k) = (design.n_rows(), design.n_cols());
    if n < k {
        return Err(Error::Domain(format!("{n} observations cannot identify {k} coefficients")));
    }
    design.check_rank()?;
    if let Some(pure) = pure_brackets(design) {
        return Err(Error::Separation(pure));
    }

    let mut beta = vec![0.0; k];
    let mut ll = design.log_likelihood(&beta);
    let mut trace = vec![ll];
    let (mut grad, mut hess, _) = design.newton_terms(&beta);
    let mut iterations = 0;
    let mut last_change = f64::INFINITY;
    let mut converged = false;

    loop {
        let gmax = max_abs(grad.iter().copied());
        if iterations > 0 && last_change <= settings.tolerance && gmax <= settings.gradient_tolerance {
            converged = true;
            break;
        }
        if iterations >= settings.max_iterations {
            break;
        }

        let delta = hess
            .clone()
            .cholesky()
            .ok_or_else(|| Error::RankDeficient("information matrix is not positive definite".into()))?
            .solve(&grad);

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let cand: Vec<f64> = beta.iter().zip(delta.iter()).map(|(b, d)| b + step * d).collect();
            let cand_ll = design.log_likelihood(&cand);
            if cand_ll >= ll - LL_NOISE_RTOL * (1.0 + ll.abs()) {
                accepted = Some((cand, cand_ll));
                break;
            }
            step *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((cand, cand_ll)) => {
                last_change = max_abs(cand.iter().zip(&beta).map(|(a, b)| a - b));
                beta = cand;
                ll = cand_ll;
            }
            // No ascent possible at working precision.
            None => last_change = 0.0,
        }
        trace.push(ll);

        let (g, h, closest) = design.newton_terms(&beta);
        if closest < SEPARATION_EPS {
            return Err(separation(design));
        }
        grad = g;
        hess = h;
    }

    let gradient_max_norm = max_abs(grad.iter().copied());
    Ok(LogitModel {
        encoding: design.encoding.clone(),
        beta,
        log_likelihood: ll,
        iterations,
        converged,
        n_observations: n,
        gradient_max_norm,
        log_likelihood_trace: trace,
    })
}

/// Brackets whose outcomes are all 0 or all 1. With a dummy per bracket this
/// is exactly the condition under which the likelihood has no maximum.
fn pure_brackets(design: &Design) -> Option<String> {
    let mut pure = Vec::new();
    for b in design.encoding.brackets_present() {
        let Ok(row) = design.encoding.row(*b) else { continue };
        let mut counts = [0usize; 2];
        for i in (0..design.n_rows()).filter(|&i| design.row(i) == row.as_slice()) {
            counts[design.y[i] as usize] += 1;
        }
        if counts[0] + counts[1] > 0 && (counts[0] == 0 || counts[1] == 0) {
            pure.push(b.code());
        }
    }
    (!pure.is_empty()).then(|| format!("bracket(s) {} (all outcomes identical)", pure.join(", ")))
}

fn separation(design: &Design) -> Error {
    Error::Separation(pure_brackets(design).unwrap_or_else(|| "the fitted probabilities".into()))
}

/// Convenience: encode, build and fit in one call.
pub fn fit_outcomes(
    outcomes: &[(IncomeBracket, bool)],
    encoding: &Encoding,
    settings: &FitSettings,
) -> Result<LogitModel> {
    fit(&build_design(outcomes, encoding)?, settings)
}

impl LogitModel {
    /// Builds a model from given coefficients, for evaluating published equations.
    pub fn from_coefficients(encoding: Encoding, beta: Vec<f64>) -> Result<Self> {
        if beta.len() != encoding.n_columns() {
            return Err(Error::invalid(
                "beta",
                format!("expected {} coefficients, got {}", encoding.n_columns(), beta.len()),
            ));
        }
        Ok(Self {
            encoding,
            beta,
            log_likelihood: f64::NAN,
            iterations: 0,
            converged: false,
            n_observations: 0,
            gradient_max_norm: f64::NAN,
            log_likelihood_trace: Vec::new(),
        })
    }

    pub fn linear_predictor(&self, bracket: IncomeBracket) -> Result<f64> {
        let row = self.encoding.row(bracket)?;
        Ok(row.iter().zip(&self.beta).map(|(x, b)| x * b).sum())
    }

    /// σ(β0 + Σ βj·xj) for `bracket`.
    pub fn predict_prob(&self, bracket: IncomeBracket) -> Result<f64> {
        Ok(sigmoid(self.linear_predictor(bracket)?))
    }

    /// Coefficient for `bracket`'s dummy; zero for the reference.
    pub fn coefficient(&self, bracket: IncomeBracket) -> Option<f64> {
        if bracket == self.encoding.reference {
            return Some(0.0);
        }
        let pos = self.encoding.dummies().iter().position(|b| *b == bracket)?;
        Some(self.beta[pos + 1])
    }
}

pub fn predict_prob(model: &LogitModel, bracket: IncomeBracket) -> Result<f64> {
    model.predict_prob(bracket)
}
