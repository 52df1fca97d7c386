//! Minimum-norm interpolation and the hard-margin kernel SVM.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::Serialize;

use crate::error::{Error, Result};

/// Largest accepted `||K||_1 ||K^-1||_1`.
pub const MAX_CONDITION: f64 = 1e12;

fn check_system(k: &DMatrix<f64>, y: &[f64]) -> Result<usize> {
    let n = k.nrows();
    if k.ncols() != n || y.len() != n {
        return Err(Error::domain(format!(
            "gram is {}x{}, labels have length {}",
            k.nrows(),
            k.ncols(),
            y.len()
        )));
    }
    if n == 0 {
        return Err(Error::domain("empty sample"));
    }
    Ok(n)
}

fn norm1(m: &DMatrix<f64>) -> f64 {
    m.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Cholesky factor and inverse of a PD matrix, rejecting ill-conditioned input.
pub(crate) fn factor(k: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, DMatrix<f64>, f64)> {
    let chol = Cholesky::new(k.clone()).ok_or(Error::Conditioning {
        condition: f64::INFINITY,
    })?;
    let inverse = chol.inverse();
    let condition = norm1(k) * norm1(&inverse);
    if !(condition <= MAX_CONDITION) {
        return Err(Error::Conditioning { condition });
    }
    Ok((chol, inverse, condition))
}

/// `beta = K^-1 y` together with the leave-one-out quantities.
#[derive(Clone, Debug, Serialize)]
pub struct MniSolution {
    pub beta: Vec<f64>,
    /// `y_i eta_hat_{\i}(x_i)`
    pub loo_margins: Vec<f64>,
    /// `(K^-1)_ii`
    pub inverse_diagonal: Vec<f64>,
    pub condition: f64,
    /// Max `|(K beta)_i - y_i|`.
    pub residual: f64,
    #[serde(skip)]
    pub inverse: DMatrix<f64>,
}

pub fn solve_mni(k: &DMatrix<f64>, y: &[f64]) -> Result<MniSolution> {
    let n = check_system(k, y)?;
    let (chol, inverse, condition) = factor(k)?;
    let rhs = DVector::from_column_slice(y);
    let mut beta = chol.solve(&rhs);
    // one step of iterative refinement
    let correction = chol.solve(&(&rhs - k * &beta));
    beta += correction;
    let residual = (k * &beta - &rhs).amax();
    let inverse_diagonal: Vec<f64> = (0..n).map(|i| inverse[(i, i)]).collect();
    let loo_margins = (0..n)
        .map(|i| 1.0 - y[i] * beta[i] / inverse_diagonal[i])
        .collect();
    Ok(MniSolution {
        beta: beta.as_slice().to_vec(),
        loo_margins,
        inverse_diagonal,
        condition,
        residual,
        inverse,
    })
}

/// `y_i eta_hat_{\i}(x_i)` by refitting the interpolant without each point.
pub fn loo_refit_margins(k: &DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>> {
    let n = check_system(k, y)?;
    (0..n)
        .map(|i| {
            let keep: Vec<usize> = (0..n).filter(|&j| j != i).collect();
            if keep.is_empty() {
                return Ok(0.0);
            }
            let sub = k.select_rows(&keep).select_columns(&keep);
            let y_sub: Vec<f64> = keep.iter().map(|&j| y[j]).collect();
            let fit = solve_mni(&sub, &y_sub)?;
            let value: f64 = keep.iter().zip(&fit.beta).map(|(&j, b)| b * k[(i, j)]).sum();
            Ok(y[i] * value)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SvmOptions {
    /// KKT tolerance; `None` means `1e-9 * max_i K_ii`.
    pub tol: Option<f64>,
    /// Maximum number of coordinate sweeps.
    pub max_iter: usize,
}

impl Default for SvmOptions {
    fn default() -> Self {
        Self {
            tol: None,
            max_iter: 1_000_000,
        }
    }
}

/// KKT residuals of a dual point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct KktReport {
    /// `min_i y_i beta_i`
    pub dual_feasibility: f64,
    /// `min_i y_i eta_hat(x_i)`
    pub min_margin: f64,
    /// `max_i |beta_i| (margin_i - 1)`
    pub complementary_slackness: f64,
    /// `max_i |beta_i| |margin_i - 1|`, for reporting.
    pub complementary_slackness_abs: f64,
    /// Largest projected-gradient violation.
    pub max_violation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct SvmSolution {
    pub beta: Vec<f64>,
    /// `y_i eta_hat(x_i)`
    pub margins: Vec<f64>,
    pub support_set: Vec<usize>,
    pub duality_gap: f64,
    pub iterations: usize,
    pub tol: f64,
    pub kkt: KktReport,
}

impl SvmSolution {
    /// Dual feasibility, primal feasibility, complementary slackness and the gap, at `tol`.
    pub fn certify(&self) -> bool {
        let n = self.beta.len() as f64;
        self.kkt.dual_feasibility >= -1e-12
            && self.kkt.min_margin >= 1.0 - self.tol
            && self.kkt.complementary_slackness <= self.tol
            && self.duality_gap <= 10.0 * self.tol * n
    }
}

/// Dot product in twice the working precision (Ogita, Rump and Oishi).
fn dot2(a: &[f64], b: &[f64]) -> f64 {
    let (mut sum, mut err) = (0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let p = x * y;
        let p_err = x.mul_add(y, -p);
        let t = sum + p;
        let z = t - sum;
        err += (sum - (t - z)) + (p - z) + p_err;
        sum = t;
    }
    sum + err
}

struct Dual<'a> {
    q: DMatrix<f64>,
    y: &'a [f64],
}

impl Dual<'_> {
    /// `Q alpha` with compensated dot products.
    fn gradient(&self, alpha: &DVector<f64>) -> DVector<f64> {
        let a = alpha.as_slice();
        DVector::from_iterator(a.len(), (0..a.len()).map(|i| dot2(self.q.column(i).as_slice(), a)))
    }

    fn violation(alpha: &DVector<f64>, q_alpha: &DVector<f64>) -> f64 {
        alpha
            .iter()
            .zip(q_alpha.iter())
            .map(|(&a, &qa)| {
                let g = 1.0 - qa;
                if a > 0.0 {
                    g.abs()
                } else {
                    g.max(0.0)
                }
            })
            .fold(0.0, f64::max)
    }

    /// Stopping residual: the projected-gradient violation, complementary
    /// slackness and the certified gap (scaled by `1 / (10 n)`) together.
    fn residual(alpha: &DVector<f64>, q_alpha: &DVector<f64>) -> f64 {
        let n = alpha.len() as f64;
        let slackness = alpha
            .iter()
            .zip(q_alpha.iter())
            .map(|(&a, &qa)| a * (qa - 1.0))
            .fold(0.0, f64::max);
        let min_margin = q_alpha.iter().copied().fold(f64::INFINITY, f64::min);
        if !(min_margin > 0.0) {
            return f64::INFINITY;
        }
        let quad = alpha.dot(q_alpha);
        let gap = 0.5 * quad / (min_margin * min_margin) - (alpha.sum() - 0.5 * quad);
        let infeasible = (1.0 - min_margin).max(0.0);
        Self::violation(alpha, q_alpha)
            .max(slackness)
            .max(infeasible)
            .max(gap / (10.0 * n))
    }

    fn solve_on(&self, support: &[usize]) -> Option<DVector<f64>> {
        let q_ss = self.q.select_rows(support).select_columns(support);
        let chol = Cholesky::new(q_ss.clone())?;
        let m = support.len();
        let mut sol = chol.solve(&DVector::from_element(m, 1.0));
        for _ in 0..3 {
            let r = DVector::from_iterator(m, (0..m).map(|i| 1.0 - dot2(q_ss.column(i).as_slice(), sol.as_slice())));
            sol += chol.solve(&r);
        }
        Some(sol)
    }

    /// Primal-feasible active-set iterations started from the current support.
    ///
    /// Each step solves `Q_SS alpha_S = 1`; a step that leaves the orthant is cut
    /// at the boundary and the blocking coordinates are dropped, otherwise the
    /// most violated coordinate outside `S` is added.
    fn polish(&self, alpha: &DVector<f64>) -> Option<DVector<f64>> {
        let n = alpha.len();
        let mut current = alpha.clone();
        let mut support: Vec<usize> = (0..n).filter(|&i| current[i] > 0.0).collect();
        if support.is_empty() {
            return None;
        }
        for _ in 0..4 * n + 4 {
            let z = self.solve_on(&support)?;
            let blocking = support
                .iter()
                .zip(z.iter())
                .filter(|(_, &v)| !(v > 0.0))
                .map(|(&i, &v)| (i, current[i] / (current[i] - v)))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            if let Some((leaving, t)) = blocking {
                let t = t.clamp(0.0, 1.0);
                for (&i, &v) in support.iter().zip(z.iter()) {
                    current[i] += t * (v - current[i]);
                }
                current[leaving] = 0.0;
                let floor = 1e-15 * current.amax();
                current.iter_mut().for_each(|v| {
                    if *v <= floor {
                        *v = 0.0
                    }
                });
                support.retain(|&i| current[i] > 0.0);
                if support.is_empty() {
                    return None;
                }
                continue;
            }
            current.fill(0.0);
            for (&i, &v) in support.iter().zip(z.iter()) {
                current[i] = v;
            }
            let q_alpha = self.gradient(&current);
            let entering = (0..n)
                .filter(|&i| current[i] == 0.0)
                .map(|i| (i, 1.0 - q_alpha[i]))
                .filter(|&(_, g)| g > 0.0)
                .max_by(|a, b| a.1.total_cmp(&b.1));
            match entering {
                Some((i, _)) => {
                    support.push(i);
                    support.sort_unstable();
                }
                None => {
                    // pull support margins down to at most one
                    let top = support.iter().map(|&i| q_alpha[i]).fold(0.0, f64::max);
                    if top > 1.0 {
                        current /= top;
                    }
                    return Some(current);
                }
            }
        }
        Some(current)
    }
}

/// Hard-margin SVM dual by projected coordinate ascent on `alpha_i = y_i beta_i >= 0`.
///
/// Starts from the sign-clipped interpolant when `K` factors, otherwise from zero.
/// Every few sweeps the solver tries the exact solution on the current support.
pub fn solve_svm(k: &DMatrix<f64>, y: &[f64], options: SvmOptions) -> Result<SvmSolution> {
    let n = check_system(k, y)?;
    if let Some(i) = (0..n).find(|&i| !(k[(i, i)] > 0.0)) {
        return Err(Error::domain(format!("K_{i}{i} = {} is not positive", k[(i, i)])));
    }
    if y.iter().any(|&v| v != 1.0 && v != -1.0) {
        return Err(Error::domain("labels must be +-1"));
    }
    let max_diag = (0..n).map(|i| k[(i, i)]).fold(0.0, f64::max);
    let tol = options.tol.unwrap_or(1e-9 * max_diag);
    let dual = Dual {
        q: DMatrix::from_fn(n, n, |i, j| y[i] * y[j] * k[(i, j)]),
        y,
    };

    let mut alpha = match solve_mni(k, y) {
        Ok(mni) => DVector::from_iterator(n, (0..n).map(|i| (y[i] * mni.beta[i]).max(0.0))),
        Err(_) => DVector::zeros(n),
    };
    let mut q_alpha = dual.gradient(&alpha);
    let mut iterations = 0;
    let mut violation = Dual::residual(&alpha, &q_alpha);
    const POLISH_EVERY: usize = 10;
    const REFRESH_EVERY: usize = 100;

    while !(violation <= tol) {
        if iterations >= options.max_iter {
            return Err(Error::NotConverged {
                iterations,
                residual: violation,
            });
        }
        for i in 0..n {
            let q_ii = dual.q[(i, i)];
            let updated = (alpha[i] + (1.0 - q_alpha[i]) / q_ii).max(0.0);
            let step = updated - alpha[i];
            if step != 0.0 {
                alpha[i] = updated;
                q_alpha.axpy(step, &dual.q.column(i), 1.0);
            }
        }
        iterations += 1;
        if iterations % REFRESH_EVERY == 0 {
            q_alpha = dual.gradient(&alpha);
        }
        violation = Dual::residual(&alpha, &q_alpha);
        if !(violation <= tol) && iterations % POLISH_EVERY == 0 {
            if let Some(candidate) = dual.polish(&alpha) {
                let q_candidate = dual.gradient(&candidate);
                let candidate_violation = Dual::residual(&candidate, &q_candidate);
                if candidate_violation < violation {
                    alpha = candidate;
                    q_alpha = q_candidate;
                    violation = candidate_violation;
                }
            }
        }
    }
    Ok(finish(&dual, alpha, iterations, tol))
}

fn finish(dual: &Dual<'_>, alpha: DVector<f64>, iterations: usize, tol: f64) -> SvmSolution {
    let n = alpha.len();
    let q_alpha = dual.gradient(&alpha);
    let beta: Vec<f64> = (0..n).map(|i| dual.y[i] * alpha[i]).collect();
    let margins: Vec<f64> = q_alpha.iter().copied().collect();
    let beta_max = beta.iter().map(|b| b.abs()).fold(0.0, f64::max);
    let support_set = (0..n).filter(|&i| beta[i].abs() > tol * beta_max).collect();
    let quad = alpha.dot(&q_alpha);
    let sum: f64 = alpha.sum();
    let min_margin = margins.iter().copied().fold(f64::INFINITY, f64::min);
    let primal = 0.5 * quad / (min_margin * min_margin);
    let dual_value = sum - 0.5 * quad;
    let kkt = KktReport {
        dual_feasibility: alpha.iter().copied().fold(f64::INFINITY, f64::min),
        min_margin,
        complementary_slackness: (0..n)
            .map(|i| alpha[i] * (margins[i] - 1.0))
            .fold(0.0, f64::max),
        complementary_slackness_abs: (0..n)
            .map(|i| alpha[i] * (margins[i] - 1.0).abs())
            .fold(0.0, f64::max),
        max_violation: Dual::violation(&alpha, &q_alpha),
    };
    SvmSolution {
        beta,
        margins,
        support_set,
        duality_gap: (primal - dual_value).max(0.0),
        iterations,
        tol,
        kkt,
    }
}

/// `sum_i beta_i k(x, x_i)`, with `kernel_at(i) = k(x, x_i)`.
pub fn predict(beta: &[f64], kernel_at: impl Fn(usize) -> f64) -> f64 {
    beta.iter().enumerate().map(|(i, b)| b * kernel_at(i)).sum()
}
