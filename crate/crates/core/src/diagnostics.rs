//! Empirical versions of the residual-Gram, sampling and bias quantities,
//! the theorem condition terms, leave-one-out error terms and excess risk.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{LabeledSample, TargetFunction};
use crate::gram::GramDecomposition;
use crate::seed;
use crate::solvers::MniSolution;
use crate::spectrum::{idealized_bias_sup, survival_profile, SpectrumModel, SurvivalProfile};

/// Default grid for bias sups.
pub const DEFAULT_GRID: usize = 8192;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TheoremCase {
    Bos,
    Subg,
}

/// Summands of a theorem condition and their sum.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TheoremTerms {
    pub terms: Vec<f64>,
    pub sum: f64,
}

/// Per-trial maxima of the leave-one-out error terms, each divided by `b`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbcTerms {
    /// Interpolated label noise.
    pub a_max: f64,
    /// Residual-space part of the noiseless interpolant.
    pub b_max: f64,
    /// Leading-space part minus the idealized survival.
    pub c_max: f64,
    /// `max_i (A_i + B_i + C_i)`
    pub sum_max: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub n: usize,
    pub p: usize,
    pub alpha_l: f64,
    pub alpha_u: f64,
    pub ratio: f64,
    pub alpha_bar: f64,
    /// `max_i ||M_{\i} - n I||_op`
    pub loo_sampling_norm: f64,
    pub c: f64,
    /// `||B eta*||_inf`
    pub b: f64,
    /// `||S eta*||_inf`
    pub survival_sup: f64,
    /// `b > 1 - ||S eta*||_inf`
    pub b_exceeds_slack: bool,
    /// `lambda_{p+1}`
    pub lambda_next: f64,
    pub term_bos: Option<TheoremTerms>,
    pub term_subg: Option<TheoremTerms>,
    pub abc: Option<AbcTerms>,
}

impl DiagnosticsReport {
    pub fn survival_profile(&self, spectrum: &SpectrumModel) -> Result<SurvivalProfile> {
        survival_profile(spectrum, self.alpha_bar, self.n)
    }
}

fn symmetric_extremes(m: &DMatrix<f64>) -> (f64, f64) {
    let eig = m.clone().symmetric_eigenvalues();
    (eig.min(), eig.max())
}

fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    let (lo, hi) = symmetric_extremes(m);
    lo.abs().max(hi.abs())
}

/// `alpha_L, alpha_U, c, b` for one sample.
pub fn measure_assumption1(
    gram: &GramDecomposition,
    spectrum: &SpectrumModel,
    target: &TargetFunction,
    grid_size: usize,
) -> Result<DiagnosticsReport> {
    let n = gram.n();
    let v = &gram.leading_features;
    let p = v.nrows();
    if p != spectrum.p() || v.ncols() != n {
        return Err(Error::domain(format!(
            "leading features are {}x{}, expected {}x{n}",
            p,
            v.ncols(),
            spectrum.p()
        )));
    }
    let (alpha_l, alpha_u) = symmetric_extremes(&gram.k_r);
    if !(alpha_l > 1e-12 * alpha_u) {
        return Err(Error::domain(format!(
            "residual gram is rank deficient (alpha_L = {alpha_l:e}, alpha_U = {alpha_u:e})"
        )));
    }
    let ratio = (alpha_u - alpha_l) / (alpha_u + alpha_l);
    let alpha_bar = 2.0 * alpha_u * alpha_l / (alpha_u + alpha_l);

    let full = v * v.transpose();
    let nf = n as f64;
    let loo_sampling_norm = (0..n)
        .into_par_iter()
        .map(|i| {
            let vi = v.column(i);
            let mut m = &full - vi * vi.transpose();
            for k in 0..p {
                m[(k, k)] -= nf;
            }
            spectral_norm_sym(&m)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold(0.0, f64::max);
    let c = ratio + 2.0 / nf * loo_sampling_norm;

    let profile = survival_profile(spectrum, alpha_bar, n)?;
    let sup = idealized_bias_sup(&profile, target, grid_size)?;
    Ok(DiagnosticsReport {
        n,
        p,
        alpha_l,
        alpha_u,
        ratio,
        alpha_bar,
        loo_sampling_norm,
        c,
        b: sup.bias,
        survival_sup: sup.survival,
        b_exceeds_slack: sup.bias > sup.survival_slack(),
        lambda_next: spectrum.first_residual(),
        term_bos: None,
        term_subg: None,
        abc: None,
    })
}

/// Raw summands of the BOS or sub-Gaussian condition; no threshold applied.
pub fn theorem_terms(report: &DiagnosticsReport, n: usize, p: usize, case: TheoremCase) -> Result<TheoremTerms> {
    let b = report.b;
    if !(b > 0.0) {
        return Err(Error::domain("b = 0: theorem terms divide by b"));
    }
    let nf = n as f64;
    let log_n = nf.ln();
    let first = (p as f64 * log_n / nf).sqrt() / b;
    let terms = match case {
        TheoremCase::Bos => vec![
            first,
            report.ratio * (log_n.sqrt() / b + nf.sqrt()),
            report.c * report.c * (p as f64).sqrt(),
        ],
        TheoremCase::Subg => vec![
            first,
            report.ratio * log_n.sqrt() / b,
            (report.lambda_next * nf * log_n / report.alpha_l).sqrt(),
            report.c * log_n.sqrt(),
        ],
    };
    let sum = terms.iter().sum();
    Ok(TheoremTerms { terms, sum })
}

/// Leave-one-out interpolant of `z` at `x_i`, split over `kernels`.
///
/// With `H = K^-1`, the interpolant on all points but `i` has coefficients
/// `H_{-i,-i} z_{-i} - H_{-i,i} H_{i,-i} z_{-i} / H_ii`.
fn loo_values(h: &DMatrix<f64>, z: &[f64], kernels: &[&DMatrix<f64>]) -> Vec<Vec<f64>> {
    let n = z.len();
    let hz = h * nalgebra::DVector::from_column_slice(z);
    (0..n)
        .map(|i| {
            let h_ii = h[(i, i)];
            // H z~ with z~_i = 0
            let tilde_i = hz[i] - h[(i, i)] * z[i];
            let mut out = vec![0.0; kernels.len()];
            for j in (0..n).filter(|&j| j != i) {
                let tilde_j = hz[j] - h[(j, i)] * z[i];
                let u_j = tilde_j - h[(j, i)] * tilde_i / h_ii;
                for (o, k) in out.iter_mut().zip(kernels) {
                    *o += k[(i, j)] * u_j;
                }
            }
            out
        })
        .collect()
}

/// Max over points of the normalized error terms `A`, `B`, `C`.
pub fn measure_abc(
    gram: &GramDecomposition,
    mni: &MniSolution,
    sample: &LabeledSample,
    target: &TargetFunction,
    profile: &SurvivalProfile,
    b: f64,
) -> Result<AbcTerms> {
    if !(b > 0.0) {
        return Err(Error::domain("b = 0: error terms are normalized by b"));
    }
    let n = gram.n();
    let v = &gram.leading_features;
    let coef = target.leading_coefficients(v.nrows())?;
    let survived: Vec<f64> = coef.iter().zip(&profile.survival).map(|(c, s)| c * s).collect();
    let noise = loo_values(&mni.inverse, &sample.noise, &[&gram.k]);
    let clean = loo_values(&mni.inverse, &sample.eta, &[&gram.k_r, &gram.k_g]);
    let mut out = AbcTerms {
        a_max: 0.0,
        b_max: 0.0,
        c_max: 0.0,
        sum_max: 0.0,
    };
    for i in 0..n {
        let s_eta: f64 = survived.iter().zip(v.column(i).iter()).map(|(c, x)| c * x).sum();
        let a = noise[i][0].abs() / b;
        let bb = clean[i][0].abs() / b;
        let c = (clean[i][1] - s_eta).abs() / b;
        out.a_max = out.a_max.max(a);
        out.b_max = out.b_max.max(bb);
        out.c_max = out.c_max.max(c);
        out.sum_max = out.sum_max.max(a + bb + c);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub excess_risk: f64,
    pub mc_points: usize,
    pub std_error: f64,
}

fn sign(v: f64) -> f64 {
    if v >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// `|eta*(x)| 1{sign eta_hat(x) != sign eta*(x)}`, the per-point excess risk.
pub fn excess_risk_integrand(eta_hat: f64, eta_star: f64) -> f64 {
    if sign(eta_hat) != sign(eta_star) {
        eta_star.abs()
    } else {
        0.0
    }
}

/// Mean and standard error of per-point excess risk values.
pub fn risk_from_values(eta_hat: &[f64], eta_star: &[f64]) -> RiskEstimate {
    let m = eta_hat.len();
    let values: Vec<f64> = eta_hat
        .iter()
        .zip(eta_star)
        .map(|(&h, &s)| excess_risk_integrand(h, s))
        .collect();
    let mean = values.iter().sum::<f64>() / m as f64;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0).max(1.0);
    RiskEstimate {
        excess_risk: mean,
        mc_points: m,
        std_error: (var / m as f64).sqrt(),
    }
}

/// Monte-Carlo excess classification risk of `eta_hat` for a Fourier target.
pub fn excess_risk(
    eta_hat: impl Fn(f64) -> f64 + Sync,
    target: &TargetFunction,
    mc_points: usize,
    rng_seed: u64,
) -> Result<RiskEstimate> {
    if mc_points < 100 {
        return Err(Error::domain(format!("mc_points = {mc_points} below 100")));
    }
    let mut rng = seed::rng(rng_seed);
    let xs: Vec<f64> = (0..mc_points).map(|_| rng.random::<f64>()).collect();
    let hat: Vec<f64> = xs.par_iter().map(|&x| eta_hat(x)).collect();
    let star: Vec<f64> = xs.iter().map(|&x| target.eval(x)).collect();
    if let Some((index, &value)) = star.iter().enumerate().find(|(_, v)| v.abs() > 1.0 + 1e-9) {
        return Err(Error::ModelViolation { index, value });
    }
    Ok(risk_from_values(&hat, &star))
}

/// `||K_R - tr(T_{G^perp}) I||_op / tr(T_{G^perp})`.
pub fn residual_concentration(gram: &GramDecomposition, spectrum: &SpectrumModel) -> f64 {
    let trace = spectrum.residual_trace();
    let n = gram.n();
    let shifted = &gram.k_r - DMatrix::identity(n, n) * trace;
    spectral_norm_sym(&shifted) / trace
}

/// `(1/n) ||V V^T - n I||_op` over the leading features.
pub fn sampling_concentration(gram: &GramDecomposition) -> f64 {
    let v = &gram.leading_features;
    let n = v.ncols() as f64;
    let mut m = v * v.transpose();
    for k in 0..m.nrows() {
        m[(k, k)] -= n;
    }
    spectral_norm_sym(&m) / n
}
