//! Kernel eigenvalue models and the idealized survival/bias operators.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::TargetFunction;

/// Parameters `(n, beta, r, q)` of the bi-level ensemble.
///
/// `d = floor(n^beta)` features of which the leading `p = round(n^r)` have
/// unit eigenvalue and the rest share `n^(-beta + r + q)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiLevelParams {
    pub n: usize,
    pub beta: f64,
    pub r: f64,
    pub q: f64,
}

/// `x` rounded to an integer when it is within relative 1e-9 of one, else floored.
fn floor_near_integer(x: f64) -> f64 {
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * x.abs().max(1.0) {
        nearest
    } else {
        x.floor()
    }
}

impl BiLevelParams {
    pub fn new(n: usize, beta: f64, r: f64, q: f64) -> Result<Self> {
        let params = Self { n, beta, r, q };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let Self { n, beta, r, q } = *self;
        if n == 0 {
            return Err(Error::domain("n must be positive"));
        }
        if !(beta.is_finite() && beta > 1.0) {
            return Err(Error::domain(format!("beta = {beta} must exceed 1")));
        }
        if !(r > 0.0 && r < 1.0) {
            return Err(Error::domain(format!("r = {r} must lie in (0, 1)")));
        }
        if !q.is_finite() || q > beta - r + 1e-12 {
            return Err(Error::domain(format!(
                "q = {q} exceeds beta - r = {} (eigenvalue ordering)",
                beta - r
            )));
        }
        let (p, d) = (self.p(), self.d());
        if p == 0 || d <= p {
            return Err(Error::domain(format!("need 1 <= p < d, got p = {p}, d = {d}")));
        }
        Ok(())
    }

    /// Leading subspace dimension `round(n^r)`.
    pub fn p(&self) -> usize {
        (self.n as f64).powf(self.r).round() as usize
    }

    /// Feature count `floor(n^beta)`.
    pub fn d(&self) -> usize {
        floor_near_integer((self.n as f64).powf(self.beta)) as usize
    }

    /// Residual eigenvalue `n^(-beta + r + q)`.
    pub fn residual_eigenvalue(&self) -> f64 {
        (self.n as f64).powf(-self.beta + self.r + self.q)
    }
}

/// One run of equal eigenvalues.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub value: f64,
    pub count: usize,
}

/// A finite non-increasing eigenvalue sequence with a leading subspace of size `p`.
///
/// Stored run-length encoded, since bi-level spectra have millions of
/// repeated residual eigenvalues.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumModel {
    levels: Vec<Level>,
    p: usize,
}

impl SpectrumModel {
    pub fn from_levels(levels: Vec<Level>, p: usize) -> Result<Self> {
        let mut merged: Vec<Level> = Vec::with_capacity(levels.len());
        for level in levels.into_iter().filter(|l| l.count > 0) {
            if !(level.value > 0.0 && level.value.is_finite()) {
                return Err(Error::domain(format!(
                    "eigenvalues must be positive and finite, got {}",
                    level.value
                )));
            }
            match merged.last_mut() {
                Some(last) if last.value == level.value => last.count += level.count,
                Some(last) if last.value < level.value => {
                    return Err(Error::domain("eigenvalues must be non-increasing"))
                }
                _ => merged.push(level),
            }
        }
        let d: usize = merged.iter().map(|l| l.count).sum();
        if p == 0 || p >= d {
            return Err(Error::domain(format!("need 1 <= p < d, got p = {p}, d = {d}")));
        }
        Ok(Self { levels: merged, p })
    }

    pub fn from_eigenvalues(values: &[f64], p: usize) -> Result<Self> {
        Self::from_levels(values.iter().map(|&value| Level { value, count: 1 }).collect(), p)
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    /// Total number of eigenvalues `d`.
    pub fn len(&self) -> usize {
        self.levels.iter().map(|l| l.count).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn p(&self) -> usize {
        self.p
    }

    /// Eigenvalue at zero-based position `index`.
    pub fn eigenvalue(&self, index: usize) -> Option<f64> {
        let mut offset = 0;
        for level in &self.levels {
            if index < offset + level.count {
                return Some(level.value);
            }
            offset += level.count;
        }
        None
    }

    /// The leading `p` eigenvalues.
    pub fn leading(&self) -> Vec<f64> {
        (0..self.p).map(|i| self.eigenvalue(i).unwrap()).collect()
    }

    /// `lambda_{p+1}`, the largest residual eigenvalue.
    pub fn first_residual(&self) -> f64 {
        self.eigenvalue(self.p).unwrap()
    }

    /// Number of residual eigenvalues `d - p`.
    pub fn residual_count(&self) -> usize {
        self.len() - self.p
    }

    /// Residual levels, i.e. the spectrum with the leading `p` entries removed.
    pub fn residual_levels(&self) -> Vec<Level> {
        let mut skip = self.p;
        let mut out = Vec::new();
        for level in &self.levels {
            if skip >= level.count {
                skip -= level.count;
                continue;
            }
            out.push(Level {
                value: level.value,
                count: level.count - skip,
            });
            skip = 0;
        }
        out
    }

    /// `tr(T_{G^perp}) = sum_{l > p} lambda_l`.
    pub fn residual_trace(&self) -> f64 {
        self.residual_levels()
            .iter()
            .map(|l| l.value * l.count as f64)
            .sum()
    }

    /// `tr(T_{G^perp}^2)`.
    pub fn residual_trace_sq(&self) -> f64 {
        self.residual_levels()
            .iter()
            .map(|l| l.value * l.value * l.count as f64)
            .sum()
    }
}

/// Bi-level spectrum: `p` unit eigenvalues followed by `d - p` copies of `n^(-beta+r+q)`.
pub fn build_bilevel(params: &BiLevelParams) -> Result<SpectrumModel> {
    params.validate()?;
    let (p, d) = (params.p(), params.d());
    SpectrumModel::from_levels(
        vec![
            Level { value: 1.0, count: p },
            Level {
                value: params.residual_eigenvalue(),
                count: d - p,
            },
        ],
        p,
    )
}

/// Diagonal survival `s_l = n lambda_l / (alpha_bar + n lambda_l)` and bias
/// `1 - s_l` over the leading eigenvalues.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurvivalProfile {
    pub alpha_bar: f64,
    pub n: usize,
    pub survival: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn survival_profile(model: &SpectrumModel, alpha_bar: f64, n: usize) -> Result<SurvivalProfile> {
    if !(alpha_bar > 0.0 && alpha_bar.is_finite()) {
        return Err(Error::domain(format!("alpha_bar = {alpha_bar} must be positive")));
    }
    let nf = n as f64;
    let (survival, bias) = model
        .leading()
        .into_iter()
        .map(|lambda| {
            let signal = nf * lambda;
            let denom = alpha_bar + signal;
            (signal / denom, alpha_bar / denom)
        })
        .unzip();
    Ok(SurvivalProfile {
        alpha_bar,
        n,
        survival,
        bias,
    })
}

/// Grid sups of the idealized bias and survival applied to a target.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiasSup {
    /// `b = ||B eta*||_inf`
    pub bias: f64,
    /// `||S eta*||_inf`
    pub survival: f64,
}

impl BiasSup {
    /// Right side of `b <~ 1 - ||S eta*||_inf`.
    pub fn survival_slack(&self) -> f64 {
        1.0 - self.survival
    }
}

pub fn idealized_bias_sup(
    profile: &SurvivalProfile,
    target: &TargetFunction,
    grid_size: usize,
) -> Result<BiasSup> {
    if grid_size < 2 {
        return Err(Error::domain(format!("grid_size = {grid_size} must be at least 2")));
    }
    let bias = target.weighted(&profile.bias)?.grid_sup(grid_size);
    let survival = target.weighted(&profile.survival)?.grid_sup(grid_size);
    Ok(BiasSup { bias, survival })
}
