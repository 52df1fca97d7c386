//! Seeded trial harness: single trials, figure-1 overlays, the SVP heatmap,
//! risk sweeps and concentration sweeps.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{
    self, excess_risk, measure_abc, measure_assumption1, theorem_terms, DiagnosticsReport, RiskEstimate,
    TheoremCase,
};
use crate::error::{Error, Result};
use crate::features::{
    labels_from_eta, sample_sampled_target, sample_target, uniform_points, FeatureKind, FourierIndexing,
    FourierMap, LabeledSample, SubGaussianFamily, TargetFunction,
};
use crate::gram::{
    assemble_explicit_gram, assemble_fourier_gram, assemble_gaussian_wishart, FourierKernel, GramDecomposition,
    DEFAULT_EXPLICIT_BUDGET,
};
use crate::seed::{self, tag};
use crate::solvers::{predict, solve_mni, solve_svm, MniSolution, SvmOptions, SvmSolution};
use crate::spectrum::{build_bilevel, BiLevelParams, Level, SpectrumModel};
use crate::stats::median;
use crate::svp::{cross_check_solver, detect_svp, SvpVerdict};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureFamily {
    Fourier,
    Gaussian,
    Rademacher,
}

impl FeatureFamily {
    fn kind(self) -> Option<FeatureKind> {
        match self {
            Self::Fourier => None,
            Self::Gaussian => Some(FeatureKind::Gaussian),
            Self::Rademacher => Some(FeatureKind::Rademacher),
        }
    }
}

impl std::str::FromStr for FeatureFamily {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fourier" => Ok(Self::Fourier),
            "gaussian" => Ok(Self::Gaussian),
            "rademacher" => Ok(Self::Rademacher),
            other => Err(Error::domain(format!("unknown feature family `{other}`"))),
        }
    }
}

/// How the residual Gram of a sampled family is realized.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResidualMode {
    /// Exact Wishart draw (Gaussian only).
    #[default]
    Wishart,
    /// Materialized features, subject to the `d * n` budget.
    Explicit,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub bilevel: BiLevelParams,
    pub family: FeatureFamily,
    pub target_support_half: usize,
    pub master_seed: u64,
    pub trials: usize,
    pub svm_tol: Option<f64>,
    pub svm_max_iter: usize,
    pub tau: f64,
    pub indexing: FourierIndexing,
    pub residual_mode: ResidualMode,
    /// One target for every trial, drawn from the master seed.
    pub fixed_target: bool,
    /// Solve the SVM and cross-check the verdict.
    pub cross_check: bool,
    pub diagnostics: bool,
    pub abc: bool,
    pub grid_size: usize,
    /// Monte-Carlo test points for excess risk; 0 disables risk.
    pub mc_points: usize,
    pub explicit_budget: u128,
    pub block_size: usize,
}

impl TrialConfig {
    pub fn new(bilevel: BiLevelParams, family: FeatureFamily, master_seed: u64) -> Self {
        Self {
            bilevel,
            family,
            target_support_half: 3,
            master_seed,
            trials: 25,
            svm_tol: None,
            svm_max_iter: 1_000_000,
            tau: crate::svp::DEFAULT_TAU,
            indexing: FourierIndexing::default(),
            residual_mode: ResidualMode::default(),
            fixed_target: false,
            cross_check: true,
            diagnostics: false,
            abc: false,
            grid_size: diagnostics::DEFAULT_GRID,
            mc_points: 0,
            explicit_budget: DEFAULT_EXPLICIT_BUDGET,
            block_size: 1024,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.bilevel.validate()?;
        if self.trials == 0 {
            return Err(Error::domain("trials must be at least 1"));
        }
        if !(self.tau >= 0.0) {
            return Err(Error::domain("tau must be nonnegative"));
        }
        if self.grid_size < 2 {
            return Err(Error::domain("grid_size must be at least 2"));
        }
        if self.mc_points != 0 && self.mc_points < 100 {
            return Err(Error::domain("mc_points must be 0 or at least 100"));
        }
        Ok(())
    }

    fn svm_options(&self) -> SvmOptions {
        SvmOptions {
            tol: self.svm_tol,
            max_iter: self.svm_max_iter,
        }
    }

    fn target_seed(&self, trial_seed: u64) -> u64 {
        if self.fixed_target {
            seed::derive(self.master_seed, &[tag::TARGET])
        } else {
            seed::derive(trial_seed, &[tag::TARGET])
        }
    }
}

/// One seeded sample with its Gram decomposition.
#[derive(Clone, Debug)]
pub struct TrialInstance {
    pub index: u64,
    pub seed: u64,
    /// Sample points on `[0, 1)`; `None` for sampled feature families.
    pub points: Option<Vec<f64>>,
    pub map: Option<FourierMap>,
    pub spectrum: SpectrumModel,
    pub gram: GramDecomposition,
    pub target: TargetFunction,
    pub sample: LabeledSample,
    /// Points where `eta*` left `[-1, 1]` and was clamped (sampled families).
    pub eta_clamped: usize,
}

impl TrialInstance {
    pub fn kernel(&self) -> Option<Result<FourierKernel>> {
        self.map.map(|m| FourierKernel::new(m, &self.spectrum))
    }
}

/// Symmetric Fourier spectrum and feature map for a bi-level configuration.
pub fn fourier_setup(config: &TrialConfig) -> Result<(FourierMap, SpectrumModel)> {
    let params = &config.bilevel;
    let map = FourierMap::for_bilevel(params, config.target_support_half, config.indexing)?;
    let spectrum = map.bilevel_spectrum(params.residual_eigenvalue())?;
    Ok((map, spectrum))
}

pub fn build_instance(config: &TrialConfig, index: u64) -> Result<TrialInstance> {
    let trial_seed = seed::trial_seed(config.master_seed, index);
    let n = config.bilevel.n;
    let labels_seed = seed::derive(trial_seed, &[tag::LABELS]);
    match config.family.kind() {
        None => {
            let (map, spectrum) = fourier_setup(config)?;
            let target = sample_target(
                config.target_seed(trial_seed),
                config.target_support_half,
                config.grid_size,
                &map,
            )?;
            let points = uniform_points(n, seed::derive(trial_seed, &[tag::POINTS]));
            let gram = assemble_fourier_gram(&map, &spectrum, &points)?;
            let eta: Vec<f64> = points.iter().map(|&x| target.eval(x)).collect();
            let sample = labels_from_eta(&eta, labels_seed)?;
            Ok(TrialInstance {
                index,
                seed: trial_seed,
                points: Some(points),
                map: Some(map),
                spectrum,
                gram,
                target,
                sample,
                eta_clamped: 0,
            })
        }
        Some(kind) => {
            let spectrum = build_bilevel(&config.bilevel)?;
            let p = spectrum.p();
            let support = (2 * config.target_support_half + 1).min(p);
            let target = sample_sampled_target(config.target_seed(trial_seed), kind, support, config.grid_size);
            let gram = match (config.residual_mode, kind) {
                (ResidualMode::Wishart, FeatureKind::Gaussian) => {
                    assemble_gaussian_wishart(&spectrum, n, trial_seed)?
                }
                (ResidualMode::Wishart, FeatureKind::Rademacher) => {
                    return Err(Error::Unsupported(
                        "wishart residual mode needs gaussian features".into(),
                    ))
                }
                (ResidualMode::Explicit, _) => assemble_explicit_gram(
                    &SubGaussianFamily::new(kind, spectrum.len()),
                    &spectrum,
                    n,
                    seed::derive(trial_seed, &[tag::FEATURES]),
                    config.block_size,
                    config.explicit_budget,
                )?,
            };
            let mut eta_clamped = 0;
            let eta: Vec<f64> = (0..n)
                .map(|i| {
                    let column: Vec<f64> = gram.leading_features.column(i).iter().copied().collect();
                    let value = target.eval_features(&column);
                    if value.abs() > 1.0 {
                        eta_clamped += 1;
                    }
                    value.clamp(-1.0, 1.0)
                })
                .collect();
            let sample = labels_from_eta(&eta, labels_seed)?;
            Ok(TrialInstance {
                index,
                seed: trial_seed,
                points: None,
                map: None,
                spectrum,
                gram,
                target,
                sample,
                eta_clamped,
            })
        }
    }
}

/// Everything measured on one trial.
#[derive(Clone, Debug, Serialize)]
pub struct TrialOutcome {
    pub index: u64,
    pub seed: u64,
    pub verdict: SvpVerdict,
    pub mni: MniSolution,
    pub svm: Option<SvmSolution>,
    pub svm_certified: Option<bool>,
    pub report: Option<DiagnosticsReport>,
    pub risk_mni: Option<RiskEstimate>,
    pub risk_svm: Option<RiskEstimate>,
    pub eta_clamped: usize,
    pub target: TargetFunction,
    pub points: Option<Vec<f64>>,
    pub labels: Vec<f64>,
}

fn fourier_estimate<'a>(kernel: &'a FourierKernel, points: &'a [f64], beta: &'a [f64]) -> impl Fn(f64) -> f64 + Sync + 'a {
    move |x| predict(beta, |i| kernel.eval(x, points[i]))
}

pub fn run_trial(config: &TrialConfig, index: u64) -> Result<TrialOutcome> {
    run_trial_inner(config, index).map_err(|e| e.in_trial(index))
}

fn run_trial_inner(config: &TrialConfig, index: u64) -> Result<TrialOutcome> {
    config.validate()?;
    let inst = build_instance(config, index)?;
    let y = &inst.sample.labels;
    let mni = solve_mni(&inst.gram.k, y)?;
    let mut verdict = detect_svp(&mni, y, config.tau)?;

    let (svm, svm_certified) = if config.cross_check {
        let svm = solve_svm(&inst.gram.k, y, config.svm_options())?;
        cross_check_solver(&mut verdict, &svm, &mni, 1e-6)?;
        let certified = svm.certify();
        (Some(svm), Some(certified))
    } else {
        (None, None)
    };

    let report = if config.diagnostics || config.abc {
        let mut report = measure_assumption1(&inst.gram, &inst.spectrum, &inst.target, config.grid_size)?;
        let p = report.p;
        if report.b > 0.0 {
            report.term_bos = Some(theorem_terms(&report, report.n, p, TheoremCase::Bos)?);
            report.term_subg = Some(theorem_terms(&report, report.n, p, TheoremCase::Subg)?);
            if config.abc {
                let profile = report.survival_profile(&inst.spectrum)?;
                report.abc = Some(measure_abc(&inst.gram, &mni, &inst.sample, &inst.target, &profile, report.b)?);
            }
        }
        Some(report)
    } else {
        None
    };

    let (risk_mni, risk_svm) = if config.mc_points > 0 {
        let (Some(points), Some(kernel)) = (inst.points.as_ref(), inst.kernel().transpose()?) else {
            return Err(Error::Unsupported(
                "excess risk needs an evaluable target (fourier family)".into(),
            ));
        };
        let mc_seed = seed::derive(inst.seed, &[tag::MONTE_CARLO]);
        let risk_mni = excess_risk(
            fourier_estimate(&kernel, points, &mni.beta),
            &inst.target,
            config.mc_points,
            mc_seed,
        )?;
        let risk_svm = match &svm {
            // identical functions under SVP
            Some(_) if verdict.counts_as_svp() && verdict.solver_agreement == Some(true) => Some(risk_mni),
            Some(svm) => Some(excess_risk(
                fourier_estimate(&kernel, points, &svm.beta),
                &inst.target,
                config.mc_points,
                mc_seed,
            )?),
            None => None,
        };
        (Some(risk_mni), risk_svm)
    } else {
        (None, None)
    };

    Ok(TrialOutcome {
        index,
        seed: inst.seed,
        verdict,
        mni,
        svm,
        svm_certified,
        report,
        risk_mni,
        risk_svm,
        eta_clamped: inst.eta_clamped,
        target: inst.target,
        points: inst.points,
        labels: inst.sample.labels,
    })
}

/// Trials `0..config.trials`, in index order.
pub fn run_trials(config: &TrialConfig) -> Vec<Result<TrialOutcome>> {
    (0..config.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(config, t))
        .collect()
}

pub const FIGURE1_QS: [f64; 3] = [-0.4, 0.4, 0.8];
pub const FIGURE1_GRID: usize = 1024;

#[derive(Clone, Debug, Serialize)]
pub struct OverlayRow {
    pub x: f64,
    pub eta_star: f64,
    pub eta_mni: f64,
    pub eta_svm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Figure1Panel {
    pub label: String,
    pub q: f64,
    pub verdict: SvpVerdict,
    pub rows: Vec<OverlayRow>,
    pub points: Vec<f64>,
    pub labels: Vec<f64>,
    /// `max_grid |eta_mni - eta_svm|`
    pub max_gap: f64,
    /// `max_grid |eta_mni|`
    pub max_mni: f64,
}

/// MNI and SVM estimates on a 1024-point grid for each `q`, using trial `index`.
pub fn figure1(config: &TrialConfig, qs: &[f64], index: u64) -> Result<Vec<Figure1Panel>> {
    if config.family != FeatureFamily::Fourier {
        return Err(Error::Unsupported("figure1 needs the fourier family".into()));
    }
    qs.iter()
        .enumerate()
        .map(|(k, &q)| {
            let mut cfg = config.clone();
            cfg.bilevel = BiLevelParams::new(config.bilevel.n, config.bilevel.beta, config.bilevel.r, q)?;
            cfg.cross_check = true;
            cfg.mc_points = 0;
            let inst = build_instance(&cfg, index).map_err(|e| e.in_trial(index))?;
            let out = run_trial(&cfg, index)?;
            let kernel = inst.kernel().expect("fourier instance")?;
            let points = inst.points.clone().expect("fourier instance");
            let svm_beta = &out.svm.as_ref().expect("cross-check enabled").beta;
            let mni_at = fourier_estimate(&kernel, &points, &out.mni.beta);
            let svm_at = fourier_estimate(&kernel, &points, svm_beta);
            let rows: Vec<OverlayRow> = (0..FIGURE1_GRID)
                .into_par_iter()
                .map(|g| {
                    let x = g as f64 / FIGURE1_GRID as f64;
                    OverlayRow {
                        x,
                        eta_star: inst.target.eval(x),
                        eta_mni: mni_at(x),
                        eta_svm: svm_at(x),
                    }
                })
                .collect();
            let max_gap = rows.iter().map(|r| (r.eta_mni - r.eta_svm).abs()).fold(0.0, f64::max);
            let max_mni = rows.iter().map(|r| r.eta_mni.abs()).fold(0.0, f64::max);
            Ok(Figure1Panel {
                label: ((b'a' + k as u8) as char).to_string(),
                q,
                verdict: out.verdict,
                rows,
                points: points.clone(),
                labels: out.labels,
                max_gap,
                max_mni,
            })
        })
        .collect()
}

/// Predicted SVP region for bounded orthonormal systems.
pub fn in_bos_region(r: f64, q: f64, beta: f64) -> bool {
    q > (1.0 - r) / 2.0 && r < 2.0 / 3.0 && beta > 3.0
}

/// Predicted SVP region for independent sub-Gaussian features.
pub fn in_subg_region(r: f64, q: f64, beta: f64) -> bool {
    q > (1.0 - r) / 2.0 && beta > 1.0f64.max(3.0 - 2.0 * r - 2.0 * q)
}

/// `r = 0.05, 0.10, ..., 0.95`
pub fn default_r_grid() -> Vec<f64> {
    (1..=19).map(|k| k as f64 / 20.0).collect()
}

/// `q = -0.5, -0.45, ..., 1.5`
pub fn default_q_grid() -> Vec<f64> {
    (0..=40).map(|k| (k as f64 - 10.0) / 20.0).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct HeatmapCell {
    pub r: f64,
    pub q: f64,
    pub valid: bool,
    pub trials: usize,
    pub svp_count: usize,
    pub indeterminate_count: usize,
    pub failed_count: usize,
    pub in_predicted_region: bool,
    /// Trials whose verdict was checked against the SVM.
    pub svm_checked: usize,
    /// Checked trials whose SVM solution passed the KKT certificate.
    pub svm_certified: usize,
    /// Checked trials where the SVM disagreed with the verdict.
    pub solver_disagreements: usize,
}

impl HeatmapCell {
    pub fn proportion(&self) -> f64 {
        if self.trials == 0 {
            f64::NAN
        } else {
            self.svp_count as f64 / self.trials as f64
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TrialFailure {
    pub label: String,
    pub trial: u64,
    pub message: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct HeatmapResult {
    pub r_grid: Vec<f64>,
    pub q_grid: Vec<f64>,
    /// Row-major over `(r, q)`.
    pub cells: Vec<HeatmapCell>,
    pub failures: Vec<TrialFailure>,
}

impl HeatmapResult {
    pub fn cell(&self, r: f64, q: f64) -> Option<&HeatmapCell> {
        self.cells
            .iter()
            .find(|c| (c.r - r).abs() < 1e-9 && (c.q - q).abs() < 1e-9)
    }
}

/// SVP counts over an `(r, q)` grid with a fixed target and common trial seeds.
/// With `config.cross_check` every trial is also checked against the SVM.
pub fn heatmap(config: &TrialConfig, r_grid: &[f64], q_grid: &[f64]) -> Result<HeatmapResult> {
    if r_grid.iter().any(|&r| !(r > 0.0 && r < 1.0)) {
        return Err(Error::domain("r grid must lie in (0, 1)"));
    }
    let base = TrialConfig {
        fixed_target: true,
        diagnostics: false,
        abc: false,
        mc_points: 0,
        ..config.clone()
    };
    let beta = base.bilevel.beta;
    let jobs: Vec<(usize, u64)> = (0..r_grid.len() * q_grid.len())
        .flat_map(|c| (0..base.trials as u64).map(move |t| (c, t)))
        .collect();
    let cell_config = |c: usize| -> Option<TrialConfig> {
        let (r, q) = (r_grid[c / q_grid.len()], q_grid[c % q_grid.len()]);
        let params = BiLevelParams::new(base.bilevel.n, beta, r, q).ok()?;
        Some(TrialConfig {
            bilevel: params,
            ..base.clone()
        })
    };
    let configs: Vec<Option<TrialConfig>> = (0..r_grid.len() * q_grid.len()).map(cell_config).collect();
    let results: Vec<Option<Result<(SvpVerdict, Option<bool>)>>> = jobs
        .par_iter()
        .map(|&(c, t)| {
            configs[c]
                .as_ref()
                .map(|cfg| run_trial(cfg, t).map(|o| (o.verdict, o.svm_certified)))
        })
        .collect();

    let mut cells = Vec::with_capacity(configs.len());
    let mut failures = Vec::new();
    for (c, cfg) in configs.iter().enumerate() {
        let (r, q) = (r_grid[c / q_grid.len()], q_grid[c % q_grid.len()]);
        let mut cell = HeatmapCell {
            r,
            q,
            valid: cfg.is_some(),
            trials: 0,
            svp_count: 0,
            indeterminate_count: 0,
            failed_count: 0,
            in_predicted_region: match base.family {
                FeatureFamily::Fourier => in_bos_region(r, q, beta),
                _ => in_subg_region(r, q, beta),
            },
            svm_checked: 0,
            svm_certified: 0,
            solver_disagreements: 0,
        };
        if cfg.is_some() {
            let offset = c * base.trials;
            for (t, result) in results[offset..offset + base.trials].iter().enumerate() {
                match result.as_ref().expect("valid cell") {
                    Ok((v, certified)) => {
                        cell.trials += 1;
                        if let Some(certified) = *certified {
                            cell.svm_checked += 1;
                            cell.svm_certified += certified as usize;
                            cell.solver_disagreements += (v.solver_agreement == Some(false)) as usize;
                        }
                        if v.indeterminate {
                            cell.indeterminate_count += 1;
                        } else if v.svp {
                            cell.svp_count += 1;
                        }
                    }
                    Err(e) => {
                        cell.failed_count += 1;
                        failures.push(TrialFailure {
                            label: format!("r={r},q={q}"),
                            trial: t as u64,
                            message: e.to_string(),
                        });
                    }
                }
            }
        }
        cells.push(cell);
    }
    Ok(HeatmapResult {
        r_grid: r_grid.to_vec(),
        q_grid: q_grid.to_vec(),
        cells,
        failures,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct RiskRow {
    pub n: usize,
    pub trial: u64,
    pub excess_risk_mni: f64,
    pub excess_risk_svm: f64,
    pub svp: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct RiskSweep {
    pub rows: Vec<RiskRow>,
    /// `(n, median MNI risk, median SVM risk)`
    pub medians: Vec<(usize, f64, f64)>,
    pub failures: Vec<TrialFailure>,
}

/// Excess risk of both estimators across `n_list`; trial `t` reuses its seed
/// at every `n`, so samples are nested.
pub fn risk_sweep(config: &TrialConfig, n_list: &[usize]) -> Result<RiskSweep> {
    if n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::domain("n_list must be increasing"));
    }
    if config.mc_points < 100 {
        return Err(Error::domain("risk sweep needs mc_points >= 100"));
    }
    let base = TrialConfig {
        cross_check: true,
        ..config.clone()
    };
    let configs = n_list
        .iter()
        .map(|&n| {
            Ok(TrialConfig {
                bilevel: BiLevelParams::new(n, base.bilevel.beta, base.bilevel.r, base.bilevel.q)?,
                ..base.clone()
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, u64)> = (0..n_list.len())
        .flat_map(|k| (0..base.trials as u64).map(move |t| (k, t)))
        .collect();
    let results: Vec<Result<TrialOutcome>> = jobs.par_iter().map(|&(k, t)| run_trial(&configs[k], t)).collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (&(k, t), result) in jobs.iter().zip(results) {
        match result {
            Ok(out) => rows.push(RiskRow {
                n: n_list[k],
                trial: t,
                excess_risk_mni: out.risk_mni.expect("risk enabled").excess_risk,
                excess_risk_svm: out.risk_svm.expect("svm enabled").excess_risk,
                svp: out.verdict.counts_as_svp(),
            }),
            Err(e) => failures.push(TrialFailure {
                label: format!("n={}", n_list[k]),
                trial: t,
                message: e.to_string(),
            }),
        }
    }
    let medians = n_list
        .iter()
        .map(|&n| {
            let at_n: Vec<&RiskRow> = rows.iter().filter(|r| r.n == n).collect();
            let mni: Vec<f64> = at_n.iter().map(|r| r.excess_risk_mni).collect();
            let svm: Vec<f64> = at_n.iter().map(|r| r.excess_risk_svm).collect();
            (n, median(&mni), median(&svm))
        })
        .collect();
    Ok(RiskSweep {
        rows,
        medians,
        failures,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConcentrationPoint {
    pub n: usize,
    pub residual: Vec<f64>,
    pub sampling: Vec<f64>,
    pub residual_median: f64,
    pub sampling_median: f64,
}

/// Residual-Gram and sampling-operator concentration over seeds, per `n` (Fourier).
pub fn concentration_sweep(config: &TrialConfig, n_list: &[usize], seeds: usize) -> Result<Vec<ConcentrationPoint>> {
    n_list
        .iter()
        .map(|&n| {
            let cfg = TrialConfig {
                bilevel: BiLevelParams::new(n, config.bilevel.beta, config.bilevel.r, config.bilevel.q)?,
                family: FeatureFamily::Fourier,
                ..config.clone()
            };
            let (map, spectrum) = fourier_setup(&cfg)?;
            let pairs: Vec<(f64, f64)> = (0..seeds as u64)
                .into_par_iter()
                .map(|t| {
                    let seed = seed::trial_seed(cfg.master_seed, t);
                    let points = uniform_points(n, seed::derive(seed, &[tag::POINTS]));
                    let gram = assemble_fourier_gram(&map, &spectrum, &points).map_err(|e| e.in_trial(t))?;
                    Ok((
                        diagnostics::residual_concentration(&gram, &spectrum),
                        diagnostics::sampling_concentration(&gram),
                    ))
                })
                .collect::<Result<Vec<_>>>()?;
            let (residual, sampling): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            Ok(ConcentrationPoint {
                n,
                residual_median: median(&residual),
                sampling_median: median(&sampling),
                residual,
                sampling,
            })
        })
        .collect()
}

/// Random PD Gram and labels from the label model, for property suites.
///
/// Alternates between multi-level Fourier spectra and explicit Gaussian
/// features with a random decaying spectrum; `n` is in `[1, max_n]`.
/// Draws with a 1-norm condition above [`INSTANCE_MAX_CONDITION`] are redrawn.
pub fn random_instance(rng_seed: u64, max_n: usize) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let mut rng = seed::rng(rng_seed);
    for attempt in 0..64u64 {
        let n = rng.random_range(1..=max_n);
        let fourier = rng.random_bool(0.5);
        let sub = seed::derive(rng_seed, &[attempt]);
        let built = if fourier {
            random_fourier_instance(&mut rng, n, sub)
        } else {
            random_gaussian_instance(&mut rng, n, sub)
        };
        match built {
            Ok(v) => return Ok(v),
            Err(Error::Conditioning { .. } | Error::DuplicatePoints { .. }) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(Error::domain("no well-conditioned random instance found"))
}

/// At this condition `cond * eps` is about 2e-10, which leaves room for
/// 1e-8 comparisons between solvers.
pub const INSTANCE_MAX_CONDITION: f64 = 1e6;

fn check_instance_condition(k: &DMatrix<f64>) -> Result<()> {
    let (_, _, condition) = crate::solvers::factor(k)?;
    if condition > INSTANCE_MAX_CONDITION {
        return Err(Error::Conditioning { condition });
    }
    Ok(())
}

fn random_levels(rng: &mut impl Rng, counts: &[usize]) -> Vec<Level> {
    let mut value = 1.0;
    counts
        .iter()
        .map(|&count| {
            let level = Level { value, count };
            value *= rng.random_range(0.05..0.9);
            level
        })
        .collect()
}

fn random_fourier_instance(rng: &mut impl Rng, n: usize, sub: u64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let p_half = rng.random_range(0..=3usize);
    let d_half = p_half + n / 2 + rng.random_range(1..=40usize);
    let map = FourierMap::new(p_half, d_half)?;
    // bands: leading, then up to three residual bands
    let mut bounds = vec![p_half];
    for _ in 0..rng.random_range(0..3usize) {
        let b = rng.random_range(p_half + 1..=d_half);
        bounds.push(b);
    }
    bounds.push(d_half);
    bounds.sort_unstable();
    bounds.dedup();
    let mut counts = vec![2 * p_half + 1];
    counts.extend(bounds.windows(2).map(|w| 2 * (w[1] - w[0])));
    let spectrum = SpectrumModel::from_levels(random_levels(rng, &counts), map.favored_count())?;
    let points = uniform_points(n, seed::derive(sub, &[tag::POINTS]));
    let gram = assemble_fourier_gram(&map, &spectrum, &points)?;
    let target = sample_target(seed::derive(sub, &[tag::TARGET]), p_half, 1024, &map)?;
    let eta: Vec<f64> = points.iter().map(|&x| target.eval(x).clamp(-1.0, 1.0)).collect();
    let sample = labels_from_eta(&eta, seed::derive(sub, &[tag::LABELS]))?;
    check_instance_condition(&gram.k)?;
    Ok((gram.k, sample.labels))
}

fn random_gaussian_instance(rng: &mut impl Rng, n: usize, sub: u64) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let p = rng.random_range(1..=3usize);
    let d = n + 5 + rng.random_range(0..120usize);
    let counts = vec![p, (d - p) / 2, d - p - (d - p) / 2];
    let spectrum = SpectrumModel::from_levels(random_levels(rng, &counts), p)?;
    let family = SubGaussianFamily::new(FeatureKind::Gaussian, d);
    let gram = assemble_explicit_gram(
        &family,
        &spectrum,
        n,
        seed::derive(sub, &[tag::FEATURES]),
        256,
        DEFAULT_EXPLICIT_BUDGET,
    )?;
    let target = sample_sampled_target(seed::derive(sub, &[tag::TARGET]), FeatureKind::Gaussian, p, 256);
    let eta: Vec<f64> = (0..n)
        .map(|i| {
            let column: Vec<f64> = gram.leading_features.column(i).iter().copied().collect();
            target.eval_features(&column).clamp(-1.0, 1.0)
        })
        .collect();
    let sample = labels_from_eta(&eta, seed::derive(sub, &[tag::LABELS]))?;
    check_instance_condition(&gram.k)?;
    Ok((gram.k, sample.labels))
}
