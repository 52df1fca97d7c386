//! Subcommand bodies. Each computes first and writes afterwards, so an error
//! leaves no partial result set behind.

use std::path::PathBuf;

use serde::Serialize;
use serde_json::json;
use svplab::experiments::{
    self, FeatureFamily, Figure1Panel, HeatmapResult, RiskSweep, TrialConfig, TrialFailure, TrialOutcome,
};

use crate::output::{float, unix_now, Manifest, OutputDir};
use crate::{svg, CliError, Command, Config, Format};

pub struct Context {
    pub config: Config,
    pub out: PathBuf,
    pub workers: usize,
    pub format: Option<Format>,
}

impl Context {
    fn wants(&self, format: Format) -> bool {
        self.format.is_none_or(|f| f == format)
    }

    /// Rejects `--format` values the command has no artifact for.
    fn check_format(&self, command: &str, offered: &[Format]) -> Result<(), CliError> {
        match self.format {
            Some(f) if !offered.contains(&f) => Err(CliError::Usage(format!(
                "{command} has no {f:?} output (available: {offered:?})"
            ))),
            _ => Ok(()),
        }
    }

    /// Writes the artifacts, then the manifest; discards everything on error.
    fn emit<P: Serialize>(
        &self,
        command: &str,
        started: f64,
        parameters: P,
        write: impl FnOnce(&mut OutputDir) -> Result<(), CliError>,
    ) -> Result<(), CliError> {
        let mut out = OutputDir::create(&self.out)?;
        let result = write(&mut out).and_then(|()| {
            Manifest {
                tool: "svplab",
                version: env!("CARGO_PKG_VERSION"),
                command,
                master_seed: self.config.run.seed,
                workers: self.workers,
                started_unix: started,
                finished_unix: unix_now(),
                files: Vec::new(),
                parameters,
                config: &self.config,
            }
            .write(&mut out)
        });
        if result.is_err() {
            out.discard();
        }
        result
    }
}

pub fn dispatch(ctx: &Context, command: &Command) -> Result<usize, CliError> {
    match command {
        Command::Solve { trial } => solve(ctx, trial.unwrap_or(ctx.config.solve.trial)),
        Command::Figure1 => figure1(ctx),
        Command::Heatmap => heatmap(ctx),
        Command::Risk => risk(ctx),
        Command::Diagnostics => diagnostics(ctx),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(float).unwrap_or_default()
}

fn require_fourier(config: &TrialConfig, command: &str) -> Result<(), CliError> {
    if config.family != FeatureFamily::Fourier {
        return Err(CliError::Invalid(format!("{command} needs family = \"fourier\"")));
    }
    Ok(())
}

fn write_failures(out: &mut OutputDir, failures: &[TrialFailure]) -> Result<(), CliError> {
    if failures.is_empty() {
        return Ok(());
    }
    out.write_csv(
        "failures.csv",
        &["label", "trial", "message"],
        failures
            .iter()
            .map(|f| vec![f.label.clone(), f.trial.to_string(), f.message.clone()]),
    )
}

#[derive(Serialize)]
struct TrialRecord<'a> {
    /// SVP outside the numerical band.
    svp: bool,
    #[serde(flatten)]
    outcome: &'a TrialOutcome,
}

fn solve(ctx: &Context, trial: u64) -> Result<usize, CliError> {
    ctx.check_format("solve", &[Format::Csv, Format::Json])?;
    let started = unix_now();
    let mut config = ctx.config.trial_config()?;
    config.cross_check = true;
    config.diagnostics = true;
    config.abc = ctx.config.solve.abc;
    config.mc_points = ctx.config.solve.mc_points;
    if config.mc_points > 0 {
        require_fourier(&config, "solve with mc_points")?;
    }
    let outcome = experiments::run_trial(&config, trial)?;
    let svm = outcome.svm.as_ref().expect("cross-check enabled");

    ctx.emit("solve", started, json!({ "trial": trial }), |out| {
        if ctx.wants(Format::Json) {
            out.write_json(
                "trial.json",
                &TrialRecord {
                    svp: outcome.verdict.counts_as_svp(),
                    outcome: &outcome,
                },
            )?;
        }
        if ctx.wants(Format::Csv) {
            let rows = (0..outcome.labels.len()).map(|i| {
                vec![
                    i.to_string(),
                    opt(outcome.points.as_ref().map(|p| p[i])),
                    float(outcome.labels[i]),
                    float(outcome.mni.beta[i]),
                    float(svm.beta[i]),
                    float(outcome.verdict.sign_margins[i]),
                    float(outcome.verdict.loo_margins[i]),
                ]
            });
            out.write_csv(
                "beta.csv",
                &["index", "x", "y", "beta_mni", "beta_svm", "sign_margin", "loo_margin"],
                rows,
            )?;
        }
        Ok(())
    })?;
    println!(
        "trial {trial}: svp = {}, svm certified = {}",
        outcome.verdict.counts_as_svp(),
        outcome.svm_certified.unwrap_or(false)
    );
    Ok(0)
}

fn figure1(ctx: &Context) -> Result<usize, CliError> {
    ctx.check_format("figure1", &[Format::Csv, Format::Json, Format::Svg])?;
    let started = unix_now();
    let config = ctx.config.trial_config()?;
    require_fourier(&config, "figure1")?;
    let section = &ctx.config.figure1;
    let panels: Vec<Figure1Panel> = experiments::figure1(&config, &section.qs, section.trial)?;

    ctx.emit(
        "figure1",
        started,
        json!({ "qs": section.qs, "trial": section.trial }),
        |out| {
            if ctx.wants(Format::Csv) {
                let rows = panels.iter().flat_map(|p| {
                    p.rows.iter().map(|r| {
                        vec![
                            float(r.x),
                            float(r.eta_star),
                            float(r.eta_mni),
                            float(r.eta_svm),
                            p.label.clone(),
                        ]
                    })
                });
                out.write_csv("overlay.csv", &["x", "eta_star", "eta_mni", "eta_svm", "panel"], rows)?;
                out.write_csv(
                    "panels.csv",
                    &["panel", "q", "svp", "indeterminate", "max_gap", "max_mni"],
                    panels.iter().map(|p| {
                        vec![
                            p.label.clone(),
                            float(p.q),
                            p.verdict.counts_as_svp().to_string(),
                            p.verdict.indeterminate.to_string(),
                            float(p.max_gap),
                            float(p.max_mni),
                        ]
                    }),
                )?;
                out.write_csv(
                    "labels.csv",
                    &["panel", "index", "x", "y"],
                    panels.iter().flat_map(|p| {
                        p.points
                            .iter()
                            .zip(&p.labels)
                            .enumerate()
                            .map(|(i, (&x, &y))| vec![p.label.clone(), i.to_string(), float(x), float(y)])
                    }),
                )?;
            }
            if ctx.wants(Format::Json) {
                out.write_json("figure1.json", &panels)?;
            }
            if ctx.wants(Format::Svg) {
                out.write_bytes("figure1.svg", svg::figure1(&panels).as_bytes())?;
            }
            Ok(())
        },
    )?;
    for p in &panels {
        println!("panel {} (q = {}): svp = {}", p.label, p.q, p.verdict.counts_as_svp());
    }
    Ok(0)
}

pub const HEATMAP_HEADER: [&str; 7] = [
    "r",
    "q",
    "trials",
    "svp_count",
    "indeterminate_count",
    "in_predicted_region",
    "validity",
];

pub fn heatmap_rows(result: &HeatmapResult) -> impl Iterator<Item = Vec<String>> + '_ {
    result.cells.iter().map(|c| {
        vec![
            float(c.r),
            float(c.q),
            c.trials.to_string(),
            c.svp_count.to_string(),
            c.indeterminate_count.to_string(),
            c.in_predicted_region.to_string(),
            if c.valid { "valid" } else { "invalid" }.to_string(),
        ]
    })
}

fn heatmap(ctx: &Context) -> Result<usize, CliError> {
    ctx.check_format("heatmap", &[Format::Csv, Format::Json, Format::Svg])?;
    let started = unix_now();
    let section = &ctx.config.heatmap;
    let mut config = ctx.config.trial_config()?;
    config.trials = section.trials;
    config.cross_check = section.cross_check;
    config.validate().map_err(|e| CliError::Invalid(format!("[heatmap] {e}")))?;
    let result = experiments::heatmap(&config, &section.r_grid, &section.q_grid)?;
    let beta = config.bilevel.beta;
    let boundary: svg::Boundary = match config.family {
        FeatureFamily::Fourier => svg::bos_boundary,
        _ => svg::subg_boundary,
    };

    ctx.emit(
        "heatmap",
        started,
        json!({ "trials": section.trials, "cross_check": section.cross_check, "r_grid": section.r_grid, "q_grid": section.q_grid }),
        |out| {
            if ctx.wants(Format::Csv) {
                out.write_csv("heatmap.csv", &HEATMAP_HEADER, heatmap_rows(&result))?;
            }
            if ctx.wants(Format::Json) {
                out.write_json("heatmap.json", &result)?;
            }
            if ctx.wants(Format::Svg) {
                let image = svg::heatmap(&result.cells, &result.r_grid, &result.q_grid, beta, boundary);
                out.write_bytes("heatmap.svg", image.as_bytes())?;
            }
            write_failures(out, &result.failures)
        },
    )?;
    let valid = result.cells.iter().filter(|c| c.valid).count();
    println!(
        "heatmap: {} cells ({valid} valid), {} failed trials",
        result.cells.len(),
        result.failures.len()
    );
    Ok(result.failures.len())
}

fn risk(ctx: &Context) -> Result<usize, CliError> {
    ctx.check_format("risk", &[Format::Csv, Format::Json])?;
    let started = unix_now();
    let section = &ctx.config.risk;
    let mut config = ctx.config.trial_config()?;
    require_fourier(&config, "risk")?;
    config.trials = section.trials;
    config.mc_points = section.mc_points;
    config.validate().map_err(|e| CliError::Invalid(format!("[risk] {e}")))?;
    let sweep: RiskSweep = experiments::risk_sweep(&config, &section.n_list)?;

    ctx.emit(
        "risk",
        started,
        json!({ "n_list": section.n_list, "trials": section.trials, "mc_points": section.mc_points }),
        |out| {
            if ctx.wants(Format::Csv) {
                out.write_csv(
                    "risk.csv",
                    &["n", "trial", "excess_risk_mni", "excess_risk_svm", "svp"],
                    sweep.rows.iter().map(|r| {
                        vec![
                            r.n.to_string(),
                            r.trial.to_string(),
                            float(r.excess_risk_mni),
                            float(r.excess_risk_svm),
                            r.svp.to_string(),
                        ]
                    }),
                )?;
                out.write_csv(
                    "risk_summary.csv",
                    &["n", "median_mni", "median_svm"],
                    sweep
                        .medians
                        .iter()
                        .map(|&(n, m, s)| vec![n.to_string(), float(m), float(s)]),
                )?;
            }
            if ctx.wants(Format::Json) {
                out.write_json("risk.json", &sweep)?;
            }
            write_failures(out, &sweep.failures)
        },
    )?;
    for &(n, m, s) in &sweep.medians {
        println!("n = {n}: median excess risk mni {m:.5}, svm {s:.5}");
    }
    Ok(sweep.failures.len())
}

const DIAGNOSTICS_HEADER: [&str; 22] = [
    "trial",
    "seed",
    "svp",
    "n",
    "p",
    "alpha_l",
    "alpha_u",
    "ratio",
    "alpha_bar",
    "loo_sampling_norm",
    "c",
    "b",
    "survival_sup",
    "b_exceeds_slack",
    "lambda_next",
    "term_bos",
    "term_subg",
    "abc_a",
    "abc_b",
    "abc_c",
    "abc_sum",
    "svm_certified",
];

#[derive(Serialize)]
struct DiagnosticsRecord<'a> {
    trial: u64,
    seed: u64,
    svp: bool,
    report: &'a Option<svplab::diagnostics::DiagnosticsReport>,
}

fn diagnostics(ctx: &Context) -> Result<usize, CliError> {
    ctx.check_format("diagnostics", &[Format::Csv, Format::Json])?;
    let started = unix_now();
    let section = &ctx.config.diagnostics;
    let mut config = ctx.config.trial_config()?;
    config.trials = section.trials;
    config.diagnostics = true;
    config.abc = section.abc;
    config.validate().map_err(|e| CliError::Invalid(format!("[diagnostics] {e}")))?;
    let results = experiments::run_trials(&config);
    let mut outcomes = Vec::new();
    let mut failures = Vec::new();
    for (t, r) in results.into_iter().enumerate() {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => failures.push(TrialFailure {
                label: "diagnostics".into(),
                trial: t as u64,
                message: e.to_string(),
            }),
        }
    }

    ctx.emit("diagnostics", started, json!({ "trials": section.trials, "abc": section.abc }), |out| {
        if ctx.wants(Format::Csv) {
            let rows = outcomes.iter().map(|o| {
                let rep = o.report.as_ref().expect("diagnostics enabled");
                let abc = rep.abc;
                vec![
                    o.index.to_string(),
                    o.seed.to_string(),
                    o.verdict.counts_as_svp().to_string(),
                    rep.n.to_string(),
                    rep.p.to_string(),
                    float(rep.alpha_l),
                    float(rep.alpha_u),
                    float(rep.ratio),
                    float(rep.alpha_bar),
                    float(rep.loo_sampling_norm),
                    float(rep.c),
                    float(rep.b),
                    float(rep.survival_sup),
                    rep.b_exceeds_slack.to_string(),
                    float(rep.lambda_next),
                    opt(rep.term_bos.as_ref().map(|t| t.sum)),
                    opt(rep.term_subg.as_ref().map(|t| t.sum)),
                    opt(abc.map(|a| a.a_max)),
                    opt(abc.map(|a| a.b_max)),
                    opt(abc.map(|a| a.c_max)),
                    opt(abc.map(|a| a.sum_max)),
                    o.svm_certified.map(|c| c.to_string()).unwrap_or_default(),
                ]
            });
            out.write_csv("diagnostics.csv", &DIAGNOSTICS_HEADER, rows)?;
        }
        if ctx.wants(Format::Json) {
            let records: Vec<DiagnosticsRecord> = outcomes
                .iter()
                .map(|o| DiagnosticsRecord {
                    trial: o.index,
                    seed: o.seed,
                    svp: o.verdict.counts_as_svp(),
                    report: &o.report,
                })
                .collect();
            out.write_json("diagnostics.json", &records)?;
        }
        write_failures(out, &failures)
    })?;
    let svp = outcomes.iter().filter(|o| o.verdict.counts_as_svp()).count();
    println!("diagnostics: {} trials, {svp} with svp, {} failed", outcomes.len(), failures.len());
    Ok(failures.len())
}
