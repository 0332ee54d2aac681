//! Subcommand implementations.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use krrimpute::estimate::EstimatorKind;
use krrimpute::pipeline::{self, FitDiagnostics, TwoStepConfig, Tuning};
use krrimpute::simlab::{self, Mechanism, OutcomeModel, ScenarioConfig};
use krrimpute::{Bandwidth, GcvDenominator, KernelSpec};
use serde::Serialize;

use crate::config::ConfigFile;
use crate::ingest::{self, CsvSchema};
use crate::{
    CliError, DenominatorChoice, EstimateArgs, FitFlags, KernelChoice, MethodChoice, ModelChoice,
    SimulateArgs, WeightsArgs,
};

fn parse_kernel(s: &str) -> Result<KernelChoice, String> {
    match s {
        "sobolev2" => Ok(KernelChoice::Sobolev2),
        "sobolev1" => Ok(KernelChoice::Sobolev1),
        "gaussian" => Ok(KernelChoice::Gaussian),
        other => Err(format!("unknown kernel '{other}'")),
    }
}

fn parse_denominator(s: &str) -> Result<DenominatorChoice, String> {
    match s {
        "linear" => Ok(DenominatorChoice::Linear),
        "squared" => Ok(DenominatorChoice::Squared),
        other => Err(format!("unknown denominator '{other}'")),
    }
}

fn parse_methods(s: &str) -> Result<Vec<MethodChoice>, String> {
    s.split(',')
        .map(|m| match m.trim() {
            "complete" => Ok(MethodChoice::Complete),
            "linear-im" => Ok(MethodChoice::LinearIm),
            "krr-im" => Ok(MethodChoice::KrrIm),
            "krr-ps" => Ok(MethodChoice::KrrPs),
            other => Err(format!("unknown method '{other}'")),
        })
        .collect()
}

fn parse_model(s: &str) -> Result<ModelChoice, String> {
    match s {
        "A" | "a" => Ok(ModelChoice::A),
        "B" | "b" => Ok(ModelChoice::B),
        "C" | "c" => Ok(ModelChoice::C),
        other => Err(format!("unknown model '{other}'")),
    }
}

fn numeric<T: std::str::FromStr>(s: &str) -> Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e| format!("{e}"))
}

/// Merge config-file defaults into the fit flags.
fn merge_fit_flags(fit: &mut FitFlags, cfg: &ConfigFile) -> Result<(), CliError> {
    cfg.fill(&mut fit.kernel, "kernel", parse_kernel)?;
    cfg.fill(&mut fit.bandwidth, "bandwidth", |s| Ok(s.to_string()))?;
    cfg.fill(&mut fit.lambda, "lambda", |s| Ok(s.to_string()))?;
    cfg.fill(&mut fit.tau, "tau", |s| Ok(s.to_string()))?;
    cfg.fill(&mut fit.gcv_denominator, "gcv-denominator", parse_denominator)?;
    cfg.fill(&mut fit.kappa, "kappa", numeric::<f64>)?;
    Ok(())
}

fn tuning_from(raw: &Option<String>, what: &str) -> Result<Tuning, CliError> {
    match raw.as_deref() {
        None | Some("auto") => Ok(Tuning::Auto),
        Some(text) => {
            let value: f64 = text.parse().map_err(|_| {
                CliError::input(format!("--{what} must be 'auto' or a positive number, got '{text}'"))
            })?;
            if !(value > 0.0) {
                return Err(CliError::input(format!("--{what} must be positive, got {value}")));
            }
            Ok(Tuning::Fixed(value))
        }
    }
}

fn kernel_spec_from(fit: &FitFlags, dim: usize) -> Result<KernelSpec, CliError> {
    let choice = fit.kernel.unwrap_or(KernelChoice::Sobolev2);
    match choice {
        KernelChoice::Sobolev2 => Ok(KernelSpec::sobolev(2, dim)),
        KernelChoice::Sobolev1 => Ok(KernelSpec::sobolev(1, dim)),
        KernelChoice::Gaussian => {
            let bandwidth = match fit.bandwidth.as_deref() {
                None | Some("median") => Bandwidth::MedianHeuristic,
                Some(text) => {
                    let h: f64 = text.parse().map_err(|_| {
                        CliError::input(format!(
                            "--bandwidth must be 'median' or a positive number, got '{text}'"
                        ))
                    })?;
                    Bandwidth::Fixed(h)
                }
            };
            Ok(KernelSpec::gaussian(bandwidth, dim))
        }
    }
}

fn kernel_label(fit: &FitFlags) -> &'static str {
    match fit.kernel.unwrap_or(KernelChoice::Sobolev2) {
        KernelChoice::Sobolev2 => "sobolev2",
        KernelChoice::Sobolev1 => "sobolev1",
        KernelChoice::Gaussian => "gaussian",
    }
}

fn two_step_config_from(fit: &FitFlags, dim: usize) -> Result<TwoStepConfig, CliError> {
    let mut config = TwoStepConfig::new(kernel_spec_from(fit, dim)?);
    config.lambda = tuning_from(&fit.lambda, "lambda")?;
    config.tau = tuning_from(&fit.tau, "tau")?;
    config.gcv_denominator = match fit.gcv_denominator.unwrap_or(DenominatorChoice::Squared) {
        DenominatorChoice::Linear => GcvDenominator::Linear,
        DenominatorChoice::Squared => GcvDenominator::Squared,
    };
    if let Some(kappa) = fit.kappa {
        if kappa <= 1.0 {
            return Err(CliError::input(format!("--kappa must exceed 1, got {kappa}")));
        }
        config.kappa = Some(kappa);
    }
    Ok(config)
}

fn method_kind(m: MethodChoice) -> EstimatorKind {
    match m {
        MethodChoice::Complete => EstimatorKind::Complete,
        MethodChoice::LinearIm => EstimatorKind::LinearIm,
        MethodChoice::KrrIm => EstimatorKind::KrrIm,
        MethodChoice::KrrPs => EstimatorKind::KrrPs,
    }
}

fn output_dir(dir: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = dir
        .clone()
        .ok_or_else(|| CliError::input("--output-dir is required".into()))?;
    fs::create_dir_all(&dir)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn load_dataset(
    input: &Option<PathBuf>,
    outcome: &Option<String>,
    covariates: &Option<Vec<String>>,
    response: &Option<String>,
) -> Result<(ingest::IngestResult, PathBuf), CliError> {
    let path = input
        .clone()
        .ok_or_else(|| CliError::input("--input is required".into()))?;
    let outcome = outcome
        .clone()
        .ok_or_else(|| CliError::input("--outcome-col is required".into()))?;
    let schema = CsvSchema {
        outcome,
        covariates: covariates.clone().unwrap_or_default(),
        response: response.clone(),
    };
    let result = ingest::ingest_csv_path(&path, &schema)?;
    Ok((result, path))
}

#[derive(Serialize)]
struct EstimateRow {
    method: &'static str,
    point_estimate: f64,
    std_error: f64,
    ci_lower: f64,
    ci_upper: f64,
    lambda: Option<f64>,
    tau: Option<f64>,
}

#[derive(Serialize)]
struct ReportFile {
    input: String,
    outcome: String,
    covariates: Vec<String>,
    n: usize,
    n_respondents: usize,
    n_nonrespondents: usize,
    kernel: &'static str,
    level: f64,
    seed: u64,
    estimates: Vec<EstimateRow>,
    diagnostics: Option<FitDiagnostics>,
}

pub fn cmd_estimate(mut args: EstimateArgs) -> Result<(), CliError> {
    let cfg = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::empty(),
    };
    cfg.fill(&mut args.input, "input", |s| Ok(PathBuf::from(s)))?;
    cfg.fill(&mut args.outcome_col, "outcome-col", |s| Ok(s.to_string()))?;
    cfg.fill(&mut args.covariate_cols, "covariate-cols", |s| {
        Ok(s.split(',').map(|c| c.trim().to_string()).collect())
    })?;
    cfg.fill(&mut args.response_col, "response-col", |s| Ok(s.to_string()))?;
    cfg.fill(&mut args.level, "level", numeric::<f64>)?;
    cfg.fill(&mut args.seed, "seed", numeric::<u64>)?;
    cfg.fill(&mut args.method, "method", parse_methods)?;
    cfg.fill(&mut args.output_dir, "output-dir", |s| Ok(PathBuf::from(s)))?;
    merge_fit_flags(&mut args.fit, &cfg)?;

    let level = args.level.unwrap_or(0.95);
    if !(level > 0.0 && level < 1.0) {
        return Err(CliError::input(format!("--level must lie in (0,1), got {level}")));
    }
    let dir = output_dir(&args.output_dir)?;
    let (ingested, input_path) = load_dataset(
        &args.input,
        &args.outcome_col,
        &args.covariate_cols,
        &args.response_col,
    )?;
    let data = &ingested.dataset;

    let methods: Vec<EstimatorKind> = args
        .method
        .clone()
        .unwrap_or_else(|| {
            vec![
                MethodChoice::Complete,
                MethodChoice::LinearIm,
                MethodChoice::KrrIm,
                MethodChoice::KrrPs,
            ]
        })
        .into_iter()
        .map(method_kind)
        .collect();
    if methods.is_empty() {
        return Err(CliError::input("--method selected no estimators".into()));
    }

    let needs_fit = methods.iter().any(|m| *m != EstimatorKind::Complete);
    let (reports, diagnostics) = if needs_fit {
        let config = two_step_config_from(&args.fit, data.dim())?;
        let fit = pipeline::two_step_fit(data, &config)?;
        let reports = pipeline::estimate_reports(data, &fit, &methods, level)?;
        let diagnostics = FitDiagnostics::from_fit(data, &fit);
        (reports, Some(diagnostics))
    } else {
        (vec![pipeline::complete_case_report(data, level)?], None)
    };

    let report = ReportFile {
        input: input_path.display().to_string(),
        outcome: ingested.outcome_name.clone(),
        covariates: ingested.covariate_names.clone(),
        n: data.n(),
        n_respondents: data.response.n1(),
        n_nonrespondents: data.response.n0(),
        kernel: kernel_label(&args.fit),
        level,
        seed: args.seed.unwrap_or(0),
        estimates: reports
            .iter()
            .map(|r| EstimateRow {
                method: r.method.label(),
                point_estimate: r.theta_hat,
                std_error: r.std_error,
                ci_lower: r.ci_lower,
                ci_upper: r.ci_upper,
                lambda: r.lambda,
                tau: r.tau,
            })
            .collect(),
        diagnostics,
    };
    write_json(&dir.join("report.json"), &report)?;
    for row in &report.estimates {
        println!(
            "{:<10} P.E. {:>12.6}  S.E. {:>10.6}  {:.0}% C.I. ({:.6}, {:.6})",
            row.method,
            row.point_estimate,
            row.std_error,
            100.0 * level,
            row.ci_lower,
            row.ci_upper
        );
    }
    Ok(())
}

pub fn cmd_simulate(mut args: SimulateArgs) -> Result<(), CliError> {
    let cfg = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::empty(),
    };
    cfg.fill(&mut args.model, "model", parse_model)?;
    cfg.fill(&mut args.mechanism, "mechanism", numeric::<u8>)?;
    cfg.fill(&mut args.n, "n", numeric::<usize>)?;
    cfg.fill(&mut args.replicates, "B", numeric::<usize>)?;
    cfg.fill(&mut args.seed, "seed", numeric::<u64>)?;
    cfg.fill(&mut args.estimators, "estimators", parse_methods)?;
    cfg.fill(&mut args.output_dir, "output-dir", |s| Ok(PathBuf::from(s)))?;
    merge_fit_flags(&mut args.fit, &cfg)?;

    let model = match args.model.ok_or_else(|| CliError::input("--model is required".into()))? {
        ModelChoice::A => OutcomeModel::A,
        ModelChoice::B => OutcomeModel::B,
        ModelChoice::C => OutcomeModel::C,
    };
    let mechanism = match args.mechanism.unwrap_or(1) {
        1 => Mechanism::M1,
        2 => Mechanism::M2,
        other => return Err(CliError::input(format!("--mechanism must be 1 or 2, got {other}"))),
    };
    let n = args.n.unwrap_or(500);
    let replicates = args.replicates.unwrap_or(200);
    if n < 50 {
        return Err(CliError::input(format!("--n must be at least 50, got {n}")));
    }
    if replicates < 2 {
        return Err(CliError::input(format!(
            "--B must be at least 2 for coverage summaries, got {replicates}"
        )));
    }
    let dir = output_dir(&args.output_dir)?;

    let mut config = ScenarioConfig::new(model, mechanism, n, replicates, args.seed.unwrap_or(7));
    if let Some(methods) = &args.estimators {
        let kinds: Vec<EstimatorKind> = methods.iter().map(|&m| method_kind(m)).collect();
        if kinds.iter().any(|k| *k == EstimatorKind::Complete) {
            return Err(CliError::input(
                "the complete-case row is an estimate-command concept; simulate supports krr-im, krr-ps, linear-im".into(),
            ));
        }
        config.estimators = kinds;
    }
    config.kernel = kernel_spec_from(&args.fit, 4)?;
    config.two_step = two_step_config_from(&args.fit, 4)?;

    // collect per-replicate records, then summarize
    let mut records = Vec::with_capacity(config.replicates);
    let mut failures = Vec::new();
    for index in 0..config.replicates {
        match simlab::run_replicate(&config, index) {
            Ok(rec) => records.push(rec),
            Err(e) => {
                log::warn!("replicate {index} failed: {e}");
                failures.push((index, e.to_string()));
            }
        }
    }
    if failures.len() * 20 > config.replicates {
        return Err(CliError::numerical(format!(
            "more than 5% of replicates failed ({} of {})",
            failures.len(),
            config.replicates
        )));
    }
    let summary = simlab::summarize_replicates(&config, &records, failures)?;

    let summary_path = dir.join("summary.json");
    let file = fs::File::create(&summary_path)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", summary_path.display())))?;
    simlab::write_summary_json(&summary, file)?;

    let csv_path = dir.join("replicates.csv");
    let file = fs::File::create(&csv_path)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", csv_path.display())))?;
    simlab::write_replicates_csv(&records, file)?;

    for est in &summary.estimators {
        println!(
            "{:<10} mean {:+.5}  R.B.(V) {:+.2}%  C.R.90 {:.2}  C.R.95 {:.2}",
            est.estimator.label(),
            est.mean_estimate,
            est.relative_bias_pct,
            est.coverage_90_pct,
            est.coverage_95_pct
        );
    }
    Ok(())
}

pub fn cmd_weights(mut args: WeightsArgs) -> Result<(), CliError> {
    let cfg = match &args.config {
        Some(path) => ConfigFile::load(path)?,
        None => ConfigFile::empty(),
    };
    cfg.fill(&mut args.input, "input", |s| Ok(PathBuf::from(s)))?;
    cfg.fill(&mut args.outcome_col, "outcome-col", |s| Ok(s.to_string()))?;
    cfg.fill(&mut args.covariate_cols, "covariate-cols", |s| {
        Ok(s.split(',').map(|c| c.trim().to_string()).collect())
    })?;
    cfg.fill(&mut args.response_col, "response-col", |s| Ok(s.to_string()))?;
    cfg.fill(&mut args.output_dir, "output-dir", |s| Ok(PathBuf::from(s)))?;
    merge_fit_flags(&mut args.fit, &cfg)?;

    let dir = output_dir(&args.output_dir)?;
    let (ingested, _) = load_dataset(
        &args.input,
        &args.outcome_col,
        &args.covariate_cols,
        &args.response_col,
    )?;
    let data = &ingested.dataset;
    let config = two_step_config_from(&args.fit, data.dim())?;
    let fit = pipeline::two_step_fit(data, &config)?;

    let path = dir.join("weights.csv");
    let mut out = fs::File::create(&path)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", path.display())))?;
    writeln!(out, "index,response,omega")
        .map_err(|e| CliError::input(format!("write failed: {e}")))?;
    for i in 0..data.n() {
        writeln!(
            out,
            "{},{},{}",
            i + 1,
            u8::from(data.response.is_respondent(i)),
            fit.weights[i]
        )
        .map_err(|e| CliError::input(format!("write failed: {e}")))?;
    }
    println!("wrote {} weights to {}", data.n(), path.display());
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut file = fs::File::create(path)
        .map_err(|e| CliError::input(format!("cannot create {}: {e}", path.display())))?;
    serde_json::to_writer_pretty(&mut file, value)
        .map_err(|e| CliError::numerical(format!("serialization failed: {e}")))?;
    file.write_all(b"\n")
        .map_err(|e| CliError::input(format!("write failed: {e}")))?;
    Ok(())
}
