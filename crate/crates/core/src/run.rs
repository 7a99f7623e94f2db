//! Executes a parsed configuration and writes the trace and summary.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::{build, parse_config, to_toml, Job, RunConfig};
use crate::error::{Error, Result};
use crate::multilevel::{run_multilevel, MultiLevelReport, ScheduleValidation};
use crate::solver::{run_projected_descent, Problem, RunReport, StopReason};

pub const EXIT_OK: i32 = 0;
pub const EXIT_SOLVER: i32 = 2;
pub const EXIT_INVALID: i32 = 3;
pub const EXIT_IO: i32 = 4;

pub const TRACE_HEADER: [&str; 11] =
    ["level", "k", "r_k", "t_k", "tHat_k", "u_k", "v_k", "w_k", "mu_k", "bregman_to_ref", "radius_ok"];

/// Command-line settings that take precedence over the configuration.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub trace: Option<PathBuf>,
    pub summary: Option<PathBuf>,
    pub seed: Option<u64>,
    pub quiet: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ChecksSummary {
    pub steps_checked: usize,
    pub bound_violations: usize,
    pub strict_bound_violations: usize,
    pub descent_violations: usize,
    pub radius_violations: usize,
    pub ceiling_violations: usize,
    pub summability_sum: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summability_limit: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summability_ok: Option<bool>,
}

#[derive(Clone, Debug, Serialize)]
pub struct LevelSummary {
    pub level: usize,
    pub k: usize,
    pub stop_reason: &'static str,
    pub final_residual: f64,
    pub eta: f64,
    pub eta_certified: bool,
    pub eta_hat: f64,
    pub ctilde: f64,
    pub rho: f64,
    pub projected_start: bool,
    pub monotonicity_violations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub start_in_radius: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<String>,
    pub checks: ChecksSummary,
}

#[derive(Clone, Debug, Serialize)]
pub struct TransitionSummary {
    pub n: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Summary {
    pub mode: String,
    pub success: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stop_reason: Option<&'static str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta_hat: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selected_final_level: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_level_ok: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub transitions: Vec<TransitionSummary>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<LevelSummary>,
}

fn level_summary(level: usize, report: &RunReport, eta: f64, certified: bool, eta_hat: f64) -> LevelSummary {
    let c = &report.checks;
    LevelSummary {
        level,
        k: report.stopped_at,
        stop_reason: report.stop_reason.as_str(),
        final_residual: report.final_residual,
        eta,
        eta_certified: certified,
        eta_hat,
        ctilde: report.ctilde,
        rho: report.rho,
        projected_start: report.projected_start,
        monotonicity_violations: report.monotonicity_violations,
        start_in_radius: report.iterations.first().and_then(|s| s.radius_ok),
        failure: report.failure.as_ref().map(|e| e.to_string()),
        checks: ChecksSummary {
            steps_checked: c.steps_checked,
            bound_violations: c.bound_violations,
            strict_bound_violations: c.strict_bound_violations,
            descent_violations: c.descent_violations,
            radius_violations: c.radius_violations,
            ceiling_violations: c.ceiling_violations,
            summability_sum: c.summability_sum,
            summability_limit: c.summability_limit,
            summability_ok: c.summability_ok(),
        },
    }
}

fn transitions_summary(v: &ScheduleValidation) -> Vec<TransitionSummary> {
    v.transitions.iter().map(|t| TransitionSummary { n: t.n, lhs: t.lhs, rhs: t.rhs, ok: t.ok }).collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Appends one CSV row per recorded iteration of `report`.
pub fn write_trace_rows<W: Write>(w: &mut csv::Writer<W>, level: usize, report: &RunReport) -> Result<()> {
    for s in &report.iterations {
        let step = s.step;
        let row = [
            level.to_string(),
            s.k.to_string(),
            s.r.to_string(),
            s.t.to_string(),
            opt(step.map(|q| q.t_hat)),
            opt(step.map(|q| q.u)),
            opt(step.map(|q| q.v)),
            opt(step.map(|q| q.w)),
            opt(step.map(|q| q.mu)),
            opt(s.bregman_to_ref),
            s.radius_ok.map(|b| b.to_string()).unwrap_or_default(),
        ];
        w.write_record(&row).map_err(|e| Error::Io(e.to_string()))?;
    }
    Ok(())
}

/// Renders the trace CSV for a sequence of `(level, report)` pairs.
pub fn render_trace<'a>(runs: impl IntoIterator<Item = (usize, &'a RunReport)>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(TRACE_HEADER).map_err(|e| Error::Io(e.to_string()))?;
    for (level, report) in runs {
        write_trace_rows(&mut w, level, report)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

/// Writes `bytes` to a temporary file next to `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let io = |e: std::io::Error| Error::Io(format!("{}: {e}", path.display()));
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

fn exit_for(e: &Error) -> i32 {
    match e {
        Error::Io(_) => EXIT_IO,
        _ => EXIT_INVALID,
    }
}

/// What a run produced, before anything is written.
pub struct Outcome {
    pub code: i32,
    pub summary: Summary,
    pub trace: Option<Vec<u8>>,
    /// The generated configuration of `example-schedule` mode.
    pub generated: Option<String>,
}

fn single_outcome(report: &RunReport, eta: f64, certified: bool, eta_hat: f64) -> Result<Outcome> {
    let summary = Summary {
        mode: "single".into(),
        success: report.succeeded(),
        stop_reason: Some(report.stop_reason.as_str()),
        final_residual: Some(report.final_residual),
        eta_hat: Some(eta_hat),
        final_x: Some(report.final_x.to_vec()),
        levels: vec![level_summary(0, report, eta, certified, eta_hat)],
        ..Default::default()
    };
    let trace = Some(render_trace([(0, report)])?);
    Ok(Outcome { code: if report.succeeded() { EXIT_OK } else { EXIT_SOLVER }, summary, trace, generated: None })
}

fn multi_outcome(report: &MultiLevelReport, schedule: &crate::multilevel::Schedule, v: &ScheduleValidation) -> Result<Outcome> {
    let levels = report
        .levels
        .iter()
        .map(|o| {
            let l = &schedule.levels[o.n];
            let mut s = level_summary(o.n, &o.report, l.eta, l.eta_certified, (3.0 + schedule.epsilon) * l.eta);
            s.start_in_radius = o.start_in_radius;
            s
        })
        .collect();
    let summary = Summary {
        mode: "multilevel".into(),
        success: report.succeeded(),
        stop_reason: Some(report.stop_reason.as_str()),
        final_residual: Some(report.final_residual),
        eta_hat: Some(report.eta_hat),
        selected_final_level: v.selected_final,
        final_level_ok: Some(v.final_level_ok),
        final_x: Some(report.final_x.to_vec()),
        transitions: transitions_summary(v),
        levels,
    };
    let trace = Some(render_trace(report.levels.iter().map(|o| (o.n, &o.report)))?);
    Ok(Outcome { code: if report.succeeded() { EXIT_OK } else { EXIT_SOLVER }, summary, trace, generated: None })
}

/// Runs a configuration without writing anything.
pub fn compute(config: &RunConfig, base: &Path, seed: Option<u64>) -> Result<Outcome> {
    match build(config, base, seed)? {
        Job::Single(job) => {
            let model = job.model.as_dyn();
            let problem = Problem {
                space: &job.space,
                data_space: job.data_space,
                set: &job.set,
                model: model.as_ref(),
                constants: job.constants,
                data: &job.data,
            };
            let report = run_projected_descent(&problem, &job.x0, &job.solver)?;
            single_outcome(&report, job.data.eta, job.data.certified, job.solver.eta_hat)
        }
        Job::Multilevel(job) => {
            let v = job.schedule.validate(&job.space)?;
            let report =
                run_multilevel(&job.space, job.data_space, &job.schedule, &job.y_delta, &job.x00, job.max_iterations)?;
            multi_outcome(&report, &job.schedule, &v)
        }
        Job::Validate(job) => {
            let v = job.schedule.validate(&job.space)?;
            let summary = Summary {
                mode: "validate".into(),
                success: v.ok(),
                eta_hat: Some(job.schedule.eta_hat),
                selected_final_level: v.selected_final,
                final_level_ok: Some(v.final_level_ok),
                transitions: transitions_summary(&v),
                ..Default::default()
            };
            Ok(Outcome { code: if v.ok() { EXIT_OK } else { EXIT_INVALID }, summary, trace: None, generated: None })
        }
        Job::ExampleSchedule(job) => {
            let generated = to_toml(&job.generated).map_err(|e| Error::InvalidConfig(e.to_string()))?;
            let summary = Summary {
                mode: "example-schedule".into(),
                success: true,
                eta_hat: Some(job.schedule.eta_hat),
                selected_final_level: Some(job.schedule.levels.len() - 1),
                ..Default::default()
            };
            Ok(Outcome { code: EXIT_OK, summary, trace: None, generated: Some(generated) })
        }
    }
}

fn say(quiet: bool, msg: impl std::fmt::Display) {
    if !quiet {
        println!("{msg}");
    }
}

/// Runs `config`, writes the requested files and returns the process exit code.
/// `base` resolves relative paths in the configuration.
pub fn execute(config: &RunConfig, base: &Path, overrides: &Overrides) -> i32 {
    let outcome = match compute(config, base, overrides.seed) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return exit_for(&e);
        }
    };
    // paths from the file are relative to it, paths from flags to the working directory
    let from_config = |p: &Option<PathBuf>| p.as_ref().map(|p| base.join(p));
    let trace_path = overrides.trace.clone().or_else(|| from_config(&config.output.trace_path));
    let summary_path = overrides.summary.clone().or_else(|| from_config(&config.output.summary_path));

    let mut writes: Vec<(PathBuf, Vec<u8>)> = Vec::new();
    if let (Some(p), Some(t)) = (trace_path, &outcome.trace) {
        writes.push((p, t.clone()));
    }
    let summary_text = match toml::to_string(&outcome.summary) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: cannot render summary: {e}");
            return EXIT_IO;
        }
    };
    if let Some(p) = summary_path {
        writes.push((p, summary_text.clone().into_bytes()));
    }
    if let Some(g) = &outcome.generated {
        match from_config(&config.output.schedule_path) {
            Some(p) => writes.push((p, g.clone().into_bytes())),
            None => print!("{g}"),
        }
    }
    for (path, bytes) in &writes {
        if let Err(e) = write_atomic(path, bytes) {
            eprintln!("error: {e}");
            return EXIT_IO;
        }
    }

    let s = &outcome.summary;
    match (s.stop_reason, s.final_residual) {
        (Some(reason), Some(res)) => {
            let ks: Vec<String> = s.levels.iter().map(|l| l.k.to_string()).collect();
            say(overrides.quiet, format!("{reason}: K = [{}], final residual {res:e}", ks.join(", ")));
        }
        _ => say(overrides.quiet, format!("{}: {}", s.mode, if s.success { "ok" } else { "failed" })),
    }
    if let Some(reason) = s.stop_reason.filter(|r| *r != StopReason::DiscrepancyMet.as_str()) {
        if let Some(f) = s.levels.last().and_then(|l| l.failure.as_ref()) {
            eprintln!("run stopped with {reason}: {f}");
        }
    }
    outcome.code
}

/// Reads, parses and executes the configuration file at `path`.
pub fn execute_file(path: &Path, overrides: &Overrides) -> i32 {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: {}: {e}", path.display());
            return EXIT_IO;
        }
    };
    let config = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_INVALID;
        }
    };
    let base = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    execute(&config, base, overrides)
}
