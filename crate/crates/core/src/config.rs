//! Run configuration: a TOML document, validated before anything is computed.
//!
//! Parsing collects every schema problem instead of stopping at the first.
//! Unknown keys are errors. Matrices and data vectors may live in CSV files
//! referenced by path; those are read by [`build`], relative to the directory
//! of the configuration file.

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::{Error, Result};
use crate::geometry::{Data, DataSpace, Primal, SpaceGeometry};
use crate::models::{best_approximation, ForwardModel, LinearModel, ModelConstants, NoisyData, QuadraticModel};
use crate::multilevel::{example_schedule_with, tau_bound, ExampleParams, Level, Schedule};
use crate::sets::ConvexSet;
use crate::solver::SolverConfig;

/// Every problem found in a configuration, each prefixed by the path of the field.
#[derive(Clone, Debug, PartialEq, Error)]
#[error("invalid configuration:\n  {}", .errors.join("\n  "))]
pub struct SchemaError {
    pub errors: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Single,
    Multilevel,
    Validate,
    ExampleSchedule,
}

fn two() -> f64 {
    2.0
}

fn default_max_iterations() -> usize {
    SolverConfig::DEFAULT_MAX_ITERATIONS
}

fn default_true() -> bool {
    true
}

fn one() -> f64 {
    1.0
}

fn default_max_levels() -> usize {
    1000
}

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceSection {
    pub dim: usize,
    #[serde(default = "two")]
    pub r: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cp: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gq: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSpaceSection {
    #[serde(default = "two")]
    pub s: f64,
}

impl Default for DataSpaceSection {
    fn default() -> Self {
        Self { s: 2.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Linear,
    Diagonal,
    Quadratic,
}

/// `linear`: `matrix` or `matrix_file`. `diagonal`: `sigma` and optional
/// `rows`. `quadratic`: either of those plus `epsilon`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSection {
    pub kind: ModelKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrix_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SetKind {
    Whole,
    Box,
    Ball,
    Subspace,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SetSection {
    pub kind: SetKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support: Option<Vec<usize>>,
}

impl SetSection {
    pub fn whole() -> Self {
        Self { kind: SetKind::Whole, lower: None, upper: None, center: None, radius: None, support: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantsSection {
    pub lhat: f64,
    pub lip: f64,
    pub stability: f64,
}

/// Exactly one of `y_delta`, `y_file` or `truth`. With `truth`, the data are
/// `F(truth)` plus seeded Gaussian noise of Euclidean norm `noise_level`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_delta: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y_file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<f64>>,
    #[serde(default)]
    pub noise_level: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_hat: Option<f64>,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default)]
    pub seed: u64,
    /// Starting point; zero when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x0: Option<Vec<f64>>,
}

impl Default for SolverSection {
    fn default() -> Self {
        Self { eta: None, eta_hat: None, max_iterations: default_max_iterations(), seed: 0, x0: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_solution: Option<Vec<f64>>,
    #[serde(default = "default_true")]
    pub check_theorems: bool,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self { reference_solution: None, check_theorems: true }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary_path: Option<PathBuf>,
    /// Where `example-schedule` mode writes the generated configuration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule_path: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSection {
    #[serde(default = "one")]
    pub epsilon: f64,
    pub eta_hat: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelSection {
    pub set: SetSection,
    /// Computed exactly for linear models on subspaces when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<f64>>,
}

/// Parameters of the closed-form example schedule. `tau` or `tau_fraction`
/// (of its upper bound) must be given.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExampleSection {
    pub lambda: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau_fraction: Option<f64>,
    pub eta_hat: f64,
    #[serde(default = "default_max_levels")]
    pub max_levels: usize,
    #[serde(default, skip_serializing_if = "is_false")]
    pub allow_small_lambda: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub space: SpaceSection,
    #[serde(default)]
    pub data_space: DataSpaceSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsSection>,
    /// Constraint set of a single-level run; the whole space when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub set: Option<SetSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<ScheduleSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Vec<LevelSection>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub example: Option<ExampleSection>,
}

struct Errors(Vec<String>);

impl Errors {
    fn push(&mut self, path: &str, msg: impl fmt::Display) {
        self.0.push(format!("{path}: {msg}"));
    }

    fn require<T>(&mut self, value: &Option<T>, path: &str, why: &str) {
        if value.is_none() {
            self.push(path, format!("required {why}"));
        }
    }

    fn forbid<T>(&mut self, value: &Option<T>, path: &str, why: &str) {
        if value.is_some() {
            self.push(path, format!("not allowed {why}"));
        }
    }

    fn dim(&mut self, path: &str, expected: usize, found: usize) {
        if expected != found {
            self.push(path, format!("expected {expected} entries, found {found}"));
        }
    }
}

/// Parses and validates a configuration document.
pub fn parse_config(text: &str) -> std::result::Result<RunConfig, SchemaError> {
    let de = toml::Deserializer::parse(text).map_err(|e| SchemaError { errors: vec![e.to_string()] })?;
    let mut unknown = Vec::new();
    let parsed: std::result::Result<RunConfig, _> =
        serde_ignored::deserialize(de, |path| unknown.push(format!("{path}: unknown key")));
    let cfg = match parsed {
        Ok(cfg) => cfg,
        Err(e) => {
            unknown.push(e.to_string().trim().to_string());
            return Err(SchemaError { errors: unknown });
        }
    };
    let mut errors = Errors(unknown);
    validate(&cfg, &mut errors);
    if errors.0.is_empty() {
        Ok(cfg)
    } else {
        Err(SchemaError { errors: errors.0 })
    }
}

/// Serializes a configuration back to TOML.
pub fn to_toml(config: &RunConfig) -> std::result::Result<String, toml::ser::Error> {
    toml::to_string(config)
}

fn space_of(s: &SpaceSection) -> Result<SpaceGeometry> {
    SpaceGeometry::new(s.dim, s.r, s.p, s.weights.clone(), s.cp, s.gq)
}

fn validate(cfg: &RunConfig, e: &mut Errors) {
    let space = match space_of(&cfg.space) {
        Ok(s) => Some(s),
        Err(err) => {
            e.push("space", err);
            None
        }
    };
    let dim = cfg.space.dim;
    if let Err(err) = DataSpace::new(cfg.data_space.s) {
        e.push("data_space.s", err);
    }
    if cfg.solver.max_iterations == 0 {
        e.push("solver.max_iterations", "must be at least 1");
    }
    if let Some(x0) = &cfg.solver.x0 {
        e.dim("solver.x0", dim, x0.len());
    }
    if let Some(z) = &cfg.diagnostics.reference_solution {
        e.dim("diagnostics.reference_solution", dim, z.len());
    }
    let out_dim = cfg.model.as_ref().and_then(|m| validate_model(m, dim, e));
    if let Some(d) = &cfg.data {
        validate_data(d, dim, out_dim, e);
    }
    if let Some(c) = &cfg.constants {
        validate_constants(c, "constants", e);
    }
    if let Some(s) = &cfg.set {
        validate_set(s, "set", dim, e);
    }
    if let Some(ex) = &cfg.example {
        validate_example(ex, space.as_ref(), e);
    }

    match cfg.mode {
        Mode::Single => {
            e.require(&cfg.model, "model", "in single mode");
            e.require(&cfg.data, "data", "in single mode");
            e.require(&cfg.solver.eta_hat, "solver.eta_hat", "in single mode");
            e.forbid(&cfg.levels, "levels", "in single mode");
            e.forbid(&cfg.schedule, "schedule", "in single mode");
            if let Some(eta_hat) = cfg.solver.eta_hat {
                let eta = cfg.solver.eta.unwrap_or(0.0);
                if let Some(eta) = cfg.solver.eta {
                    if !(eta.is_finite() && eta >= 0.0) {
                        e.push("solver.eta", format!("{eta} must be nonnegative"));
                    }
                }
                if !(eta_hat.is_finite() && eta_hat > 0.0 && eta_hat > 3.0 * eta) {
                    e.push(
                        "solver.eta_hat",
                        format!("{eta_hat} must be positive and strictly greater than 3*eta = {}", 3.0 * eta),
                    );
                }
            }
        }
        Mode::Multilevel | Mode::Validate => {
            let needs_run = cfg.mode == Mode::Multilevel;
            if needs_run {
                e.require(&cfg.model, "model", "in multilevel mode");
                e.require(&cfg.data, "data", "in multilevel mode");
            }
            let from_example = cfg.mode == Mode::Validate && cfg.example.is_some() && cfg.levels.is_none();
            if !from_example {
                e.require(&cfg.schedule, "schedule", "unless an [example] section is validated");
                e.require(&cfg.levels, "levels", "unless an [example] section is validated");
            }
            if cfg.set.is_some() {
                e.push("set", "not allowed with levels; give each level its own set");
            }
            if let Some(s) = &cfg.schedule {
                if !(s.epsilon.is_finite() && s.epsilon > 0.0) {
                    e.push("schedule.epsilon", format!("{} must be positive", s.epsilon));
                }
                if !(s.eta_hat.is_finite() && s.eta_hat > 0.0) {
                    e.push("schedule.eta_hat", format!("{} must be positive", s.eta_hat));
                }
            }
            if let Some(levels) = &cfg.levels {
                validate_levels(levels, space.as_ref(), dim, e);
            }
        }
        Mode::ExampleSchedule => {
            e.require(&cfg.example, "example", "in example-schedule mode");
            e.forbid(&cfg.levels, "levels", "in example-schedule mode");
        }
    }
}

fn validate_model(m: &ModelSection, dim: usize, e: &mut Errors) -> Option<usize> {
    let dense = m.matrix.is_some() || m.matrix_file.is_some();
    if m.matrix.is_some() && m.matrix_file.is_some() {
        e.push("model", "give either matrix or matrix_file, not both");
    }
    let mut out = None;
    if let Some(rows) = &m.matrix {
        if rows.is_empty() {
            e.push("model.matrix", "must have at least one row");
        } else if rows.iter().any(|r| r.len() != dim) {
            e.push("model.matrix", format!("every row must have {dim} entries"));
        } else {
            out = Some(rows.len());
        }
    }
    if let Some(sigma) = &m.sigma {
        e.dim("model.sigma", dim, sigma.len());
        let rows = m.rows.unwrap_or(sigma.len());
        if rows < sigma.len() {
            e.push("model.rows", format!("{rows} is less than the number of singular values {}", sigma.len()));
        }
        out = Some(rows);
    } else if m.rows.is_some() {
        e.push("model.rows", "only valid together with sigma");
    }
    match m.kind {
        ModelKind::Linear => {
            if !dense {
                e.push("model", "kind linear needs matrix or matrix_file");
            }
            e.forbid(&m.sigma, "model.sigma", "for kind linear; use kind diagonal");
            e.forbid(&m.epsilon, "model.epsilon", "for kind linear");
        }
        ModelKind::Diagonal => {
            e.require(&m.sigma, "model.sigma", "for kind diagonal");
            if dense {
                e.push("model", "kind diagonal takes sigma, not a matrix");
            }
            e.forbid(&m.epsilon, "model.epsilon", "for kind diagonal");
        }
        ModelKind::Quadratic => {
            if dense == m.sigma.is_some() {
                e.push("model", "kind quadratic needs exactly one of matrix, matrix_file or sigma");
            }
            match m.epsilon {
                None => e.push("model.epsilon", "required for kind quadratic"),
                Some(eps) if !(eps.is_finite() && eps >= 0.0) => {
                    e.push("model.epsilon", format!("{eps} must be nonnegative"))
                }
                _ => {}
            }
        }
    }
    out
}

fn validate_data(d: &DataSection, dim: usize, out_dim: Option<usize>, e: &mut Errors) {
    let given = [d.y_delta.is_some(), d.y_file.is_some(), d.truth.is_some()].iter().filter(|b| **b).count();
    if given != 1 {
        e.push("data", "give exactly one of y_delta, y_file or truth");
    }
    if let (Some(y), Some(m)) = (&d.y_delta, out_dim) {
        e.dim("data.y_delta", m, y.len());
    }
    if let Some(t) = &d.truth {
        e.dim("data.truth", dim, t.len());
    }
    if !(d.noise_level.is_finite() && d.noise_level >= 0.0) {
        e.push("data.noise_level", format!("{} must be nonnegative", d.noise_level));
    }
    if d.noise_level > 0.0 && d.truth.is_none() {
        e.push("data.noise_level", "only valid together with truth");
    }
}

fn validate_constants(c: &ConstantsSection, path: &str, e: &mut Errors) {
    if let Err(err) = ModelConstants::new(c.lhat, c.lip, c.stability) {
        e.push(path, err);
    }
}

fn set_of(s: &SetSection, dim: usize) -> std::result::Result<ConvexSet, String> {
    let (has_bounds, has_ball, has_support) =
        (s.lower.is_some() || s.upper.is_some(), s.center.is_some() || s.radius.is_some(), s.support.is_some());
    let extra = match s.kind {
        SetKind::Whole => has_bounds || has_ball || has_support,
        SetKind::Box => has_ball || has_support,
        SetKind::Ball => has_bounds || has_support,
        SetKind::Subspace => has_bounds || has_ball,
    };
    if extra {
        return Err(format!("fields not used by kind {:?}", s.kind).to_lowercase());
    }
    let r = match s.kind {
        SetKind::Whole => ConvexSet::whole(dim),
        SetKind::Box => {
            let lower = s.lower.clone().unwrap_or_else(|| vec![f64::NEG_INFINITY; dim]);
            let upper = s.upper.clone().unwrap_or_else(|| vec![f64::INFINITY; dim]);
            if lower.len() != dim || upper.len() != dim {
                return Err(format!("lower and upper must have {dim} entries"));
            }
            ConvexSet::boxed(lower, upper)
        }
        SetKind::Ball => {
            let center = s.center.clone().unwrap_or_else(|| vec![0.0; dim]);
            if center.len() != dim {
                return Err(format!("center must have {dim} entries"));
            }
            let Some(radius) = s.radius else {
                return Err("radius is required for kind ball".into());
            };
            Primal::new(center).and_then(|c| ConvexSet::ball(c, radius))
        }
        SetKind::Subspace => match &s.support {
            Some(support) => ConvexSet::subspace(dim, support.clone()),
            None => return Err("support is required for kind subspace".into()),
        },
    };
    r.map_err(|e| e.to_string())
}

fn validate_set(s: &SetSection, path: &str, dim: usize, e: &mut Errors) -> Option<ConvexSet> {
    match set_of(s, dim) {
        Ok(set) => Some(set),
        Err(msg) => {
            e.push(path, msg);
            None
        }
    }
}

fn validate_levels(levels: &[LevelSection], space: Option<&SpaceGeometry>, dim: usize, e: &mut Errors) {
    if levels.is_empty() {
        e.push("levels", "at least one level is required");
    }
    let mut prev: Option<(usize, ConvexSet)> = None;
    for (i, l) in levels.iter().enumerate() {
        let path = format!("levels[{i}]");
        let set = validate_set(&l.set, &format!("{path}.set"), dim, e);
        if let Some(eta) = l.eta {
            if !(eta.is_finite() && eta >= 0.0) {
                e.push(&format!("{path}.eta"), format!("{eta} must be nonnegative"));
            }
        }
        if let Some(c) = &l.constants {
            validate_constants(c, &format!("{path}.constants"), e);
        }
        if let Some(z) = &l.reference {
            e.dim(&format!("{path}.reference"), dim, z.len());
        }
        if let (Some(space), Some(set)) = (space, set) {
            if let Some((j, p)) = &prev {
                if p.is_subset_of(&set, space) == Ok(false) {
                    e.push(&format!("{path}.set"), format!("sets must be nested, but levels[{j}].set is not contained in it"));
                }
            }
            prev = Some((i, set));
        }
    }
}

fn validate_example(ex: &ExampleSection, space: Option<&SpaceGeometry>, e: &mut Errors) {
    if !(ex.lambda.is_finite() && ex.lambda > 0.0) {
        e.push("example.lambda", format!("{} must be positive", ex.lambda));
    }
    if !(ex.eta_hat.is_finite() && ex.eta_hat > 0.0) {
        e.push("example.eta_hat", format!("{} must be positive", ex.eta_hat));
    }
    match (ex.tau, ex.tau_fraction) {
        (Some(_), Some(_)) | (None, None) => e.push("example", "give exactly one of tau or tau_fraction"),
        (None, Some(f)) if !(f > 0.0 && f < 1.0) => e.push("example.tau_fraction", format!("{f} must lie in (0, 1)")),
        (Some(t), None) => {
            if let Some(space) = space {
                let bound = tau_bound(space, ex.lambda);
                if !(t > 0.0 && t < bound) {
                    e.push("example.tau", format!("{t} must lie in (0, {bound})"));
                }
            }
        }
        _ => {}
    }
}

/// A model as built from the configuration, keeping its concrete type for
/// the closed-form constants.
#[derive(Clone, Debug)]
pub enum BuiltModel {
    Linear(Arc<LinearModel>),
    Quadratic(Arc<QuadraticModel>),
}

impl BuiltModel {
    pub fn as_dyn(&self) -> Arc<dyn ForwardModel> {
        match self {
            Self::Linear(m) => m.clone(),
            Self::Quadratic(m) => m.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct SingleJob {
    pub space: SpaceGeometry,
    pub data_space: DataSpace,
    pub set: ConvexSet,
    pub model: BuiltModel,
    pub constants: ModelConstants,
    pub data: NoisyData,
    pub x0: Primal,
    pub solver: SolverConfig,
}

#[derive(Clone, Debug)]
pub struct MultiJob {
    pub space: SpaceGeometry,
    pub data_space: DataSpace,
    pub schedule: Schedule,
    pub y_delta: Data,
    pub x00: Primal,
    pub max_iterations: usize,
}

#[derive(Clone, Debug)]
pub struct ValidateJob {
    pub space: SpaceGeometry,
    pub schedule: Schedule,
}

#[derive(Clone, Debug)]
pub struct ExampleJob {
    pub schedule: Schedule,
    /// A configuration carrying the generated schedule: `multilevel` when the
    /// input had a model and data to run it with, `validate` otherwise.
    pub generated: RunConfig,
}

#[derive(Clone, Debug)]
#[allow(clippy::large_enum_variant)]
pub enum Job {
    Single(SingleJob),
    Multilevel(MultiJob),
    Validate(ValidateJob),
    ExampleSchedule(ExampleJob),
}

fn read_csv_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?;
        let row = record
            .iter()
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| Error::InvalidConfig(format!("{}: row {}: '{f}' is not a number", path.display(), i + 1)))
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

fn build_model(m: &ModelSection, base: &Path) -> Result<BuiltModel> {
    let rows = match (&m.matrix, &m.matrix_file) {
        (Some(rows), _) => Some(rows.clone()),
        (None, Some(f)) => Some(read_csv_rows(&resolve(base, f))?),
        _ => None,
    };
    Ok(match m.kind {
        ModelKind::Linear => BuiltModel::Linear(Arc::new(LinearModel::from_rows(&rows.unwrap_or_default())?)),
        ModelKind::Diagonal => {
            let sigma = m.sigma.clone().unwrap_or_default();
            BuiltModel::Linear(Arc::new(LinearModel::diagonal(&sigma, m.rows.unwrap_or(sigma.len()))?))
        }
        ModelKind::Quadratic => {
            let eps = m.epsilon.unwrap_or(0.0);
            let q = match (rows, &m.sigma) {
                (Some(rows), _) => QuadraticModel::from_rows(&rows, eps)?,
                (None, Some(sigma)) => QuadraticModel::diagonal(sigma, m.rows.unwrap_or(sigma.len()), eps)?,
                (None, None) => return Err(Error::InvalidConfig("quadratic model needs a matrix or sigma".into())),
            };
            BuiltModel::Quadratic(Arc::new(q))
        }
    })
}

fn build_data(d: &DataSection, model: &BuiltModel, seed: u64, base: &Path) -> Result<Data> {
    let m = model.as_dyn();
    let y = if let Some(y) = &d.y_delta {
        y.clone()
    } else if let Some(f) = &d.y_file {
        read_csv_rows(&resolve(base, f))?.into_iter().flatten().collect()
    } else if let Some(t) = &d.truth {
        let mut y = m.eval(&Primal::new(t.clone())?)?.into_vec();
        if d.noise_level > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g: Vec<f64> = (0..y.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (yi, gi) in y.iter_mut().zip(&g) {
                *yi += d.noise_level * gi / n;
            }
        }
        y
    } else {
        return Err(Error::InvalidConfig("data needs y_delta, y_file or truth".into()));
    };
    if y.len() != m.output_dim() {
        return Err(Error::DimensionMismatch { expected: m.output_dim(), found: y.len() });
    }
    Data::new(y)
}

/// Sup-norm bound of a bounded set, if it has one.
fn sup_radius(set: &ConvexSet, space: &SpaceGeometry) -> Option<f64> {
    match set {
        ConvexSet::Box { lower, upper } => {
            let r = lower.iter().chain(upper).fold(0.0f64, |m, v| m.max(v.abs()));
            r.is_finite().then_some(r)
        }
        ConvexSet::Ball { center, radius } => {
            // |x_i − c_i| ≤ ‖x − c‖ / w_i^(1/r)
            let wmin = space.weights().iter().fold(f64::INFINITY, |m, &w| m.min(w));
            let c = center.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            Some(c + radius / wmin.powf(1.0 / space.r()))
        }
        _ => None,
    }
}

fn derive_constants(
    given: Option<&ConstantsSection>,
    model: &BuiltModel,
    set: &ConvexSet,
    space: &SpaceGeometry,
    data_space: &DataSpace,
) -> Result<ModelConstants> {
    if let Some(c) = given {
        return ModelConstants::new(c.lhat, c.lip, c.stability);
    }
    let euclid = space.is_hilbert() && data_space.s() == 2.0;
    match model {
        BuiltModel::Linear(m) if euclid => m.hilbert_constants(set),
        BuiltModel::Quadratic(m) if euclid => match sup_radius(set, space) {
            Some(r) => m.hilbert_constants(r),
            None => Err(Error::InvalidConfig(
                "quadratic constants need a bounded set (box or ball); otherwise give [constants]".into(),
            )),
        },
        _ => Err(Error::InvalidConfig(
            "constants are only derived for the unweighted Euclidean geometry with s = 2; give [constants]".into(),
        )),
    }
}

/// `(z†, η)` when they are available in closed form.
fn exact_best_approximation(
    model: &BuiltModel,
    set: &ConvexSet,
    data_space: &DataSpace,
    y: &Data,
) -> Option<(Primal, f64)> {
    match model {
        BuiltModel::Linear(m) => best_approximation(m, set, data_space, y).ok(),
        BuiltModel::Quadratic(_) => None,
    }
}

fn primal_or_zero(v: &Option<Vec<f64>>, dim: usize) -> Result<Primal> {
    v.as_ref().map_or(Ok(Primal::zeros(dim)), |v| Primal::new(v.clone()))
}

/// Constructs everything a run needs. `base` resolves relative file paths;
/// `seed` overrides `solver.seed` when given.
pub fn build(cfg: &RunConfig, base: &Path, seed: Option<u64>) -> Result<Job> {
    let space = space_of(&cfg.space)?;
    let data_space = DataSpace::new(cfg.data_space.s)?;
    let dim = space.dim();
    let seed = seed.unwrap_or(cfg.solver.seed);

    match cfg.mode {
        Mode::Single => {
            let model = build_model(cfg.model.as_ref().ok_or(Error::InvalidConfig("missing model".into()))?, base)?;
            let set = set_of(cfg.set.as_ref().unwrap_or(&SetSection::whole()), dim).map_err(Error::InvalidConfig)?;
            let y = build_data(cfg.data.as_ref().ok_or(Error::InvalidConfig("missing data".into()))?, &model, seed, base)?;
            let constants = derive_constants(cfg.constants.as_ref(), &model, &set, &space, &data_space)?;
            let exact = exact_best_approximation(&model, &set, &data_space, &y);
            let (eta, certified) = match (cfg.solver.eta, &exact) {
                (Some(eta), _) => (eta, false),
                (None, Some((_, eta))) => (*eta, true),
                (None, None) => match &cfg.data {
                    Some(DataSection { truth: Some(t), noise_level, .. }) if set.contains(&space, &Primal::new(t.clone())?, 0.0)? => {
                        (*noise_level, true)
                    }
                    _ => return Err(Error::InvalidConfig("solver.eta is required for this model and set".into())),
                },
            };
            let eta_hat = cfg.solver.eta_hat.ok_or(Error::InvalidConfig("missing solver.eta_hat".into()))?;
            let mut solver = SolverConfig::new(eta, eta_hat)?.with_max_iterations(cfg.solver.max_iterations);
            if cfg.diagnostics.check_theorems {
                let reference = match &cfg.diagnostics.reference_solution {
                    Some(z) => Some(Primal::new(z.clone())?),
                    None => exact.map(|(z, _)| z),
                };
                if let Some(z) = reference {
                    solver = solver.with_reference(z);
                }
            }
            Ok(Job::Single(SingleJob {
                space,
                data_space,
                set,
                model,
                constants,
                data: NoisyData::new(y, eta, certified)?,
                x0: primal_or_zero(&cfg.solver.x0, dim)?,
                solver,
            }))
        }
        Mode::Multilevel | Mode::Validate => {
            if cfg.mode == Mode::Validate && cfg.levels.is_none() {
                let ex = cfg.example.as_ref().ok_or(Error::InvalidConfig("missing levels or example".into()))?;
                return Ok(Job::Validate(ValidateJob { schedule: example_from(ex, &space)?, space }));
            }
            let model = cfg.model.as_ref().map(|m| build_model(m, base)).transpose()?;
            let y = match (&cfg.data, &model) {
                (Some(d), Some(m)) => Some(build_data(d, m, seed, base)?),
                _ => None,
            };
            let sched = cfg.schedule.as_ref().ok_or(Error::InvalidConfig("missing schedule".into()))?;
            let levels = cfg
                .levels
                .as_ref()
                .ok_or(Error::InvalidConfig("missing levels".into()))?
                .iter()
                .enumerate()
                .map(|(n, l)| build_level(n, l, model.as_ref(), y.as_ref(), &space, &data_space, cfg.diagnostics.check_theorems))
                .collect::<Result<Vec<_>>>()?;
            let schedule = Schedule::new(levels, sched.epsilon, sched.eta_hat)?;
            if cfg.mode == Mode::Validate {
                return Ok(Job::Validate(ValidateJob { space, schedule }));
            }
            Ok(Job::Multilevel(MultiJob {
                x00: primal_or_zero(&cfg.solver.x0, dim)?,
                space,
                data_space,
                schedule,
                y_delta: y.ok_or(Error::InvalidConfig("missing data".into()))?,
                max_iterations: cfg.solver.max_iterations,
            }))
        }
        Mode::ExampleSchedule => {
            let ex = cfg.example.as_ref().ok_or(Error::InvalidConfig("missing example".into()))?;
            let schedule = example_from(ex, &space)?;
            let generated = RunConfig {
                mode: if cfg.model.is_some() && cfg.data.is_some() { Mode::Multilevel } else { Mode::Validate },
                example: None,
                set: None,
                constants: None,
                output: OutputSection { schedule_path: None, ..cfg.output.clone() },
                schedule: Some(ScheduleSection { epsilon: schedule.epsilon, eta_hat: schedule.eta_hat }),
                levels: Some(
                    schedule
                        .levels
                        .iter()
                        .map(|l| LevelSection {
                            set: SetSection::whole(),
                            eta: Some(l.eta),
                            constants: Some(ConstantsSection {
                                lhat: l.constants.lhat,
                                lip: l.constants.lip,
                                stability: l.constants.stability,
                            }),
                            reference: None,
                        })
                        .collect(),
                ),
                ..cfg.clone()
            };
            Ok(Job::ExampleSchedule(ExampleJob { schedule, generated }))
        }
    }
}

fn example_from(ex: &ExampleSection, space: &SpaceGeometry) -> Result<Schedule> {
    let tau = match (ex.tau, ex.tau_fraction) {
        (Some(t), _) => t,
        (None, Some(f)) => f * tau_bound(space, ex.lambda),
        (None, None) => return Err(Error::InvalidConfig("example needs tau or tau_fraction".into())),
    };
    example_schedule_with(
        space,
        &ExampleParams {
            lambda: ex.lambda,
            tau,
            eta_hat: ex.eta_hat,
            max_levels: ex.max_levels,
            allow_small_lambda: ex.allow_small_lambda,
        },
    )
}

fn build_level(
    n: usize,
    l: &LevelSection,
    model: Option<&BuiltModel>,
    y: Option<&Data>,
    space: &SpaceGeometry,
    data_space: &DataSpace,
    check_theorems: bool,
) -> Result<Level> {
    let set = set_of(&l.set, space.dim()).map_err(|m| Error::InvalidConfig(format!("levels[{n}].set: {m}")))?;
    let constants = match model {
        Some(m) => derive_constants(l.constants.as_ref(), m, &set, space, data_space)?,
        None => {
            let c = l.constants.ok_or_else(|| {
                Error::InvalidConfig(format!("levels[{n}].constants: required when there is no model"))
            })?;
            ModelConstants::new(c.lhat, c.lip, c.stability)?
        }
    };
    let exact = match (model, y) {
        (Some(m), Some(y)) => exact_best_approximation(m, &set, data_space, y),
        _ => None,
    };
    let (eta, certified) = match (l.eta, &exact) {
        (Some(eta), _) => (eta, false),
        (None, Some((_, eta))) => (*eta, true),
        (None, None) => {
            return Err(Error::InvalidConfig(format!("levels[{n}].eta: required for this model and set")));
        }
    };
    let mut level = Level::new(n, set, eta, constants)?.certified(certified);
    if let Some(m) = model {
        level = level.with_model(m.as_dyn());
    }
    if check_theorems {
        let reference = match &l.reference {
            Some(z) => Some(Primal::new(z.clone())?),
            None => exact.map(|(z, _)| z),
        };
        if let Some(z) = reference {
            level = level.with_reference(z);
        }
    }
    Ok(level)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
mode = "single"
[space]
dim = 2
[model]
kind = "diagonal"
sigma = [1.0, 0.5]
[data]
y_delta = [1.0, 1.0]
[solver]
eta_hat = 1e-6
"#;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = parse_config(MINIMAL).unwrap();
        assert_eq!(cfg.data_space.s, 2.0);
        assert_eq!(cfg.space.r, 2.0);
        assert!(cfg.space.weights.is_none());
        assert_eq!(cfg.solver.max_iterations, 1_000_000);
        assert!(cfg.diagnostics.check_theorems);
        let Job::Single(job) = build(&cfg, Path::new("."), None).unwrap() else { panic!("expected single") };
        assert_eq!(job.data.eta, 0.0);
        assert!(job.data.certified);
        assert!(job.solver.reference.is_some());
    }

    #[test]
    fn eta_hat_at_three_eta_is_rejected() {
        let text = MINIMAL.replace("eta_hat = 1e-6", "eta = 0.1\neta_hat = 0.30000000000000004");
        let err = parse_config(&text).unwrap_err();
        assert!(err.errors.iter().any(|m| m.contains("solver.eta_hat") && m.contains("3*eta")), "{err}");
    }

    #[test]
    fn all_errors_are_collected() {
        let text = r#"
mode = "single"
colour = "blue"
[space]
dim = 2
r = 0.5
[solver]
eta_hat = -1.0
typo = 3
"#;
        let err = parse_config(text).unwrap_err();
        let joined = err.errors.join("\n");
        for needle in ["colour", "solver.typo", "space", "model: required", "data: required", "solver.eta_hat"] {
            assert!(joined.contains(needle), "missing {needle} in\n{joined}");
        }
    }

    #[test]
    fn non_nested_levels_are_rejected() {
        let text = r#"
mode = "multilevel"
[space]
dim = 3
[model]
kind = "diagonal"
sigma = [1.0, 0.5, 0.25]
[data]
y_delta = [1.0, 1.0, 1.0]
[schedule]
eta_hat = 0.1
[[levels]]
set = { kind = "subspace", support = [0, 1] }
[[levels]]
set = { kind = "subspace", support = [1, 2] }
"#;
        let err = parse_config(text).unwrap_err();
        assert!(err.errors.iter().any(|m| m.contains("levels[1].set") && m.contains("nested")), "{err}");
    }

    #[test]
    fn serialization_round_trip() {
        for text in [MINIMAL, include_str!("../../../configs/multilevel.toml")] {
            let cfg = parse_config(text).unwrap();
            let again = parse_config(&to_toml(&cfg).unwrap()).unwrap();
            assert_eq!(cfg, again);
        }
    }

    #[test]
    fn example_schedule_round_trips() {
        let text = r#"
mode = "example-schedule"
[space]
dim = 2
[example]
lambda = 0.1
tau_fraction = 0.5
eta_hat = 1e-3
"#;
        let with_model = format!("{text}[model]\nkind = \"diagonal\"\nsigma = [1.0, 0.5]\n[data]\ny_delta = [0.1, 0.2]\n");
        for (text, mode) in [(text.to_string(), Mode::Validate), (with_model, Mode::Multilevel)] {
            let cfg = parse_config(&text).unwrap();
            let Job::ExampleSchedule(job) = build(&cfg, Path::new("."), None).unwrap() else { panic!() };
            assert_eq!(job.generated.mode, mode);
            let reparsed = parse_config(&to_toml(&job.generated).unwrap()).unwrap();
            assert_eq!(reparsed, job.generated);
            let schedule = match build(&reparsed, Path::new("."), None).unwrap() {
                Job::Validate(v) => v.schedule,
                Job::Multilevel(m) => m.schedule,
                _ => panic!("unexpected job"),
            };
            assert_eq!(schedule.etas(), job.schedule.etas());
            for (a, b) in schedule.levels.iter().zip(&job.schedule.levels) {
                assert_eq!(a.constants, b.constants);
            }
            assert!(schedule.validate(&SpaceGeometry::hilbert(2)).unwrap().ok());
        }
    }

    #[test]
    fn noisy_truth_is_seeded() {
        let text = MINIMAL.replace("y_delta = [1.0, 1.0]", "truth = [1.0, 2.0]\nnoise_level = 0.01");
        let cfg = parse_config(&text).unwrap();
        let y = |seed| match build(&cfg, Path::new("."), seed).unwrap() {
            Job::Single(j) => j.data.y_delta,
            _ => unreachable!(),
        };
        assert_eq!(y(Some(3)), y(Some(3)));
        assert_ne!(y(Some(3)), y(Some(4)));
        let y3 = y(Some(3));
        let d = ((y3[0] - 1.0).powi(2) + (y3[1] - 1.0).powi(2)).sqrt();
        assert!((d - 0.01).abs() < 1e-15);
    }

    #[test]
    fn matrix_file_is_read_relative_to_base() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.csv"), "# A\n2, 0\n0, 1\n").unwrap();
        let text = MINIMAL.replace("kind = \"diagonal\"\nsigma = [1.0, 0.5]", "kind = \"linear\"\nmatrix_file = \"a.csv\"");
        let cfg = parse_config(&text).unwrap();
        let Job::Single(job) = build(&cfg, dir.path(), None).unwrap() else { panic!() };
        let BuiltModel::Linear(m) = job.model else { panic!() };
        assert_eq!(m.matrix()[(0, 0)], 2.0);
        assert!(build(&cfg, Path::new("/nonexistent"), None).is_err());
    }

    #[test]
    fn quadratic_constants_need_a_bounded_set() {
        let text = r#"
mode = "single"
[space]
dim = 2
[model]
kind = "quadratic"
sigma = [2.0, 1.5]
epsilon = 0.05
[set]
kind = "box"
lower = [-1.0, -1.0]
upper = [1.0, 1.0]
[data]
truth = [0.5, 0.5]
[solver]
eta_hat = 1e-6
"#;
        let cfg = parse_config(text).unwrap();
        let Job::Single(job) = build(&cfg, Path::new("."), None).unwrap() else { panic!() };
        assert_eq!(job.constants.lip, 0.1);
        let unbounded = text.replace("kind = \"box\"\nlower = [-1.0, -1.0]\nupper = [1.0, 1.0]", "kind = \"whole\"");
        assert!(build(&parse_config(&unbounded).unwrap(), Path::new("."), None).is_err());
    }
}
