//! Multi-level descent over nested convex sets.
//!
//! Level `n` runs the single-level iteration on `Z_n` with the stopping
//! threshold `(3+ε)η_n` and hands its stopped iterate to level `n+1` as the
//! starting point. The schedule of approximation errors `η_n` and constants
//! `C_n, L_n, L̂_n` must make every stopped iterate land inside the next
//! level's convergence radius, which [`validate_transition`] checks.

use std::f64::consts::E;
use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{Data, DataSpace, Primal, SpaceGeometry};
use crate::models::{ForwardModel, ModelConstants, NoisyData};
use crate::sets::ConvexSet;
use crate::solver::{
    compute_ctilde, convergence_radius, run_projected_descent, Problem, RunReport, SolverConfig, StopReason,
};

/// One level of a schedule.
#[derive(Clone, Debug)]
pub struct Level {
    pub index: usize,
    pub set: ConvexSet,
    /// `F_n`; a schedule without models can be validated but not run.
    pub model: Option<Arc<dyn ForwardModel>>,
    /// `η_n ≥ dist(y^δ, F_n(Z_n))`.
    pub eta: f64,
    /// Whether `η_n` was computed exactly.
    pub eta_certified: bool,
    pub constants: ModelConstants,
    /// `z_n†`, when known.
    pub reference: Option<Primal>,
}

impl Level {
    pub fn new(index: usize, set: ConvexSet, eta: f64, constants: ModelConstants) -> Result<Self> {
        set.validate()?;
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::InvalidSchedule(format!("level {index}: eta = {eta} must be nonnegative")));
        }
        Ok(Self { index, set, model: None, eta, eta_certified: false, constants, reference: None })
    }

    pub fn with_model(mut self, model: Arc<dyn ForwardModel>) -> Self {
        self.model = Some(model);
        self
    }

    pub fn with_reference(mut self, z: Primal) -> Self {
        self.reference = Some(z);
        self
    }

    pub fn certified(mut self, yes: bool) -> Self {
        self.eta_certified = yes;
        self
    }

    pub fn ctilde(&self, space: &SpaceGeometry) -> f64 {
        compute_ctilde(space, self.constants.lip, self.constants.stability)
    }

    /// `ρ_n`, infinite when `C̃_n = 0`.
    pub fn rho(&self, space: &SpaceGeometry) -> Result<f64> {
        match convergence_radius(space, self.constants.lhat, self.ctilde(space), self.eta) {
            Err(Error::LinearCaseUnbounded) => Ok(f64::INFINITY),
            other => other,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Schedule {
    pub levels: Vec<Level>,
    /// `ε > 0` in the per-level threshold `(3+ε)η_n`.
    pub epsilon: f64,
    pub eta_hat: f64,
}

/// Both sides of the neighbor condition between levels `n` and `n+1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub n: usize,
    /// `(3+ε)η_n`
    pub lhs: f64,
    /// `(C_p/p)^(1/p) (L̂C)^(−1) ((1 + √(1 − 8C̃η))/(2C̃) − 2η) − η` at level `n+1`.
    pub rhs: f64,
    pub ok: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScheduleValidation {
    pub transitions: Vec<Transition>,
    /// Index returned by [`select_final_level`]; `None` if no level qualifies.
    pub selected_final: Option<usize>,
    pub final_level_ok: bool,
}

impl ScheduleValidation {
    pub fn ok(&self) -> bool {
        self.final_level_ok && self.transitions.iter().all(|t| t.ok)
    }
}

/// Evaluates the neighbor condition between `level` and `next`.
pub fn validate_transition(space: &SpaceGeometry, level: &Level, next: &Level, epsilon: f64) -> Result<Transition> {
    let p = space.p();
    let lhs = (3.0 + epsilon) * level.eta;
    let ct = next.ctilde(space);
    let rhs = if ct == 0.0 {
        f64::INFINITY
    } else {
        let x = 8.0 * ct * next.eta;
        if x >= 1.0 {
            return Err(Error::EtaTooLarge(x));
        }
        let bracket = (1.0 + (1.0 - x).sqrt()) / (2.0 * ct) - 2.0 * next.eta;
        (space.cp() / p).powf(1.0 / p) / (next.constants.lhat * next.constants.stability) * bracket - next.eta
    };
    Ok(Transition { n: level.index, lhs, rhs, ok: lhs < rhs })
}

/// First `N` with `(3+ε)η_N ≤ η̂`.
pub fn select_final_level(etas: &[f64], epsilon: f64, eta_hat: f64) -> Result<usize> {
    if etas.windows(2).any(|w| w[1] > w[0]) {
        return Err(Error::InvalidSchedule("eta sequence must be nonincreasing".into()));
    }
    etas.iter().position(|&eta| (3.0 + epsilon) * eta <= eta_hat).ok_or(Error::NoSuchLevel)
}

impl Schedule {
    pub fn new(levels: Vec<Level>, epsilon: f64, eta_hat: f64) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidSchedule("a schedule needs at least one level".into()));
        }
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidSchedule(format!("epsilon = {epsilon} must be positive")));
        }
        if !(eta_hat.is_finite() && eta_hat > 0.0) {
            return Err(Error::InvalidSchedule(format!("eta_hat = {eta_hat} must be positive")));
        }
        for (i, l) in levels.iter().enumerate() {
            if l.index != i {
                return Err(Error::InvalidSchedule(format!("level at position {i} has index {}", l.index)));
            }
            check_dim(levels[0].set.dim(), l.set.dim())?;
        }
        Ok(Self { levels, epsilon, eta_hat })
    }

    pub fn etas(&self) -> Vec<f64> {
        self.levels.iter().map(|l| l.eta).collect()
    }

    /// Nested sets, nondecreasing `C_n` and nonincreasing `η_n`.
    pub fn check_monotonicity(&self, space: &SpaceGeometry) -> Result<()> {
        for w in self.levels.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            if !a.set.is_subset_of(&b.set, space)? {
                return Err(Error::InvalidSchedule(format!(
                    "sets must be nested: Z_{} is not contained in Z_{}",
                    a.index, b.index
                )));
            }
            if b.constants.stability < a.constants.stability {
                return Err(Error::InvalidSchedule(format!(
                    "stability constants must be nondecreasing: C_{} = {} > C_{} = {}",
                    a.index, a.constants.stability, b.index, b.constants.stability
                )));
            }
            if b.eta > a.eta {
                return Err(Error::InvalidSchedule(format!(
                    "approximation errors must be nonincreasing: eta_{} = {} < eta_{} = {}",
                    a.index, a.eta, b.index, b.eta
                )));
            }
        }
        Ok(())
    }

    /// Checks every neighbor pair and that the last level is the selected final one.
    pub fn validate(&self, space: &SpaceGeometry) -> Result<ScheduleValidation> {
        check_dim(space.dim(), self.levels[0].set.dim())?;
        self.check_monotonicity(space)?;
        let transitions = self
            .levels
            .windows(2)
            .map(|w| validate_transition(space, &w[0], &w[1], self.epsilon))
            .collect::<Result<Vec<_>>>()?;
        let selected_final = match select_final_level(&self.etas(), self.epsilon, self.eta_hat) {
            Ok(n) => Some(n),
            Err(Error::NoSuchLevel) => None,
            Err(e) => return Err(e),
        };
        let final_level_ok = selected_final == Some(self.levels.len() - 1);
        Ok(ScheduleValidation { transitions, selected_final, final_level_ok })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelOutcome {
    pub n: usize,
    /// `K_n`
    pub stopped_at: usize,
    pub final_residual: f64,
    pub rho: f64,
    /// `Δ_p(x_{n,0}, z_n†)` when the reference is known.
    pub start_bregman: Option<f64>,
    pub start_in_radius: Option<bool>,
    pub report: RunReport,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MultiLevelReport {
    pub levels: Vec<LevelOutcome>,
    pub final_x: Primal,
    pub final_residual: f64,
    pub stop_reason: StopReason,
    pub eta_hat: f64,
}

impl MultiLevelReport {
    pub fn succeeded(&self) -> bool {
        self.stop_reason == StopReason::DiscrepancyMet && self.final_residual <= self.eta_hat
    }
}

fn level_problem<'a>(
    space: &'a SpaceGeometry,
    data_space: DataSpace,
    level: &'a Level,
    data: &'a NoisyData,
) -> Result<Problem<'a>> {
    let model = level
        .model
        .as_deref()
        .ok_or_else(|| Error::InvalidSchedule(format!("level {} has no forward model", level.index)))?;
    Ok(Problem { space, data_space, set: &level.set, model, constants: level.constants, data })
}

/// Runs every level of a validated schedule in turn.
///
/// A level that stops for any reason other than the discrepancy criterion
/// ends the run; the partial report is returned.
pub fn run_multilevel(
    space: &SpaceGeometry,
    data_space: DataSpace,
    schedule: &Schedule,
    y_delta: &Data,
    x00: &Primal,
    max_iterations: usize,
) -> Result<MultiLevelReport> {
    let validation = schedule.validate(space)?;
    if !validation.ok() {
        let bad: Vec<String> = validation
            .transitions
            .iter()
            .filter(|t| !t.ok)
            .map(|t| format!("levels {}->{}: {} >= {}", t.n, t.n + 1, t.lhs, t.rhs))
            .collect();
        let msg = if bad.is_empty() {
            format!("last level is not the first with (3+eps)eta_N <= eta_hat (selected {:?})", validation.selected_final)
        } else {
            bad.join("; ")
        };
        return Err(Error::TransitionInvalid(msg));
    }
    check_dim(space.dim(), x00.len())?;

    let mut x = x00.clone();
    let mut outcomes = Vec::with_capacity(schedule.levels.len());
    let mut stop_reason = StopReason::DiscrepancyMet;
    let mut final_residual = f64::NAN;
    for level in &schedule.levels {
        let data = NoisyData::new(y_delta.clone(), level.eta, level.eta_certified)?;
        let problem = level_problem(space, data_space, level, &data)?;
        let eta_hat = (3.0 + schedule.epsilon) * level.eta;
        let mut cfg = SolverConfig::new(level.eta, eta_hat)?.with_max_iterations(max_iterations);
        if let Some(z) = &level.reference {
            cfg = cfg.with_reference(z.clone());
        }
        let rho = level.rho(space)?;
        let report = run_projected_descent(&problem, &x, &cfg)?;
        let start_bregman = report.iterations.first().and_then(|s| s.bregman_to_ref);
        let outcome = LevelOutcome {
            n: level.index,
            stopped_at: report.stopped_at,
            final_residual: report.final_residual,
            rho,
            start_bregman,
            start_in_radius: start_bregman.map(|d| d < rho),
            report,
        };
        x = outcome.report.final_x.clone();
        final_residual = outcome.final_residual;
        stop_reason = outcome.report.stop_reason;
        outcomes.push(outcome);
        if stop_reason != StopReason::DiscrepancyMet {
            break;
        }
    }
    Ok(MultiLevelReport { levels: outcomes, final_x: x, final_residual, stop_reason, eta_hat: schedule.eta_hat })
}

/// A single run on the last level of `schedule` with threshold `η̂`, for
/// comparison with the multi-level run from the same start.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectRun {
    pub report: RunReport,
    pub rho: f64,
    pub start_in_radius: Option<bool>,
}

pub fn run_direct(
    space: &SpaceGeometry,
    data_space: DataSpace,
    schedule: &Schedule,
    y_delta: &Data,
    x00: &Primal,
    max_iterations: usize,
) -> Result<DirectRun> {
    let level = schedule.levels.last().expect("schedules are nonempty");
    let data = NoisyData::new(y_delta.clone(), level.eta, level.eta_certified)?;
    let problem = level_problem(space, data_space, level, &data)?;
    let mut cfg = SolverConfig::new(level.eta, schedule.eta_hat)?.with_max_iterations(max_iterations);
    if let Some(z) = &level.reference {
        cfg = cfg.with_reference(z.clone());
    }
    let rho = level.rho(space)?;
    let report = run_projected_descent(&problem, x00, &cfg)?;
    let start_in_radius = report.iterations.first().and_then(|s| s.bregman_to_ref).map(|d| d < rho);
    Ok(DirectRun { report, rho, start_in_radius })
}

/// Parameters of the closed-form example schedule
/// `η_n = λe^(−n)/(n+2)`, `C_n = 2e^n`, `L̂_n = (n+1)e^(−n)`, `L_n = τe^(−n)`, `ε = 1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExampleParams {
    pub lambda: f64,
    pub tau: f64,
    pub eta_hat: f64,
    /// Levels `0..=max_levels` are considered when looking for the final one.
    pub max_levels: usize,
    /// Skips the `λ ≥ 100η̂` requirement.
    pub allow_small_lambda: bool,
}

/// Upper bound `(C_p/p)^(3/p) / (16λ(4e+1))` on `τ`.
pub fn tau_bound(space: &SpaceGeometry, lambda: f64) -> f64 {
    let p = space.p();
    (space.cp() / p).powf(3.0 / p) / (16.0 * lambda * (4.0 * E + 1.0))
}

pub const EXAMPLE_EPSILON: f64 = 1.0;
pub const MIN_LAMBDA_RATIO: f64 = 100.0;

pub fn example_schedule(lambda: f64, tau: f64, space: &SpaceGeometry, eta_hat: f64, max_levels: usize) -> Result<Schedule> {
    example_schedule_with(space, &ExampleParams { lambda, tau, eta_hat, max_levels, allow_small_lambda: false })
}

pub fn example_schedule_with(space: &SpaceGeometry, params: &ExampleParams) -> Result<Schedule> {
    let &ExampleParams { lambda, tau, eta_hat, max_levels, allow_small_lambda } = params;
    if !(eta_hat.is_finite() && eta_hat > 0.0) {
        return Err(Error::InvalidSchedule(format!("eta_hat = {eta_hat} must be positive")));
    }
    if !(lambda.is_finite() && lambda > 0.0) || (!allow_small_lambda && lambda < MIN_LAMBDA_RATIO * eta_hat) {
        return Err(Error::LambdaTooSmall { lambda, min: MIN_LAMBDA_RATIO * eta_hat });
    }
    let bound = tau_bound(space, lambda);
    if !(tau > 0.0 && tau < bound) {
        return Err(Error::TauOutOfRange { tau, bound });
    }
    let eta = |n: usize| lambda * (-(n as f64)).exp() / (n as f64 + 2.0);
    let etas: Vec<f64> = (0..=max_levels).map(eta).collect();
    let last = select_final_level(&etas, EXAMPLE_EPSILON, eta_hat)?;
    let levels = (0..=last)
        .map(|n| {
            let e = (n as f64).exp();
            let constants = ModelConstants::new((n as f64 + 1.0) / e, tau / e, 2.0 * e)?;
            Level::new(n, ConvexSet::whole(space.dim())?, etas[n], constants)
        })
        .collect::<Result<Vec<_>>>()?;
    Schedule::new(levels, EXAMPLE_EPSILON, eta_hat)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{best_approximation, LinearModel};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn final_level_examples() {
        let eh = 1e-3;
        let etas: Vec<f64> = (0..6).map(|n| eh * 0.5f64.powi(n)).collect();
        assert_eq!(select_final_level(&etas, 1.0, eh), Ok(2));
        assert_eq!(select_final_level(&[0.1, 0.01], 1.0, 1.0), Ok(0));
        assert_eq!(select_final_level(&[1.0; 5], 1.0, 1.0), Err(Error::NoSuchLevel));
        assert!(select_final_level(&[0.1, 0.2], 1.0, 1.0).is_err());
    }

    #[test]
    fn transition_matches_radius_route() {
        let space = SpaceGeometry::lp(4, 3.0).unwrap();
        let c = ModelConstants::new(1.5, 0.4, 1.2).unwrap();
        let a = Level::new(0, ConvexSet::whole(4).unwrap(), 0.05, c).unwrap();
        let b = Level::new(1, ConvexSet::whole(4).unwrap(), 0.05, c).unwrap();
        let t = validate_transition(&space, &a, &b, 0.1).unwrap();
        assert_relative_eq!(t.lhs, 3.1 * 0.05, max_relative = 1e-15);
        // ρ^(1/p) = (Cp/p)^(1/p) L̂^(−1) (bracket), so rhs + η = ρ^(1/p) / C
        let rho = b.rho(&space).unwrap();
        assert_relative_eq!(t.rhs + 0.05, rho.powf(1.0 / 3.0) / 1.2, max_relative = 1e-12);
    }

    #[test]
    fn transition_eta_too_large() {
        let space = SpaceGeometry::hilbert(1);
        let c = ModelConstants::new(1.0, 1.0, 1.0).unwrap();
        let a = Level::new(0, ConvexSet::whole(1).unwrap(), 0.2, c).unwrap();
        let b = Level::new(1, ConvexSet::whole(1).unwrap(), 0.2, c).unwrap();
        assert!(matches!(validate_transition(&space, &a, &b, 1.0), Err(Error::EtaTooLarge(_))));
    }

    #[test]
    fn example_schedule_closed_forms() {
        let space = SpaceGeometry::hilbert(3);
        let eh = 1e-3;
        let lambda = 100.0 * eh;
        let tau = 0.5 * tau_bound(&space, lambda);
        let s = example_schedule(lambda, tau, &space, eh, 100).unwrap();
        assert_eq!(s.levels[0].eta, lambda / 2.0);
        let c = 0.5f64;
        for l in &s.levels {
            let n = l.index as f64;
            assert_relative_eq!(l.ctilde(&space), 2.0 * tau / c * n.exp(), max_relative = 1e-12);
            let rho = l.rho(&space).unwrap();
            assert!(c.powi(3) * (8.0 * tau).powi(-2) * (n + 1.0).powi(-2) < rho);
            assert!(rho < c.powi(3) * (2.0 * tau).powi(-2) * (n + 1.0).powi(-2));
        }
        let v = s.validate(&space).unwrap();
        assert!(v.ok(), "{v:?}");
        let last = s.levels.last().unwrap();
        assert!(4.0 * last.eta <= eh);
        assert!(s.levels[..s.levels.len() - 1].iter().all(|l| 4.0 * l.eta > eh));
    }

    #[test]
    fn example_schedule_rejections() {
        let space = SpaceGeometry::hilbert(2);
        let bound = tau_bound(&space, 0.1);
        assert!(matches!(example_schedule(0.1, bound, &space, 1e-3, 50), Err(Error::TauOutOfRange { .. })));
        assert!(matches!(example_schedule(0.05, 1e-6, &space, 1e-3, 50), Err(Error::LambdaTooSmall { .. })));
        assert_eq!(example_schedule(0.1, 0.5 * bound, &space, 1e-3, 1).unwrap_err(), Error::NoSuchLevel);
        let p = ExampleParams { lambda: 0.05, tau: 0.5 * tau_bound(&space, 0.05), eta_hat: 1e-3, max_levels: 50, allow_small_lambda: true };
        assert!(example_schedule_with(&space, &p).is_ok());
    }

    #[test]
    fn non_nested_sets_rejected() {
        let space = SpaceGeometry::hilbert(3);
        let c = ModelConstants::new(1.0, 0.0, 1.0).unwrap();
        let a = Level::new(0, ConvexSet::subspace(3, vec![0, 1]).unwrap(), 0.1, c).unwrap();
        let b = Level::new(1, ConvexSet::subspace(3, vec![1, 2]).unwrap(), 0.01, c).unwrap();
        let s = Schedule::new(vec![a, b], 1.0, 0.05).unwrap();
        assert!(matches!(s.check_monotonicity(&space), Err(Error::InvalidSchedule(m)) if m.contains("nested")));
    }

    fn decay_model() -> (LinearModel, Data) {
        let sigma: Vec<f64> = (1..=4).map(|i| (-(i as f64)).exp()).collect();
        let model = LinearModel::diagonal(&sigma, 5).unwrap();
        let mut y = model.eval(&Primal::new(vec![1.0; 4]).unwrap()).unwrap().into_vec();
        y[4] = 1e-4;
        (model, Data::new(y).unwrap())
    }

    fn decay_schedule(space: &SpaceGeometry, eta_hat: f64) -> (Schedule, Data) {
        let (model, y) = decay_model();
        let model = Arc::new(model);
        let levels = [2usize, 4]
            .iter()
            .enumerate()
            .map(|(n, &m)| {
                let set = ConvexSet::subspace(4, (0..m).collect()).unwrap();
                let (z, eta) = best_approximation(&model, &set, &DataSpace::default(), &y).unwrap();
                let support: Vec<usize> = (0..m).collect();
                let c = ModelConstants::new(model.lhat(space, &DataSpace::default()), 1e-9, model.hilbert_stability(&support).unwrap()).unwrap();
                Level::new(n, set, eta, c).unwrap().with_model(model.clone()).with_reference(z).certified(true)
            })
            .collect();
        (Schedule::new(levels, 1.0, eta_hat).unwrap(), y)
    }

    #[test]
    fn two_level_decay_run() {
        let space = SpaceGeometry::hilbert(4);
        let (s, y) = decay_schedule(&space, 4.01e-4);
        let report = run_multilevel(&space, DataSpace::default(), &s, &y, &Primal::zeros(4), 1_000_000).unwrap();
        assert!(report.succeeded(), "{:?}", report.stop_reason);
        assert_eq!(report.levels.len(), 2);
        assert!(report.levels.iter().all(|l| l.start_in_radius == Some(true)));
        assert!(report.final_residual <= 4.01e-4);
    }

    #[test]
    fn single_level_matches_direct_run() {
        let space = SpaceGeometry::hilbert(4);
        let (mut s, y) = decay_schedule(&space, 4.01e-4);
        s.levels.remove(0);
        s.levels[0].index = 0;
        s.eta_hat = 4.0 * s.levels[0].eta;
        let ml = run_multilevel(&space, DataSpace::default(), &s, &y, &Primal::zeros(4), 1_000_000).unwrap();
        let direct = run_direct(&space, DataSpace::default(), &s, &y, &Primal::zeros(4), 1_000_000).unwrap();
        assert_eq!(ml.levels[0].report, direct.report);
    }

    #[test]
    fn invalid_schedule_refuses_to_run() {
        let space = SpaceGeometry::hilbert(4);
        // η̂ below 4η_N: the last level is not a valid final level
        let (s, y) = decay_schedule(&space, 1e-4);
        let err = run_multilevel(&space, DataSpace::default(), &s, &y, &Primal::zeros(4), 10).unwrap_err();
        assert!(matches!(err, Error::TransitionInvalid(_)));
    }

    proptest! {
        #[test]
        fn example_schedules_validate(
            eh_exp in -5.0..-1.0f64,
            lam_ratio in 100.0..1e4f64,
            tau_frac in 0.01..0.99f64,
            ri in 0usize..4,
        ) {
            let space = SpaceGeometry::lp(2, [2.0, 1.5, 3.0, 4.0][ri]).unwrap();
            let eh = 10f64.powf(eh_exp);
            let lambda = lam_ratio * eh;
            let tau = tau_frac * tau_bound(&space, lambda);
            let s = example_schedule(lambda, tau, &space, eh, 200).unwrap();
            prop_assert!(s.check_monotonicity(&space).is_ok());
            let v = s.validate(&space).unwrap();
            prop_assert!(v.ok());
            let (p, c) = (space.p(), space.cp() / space.p());
            for l in &s.levels {
                let n1 = l.index as f64 + 1.0;
                let rho = l.rho(&space).unwrap();
                prop_assert!(c.powi(3) * (8.0 * tau).powf(-p) * n1.powf(-p) < rho);
                prop_assert!(rho < c.powi(3) * (2.0 * tau).powf(-p) * n1.powf(-p));
            }
        }
    }
}
