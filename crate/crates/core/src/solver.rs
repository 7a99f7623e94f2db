//! Projected steepest descent with a posterior step size and discrepancy stopping.
//!
//! Each iteration computes the residual `R_k = F(x_k) − y^δ`, the dual
//! gradient `T_k = DF(x_k)* j_p(R_k)` and then
//!
//! ```text
//! x̃_{k+1} = J_q^*(J_p(x_k) − μ_k T_k),    x_{k+1} = P_Z(x̃_{k+1})
//! ```
//!
//! with a step `μ_k` built from `r_k = ‖R_k‖`, `t_k = ‖T_k‖_*` and the
//! constants of the problem. The run stops at the first `k` with `r_k ≤ η̂`.

use crate::error::{check_dim, Error, Result};
use crate::geometry::{Data, DataSpace, Dual, Primal, SpaceGeometry};
use crate::models::{ForwardModel, ModelConstants, NoisyData};
use crate::sets::ConvexSet;

/// Absolute tolerance of every recorded inequality check.
pub const CHECK_TOL: f64 = 1e-10;
const SELF_CHECK_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    /// Bound `η` on `dist(y^δ, F(Z))`.
    pub eta: f64,
    /// Discrepancy threshold `η̂ > 3η`.
    pub eta_hat: f64,
    pub max_iterations: usize,
    /// `z†`, when known, enables the per-iteration convergence diagnostics.
    pub reference: Option<Primal>,
}

impl SolverConfig {
    pub const DEFAULT_MAX_ITERATIONS: usize = 1_000_000;

    pub fn new(eta: f64, eta_hat: f64) -> Result<Self> {
        let cfg = Self { eta, eta_hat, max_iterations: Self::DEFAULT_MAX_ITERATIONS, reference: None };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_max_iterations(mut self, n: usize) -> Self {
        self.max_iterations = n;
        self
    }

    pub fn with_reference(mut self, z: Primal) -> Self {
        self.reference = Some(z);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta.is_finite() && self.eta >= 0.0) {
            return Err(Error::InvalidConfig(format!("eta = {} must be nonnegative", self.eta)));
        }
        if !(self.eta_hat.is_finite() && self.eta_hat > 0.0 && self.eta_hat > 3.0 * self.eta) {
            return Err(Error::InvalidConfig(format!(
                "eta_hat = {} must be positive and exceed 3*eta = {}",
                self.eta_hat,
                3.0 * self.eta
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidConfig("max_iterations must be at least 1".into()));
        }
        Ok(())
    }
}

/// `C̃ = ½ (C_p/p)^(−2/p) L C²`.
pub fn compute_ctilde(space: &SpaceGeometry, lip: f64, stability: f64) -> f64 {
    let p = space.p();
    0.5 * (space.cp() / p).powf(-2.0 / p) * lip * stability * stability
}

/// `ρ = (C_p/p)(2C̃L̂)^(−p)(1 + √(1 − 8C̃η) − 4ηC̃)^p`, cross-checked against the
/// equivalent form `(C_p/p) L̂^(−p) ((1 + √(1 − 8C̃η))/(2C̃) − 2η)^p`.
pub fn convergence_radius(space: &SpaceGeometry, lhat: f64, ctilde: f64, eta: f64) -> Result<f64> {
    let (p, cp) = (space.p(), space.cp());
    if ctilde == 0.0 {
        return Err(Error::LinearCaseUnbounded);
    }
    let s = discriminant(ctilde, eta)?;
    let rho = cp / p * (2.0 * ctilde * lhat).powf(-p) * (1.0 + s - 4.0 * eta * ctilde).powf(p);
    let level = cp / p * lhat.powf(-p) * ((1.0 + s) / (2.0 * ctilde) - 2.0 * eta).powf(p);
    if (rho - level).abs() > 1e-12 * rho.abs().max(level.abs()) {
        return Err(Error::SelfCheck(format!("radius forms disagree: {rho} vs {level}")));
    }
    Ok(rho)
}

/// `√(1 − 8C̃η)`, or `EtaTooLarge` when the radicand is not positive.
fn discriminant(ctilde: f64, eta: f64) -> Result<f64> {
    let x = 8.0 * ctilde * eta;
    if x >= 1.0 {
        return Err(Error::EtaTooLarge(x));
    }
    Ok((1.0 - x).sqrt())
}

/// Upper bound `(1 + √(1 − 8C̃η))/(2C̃) − η` for residuals while iterating;
/// infinite when `C̃ = 0`.
pub fn residual_ceiling(ctilde: f64, eta: f64) -> Result<f64> {
    if ctilde == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((1.0 + discriminant(ctilde, eta)?) / (2.0 * ctilde) - eta)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepQuantities {
    pub t_hat: f64,
    pub u: f64,
    pub v: f64,
    pub w: f64,
    pub mu: f64,
}

/// Step-size quantities for residual `r` and gradient norm `t`.
pub fn step_quantities(space: &SpaceGeometry, lip: f64, ctilde: f64, r: f64, t: f64, eta: f64) -> Result<StepQuantities> {
    let (p, q) = (space.p(), space.q());
    if t == 0.0 {
        return Err(Error::ZeroGradient { residual: r });
    }
    let t_hat = space.gq() * t.powf(q);
    let u = if ctilde == 0.0 {
        r - eta
    } else {
        // factored at the two roots of −C̃r² + (1 − 2C̃η)r − η − C̃η²
        let s = discriminant(ctilde, eta)?;
        let a = 4.0 * eta / (1.0 + s) - eta;
        let b = (1.0 + s) / (2.0 * ctilde) - eta;
        -ctilde * (r - a) * (r - b)
    };
    // negated so that NaN is rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    if !(u > 0.0) {
        return Err(Error::NonpositiveU(u));
    }
    // 1/(q − 1) = p − 1
    let e = p - 1.0;
    let pre = t_hat.powf(-e) * r.powf(p * p - p);
    let big_p = pre * u.powf(e);
    let drop = pre * u.powf(p);
    let v = big_p * (r - eta) - drop / q;
    let w = 0.5 * lip * (space.cp() / p).powf(-2.0 / p) * big_p;
    let mu = t_hat.powf(-e) * u.powf(e) * r.powf(e * e);

    let close = |a: f64, b: f64| (a - b).abs() <= SELF_CHECK_TOL * a.abs().max(b.abs()).max(f64::MIN_POSITIVE);
    if !close(mu * r.powf(e), big_p) {
        return Err(Error::SelfCheck(format!("mu r^(p-1) = {} but expected {big_p}", mu * r.powf(e))));
    }
    let lhs = space.gq() / q * mu.powf(q) * t.powf(q);
    if !close(lhs, drop / q) {
        return Err(Error::SelfCheck(format!("(Gq/q) mu^q t^q = {lhs} but expected {}", drop / q)));
    }
    Ok(StepQuantities { t_hat, u, v, w, mu })
}

/// `(1/p) t̂^(−1/(q−1)) u^p r^(p²−p)`, the guaranteed decrease of one step.
pub fn guaranteed_decrease(space: &SpaceGeometry, step: &StepQuantities, r: f64) -> f64 {
    let p = space.p();
    step.t_hat.powf(1.0 - p) * step.u.powf(p) * r.powf(p * p - p) / p
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    /// `x̃_{k+1}` before projection.
    pub x_tilde: Primal,
    pub x_next: Primal,
}

/// One descent step `x_{k+1} = P_Z(J_q^*(J_p(x_k) − μ T_k))`.
pub fn sd_step(space: &SpaceGeometry, set: &ConvexSet, x: &Primal, gradient: &Dual, mu: f64) -> Result<StepResult> {
    check_dim(space.dim(), x.len())?;
    check_dim(space.dim(), gradient.len())?;
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::InvalidConfig(format!("step size {mu} must be positive")));
    }
    let xi: Vec<f64> = space.duality_of(x).iter().zip(gradient.iter()).map(|(a, g)| a - mu * g).collect();
    let x_tilde = space.inverse_duality_of(&xi);
    let x_next = set.project_with_dual(space, &x_tilde, &xi)?;
    Ok(StepResult { x_tilde: Primal::new(x_tilde)?, x_next: Primal::new(x_next)? })
}

/// `Δ_p(x_0, z†) < ρ`, with the duality map evaluated at `x_0`.
pub fn check_starting_point(space: &SpaceGeometry, x0: &Primal, zdag: &Primal, rho: f64) -> Result<bool> {
    Ok(space.bregman_distance(x0, zdag)? < rho)
}

/// Everything a single-level run needs.
#[derive(Clone, Copy, Debug)]
pub struct Problem<'a> {
    pub space: &'a SpaceGeometry,
    pub data_space: DataSpace,
    pub set: &'a ConvexSet,
    pub model: &'a dyn ForwardModel,
    pub constants: ModelConstants,
    pub data: &'a NoisyData,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IterationState {
    pub k: usize,
    pub x: Primal,
    pub r: f64,
    pub t: f64,
    /// `None` on the stopping iterate, where no step is taken.
    pub step: Option<StepQuantities>,
    pub ctilde: f64,
    pub bregman_to_ref: Option<f64>,
    pub radius_ok: Option<bool>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    DiscrepancyMet,
    MaxIterations,
    StepDegenerate,
}

impl StopReason {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::DiscrepancyMet => "DiscrepancyMet",
            Self::MaxIterations => "MaxIterations",
            Self::StepDegenerate => "StepDegenerate",
        }
    }
}

/// Tallies of the per-iteration convergence checks, all at [`CHECK_TOL`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TheoremChecks {
    pub steps_checked: usize,
    /// `Δ_{k+1} ≤ Δ_k + w_k Δ_k^(2/p) − v_k` failed.
    pub bound_violations: usize,
    /// `w_k Δ_k^(2/p) − v_k ≤ −(guaranteed decrease) < 0` failed.
    pub strict_bound_violations: usize,
    /// `Δ_{k+1} < Δ_k` failed.
    pub descent_violations: usize,
    /// `Δ_k < ρ` failed.
    pub radius_violations: usize,
    /// `r_k < (1 + √(1 − 8C̃η))/(2C̃) − η` failed.
    pub ceiling_violations: usize,
    /// Sum of the guaranteed decreases.
    pub summability_sum: f64,
    /// `Δ_p(x_0, z†)`, the bound for the sum; `None` without a reference.
    pub summability_limit: Option<f64>,
}

impl TheoremChecks {
    pub fn summability_ok(&self) -> Option<bool> {
        self.summability_limit.map(|lim| self.summability_sum <= lim + 1e-8)
    }

    pub fn total_violations(&self) -> usize {
        self.bound_violations
            + self.strict_bound_violations
            + self.descent_violations
            + self.radius_violations
            + self.ceiling_violations
            + usize::from(self.summability_ok() == Some(false))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    /// `K`: index of the last iterate.
    pub stopped_at: usize,
    pub final_residual: f64,
    pub final_x: Primal,
    pub iterations: Vec<IterationState>,
    /// Failures of the Bregman monotonicity bound, the strict bound or strict descent.
    pub monotonicity_violations: usize,
    pub stop_reason: StopReason,
    /// The error behind `StepDegenerate`.
    pub failure: Option<Error>,
    /// Whether `x_0` had to be projected into `Z`.
    pub projected_start: bool,
    pub ctilde: f64,
    /// `+∞` when `C̃ = 0`.
    pub rho: f64,
    pub checks: TheoremChecks,
}

impl RunReport {
    pub fn succeeded(&self) -> bool {
        self.stop_reason == StopReason::DiscrepancyMet
    }
}

struct Evaluation {
    r: f64,
    t: f64,
    gradient: Dual,
}

fn evaluate(problem: &Problem<'_>, x: &Primal) -> Result<Evaluation> {
    let fx = problem.model.eval(x)?;
    let res: Vec<f64> = fx.iter().zip(problem.data.y_delta.iter()).map(|(a, b)| a - b).collect();
    let r = problem.data_space.norm(&res);
    let j: Data = problem.data_space.duality_map(&res, problem.space.p());
    let gradient = problem.model.apply_adjoint(x, &j)?;
    let t = problem.space.dual_norm_of(&gradient);
    Ok(Evaluation { r, t, gradient })
}

/// Runs the iteration from `x0` until the discrepancy principle holds, the
/// iteration cap is reached or a step cannot be formed.
///
/// Configuration and dimension errors are returned as `Err`; failures inside
/// the iteration end the run with [`StopReason::StepDegenerate`] and are kept
/// in [`RunReport::failure`].
pub fn run_projected_descent(problem: &Problem<'_>, x0: &Primal, config: &SolverConfig) -> Result<RunReport> {
    config.validate()?;
    let space = problem.space;
    let dim = space.dim();
    check_dim(dim, x0.len())?;
    check_dim(dim, problem.set.dim())?;
    check_dim(dim, problem.model.input_dim())?;
    check_dim(problem.model.output_dim(), problem.data.y_delta.len())?;
    if let Some(z) = &config.reference {
        check_dim(dim, z.len())?;
    }

    let c = problem.constants;
    let ctilde = compute_ctilde(space, c.lip, c.stability);
    let rho = match convergence_radius(space, c.lhat, ctilde, config.eta) {
        Ok(rho) => rho,
        Err(Error::LinearCaseUnbounded) => f64::INFINITY,
        Err(e) => return Err(e),
    };
    let ceiling = residual_ceiling(ctilde, config.eta)?;
    let p = space.p();

    let projected_start = !problem.set.contains(space, x0, 0.0)?;
    let mut x = if projected_start { problem.set.bregman_project(space, x0)? } else { x0.clone() };

    let bregman = |x: &Primal| config.reference.as_ref().map(|z| space.bregman_of(x, z));
    let mut checks = TheoremChecks { summability_limit: bregman(&x), ..Default::default() };
    let mut iterations = Vec::new();
    let mut failure = None;

    let mut k = 0;
    let (stop_reason, final_residual) = loop {
        let eval = match evaluate(problem, &x) {
            Ok(e) => e,
            Err(e) => {
                failure = Some(e);
                break (StopReason::StepDegenerate, f64::NAN);
            }
        };
        let delta = bregman(&x);
        let radius_ok = delta.map(|d| d < rho);
        if radius_ok == Some(false) {
            checks.radius_violations += 1;
        }
        let mut state = IterationState {
            k,
            x: x.clone(),
            r: eval.r,
            t: eval.t,
            step: None,
            ctilde,
            bregman_to_ref: delta,
            radius_ok,
        };

        if eval.r <= config.eta_hat {
            iterations.push(state);
            break (StopReason::DiscrepancyMet, eval.r);
        }
        if k >= config.max_iterations {
            iterations.push(state);
            break (StopReason::MaxIterations, eval.r);
        }
        if eval.r >= ceiling {
            checks.ceiling_violations += 1;
        }

        let step = match step_quantities(space, c.lip, ctilde, eval.r, eval.t, config.eta) {
            Ok(s) => s,
            Err(e) => {
                iterations.push(state);
                failure = Some(e);
                break (StopReason::StepDegenerate, eval.r);
            }
        };
        state.step = Some(step);
        iterations.push(state);

        let next = match sd_step(space, problem.set, &x, &eval.gradient, step.mu) {
            Ok(s) => s.x_next,
            Err(e) => {
                failure = Some(e);
                break (StopReason::StepDegenerate, eval.r);
            }
        };

        let decrease = guaranteed_decrease(space, &step, eval.r);
        checks.summability_sum += decrease;
        #[allow(clippy::neg_cmp_op_on_partial_ord)]
        if let Some(d) = delta {
            let d_next = bregman(&next).expect("reference is set");
            let drift = step.w * d.powf(2.0 / p) - step.v;
            checks.steps_checked += 1;
            if d_next > d + drift + CHECK_TOL {
                checks.bound_violations += 1;
            }
            if drift > -decrease + CHECK_TOL || !(-decrease < 0.0) {
                checks.strict_bound_violations += 1;
            }
            if !(d_next < d + CHECK_TOL) {
                checks.descent_violations += 1;
            }
        }

        x = next;
        k += 1;
    };

    let monotonicity_violations =
        checks.bound_violations + checks.strict_bound_violations + checks.descent_violations;
    Ok(RunReport {
        stopped_at: k,
        final_residual,
        final_x: x,
        iterations,
        monotonicity_violations,
        stop_reason,
        failure,
        projected_start,
        ctilde,
        rho,
        checks,
    })
}
