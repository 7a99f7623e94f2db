//! Forward operators `F : X → Y` and their certification helpers.

use std::fmt::Debug;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{dot, Data, DataSpace, Dual, Primal, SpaceGeometry};
use crate::sets::ConvexSet;

/// A differentiable forward operator. Dual data vectors are paired with data
/// vectors through the dot product, so the adjoint is the transpose action.
pub trait ForwardModel: Debug + Send + Sync {
    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn eval(&self, x: &Primal) -> Result<Data>;
    /// `DF(x) h`
    fn apply_derivative(&self, x: &Primal, h: &Primal) -> Result<Data>;
    /// `DF(x)* y*`
    fn apply_adjoint(&self, x: &Primal, ystar: &Data) -> Result<Dual>;
}

/// The constants a convergence guarantee needs from a model on its domain.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelConstants {
    /// Bound `L̂` on `‖DF(x)‖`.
    pub lhat: f64,
    /// Lipschitz constant `L` of `DF`.
    pub lip: f64,
    /// Stability constant `C` with `Δ_p(x, x̃) ≤ C^p ‖F(x) − F(x̃)‖^p` on the set.
    pub stability: f64,
}

impl ModelConstants {
    pub fn new(lhat: f64, lip: f64, stability: f64) -> Result<Self> {
        if !(lhat.is_finite() && lhat > 0.0) {
            return Err(Error::InvalidModel(format!("Lhat = {lhat} must be positive")));
        }
        if !(lip.is_finite() && lip >= 0.0) {
            return Err(Error::InvalidModel(format!("Lip = {lip} must be nonnegative")));
        }
        if !(stability.is_finite() && stability > 0.0) {
            return Err(Error::InvalidModel(format!("Cstab = {stability} must be positive")));
        }
        Ok(Self { lhat, lip, stability })
    }
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if m == 0 || n == 0 {
        return Err(Error::InvalidModel("matrix must be nonempty".into()));
    }
    if let Some(bad) = rows.iter().position(|r| r.len() != n) {
        return Err(Error::InvalidModel(format!("row {bad} has {} entries, expected {n}", rows[bad].len())));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidModel("matrix entries must be finite".into()));
    }
    Ok(DMatrix::from_fn(m, n, |i, j| rows[i][j]))
}

fn diagonal_matrix(sigma: &[f64], rows: usize) -> Result<DMatrix<f64>> {
    if sigma.is_empty() || rows < sigma.len() {
        return Err(Error::InvalidModel(format!(
            "diagonal of length {} needs at least as many rows (got {rows})",
            sigma.len()
        )));
    }
    if sigma.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidModel("diagonal entries must be finite".into()));
    }
    let mut a = DMatrix::zeros(rows, sigma.len());
    for (i, s) in sigma.iter().enumerate() {
        a[(i, i)] = *s;
    }
    Ok(a)
}

fn mat_vec(a: &DMatrix<f64>, x: &[f64]) -> Vec<f64> {
    (a * DVector::from_column_slice(x)).as_slice().to_vec()
}

fn mat_t_vec(a: &DMatrix<f64>, y: &[f64]) -> Vec<f64> {
    (a.tr_mul(&DVector::from_column_slice(y))).as_slice().to_vec()
}

fn smallest_singular_value(a: &DMatrix<f64>) -> f64 {
    let sv = a.singular_values();
    if a.nrows() < a.ncols() {
        return 0.0;
    }
    sv.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Upper bound on `‖A‖` from weighted `ℓ^r` into `ℓ^s`. Exact (the spectral
/// norm of `A W^(−1/2)`) when `r = s = 2`; otherwise the Hölder bound
/// `‖(‖a_j‖_s w_j^(−1/r))_j‖_{r'}` over the columns `a_j`.
fn operator_norm_bound(a: &DMatrix<f64>, space: &SpaceGeometry, data: &DataSpace) -> f64 {
    let w = space.weights();
    if space.r() == 2.0 && data.s() == 2.0 {
        let scaled = DMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] / w[j].sqrt());
        return scaled.singular_values().iter().copied().fold(0.0, f64::max);
    }
    let cols: Vec<f64> = (0..a.ncols())
        .map(|j| data.norm(a.column(j).as_slice()) * w[j].powf(-1.0 / space.r()))
        .collect();
    crate::geometry::weighted_norm(&cols, space.r_dual(), &vec![1.0; cols.len()])
}

/// `F(x) = A x`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    a: DMatrix<f64>,
}

impl LinearModel {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.is_empty() || a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("matrix must be nonempty and finite".into()));
        }
        Ok(Self { a })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        matrix_from_rows(rows).map(|a| Self { a })
    }

    /// `rows × sigma.len()` matrix with `sigma` on the diagonal.
    pub fn diagonal(sigma: &[f64], rows: usize) -> Result<Self> {
        diagonal_matrix(sigma, rows).map(|a| Self { a })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// `L̂ = ‖A‖` (an upper bound outside the `r = s = 2` case).
    pub fn lhat(&self, space: &SpaceGeometry, data: &DataSpace) -> f64 {
        operator_norm_bound(&self.a, space, data)
    }

    /// Stability constant on the coordinate subspace `support` for the
    /// Euclidean geometry: `2^(−1/2) / σ_min(A[:, support])`.
    pub fn hilbert_stability(&self, support: &[usize]) -> Result<f64> {
        if support.iter().any(|&j| j >= self.a.ncols()) || support.is_empty() {
            return Err(Error::InvalidModel("support out of range".into()));
        }
        let sub = self.a.select_columns(support);
        let s = smallest_singular_value(&sub);
        if s <= 0.0 {
            return Err(Error::InvalidModel("matrix is rank deficient on the support".into()));
        }
        Ok(std::f64::consts::FRAC_1_SQRT_2 / s)
    }

    /// Analytic constants on `set` in the Euclidean geometry with `s = 2`.
    pub fn hilbert_constants(&self, set: &ConvexSet) -> Result<ModelConstants> {
        let support: Vec<usize> = match set {
            ConvexSet::CoordinateSubspace { support, .. } => support.clone(),
            ConvexSet::Box { lower, upper } => {
                // flat coordinates do not need to be resolved by A
                (0..lower.len()).filter(|&i| lower[i] < upper[i]).collect()
            }
            _ => (0..self.a.ncols()).collect(),
        };
        let space = SpaceGeometry::hilbert(self.a.ncols());
        ModelConstants::new(self.lhat(&space, &DataSpace::default()), 0.0, self.hilbert_stability(&support)?)
    }
}

impl ForwardModel for LinearModel {
    fn input_dim(&self) -> usize {
        self.a.ncols()
    }

    fn output_dim(&self) -> usize {
        self.a.nrows()
    }

    fn eval(&self, x: &Primal) -> Result<Data> {
        check_dim(self.input_dim(), x.len())?;
        Ok(Data::from_vec(mat_vec(&self.a, x)))
    }

    fn apply_derivative(&self, x: &Primal, h: &Primal) -> Result<Data> {
        check_dim(self.input_dim(), x.len())?;
        check_dim(self.input_dim(), h.len())?;
        Ok(Data::from_vec(mat_vec(&self.a, h)))
    }

    fn apply_adjoint(&self, x: &Primal, ystar: &Data) -> Result<Dual> {
        check_dim(self.input_dim(), x.len())?;
        check_dim(self.output_dim(), ystar.len())?;
        Ok(Dual::from_vec(mat_t_vec(&self.a, ystar)))
    }
}

/// `F_i(x) = (A x)_i + ε x_i²` for `i < min(rows, cols)`, and `(A x)_i` beyond.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadraticModel {
    a: DMatrix<f64>,
    eps: f64,
}

impl QuadraticModel {
    pub fn new(a: DMatrix<f64>, eps: f64) -> Result<Self> {
        if a.is_empty() || a.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidModel("matrix must be nonempty and finite".into()));
        }
        if !(eps.is_finite() && eps >= 0.0) {
            return Err(Error::InvalidModel(format!("nonlinearity weight {eps} must be nonnegative")));
        }
        Ok(Self { a, eps })
    }

    pub fn from_rows(rows: &[Vec<f64>], eps: f64) -> Result<Self> {
        Self::new(matrix_from_rows(rows)?, eps)
    }

    pub fn diagonal(sigma: &[f64], rows: usize, eps: f64) -> Result<Self> {
        Self::new(diagonal_matrix(sigma, rows)?, eps)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn epsilon(&self) -> f64 {
        self.eps
    }

    fn coupled(&self) -> usize {
        self.a.nrows().min(self.a.ncols())
    }

    /// Euclidean constants on a set whose points satisfy `|x_i| ≤ radius`:
    /// `L̂ = ‖A‖ + 2ε·radius`, `L = 2ε`, and, when `A` has full column rank
    /// `σ_min > 2ε·radius`, `C = 2^(−1/2) / (σ_min − 2ε·radius)`.
    pub fn hilbert_constants(&self, radius: f64) -> Result<ModelConstants> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::InvalidModel(format!("domain radius {radius} must be positive")));
        }
        let space = SpaceGeometry::hilbert(self.a.ncols());
        let lhat = operator_norm_bound(&self.a, &space, &DataSpace::default()) + 2.0 * self.eps * radius;
        let gap = smallest_singular_value(&self.a) - 2.0 * self.eps * radius;
        if gap <= 0.0 {
            return Err(Error::InvalidModel(format!(
                "no stability on this domain: sigma_min - 2*eps*radius = {gap} is not positive"
            )));
        }
        ModelConstants::new(lhat, 2.0 * self.eps, std::f64::consts::FRAC_1_SQRT_2 / gap)
    }
}

impl ForwardModel for QuadraticModel {
    fn input_dim(&self) -> usize {
        self.a.ncols()
    }

    fn output_dim(&self) -> usize {
        self.a.nrows()
    }

    fn eval(&self, x: &Primal) -> Result<Data> {
        check_dim(self.input_dim(), x.len())?;
        let mut y = mat_vec(&self.a, x);
        for i in 0..self.coupled() {
            y[i] += self.eps * x[i] * x[i];
        }
        Ok(Data::from_vec(y))
    }

    fn apply_derivative(&self, x: &Primal, h: &Primal) -> Result<Data> {
        check_dim(self.input_dim(), x.len())?;
        check_dim(self.input_dim(), h.len())?;
        let mut y = mat_vec(&self.a, h);
        for i in 0..self.coupled() {
            y[i] += 2.0 * self.eps * x[i] * h[i];
        }
        Ok(Data::from_vec(y))
    }

    fn apply_adjoint(&self, x: &Primal, ystar: &Data) -> Result<Dual> {
        check_dim(self.input_dim(), x.len())?;
        check_dim(self.output_dim(), ystar.len())?;
        let mut g = mat_t_vec(&self.a, ystar);
        for i in 0..self.coupled() {
            g[i] += 2.0 * self.eps * x[i] * ystar[i];
        }
        Ok(Dual::from_vec(g))
    }
}

/// Measured data `y^δ` with a bound `η ≥ dist(y^δ, F(Z))`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisyData {
    pub y_delta: Data,
    pub eta: f64,
    /// `true` when `η` was computed exactly rather than asserted by the user.
    pub certified: bool,
}

impl NoisyData {
    pub fn new(y_delta: Data, eta: f64, certified: bool) -> Result<Self> {
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::InvalidConfig(format!("eta = {eta} must be nonnegative")));
        }
        Ok(Self { y_delta, eta, certified })
    }
}

fn euclid(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

/// Relative central-difference error
/// `‖(F(x + sh) − F(x − sh)) / 2s − DF(x)h‖ / max(1, ‖DF(x)h‖)`.
pub fn fd_derivative_check(model: &dyn ForwardModel, x: &Primal, h: &Primal, step: f64) -> Result<f64> {
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::InvalidConfig(format!("step {step} must be positive")));
    }
    let shifted = |sign: f64| Primal::new(x.iter().zip(h.iter()).map(|(a, b)| a + sign * step * b).collect());
    let fp = model.eval(&shifted(1.0)?)?;
    let fm = model.eval(&shifted(-1.0)?)?;
    let dh = model.apply_derivative(x, h)?;
    let diff: Vec<f64> = fp
        .iter()
        .zip(fm.iter())
        .zip(dh.iter())
        .map(|((p, m), d)| (p - m) / (2.0 * step) - d)
        .collect();
    Ok(euclid(&diff) / euclid(&dh).max(1.0))
}

/// `|⟨DF(x)h, y*⟩ − ⟨h, DF(x)* y*⟩|`.
pub fn adjoint_check(model: &dyn ForwardModel, x: &Primal, h: &Primal, ystar: &Data) -> Result<f64> {
    let dh = model.apply_derivative(x, h)?;
    let adj = model.apply_adjoint(x, ystar)?;
    Ok((dot(&dh, ystar) - dot(h, &adj)).abs())
}

/// Sampled lower bound for the stability constant:
/// `max Δ_p(x, x̃)^(1/p) / ‖F(x) − F(x̃)‖` over pairs in `set`.
///
/// Half the pairs are independent draws; the other half perturb a draw with
/// per-coordinate scales spread over three decades, which reaches the
/// poorly resolved directions far more often. Closer pairs are avoided
/// because `Δ_p` loses relative accuracy to cancellation there. Unbounded directions are
/// sampled at `scale`. Pairs with `‖F(x) − F(x̃)‖ < 1e−14` are skipped.
#[allow(clippy::too_many_arguments)]
pub fn estimate_stability_constant(
    model: &dyn ForwardModel,
    set: &ConvexSet,
    space: &SpaceGeometry,
    data: &DataSpace,
    scale: f64,
    samples: usize,
    seed: u64,
) -> Result<f64> {
    check_dim(space.dim(), model.input_dim())?;
    check_dim(space.dim(), set.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best = f64::NEG_INFINITY;
    let mut skipped = 0;
    for k in 0..samples {
        let x = set.sample_point(space, &mut rng, scale);
        let xt = if k % 2 == 0 {
            set.sample_point(space, &mut rng, scale)
        } else {
            let moved: Vec<f64> = x
                .iter()
                .map(|v| {
                    let s = scale * 10f64.powf(rng.random_range(-3.0..0.0));
                    v + s * rng.sample::<f64, _>(StandardNormal)
                })
                .collect();
            set.bregman_project(space, &Primal::from_vec(moved))?
        };
        let fx = model.eval(&x)?;
        let fxt = model.eval(&xt)?;
        let diff: Vec<f64> = fx.iter().zip(fxt.iter()).map(|(a, b)| a - b).collect();
        let dn = data.norm(&diff);
        if dn < 1e-14 {
            skipped += 1;
            continue;
        }
        let ratio = space.bregman_of(&x, &xt).powf(1.0 / space.p()) / dn;
        best = best.max(ratio);
    }
    if skipped == samples {
        return Err(Error::DegenerateSet(skipped));
    }
    Ok(best)
}

/// Least-squares best approximation over a coordinate subspace (or the whole
/// space) for a linear model with `s = 2`: returns `z†` and
/// `η = ‖A z† − y^δ‖ = dist(y^δ, F(Z))`.
pub fn best_approximation(
    model: &LinearModel,
    set: &ConvexSet,
    data: &DataSpace,
    y_delta: &Data,
) -> Result<(Primal, f64)> {
    if data.s() != 2.0 {
        return Err(Error::InvalidModel("best approximation is closed-form only for s = 2".into()));
    }
    check_dim(model.output_dim(), y_delta.len())?;
    check_dim(model.input_dim(), set.dim())?;
    let support: Vec<usize> = match set {
        ConvexSet::WholeSpace { dim } => (0..*dim).collect(),
        ConvexSet::CoordinateSubspace { support, .. } => support.clone(),
        _ => return Err(Error::InvalidModel("best approximation needs a subspace or the whole space".into())),
    };
    let sub = model.matrix().select_columns(&support);
    let svd = sub.svd(true, true);
    let rhs = DVector::from_column_slice(y_delta);
    let zs = svd
        .solve(&rhs, 1e-13 * svd.singular_values.max())
        .map_err(|e| Error::InvalidModel(e.to_string()))?;
    let mut z = vec![0.0; model.input_dim()];
    for (&j, v) in support.iter().zip(zs.iter()) {
        z[j] = *v;
    }
    let z = Primal::new(z)?;
    let res: Vec<f64> = model.eval(&z)?.iter().zip(y_delta.iter()).map(|(a, b)| a - b).collect();
    Ok((z, euclid(&res)))
}
