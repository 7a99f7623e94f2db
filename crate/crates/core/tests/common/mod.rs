//! Problem families shared by the integration and acceptance tests.
#![allow(dead_code)]

use std::sync::Arc;

use banach_sd::geometry::{Data, DataSpace, Primal, SpaceGeometry};
use banach_sd::models::{best_approximation, ForwardModel, LinearModel, ModelConstants, QuadraticModel};
use banach_sd::multilevel::{Level, Schedule};
use banach_sd::sets::ConvexSet;

/// Quadratic model on `[−1, 1]^6` whose seventh data row is outside the
/// range, so `y^δ = F(z†) + η e_7` has `z†` as best approximation and
/// `dist(y^δ, F(Z)) = η` exactly.
pub struct QuadraticCase {
    pub space: SpaceGeometry,
    pub set: ConvexSet,
    pub model: QuadraticModel,
    pub constants: ModelConstants,
    pub zdag: Primal,
    pub y_delta: Data,
    pub eta: f64,
}

pub fn quadratic_case(eta: f64) -> QuadraticCase {
    let sigma: Vec<f64> = (0..6).map(|i| 1.0 + 0.2 * i as f64).collect();
    let model = QuadraticModel::diagonal(&sigma, 7, 0.05).unwrap();
    let set = ConvexSet::boxed(vec![-1.0; 6], vec![1.0; 6]).unwrap();
    let constants = model.hilbert_constants(1.0).unwrap();
    let zdag = Primal::new(vec![0.4, -0.3, 0.2, -0.1, 0.3, -0.2]).unwrap();
    let mut y = model.eval(&zdag).unwrap().into_vec();
    y[6] += eta;
    QuadraticCase {
        space: SpaceGeometry::hilbert(6),
        set,
        model,
        constants,
        zdag,
        y_delta: Data::new(y).unwrap(),
        eta,
    }
}

/// `σ_i = e^(−i)`, `i = 1..=d`, with one extra data row that carries the
/// noise `δ`; the unperturbed solution is all ones.
pub fn decay_model(d: usize, delta: f64) -> (Arc<LinearModel>, Data) {
    let sigma: Vec<f64> = (1..=d).map(|i| (-(i as f64)).exp()).collect();
    let model = LinearModel::diagonal(&sigma, d + 1).unwrap();
    let mut y = model.eval(&Primal::new(vec![1.0; d]).unwrap()).unwrap().into_vec();
    y[d] = delta;
    (Arc::new(model), Data::new(y).unwrap())
}

/// Nested coordinate subspaces of the given sizes with exact `η_n`, `z_n†`
/// and `C_n`, and a declared Lipschitz constant `lip` for the derivative.
pub fn decay_schedule(
    d: usize,
    sizes: &[usize],
    delta: f64,
    lip: f64,
    eta_hat: f64,
) -> (SpaceGeometry, Schedule, Data) {
    let space = SpaceGeometry::hilbert(d);
    let (model, y) = decay_model(d, delta);
    let data = DataSpace::default();
    let levels = sizes
        .iter()
        .enumerate()
        .map(|(n, &m)| {
            let support: Vec<usize> = (0..m).collect();
            let set = ConvexSet::subspace(d, support.clone()).unwrap();
            let (z, eta) = best_approximation(&model, &set, &data, &y).unwrap();
            let c = ModelConstants::new(model.lhat(&space, &data), lip, model.hilbert_stability(&support).unwrap())
                .unwrap();
            Level::new(n, set, eta, c).unwrap().with_model(model.clone()).with_reference(z).certified(true)
        })
        .collect();
    (space, Schedule::new(levels, 1.0, eta_hat).unwrap(), y)
}

/// The geometries exercised by the property checks: `(r, p)` pairs.
pub const GEOMETRIES: [(f64, f64); 3] = [(2.0, 2.0), (3.0, 3.0), (1.5, 2.0)];

pub fn one_of_each_set(dim: usize) -> Vec<ConvexSet> {
    let mut center = vec![0.0; dim];
    center[0] = 0.5;
    vec![
        ConvexSet::whole(dim).unwrap(),
        ConvexSet::boxed((0..dim).map(|i| -0.5 - 0.1 * i as f64).collect(), vec![0.7; dim]).unwrap(),
        ConvexSet::ball(Primal::new(center).unwrap(), 0.8).unwrap(),
        ConvexSet::subspace(dim, (0..dim).step_by(2).collect()).unwrap(),
    ]
}
