//! Closed convex sets `Z ⊂ X` and their Bregman projections.
//!
//! The projection of `x` onto `Z` is
//!
//! ```text
//! P_Z(x) = argmin_{y ∈ Z} Δ_p(x, y) = argmin_{y ∈ Z} ‖y‖^p / p − ⟨J_p(x), y⟩
//! ```
//!
//! which is the form that satisfies the three-point inequality
//! `Δ_p(P_Z(x), z) + Δ_p(x, P_Z(x)) ≤ Δ_p(x, z)` for every `z ∈ Z`.
//! Each variant reduces the optimality conditions to monotone scalar
//! equations solved by bracketing, so no iterative minimiser is involved.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_dim, Error, Result};
use crate::geometry::{duality, signed_pow, Primal, SpaceGeometry};
use crate::root::find_root;

/// Slack (relative to the radius) under which a point counts as inside a ball
/// during projection, so that projecting a projected point is the identity.
const BALL_SLACK: f64 = 1e-13;

#[derive(Clone, Debug, PartialEq)]
pub enum ConvexSet {
    WholeSpace { dim: usize },
    /// Coordinate box; bounds may be infinite.
    Box { lower: Vec<f64>, upper: Vec<f64> },
    /// Ball in the space norm.
    Ball { center: Primal, radius: f64 },
    /// `{x : x_i = 0 for i ∉ support}`; `support` is sorted and deduplicated.
    CoordinateSubspace { dim: usize, support: Vec<usize> },
}

/// Both sides of the total non-expansiveness inequality.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NonExpansiveness {
    /// `Δ_p(P_Z(x), z) + Δ_p(x, P_Z(x))`
    pub lhs: f64,
    /// `Δ_p(x, z)`
    pub rhs: f64,
    pub ok: bool,
}

impl ConvexSet {
    pub fn whole(dim: usize) -> Result<Self> {
        let set = Self::WholeSpace { dim };
        set.validate()?;
        Ok(set)
    }

    pub fn boxed(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let set = Self::Box { lower, upper };
        set.validate()?;
        Ok(set)
    }

    pub fn ball(center: Primal, radius: f64) -> Result<Self> {
        let set = Self::Ball { center, radius };
        set.validate()?;
        Ok(set)
    }

    pub fn subspace(dim: usize, mut support: Vec<usize>) -> Result<Self> {
        support.sort_unstable();
        support.dedup();
        let set = Self::CoordinateSubspace { dim, support };
        set.validate()?;
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::WholeSpace { dim } | Self::CoordinateSubspace { dim, .. } => *dim,
            Self::Box { lower, .. } => lower.len(),
            Self::Ball { center, .. } => center.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim() == 0 {
            return Err(Error::InvalidSet("dimension must be positive".into()));
        }
        match self {
            Self::WholeSpace { .. } => Ok(()),
            Self::Box { lower, upper } => {
                check_dim(lower.len(), upper.len())?;
                for (i, (l, u)) in lower.iter().zip(upper).enumerate() {
                    if l.is_nan() || u.is_nan() || l > u || *l == f64::INFINITY || *u == f64::NEG_INFINITY {
                        return Err(Error::InvalidSet(format!("box bounds at {i} are empty: [{l}, {u}]")));
                    }
                }
                Ok(())
            }
            Self::Ball { radius, .. } => {
                if radius.is_finite() && *radius > 0.0 {
                    Ok(())
                } else {
                    Err(Error::InvalidSet(format!("ball radius {radius} must be positive and finite")))
                }
            }
            Self::CoordinateSubspace { dim, support } => {
                if support.is_empty() {
                    return Err(Error::InvalidSet("subspace support is empty".into()));
                }
                if support.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidSet("subspace support must be sorted and unique".into()));
                }
                match support.last() {
                    Some(&i) if i >= *dim => {
                        Err(Error::InvalidSet(format!("support index {i} out of range for dimension {dim}")))
                    }
                    _ => Ok(()),
                }
            }
        }
    }

    /// Whether the space-norm distance from `x` to the set is at most `tol`.
    pub fn contains(&self, space: &SpaceGeometry, x: &Primal, tol: f64) -> Result<bool> {
        check_dim(self.dim(), space.dim())?;
        check_dim(self.dim(), x.len())?;
        Ok(self.distance(space, x) <= tol)
    }

    /// Space-norm distance to the set. Every variant is either separable over
    /// coordinates or a norm ball, so the distance is exact.
    pub(crate) fn distance(&self, space: &SpaceGeometry, x: &[f64]) -> f64 {
        match self {
            Self::WholeSpace { .. } => 0.0,
            Self::Box { lower, upper } => {
                let d: Vec<f64> = x
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .map(|(&v, (&l, &u))| v - v.clamp(l, u))
                    .collect();
                space.norm_of(&d)
            }
            Self::Ball { center, radius } => (space.norm_of(&sub(x, center)) - radius).max(0.0),
            Self::CoordinateSubspace { support, .. } => {
                let mut off = x.to_vec();
                for &i in support {
                    off[i] = 0.0;
                }
                space.norm_of(&off)
            }
        }
    }

    /// Bregman projection `P_Z(x)`; returns `x` unchanged when it already lies in `Z`.
    pub fn bregman_project(&self, space: &SpaceGeometry, x: &Primal) -> Result<Primal> {
        self.validate()?;
        check_dim(self.dim(), space.dim())?;
        check_dim(self.dim(), x.len())?;
        if self.holds(space, x) {
            return Ok(x.clone());
        }
        let xi = space.duality_of(x);
        self.project_dual(space, &xi).map(Primal::from_vec)
    }

    /// Projection of the point whose dual image is `xi`, where `xt = J_q^*(xi)`
    /// is already known. Avoids a round trip through `J_p`.
    pub(crate) fn project_with_dual(&self, space: &SpaceGeometry, xt: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        if self.holds(space, xt) {
            return Ok(xt.to_vec());
        }
        self.project_dual(space, xi)
    }

    fn holds(&self, space: &SpaceGeometry, x: &[f64]) -> bool {
        match self {
            Self::Ball { center, radius } => space.norm_of(&sub(x, center)) <= radius * (1.0 + BALL_SLACK),
            _ => self.distance(space, x) == 0.0,
        }
    }

    /// `argmin_{y ∈ Z} ‖y‖^p / p − ⟨xi, y⟩`.
    fn project_dual(&self, space: &SpaceGeometry, xi: &[f64]) -> Result<Vec<f64>> {
        match self {
            Self::WholeSpace { .. } => Ok(space.inverse_duality_of(xi)),
            Self::CoordinateSubspace { dim, support } => {
                let xs: Vec<f64> = support.iter().map(|&i| xi[i]).collect();
                let ws: Vec<f64> = support.iter().map(|&i| space.dual_weights()[i]).collect();
                let ys = duality(&xs, space.r_dual(), &ws, space.q());
                let mut y = vec![0.0; *dim];
                for (&i, v) in support.iter().zip(ys) {
                    y[i] = v;
                }
                Ok(y)
            }
            Self::Box { lower, upper } => project_box(space, lower, upper, xi),
            Self::Ball { center, radius } => project_ball(space, center, *radius, xi),
        }
    }

    /// Checks `Δ_p(P_Z(x), z) + Δ_p(x, P_Z(x)) ≤ Δ_p(x, z) + 1e−10` for `z ∈ Z`.
    pub fn check_total_non_expansiveness(
        &self,
        space: &SpaceGeometry,
        x: &Primal,
        z: &Primal,
    ) -> Result<NonExpansiveness> {
        if !self.contains(space, z, 1e-8)? {
            return Err(Error::InvalidSet("the pole z must lie in the set".into()));
        }
        let y = self.bregman_project(space, x)?;
        let lhs = space.bregman_of(&y, z) + space.bregman_of(x, &y);
        let rhs = space.bregman_of(x, z);
        Ok(NonExpansiveness { lhs, rhs, ok: lhs <= rhs + 1e-10 })
    }

    /// Exact inclusion test `self ⊆ other`.
    pub fn is_subset_of(&self, other: &ConvexSet, space: &SpaceGeometry) -> Result<bool> {
        check_dim(self.dim(), other.dim())?;
        check_dim(self.dim(), space.dim())?;
        let full = |s: &[usize]| s.len() == self.dim();
        Ok(match (self, other) {
            (_, Self::WholeSpace { .. }) => true,
            (Self::WholeSpace { .. }, Self::CoordinateSubspace { support, .. }) => full(support),
            (Self::WholeSpace { .. }, Self::Box { lower, upper }) => {
                lower.iter().all(|l| *l == f64::NEG_INFINITY) && upper.iter().all(|u| *u == f64::INFINITY)
            }
            (Self::WholeSpace { .. }, Self::Ball { .. }) => false,
            (Self::CoordinateSubspace { support: a, .. }, Self::CoordinateSubspace { support: b, .. }) => {
                a.iter().all(|i| b.binary_search(i).is_ok())
            }
            (Self::CoordinateSubspace { support, .. }, Self::Box { lower, upper }) => (0..self.dim()).all(|i| {
                if support.binary_search(&i).is_ok() {
                    lower[i] == f64::NEG_INFINITY && upper[i] == f64::INFINITY
                } else {
                    lower[i] <= 0.0 && upper[i] >= 0.0
                }
            }),
            (Self::CoordinateSubspace { .. }, Self::Ball { .. }) => false,
            (Self::Box { lower, upper }, Self::CoordinateSubspace { support, .. }) => (0..self.dim())
                .all(|i| support.binary_search(&i).is_ok() || (lower[i] == 0.0 && upper[i] == 0.0)),
            (Self::Box { lower: l1, upper: u1 }, Self::Box { lower: l2, upper: u2 }) => {
                (0..self.dim()).all(|i| l1[i] >= l2[i] && u1[i] <= u2[i])
            }
            (Self::Box { lower, upper }, Self::Ball { center, radius }) => {
                // the farthest point of a box from c sits at a vertex, coordinate by coordinate
                let far: Vec<f64> = (0..self.dim())
                    .map(|i| {
                        let (a, b) = ((lower[i] - center[i]).abs(), (upper[i] - center[i]).abs());
                        a.max(b)
                    })
                    .collect();
                far.iter().all(|v| v.is_finite()) && space.norm_of(&far) <= *radius
            }
            (Self::Ball { center, radius }, Self::Box { lower, upper }) => {
                // coordinate i ranges over c_i ± R w_i^(-1/r) on the ball
                (0..self.dim()).all(|i| {
                    let reach = radius * space.weights()[i].powf(-1.0 / space.r());
                    center[i] - reach >= lower[i] && center[i] + reach <= upper[i]
                })
            }
            (Self::Ball { .. }, Self::CoordinateSubspace { support, .. }) => full(support),
            (Self::Ball { center: c1, radius: r1 }, Self::Ball { center: c2, radius: r2 }) => {
                space.norm_of(&sub(c1, c2)) + r1 <= *r2
            }
        })
    }

    /// Draws a point of the set. Unbounded directions are sampled at `scale`.
    pub fn sample_point<R: Rng + ?Sized>(&self, space: &SpaceGeometry, rng: &mut R, scale: f64) -> Primal {
        let dim = self.dim();
        let v = match self {
            Self::WholeSpace { .. } => gaussian(rng, dim, scale),
            Self::CoordinateSubspace { support, .. } => {
                let mut v = vec![0.0; dim];
                for &i in support {
                    v[i] = scale * rng.sample::<f64, _>(StandardNormal);
                }
                v
            }
            Self::Box { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(&l, &u)| {
                    let t: f64 = rng.random();
                    match (l.is_finite(), u.is_finite()) {
                        (true, true) => l + t * (u - l),
                        (true, false) => l + scale * t,
                        (false, true) => u - scale * t,
                        (false, false) => scale * (2.0 * t - 1.0),
                    }
                })
                .collect(),
            Self::Ball { center, radius } => {
                let g = gaussian(rng, dim, 1.0);
                let n = space.norm_of(&g);
                let t: f64 = rng.random();
                let s = radius * t.powf(1.0 / dim as f64) / n;
                center.iter().zip(&g).map(|(c, v)| c + s * v).collect()
            }
        };
        Primal::from_vec(v)
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn gaussian<R: Rng + ?Sized>(rng: &mut R, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn non_convergence(what: &str) -> Error {
    Error::NonConvergence(format!("{what} root search failed"))
}

/// Grows `t` by doubling (or shrinks it by halving) from 1 until `g` changes
/// sign; `g` is assumed decreasing. Returns the bracket `(lo, hi)` with
/// `g(lo) > 0 ≥ g(hi)`, or `None` if no sign change was found in range.
fn bracket_decreasing<F: FnMut(f64) -> f64>(mut g: F) -> Option<(f64, f64)> {
    let mut t = 1.0;
    let v = g(t);
    if v.is_nan() {
        return None;
    }
    if v > 0.0 {
        for _ in 0..2000 {
            let next = 2.0 * t;
            let gv = g(next);
            if gv.is_nan() || next.is_infinite() {
                return None;
            }
            if gv <= 0.0 {
                return Some((t, next));
            }
            t = next;
        }
    } else {
        for _ in 0..2000 {
            let next = 0.5 * t;
            if next == 0.0 {
                return None;
            }
            let gv = g(next);
            if gv.is_nan() {
                return None;
            }
            if gv > 0.0 {
                return Some((next, t));
            }
            t = next;
        }
    }
    None
}

/// Box projection. Optimality gives `y_i = clamp(ψ⁻¹(b_i ν^(r−p)), l_i, u_i)`
/// with `ψ(t) = |t|^(r−1) sign t`, `b = ξ / w` and `ν = ‖y‖`. Each `|y_i|` is
/// nonincreasing in `ν`, so `ν ↦ ‖y(ν)‖ − ν` has a single root.
fn project_box(space: &SpaceGeometry, lower: &[f64], upper: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
    let (r, p) = (space.r(), space.p());
    let a: Vec<f64> = xi
        .iter()
        .zip(space.weights())
        .map(|(x, w)| signed_pow(x / w, 1.0 / (r - 1.0)))
        .collect();
    let at = |kappa: f64| -> Vec<f64> {
        a.iter()
            .zip(lower.iter().zip(upper))
            .map(|(&ai, (&l, &u))| if ai == 0.0 { 0.0_f64.clamp(l, u) } else { (ai * kappa).clamp(l, u) })
            .collect()
    };
    if p == r {
        return Ok(at(1.0));
    }
    let e = (r - p) / (r - 1.0);
    let h = |nu: f64| space.norm_of(&at(nu.powf(e))) - nu;
    let Some((lo, hi)) = bracket_decreasing(h) else {
        // ‖y(ν)‖ ≤ ν down to the smallest ν: the minimiser is the origin
        let y0 = at(f64::MAX);
        if y0.iter().all(|v| *v == 0.0) {
            return Ok(y0);
        }
        return Err(non_convergence("box norm"));
    };
    let nu = find_root(h, lo, hi, 0.0).ok_or_else(|| non_convergence("box norm"))?;
    Ok(at(nu.powf(e)))
}

/// Solves `α ψ(t) + λ ψ(t − c) = b` for `t`; the left side is increasing.
fn ball_coordinate(alpha: f64, lambda: f64, b: f64, c: f64, r: f64) -> f64 {
    if r == 2.0 {
        return (b + lambda * c) / (alpha + lambda);
    }
    let s = alpha + lambda;
    // widened so that rounding cannot erase the sign change at the ends
    let reach = |v: f64| 2.0 * (v.max(0.0) / s).powf(1.0 / (r - 1.0));
    let lo = c.min(0.0) - reach(-b);
    let hi = c.max(0.0) + reach(b);
    let atol = 1e-17 * (hi - lo).max(c.abs());
    find_root(|t| alpha * signed_pow(t, r - 1.0) + lambda * signed_pow(t - c, r - 1.0) - b, lo, hi, atol)
        .unwrap_or(f64::NAN)
}

/// Ball projection. With multiplier `λ` for the constraint `‖y − c‖^r / r ≤ R^r / r`,
/// the optimality condition separates into coordinate equations
/// `ν^(p−r) ψ(y_i) + λ ψ(y_i − c_i) = ξ_i / w_i`, coupled through `ν = ‖y‖`.
/// `λ` is then fixed by `‖y(λ) − c‖ = R`, which decreases in `λ`.
fn project_ball(space: &SpaceGeometry, center: &[f64], radius: f64, xi: &[f64]) -> Result<Vec<f64>> {
    let (r, p) = (space.r(), space.p());
    let y0 = space.inverse_duality_of(xi);
    let d0 = space.norm_of(&sub(&y0, center));
    let onto_sphere = |y: Vec<f64>, d: f64| -> Vec<f64> {
        center.iter().zip(&y).map(|(c, v)| c + radius / d * (v - c)).collect()
    };
    if d0 <= radius * (1.0 + BALL_SLACK) {
        return Ok(y0);
    }
    // Centered balls and weighted Euclidean geometry reduce to radial scaling.
    if center.iter().all(|c| *c == 0.0) || (r == 2.0 && p == 2.0) {
        return Ok(onto_sphere(y0, d0));
    }

    let b: Vec<f64> = xi.iter().zip(space.weights()).map(|(x, w)| x / w).collect();
    let y_at = |alpha: f64, lambda: f64| -> Vec<f64> {
        b.iter().zip(center).map(|(&bi, &ci)| ball_coordinate(alpha, lambda, bi, ci, r)).collect()
    };
    let inner = |lambda: f64| -> Vec<f64> {
        if p == r {
            return y_at(1.0, lambda);
        }
        let top = space.norm_of(&y_at(0.0, lambda));
        if top.is_nan() {
            return vec![f64::NAN; b.len()];
        }
        if top == 0.0 {
            return y_at(0.0, lambda);
        }
        let h = |nu: f64| space.norm_of(&y_at(nu.powf(p - r), lambda)) - nu;
        match find_root(h, 0.0, top, 1e-17 * top) {
            Some(nu) => y_at(nu.powf(p - r), lambda),
            None => vec![f64::NAN; b.len()],
        }
    };
    let g = |lambda: f64| space.norm_of(&sub(&inner(lambda), center)) - radius;
    let (lo, hi) = bracket_decreasing(g).ok_or_else(|| non_convergence("ball multiplier bracket"))?;
    let lambda = find_root(g, lo, hi, 0.0).ok_or_else(|| non_convergence("ball multiplier"))?;
    let y = inner(lambda);
    let d = space.norm_of(&sub(&y, center));
    if !d.is_finite() || d == 0.0 {
        return Err(non_convergence("ball projection"));
    }
    Ok(onto_sphere(y, d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pv(v: &[f64]) -> Primal {
        Primal::new(v.to_vec()).unwrap()
    }

    fn geometries(dim: usize) -> Vec<SpaceGeometry> {
        vec![
            SpaceGeometry::hilbert(dim),
            SpaceGeometry::lp(dim, 3.0).unwrap(),
            SpaceGeometry::lp(dim, 1.5).unwrap(),
            SpaceGeometry::new(dim, 3.0, Some(4.0), None, Some(0.05), Some(5.0)).unwrap(),
        ]
    }

    fn sets(dim: usize) -> Vec<ConvexSet> {
        let mut c = vec![0.0; dim];
        c[0] = 0.5;
        c[dim - 1] = -0.25;
        vec![
            ConvexSet::whole(dim).unwrap(),
            ConvexSet::boxed(vec![-0.5; dim], vec![1.0; dim]).unwrap(),
            ConvexSet::boxed(
                (0..dim).map(|i| if i % 2 == 0 { 0.2 } else { f64::NEG_INFINITY }).collect(),
                (0..dim).map(|i| if i % 2 == 0 { 0.9 } else { 0.1 }).collect(),
            )
            .unwrap(),
            ConvexSet::ball(Primal::zeros(dim), 0.7).unwrap(),
            ConvexSet::ball(pv(&c), 0.6).unwrap(),
            ConvexSet::subspace(dim, vec![0, 2]).unwrap(),
        ]
    }

    #[test]
    fn membership_examples() {
        let g = SpaceGeometry::hilbert(2);
        let tol = 1e-6;
        assert!(ConvexSet::whole(2).unwrap().contains(&g, &pv(&[1e9, -3.0]), 0.0).unwrap());
        let unit = ConvexSet::boxed(vec![0.0; 2], vec![1.0; 2]).unwrap();
        assert!(unit.contains(&g, &pv(&[0.5, 0.5]), tol).unwrap());
        assert!(!unit.contains(&g, &pv(&[0.5, 1.0 + 2.0 * tol]), tol).unwrap());
        let sub = ConvexSet::subspace(2, vec![0]).unwrap();
        assert!(sub.contains(&g, &pv(&[1.0, 1e-12]), 1e-10).unwrap());
    }

    #[test]
    fn invalid_sets_are_rejected() {
        assert!(ConvexSet::boxed(vec![1.0], vec![0.0]).is_err());
        assert!(ConvexSet::boxed(vec![f64::NAN], vec![0.0]).is_err());
        assert!(ConvexSet::ball(pv(&[0.0]), 0.0).is_err());
        assert!(ConvexSet::subspace(3, vec![]).is_err());
        assert!(ConvexSet::subspace(3, vec![3]).is_err());
        assert_eq!(
            ConvexSet::subspace(4, vec![2, 0, 2]).unwrap(),
            ConvexSet::CoordinateSubspace { dim: 4, support: vec![0, 2] }
        );
    }

    #[test]
    fn hilbert_closed_forms() {
        let g = SpaceGeometry::hilbert(2);
        let unit = ConvexSet::boxed(vec![0.0; 2], vec![1.0; 2]).unwrap();
        assert_eq!(unit.bregman_project(&g, &pv(&[2.0, -1.0])).unwrap(), pv(&[1.0, 0.0]));
        let ball = ConvexSet::ball(Primal::zeros(2), 1.0).unwrap();
        let y = ball.bregman_project(&g, &pv(&[3.0, 4.0])).unwrap();
        assert_abs_diff_eq!(y[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(y[1], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn points_inside_are_fixed() {
        for g in geometries(4) {
            for set in sets(4) {
                let mut rng = ChaCha8Rng::seed_from_u64(3);
                let z = set.sample_point(&g, &mut rng, 1.0);
                assert_eq!(set.bregman_project(&g, &z).unwrap(), z);
                let check = set.check_total_non_expansiveness(&g, &z, &z).unwrap();
                assert!(check.ok && check.lhs == 0.0 && check.rhs == 0.0);
            }
        }
    }

    #[test]
    fn cubic_subspace_projection_minimises_both_orders() {
        // with p = r the Bregman distance separates, so truncation minimises
        // both Δ_p(·, x) and Δ_p(x, ·) over the subspace
        let g = SpaceGeometry::lp(4, 3.0).unwrap();
        let set = ConvexSet::subspace(4, vec![0, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = pv(&[0.8, -1.2, 0.6, 2.0]);
        let y = set.bregman_project(&g, &x).unwrap();
        assert_eq!((y[2], y[3]), (0.0, 0.0));
        let first = g.bregman_of(&y, &x);
        let second = g.bregman_of(&x, &y);
        for _ in 0..10_000 {
            let z = set.sample_point(&g, &mut rng, 1.5);
            assert!(first <= g.bregman_of(&z, &x) + 1e-12);
            assert!(second <= g.bregman_of(&x, &z) + 1e-12);
        }
    }

    #[test]
    fn projection_beats_random_feasible_points() {
        // brute-force minimality oracle for the objective Δ_p(x, ·)
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for g in geometries(3) {
            for set in sets(3) {
                for _ in 0..20 {
                    let x = Primal::from_vec(gaussian(&mut rng, 3, 2.0));
                    let y = set.bregman_project(&g, &x).unwrap();
                    let best = g.bregman_of(&x, &y);
                    for _ in 0..300 {
                        let z = set.sample_point(&g, &mut rng, 3.0);
                        assert!(best <= g.bregman_of(&x, &z) + 1e-10, "{set:?} r = {}", g.r());
                    }
                }
            }
        }
    }

    #[test]
    fn three_point_inequality_and_idempotence() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for g in geometries(4) {
            for set in sets(4) {
                for _ in 0..300 {
                    let x = Primal::from_vec(gaussian(&mut rng, 4, 2.0));
                    let z = set.sample_point(&g, &mut rng, 2.0);
                    let c = set.check_total_non_expansiveness(&g, &x, &z).unwrap();
                    assert!(c.ok, "{set:?} r = {} p = {}: {c:?}", g.r(), g.p());
                    let y = set.bregman_project(&g, &x).unwrap();
                    assert!(set.contains(&g, &y, 1e-8).unwrap());
                    let yy = set.bregman_project(&g, &y).unwrap();
                    for (a, b) in y.iter().zip(yy.iter()) {
                        assert!((a - b).abs() <= 1e-10);
                    }
                }
            }
        }
    }

    #[test]
    fn weighted_hilbert_ball_is_radial() {
        let g = SpaceGeometry::new(2, 2.0, None, Some(vec![4.0, 1.0]), None, None).unwrap();
        let set = ConvexSet::ball(pv(&[1.0, 1.0]), 1.0).unwrap();
        let y = set.bregman_project(&g, &pv(&[2.0, 3.0])).unwrap();
        // ‖(1, 2)‖_w = sqrt(4 + 4) = 2√2
        let s = 1.0 / 8f64.sqrt();
        assert_abs_diff_eq!(y[0], 1.0 + s, epsilon = 1e-15);
        assert_abs_diff_eq!(y[1], 1.0 + 2.0 * s, epsilon = 1e-15);
    }

    #[test]
    fn inclusion() {
        let g = SpaceGeometry::lp(3, 3.0).unwrap();
        let s01 = ConvexSet::subspace(3, vec![0, 1]).unwrap();
        let s0 = ConvexSet::subspace(3, vec![0]).unwrap();
        let whole = ConvexSet::whole(3).unwrap();
        assert!(s0.is_subset_of(&s01, &g).unwrap());
        assert!(!s01.is_subset_of(&s0, &g).unwrap());
        assert!(s01.is_subset_of(&whole, &g).unwrap());
        assert!(!whole.is_subset_of(&s01, &g).unwrap());
        let small = ConvexSet::ball(pv(&[0.1, 0.0, 0.0]), 0.5).unwrap();
        let big = ConvexSet::ball(Primal::zeros(3), 0.6).unwrap();
        assert!(small.is_subset_of(&big, &g).unwrap());
        assert!(!big.is_subset_of(&small, &g).unwrap());
        let cube = ConvexSet::boxed(vec![-0.6; 3], vec![0.6; 3]).unwrap();
        assert!(big.is_subset_of(&cube, &g).unwrap());
        let tiny = ConvexSet::boxed(vec![-0.1; 3], vec![0.1; 3]).unwrap();
        assert!(tiny.is_subset_of(&big, &g).unwrap());
        let flat = ConvexSet::boxed(vec![-1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]).unwrap();
        assert!(flat.is_subset_of(&s0, &g).unwrap());
    }
}
