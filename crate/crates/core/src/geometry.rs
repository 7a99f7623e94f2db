//! Geometry of `X = ℝ^d` under a weighted `ℓ^r` norm.
//!
//! The space carries a gauge exponent `p` (with conjugate `q`) that fixes the
//! duality mapping `J_p`, the gradient of `x ↦ ‖x‖^p / p`:
//!
//! ```text
//! J_p(x)_i = ‖x‖^(p−r) · w_i · |x_i|^(r−1) · sign(x_i)
//! ```
//!
//! The dual space `X*` is `ℓ^{r'}` with `r' = r / (r − 1)` and weights
//! `w_i^(1−r')`, so that the canonical pairing `⟨x, x*⟩ = Σ x_i x*_i` is
//! isometric. The inverse of `J_p` is the duality mapping of `X*` with
//! gauge `q`.
//!
//! Bregman distances follow the convention that the duality map is evaluated
//! at the *first* argument:
//!
//! ```text
//! Δ_p(x, x̃) = ‖x̃‖^p / p − ‖x‖^p / p − ⟨J_p(x), x̃ − x⟩
//! ```

use std::ops::Deref;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

macro_rules! coordinate_vector {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(Vec<f64>);

        impl $name {
            /// Wraps `coords`, rejecting NaN and infinite entries.
            pub fn new(coords: Vec<f64>) -> Result<Self> {
                if let Some(index) = coords.iter().position(|v| !v.is_finite()) {
                    return Err(Error::NonFinite { index });
                }
                Ok(Self(coords))
            }

            pub fn zeros(dim: usize) -> Self {
                Self(vec![0.0; dim])
            }

            pub fn as_slice(&self) -> &[f64] {
                &self.0
            }

            pub fn into_vec(self) -> Vec<f64> {
                self.0
            }

            pub(crate) fn from_vec(coords: Vec<f64>) -> Self {
                Self(coords)
            }
        }

        impl Deref for $name {
            type Target = [f64];

            fn deref(&self) -> &[f64] {
                &self.0
            }
        }

        impl TryFrom<Vec<f64>> for $name {
            type Error = Error;

            fn try_from(coords: Vec<f64>) -> Result<Self> {
                Self::new(coords)
            }
        }
    };
}

coordinate_vector!(
    /// An element of the primal space `X`.
    Primal
);
coordinate_vector!(
    /// An element of the dual space `X*`.
    Dual
);
coordinate_vector!(
    /// An element of the data space `Y` (or its dual; the pairing is the dot product).
    Data
);

/// `|t|^e · sign(t)`.
#[inline]
pub(crate) fn signed_pow(t: f64, e: f64) -> f64 {
    if t == 0.0 {
        0.0
    } else if e == 1.0 {
        t
    } else {
        t.abs().powf(e).copysign(t)
    }
}

/// `(Σ w_i |x_i|^r)^(1/r)`, scaled by `max |x_i|` to avoid over/underflow.
pub(crate) fn weighted_norm(x: &[f64], r: f64, weights: &[f64]) -> f64 {
    let scale = x.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    if r == 2.0 {
        let s: f64 = x
            .iter()
            .zip(weights)
            .map(|(v, w)| {
                let t = v / scale;
                w * t * t
            })
            .sum();
        return scale * s.sqrt();
    }
    let s: f64 = x
        .iter()
        .zip(weights)
        .map(|(v, w)| w * (v.abs() / scale).powf(r))
        .sum();
    scale * s.powf(1.0 / r)
}

/// Duality mapping of a weighted `ℓ^r` space with gauge `t ↦ t^(gauge−1)`.
pub(crate) fn duality(x: &[f64], r: f64, weights: &[f64], gauge: f64) -> Vec<f64> {
    let n = weighted_norm(x, r, weights);
    if n == 0.0 {
        return vec![0.0; x.len()];
    }
    let factor = if gauge == r { 1.0 } else { n.powf(gauge - r) };
    x.iter()
        .zip(weights)
        .map(|(&v, &w)| factor * w * signed_pow(v, r - 1.0))
        .collect()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Weighted `ℓ^r` space `X = ℝ^d` with gauge exponent `p` and the
/// norm–Bregman comparison constants `C_p` and `G_q`.
#[derive(Clone, Debug, PartialEq)]
pub struct SpaceGeometry {
    dim: usize,
    r: f64,
    weights: Vec<f64>,
    dual_weights: Vec<f64>,
    p: f64,
    cp: f64,
    gq: f64,
}

impl SpaceGeometry {
    /// Builds a geometry.
    ///
    /// `p` defaults to `max(r, 2)` and must not be smaller than that.
    /// `weights` default to one. When `r = p = 2` the space is an inner
    /// product space and `C_p = G_q = 1` is forced; supplying other values is
    /// an error. Otherwise `cp`/`gq` default to the built-in constants for
    /// `r ∈ {1.5, 3, 4}` with `p = max(r, 2)` and are required for anything else.
    pub fn new(
        dim: usize,
        r: f64,
        p: Option<f64>,
        weights: Option<Vec<f64>>,
        cp: Option<f64>,
        gq: Option<f64>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidGeometry("dimension must be positive".into()));
        }
        if !(r.is_finite() && r > 1.0) {
            return Err(Error::InvalidGeometry(format!("norm exponent r = {r} must be in (1, inf)")));
        }
        let min_p = r.max(2.0);
        let p = p.unwrap_or(min_p);
        if !(p.is_finite() && p >= min_p) {
            return Err(Error::InvalidGeometry(format!(
                "gauge exponent p = {p} must be finite and at least max(r, 2) = {min_p}"
            )));
        }
        let weights = weights.unwrap_or_else(|| vec![1.0; dim]);
        check_dim(dim, weights.len())?;
        if weights.iter().any(|w| !(w.is_finite() && *w > 0.0)) {
            return Err(Error::InvalidGeometry("weights must be positive and finite".into()));
        }

        let (cp, gq) = if r == 2.0 && p == 2.0 {
            for (name, value) in [("Cp", cp), ("Gq", gq)] {
                if let Some(v) = value {
                    if v != 1.0 {
                        return Err(Error::InvalidGeometry(format!(
                            "{name} must be 1 in an inner-product configuration (got {v})"
                        )));
                    }
                }
            }
            (1.0, 1.0)
        } else {
            let preset = preset_constants(r, p);
            let cp = cp
                .or(preset.map(|c| c.0))
                .ok_or_else(|| Error::InvalidGeometry(format!("no built-in Cp for r = {r}, p = {p}; supply one")))?;
            let gq = gq
                .or(preset.map(|c| c.1))
                .ok_or_else(|| Error::InvalidGeometry(format!("no built-in Gq for r = {r}, p = {p}; supply one")))?;
            (cp, gq)
        };
        if !(cp.is_finite() && cp > 0.0 && gq.is_finite() && gq > 0.0) {
            return Err(Error::InvalidGeometry(format!("Cp = {cp} and Gq = {gq} must be positive")));
        }

        let r_dual = r / (r - 1.0);
        let dual_weights = weights.iter().map(|w| w.powf(1.0 - r_dual)).collect();
        Ok(Self { dim, r, weights, dual_weights, p, cp, gq })
    }

    /// Euclidean space `ℝ^dim` with `p = q = 2` and `C_p = G_q = 1`.
    pub fn hilbert(dim: usize) -> Self {
        Self::new(dim, 2.0, None, None, None, None).expect("hilbert geometry is always valid")
    }

    /// Unweighted `ℓ^r` with `p = max(r, 2)` and built-in constants.
    pub fn lp(dim: usize, r: f64) -> Result<Self> {
        Self::new(dim, r, None, None, None, None)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    /// Exponent of the dual norm, `r / (r − 1)`.
    pub fn r_dual(&self) -> f64 {
        self.r / (self.r - 1.0)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Conjugate gauge exponent, always recomputed from `p`.
    pub fn q(&self) -> f64 {
        self.p / (self.p - 1.0)
    }

    pub fn cp(&self) -> f64 {
        self.cp
    }

    pub fn gq(&self) -> f64 {
        self.gq
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn dual_weights(&self) -> &[f64] {
        &self.dual_weights
    }

    /// `r = p = 2`: the space is an inner-product space and `J_p` is a diagonal scaling.
    pub fn is_inner_product(&self) -> bool {
        self.r == 2.0 && self.p == 2.0
    }

    /// `r = p = 2` with unit weights, where `J_p = J_q^* = Id`.
    pub fn is_hilbert(&self) -> bool {
        self.is_inner_product() && self.weights.iter().all(|&w| w == 1.0)
    }

    pub fn norm(&self, x: &Primal) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        Ok(self.norm_of(x))
    }

    pub fn dual_norm(&self, xs: &Dual) -> Result<f64> {
        check_dim(self.dim, xs.len())?;
        Ok(self.dual_norm_of(xs))
    }

    /// `J_p(x)`, with `J_p(0) = 0`.
    pub fn duality_map(&self, x: &Primal) -> Result<Dual> {
        check_dim(self.dim, x.len())?;
        Ok(Dual::from_vec(self.duality_of(x)))
    }

    /// `J_q^*(x*)`, the duality mapping of `X*` with gauge `q`, which inverts `J_p`.
    pub fn inverse_duality_map(&self, xs: &Dual) -> Result<Primal> {
        check_dim(self.dim, xs.len())?;
        Ok(Primal::from_vec(self.inverse_duality_of(xs)))
    }

    /// `Δ_p(x, xt)`, with the duality map evaluated at `x`.
    pub fn bregman_distance(&self, x: &Primal, xt: &Primal) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, xt.len())?;
        Ok(self.bregman_of(x, xt))
    }

    /// `Δ_q(x*, xt*)` in `X*` with gauge `q`.
    pub fn dual_bregman_distance(&self, xs: &Dual, xts: &Dual) -> Result<f64> {
        check_dim(self.dim, xs.len())?;
        check_dim(self.dim, xts.len())?;
        let q = self.q();
        let r_dual = self.r_dual();
        let j = duality(xs, r_dual, &self.dual_weights, q);
        let a = self.dual_norm_of(xts).powf(q) / q;
        let b = self.dual_norm_of(xs).powf(q) / q;
        let c: f64 = j.iter().zip(xts.iter().zip(xs.iter())).map(|(j, (t, s))| j * (t - s)).sum();
        Ok((a - b - c).max(0.0))
    }

    /// The canonical pairing `⟨x, x*⟩`.
    pub fn pairing(&self, x: &Primal, xs: &Dual) -> Result<f64> {
        check_dim(self.dim, x.len())?;
        check_dim(self.dim, xs.len())?;
        Ok(dot(x, xs))
    }

    pub(crate) fn norm_of(&self, x: &[f64]) -> f64 {
        weighted_norm(x, self.r, &self.weights)
    }

    pub(crate) fn dual_norm_of(&self, xs: &[f64]) -> f64 {
        weighted_norm(xs, self.r_dual(), &self.dual_weights)
    }

    pub(crate) fn duality_of(&self, x: &[f64]) -> Vec<f64> {
        duality(x, self.r, &self.weights, self.p)
    }

    pub(crate) fn inverse_duality_of(&self, xs: &[f64]) -> Vec<f64> {
        duality(xs, self.r_dual(), &self.dual_weights, self.q())
    }

    pub(crate) fn bregman_of(&self, x: &[f64], xt: &[f64]) -> f64 {
        if self.is_inner_product() {
            // the general form cancels catastrophically for nearby points
            let d: Vec<f64> = x.iter().zip(xt).map(|(a, b)| a - b).collect();
            let n = self.norm_of(&d);
            return 0.5 * n * n;
        }
        let p = self.p;
        let j = self.duality_of(x);
        let a = self.norm_of(xt).powf(p) / p;
        let b = self.norm_of(x).powf(p) / p;
        let c: f64 = j.iter().zip(xt.iter().zip(x)).map(|(j, (t, s))| j * (t - s)).sum();
        (a - b - c).max(0.0)
    }

    /// Samples random pairs and checks `Δ_p(x, x̃) ≥ (C_p/p)‖x − x̃‖^p` in `X`
    /// and `Δ_q(x*, x̃*) ≤ (G_q/q)‖x* − x̃*‖^q` in `X*`.
    ///
    /// A configuration with any violation should be rejected: the constants are
    /// inputs to the step size and to the convergence radius.
    pub fn certify_constants(&self, samples: usize, seed: u64) -> ConstantCertificate {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (p, q) = (self.p, self.q());
        let mut cert = ConstantCertificate {
            samples,
            cp_violations: 0,
            gq_violations: 0,
            min_cp_ratio: f64::INFINITY,
            max_gq_ratio: 0.0,
        };
        for _ in 0..samples {
            let (a, b) = sample_pair(&mut rng, self.dim);
            let diff: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();

            let dn = self.norm_of(&diff).powf(p);
            if dn > 0.0 {
                let ratio = p * self.bregman_of(&a, &b) / dn;
                let rounding = p * ROUNDING * (self.norm_of(&a).powf(p) + self.norm_of(&b).powf(p)) / dn;
                cert.min_cp_ratio = cert.min_cp_ratio.min(ratio);
                if ratio + rounding < self.cp * (1.0 - RATIO_TOL) {
                    cert.cp_violations += 1;
                }
            }

            let dn = self.dual_norm_of(&diff).powf(q);
            if dn > 0.0 {
                let rounding =
                    q * ROUNDING * (self.dual_norm_of(&a).powf(q) + self.dual_norm_of(&b).powf(q)) / dn;
                let d = self
                    .dual_bregman_distance(&Dual::from_vec(a), &Dual::from_vec(b))
                    .expect("sampled with matching dimension");
                let ratio = q * d / dn;
                cert.max_gq_ratio = cert.max_gq_ratio.max(ratio);
                if ratio - rounding > self.gq * (1.0 + RATIO_TOL) {
                    cert.gq_violations += 1;
                }
            }
        }
        cert
    }
}

const RATIO_TOL: f64 = 1e-9;
/// Bregman distances are differences of `O(‖x‖^p)` terms; a sample only
/// counts as a violation once it exceeds this relative rounding allowance.
const ROUNDING: f64 = 64.0 * f64::EPSILON;

/// Sharp norm–Bregman constants of unweighted `ℓ^r` (weights are an isometry
/// and do not change them). For `r = 1.5, p = 2` these are the strong
/// convexity modulus `r − 1` of `½‖·‖_r²` and the smoothness modulus `r' − 1`
/// of `½‖·‖_{r'}²`; for `p = r` the functionals separate over coordinates
/// and the constants are the extreme one-dimensional ratios.
fn preset_constants(r: f64, p: f64) -> Option<(f64, f64)> {
    if r == 1.5 && p == 2.0 {
        Some((0.5, 2.0))
    } else if r == 3.0 && p == 3.0 {
        Some((2.0 - 2f64.sqrt(), 2f64.sqrt() * (std::f64::consts::PI / 8.0).cos()))
    } else if r == 4.0 && p == 4.0 {
        Some((1.0 / 3.0, 3f64.cbrt()))
    } else {
        None
    }
}

fn sample_pair(rng: &mut ChaCha8Rng, dim: usize) -> (Vec<f64>, Vec<f64>) {
    let scale = 10f64.powf(rng.random_range(-2.0..2.0));
    let a: Vec<f64> = (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect();
    let b = if rng.random_bool(0.3) {
        // nearby pairs probe the local behaviour of the ratios
        let eps = scale * 10f64.powf(rng.random_range(-4.0..0.0));
        a.iter().map(|v| v + eps * rng.sample::<f64, _>(StandardNormal)).collect()
    } else {
        (0..dim).map(|_| scale * rng.sample::<f64, _>(StandardNormal)).collect()
    };
    (a, b)
}

/// Outcome of [`SpaceGeometry::certify_constants`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstantCertificate {
    pub samples: usize,
    pub cp_violations: usize,
    pub gq_violations: usize,
    /// Smallest observed `p·Δ_p / ‖x − x̃‖^p`; must stay above `C_p`.
    pub min_cp_ratio: f64,
    /// Largest observed `q·Δ_q / ‖x* − x̃*‖^q`; must stay below `G_q`.
    pub max_gq_ratio: f64,
}

impl ConstantCertificate {
    pub fn passed(&self) -> bool {
        self.cp_violations == 0 && self.gq_violations == 0
    }
}

/// Data space `Y = ℓ^s` (unweighted). Its duality selection `j_p` uses the
/// same gauge `p` as the primal space.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataSpace {
    s: f64,
}

impl Default for DataSpace {
    fn default() -> Self {
        Self { s: 2.0 }
    }
}

impl DataSpace {
    pub fn new(s: f64) -> Result<Self> {
        if !(s.is_finite() && s > 1.0) {
            return Err(Error::InvalidGeometry(format!("data exponent s = {s} must be in (1, inf)")));
        }
        Ok(Self { s })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn norm(&self, y: &[f64]) -> f64 {
        weighted_norm_unit(y, self.s)
    }

    /// `j_p(y)`: the duality mapping of `ℓ^s` with gauge `t ↦ t^(p−1)`.
    pub fn duality_map(&self, y: &[f64], p: f64) -> Data {
        let n = self.norm(y);
        if n == 0.0 {
            return Data::zeros(y.len());
        }
        let factor = if p == self.s { 1.0 } else { n.powf(p - self.s) };
        Data::from_vec(y.iter().map(|&v| factor * signed_pow(v, self.s - 1.0)).collect())
    }
}

fn weighted_norm_unit(y: &[f64], s: f64) -> f64 {
    let scale = y.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    if scale == 0.0 {
        return 0.0;
    }
    let sum: f64 = y.iter().map(|v| (v.abs() / scale).powf(s)).sum();
    scale * sum.powf(1.0 / s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pv(v: &[f64]) -> Primal {
        Primal::new(v.to_vec()).unwrap()
    }

    #[test]
    fn euclidean_norm() {
        let g = SpaceGeometry::hilbert(2);
        assert_eq!(g.norm(&pv(&[3.0, 4.0])).unwrap(), 5.0);
        assert_eq!(g.norm(&pv(&[0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn cubic_norm_matches_hand_sum() {
        let g = SpaceGeometry::lp(2, 3.0).unwrap();
        // |1|^3 + |1|^3 = 2
        assert_abs_diff_eq!(g.norm(&pv(&[1.0, 1.0])).unwrap(), 2f64.powf(1.0 / 3.0), epsilon = 1e-15);
        assert_eq!(g.norm(&pv(&[0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = SpaceGeometry::hilbert(3);
        assert_eq!(
            g.norm(&pv(&[1.0])),
            Err(Error::DimensionMismatch { expected: 3, found: 1 })
        );
        assert!(g.bregman_distance(&pv(&[1.0, 2.0, 3.0]), &pv(&[1.0])).is_err());
    }

    #[test]
    fn non_finite_vectors_are_rejected() {
        assert_eq!(Primal::new(vec![1.0, f64::NAN]), Err(Error::NonFinite { index: 1 }));
    }

    #[test]
    fn hilbert_duality_is_identity() {
        let g = SpaceGeometry::hilbert(3);
        let x = pv(&[0.3, -1.7, 2.5]);
        assert_eq!(g.duality_map(&x).unwrap().as_slice(), x.as_slice());
        assert_eq!(g.inverse_duality_map(&Dual::new(x.to_vec()).unwrap()).unwrap(), x);
    }

    #[test]
    fn duality_at_zero_is_zero() {
        for r in [1.5, 2.0, 3.0, 4.0] {
            let g = SpaceGeometry::lp(3, r).unwrap();
            assert_eq!(g.duality_map(&Primal::zeros(3)).unwrap(), Dual::zeros(3));
            assert_eq!(g.inverse_duality_map(&Dual::zeros(3)).unwrap(), Primal::zeros(3));
        }
    }

    #[test]
    fn quartic_duality_satisfies_both_defining_identities() {
        let g = SpaceGeometry::lp(2, 4.0).unwrap();
        let x = pv(&[1.0, -1.0]);
        let xs = g.duality_map(&x).unwrap();
        let nx = g.norm(&x).unwrap();
        let nxs = g.dual_norm(&xs).unwrap();
        // ⟨x, x*⟩ = ‖x‖‖x*‖ and ‖x*‖ = ‖x‖^(p−1), evaluated directly
        let pair: f64 = x.iter().zip(xs.iter()).map(|(a, b)| a * b).sum();
        let nx_direct = (1.0f64 + 1.0).powf(0.25);
        let nxs_direct = (xs[0].abs().powf(4.0 / 3.0) + xs[1].abs().powf(4.0 / 3.0)).powf(0.75);
        assert_abs_diff_eq!(nx, nx_direct, epsilon = 1e-15);
        assert_abs_diff_eq!(nxs, nxs_direct, epsilon = 1e-14);
        assert_abs_diff_eq!(pair, nx_direct * nxs_direct, epsilon = 1e-14);
        assert_abs_diff_eq!(nxs_direct, nx_direct.powi(3), epsilon = 1e-14);
    }

    #[test]
    fn hilbert_bregman_is_half_squared_distance() {
        let g = SpaceGeometry::hilbert(3);
        let x = pv(&[1.0, 2.0, -0.5]);
        let y = pv(&[-0.25, 0.5, 1.0]);
        let d2: f64 = x.iter().zip(y.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        assert_abs_diff_eq!(g.bregman_distance(&x, &y).unwrap(), 0.5 * d2, epsilon = 1e-14);
        assert_eq!(g.bregman_distance(&x, &x).unwrap(), 0.0);
    }

    #[test]
    fn bregman_argument_order_matters() {
        let g = SpaceGeometry::lp(2, 3.0).unwrap();
        let x = pv(&[1.0, 0.2]);
        let y = pv(&[-0.5, 2.0]);
        let a = g.bregman_distance(&x, &y).unwrap();
        let b = g.bregman_distance(&y, &x).unwrap();
        assert!((a - b).abs() > 1e-3);
    }

    #[test]
    fn hilbert_forces_unit_constants() {
        assert!(SpaceGeometry::new(2, 2.0, None, None, Some(0.5), None).is_err());
        let g = SpaceGeometry::new(2, 2.0, None, Some(vec![1.0, 1.0]), Some(1.0), Some(1.0)).unwrap();
        assert_eq!((g.cp(), g.gq()), (1.0, 1.0));
        assert!(g.is_hilbert());
    }

    #[test]
    fn gauge_below_max_r_two_is_rejected() {
        assert!(SpaceGeometry::new(2, 3.0, Some(2.5), None, None, None).is_err());
        assert!(SpaceGeometry::new(2, 1.5, Some(1.8), None, Some(1.0), Some(1.0)).is_err());
        assert!(SpaceGeometry::new(2, 2.5, None, None, None, None).is_err()); // no preset
        assert!(SpaceGeometry::new(2, 2.5, None, None, Some(0.3), Some(2.0)).is_ok());
    }

    #[test]
    fn q_is_conjugate() {
        for r in [1.5, 2.0, 3.0, 4.0] {
            let g = SpaceGeometry::lp(2, r).unwrap();
            assert_abs_diff_eq!(1.0 / g.p() + 1.0 / g.q(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn shipped_constants_certify() {
        for r in [1.5, 2.0, 3.0, 4.0] {
            let g = SpaceGeometry::lp(4, r).unwrap();
            let cert = g.certify_constants(10_000, 7);
            assert!(cert.passed(), "r = {r}: {cert:?}");
        }
    }

    #[test]
    fn inflated_constant_is_rejected() {
        let g = SpaceGeometry::new(4, 3.0, None, None, Some(0.9), None).unwrap();
        assert!(g.certify_constants(10_000, 1).cp_violations > 0);
    }

    #[test]
    fn weighted_duality_round_trip() {
        let g = SpaceGeometry::new(3, 3.0, Some(4.0), Some(vec![0.5, 2.0, 1.5]), Some(0.1), Some(5.0)).unwrap();
        let x = pv(&[0.7, -1.3, 0.01]);
        let back = g.inverse_duality_map(&g.duality_map(&x).unwrap()).unwrap();
        for (a, b) in back.iter().zip(x.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-13);
        }
    }

    #[test]
    fn data_duality_selection() {
        let y = DataSpace::new(3.0).unwrap();
        let v = [1.0, -2.0];
        let j = y.duality_map(&v, 2.0);
        let n = y.norm(&v);
        // ⟨j, v⟩ = ‖v‖^p
        assert_abs_diff_eq!(dot(&j, &v), n * n, epsilon = 1e-12);
        assert_eq!(DataSpace::default().duality_map(&v, 2.0).as_slice(), &v);
    }

    fn vec_strategy(dim: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-10.0..10.0f64, dim)
    }

    proptest! {
        #[test]
        fn duality_is_homogeneous(x in vec_strategy(4), lambda in 0.01..20.0f64, ri in 0usize..4) {
            let r = [1.5, 2.0, 3.0, 4.0][ri];
            let g = SpaceGeometry::lp(4, r).unwrap();
            let jx = g.duality_of(&x);
            let scaled: Vec<f64> = x.iter().map(|v| lambda * v).collect();
            let jl = g.duality_of(&scaled);
            let factor = lambda.powf(g.p() - 1.0);
            for (a, b) in jl.iter().zip(&jx) {
                prop_assert!((a - factor * b).abs() <= 1e-10 * (1.0 + (factor * b).abs()));
            }
        }

        #[test]
        fn bregman_forms_agree(x in vec_strategy(4), y in vec_strategy(4), ri in 0usize..4) {
            let r = [1.5, 2.0, 3.0, 4.0][ri];
            let g = SpaceGeometry::lp(4, r).unwrap();
            let (p, q) = (g.p(), g.q());
            let j = g.duality_of(&x);
            // ‖x̃‖^p/p + ‖x‖^p/q − ⟨J_p(x), x̃⟩
            let alt = g.norm_of(&y).powf(p) / p + g.norm_of(&x).powf(p) / q - dot(&j, &y);
            let d = g.bregman_of(&x, &y);
            prop_assert!(d >= 0.0);
            prop_assert!((d - alt.max(0.0)).abs() <= 1e-12 * (1.0 + g.norm_of(&x).powf(p) + g.norm_of(&y).powf(p)));
        }

        #[test]
        fn bregman_is_continuous(x in vec_strategy(3), y in vec_strategy(3), h in vec_strategy(3)) {
            let g = SpaceGeometry::lp(3, 3.0).unwrap();
            let delta = 1e-7;
            let xp: Vec<f64> = x.iter().zip(&h).map(|(a, b)| a + delta * b).collect();
            let d0 = g.bregman_of(&x, &y);
            prop_assert!((g.bregman_of(&xp, &y) - d0).abs() < 1e-3);
            prop_assert!((g.bregman_of(&x, &xp) - g.bregman_of(&x, &x)).abs() < 1e-3);
        }
    }
}
