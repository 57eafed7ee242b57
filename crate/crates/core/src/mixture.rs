//! Kato-Jones mixtures in their original and identifiable parametrizations.
//!
//! The original form weights `m` components with their own `γ_k`. Because `π_k` and
//! `γ_k` enter the density only through `π_k γ_k / γ̄_k`, fitting happens in the
//! reparametrized form: each component sits at `γ = γ̄(ρ, λ)` and an extra uniform
//! component with weight `π'_{m+1}` absorbs the remaining mass.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::angle::Angle;
use crate::error::{Error, Result};
use crate::kato_jones::{
    clamp_rho, gamma_bar_unchecked, kj_density_raw, ComplexMoment, KatoJonesParams, ShapeParams,
};

/// Weights must sum to one within this tolerance on input; they are renormalized on construction.
const SIMPLEX_INPUT_TOL: f64 = 1e-9;

/// One component of the reparametrized mixture; `γ` is implicit at `γ̄(ρ, λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReparamComponent {
    pub mu: Angle,
    pub rho: f64,
    pub lambda: Angle,
}

impl ReparamComponent {
    pub fn new(mu: f64, rho: f64, lambda: f64) -> Result<Self> {
        if !rho.is_finite() || !(0.0..1.0).contains(&rho) {
            return Err(Error::Domain(format!("rho = {rho} outside [0, 1)")));
        }
        Ok(ReparamComponent {
            mu: Angle::new(mu),
            rho: clamp_rho(rho),
            lambda: Angle::new(lambda),
        })
    }

    #[inline]
    pub fn gamma_bar(&self) -> f64 {
        gamma_bar_unchecked(self.rho, self.lambda.radians())
    }

    /// The component as a full Kato-Jones parameter set at `γ = γ̄`.
    pub fn kato_jones(&self) -> KatoJonesParams {
        KatoJonesParams::at_gamma_bar(self.mu, self.rho, self.lambda)
    }

    #[inline]
    pub fn density(&self, theta: Angle) -> f64 {
        kj_density_raw(
            theta.radians(),
            self.mu.radians(),
            self.gamma_bar(),
            self.rho,
            self.lambda.radians(),
        )
    }
}

fn check_simplex(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidWeights(format!(
            "negative or non-finite weight in {weights:?}"
        )));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_INPUT_TOL {
        return Err(Error::InvalidWeights(format!(
            "weights sum to {sum}, not 1"
        )));
    }
    // leave sums already within the stored invariant untouched so that serialization roundtrips
    if (sum - 1.0).abs() <= 1e-12 {
        return Ok(weights.to_vec());
    }
    Ok(weights.iter().map(|w| w / sum).collect())
}

/// Mixture of `m` Kato-Jones components at `γ̄` plus a uniform component.
///
/// `weights` has length `m + 1`; the last entry is the uniform weight `π'_{m+1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawReparam")]
pub struct ReparamMixture {
    components: Vec<ReparamComponent>,
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct RawReparam {
    components: Vec<ReparamComponent>,
    weights: Vec<f64>,
}

impl TryFrom<RawReparam> for ReparamMixture {
    type Error = Error;

    fn try_from(raw: RawReparam) -> Result<Self> {
        let comps = raw
            .components
            .iter()
            .map(|c| ReparamComponent::new(c.mu.radians(), c.rho, c.lambda.radians()))
            .collect::<Result<Vec<_>>>()?;
        ReparamMixture::new(comps, raw.weights)
    }
}

impl ReparamMixture {
    pub fn new(components: Vec<ReparamComponent>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Domain("mixture needs at least one component".into()));
        }
        if weights.len() != components.len() + 1 {
            return Err(Error::DimensionMismatch {
                expected: components.len() + 1,
                got: weights.len(),
            });
        }
        let weights = check_simplex(&weights)?;
        Ok(ReparamMixture {
            components,
            weights,
        })
    }

    /// Like [`ReparamMixture::new`] but accepts any non-negative weights with positive sum.
    pub fn from_unnormalized(components: Vec<ReparamComponent>, weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || !sum.is_finite() {
            return Err(Error::InvalidWeights(format!("weights sum to {sum}")));
        }
        Self::new(components, weights.iter().map(|w| w / sum).collect())
    }

    /// Builds a mixture from parallel `(μ, ρ, λ)` slices and `m + 1` weights.
    pub fn from_parts(mu: &[f64], rho: &[f64], lambda: &[f64], weights: &[f64]) -> Result<Self> {
        if mu.len() != rho.len() || mu.len() != lambda.len() {
            return Err(Error::DimensionMismatch {
                expected: mu.len(),
                got: rho.len().min(lambda.len()),
            });
        }
        let comps = mu
            .iter()
            .zip(rho)
            .zip(lambda)
            .map(|((&m, &r), &l)| ReparamComponent::new(m, r, l))
            .collect::<Result<Vec<_>>>()?;
        Self::new(comps, weights.to_vec())
    }

    /// Pure uniform distribution carried by `m` placeholder components of zero weight.
    pub fn uniform(m: usize) -> Self {
        let comps = vec![
            ReparamComponent {
                mu: Angle::ZERO,
                rho: 0.0,
                lambda: Angle::ZERO
            };
            m.max(1)
        ];
        let mut weights = vec![0.0; m.max(1) + 1];
        *weights.last_mut().unwrap() = 1.0;
        ReparamMixture {
            components: comps,
            weights,
        }
    }

    /// Number of Kato-Jones components `m`.
    pub fn m(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[ReparamComponent] {
        &self.components
    }

    /// All `m + 1` weights.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn uniform_weight(&self) -> f64 {
        self.weights[self.m()]
    }

    pub fn density(&self, theta: Angle) -> f64 {
        mixture_density_reparam(theta, self)
    }

    /// `π'_k g_k(θ)` for `k < m`, or the uniform share `π'_{m+1}/(2π)` for `k = m`.
    pub fn weighted_component_density(&self, theta: Angle, k: usize) -> f64 {
        if k == self.m() {
            self.uniform_weight() / TAU
        } else {
            self.weights[k] * self.components[k].density(theta)
        }
    }

    pub fn trig_moment(&self, p: u32) -> ComplexMoment {
        mixture_trig_moment(p, self)
    }

    /// Reorders components by ascending `μ`, carrying their weights along.
    pub fn canonicalize(&mut self) {
        let m = self.m();
        let mut idx: Vec<usize> = (0..m).collect();
        idx.sort_by(|&a, &b| {
            self.components[a]
                .mu
                .radians()
                .total_cmp(&self.components[b].mu.radians())
        });
        let comps = idx.iter().map(|&i| self.components[i]).collect();
        let mut weights: Vec<f64> = idx.iter().map(|&i| self.weights[i]).collect();
        weights.push(self.weights[m]);
        self.components = comps;
        self.weights = weights;
    }

    pub fn canonicalized(mut self) -> Self {
        self.canonicalize();
        self
    }

    /// Checks all invariants; used on estimator outputs.
    pub fn validate(&self) -> Result<()> {
        for c in &self.components {
            if !(0.0..1.0).contains(&c.rho) {
                return Err(Error::Domain(format!("rho = {} outside [0, 1)", c.rho)));
            }
        }
        let sum: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|w| *w < 0.0) || (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidWeights(format!("{:?}", self.weights)));
        }
        Ok(())
    }

    pub(crate) fn replace_components(&mut self, comps: Vec<ReparamComponent>) {
        debug_assert_eq!(comps.len(), self.m());
        self.components = comps;
    }

    pub(crate) fn replace_weights(&mut self, weights: Vec<f64>) {
        debug_assert_eq!(weights.len(), self.m() + 1);
        self.weights = weights;
    }
}

/// Mixture of `m` Kato-Jones components with weights `π_1..π_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawOriginal")]
pub struct OriginalMixture {
    components: Vec<KatoJonesParams>,
    weights: Vec<f64>,
}

#[derive(Deserialize)]
struct RawOriginal {
    components: Vec<KatoJonesParams>,
    weights: Vec<f64>,
}

impl TryFrom<RawOriginal> for OriginalMixture {
    type Error = Error;

    fn try_from(raw: RawOriginal) -> Result<Self> {
        OriginalMixture::new(raw.components, raw.weights)
    }
}

impl OriginalMixture {
    pub fn new(components: Vec<KatoJonesParams>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Domain("mixture needs at least one component".into()));
        }
        if weights.len() != components.len() {
            return Err(Error::DimensionMismatch {
                expected: components.len(),
                got: weights.len(),
            });
        }
        for c in &components {
            c.validate()?;
        }
        let weights = check_simplex(&weights)?;
        Ok(OriginalMixture {
            components,
            weights,
        })
    }

    pub fn m(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[KatoJonesParams] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn density(&self, theta: Angle) -> f64 {
        mixture_density_original(theta, self)
    }

    pub fn shape_params(&self) -> Vec<ShapeParams> {
        self.components.iter().map(|c| c.to_shape()).collect()
    }
}

pub fn mixture_density_original(theta: Angle, m: &OriginalMixture) -> f64 {
    m.components
        .iter()
        .zip(&m.weights)
        .map(|(c, w)| w * c.density(theta))
        .sum()
}

pub fn mixture_density_reparam(theta: Angle, m: &ReparamMixture) -> f64 {
    let kj: f64 = m
        .components
        .iter()
        .zip(&m.weights)
        .map(|(c, w)| w * c.density(theta))
        .sum();
    kj + m.uniform_weight() / TAU
}

/// Density of a mixture given in skewness/kurtosis form.
pub fn shape_density(theta: Angle, mix: &[(ShapeParams, f64)]) -> Result<f64> {
    let weights: Vec<f64> = mix.iter().map(|(_, w)| *w).collect();
    if mix.is_empty() {
        return Err(Error::InvalidWeights("empty mixture".into()));
    }
    check_simplex(&weights)?;
    Ok(mix.iter().map(|(s, w)| w * s.density(theta)).sum())
}

/// `π'_k = π_k γ_k / γ̄_k`, `π'_{m+1} = 1 − Σ π'_k`.
pub fn to_reparam(m: &OriginalMixture) -> ReparamMixture {
    let comps: Vec<ReparamComponent> = m
        .components
        .iter()
        .map(|c| ReparamComponent {
            mu: c.mu,
            rho: c.rho,
            lambda: c.lambda,
        })
        .collect();
    let mut weights: Vec<f64> = m
        .components
        .iter()
        .zip(&m.weights)
        .map(|(c, w)| (w * c.gamma / c.gamma_bar()).min(*w))
        .collect();
    let used: f64 = weights.iter().sum();
    weights.push((1.0 - used).max(0.0));
    ReparamMixture {
        components: comps,
        weights,
    }
}

/// Spreads the uniform weight back over the components:
/// `π_k = π'_k / (1 − π'_{m+1})`, `γ_k = π'_k γ̄_k / π_k`.
pub fn recover_original(m: &ReparamMixture) -> Result<OriginalMixture> {
    let kept = 1.0 - m.uniform_weight();
    if !(kept > 0.0) {
        return Err(Error::Degenerate(
            "uniform weight is 1; no component to recover".into(),
        ));
    }
    let weights: Vec<f64> = m.weights[..m.m()].iter().map(|w| w / kept).collect();
    let components = m
        .components
        .iter()
        .map(|c| KatoJonesParams {
            mu: c.mu,
            // π'_k γ̄_k / π_k collapses to (1 − π'_{m+1}) γ̄_k
            gamma: kept * c.gamma_bar(),
            rho: c.rho,
            lambda: c.lambda,
        })
        .collect();
    Ok(OriginalMixture {
        components,
        weights,
    })
}

/// `Σ π'_k γ̄_k ρ_k^{p−1} e^{i(pμ_k + (p−1)λ_k)}`; the uniform part contributes nothing.
pub fn mixture_trig_moment(p: u32, m: &ReparamMixture) -> ComplexMoment {
    assert!(p >= 1, "trigonometric moment order must be >= 1");
    let pf = p as f64;
    m.components
        .iter()
        .zip(&m.weights)
        .map(|(c, w)| {
            let modulus = w * c.gamma_bar() * c.rho.powi(p as i32 - 1);
            Complex64::from_polar(
                modulus,
                pf * c.mu.radians() + (pf - 1.0) * c.lambda.radians(),
            )
        })
        .sum()
}
