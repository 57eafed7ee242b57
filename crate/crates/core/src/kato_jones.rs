//! The four-parameter Kato-Jones circular distribution.
//!
//! ```text
//! g(θ; μ, γ, ρ, λ) = 1/(2π) · { 1 + 2γ (cos(θ−μ) − ρ cos λ) / (1 + ρ² − 2ρ cos(θ−μ−λ)) }
//! ```
//!
//! `μ` is the mean direction, `γ` the mean resultant length, and `(ρ, λ)` control
//! skewness and kurtosis. For fixed `(ρ, λ)` the admissible `γ` is bounded above by
//! `γ̄(ρ, λ) = (1 − ρ²) / (2(1 − ρ cos λ))`.

use std::f64::consts::TAU;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::angle::Angle;
use crate::error::{Error, Result};
use crate::numeric::argmax_on_circle;

/// Largest concentration `ρ` accepted anywhere; keeps clear of the wrapped-Cauchy spike at 1.
pub const RHO_MAX: f64 = 1.0 - 1e-9;

/// Relative slack allowed on the `γ ≤ γ̄` constraint.
const GAMMA_SLACK: f64 = 1e-12;

/// Complex trigonometric moment `E[e^{ipΘ}]`.
pub type ComplexMoment = Complex64;

/// Clamps `ρ` to `[0, RHO_MAX]`.
#[inline]
pub fn clamp_rho(rho: f64) -> f64 {
    rho.clamp(0.0, RHO_MAX)
}

/// Upper bound of `γ` for given `(ρ, λ)`.
pub fn gamma_bar(rho: f64, lambda: Angle) -> Result<f64> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::Domain(format!("rho = {rho} outside [0, 1)")));
    }
    Ok(gamma_bar_unchecked(rho, lambda.radians()))
}

#[inline]
pub(crate) fn gamma_bar_unchecked(rho: f64, lambda: f64) -> f64 {
    (1.0 - rho * rho) / (2.0 * (1.0 - rho * lambda.cos()))
}

/// Parameters `(μ, γ, ρ, λ)` of one Kato-Jones component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KatoJonesParams {
    pub mu: Angle,
    pub gamma: f64,
    pub rho: f64,
    pub lambda: Angle,
}

impl KatoJonesParams {
    /// Builds a validated component. `ρ` within `1e-9` of 1 is clamped to [`RHO_MAX`].
    pub fn new(mu: f64, gamma: f64, rho: f64, lambda: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::Domain(format!("rho = {rho} outside [0, 1)")));
        }
        let p = KatoJonesParams {
            mu: Angle::new(mu),
            gamma,
            rho: clamp_rho(rho),
            lambda: Angle::new(lambda),
        };
        p.validate()?;
        Ok(p)
    }

    /// Component with `γ` at its upper bound `γ̄(ρ, λ)`.
    pub fn at_gamma_bar(mu: Angle, rho: f64, lambda: Angle) -> Self {
        let rho = clamp_rho(rho);
        KatoJonesParams {
            mu,
            gamma: gamma_bar_unchecked(rho, lambda.radians()),
            rho,
            lambda,
        }
    }

    pub fn gamma_bar(&self) -> f64 {
        gamma_bar_unchecked(self.rho, self.lambda.radians())
    }

    /// Checks `0 ≤ γ < 1`, `0 ≤ ρ < 1` and `(ρ cos λ − γ)² + (ρ sin λ)² ≤ (1 − γ)²`.
    pub fn validate(&self) -> Result<()> {
        if !self.gamma.is_finite() || !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Domain(format!(
                "gamma = {} outside [0, 1)",
                self.gamma
            )));
        }
        if !self.rho.is_finite() || !(0.0..1.0).contains(&self.rho) {
            return Err(Error::Domain(format!("rho = {} outside [0, 1)", self.rho)));
        }
        let bound = self.gamma_bar();
        if self.gamma > bound * (1.0 + GAMMA_SLACK) {
            return Err(Error::Domain(format!(
                "gamma = {} exceeds its upper bound {} for rho = {}, lambda = {}",
                self.gamma, bound, self.rho, self.lambda
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn density(&self, theta: Angle) -> f64 {
        kj_density_raw(
            theta.radians(),
            self.mu.radians(),
            self.gamma,
            self.rho,
            self.lambda.radians(),
        )
    }

    pub fn trig_moment(&self, p: u32) -> ComplexMoment {
        kj_trig_moment(p, self)
    }

    pub fn to_shape(&self) -> ShapeParams {
        shape_from_params(self)
    }

    pub fn mode(&self) -> Result<Angle> {
        kj_mode(self)
    }
}

/// Density evaluated on raw radians; no validation.
#[inline]
pub(crate) fn kj_density_raw(theta: f64, mu: f64, gamma: f64, rho: f64, lambda: f64) -> f64 {
    let d = theta - mu;
    let num = d.cos() - rho * lambda.cos();
    let den = 1.0 + rho * rho - 2.0 * rho * (d - lambda).cos();
    (1.0 + 2.0 * gamma * num / den) / TAU
}

pub fn kj_density(theta: Angle, p: &KatoJonesParams) -> f64 {
    p.density(theta)
}

/// `E[e^{ipΘ}] = γ ρ^{p−1} e^{i(pμ + (p−1)λ)}` for `p ≥ 1`.
pub fn kj_trig_moment(p: u32, comp: &KatoJonesParams) -> ComplexMoment {
    assert!(p >= 1, "trigonometric moment order must be >= 1");
    let pf = p as f64;
    let modulus = comp.gamma * comp.rho.powi(p as i32 - 1);
    let arg = pf * comp.mu.radians() + (pf - 1.0) * comp.lambda.radians();
    Complex64::from_polar(modulus, arg)
}

/// Mode of the component: 8192-point grid argmax refined by golden section.
pub fn kj_mode(comp: &KatoJonesParams) -> Result<Angle> {
    if comp.gamma <= 0.0 {
        return Err(Error::NoUniqueMode);
    }
    let (mu, rho, lambda) = (comp.mu.radians(), comp.rho, comp.lambda.radians());
    // the argmax does not depend on γ > 0
    let shape = |t: f64| {
        let d = t - mu;
        (d.cos() - rho * lambda.cos()) / (1.0 + rho * rho - 2.0 * rho * (d - lambda).cos())
    };
    let (theta, _) = argmax_on_circle(shape, MODE_GRID, 1e-10);
    Ok(Angle::new(theta))
}

pub(crate) const MODE_GRID: usize = 8192;

/// Location, concentration, and the circular kurtosis/skewness `(ᾱ₂, β̄₂) = ργ(cos λ, sin λ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShapeParams {
    pub mu: Angle,
    pub gamma: f64,
    pub alpha_bar2: f64,
    pub beta_bar2: f64,
}

impl ShapeParams {
    /// Density in the skewness/kurtosis form.
    pub fn density(&self, theta: Angle) -> f64 {
        let g = self.gamma;
        if g == 0.0 {
            return 1.0 / TAU;
        }
        let d = theta.radians() - self.mu.radians();
        let (s, c) = d.sin_cos();
        let (a, b) = (self.alpha_bar2, self.beta_bar2);
        let num = g * c - a;
        let den = g * g + a * a + b * b - 2.0 * g * (a * c + b * s);
        (1.0 + 2.0 * g * g * num / den) / TAU
    }
}

pub fn shape_from_params(p: &KatoJonesParams) -> ShapeParams {
    let (s, c) = p.lambda.radians().sin_cos();
    ShapeParams {
        mu: p.mu,
        gamma: p.gamma,
        alpha_bar2: p.rho * p.gamma * c,
        beta_bar2: p.rho * p.gamma * s,
    }
}

pub fn params_from_shape(s: &ShapeParams) -> Result<KatoJonesParams> {
    let r = s.alpha_bar2.hypot(s.beta_bar2);
    if !(r < s.gamma) {
        return Err(Error::Domain(format!(
            "sqrt(alpha^2 + beta^2) = {r} must be below gamma = {}",
            s.gamma
        )));
    }
    let rho = r / s.gamma;
    let lambda = s.beta_bar2.atan2(s.alpha_bar2);
    KatoJonesParams::new(s.mu.radians(), s.gamma, rho, lambda)
}
