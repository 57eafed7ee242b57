//! Maximum likelihood for the reparametrized mixture via EM.
//!
//! Each iteration computes responsibilities, updates the weights in closed form, then
//! maximizes the responsibility-weighted log-likelihood of every Kato-Jones component
//! numerically over `(μ, ρ, λ)` with `γ` held at `γ̄(ρ, λ)`.

use std::f64::consts::TAU;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angle::Angle;
use crate::error::{Error, Result};
use crate::kato_jones::gamma_bar_unchecked;
use crate::mixture::{ReparamComponent, ReparamMixture};
use crate::optimize::{
    component_from_unconstrained, component_to_unconstrained, minimize, GradientMode,
    OptimizeConfig, UnconstrainedVector,
};

/// Density floor used inside logarithms and denominators.
const DENSITY_FLOOR: f64 = 1e-300;

/// Components whose responsibility mass falls below this are considered dead.
pub const DEAD_MASS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmConfig {
    /// M-step termination on the change of its objective.
    pub inner_tol: f64,
    pub inner_max_iter: usize,
    /// Log-likelihood change that ends the outer loop; `None` means `n × 1e-6`.
    pub outer_tol: Option<f64>,
    pub max_outer: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        EmConfig {
            inner_tol: 1e-6,
            inner_max_iter: 500,
            outer_tol: None,
            max_outer: 200,
        }
    }
}

impl EmConfig {
    pub fn outer_tol_for(&self, n: usize) -> f64 {
        self.outer_tol.unwrap_or(n as f64 * 1e-6)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.inner_tol > 0.0) || self.outer_tol.is_some_and(|t| !(t > 0.0)) {
            return Err(Error::Config("EM tolerances must be positive".into()));
        }
        if self.max_outer == 0 || self.inner_max_iter == 0 {
            return Err(Error::Config("EM iteration caps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Cosines and sines of a sample, computed once.
#[derive(Debug, Clone)]
pub(crate) struct PolarSample {
    pub cos: Vec<f64>,
    pub sin: Vec<f64>,
}

impl PolarSample {
    pub fn new(sample: &[Angle]) -> Self {
        let (sin, cos) = sample.iter().map(|t| t.radians().sin_cos()).unzip();
        PolarSample { cos, sin }
    }

    pub fn len(&self) -> usize {
        self.cos.len()
    }
}

/// Component density at `γ̄` with trigonometric constants hoisted out of the sample loop.
#[derive(Debug, Clone, Copy)]
pub(crate) struct FastComponent {
    cos_mu: f64,
    sin_mu: f64,
    cos_ml: f64,
    sin_ml: f64,
    two_rho: f64,
    one_plus_rho2: f64,
    rho_cos_lambda: f64,
    two_gamma: f64,
}

impl FastComponent {
    pub fn new(c: &ReparamComponent) -> Self {
        let (mu, lambda, rho) = (c.mu.radians(), c.lambda.radians(), c.rho);
        FastComponent {
            cos_mu: mu.cos(),
            sin_mu: mu.sin(),
            cos_ml: (mu + lambda).cos(),
            sin_ml: (mu + lambda).sin(),
            two_rho: 2.0 * rho,
            one_plus_rho2: 1.0 + rho * rho,
            rho_cos_lambda: rho * lambda.cos(),
            two_gamma: 2.0 * gamma_bar_unchecked(rho, lambda),
        }
    }

    #[inline]
    pub fn density(&self, c: f64, s: f64) -> f64 {
        let d1 = c * self.cos_mu + s * self.sin_mu;
        let d2 = c * self.cos_ml + s * self.sin_ml;
        (1.0 + self.two_gamma * (d1 - self.rho_cos_lambda)
            / (self.one_plus_rho2 - self.two_rho * d2))
            / TAU
    }
}

/// Responsibilities `w_{kj}` of the Kato-Jones components, stored row-major (`k` rows of
/// length `n`). The uniform component's share is `1 − Σ_k w_{kj}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    m: usize,
    n: usize,
    data: Vec<f64>,
}

impl Responsibilities {
    pub fn new(m: usize, n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != m * n {
            return Err(Error::DimensionMismatch {
                expected: m * n,
                got: data.len(),
            });
        }
        Ok(Responsibilities { m, n, data })
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn row(&self, k: usize) -> &[f64] {
        &self.data[k * self.n..(k + 1) * self.n]
    }

    pub fn get(&self, k: usize, j: usize) -> f64 {
        self.data[k * self.n + j]
    }

    pub fn uniform_share(&self, j: usize) -> f64 {
        1.0 - (0..self.m).map(|k| self.get(k, j)).sum::<f64>()
    }
}

fn mixture_density_polar(comps: &[FastComponent], weights: &[f64], c: f64, s: f64) -> f64 {
    let m = comps.len();
    let kj: f64 = comps
        .iter()
        .zip(weights)
        .map(|(f, w)| w * f.density(c, s))
        .sum();
    kj + weights[m] / TAU
}

/// `ℓ(Ψ) = Σ_j log f(θ_j)`.
pub fn log_likelihood(sample: &[Angle], m: &ReparamMixture) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let polar = PolarSample::new(sample);
    log_likelihood_polar(&polar, m)
}

pub(crate) fn log_likelihood_polar(polar: &PolarSample, m: &ReparamMixture) -> Result<f64> {
    let comps: Vec<FastComponent> = m.components().iter().map(FastComponent::new).collect();
    let w = m.weights();
    let mut total = 0.0;
    for (&c, &s) in polar.cos.iter().zip(&polar.sin) {
        let d = mixture_density_polar(&comps, w, c, s);
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::NonFinite {
                value: d.ln(),
                point: vec![s.atan2(c)],
            });
        }
        total += d.ln();
    }
    Ok(total)
}

pub fn e_step(sample: &[Angle], m: &ReparamMixture) -> Responsibilities {
    e_step_polar(&PolarSample::new(sample), m)
}

pub(crate) fn e_step_polar(polar: &PolarSample, m: &ReparamMixture) -> Responsibilities {
    let k = m.m();
    let n = polar.len();
    let comps: Vec<FastComponent> = m.components().iter().map(FastComponent::new).collect();
    let w = m.weights();
    let uniform = w[k] / TAU;
    let mut data = vec![0.0; k * n];
    let mut vals = vec![0.0; k];
    for j in 0..n {
        let (c, s) = (polar.cos[j], polar.sin[j]);
        let mut den = uniform;
        for h in 0..k {
            vals[h] = w[h] * comps[h].density(c, s);
            den += vals[h];
        }
        let den = den.max(DENSITY_FLOOR);
        for h in 0..k {
            data[h * n + j] = vals[h] / den;
        }
    }
    Responsibilities { m: k, n, data }
}

/// Closed-form weight update: row means, with the remainder on the uniform component.
pub fn m_step_weights(resp: &Responsibilities) -> Vec<f64> {
    let n = resp.n as f64;
    let mut w: Vec<f64> = (0..resp.m)
        .map(|k| resp.row(k).iter().sum::<f64>() / n)
        .collect();
    let used: f64 = w.iter().sum();
    w.push((1.0 - used).max(0.0));
    w
}

/// Negative responsibility-weighted log-likelihood of one component as a function of
/// its unconstrained coordinates.
fn component_objective<'a>(polar: &'a PolarSample, row: &'a [f64]) -> impl Fn(&[f64]) -> f64 + 'a {
    move |x: &[f64]| {
        let f = FastComponent::new(&component_from_unconstrained(x));
        let mut total = 0.0;
        for ((&w, &c), &s) in row.iter().zip(&polar.cos).zip(&polar.sin) {
            if w > 0.0 {
                total += w * f.density(c, s).max(DENSITY_FLOOR).ln();
            }
        }
        -total
    }
}

/// Weighted maximum likelihood for one component starting from `init`.
pub fn m_step_component(
    sample: &[Angle],
    resp_row: &[f64],
    init: &ReparamComponent,
    cfg: &EmConfig,
) -> Result<ReparamComponent> {
    if resp_row.len() != sample.len() {
        return Err(Error::DimensionMismatch {
            expected: sample.len(),
            got: resp_row.len(),
        });
    }
    m_step_component_polar(&PolarSample::new(sample), resp_row, init, cfg, 0, 0)
}

fn m_step_component_polar(
    polar: &PolarSample,
    row: &[f64],
    init: &ReparamComponent,
    cfg: &EmConfig,
    component: usize,
    iteration: usize,
) -> Result<ReparamComponent> {
    let mass: f64 = row.iter().sum();
    if !(mass >= DEAD_MASS) {
        return Err(Error::DeadComponent {
            component,
            iteration,
            mass,
        });
    }
    let objective = component_objective(polar, row);
    let opt = OptimizeConfig {
        tol: cfg.inner_tol,
        max_iter: cfg.inner_max_iter,
        gradient: GradientMode::CentralDifference { rel_step: 1e-6 },
    };
    let start = UnconstrainedVector(component_to_unconstrained(init).to_vec());
    let min = minimize(&objective, &start, &opt)?;
    Ok(component_from_unconstrained(min.point.as_slice()))
}

/// Weighted log-likelihood `Σ_j w_j log g(θ_j)` of one component (for diagnostics and tests).
pub fn weighted_component_loglik(sample: &[Angle], row: &[f64], comp: &ReparamComponent) -> f64 {
    let polar = PolarSample::new(sample);
    let objective = component_objective(&polar, row);
    -objective(&component_to_unconstrained(comp))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmFit {
    /// Estimate with components sorted by ascending `μ`.
    pub mixture: ReparamMixture,
    /// Log-likelihood at the initial value followed by one entry per iteration.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl EmFit {
    pub fn loglik(&self) -> f64 {
        *self.trace.last().expect("trace holds the initial value")
    }
}

/// Runs EM from `init` until the log-likelihood changes by less than the outer tolerance.
pub fn em_fit(sample: &[Angle], init: &ReparamMixture, cfg: &EmConfig) -> Result<EmFit> {
    cfg.validate()?;
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    init.validate()?;
    let polar = PolarSample::new(sample);
    let tol = cfg.outer_tol_for(sample.len());
    let mut current = init.clone();
    let mut trace = vec![log_likelihood_polar(&polar, &current)?];
    let mut converged = false;
    let mut iterations = 0;

    for iteration in 1..=cfg.max_outer {
        let resp = e_step_polar(&polar, &current);
        let weights = m_step_weights(&resp);
        let comps = current
            .components()
            .par_iter()
            .enumerate()
            .map(|(k, c)| m_step_component_polar(&polar, resp.row(k), c, cfg, k, iteration))
            .collect::<Result<Vec<_>>>()?;
        current.replace_weights(weights);
        current.replace_components(comps);
        iterations = iteration;

        let ll = log_likelihood_polar(&polar, &current)?;
        let change = ll - trace.last().unwrap();
        trace.push(ll);
        if change.abs() < tol {
            converged = true;
            break;
        }
    }
    current.canonicalize();
    current.validate()?;
    Ok(EmFit {
        mixture: current,
        trace,
        iterations,
        converged,
    })
}

/// Free parameters of an `m`-component reparametrized mixture.
pub fn free_parameters(m: usize) -> usize {
    4 * m
}

pub fn aic(loglik: f64, m: usize) -> f64 {
    -2.0 * loglik + 2.0 * free_parameters(m) as f64
}

pub fn bic(loglik: f64, m: usize, n: usize) -> f64 {
    -2.0 * loglik + free_parameters(m) as f64 * (n as f64).ln()
}
