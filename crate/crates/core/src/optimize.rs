//! Smooth minimization over the mixture parameter space.
//!
//! The feasible set (ρ in `[0, 1)`, weights on the simplex, angles on the circle) is
//! mapped bijectively onto `R^d`, so a plain quasi-Newton method suffices:
//!
//! * angles are carried as unbounded reals and wrapped on the way back,
//! * `ρ = logistic(u)`, clamped to [`RHO_MAX`],
//! * weights are a softmax over `m + 1` logits with the last one pinned at 0.

use serde::{Deserialize, Serialize};

use crate::angle::Angle;
use crate::error::{Error, Result};
use crate::kato_jones::RHO_MAX;
use crate::mixture::{ReparamComponent, ReparamMixture};

const RHO_FLOOR: f64 = 1e-12;
const WEIGHT_FLOOR: f64 = 1e-16;

/// Coordinates in the unconstrained space.
///
/// For a mixture of `m` components the layout is
/// `[μ_1..μ_m, logit ρ_1..ρ_m, λ_1..λ_m, ℓ_1..ℓ_m]` where `ℓ_k = ln π'_k − ln π'_{m+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnconstrainedVector(pub Vec<f64>);

impl UnconstrainedVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[inline]
fn logistic(u: f64) -> f64 {
    if u >= 0.0 {
        1.0 / (1.0 + (-u).exp())
    } else {
        let e = u.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[inline]
pub(crate) fn rho_to_coord(rho: f64) -> f64 {
    logit(rho.clamp(RHO_FLOOR, RHO_MAX))
}

#[inline]
pub(crate) fn rho_from_coord(u: f64) -> f64 {
    logistic(u).min(RHO_MAX)
}

pub fn to_unconstrained(m: &ReparamMixture) -> UnconstrainedVector {
    let k = m.m();
    let comps = m.components();
    let mut v = Vec::with_capacity(4 * k);
    v.extend(comps.iter().map(|c| c.mu.radians()));
    v.extend(comps.iter().map(|c| rho_to_coord(c.rho)));
    v.extend(comps.iter().map(|c| c.lambda.radians()));
    let last = m.uniform_weight().max(WEIGHT_FLOOR).ln();
    v.extend(
        m.weights()[..k]
            .iter()
            .map(|w| w.max(WEIGHT_FLOOR).ln() - last),
    );
    UnconstrainedVector(v)
}

/// Inverse of [`to_unconstrained`]; always yields a feasible mixture.
pub fn from_unconstrained(v: &UnconstrainedVector) -> ReparamMixture {
    let x = v.as_slice();
    assert!(
        !x.is_empty() && x.len().is_multiple_of(4),
        "coordinate length must be 4m"
    );
    let k = x.len() / 4;
    let comps: Vec<ReparamComponent> = (0..k)
        .map(|i| ReparamComponent {
            mu: Angle::new(x[i]),
            rho: rho_from_coord(x[k + i]),
            lambda: Angle::new(x[2 * k + i]),
        })
        .collect();
    let weights = softmax_pinned(&x[3 * k..]);
    ReparamMixture::new(comps, weights).expect("softmax image lies on the simplex")
}

/// Softmax over `logits ++ [0]`.
fn softmax_pinned(logits: &[f64]) -> Vec<f64> {
    let top = logits.iter().copied().fold(0.0, f64::max);
    let mut w: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    w.push((-top).exp());
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= s);
    w
}

/// `(μ, logit ρ, λ)` coordinates of a single component.
pub fn component_to_unconstrained(c: &ReparamComponent) -> [f64; 3] {
    [c.mu.radians(), rho_to_coord(c.rho), c.lambda.radians()]
}

pub fn component_from_unconstrained(x: &[f64]) -> ReparamComponent {
    ReparamComponent {
        mu: Angle::new(x[0]),
        rho: rho_from_coord(x[1]),
        lambda: Angle::new(x[2]),
    }
}

/// How the minimizer obtains gradients.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GradientMode {
    /// Central differences with step `rel_step · (1 + |x_i|)`.
    CentralDifference { rel_step: f64 },
    /// Use [`Objective::gradient`]; fails if the objective does not provide one.
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizeConfig {
    /// Stop once successive objective values differ by less than this.
    pub tol: f64,
    pub max_iter: usize,
    pub gradient: GradientMode,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            tol: 1e-10,
            max_iter: 500,
            gradient: GradientMode::CentralDifference { rel_step: 1e-6 },
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("max_iter must be at least 1".into()));
        }
        if let GradientMode::CentralDifference { rel_step } = self.gradient {
            if !(rel_step > 0.0) {
                return Err(Error::Config(format!(
                    "rel_step must be positive, got {rel_step}"
                )));
            }
        }
        Ok(())
    }
}

/// A smooth objective over unconstrained coordinates.
pub trait Objective {
    fn value(&self, x: &[f64]) -> f64;

    fn gradient(&self, _x: &[f64]) -> Option<Vec<f64>> {
        None
    }
}

impl<F: Fn(&[f64]) -> f64> Objective for F {
    fn value(&self, x: &[f64]) -> f64 {
        self(x)
    }
}

/// Pairs a value closure with an analytic gradient closure.
pub struct WithGradient<F, G> {
    pub value: F,
    pub gradient: G,
}

impl<F, G> Objective for WithGradient<F, G>
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64]) -> Vec<f64>,
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        Some((self.gradient)(x))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub point: UnconstrainedVector,
    pub value: f64,
    pub iterations: usize,
}

pub fn central_difference<O: Objective + ?Sized>(f: &O, x: &[f64], rel_step: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = rel_step * (1.0 + x[i].abs());
            probe[i] = x[i] + h;
            let up = f.value(&probe);
            probe[i] = x[i] - h;
            let down = f.value(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest relative discrepancy between the analytic gradient and central differences.
pub fn check_gradient<O: Objective + ?Sized>(f: &O, x: &[f64], rel_tol: f64) -> Result<f64> {
    let analytic = f
        .gradient(x)
        .ok_or_else(|| Error::Config("objective has no analytic gradient".into()))?;
    let numeric = central_difference(f, x, 1e-6);
    let worst = analytic
        .iter()
        .zip(&numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(1e-8))
        .fold(0.0, f64::max);
    if worst > rel_tol {
        return Err(Error::Config(format!(
            "analytic gradient disagrees with finite differences (relative error {worst:e})"
        )));
    }
    Ok(worst)
}

fn gradient_of<O: Objective + ?Sized>(f: &O, x: &[f64], mode: GradientMode) -> Result<Vec<f64>> {
    match mode {
        GradientMode::CentralDifference { rel_step } => Ok(central_difference(f, x, rel_step)),
        GradientMode::Analytic => f
            .gradient(x)
            .ok_or_else(|| Error::Config("analytic gradient requested but not provided".into())),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Backtracking Armijo search along `dir`. Returns the accepted point, its value, and the step length.
fn line_search<O: Objective + ?Sized>(
    f: &O,
    x: &[f64],
    fx: f64,
    slope: f64,
    dir: &[f64],
) -> Result<Option<(Vec<f64>, f64, f64)>> {
    const ARMIJO: f64 = 1e-4;
    let mut alpha = 1.0;
    let mut trial = vec![0.0; x.len()];
    for _ in 0..60 {
        for i in 0..x.len() {
            trial[i] = x[i] + alpha * dir[i];
        }
        let ft = f.value(&trial);
        if ft.is_nan() {
            return Err(Error::NonFinite {
                value: ft,
                point: trial,
            });
        }
        if ft <= fx + ARMIJO * alpha * slope && ft <= fx {
            return Ok(Some((trial, ft, alpha)));
        }
        alpha *= 0.5;
    }
    Ok(None)
}

/// BFGS with backtracking line search.
///
/// Accepted objective values never increase. Stops when successive values differ by less
/// than `cfg.tol`, when no descent step can be found, or after `cfg.max_iter` iterations.
pub fn minimize<O: Objective + ?Sized>(
    objective: &O,
    init: &UnconstrainedVector,
    cfg: &OptimizeConfig,
) -> Result<Minimum> {
    cfg.validate()?;
    let n = init.len();
    let mut x = init.0.clone();
    let mut fx = objective.value(&x);
    if !fx.is_finite() {
        return Err(Error::NonFinite {
            value: fx,
            point: x,
        });
    }
    let mut g = gradient_of(objective, &x, cfg.gradient)?;
    let mut h = identity(n);
    let mut fresh = true;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        let mut dir: Vec<f64> = mat_vec(&h, &g).iter().map(|v| -v).collect();
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            h = identity(n);
            fresh = true;
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
        }
        if fresh {
            // without curvature information the raw gradient can be arbitrarily long
            let norm = dot(&dir, &dir).sqrt();
            if norm > 1.0 {
                dir.iter_mut().for_each(|v| *v /= norm);
                slope /= norm;
            }
        }
        let step = match line_search(objective, &x, fx, slope, &dir)? {
            Some(s) => s,
            None if !fresh => {
                // stale curvature; retry once along steepest descent
                h = identity(n);
                fresh = true;
                continue;
            }
            None => break,
        };
        let (x_new, f_new, _) = step;
        let g_new = gradient_of(objective, &x_new, cfg.gradient)?;
        iterations += 1;

        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let change = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;

        if change.abs() < cfg.tol {
            break;
        }
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                let scale = sy / dot(&y, &y);
                h = identity(n);
                h.iter_mut()
                    .for_each(|row| row.iter_mut().for_each(|v| *v *= scale));
            }
            bfgs_update(&mut h, &s, &y, sy);
            fresh = false;
        }
    }

    Ok(Minimum {
        point: UnconstrainedVector(x),
        value: fx,
        iterations,
    })
}

/// A sum of squared residuals `f(x) = Σ r_i(x)²` with the Jacobian of `r`.
pub struct LeastSquares<R, J> {
    pub residuals: R,
    /// One row per residual.
    pub jacobian: J,
}

impl<R, J> Objective for LeastSquares<R, J>
where
    R: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> Vec<Vec<f64>>,
{
    fn value(&self, x: &[f64]) -> f64 {
        (self.residuals)(x).iter().map(|r| r * r).sum()
    }

    fn gradient(&self, x: &[f64]) -> Option<Vec<f64>> {
        let r = (self.residuals)(x);
        let jac = (self.jacobian)(x);
        Some(normal_rhs(&jac, &r).iter().map(|v| 2.0 * v).collect())
    }
}

/// `Jᵀ r`
fn normal_rhs(jac: &[Vec<f64>], r: &[f64]) -> Vec<f64> {
    let n = jac.first().map_or(0, Vec::len);
    (0..n)
        .map(|j| jac.iter().zip(r).map(|(row, ri)| row[j] * ri).sum())
        .collect()
}

/// Solves `a x = b` for symmetric positive definite `a`; `None` if the factorization breaks down.
fn solve_spd(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let s = a[i][j] - (0..j).map(|k| l[i][k] * l[j][k]).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        y[i] = (b[i] - (0..i).map(|k| l[i][k] * y[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        x[i] = (y[i] - (i + 1..n).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    Some(x)
}

/// Levenberg–Marquardt: damped Gauss–Newton steps with the same backtracking search and
/// stopping rule as [`minimize`]. Converges quadratically on zero-residual problems, where
/// BFGS tends to crawl. `cfg.gradient` is ignored; the Jacobian is always used.
pub fn minimize_least_squares<R, J>(
    problem: &LeastSquares<R, J>,
    init: &UnconstrainedVector,
    cfg: &OptimizeConfig,
) -> Result<Minimum>
where
    R: Fn(&[f64]) -> Vec<f64>,
    J: Fn(&[f64]) -> Vec<Vec<f64>>,
{
    cfg.validate()?;
    let n = init.len();
    let mut x = init.0.clone();
    let mut fx = problem.value(&x);
    if !fx.is_finite() {
        return Err(Error::NonFinite {
            value: fx,
            point: x,
        });
    }
    let mut damping: Option<f64> = None;
    let mut iterations = 0;

    'outer: while iterations < cfg.max_iter {
        let r = (problem.residuals)(&x);
        let jac = (problem.jacobian)(&x);
        let jtr = normal_rhs(&jac, &r);
        let mut jtj = vec![vec![0.0; n]; n];
        for row in &jac {
            for i in 0..n {
                for j in 0..=i {
                    jtj[i][j] += row[i] * row[j];
                }
            }
        }
        for i in 0..n {
            for j in 0..i {
                jtj[j][i] = jtj[i][j];
            }
        }
        let scale = (0..n)
            .map(|i| jtj[i][i])
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
        let mut mu = *damping.get_or_insert(1e-3 * scale);

        let (x_new, f_new) = loop {
            if mu > 1e16 * scale {
                break 'outer;
            }
            let mut a = jtj.clone();
            (0..n).for_each(|i| a[i][i] += mu);
            let Some(step) = solve_spd(&a, &jtr) else {
                mu *= 10.0;
                continue;
            };
            let dir: Vec<f64> = step.iter().map(|v| -v).collect();
            let slope = 2.0 * dot(&jtr, &dir);
            if !(slope < 0.0) {
                break 'outer;
            }
            match line_search(problem, &x, fx, slope, &dir)? {
                Some((trial, ft, alpha)) => {
                    // full steps earn less damping, shortened ones more
                    damping = Some(if alpha == 1.0 { mu / 3.0 } else { mu * 2.0 });
                    break (trial, ft);
                }
                None => mu *= 10.0,
            }
        };
        iterations += 1;
        let change = fx - f_new;
        x = x_new;
        fx = f_new;
        if change.abs() < cfg.tol {
            break;
        }
    }

    Ok(Minimum {
        point: UnconstrainedVector(x),
        value: fx,
        iterations,
    })
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect()
}

fn mat_vec(a: &[Vec<f64>], v: &[f64]) -> Vec<f64> {
    a.iter().map(|row| dot(row, v)).collect()
}

/// Inverse-Hessian update `H ← (I − ρ s yᵀ) H (I − ρ y sᵀ) + ρ s sᵀ`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let r = 1.0 / sy;
    let hy = mat_vec(h, y);
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += (1.0 + r * yhy) * r * s[i] * s[j] - r * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}
