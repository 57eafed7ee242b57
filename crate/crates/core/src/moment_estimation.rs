//! Modified method of moments: minimize the weighted squared error between empirical
//! and theoretical trigonometric moments (ETM) over the feasible parameter space.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angle::Angle;
use crate::error::{Error, Result};
use crate::kato_jones::{gamma_bar_unchecked, ComplexMoment, RHO_MAX};
use crate::mixture::{mixture_trig_moment, ReparamComponent, ReparamMixture};
use crate::numeric::{derive_seed, rng_from_seed};
use crate::optimize::{
    from_unconstrained, minimize_least_squares, rho_from_coord, to_unconstrained, GradientMode,
    LeastSquares, OptimizeConfig,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MomentSource {
    Empirical { n: usize },
    Theoretical,
}

/// Trigonometric moments for orders `p = 1..=q`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrigMoments {
    values: Vec<ComplexMoment>,
    pub source: MomentSource,
}

impl TrigMoments {
    /// Theoretical moments of a mixture up to order `q`.
    pub fn theoretical(m: &ReparamMixture, q: usize) -> Self {
        TrigMoments {
            values: (1..=q as u32).map(|p| mixture_trig_moment(p, m)).collect(),
            source: MomentSource::Theoretical,
        }
    }

    pub fn from_values(values: Vec<ComplexMoment>, source: MomentSource) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Config("need at least one moment".into()));
        }
        if let Some(v) = values.iter().find(|v| !(v.norm() <= 1.0 + 1e-12)) {
            return Err(Error::Domain(format!(
                "moment modulus {} exceeds 1",
                v.norm()
            )));
        }
        Ok(TrigMoments { values, source })
    }

    pub fn q(&self) -> usize {
        self.values.len()
    }

    /// Moment of order `p` (1-based).
    pub fn get(&self, p: usize) -> ComplexMoment {
        self.values[p - 1]
    }

    pub fn values(&self) -> &[ComplexMoment] {
        &self.values
    }
}

/// `(1/n) Σ_j e^{ipθ_j}` for `p = 1..=q`.
pub fn empirical_trig_moments(sample: &[Angle], q: usize) -> Result<TrigMoments> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if q == 0 {
        return Err(Error::Config("q must be at least 1".into()));
    }
    let mut sums = vec![Complex64::new(0.0, 0.0); q];
    for t in sample {
        let step = Complex64::from_polar(1.0, t.radians());
        let mut z = step;
        for s in sums.iter_mut() {
            *s += z;
            z *= step;
        }
    }
    let n = sample.len() as f64;
    Ok(TrigMoments {
        values: sums.into_iter().map(|s| s / n).collect(),
        source: MomentSource::Empirical { n: sample.len() },
    })
}

/// `Σ_p c^p { (Re emp_p − Re th_p)² + (Im emp_p − Im th_p)² }`.
pub fn etm(psi: &ReparamMixture, emp: &TrigMoments, c: f64) -> f64 {
    let mut w = 1.0;
    let mut total = 0.0;
    for (i, e) in emp.values.iter().enumerate() {
        w *= c;
        let th = mixture_trig_moment(i as u32 + 1, psi);
        total += w * ((e.re - th.re).powi(2) + (e.im - th.im).powi(2));
    }
    total
}

/// ETM evaluated straight from unconstrained coordinates, without building a mixture.
fn etm_coords(x: &[f64], emp: &[ComplexMoment], c: f64) -> f64 {
    let m = x.len() / 4;
    let logits = &x[3 * m..];
    let weights = softmax_weights(logits);

    // per component: leading term π'γ̄ e^{iμ} and ratio ρ e^{i(μ+λ)}
    let mut lead = Vec::with_capacity(m);
    let mut ratio = Vec::with_capacity(m);
    for k in 0..m {
        let mu = x[k];
        let rho = rho_from_coord(x[m + k]);
        let lambda = x[2 * m + k];
        lead.push(Complex64::from_polar(
            weights[k] * gamma_bar_unchecked(rho, lambda),
            mu,
        ));
        ratio.push(Complex64::from_polar(rho, mu + lambda));
    }

    let mut w = 1.0;
    let mut total = 0.0;
    for e in emp {
        w *= c;
        let mut th = Complex64::new(0.0, 0.0);
        for k in 0..m {
            th += lead[k];
            lead[k] *= ratio[k];
        }
        total += w * (e - th).norm_sqr();
    }
    total
}

/// Theoretical moments `t_1..t_q` at coordinates `x` and their partial derivatives,
/// `partials[p-1][j] = ∂t_p/∂x_j`.
fn moment_partials(x: &[f64], q: usize) -> (Vec<Complex64>, Vec<Vec<Complex64>>) {
    let m = x.len() / 4;
    let weights = softmax_weights(&x[3 * m..]);
    let i = Complex64::i();
    let mut th = vec![Complex64::new(0.0, 0.0); q];
    let mut partials = vec![vec![Complex64::new(0.0, 0.0); 4 * m]; q];

    for k in 0..m {
        let (mu, lambda) = (x[k], x[2 * m + k]);
        let rho = rho_from_coord(x[m + k]);
        let gbar = gamma_bar_unchecked(rho, lambda);
        let den = 1.0 - rho * lambda.cos();
        let dlog_gamma = -rho * lambda.sin() / den;
        let dgamma_drho = (-2.0 * rho * den + (1.0 - rho * rho) * lambda.cos()) / (2.0 * den * den);
        let drho_du = if rho >= RHO_MAX {
            0.0
        } else {
            rho * (1.0 - rho)
        };
        for p in 1..=q {
            let pf = p as f64;
            let phase = Complex64::from_polar(weights[k], pf * mu + (pf - 1.0) * lambda);
            // π'_k γ̄_k ρ_k^{p−1} e^{i(pμ_k + (p−1)λ_k)}
            let t = phase * (gbar * rho.powi(p as i32 - 1));
            let d_rho = dgamma_drho * rho.powi(p as i32 - 1)
                + if p >= 2 {
                    gbar * (pf - 1.0) * rho.powi(p as i32 - 2)
                } else {
                    0.0
                };
            let row = &mut partials[p - 1];
            row[k] = i * pf * t;
            row[m + k] = phase * (d_rho * drho_du);
            row[2 * m + k] = t * (i * (pf - 1.0) + dlog_gamma);
            row[3 * m + k] += t;
            th[p - 1] += t;
        }
    }
    // softmax coupling: ∂π'_k/∂ℓ_j = π'_j (δ_jk − π'_k)
    for p in 0..q {
        for j in 0..m {
            partials[p][3 * m + j] -= th[p] * weights[j];
        }
    }
    (th, partials)
}

/// ETM as a sum of squares: `√(c^p)` times the real and imaginary parts of `e_p − t_p`.
fn etm_residuals(x: &[f64], emp: &[ComplexMoment], c: f64) -> Vec<f64> {
    let (th, _) = moment_partials(x, emp.len());
    let mut w = 1.0;
    let mut out = Vec::with_capacity(2 * emp.len());
    for (e, t) in emp.iter().zip(&th) {
        w *= c;
        let d = (e - t) * w.sqrt();
        out.extend([d.re, d.im]);
    }
    out
}

fn etm_jacobian(x: &[f64], emp: &[ComplexMoment], c: f64) -> Vec<Vec<f64>> {
    let (_, partials) = moment_partials(x, emp.len());
    let mut w = 1.0;
    let mut out = Vec::with_capacity(2 * emp.len());
    for row in &partials {
        w *= c;
        let s = w.sqrt();
        out.push(row.iter().map(|d| -s * d.re).collect());
        out.push(row.iter().map(|d| -s * d.im).collect());
    }
    out
}

fn softmax_weights(logits: &[f64]) -> Vec<f64> {
    let top = logits.iter().copied().fold(0.0, f64::max);
    let mut w: Vec<f64> = logits.iter().map(|l| (l - top).exp()).collect();
    let norm = w.iter().sum::<f64>() + (-top).exp();
    w.iter_mut().for_each(|v| *v /= norm);
    w
}

/// Random feasible starting point: `μ, λ ~ U[0, 2π)`, `ρ ~ U[0, 1)`, weights are the
/// spacings of `m` sorted `U[0, 1)` draws.
pub fn random_init(m: usize, seed: u64) -> ReparamMixture {
    let mut rng = rng_from_seed(seed);
    random_init_with(m, &mut rng)
}

pub fn random_init_with<R: Rng>(m: usize, rng: &mut R) -> ReparamMixture {
    assert!(m >= 1, "need at least one component");
    let comps: Vec<ReparamComponent> = (0..m)
        .map(|_| {
            let mu = rng.gen::<f64>() * TAU;
            let rho = rng.gen::<f64>();
            let lambda = rng.gen::<f64>() * TAU;
            ReparamComponent::new(mu, rho, lambda).expect("rho drawn from [0, 1)")
        })
        .collect();
    let mut cuts: Vec<f64> = (0..m).map(|_| rng.gen::<f64>()).collect();
    cuts.sort_by(f64::total_cmp);
    ReparamMixture::new(comps, simplex_spacings(&cuts)).expect("spacings lie on the simplex")
}

/// `(r_1, r_2 − r_1, …, 1 − r_m)` for sorted cuts.
pub fn simplex_spacings(sorted_cuts: &[f64]) -> Vec<f64> {
    let mut prev = 0.0;
    let mut out: Vec<f64> = sorted_cuts
        .iter()
        .map(|&r| {
            let d = r - prev;
            prev = r;
            d
        })
        .collect();
    out.push(1.0 - prev);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EtmConfig {
    /// Highest moment order; `None` means `2m`.
    pub q: Option<usize>,
    /// Weight base: order `p` is weighted by `c^p`.
    pub c: f64,
    pub tol: f64,
    pub starts: usize,
    pub seed: u64,
    pub max_iter: usize,
}

impl Default for EtmConfig {
    fn default() -> Self {
        EtmConfig {
            q: None,
            c: 0.9,
            tol: 1e-10,
            starts: 100,
            seed: 0,
            max_iter: 500,
        }
    }
}

impl EtmConfig {
    pub fn order(&self, m: usize) -> usize {
        self.q.unwrap_or(2 * m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::Config(format!(
                "c must lie in (0, 1), got {}",
                self.c
            )));
        }
        if self.q == Some(0) {
            return Err(Error::Config("q must be at least 1".into()));
        }
        if self.starts == 0 {
            return Err(Error::Config("starts must be at least 1".into()));
        }
        if !(self.tol > 0.0) {
            return Err(Error::Config(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Outcome of one optimizer start.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartLog {
    pub index: usize,
    pub seed: u64,
    pub init_etm: f64,
    pub final_etm: Option<f64>,
    pub iterations: usize,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MmmFit {
    /// Best estimate, components sorted by ascending `μ`.
    pub mixture: ReparamMixture,
    pub etm: f64,
    pub best_start: usize,
    pub iterations: usize,
    pub starts: Vec<StartLog>,
}

/// Multi-start ETM minimization on given moments. Starts are seeded from
/// `derive_seed(cfg.seed, [index])` and may run in parallel; the result does not depend
/// on scheduling.
pub fn fit_mmm(moments: &TrigMoments, m: usize, cfg: &EtmConfig) -> Result<MmmFit> {
    cfg.validate()?;
    if m == 0 {
        return Err(Error::Config("need at least one component".into()));
    }
    if moments.q() < 2 * m {
        log::warn!(
            "q = {} is below 2m = {}; the moment equations may have multiple solutions",
            moments.q(),
            2 * m
        );
    }
    let opt = OptimizeConfig {
        tol: cfg.tol,
        max_iter: cfg.max_iter,
        gradient: GradientMode::Analytic,
    };
    let emp = moments.values();
    let c = cfg.c;
    let objective = LeastSquares {
        residuals: |x: &[f64]| etm_residuals(x, emp, c),
        jacobian: |x: &[f64]| etm_jacobian(x, emp, c),
    };

    let runs: Vec<(StartLog, Option<ReparamMixture>)> = (0..cfg.starts)
        .into_par_iter()
        .map(|index| {
            let seed = derive_seed(cfg.seed, &[index as u64]);
            let init = to_unconstrained(&random_init(m, seed));
            let init_etm = etm_coords(init.as_slice(), emp, c);
            match minimize_least_squares(&objective, &init, &opt) {
                Ok(min) => (
                    StartLog {
                        index,
                        seed,
                        init_etm,
                        final_etm: Some(min.value),
                        iterations: min.iterations,
                        error: None,
                    },
                    Some(from_unconstrained(&min.point)),
                ),
                Err(e) => (
                    StartLog {
                        index,
                        seed,
                        init_etm,
                        final_etm: None,
                        iterations: 0,
                        error: Some(e.to_string()),
                    },
                    None,
                ),
            }
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (log, _) in &runs {
        if let Some(v) = log.final_etm {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((log.index, v));
            }
        } else if let Some(e) = &log.error {
            log::debug!("start {} failed: {e}", log.index);
        }
    }
    let (best_start, _) = best.ok_or(Error::AllStartsFailed(cfg.starts))?;
    let mixture = runs[best_start]
        .1
        .clone()
        .expect("successful start has a mixture")
        .canonicalized();
    mixture.validate()?;
    let etm = etm(&mixture, moments, c);
    let iterations = runs[best_start].0.iterations;
    Ok(MmmFit {
        mixture,
        etm,
        best_start,
        iterations,
        starts: runs.into_iter().map(|(l, _)| l).collect(),
    })
}

/// Computes order-`cfg.order(m)` empirical moments and runs [`fit_mmm`].
pub fn fit_mmm_sample(sample: &[Angle], m: usize, cfg: &EtmConfig) -> Result<MmmFit> {
    let moments = empirical_trig_moments(sample, cfg.order(m))?;
    fit_mmm(&moments, m, cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimize::{check_gradient, Objective};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn coordinate_gradient_matches_differences() {
        let truth = ReparamMixture::from_parts(
            &[2.7572, 4.0107],
            &[0.7266, 0.1970],
            &[5.3136, 1.1895],
            &[0.4536, 0.4825, 0.0639],
        )
        .unwrap();
        let emp = TrigMoments::theoretical(&truth, 4);
        let emp = emp.values();
        for seed in 0..20 {
            let x = to_unconstrained(&random_init(2, seed));
            let f = LeastSquares {
                residuals: |x: &[f64]| etm_residuals(x, emp, 0.9),
                jacobian: |x: &[f64]| etm_jacobian(x, emp, 0.9),
            };
            let value = f.value(x.as_slice());
            assert!((value - etm_coords(x.as_slice(), emp, 0.9)).abs() <= 1e-15 * value.max(1.0));
            let worst = check_gradient(&f, x.as_slice(), 1e-4).unwrap();
            assert!(worst < 1e-4, "seed {seed}: {worst}");
        }
        // three components, away from the generating model
        let x = to_unconstrained(&random_init(3, 5));
        let f = LeastSquares {
            residuals: |x: &[f64]| etm_residuals(x, emp, 0.8),
            jacobian: |x: &[f64]| etm_jacobian(x, emp, 0.8),
        };
        check_gradient(&f, x.as_slice(), 1e-4).unwrap();
    }

    #[test]
    fn antipodal_sample_cancels() {
        let tm = empirical_trig_moments(&[Angle::new(0.0), Angle::new(std::f64::consts::PI)], 1)
            .unwrap();
        assert!(tm.get(1).norm() < 1e-15);
    }

    #[test]
    fn single_point_has_unit_modulus() {
        let tm = empirical_trig_moments(&[Angle::new(1.3)], 4).unwrap();
        for p in 1..=4 {
            assert!((tm.get(p).norm() - 1.0).abs() < 1e-15);
            assert!((tm.get(p).arg() - Angle::new(1.3 * p as f64).radians()).abs() % TAU < 1e-12);
        }
    }

    #[test]
    fn empty_sample_rejected() {
        assert_eq!(empirical_trig_moments(&[], 2), Err(Error::EmptySample));
    }

    fn mix() -> ReparamMixture {
        ReparamMixture::from_parts(&[1.0, 3.5], &[0.6, 0.3], &[5.0, 1.0], &[0.4, 0.45, 0.15])
            .unwrap()
    }

    #[test]
    fn etm_zero_at_own_moments() {
        let m = mix();
        let tm = TrigMoments::theoretical(&m, 4);
        assert!(etm(&m, &tm, 0.9) < 1e-24);
    }

    #[test]
    fn etm_single_perturbation() {
        let m = mix();
        let mut vals = TrigMoments::theoretical(&m, 4).values().to_vec();
        vals[0].re += 0.1;
        let tm = TrigMoments::from_values(vals, MomentSource::Theoretical).unwrap();
        assert!((etm(&m, &tm, 0.9) - 0.009).abs() < 1e-15);
    }

    #[test]
    fn coordinate_etm_matches_mixture_etm() {
        let m = mix();
        let mut vals = TrigMoments::theoretical(&m, 5).values().to_vec();
        vals[2] += Complex64::new(0.03, -0.02);
        let x = to_unconstrained(&m);
        let direct = etm(
            &from_unconstrained(&x),
            &TrigMoments {
                values: vals.clone(),
                source: MomentSource::Theoretical,
            },
            0.8,
        );
        let fast = etm_coords(x.as_slice(), &vals, 0.8);
        assert!((direct - fast).abs() < 1e-16);
    }

    #[test]
    fn random_init_uses_spacings() {
        // replay the RNG stream to get the raw cut draws
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..6 {
            rng.gen::<f64>();
        }
        let (a, b): (f64, f64) = (rng.gen(), rng.gen());
        let (r1, r2) = (a.min(b), a.max(b));
        let m = random_init(2, 5);
        let w = m.weights();
        assert!(
            (w[0] - r1).abs() < 1e-15
                && (w[1] - (r2 - r1)).abs() < 1e-15
                && (w[2] - (1.0 - r2)).abs() < 1e-15
        );
    }

    #[test]
    fn random_init_first_weight_mean() {
        // E[min(U1, U2)] = 1/3
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 100_000;
        let mut s = 0.0;
        for _ in 0..n {
            let m = random_init_with(2, &mut rng);
            let w = m.weights();
            assert!(w.iter().all(|x| *x >= 0.0));
            assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            s += w[0];
        }
        assert!((s / n as f64 - 1.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn exact_moments_single_component() {
        let truth = ReparamMixture::from_parts(&[2.0], &[0.55], &[4.2], &[0.8, 0.2]).unwrap();
        let tm = TrigMoments::theoretical(&truth, 2);
        let cfg = EtmConfig {
            starts: 20,
            seed: 3,
            ..Default::default()
        };
        let fit = fit_mmm(&tm, 1, &cfg).unwrap();
        assert!(fit.etm < 1e-10, "etm {}", fit.etm);
        let c = fit.mixture.components()[0];
        assert!(c.mu.signed_diff(Angle::new(2.0)).abs() < 1e-3);
        assert!((c.rho - 0.55).abs() < 1e-3);
        assert!(c.lambda.signed_diff(Angle::new(4.2)).abs() < 1e-3);
        assert!((fit.mixture.weights()[0] - 0.8).abs() < 1e-3);
        for s in &fit.starts {
            assert!(fit.etm <= s.init_etm);
        }
    }

    #[test]
    fn fit_is_deterministic() {
        let truth = mix();
        let tm = TrigMoments::theoretical(&truth, 4);
        let cfg = EtmConfig {
            starts: 8,
            seed: 17,
            ..Default::default()
        };
        assert_eq!(
            fit_mmm(&tm, 2, &cfg).unwrap(),
            fit_mmm(&tm, 2, &cfg).unwrap()
        );
    }

    #[test]
    fn config_validation() {
        let tm = TrigMoments::theoretical(&mix(), 4);
        assert!(fit_mmm(
            &tm,
            2,
            &EtmConfig {
                c: 1.0,
                ..Default::default()
            }
        )
        .is_err());
        assert!(fit_mmm(
            &tm,
            2,
            &EtmConfig {
                starts: 0,
                ..Default::default()
            }
        )
        .is_err());
        assert!(fit_mmm(&tm, 0, &EtmConfig::default()).is_err());
    }
}
