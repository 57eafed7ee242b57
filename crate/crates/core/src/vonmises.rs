//! Mixture of von Mises distributions, used as a baseline model.

use std::f64::consts::TAU;

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angle::Angle;
use crate::error::{Error, Result};
use crate::numeric::{derive_seed, rng_from_seed};

/// Below this argument the power series is used; above it the asymptotic expansion.
const SERIES_LIMIT: f64 = 15.0;

/// `e^{−κ} I₀(κ)` and `e^{−κ} I₁(κ)` for `κ ≥ 0`.
pub fn bessel_i0_i1_scaled(kappa: f64) -> (f64, f64) {
    debug_assert!(kappa >= 0.0);
    if kappa < SERIES_LIMIT {
        let x = kappa / 2.0;
        let x2 = x * x;
        let (mut t0, mut t1) = (1.0, x);
        let (mut i0, mut i1) = (1.0, x);
        for k in 1..200 {
            let k = k as f64;
            t0 *= x2 / (k * k);
            t1 *= x2 / (k * (k + 1.0));
            i0 += t0;
            i1 += t1;
            if t0 < 1e-17 * i0 && t1 < 1e-17 * i1.max(f64::MIN_POSITIVE) {
                break;
            }
        }
        let e = (-kappa).exp();
        (i0 * e, i1 * e)
    } else {
        (asymptotic_scaled(0.0, kappa), asymptotic_scaled(1.0, kappa))
    }
}

fn asymptotic_scaled(nu: f64, kappa: f64) -> f64 {
    let mu4 = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        let next = -term * (mu4 - odd * odd) / (k as f64 * 8.0 * kappa);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum / (TAU * kappa).sqrt()
}

/// `I₀(κ)` without scaling; overflows for large `κ`.
pub fn bessel_i0(kappa: f64) -> f64 {
    bessel_i0_i1_scaled(kappa).0 * kappa.exp()
}

/// `A(κ) = I₁(κ)/I₀(κ)`.
pub fn bessel_ratio(kappa: f64) -> f64 {
    if kappa <= 0.0 {
        return 0.0;
    }
    let (i0, i1) = bessel_i0_i1_scaled(kappa);
    i1 / i0
}

fn bessel_ratio_slope(kappa: f64, a: f64) -> f64 {
    if kappa < 1e-8 {
        0.5
    } else {
        1.0 - a / kappa - a * a
    }
}

/// Solves `A(κ) = r` for `r ∈ [0, 1)` to `|A(κ) − r| < 1e-12`.
pub fn inv_bessel_ratio(r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::Domain(format!(
            "mean resultant length {r} must be non-negative"
        )));
    }
    if r >= 1.0 {
        return Err(Error::UnboundedConcentration(r));
    }
    if r == 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while bessel_ratio(hi) < r {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return Err(Error::UnboundedConcentration(r));
        }
    }
    let mut kappa = initial_kappa(r).clamp(lo, hi);
    for _ in 0..200 {
        let a = bessel_ratio(kappa);
        let diff = a - r;
        if diff.abs() < 1e-12 {
            return Ok(kappa);
        }
        if diff < 0.0 {
            lo = kappa;
        } else {
            hi = kappa;
        }
        let newton = kappa - diff / bessel_ratio_slope(kappa, a);
        kappa = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo < 1e-15 * hi {
            return Ok(kappa);
        }
    }
    Ok(kappa)
}

/// Piecewise closed-form approximation of the inverse used as a Newton start.
fn initial_kappa(r: f64) -> f64 {
    if r < 0.53 {
        2.0 * r + r.powi(3) + 5.0 * r.powi(5) / 6.0
    } else if r < 0.85 {
        -0.4 + 1.39 * r + 0.43 / (1.0 - r)
    } else {
        1.0 / (r.powi(3) - 4.0 * r * r + 3.0 * r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VonMisesComponent {
    pub mu: Angle,
    pub kappa: f64,
}

impl VonMisesComponent {
    pub fn new(mu: f64, kappa: f64) -> Result<Self> {
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(Error::Domain(format!(
                "kappa = {kappa} must be finite and non-negative"
            )));
        }
        Ok(VonMisesComponent {
            mu: Angle::new(mu),
            kappa,
        })
    }

    pub fn density(&self, theta: Angle) -> f64 {
        vm_density(theta, self)
    }
}

/// `exp(κ cos(θ−μ)) / (2π I₀(κ))`, evaluated in scaled form.
pub fn vm_density(theta: Angle, comp: &VonMisesComponent) -> f64 {
    let (i0e, _) = bessel_i0_i1_scaled(comp.kappa);
    (comp.kappa * ((theta.radians() - comp.mu.radians()).cos() - 1.0)).exp() / (TAU * i0e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovMixture {
    components: Vec<VonMisesComponent>,
    weights: Vec<f64>,
}

impl MovMixture {
    pub fn new(components: Vec<VonMisesComponent>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Config(
                "a mixture needs at least one component".into(),
            ));
        }
        if weights.len() != components.len() {
            return Err(Error::DimensionMismatch {
                expected: components.len(),
                got: weights.len(),
            });
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::InvalidWeights(format!("{weights:?}")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidWeights(format!(
                "weights sum to {sum}, not 1"
            )));
        }
        let weights = weights.iter().map(|w| w / sum).collect();
        Ok(MovMixture {
            components,
            weights,
        })
    }

    pub fn m(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[VonMisesComponent] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn density(&self, theta: Angle) -> f64 {
        self.components
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| w * c.density(theta))
            .sum()
    }

    pub fn log_likelihood(&self, sample: &[Angle]) -> f64 {
        self.densities_table(sample)
            .iter()
            .map(|row| row.iter().sum::<f64>().ln())
            .sum()
    }

    /// Sorts components by ascending `μ`.
    pub fn canonicalize(&mut self) {
        let mut idx: Vec<usize> = (0..self.m()).collect();
        idx.sort_by(|&a, &b| {
            self.components[a]
                .mu
                .radians()
                .total_cmp(&self.components[b].mu.radians())
        });
        self.components = idx.iter().map(|&i| self.components[i]).collect();
        self.weights = idx.iter().map(|&i| self.weights[i]).collect();
    }

    /// Weighted component densities, one row per observation.
    fn densities_table(&self, sample: &[Angle]) -> Vec<Vec<f64>> {
        let consts: Vec<(f64, f64, f64)> = self
            .components
            .iter()
            .zip(&self.weights)
            .map(|(c, w)| {
                (
                    c.mu.radians(),
                    c.kappa,
                    w / (TAU * bessel_i0_i1_scaled(c.kappa).0),
                )
            })
            .collect();
        sample
            .iter()
            .map(|t| {
                consts
                    .iter()
                    .map(|&(mu, kappa, scale)| {
                        scale * (kappa * ((t.radians() - mu).cos() - 1.0)).exp()
                    })
                    .collect()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MovmConfig {
    /// Log-likelihood change that ends EM; `None` means `n × 1e-6`.
    pub tol: Option<f64>,
    pub max_iter: usize,
    /// Random restarts in addition to the k-means start.
    pub restarts: usize,
    pub seed: u64,
}

impl Default for MovmConfig {
    fn default() -> Self {
        MovmConfig {
            tol: None,
            max_iter: 1000,
            restarts: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovmFit {
    pub mixture: MovMixture,
    pub trace: Vec<f64>,
    pub iterations: usize,
}

impl MovmFit {
    pub fn loglik(&self) -> f64 {
        *self.trace.last().expect("trace holds the initial value")
    }
}

/// EM from a given starting mixture.
pub fn movm_em(sample: &[Angle], init: &MovMixture, cfg: &MovmConfig) -> Result<MovmFit> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let n = sample.len();
    let tol = cfg.tol.unwrap_or(n as f64 * 1e-6);
    let m = init.m();
    let mut current = init.clone();
    let mut trace = vec![current.log_likelihood(sample)];
    let mut iterations = 0;
    for iteration in 1..=cfg.max_iter {
        let table = current.densities_table(sample);
        let mut mass = vec![0.0; m];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        for (row, t) in table.iter().zip(sample) {
            let den = row.iter().sum::<f64>().max(1e-300);
            let (s, c) = t.radians().sin_cos();
            for k in 0..m {
                let w = row[k] / den;
                mass[k] += w;
                cs[k] += w * c;
                sn[k] += w * s;
            }
        }
        let mut comps = Vec::with_capacity(m);
        for k in 0..m {
            if !(mass[k] >= 1e-10) {
                return Err(Error::DeadComponent {
                    component: k,
                    iteration,
                    mass: mass[k],
                });
            }
            let r = (cs[k].hypot(sn[k]) / mass[k]).min(1.0);
            comps.push(VonMisesComponent {
                mu: Angle::new(sn[k].atan2(cs[k])),
                kappa: inv_bessel_ratio(r)?,
            });
        }
        let weights = mass.iter().map(|w| w / n as f64).collect();
        current = MovMixture::new(comps, weights)?;
        iterations = iteration;
        let ll = current.log_likelihood(sample);
        if !ll.is_finite() {
            return Err(Error::NonFinite {
                value: ll,
                point: vec![],
            });
        }
        let change = ll - trace.last().unwrap();
        trace.push(ll);
        if change.abs() < tol {
            break;
        }
    }
    current.canonicalize();
    Ok(MovmFit {
        mixture: current,
        trace,
        iterations,
    })
}

/// Circular k-means on the unit circle: returns cluster centres and labels.
pub fn circular_kmeans(
    sample: &[Angle],
    centres: &[f64],
    max_iter: usize,
) -> (Vec<f64>, Vec<usize>) {
    let mut centres = centres.to_vec();
    let mut labels = vec![usize::MAX; sample.len()];
    for _ in 0..max_iter {
        let mut changed = false;
        for (label, t) in labels.iter_mut().zip(sample) {
            let best = (0..centres.len())
                .max_by(|&a, &b| {
                    (t.radians() - centres[a])
                        .cos()
                        .total_cmp(&(t.radians() - centres[b]).cos())
                        .then(b.cmp(&a))
                })
                .unwrap();
            if *label != best {
                *label = best;
                changed = true;
            }
        }
        let mut sums = vec![(0.0, 0.0); centres.len()];
        for (&l, t) in labels.iter().zip(sample) {
            let (s, c) = t.radians().sin_cos();
            sums[l].0 += s;
            sums[l].1 += c;
        }
        for (centre, (s, c)) in centres.iter_mut().zip(sums) {
            if s != 0.0 || c != 0.0 {
                *centre = s.atan2(c);
            }
        }
        if !changed {
            break;
        }
    }
    (centres, labels)
}

/// Start built from a k-means partition: per-cluster direction, concentration and share.
fn start_from_partition(sample: &[Angle], centres: &[f64], labels: &[usize]) -> Result<MovMixture> {
    let m = centres.len();
    let mut stats = vec![(0.0, 0.0, 0usize); m];
    for (&l, t) in labels.iter().zip(sample) {
        let (s, c) = t.radians().sin_cos();
        stats[l].0 += s;
        stats[l].1 += c;
        stats[l].2 += 1;
    }
    let mut comps = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for (k, &(s, c, count)) in stats.iter().enumerate() {
        let share = count.max(1) as f64;
        let r = (s.hypot(c) / share).min(0.95);
        comps.push(VonMisesComponent {
            mu: Angle::new(if count > 0 { s.atan2(c) } else { centres[k] }),
            kappa: inv_bessel_ratio(r)?,
        });
        weights.push(share);
    }
    let total: f64 = weights.iter().sum();
    MovMixture::new(comps, weights.iter().map(|w| w / total).collect())
}

/// Fits an `m`-component MovM: one k-means start with evenly spread centres plus
/// `cfg.restarts` k-means starts seeded at random observations; the best log-likelihood wins.
pub fn movm_em_fit(sample: &[Angle], m: usize, cfg: &MovmConfig) -> Result<MovmFit> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if m == 0 || m > sample.len() {
        return Err(Error::Config(format!(
            "cannot fit {m} components to {} points",
            sample.len()
        )));
    }
    let starts: Vec<Vec<f64>> =
        std::iter::once((0..m).map(|k| TAU * k as f64 / m as f64).collect())
            .chain((0..cfg.restarts).map(|r| {
                let mut rng = rng_from_seed(derive_seed(cfg.seed, &[r as u64]));
                sample_indices(&mut rng, sample.len(), m)
                    .iter()
                    .map(|i| sample[i].radians())
                    .collect()
            }))
            .collect();
    let fits: Vec<Result<MovmFit>> = starts
        .par_iter()
        .map(|centres| {
            let (centres, labels) = circular_kmeans(sample, centres, 100);
            let init = start_from_partition(sample, &centres, &labels)?;
            movm_em(sample, &init, cfg)
        })
        .collect();
    let mut best: Option<MovmFit> = None;
    let mut failures = 0;
    for (i, fit) in fits.into_iter().enumerate() {
        match fit {
            Ok(f) => {
                if best.as_ref().is_none_or(|b| f.loglik() > b.loglik()) {
                    best = Some(f);
                }
            }
            Err(e) => {
                failures += 1;
                log::debug!("MovM start {i} failed: {e}");
            }
        }
    }
    best.ok_or(Error::AllStartsFailed(failures))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr_free::vm_draw;

    /// Independent draws by Best-Fisher rejection, kept local to the tests.
    mod rand_distr_free {
        use super::*;
        pub fn vm_draw<R: Rng>(rng: &mut R, mu: f64, kappa: f64) -> f64 {
            let tau = 1.0 + (1.0 + 4.0 * kappa * kappa).sqrt();
            let rho = (tau - (2.0 * tau).sqrt()) / (2.0 * kappa);
            let r = (1.0 + rho * rho) / (2.0 * rho);
            loop {
                let u1: f64 = rng.gen();
                let z = (std::f64::consts::PI * u1).cos();
                let f = (1.0 + r * z) / (r + z);
                let c = kappa * (r - f);
                let u2: f64 = rng.gen();
                if c * (2.0 - c) - u2 > 0.0 || (c / u2).ln() + 1.0 - c >= 0.0 {
                    let u3: f64 = rng.gen();
                    let sign = if u3 > 0.5 { 1.0 } else { -1.0 };
                    return mu + sign * f.acos();
                }
            }
        }
    }

    /// Integral definition `I_ν(κ) = π⁻¹ ∫₀^π e^{κ cos t} cos(νt) dt` by composite Simpson.
    fn bessel_quadrature(nu: f64, kappa: f64) -> f64 {
        let n = 20000;
        let h = std::f64::consts::PI / n as f64;
        let f = |t: f64| (kappa * (t.cos() - 1.0)).exp() * (nu * t).cos();
        let mut s = f(0.0) + f(std::f64::consts::PI);
        for i in 1..n {
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
        }
        s * h / 3.0 / std::f64::consts::PI
    }

    #[test]
    fn bessel_matches_quadrature() {
        for &k in &[
            0.0, 0.01, 0.5, 1.0, 3.0, 7.5, 14.99, 15.0, 20.0, 50.0, 300.0,
        ] {
            let (i0, i1) = bessel_i0_i1_scaled(k);
            let (q0, q1) = (bessel_quadrature(0.0, k), bessel_quadrature(1.0, k));
            assert!(
                (i0 - q0).abs() < 1e-12 * q0.max(1e-300) + 1e-15,
                "I0 {k}: {i0} vs {q0}"
            );
            assert!(
                (i1 - q1).abs() < 1e-11 * q1.max(1e-300) + 1e-15,
                "I1 {k}: {i1} vs {q1}"
            );
        }
        assert!((bessel_i0(1.0) - 1.2660658777520082).abs() < 1e-14);
    }

    #[test]
    fn ratio_monotone_on_grid() {
        let mut prev = bessel_ratio(0.0);
        assert_eq!(prev, 0.0);
        for i in 1..4000 {
            let a = bessel_ratio(i as f64 * 0.025);
            assert!(a > prev && a < 1.0);
            prev = a;
        }
    }

    #[test]
    fn inverse_ratio() {
        assert!((inv_bessel_ratio(bessel_ratio(2.0)).unwrap() - 2.0).abs() < 1e-10);
        let small = inv_bessel_ratio(1e-4).unwrap();
        assert!((small - 2e-4).abs() < 1e-10);
        assert_eq!(inv_bessel_ratio(0.0).unwrap(), 0.0);
        assert!(matches!(
            inv_bessel_ratio(1.0),
            Err(Error::UnboundedConcentration(_))
        ));
        assert!(inv_bessel_ratio(-0.1).is_err());
    }

    proptest! {
        #[test]
        fn inverse_ratio_residual(r in 0.0..0.9999f64) {
            let k = inv_bessel_ratio(r).unwrap();
            prop_assert!((bessel_ratio(k) - r).abs() < 1e-12);
        }
    }

    #[test]
    fn density_values() {
        let flat = VonMisesComponent::new(1.0, 0.0).unwrap();
        assert!((flat.density(Angle::new(2.0)) - 1.0 / TAU).abs() < 1e-16);
        let c = VonMisesComponent::new(0.7, 1.0).unwrap();
        let peak = c.density(Angle::new(0.7));
        assert!((peak - 0.34171).abs() < 1e-5, "{peak}");
        for kappa in [0.3, 4.0, 80.0, 2000.0] {
            let c = VonMisesComponent::new(2.0, kappa).unwrap();
            let n = 200_000;
            let total: f64 = (0..n)
                .map(|i| c.density(Angle::new(TAU * i as f64 / n as f64)))
                .sum::<f64>()
                * TAU
                / n as f64;
            assert!((total - 1.0).abs() < 1e-8, "{kappa}: {total}");
        }
    }

    #[test]
    fn single_component_recovery() {
        let mut rng = rng_from_seed(5);
        let xs: Vec<Angle> = (0..100_000)
            .map(|_| Angle::new(vm_draw(&mut rng, 1.0, 3.0)))
            .collect();
        let fit = movm_em_fit(&xs, 1, &MovmConfig::default()).unwrap();
        let c = fit.mixture.components()[0];
        assert!(c.mu.signed_diff(Angle::new(1.0)).abs() < 0.02);
        assert!((c.kappa - 3.0).abs() < 0.02 * 3.0 + 0.02);
    }

    #[test]
    fn two_component_recovery_and_monotone() {
        let mut rng = rng_from_seed(9);
        let xs: Vec<Angle> = (0..20_000)
            .map(|_| {
                if rng.gen::<f64>() < 0.3 {
                    Angle::new(vm_draw(&mut rng, 1.0, 8.0))
                } else {
                    Angle::new(vm_draw(&mut rng, 4.0, 4.0))
                }
            })
            .collect();
        let fit = movm_em_fit(
            &xs,
            2,
            &MovmConfig {
                tol: Some(1e-8),
                ..Default::default()
            },
        )
        .unwrap();
        let mix = &fit.mixture;
        assert!(mix.components()[0].mu.radians() < mix.components()[1].mu.radians());
        assert!(mix.components()[0].mu.signed_diff(Angle::new(1.0)).abs() < 0.05);
        assert!(mix.components()[1].mu.signed_diff(Angle::new(4.0)).abs() < 0.05);
        assert!((mix.weights()[0] - 0.3).abs() < 0.05);
        for w in fit.trace.windows(2) {
            assert!(w[1] >= w[0] - 1e-8);
        }
    }

    #[test]
    fn deterministic_across_runs() {
        let mut rng = rng_from_seed(1);
        let xs: Vec<Angle> = (0..2000)
            .map(|_| Angle::new(vm_draw(&mut rng, 2.0, 2.0)))
            .collect();
        let cfg = MovmConfig {
            seed: 4,
            ..Default::default()
        };
        assert_eq!(
            movm_em_fit(&xs, 2, &cfg).unwrap(),
            movm_em_fit(&xs, 2, &cfg).unwrap()
        );
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(VonMisesComponent::new(0.0, -1.0).is_err());
        assert!(movm_em_fit(&[], 1, &MovmConfig::default()).is_err());
        let c = VonMisesComponent::new(0.0, 1.0).unwrap();
        assert!(MovMixture::new(vec![c], vec![0.5]).is_err());
    }
}
