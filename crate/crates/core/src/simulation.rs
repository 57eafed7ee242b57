//! Monte Carlo comparison of the moment and maximum-likelihood estimators.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::angle::wrap_signed;
use crate::em::{em_fit, EmConfig};
use crate::error::{Error, Result};
use crate::mixture::ReparamMixture;
use crate::moment_estimation::{fit_mmm_sample, EtmConfig};
use crate::numeric::derive_seed;
use crate::sampling::sample;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub truth: ReparamMixture,
    pub sizes: Vec<usize>,
    pub replicates: usize,
    pub seed: u64,
    pub mmm: EtmConfig,
    pub em: EmConfig,
}

impl StudyConfig {
    pub fn new(truth: ReparamMixture) -> Self {
        StudyConfig {
            truth,
            sizes: vec![50, 100, 500],
            replicates: 200,
            seed: 0,
            mmm: EtmConfig::default(),
            em: EmConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates < 2 {
            return Err(Error::Config("a study needs at least 2 replicates".into()));
        }
        if self.sizes.is_empty() || self.sizes.contains(&0) {
            return Err(Error::Config(
                "sample sizes must be non-empty and positive".into(),
            ));
        }
        self.truth.validate()?;
        self.mmm.validate()?;
        self.em.validate()
    }
}

/// Deviation of `(μ₁..μₘ, ρ₁..ρₘ, λ₁..λₘ, π'₁..π'ₘ)` from the truth, angles wrapped to `(−π, π]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorVector(pub Vec<f64>);

impl ErrorVector {
    pub fn between(estimate: &ReparamMixture, truth: &ReparamMixture) -> Result<Self> {
        let m = truth.m();
        if estimate.m() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: estimate.m(),
            });
        }
        let (e, t) = (estimate.components(), truth.components());
        let mut v = Vec::with_capacity(4 * m);
        v.extend((0..m).map(|k| wrap_signed(e[k].mu.radians() - t[k].mu.radians())));
        v.extend((0..m).map(|k| e[k].rho - t[k].rho));
        v.extend((0..m).map(|k| wrap_signed(e[k].lambda.radians() - t[k].lambda.radians())));
        v.extend((0..m).map(|k| estimate.weights()[k] - truth.weights()[k]));
        Ok(ErrorVector(v))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

/// Sample mean-squared-error matrix `r⁻¹ Σ e eᵀ` and its determinant (clamped at 0).
pub fn gmse(errors: &[ErrorVector]) -> Result<(Vec<Vec<f64>>, f64)> {
    let first = errors
        .first()
        .ok_or_else(|| Error::Config("gmse needs at least one replicate".into()))?;
    let d = first.dim();
    let mut sigma = vec![vec![0.0; d]; d];
    for e in errors {
        if e.dim() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: e.dim(),
            });
        }
        for i in 0..d {
            for j in 0..d {
                sigma[i][j] += e.0[i] * e.0[j];
            }
        }
    }
    let r = errors.len() as f64;
    sigma.iter_mut().flatten().for_each(|v| *v /= r);
    let det = determinant(&sigma).max(0.0);
    Ok((sigma, det))
}

/// Determinant by LU decomposition with partial pivoting.
pub fn determinant(a: &[Vec<f64>]) -> f64 {
    let n = a.len();
    let mut lu = a.to_vec();
    let mut det = 1.0;
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| lu[i][col].abs().total_cmp(&lu[j][col].abs()))
            .unwrap();
        if lu[pivot][col] == 0.0 {
            return 0.0;
        }
        if pivot != col {
            lu.swap(pivot, col);
            det = -det;
        }
        let p = lu[col][col];
        det *= p;
        for row in col + 1..n {
            let factor = lu[row][col] / p;
            if factor != 0.0 {
                for k in col..n {
                    lu[row][k] -= factor * lu[col][k];
                }
            }
        }
    }
    det
}

pub fn rgmse(det_mm: f64, det_ml: f64) -> Result<f64> {
    if det_ml == 0.0 {
        return Err(Error::DivisionByZero(
            "GMSE of the maximum likelihood estimator is zero".into(),
        ));
    }
    Ok(det_mm / det_ml)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub n: usize,
    pub det_mm: f64,
    pub det_ml: f64,
    /// `None` when `det_ml` is zero.
    pub rgmse: Option<f64>,
    pub failures_mm: usize,
    pub failures_ml: usize,
}

struct Replicate {
    mm: Option<ErrorVector>,
    ml: Option<ErrorVector>,
}

fn run_replicate(cfg: &StudyConfig, n: usize, rep: usize) -> Replicate {
    let seed = derive_seed(cfg.seed, &[n as u64, rep as u64]);
    let fitted = sample(&cfg.truth, n, seed).and_then(|xs| {
        let mmm_cfg = EtmConfig {
            seed: derive_seed(seed, &[0]),
            ..cfg.mmm
        };
        let mm = fit_mmm_sample(&xs, cfg.truth.m(), &mmm_cfg)?.mixture;
        Ok((xs, mm))
    });
    let (xs, mm) = match fitted {
        Ok(v) => v,
        Err(e) => {
            log::warn!("n={n} replicate {rep}: moment fit failed: {e}");
            return Replicate { mm: None, ml: None };
        }
    };
    let ml = match em_fit(&xs, &mm, &cfg.em) {
        Ok(fit) => ErrorVector::between(&fit.mixture, &cfg.truth).ok(),
        Err(e) => {
            log::warn!("n={n} replicate {rep}: EM failed: {e}");
            None
        }
    };
    Replicate {
        mm: ErrorVector::between(&mm, &cfg.truth).ok(),
        ml,
    }
}

/// Runs the study: for every size and replicate, sample from the truth, fit by moments,
/// refine by EM, and summarize each estimator's generalized MSE.
pub fn run_study(cfg: &StudyConfig) -> Result<Vec<StudyRow>> {
    cfg.validate()?;
    let mut rows = Vec::with_capacity(cfg.sizes.len());
    for &n in &cfg.sizes {
        let reps: Vec<Replicate> = (0..cfg.replicates)
            .into_par_iter()
            .map(|rep| run_replicate(cfg, n, rep))
            .collect();
        let mm: Vec<ErrorVector> = reps.iter().filter_map(|r| r.mm.clone()).collect();
        let ml: Vec<ErrorVector> = reps.iter().filter_map(|r| r.ml.clone()).collect();
        let failures_mm = cfg.replicates - mm.len();
        let failures_ml = cfg.replicates - ml.len();
        let det_mm = if mm.is_empty() {
            f64::NAN
        } else {
            gmse(&mm)?.1
        };
        let det_ml = if ml.is_empty() {
            f64::NAN
        } else {
            gmse(&ml)?.1
        };
        let ratio = rgmse(det_mm, det_ml).ok();
        log::info!(
            "n={n}: det_mm={det_mm:e} det_ml={det_ml:e} failures {failures_mm}/{failures_ml}"
        );
        rows.push(StudyRow {
            n,
            det_mm,
            det_ml,
            rgmse: ratio,
            failures_mm,
            failures_ml,
        });
    }
    Ok(rows)
}

pub fn write_study_csv<W: Write>(rows: &[StudyRow], mut out: W) -> std::io::Result<()> {
    writeln!(out, "n,det_mm,det_ml,rgmse,failures_mm,failures_ml")?;
    for r in rows {
        let ratio = r
            .rgmse
            .map_or_else(|| "nan".to_string(), |v| format!("{v:.16e}"));
        writeln!(
            out,
            "{},{:.16e},{:.16e},{},{},{}",
            r.n, r.det_mm, r.det_ml, ratio, r.failures_mm, r.failures_ml
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;

    #[test]
    fn exact_replicates_give_zero() {
        let errs = vec![ErrorVector(vec![0.0; 8]); 5];
        let (s, det) = gmse(&errs).unwrap();
        assert!(s.iter().flatten().all(|v| *v == 0.0));
        assert_eq!(det, 0.0);
    }

    #[test]
    fn basis_vectors() {
        let d = 8;
        let errs: Vec<ErrorVector> = (0..d)
            .map(|i| ErrorVector((0..d).map(|j| if i == j { 1.0 } else { 0.0 }).collect()))
            .collect();
        let (s, det) = gmse(&errs).unwrap();
        for i in 0..d {
            for j in 0..d {
                assert_eq!(s[i][j], if i == j { 1.0 / d as f64 } else { 0.0 });
            }
        }
        assert!((det - (d as f64).powi(-(d as i32))).abs() < 1e-20);
    }

    #[test]
    fn single_replicate_is_singular() {
        let (_, det) =
            gmse(&[ErrorVector(vec![0.3, -0.1, 0.2, 0.05, 0.0, 0.4, -0.2, 0.1])]).unwrap();
        assert_eq!(det, 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            gmse(&[ErrorVector(vec![0.0; 8]), ErrorVector(vec![0.0; 7])]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(gmse(&[]).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn det_matches_eigenvalues(data in proptest::collection::vec(-1.0..1.0f64, 8 * 12)) {
            let errs: Vec<ErrorVector> = data.chunks(8).map(|c| ErrorVector(c.to_vec())).collect();
            let (s, det) = gmse(&errs).unwrap();
            prop_assert!(det >= 0.0);
            let m = DMatrix::from_fn(8, 8, |i, j| s[i][j]);
            let eig: f64 = m.symmetric_eigen().eigenvalues.iter().product();
            prop_assert!((det - eig).abs() < 1e-10, "{det} vs {eig}");
            for i in 0..8 {
                for j in 0..8 {
                    prop_assert_eq!(s[i][j], s[j][i]);
                }
            }
        }

        #[test]
        fn wrapped_errors_bounded(a in 0.0..std::f64::consts::TAU, b in 0.0..std::f64::consts::TAU) {
            let t = ReparamMixture::from_parts(&[a], &[0.3], &[b], &[0.5, 0.5]).unwrap();
            let e = ReparamMixture::from_parts(&[b], &[0.3], &[a], &[0.5, 0.5]).unwrap();
            let v = ErrorVector::between(&e, &t).unwrap();
            prop_assert!(v.0[0].abs() <= std::f64::consts::PI && v.0[2].abs() <= std::f64::consts::PI);
        }
    }

    #[test]
    fn determinant_with_pivoting() {
        let a = vec![vec![0.0, 2.0], vec![3.0, 1.0]];
        assert_eq!(determinant(&a), -6.0);
    }

    #[test]
    fn ratio() {
        assert_eq!(rgmse(2.0, 2.0).unwrap(), 1.0);
        assert_eq!(rgmse(0.0, 3.0).unwrap(), 0.0);
        assert!(matches!(rgmse(1.0, 0.0), Err(Error::DivisionByZero(_))));
    }

    #[test]
    fn small_study_is_deterministic() {
        let truth =
            ReparamMixture::from_parts(&[1.0, 4.0], &[0.6, 0.3], &[5.0, 1.0], &[0.45, 0.45, 0.1])
                .unwrap();
        let cfg = StudyConfig {
            sizes: vec![60],
            replicates: 4,
            seed: 7,
            mmm: EtmConfig {
                starts: 5,
                ..Default::default()
            },
            ..StudyConfig::new(truth)
        };
        let a = run_study(&cfg).unwrap();
        let b = run_study(&cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].n, 60);
        let mut buf = Vec::new();
        write_study_csv(&a, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("n,det_mm,det_ml,rgmse,failures_mm,failures_ml\n60,"));
    }

    #[test]
    fn study_config_checks() {
        let truth = ReparamMixture::uniform(2);
        let mut cfg = StudyConfig::new(truth);
        cfg.replicates = 1;
        assert!(cfg.validate().is_err());
        cfg.replicates = 2;
        cfg.sizes.clear();
        assert!(cfg.validate().is_err());
    }
}
