//! Fit reports, model loading, and the density, histogram, and moment tables.

use std::f64::consts::TAU;
use std::fs;
use std::io::Write;
use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::angle::Angle;
use crate::em::{aic, bic, log_likelihood};
use crate::error::{Error, Result};
use crate::kato_jones::ShapeParams;
use crate::mixture::{recover_original, OriginalMixture, ReparamMixture};
use crate::moment_estimation::{empirical_trig_moments, etm, TrigMoments};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Mmm,
    Mle,
    Both,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mmm" => Ok(Method::Mmm),
            "mle" => Ok(Method::Mle),
            "both" => Ok(Method::Both),
            other => Err(Error::Config(format!(
                "unknown method '{other}' (mmm, mle, both)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeDoc {
    pub radians: f64,
    pub clock: String,
}

/// One estimate in every parametrization, with its fit statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateDoc {
    pub reparam: ReparamMixture,
    /// Absent when all mass sits on the uniform component.
    pub original: Option<OriginalMixture>,
    pub shape: Vec<ShapeParams>,
    /// `None` for components without a unique mode.
    pub modes: Vec<Option<ModeDoc>>,
    pub etm: f64,
    pub loglik: f64,
    pub aic: f64,
    pub bic: f64,
    pub iterations: usize,
}

impl EstimateDoc {
    pub fn new(
        reparam: ReparamMixture,
        sample: &[Angle],
        emp: &TrigMoments,
        c: f64,
        iterations: usize,
    ) -> Result<Self> {
        let original = recover_original(&reparam).ok();
        let shape = original
            .as_ref()
            .map(|o| o.shape_params())
            .unwrap_or_default();
        let modes = match &original {
            Some(o) => o
                .components()
                .iter()
                .map(|k| {
                    k.mode().ok().map(|a| ModeDoc {
                        radians: a.radians(),
                        clock: a.to_clock(),
                    })
                })
                .collect(),
            None => vec![None; reparam.m()],
        };
        let loglik = log_likelihood(sample, &reparam)?;
        let m = reparam.m();
        Ok(EstimateDoc {
            etm: etm(&reparam, emp, c),
            aic: aic(loglik, m),
            bic: bic(loglik, m, sample.len()),
            loglik,
            reparam,
            original,
            shape,
            modes,
            iterations,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReportDoc {
    pub method: Method,
    pub m: usize,
    pub n: usize,
    pub q: usize,
    pub c: f64,
    pub starts: usize,
    pub seed: u64,
    pub mmm: Option<EstimateDoc>,
    pub mle: Option<EstimateDoc>,
    pub wall_time_ms: f64,
}

impl FitReportDoc {
    /// The estimate to use as "the model": MLE when present, else the moment estimate.
    pub fn best(&self) -> Option<&EstimateDoc> {
        self.mle.as_ref().or(self.mmm.as_ref())
    }
}

/// Parses either a fit report or a bare mixture.
pub fn parse_model(text: &str) -> Result<ReparamMixture> {
    let data_err = |e: serde_json::Error| Error::Parse {
        line: e.line(),
        message: e.to_string(),
    };
    let value: serde_json::Value = serde_json::from_str(text).map_err(data_err)?;
    if value.get("method").is_some() {
        let report: FitReportDoc = serde_json::from_value(value).map_err(data_err)?;
        return report
            .best()
            .map(|e| e.reparam.clone())
            .ok_or_else(|| Error::Parse {
                line: 1,
                message: "report holds no estimate".into(),
            });
    }
    serde_json::from_value(value).map_err(data_err)
}

pub fn load_model(path: &Path) -> Result<ReparamMixture> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_model(&text)
}

/// Density curve on `grid` equally spaced points with each component's weighted share.
pub fn write_density_csv<W: Write>(model: &ReparamMixture, grid: usize, mut out: W) -> Result<()> {
    if grid == 0 {
        return Err(Error::Config("grid must be at least 1".into()));
    }
    let m = model.m();
    let mut header = vec![
        "theta_rad".to_string(),
        "clock_hhmm".into(),
        "density_total".into(),
    ];
    header.extend((1..=m).map(|k| format!("density_component_{k}")));
    header.push("density_uniform".into());
    writeln!(out, "{}", header.join(","))?;
    for i in 0..grid {
        let theta = Angle::new(TAU * i as f64 / grid as f64);
        let mut row = vec![
            format!("{:.16e}", theta.radians()),
            theta.to_clock(),
            format!("{:.16e}", model.density(theta)),
        ];
        row.extend((0..=m).map(|k| format!("{:.16e}", model.weighted_component_density(theta, k))));
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

/// Histogram with `bins` equal-width bins over `[0, 2π)`, normalized as a density.
pub fn write_histogram_csv<W: Write>(sample: &[Angle], bins: usize, mut out: W) -> Result<()> {
    if bins == 0 {
        return Err(Error::Config("bins must be at least 1".into()));
    }
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let width = TAU / bins as f64;
    let mut counts = vec![0usize; bins];
    for a in sample {
        counts[((a.radians() / width) as usize).min(bins - 1)] += 1;
    }
    writeln!(out, "bin_start_rad,bin_end_rad,count,density")?;
    for (i, c) in counts.iter().enumerate() {
        let density = *c as f64 / (sample.len() as f64 * width);
        writeln!(
            out,
            "{:.16e},{:.16e},{},{:.16e}",
            i as f64 * width,
            (i + 1) as f64 * width,
            c,
            density
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentRow {
    pub p: usize,
    pub empirical: Complex64,
    pub theoretical: Complex64,
    pub squared_difference: f64,
}

pub fn moment_rows(sample: &[Angle], model: &ReparamMixture, q: usize) -> Result<Vec<MomentRow>> {
    let emp = empirical_trig_moments(sample, q)?;
    let th = TrigMoments::theoretical(model, q);
    Ok((1..=q)
        .map(|p| MomentRow {
            p,
            empirical: emp.get(p),
            theoretical: th.get(p),
            squared_difference: (emp.get(p) - th.get(p)).norm_sqr(),
        })
        .collect())
}

fn complex_str(z: Complex64) -> String {
    format!(
        "{:.6} {} {:.6}i",
        z.re,
        if z.im < 0.0 { '-' } else { '+' },
        z.im.abs()
    )
}

pub fn write_moment_table<W: Write>(rows: &[MomentRow], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "{:>3}  {:>26}  {:>26}  {:>12}",
        "p", "empirical", "theoretical", "sq. diff"
    )?;
    for r in rows {
        writeln!(
            out,
            "{:>3}  {:>26}  {:>26}  {:>12.3e}",
            r.p,
            complex_str(r.empirical),
            complex_str(r.theoretical),
            r.squared_difference
        )?;
    }
    Ok(())
}
