//! Finite mixtures of Kato-Jones circular distributions: densities, sampling, moment-based
//! and maximum-likelihood estimation, a von Mises mixture baseline, and a Monte Carlo
//! efficiency study.

// `!(x > 0.0)` is used deliberately so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod angle;
pub mod cli;
pub mod em;
pub mod error;
pub mod io;
pub mod kato_jones;
pub mod mixture;
pub mod moment_estimation;
pub mod numeric;
pub mod optimize;
pub mod report;
pub mod sampling;
pub mod simulation;
pub mod vonmises;

pub use angle::Angle;
pub use em::{em_fit, EmConfig, EmFit};
pub use error::{Error, Result};
pub use kato_jones::{gamma_bar, KatoJonesParams, ShapeParams};
pub use mixture::{
    recover_original, to_reparam, OriginalMixture, ReparamComponent, ReparamMixture,
};
pub use moment_estimation::{fit_mmm, fit_mmm_sample, EtmConfig, MmmFit, TrigMoments};
pub use sampling::sample;
