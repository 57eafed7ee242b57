//! Random draws from a reparametrized mixture.
//!
//! A component index is drawn from the weights; the uniform component yields a uniform
//! angle, and a Kato-Jones component is sampled by rejection against a flat envelope
//! certified on a grid.

use std::f64::consts::TAU;

use rand::Rng;

use crate::angle::Angle;
use crate::error::{Error, Result};
use crate::kato_jones::{KatoJonesParams, MODE_GRID};
use crate::mixture::ReparamMixture;
use crate::numeric::rng_from_seed;

#[derive(Debug, Clone, Copy)]
struct Envelope {
    comp: KatoJonesParams,
    height: f64,
}

impl Envelope {
    fn new(comp: KatoJonesParams) -> Self {
        let grid_max = (0..MODE_GRID)
            .map(|i| comp.density(Angle::new(TAU * i as f64 / MODE_GRID as f64)))
            .fold(f64::MIN, f64::max);
        let mut height = grid_max * 1.001;
        let refined = comp.mode().map(|t| comp.density(t)).unwrap_or(grid_max);
        if refined > grid_max {
            height *= 1.05;
        }
        if refined > height {
            height = refined * 1.05;
        }
        Envelope { comp, height }
    }

    fn draw<R: Rng>(&self, rng: &mut R) -> Result<Angle> {
        loop {
            let theta = Angle::new(rng.gen::<f64>() * TAU);
            let y = rng.gen::<f64>() * self.height;
            let d = self.comp.density(theta);
            if d > self.height {
                return Err(Error::EnvelopeFailure {
                    density: d,
                    envelope: self.height,
                });
            }
            if y < d {
                return Ok(theta);
            }
        }
    }
}

/// Draws `n` i.i.d. angles; deterministic given `seed`.
pub fn sample(m: &ReparamMixture, n: usize, seed: u64) -> Result<Vec<Angle>> {
    if n == 0 {
        return Err(Error::Config("sample size must be at least 1".into()));
    }
    let mut rng = rng_from_seed(seed);
    let envelopes: Vec<Option<Envelope>> = m
        .components()
        .iter()
        .zip(m.weights())
        .map(|(c, &w)| (w > 0.0).then(|| Envelope::new(c.kato_jones())))
        .collect();
    let mut cumulative = Vec::with_capacity(m.m() + 1);
    let mut acc = 0.0;
    for w in m.weights() {
        acc += w;
        cumulative.push(acc);
    }

    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let u = rng.gen::<f64>() * acc;
        let k = cumulative.iter().position(|&c| u < c).unwrap_or(m.m());
        let theta = match envelopes.get(k).copied().flatten() {
            Some(env) => env.draw(&mut rng)?,
            None => Angle::new(rng.gen::<f64>() * TAU),
        };
        out.push(theta);
    }
    Ok(out)
}
