//! Small numerical helpers shared across modules.

use std::f64::consts::TAU;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximizes a 2π-periodic function: grid argmax followed by golden-section
/// refinement on the bracketing cell pair. Returns `(θ, f(θ))` with θ unwrapped
/// (callers wrap it).
pub fn argmax_on_circle<F: Fn(f64) -> f64>(f: F, grid: usize, tol: f64) -> (f64, f64) {
    let h = TAU / grid as f64;
    let mut best = (0.0, f(0.0));
    for i in 1..grid {
        let t = h * i as f64;
        let v = f(t);
        if v > best.1 {
            best = (t, v);
        }
    }
    let (t, v) = golden_max(&f, best.0 - h, best.0 + h, tol);
    if v >= best.1 {
        (t, v)
    } else {
        best
    }
}

/// Golden-section search for the maximum of a unimodal function on `[a, b]`.
pub fn golden_max<F: Fn(f64) -> f64>(f: &F, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while (b - a).abs() > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// SplitMix64 finalizer.
#[inline]
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a child seed from a base seed and a path of indices. Stable across
/// platforms and independent of scheduling.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(mix64(base), |acc, &i| mix64(acc ^ mix64(i)))
}

pub fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_parabola_peak() {
        let (t, v) = golden_max(&|x: f64| -(x - 0.3).powi(2), -1.0, 2.0, 1e-10);
        assert!((t - 0.3).abs() < 1e-9);
        assert!(v.abs() < 1e-18);
    }

    #[test]
    fn circle_argmax_handles_wraparound() {
        // peak at 0 sits on the first grid point; bracket straddles the seam
        let (t, _) = argmax_on_circle(|x: f64| x.cos(), 64, 1e-12);
        assert!(crate::angle::wrap_signed(t).abs() < 1e-6);
    }

    #[test]
    fn seeds_differ_by_path() {
        let a = derive_seed(7, &[0]);
        let b = derive_seed(7, &[1]);
        let c = derive_seed(8, &[0]);
        assert_ne!(a, b);
        assert_ne!(a, c);
        assert_eq!(a, derive_seed(7, &[0]));
        assert_ne!(derive_seed(7, &[1, 2]), derive_seed(7, &[2, 1]));
    }
}
