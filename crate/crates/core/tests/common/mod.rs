//! Closed forms and an eigenvalue solver that share no code with the library.

#![allow(dead_code)]

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn ground_state(r: f64) -> f64 {
    1.0 / (1.0 + r * r / 8.0)
}

/// Kelvin image of the ground state, `8 W(8x)`.
pub fn kelvin_image(r: f64) -> f64 {
    8.0 / (1.0 + 8.0 * r * r)
}

/// `∫ W⁴` over R⁴.
pub fn quartic_integral() -> f64 {
    32.0 * PI * PI / 3.0
}

/// `½∫(|∇W|² − ¼W⁴)`, using `∫|∇W|² = ∫W⁴`.
pub fn ground_energy() -> f64 {
    4.0 * PI * PI
}

/// Lowest bound state of `−Δ − 3W²` in the radial sector by Numerov shooting
/// on `u = r^{3/2} y`, for which `u'' = (λ² − 3W² + 3/(4r²)) u`.
/// Returns `λ` with `−λ²` the eigenvalue.
pub fn numerov_rate(r_max: f64, h: f64) -> f64 {
    let n = (r_max / h).round() as usize;
    // True when the regular solution stays positive out to r_max.
    let positive = |lam: f64| {
        let g = |r: f64| lam * lam - 3.0 * ground_state(r).powi(2) + 0.75 / (r * r);
        let start = |r: f64| r.powf(1.5) * (1.0 + (lam * lam - 3.0) * r * r / 8.0);
        let c = h * h / 12.0;
        let (mut r0, mut r1) = (h, 2.0 * h);
        let (mut u0, mut u1) = (start(r0), start(r1));
        for _ in 2..n {
            let r2 = r1 + h;
            let u2 = (2.0 * u1 * (1.0 + 5.0 * c * g(r1)) - u0 * (1.0 - c * g(r0))) / (1.0 - c * g(r2));
            if u2 < 0.0 {
                return false;
            }
            (r0, r1, u0, u1) = (r1, r2, u1, u2);
        }
        true
    };
    let (mut lo, mut hi) = (0.1, 1.7);
    assert!(!positive(lo) && positive(hi), "bracket does not straddle the bound state");
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if positive(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Seeded points in the box `[-half, half]⁴`.
pub fn box_points(count: usize, half: f64, seed: u64) -> Vec<[f64; 4]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| std::array::from_fn(|_| rng.gen_range(-half..half))).collect()
}
