//! Gaussian tail functions evaluated without underflow.

use libm::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

/// ln(2π)/2
pub const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Mills ratio `e^{z²/2} ∫_z^∞ e^{-w²/2} dw` for `z ≥ 4` by a fixed-depth
/// continued fraction, evaluated bottom-up.
fn mills_ratio_cf(z: f64) -> f64 {
    let mut acc = z;
    for k in (1..=80).rev() {
        acc = z + k as f64 / acc;
    }
    1.0 / acc
}

/// `ln L(z)` where `L(z) = ∫_z^∞ e^{-w²/2} dw`.
pub fn ln_mills_tail(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    if z == f64::NEG_INFINITY {
        return 0.5 * (2.0 * PI).ln();
    }
    if z == f64::INFINITY {
        return f64::NEG_INFINITY;
    }
    if z < 4.0 {
        ((PI / 2.0).sqrt() * erfc(z * FRAC_1_SQRT_2)).ln()
    } else {
        -0.5 * z * z + mills_ratio_cf(z).ln()
    }
}

/// Gaussian upper-tail integral `L(z) = ∫_z^∞ e^{-w²/2} dw`.
///
/// Strictly decreasing from `√(2π)` at `-∞` to 0 at `+∞`.
pub fn mills_tail(z: f64) -> f64 {
    ln_mills_tail(z).exp()
}

/// `ln Φ(z)` for the standard normal cdf.
pub fn ln_normal_cdf(z: f64) -> f64 {
    ln_mills_tail(-z) - LN_SQRT_2PI
}

/// `ln(1 - e^{x})` for `x ≤ 0`.
pub fn ln_one_minus_exp(x: f64) -> f64 {
    if x > -std::f64::consts::LN_2 {
        (-x.exp_m1()).ln()
    } else {
        (-x.exp()).ln_1p()
    }
}

/// `ln(e^a + e^b)`.
pub fn ln_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}
