//! Special functions: digamma, log-sum-exp and row softmax.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

// B_{2k} / (2k) for k = 1..7, the asymptotic tail of psi.
const DIGAMMA_ASYMP: [f64; 7] = [
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
];

/// Digamma function ψ(x) = d/dx ln Γ(x) for x > 0.
///
/// Shifts x above 6 with ψ(x) = ψ(x+1) − 1/x, then sums the asymptotic
/// series in 1/x². Absolute error is below 1e-12 in `f64` for x ≥ 1e-3.
pub fn digamma<T: Scalar>(x: T) -> Result<T> {
    if !(x > T::zero()) || !x.is_finite() {
        return Err(Error::Invalid(format!("digamma requires x > 0, got {x}")));
    }
    Ok(digamma_pos(x))
}

/// Digamma without the domain check. Caller guarantees `x > 0`.
#[inline]
pub fn digamma_pos<T: Scalar>(x: T) -> T {
    let one = T::one();
    let threshold = T::lit(6.0);
    let mut acc = T::zero();
    let mut xx = x;
    while xx < threshold {
        acc -= one / xx;
        xx += one;
    }
    acc += xx.ln() - T::lit(0.5) / xx;
    let inv_x2 = one / (xx * xx);
    let mut term = inv_x2;
    for &c in &DIGAMMA_ASYMP {
        acc -= T::lit(c) * term;
        term *= inv_x2;
    }
    acc
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// ln Γ(x) for x > 0 (Lanczos, evaluated in `f64`).
pub fn ln_gamma<T: Scalar>(x: T) -> T {
    T::lit(ln_gamma_f64(x.to_f64_lossless()))
}

fn ln_gamma_f64(x: f64) -> f64 {
    if x < 0.5 {
        // reflection keeps the series in its accurate range
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma_f64(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = LANCZOS[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, &c) in LANCZOS.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// log Σ exp(xᵢ) with max-subtraction. Returns −∞ for an empty slice.
pub fn log_sum_exp<T: Scalar>(xs: &[T]) -> T {
    let max = xs.iter().copied().fold(T::neg_infinity(), T::max);
    if !max.is_finite() {
        return max;
    }
    let s: T = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// In-place softmax over `xs`. Returns the log-normalizer.
pub fn softmax_in_place<T: Scalar>(xs: &mut [T]) -> T {
    let lse = log_sum_exp(xs);
    for x in xs.iter_mut() {
        *x = (*x - lse).exp();
    }
    lse
}
