//! Special functions behind the closed-form binned probabilities.
//!
//! Everything that can overflow (factorials, powers of two, Gamma values at
//! half-integers) is carried as a [`SignedLog`] and only exponentiated at the
//! very end. Gamma itself is never exposed: poles show up as exact zeros of
//! the reciprocal.

use std::f64::consts::PI;

/// Lanczos parameter g = 607/128 with the matching 15-term series.
const LANCZOS_G: f64 = 607.0 / 128.0;
const LANCZOS_COEFFS: [f64; 15] = [
    0.999_999_999_999_997_1,
    57.156_235_665_862_92,
    -59.597_960_355_475_49,
    14.136_097_974_741_746,
    -0.491_913_816_097_620_2,
    3.399_464_998_481_189e-5,
    4.652_362_892_704_858e-5,
    -9.837_447_530_487_956e-5,
    1.580_887_032_249_125e-4,
    -2.102_644_417_241_049e-4,
    2.174_396_181_152_126_5e-4,
    -1.643_181_065_367_639e-4,
    8.441_822_398_385_275e-5,
    -2.619_083_840_158_141e-5,
    3.689_918_265_953_162_5e-6,
];
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// A real number stored as `sign * exp(ln_abs)`.
///
/// `sign` is exactly -1, 0 or +1; a zero value has `sign == 0` and the
/// magnitude is ignored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignedLog {
    pub sign: f64,
    pub ln_abs: f64,
}

impl SignedLog {
    pub const ZERO: SignedLog = SignedLog {
        sign: 0.0,
        ln_abs: f64::NEG_INFINITY,
    };
    pub const ONE: SignedLog = SignedLog {
        sign: 1.0,
        ln_abs: 0.0,
    };

    pub fn from_f64(x: f64) -> Self {
        if x == 0.0 {
            Self::ZERO
        } else {
            Self {
                sign: x.signum(),
                ln_abs: x.abs().ln(),
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0.0
    }

    pub fn to_f64(self) -> f64 {
        if self.is_zero() {
            0.0
        } else {
            self.sign * self.ln_abs.exp()
        }
    }

    pub fn recip(self) -> Self {
        assert!(!self.is_zero(), "reciprocal of zero SignedLog");
        Self {
            sign: self.sign,
            ln_abs: -self.ln_abs,
        }
    }

    pub fn powi(self, k: i32) -> Self {
        if k == 0 {
            return Self::ONE;
        }
        if self.is_zero() {
            return Self::ZERO;
        }
        let sign = if k % 2 == 0 { 1.0 } else { self.sign };
        Self {
            sign,
            ln_abs: self.ln_abs * k as f64,
        }
    }
}

impl std::ops::Mul for SignedLog {
    type Output = SignedLog;

    fn mul(self, rhs: SignedLog) -> SignedLog {
        if self.is_zero() || rhs.is_zero() {
            SignedLog::ZERO
        } else {
            SignedLog {
                sign: self.sign * rhs.sign,
                ln_abs: self.ln_abs + rhs.ln_abs,
            }
        }
    }
}

impl std::ops::Div for SignedLog {
    type Output = SignedLog;

    fn div(self, rhs: SignedLog) -> SignedLog {
        let r = rhs.recip();
        SignedLog {
            sign: self.sign * r.sign,
            ln_abs: self.ln_abs + r.ln_abs,
        }
    }
}

/// `sin(pi * x)` with exact zeros at integers and exact +-1 at half-integers.
pub fn sin_pi(x: f64) -> f64 {
    if x.fract() == 0.0 {
        return 0.0;
    }
    // reduce to [0, 2)
    let r = x.rem_euclid(2.0);
    let (r, sign) = if r >= 1.0 { (r - 1.0, -1.0) } else { (r, 1.0) };
    let s = if r == 0.5 {
        1.0
    } else if r < 0.25 {
        (PI * r).sin()
    } else if r <= 0.75 {
        (PI * (0.5 - r)).cos()
    } else {
        (PI * (1.0 - r)).sin()
    };
    sign * s
}

fn is_nonpositive_integer(x: f64) -> bool {
    x <= 0.0 && x.fract() == 0.0
}

/// ln Gamma(x) for x >= 0.5 (Lanczos).
fn ln_gamma_lanczos(x: f64) -> f64 {
    let z = x - 1.0;
    let mut series = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        series += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    LN_SQRT_2PI + (z + 0.5) * t.ln() - t + series.ln()
}

/// `1/Gamma(x)` as a [`SignedLog`]; exact zero at the poles of Gamma.
pub fn reciprocal_gamma_signed(x: f64) -> SignedLog {
    if is_nonpositive_integer(x) {
        return SignedLog::ZERO;
    }
    if x >= 0.5 {
        SignedLog {
            sign: 1.0,
            ln_abs: -ln_gamma_lanczos(x),
        }
    } else {
        // 1/Gamma(x) = sin(pi x) Gamma(1 - x) / pi
        let s = sin_pi(x);
        SignedLog {
            sign: s.signum(),
            ln_abs: s.abs().ln() + ln_gamma_lanczos(1.0 - x) - PI.ln(),
        }
    }
}

/// Gamma(x) for 0.5 <= x < 140 (Lanczos, evaluated without logs).
fn gamma_lanczos(x: f64) -> f64 {
    let z = x - 1.0;
    let mut series = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        series += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * series
}

/// Reciprocal Gamma function. Exactly zero at 0, -1, -2, ...
pub fn reciprocal_gamma(x: f64) -> f64 {
    if is_nonpositive_integer(x) {
        return 0.0;
    }
    if x.fract() == 0.0 && x <= 171.0 {
        return 1.0 / (1..x as u64).map(|k| k as f64).product::<f64>();
    }
    if x >= 140.0 {
        return (-ln_gamma_lanczos(x)).exp();
    }
    if x >= 0.5 {
        return 1.0 / gamma_lanczos(x);
    }
    if x <= -139.0 {
        return reciprocal_gamma_signed(x).to_f64();
    }
    // reflection: 1/Gamma(x) = sin(pi x) Gamma(1 - x) / pi
    sin_pi(x) * gamma_lanczos(1.0 - x) / PI
}

/// ln(n!) exact to rounding for the sizes used here.
pub fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// `1/(Gamma(1/2 - n/2) Gamma(-m/2))` as a signed log.
///
/// Zero when `n` is odd or `m` is even.
pub fn f_coefficient_signed(n: u32, m: u32) -> SignedLog {
    reciprocal_gamma_signed(0.5 - 0.5 * n as f64) * reciprocal_gamma_signed(-0.5 * m as f64)
}

pub fn f_coefficient(n: u32, m: u32) -> f64 {
    f_coefficient_signed(n, m).to_f64()
}

/// `F(n,m) - F(m,n)` as a signed log. At most one of the two terms is nonzero
/// (it needs `n` even and `m` odd, or the reverse), so no subtraction occurs.
pub(crate) fn f_difference_signed(n: u32, m: u32) -> SignedLog {
    let a = f_coefficient_signed(n, m);
    let b = f_coefficient_signed(m, n);
    match (a.is_zero(), b.is_zero()) {
        (true, true) => SignedLog::ZERO,
        (false, true) => a,
        (true, false) => SignedLog {
            sign: -b.sign,
            ln_abs: b.ln_abs,
        },
        (false, false) => unreachable!("F(n,m) and F(m,n) cannot both be nonzero"),
    }
}

/// Half-range overlap `int_0^inf exp(-x^2) H_n(x) H_m(x) dx` as a signed log.
pub fn half_range_overlap_signed(n: u32, m: u32) -> SignedLog {
    if n == m {
        // half the full-line orthogonality integral: 2^(n-1) n! sqrt(pi)
        return SignedLog {
            sign: 1.0,
            ln_abs: (n as f64 - 1.0) * std::f64::consts::LN_2 + ln_factorial(n) + 0.5 * PI.ln(),
        };
    }
    let diff = f_difference_signed(n, m);
    if diff.is_zero() {
        return SignedLog::ZERO;
    }
    let gap = n as f64 - m as f64;
    let prefactor = SignedLog {
        sign: gap.signum(),
        ln_abs: PI.ln() + (n + m) as f64 * std::f64::consts::LN_2 - gap.abs().ln(),
    };
    prefactor * diff
}

/// `int_0^inf exp(-x^2) H_n(x) H_m(x) dx`.
pub fn half_range_overlap(n: u32, m: u32) -> f64 {
    half_range_overlap_signed(n, m).to_f64()
}

/// Normalized oscillator eigenfunction `H_n(x) exp(-x^2/2) / sqrt(2^n n! sqrt(pi))`.
pub fn oscillator_fn(n: u32, x: f64) -> f64 {
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25) * (-0.5 * x * x).exp();
    for k in 0..n {
        let next =
            (2.0 / (k as f64 + 1.0)).sqrt() * x * cur - (k as f64 / (k as f64 + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// All oscillator functions of order `0..=max_order` at `x`.
pub fn oscillator_fns(max_order: u32, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(max_order as usize + 1);
    let mut prev = 0.0;
    let mut cur = PI.powf(-0.25) * (-0.5 * x * x).exp();
    out.push(cur);
    for k in 0..max_order {
        let next =
            (2.0 / (k as f64 + 1.0)).sqrt() * x * cur - (k as f64 / (k as f64 + 1.0)).sqrt() * prev;
        prev = cur;
        cur = next;
        out.push(cur);
    }
    out
}

/// Modified Bessel function `I_0(z)` by its power series.
///
/// All terms are positive so the sum has no cancellation; the loop runs until
/// the next term no longer changes the sum.
pub fn bessel_i0(z: f64) -> f64 {
    let q = 0.25 * z * z;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        term *= q / (k * k);
        let next = sum + term;
        if next == sum {
            break;
        }
        sum = next;
        k += 1.0;
    }
    sum
}
