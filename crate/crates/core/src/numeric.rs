//! Small numerical kernels shared by every module: compensated summation,
//! the character `e(x) = exp(2πix)`, 128-bit fixed-point phases and seeded
//! random substreams.

use std::f64::consts::TAU;
use std::ops::{Add, Neg, Sub};

use num_bigint::BigUint;
use num_complex::Complex64;
use num_traits::{ToPrimitive, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Neumaier-compensated running sum.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of complex values, real and imaginary parts tracked
/// separately.
#[derive(Clone, Copy, Debug, Default)]
pub struct ComplexSum {
    re: NeumaierSum,
    im: NeumaierSum,
}

impl ComplexSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, z: Complex64) {
        self.re.add(z.re);
        self.im.add(z.im);
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re.value(), self.im.value())
    }
}

/// Sums in slice order with compensation. Callers that reduce parallel
/// partials collect them into a slice first so the order is canonical.
pub fn csum(values: &[Complex64]) -> Complex64 {
    let mut acc = ComplexSum::new();
    for &v in values {
        acc.add(v);
    }
    acc.value()
}

pub fn fsum(values: &[f64]) -> f64 {
    let mut acc = NeumaierSum::new();
    for &v in values {
        acc.add(v);
    }
    acc.value()
}

/// `e(x) = exp(2πi x)`.
#[inline]
pub fn e(x: f64) -> Complex64 {
    let t = x - x.floor();
    let (s, c) = (TAU * t).sin_cos();
    Complex64::new(c, s)
}

/// A point of the circle `R/Z` stored as a 128-bit binary fraction
/// `value / 2^128`. Addition and integer multiplication wrap, which is
/// exactly reduction mod 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default, Serialize, Deserialize)]
pub struct Frac128(pub u128);

impl Frac128 {
    pub const ZERO: Frac128 = Frac128(0);
    pub const HALF: Frac128 = Frac128(1 << 127);

    /// Fractional part of a double; exact, since doubles are dyadic.
    pub fn from_f64(x: f64) -> Self {
        let t = x - x.floor();
        // t * 2^64 is exact (power-of-two scaling), as is the remainder.
        let scaled = t * 18446744073709551616.0;
        let hi = scaled.floor();
        let lo = (scaled - hi) * 18446744073709551616.0;
        let hi = hi as u128 & (u64::MAX as u128);
        Frac128((hi << 64) | (lo as u64 as u128))
    }

    /// `floor(2^128 · (p/q mod 1))` for `q > 0`.
    pub fn from_ratio(p: i128, q: u128) -> Result<Self> {
        if q == 0 {
            return Err(LabError::invalid("zero denominator"));
        }
        let r = p.rem_euclid(q as i128) as u128;
        let num = BigUint::from(r) << 128u32;
        let v = num / BigUint::from(q);
        Ok(Frac128(v.to_u128().unwrap_or(0)))
    }

    /// `√2 − 1` to 128 fractional bits (truncated).
    pub fn sqrt2_minus_1() -> Self {
        let two_scaled = BigUint::from(2u32) << 256u32;
        let root = two_scaled.sqrt();
        let one = BigUint::from(1u32) << 128u32;
        let frac = root - one;
        Frac128(frac.to_u128().unwrap_or(0))
    }

    #[inline]
    pub fn mul_int(self, n: i128) -> Self {
        Frac128(self.0.wrapping_mul(n as u128))
    }

    pub fn to_f64(self) -> f64 {
        (self.0 >> 64) as f64 / 18446744073709551616.0
            + (self.0 as u64) as f64 / 18446744073709551616.0 / 18446744073709551616.0
    }

    /// `e(self)`, exact at the quarter points.
    pub fn e(self) -> Complex64 {
        match self.0 {
            0 => Complex64::new(1.0, 0.0),
            x if x == 1u128 << 126 => Complex64::new(0.0, 1.0),
            x if x == 1u128 << 127 => Complex64::new(-1.0, 0.0),
            x if x == 3u128 << 126 => Complex64::new(0.0, -1.0),
            _ => {
                let (s, c) = (TAU * self.to_f64()).sin_cos();
                Complex64::new(c, s)
            }
        }
    }

    /// Distance to the nearest integer, in `[0, 1/2]`.
    pub fn circle_norm(self) -> f64 {
        let t = self.to_f64();
        t.min(1.0 - t)
    }
}

impl Add for Frac128 {
    type Output = Frac128;
    fn add(self, rhs: Frac128) -> Frac128 {
        Frac128(self.0.wrapping_add(rhs.0))
    }
}

impl Sub for Frac128 {
    type Output = Frac128;
    fn sub(self, rhs: Frac128) -> Frac128 {
        Frac128(self.0.wrapping_sub(rhs.0))
    }
}

impl Neg for Frac128 {
    type Output = Frac128;
    fn neg(self) -> Frac128 {
        Frac128(self.0.wrapping_neg())
    }
}

/// Independent random substream `stream` of the master `seed`. Results depend
/// only on `(seed, stream)`, never on how work is scheduled.
pub fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Clamp a provably nonnegative accumulation: values in `[-tol, 0)` become 0,
/// anything below `-tol` is an error.
pub fn clamp_nonnegative(value: f64, tol: f64, what: &str) -> Result<f64> {
    if value < -tol || value.is_nan() {
        return Err(LabError::Negative {
            what: what.to_string(),
            value,
        });
    }
    Ok(value.max(0.0))
}

/// Radial clip of a complex value to the disc of radius `r`.
#[inline]
pub fn clip_radius(z: Complex64, r: f64) -> Complex64 {
    let a = z.norm();
    if a <= r {
        return z;
    }
    let mut w = z * (r / a);
    // Rounding can land a hair outside the disc.
    while w.norm() > r {
        w *= 1.0 - f64::EPSILON;
    }
    w
}

pub fn is_zero(z: Complex64) -> bool {
    z.is_zero()
}
