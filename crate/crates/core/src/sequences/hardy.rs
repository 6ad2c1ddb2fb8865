//! Hardy-type sequences `[a(n)]` with `a(t) = Σ c t^e (log t)^k`.
//!
//! Floors must be bit-exact, so two integer paths come first: a `u128`
//! root for a single term with an integer coefficient, and a fixed-point
//! interval evaluation for sums of rational powers with denominator at most
//! four (the coefficient of a double is an exact dyadic). Anything else
//! falls back to a double evaluation whose floor is accepted only when a
//! conservative error window does not straddle an integer.

use std::fmt;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::float::FloatCore;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::poly::PolynomialZ;
use crate::error::{LabError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardyTerm {
    pub coeff: f64,
    pub exponent: f64,
    pub log_power: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HardyExpr {
    terms: Vec<HardyTerm>,
}

/// Outcome of the log-away classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum LogAway {
    Satisfied,
    Violated { c: f64, p: PolynomialZ },
    Unknown,
}

const MAX_DENOMINATOR: u32 = 4;

impl HardyExpr {
    pub fn new(terms: Vec<HardyTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(LabError::invalid("Hardy expression needs at least one term"));
        }
        for t in &terms {
            if !t.coeff.is_finite() || !t.exponent.is_finite() || t.exponent < 0.0 {
                return Err(LabError::invalid(format!(
                    "Hardy term {}*t^{} has a non-finite coefficient or a negative exponent",
                    t.coeff, t.exponent
                )));
            }
        }
        let h = HardyExpr { terms };
        if !h.eventually_monotone() {
            return Err(LabError::invalid("Hardy expression is not monotone on [5000, 10000]"));
        }
        Ok(h)
    }

    /// `t^e` with coefficient one.
    pub fn power(e: f64) -> Result<Self> {
        Self::new(vec![HardyTerm { coeff: 1.0, exponent: e, log_power: 0 }])
    }

    pub fn terms(&self) -> &[HardyTerm] {
        &self.terms
    }

    pub fn value_f64(&self, t: f64) -> f64 {
        let l = t.ln();
        self.terms
            .iter()
            .map(|term| term.coeff * t.powf(term.exponent) * l.powi(term.log_power as i32))
            .sum()
    }

    fn eventually_monotone(&self) -> bool {
        let vals: Vec<f64> = (0..=100).map(|i| self.value_f64(5000.0 + 50.0 * i as f64)).collect();
        let tol = |a: f64, b: f64| 1e-12 * a.abs().max(b.abs()).max(1.0);
        let up = vals.windows(2).all(|w| w[1] >= w[0] - tol(w[0], w[1]));
        let down = vals.windows(2).all(|w| w[1] <= w[0] + tol(w[0], w[1]));
        up || down
    }

    /// `floor(a(n))` for `n ≥ 1`.
    pub fn eval(&self, n: u64) -> Result<BigInt> {
        if n == 0 {
            return Err(LabError::invalid("Hardy sequences are indexed from n = 1"));
        }
        // log 1 = 0 kills every logarithmic term exactly.
        let live: Vec<HardyTerm> = self
            .terms
            .iter()
            .copied()
            .filter(|t| !(n == 1 && t.log_power > 0) && t.coeff != 0.0)
            .collect();
        if live.is_empty() {
            return Ok(BigInt::zero());
        }
        if live.len() == 1 {
            if let Some(v) = fast_single(&live[0], n) {
                return Ok(BigInt::from(v));
            }
        }
        let rational: Option<Vec<(u32, u32)>> = live
            .iter()
            .map(|t| if t.log_power == 0 { rational_exponent(t.exponent) } else { None })
            .collect();
        if let Some(exps) = rational {
            for frac_bits in [64u32, 192] {
                if let Some(v) = fixed_point_floor(&live, &exps, n, frac_bits) {
                    return Ok(v);
                }
            }
            return Err(LabError::Precision(format!(
                "cannot certify floor of {self} at n = {n}"
            )));
        }
        float_floor(&live, n).ok_or_else(|| {
            LabError::Precision(format!("floating window for {self} at n = {n} straddles an integer"))
        })
    }

    /// Same as [`eval`](Self::eval) narrowed to `i128`.
    pub fn eval_i128(&self, n: u64) -> Result<i128> {
        if let [t] = self.terms.as_slice() {
            if n > 0 {
                if let Some(v) = fast_single(t, n) {
                    return Ok(v);
                }
            }
        }
        let v = self.eval(n)?;
        v.to_i128()
            .ok_or_else(|| LabError::Precision(format!("[a({n})] does not fit in 128 bits")))
    }

    /// Conservative check of the log-away condition: `a(t) − c p(t)` must
    /// escape every multiple of `log t` for all real `c` and integer `p`.
    pub fn classify_log_away(&self) -> LogAway {
        // Merge like terms so nothing can cancel later.
        let mut merged: Vec<HardyTerm> = Vec::new();
        for t in &self.terms {
            match merged
                .iter_mut()
                .find(|m| m.exponent == t.exponent && m.log_power == t.log_power)
            {
                Some(m) => m.coeff += t.coeff,
                None => merged.push(*t),
            }
        }
        merged.retain(|t| t.coeff != 0.0 && !(t.exponent == 0.0 && t.log_power <= 1));

        // A noninteger power, t^j log^k t with j ≥ 1, or log^k t with k ≥ 2 all
        // outgrow C log t and cannot be matched by a polynomial.
        if merged.iter().any(|t| t.exponent.fract() != 0.0 || t.log_power > 0) {
            return LogAway::Satisfied;
        }
        let degree = merged.iter().map(|t| t.exponent as usize).max();
        let Some(degree) = degree else {
            return LogAway::Violated { c: 1.0, p: PolynomialZ::zero() };
        };
        let mut profile = vec![0.0; degree + 1];
        for t in &merged {
            profile[t.exponent as usize] += t.coeff;
        }
        let lead = profile[degree];
        let mut ratios = Vec::with_capacity(degree);
        for &c in &profile[1..] {
            match rationalize(c / lead) {
                Rationality::Rational(p, q) => ratios.push((p, q)),
                Rationality::Ambiguous => return LogAway::Unknown,
                Rationality::Irrational => return LogAway::Satisfied,
            }
        }
        let l = ratios.iter().fold(1i64, |acc, &(_, q)| acc.lcm(&q));
        let ints: Vec<i64> = ratios.iter().map(|&(p, q)| p * (l / q)).collect();
        let g = ints.iter().fold(0i64, |acc, &v| acc.gcd(&v)).max(1);
        let mut coeffs = vec![0i64];
        coeffs.extend(ints.iter().map(|v| v / g));
        LogAway::Violated { c: lead * g as f64 / l as f64, p: PolynomialZ::new(coeffs) }
    }
}

enum Rationality {
    Rational(i64, i64),
    Ambiguous,
    Irrational,
}

/// Treats `x` as rational when a continued-fraction convergent with
/// denominator ≤ 10^6 reproduces it up to double rounding, and as
/// irrational when no denominator ≤ 10^3 comes within 10^-9.
fn rationalize(x: f64) -> Rationality {
    let tol = 64.0 * f64::EPSILON * x.abs().max(1.0);
    let (mut h0, mut h1) = (0i128, 1i128);
    let (mut k0, mut k1) = (1i128, 0i128);
    let mut r = x;
    let mut suspicious = false;
    for _ in 0..64 {
        let a = r.floor();
        if a.abs() > 1e15 {
            break;
        }
        let ai = a as i128;
        let (h2, k2) = (ai * h1 + h0, ai * k1 + k0);
        if k2 > 1_000_000 {
            break;
        }
        let err = (x - h2 as f64 / k2 as f64).abs();
        if err <= tol {
            return Rationality::Rational(h2 as i64, k2 as i64);
        }
        if k2 <= 1000 && err <= 1e-9 {
            suspicious = true;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let frac = r - a;
        if frac == 0.0 {
            break;
        }
        r = 1.0 / frac;
    }
    if suspicious {
        Rationality::Ambiguous
    } else {
        Rationality::Irrational
    }
}

/// `e = p/q` with `q ≤ 4`, recognised up to double rounding.
fn rational_exponent(e: f64) -> Option<(u32, u32)> {
    (1..=MAX_DENOMINATOR).find_map(|q| {
        let s = e * q as f64;
        let r = s.round();
        ((s - r).abs() <= 1e-12 * s.abs().max(1.0) && r < u32::MAX as f64).then(|| (r as u32, q))
    })
}

/// Floor of the `q`-th root of `v`, and whether the root is exact.
pub fn iroot_u128(v: u128, q: u32) -> (u128, bool) {
    if q == 1 || v < 2 {
        return (v, true);
    }
    let mut r = (v as f64).powf(1.0 / q as f64) as u128;
    let fits = |r: u128| r.checked_pow(q).is_some_and(|p| p <= v);
    while !fits(r) {
        r -= 1;
    }
    while fits(r + 1) {
        r += 1;
    }
    (r, r.pow(q) == v)
}

fn fast_single(t: &HardyTerm, n: u64) -> Option<i128> {
    if t.log_power != 0 || t.coeff.fract() != 0.0 || t.coeff.abs() > 9.0e15 {
        return None;
    }
    let (p, q) = rational_exponent(t.exponent)?;
    let c = t.coeff.abs() as u128;
    let radicand = c.checked_pow(q)?.checked_mul((n as u128).checked_pow(p)?)?;
    let (r, exact) = iroot_u128(radicand, q);
    let r = i128::try_from(r).ok()?;
    Some(if t.coeff > 0.0 {
        r
    } else if exact {
        -r
    } else {
        -r - 1
    })
}

fn fixed_point_floor(terms: &[HardyTerm], exps: &[(u32, u32)], n: u64, frac_bits: u32) -> Option<BigInt> {
    let decoded: Vec<(u64, i16, i8)> = terms.iter().map(|t| t.coeff.integer_decode()).collect();
    let shift = decoded.iter().map(|d| (-(d.1 as i64)).max(0)).max().unwrap_or(0) as u32;
    let mut lo = BigInt::zero();
    let mut hi = BigInt::zero();
    let mut exact = true;
    for ((mant, e2, sign), &(p, q)) in decoded.iter().zip(exps) {
        let target = BigUint::from(n).pow(p) << (frac_bits as usize * q as usize);
        let root = target.nth_root(q);
        let root_exact = root.pow(q) == target;
        exact &= root_exact;
        let scale = (*e2 as i64 + shift as i64) as usize;
        let m = BigUint::from(*mant) << scale;
        let a = BigInt::from_biguint(Sign::Plus, &m * &root);
        let b = if root_exact { a.clone() } else { BigInt::from_biguint(Sign::Plus, &m * (&root + BigUint::one())) };
        if *sign > 0 {
            lo += a;
            hi += b;
        } else {
            lo -= b;
            hi -= a;
        }
    }
    let unit = BigInt::one() << (frac_bits + shift) as usize;
    let f_lo = lo.div_floor(&unit);
    // The true value lies strictly below `hi` unless every root was exact.
    let f_hi = if exact { hi.div_floor(&unit) } else { (hi - BigInt::one()).div_floor(&unit) };
    (f_lo == f_hi).then_some(f_lo)
}

fn float_floor(terms: &[HardyTerm], n: u64) -> Option<BigInt> {
    let t = n as f64;
    if t as u64 != n {
        return None;
    }
    let l = t.ln();
    let mut v = 0.0;
    let mut err = 0.0;
    for term in terms {
        let x = term.coeff * t.powf(term.exponent) * l.powi(term.log_power as i32);
        v += x;
        err += x.abs() * (term.log_power as f64 + 8.0) * f64::EPSILON;
    }
    err += v.abs() * terms.len() as f64 * f64::EPSILON;
    let (a, b) = ((v - 2.0 * err).floor(), (v + 2.0 * err).floor());
    (a == b && a.abs() < 9.0e15).then(|| BigInt::from(a as i64))
}

impl fmt::Display for HardyExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, t) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{:?}*t^{:?}", t.coeff, t.exponent)?;
            if t.log_power > 0 {
                write!(f, "*log^{}", t.log_power)?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn term(c: f64, e: f64, k: u32) -> HardyTerm {
        HardyTerm { coeff: c, exponent: e, log_power: k }
    }

    #[test]
    fn spec_examples() {
        let h = HardyExpr::power(1.5).unwrap();
        assert_eq!(h.eval(4).unwrap(), BigInt::from(8));
        assert_eq!(h.eval(2).unwrap(), BigInt::from(2));
        let tlog = HardyExpr::new(vec![term(1.0, 1.0, 1)]).unwrap();
        assert_eq!(tlog.eval(1).unwrap(), BigInt::from(0));
    }

    #[test]
    fn three_halves_matches_integer_root() {
        let h = HardyExpr::power(1.5).unwrap();
        for n in 1u64..=100_000 {
            let want = bisect_isqrt(n as u128 * n as u128 * n as u128);
            assert_eq!(h.eval_i128(n).unwrap(), want as i128, "n = {n}");
        }
    }

    // Bisection; deliberately independent of the root routine under test.
    fn bisect_isqrt(v: u128) -> u128 {
        let (mut lo, mut hi) = (0u128, 1u128 << 64);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if mid * mid <= v {
                lo = mid
            } else {
                hi = mid
            }
        }
        lo
    }

    #[test]
    fn sums_of_powers_use_fixed_point() {
        // floor(√2 n² + n) against a 40-digit integer oracle.
        let h = HardyExpr::new(vec![term(std::f64::consts::SQRT_2, 2.0, 0), term(1.0, 1.0, 0)]).unwrap();
        let c = BigInt::from(std::f64::consts::SQRT_2.integer_decode().0);
        let e = std::f64::consts::SQRT_2.integer_decode().1;
        for n in [1u64, 2, 17, 1000, 123_456, 10_000_000] {
            let nn = BigInt::from(n);
            // c * 2^e * n^2 + n with e < 0.
            let num = &c * &nn * &nn;
            let want = num.div_floor(&(BigInt::one() << (-e) as usize)) + &nn;
            assert_eq!(h.eval(n).unwrap(), want, "n = {n}");
        }
    }

    #[test]
    fn negative_coefficients_floor_downwards() {
        let h = HardyExpr::new(vec![term(-1.0, 0.5, 0)]).unwrap();
        assert_eq!(h.eval(2).unwrap(), BigInt::from(-2));
        assert_eq!(h.eval(4).unwrap(), BigInt::from(-2));
    }

    #[test]
    fn log_terms_take_the_float_path() {
        let h = HardyExpr::new(vec![term(1.0, 1.0, 1)]).unwrap();
        // 10 ln 10 = 23.02...
        assert_eq!(h.eval(10).unwrap(), BigInt::from(23));
    }

    #[test]
    fn classifier_examples() {
        assert_eq!(HardyExpr::power(1.5).unwrap().classify_log_away(), LogAway::Satisfied);
        let s2 = std::f64::consts::SQRT_2;
        match HardyExpr::new(vec![term(s2, 2.0, 0)]).unwrap().classify_log_away() {
            LogAway::Violated { c, p } => {
                assert_eq!(c, s2);
                assert_eq!(p, PolynomialZ::monomial(2));
            }
            other => panic!("{other:?}"),
        }
        let mixed = HardyExpr::new(vec![term(s2, 2.0, 0), term(1.0, 1.0, 0)]).unwrap();
        assert_eq!(mixed.classify_log_away(), LogAway::Satisfied);
    }

    #[test]
    fn classifier_handles_rational_profiles_and_logs() {
        // 0.5 t^2 + 1.5 t = 0.5 (t^2 + 3t)
        let h = HardyExpr::new(vec![term(0.5, 2.0, 0), term(1.5, 1.0, 0), term(7.0, 0.0, 1)]).unwrap();
        match h.classify_log_away() {
            LogAway::Violated { c, p } => {
                assert_eq!(c, 0.5);
                assert_eq!(p.coeffs(), &[0, 3, 1]);
            }
            other => panic!("{other:?}"),
        }
        let nlogn = HardyExpr::new(vec![term(1.0, 1.0, 1)]).unwrap();
        assert_eq!(nlogn.classify_log_away(), LogAway::Satisfied);
        let bounded = HardyExpr::new(vec![term(3.0, 0.0, 1)]).unwrap();
        assert!(matches!(bounded.classify_log_away(), LogAway::Violated { .. }));
    }

    #[test]
    fn rejects_malformed_terms() {
        assert!(HardyExpr::new(vec![]).is_err());
        assert!(HardyExpr::new(vec![term(1.0, -1.0, 0)]).is_err());
        assert!(HardyExpr::new(vec![term(f64::NAN, 1.0, 0)]).is_err());
        // sin-like oscillation is not expressible, but a sign-changing sum is
        // still monotone eventually; zero is accepted as a constant.
        assert!(HardyExpr::new(vec![term(0.0, 1.0, 0)]).is_ok());
    }

    #[test]
    fn integer_roots() {
        assert_eq!(iroot_u128(27, 3), (3, true));
        assert_eq!(iroot_u128(28, 3), (3, false));
        assert_eq!(iroot_u128(u128::MAX, 2).0, u64::MAX as u128);
        assert_eq!(iroot_u128(15, 4), (1, false));
    }
}
