//! Sparse iterate sequences `a: N → Z`.
//!
//! Specs are written in a small text language:
//!
//! ```text
//! id
//! poly: -1 0 1                      constant term first
//! hardy: 1*t^1.5
//! hardy: 1.4142135623730951*t^2 + 1*t^1
//! hardy: 1*t^1*log^1                (log t)^k factors
//! factorial: base=-1 0 1 k=4        n_k derived automatically
//! ```

mod hardy;
mod intersective;
mod poly;

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use hardy::{iroot_u128, HardyExpr, HardyTerm, LogAway};
pub use intersective::{
    factorial, factorial_u128, find_nk, is_intersective_bounded, primes_up_to, roots_mod_prime_power,
    IntersectivityVerdict, DEFAULT_LIFT_BOUND, DEFAULT_PRIME_BOUND,
};
pub use poly::PolynomialZ;

use crate::error::{LabError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum SequenceSpec {
    Identity,
    Polynomial(PolynomialZ),
    Hardy(HardyExpr),
    FactorialScheme { base: PolynomialZ, k: u32, n_k: u128 },
}

impl SequenceSpec {
    /// `p(k! n + n_k)`, rejecting an `n_k` with `k! ∤ p(n_k)`.
    pub fn factorial_scheme(base: PolynomialZ, k: u32, n_k: u128) -> Result<Self> {
        if k == 0 {
            return Err(LabError::invalid("factorial scheme needs k >= 1"));
        }
        let m = factorial(k);
        let v = base.eval(&BigInt::from(n_k));
        if v % BigInt::from(m) != BigInt::from(0) {
            return Err(LabError::invalid(format!("{k}! does not divide p({n_k}) for p = {base}")));
        }
        Ok(SequenceSpec::FactorialScheme { base, k, n_k })
    }

    /// Factorial scheme with the least admissible `n_k`.
    pub fn factorial_auto(base: PolynomialZ, k: u32) -> Result<Self> {
        let n_k = find_nk(&base, k)?;
        Self::factorial_scheme(base, k, n_k)
    }

    pub fn eval(&self, n: u64) -> Result<BigInt> {
        if n == 0 {
            return Err(LabError::invalid("sequences are indexed from n = 1"));
        }
        Ok(match self {
            SequenceSpec::Identity => BigInt::from(n),
            SequenceSpec::Polynomial(p) => p.eval(&BigInt::from(n)),
            SequenceSpec::Hardy(h) => h.eval(n)?,
            SequenceSpec::FactorialScheme { base, k, n_k } => {
                let arg = BigInt::from(factorial(*k)) * n + BigInt::from(*n_k);
                base.eval(&arg)
            }
        })
    }

    /// `a(n)` as `i128`, or a precision error if it does not fit.
    pub fn eval_i128(&self, n: u64) -> Result<i128> {
        match self {
            SequenceSpec::Identity => Ok(n as i128),
            SequenceSpec::Polynomial(p) => p
                .eval_i128(n as i128)
                .ok_or_else(|| LabError::Precision(format!("p({n}) overflows 128 bits"))),
            SequenceSpec::Hardy(h) => h.eval_i128(n),
            _ => self
                .eval(n)?
                .to_i128()
                .ok_or_else(|| LabError::Precision(format!("a({n}) overflows 128 bits"))),
        }
    }

    /// `a(n) mod q` in `[0, q)`, without forming `a(n)` where avoidable.
    pub fn eval_mod(&self, n: u64, q: u64) -> Result<u64> {
        if q == 0 {
            return Err(LabError::invalid("modulus must be positive"));
        }
        if n == 0 {
            return Err(LabError::invalid("sequences are indexed from n = 1"));
        }
        Ok(match self {
            SequenceSpec::Identity => n % q,
            SequenceSpec::Polynomial(p) => p.eval_mod(n as i128, q),
            SequenceSpec::Hardy(h) => h.eval_i128(n)?.rem_euclid(q as i128) as u64,
            SequenceSpec::FactorialScheme { base, k, n_k } => {
                let fk = (factorial(*k) % q).to_u64().unwrap_or(0) as u128;
                let arg = (fk * (n as u128 % q as u128) + n_k % q as u128) % q as u128;
                base.eval_mod(arg as i128, q)
            }
        })
    }

    /// Exact histogram of `a(n) mod q` over `1 ≤ n ≤ N`.
    pub fn residue_distribution(&self, q: u64, n_max: u64) -> Result<Vec<u64>> {
        if q == 0 || n_max == 0 {
            return Err(LabError::invalid("residue_distribution needs q >= 1 and N >= 1"));
        }
        const CHUNK: u64 = 1 << 14;
        let chunks = n_max.div_ceil(CHUNK);
        let parts: Vec<Vec<u64>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let mut h = vec![0u64; q as usize];
                let lo = c * CHUNK + 1;
                let hi = ((c + 1) * CHUNK).min(n_max);
                for n in lo..=hi {
                    h[self.eval_mod(n, q)? as usize] += 1;
                }
                Ok(h)
            })
            .collect::<Vec<Result<_>>>()
            .into_iter()
            .collect::<Result<_>>()?;
        let mut out = vec![0u64; q as usize];
        for part in parts {
            for (o, v) in out.iter_mut().zip(part) {
                *o += v;
            }
        }
        Ok(out)
    }
}

fn parse_coeffs(s: &str) -> Result<PolynomialZ> {
    let coeffs = s
        .split_whitespace()
        .map(|t| t.parse::<i64>().map_err(|_| LabError::invalid(format!("bad polynomial coefficient `{t}`"))))
        .collect::<Result<Vec<_>>>()?;
    if coeffs.is_empty() {
        return Err(LabError::invalid("polynomial needs at least one coefficient"));
    }
    Ok(PolynomialZ::new(coeffs))
}

fn parse_hardy_term(s: &str) -> Result<HardyTerm> {
    let bad = || LabError::invalid(format!("bad Hardy term `{s}`"));
    let mut term = HardyTerm { coeff: 1.0, exponent: 0.0, log_power: 0 };
    for (i, factor) in s.split('*').map(str::trim).enumerate() {
        if let Some(rest) = factor.strip_prefix("log") {
            let rest = rest.trim_start_matches("(t)");
            term.log_power += match rest.strip_prefix('^') {
                Some(k) => k.trim().parse::<u32>().map_err(|_| bad())?,
                None if rest.is_empty() => 1,
                None => return Err(bad()),
            };
        } else if let Some(rest) = factor.strip_prefix('t') {
            term.exponent += match rest.strip_prefix('^') {
                Some(e) => e.trim().parse::<f64>().map_err(|_| bad())?,
                None if rest.is_empty() => 1.0,
                None => return Err(bad()),
            };
        } else if i == 0 {
            term.coeff = factor.parse::<f64>().map_err(|_| bad())?;
        } else {
            return Err(bad());
        }
    }
    Ok(term)
}

impl FromStr for SequenceSpec {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "id" {
            return Ok(SequenceSpec::Identity);
        }
        let (kind, body) = s
            .split_once(':')
            .ok_or_else(|| LabError::invalid(format!("sequence spec `{s}` has no `kind:` prefix")))?;
        let body = body.trim();
        match kind.trim() {
            "poly" => Ok(SequenceSpec::Polynomial(parse_coeffs(body)?)),
            "hardy" => {
                let terms = body.split('+').map(parse_hardy_term).collect::<Result<Vec<_>>>()?;
                Ok(SequenceSpec::Hardy(HardyExpr::new(terms)?))
            }
            "factorial" => {
                let base_at = body
                    .find("base=")
                    .ok_or_else(|| LabError::invalid("factorial spec needs base=<coeffs>"))?;
                let k_at = body
                    .find("k=")
                    .ok_or_else(|| LabError::invalid("factorial spec needs k=<int>"))?;
                let (base_txt, k_txt) = if base_at < k_at {
                    (&body[base_at + 5..k_at], &body[k_at + 2..])
                } else {
                    (&body[base_at + 5..], &body[k_at + 2..base_at])
                };
                let k = k_txt
                    .trim()
                    .parse::<u32>()
                    .map_err(|_| LabError::invalid(format!("bad factorial k `{}`", k_txt.trim())))?;
                SequenceSpec::factorial_auto(parse_coeffs(base_txt)?, k)
            }
            other => Err(LabError::invalid(format!("unknown sequence kind `{other}`"))),
        }
    }
}

impl fmt::Display for SequenceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let coeffs = |p: &PolynomialZ| {
            if p.is_zero() {
                "0".to_string()
            } else {
                p.coeffs().iter().map(i64::to_string).collect::<Vec<_>>().join(" ")
            }
        };
        match self {
            SequenceSpec::Identity => write!(f, "id"),
            SequenceSpec::Polynomial(p) => write!(f, "poly: {}", coeffs(p)),
            SequenceSpec::Hardy(h) => write!(f, "hardy: {h}"),
            SequenceSpec::FactorialScheme { base, k, .. } => write!(f, "factorial: base={} k={k}", coeffs(base)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sequence_eval_examples() {
        assert_eq!(SequenceSpec::Identity.eval(7).unwrap(), BigInt::from(7));
        let fs = SequenceSpec::factorial_scheme(PolynomialZ::new(vec![-1, 0, 1]), 3, 1).unwrap();
        assert_eq!(fs.eval(1).unwrap(), BigInt::from(48));
        let sq = SequenceSpec::Polynomial(PolynomialZ::monomial(2));
        assert_eq!(sq.eval(5).unwrap(), BigInt::from(25));
    }

    #[test]
    fn factorial_scheme_rejects_bad_nk() {
        assert!(SequenceSpec::factorial_scheme(PolynomialZ::new(vec![-1, 0, 1]), 3, 2).is_err());
    }

    #[test]
    fn residue_examples() {
        let h = SequenceSpec::Identity.residue_distribution(5, 100).unwrap();
        assert_eq!(h, vec![20; 5]);
        let sq = SequenceSpec::Polynomial(PolynomialZ::monomial(2));
        let h = sq.residue_distribution(3, 30_000).unwrap();
        assert_eq!(h, vec![10_000, 20_000, 0]);
    }

    #[test]
    fn three_halves_parity_is_balanced() {
        let s: SequenceSpec = "hardy: 1*t^1.5".parse().unwrap();
        let h = s.residue_distribution(2, 1_000_000).unwrap();
        assert_eq!(h.iter().sum::<u64>(), 1_000_000);
        // Oracle: parity of isqrt(n^3) by direct summation.
        let mut even = 0u64;
        for n in 1u64..=1_000_000 {
            let v = n as u128 * n as u128 * n as u128;
            let mut r = (v as f64).sqrt() as u128;
            while r * r > v {
                r -= 1;
            }
            while (r + 1) * (r + 1) <= v {
                r += 1;
            }
            even += (r % 2 == 0) as u64;
        }
        assert_eq!(h[0], even);
        assert!((h[0] as f64 / 1e6 - 0.5).abs() <= 0.01);
    }

    #[test]
    fn parser_round_trips() {
        for text in [
            "id",
            "poly: -1 0 1",
            "hardy: 1.0*t^1.5",
            "hardy: 1.4142135623730951*t^2.0 + 1.0*t^1.0",
            "factorial: base=-1 0 1 k=4",
        ] {
            let s: SequenceSpec = text.parse().unwrap();
            let again: SequenceSpec = s.to_string().parse().unwrap();
            assert_eq!(s, again, "{text}");
        }
        let log: SequenceSpec = "hardy: 2*t*log^2".parse().unwrap();
        let SequenceSpec::Hardy(h) = log else { panic!() };
        assert_eq!(h.terms()[0], HardyTerm { coeff: 2.0, exponent: 1.0, log_power: 2 });
    }

    #[test]
    fn parser_rejects_garbage() {
        for text in ["", "poly:", "poly: 1 x", "hardy: 1*s^2", "quux: 1", "factorial: base=1 0 1 k=3"] {
            assert!(text.parse::<SequenceSpec>().is_err(), "{text}");
        }
    }

    #[test]
    fn factorial_auto_finds_nk() {
        let s: SequenceSpec = "factorial: base=-1 0 1 k=4".parse().unwrap();
        assert_eq!(s, SequenceSpec::FactorialScheme { base: PolynomialZ::new(vec![-1, 0, 1]), k: 4, n_k: 1 });
    }

    proptest! {
        #[test]
        fn factorial_scheme_values_are_divisible(k in 1u32..=7, n in 1u64..1000, c0 in -5i64..5) {
            // t^2 - c0^2 has the root |c0|, so the scheme always exists.
            let p = PolynomialZ::new(vec![-c0 * c0, 0, 1]);
            let s = SequenceSpec::factorial_auto(p, k).unwrap();
            let SequenceSpec::FactorialScheme { n_k, .. } = &s else { unreachable!() };
            let m = factorial_u128(k).unwrap();
            prop_assert!(*n_k < m);
            let v = s.eval(n).unwrap();
            prop_assert_eq!(v % BigInt::from(m), BigInt::from(0));
            prop_assert_eq!(s.eval_mod(n, m as u64).unwrap(), 0);
        }

        #[test]
        fn nk_matches_brute_force(coeffs in prop::collection::vec(-6i64..6, 1..5), k in 1u32..=7) {
            let p = PolynomialZ::new(coeffs);
            prop_assume!(!p.is_zero());
            let m = factorial_u128(k).unwrap() as u64;
            let brute = (0..m).find(|&n| (p.eval_i64(n as i64) % BigInt::from(m)) == BigInt::from(0));
            match find_nk(&p, k) {
                Ok(n) => prop_assert_eq!(Some(n as u64), brute),
                Err(_) => prop_assert_eq!(brute, None),
            }
        }

        #[test]
        fn not_intersective_witness_is_rootless(coeffs in prop::collection::vec(-8i64..8, 1..5)) {
            let p = PolynomialZ::new(coeffs);
            prop_assume!(!p.is_zero());
            if let IntersectivityVerdict::NotIntersective { witness_modulus } =
                is_intersective_bounded(&p, 30, 4).unwrap()
            {
                let r = witness_modulus;
                prop_assert!((0..r).all(|n| p.eval_mod(n as i128, r) != 0));
            }
        }

        #[test]
        fn eval_mod_agrees_with_exact(coeffs in prop::collection::vec(-50i64..50, 1..6), n in 1u64..100_000, q in 1u64..500) {
            let s = SequenceSpec::Polynomial(PolynomialZ::new(coeffs));
            let v = s.eval(n).unwrap();
            let r = ((v % BigInt::from(q)) + BigInt::from(q)) % BigInt::from(q);
            prop_assert_eq!(BigInt::from(s.eval_mod(n, q).unwrap()), r);
        }

        #[test]
        fn residue_counts_sum_to_n(q in 1u64..40, n in 1u64..3000) {
            let s = SequenceSpec::Polynomial(PolynomialZ::new(vec![1, 3, 2]));
            let h = s.residue_distribution(q, n).unwrap();
            prop_assert_eq!(h.iter().sum::<u64>(), n);
        }
    }
}
