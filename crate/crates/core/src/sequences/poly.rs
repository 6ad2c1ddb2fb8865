use std::fmt;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

/// Integer polynomial, coefficients stored constant term first and trimmed
/// so the leading coefficient is nonzero (the zero polynomial is empty).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PolynomialZ {
    coeffs: Vec<i64>,
}

impl PolynomialZ {
    pub fn new(mut coeffs: Vec<i64>) -> Self {
        while coeffs.last() == Some(&0) {
            coeffs.pop();
        }
        PolynomialZ { coeffs }
    }

    pub fn zero() -> Self {
        PolynomialZ { coeffs: Vec::new() }
    }

    /// The monomial `t^d`.
    pub fn monomial(d: usize) -> Self {
        let mut c = vec![0; d + 1];
        c[d] = 1;
        PolynomialZ { coeffs: c }
    }

    pub fn coeffs(&self) -> &[i64] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    /// Degree, `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn mul(&self, other: &PolynomialZ) -> PolynomialZ {
        if self.is_zero() || other.is_zero() {
            return PolynomialZ::zero();
        }
        let mut out = vec![0i64; self.coeffs.len() + other.coeffs.len() - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        PolynomialZ::new(out)
    }

    pub fn derivative(&self) -> PolynomialZ {
        PolynomialZ::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(i, &c)| c * i as i64)
                .collect(),
        )
    }

    /// Exact Horner evaluation.
    pub fn eval(&self, n: &BigInt) -> BigInt {
        let mut acc = BigInt::zero();
        for &c in self.coeffs.iter().rev() {
            acc = acc * n + BigInt::from(c);
        }
        acc
    }

    pub fn eval_i64(&self, n: i64) -> BigInt {
        self.eval(&BigInt::from(n))
    }

    /// `p(n) mod m` in `[0, m)`, with `n` given by any integer residue.
    pub fn eval_mod(&self, n: i128, m: u64) -> u64 {
        if m == 1 {
            return 0;
        }
        let m = m as i128;
        let x = n.rem_euclid(m);
        let mut acc: i128 = 0;
        for &c in self.coeffs.iter().rev() {
            acc = (acc * x + (c as i128).rem_euclid(m)) % m;
        }
        acc as u64
    }

    /// `p(n) mod m` for `n` an arbitrary-precision integer.
    pub fn eval_mod_big(&self, n: &BigInt, m: u64) -> u64 {
        let r = (n % BigInt::from(m) + BigInt::from(m)) % BigInt::from(m);
        self.eval_mod(r.to_i128().unwrap_or(0), m)
    }

    /// Exact value as `i128`, or `None` on overflow.
    pub fn eval_i128(&self, n: i128) -> Option<i128> {
        let mut acc: i128 = 0;
        for &c in self.coeffs.iter().rev() {
            acc = acc.checked_mul(n)?.checked_add(c as i128)?;
        }
        Some(acc)
    }

    /// True when `m | p(n)`.
    pub fn divides_value(&self, n: &BigInt, m: &BigInt) -> bool {
        if m.is_one() {
            return true;
        }
        (self.eval(n) % m).is_zero()
    }

    /// Content-free check used by the Hardy classifier: largest absolute
    /// coefficient.
    pub fn max_abs_coeff(&self) -> i64 {
        self.coeffs.iter().map(|c| c.abs()).max().unwrap_or(0)
    }

    pub fn leading_is_positive(&self) -> bool {
        self.coeffs.last().map(|c| BigInt::from(*c).is_positive()).unwrap_or(false)
    }
}

impl fmt::Display for PolynomialZ {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (i, &c) in self.coeffs.iter().enumerate().rev() {
            if c == 0 {
                continue;
            }
            let sign = if c < 0 { "-" } else { "+" };
            if first {
                if c < 0 {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {sign} ")?;
            }
            let a = c.unsigned_abs();
            match (i, a) {
                (0, _) => write!(f, "{a}")?,
                (1, 1) => write!(f, "t")?,
                (1, _) => write!(f, "{a}t")?,
                (_, 1) => write!(f, "t^{i}")?,
                _ => write!(f, "{a}t^{i}")?,
            }
            first = false;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sextic() -> PolynomialZ {
        // (t^2 + 1)(t^2 - 2)(t^2 + 2)
        PolynomialZ::new(vec![1, 0, 1])
            .mul(&PolynomialZ::new(vec![-2, 0, 1]))
            .mul(&PolynomialZ::new(vec![2, 0, 1]))
    }

    #[test]
    fn evaluation_examples() {
        assert_eq!(PolynomialZ::new(vec![-1, 0, 1]).eval_i64(1), BigInt::from(0));
        assert_eq!(sextic().eval_i64(1), BigInt::from(-6));
        assert_eq!(PolynomialZ::new(vec![0, 0, 1]).eval_i64(-3), BigInt::from(9));
    }

    #[test]
    fn sextic_expansion() {
        assert_eq!(sextic().coeffs(), &[-4, 0, -4, 0, 1, 0, 1]);
    }

    #[test]
    fn large_arguments_do_not_overflow() {
        let p = PolynomialZ::new(vec![3, -7, 0, 0, 0, 0, 0, 0, 5]);
        let n = BigInt::from(-1_000_000_000i64);
        let expect = BigInt::from(5) * n.pow(8) + BigInt::from(7) * BigInt::from(1_000_000_000i64) + 3;
        assert_eq!(p.eval(&n), expect);
    }

    #[test]
    fn modular_evaluation_matches_exact() {
        let p = sextic();
        for n in -50i64..50 {
            for m in [1u64, 2, 7, 12, 720, 1_000_003] {
                let exact = p.eval_i64(n);
                let r = ((exact % BigInt::from(m)) + BigInt::from(m)) % BigInt::from(m);
                assert_eq!(BigInt::from(p.eval_mod(n as i128, m)), r);
            }
        }
    }

    #[test]
    fn trimming_and_display() {
        let p = PolynomialZ::new(vec![-1, 0, 1, 0, 0]);
        assert_eq!(p.degree(), Some(2));
        assert_eq!(p.to_string(), "t^2 - 1");
        assert!(PolynomialZ::new(vec![0, 0]).is_zero());
    }
}
