//! Roots of integer polynomials modulo prime powers: bounded intersectivity
//! checks and the residue `n_k` with `k! | p(n_k)`.

use num_bigint::BigUint;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use super::poly::PolynomialZ;
use crate::error::{LabError, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum IntersectivityVerdict {
    NotIntersective { witness_modulus: u64 },
    NoObstructionUpTo { prime_bound: u64, lift_bound: u32 },
}

pub const DEFAULT_PRIME_BOUND: u64 = 100;
pub const DEFAULT_LIFT_BOUND: u32 = 6;

/// Singular-root lifting stops tracking a prime once this many residues are
/// alive; the check is a bounded search, not a proof.
const ROOT_SET_CAP: usize = 1 << 16;
/// Upper limit on CRT combinations explored by [`find_nk`].
const COMBINATION_CAP: u128 = 10_000_000;
const BRUTE_FORCE_LIMIT: u64 = 10_000_000;

pub fn primes_up_to(bound: u64) -> Vec<u64> {
    if bound < 2 {
        return Vec::new();
    }
    let b = bound as usize;
    let mut sieve = vec![true; b + 1];
    sieve[0] = false;
    sieve[1] = false;
    let mut i = 2;
    while i * i <= b {
        if sieve[i] {
            for j in (i * i..=b).step_by(i) {
                sieve[j] = false;
            }
        }
        i += 1;
    }
    (2..=b).filter(|&i| sieve[i]).map(|i| i as u64).collect()
}

/// Every root of `p` modulo `ell^e`, in increasing order. Complete
/// enumeration by lifting: a root mod `ell^j` reduces to one mod `ell^(j-1)`.
pub fn roots_mod_prime_power(p: &PolynomialZ, ell: u64, e: u32, cap: usize) -> Option<Vec<u64>> {
    let mut roots: Vec<u64> = (0..ell).filter(|&n| p.eval_mod(n as i128, ell) == 0).collect();
    let mut modulus = ell;
    for _ in 1..e {
        let next = modulus.checked_mul(ell)?;
        let mut lifted = Vec::new();
        for &r in &roots {
            for t in 0..ell {
                let c = r + t * modulus;
                if p.eval_mod(c as i128, next) == 0 {
                    lifted.push(c);
                }
            }
            if lifted.len() > cap {
                return None;
            }
        }
        roots = lifted;
        modulus = next;
        if roots.is_empty() {
            break;
        }
    }
    roots.sort_unstable();
    Some(roots)
}

/// Least power `ell^j` (`j ≤ lift_bound`) with no root of `p`, if the
/// bounded search finds one.
fn obstruction_at(p: &PolynomialZ, ell: u64, lift_bound: u32) -> Option<u64> {
    let dp = p.derivative();
    let mut roots: Vec<u64> = (0..ell).filter(|&n| p.eval_mod(n as i128, ell) == 0).collect();
    let mut modulus = ell;
    for j in 1..=lift_bound {
        if roots.is_empty() {
            return Some(modulus);
        }
        if j == lift_bound {
            break;
        }
        // A simple root lifts uniquely to every power (Hensel).
        if roots.iter().any(|&r| dp.eval_mod(r as i128, ell) != 0) {
            return None;
        }
        let next = modulus.checked_mul(ell)?;
        if next > 1 << 62 {
            return None;
        }
        let mut lifted = Vec::new();
        for &r in &roots {
            for t in 0..ell {
                let c = r + t * modulus;
                if p.eval_mod(c as i128, next) == 0 {
                    lifted.push(c);
                }
            }
        }
        if lifted.len() > ROOT_SET_CAP {
            return None;
        }
        roots = lifted;
        modulus = next;
    }
    None
}

/// Bounded intersectivity check. Primes are scanned in increasing order and
/// the first obstructing prime power is reported.
pub fn is_intersective_bounded(p: &PolynomialZ, prime_bound: u64, lift_bound: u32) -> Result<IntersectivityVerdict> {
    if p.is_zero() {
        return Err(LabError::invalid("the zero polynomial has every root"));
    }
    if prime_bound < 2 || lift_bound < 1 {
        return Err(LabError::invalid("need prime_bound >= 2 and lift_bound >= 1"));
    }
    for ell in primes_up_to(prime_bound) {
        if let Some(r) = obstruction_at(p, ell, lift_bound) {
            return Ok(IntersectivityVerdict::NotIntersective { witness_modulus: r });
        }
    }
    Ok(IntersectivityVerdict::NoObstructionUpTo { prime_bound, lift_bound })
}

pub fn factorial(k: u32) -> BigUint {
    (1..=k).fold(BigUint::one(), |acc, i| acc * i)
}

/// `k!` as `u128`; `k ≤ 34`.
pub fn factorial_u128(k: u32) -> Result<u128> {
    factorial(k)
        .to_u128()
        .ok_or_else(|| LabError::invalid(format!("{k}! exceeds 128 bits")))
}

/// Exponent of `ell` in `k!` (Legendre).
fn legendre(k: u64, ell: u64) -> u32 {
    let mut e = 0;
    let mut m = k / ell;
    while m > 0 {
        e += m as u32;
        m /= ell;
    }
    e
}

/// Least `n ∈ [0, k!)` with `k! | p(n)`.
pub fn find_nk(p: &PolynomialZ, k: u32) -> Result<u128> {
    if p.is_zero() {
        return Err(LabError::invalid("find_nk needs a nonzero polynomial"));
    }
    if k == 0 {
        return Err(LabError::invalid("k must be positive"));
    }
    let m = factorial_u128(k)?;
    if m <= BRUTE_FORCE_LIMIT as u128 {
        let m = m as u64;
        return (0..m)
            .find(|&n| p.eval_mod(n as i128, m) == 0)
            .map(|n| n as u128)
            .ok_or_else(|| LabError::NoSolution(format!("no n with {k}! | p(n) for p = {p}")));
    }
    let mut parts: Vec<(BigUint, Vec<u64>)> = Vec::new();
    let mut combos: u128 = 1;
    for ell in primes_up_to(k as u64) {
        let e = legendre(k as u64, ell);
        let q = ell.pow(e);
        let roots = roots_mod_prime_power(p, ell, e, 1 << 20).ok_or_else(|| LabError::Budget {
            what: format!("root set modulo {ell}^{e}"),
            needed: u128::MAX,
            budget: 1 << 20,
        })?;
        if roots.is_empty() {
            return Err(LabError::NoSolution(format!("p = {p} has no root modulo {ell}^{e}")));
        }
        combos = combos.saturating_mul(roots.len() as u128);
        parts.push((BigUint::from(q), roots));
    }
    if combos > COMBINATION_CAP {
        return Err(LabError::Budget {
            what: "CRT recombination for n_k".into(),
            needed: combos,
            budget: COMBINATION_CAP,
        });
    }
    let modulus = BigUint::from(m);
    // CRT basis: e_i ≡ 1 mod q_i, ≡ 0 mod the other factors.
    let basis: Vec<BigUint> = parts
        .iter()
        .map(|(q, _)| {
            let rest = &modulus / q;
            let inv = mod_inverse(&(&rest % q), q);
            rest * inv % &modulus
        })
        .collect();
    let mut best: Option<BigUint> = None;
    let mut idx = vec![0usize; parts.len()];
    loop {
        let mut acc = BigUint::zero();
        for (i, (_, roots)) in parts.iter().enumerate() {
            acc += &basis[i] * roots[idx[i]];
        }
        acc %= &modulus;
        if best.as_ref().is_none_or(|b| acc < *b) {
            best = Some(acc);
        }
        let mut i = 0;
        while i < idx.len() {
            idx[i] += 1;
            if idx[i] < parts[i].1.len() {
                break;
            }
            idx[i] = 0;
            i += 1;
        }
        if i == idx.len() {
            break;
        }
    }
    Ok(best.and_then(|b| b.to_u128()).unwrap_or(0))
}

fn mod_inverse(a: &BigUint, m: &BigUint) -> BigUint {
    use num_bigint::BigInt;
    let g = BigInt::from(a.clone()).extended_gcd(&BigInt::from(m.clone()));
    let mm = BigInt::from(m.clone());
    ((g.x % &mm + &mm) % &mm).to_biguint().unwrap_or_default()
}
