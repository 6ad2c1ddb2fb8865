//! Finite measure-preserving systems with commuting permutations, complex
//! observables on them, and the 2-step skew product `(x, y) ↦ (x + α, y + 2x + α)`.
//!
//! Convention: a map acts on functions by composition, `(T f)(x) = f(T x)`.

use num_complex::Complex64;
use num_integer::Integer;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::numeric::{substream, ComplexSum, Frac128, NeumaierSum};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Permutation {
    map: Vec<usize>,
}

impl Permutation {
    pub fn new(map: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; map.len()];
        for &y in &map {
            if y >= map.len() || std::mem::replace(&mut seen[y], true) {
                return Err(LabError::invalid("map is not a bijection"));
            }
        }
        Ok(Permutation { map })
    }

    pub fn identity(m: usize) -> Self {
        Permutation { map: (0..m).collect() }
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    #[inline]
    pub fn apply(&self, x: usize) -> usize {
        self.map[x]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.map
    }

    /// `self ∘ other`: first `other`, then `self`.
    pub fn compose(&self, other: &Permutation) -> Permutation {
        Permutation { map: other.map.iter().map(|&y| self.map[y]).collect() }
    }

    pub fn inverse(&self) -> Permutation {
        let mut inv = vec![0; self.map.len()];
        for (x, &y) in self.map.iter().enumerate() {
            inv[y] = x;
        }
        Permutation { map: inv }
    }

    pub fn is_identity(&self) -> bool {
        self.map.iter().enumerate().all(|(x, &y)| x == y)
    }

    /// Integer power by repeated squaring; negative exponents invert.
    pub fn pow(&self, e: i64) -> Permutation {
        let mut base = if e < 0 { self.inverse() } else { self.clone() };
        let mut e = e.unsigned_abs();
        let mut acc = Permutation::identity(self.map.len());
        while e > 0 {
            if e & 1 == 1 {
                acc = acc.compose(&base);
            }
            base = base.compose(&base);
            e >>= 1;
        }
        acc
    }

    /// Orbit label of every point; labels are the least point of each orbit.
    pub fn orbit_labels(&self) -> Vec<usize> {
        let mut label = vec![usize::MAX; self.map.len()];
        for start in 0..self.map.len() {
            if label[start] != usize::MAX {
                continue;
            }
            let mut x = start;
            while label[x] == usize::MAX {
                label[x] = start;
                x = self.map[x];
            }
        }
        label
    }

    /// Least `P ≥ 1` with `self^P = id`: the lcm of the cycle lengths.
    pub fn order(&self) -> u64 {
        let mut seen = vec![false; self.map.len()];
        let mut order = 1u64;
        for start in 0..self.map.len() {
            if seen[start] {
                continue;
            }
            let mut len = 0u64;
            let mut x = start;
            while !seen[x] {
                seen[x] = true;
                x = self.map[x];
                len += 1;
            }
            order = order.lcm(&len);
        }
        order
    }
}

/// Exponent vector `b` naming `T^b = T_1^{b_1} ··· T_l^{b_l}`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TransformationWord(pub Vec<i64>);

impl TransformationWord {
    pub fn unit(l: usize, i: usize) -> Self {
        let mut v = vec![0; l];
        v[i] = 1;
        TransformationWord(v)
    }

    pub fn zero(l: usize) -> Self {
        TransformationWord(vec![0; l])
    }

    pub fn add(&self, other: &TransformationWord) -> TransformationWord {
        TransformationWord(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn scale(&self, r: i64) -> TransformationWord {
        TransformationWord(self.0.iter().map(|a| a * r).collect())
    }

    /// Parses `T2*T1^-1`, `T2`, `1` (identity) for a system with `l` generators.
    pub fn parse(text: &str, l: usize) -> Result<Self> {
        let mut w = vec![0i64; l];
        let text = text.trim();
        if text == "1" || text == "id" {
            return Ok(TransformationWord(w));
        }
        for factor in text.split('*') {
            let factor = factor.trim();
            let bad = || LabError::invalid(format!("bad word factor `{factor}`"));
            let rest = factor.strip_prefix('T').ok_or_else(bad)?;
            let (idx, exp) = match rest.split_once('^') {
                Some((i, e)) => (i, e.trim().parse::<i64>().map_err(|_| bad())?),
                None => (rest, 1),
            };
            let i: usize = idx.trim().parse().map_err(|_| bad())?;
            if i == 0 || i > l {
                return Err(LabError::invalid(format!("generator T{i} out of range 1..={l}")));
            }
            w[i - 1] += exp;
        }
        Ok(TransformationWord(w))
    }
}

/// Coordinates of a product rotation on `(Z_q)^d`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    pub q: u64,
    pub d: usize,
}

impl Lattice {
    /// Point index `x_0 + q x_1 + ... + q^{d-1} x_{d-1}`.
    pub fn index(&self, coords: &[u64]) -> usize {
        coords.iter().rev().fold(0u64, |acc, &c| acc * self.q + c % self.q) as usize
    }

    pub fn coords(&self, mut idx: usize) -> Vec<u64> {
        (0..self.d)
            .map(|_| {
                let c = idx as u64 % self.q;
                idx /= self.q as usize;
                c
            })
            .collect()
    }

    pub fn size(&self) -> usize {
        (self.q as usize).pow(self.d as u32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiniteSystem {
    weights: Vec<f64>,
    maps: Vec<Permutation>,
    lattice: Option<Lattice>,
}

const WEIGHT_SUM_TOL: f64 = 1e-12;

impl FiniteSystem {
    /// Validates the probability vector, bijectivity, pairwise commutation and
    /// weight preservation (relative tolerance 1e-9, exact for uniform weights).
    pub fn new(weights: Vec<f64>, maps: Vec<Permutation>) -> Result<Self> {
        let m = weights.len();
        if m == 0 {
            return Err(LabError::invalid("a system needs at least one point"));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(LabError::invalid("weights must be finite and nonnegative"));
        }
        let mut total = NeumaierSum::new();
        weights.iter().for_each(|&w| total.add(w));
        if (total.value() - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(LabError::invalid(format!("weights sum to {}, not 1", total.value())));
        }
        for (j, t) in maps.iter().enumerate() {
            if t.len() != m {
                return Err(LabError::invalid(format!("map T{} acts on {} points, not {m}", j + 1, t.len())));
            }
            for x in 0..m {
                let (a, b) = (weights[t.apply(x)], weights[x]);
                if (a - b).abs() > 1e-9 * a.max(b) {
                    return Err(LabError::invalid(format!("map T{} does not preserve the weight at point {x}", j + 1)));
                }
            }
        }
        for i in 0..maps.len() {
            for j in i + 1..maps.len() {
                if (0..m).any(|x| maps[i].apply(maps[j].apply(x)) != maps[j].apply(maps[i].apply(x))) {
                    return Err(LabError::invalid(format!("maps T{} and T{} do not commute", i + 1, j + 1)));
                }
            }
        }
        Ok(FiniteSystem { weights, maps, lattice: None })
    }

    pub fn uniform(m: usize, maps: Vec<Permutation>) -> Result<Self> {
        Self::new(vec![1.0 / m as f64; m], maps)
    }

    /// `(Z_q)^d`, uniform weights, `T_j` translation by `shifts[j]`.
    pub fn product_rotation(q: u64, d: usize, shifts: &[Vec<i64>]) -> Result<Self> {
        if q == 0 || d == 0 {
            return Err(LabError::invalid("product rotation needs q >= 1 and d >= 1"));
        }
        let lat = Lattice { q, d };
        let m = (q as usize)
            .checked_pow(d as u32)
            .filter(|&m| m <= 1 << 26)
            .ok_or_else(|| LabError::invalid(format!("(Z_{q})^{d} is too large")))?;
        let mut maps = Vec::with_capacity(shifts.len());
        for s in shifts {
            if s.len() != d {
                return Err(LabError::invalid(format!("shift {s:?} is not in Z^{d}")));
            }
            let map = (0..m)
                .map(|x| {
                    let c: Vec<u64> = lat
                        .coords(x)
                        .iter()
                        .zip(s)
                        .map(|(&c, &v)| (c as i128 + v as i128).rem_euclid(q as i128) as u64)
                        .collect();
                    lat.index(&c)
                })
                .collect();
            maps.push(Permutation { map });
        }
        let mut sys = Self::uniform(m, maps)?;
        sys.lattice = Some(lat);
        Ok(sys)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn maps(&self) -> &[Permutation] {
        &self.maps
    }

    pub fn generator_count(&self) -> usize {
        self.maps.len()
    }

    pub fn lattice(&self) -> Option<Lattice> {
        self.lattice
    }

    pub fn word_to_map(&self, w: &TransformationWord) -> Result<Permutation> {
        if w.0.len() != self.maps.len() {
            return Err(LabError::invalid(format!(
                "word {:?} has length {}, system has {} generators",
                w.0,
                w.0.len(),
                self.maps.len()
            )));
        }
        Ok(w.0
            .iter()
            .zip(&self.maps)
            .fold(Permutation::identity(self.len()), |acc, (&e, t)| acc.compose(&t.pow(e))))
    }

    pub fn map_order(&self, w: &TransformationWord) -> Result<u64> {
        Ok(self.word_to_map(w)?.order())
    }

    /// `∫ f dμ`, compensated, in point order.
    pub fn integral(&self, f: &Observable) -> Complex64 {
        let mut acc = ComplexSum::new();
        for (w, v) in self.weights.iter().zip(&f.values) {
            acc.add(v * *w);
        }
        acc.value()
    }

    /// `⟨f, g⟩ = ∫ f ḡ dμ`.
    pub fn inner(&self, f: &Observable, g: &Observable) -> Complex64 {
        let mut acc = ComplexSum::new();
        for ((w, a), b) in self.weights.iter().zip(&f.values).zip(&g.values) {
            acc.add(a * b.conj() * *w);
        }
        acc.value()
    }

    pub fn l2_norm(&self, f: &Observable) -> f64 {
        let mut acc = NeumaierSum::new();
        for (w, a) in self.weights.iter().zip(&f.values) {
            acc.add(w * a.norm_sqr());
        }
        acc.value().max(0.0).sqrt()
    }

    /// `E(f | I(T^w))`: weighted mean over each `T^w`-orbit.
    pub fn conditional_expectation_invariant(&self, f: &Observable, w: &TransformationWord) -> Result<Observable> {
        let labels = self.word_to_map(w)?.orbit_labels();
        Ok(self.expectation_on_partition(f, &labels))
    }

    /// Conditional expectation onto the partition whose cell of `x` is
    /// `labels[x]`. Cells of zero weight get their plain average.
    pub fn expectation_on_partition(&self, f: &Observable, labels: &[usize]) -> Observable {
        let m = self.len();
        let mut num = vec![ComplexSum::new(); m];
        let mut den = vec![NeumaierSum::new(); m];
        let mut plain = vec![ComplexSum::new(); m];
        let mut count = vec![0usize; m];
        for x in 0..m {
            let c = labels[x];
            num[c].add(f.values[x] * self.weights[x]);
            den[c].add(self.weights[x]);
            plain[c].add(f.values[x]);
            count[c] += 1;
        }
        let cell: Vec<Complex64> = (0..m)
            .map(|c| {
                if count[c] == 0 {
                    Complex64::new(0.0, 0.0)
                } else if den[c].value() > 0.0 {
                    num[c].value() / den[c].value()
                } else {
                    plain[c].value() / count[c] as f64
                }
            })
            .collect();
        Observable::from_values(labels.iter().map(|&c| cell[c]).collect())
    }
}

/// Labels of the common refinement of two partitions.
pub fn refine_partitions(a: &[usize], b: &[usize]) -> Vec<usize> {
    let mut first = std::collections::HashMap::new();
    a.iter()
        .zip(b)
        .enumerate()
        .map(|(x, key)| *first.entry(key).or_insert(x))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observable {
    values: Vec<Complex64>,
    sup_bound: f64,
}

impl Observable {
    /// Observable with `sup_bound` set to the actual sup.
    pub fn from_values(values: Vec<Complex64>) -> Self {
        let sup_bound = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        Observable { values, sup_bound }
    }

    pub fn with_bound(values: Vec<Complex64>, sup_bound: f64) -> Result<Self> {
        let sup = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        if !(sup <= sup_bound + 1e-12) {
            return Err(LabError::invalid(format!("sup |f| = {sup} exceeds the stated bound {sup_bound}")));
        }
        Ok(Observable { values, sup_bound })
    }

    pub fn constant(m: usize, c: Complex64) -> Self {
        Self::from_values(vec![c; m])
    }

    pub fn ones(m: usize) -> Self {
        Self::constant(m, Complex64::new(1.0, 0.0))
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `e(u_x)` with `u_x` uniform on `[0, 1)` from substream `(seed, stream)`.
    pub fn random_unimodular(m: usize, seed: u64, stream: u64) -> Self {
        let mut rng = substream(seed, stream);
        Self::from_values((0..m).map(|_| crate::numeric::e(rng.gen::<f64>())).collect())
    }

    /// Uniform on the unit disc.
    pub fn random_bounded(m: usize, seed: u64, stream: u64) -> Self {
        let mut rng = substream(seed, stream);
        Self::from_values(
            (0..m)
                .map(|_| {
                    let r = rng.gen::<f64>().sqrt();
                    crate::numeric::e(rng.gen::<f64>()) * r
                })
                .collect(),
        )
    }

    /// Character `x ↦ e(k·x / q)` of a product rotation.
    pub fn character(lat: Lattice, k: &[i64]) -> Result<Self> {
        if k.len() != lat.d {
            return Err(LabError::invalid(format!("character needs {} frequencies", lat.d)));
        }
        let q = lat.q as i128;
        Ok(Self::from_values(
            (0..lat.size())
                .map(|x| {
                    let dot: i128 = lat.coords(x).iter().zip(k).map(|(&c, &f)| c as i128 * f as i128).sum();
                    Frac128::from_ratio(dot.rem_euclid(q), q as u128).map(Frac128::e)
                })
                .collect::<Result<_>>()?,
        ))
    }

    pub fn indicator(m: usize, set: &[usize]) -> Result<Self> {
        let mut v = vec![Complex64::new(0.0, 0.0); m];
        for &x in set {
            if x >= m {
                return Err(LabError::invalid(format!("point {x} outside [0, {m})")));
            }
            v[x] = Complex64::new(1.0, 0.0);
        }
        Ok(Self::from_values(v))
    }

    /// `(T f)(x) = f(T x)`.
    pub fn compose(&self, t: &Permutation) -> Observable {
        Observable {
            values: (0..self.values.len()).map(|x| self.values[t.apply(x)]).collect(),
            sup_bound: self.sup_bound,
        }
    }

    pub fn conj(&self) -> Observable {
        Observable { values: self.values.iter().map(|v| v.conj()).collect(), sup_bound: self.sup_bound }
    }

    pub fn mul(&self, other: &Observable) -> Observable {
        Observable {
            values: self.values.iter().zip(&other.values).map(|(a, b)| a * b).collect(),
            sup_bound: self.sup_bound * other.sup_bound,
        }
    }

    pub fn sub(&self, other: &Observable) -> Observable {
        Self::from_values(self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, c: Complex64) -> Observable {
        Self::from_values(self.values.iter().map(|v| v * c).collect())
    }

    pub fn max_abs_diff(&self, other: &Observable) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max)
    }
}

/// `T(x, y) = (x + α, y + 2x + α)` on the 2-torus, with the closed form
/// `T^n(x, y) = (x + nα, y + 2nx + n²α)` evaluated in 128-bit fixed point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkewProductSystem {
    pub alpha: Frac128,
    pub start: (Frac128, Frac128),
}

/// Largest `|n|` accepted by [`SkewProductSystem::orbit_point`].
pub const SKEW_MAX_TIME: i128 = 10_000_000_000_000;

impl SkewProductSystem {
    pub fn new(alpha: Frac128, start: (Frac128, Frac128)) -> Self {
        SkewProductSystem { alpha, start }
    }

    pub fn step(&self, p: (Frac128, Frac128)) -> (Frac128, Frac128) {
        (p.0 + self.alpha, p.1 + p.0.mul_int(2) + self.alpha)
    }

    pub fn orbit_point(&self, n: i128) -> Result<(Frac128, Frac128)> {
        if n.abs() > SKEW_MAX_TIME {
            return Err(LabError::Precision(format!("skew orbit time {n} beyond the certified range 1e13")));
        }
        let (x, y) = self.start;
        Ok((x + self.alpha.mul_int(n), y + x.mul_int(2 * n) + self.alpha.mul_int(n * n)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn z(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn product_rotation_examples() {
        let s = FiniteSystem::product_rotation(5, 2, &[vec![1, 0], vec![0, 1]]).unwrap();
        assert_eq!(s.len(), 25);
        assert_eq!(s.generator_count(), 2);

        let s = FiniteSystem::product_rotation(6, 1, &[vec![2]]).unwrap();
        let labels = s.maps()[0].orbit_labels();
        assert_eq!(labels, vec![0, 1, 0, 1, 0, 1]);

        let s = FiniteSystem::product_rotation(1, 3, &[vec![4, 5, 6]]).unwrap();
        assert_eq!(s.len(), 1);
        assert!(s.maps()[0].is_identity());
    }

    #[test]
    fn word_examples() {
        let s = FiniteSystem::product_rotation(5, 1, &[vec![1], vec![1]]).unwrap();
        assert!(s.word_to_map(&TransformationWord(vec![0, 0])).unwrap().is_identity());
        assert!(s.word_to_map(&TransformationWord(vec![2, 3])).unwrap().is_identity());
        assert_eq!(&s.word_to_map(&TransformationWord::unit(2, 0)).unwrap(), &s.maps()[0]);
    }

    #[test]
    fn map_order_examples() {
        let s = FiniteSystem::product_rotation(6, 1, &[vec![2], vec![1]]).unwrap();
        assert_eq!(s.map_order(&TransformationWord(vec![0, 0])).unwrap(), 1);
        assert_eq!(s.map_order(&TransformationWord(vec![1, 0])).unwrap(), 3);
        assert_eq!(s.map_order(&TransformationWord(vec![0, 1])).unwrap(), 6);
    }

    #[test]
    fn conditional_expectation_examples() {
        let s = FiniteSystem::product_rotation(6, 1, &[vec![1], vec![2]]).unwrap();
        let f = Observable::random_bounded(6, 3, 0);
        let e = s.conditional_expectation_invariant(&f, &TransformationWord(vec![1, 0])).unwrap();
        let mean = s.integral(&f);
        assert!(e.values().iter().all(|v| (v - mean).norm() < 1e-15));

        let ind = Observable::indicator(6, &[0]).unwrap();
        let e = s.conditional_expectation_invariant(&ind, &TransformationWord(vec![0, 1])).unwrap();
        for x in 0..6 {
            let want = if x % 2 == 0 { 1.0 / 3.0 } else { 0.0 };
            assert!((e.values()[x] - z(want)).norm() < 1e-15);
        }
        let again = s.conditional_expectation_invariant(&e, &TransformationWord(vec![0, 1])).unwrap();
        assert!(again.max_abs_diff(&e) < 1e-15);
    }

    #[test]
    fn rejects_non_commuting_and_non_preserving_maps() {
        let a = Permutation::new(vec![1, 0, 2]).unwrap();
        let b = Permutation::new(vec![0, 2, 1]).unwrap();
        assert!(FiniteSystem::uniform(3, vec![a.clone(), b]).is_err());
        assert!(FiniteSystem::new(vec![0.5, 0.25, 0.25], vec![a]).is_err());
        assert!(Permutation::new(vec![0, 0]).is_err());
        assert!(FiniteSystem::new(vec![0.5, 0.4], vec![]).is_err());
    }

    #[test]
    fn word_parser() {
        assert_eq!(TransformationWord::parse("T2*T1^-1", 2).unwrap().0, vec![-1, 1]);
        assert_eq!(TransformationWord::parse("T2", 2).unwrap().0, vec![0, 1]);
        assert!(TransformationWord::parse("T3", 2).is_err());
        assert!(TransformationWord::parse("S1", 2).is_err());
    }

    #[test]
    fn skew_examples() {
        let quarter = Frac128::from_ratio(1, 4).unwrap();
        let s = SkewProductSystem::new(quarter, (Frac128::ZERO, Frac128::ZERO));
        assert_eq!(s.orbit_point(0).unwrap(), s.start);
        assert_eq!(s.orbit_point(4).unwrap(), (Frac128::ZERO, Frac128::ZERO));
        assert!(s.orbit_point(SKEW_MAX_TIME + 1).is_err());
    }

    #[test]
    fn skew_closed_form_matches_iteration() {
        let s = SkewProductSystem::new(Frac128::sqrt2_minus_1(), (Frac128::from_f64(0.1), Frac128::from_f64(0.7)));
        let mut p = s.start;
        for n in 1..=1000 {
            p = s.step(p);
            let c = s.orbit_point(n).unwrap();
            // Wrapping fixed point is exact, so the agreement is bitwise.
            assert_eq!(p, c);
        }
        let back = s.orbit_point(-3).unwrap();
        let mut p = back;
        for _ in 0..3 {
            p = s.step(p);
        }
        assert_eq!(p, s.start);
    }

    #[test]
    fn refinement_of_partitions() {
        let a = [0, 0, 2, 2];
        let b = [0, 1, 1, 0];
        assert_eq!(refine_partitions(&a, &b), vec![0, 1, 2, 3]);
        assert_eq!(refine_partitions(&a, &a), a.to_vec());
    }

    proptest! {
        #[test]
        fn word_to_map_is_a_homomorphism(q in 1u64..9, a in -5i64..5, b in -5i64..5, c in -5i64..5, d in -5i64..5) {
            let s = FiniteSystem::product_rotation(q, 2, &[vec![1, 2], vec![0, 1]]).unwrap();
            let w1 = TransformationWord(vec![a, b]);
            let w2 = TransformationWord(vec![c, d]);
            let lhs = s.word_to_map(&w1.add(&w2)).unwrap();
            let rhs = s.word_to_map(&w1).unwrap().compose(&s.word_to_map(&w2).unwrap());
            prop_assert_eq!(lhs, rhs);
        }

        #[test]
        fn conditional_expectation_is_orthogonal_projection(q in 2u64..10, step in 0i64..10, seed in any::<u64>()) {
            let s = FiniteSystem::product_rotation(q, 2, &[vec![step, 1], vec![1, 0]]).unwrap();
            let w = TransformationWord(vec![1, 0]);
            let f = Observable::random_bounded(s.len(), seed, 1);
            let ef = s.conditional_expectation_invariant(&f, &w).unwrap();
            let eef = s.conditional_expectation_invariant(&ef, &w).unwrap();
            prop_assert!(eef.max_abs_diff(&ef) < 1e-10);
            // A random invariant g: project another random function.
            let g = s.conditional_expectation_invariant(&Observable::random_bounded(s.len(), seed, 2), &w).unwrap();
            prop_assert!(s.inner(&f.sub(&ef), &g).norm() < 1e-10);
            prop_assert!(s.l2_norm(&ef) <= s.l2_norm(&f) + 1e-12);
        }

        #[test]
        fn generators_commute_and_preserve_weights(q in 1u64..7, d in 1usize..3, raw in prop::collection::vec(-4i64..4, 6)) {
            let shifts: Vec<Vec<i64>> = raw.chunks(3).map(|c| c[..d].to_vec()).collect();
            let s = FiniteSystem::product_rotation(q, d, &shifts).unwrap();
            for t in s.maps() {
                for x in 0..s.len() {
                    prop_assert_eq!(s.weights()[t.apply(x)], s.weights()[x]);
                }
            }
            let (a, b) = (&s.maps()[0], &s.maps()[1]);
            prop_assert_eq!(a.compose(b), b.compose(a));
        }
    }
}
