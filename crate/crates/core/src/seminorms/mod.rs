//! Box seminorms, dual functions and related diagnostics on finite systems.
//!
//! Every `lim_H E_{h ∈ [H]}` becomes an exact mean over one full period of
//! the relevant permutation. The innermost mean `E_h g(R^h x)` is the mean of
//! `g` over the `R`-orbit of `x`, so the last average of each recursion is a
//! conditional expectation onto `I(R)` instead of an explicit `h`-loop.

mod cube;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use cube::{cubic_measure, join_expectation, magic_extension, CubeSystem};

use crate::error::{LabError, Result};
use crate::numeric::{clamp_nonnegative, fsum, ComplexSum, NeumaierSum};
use crate::systems::{FiniteSystem, Observable, Permutation, TransformationWord};

pub const MAX_SPEC_LEN: usize = 6;
pub const DEFAULT_BUDGET: u128 = 1 << 36;
const NEG_TOL: f64 = 1e-9;
/// Fixed partition of `h`-sweeps, independent of the worker count.
const SWEEP_CHUNKS: u64 = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeminormSpec {
    pub words: Vec<TransformationWord>,
    pub budget: u128,
}

impl SeminormSpec {
    pub fn new(words: Vec<TransformationWord>) -> Result<Self> {
        if words.is_empty() || words.len() > MAX_SPEC_LEN {
            return Err(LabError::invalid(format!(
                "seminorm spec needs 1..={MAX_SPEC_LEN} words, got {}",
                words.len()
            )));
        }
        if words.iter().any(|w| w.0.len() != words[0].0.len()) {
            return Err(LabError::invalid("words in a spec must have equal length"));
        }
        Ok(SeminormSpec { words, budget: DEFAULT_BUDGET })
    }

    /// `"T2*T1^-1,T2,T2"` for a system with `l` generators.
    pub fn parse(text: &str, l: usize) -> Result<Self> {
        Self::new(text.split(',').map(|w| TransformationWord::parse(w, l)).collect::<Result<_>>()?)
    }

    pub fn with_budget(mut self, budget: u128) -> Self {
        self.budget = budget;
        self
    }

    pub fn s(&self) -> usize {
        self.words.len()
    }
}

/// Resolved words: permutations, periods and orbit labels.
struct Resolved {
    maps: Vec<Permutation>,
    periods: Vec<u64>,
}

fn resolve(sys: &FiniteSystem, spec: &SeminormSpec, what: &str) -> Result<Resolved> {
    let maps: Vec<Permutation> = spec.words.iter().map(|w| sys.word_to_map(w)).collect::<Result<_>>()?;
    let periods: Vec<u64> = maps.iter().map(Permutation::order).collect();
    let needed = periods
        .iter()
        .fold(sys.len() as u128, |acc, &p| acc.saturating_mul(p as u128));
    if needed > spec.budget {
        return Err(LabError::Budget { what: what.to_string(), needed, budget: spec.budget });
    }
    Ok(Resolved { maps, periods })
}

fn check_len(sys: &FiniteSystem, f: &Observable) -> Result<()> {
    if f.len() != sys.len() {
        return Err(LabError::invalid(format!("observable has {} values, system has {} points", f.len(), sys.len())));
    }
    Ok(())
}

/// `Δ_{(T^w)^h} f = f · (T^w)^h f̄`.
pub fn mult_derivative(sys: &FiniteSystem, f: &Observable, w: &TransformationWord, h: i64) -> Result<Observable> {
    check_len(sys, f)?;
    let t = sys.word_to_map(w)?.pow(h);
    Ok(f.mul(&f.compose(&t).conj()))
}

/// `Σ_O |Σ_{x∈O} w_x g_x|² / W_O = ‖E(g | I(R))‖²`.
fn invariant_energy(weights: &[f64], labels: &[usize], g: &[Complex64]) -> f64 {
    let m = g.len();
    let mut num = vec![ComplexSum::new(); m];
    let mut den = vec![NeumaierSum::new(); m];
    for x in 0..m {
        num[labels[x]].add(g[x] * weights[x]);
        den[labels[x]].add(weights[x]);
    }
    let mut acc = NeumaierSum::new();
    for c in 0..m {
        let w = den[c].value();
        if w > 0.0 {
            acc.add(num[c].value().norm_sqr() / w);
        }
    }
    acc.value()
}

/// `⟦g⟧^{2^k}` along the first `k` resolved maps.
fn box_power(weights: &[f64], maps: &[Permutation], labels1: &[usize], periods: &[u64], g: &[Complex64], k: usize) -> f64 {
    if k == 1 {
        return invariant_energy(weights, labels1, g);
    }
    let r = &maps[k - 1];
    let m = g.len();
    let mut cur: Vec<usize> = (0..m).collect();
    let mut terms = Vec::with_capacity(periods[k - 1] as usize);
    let mut d = vec![Complex64::new(0.0, 0.0); m];
    for _ in 0..periods[k - 1] {
        for x in 0..m {
            d[x] = g[x] * g[cur[x]].conj();
        }
        terms.push(box_power(weights, maps, labels1, periods, &d, k - 1));
        for c in cur.iter_mut() {
            *c = r.apply(*c);
        }
    }
    fsum(&terms) / periods[k - 1] as f64
}

/// `⟦f⟧^{2^s}` before the root, clamped at zero.
pub fn box_seminorm_power(sys: &FiniteSystem, f: &Observable, spec: &SeminormSpec) -> Result<f64> {
    check_len(sys, f)?;
    let res = resolve(sys, spec, "box seminorm")?;
    let s = spec.s();
    let labels1 = res.maps[0].orbit_labels();
    let g = f.values();
    let w = sys.weights();
    let raw = if s == 1 {
        invariant_energy(w, &labels1, g)
    } else {
        // Outermost sweep in parallel; one term per h, summed in h order.
        let r = &res.maps[s - 1];
        let ps = res.periods[s - 1];
        let terms: Vec<f64> = (0..ps)
            .into_par_iter()
            .map(|h| {
                let t = r.pow(h as i64);
                let d: Vec<Complex64> = (0..g.len()).map(|x| g[x] * g[t.apply(x)].conj()).collect();
                box_power(w, &res.maps, &labels1, &res.periods, &d, s - 1)
            })
            .collect();
        fsum(&terms) / ps as f64
    };
    clamp_nonnegative(raw, NEG_TOL, "box seminorm")
}

/// `⟦f⟧_{R_1,…,R_s}`.
pub fn box_seminorm(sys: &FiniteSystem, f: &Observable, spec: &SeminormSpec) -> Result<f64> {
    let p = box_seminorm_power(sys, f, spec)?;
    Ok(p.powf(1.0 / (1u64 << spec.s()) as f64))
}

/// Tuples `h ∈ ∏ [0, P_i)` enumerated with the first index fastest.
fn unflatten(mut idx: u64, periods: &[u64], out: &mut [u64]) {
    for (o, &p) in out.iter_mut().zip(periods) {
        *o = idx % p;
        idx /= p;
    }
}

/// `D((f_ε)_{ε≠0})(x) = E_h ∏_{ε≠0} C^{|ε|} f_ε(R^{ε·h} x)`. `fs[e - 1]` is
/// `f_ε` for the bitmask `e` (bit `i` ↔ `ε_{i+1}`).
pub fn dual_function(sys: &FiniteSystem, fs: &[Observable], spec: &SeminormSpec) -> Result<Observable> {
    let s = spec.s();
    if fs.len() != (1 << s) - 1 {
        return Err(LabError::invalid(format!("dual function of order {s} needs {} observables", (1 << s) - 1)));
    }
    for f in fs {
        check_len(sys, f)?;
    }
    let res = resolve(sys, spec, "dual function")?;
    let m = sys.len();
    let last = &res.maps[s - 1];
    let labels = last.orbit_labels();
    let outer = &res.periods[..s - 1];
    let total: u64 = outer.iter().product();
    let half = 1usize << (s - 1);
    let f_at = |e: usize| fs[e - 1].values();

    let chunk_len = total.div_ceil(SWEEP_CHUNKS.min(total));
    let chunks: Vec<Vec<Complex64>> = (0..total.div_ceil(chunk_len))
        .into_par_iter()
        .map(|c| {
            let mut acc = vec![ComplexSum::new(); m];
            let mut h = vec![0u64; s - 1];
            let mut pis: Vec<Vec<usize>> = vec![(0..m).collect(); half];
            let mut av = vec![Complex64::new(0.0, 0.0); m];
            let mut bv = vec![Complex64::new(0.0, 0.0); m];
            for idx in c * chunk_len..((c + 1) * chunk_len).min(total) {
                unflatten(idx, outer, &mut h);
                // π_{ε'} = ∏_{i ∈ ε'} R_i^{h_i}, built from ε' minus its lowest bit.
                let powers: Vec<Permutation> =
                    (0..s - 1).map(|i| res.maps[i].pow(h[i] as i64)).collect();
                for e in 1..half {
                    let low = e.trailing_zeros() as usize;
                    let prev = e & (e - 1);
                    let (head, tail) = pis.split_at_mut(e);
                    for (dst, &src) in tail[0].iter_mut().zip(&head[prev]) {
                        *dst = powers[low].apply(src);
                    }
                }
                // B: the ε_s = 0 face without its origin. A: the ε_s = 1 face,
                // whose h_s-mean is the R_s-orbit mean.
                for x in 0..m {
                    let mut b = Complex64::new(1.0, 0.0);
                    for (e, pi) in pis.iter().enumerate().skip(1) {
                        let v = f_at(e)[pi[x]];
                        b *= if e.count_ones() % 2 == 1 { v.conj() } else { v };
                    }
                    let mut p = Complex64::new(1.0, 0.0);
                    for (e, pi) in pis.iter().enumerate() {
                        let v = f_at(e | half)[pi[x]];
                        p *= if e.count_ones() % 2 == 1 { v.conj() } else { v };
                    }
                    bv[x] = b;
                    av[x] = p;
                }
                let mean = orbit_mean(&labels, &av);
                for x in 0..m {
                    acc[x].add(bv[x] * mean[x].conj());
                }
            }
            acc.iter().map(ComplexSum::value).collect()
        })
        .collect();
    let mut out = vec![ComplexSum::new(); m];
    for part in &chunks {
        for (o, v) in out.iter_mut().zip(part) {
            o.add(*v);
        }
    }
    Ok(Observable::from_values(out.iter().map(|v| v.value() / total as f64).collect()))
}

/// Unweighted mean over each orbit; equals the full-period mean `E_h g(R^h x)`.
fn orbit_mean(labels: &[usize], g: &[Complex64]) -> Vec<Complex64> {
    let m = g.len();
    let mut sum = vec![ComplexSum::new(); m];
    let mut count = vec![0usize; m];
    for x in 0..m {
        sum[labels[x]].add(g[x]);
        count[labels[x]] += 1;
    }
    (0..m).map(|x| sum[labels[x]].value() / count[labels[x]] as f64).collect()
}

/// Dual function of a single observable, `D(f)` with every `f_ε = f`.
pub fn dual_of(sys: &FiniteSystem, f: &Observable, spec: &SeminormSpec) -> Result<Observable> {
    let fs = vec![f.clone(); (1 << spec.s()) - 1];
    dual_function(sys, &fs, spec)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcsBounds {
    pub lhs: f64,
    pub rhs: f64,
}

/// Gowers–Cauchy–Schwarz: `|E_h ∫ ∏_ε C^{|ε|} R^{ε·h} f_ε| ≤ ∏_ε ⟦f_ε⟧`.
pub fn gcs_check(sys: &FiniteSystem, fs: &[Observable], spec: &SeminormSpec) -> Result<GcsBounds> {
    let s = spec.s();
    if fs.len() != 1 << s {
        return Err(LabError::invalid(format!("GCS of order {s} needs {} observables", 1 << s)));
    }
    let d = dual_function(sys, &fs[1..], spec)?;
    let lhs = sys.integral(&fs[0].mul(&d)).norm();
    let mut rhs = 1.0;
    for f in fs {
        rhs *= box_seminorm(sys, f, spec)?;
    }
    Ok(GcsBounds { lhs, rhs })
}

/// `‖χ − E_{h1,h2} T^{h1+h2}χ̄ · T^{h1}χ · T^{h2}χ‖_{L²(μ)}` for `T = T^w`.
pub fn eigenfunction_residual(sys: &FiniteSystem, chi: &Observable, w: &TransformationWord) -> Result<f64> {
    check_len(sys, chi)?;
    for (x, v) in chi.values().iter().enumerate() {
        let a = v.norm();
        if !(a <= 1e-9 || (a - 1.0).abs() <= 1e-9) {
            return Err(LabError::invalid(format!("|chi({x})| = {a} is neither 0 nor 1")));
        }
    }
    let t = sys.word_to_map(w)?;
    let p = t.order();
    let labels = t.orbit_labels();
    let c = chi.values();
    let m = sys.len();
    // For fixed h1 the h2-mean is the orbit mean of y ↦ χ(y) χ̄(T^{h1} y).
    let terms: Vec<Vec<Complex64>> = (0..p)
        .into_par_iter()
        .map(|h1| {
            let th = t.pow(h1 as i64);
            let g: Vec<Complex64> = (0..m).map(|y| c[y] * c[th.apply(y)].conj()).collect();
            let mean = orbit_mean(&labels, &g);
            (0..m).map(|x| c[th.apply(x)] * mean[x]).collect()
        })
        .collect();
    let mut avg = vec![ComplexSum::new(); m];
    for term in &terms {
        for (a, v) in avg.iter_mut().zip(term) {
            a.add(*v);
        }
    }
    let diff = Observable::from_values((0..m).map(|x| c[x] - avg[x].value() / p as f64).collect());
    Ok(sys.l2_norm(&diff))
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Direct nested sums over every `h ∈ ∏ [0, P_i)`, no orbit shortcuts.
    use super::*;

    pub fn cube_average(sys: &FiniteSystem, fs: &[Observable], words: &[TransformationWord]) -> Complex64 {
        let s = words.len();
        let maps: Vec<Permutation> = words.iter().map(|w| sys.word_to_map(w).unwrap()).collect();
        let periods: Vec<u64> = maps.iter().map(Permutation::order).collect();
        let total: u64 = periods.iter().product();
        let mut h = vec![0u64; s];
        let mut acc = ComplexSum::new();
        for idx in 0..total {
            unflatten(idx, &periods, &mut h);
            for x in 0..sys.len() {
                let mut prod = Complex64::new(1.0, 0.0);
                for (e, f) in fs.iter().enumerate() {
                    let mut y = x;
                    for i in 0..s {
                        if e >> i & 1 == 1 {
                            for _ in 0..h[i] {
                                y = maps[i].apply(y);
                            }
                        }
                    }
                    let v = f.values()[y];
                    prod *= if e.count_ones() % 2 == 1 { v.conj() } else { v };
                }
                acc.add(prod * sys.weights()[x]);
            }
        }
        acc.value() / total as f64
    }

    pub fn seminorm_power(sys: &FiniteSystem, f: &Observable, words: &[TransformationWord]) -> f64 {
        let fs = vec![f.clone(); 1 << words.len()];
        cube_average(sys, &fs, words).re
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::e;
    use proptest::prelude::*;

    fn rot(q: u64, shifts: &[i64]) -> FiniteSystem {
        FiniteSystem::product_rotation(q, 1, &shifts.iter().map(|&s| vec![s]).collect::<Vec<_>>()).unwrap()
    }

    fn char1(q: u64) -> Observable {
        Observable::from_values((0..q).map(|x| e(x as f64 / q as f64)).collect())
    }

    fn spec(words: &[&[i64]]) -> SeminormSpec {
        SeminormSpec::new(words.iter().map(|w| TransformationWord(w.to_vec())).collect()).unwrap()
    }

    #[test]
    fn derivative_examples() {
        let sys = rot(7, &[1]);
        let f = char1(7);
        let w = TransformationWord(vec![1]);
        let d0 = mult_derivative(&sys, &f, &w, 0).unwrap();
        assert!(d0.values().iter().all(|v| (v.re - 1.0).abs() < 1e-15 && v.im.abs() < 1e-15));
        for h in 0..7 {
            let d = mult_derivative(&sys, &f, &w, h).unwrap();
            let want = e(-(h as f64) / 7.0);
            assert!(d.values().iter().all(|v| (v - want).norm() < 1e-12));
        }
        let one = mult_derivative(&sys, &Observable::ones(7), &w, 3).unwrap();
        assert_eq!(one, Observable::ones(7));
    }

    #[test]
    fn seminorm_examples() {
        let sys = rot(9, &[1]);
        assert!((box_seminorm(&sys, &Observable::ones(9), &spec(&[&[1], &[1], &[1]])).unwrap() - 1.0).abs() < 1e-12);
        assert!(box_seminorm(&sys, &char1(9), &spec(&[&[1]])).unwrap() < 1e-6);
        assert!(box_seminorm_power(&sys, &char1(9), &spec(&[&[1]])).unwrap() < 1e-25);
        assert!((box_seminorm(&sys, &char1(9), &spec(&[&[1], &[1]])).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn dual_examples() {
        let sys = rot(6, &[1]);
        let s2 = spec(&[&[1], &[1]]);
        let d = dual_of(&sys, &Observable::ones(6), &s2).unwrap();
        assert!(d.max_abs_diff(&Observable::ones(6)) < 1e-14);

        let f = Observable::random_bounded(6, 11, 0);
        let d = dual_of(&sys, &f, &spec(&[&[1]])).unwrap();
        let mean = sys.integral(&f).conj();
        assert!(d.values().iter().all(|v| (v - mean).norm() < 1e-14));
    }

    #[test]
    fn dual_identity_against_nested_oracle() {
        let sys = rot(12, &[1, 5]);
        for seed in 0..5 {
            let f = Observable::random_unimodular(12, seed, 0);
            for words in [&[&[1i64, 0][..], &[0, 1]][..], &[&[1, 0], &[1, 1]], &[&[2, 0], &[0, 3], &[1, 0]]] {
                let sp = spec(words);
                let d = dual_of(&sys, &f, &sp).unwrap();
                let pairing = sys.integral(&f.mul(&d));
                let want = oracle::seminorm_power(&sys, &f, &sp.words);
                assert!((pairing.re - want).abs() < 1e-12 && pairing.im.abs() < 1e-12);
                let direct = box_seminorm_power(&sys, &f, &sp).unwrap();
                assert!((direct - want).abs() < 1e-12, "{direct} vs {want}");
            }
        }
    }

    #[test]
    fn gcs_examples() {
        let sys = rot(10, &[1, 3]);
        let sp = spec(&[&[1, 0], &[0, 1]]);
        let ones = vec![Observable::ones(10); 4];
        let b = gcs_check(&sys, &ones, &sp).unwrap();
        assert!((b.lhs - 1.0).abs() < 1e-12 && (b.rhs - 1.0).abs() < 1e-12);
        let mut zs = ones.clone();
        zs[2] = Observable::constant(10, Complex64::new(0.0, 0.0));
        let b = gcs_check(&sys, &zs, &sp).unwrap();
        assert_eq!((b.lhs, b.rhs), (0.0, 0.0));
        let fs: Vec<Observable> = (0..4).map(|i| Observable::random_unimodular(10, 5, i)).collect();
        let b = gcs_check(&sys, &fs, &sp).unwrap();
        assert!(b.lhs <= b.rhs + 1e-9);
        let direct = oracle::cube_average(&sys, &fs, &sp.words).norm();
        assert!((direct - b.lhs).abs() < 1e-12);
    }

    #[test]
    fn eigen_examples() {
        for q in [5u64, 8, 13] {
            let sys = rot(q, &[1]);
            for k in 0..q {
                let chi = Observable::from_values((0..q).map(|x| e((k * x) as f64 / q as f64)).collect());
                assert!(eigenfunction_residual(&sys, &chi, &TransformationWord(vec![1])).unwrap() < 1e-9);
            }
        }
        let sys = rot(16, &[1]);
        let chi = Observable::random_unimodular(16, 1, 0);
        assert!(eigenfunction_residual(&sys, &chi, &TransformationWord(vec![1])).unwrap() > 0.1);
        let half = Observable::from_values(vec![Complex64::new(0.5, 0.0); 16]);
        assert!(eigenfunction_residual(&sys, &half, &TransformationWord(vec![1])).is_err());
    }

    #[test]
    fn nonergodic_eigenfunction_with_invariant_eigenvalue() {
        // On Z_6 with T = +2 the eigenvalue may differ between the two orbits,
        // and χ may vanish on one of them.
        let sys = rot(6, &[2]);
        let chi = Observable::from_values(
            (0..6).map(|x| if x % 2 == 0 { e(x as f64 / 6.0) } else { Complex64::new(0.0, 0.0) }).collect(),
        );
        assert!(eigenfunction_residual(&sys, &chi, &TransformationWord(vec![1])).unwrap() < 1e-12);
    }

    #[test]
    fn budget_guard() {
        let sys = rot(12, &[1]);
        let sp = spec(&[&[1], &[1], &[1]]).with_budget(1000);
        assert!(matches!(box_seminorm(&sys, &Observable::ones(12), &sp), Err(LabError::Budget { .. })));
        assert!(SeminormSpec::new(vec![]).is_err());
        assert!(SeminormSpec::new(vec![TransformationWord(vec![1]); 7]).is_err());
    }

    #[test]
    fn factor_property_for_single_transformation() {
        let sys = FiniteSystem::product_rotation(6, 2, &[vec![2, 0], vec![0, 1]]).unwrap();
        let w = TransformationWord(vec![1, 0]);
        let sp = SeminormSpec::new(vec![w.clone()]).unwrap();
        let f = Observable::random_bounded(36, 2, 0);
        let ef = sys.conditional_expectation_invariant(&f, &w).unwrap();
        let v = box_seminorm(&sys, &f, &sp).unwrap();
        assert!((v * v - sys.l2_norm(&ef).powi(2)).abs() < 1e-12);
        let g = f.sub(&ef);
        assert!(box_seminorm_power(&sys, &g, &sp).unwrap() < 1e-20);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]

        #[test]
        fn permutation_invariance(seed in any::<u64>(), q in 2u64..13) {
            let sys = rot(q, &[1, 2]);
            let f = Observable::random_bounded(q as usize, seed, 0);
            let a = box_seminorm(&sys, &f, &spec(&[&[1, 0], &[0, 1], &[1, 1]])).unwrap();
            let b = box_seminorm(&sys, &f, &spec(&[&[1, 1], &[1, 0], &[0, 1]])).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn monotone_in_length(seed in any::<u64>(), q in 2u64..13) {
            let sys = rot(q, &[1, 3]);
            let f = Observable::random_bounded(q as usize, seed, 0);
            let a = box_seminorm(&sys, &f, &spec(&[&[0, 1]])).unwrap();
            let b = box_seminorm(&sys, &f, &spec(&[&[0, 1], &[1, 0]])).unwrap();
            let c = box_seminorm(&sys, &f, &spec(&[&[0, 1], &[1, 0], &[1, -1]])).unwrap();
            prop_assert!(a <= b + 1e-9 && b <= c + 1e-9);
        }

        #[test]
        fn dual_pairing_is_real(seed in any::<u64>()) {
            let sys = rot(8, &[1, 3]);
            let f = Observable::random_bounded(8, seed, 0);
            let sp = spec(&[&[1, 0], &[0, 1]]);
            let d = dual_of(&sys, &f, &sp).unwrap();
            let p = sys.integral(&f.mul(&d));
            prop_assert!(p.im.abs() < 1e-12);
            prop_assert!((p.re - box_seminorm_power(&sys, &f, &sp).unwrap()).abs() < 1e-12);
        }
    }
}
