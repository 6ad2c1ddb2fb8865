//! Cubic measures `μ^{[s]}` as sparse support lists, and the magic
//! extension built on them.
//!
//! `μ^{[i]}` is the relative product of `μ^{[i-1]}` with itself over the
//! orbit partition of the diagonal map `R_i × ··· × R_i`: a new point is
//! `(a, b)` with `a, b` in one orbit `O`, weighted `w_a w_b / μ^{[i-1]}(O)`.
//! The tuple index is the vertex `ε`, bit `i-1` selecting the copy.

use std::collections::HashMap;

use num_complex::Complex64;

use crate::error::{LabError, Result};
use crate::numeric::{ComplexSum, NeumaierSum};
use crate::systems::{refine_partitions, FiniteSystem, Observable, Permutation, TransformationWord};

pub const MAX_CUBE_LEVEL: usize = 3;
pub const MAX_CUBE_SUPPORT: usize = 1 << 22;

#[derive(Clone, Debug)]
pub struct CubeSystem {
    pub base: FiniteSystem,
    pub s: usize,
    /// Flat tuples: point `t` occupies `support[t * 2^s .. (t + 1) * 2^s]`.
    pub support: Vec<u32>,
    pub weights: Vec<f64>,
    /// `R_i^*`: `R_i` applied to the coordinates with `ε_i = 0`.
    pub side_maps: Vec<Permutation>,
    /// `T_j^*`, present for magic extensions.
    pub lifted: Vec<Permutation>,
}

impl CubeSystem {
    pub fn width(&self) -> usize {
        1 << self.s
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn tuple(&self, t: usize) -> &[u32] {
        &self.support[t * self.width()..(t + 1) * self.width()]
    }

    /// The cube as a finite system acted on by the side maps.
    pub fn side_system(&self) -> Result<FiniteSystem> {
        FiniteSystem::new(self.weights.clone(), self.side_maps.clone())
    }

    /// The cube as a finite system acted on by the lifted generators.
    pub fn lifted_system(&self) -> Result<FiniteSystem> {
        FiniteSystem::new(self.weights.clone(), self.lifted.clone())
    }

    /// Push-forward of the cube measure under the coordinate `ε`.
    pub fn marginal(&self, eps: usize) -> Vec<f64> {
        let mut acc = vec![NeumaierSum::new(); self.base.len()];
        for t in 0..self.len() {
            acc[self.tuple(t)[eps] as usize].add(self.weights[t]);
        }
        acc.iter().map(NeumaierSum::value).collect()
    }

    /// `∫ ⊗_ε C^{|ε|} f dμ^{[s]}`.
    pub fn tensor_integral(&self, f: &Observable) -> Complex64 {
        let mut acc = ComplexSum::new();
        for t in 0..self.len() {
            let mut prod = Complex64::new(1.0, 0.0);
            for (e, &x) in self.tuple(t).iter().enumerate() {
                let v = f.values()[x as usize];
                prod *= if e.count_ones() % 2 == 1 { v.conj() } else { v };
            }
            acc.add(prod * self.weights[t]);
        }
        acc.value()
    }

    /// `f ∘ π_ε` on the cube.
    pub fn lift_coordinate(&self, f: &Observable, eps: usize) -> Observable {
        Observable::from_values((0..self.len()).map(|t| f.values()[self.tuple(t)[eps] as usize]).collect())
    }

    fn index(&self) -> HashMap<&[u32], usize> {
        (0..self.len()).map(|t| (self.tuple(t), t)).collect()
    }

    /// Permutation of the support induced by applying `r` to the
    /// coordinates selected by `mask`.
    fn induced(&self, r: &Permutation, mask: impl Fn(usize) -> bool) -> Result<Permutation> {
        let index = self.index();
        let mut img = vec![0u32; self.width()];
        let map = (0..self.len())
            .map(|t| {
                for (e, &x) in self.tuple(t).iter().enumerate() {
                    img[e] = if mask(e) { r.apply(x as usize) as u32 } else { x };
                }
                index
                    .get(img.as_slice())
                    .copied()
                    .ok_or_else(|| LabError::invalid("cube support is not invariant under a side map"))
            })
            .collect::<Result<Vec<_>>>()?;
        Permutation::new(map)
    }
}

/// `μ^{[s]}` for the words `R_1..R_s`, with side maps `R_i^*`.
pub fn cubic_measure(sys: &FiniteSystem, words: &[TransformationWord]) -> Result<CubeSystem> {
    let s = words.len();
    if s == 0 || s > MAX_CUBE_LEVEL {
        return Err(LabError::invalid(format!("cubic measures are supported for 1 <= s <= {MAX_CUBE_LEVEL}")));
    }
    let maps: Vec<Permutation> = words.iter().map(|w| sys.word_to_map(w)).collect::<Result<_>>()?;
    let mut width = 1usize;
    let mut support: Vec<u32> = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (x, &w) in sys.weights().iter().enumerate() {
        if w > 0.0 {
            support.push(x as u32);
            weights.push(w);
        }
    }
    for r in &maps {
        let n = weights.len();
        let cube = CubeSystem {
            base: sys.clone(),
            s: width.trailing_zeros() as usize,
            support,
            weights,
            side_maps: Vec::new(),
            lifted: Vec::new(),
        };
        let diag = cube.induced(r, |_| true)?;
        let labels = diag.orbit_labels();
        let mut orbits: Vec<Vec<usize>> = Vec::new();
        let mut slot = vec![usize::MAX; n];
        for t in 0..n {
            let l = labels[t];
            if slot[l] == usize::MAX {
                slot[l] = orbits.len();
                orbits.push(Vec::new());
            }
            orbits[slot[l]].push(t);
        }
        let new_len: usize = orbits.iter().map(|o| o.len() * o.len()).sum();
        if new_len > MAX_CUBE_SUPPORT {
            return Err(LabError::Budget {
                what: "cubic measure support".into(),
                needed: new_len as u128,
                budget: MAX_CUBE_SUPPORT as u128,
            });
        }
        let mut next_support = Vec::with_capacity(new_len * 2 * width);
        let mut next_weights = Vec::with_capacity(new_len);
        for o in &orbits {
            let mut mass = NeumaierSum::new();
            o.iter().for_each(|&t| mass.add(cube.weights[t]));
            let mass = mass.value();
            for &a in o {
                for &b in o {
                    next_support.extend_from_slice(cube.tuple(a));
                    next_support.extend_from_slice(cube.tuple(b));
                    next_weights.push(cube.weights[a] * cube.weights[b] / mass);
                }
            }
        }
        support = next_support;
        weights = next_weights;
        width *= 2;
    }
    let mut cube = CubeSystem { base: sys.clone(), s, support, weights, side_maps: Vec::new(), lifted: Vec::new() };
    cube.side_maps = maps
        .iter()
        .enumerate()
        .map(|(i, r)| cube.induced(r, |e| e >> i & 1 == 0))
        .collect::<Result<_>>()?;
    Ok(cube)
}

fn det(m: &[Vec<i128>]) -> i128 {
    let n = m.len();
    if n == 1 {
        return m[0][0];
    }
    (0..n)
        .map(|j| {
            let minor: Vec<Vec<i128>> = m[1..]
                .iter()
                .map(|row| row.iter().enumerate().filter(|&(c, _)| c != j).map(|(_, &v)| v).collect())
                .collect();
            let sign = if j % 2 == 0 { 1 } else { -1 };
            sign * m[0][j] * det(&minor)
        })
        .sum()
}

/// Integer inverse of a unimodular matrix, `None` otherwise.
fn integer_inverse(b: &[Vec<i128>]) -> Option<Vec<Vec<i128>>> {
    let n = b.len();
    let d = det(b);
    if d.abs() != 1 {
        return None;
    }
    if n == 1 {
        return Some(vec![vec![d]]);
    }
    let mut inv = vec![vec![0i128; n]; n];
    for (i, row) in inv.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            // inv[i][j] = cofactor(j, i) / det
            let minor: Vec<Vec<i128>> = b
                .iter()
                .enumerate()
                .filter(|&(r, _)| r != j)
                .map(|(_, r)| r.iter().enumerate().filter(|&(c, _)| c != i).map(|(_, &x)| x).collect())
                .collect();
            let sign = if (i + j) % 2 == 0 { 1 } else { -1 };
            *v = sign * det(&minor) * d;
        }
    }
    Some(inv)
}

/// Magic extension on `μ^{[s]}`. The words must lie in `⟨T_1..T_s⟩` and
/// their `s × s` exponent block must be invertible over `Z`; then
/// `T_j^* = ∏_i (R_i^*)^{c_{ji}}` with `C = B^{-1}` for `j ≤ s` and `T_j^*` is
/// the diagonal map for `j > s`.
pub fn magic_extension(sys: &FiniteSystem, words: &[TransformationWord]) -> Result<CubeSystem> {
    let s = words.len();
    let l = sys.generator_count();
    if s == 0 || s > l {
        return Err(LabError::invalid(format!("magic extension needs 1 <= s <= {l} words")));
    }
    for w in words {
        if w.0.len() != l {
            return Err(LabError::invalid("word length differs from the generator count"));
        }
        if w.0[s..].iter().any(|&b| b != 0) {
            return Err(LabError::invalid(format!("word {:?} leaves the subgroup <T_1..T_{s}>", w.0)));
        }
    }
    let block: Vec<Vec<i128>> = words.iter().map(|w| w.0[..s].iter().map(|&b| b as i128).collect()).collect();
    let c = integer_inverse(&block).ok_or_else(|| {
        LabError::invalid(format!("words do not generate <T_1..T_{s}>: exponent block {block:?} is not unimodular"))
    })?;
    let mut cube = cubic_measure(sys, words)?;
    let mut lifted = Vec::with_capacity(l);
    for j in 0..l {
        let t = if j < s {
            c[j].iter().zip(&cube.side_maps).fold(Permutation::identity(cube.len()), |acc, (&e, r)| {
                acc.compose(&r.pow(e as i64))
            })
        } else {
            cube.induced(&sys.maps()[j], |_| true)?
        };
        lifted.push(t);
    }
    cube.lifted = lifted;
    Ok(cube)
}

/// `E(f | I(S_1) ∨ ··· ∨ I(S_k))`: the join of invariant algebras is the
/// common refinement of the orbit partitions.
pub fn join_expectation(sys: &FiniteSystem, f: &Observable, maps: &[Permutation]) -> Observable {
    let mut labels: Vec<usize> = vec![0; sys.len()];
    for m in maps {
        labels = refine_partitions(&labels, &m.orbit_labels());
    }
    sys.expectation_on_partition(f, &labels)
}
