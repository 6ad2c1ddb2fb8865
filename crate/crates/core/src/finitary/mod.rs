//! Finitary analysis on the grid `[-N..N]^ℓ ⊂ Z^ℓ`.
//!
//! Functions are stored densely on the box, last coordinate fastest, and are
//! implicitly zero outside it. Box norms along direction sets, the
//! constructive inverse witnesses, structured functions and the regularity
//! decomposition are built on top of that representation.

mod norm;
mod regularity;
mod structured;
mod witness;

pub use norm::{
    exact_cost, grid_box_norm, grid_box_norm_mc, grid_box_norm_power, MonteCarloNorm,
    DEFAULT_GRID_BUDGET,
};
pub use regularity::{
    default_growth, regularity_decompose, regularity_decompose_with, Certificates,
    RegularityOptions, RegularityOutput,
};
pub use structured::{correlate_structured, Atom, StructuredFunction};
pub use witness::{
    box_inverse_witness, box_inverse_witness_with, u2_inverse_witness, BoxWitness,
    BoxWitnessOptions, U2Witness,
};

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::numeric::{e, substream};

/// Largest grid (number of points) any operation will allocate.
pub const MAX_GRID_POINTS: usize = 1 << 26;

/// Geometry of `[-n..n]^ell`: strides and sub-box traversal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct Shape {
    pub ell: usize,
    pub n: i64,
    pub width: usize,
    pub strides: Vec<usize>,
    pub len: usize,
}

impl Shape {
    pub fn new(ell: usize, n: usize) -> Result<Self> {
        if ell == 0 {
            return Err(LabError::invalid("grid dimension must be at least 1"));
        }
        let width = 2 * n + 1;
        let mut len = 1usize;
        for _ in 0..ell {
            len = len
                .checked_mul(width)
                .filter(|&l| l <= MAX_GRID_POINTS)
                .ok_or_else(|| {
                    LabError::invalid(format!("grid [-{n}..{n}]^{ell} exceeds {MAX_GRID_POINTS} points"))
                })?;
        }
        let mut strides = vec![1usize; ell];
        for i in (0..ell - 1).rev() {
            strides[i] = strides[i + 1] * width;
        }
        Ok(Shape { ell, n: n as i64, width, strides, len })
    }

    pub fn index(&self, x: &[i64]) -> Option<usize> {
        if x.len() != self.ell {
            return None;
        }
        let mut idx = 0;
        for (i, &c) in x.iter().enumerate() {
            if c.abs() > self.n {
                return None;
            }
            idx += (c + self.n) as usize * self.strides[i];
        }
        Some(idx)
    }

    pub fn coords(&self, mut idx: usize) -> Vec<i64> {
        let mut x = vec![0i64; self.ell];
        for i in 0..self.ell {
            x[i] = (idx / self.strides[i]) as i64 - self.n;
            idx %= self.strides[i];
        }
        x
    }

    /// Index of `x` with coordinate `skip` removed, in a table over
    /// `[-n..n]^{ell-1}`.
    pub fn hat_index(&self, x: &[i64], skip: usize) -> usize {
        let mut idx = 0;
        for (i, &c) in x.iter().enumerate() {
            if i != skip {
                idx = idx * self.width + (c + self.n) as usize;
            }
        }
        idx
    }

    /// Number of entries of a table over `[-n..n]^{ell-1}`.
    pub fn hat_len(&self) -> usize {
        self.len / self.width
    }

    /// Calls `visit(start, len)` for every maximal run of the sub-box
    /// `lo..=hi` along the last (contiguous) axis, in row-major order.
    pub fn rows(&self, lo: &[i64], hi: &[i64], mut visit: impl FnMut(usize, usize)) {
        if lo.iter().zip(hi).any(|(a, b)| a > b) {
            return;
        }
        let last = self.ell - 1;
        let run = (hi[last] - lo[last] + 1) as usize;
        let mut x: Vec<i64> = lo.to_vec();
        loop {
            let start = self.index(&x).expect("sub-box inside grid");
            visit(start, run);
            let mut i = last;
            loop {
                if i == 0 {
                    return;
                }
                i -= 1;
                if x[i] < hi[i] {
                    x[i] += 1;
                    break;
                }
                x[i] = lo[i];
            }
        }
    }

    /// Calls `visit(index, coords)` for every point of the sub-box `lo..=hi`.
    pub fn points(&self, lo: &[i64], hi: &[i64], mut visit: impl FnMut(usize, &[i64])) {
        if lo.iter().zip(hi).any(|(a, b)| a > b) {
            return;
        }
        let mut x: Vec<i64> = lo.to_vec();
        loop {
            let idx = self.index(&x).expect("sub-box inside grid");
            visit(idx, &x);
            let mut i = self.ell;
            loop {
                if i == 0 {
                    return;
                }
                i -= 1;
                if x[i] < hi[i] {
                    x[i] += 1;
                    break;
                }
                x[i] = lo[i];
            }
        }
    }

    pub fn full_lo(&self) -> Vec<i64> {
        vec![-self.n; self.ell]
    }

    pub fn full_hi(&self) -> Vec<i64> {
        vec![self.n; self.ell]
    }
}

/// A complex function on `[-N..N]^ℓ`, zero outside the box.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridFile", into = "GridFile")]
pub struct GridFunction {
    ell: usize,
    n: usize,
    values: Vec<Complex64>,
    sup_bound: f64,
}

/// On-disk form: `{"ell": 2, "N": 8, "values": [[re, im], ...]}`, row-major.
#[derive(Serialize, Deserialize)]
struct GridFile {
    ell: usize,
    #[serde(rename = "N")]
    n: usize,
    values: Vec<[f64; 2]>,
}

impl TryFrom<GridFile> for GridFunction {
    type Error = LabError;

    fn try_from(file: GridFile) -> Result<Self> {
        let values = file.values.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
        GridFunction::new(file.ell, file.n, values)
    }
}

impl From<GridFunction> for GridFile {
    fn from(g: GridFunction) -> Self {
        GridFile {
            ell: g.ell,
            n: g.n,
            values: g.values.iter().map(|v| [v.re, v.im]).collect(),
        }
    }
}

impl GridFunction {
    pub fn new(ell: usize, n: usize, values: Vec<Complex64>) -> Result<Self> {
        let shape = Shape::new(ell, n)?;
        if values.len() != shape.len {
            return Err(LabError::invalid(format!(
                "grid [-{n}..{n}]^{ell} needs {} values, got {}",
                shape.len,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(LabError::invalid("grid values must be finite"));
        }
        let sup_bound = values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        Ok(GridFunction { ell, n, values, sup_bound })
    }

    pub fn zeros(ell: usize, n: usize) -> Result<Self> {
        let shape = Shape::new(ell, n)?;
        Self::new(ell, n, vec![Complex64::new(0.0, 0.0); shape.len])
    }

    pub fn from_fn(ell: usize, n: usize, mut f: impl FnMut(&[i64]) -> Complex64) -> Result<Self> {
        let shape = Shape::new(ell, n)?;
        let mut values = Vec::with_capacity(shape.len);
        shape.points(&shape.full_lo(), &shape.full_hi(), |_, x| values.push(f(x)));
        Self::new(ell, n, values)
    }

    /// Independent uniform ±1 values.
    pub fn random_signs(ell: usize, n: usize, seed: u64, stream: u64) -> Result<Self> {
        let mut rng = substream(seed, stream);
        Self::from_fn(ell, n, |_| {
            Complex64::new(if rng.gen::<bool>() { 1.0 } else { -1.0 }, 0.0)
        })
    }

    /// Independent values uniform on the closed unit disc.
    pub fn random_disc(ell: usize, n: usize, seed: u64, stream: u64) -> Result<Self> {
        let mut rng = substream(seed, stream);
        Self::from_fn(ell, n, |_| {
            let r = rng.gen::<f64>().sqrt();
            e(rng.gen::<f64>()) * r
        })
    }

    pub(crate) fn shape(&self) -> Shape {
        Shape::new(self.ell, self.n).expect("validated at construction")
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> usize {
        2 * self.n + 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    /// Upper bound on `max |f|`; computed exactly at construction.
    pub fn sup_bound(&self) -> f64 {
        self.sup_bound
    }

    pub fn get(&self, x: &[i64]) -> Complex64 {
        self.shape()
            .index(x)
            .map_or(Complex64::new(0.0, 0.0), |i| self.values[i])
    }

    /// `(E_{x ∈ box} |f(x)|²)^{1/2}`, normalised over the box.
    pub fn l2_normalized(&self) -> f64 {
        let mut acc = crate::numeric::NeumaierSum::new();
        for v in &self.values {
            acc.add(v.norm_sqr());
        }
        (acc.value() / self.values.len() as f64).sqrt()
    }

    /// Truncates both parts of every value toward zero onto the grid
    /// `2^{-bits} Z`; never increases `|f(x)|`.
    pub fn quantize(&self, bits: i32) -> Self {
        let q = 2f64.powi(bits);
        let values = self
            .values
            .iter()
            .map(|v| Complex64::new((v.re * q).trunc() / q, (v.im * q).trunc() / q))
            .collect();
        Self::new(self.ell, self.n, values).expect("same shape")
    }

    /// `f(x)·e(θ x_axis)`.
    pub fn modulate(&self, axis: usize, theta: f64) -> Result<Self> {
        if axis >= self.ell {
            return Err(LabError::invalid(format!("axis {axis} out of range for ell = {}", self.ell)));
        }
        let shape = self.shape();
        let values = (0..self.len())
            .map(|i| self.values[i] * e(theta * shape.coords(i)[axis] as f64))
            .collect();
        Self::new(self.ell, self.n, values)
    }

    pub fn scale(&self, c: f64) -> Self {
        let values = self.values.iter().map(|v| v * c).collect();
        Self::new(self.ell, self.n, values).expect("same shape")
    }

    pub fn sub(&self, other: &GridFunction) -> Result<Self> {
        self.same_shape(other)?;
        let values = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        Self::new(self.ell, self.n, values)
    }

    pub fn max_abs_diff(&self, other: &GridFunction) -> Result<f64> {
        self.same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    fn same_shape(&self, other: &GridFunction) -> Result<()> {
        if self.ell != other.ell || self.n != other.n {
            return Err(LabError::invalid("grid functions live on different boxes"));
        }
        Ok(())
    }
}

/// The sets `E_1, …, E_s ⊂ Z^ℓ` a box norm averages over.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DirectionSet {
    ell: usize,
    sets: Vec<Vec<Vec<i64>>>,
}

impl DirectionSet {
    pub fn new(ell: usize, sets: Vec<Vec<Vec<i64>>>) -> Result<Self> {
        if ell == 0 {
            return Err(LabError::invalid("dimension must be at least 1"));
        }
        if sets.is_empty() {
            return Err(LabError::invalid("a direction set needs at least one entry"));
        }
        for (j, set) in sets.iter().enumerate() {
            if set.is_empty() {
                return Err(LabError::invalid(format!("direction entry {} is empty", j + 1)));
            }
            if set.iter().any(|v| v.len() != ell) {
                return Err(LabError::invalid(format!(
                    "direction entry {} has vectors of the wrong dimension",
                    j + 1
                )));
            }
        }
        Ok(DirectionSet { ell, sets })
    }

    /// Axis segments `e_{axis}·[-radius..radius]`, axes 0-based.
    pub fn axis_segments(ell: usize, entries: &[(usize, usize)]) -> Result<Self> {
        let mut sets = Vec::with_capacity(entries.len());
        for &(axis, radius) in entries {
            if axis >= ell {
                return Err(LabError::invalid(format!("axis e{} out of range for ell = {ell}", axis + 1)));
            }
            let r = radius as i64;
            sets.push(
                (-r..=r)
                    .map(|k| {
                        let mut v = vec![0i64; ell];
                        v[axis] = k;
                        v
                    })
                    .collect(),
            );
        }
        Self::new(ell, sets)
    }

    /// `e_1[±N], …, e_ℓ[±N], e_ℓ[±N]`: the norm of the box inverse theorem.
    pub fn inverse_theorem(ell: usize, n: usize) -> Result<Self> {
        let mut entries: Vec<(usize, usize)> = (0..ell).map(|i| (i, n)).collect();
        entries.push((ell - 1, n));
        Self::axis_segments(ell, &entries)
    }

    /// Parses `"e1:N,e2:N,e2:8"`; the literal `N` stands for `n`.
    pub fn parse(text: &str, ell: usize, n: usize) -> Result<Self> {
        let mut entries = Vec::new();
        for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (axis, radius) = part
                .split_once(':')
                .ok_or_else(|| LabError::invalid(format!("direction `{part}` must look like e1:N")))?;
            let axis: usize = axis
                .trim()
                .strip_prefix('e')
                .and_then(|a| a.parse().ok())
                .filter(|&a| a >= 1)
                .ok_or_else(|| LabError::invalid(format!("bad axis in `{part}`")))?;
            let radius = match radius.trim() {
                "N" => n,
                r => r
                    .parse()
                    .map_err(|_| LabError::invalid(format!("bad radius in `{part}`")))?,
            };
            entries.push((axis - 1, radius));
        }
        Self::axis_segments(ell, &entries)
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    pub fn s(&self) -> usize {
        self.sets.len()
    }

    pub fn sets(&self) -> &[Vec<Vec<i64>>] {
        &self.sets
    }

    /// Multiset `{h' − h : h, h' ∈ E_j}` with multiplicities, in sorted order.
    pub(crate) fn differences(&self, j: usize) -> Vec<(Vec<i64>, f64)> {
        let mut counts: BTreeMap<Vec<i64>, u64> = BTreeMap::new();
        let set = &self.sets[j];
        for h in set {
            for h2 in set {
                let m: Vec<i64> = h2.iter().zip(h).map(|(a, b)| a - b).collect();
                *counts.entry(m).or_insert(0) += 1;
            }
        }
        counts.into_iter().map(|(m, c)| (m, c as f64)).collect()
    }

    /// `Some((axis, lo, hi))` when entry `j` is exactly `e_axis·[lo..hi]`.
    pub(crate) fn axis_window(&self, j: usize) -> Option<(usize, i64, i64)> {
        let set = &self.sets[j];
        let axis = (0..self.ell).find(|&a| set.iter().any(|v| v[a] != 0)).unwrap_or(0);
        if set.iter().any(|v| v.iter().enumerate().any(|(i, &c)| i != axis && c != 0)) {
            return None;
        }
        let mut ks: Vec<i64> = set.iter().map(|v| v[axis]).collect();
        ks.sort_unstable();
        let (lo, hi) = (ks[0], ks[ks.len() - 1]);
        let contiguous = ks.windows(2).all(|w| w[1] == w[0] + 1);
        contiguous.then_some((axis, lo, hi))
    }
}

impl fmt::Display for DirectionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = (0..self.s())
            .map(|j| match self.axis_window(j) {
                Some((a, lo, hi)) if lo == -hi => format!("e{}:{}", a + 1, hi),
                _ => format!("{:?}", self.sets[j]),
            })
            .collect();
        write!(f, "{}", parts.join(","))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_round_trips_indices() {
        let s = Shape::new(3, 2).unwrap();
        for i in 0..s.len {
            assert_eq!(s.index(&s.coords(i)), Some(i));
        }
        assert_eq!(s.index(&[3, 0, 0]), None);
        assert_eq!(s.hat_len(), 25);
    }

    #[test]
    fn rows_cover_sub_box() {
        let s = Shape::new(2, 3).unwrap();
        let mut seen = Vec::new();
        s.rows(&[-1, 0], &[1, 2], |start, len| seen.push((start, len)));
        assert_eq!(seen.len(), 3);
        assert!(seen.iter().all(|&(_, l)| l == 3));
        assert_eq!(seen[0].0, s.index(&[-1, 0]).unwrap());
    }

    #[test]
    fn json_round_trip() {
        let g = GridFunction::random_disc(2, 2, 5, 0).unwrap();
        let text = serde_json::to_string(&g).unwrap();
        assert!(text.contains("\"N\":2"));
        let back: GridFunction = serde_json::from_str(&text).unwrap();
        assert_eq!(back, g);
        assert!(serde_json::from_str::<GridFunction>(r#"{"ell":2,"N":1,"values":[[1,0]]}"#).is_err());
    }

    #[test]
    fn parse_directions() {
        let d = DirectionSet::parse("e1:N, e2:N ,e2:3", 2, 5).unwrap();
        assert_eq!(d.s(), 3);
        assert_eq!(d.sets()[0].len(), 11);
        assert_eq!(d.sets()[2].len(), 7);
        assert_eq!(d.axis_window(1), Some((1, -5, 5)));
        assert_eq!(d.to_string(), "e1:5,e2:5,e2:3");
        assert!(DirectionSet::parse("e3:N", 2, 5).is_err());
        assert!(DirectionSet::parse("x1:N", 2, 5).is_err());
        assert!(DirectionSet::new(2, vec![vec![]]).is_err());
    }

    #[test]
    fn differences_are_triangular() {
        let d = DirectionSet::axis_segments(1, &[(0, 2)]).unwrap();
        let diffs = d.differences(0);
        assert_eq!(diffs.len(), 9);
        let total: f64 = diffs.iter().map(|(_, c)| c).sum();
        assert_eq!(total, 25.0);
        assert_eq!(diffs[4], (vec![0], 5.0));
    }

    #[test]
    fn sup_bound_dominates() {
        let g = GridFunction::random_disc(2, 4, 1, 2).unwrap();
        assert!(g.values().iter().all(|v| v.norm() <= g.sup_bound()));
        assert!(g.sup_bound() <= 1.0);
    }
}
