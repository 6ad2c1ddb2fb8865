//! Box norms `‖f‖_{E_1,…,E_s}` of grid functions.
//!
//! Exact mode writes the first `s − 1` averages in weight form
//! `Σ_m μ(m) Σ_x Δ_m f(x)`, with `Δ_m g(x) = g(x)·conj g(x+m)`, and evaluates
//! the last average as `Σ_y |Σ_{h∈E_s} g(y+h)|²`. Weights are kept as integer
//! pair counts and the normalisation `∏|E_i|²` is applied once at the end, so
//! integer-valued inputs produce a correctly rounded power.

use serde::{Deserialize, Serialize};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;

use super::{DirectionSet, GridFunction, Shape};
use crate::error::{LabError, Result};
use crate::numeric::{clamp_nonnegative, fsum, substream, ComplexSum};

/// Nominal cost `∏|E_i|²·(2N+1)^ℓ` accepted by the exact path.
pub const DEFAULT_GRID_BUDGET: u128 = 200_000_000_000;

const NEG_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloNorm {
    /// Estimated norm, the `2^s`-th root of the clamped power estimate.
    pub value: f64,
    pub power: f64,
    /// Standard error of `power`.
    pub stderr: f64,
    pub samples: usize,
}

pub fn exact_cost(f: &GridFunction, dirs: &DirectionSet) -> u128 {
    let mut cost = f.len() as u128;
    for set in dirs.sets() {
        let e = set.len() as u128;
        cost = cost.saturating_mul(e * e);
    }
    cost
}

pub fn grid_box_norm(f: &GridFunction, dirs: &DirectionSet) -> Result<f64> {
    let p = grid_box_norm_power(f, dirs, DEFAULT_GRID_BUDGET)?;
    Ok(p.powf(1.0 / (1u64 << dirs.s()) as f64))
}

/// `‖f‖^{2^s}` by exact summation, refusing instances above `budget`.
pub fn grid_box_norm_power(f: &GridFunction, dirs: &DirectionSet, budget: u128) -> Result<f64> {
    check_dims(f, dirs)?;
    let needed = exact_cost(f, dirs);
    if needed > budget {
        return Err(LabError::Budget {
            what: "exact grid box norm".into(),
            needed,
            budget,
        });
    }
    let shape = f.shape();
    let diffs: Vec<Vec<(Vec<i64>, f64)>> = (0..dirs.s() - 1).map(|j| dirs.differences(j)).collect();
    let ctx = Ctx { shape: &shape, dirs, diffs: &diffs };
    let raw = if dirs.s() == 1 {
        ctx.window_energy(f.values())
    } else {
        let parts: Vec<f64> = diffs[0]
            .par_iter()
            .map(|(m, c)| c * ctx.nested(&derivative(&shape, f.values(), m), 1))
            .collect();
        fsum(&parts)
    };
    let norm: f64 = dirs.sets().iter().map(|s| (s.len() * s.len()) as f64).product();
    clamp_nonnegative(raw / norm, NEG_TOL, "grid box norm")
}

/// Unbiased estimate of `‖f‖^{2^s}` from `samples` independent draws of
/// `(h_i, h_i') ∈ E_i²`, each followed by the exact sum over `x`.
pub fn grid_box_norm_mc(
    f: &GridFunction,
    dirs: &DirectionSet,
    samples: usize,
    seed: u64,
) -> Result<MonteCarloNorm> {
    check_dims(f, dirs)?;
    if samples < 2 {
        return Err(LabError::invalid("Monte Carlo needs at least 2 samples"));
    }
    let shape = f.shape();
    let s = dirs.s();
    let draws: Vec<f64> = (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let mut rng = substream(seed, k);
            let pairs: Vec<(&Vec<i64>, &Vec<i64>)> = dirs
                .sets()
                .iter()
                .map(|set| (&set[rng.gen_range(0..set.len())], &set[rng.gen_range(0..set.len())]))
                .collect();
            let vertices: Vec<(Vec<i64>, bool)> = (0..1usize << s)
                .map(|w| {
                    let mut v = vec![0i64; shape.ell];
                    for (i, (h, h2)) in pairs.iter().enumerate() {
                        let pick = if w >> i & 1 == 1 { h2 } else { h };
                        for (a, b) in v.iter_mut().zip(pick.iter()) {
                            *a += b;
                        }
                    }
                    (v, w.count_ones() % 2 == 1)
                })
                .collect();
            cube_sum(&shape, f.values(), &vertices).re
        })
        .collect();
    let mean = fsum(&draws) / samples as f64;
    let dev: Vec<f64> = draws.iter().map(|d| (d - mean) * (d - mean)).collect();
    let var = fsum(&dev) / (samples - 1) as f64;
    let stderr = (var / samples as f64).sqrt();
    Ok(MonteCarloNorm {
        value: mean.max(0.0).powf(1.0 / (1u64 << s) as f64),
        power: mean,
        stderr,
        samples,
    })
}

fn check_dims(f: &GridFunction, dirs: &DirectionSet) -> Result<()> {
    if f.ell() != dirs.ell() {
        return Err(LabError::invalid(format!(
            "grid has ell = {} but directions live in Z^{}",
            f.ell(),
            dirs.ell()
        )));
    }
    Ok(())
}

struct Ctx<'a> {
    shape: &'a Shape,
    dirs: &'a DirectionSet,
    diffs: &'a [Vec<(Vec<i64>, f64)>],
}

impl Ctx<'_> {
    fn nested(&self, g: &[Complex64], level: usize) -> f64 {
        if g.iter().all(|v| v.re == 0.0 && v.im == 0.0) {
            return 0.0;
        }
        if level == self.dirs.s() - 1 {
            return self.window_energy(g);
        }
        let parts: Vec<f64> = self.diffs[level]
            .iter()
            .map(|(m, c)| c * self.nested(&derivative(self.shape, g, m), level + 1))
            .collect();
        fsum(&parts)
    }

    /// `Σ_y |Σ_{h∈E_s} g(y+h)|²` over every `y` where the window meets the box.
    fn window_energy(&self, g: &[Complex64]) -> f64 {
        let last = self.dirs.s() - 1;
        match self.dirs.axis_window(last) {
            Some((axis, lo, hi)) => axis_window_energy(self.shape, g, axis, lo, hi),
            None => general_window_energy(self.shape, g, &self.dirs.sets()[last]),
        }
    }
}

pub(crate) fn derivative(shape: &Shape, g: &[Complex64], m: &[i64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); g.len()];
    let n = shape.n;
    let lo: Vec<i64> = m.iter().map(|&mi| (-n).max(-n - mi)).collect();
    let hi: Vec<i64> = m.iter().map(|&mi| n.min(n - mi)).collect();
    let offset: i64 = m.iter().zip(&shape.strides).map(|(&mi, &st)| mi * st as i64).sum();
    shape.rows(&lo, &hi, |start, len| {
        for i in start..start + len {
            out[i] = g[i] * g[(i as i64 + offset) as usize].conj();
        }
    });
    out
}

fn axis_window_energy(shape: &Shape, g: &[Complex64], axis: usize, lo: i64, hi: i64) -> f64 {
    let n = shape.n;
    let w = shape.width;
    let stride = shape.strides[axis];
    let mut prefix = vec![Complex64::new(0.0, 0.0); w + 1];
    let mut parts = Vec::with_capacity(shape.len / w);
    // Every line along `axis` starts at an index whose `axis` coordinate is -n.
    for base in 0..shape.len {
        if (base / stride) % w != 0 {
            continue;
        }
        for t in 0..w {
            prefix[t + 1] = prefix[t] + g[base + t * stride];
        }
        let mut acc = 0.0;
        for y in (-n - hi)..=(n - lo) {
            let a = (y + lo).max(-n);
            let b = (y + hi).min(n);
            if a > b {
                continue;
            }
            let s = prefix[(b + n + 1) as usize] - prefix[(a + n) as usize];
            acc += s.norm_sqr();
        }
        parts.push(acc);
    }
    fsum(&parts)
}

fn general_window_energy(shape: &Shape, g: &[Complex64], set: &[Vec<i64>]) -> f64 {
    let n = shape.n;
    let ell = shape.ell;
    let lo: Vec<i64> = (0..ell).map(|i| -n - set.iter().map(|h| h[i]).max().unwrap()).collect();
    let hi: Vec<i64> = (0..ell).map(|i| n - set.iter().map(|h| h[i]).min().unwrap()).collect();
    let mut parts = Vec::new();
    let mut y = lo.clone();
    let mut z = vec![0i64; ell];
    loop {
        let mut s = Complex64::new(0.0, 0.0);
        for h in set {
            for i in 0..ell {
                z[i] = y[i] + h[i];
            }
            if let Some(idx) = shape.index(&z) {
                s += g[idx];
            }
        }
        parts.push(s.norm_sqr());
        let mut i = ell;
        loop {
            if i == 0 {
                return fsum(&parts);
            }
            i -= 1;
            if y[i] < hi[i] {
                y[i] += 1;
                break;
            }
            y[i] = lo[i];
        }
    }
}

/// `Σ_x ∏_ω C^{|ω|} g(x + v_ω)` over the given cube vertices. The sum runs
/// over `y = x + v_0`, which must lie in the box.
fn cube_sum(shape: &Shape, g: &[Complex64], vertices: &[(Vec<i64>, bool)]) -> Complex64 {
    let n = shape.n;
    let ell = shape.ell;
    let base = &vertices[0].0;
    let rel: Vec<(Vec<i64>, bool)> = vertices
        .iter()
        .map(|(v, c)| (v.iter().zip(base).map(|(a, b)| a - b).collect(), *c))
        .collect();
    let lo: Vec<i64> = (0..ell).map(|i| rel.iter().map(|(v, _)| -n - v[i].min(0)).max().unwrap()).collect();
    let hi: Vec<i64> = (0..ell).map(|i| rel.iter().map(|(v, _)| n - v[i].max(0)).min().unwrap()).collect();
    let offsets: Vec<(i64, bool)> = rel
        .iter()
        .map(|(v, c)| (v.iter().zip(&shape.strides).map(|(&a, &s)| a * s as i64).sum(), *c))
        .collect();
    let mut acc = ComplexSum::new();
    shape.points(&lo, &hi, |idx, _| {
        let mut p = Complex64::new(1.0, 0.0);
        for &(off, conj) in &offsets {
            let v = g[(idx as i64 + off) as usize];
            p *= if conj { v.conj() } else { v };
        }
        acc.add(p);
    });
    acc.value()
}

#[cfg(test)]
pub(crate) mod oracle {
    use super::*;

    /// `E_{h_i,h_i' ∈ E_i} Σ_x Δ'_{(h_1,h_1'),…} f(x)` by literal nested loops
    /// over every pair tuple and every `x` in `box − (all shifts)`.
    pub fn nested_power(f: &GridFunction, dirs: &DirectionSet) -> f64 {
        let ell = f.ell();
        let n = f.n() as i64;
        let mut chosen: Vec<(Vec<i64>, Vec<i64>)> = Vec::new();
        let mut total = ComplexSum::new();
        fn rec(
            f: &GridFunction,
            dirs: &DirectionSet,
            j: usize,
            chosen: &mut Vec<(Vec<i64>, Vec<i64>)>,
            total: &mut ComplexSum,
            n: i64,
            ell: usize,
        ) {
            if j == dirs.s() {
                let s = dirs.s();
                let shifts: Vec<(Vec<i64>, bool)> = (0..1usize << s)
                    .map(|w| {
                        let mut y = vec![0i64; ell];
                        for (i, (h, h2)) in chosen.iter().enumerate() {
                            let pick = if w >> i & 1 == 1 { h2 } else { h };
                            for (a, b) in y.iter_mut().zip(pick) {
                                *a += b;
                            }
                        }
                        (y, w.count_ones() % 2 == 1)
                    })
                    .collect();
                // Outside this range some factor lies off the box and vanishes.
                let lo: Vec<i64> = (0..ell).map(|i| shifts.iter().map(|(v, _)| -n - v[i]).max().unwrap()).collect();
                let hi: Vec<i64> = (0..ell).map(|i| shifts.iter().map(|(v, _)| n - v[i]).min().unwrap()).collect();
                if lo.iter().zip(&hi).any(|(a, b)| a > b) {
                    return;
                }
                let mut x = lo.clone();
                'outer: loop {
                    let mut p = Complex64::new(1.0, 0.0);
                    for (v, conj) in &shifts {
                        let y: Vec<i64> = x.iter().zip(v).map(|(a, b)| a + b).collect();
                        let val = f.get(&y);
                        p *= if *conj { val.conj() } else { val };
                    }
                    total.add(p);
                    let mut i = ell;
                    loop {
                        if i == 0 {
                            break 'outer;
                        }
                        i -= 1;
                        if x[i] < hi[i] {
                            x[i] += 1;
                            break;
                        }
                        x[i] = lo[i];
                    }
                }
                return;
            }
            for h in &dirs.sets()[j] {
                for h2 in &dirs.sets()[j] {
                    chosen.push((h.clone(), h2.clone()));
                    rec(f, dirs, j + 1, chosen, total, n, ell);
                    chosen.pop();
                }
            }
        }
        rec(f, dirs, 0, &mut chosen, &mut total, n, ell);
        let pairs: f64 = dirs.sets().iter().map(|e| (e.len() * e.len()) as f64).product();
        total.value().re / pairs
    }

    /// Exact integer version of the nested sum for integer-valued real `f`:
    /// returns the numerator over `∏|E_i|²`.
    pub fn nested_power_int(f: &[i64], n: i64, dirs: &DirectionSet) -> i128 {
        assert_eq!(dirs.ell(), 2);
        let w = 2 * n + 1;
        let get = |x: i64, y: i64| -> i128 {
            if x.abs() > n || y.abs() > n {
                0
            } else {
                f[((x + n) * w + (y + n)) as usize] as i128
            }
        };
        let s = dirs.s();
        let sets = dirs.sets();
        let mut total: i128 = 0;
        let mut idx = vec![(0usize, 0usize); s];
        'tuples: loop {
            let mut shifts = Vec::with_capacity(1 << s);
            for wm in 0..1usize << s {
                let mut v = [0i64; 2];
                for (i, &(a, b)) in idx.iter().enumerate() {
                    let h = if wm >> i & 1 == 1 { &sets[i][b] } else { &sets[i][a] };
                    v[0] += h[0];
                    v[1] += h[1];
                }
                shifts.push(v);
            }
            let lo = |c: usize| shifts.iter().map(|v| -n - v[c]).max().unwrap();
            let hi = |c: usize| shifts.iter().map(|v| n - v[c]).min().unwrap();
            for x in lo(0)..=hi(0) {
                for y in lo(1)..=hi(1) {
                    let mut p: i128 = 1;
                    for v in &shifts {
                        p *= get(x + v[0], y + v[1]);
                        if p == 0 {
                            break;
                        }
                    }
                    total += p;
                }
            }
            let mut i = 0;
            loop {
                if i == s {
                    break 'tuples;
                }
                let len = sets[i].len();
                idx[i].1 += 1;
                if idx[i].1 < len {
                    break;
                }
                idx[i].1 = 0;
                idx[i].0 += 1;
                if idx[i].0 < len {
                    break;
                }
                idx[i].0 = 0;
                i += 1;
            }
        }
        total
    }
}
