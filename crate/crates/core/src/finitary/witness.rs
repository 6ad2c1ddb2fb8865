//! Constructive inverse witnesses.
//!
//! Rows are embedded in a cyclic group of size `L = 4N + 2` with zero
//! padding, so `Σ_x g(x) e(kx/L)` is a genuine (non-aliased) sum over
//! `x ∈ [-N..N]` and the frequency `k/L` can be read as a phase in `[0, 1)`.
//!
//! The box witness follows the derivative pipeline: differentiate along
//! `e_1..e_{ℓ-1}`, shift `m_i ↦ u_i − x_i`, keep a single anchor `u`, and
//! solve the resulting one-dimensional problem along `e_ℓ` line by line.

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::sync::Arc;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::norm::{grid_box_norm_power, DEFAULT_GRID_BUDGET};
use super::{DirectionSet, GridFunction, Shape};
use crate::error::{LabError, Result};
use crate::numeric::{e, fsum, substream};

const BOUND_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct U2Witness {
    pub n: usize,
    /// `phi[y + N]`, a frequency in `[0, 1)`.
    pub phi: Vec<f64>,
    pub psi: Vec<f64>,
    /// `Σ_{x,y} f(x,y) e(phi(y)x + psi(y))`, nonnegative.
    pub correlation: f64,
    /// `‖f‖⁴_{e_1[±N],e_1[±N]} / N²`.
    pub delta: f64,
    /// Achieved constant `correlation / (δ^{3/2} N²)`, when `δ > 0`.
    pub constant: Option<f64>,
}

impl U2Witness {
    /// Frequency of the row `y`; zero outside `[-N, N]`.
    pub fn phi_at(&self, y: i64) -> f64 {
        table_at(&self.phi, self.n, y)
    }

    pub fn psi_at(&self, y: i64) -> f64 {
        table_at(&self.psi, self.n, y)
    }
}

fn table_at(t: &[f64], n: usize, y: i64) -> f64 {
    let n = n as i64;
    if y.abs() > n {
        0.0
    } else {
        t[(y + n) as usize]
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxWitness {
    pub ell: usize,
    pub n: usize,
    /// The pigeonholed point `u ∈ [-N..N]^{ℓ-1}`.
    pub anchor: Vec<i64>,
    /// `phi(x̂_ℓ)`, tables over `[-N..N]^{ℓ-1}` in row-major order.
    pub phi: Vec<f64>,
    /// `b[j]` is a table in `x̂_{j+1}`.
    pub b: Vec<Vec<Complex64>>,
    /// `Σ_x f(x) e(phi(x̂_ℓ)x_ℓ) ∏_j b_j(x̂_j)`, nonnegative.
    pub correlation: f64,
    /// Whether the anchor came from a random sample rather than a full sweep.
    pub sampled: bool,
    pub candidates: usize,
    /// `‖f‖^{2^{ℓ+1}} / N^ℓ` and the achieved constant, when the exact norm
    /// fits the default budget.
    pub delta: Option<f64>,
    pub constant: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoxWitnessOptions {
    /// Anchors drawn when `ℓ ≥ 3`.
    pub samples: usize,
    pub seed: u64,
    /// Compute `delta` and `constant` (one exact box norm).
    pub calibrate: bool,
}

impl Default for BoxWitnessOptions {
    fn default() -> Self {
        BoxWitnessOptions { samples: 64, seed: 0, calibrate: true }
    }
}

struct LineDft {
    n: i64,
    len: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl LineDft {
    fn new(n: usize) -> Self {
        let len = 4 * n + 2;
        let fft = FftPlanner::new().plan_fft_inverse(len);
        LineDft { n: n as i64, len, fft }
    }

    /// The largest `|Σ_t v(t) e(kt/L)|` over `k`, with `v` indexed by
    /// `t ∈ [-N..N]`; ties go to the smallest `k`.
    fn peak(&self, line: impl Iterator<Item = Complex64>, buf: &mut [Complex64]) -> (usize, Complex64) {
        buf.fill(Complex64::new(0.0, 0.0));
        for (i, v) in line.enumerate() {
            let t = i as i64 - self.n;
            buf[t.rem_euclid(self.len as i64) as usize] = v;
        }
        self.fft.process(buf);
        let mut best = (0, buf[0]);
        for (k, &s) in buf.iter().enumerate().skip(1) {
            if s.norm_sqr() > best.1.norm_sqr() {
                best = (k, s);
            }
        }
        best
    }

    fn freq(&self, k: usize) -> f64 {
        k as f64 / self.len as f64
    }
}

/// Phase `psi ∈ [0, 1)` with `s·e(psi) = |s|`.
fn aligning_phase(s: Complex64) -> f64 {
    if s.norm_sqr() == 0.0 {
        return 0.0;
    }
    let p = (-s.arg() / TAU).rem_euclid(1.0);
    if p >= 1.0 {
        0.0
    } else {
        p
    }
}

fn check_bounded(f: &GridFunction) -> Result<()> {
    if f.sup_bound() > 1.0 + BOUND_TOL {
        return Err(LabError::invalid(format!(
            "witnesses need a 1-bounded function, sup is {}",
            f.sup_bound()
        )));
    }
    Ok(())
}

pub fn u2_inverse_witness(f: &GridFunction) -> Result<U2Witness> {
    if f.ell() != 2 {
        return Err(LabError::invalid("the U2 witness needs a two-dimensional grid"));
    }
    check_bounded(f)?;
    let n = f.n();
    let w = f.width();
    let dft = LineDft::new(n);
    let vals = f.values();
    let rows: Vec<(f64, f64, f64)> = (0..w)
        .into_par_iter()
        .map(|yi| {
            let mut buf = vec![Complex64::new(0.0, 0.0); dft.len];
            let (k, s) = dft.peak((0..w).map(|xi| vals[xi * w + yi]), &mut buf);
            (dft.freq(k), aligning_phase(s), s.norm())
        })
        .collect();
    let mags: Vec<f64> = rows.iter().map(|r| r.2).collect();
    let correlation = fsum(&mags);
    let dirs = DirectionSet::axis_segments(2, &[(0, n), (0, n)])?;
    let power = grid_box_norm_power(f, &dirs, DEFAULT_GRID_BUDGET)?;
    let nn = (n as f64).powi(2);
    let delta = if n == 0 { 0.0 } else { power / nn };
    let constant = (delta > 0.0).then(|| correlation / (delta.powf(1.5) * nn));
    Ok(U2Witness {
        n,
        phi: rows.iter().map(|r| r.0).collect(),
        psi: rows.iter().map(|r| r.1).collect(),
        correlation,
        delta,
        constant,
    })
}

pub fn box_inverse_witness(f: &GridFunction) -> Result<BoxWitness> {
    box_inverse_witness_with(f, &BoxWitnessOptions::default())
}

pub fn box_inverse_witness_with(f: &GridFunction, opts: &BoxWitnessOptions) -> Result<BoxWitness> {
    check_bounded(f)?;
    let ell = f.ell();
    if ell < 2 {
        return Err(LabError::invalid("the box witness needs ell >= 2"));
    }
    let shape = f.shape();
    let n = shape.n;
    let dft = LineDft::new(f.n());
    let hat = Shape::new(ell - 1, f.n())?;
    let (anchors, sampled): (Vec<Vec<i64>>, bool) = if ell == 2 {
        ((-n..=n).map(|u| vec![u]).collect(), false)
    } else {
        if opts.samples == 0 {
            return Err(LabError::invalid("sampled anchors need samples >= 1"));
        }
        let anchors = (0..opts.samples as u64)
            .map(|k| {
                let mut rng = substream(opts.seed, k);
                (0..ell - 1).map(|_| rng.gen_range(-n..=n)).collect()
            })
            .collect();
        (anchors, true)
    };
    let scores: Vec<f64> = anchors
        .par_iter()
        .map(|u| {
            let g = shifted_derivative(f, &shape, u);
            let mut buf = vec![Complex64::new(0.0, 0.0); dft.len];
            let mags: Vec<f64> = g
                .chunks(shape.width)
                .map(|line| dft.peak(line.iter().copied(), &mut buf).1.norm())
                .collect();
            fsum(&mags)
        })
        .collect();
    let mut best = 0;
    for (i, &sc) in scores.iter().enumerate() {
        if sc > scores[best] {
            best = i;
        }
    }
    let u = anchors[best].clone();

    let g = shifted_derivative(f, &shape, &u);
    let mut buf = vec![Complex64::new(0.0, 0.0); dft.len];
    let mut phi = Vec::with_capacity(hat.len);
    let mut b_last = Vec::with_capacity(hat.len);
    let mut mags = Vec::with_capacity(hat.len);
    for line in g.chunks(shape.width) {
        let (k, s) = dft.peak(line.iter().copied(), &mut buf);
        phi.push(dft.freq(k));
        b_last.push(e(aligning_phase(s)));
        mags.push(s.norm());
    }
    let mut b: Vec<Vec<Complex64>> = (0..ell - 1).map(|j| anchor_factor(f, &hat, &u, j)).collect();
    b.push(b_last);

    let (delta, constant) = if opts.calibrate {
        calibrate(f, fsum(&mags))?
    } else {
        (None, None)
    };
    Ok(BoxWitness {
        ell,
        n: f.n(),
        anchor: u,
        phi,
        b,
        correlation: fsum(&mags),
        sampled,
        candidates: anchors.len(),
        delta,
        constant,
    })
}

fn calibrate(f: &GridFunction, correlation: f64) -> Result<(Option<f64>, Option<f64>)> {
    let dirs = DirectionSet::inverse_theorem(f.ell(), f.n())?;
    match grid_box_norm_power(f, &dirs, DEFAULT_GRID_BUDGET) {
        Ok(p) => {
            let nl = (f.n() as f64).powi(f.ell() as i32);
            if nl == 0.0 {
                return Ok((Some(0.0), None));
            }
            let delta = p / nl;
            let constant = (delta > 0.0).then(|| correlation / (delta.powf(1.5) * nl));
            Ok((Some(delta), constant))
        }
        Err(LabError::Budget { .. }) => Ok((None, None)),
        Err(err) => Err(err),
    }
}

/// `x` with the coordinates in `omega` (bits over `0..ℓ-1`) replaced by `u`.
fn substitute(x: &[i64], u: &[i64], omega: usize) -> Vec<i64> {
    let mut y = x.to_vec();
    for (i, &ui) in u.iter().enumerate() {
        if omega >> i & 1 == 1 {
            y[i] = ui;
        }
    }
    y
}

/// `∏_{ω ⊆ [ℓ-1]} C^{|ω|} f(x^{ω ← u})`: the derivative `Δ_{m} f(x)` after
/// the shift `m_i = u_i − x_i`.
fn shifted_derivative(f: &GridFunction, shape: &Shape, u: &[i64]) -> Vec<Complex64> {
    let faces = 1usize << u.len();
    let mut out = Vec::with_capacity(shape.len);
    shape.points(&shape.full_lo(), &shape.full_hi(), |idx, x| {
        let mut p = f.values()[idx];
        for omega in 1..faces {
            let v = f.get(&substitute(x, u, omega));
            p *= if omega.count_ones() % 2 == 1 { v.conj() } else { v };
        }
        out.push(p);
    });
    out
}

/// `b_j(x̂_j) = ∏_{min ω = j} C^{|ω|} f(x^{ω ← u})`. Every such factor
/// ignores `x_j`, so the table is well defined.
fn anchor_factor(f: &GridFunction, hat: &Shape, u: &[i64], j: usize) -> Vec<Complex64> {
    let faces = 1usize << u.len();
    let mut table = Vec::with_capacity(hat.len);
    hat.points(&hat.full_lo(), &hat.full_hi(), |_, xh| {
        let mut x = xh.to_vec();
        x.insert(j, u[j]);
        let mut p = Complex64::new(1.0, 0.0);
        for omega in (1..faces).filter(|w| w.trailing_zeros() as usize == j) {
            let v = f.get(&substitute(&x, u, omega));
            p *= if omega.count_ones() % 2 == 1 { v.conj() } else { v };
        }
        table.push(p);
    });
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::ComplexSum;
    use proptest::prelude::*;

    fn u2_direct(f: &GridFunction, w: &U2Witness) -> Complex64 {
        let n = f.n() as i64;
        let mut acc = ComplexSum::new();
        for x in -n..=n {
            for y in -n..=n {
                acc.add(f.get(&[x, y]) * e(w.phi_at(y) * x as f64 + w.psi_at(y)));
            }
        }
        acc.value()
    }

    fn box_direct(f: &GridFunction, w: &BoxWitness) -> Complex64 {
        let shape = f.shape();
        let mut acc = ComplexSum::new();
        shape.points(&shape.full_lo(), &shape.full_hi(), |idx, x| {
            let last = w.ell - 1;
            let mut p = f.values()[idx] * e(w.phi[shape.hat_index(x, last)] * x[last] as f64);
            for j in 0..w.ell {
                p *= w.b[j][shape.hat_index(x, j)];
            }
            acc.add(p);
        });
        acc.value()
    }

    #[test]
    fn zero_function_gives_zero_correlation() {
        let f = GridFunction::zeros(2, 5).unwrap();
        assert_eq!(u2_inverse_witness(&f).unwrap().correlation, 0.0);
        assert_eq!(box_inverse_witness(&f).unwrap().correlation, 0.0);
    }

    #[test]
    fn planted_row_phase_is_found() {
        let n = 16;
        let f = GridFunction::from_fn(2, n, |x| e(0.3 * x[0] as f64)).unwrap();
        let w = u2_inverse_witness(&f).unwrap();
        let bin = 1.0 / (4 * n + 2) as f64;
        for &p in &w.phi {
            // The witness frequency cancels the planted one: phi ≡ −0.3.
            let d = ((p + 0.3) - (p + 0.3).round()).abs();
            assert!(d <= bin, "{p}");
        }
        let full = ((2 * n + 1) * (2 * n + 1)) as f64;
        assert!(w.correlation >= 0.9 * full, "{}", w.correlation);
        assert!((u2_direct(&f, &w) - Complex64::new(w.correlation, 0.0)).norm() < 1e-9);
        assert!(w.constant.unwrap() > 0.0);
    }

    #[test]
    fn planted_box_atom_is_found() {
        let n = 10;
        let mut rng = substream(4, 0);
        let b1: Vec<Complex64> = (0..21).map(|_| e(rand::Rng::gen(&mut rng))).collect();
        let b2: Vec<Complex64> = (0..21).map(|_| e(rand::Rng::gen(&mut rng))).collect();
        let f = GridFunction::from_fn(2, n, |x| {
            let (i, j) = ((x[0] + 10) as usize, (x[1] + 10) as usize);
            e((0.27 + 0.01 * x[0] as f64) * x[1] as f64) * b1[j] * b2[i]
        })
        .unwrap();
        let w = box_inverse_witness(&f).unwrap();
        assert!(w.correlation >= 0.8 * 441.0, "{}", w.correlation);
        assert!((box_direct(&f, &w) - Complex64::new(w.correlation, 0.0)).norm() < 1e-9);
        assert!(!w.sampled);
        assert_eq!(w.candidates, 21);
    }

    #[test]
    fn random_signs_stay_well_below_full_correlation() {
        let f = GridFunction::random_signs(2, 16, 7, 0).unwrap();
        let full = 33.0 * 33.0;
        let w = u2_inverse_witness(&f).unwrap();
        // Parseval forces at least (2N+1)^{3/2}; a random grid sits near twice that.
        assert!(w.correlation >= full / 33f64.sqrt() - 1e-9);
        assert!(w.correlation <= 0.5 * full, "{}", w.correlation);
    }

    #[test]
    fn three_dimensional_witness_is_consistent() {
        let f = GridFunction::random_disc(3, 3, 2, 0).unwrap();
        let opts = BoxWitnessOptions { samples: 12, seed: 5, calibrate: true };
        let w = box_inverse_witness_with(&f, &opts).unwrap();
        assert!(w.sampled);
        assert_eq!(w.b.len(), 3);
        assert!(w.b.iter().flatten().all(|v| v.norm() <= 1.0 + 1e-12));
        assert!((box_direct(&f, &w) - Complex64::new(w.correlation, 0.0)).norm() < 1e-9);
        assert_eq!(w, box_inverse_witness_with(&f, &opts).unwrap());
        assert!(w.delta.is_some());
    }

    #[test]
    fn rejects_unbounded_input() {
        let f = GridFunction::from_fn(2, 2, |_| Complex64::new(2.0, 0.0)).unwrap();
        assert!(u2_inverse_witness(&f).is_err());
        assert!(box_inverse_witness(&f).is_err());
        let g = GridFunction::zeros(3, 1).unwrap();
        assert!(u2_inverse_witness(&g).is_err());
    }

    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
        let mut r = vec![0.0; v.len()];
        for (rank, &i) in idx.iter().enumerate() {
            r[i] = rank as f64;
        }
        r
    }

    #[test]
    fn correlation_rank_tracks_norm() {
        // Mixtures of noise and a planted atom with seeded weights.
        let n = 8;
        let atom = GridFunction::from_fn(2, n, |x| e(0.2 * x[1] as f64 + 0.05 * (x[0] * x[1]) as f64)).unwrap();
        let mut vs = Vec::new();
        let mut cs = Vec::new();
        for k in 0..20u64 {
            let lam: f64 = rand::Rng::gen(&mut substream(77, k));
            let noise = GridFunction::random_disc(2, n, 78, k).unwrap();
            let values = noise.values().iter().zip(atom.values()).map(|(a, b)| a * (1.0 - lam) + b * lam).collect();
            let f = GridFunction::new(2, n, values).unwrap();
            let w = box_inverse_witness(&f).unwrap();
            vs.push(w.delta.unwrap());
            cs.push(w.correlation);
            assert!(w.constant.unwrap() > 0.0);
        }
        let (rv, rc) = (ranks(&vs), ranks(&cs));
        let d2: f64 = rv.iter().zip(&rc).map(|(a, b)| (a - b) * (a - b)).sum();
        let rho = 1.0 - 6.0 * d2 / (20.0 * (400.0 - 1.0));
        assert!(rho >= 0.8, "{rho}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn correlations_are_real_and_nonnegative(seed in 0u64..10_000, n in 1usize..7) {
            let f = GridFunction::random_disc(2, n, seed, 9).unwrap();
            let u = u2_inverse_witness(&f).unwrap();
            prop_assert!(u.correlation >= 0.0);
            prop_assert!((u2_direct(&f, &u) - Complex64::new(u.correlation, 0.0)).norm() < 1e-9);
            prop_assert!(u.phi.iter().chain(&u.psi).all(|&p| (0.0..1.0).contains(&p)));
            let b = box_inverse_witness(&f).unwrap();
            prop_assert!(b.correlation >= 0.0);
            prop_assert!((box_direct(&f, &b) - Complex64::new(b.correlation, 0.0)).norm() < 1e-9);
            prop_assert!(b.b.iter().flatten().all(|v| v.norm() <= 1.0 + 1e-12));
        }
    }
}
