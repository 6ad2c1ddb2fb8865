//! Regularity decomposition `f = f_str + f_sml + f_unif` by energy increment.
//!
//! Each round projects `f` (least squares) onto the span of the atoms found so
//! far and clips the result to radius 3, so the residual is 4-bounded. The
//! residual is then either small in `L²`, uniform at the current threshold
//! `N^ℓ / F(M)`, or splits as `t·r + (1−t)·r` with the uniform part scaled
//! exactly to the threshold. Otherwise a box witness of `r/4` contributes
//! the next atom.

use serde::{Deserialize, Serialize};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::norm::{grid_box_norm_power, DEFAULT_GRID_BUDGET};
use super::structured::{Atom, StructuredFunction};
use super::witness::{box_inverse_witness_with, BoxWitnessOptions};
use super::{DirectionSet, GridFunction};
use crate::error::{LabError, Result};

/// `F(M) = 2^10 (M+1)^3`.
pub fn default_growth(m: usize) -> f64 {
    1024.0 * ((m + 1) as f64).powi(3)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RegularityOptions {
    pub cap: usize,
    pub clip: f64,
    pub witness: BoxWitnessOptions,
}

impl Default for RegularityOptions {
    fn default() -> Self {
        RegularityOptions {
            cap: 64,
            clip: 3.0,
            witness: BoxWitnessOptions { calibrate: false, ..BoxWitnessOptions::default() },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificates {
    pub m: usize,
    pub sml_l2: f64,
    /// `‖f_unif‖^{2^{ℓ+1}}` along `e_1[±N],…,e_ℓ[±N],e_ℓ[±N]`.
    pub unif_power: f64,
    pub unif_norm: f64,
    /// `N^ℓ / F(M)`.
    pub threshold: f64,
    pub rounds: usize,
    /// `‖f_str‖²_{L²}` after each projection.
    pub energy: Vec<f64>,
    /// `max |(f_str + f_sml) + f_unif − f|` in floating point; zero whenever
    /// the values of `f` are coarse enough to be split exactly.
    pub reconstruction_error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularityOutput {
    pub f_str: StructuredFunction,
    /// `f_str` evaluated on the box; the reconstruction is exact against it.
    pub f_str_grid: GridFunction,
    pub f_sml: GridFunction,
    pub f_unif: GridFunction,
    pub certificates: Certificates,
}

pub fn regularity_decompose(
    f: &GridFunction,
    eps: f64,
    growth: &dyn Fn(usize) -> f64,
) -> Result<RegularityOutput> {
    regularity_decompose_with(f, eps, growth, &RegularityOptions::default())
}

pub fn regularity_decompose_with(
    f: &GridFunction,
    eps: f64,
    growth: &dyn Fn(usize) -> f64,
    opts: &RegularityOptions,
) -> Result<RegularityOutput> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(LabError::invalid("eps must lie in (0, 1)"));
    }
    if f.sup_bound() > 1.0 + 1e-9 {
        return Err(LabError::invalid("regularity needs a 1-bounded function"));
    }
    if f.ell() < 2 {
        return Err(LabError::invalid("regularity needs ell >= 2"));
    }
    let (ell, n) = (f.ell(), f.n());
    let dirs = DirectionSet::inverse_theorem(ell, n)?;
    let order = (1u64 << dirs.s()) as f64;
    let volume = (n as f64).powi(ell as i32);
    let mut witnesses: Vec<Atom> = Vec::new();
    let mut energy = Vec::new();
    loop {
        let f_str = project(f, &witnesses, opts.clip)?;
        let s_grid = f_str.eval_grid();
        energy.push(s_grid.l2_normalized().powi(2));
        let r = f.sub(&s_grid)?;
        let rho = r.l2_normalized();
        let threshold = volume / growth(f_str.m());
        // Scale of the uniform part, or None to keep iterating.
        let split = if rho <= eps {
            Some(0.0)
        } else {
            let p = grid_box_norm_power(&r, &dirs, DEFAULT_GRID_BUDGET)?;
            if p <= threshold {
                Some(1.0)
            } else {
                // Margin keeps the certificate strict after exact reconstruction.
                let t = (threshold / p).powf(1.0 / order) * (1.0 - 1e-9);
                ((1.0 - t) * rho <= eps * (1.0 - 1e-9)).then_some(t)
            }
        };
        if let Some(t) = split {
            let (f_sml, f_unif, reconstruction_error) = reconstruct(f, &s_grid, &r, t)?;
            let unif_power = grid_box_norm_power(&f_unif, &dirs, DEFAULT_GRID_BUDGET)?;
            let certificates = Certificates {
                m: f_str.m(),
                sml_l2: f_sml.l2_normalized(),
                unif_power,
                unif_norm: unif_power.powf(1.0 / order),
                threshold,
                rounds: witnesses.len(),
                energy,
                reconstruction_error,
            };
            return Ok(RegularityOutput { f_str, f_str_grid: s_grid, f_sml, f_unif, certificates });
        }
        if witnesses.len() >= opts.cap {
            return Err(LabError::IterationCap { cap: opts.cap });
        }
        let w = box_inverse_witness_with(&r.scale(0.25), &opts.witness)?;
        witnesses.push(Atom::from_witness(&w, Complex64::new(1.0, 0.0)));
    }
}

/// Clipped least-squares projection of `f` onto the span of `atoms`.
fn project(f: &GridFunction, atoms: &[Atom], clip: f64) -> Result<StructuredFunction> {
    let (ell, n) = (f.ell(), f.n());
    if atoms.is_empty() {
        return StructuredFunction::new(ell, n, Vec::new(), Some(clip));
    }
    let unit = StructuredFunction::new(ell, n, atoms.to_vec(), None)?;
    let cols: Vec<Vec<Complex64>> = (0..atoms.len()).map(|k| unit.atom_values(k)).collect();
    let a = DMatrix::from_fn(f.len(), atoms.len(), |i, j| cols[j][i]);
    let b = DVector::from_column_slice(f.values());
    let svd = a.svd(true, true);
    let tol = svd.singular_values.max() * 1e-10;
    let c = svd
        .solve(&b, tol)
        .map_err(|msg| LabError::Precision(format!("least-squares projection failed: {msg}")))?;
    let fitted = atoms
        .iter()
        .zip(c.iter())
        .map(|(a, &ci)| Atom { c: ci, ..a.clone() })
        .collect();
    StructuredFunction::new(ell, n, fitted, Some(clip))
}

/// Splits `r = f − s` as `f_sml + f_unif` with `f_unif ≈ t·r`, choosing
/// floating-point values with `(s + f_sml) + f_unif == f` wherever a few ulps
/// of adjustment allow it. Returns the largest remaining reconstruction error.
fn reconstruct(
    f: &GridFunction,
    s: &GridFunction,
    r: &GridFunction,
    t: f64,
) -> Result<(GridFunction, GridFunction, f64)> {
    let mut sml = Vec::with_capacity(f.len());
    let mut unif = Vec::with_capacity(f.len());
    let mut worst: f64 = 0.0;
    for ((fv, sv), rv) in f.values().iter().zip(s.values()).zip(r.values()) {
        let target = rv * (1.0 - t);
        let (a_re, b_re) = split_exact(fv.re, sv.re, target.re);
        let (a_im, b_im) = split_exact(fv.im, sv.im, target.im);
        let back = (sv + Complex64::new(a_re, a_im)) + Complex64::new(b_re, b_im);
        worst = worst.max((back.re - fv.re).abs()).max((back.im - fv.im).abs());
        sml.push(Complex64::new(a_re, a_im));
        unif.push(Complex64::new(b_re, b_im));
    }
    Ok((GridFunction::new(f.ell(), f.n(), sml)?, GridFunction::new(f.ell(), f.n(), unif)?, worst))
}

/// `(p, q)` with `p` within a few ulps of `want`, `q = fl(f − fl(s + p))`,
/// and `(s + p) + q == f` whenever some nearby `p` achieves it. A value `f`
/// carrying bits finer than both `s + p` and `q` can represent admits no
/// exact split; then the rounding error stays below one ulp of `q`.
fn split_exact(f: f64, s: f64, want: f64) -> (f64, f64) {
    let mut up = want;
    let mut down = want;
    for _ in 0..16 {
        for p in [up, down] {
            let q = f - (s + p);
            if (s + p) + q == f {
                return (p, q);
            }
        }
        up = up.next_up();
        down = down.next_down();
    }
    (want, f - (s + want))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{e, substream};
    use rand::Rng;

    fn check(f: &GridFunction, out: &RegularityOutput, eps: f64, exact: bool) {
        let mut worst: f64 = 0.0;
        for ((fv, s), (a, b)) in f
            .values()
            .iter()
            .zip(out.f_str_grid.values())
            .zip(out.f_sml.values().iter().zip(out.f_unif.values()))
        {
            let sum = (s + a) + b;
            if exact {
                assert_eq!(sum.re.to_bits(), fv.re.to_bits());
                assert_eq!(sum.im.to_bits(), fv.im.to_bits());
            }
            worst = worst.max((sum - fv).norm());
        }
        let c = &out.certificates;
        assert!(worst <= 1e-15, "{worst}");
        assert_eq!(c.reconstruction_error == 0.0, worst == 0.0);
        assert_eq!(out.f_str.eval_grid(), out.f_str_grid);
        assert!(c.sml_l2 <= eps, "{c:?}");
        assert!(c.unif_power <= c.threshold, "{c:?}");
        for g in [&out.f_str_grid, &out.f_sml, &out.f_unif] {
            assert!(g.sup_bound() <= 4.0);
        }
        assert!(c.m <= 64);
    }

    #[test]
    fn zero_function_has_trivial_decomposition() {
        let f = GridFunction::zeros(2, 5).unwrap();
        let out = regularity_decompose(&f, 0.1, &default_growth).unwrap();
        check(&f, &out, 0.1, true);
        assert_eq!(out.certificates.m, 0);
        assert!(out.f_sml.values().iter().chain(out.f_unif.values()).all(|v| v.norm() == 0.0));
    }

    #[test]
    fn planted_atom_is_recovered_quickly() {
        let n = 10;
        let l = (4 * n + 2) as f64;
        let mut rng = substream(21, 0);
        let b1: Vec<Complex64> = (0..21).map(|_| e(rng.gen())).collect();
        let b2: Vec<Complex64> = (0..21).map(|_| e(rng.gen())).collect();
        let ks: Vec<f64> = (0..21).map(|_| rng.gen_range(0..42) as f64 / l).collect();
        let f = GridFunction::from_fn(2, n, |x| {
            let (i, j) = ((x[0] + 10) as usize, (x[1] + 10) as usize);
            e(ks[i] * x[1] as f64) * b1[j] * b2[i]
        })
        .unwrap();
        let out = regularity_decompose(&f, 0.1, &default_growth).unwrap();
        check(&f, &out, 0.1, false);
        assert!(out.certificates.rounds <= 2, "{:?}", out.certificates);
    }

    #[test]
    fn random_inputs_terminate_with_certificates() {
        for seed in 0..4u64 {
            let f = match seed {
                0 => GridFunction::random_signs(2, 10, seed, 0).unwrap(),
                1 => GridFunction::random_disc(2, 10, seed, 0).unwrap(),
                _ => GridFunction::random_disc(2, 10, seed, 0).unwrap().quantize(24),
            };
            let out = regularity_decompose(&f, 0.1, &default_growth).unwrap();
            check(&f, &out, 0.1, seed != 1);
            let en = &out.certificates.energy;
            assert!(en.windows(2).all(|w| w[1] >= w[0] - 1e-12), "{en:?}");
        }
    }

    #[test]
    fn cap_is_reported() {
        let f = GridFunction::random_signs(2, 6, 2, 0).unwrap();
        let opts = RegularityOptions { cap: 1, ..RegularityOptions::default() };
        assert_eq!(
            regularity_decompose_with(&f, 0.01, &default_growth, &opts),
            Err(LabError::IterationCap { cap: 1 })
        );
    }

    #[test]
    fn rejects_bad_parameters() {
        let f = GridFunction::zeros(2, 3).unwrap();
        assert!(regularity_decompose(&f, 0.0, &default_growth).is_err());
        assert!(regularity_decompose(&f, 1.0, &default_growth).is_err());
        let g = GridFunction::from_fn(2, 2, |_| Complex64::new(1.5, 0.0)).unwrap();
        assert!(regularity_decompose(&g, 0.1, &default_growth).is_err());
    }

    #[test]
    fn exact_split_handles_awkward_magnitudes() {
        for &(f, s, w) in &[(1.0, 3.0, -2.0), (0.1, -2.9, 3.0), (0.5, 2.5, -2.5), (-0.75, 0.3, -1e-17)] {
            let (p, q) = split_exact(f, s, w);
            assert_eq!((s + p) + q, f);
        }
        // Bits of f finer than every available summand cannot be matched.
        let (f, s) = (-0.027543096680740266, 0.22208000644349501);
        let (p, q) = split_exact(f, s, 0.5 * (f - s));
        assert!(((s + p) + q - f).abs() <= 1e-17);
    }
}
