//! Finite-scale checks of limiting identities: averages along `a(n)` versus
//! along `n`, the factorial double-limit scheme, linear seminorm control,
//! Weyl sums and 2-step nil-orbit averages.
//!
//! Every average over a finite system depends on `a(n)` only through its
//! residue modulo the shift period, so both sides are computed from exact
//! residue histograms and a per-residue integral table.

use std::collections::BTreeMap;

use num_complex::Complex64;
use num_integer::Integer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::numeric::{ComplexSum, Frac128};
use crate::seminorms::{box_seminorm, SeminormSpec};
use crate::sequences::{find_nk, PolynomialZ, SequenceSpec};
use crate::systems::{FiniteSystem, Observable, SkewProductSystem, TransformationWord};

const CHUNK: u64 = 1 << 14;
/// Cap on `period · |X|` for the integral table.
pub const TABLE_BUDGET: u128 = 1 << 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trend {
    Decreasing,
    Flat,
    Increasing,
}

/// Trend of a nonnegative series, first value against last.
pub fn trend(values: &[f64]) -> Trend {
    match (values.first(), values.last()) {
        (Some(&a), Some(&b)) if b < a => Trend::Decreasing,
        (Some(&a), Some(&b)) if b > a => Trend::Increasing,
        _ => Trend::Flat,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityRecord {
    /// Window `[start, n]`; `start = 1` for Cesàro averages.
    pub start: u64,
    pub n: u64,
    pub avg_along_a: Complex64,
    pub avg_along_id: Complex64,
    pub abs_diff: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityReport {
    pub records: Vec<IdentityRecord>,
    pub extrapolation_trend: Trend,
    pub final_diff: f64,
}

impl IdentityReport {
    fn from_records(records: Vec<IdentityRecord>) -> Self {
        let diffs: Vec<f64> = records.iter().map(|r| r.abs_diff).collect();
        IdentityReport {
            extrapolation_trend: trend(&diffs),
            final_diff: diffs.last().copied().unwrap_or(0.0),
            records,
        }
    }
}

fn check_two_generators(sys: &FiniteSystem) -> Result<()> {
    if sys.generator_count() != 2 {
        return Err(LabError::invalid(format!(
            "this check needs exactly two generators, the system has {}",
            sys.generator_count()
        )));
    }
    Ok(())
}

fn check_observables(sys: &FiniteSystem, fs: &[&Observable]) -> Result<()> {
    if fs.iter().any(|f| f.len() != sys.len()) {
        return Err(LabError::invalid("observable length does not match the system"));
    }
    Ok(())
}

/// `I(r) = ∫ f0 · T_1^r f1 · T_2^r f2 dμ` for `0 ≤ r < lcm(ord T_1, ord T_2)`.
pub fn integral_table(sys: &FiniteSystem, f0: &Observable, f1: &Observable, f2: &Observable) -> Result<Vec<Complex64>> {
    check_two_generators(sys)?;
    check_observables(sys, &[f0, f1, f2])?;
    let (t1, t2) = (&sys.maps()[0], &sys.maps()[1]);
    let period = t1.order().lcm(&t2.order());
    let cost = period as u128 * sys.len() as u128;
    if cost > TABLE_BUDGET {
        return Err(LabError::Budget { what: "integral table".into(), needed: cost, budget: TABLE_BUDGET });
    }
    Ok((0..period as i64)
        .into_par_iter()
        .map(|r| {
            let g1 = f1.compose(&t1.pow(r));
            let g2 = f2.compose(&t2.pow(r));
            sys.integral(&f0.mul(&g1).mul(&g2))
        })
        .collect())
}

/// Cumulative histograms of `a(n) mod q` at each boundary `b` (counting
/// `1 ≤ n ≤ b`). Boundaries must be sorted.
pub fn ladder_histograms(seq: &SequenceSpec, q: u64, boundaries: &[u64]) -> Result<Vec<Vec<u64>>> {
    let segments = segments(boundaries)?;
    let parts: Vec<Vec<u64>> = segments
        .par_iter()
        .map(|&(lo, hi)| {
            let mut h = vec![0u64; q as usize];
            for n in lo..=hi {
                h[seq.eval_mod(n, q)? as usize] += 1;
            }
            Ok(h)
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let mut acc = vec![0u64; q as usize];
    let mut out = Vec::with_capacity(boundaries.len());
    let mut it = parts.into_iter().zip(&segments).peekable();
    for &b in boundaries {
        while let Some((h, _)) = it.next_if(|(_, s)| s.1 <= b) {
            for (a, v) in acc.iter_mut().zip(h) {
                *a += v;
            }
        }
        out.push(acc.clone());
    }
    Ok(out)
}

/// Fixed-size chunks of `[1, max boundary]` that never straddle a boundary.
fn segments(boundaries: &[u64]) -> Result<Vec<(u64, u64)>> {
    if boundaries.windows(2).any(|w| w[1] < w[0]) {
        return Err(LabError::invalid("N ladder must be sorted"));
    }
    let mut out = Vec::new();
    let mut lo = 1;
    for &b in boundaries {
        while lo <= b {
            let hi = (lo + CHUNK - 1).min(b);
            out.push((lo, hi));
            lo = hi + 1;
        }
    }
    Ok(out)
}

/// Cumulative sums `Σ_{n ≤ b} g(n)` at each boundary, chunked and combined in
/// a fixed order so the result does not depend on the worker count.
fn ladder_sums<G>(boundaries: &[u64], g: G) -> Result<Vec<Complex64>>
where
    G: Fn(u64) -> Result<Complex64> + Sync,
{
    let segments = segments(boundaries)?;
    let parts: Vec<ComplexSum> = segments
        .par_iter()
        .map(|&(lo, hi)| {
            let mut s = ComplexSum::new();
            for n in lo..=hi {
                s.add(g(n)?);
            }
            Ok(s)
        })
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let mut acc = ComplexSum::new();
    let mut out = Vec::with_capacity(boundaries.len());
    let mut it = parts.iter().zip(&segments).peekable();
    for &b in boundaries {
        while let Some((s, _)) = it.next_if(|(_, seg)| seg.1 <= b) {
            acc.add(s.value());
        }
        out.push(acc.value());
    }
    Ok(out)
}

/// `Σ_r count_r I(r) / total`, with residues sharing a bitwise-equal `I(r)`
/// merged first, so equal value distributions give equal averages.
fn weighted_average(table: &[Complex64], counts: &[u64], total: u64) -> Complex64 {
    let mut groups: BTreeMap<(u64, u64), u64> = BTreeMap::new();
    for (v, &c) in table.iter().zip(counts) {
        if c > 0 {
            *groups.entry((v.re.to_bits(), v.im.to_bits())).or_default() += c;
        }
    }
    let mut s = ComplexSum::new();
    for ((re, im), c) in groups {
        s.add(Complex64::new(f64::from_bits(re), f64::from_bits(im)) * c as f64);
    }
    s.value() / total as f64
}

fn window_counts(hists: &[Vec<u64>], lo_idx: usize, hi_idx: usize) -> Vec<u64> {
    hists[hi_idx].iter().zip(&hists[lo_idx]).map(|(a, b)| a - b).collect()
}

/// Averages over the windows `[M, N]` along `a` and along a reference
/// sequence, from the same integral table.
fn compare_windows_against(
    table: &[Complex64],
    seq: &SequenceSpec,
    reference: &SequenceSpec,
    windows: &[(u64, u64)],
) -> Result<IdentityReport> {
    if windows.is_empty() {
        return Err(LabError::invalid("at least one averaging window is required"));
    }
    if windows.iter().any(|&(m, n)| m == 0 || n < m) {
        return Err(LabError::invalid("windows must satisfy 1 <= M <= N"));
    }
    let q = table.len() as u64;
    let mut bounds: Vec<u64> = windows.iter().flat_map(|&(m, n)| [m - 1, n]).collect();
    bounds.sort_unstable();
    bounds.dedup();
    let ha = ladder_histograms(seq, q, &bounds)?;
    let hb = ladder_histograms(reference, q, &bounds)?;
    let pos = |b: u64| bounds.binary_search(&b).expect("boundary present");
    let mut records: Vec<IdentityRecord> = windows
        .iter()
        .map(|&(m, n)| {
            let (i, j) = (pos(m - 1), pos(n));
            let total = n - m + 1;
            let a = weighted_average(table, &window_counts(&ha, i, j), total);
            let b = weighted_average(table, &window_counts(&hb, i, j), total);
            IdentityRecord { start: m, n, avg_along_a: a, avg_along_id: b, abs_diff: (a - b).norm() }
        })
        .collect();
    records.sort_by_key(|r| (r.n, r.start));
    Ok(IdentityReport::from_records(records))
}

/// `E_{n ≤ N} ∫ f0 · T_1^{a(n)} f1 · T_2^{a(n)} f2` against the same average
/// along `n`, for each `N` in the ladder.
pub fn compare_averages(
    sys: &FiniteSystem,
    f0: &Observable,
    f1: &Observable,
    f2: &Observable,
    seq: &SequenceSpec,
    ns: &[u64],
) -> Result<IdentityReport> {
    let windows: Vec<(u64, u64)> = ns.iter().map(|&n| (1, n)).collect();
    compare_averages_windows(sys, f0, f1, f2, seq, &windows)
}

/// As [`compare_averages`], over arbitrary windows `[M, N]`.
pub fn compare_averages_windows(
    sys: &FiniteSystem,
    f0: &Observable,
    f1: &Observable,
    f2: &Observable,
    seq: &SequenceSpec,
    windows: &[(u64, u64)],
) -> Result<IdentityReport> {
    let table = integral_table(sys, f0, f1, f2)?;
    compare_windows_against(&table, seq, &SequenceSpec::Identity, windows)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorialRecord {
    pub k: u32,
    pub n_k: u128,
    pub report: IdentityReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorialReport {
    pub records: Vec<FactorialRecord>,
    pub k_trend: Trend,
}

/// For each `k`, `E_{n ≤ N}` along `p(k! n + n_k)` against along `k! n`.
pub fn compare_factorial(
    sys: &FiniteSystem,
    f0: &Observable,
    f1: &Observable,
    f2: &Observable,
    p: &PolynomialZ,
    ks: &[u32],
    n: u64,
) -> Result<FactorialReport> {
    if n == 0 {
        return Err(LabError::invalid("N must be positive"));
    }
    let table = integral_table(sys, f0, f1, f2)?;
    let records: Vec<FactorialRecord> = ks
        .iter()
        .map(|&k| {
            let n_k = find_nk(p, k)?;
            let along = SequenceSpec::factorial_scheme(p.clone(), k, n_k)?;
            let reference = SequenceSpec::factorial_scheme(PolynomialZ::monomial(1), k, 0)?;
            let report = compare_windows_against(&table, &along, &reference, &[(1, n)])?;
            Ok(FactorialRecord { k, n_k, report })
        })
        .collect::<Result<_>>()?;
    let diffs: Vec<f64> = records.iter().map(|r| r.report.final_diff).collect();
    Ok(FactorialReport { k_trend: trend(&diffs), records })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearControl {
    pub lhs: f64,
    pub rhs: f64,
    /// `⟦f0⟧_{T1,T2}`, `⟦f1⟧_{T1,T2T1⁻¹}`, `⟦f2⟧_{T2T1⁻¹,T2}`.
    pub seminorms: [f64; 3],
}

impl LinearControl {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs + 1e-9
    }
}

/// Full-period `|E_n ∫ f0 · T_1^n f1 · T_2^n f2|` against the smallest of
/// the three controlling seminorms.
pub fn linear_control_check(sys: &FiniteSystem, f0: &Observable, f1: &Observable, f2: &Observable) -> Result<LinearControl> {
    let table = integral_table(sys, f0, f1, f2)?;
    let counts = vec![1u64; table.len()];
    let lhs = weighted_average(&table, &counts, table.len() as u64).norm();
    let t1 = TransformationWord(vec![1, 0]);
    let t2 = TransformationWord(vec![0, 1]);
    let d = TransformationWord(vec![-1, 1]);
    let specs = [
        SeminormSpec::new(vec![t1.clone(), t2.clone()])?,
        SeminormSpec::new(vec![t1, d.clone()])?,
        SeminormSpec::new(vec![d, t2])?,
    ];
    let fs = [f0, f1, f2];
    let mut seminorms = [0.0; 3];
    for i in 0..3 {
        seminorms[i] = box_seminorm(sys, fs[i], &specs[i])?;
    }
    let rhs = seminorms.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(LinearControl { lhs, rhs, seminorms })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum WeylClass {
    TendsToZero,
    TendsToPositive { limit_estimate: f64 },
    Inconclusive,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeylRecord {
    pub n: u64,
    pub magnitude: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeylReport {
    pub beta: f64,
    pub records: Vec<WeylRecord>,
    pub classification: WeylClass,
}

/// Largest `|a(n)|` for which `β a(n) mod 1` is certified.
pub const WEYL_MAX_TERM: i128 = 1 << 63;

/// `|E_{n ≤ N} e(β a(n))|` along a sorted ladder of `N`, with `β a(n)`
/// reduced mod 1 in 128-bit fixed point.
pub fn weyl_sum(seq: &SequenceSpec, beta: Frac128, ns: &[u64]) -> Result<WeylReport> {
    if ns.is_empty() || ns[0] == 0 {
        return Err(LabError::invalid("N ladder must be nonempty and positive"));
    }
    let sums = ladder_sums(ns, |n| {
        let a = seq.eval_i128(n)?;
        if a.abs() > WEYL_MAX_TERM {
            return Err(LabError::Precision(format!("a({n}) = {a} is beyond the certified range 2^63")));
        }
        Ok(beta.mul_int(a).e())
    })?;
    let records: Vec<WeylRecord> = ns
        .iter()
        .zip(sums)
        .map(|(&n, s)| WeylRecord { n, magnitude: (s.norm() / n as f64).min(1.0) })
        .collect();
    Ok(WeylReport { beta: beta.to_f64(), classification: classify(&records), records })
}

/// Zero when the last magnitude is within `10/√N`; positive when the last two
/// agree to 5%; otherwise inconclusive.
fn classify(records: &[WeylRecord]) -> WeylClass {
    let last = records.last().expect("nonempty ladder");
    if last.magnitude <= 10.0 / (last.n as f64).sqrt() {
        return WeylClass::TendsToZero;
    }
    match records.len().checked_sub(2).map(|i| &records[i]) {
        Some(prev) if (last.magnitude - prev.magnitude).abs() <= 0.05 * last.magnitude => {
            WeylClass::TendsToPositive { limit_estimate: last.magnitude }
        }
        _ => WeylClass::Inconclusive,
    }
}

/// A trigonometric polynomial `Σ c e(k_1 x + k_2 y)` on the 2-torus.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrigPoly {
    pub terms: Vec<((i64, i64), Complex64)>,
}

impl TrigPoly {
    pub fn eval(&self, p: (Frac128, Frac128)) -> Complex64 {
        let mut s = ComplexSum::new();
        for &((k1, k2), c) in &self.terms {
            s.add(c * (p.0.mul_int(k1 as i128) + p.1.mul_int(k2 as i128)).e());
        }
        s.value()
    }

    /// Parses `"1*(1,0) + 1*(0,1)"`; coefficients may be `re` or `re:im`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || LabError::invalid(format!("cannot parse trigonometric polynomial `{text}`"));
        let mut terms = Vec::new();
        for part in text.split('+').map(str::trim).filter(|p| !p.is_empty()) {
            let (coeff, freq) = part.split_once('*').ok_or_else(bad)?;
            let c = match coeff.trim().split_once(':') {
                Some((re, im)) => Complex64::new(re.trim().parse().map_err(|_| bad())?, im.trim().parse().map_err(|_| bad())?),
                None => Complex64::new(coeff.trim().parse().map_err(|_| bad())?, 0.0),
            };
            let inner = freq.trim().strip_prefix('(').and_then(|f| f.strip_suffix(')')).ok_or_else(bad)?;
            let (a, b) = inner.split_once(',').ok_or_else(bad)?;
            terms.push(((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?), c));
        }
        if terms.is_empty() {
            return Err(bad());
        }
        Ok(TrigPoly { terms })
    }
}

/// `E_{n ≤ N} F(T^{a(n)} x₀)` against `E_{n ≤ N} F(T^n x₀)` on the skew product.
pub fn nil_orbit_average(skew: &SkewProductSystem, f: &TrigPoly, seq: &SequenceSpec, ns: &[u64]) -> Result<IdentityReport> {
    if ns.is_empty() || ns[0] == 0 {
        return Err(LabError::invalid("N ladder must be nonempty and positive"));
    }
    let along = ladder_sums(ns, |n| Ok(f.eval(skew.orbit_point(seq.eval_i128(n)?)?)))?;
    let reference = ladder_sums(ns, |n| Ok(f.eval(skew.orbit_point(n as i128)?)))?;
    let records = ns
        .iter()
        .zip(along.iter().zip(&reference))
        .map(|(&n, (&a, &b))| {
            let (a, b) = (a / n as f64, b / n as f64);
            IdentityRecord { start: 1, n, avg_along_a: a, avg_along_id: b, abs_diff: (a - b).norm() }
        })
        .collect();
    Ok(IdentityReport::from_records(records))
}
