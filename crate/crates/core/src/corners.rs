//! Corner patterns at finite scale: triple intersections in a finite system,
//! corner counts `m, m + v_1·a, m + v_2·a` in subsets of `Z_q²`, and scans of
//! the popular-difference bound `d_n ≥ μ(A)⁴ − ε` along a sequence `a(n)`.

use std::collections::BTreeMap;

use num_integer::Integer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::numeric::{fsum, substream};
use crate::sequences::SequenceSpec;
use crate::systems::FiniteSystem;

/// `μ(A ∩ T_1^{-a}A ∩ T_2^{-a}A)`, with `T_1, T_2` the first two generators.
pub fn triple_density(sys: &FiniteSystem, a_set: &[bool], a_value: i128) -> Result<f64> {
    check_subset(sys, a_set)?;
    if sys.generator_count() < 2 {
        return Err(LabError::invalid("triple_density needs two generators"));
    }
    let t1 = power(sys, 0, a_value);
    let t2 = power(sys, 1, a_value);
    let parts: Vec<f64> = (0..sys.len())
        .map(|x| {
            if a_set[x] && a_set[t1.apply(x)] && a_set[t2.apply(x)] {
                sys.weights()[x]
            } else {
                0.0
            }
        })
        .collect();
    Ok(fsum(&parts))
}

fn power(sys: &FiniteSystem, i: usize, a: i128) -> crate::systems::Permutation {
    let t = &sys.maps()[i];
    let e = a.rem_euclid(t.order() as i128) as i64;
    t.pow(e)
}

fn check_subset(sys: &FiniteSystem, a_set: &[bool]) -> Result<()> {
    if a_set.len() != sys.len() {
        return Err(LabError::invalid(format!(
            "subset has {} flags for a space of {} points",
            a_set.len(),
            sys.len()
        )));
    }
    Ok(())
}

/// Period of the shift action `a ↦ (T_1^a, T_2^a)`.
pub fn shift_period(sys: &FiniteSystem) -> Result<u64> {
    if sys.generator_count() < 2 {
        return Err(LabError::invalid("corner scans need two generators"));
    }
    Ok(sys.maps()[0].order().lcm(&sys.maps()[1].order()))
}

/// A subset of `Z_q × Z_q`, stored as one bit row per first coordinate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PlaneFile", into = "PlaneFile")]
pub struct PlaneSet {
    q: usize,
    words: usize,
    bits: Vec<u64>,
}

/// `{"q": 5, "rows": ["10010", ...]}`; `rows[i][j]` flags `(i, j)`.
#[derive(Serialize, Deserialize)]
struct PlaneFile {
    q: usize,
    rows: Vec<String>,
}

impl TryFrom<PlaneFile> for PlaneSet {
    type Error = LabError;

    fn try_from(file: PlaneFile) -> Result<Self> {
        if file.rows.len() != file.q {
            return Err(LabError::invalid(format!("expected {} rows, got {}", file.q, file.rows.len())));
        }
        let mut members = Vec::new();
        for (i, row) in file.rows.iter().enumerate() {
            if row.chars().count() != file.q {
                return Err(LabError::invalid(format!("row {i} must have {} characters", file.q)));
            }
            for (j, c) in row.chars().enumerate() {
                match c {
                    '1' => members.push((i as i64, j as i64)),
                    '0' => {}
                    _ => return Err(LabError::invalid(format!("row {i} has a character other than 0/1"))),
                }
            }
        }
        PlaneSet::from_points(file.q, &members)
    }
}

impl From<PlaneSet> for PlaneFile {
    fn from(s: PlaneSet) -> Self {
        let rows = (0..s.q)
            .map(|i| (0..s.q).map(|j| if s.contains(i as i64, j as i64) { '1' } else { '0' }).collect())
            .collect();
        PlaneFile { q: s.q, rows }
    }
}

impl PlaneSet {
    pub fn empty(q: usize) -> Result<Self> {
        if q == 0 {
            return Err(LabError::invalid("q must be at least 1"));
        }
        if q > 1 << 14 {
            return Err(LabError::invalid("q above 16384 is not supported"));
        }
        let words = q.div_ceil(64);
        Ok(PlaneSet { q, words, bits: vec![0; q * words] })
    }

    pub fn full(q: usize) -> Result<Self> {
        let mut s = Self::empty(q)?;
        for i in 0..q {
            for j in 0..q {
                s.insert(i as i64, j as i64);
            }
        }
        Ok(s)
    }

    pub fn from_points(q: usize, points: &[(i64, i64)]) -> Result<Self> {
        let mut s = Self::empty(q)?;
        for &(i, j) in points {
            s.insert(i, j);
        }
        Ok(s)
    }

    /// Each point kept independently with probability `density`.
    pub fn random(q: usize, density: f64, seed: u64, stream: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&density) {
            return Err(LabError::invalid("density must lie in [0, 1]"));
        }
        let mut rng = substream(seed, stream);
        let mut s = Self::empty(q)?;
        for i in 0..q {
            for j in 0..q {
                if rand::Rng::gen::<f64>(&mut rng) < density {
                    s.insert(i as i64, j as i64);
                }
            }
        }
        Ok(s)
    }

    pub fn q(&self) -> usize {
        self.q
    }

    fn reduce(&self, v: i64) -> usize {
        v.rem_euclid(self.q as i64) as usize
    }

    pub fn insert(&mut self, i: i64, j: i64) {
        let (i, j) = (self.reduce(i), self.reduce(j));
        self.bits[i * self.words + j / 64] |= 1u64 << (j % 64);
    }

    pub fn contains(&self, i: i64, j: i64) -> bool {
        let (i, j) = (self.reduce(i), self.reduce(j));
        self.bits[i * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    pub fn len(&self) -> u64 {
        self.bits.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn density(&self) -> f64 {
        self.len() as f64 / (self.q * self.q) as f64
    }

    fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    /// Row `i` cyclically rotated so that bit `j` of the result is bit
    /// `(j + r) mod q` of the row.
    fn rotated_row(&self, i: usize, r: usize, out: &mut [u64]) {
        out.fill(0);
        let row = self.row(i);
        for (w, word) in row.iter().enumerate() {
            let mut bits = *word;
            while bits != 0 {
                let b = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                let j = (w * 64 + b + self.q - r) % self.q;
                out[j / 64] |= 1u64 << (j % 64);
            }
        }
    }
}

/// Direct count of `m ∈ Z_q²` with `m, m + shift·v1, m + shift·v2 ∈ L`.
pub fn corner_count(l: &PlaneSet, v1: (i64, i64), v2: (i64, i64), shift: i128) -> u64 {
    let q = l.q as i128;
    let s = shift.rem_euclid(q) as i64;
    let q64 = q as i64;
    let off = |v: i64| ((v as i128).rem_euclid(q) as i64 * s).rem_euclid(q64);
    let (a1, a2, b1, b2) = (off(v1.0), off(v1.1), off(v2.0), off(v2.1));
    let mut count = 0u64;
    for i in 0..q64 {
        for j in 0..q64 {
            if l.contains(i, j) && l.contains(i + a1, j + a2) && l.contains(i + b1, j + b2) {
                count += 1;
            }
        }
    }
    count
}

/// The same count with rows as bit vectors: rotate the two shifted rows and
/// popcount the triple intersection.
pub fn corner_count_fast(l: &PlaneSet, v1: (i64, i64), v2: (i64, i64), shift: i128) -> u64 {
    let q = l.q as i128;
    let s = shift.rem_euclid(q) as i64;
    let qu = l.q;
    let off = |v: i64| ((v as i128).rem_euclid(q) as i64 * s).rem_euclid(q as i64) as usize;
    let (a1, a2, b1, b2) = (off(v1.0), off(v1.1), off(v2.0), off(v2.1));
    let mut rb = vec![0u64; l.words];
    let mut rc = vec![0u64; l.words];
    let mut count = 0u64;
    for i in 0..qu {
        l.rotated_row((i + a1) % qu, a2, &mut rb);
        l.rotated_row((i + b1) % qu, b2, &mut rc);
        count += l
            .row(i)
            .iter()
            .zip(&rb)
            .zip(&rc)
            .map(|((x, y), z)| (x & y & z).count_ones() as u64)
            .sum::<u64>();
    }
    count
}

/// What a popular-difference scan measures.
#[derive(Clone, Debug)]
pub enum ScanTarget<'a> {
    /// `d_n = μ(A ∩ T_1^{-a(n)}A ∩ T_2^{-a(n)}A)`.
    System { sys: &'a FiniteSystem, set: &'a [bool] },
    /// `d_n = #corners(L, v1, v2, a(n)) / q²`.
    Plane { set: &'a PlaneSet, v1: (i64, i64), v2: (i64, i64) },
}

impl ScanTarget<'_> {
    fn period(&self) -> Result<u64> {
        match self {
            ScanTarget::System { sys, set } => {
                check_subset(sys, set)?;
                shift_period(sys)
            }
            ScanTarget::Plane { set, .. } => Ok(set.q as u64),
        }
    }

    fn density(&self, residue: u64) -> Result<f64> {
        match self {
            ScanTarget::System { sys, set } => triple_density(sys, set, residue as i128),
            ScanTarget::Plane { set, v1, v2 } => {
                let q2 = (set.q * set.q) as f64;
                Ok(corner_count_fast(set, *v1, *v2, residue as i128) as f64 / q2)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanRecord {
    pub n: u64,
    /// `a(n)` reduced mod the shift period.
    pub shift: u64,
    /// `a(n)` in decimal.
    pub raw: String,
    pub density: f64,
    pub above_threshold: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CornerScanReport {
    pub period: u64,
    pub records: Vec<ScanRecord>,
    pub base_density: f64,
    pub eps: f64,
    pub threshold: f64,
    pub good_set: Vec<u64>,
    /// Largest gap between consecutive good `n`, counting from 0 and up to
    /// `N + 1`; `N + 1` when nothing is good.
    pub max_gap: u64,
    /// `min_{N/10 ≤ M ≤ N} |good ∩ [1, M]| / M`.
    pub lower_density_of_good_set: f64,
}

/// Densities `d_n` for `1 ≤ n ≤ N`, computed once per distinct residue.
fn scan_densities(target: &ScanTarget<'_>, seq: &SequenceSpec, n_max: u64) -> Result<(u64, Vec<u64>, Vec<f64>)> {
    if n_max == 0 {
        return Err(LabError::invalid("N must be positive"));
    }
    let period = target.period()?;
    let shifts: Vec<u64> = (1..=n_max)
        .into_par_iter()
        .map(|n| seq.eval_mod(n, period))
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let mut distinct: Vec<u64> = shifts.clone();
    distinct.sort_unstable();
    distinct.dedup();
    let values: Vec<f64> = distinct
        .par_iter()
        .map(|&r| target.density(r))
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let table: BTreeMap<u64, f64> = distinct.into_iter().zip(values).collect();
    let dens = shifts.iter().map(|s| table[s]).collect();
    Ok((period, shifts, dens))
}

fn base_density(target: &ScanTarget<'_>) -> Result<f64> {
    match target {
        ScanTarget::System { .. } => target.density(0),
        ScanTarget::Plane { set, .. } => Ok(set.density()),
    }
}

pub fn popular_scan(target: &ScanTarget<'_>, seq: &SequenceSpec, n_max: u64, eps: f64) -> Result<CornerScanReport> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(LabError::invalid("eps must lie in (0, 1)"));
    }
    let (period, shifts, dens) = scan_densities(target, seq, n_max)?;
    let base = base_density(target)?;
    let threshold = base.powi(4) - eps;
    let raws: Vec<String> = (1..=n_max)
        .into_par_iter()
        .map(|n| seq.eval(n).map(|v| v.to_string()))
        .collect::<Vec<Result<_>>>()
        .into_iter()
        .collect::<Result<_>>()?;
    let records: Vec<ScanRecord> = (0..n_max as usize)
        .map(|i| ScanRecord {
            n: i as u64 + 1,
            shift: shifts[i],
            raw: raws[i].clone(),
            density: dens[i],
            above_threshold: dens[i] >= threshold,
        })
        .collect();
    let good_set: Vec<u64> = records.iter().filter(|r| r.above_threshold).map(|r| r.n).collect();
    let max_gap = max_gap(&good_set, n_max);
    let lower = lower_density(&good_set, n_max);
    Ok(CornerScanReport {
        period,
        records,
        base_density: base,
        eps,
        threshold,
        good_set,
        max_gap,
        lower_density_of_good_set: lower,
    })
}

fn max_gap(good: &[u64], n_max: u64) -> u64 {
    let mut prev = 0;
    let mut gap = 0;
    for &g in good.iter().chain(std::iter::once(&(n_max + 1))) {
        gap = gap.max(g - prev);
        prev = g;
    }
    gap
}

fn lower_density(good: &[u64], n_max: u64) -> f64 {
    let start = n_max.div_ceil(10).max(1);
    let mut count = good.iter().filter(|&&g| g < start).count() as u64;
    let mut best = f64::INFINITY;
    let mut it = good.iter().filter(|&&g| g >= start).peekable();
    for m in start..=n_max {
        while it.peek().is_some_and(|&&g| g == m) {
            count += 1;
            it.next();
        }
        best = best.min(count as f64 / m as f64);
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KhintchineRow {
    pub eps: f64,
    pub threshold: f64,
    pub fraction: f64,
}

/// For each `eps`, the fraction of `n ≤ N` with `d_n ≥ μ(A)⁴ − eps`.
pub fn khintchine_report(
    sys: &FiniteSystem,
    a_set: &[bool],
    seq: &SequenceSpec,
    n_max: u64,
    eps_grid: &[f64],
) -> Result<Vec<KhintchineRow>> {
    let target = ScanTarget::System { sys, set: a_set };
    let (_, _, dens) = scan_densities(&target, seq, n_max)?;
    let base = base_density(&target)?;
    let mut sorted = dens.clone();
    sorted.sort_by(f64::total_cmp);
    let rows: Vec<KhintchineRow> = eps_grid
        .iter()
        .map(|&eps| {
            let threshold = base.powi(4) - eps;
            let below = sorted.partition_point(|&d| d < threshold);
            KhintchineRow {
                eps,
                threshold,
                fraction: (dens.len() - below) as f64 / dens.len() as f64,
            }
        })
        .collect();
    let mut by_eps: Vec<&KhintchineRow> = rows.iter().collect();
    by_eps.sort_by(|a, b| a.eps.total_cmp(&b.eps));
    if by_eps.windows(2).any(|w| w[1].fraction < w[0].fraction) {
        return Err(LabError::invalid("khintchine fractions are not monotone in eps"));
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sequences::PolynomialZ;
    use crate::systems::Permutation;
    use proptest::prelude::*;

    fn rotation(q: usize, steps: &[i64]) -> FiniteSystem {
        let maps = steps
            .iter()
            .map(|&s| Permutation::new((0..q).map(|x| (x as i64 + s).rem_euclid(q as i64) as usize).collect()).unwrap())
            .collect();
        FiniteSystem::uniform(q, maps).unwrap()
    }

    fn random_subset(q: usize, density: f64, seed: u64) -> Vec<bool> {
        let mut rng = substream(seed, 0);
        (0..q).map(|_| rand::Rng::gen::<f64>(&mut rng) < density).collect()
    }

    #[test]
    fn triple_density_examples() {
        let sys = rotation(5, &[1, 2]);
        let a = vec![true, true, false, false, false];
        assert_eq!(triple_density(&sys, &a, 1).unwrap(), 0.0);
        let base = fsum(&[0.2, 0.2]);
        assert_eq!(triple_density(&sys, &a, 0).unwrap(), base);
        assert_eq!(triple_density(&sys, &[true; 5], 3).unwrap(), 1.0);
        // Shifts act through their residue.
        assert_eq!(triple_density(&sys, &a, 6).unwrap(), 0.0);
        assert_eq!(triple_density(&sys, &a, -4).unwrap(), 0.0);
        assert!(triple_density(&sys, &a[..3], 0).is_err());
    }

    #[test]
    fn corner_count_examples() {
        let full = PlaneSet::full(5).unwrap();
        for s in [0, 1, 3, -7] {
            assert_eq!(corner_count(&full, (1, 0), (0, 1), s), 25);
            assert_eq!(corner_count_fast(&full, (1, 0), (0, 1), s), 25);
        }
        let l = PlaneSet::from_points(7, &[(0, 0), (1, 0), (0, 1)]).unwrap();
        assert_eq!(corner_count(&l, (1, 0), (0, 1), 1), 1);
        assert_eq!(corner_count_fast(&l, (1, 0), (0, 1), 1), 1);
        assert_eq!(corner_count(&l, (1, 0), (0, 1), 14), 3);
    }

    #[test]
    fn accelerated_count_is_exact() {
        for q in [5usize, 17, 31, 64, 65, 130] {
            for k in 0..6u64 {
                let l = PlaneSet::random(q, 0.5, q as u64, k).unwrap();
                let v1 = (1 + k as i64, -2);
                let v2 = (3, k as i64);
                for s in [0i128, 1, 2, q as i128 - 1, 1_000_003] {
                    assert_eq!(corner_count(&l, v1, v2, s), corner_count_fast(&l, v1, v2, s));
                }
            }
        }
    }

    #[test]
    fn plane_json_round_trip() {
        let l = PlaneSet::random(9, 0.4, 2, 0).unwrap();
        let text = serde_json::to_string(&l).unwrap();
        let back: PlaneSet = serde_json::from_str(&text).unwrap();
        assert_eq!(back, l);
        assert!(serde_json::from_str::<PlaneSet>(r#"{"q":2,"rows":["10"]}"#).is_err());
        assert!(serde_json::from_str::<PlaneSet>(r#"{"q":2,"rows":["10","1x"]}"#).is_err());
    }

    #[test]
    fn whole_space_is_always_good() {
        let sys = rotation(7, &[1, 2]);
        let all = vec![true; 7];
        let seq: SequenceSpec = "poly: 0 0 1".parse().unwrap();
        let rep = popular_scan(&ScanTarget::System { sys: &sys, set: &all }, &seq, 50, 0.05).unwrap();
        assert_eq!(rep.good_set.len(), 50);
        assert_eq!(rep.max_gap, 1);
        assert_eq!(rep.lower_density_of_good_set, 1.0);
    }

    #[test]
    fn squares_on_z101_have_good_differences() {
        let sys = rotation(101, &[1, 2]);
        let seq: SequenceSpec = "poly: 0 0 1".parse().unwrap();
        for seed in 0..5 {
            let a = random_subset(101, 0.5, seed);
            let rep = popular_scan(&ScanTarget::System { sys: &sys, set: &a }, &seq, 101, 0.05).unwrap();
            assert!(rep.good_set.contains(&101));
            assert_eq!(rep.records[100].density, rep.base_density);
            assert!(rep.records.iter().all(|r| (0.0..=1.0).contains(&r.density)));
            assert_eq!(rep.raw_of(7), "49");
        }
    }

    impl CornerScanReport {
        fn raw_of(&self, n: u64) -> &str {
            &self.records[n as usize - 1].raw
        }
    }

    #[test]
    fn factorial_scheme_shifts_vanish() {
        let sys = rotation(12, &[1, 5]);
        let p = PolynomialZ::new(vec![-1, 0, 1]);
        let seq = SequenceSpec::factorial_auto(p, 4).unwrap();
        let a = random_subset(12, 0.5, 3);
        let rep = popular_scan(&ScanTarget::System { sys: &sys, set: &a }, &seq, 40, 0.1).unwrap();
        assert_eq!(rep.period, 12);
        assert!(rep.records.iter().all(|r| r.shift == 0 && r.density == rep.base_density));
    }

    #[test]
    fn plane_scan_matches_direct_counts() {
        let l = PlaneSet::random(13, 0.6, 8, 1).unwrap();
        let seq: SequenceSpec = "poly: 0 0 1".parse().unwrap();
        let target = ScanTarget::Plane { set: &l, v1: (1, 0), v2: (0, 1) };
        let rep = popular_scan(&target, &seq, 30, 0.2).unwrap();
        for r in &rep.records {
            let want = corner_count(&l, (1, 0), (0, 1), (r.n * r.n) as i128) as f64 / 169.0;
            assert_eq!(r.density, want);
        }
    }

    #[test]
    fn gaps_and_lower_density() {
        assert_eq!(max_gap(&[], 10), 11);
        assert_eq!(max_gap(&[3, 4, 9], 10), 5);
        assert_eq!(max_gap(&[1, 2, 3], 3), 1);
        assert_eq!(lower_density(&[1, 2, 3, 4, 5], 10), 0.5);
        assert_eq!(lower_density(&[], 10), 0.0);
    }

    #[test]
    fn khintchine_examples() {
        let sys = rotation(64, &[1, 2]);
        let seq: SequenceSpec = "poly: 0 0 1".parse().unwrap();
        let a = random_subset(64, 0.3, 4);
        let grid = [0.001, 0.005, 0.01, 0.02, 0.05, 1.0];
        let rows = khintchine_report(&sys, &a, &seq, 5000, &grid).unwrap();
        assert!(rows.windows(2).all(|w| w[1].fraction >= w[0].fraction));
        assert_eq!(rows[5].fraction, 1.0);
        // Brute force at 20 seeded n.
        let mu = triple_density(&sys, &a, 0).unwrap();
        let mut rng = substream(5, 0);
        for _ in 0..20 {
            let n: u64 = rand::Rng::gen_range(&mut rng, 1..=5000);
            let shift = (n as i128 * n as i128) % 64;
            let d = triple_density(&sys, &a, shift).unwrap();
            let direct = (0..64usize)
                .filter(|&x| a[x] && a[(x + shift as usize) % 64] && a[(x + 2 * shift as usize) % 64])
                .count() as f64
                / 64.0;
            assert!((d - direct).abs() < 1e-15);
            assert!(d >= mu.powi(4) - 1.0);
        }
        let empty = vec![false; 64];
        let rows = khintchine_report(&sys, &empty, &seq, 100, &[0.01, 0.5]).unwrap();
        assert!(rows.iter().all(|r| r.fraction == 1.0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn fast_count_equals_direct(q in 1usize..80, seed in 0u64..1000, s in -500i128..500,
                                    v in (-5i64..5, -5i64..5, -5i64..5, -5i64..5)) {
            let l = PlaneSet::random(q, 0.5, seed, 7).unwrap();
            let (v1, v2) = ((v.0, v.1), (v.2, v.3));
            prop_assert_eq!(corner_count(&l, v1, v2, s), corner_count_fast(&l, v1, v2, s));
        }

        #[test]
        fn zero_shift_counts_the_set(q in 1usize..40, seed in 0u64..1000) {
            let l = PlaneSet::random(q, 0.3, seed, 1).unwrap();
            prop_assert_eq!(corner_count_fast(&l, (2, 1), (1, 3), 0), l.len());
        }

        #[test]
        fn fractions_are_monotone(seed in 0u64..500, mut grid in proptest::collection::vec(0.0f64..1.0, 1..8)) {
            let sys = rotation(16, &[1, 3]);
            let seq: SequenceSpec = "poly: 0 0 1".parse().unwrap();
            let a = random_subset(16, 0.5, seed);
            let rows = khintchine_report(&sys, &a, &seq, 200, &grid).unwrap();
            grid.sort_by(f64::total_cmp);
            let mut fr: Vec<(f64, f64)> = rows.iter().map(|r| (r.eps, r.fraction)).collect();
            fr.sort_by(|a, b| a.0.total_cmp(&b.0));
            prop_assert!(fr.windows(2).all(|w| w[1].1 >= w[0].1));
        }
    }
}
