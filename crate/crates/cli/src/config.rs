//! Experiment configuration files.
//!
//! Grammar, one item per line:
//!
//! ```text
//! line    := blank | comment | header | entry
//! comment := ('#' | ';') any*
//! header  := '[' section ']'          section ∈ system, observables, experiment, output
//! entry   := key '=' value            value runs to the end of the line
//! ```
//!
//! Entries before the first header are filed under the section that owns the
//! key. Keys may appear once per section. Values are trimmed; internal runs
//! of whitespace are insignificant for the digest.

use std::collections::BTreeMap;
use std::path::Path;

use ergolab::sequences::SequenceSpec;
use ergolab::systems::{FiniteSystem, Lattice, Observable, Permutation};
use ergolab::{LabError, Result};
use num_complex::Complex64;

const SECTIONS: &[(&str, &[&str])] = &[
    ("system", &["system", "q", "d", "shifts", "maps"]),
    ("observables", &["f", "f0", "f1", "f2", "A"]),
    (
        "experiment",
        &["seq", "Ns", "windows", "words", "eps", "dirs", "p", "kmax", "beta", "alpha", "F", "v1", "v2", "N", "tolerance"],
    ),
    ("output", &["dir"]),
];

fn section_keys(section: &str) -> Option<&'static [&'static str]> {
    SECTIONS.iter().find(|(s, _)| *s == section).map(|(_, k)| *k)
}

fn owning_section(key: &str) -> Option<&'static str> {
    SECTIONS.iter().find(|(_, keys)| keys.contains(&key)).map(|(s, _)| *s)
}

fn parse_err(line: usize, field: &str, message: impl Into<String>) -> LabError {
    LabError::Parse { line, field: field.to_string(), message: message.into() }
}

/// `product_rotation` (translations of `Z_q^d`) or `permutations` (explicit
/// maps on `{0, .., m-1}` with uniform weight).
#[derive(Clone, Debug, PartialEq)]
pub enum SystemConfig {
    ProductRotation { q: u64, d: usize, shifts: Vec<Vec<i64>> },
    Permutations { maps: Vec<Vec<i64>> },
}

impl SystemConfig {
    /// Commutation and bijectivity are checked here, not in the parser.
    pub fn build(&self) -> Result<FiniteSystem> {
        match self {
            SystemConfig::ProductRotation { q, d, shifts } => FiniteSystem::product_rotation(*q, *d, shifts),
            SystemConfig::Permutations { maps } => {
                let m = self.points();
                let perms = maps
                    .iter()
                    .map(|row| {
                        let map = row
                            .iter()
                            .map(|&v| usize::try_from(v).map_err(|_| LabError::invalid(format!("negative image {v}"))))
                            .collect::<Result<Vec<_>>>()?;
                        Permutation::new(map)
                    })
                    .collect::<Result<Vec<_>>>()?;
                FiniteSystem::uniform(m, perms)
            }
        }
    }

    pub fn lattice(&self) -> Result<Lattice> {
        match self {
            SystemConfig::ProductRotation { q, d, .. } => Ok(Lattice { q: *q, d: *d }),
            SystemConfig::Permutations { .. } => Err(LabError::invalid("characters need a product_rotation system")),
        }
    }

    pub fn points(&self) -> usize {
        match self {
            SystemConfig::ProductRotation { q, d, .. } => (*q as usize).pow(*d as u32),
            SystemConfig::Permutations { maps } => maps.first().map_or(0, Vec::len),
        }
    }
}

/// A parsed configuration. `entries` keeps every `(section, key, value)` for
/// the digest.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ExperimentConfig {
    pub system: Option<SystemConfig>,
    pub observables: BTreeMap<String, ObservableSpec>,
    /// The set `A` for corner scans.
    pub set_a: Option<SetSpec>,
    pub seq: Option<SequenceSpec>,
    pub ns: Vec<u64>,
    pub windows: Vec<(u64, u64)>,
    pub tolerance: Option<f64>,
    pub eps: Option<f64>,
    pub out_dir: Option<String>,
    pub entries: Vec<(String, String, String)>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| LabError::invalid(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut section: Option<&'static str> = None;
        let mut seen: BTreeMap<(String, String), usize> = BTreeMap::new();
        let mut lines: BTreeMap<(String, String), usize> = BTreeMap::new();
        let mut entries = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name
                    .strip_suffix(']')
                    .ok_or_else(|| parse_err(line_no, name, "section header is missing `]`"))?
                    .trim();
                section = Some(
                    SECTIONS
                        .iter()
                        .find(|(s, _)| *s == name)
                        .map(|(s, _)| *s)
                        .ok_or_else(|| parse_err(line_no, name, "unknown section"))?,
                );
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| parse_err(line_no, line, "expected `key = value`"))?;
            let (key, value) = (key.trim(), value.trim());
            let sec = match section {
                Some(s) => {
                    if !section_keys(s).is_some_and(|k| k.contains(&key)) {
                        return Err(parse_err(line_no, key, format!("unknown key in section [{s}]")));
                    }
                    s
                }
                None => owning_section(key).ok_or_else(|| parse_err(line_no, key, "unknown key"))?,
            };
            if value.is_empty() {
                return Err(parse_err(line_no, key, "empty value"));
            }
            let id = (sec.to_string(), key.to_string());
            if let Some(prev) = seen.insert(id.clone(), line_no) {
                return Err(parse_err(line_no, key, format!("duplicate key, first set on line {prev}")));
            }
            lines.insert(id, line_no);
            entries.push((sec.to_string(), key.to_string(), value.to_string()));
        }
        Self::from_entries(entries, &lines)
    }

    fn from_entries(entries: Vec<(String, String, String)>, lines: &BTreeMap<(String, String), usize>) -> Result<Self> {
        let get = |sec: &str, key: &str| {
            entries
                .iter()
                .find(|(s, k, _)| s == sec && k == key)
                .map(|(_, _, v)| (v.as_str(), lines[&(sec.to_string(), key.to_string())]))
        };
        let mut cfg = ExperimentConfig::default();

        let sys_keys = ["system", "q", "d", "shifts", "maps"];
        if sys_keys.iter().any(|k| get("system", k).is_some()) {
            let need = |key: &str| get("system", key).ok_or_else(|| parse_err(0, key, "missing field in [system]"));
            let (kind, line) = need("system")?;
            cfg.system = Some(match kind {
                "product_rotation" => {
                    let (q, line) = need("q")?;
                    let q: u64 = q.parse().map_err(|_| parse_err(line, "q", "expected a positive integer"))?;
                    if q == 0 {
                        return Err(parse_err(line, "q", "q must be positive"));
                    }
                    let (d, line) = need("d")?;
                    let d: usize = d.parse().map_err(|_| parse_err(line, "d", "expected a positive integer"))?;
                    let (shifts, line) = need("shifts")?;
                    let shifts = parse_matrix(shifts).map_err(|m| parse_err(line, "shifts", m))?;
                    if shifts.iter().any(|r| r.len() != d) {
                        return Err(parse_err(line, "shifts", format!("every shift needs {d} entries")));
                    }
                    SystemConfig::ProductRotation { q, d, shifts }
                }
                "permutations" => {
                    let (maps, line) = need("maps")?;
                    let maps = parse_matrix(maps).map_err(|m| parse_err(line, "maps", m))?;
                    if maps.is_empty() || maps.iter().any(|r| r.len() != maps[0].len() || r.is_empty()) {
                        return Err(parse_err(line, "maps", "maps must be nonempty rows of equal length"));
                    }
                    SystemConfig::Permutations { maps }
                }
                _ => return Err(parse_err(line, "system", format!("unsupported system kind `{kind}`"))),
            });
        }

        for (sec, key, value) in &entries {
            let line = lines[&(sec.clone(), key.clone())];
            match (sec.as_str(), key.as_str()) {
                ("observables", "A") => {
                    cfg.set_a = Some(SetSpec::parse(value).map_err(|e| parse_err(line, "A", e.to_string()))?)
                }
                ("observables", k) => {
                    let spec = ObservableSpec::parse(value).map_err(|e| parse_err(line, k, e.to_string()))?;
                    cfg.observables.insert(k.to_string(), spec);
                }
                ("experiment", "seq") => {
                    cfg.seq = Some(value.parse().map_err(|e: LabError| parse_err(line, "seq", e.to_string()))?)
                }
                ("experiment", "Ns") => cfg.ns = parse_ns(value).map_err(|e| parse_err(line, "Ns", e.to_string()))?,
                ("experiment", "windows") => {
                    cfg.windows = parse_windows(value).map_err(|e| parse_err(line, "windows", e.to_string()))?
                }
                ("experiment", k @ ("tolerance" | "eps")) => {
                    let v: f64 = value.parse().map_err(|_| parse_err(line, k, "expected a number"))?;
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(parse_err(line, k, "must be positive"));
                    }
                    if k == "eps" {
                        cfg.eps = Some(v);
                    } else {
                        cfg.tolerance = Some(v);
                    }
                }
                ("output", "dir") => cfg.out_dir = Some(value.clone()),
                _ => {}
            }
        }
        cfg.entries = entries;
        Ok(cfg)
    }

    /// Raw value of an `[experiment]` key, for flags that default from it.
    pub fn experiment(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(s, k, _)| s == "experiment" && k == key)
            .map(|(_, _, v)| v.as_str())
    }

    /// `section.key=value` lines, sorted, with whitespace runs collapsed.
    pub fn canonical(&self) -> String {
        let mut lines: Vec<String> = self
            .entries
            .iter()
            .map(|(s, k, v)| format!("{s}.{k}={}", v.split_whitespace().collect::<Vec<_>>().join(" ")))
            .collect();
        lines.sort();
        lines.join("\n")
    }
}

/// `[[1,0],[0,1]]`.
pub fn parse_matrix(text: &str) -> std::result::Result<Vec<Vec<i64>>, String> {
    let compact: String = text.chars().filter(|c| !c.is_whitespace()).collect();
    let inner = compact
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or("expected a bracketed list of rows")?;
    if inner.is_empty() {
        return Ok(Vec::new());
    }
    let inner = inner
        .strip_prefix('[')
        .and_then(|s| s.strip_suffix(']'))
        .ok_or("expected rows like [1,0]")?;
    inner
        .split("],[")
        .map(|row| {
            row.split(',')
                .map(|v| v.parse::<i64>().map_err(|_| format!("bad integer `{v}`")))
                .collect()
        })
        .collect()
}

/// `10000,100000` with optional `1e6` style entries; must be sorted.
pub fn parse_ns(text: &str) -> Result<Vec<u64>> {
    let ns: Vec<u64> = text
        .split(',')
        .map(|t| parse_count(t.trim()))
        .collect::<Result<_>>()?;
    if ns.is_empty() || ns.contains(&0) {
        return Err(LabError::invalid("N ladder entries must be positive"));
    }
    if ns.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LabError::invalid("N ladder must be strictly increasing"));
    }
    Ok(ns)
}

/// A nonnegative integer, also accepting `10^6` and `1e6`.
pub fn parse_count(t: &str) -> Result<u64> {
    let bad = || LabError::invalid(format!("bad count `{t}`"));
    if let Ok(v) = t.parse::<u64>() {
        return Ok(v);
    }
    let (base, exp) = t.split_once('^').or_else(|| t.split_once(['e', 'E']).map(|(m, e)| (m, e))).ok_or_else(bad)?;
    let (base, exp): (u64, u32) = (base.parse().map_err(|_| bad())?, exp.parse().map_err(|_| bad())?);
    if t.contains('^') {
        base.checked_pow(exp).ok_or_else(bad)
    } else {
        10u64.checked_pow(exp).and_then(|p| p.checked_mul(base)).ok_or_else(bad)
    }
}

/// `M..N` windows meaning `[M, N)`, comma separated.
pub fn parse_windows(text: &str) -> Result<Vec<(u64, u64)>> {
    text.split(',')
        .map(|w| {
            let (a, b) = w
                .trim()
                .split_once("..")
                .ok_or_else(|| LabError::invalid(format!("window `{w}` is not `M..N`")))?;
            let (m, n) = (parse_count(a.trim())?, parse_count(b.trim())?);
            if m == 0 || n <= m {
                return Err(LabError::invalid(format!("window `{w}` must satisfy 1 <= M < N")));
            }
            Ok((m, n - 1))
        })
        .collect()
}

/// A subset of `{0, .., m-1}`: indices and half-open ranges (`0..5,9`) or
/// `random p=<density> [seed=<s>]`.
#[derive(Clone, Debug, PartialEq)]
pub enum SetSpec {
    Explicit(Vec<(usize, usize)>),
    Random { p: f64, seed: Option<u64> },
}

impl SetSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        if let Some(rest) = t.strip_prefix("random") {
            let kv = key_values(rest)?;
            let p: f64 = kv
                .get("p")
                .ok_or_else(|| LabError::invalid("random set needs p=<density>"))?
                .parse()
                .map_err(|_| LabError::invalid("bad density"))?;
            if !(0.0..=1.0).contains(&p) {
                return Err(LabError::invalid("density must lie in [0, 1]"));
            }
            let seed = kv.get("seed").map(|s| s.parse().map_err(|_| LabError::invalid("bad seed"))).transpose()?;
            return Ok(SetSpec::Random { p, seed });
        }
        let mut ranges = Vec::new();
        for part in t.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let bad = || LabError::invalid(format!("bad set element `{part}`"));
            match part.split_once("..") {
                Some((a, b)) => {
                    let (a, b): (usize, usize) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
                    if b < a {
                        return Err(bad());
                    }
                    ranges.push((a, b));
                }
                None => {
                    let a: usize = part.parse().map_err(|_| bad())?;
                    ranges.push((a, a + 1));
                }
            }
        }
        Ok(SetSpec::Explicit(ranges))
    }

    pub fn flags(&self, m: usize, default_seed: u64, stream: u64) -> Result<Vec<bool>> {
        match self {
            SetSpec::Explicit(ranges) => {
                let mut out = vec![false; m];
                for &(a, b) in ranges {
                    if b > m {
                        return Err(LabError::invalid(format!("set element {} outside 0..{m}", b - 1)));
                    }
                    out[a..b].iter_mut().for_each(|f| *f = true);
                }
                Ok(out)
            }
            SetSpec::Random { p, seed } => {
                let mut rng = ergolab::numeric::substream(seed.unwrap_or(default_seed), stream);
                Ok((0..m).map(|_| rand::Rng::gen::<f64>(&mut rng) < *p).collect())
            }
        }
    }
}

fn key_values(text: &str) -> Result<BTreeMap<String, String>> {
    text.split_whitespace()
        .map(|kv| {
            kv.split_once('=')
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .ok_or_else(|| LabError::invalid(format!("expected key=value, got `{kv}`")))
        })
        .collect()
}

/// `char k1 .. kd`, `indicator <set>`, `random-unimodular [seed=s]`,
/// `random-bounded [seed=s]`, `const re [im]`, `ones`.
#[derive(Clone, Debug, PartialEq)]
pub enum ObservableSpec {
    Character(Vec<i64>),
    Indicator(SetSpec),
    RandomUnimodular(Option<u64>),
    RandomBounded(Option<u64>),
    Constant(Complex64),
}

impl ObservableSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let t = text.trim();
        let (head, rest) = t.split_once(char::is_whitespace).unwrap_or((t, ""));
        let rest = rest.trim();
        let seed = |rest: &str| -> Result<Option<u64>> {
            key_values(rest)?
                .get("seed")
                .map(|s| s.parse().map_err(|_| LabError::invalid("bad seed")))
                .transpose()
        };
        match head {
            "char" => Ok(ObservableSpec::Character(
                rest.split_whitespace()
                    .map(|v| v.parse().map_err(|_| LabError::invalid(format!("bad frequency `{v}`"))))
                    .collect::<Result<_>>()?,
            )),
            "indicator" => Ok(ObservableSpec::Indicator(SetSpec::parse(rest)?)),
            "random-unimodular" => Ok(ObservableSpec::RandomUnimodular(seed(rest)?)),
            "random-bounded" => Ok(ObservableSpec::RandomBounded(seed(rest)?)),
            "ones" => Ok(ObservableSpec::Constant(Complex64::new(1.0, 0.0))),
            "const" => {
                let parts: Vec<f64> = rest
                    .split_whitespace()
                    .map(|v| v.parse().map_err(|_| LabError::invalid(format!("bad constant `{v}`"))))
                    .collect::<Result<_>>()?;
                match parts[..] {
                    [re] => Ok(ObservableSpec::Constant(Complex64::new(re, 0.0))),
                    [re, im] => Ok(ObservableSpec::Constant(Complex64::new(re, im))),
                    _ => Err(LabError::invalid("const takes one or two numbers")),
                }
            }
            _ => Err(LabError::invalid(format!("unknown observable kind `{head}`"))),
        }
    }

    /// Random kinds without an explicit seed draw from `(seed, stream)`.
    pub fn build(&self, sys: &SystemConfig, seed: u64, stream: u64) -> Result<Observable> {
        let m = sys.points();
        match self {
            ObservableSpec::Character(k) => Observable::character(sys.lattice()?, k),
            ObservableSpec::Indicator(set) => {
                let flags = set.flags(m, seed, stream)?;
                let idx: Vec<usize> = (0..m).filter(|&i| flags[i]).collect();
                Observable::indicator(m, &idx)
            }
            ObservableSpec::RandomUnimodular(s) => Ok(Observable::random_unimodular(m, s.unwrap_or(seed), stream)),
            ObservableSpec::RandomBounded(s) => Ok(Observable::random_bounded(m, s.unwrap_or(seed), stream)),
            ObservableSpec::Constant(c) => Ok(Observable::constant(m, *c)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "system = product_rotation\nq = 31\nd = 2\nshifts = [[1,0],[0,1]]\n";

    #[test]
    fn minimal_config_parses() {
        let cfg = ExperimentConfig::parse(MINIMAL).unwrap();
        let sys = cfg.system.unwrap();
        assert_eq!(sys, SystemConfig::ProductRotation { q: 31, d: 2, shifts: vec![vec![1, 0], vec![0, 1]] });
        assert_eq!(sys.build().unwrap().len(), 961);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = ExperimentConfig::parse("[system]\nshiftz = [[1]]\n").unwrap_err();
        match err {
            LabError::Parse { line, field, .. } => assert_eq!((line, field.as_str()), (2, "shiftz")),
            e => panic!("unexpected {e:?}"),
        }
        assert!(ExperimentConfig::parse("shiftz = 1").is_err());
    }

    #[test]
    fn sections_and_errors() {
        let text = "# lab config\n[system]\nsystem = product_rotation\nq = 12\nd = 1\nshifts = [[1],[5]]\n\n\
                    [observables]\nf0 = char 1\nf1 = indicator 0..3,7\nf2 = random-unimodular seed=7\nA = 0..6\n\
                    [experiment]\nseq = hardy: 1*t^1.5\nNs = 10^4, 1e5\nwindows = 1..101, 50..200\neps = 0.05\n\
                    [output]\ndir = out\n";
        let cfg = ExperimentConfig::parse(text).unwrap();
        assert_eq!(cfg.ns, vec![10_000, 100_000]);
        assert_eq!(cfg.windows, vec![(1, 100), (50, 199)]);
        assert_eq!(cfg.observables.len(), 3);
        assert_eq!(cfg.set_a, Some(SetSpec::Explicit(vec![(0, 6)])));
        assert_eq!(cfg.out_dir.as_deref(), Some("out"));
        assert!(matches!(ExperimentConfig::parse("[system]\nq = 0\n"), Err(LabError::Parse { .. })));
        assert!(matches!(ExperimentConfig::parse("[sys]\n"), Err(LabError::Parse { line: 1, .. })));
        assert!(matches!(ExperimentConfig::parse("q = 3\nq = 4\n"), Err(LabError::Parse { line: 2, .. })));
        assert!(matches!(ExperimentConfig::parse("[experiment]\nseq = bogus\n"), Err(LabError::Parse { line: 2, .. })));
        assert!(matches!(ExperimentConfig::parse("[experiment]\neps = -1\n"), Err(LabError::Parse { .. })));
    }

    #[test]
    fn non_commuting_maps_fail_at_construction() {
        // Transposition (0 1) and 3-cycle (0 1 2) on three points.
        let cfg = ExperimentConfig::parse("system = permutations\nmaps = [[1,0,2],[1,2,0]]\n").unwrap();
        let err = cfg.system.unwrap().build().unwrap_err();
        assert!(err.to_string().contains("do not commute"));
        let cfg = ExperimentConfig::parse("system = permutations\nmaps = [[1,2,0],[2,0,1]]\n").unwrap();
        assert_eq!(cfg.system.unwrap().build().unwrap().len(), 3);
        assert!(ExperimentConfig::parse("system = product_rotation\nq = 5\nd = 2\nshifts = [[1],[0,1]]\n").is_err());
    }

    #[test]
    fn canonical_form_ignores_order_and_spacing() {
        let a = ExperimentConfig::parse("q = 31\nd = 2\nsystem = product_rotation\nshifts = [[1,0],[0,1]]").unwrap();
        let b = ExperimentConfig::parse("[system]\n  shifts   =  [[1,0],[0,1]]\nsystem=product_rotation\nd=2\nq =31\n").unwrap();
        assert_eq!(a.canonical(), b.canonical());
    }

    #[test]
    fn set_and_observable_specs() {
        let s = SetSpec::parse("0..3, 7").unwrap();
        assert_eq!(s.flags(8, 0, 0).unwrap(), vec![true, true, true, false, false, false, false, true]);
        assert!(s.flags(5, 0, 0).is_err());
        let r = SetSpec::parse("random p=0.5 seed=3").unwrap();
        assert_eq!(r.flags(50, 0, 0).unwrap(), r.flags(50, 9, 0).unwrap());
        assert!(ObservableSpec::parse("wobble 1").is_err());
        let sys = SystemConfig::ProductRotation { q: 5, d: 1, shifts: vec![vec![1]] };
        let f = ObservableSpec::parse("const 0.5 -1").unwrap().build(&sys, 0, 0).unwrap();
        assert_eq!(f.values()[3], Complex64::new(0.5, -1.0));
    }

    #[test]
    fn counts() {
        assert_eq!(parse_count("10^6").unwrap(), 1_000_000);
        assert_eq!(parse_count("3e4").unwrap(), 30_000);
        assert!(parse_ns("100,10").is_err());
        assert!(parse_windows("5..5").is_err());
    }
}
