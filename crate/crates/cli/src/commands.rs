use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ergolab::corners::{corner_count_fast, khintchine_report, popular_scan, CornerScanReport, PlaneSet, ScanTarget};
use ergolab::finitary::{
    box_inverse_witness_with, default_growth, grid_box_norm_mc, grid_box_norm_power, regularity_decompose_with,
    u2_inverse_witness, BoxWitnessOptions, DirectionSet, GridFunction, RegularityOptions, DEFAULT_GRID_BUDGET,
};
use ergolab::numeric::{substream, Frac128};
use ergolab::seminorms::{
    box_seminorm, box_seminorm_power, cubic_measure, dual_of, join_expectation, magic_extension, SeminormSpec,
};
use ergolab::sequences::{find_nk, is_intersective_bounded, PolynomialZ, SequenceSpec};
use ergolab::systems::{FiniteSystem, Observable, SkewProductSystem, TransformationWord};
use ergolab::verify::{
    compare_averages, compare_averages_windows, compare_factorial, linear_control_check, nil_orbit_average,
    weyl_sum, IdentityReport, TrigPoly,
};
use ergolab::{LabError, Result};
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde_json::{json, Value};

use crate::config::{parse_count, parse_ns, parse_windows, ExperimentConfig, ObservableSpec, SetSpec, SystemConfig};
use crate::output::{num, Run};
use crate::{Cli, Command, CornersCommand, SeqCommand, SystemArgs, TripleArgs, VerifyCommand};

const DEFAULT_OUT_DIR: &str = "lab-out";

pub fn name(cmd: &Command) -> String {
    match cmd {
        Command::Seminorm(_) => "seminorm".into(),
        Command::Dual(_) => "dual".into(),
        Command::Cube(_) => "cube".into(),
        Command::Magic(_) => "magic".into(),
        Command::GridNorm(_) => "grid-norm".into(),
        Command::InverseWitness(_) => "inverse-witness".into(),
        Command::Regularity(_) => "regularity".into(),
        Command::Corners(c) => format!(
            "corners {}",
            match c {
                CornersCommand::Scan(_) => "scan",
                CornersCommand::Popular(_) => "popular",
                CornersCommand::Khintchine(_) => "khintchine",
                CornersCommand::Count(_) => "count",
            }
        ),
        Command::Verify(v) => format!(
            "verify {}",
            match v {
                VerifyCommand::Identity(_) => "identity",
                VerifyCommand::Factorial(_) => "factorial",
                VerifyCommand::Weyl(_) => "weyl",
                VerifyCommand::Nil(_) => "nil",
                VerifyCommand::Linear(_) => "linear",
            }
        ),
        Command::Seq(s) => format!(
            "seq {}",
            match s {
                SeqCommand::Nk(_) => "nk",
                SeqCommand::Eval(_) => "eval",
                SeqCommand::Residues(_) => "residues",
                SeqCommand::Intersective(_) => "intersective",
                SeqCommand::LogAway(_) => "log-away",
            }
        ),
    }
}

/// Shared state for one command.
struct Ctx<'a> {
    cfg: ExperimentConfig,
    seed: u64,
    run: Run,
    cli: &'a Cli,
}

pub fn run(cli: &Cli, argv: &[String]) -> Result<Value> {
    let cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
    let workers = cli.workers.unwrap_or_else(rayon::current_num_threads);
    let run = Run::new(argv, cli.seed, workers, out_dir)?;
    let mut ctx = Ctx { cfg, seed: cli.seed, run, cli };
    let summary = dispatch(&mut ctx)?;
    let Ctx { run, .. } = ctx;
    let elapsed = run.elapsed_ms();
    let summary = run.finish(&name(&cli.command), summary)?;
    if let Some(budget) = cli.budget_ms {
        if elapsed > budget as f64 {
            return Err(LabError::Budget { what: "wall clock (ms)".into(), needed: elapsed as u128, budget: budget as u128 });
        }
    }
    Ok(summary)
}

fn dispatch(ctx: &mut Ctx) -> Result<Value> {
    match &ctx.cli.command {
        Command::Seminorm(a) => seminorm(ctx, &a.sys, a.f.as_deref(), a.words.as_deref()),
        Command::Dual(a) => dual(ctx, &a.sys, a.f.as_deref(), a.words.as_deref()),
        Command::Cube(a) => cube(ctx, &a.base.sys, a.base.f.as_deref(), a.base.words.as_deref(), a.check_duality),
        Command::Magic(a) => magic(ctx, &a.sys, a.words.as_deref(), a.check_property, a.trials),
        Command::GridNorm(a) => grid_norm(ctx, &a.input, a.dirs.as_deref(), a.mc),
        Command::InverseWitness(a) => inverse_witness(ctx, &a.input, &a.kind, a.samples),
        Command::Regularity(a) => regularity(ctx, a.input.as_deref(), a.eps, a.n, a.ell, a.cap),
        Command::Corners(c) => match c {
            CornersCommand::Scan(a) => {
                corners_scan(ctx, &a.set, &a.v1, &a.v2, a.seq.as_deref(), a.n.as_deref(), a.eps)
            }
            CornersCommand::Popular(a) => {
                corners_popular(ctx, &a.sys, a.a.as_deref(), a.seq.as_deref(), a.n.as_deref(), a.eps)
            }
            CornersCommand::Khintchine(a) => {
                corners_khintchine(ctx, &a.sys, a.a.as_deref(), a.seq.as_deref(), a.n.as_deref(), &a.eps_grid)
            }
            CornersCommand::Count(a) => corners_count(ctx, &a.set, &a.v1, &a.v2, a.shift),
        },
        Command::Verify(v) => match v {
            VerifyCommand::Identity(a) => {
                verify_identity(ctx, &a.triple, a.seq.as_deref(), a.ns.as_deref(), a.windows.as_deref())
            }
            VerifyCommand::Factorial(a) => verify_factorial(ctx, &a.triple, a.p.as_deref(), a.kmax, &a.n),
            VerifyCommand::Weyl(a) => verify_weyl(ctx, a.seq.as_deref(), a.beta.as_deref(), a.ns.as_deref()),
            VerifyCommand::Nil(a) => {
                verify_nil(ctx, a.alpha.as_deref(), a.seq.as_deref(), a.ns.as_deref(), a.f.as_deref(), &a.x0)
            }
            VerifyCommand::Linear(a) => verify_linear(ctx, &a.triple, a.trials),
        },
        Command::Seq(s) => match s {
            SeqCommand::Nk(a) => seq_nk(ctx, &a.p, a.k),
            SeqCommand::Eval(a) => seq_eval(ctx, a.seq.as_deref(), a.from, a.to),
            SeqCommand::Residues(a) => seq_residues(ctx, a.seq.as_deref(), a.q, &a.n),
            SeqCommand::Intersective(a) => seq_intersective(ctx, &a.p, a.prime_bound, a.lift_bound),
            SeqCommand::LogAway(a) => seq_log_away(ctx, &a.seq),
        },
    }
}

// ---- argument helpers ----

fn missing(what: &str) -> LabError {
    LabError::invalid(format!("missing {what} (flag or config entry)"))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| LabError::invalid(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| LabError::invalid(format!("{}: {e}", path.display())))
}

/// The system, plus observables from the system file layered over the config.
struct SystemCtx {
    conf: SystemConfig,
    sys: FiniteSystem,
    observables: BTreeMap<String, ObservableSpec>,
    set_a: Option<SetSpec>,
}

impl Ctx<'_> {
    fn system(&self, args: &SystemArgs) -> Result<SystemCtx> {
        self.system_or(args, None)
    }

    fn system_or(&self, args: &SystemArgs, fallback: Option<SystemConfig>) -> Result<SystemCtx> {
        let file = args.system.as_deref().map(ExperimentConfig::load).transpose()?;
        let conf = file
            .as_ref()
            .and_then(|f| f.system.clone())
            .or_else(|| self.cfg.system.clone())
            .or(fallback)
            .ok_or_else(|| missing("system (--system or [system] in --config)"))?;
        let mut observables = self.cfg.observables.clone();
        let mut set_a = self.cfg.set_a.clone();
        if let Some(f) = file {
            observables.extend(f.observables);
            set_a = f.set_a.or(set_a);
        }
        let sys = conf.build()?;
        Ok(SystemCtx { conf, sys, observables, set_a })
    }

    fn seq(&self, flag: Option<&str>) -> Result<SequenceSpec> {
        match flag {
            Some(t) => t.parse(),
            None => self.cfg.seq.clone().ok_or_else(|| missing("--seq")),
        }
    }

    fn ns(&self, flag: Option<&str>) -> Result<Vec<u64>> {
        match flag {
            Some(t) => parse_ns(t),
            None if !self.cfg.ns.is_empty() => Ok(self.cfg.ns.clone()),
            None => Err(missing("--Ns")),
        }
    }

    fn count(&self, flag: Option<&str>, key: &str) -> Result<u64> {
        match flag.or_else(|| self.cfg.experiment(key)) {
            Some(t) => parse_count(t.trim()),
            None => Err(missing(&format!("--{key}"))),
        }
    }

    fn eps(&self, flag: Option<f64>, default: f64) -> f64 {
        flag.or(self.cfg.eps).unwrap_or(default)
    }

    fn text<'b>(&'b self, flag: Option<&'b str>, key: &str) -> Option<&'b str> {
        flag.or_else(|| self.cfg.experiment(key))
    }
}

/// A spec, the name of a configured observable, or the first configured name
/// in `defaults`; random unimodular from `(seed, stream)` otherwise.
fn observable(sc: &SystemCtx, flag: Option<&str>, defaults: &[&str], seed: u64, stream: u64) -> Result<Observable> {
    let spec = match flag {
        Some(t) => match sc.observables.get(t.trim()) {
            Some(s) => s.clone(),
            None => ObservableSpec::parse(t)?,
        },
        None => defaults
            .iter()
            .find_map(|k| sc.observables.get(*k).cloned())
            .unwrap_or(ObservableSpec::RandomUnimodular(None)),
    };
    spec.build(&sc.conf, seed, stream)
}

fn triple(ctx: &Ctx, sc: &SystemCtx, t: &TripleArgs) -> Result<[Observable; 3]> {
    Ok([
        observable(sc, t.f0.as_deref(), &["f0"], ctx.seed, 0)?,
        observable(sc, t.f1.as_deref(), &["f1"], ctx.seed, 1)?,
        observable(sc, t.f2.as_deref(), &["f2"], ctx.seed, 2)?,
    ])
}

fn words(ctx: &Ctx, flag: Option<&str>, l: usize) -> Result<SeminormSpec> {
    let text = ctx.text(flag, "words").ok_or_else(|| missing("--words"))?;
    SeminormSpec::parse(text, l)
}

fn vector(text: &str) -> Result<(i64, i64)> {
    let bad = || LabError::invalid(format!("expected `a,b`, got `{text}`"));
    let (a, b) = text.split_once(',').ok_or_else(bad)?;
    Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
}

/// A point of the circle: decimal, `p/q`, or `sqrt2m1`.
fn circle_point(text: &str) -> Result<Frac128> {
    let t = text.trim();
    if t == "sqrt2m1" {
        return Ok(Frac128::sqrt2_minus_1());
    }
    if let Some((p, q)) = t.split_once('/') {
        let bad = || LabError::invalid(format!("bad ratio `{t}`"));
        return Frac128::from_ratio(p.trim().parse().map_err(|_| bad())?, q.trim().parse().map_err(|_| bad())?);
    }
    let x: f64 = t.parse().map_err(|_| LabError::invalid(format!("bad real `{t}`")))?;
    if !x.is_finite() {
        return Err(LabError::invalid("circle points must be finite"));
    }
    Ok(Frac128::from_f64(x))
}

fn polynomial(text: &str) -> Result<PolynomialZ> {
    match format!("poly: {text}").parse::<SequenceSpec>()? {
        SequenceSpec::Polynomial(p) => Ok(p),
        _ => Err(LabError::invalid(format!("bad polynomial `{text}`"))),
    }
}

fn complex(z: Complex64) -> Value {
    json!([z.re, z.im])
}

fn u128_value(v: u128) -> Value {
    u64::try_from(v).map(Value::from).unwrap_or_else(|_| Value::from(v.to_string()))
}

// ---- seminorm family ----

fn seminorm(ctx: &mut Ctx, sa: &SystemArgs, f: Option<&str>, w: Option<&str>) -> Result<Value> {
    let sc = ctx.system(sa)?;
    let f = observable(&sc, f, &["f", "f0"], ctx.seed, 0)?;
    let spec = words(ctx, w, sc.sys.generator_count())?;
    let power = ctx.run.time("seminorm", || box_seminorm_power(&sc.sys, &f, &spec))?;
    let value = box_seminorm(&sc.sys, &f, &spec)?;
    let periods: Vec<u64> = spec.words.iter().map(|w| sc.sys.map_order(w)).collect::<Result<_>>()?;
    let body = json!({"value": value, "power": power, "s": spec.s(), "periods": periods});
    ctx.run.write_json("seminorm.json", body.clone())?;
    Ok(body)
}

fn dual(ctx: &mut Ctx, sa: &SystemArgs, f: Option<&str>, w: Option<&str>) -> Result<Value> {
    let sc = ctx.system(sa)?;
    let f = observable(&sc, f, &["f", "f0"], ctx.seed, 0)?;
    let spec = words(ctx, w, sc.sys.generator_count())?;
    let d = ctx.run.time("dual", || dual_of(&sc.sys, &f, &spec))?;
    let pairing = sc.sys.integral(&f.mul(&d));
    let power = box_seminorm_power(&sc.sys, &f, &spec)?;
    let residual = (pairing - Complex64::new(power, 0.0)).norm();
    let rows: Vec<Vec<String>> = d
        .values()
        .iter()
        .enumerate()
        .map(|(x, v)| vec![x.to_string(), num(v.re), num(v.im)])
        .collect();
    ctx.run.write_csv("dual.csv", &["x", "re", "im"], &rows)?;
    let body = json!({"s": spec.s(), "pairing": complex(pairing), "seminorm_power": power, "residual": residual});
    ctx.run.write_json("dual.json", body.clone())?;
    Ok(body)
}

fn cube(ctx: &mut Ctx, sa: &SystemArgs, f: Option<&str>, w: Option<&str>, check: bool) -> Result<Value> {
    let sc = ctx.system(sa)?;
    let f = observable(&sc, f, &["f", "f0"], ctx.seed, 0)?;
    let spec = words(ctx, w, sc.sys.generator_count())?;
    let cube = ctx.run.time("cubic_measure", || cubic_measure(&sc.sys, &spec.words))?;
    let tensor = cube.tensor_integral(&f);
    let mut body = json!({"s": spec.s(), "support": cube.len(), "tensor_integral": complex(tensor)});
    if check {
        let power = box_seminorm_power(&sc.sys, &f, &spec)?;
        let diff = (tensor - Complex64::new(power, 0.0)).norm();
        body["seminorm_power"] = json!(power);
        body["diff"] = json!(diff);
        body["duality_holds"] = json!(diff <= 1e-9);
    }
    ctx.run.write_json("cube.json", body.clone())?;
    Ok(body)
}

/// Values in `{±1, ±i, ±1 ± i, 0}`: dyadic, so conditional expectations over
/// classes of power-of-two size are exact.
pub fn dyadic_random(m: usize, seed: u64, stream: u64) -> Observable {
    let mut rng = substream(seed, stream);
    let mut pick = || rand::Rng::gen_range(&mut rng, -1i32..=1) as f64;
    Observable::from_values((0..m).map(|_| Complex64::new(pick(), pick()) * 0.5).collect())
}

fn magic(ctx: &mut Ctx, sa: &SystemArgs, w: Option<&str>, check: bool, trials: usize) -> Result<Value> {
    let sc = ctx.system(sa)?;
    let spec = words(ctx, w, sc.sys.generator_count())?;
    let cube = ctx.run.time("magic_extension", || magic_extension(&sc.sys, &spec.words))?;
    let s = spec.s();
    let mut body = json!({"s": s, "support": cube.len(), "generators": cube.lifted.len()});
    if check {
        let ext = cube.side_system()?;
        let unit = SeminormSpec::new((0..s).map(|i| TransformationWord::unit(s, i)).collect())?;
        let mut rows = Vec::new();
        let mut agree = 0;
        for t in 0..trials {
            let mut f = dyadic_random(cube.len(), ctx.seed, t as u64);
            if t % 2 == 1 {
                f = f.sub(&join_expectation(&ext, &f, ext.maps()));
            }
            let sem = box_seminorm(&ext, &f, &unit)?;
            let cond = ext.l2_norm(&join_expectation(&ext, &f, ext.maps()));
            let ok = (sem <= 1e-8) == (cond <= 1e-8);
            agree += ok as usize;
            rows.push(vec![t.to_string(), num(sem), num(cond), ok.to_string()]);
        }
        ctx.run.write_csv("magic.csv", &["trial", "seminorm", "factor_norm", "agree"], &rows)?;
        body["trials"] = json!(trials);
        body["agreements"] = json!(agree);
        body["property_holds"] = json!(agree == trials);
    }
    ctx.run.write_json("magic.json", body.clone())?;
    Ok(body)
}

// ---- finitary ----

fn grid_norm(ctx: &mut Ctx, input: &Path, dirs: Option<&str>, mc: Option<usize>) -> Result<Value> {
    let f: GridFunction = read_json(input)?;
    let dirs = match ctx.text(dirs, "dirs") {
        Some(t) => DirectionSet::parse(t, f.ell(), f.n())?,
        None => DirectionSet::inverse_theorem(f.ell(), f.n())?,
    };
    let body = match mc {
        Some(samples) => {
            let seed = ctx.seed;
            let r = ctx.run.time("grid_norm_mc", || grid_box_norm_mc(&f, &dirs, samples, seed))?;
            json!({"mode": "mc", "dirs": dirs.to_string(), "value": r.value, "power": r.power,
                   "stderr": r.stderr, "samples": r.samples})
        }
        None => {
            let p = ctx.run.time("grid_norm", || grid_box_norm_power(&f, &dirs, DEFAULT_GRID_BUDGET))?;
            json!({"mode": "exact", "dirs": dirs.to_string(), "value": p.powf(1.0 / (1u64 << dirs.s()) as f64), "power": p})
        }
    };
    ctx.run.write_json("grid_norm.json", body.clone())?;
    Ok(body)
}

fn inverse_witness(ctx: &mut Ctx, input: &Path, kind: &str, samples: usize) -> Result<Value> {
    let f: GridFunction = read_json(input)?;
    let seed = ctx.seed;
    let (full, body) = match kind {
        "u2" => {
            let w = ctx.run.time("u2_witness", || u2_inverse_witness(&f))?;
            let body = json!({"kind": "u2", "correlation": w.correlation, "delta": w.delta, "constant": w.constant});
            (serde_json::to_value(&w).expect("serializable"), body)
        }
        "box" => {
            let opts = BoxWitnessOptions { samples, seed, calibrate: true };
            let w = ctx.run.time("box_witness", || box_inverse_witness_with(&f, &opts))?;
            let body = json!({"kind": "box", "correlation": w.correlation, "anchor": w.anchor, "sampled": w.sampled,
                              "delta": w.delta, "constant": w.constant});
            (serde_json::to_value(&w).expect("serializable"), body)
        }
        _ => return Err(LabError::invalid(format!("unknown witness kind `{kind}` (box or u2)"))),
    };
    ctx.run.write_json("witness.json", full)?;
    Ok(body)
}

fn regularity(ctx: &mut Ctx, input: Option<&Path>, eps: Option<f64>, n: usize, ell: usize, cap: usize) -> Result<Value> {
    let f = match input {
        Some(p) => read_json::<GridFunction>(p)?,
        None => GridFunction::random_signs(ell, n, ctx.seed, 0)?,
    };
    let eps = ctx.eps(eps, 0.1);
    let opts = RegularityOptions { cap, ..RegularityOptions::default() };
    let out = ctx.run.time("regularity", || regularity_decompose_with(&f, eps, &default_growth, &opts))?;
    let c = &out.certificates;
    let body = json!({
        "eps": eps, "M": c.m, "atoms": out.f_str.atoms().len(), "sml_l2": c.sml_l2, "unif_norm": c.unif_norm,
        "unif_power": c.unif_power, "threshold": c.threshold, "rounds": c.rounds,
        "reconstruction_error": c.reconstruction_error,
        "sup_bounds": [out.f_str_grid.sup_bound(), out.f_sml.sup_bound(), out.f_unif.sup_bound()],
    });
    let mut full = body.clone();
    full["certificates"] = serde_json::to_value(c).expect("serializable");
    ctx.run.write_json("regularity.json", full)?;
    for (name, g) in [("f_str.json", &out.f_str_grid), ("f_sml.json", &out.f_sml), ("f_unif.json", &out.f_unif)] {
        ctx.run.write_json(name, serde_json::to_value(g).expect("serializable"))?;
    }
    Ok(body)
}

// ---- corners ----

fn scan_outputs(ctx: &mut Ctx, rep: &CornerScanReport, base: &str) -> Result<Value> {
    let rows: Vec<Vec<String>> = rep
        .records
        .iter()
        .map(|r| vec![r.n.to_string(), r.shift.to_string(), num(r.density), r.above_threshold.to_string()])
        .collect();
    ctx.run.write_csv(&format!("{base}.csv"), &["n", "shift", "density", "above_threshold"], &rows)?;
    let body = json!({
        "period": rep.period, "base_density": rep.base_density, "eps": rep.eps, "threshold": rep.threshold,
        "good_count": rep.good_set.len(), "max_gap": rep.max_gap,
        "lower_density_of_good_set": rep.lower_density_of_good_set,
    });
    let mut full = body.clone();
    full["good_set"] = json!(rep.good_set);
    ctx.run.write_json(&format!("{base}.json"), full)?;
    Ok(body)
}

fn corners_scan(
    ctx: &mut Ctx,
    set: &Path,
    v1: &str,
    v2: &str,
    seq: Option<&str>,
    n: Option<&str>,
    eps: Option<f64>,
) -> Result<Value> {
    let l: PlaneSet = read_json(set)?;
    let (v1, v2) = (vector(v1)?, vector(v2)?);
    let seq = ctx.seq(seq)?;
    let n = ctx.count(n, "N")?;
    let eps = ctx.eps(eps, 0.05);
    let target = ScanTarget::Plane { set: &l, v1, v2 };
    let rep = ctx.run.time("scan", || popular_scan(&target, &seq, n, eps))?;
    scan_outputs(ctx, &rep, "corners_scan")
}

fn set_flags(ctx: &Ctx, sc: &SystemCtx, a: Option<&str>) -> Result<Vec<bool>> {
    let spec = match a {
        Some(t) => SetSpec::parse(t)?,
        None => sc.set_a.clone().ok_or_else(|| missing("--A"))?,
    };
    spec.flags(sc.sys.len(), ctx.seed, 0)
}

fn corners_popular(
    ctx: &mut Ctx,
    sa: &SystemArgs,
    a: Option<&str>,
    seq: Option<&str>,
    n: Option<&str>,
    eps: Option<f64>,
) -> Result<Value> {
    let sc = ctx.system(sa)?;
    let flags = set_flags(ctx, &sc, a)?;
    let seq = ctx.seq(seq)?;
    let n = ctx.count(n, "N")?;
    let eps = ctx.eps(eps, 0.05);
    let target = ScanTarget::System { sys: &sc.sys, set: &flags };
    let rep = ctx.run.time("scan", || popular_scan(&target, &seq, n, eps))?;
    scan_outputs(ctx, &rep, "corners_popular")
}

fn corners_khintchine(
    ctx: &mut Ctx,
    sa: &SystemArgs,
    a: Option<&str>,
    seq: Option<&str>,
    n: Option<&str>,
    grid: &str,
) -> Result<Value> {
    let sc = ctx.system(sa)?;
    let flags = set_flags(ctx, &sc, a)?;
    let seq = ctx.seq(seq)?;
    let n = ctx.count(n, "N")?;
    let grid: Vec<f64> = grid
        .split(',')
        .map(|t| t.trim().parse().map_err(|_| LabError::invalid(format!("bad eps `{t}`"))))
        .collect::<Result<_>>()?;
    let rows = ctx.run.time("khintchine", || khintchine_report(&sc.sys, &flags, &seq, n, &grid))?;
    let csv: Vec<Vec<String>> = rows.iter().map(|r| vec![num(r.eps), num(r.threshold), num(r.fraction)]).collect();
    ctx.run.write_csv("khintchine.csv", &["eps", "threshold", "fraction"], &csv)?;
    let body = json!({"N": n, "rows": rows});
    ctx.run.write_json("khintchine.json", body.clone())?;
    Ok(body)
}

fn corners_count(ctx: &mut Ctx, set: &Path, v1: &str, v2: &str, shift: i128) -> Result<Value> {
    let l: PlaneSet = read_json(set)?;
    let (v1, v2) = (vector(v1)?, vector(v2)?);
    let count = corner_count_fast(&l, v1, v2, shift);
    let body = json!({"q": l.q(), "size": l.len(), "shift": shift.to_string(), "count": count});
    ctx.run.write_json("corners_count.json", body.clone())?;
    Ok(body)
}

// ---- verify ----

fn identity_outputs(ctx: &mut Ctx, rep: &IdentityReport, base: &str) -> Result<Value> {
    let rows: Vec<Vec<String>> = rep
        .records
        .iter()
        .map(|r| {
            vec![
                r.n.to_string(),
                num(r.abs_diff),
                r.start.to_string(),
                num(r.avg_along_a.re),
                num(r.avg_along_a.im),
                num(r.avg_along_id.re),
                num(r.avg_along_id.im),
            ]
        })
        .collect();
    ctx.run.write_csv(
        &format!("{base}.csv"),
        &["N", "diff", "start", "avg_a_re", "avg_a_im", "avg_id_re", "avg_id_im"],
        &rows,
    )?;
    ctx.run.write_json(&format!("{base}.json"), serde_json::to_value(rep).expect("serializable"))?;
    Ok(json!({"final_diff": rep.final_diff, "trend": rep.extrapolation_trend, "points": rep.records.len()}))
}

fn verify_identity(
    ctx: &mut Ctx,
    t: &TripleArgs,
    seq: Option<&str>,
    ns: Option<&str>,
    windows: Option<&str>,
) -> Result<Value> {
    let sc = ctx.system(&t.sys)?;
    let [f0, f1, f2] = triple(ctx, &sc, t)?;
    let seq = ctx.seq(seq)?;
    let windows = match windows {
        Some(w) => Some(parse_windows(w)?),
        None if ns.is_none() && !ctx.cfg.windows.is_empty() => Some(ctx.cfg.windows.clone()),
        None => None,
    };
    let rep = match windows {
        Some(w) => ctx.run.time("compare", || compare_averages_windows(&sc.sys, &f0, &f1, &f2, &seq, &w))?,
        None => {
            let ns = ctx.ns(ns)?;
            ctx.run.time("compare", || compare_averages(&sc.sys, &f0, &f1, &f2, &seq, &ns))?
        }
    };
    identity_outputs(ctx, &rep, "identity")
}

fn verify_factorial(ctx: &mut Ctx, t: &TripleArgs, p: Option<&str>, kmax: Option<u32>, n: &str) -> Result<Value> {
    let z12 = SystemConfig::ProductRotation { q: 12, d: 1, shifts: vec![vec![1], vec![5]] };
    let sc = ctx.system_or(&t.sys, Some(z12))?;
    let [f0, f1, f2] = triple(ctx, &sc, t)?;
    let p = polynomial(ctx.text(p, "p").ok_or_else(|| missing("--p"))?)?;
    let kmax = match kmax {
        Some(k) => k,
        None => ctx.cfg.experiment("kmax").map_or(Ok(6), |v| {
            v.parse().map_err(|_| LabError::invalid(format!("bad kmax `{v}`")))
        })?,
    };
    if kmax == 0 {
        return Err(LabError::invalid("kmax must be at least 1"));
    }
    let n = parse_count(n)?;
    let ks: Vec<u32> = (1..=kmax).collect();
    let rep = ctx.run.time("factorial", || compare_factorial(&sc.sys, &f0, &f1, &f2, &p, &ks, n))?;
    let rows: Vec<Vec<String>> = rep
        .records
        .iter()
        .map(|r| vec![r.k.to_string(), r.n_k.to_string(), n.to_string(), num(r.report.final_diff)])
        .collect();
    ctx.run.write_csv("factorial.csv", &["k", "n_k", "N", "diff"], &rows)?;
    ctx.run.write_json("factorial.json", serde_json::to_value(&rep).expect("serializable"))?;
    let diffs: Vec<f64> = rep.records.iter().map(|r| r.report.final_diff).collect();
    Ok(json!({"N": n, "diffs": diffs, "k_trend": rep.k_trend}))
}

fn verify_weyl(ctx: &mut Ctx, seq: Option<&str>, beta: Option<&str>, ns: Option<&str>) -> Result<Value> {
    let seq = ctx.seq(seq)?;
    let beta = circle_point(ctx.text(beta, "beta").ok_or_else(|| missing("--beta"))?)?;
    let ns = ctx.ns(ns)?;
    let rep = ctx.run.time("weyl", || weyl_sum(&seq, beta, &ns))?;
    let rows: Vec<Vec<String>> = rep.records.iter().map(|r| vec![r.n.to_string(), num(r.magnitude)]).collect();
    ctx.run.write_csv("weyl.csv", &["N", "magnitude"], &rows)?;
    let body = serde_json::to_value(&rep).expect("serializable");
    ctx.run.write_json("weyl.json", body)?;
    Ok(json!({"beta": rep.beta, "final_magnitude": rep.records.last().map(|r| r.magnitude),
              "classification": rep.classification}))
}

fn verify_nil(
    ctx: &mut Ctx,
    alpha: Option<&str>,
    seq: Option<&str>,
    ns: Option<&str>,
    f: Option<&str>,
    x0: &str,
) -> Result<Value> {
    let alpha = circle_point(ctx.text(alpha, "alpha").unwrap_or("sqrt2m1"))?;
    let seq = ctx.seq(seq)?;
    let ns = ctx.ns(ns)?;
    let f = TrigPoly::parse(ctx.text(f, "F").unwrap_or("1*(1,0) + 1*(0,1)"))?;
    let (x, y) = x0.split_once(',').ok_or_else(|| LabError::invalid("--x0 must be `x,y`"))?;
    let skew = SkewProductSystem::new(alpha, (circle_point(x)?, circle_point(y)?));
    let rep = ctx.run.time("nil", || nil_orbit_average(&skew, &f, &seq, &ns))?;
    identity_outputs(ctx, &rep, "nil")
}

fn verify_linear(ctx: &mut Ctx, t: &TripleArgs, trials: usize) -> Result<Value> {
    let sc = ctx.system(&t.sys)?;
    let [f0, f1, f2] = triple(ctx, &sc, t)?;
    let first = linear_control_check(&sc.sys, &f0, &f1, &f2)?;
    let mut rows = vec![vec!["0".into(), num(first.lhs), num(first.rhs), first.holds().to_string()]];
    let mut all = first.holds();
    let m = sc.sys.len();
    for i in 0..trials {
        let s = 3 * (i as u64 + 1);
        let fs: Vec<Observable> = (0..3).map(|j| Observable::random_unimodular(m, ctx.seed, s + j)).collect();
        let lc = linear_control_check(&sc.sys, &fs[0], &fs[1], &fs[2])?;
        all &= lc.holds();
        rows.push(vec![(i + 1).to_string(), num(lc.lhs), num(lc.rhs), lc.holds().to_string()]);
    }
    ctx.run.write_csv("linear.csv", &["trial", "lhs", "rhs", "holds"], &rows)?;
    let body = json!({"lhs": first.lhs, "rhs": first.rhs, "seminorms": first.seminorms, "holds": first.holds(),
                      "trials": trials, "all_hold": all});
    ctx.run.write_json("linear.json", body.clone())?;
    Ok(body)
}

// ---- sequences ----

fn seq_nk(ctx: &mut Ctx, p: &str, k: u32) -> Result<Value> {
    let poly = polynomial(p)?;
    let nk = find_nk(&poly, k)?;
    let body = json!({"n_k": u128_value(nk), "p": poly.to_string(), "k": k});
    ctx.run.write_json("seq_nk.json", body.clone())?;
    Ok(body)
}

fn seq_eval(ctx: &mut Ctx, seq: Option<&str>, from: u64, to: u64) -> Result<Value> {
    let seq = ctx.seq(seq)?;
    if from == 0 || to < from || to - from > 1_000_000 {
        return Err(LabError::invalid("need 1 <= from <= to with at most 10^6 terms"));
    }
    let rows: Vec<Vec<String>> = (from..=to)
        .map(|n| Ok(vec![n.to_string(), seq.eval(n)?.to_string()]))
        .collect::<Result<_>>()?;
    ctx.run.write_csv("seq_eval.csv", &["n", "a"], &rows)?;
    let shown: Vec<&str> = rows.iter().take(20).map(|r| r[1].as_str()).collect();
    Ok(json!({"from": from, "to": to, "values": shown, "truncated": rows.len() > 20}))
}

fn seq_residues(ctx: &mut Ctx, seq: Option<&str>, q: u64, n: &str) -> Result<Value> {
    let seq = ctx.seq(seq)?;
    let n = parse_count(n)?;
    let hist = ctx.run.time("residues", || seq.residue_distribution(q, n))?;
    let rows: Vec<Vec<String>> = hist.iter().enumerate().map(|(r, c)| vec![r.to_string(), c.to_string()]).collect();
    ctx.run.write_csv("residues.csv", &["residue", "count"], &rows)?;
    let body = json!({"q": q, "N": n, "counts": hist});
    ctx.run.write_json("residues.json", body.clone())?;
    Ok(body)
}

fn seq_intersective(ctx: &mut Ctx, p: &str, prime_bound: u64, lift_bound: u32) -> Result<Value> {
    let poly = polynomial(p)?;
    let verdict = is_intersective_bounded(&poly, prime_bound, lift_bound)?;
    let body = json!({"p": poly.to_string(), "verdict": verdict});
    ctx.run.write_json("intersective.json", body.clone())?;
    Ok(body)
}

fn seq_log_away(ctx: &mut Ctx, seq: &str) -> Result<Value> {
    let SequenceSpec::Hardy(h) = seq.parse::<SequenceSpec>()? else {
        return Err(LabError::invalid("log-away classification needs a hardy: sequence"));
    };
    let body = json!({"classification": h.classify_log_away()});
    ctx.run.write_json("log_away.json", body.clone())?;
    Ok(body)
}
