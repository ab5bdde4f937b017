use std::fs;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use quasitile_core::density::{check_core_lemma, e_core, lower_density_over_window, Window};
use quasitile_core::folner::{self, FolnerFamily};
use quasitile_core::quasitiling::{
    self, absorb_lower_tiles, disjointify, eps_disjoint_check, greedy_construct, maximal_marker_set,
    maximality_violations, verify_marker_set, Level, Quasitiling, TileLevel,
};
use quasitile_core::rational::{check_unit_interval, parse_rational, to_f64, Fraction, Rational};
use quasitile_core::symbolic::{
    bernoulli_entropy_exact, empirical_entropy_rate, pattern_frequency, shannon_entropy, verify_frequency_lemma,
    Configuration, Distribution, Pattern,
};
use quasitile_core::verify;
use quasitile_core::{Error, FiniteSubset, GroupElement, GroupSpec};

const THREADS_ENV: &str = "QUASITILE_THREADS";

/// Følner sets, Banach densities and quasitilings for Z^d and the Heisenberg group.
///
/// Set-valued arguments take inline JSON (an array of coordinate arrays) or
/// `@path` to read the JSON from a file. Reports are JSON on stdout.
#[derive(Debug, Parser, Serialize)]
#[command(name = "quasitile", version)]
struct Cli {
    /// Seed for every randomized step (ChaCha8, one stream per trial).
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "command")]
enum Command {
    /// Multiply or invert group elements.
    Group(GroupArgs),
    /// Følner boxes and their invariance defects.
    #[command(subcommand)]
    Folner(FolnerCmd),
    /// Lower density of a set over a window, or the E-core of a set.
    Density(DensityArgs),
    /// Build, check and transform quasitilings.
    #[command(subcommand)]
    Quasitile(QuasitileCmd),
    /// Maximal disjoint packing of translates of a box.
    Marker(MarkerArgs),
    /// Block frequencies and the frequency-averaging check.
    #[command(subcommand)]
    Freq(FreqCmd),
    /// Shannon, Bernoulli block and empirical entropies.
    #[command(subcommand)]
    Entropy(EntropyCmd),
    /// Seeded randomized verification suites.
    Verify(VerifyArgs),
}

#[derive(Debug, Args, Serialize)]
struct GroupArgs {
    /// z1, z2, zd:N or h3.
    #[arg(long)]
    group: GroupSpec,
    /// mul or inv.
    #[arg(long, default_value = "mul")]
    op: String,
    /// First operand as a JSON coordinate array.
    #[arg(long)]
    a: String,
    /// Second operand (mul only).
    #[arg(long)]
    b: Option<String>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "action")]
enum FolnerCmd {
    /// Defect |F_n Δ E F_n| / |F_n| for n in a range.
    Scan(FolnerScanArgs),
    /// Smallest n with F_n (E, δ)-invariant.
    Find(FolnerFindArgs),
}

#[derive(Debug, Args, Serialize)]
struct FolnerScanArgs {
    #[arg(long)]
    group: GroupSpec,
    /// Finite set E; defaults to the identity and the generators with inverses.
    #[arg(long)]
    e: Option<String>,
    #[arg(long, default_value_t = 1)]
    n_min: u64,
    #[arg(long)]
    n_max: u64,
    /// Also write the table as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct FolnerFindArgs {
    #[arg(long)]
    group: GroupSpec,
    #[arg(long)]
    e: Option<String>,
    /// Invariance threshold (rational, e.g. 1/10 or 0.1).
    #[arg(long)]
    delta: String,
    #[arg(long, default_value_t = 1000)]
    n_max: u64,
}

#[derive(Debug, Args, Serialize)]
struct DensityArgs {
    #[arg(long)]
    group: GroupSpec,
    /// The set H.
    #[arg(long)]
    h: String,
    /// Side of the box test shape F = [0, side)^d (Heisenberg: [0,s)²×[0,s²)).
    #[arg(long, conflicts_with = "f")]
    f_side: Option<i64>,
    /// Explicit test shape F.
    #[arg(long)]
    f: Option<String>,
    /// Side of the box window [0, window)^d.
    #[arg(long)]
    window: i64,
    /// Report the E-core of H instead of its density.
    #[arg(long)]
    core: Option<String>,
    /// With --core: also check the core lemma at this ε.
    #[arg(long, requires = "core")]
    eps: Option<String>,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "action")]
enum QuasitileCmd {
    /// Greedy maximal ε-disjoint quasitiling of a box window.
    Build(BuildArgs),
    /// Exact ε-disjointness (and maximality) of a stored quasitiling.
    Check(CheckArgs),
    /// Make a stored quasitiling exactly disjoint.
    Disjointify(DisjointifyArgs),
    /// Grow a set by absorbing every meeting tile of lower levels.
    Absorb(AbsorbArgs),
    /// Same as the top-level `marker` command.
    Marker(MarkerArgs),
}

#[derive(Debug, Args, Serialize)]
struct BuildArgs {
    #[arg(long)]
    group: GroupSpec,
    /// Side of the box window.
    #[arg(long)]
    window: i64,
    /// Comma-separated box sides, increasing (e.g. 4,8).
    #[arg(long, value_delimiter = ',', required = true)]
    shapes: Vec<i64>,
    #[arg(long)]
    eps: String,
    /// Where to write the quasitiling JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct CheckArgs {
    /// Quasitiling JSON (inline or @path).
    #[arg(long)]
    tiling: String,
    #[arg(long)]
    eps: String,
}

#[derive(Debug, Args, Serialize)]
struct DisjointifyArgs {
    #[arg(long)]
    tiling: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct AbsorbArgs {
    /// JSON object {group, s_tilde, lower: [{shape, centers}, ...]}, highest level first.
    #[arg(long)]
    input: String,
}

#[derive(Debug, Args, Serialize)]
struct MarkerArgs {
    #[arg(long)]
    group: GroupSpec,
    #[arg(long)]
    window: i64,
    /// Side of the packed box F.
    #[arg(long)]
    side: i64,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "action")]
enum FreqCmd {
    /// fr_P(Q): share of positions in P's domain where Q occurs.
    Count(FreqCountArgs),
    /// Block frequency in y(F) versus the tile average.
    Lemma(FreqLemmaArgs),
}

#[derive(Debug, Args, Serialize)]
struct FreqCountArgs {
    #[arg(long)]
    group: GroupSpec,
    /// Pattern JSON {domain, alphabet, values}.
    #[arg(long)]
    p: String,
    #[arg(long)]
    q: String,
}

#[derive(Debug, Args, Serialize)]
struct FreqLemmaArgs {
    /// Configuration JSON, or @path to JSON or binary (.qtcf).
    #[arg(long)]
    config: String,
    #[arg(long)]
    tiling: String,
    #[arg(long)]
    q: String,
    /// The set F (defaults to the whole window).
    #[arg(long)]
    f: Option<String>,
    #[arg(long)]
    eps: String,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(rename_all = "kebab-case", tag = "action")]
enum EntropyCmd {
    /// H(p) in nats.
    Shannon(ShannonArgs),
    /// Exact H(F_n)/|F_n| for i.i.d. symbols.
    Bernoulli(BernoulliArgs),
    /// Plug-in block entropy rate of a configuration.
    Rate(RateArgs),
}

#[derive(Debug, Args, Serialize)]
struct ShannonArgs {
    /// Comma-separated probabilities.
    #[arg(long, value_delimiter = ',', required = true)]
    p: Vec<f64>,
}

#[derive(Debug, Args, Serialize)]
struct BernoulliArgs {
    #[arg(long, value_delimiter = ',', required = true)]
    p: Vec<f64>,
    #[arg(long)]
    group: GroupSpec,
    #[arg(long)]
    side: i64,
}

#[derive(Debug, Args, Serialize)]
struct RateArgs {
    #[arg(long)]
    config: String,
    #[arg(long)]
    side: i64,
}

#[derive(Debug, Args, Serialize)]
struct VerifyArgs {
    /// core-lemma, core-composition, boundary-lemma, large-core, absorb,
    /// bernoulli-entropy, frequency-lemma, quasitiling-random, quasitiling-boxes.
    suite: String,
    /// z1 or z2 for core-lemma (alternates when omitted); any group for the
    /// quasitiling suites (default z2); ignored elsewhere.
    #[arg(long)]
    group: Option<GroupSpec>,
    #[arg(long, default_value_t = 100)]
    trials: u64,
    /// Fixed ε for core-lemma (drawn per trial when omitted).
    #[arg(long)]
    eps: Option<String>,
}

/// Everything a report needs to be reproduced.
#[derive(Debug, Serialize)]
struct RunConfig<'a> {
    seed: u64,
    threads: usize,
    rng: &'static str,
    #[serde(flatten)]
    command: &'a Command,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let threads = match configure_threads() {
        Ok(t) => t,
        Err(e) => return fail(&e),
    };
    let config = RunConfig {
        seed: cli.seed,
        threads,
        rng: "ChaCha8",
        command: &cli.command,
    };
    match dispatch(&cli) {
        Ok(result) => {
            let report = json!({ "config": config, "result": result });
            let mut out = io::stdout().lock();
            let text = serde_json::to_string_pretty(&report).expect("reports are valid JSON");
            if writeln!(out, "{text}").is_err() {
                return ExitCode::from(1);
            }
            ExitCode::SUCCESS
        }
        Err(e) => fail(&e),
    }
}

fn fail(e: &Error) -> ExitCode {
    eprintln!("quasitile: {e}");
    match e {
        Error::Capacity { .. } => ExitCode::from(3),
        _ => ExitCode::from(2),
    }
}

fn configure_threads() -> Result<usize> {
    let requested = match std::env::var(THREADS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| Error::Domain(format!("{THREADS_ENV} must be a non-negative integer, got `{v}`")))?,
        Err(_) => 0,
    };
    if requested > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(requested)
            .build_global()
            .map_err(|e| Error::Domain(format!("thread pool: {e}")))?;
    }
    Ok(requested)
}

type Result<T> = std::result::Result<T, Error>;

fn dispatch(cli: &Cli) -> Result<Value> {
    match &cli.command {
        Command::Group(a) => group_cmd(a),
        Command::Folner(FolnerCmd::Scan(a)) => folner_scan(a),
        Command::Folner(FolnerCmd::Find(a)) => folner_find(a),
        Command::Density(a) => density_cmd(a),
        Command::Quasitile(QuasitileCmd::Build(a)) => build_cmd(a),
        Command::Quasitile(QuasitileCmd::Check(a)) => check_cmd(a),
        Command::Quasitile(QuasitileCmd::Disjointify(a)) => disjointify_cmd(a),
        Command::Quasitile(QuasitileCmd::Absorb(a)) => absorb_cmd(a),
        Command::Quasitile(QuasitileCmd::Marker(a)) | Command::Marker(a) => marker_cmd(a),
        Command::Freq(FreqCmd::Count(a)) => freq_count(a),
        Command::Freq(FreqCmd::Lemma(a)) => freq_lemma(a),
        Command::Entropy(EntropyCmd::Shannon(a)) => {
            let d = Distribution::new(a.p.clone())?;
            Ok(json!({ "entropy": shannon_entropy(&d) }))
        }
        Command::Entropy(EntropyCmd::Bernoulli(a)) => {
            let d = Distribution::new(a.p.clone())?;
            let f = verify::box_shape(a.group, positive("side", a.side)?)?;
            let exact = bernoulli_entropy_exact(&d, &f)?;
            Ok(json!({ "h_n": exact, "h": shannon_entropy(&d), "cells": f.len() }))
        }
        Command::Entropy(EntropyCmd::Rate(a)) => {
            let y = load_configuration(&a.config)?;
            let f = verify::box_shape(y.window().group(), positive("side", a.side)?)?;
            Ok(serde_json::to_value(empirical_entropy_rate(&y, &f)?).expect("serializable"))
        }
        Command::Verify(a) => verify_cmd(a, cli.seed),
    }
}

// ---------------------------------------------------------------------------
// input helpers

fn read_arg(s: &str) -> Result<String> {
    match s.strip_prefix('@') {
        Some(path) => fs::read_to_string(path).map_err(|e| Error::Format(format!("reading {path}: {e}"))),
        None => Ok(s.to_string()),
    }
}

fn json_arg(s: &str) -> Result<Value> {
    let text = read_arg(s)?;
    serde_json::from_str(&text).map_err(|e| Error::Format(format!("invalid JSON: {e}")))
}

fn set_arg(group: GroupSpec, s: &str) -> Result<FiniteSubset> {
    FiniteSubset::from_json(group, &json_arg(s)?)
}

fn element_arg(group: GroupSpec, s: &str) -> Result<GroupElement> {
    let coords: Vec<i64> = serde_json::from_value(json_arg(s)?).map_err(|e| Error::Format(format!("element: {e}")))?;
    group.element(&coords)
}

fn rational_arg(name: &str, s: &str) -> Result<Rational> {
    parse_rational(s).map_err(|_| Error::Domain(format!("{name} must be a rational number, got `{s}`")))
}

fn unit_eps(s: &str) -> Result<Rational> {
    let eps = rational_arg("eps", s)?;
    check_unit_interval("eps", &eps, false)?;
    Ok(eps)
}

fn positive(name: &str, v: i64) -> Result<i64> {
    if v <= 0 {
        return Err(Error::Domain(format!("{name} must be positive, got {v}")));
    }
    Ok(v)
}

fn load_configuration(s: &str) -> Result<Configuration> {
    if let Some(path) = s.strip_prefix('@') {
        let bytes = fs::read(path).map_err(|e| Error::Format(format!("reading {path}: {e}")))?;
        if bytes.starts_with(b"QTCF") {
            return Configuration::read_binary(bytes.as_slice());
        }
        let v: Value = serde_json::from_slice(&bytes).map_err(|e| Error::Format(format!("invalid JSON: {e}")))?;
        return Configuration::from_json(&v);
    }
    Configuration::from_json(&json_arg(s)?)
}

fn load_tiling(s: &str) -> Result<Quasitiling> {
    Quasitiling::from_json(&json_arg(s)?)
}

fn write_json(path: &PathBuf, v: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(v).expect("valid JSON");
    fs::write(path, text + "\n").map_err(|e| Error::Format(format!("writing {}: {e}", path.display())))
}

fn default_e(group: GroupSpec, e: &Option<String>) -> Result<FiniteSubset> {
    match e {
        Some(s) => set_arg(group, s),
        None => Ok(folner::generator_cross(group)),
    }
}

// ---------------------------------------------------------------------------
// commands

fn group_cmd(a: &GroupArgs) -> Result<Value> {
    let g = element_arg(a.group, &a.a)?;
    let r = match a.op.as_str() {
        "mul" => {
            let b = a.b.as_deref().ok_or_else(|| Error::Domain("mul needs --b".into()))?;
            a.group.mul(&g, &element_arg(a.group, b)?)?
        }
        "inv" => a.group.inv(&g)?,
        other => return Err(Error::Domain(format!("unknown op `{other}` (mul or inv)"))),
    };
    Ok(json!({ "result": r }))
}

fn folner_scan(a: &FolnerScanArgs) -> Result<Value> {
    if a.n_min == 0 || a.n_min > a.n_max {
        return Err(Error::Domain(format!(
            "need 1 <= n_min <= n_max, got {}..{}",
            a.n_min, a.n_max
        )));
    }
    let fam = FolnerFamily::new(a.group);
    let e = default_e(a.group, &a.e)?;
    // check the largest set first so capacity errors surface before any work
    if let Some(size) = fam.size(a.n_max) {
        if size > folner::MAX_FOLNER_ELEMENTS {
            return Err(Error::Capacity {
                cap: "Følner set size",
                requested: size,
                limit: folner::MAX_FOLNER_ELEMENTS,
            });
        }
    }
    let rows = folner::scan(&fam, &e, a.n_min..=a.n_max)?;
    if let Some(path) = &a.csv {
        fs::write(path, folner::scan_to_csv(&rows))
            .map_err(|err| Error::Format(format!("writing {}: {err}", path.display())))?;
    }
    Ok(json!({ "e": e, "rows": rows }))
}

fn folner_find(a: &FolnerFindArgs) -> Result<Value> {
    let delta = rational_arg("delta", &a.delta)?;
    let fam = FolnerFamily::new(a.group);
    let e = default_e(a.group, &a.e)?;
    let n = folner::find_invariant_index(&fam, &e, &delta, a.n_max)?;
    let defect = match n {
        Some(n) => Some(Fraction::from(folner::invariance_defect(&fam.set(n)?, &e)?)),
        None => None,
    };
    Ok(json!({ "n": n, "defect": defect, "delta": Fraction::from(delta) }))
}

fn density_cmd(a: &DensityArgs) -> Result<Value> {
    let h = set_arg(a.group, &a.h)?;
    if let Some(core) = &a.core {
        let e = set_arg(a.group, core)?;
        let c = e_core(&h, &e)?;
        let lemma = match &a.eps {
            Some(eps) => Some(check_core_lemma(&e, &unit_eps(eps)?, &h)?),
            None => None,
        };
        return Ok(json!({ "core": c, "core_size": c.len(), "set_size": h.len(), "core_lemma": lemma }));
    }
    let f = match (&a.f, a.f_side) {
        (Some(f), _) => set_arg(a.group, f)?,
        (None, Some(s)) => verify::box_shape(a.group, positive("f-side", s)?)?,
        (None, None) => return Err(Error::Domain("density needs --f or --f-side".into())),
    };
    let window = Window::new(verify::box_shape(a.group, positive("window", a.window)?)?)?;
    let r = lower_density_over_window(&h, &f, &window)?;
    Ok(serde_json::to_value(&r).expect("serializable"))
}

fn build_cmd(a: &BuildArgs) -> Result<Value> {
    let eps = unit_eps(&a.eps)?;
    if eps >= Rational::new(1, 2) {
        return Err(Error::Domain(format!("eps = {eps} must be below 1/2")));
    }
    positive("window", a.window)?;
    for w in a.shapes.windows(2) {
        if w[0] > w[1] {
            return Err(Error::Domain("shape sides must be non-decreasing".into()));
        }
    }
    let shapes = a
        .shapes
        .iter()
        .map(|&s| verify::box_shape(a.group, positive("shape side", s)?))
        .collect::<Result<Vec<_>>>()?;
    let window = Window::new(verify::box_shape(a.group, a.window)?)?;
    let (tiling, report) = greedy_construct(&window, &shapes, &eps)?;
    let tiling_json = tiling.to_json();
    if let Some(path) = &a.out {
        write_json(path, &tiling_json)?;
    }
    Ok(json!({
        "report": report,
        "tiling": if a.out.is_some() { Value::Null } else { tiling_json },
    }))
}

fn check_cmd(a: &CheckArgs) -> Result<Value> {
    let tiling = load_tiling(&a.tiling)?;
    let eps = rational_arg("eps", &a.eps)?;
    check_unit_interval("eps", &eps, true)?;
    let outcome = eps_disjoint_check(&tiling, &eps)?;
    let addable = maximality_violations(&tiling, &eps)?;
    let (covering, interior) = tiling.covering_fraction()?;
    Ok(json!({
        "eps_disjoint": outcome.pass,
        "counterexample": outcome.counterexample,
        "retained_min": outcome.certificate.as_ref().map(|c| {
            (0..c.tile_sizes.len()).map(|t| c.retained_fraction(t)).min().map(Fraction::from)
        }),
        "addable_centers": addable.len(),
        "maximal": addable.is_empty(),
        "covering": Fraction::from(covering),
        "covering_f64": to_f64(&covering),
        "interior_size": interior,
    }))
}

fn disjointify_cmd(a: &DisjointifyArgs) -> Result<Value> {
    let tiling = load_tiling(&a.tiling)?;
    let (out, _, report) = disjointify(&tiling)?;
    let out_json = out.to_json();
    if let Some(path) = &a.out {
        write_json(path, &out_json)?;
    }
    Ok(json!({
        "report": report,
        "pairwise_disjoint": quasitiling::tiles_pairwise_disjoint(&out)?,
        "tiling": if a.out.is_some() { Value::Null } else { out_json },
    }))
}

fn absorb_cmd(a: &AbsorbArgs) -> Result<Value> {
    let v = json_arg(&a.input)?;
    let group: GroupSpec = v
        .get("group")
        .and_then(Value::as_str)
        .ok_or_else(|| Error::Format("absorb input needs a `group` string".into()))?
        .parse()?;
    let s_tilde = FiniteSubset::from_json(
        group,
        v.get("s_tilde")
            .ok_or_else(|| Error::Format("absorb input needs `s_tilde`".into()))?,
    )?;
    let levels: Vec<TileLevel> = serde_json::from_value(v.get("lower").cloned().unwrap_or(json!([])))
        .map_err(|e| Error::Format(format!("lower: {e}")))?;
    let lower = levels
        .into_iter()
        .map(|l| {
            Ok(Level {
                shape: FiniteSubset::new(group, l.shape)?,
                centers: FiniteSubset::new(group, l.centers)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let (s, report) = absorb_lower_tiles(&s_tilde, &lower)?;
    Ok(json!({ "s": s, "size": s.len(), "report": report }))
}

fn marker_cmd(a: &MarkerArgs) -> Result<Value> {
    let window = Window::new(verify::box_shape(a.group, positive("window", a.window)?)?)?;
    let f = verify::box_shape(a.group, positive("side", a.side)?)?;
    let m = maximal_marker_set(&window, &f)?;
    let r = verify_marker_set(&window, &f, &m)?;
    Ok(json!({ "markers": m.markers, "covering_shape": m.covering_shape, "report": r }))
}

fn freq_count(a: &FreqCountArgs) -> Result<Value> {
    let p = Pattern::from_json(a.group, &json_arg(&a.p)?)?;
    let q = Pattern::from_json(a.group, &json_arg(&a.q)?)?;
    let fr = pattern_frequency(&p, &q)?;
    Ok(json!({ "frequency": Fraction::from(fr), "frequency_f64": to_f64(&fr) }))
}

fn freq_lemma(a: &FreqLemmaArgs) -> Result<Value> {
    let y = load_configuration(&a.config)?;
    let tiling = load_tiling(&a.tiling)?;
    let group = y.window().group();
    let q = Pattern::from_json(group, &json_arg(&a.q)?)?;
    let f = match &a.f {
        Some(f) => set_arg(group, f)?,
        None => y.window().region().clone(),
    };
    let eps = unit_eps(&a.eps)?;
    Ok(serde_json::to_value(verify_frequency_lemma(&y, &tiling, &q, &f, &eps)?).expect("serializable"))
}

fn verify_cmd(a: &VerifyArgs, seed: u64) -> Result<Value> {
    if !verify::SUITES.contains(&a.suite.as_str()) {
        return Err(Error::Domain(format!(
            "unknown suite `{}`; expected one of {}",
            a.suite,
            verify::SUITES.join(", ")
        )));
    }
    let eps = a.eps.as_deref().map(unit_eps).transpose()?;
    let r = verify::run_named_suite(&a.suite, a.trials, eps, seed, a.group)?;
    Ok(serde_json::to_value(&r).expect("serializable"))
}
