//! Seeded randomized verification suites.
//!
//! Each trial draws from its own ChaCha8 stream: the generator is seeded with
//! the suite seed and switched to stream `trial_index`, so trials can run in
//! any order (or in parallel) and still produce identical reports.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::density::{check_boundary_lemma, check_core_lemma, check_large_core, e_core, Window};
use crate::error::{Error, Result};
use crate::group::{FiniteSubset, GroupElement, GroupSpec, Side};
use crate::quasitiling::{
    absorb_lower_tiles, covering_bound_exact, disjointify, eps_disjoint_check, greedy_construct,
    insertion_order_certificate, maximal_marker_set, maximality_violations, tiles_pairwise_disjoint, verify_marker_set,
    Level, Quasitiling,
};
use crate::rational::{ratio, Fraction, Rational};
use crate::symbolic::{
    bernoulli_entropy_exact, empirical_entropy_rate, shannon_entropy, verify_frequency_lemma, Alphabet, Configuration,
    Distribution, Pattern,
};

const MAX_DRAWS: u32 = 64;

pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub trial: u64,
    pub hypothesis_met: bool,
    pub violation: bool,
    pub detail: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub suite: String,
    pub seed: u64,
    pub trials: u64,
    pub hypothesis_met: u64,
    pub violations: u64,
    pub first_violation: Option<TrialOutcome>,
    pub summary: Value,
}

impl SuiteReport {
    fn from_trials(suite: &str, seed: u64, outcomes: Vec<TrialOutcome>, summary: Value) -> Self {
        let violations = outcomes.iter().filter(|o| o.violation).count() as u64;
        SuiteReport {
            suite: suite.to_string(),
            seed,
            trials: outcomes.len() as u64,
            hypothesis_met: outcomes.iter().filter(|o| o.hypothesis_met).count() as u64,
            violations,
            first_violation: outcomes.into_iter().find(|o| o.violation),
            summary,
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn run_trials<F>(seed: u64, trials: u64, f: F) -> Result<Vec<TrialOutcome>>
where
    F: Fn(u64, &mut ChaCha8Rng) -> Result<TrialOutcome> + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|t| f(t, &mut trial_rng(seed, t)))
        .collect()
}

fn el(c: &[i64]) -> GroupElement {
    GroupElement::new(c)
}

fn random_eps(rng: &mut ChaCha8Rng, lo: i64, hi: i64, den: i64) -> Rational {
    Rational::new(rng.gen_range(lo..=hi), den)
}

/// Identity plus up to `extra` random elements with coordinates in `[-r, r]`.
fn random_small_set(rng: &mut ChaCha8Rng, group: GroupSpec, extra: usize, r: i64) -> FiniteSubset {
    let mut v = vec![group.identity()];
    for _ in 0..extra {
        let c: Vec<i64> = (0..group.rank()).map(|_| rng.gen_range(-r..=r)).collect();
        v.push(el(&c));
    }
    FiniteSubset::new(group, v).expect("coordinates match the rank")
}

// ---------------------------------------------------------------------------

/// `(E,δ)`-invariance with `δ = ε/|E|` forces a `(1-ε)`-large `E`-core.
/// Without a group, even trials use `Z` and odd trials `Z²`; `eps = None`
/// draws ε per trial.
/// Each trial redraws until the hypothesis holds, up to 64 times.
pub fn core_lemma_suite(
    trials: u64,
    eps: Option<Rational>,
    group: Option<GroupSpec>,
    seed: u64,
) -> Result<SuiteReport> {
    if let Some(e) = eps {
        crate::rational::check_unit_interval("eps", &e, false)?;
    }
    if let Some(g) = group {
        if g != GroupSpec::Zd(1) && g != GroupSpec::Zd(2) {
            return Err(Error::domain(format!("core-lemma suite supports z1 and z2, not {g}")));
        }
    }
    let outcomes = run_trials(seed, trials, |t, rng| {
        let group = group.unwrap_or(if t % 2 == 0 { GroupSpec::Zd(1) } else { GroupSpec::Zd(2) });
        // redraw until the invariance hypothesis holds (bounded)
        let mut attempts = 0;
        loop {
            attempts += 1;
            let eps = eps.unwrap_or_else(|| random_eps(rng, 1, 9, 10));
            let (extra, r) = (rng.gen_range(0..4), rng.gen_range(1..=3));
            let e = random_small_set(rng, group, extra, r);
            let mut f = match group {
                GroupSpec::Zd(1) => {
                    let n = rng.gen_range(1..=400);
                    FiniteSubset::cuboid(group, &[0], &[n])?
                }
                _ => {
                    let a = rng.gen_range(1..=120);
                    let b = rng.gen_range(1..=120);
                    FiniteSubset::cuboid(group, &[0, 0], &[a, b])?
                }
            };
            if rng.gen_bool(0.5) && f.len() > 3 {
                let n_holes = rng.gen_range(1..=3);
                let holes: Vec<GroupElement> = f.as_slice().choose_multiple(rng, n_holes).cloned().collect();
                f = f.difference(&FiniteSubset::new(group, holes)?)?;
            }
            let r = check_core_lemma(&e, &eps, &f)?;
            if r.hypothesis_met || attempts == MAX_DRAWS {
                return Ok(TrialOutcome {
                    trial: t,
                    hypothesis_met: r.hypothesis_met,
                    violation: !r.pass,
                    detail: json!({
                        "group": group.to_string(),
                        "eps": Fraction::from(eps),
                        "attempts": attempts,
                        "report": r,
                    }),
                });
            }
        }
    })?;
    Ok(SuiteReport::from_trials("core-lemma", seed, outcomes, json!({})))
}

/// `(F_E)_D = F_{ED}` for random `F ⊆ Z²` and `E, D ∋ e`.
pub fn core_composition_suite(trials: u64, seed: u64) -> Result<SuiteReport> {
    let group = GroupSpec::Zd(2);
    let outcomes = run_trials(seed, trials, |t, rng| {
        let side = rng.gen_range(4..=16);
        let fill = rng.gen_range(0.5..1.0);
        let cells: Vec<GroupElement> = (0..side)
            .flat_map(|x| (0..side).map(move |y| (x, y)))
            .filter(|_| rng.gen_bool(fill))
            .map(|(x, y)| el(&[x, y]))
            .collect();
        let f = FiniteSubset::new(group, cells)?;
        let (ne, nd) = (rng.gen_range(0..4), rng.gen_range(0..4));
        let e = random_small_set(rng, group, ne, 2);
        let d = random_small_set(rng, group, nd, 2);
        let lhs = e_core(&e_core(&f, &e)?, &d)?;
        let rhs = e_core(&f, &e.product(&d)?)?;
        Ok(TrialOutcome {
            trial: t,
            hypothesis_met: true,
            violation: lhs != rhs,
            detail: json!({ "f": f.len(), "core": lhs.len() }),
        })
    })?;
    Ok(SuiteReport::from_trials("core-composition", seed, outcomes, json!({})))
}

// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuasitilingCheck {
    pub eps: Fraction,
    pub tiles: usize,
    pub centers_per_level: Vec<usize>,
    pub eps_disjoint: bool,
    pub insertion_certificate_valid: bool,
    pub maximality_violations: usize,
    pub covering: Fraction,
    pub covering_bound: Fraction,
    pub covering_f64: f64,
    pub covering_bound_f64: f64,
    pub covering_ok: bool,
    pub disjointified_pairwise_disjoint: bool,
    pub disjointified_same_union: bool,
    pub centers_retained: bool,
    pub min_retention: Fraction,
    pub retention_ok: bool,
}

impl QuasitilingCheck {
    /// Properties of the construction itself.
    pub fn construction_ok(&self) -> bool {
        self.eps_disjoint && self.insertion_certificate_valid && self.maximality_violations == 0 && self.covering_ok
    }

    /// Properties of the disjointified output.
    pub fn disjointify_ok(&self) -> bool {
        self.disjointified_pairwise_disjoint
            && self.disjointified_same_union
            && self.centers_retained
            && self.retention_ok
    }
}

/// Runs the greedy construction and every check on its output.
pub fn check_greedy(
    window: &Window,
    shapes: &[FiniteSubset],
    eps: &Rational,
) -> Result<(Quasitiling, QuasitilingCheck)> {
    let (tiling, report) = greedy_construct(window, shapes, eps)?;
    let disjoint = eps_disjoint_check(&tiling, eps)?;
    let cert_ok = insertion_order_certificate(&tiling)?.verify(&tiling, eps)?;
    let maxv = maximality_violations(&tiling, eps)?.len();
    let covering: Rational = report.covering.into();
    let bound = covering_bound_exact(eps, shapes.len());
    let (dis, _cert, drep) = disjointify(&tiling)?;
    let pairwise = tiles_pairwise_disjoint(&dis)?;
    let same_union = dis.union()? == tiling.union()?;
    let min_ret: Rational = drep.min_retention.into();
    let check = QuasitilingCheck {
        eps: (*eps).into(),
        tiles: tiling.tile_count(),
        centers_per_level: report.centers_per_level.clone(),
        eps_disjoint: disjoint.pass,
        insertion_certificate_valid: cert_ok,
        maximality_violations: maxv,
        covering: covering.into(),
        covering_bound: bound.into(),
        covering_f64: crate::rational::to_f64(&covering),
        covering_bound_f64: crate::rational::to_f64(&bound),
        covering_ok: covering >= bound,
        disjointified_pairwise_disjoint: pairwise,
        disjointified_same_union: same_union,
        centers_retained: drep.centers_retained,
        min_retention: drep.min_retention,
        retention_ok: min_ret >= Rational::from_integer(1) - *eps,
    };
    Ok((tiling, check))
}

/// Greedy quasitiling with box shapes of the given sides on `[0, window)^d`.
pub fn quasitiling_box_suite(group: GroupSpec, window: i64, sides: &[i64], eps: &Rational) -> Result<QuasitilingCheck> {
    let w = Window::cube(group, window)?;
    let shapes = sides.iter().map(|&s| box_shape(group, s)).collect::<Result<Vec<_>>>()?;
    Ok(check_greedy(&w, &shapes, eps)?.1)
}

/// Box shape of "side" `s`: a cube for `Z^d`, `[0,s)² × [0,s²)` for Heisenberg.
pub fn box_shape(group: GroupSpec, s: i64) -> Result<FiniteSubset> {
    match group {
        GroupSpec::Zd(_) => FiniteSubset::cube(group, s),
        GroupSpec::Heisenberg3 => FiniteSubset::cuboid(group, &[0, 0, 0], &[s, s, s * s]),
    }
}

/// Random windows, nested shapes (boxes, or ragged sets when `ragged`) and ε below 1/2.
/// Retention after disjointification is counted in the summary only.
pub fn quasitiling_random_suite(group: GroupSpec, ragged: bool, trials: u64, seed: u64) -> Result<SuiteReport> {
    let outcomes = run_trials(seed, trials, |t, rng| {
        let eps = random_eps(rng, 1, 9, 20);
        let k = rng.gen_range(1..=3);
        let (window, shapes) = random_nested_shapes(group, k, ragged, rng)?;
        let (_, c) = check_greedy(&window, &shapes, &eps)?;
        Ok(TrialOutcome {
            trial: t,
            hypothesis_met: true,
            // retention under the numbering rule is measured, not guaranteed
            violation: !(c.construction_ok()
                && c.disjointified_pairwise_disjoint
                && c.disjointified_same_union
                && c.centers_retained),
            detail: serde_json::to_value(&c).expect("serializable"),
        })
    })?;
    let count = |key: &str| {
        outcomes
            .iter()
            .filter(|o| o.detail.get(key) == Some(&Value::Bool(false)))
            .count()
    };
    let summary = json!({
        "eps_disjoint_failures": count("eps_disjoint"),
        "covering_failures": count("covering_ok"),
        "overlap_failures": count("disjointified_pairwise_disjoint"),
        "center_failures": count("centers_retained"),
        "retention_below_bound": count("retention_ok"),
        "maximality_failures": outcomes.iter().filter(|o| o.detail["maximality_violations"] != 0).count(),
    });
    Ok(SuiteReport::from_trials(
        &format!("quasitiling-{}-{group}", if ragged { "random" } else { "boxes" }),
        seed,
        outcomes,
        summary,
    ))
}

fn random_nested_shapes(
    group: GroupSpec,
    k: usize,
    ragged: bool,
    rng: &mut ChaCha8Rng,
) -> Result<(Window, Vec<FiniteSubset>)> {
    let mut shapes: Vec<FiniteSubset> = Vec::with_capacity(k);
    let mut bound = vec![1i64; group.rank()];
    for _ in 0..k {
        match group {
            // keep Heisenberg boxes small: the window grows with all three sides
            GroupSpec::Heisenberg3 => {
                bound[0] += rng.gen_range(0..=1);
                bound[1] += rng.gen_range(0..=1);
                bound[2] += rng.gen_range(0..=3);
            }
            _ => {
                for b in bound.iter_mut() {
                    *b += rng.gen_range(0..=2);
                }
            }
        }
        let lo = vec![0i64; group.rank()];
        let cube = FiniteSubset::cuboid(group, &lo, &bound)?;
        // keep the previous shape and the identity, drop some other cells
        let prev = shapes
            .last()
            .cloned()
            .unwrap_or_else(|| FiniteSubset::singleton(group, group.identity()).unwrap());
        let keep: Vec<GroupElement> = cube
            .iter()
            .filter(|g| !ragged || prev.contains(g) || rng.gen_bool(0.8))
            .cloned()
            .collect();
        shapes.push(FiniteSubset::new(group, keep)?);
    }
    let side_extra: i64 = rng.gen_range(4..=12);
    let hi: Vec<i64> = match group {
        GroupSpec::Heisenberg3 => {
            let extra = side_extra / 2;
            vec![bound[0] + extra, bound[1] + extra, bound[2] + 2 * extra]
        }
        _ => bound
            .iter()
            .map(|b| b + side_extra * if group.rank() == 1 { 4 } else { 1 })
            .collect(),
    };
    let window = Window::new(FiniteSubset::cuboid(group, &vec![0; group.rank()], &hi)?)?;
    Ok((window, shapes))
}

// ---------------------------------------------------------------------------

pub fn marker_check(group: GroupSpec, window: i64, side: i64) -> Result<Value> {
    let w = Window::cube(group, window)?;
    let f = box_shape(group, side)?;
    let m = maximal_marker_set(&w, &f)?;
    let r = verify_marker_set(&w, &f, &m)?;
    Ok(json!({
        "group": group.to_string(),
        "window": window,
        "side": side,
        "report": r,
        "pass": r.pairwise_disjoint && r.interior_covered,
    }))
}

// ---------------------------------------------------------------------------

/// Smallest `L` with the box `[0,L)^d` `(D, δ)`-invariant, `D` the box
/// `[-(a_i-1), a_i-1]`, from the closed form `(∏(L+2a_i-2) - L^d)/L^d`.
fn min_invariant_side(shape_sides: &[i64], delta: &Rational) -> i64 {
    let mut l = 1i64;
    loop {
        let grown: i128 = shape_sides.iter().map(|&a| (l + 2 * a - 2) as i128).product();
        let base: i128 = (l as i128).pow(shape_sides.len() as u32);
        let lhs = Rational::new((grown - base) as i64, base as i64);
        if lhs <= *delta {
            return l;
        }
        l += 1;
    }
}

/// Boundary-tile mass under the invariance hypothesis; instances are built
/// so that the hypothesis holds (checked, not assumed).
pub fn boundary_lemma_suite(trials: u64, seed: u64) -> Result<SuiteReport> {
    let outcomes = run_trials(seed, trials, |t, rng| {
        let (group, dims) = if t % 2 == 0 {
            (GroupSpec::Zd(1), 1)
        } else {
            (GroupSpec::Zd(2), 2)
        };
        let eps = if dims == 1 {
            random_eps(rng, 1, 9, 10)
        } else {
            random_eps(rng, 5, 9, 10)
        };
        let k = rng.gen_range(1..=3);
        let max_side = if dims == 1 { 4 } else { 2 };
        let mut sides = vec![1i64; dims];
        let mut shapes = Vec::with_capacity(k);
        for _ in 0..k {
            for s in sides.iter_mut() {
                if *s < max_side && rng.gen_bool(0.5) {
                    *s += 1;
                }
            }
            shapes.push(FiniteSubset::cuboid(group, &vec![0; dims], &sides)?);
        }
        let largest = shapes.last().expect("k >= 1");
        let diff_len: i64 = sides.iter().map(|a| 2 * a - 1).product();
        let delta = eps / Rational::from_integer(largest.len() as i64) / Rational::from_integer(diff_len);
        let side = min_invariant_side(&sides, &delta) + rng.gen_range(0..=20);
        let pad = 6i64;
        let wside = side + 2 * pad;
        let window = Window::cube(group, wside)?;
        let density = rng.gen_range(0.05..0.5);
        let mut centers = Vec::with_capacity(k);
        for s in &shapes {
            let interior = window.interior(s)?;
            let c: Vec<GroupElement> = interior.iter().filter(|_| rng.gen_bool(density)).cloned().collect();
            centers.push(FiniteSubset::new(group, c)?);
        }
        let tiling = Quasitiling::new(shapes, centers, window)?;
        let f = FiniteSubset::cuboid(group, &vec![pad; dims], &vec![pad + side; dims])?;
        let r = check_boundary_lemma(&tiling, &f, &eps)?;
        Ok(TrialOutcome {
            trial: t,
            hypothesis_met: r.hypothesis_met,
            violation: !r.pass || !r.hypothesis_met,
            detail: json!({ "group": group.to_string(), "side": side, "report": r }),
        })
    })?;
    Ok(SuiteReport::from_trials("boundary-lemma", seed, outcomes, json!({})))
}

/// Periodic two-level tilings (big cells, small tiles inside the rest) with
/// random cores; the test shape spans whole periods.
pub fn large_core_suite(trials: u64, seed: u64) -> Result<SuiteReport> {
    let outcomes = run_trials(seed, trials, |t, rng| {
        let (group, dims) = if t % 2 == 0 {
            (GroupSpec::Zd(1), 1usize)
        } else {
            (GroupSpec::Zd(2), 2usize)
        };
        let big = rng.gen_range(2..=4i64);
        let divisors: Vec<i64> = (1..big).filter(|d| big % d == 0).collect();
        let small = *divisors.choose(rng).expect("1 divides everything");
        let reps = rng.gen_range(1..=2i64);
        let copies = rng.gen_range(2..=3i64);
        let period = reps * big;
        let gamma = random_eps(rng, 1, 5, 10);
        let window_side = period * copies;

        let big_shape = FiniteSubset::cube(group, big)?;
        let small_shape = FiniteSubset::cube(group, small)?;
        let cells_per_axis = reps;
        let cell_coords: Vec<Vec<i64>> = match dims {
            1 => (0..cells_per_axis).map(|i| vec![i]).collect(),
            _ => (0..cells_per_axis)
                .flat_map(|i| (0..cells_per_axis).map(move |j| vec![i, j]))
                .collect(),
        };
        // per cell: 0 = empty, 1 = one big tile, 2 = small tiles (random subset)
        let kinds: Vec<u8> = cell_coords.iter().map(|_| rng.gen_range(0..3)).collect();
        let small_offsets: Vec<Vec<i64>> = match dims {
            1 => (0..big / small).map(|i| vec![i * small]).collect(),
            _ => (0..big / small)
                .flat_map(|i| (0..big / small).map(move |j| vec![i * small, j * small]))
                .collect(),
        };
        let small_keep: Vec<Vec<bool>> = cell_coords
            .iter()
            .map(|_| small_offsets.iter().map(|_| rng.gen_bool(0.7)).collect())
            .collect();

        let mut big_centers = Vec::new();
        let mut small_centers = Vec::new();
        let tiles_per_axis = copies;
        let periods: Vec<Vec<i64>> = match dims {
            1 => (0..tiles_per_axis).map(|i| vec![i * period]).collect(),
            _ => (0..tiles_per_axis)
                .flat_map(|i| (0..tiles_per_axis).map(move |j| vec![i * period, j * period]))
                .collect(),
        };
        for p in &periods {
            for (ci, cell) in cell_coords.iter().enumerate() {
                let origin: Vec<i64> = p.iter().zip(cell).map(|(a, c)| a + c * big).collect();
                match kinds[ci] {
                    1 => big_centers.push(el(&origin)),
                    2 => {
                        for (oi, off) in small_offsets.iter().enumerate() {
                            if small_keep[ci][oi] {
                                let c: Vec<i64> = origin.iter().zip(off).map(|(a, b)| a + b).collect();
                                small_centers.push(el(&c));
                            }
                        }
                    }
                    _ => {}
                }
            }
        }
        let random_core = |shape: &FiniteSubset, rng: &mut ChaCha8Rng| -> Result<FiniteSubset> {
            let n = shape.len();
            // smallest size strictly above (1-γ)n
            let min_keep = ((Rational::from_integer(1) - gamma) * ratio(n, 1)).floor().to_integer() as usize + 1;
            let keep = rng.gen_range(min_keep.min(n)..=n);
            let chosen: Vec<GroupElement> = shape.as_slice().choose_multiple(rng, keep).cloned().collect();
            FiniteSubset::new(group, chosen)
        };
        let big_core = random_core(&big_shape, rng)?;
        let small_core = random_core(&small_shape, rng)?;
        let window = Window::cube(group, window_side)?;
        let f_test = FiniteSubset::cube(group, period)?;
        let r = check_large_core(
            &[small_shape, big_shape],
            &[small_core, big_core],
            &[
                FiniteSubset::new(group, small_centers)?,
                FiniteSubset::new(group, big_centers)?,
            ],
            &gamma,
            &f_test,
            &window,
        )?;
        Ok(TrialOutcome {
            trial: t,
            hypothesis_met: true,
            violation: !r.pass,
            detail: json!({ "group": group.to_string(), "report": r }),
        })
    })?;
    Ok(SuiteReport::from_trials("large-core", seed, outcomes, json!({})))
}

// ---------------------------------------------------------------------------

/// Two-level aligned hierarchies in `Z²`: big `a×a` tiles on the `a`-grid and
/// small `b×b` tiles (`b | a`) on the `b`-grid, each kept at random.
pub fn absorb_suite(trials: u64, seed: u64) -> Result<SuiteReport> {
    let group = GroupSpec::Zd(2);
    let outcomes = run_trials(seed, trials, |t, rng| {
        let a = *[4i64, 6, 8].choose(rng).expect("nonempty");
        let divisors: Vec<i64> = (1..a).filter(|d| a % d == 0).collect();
        let b = *divisors.choose(rng).expect("nonempty");
        let cells = rng.gen_range(3..=6i64);
        let side = a * cells;
        let pb = rng.gen_range(0.2..0.8);
        let ps = rng.gen_range(0.2..0.9);
        let big: Vec<GroupElement> = (0..cells)
            .flat_map(|i| (0..cells).map(move |j| (i, j)))
            .filter(|_| rng.gen_bool(pb))
            .map(|(i, j)| el(&[i * a, j * a]))
            .collect();
        let per = side / b;
        let small: Vec<GroupElement> = (0..per)
            .flat_map(|i| (0..per).map(move |j| (i, j)))
            .filter(|_| rng.gen_bool(ps))
            .map(|(i, j)| el(&[i * b, j * b]))
            .collect();
        let x0 = rng.gen_range(0..side);
        let y0 = rng.gen_range(0..side);
        let x1 = rng.gen_range(x0 + 1..=side);
        let y1 = rng.gen_range(y0 + 1..=side);
        let s_tilde = FiniteSubset::cuboid(group, &[x0, y0], &[x1, y1])?;
        let lower = [
            Level {
                shape: FiniteSubset::cube(group, a)?,
                centers: FiniteSubset::new(group, big)?,
            },
            Level {
                shape: FiniteSubset::cube(group, b)?,
                centers: FiniteSubset::new(group, small)?,
            },
        ];
        let (s, rep) = absorb_lower_tiles(&s_tilde, &lower)?;
        // exhaustive: no tile of either level on the boundary of S
        let mut boundary = 0usize;
        for lvl in &lower {
            for c in &lvl.centers {
                let tile = lvl.shape.translate(c, Side::Right)?;
                let meet = tile.intersection_len(&s);
                if meet > 0 && meet < tile.len() {
                    boundary += 1;
                }
            }
        }
        // S ⊆ S̃ + [-(a-1), a-1]² + [-(b-1), b-1]², tested coordinatewise
        let reach = (a - 1) + (b - 1);
        let within = s.iter().all(|g| {
            let c = g.coords();
            let dx = if c[0] < x0 {
                x0 - c[0]
            } else if c[0] >= x1 {
                c[0] - x1 + 1
            } else {
                0
            };
            let dy = if c[1] < y0 {
                y0 - c[1]
            } else if c[1] >= y1 {
                c[1] - y1 + 1
            } else {
                0
            };
            dx <= reach && dy <= reach
        });
        Ok(TrialOutcome {
            trial: t,
            hypothesis_met: true,
            violation: boundary > 0 || !within || !rep.within_bound || !s_tilde.is_subset(&s),
            detail: json!({ "a": a, "b": b, "boundary_tiles": boundary, "within": within, "report": rep }),
        })
    })?;
    Ok(SuiteReport::from_trials("absorb", seed, outcomes, json!({})))
}

// ---------------------------------------------------------------------------

fn random_distribution(rng: &mut ChaCha8Rng, k: usize) -> Result<Distribution> {
    let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.0..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / total).collect();
    let rest: f64 = crate::symbolic::compensated_sum(w[1..].iter().copied());
    w[0] = (1.0 - rest).max(0.0);
    Distribution::new(w)
}

/// Uniform i.i.d. symbols on `[0, side)^2`.
pub fn bernoulli_configuration(side: i64, alphabet: u32, seed: u64) -> Result<Configuration> {
    let w = Window::cube(GroupSpec::Zd(2), side)?;
    let mut rng = trial_rng(seed, u64::MAX);
    let row: Vec<u8> = (0..w.len()).map(|_| rng.gen_range(0..alphabet) as u8).collect();
    Configuration::new(w, vec![alphabet], vec![row])
}

pub fn checkerboard(side: i64) -> Result<Configuration> {
    let w = Window::cube(GroupSpec::Zd(2), side)?;
    Configuration::from_fn(w, 2, |g| ((g.coords()[0] + g.coords()[1]).rem_euclid(2)) as u8)
}

/// Exact Bernoulli block entropy versus single-symbol entropy.
pub fn bernoulli_suite(trials: u64, seed: u64) -> Result<SuiteReport> {
    let outcomes = run_trials(seed, trials, |t, rng| {
        let k = rng.gen_range(2..=4);
        let p = random_distribution(rng, k)?;
        let (group, shape) = if rng.gen_bool(0.5) {
            let n = rng.gen_range(1..=9);
            (GroupSpec::Zd(1), vec![n])
        } else {
            let a = rng.gen_range(1..=3);
            let b = rng.gen_range(1..=(9 / a).min(3));
            (GroupSpec::Zd(2), vec![a, b])
        };
        let f = FiniteSubset::cuboid(group, &vec![0; shape.len()], &shape)?;
        let exact = bernoulli_entropy_exact(&p, &f)?;
        let h = shannon_entropy(&p);
        let err = (exact - h).abs();
        Ok(TrialOutcome {
            trial: t,
            hypothesis_met: true,
            violation: err > 1e-10,
            detail: json!({ "k": k, "cells": f.len(), "h_n": exact, "h": h, "abs_err": err }),
        })
    })?;
    Ok(SuiteReport::from_trials("bernoulli-entropy", seed, outcomes, json!({})))
}

pub fn entropy_checks(seed: u64) -> Result<Value> {
    let sq = FiniteSubset::cube(GroupSpec::Zd(2), 2)?;
    let sample = empirical_entropy_rate(&bernoulli_configuration(512, 2, seed)?, &sq)?;
    let cb = empirical_entropy_rate(&checkerboard(65)?, &sq)?;
    let ln2 = std::f64::consts::LN_2;
    Ok(json!({
        "bernoulli_sample": sample,
        "bernoulli_abs_err": (sample.h_n_hat - ln2).abs(),
        "bernoulli_pass": (sample.h_n_hat - ln2).abs() <= 0.01,
        "checkerboard": cb,
        "checkerboard_abs_err": (cb.h_n_hat - ln2 / 4.0).abs(),
        "checkerboard_pass": (cb.h_n_hat - ln2 / 4.0).abs() <= 1e-12,
    }))
}

// ---------------------------------------------------------------------------

/// Frequency of a block in `y(F)` versus its tile-average, on instances that
/// meet the invariance and coverage hypotheses by construction.
pub fn frequency_suite(trials: u64, seed: u64) -> Result<SuiteReport> {
    let outcomes = run_trials(seed, trials, |t, rng| {
        let (group, dims) = if t % 2 == 0 {
            (GroupSpec::Zd(1), 1usize)
        } else {
            (GroupSpec::Zd(2), 2usize)
        };
        let eps = if dims == 1 {
            random_eps(rng, 1, 9, 10)
        } else {
            random_eps(rng, 3, 9, 10)
        };
        let a_sides: Vec<i64> = (0..dims)
            .map(|_| rng.gen_range(1..=if dims == 1 { 3 } else { 2 }))
            .collect();
        let a = FiniteSubset::cuboid(group, &vec![0; dims], &a_sides)?;
        let delta = eps / Rational::from_integer(3) / ratio(a.len(), 1);
        // smallest cube tile [0,L)^d that is (A, δ)-invariant: (∏(L+a_i-1) - L^d)/L^d ≤ δ
        let mut l = 1i64;
        loop {
            let grown: i128 = a_sides.iter().map(|&s| (l + s - 1) as i128).product();
            let base = (l as i128).pow(dims as u32);
            if Rational::new((grown - base) as i64, base as i64) <= delta {
                break;
            }
            l += 1;
        }
        l += rng.gen_range(0..=3);
        // tiles on a grid of stride l + gap, gap small enough for the coverage hypothesis
        let target = Rational::from_integer(1) - Rational::from_integer(2) * eps / Rational::from_integer(3);
        let mut gap = rng.gen_range(0..=3i64);
        while gap > 0 && Rational::new(l.pow(dims as u32), (l + gap).pow(dims as u32)) < target {
            gap -= 1;
        }
        let stride = l + gap;
        let count = if dims == 1 {
            rng.gen_range(3..=8)
        } else {
            rng.gen_range(2..=3)
        };
        let side = stride * count;
        let window = Window::cube(group, side + 2)?;
        let f = FiniteSubset::cube(group, side)?;
        let alphabet = rng.gen_range(2..=3u32);
        let bias = rng.gen_range(0.1..0.9);
        let row: Vec<u8> = (0..window.len())
            .map(|_| {
                if rng.gen_bool(bias) {
                    0
                } else {
                    rng.gen_range(0..alphabet) as u8
                }
            })
            .collect();
        let y = Configuration::new(window.clone(), vec![alphabet], vec![row])?;
        let centers: Vec<GroupElement> = match dims {
            1 => (0..count).map(|i| el(&[i * stride])).collect(),
            _ => (0..count)
                .flat_map(|i| (0..count).map(move |j| el(&[i * stride, j * stride])))
                .collect(),
        };
        let tile = FiniteSubset::cube(group, l)?;
        let tiling = Quasitiling::new(vec![tile], vec![FiniteSubset::new(group, centers)?], window)?;
        let q_vals: Vec<u32> = (0..a.len()).map(|_| rng.gen_range(0..alphabet)).collect();
        let q = Pattern::new(a, Alphabet::new(alphabet)?, q_vals)?;
        let r = verify_frequency_lemma(&y, &tiling, &q, &f, &eps)?;
        Ok(TrialOutcome {
            trial: t,
            hypothesis_met: r.hypotheses_met,
            violation: !r.pass || !r.hypotheses_met,
            detail: json!({ "group": group.to_string(), "tile_side": l, "report": r }),
        })
    })?;
    Ok(SuiteReport::from_trials("frequency-lemma", seed, outcomes, json!({})))
}

/// Suite names accepted by [`run_named_suite`].
pub const SUITES: &[&str] = &[
    "core-lemma",
    "core-composition",
    "boundary-lemma",
    "large-core",
    "absorb",
    "bernoulli-entropy",
    "frequency-lemma",
    "quasitiling-random",
    "quasitiling-boxes",
];

/// `group` selects the group where a suite supports more than one; the
/// quasitiling suites default to `Z²`.
pub fn run_named_suite(
    name: &str,
    trials: u64,
    eps: Option<Rational>,
    seed: u64,
    group: Option<GroupSpec>,
) -> Result<SuiteReport> {
    let qt_group = group.unwrap_or(GroupSpec::Zd(2));
    match name {
        "core-lemma" => core_lemma_suite(trials, eps, group, seed),
        "core-composition" => core_composition_suite(trials, seed),
        "boundary-lemma" => boundary_lemma_suite(trials, seed),
        "large-core" => large_core_suite(trials, seed),
        "absorb" => absorb_suite(trials, seed),
        "bernoulli-entropy" => bernoulli_suite(trials, seed),
        "frequency-lemma" => frequency_suite(trials, seed),
        "quasitiling-random" => quasitiling_random_suite(qt_group, true, trials, seed),
        "quasitiling-boxes" => quasitiling_random_suite(qt_group, false, trials, seed),
        other => Err(Error::domain(format!("unknown verification suite `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trial_streams_are_independent_of_order() {
        let a: Vec<u64> = (0..4).map(|t| trial_rng(7, t).gen()).collect();
        let b: Vec<u64> = (0..4).rev().map(|t| trial_rng(7, t).gen()).collect();
        let b: Vec<u64> = b.into_iter().rev().collect();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
    }

    #[test]
    fn min_invariant_side_matches_closed_form() {
        // [0,L) against [-2,2]: defect 4/L
        assert_eq!(min_invariant_side(&[3], &Rational::new(1, 10)), 40);
        // 2D 2×2 box: ((L+2)^2 - L^2)/L^2 ≤ 1/10
        let l = min_invariant_side(&[2, 2], &Rational::new(1, 10));
        let d = |l: i64| Rational::new((l + 2).pow(2) - l * l, l * l);
        assert!(d(l) <= Rational::new(1, 10) && d(l - 1) > Rational::new(1, 10));
    }

    #[test]
    fn small_suites_run_clean() {
        for name in SUITES {
            let r = run_named_suite(name, 6, None, 1, None).unwrap();
            assert_eq!(r.violations, 0, "{name}: {:?}", r.first_violation);
        }
    }
}
