//! Patterns, configurations, block frequencies and entropy.
//!
//! A configuration carries `J` rows over one window; the symbol of a cell is
//! the tuple of its row symbols, packed into one integer in mixed radix
//! (row 0 most significant). Patterns are always over such packed symbols.

use std::io::{Read, Write};

use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::Serialize;
use serde_json::{json, Value};

use crate::density::Window;
use crate::error::{Error, Result};
use crate::folner::invariance_defect;
use crate::group::{FiniteSubset, GroupSpec};
use crate::index::{as_cuboid, ElementIndex};
use crate::quasitiling::{tiles_pairwise_disjoint, window_from_json, Quasitiling};
use crate::rational::{check_unit_interval, ratio, Fraction, Rational};

/// Largest pattern space `|Λ|^|F|` that may be enumerated or counted.
pub const PATTERN_SPACE_CAP: u128 = 1 << 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Alphabet {
    size: u32,
}

impl Alphabet {
    pub fn new(size: u32) -> Result<Self> {
        if size == 0 {
            return Err(Error::domain("alphabet must have at least one symbol"));
        }
        Ok(Alphabet { size })
    }

    pub fn size(&self) -> u32 {
        self.size
    }
}

/// A symbol-valued function on a finite domain; `values[i]` belongs to the
/// `i`-th domain element in canonical order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    domain: FiniteSubset,
    alphabet: Alphabet,
    values: Vec<u32>,
}

impl Pattern {
    pub fn new(domain: FiniteSubset, alphabet: Alphabet, values: Vec<u32>) -> Result<Self> {
        if values.len() != domain.len() {
            return Err(Error::domain(format!(
                "pattern has {} values for a domain of {} elements",
                values.len(),
                domain.len()
            )));
        }
        if let Some(v) = values.iter().find(|&&v| v >= alphabet.size) {
            return Err(Error::domain(format!(
                "symbol {v} outside alphabet of size {}",
                alphabet.size
            )));
        }
        Ok(Pattern {
            domain,
            alphabet,
            values,
        })
    }

    pub fn domain(&self) -> &FiniteSubset {
        &self.domain
    }

    pub fn alphabet(&self) -> Alphabet {
        self.alphabet
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn get(&self, g: &crate::group::GroupElement) -> Option<u32> {
        self.domain.index_of(g).map(|i| self.values[i])
    }

    pub fn from_json(group: GroupSpec, v: &Value) -> Result<Self> {
        let domain = FiniteSubset::from_json(
            group,
            v.get("domain")
                .ok_or_else(|| Error::Format("pattern needs `domain`".into()))?,
        )?;
        let alphabet = v
            .get("alphabet")
            .and_then(Value::as_u64)
            .ok_or_else(|| Error::Format("pattern needs an integer `alphabet`".into()))?;
        let raw: Vec<u32> = serde_json::from_value(
            v.get("values")
                .cloned()
                .ok_or_else(|| Error::Format("pattern needs `values`".into()))?,
        )
        .map_err(|e| Error::Format(format!("pattern values: {e}")))?;
        // values are listed in the order the domain was given, which may not be canonical
        let given: Vec<crate::group::GroupElement> =
            serde_json::from_value(v["domain"].clone()).map_err(|e| Error::Format(format!("pattern domain: {e}")))?;
        if given.len() != raw.len() {
            return Err(Error::Format("pattern domain and values differ in length".into()));
        }
        let mut values = vec![u32::MAX; domain.len()];
        for (g, val) in given.iter().zip(raw) {
            let i = domain.index_of(g).expect("element of the parsed domain");
            values[i] = val;
        }
        Pattern::new(domain, Alphabet::new(alphabet as u32)?, values)
    }

    pub fn to_json(&self) -> Value {
        json!({
            "domain": self.domain.to_json(),
            "alphabet": self.alphabet.size,
            "values": self.values,
        })
    }
}

/// Number of positions `g ∈ B` with `A·g ⊆ B` and `P(a·g) = Q(a)` for all `a ∈ A`.
pub fn occurrences(p: &Pattern, q: &Pattern) -> Result<(usize, usize)> {
    if p.alphabet != q.alphabet {
        return Err(Error::domain(format!(
            "alphabet mismatch: {} vs {} symbols",
            p.alphabet.size, q.alphabet.size
        )));
    }
    if p.domain.is_empty() || q.domain.is_empty() {
        return Err(Error::domain("pattern domains must be nonempty"));
    }
    let positions = p.domain.interior_positions(&q.domain)?;
    let index = ElementIndex::new(&p.domain);
    let group = p.domain.group();
    let mut hits = 0;
    for g in &positions {
        let mut ok = true;
        for (a, want) in q.domain.iter().zip(&q.values) {
            let x = group.mul(a, g)?;
            let i = index.get(&x).expect("interior position");
            if p.values[i] != *want {
                ok = false;
                break;
            }
        }
        if ok {
            hits += 1;
        }
    }
    Ok((hits, positions.len()))
}

/// `fr_P(Q)`: occurrences of `Q` in `P` divided by `|B|`, the size of `P`'s domain.
pub fn pattern_frequency(p: &Pattern, q: &Pattern) -> Result<Rational> {
    let (hits, _) = occurrences(p, q)?;
    Ok(ratio(hits, p.domain.len()))
}

/// A finite-window restriction of an array-system point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Configuration {
    window: Window,
    alphabets: Vec<u32>,
    /// `rows[r][i]`: symbol of row `r` at the `i`-th window element.
    rows: Vec<Vec<u8>>,
}

impl Configuration {
    pub fn new(window: Window, alphabets: Vec<u32>, rows: Vec<Vec<u8>>) -> Result<Self> {
        if rows.is_empty() || rows.len() != alphabets.len() {
            return Err(Error::domain(
                "configuration needs one alphabet per row and at least one row",
            ));
        }
        for (r, (row, &a)) in rows.iter().zip(&alphabets).enumerate() {
            if a == 0 || a > 256 {
                return Err(Error::domain(format!("row {r}: alphabet size {a} not in 1..=256")));
            }
            if row.len() != window.len() {
                return Err(Error::domain(format!(
                    "row {r} has {} symbols for a window of {}",
                    row.len(),
                    window.len()
                )));
            }
            if let Some(v) = row.iter().find(|&&v| u32::from(v) >= a) {
                return Err(Error::domain(format!(
                    "row {r}: symbol {v} outside alphabet of size {a}"
                )));
            }
        }
        let packed: u128 = alphabets.iter().map(|&a| a as u128).product();
        if packed > u32::MAX as u128 {
            return Err(Error::Capacity {
                cap: "packed cell alphabet",
                requested: packed,
                limit: u32::MAX as u128,
            });
        }
        Ok(Configuration {
            window,
            alphabets,
            rows,
        })
    }

    /// Single-row configuration from a symbol function.
    pub fn from_fn(window: Window, alphabet: u32, f: impl FnMut(&crate::group::GroupElement) -> u8) -> Result<Self> {
        let row = window.region().iter().map(f).collect();
        Self::new(window, vec![alphabet], vec![row])
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn rows(&self) -> usize {
        self.rows.len()
    }

    pub fn alphabets(&self) -> &[u32] {
        &self.alphabets
    }

    pub fn row_values(&self, r: usize) -> &[u8] {
        &self.rows[r]
    }

    pub fn cell_alphabet(&self) -> Alphabet {
        Alphabet {
            size: self.alphabets.iter().product(),
        }
    }

    fn cell(&self, i: usize) -> u32 {
        self.rows
            .iter()
            .zip(&self.alphabets)
            .fold(0u32, |acc, (row, &a)| acc * a + u32::from(row[i]))
    }

    /// `y(D)`: the block of this configuration on `D ⊆ window`.
    pub fn block(&self, domain: &FiniteSubset) -> Result<Pattern> {
        let index = ElementIndex::new(self.window.region());
        let values = domain
            .iter()
            .map(|g| {
                index
                    .get(g)
                    .map(|i| self.cell(i))
                    .ok_or_else(|| Error::domain(format!("{g} lies outside the configuration window")))
            })
            .collect::<Result<Vec<_>>>()?;
        Pattern::new(domain.clone(), self.cell_alphabet(), values)
    }

    pub fn to_json(&self) -> Value {
        let window = match as_cuboid(self.window.region()) {
            Some((lo, hi)) => json!({ "lo": lo, "hi": hi }),
            None => self.window.region().to_json(),
        };
        json!({
            "group": self.window.group().to_string(),
            "window": window,
            "alphabets": self.alphabets,
            "values": self.rows,
        })
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let group: GroupSpec = v
            .get("group")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Format("configuration needs a `group` string".into()))?
            .parse()?;
        let window = Window::new(window_from_json(
            group,
            v.get("window")
                .ok_or_else(|| Error::Format("configuration needs `window`".into()))?,
        )?)?;
        let alphabets: Vec<u32> = serde_json::from_value(v.get("alphabets").cloned().unwrap_or(Value::Null))
            .map_err(|e| Error::Format(format!("alphabets: {e}")))?;
        let rows: Vec<Vec<u8>> = serde_json::from_value(v.get("values").cloned().unwrap_or(Value::Null))
            .map_err(|e| Error::Format(format!("values: {e}")))?;
        Configuration::new(window, alphabets, rows)
    }

    /// Compact binary grid:
    ///
    /// ```text
    /// magic "QTCF" | version u8 = 1 | group u8 (0 = Z^d, 1 = Heisenberg) | rank u8
    /// | lo i64 LE × rank | hi i64 LE × rank | rows u32 LE | alphabet u16 LE × rows
    /// | symbols u8, row by row, cells in canonical (row-major) order
    /// ```
    ///
    /// Only box windows can be stored.
    pub fn write_binary(&self, mut w: impl Write) -> Result<()> {
        let (lo, hi) =
            as_cuboid(self.window.region()).ok_or_else(|| Error::domain("binary format needs a box window"))?;
        let io = |e: std::io::Error| Error::Format(e.to_string());
        let (tag, rank) = match self.window.group() {
            GroupSpec::Zd(d) => (0u8, d),
            GroupSpec::Heisenberg3 => (1u8, 3),
        };
        let rank = u8::try_from(rank).map_err(|_| Error::domain("rank too large for binary format"))?;
        w.write_all(b"QTCF").map_err(io)?;
        w.write_all(&[1, tag, rank]).map_err(io)?;
        for x in lo.iter().chain(&hi) {
            w.write_all(&x.to_le_bytes()).map_err(io)?;
        }
        w.write_all(&(self.rows.len() as u32).to_le_bytes()).map_err(io)?;
        for &a in &self.alphabets {
            w.write_all(&(a as u16).to_le_bytes()).map_err(io)?;
        }
        for row in &self.rows {
            w.write_all(row).map_err(io)?;
        }
        Ok(())
    }

    pub fn read_binary(mut r: impl Read) -> Result<Self> {
        let io = |e: std::io::Error| Error::Format(format!("binary configuration: {e}"));
        let mut head = [0u8; 7];
        r.read_exact(&mut head).map_err(io)?;
        if &head[..4] != b"QTCF" {
            return Err(Error::Format("bad magic, expected QTCF".into()));
        }
        if head[4] != 1 {
            return Err(Error::Format(format!("unsupported version {}", head[4])));
        }
        let group = match head[5] {
            0 => GroupSpec::zd(u32::from(head[6]))?,
            1 if head[6] == 3 => GroupSpec::Heisenberg3,
            t => return Err(Error::Format(format!("bad group tag {t} / rank {}", head[6]))),
        };
        let rank = usize::from(head[6]);
        let read_i64 = |r: &mut dyn Read| -> Result<i64> {
            let mut b = [0u8; 8];
            r.read_exact(&mut b).map_err(io)?;
            Ok(i64::from_le_bytes(b))
        };
        let lo = (0..rank).map(|_| read_i64(&mut r)).collect::<Result<Vec<_>>>()?;
        let hi = (0..rank).map(|_| read_i64(&mut r)).collect::<Result<Vec<_>>>()?;
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4).map_err(io)?;
        let nrows = u32::from_le_bytes(b4) as usize;
        let mut alphabets = Vec::with_capacity(nrows);
        for _ in 0..nrows {
            let mut b2 = [0u8; 2];
            r.read_exact(&mut b2).map_err(io)?;
            alphabets.push(u32::from(u16::from_le_bytes(b2)));
        }
        let window = Window::new(FiniteSubset::cuboid(group, &lo, &hi)?)?;
        let mut rows = Vec::with_capacity(nrows);
        for _ in 0..nrows {
            let mut row = vec![0u8; window.len()];
            r.read_exact(&mut row).map_err(io)?;
            rows.push(row);
        }
        Configuration::new(window, alphabets, rows)
    }
}

// ---------------------------------------------------------------------------
// frequency averaging over tiles

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FrequencyLemmaReport {
    pub fr_f: Fraction,
    pub tile_avg: Fraction,
    pub diff: Fraction,
    pub eps: Fraction,
    pub delta_used: Fraction,
    pub contained_tiles: usize,
    pub coverage: Fraction,
    pub tiles_invariant: bool,
    pub coverage_met: bool,
    pub hypotheses_met: bool,
    pub pass: bool,
}

/// Compares the frequency of `Q` in `y(F)` with its average frequency over
/// the blocks cut out by the tiles contained in `F`.
///
/// The average is weighted by tile size (total occurrences inside tiles over
/// total tile area). Hypotheses: every contained tile is `(A, δ)`-invariant
/// with `δ = (ε/3)/|A|`, and contained tiles cover at least `(1 - 2ε/3)` of `F`.
pub fn verify_frequency_lemma(
    y: &Configuration,
    tiling: &Quasitiling,
    q: &Pattern,
    f: &FiniteSubset,
    eps: &Rational,
) -> Result<FrequencyLemmaReport> {
    check_unit_interval("eps", eps, false)?;
    if !f.is_subset(y.window().region()) {
        return Err(Error::domain("F is not contained in the configuration window"));
    }
    if !tiles_pairwise_disjoint(tiling)? {
        return Err(Error::domain("tiles must be pairwise disjoint"));
    }
    let three = Rational::from_integer(3);
    let delta = *eps / three / ratio(q.domain().len(), 1);
    let (occ_f, _) = occurrences(&y.block(f)?, q)?;

    let mut occ_tiles = 0usize;
    let mut area = 0usize;
    let mut contained = 0usize;
    let mut invariant = true;
    for t in tiling.tiles() {
        let t = t?;
        if !t.set.is_subset(f) {
            continue;
        }
        contained += 1;
        area += t.set.len();
        occ_tiles += occurrences(&y.block(&t.set)?, q)?.0;
        if invariance_defect(&t.set, q.domain())? > delta {
            invariant = false;
        }
    }
    let fr_f = ratio(occ_f, f.len());
    let avg = if area == 0 {
        Rational::from_integer(0)
    } else {
        ratio(occ_tiles, area)
    };
    let diff = if fr_f >= avg { fr_f - avg } else { avg - fr_f };
    let coverage = ratio(area, f.len());
    let coverage_met = coverage >= Rational::from_integer(1) - Rational::from_integer(2) * *eps / three;
    let tiles_invariant = invariant && contained > 0;
    let hypotheses_met = tiles_invariant && coverage_met;
    Ok(FrequencyLemmaReport {
        fr_f: fr_f.into(),
        tile_avg: avg.into(),
        diff: diff.into(),
        eps: (*eps).into(),
        delta_used: delta.into(),
        contained_tiles: contained,
        coverage: coverage.into(),
        tiles_invariant,
        coverage_met,
        hypotheses_met,
        pass: !hypotheses_met || diff <= *eps,
    })
}

// ---------------------------------------------------------------------------
// entropy

const DIST_TOL: f64 = 1e-12;

/// Neumaier-compensated sum.
pub fn compensated_sum(xs: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut c = 0.0f64;
    for x in xs {
        let t = sum + x;
        if sum.abs() >= x.abs() {
            c += (sum - t) + x;
        } else {
            c += (x - t) + sum;
        }
        sum = t;
    }
    sum + c
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Distribution {
    weights: Vec<f64>,
}

impl Distribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::domain("distribution has no outcomes"));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::domain(format!("invalid weight {w}")));
        }
        let total = compensated_sum(weights.iter().copied());
        if (total - 1.0).abs() > DIST_TOL {
            return Err(Error::domain(format!("weights sum to {total}, not 1")));
        }
        Ok(Distribution { weights })
    }

    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let n: u64 = counts.iter().sum();
        if n == 0 {
            return Err(Error::domain("no samples"));
        }
        Self::new(counts.iter().map(|&c| c as f64 / n as f64).collect())
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

fn plogp_sum(ps: impl IntoIterator<Item = f64>) -> f64 {
    let h = compensated_sum(ps.into_iter().filter(|&p| p > 0.0).map(|p| -p * p.ln()));
    h.max(0.0)
}

/// `-Σ p ln p` with `0 ln 0 = 0`.
pub fn shannon_entropy(d: &Distribution) -> f64 {
    plogp_sum(d.weights.iter().copied())
}

/// A distribution over pairs `(a, b)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointDistribution {
    entries: Vec<((u32, u32), f64)>,
}

impl JointDistribution {
    pub fn new(entries: Vec<((u32, u32), f64)>) -> Result<Self> {
        Distribution::new(entries.iter().map(|(_, p)| *p).collect())?;
        let mut keys: Vec<_> = entries.iter().map(|(k, _)| *k).collect();
        keys.sort_unstable();
        if keys.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::domain("repeated outcome in joint distribution"));
        }
        Ok(JointDistribution { entries })
    }

    pub fn entries(&self) -> &[((u32, u32), f64)] {
        &self.entries
    }

    pub fn b_marginal(&self) -> Vec<(u32, f64)> {
        let mut m: Vec<(u32, Vec<f64>)> = Vec::new();
        let mut sorted = self.entries.clone();
        sorted.sort_by_key(|((a, b), _)| (*b, *a));
        for ((_, b), p) in sorted {
            match m.last_mut() {
                Some((bb, ps)) if *bb == b => ps.push(p),
                _ => m.push((b, vec![p])),
            }
        }
        m.into_iter().map(|(b, ps)| (b, compensated_sum(ps))).collect()
    }
}

/// `Σ_b μ(b) · H(μ(· | b))`.
pub fn conditional_entropy(joint: &JointDistribution) -> f64 {
    let mut by_b: FxHashMap<u32, Vec<f64>> = FxHashMap::default();
    for ((_, b), p) in &joint.entries {
        by_b.entry(*b).or_default().push(*p);
    }
    let mut keys: Vec<u32> = by_b.keys().copied().collect();
    keys.sort_unstable();
    let terms = keys.into_iter().map(|b| {
        let ps = &by_b[&b];
        let mb = compensated_sum(ps.iter().copied());
        if mb <= 0.0 {
            0.0
        } else {
            mb * plogp_sum(ps.iter().map(|p| p / mb))
        }
    });
    compensated_sum(terms).max(0.0)
}

pub fn joint_entropy(joint: &JointDistribution) -> f64 {
    plogp_sum(joint.entries.iter().map(|(_, p)| *p))
}

fn pattern_space(alphabet: u128, cells: usize) -> Result<u128> {
    let mut n: u128 = 1;
    for _ in 0..cells {
        n = n.saturating_mul(alphabet);
        if n > PATTERN_SPACE_CAP {
            return Err(Error::Capacity {
                cap: "pattern space |alphabet|^|F|",
                requested: alphabet.saturating_pow(cells.min(64) as u32),
                limit: PATTERN_SPACE_CAP,
            });
        }
    }
    Ok(n)
}

/// `H_n` of the Bernoulli measure `p^{F_n}`, by enumerating every pattern on
/// `F_n` with its exact product probability.
pub fn bernoulli_entropy_exact(p: &Distribution, f_n: &FiniteSubset) -> Result<f64> {
    if f_n.is_empty() {
        return Err(Error::domain("F_n must be nonempty"));
    }
    let k = p.weights.len();
    let n = f_n.len();
    pattern_space(k as u128, n)?;
    // odometer over symbol tuples with cached prefix products
    let mut digits = vec![0usize; n];
    let mut prefix = vec![1.0f64; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] * p.weights[0];
    }
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    loop {
        let q = prefix[n];
        if q > 0.0 {
            let x = -q * q.ln();
            let t = sum + x;
            if sum.abs() >= x.abs() {
                comp += (sum - t) + x;
            } else {
                comp += (x - t) + sum;
            }
            sum = t;
        }
        let mut i = n;
        loop {
            if i == 0 {
                return Ok((sum + comp).max(0.0) / n as f64);
            }
            i -= 1;
            digits[i] += 1;
            if digits[i] < k {
                break;
            }
            digits[i] = 0;
        }
        for j in i..n {
            prefix[j + 1] = prefix[j] * p.weights[digits[j]];
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyRateReport {
    pub h_n_hat: f64,
    pub sample_count: usize,
    pub distinct_patterns: usize,
    pub shape_size: usize,
}

/// Plug-in estimate of `H_n / |F_n|` from the empirical distribution of
/// `F_n`-blocks at every position whose translate fits in the window.
pub fn empirical_entropy_rate(y: &Configuration, f_n: &FiniteSubset) -> Result<EntropyRateReport> {
    if f_n.is_empty() {
        return Err(Error::domain("F_n must be nonempty"));
    }
    let a = y.cell_alphabet().size() as u128;
    pattern_space(a, f_n.len())?;
    let interior = y.window().interior(f_n)?;
    if interior.is_empty() {
        return Err(Error::domain("no translate of F_n fits in the window"));
    }
    let index = ElementIndex::new(y.window().region());
    let group = y.window().group();
    let cells: Vec<u32> = (0..y.window().len()).map(|i| y.cell(i)).collect();
    let positions = interior.as_slice();
    let counts: FxHashMap<u64, u64> = positions
        .par_chunks(4096)
        .map(|chunk| {
            let mut local: FxHashMap<u64, u64> = FxHashMap::default();
            for g in chunk {
                let mut code: u64 = 0;
                for x in f_n {
                    let z = group.mul(x, g).expect("interior translate is representable");
                    let i = index.get(&z).expect("interior translate lies in the window");
                    code = code * a as u64 + u64::from(cells[i]);
                }
                *local.entry(code).or_default() += 1;
            }
            local
        })
        .reduce(FxHashMap::default, |mut acc, m| {
            for (k, v) in m {
                *acc.entry(k).or_default() += v;
            }
            acc
        });
    let mut sorted: Vec<(u64, u64)> = counts.into_iter().collect();
    sorted.sort_unstable();
    let total = positions.len() as f64;
    let h = plogp_sum(sorted.iter().map(|&(_, c)| c as f64 / total));
    Ok(EntropyRateReport {
        h_n_hat: h / f_n.len() as f64,
        sample_count: positions.len(),
        distinct_patterns: sorted.len(),
        shape_size: f_n.len(),
    })
}

/// Number of distinct symbols actually used by a pattern.
pub fn symbols_used(p: &Pattern) -> usize {
    p.values.iter().collect::<FxHashSet<_>>().len()
}
