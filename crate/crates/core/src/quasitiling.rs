//! Quasitilings of a finite window: shapes `T_1, …, T_k` with center sets
//! `C_1, …, C_k`, whose tiles are the right translates `T_i·c`.
//!
//! This module contains the exact ε-disjointness decision (a bipartite
//! feasibility problem solved by max flow), the greedy level-by-level
//! construction, the numbering disjointification, the absorption of lower
//! tiles into a set, and maximal marker packings.

use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::density::{check_nested, Window};
use crate::error::{Error, Result};
use crate::flow::Dinic;
use crate::group::{FiniteSubset, GroupElement, GroupSpec, Side};
use crate::index::{as_cuboid, ElementIndex};
use crate::rational::{check_unit_interval, ratio, Fraction, Rational};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct QuasitilingMeta {
    pub eps: Option<Rational>,
    pub covering: Option<Rational>,
    pub maximal: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Quasitiling {
    shapes: Vec<FiniteSubset>,
    centers: Vec<FiniteSubset>,
    window: Window,
    pub meta: QuasitilingMeta,
}

/// A single tile `T_level · center`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tile {
    pub level: usize,
    pub center: GroupElement,
    pub set: FiniteSubset,
}

impl Quasitiling {
    pub fn new(shapes: Vec<FiniteSubset>, centers: Vec<FiniteSubset>, window: Window) -> Result<Self> {
        if shapes.len() != centers.len() {
            return Err(Error::domain(format!(
                "{} shapes but {} center sets",
                shapes.len(),
                centers.len()
            )));
        }
        let group = window.group();
        for (i, (s, c)) in shapes.iter().zip(&centers).enumerate() {
            if s.group() != group || c.group() != group {
                return Err(Error::domain(format!("level {i} belongs to a different group")));
            }
            if !s.contains_identity() {
                return Err(Error::domain(format!("shape {i} does not contain the identity")));
            }
            for center in c {
                for x in s.right_translate_iter(center) {
                    let x = x?;
                    if !window.contains(&x) {
                        return Err(Error::domain(format!(
                            "tile of level {i} at center {center} leaves the window at {x}"
                        )));
                    }
                }
            }
        }
        Ok(Quasitiling {
            shapes,
            centers,
            window,
            meta: QuasitilingMeta::default(),
        })
    }

    pub fn group(&self) -> GroupSpec {
        self.window.group()
    }

    pub fn shapes(&self) -> &[FiniteSubset] {
        &self.shapes
    }

    pub fn centers(&self) -> &[FiniteSubset] {
        &self.centers
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn tile_count(&self) -> usize {
        self.centers.iter().map(FiniteSubset::len).sum()
    }

    /// Tiles ordered by level, then by center in canonical order.
    pub fn tiles(&self) -> impl Iterator<Item = Result<Tile>> + '_ {
        self.shapes
            .iter()
            .zip(&self.centers)
            .enumerate()
            .flat_map(|(level, (s, cs))| {
                cs.iter().map(move |c| {
                    Ok(Tile {
                        level,
                        center: c.clone(),
                        set: s.translate(c, Side::Right)?,
                    })
                })
            })
    }

    pub fn tile_sets(&self) -> Result<Vec<Tile>> {
        self.tiles().collect()
    }

    /// Union of all tiles.
    pub fn union(&self) -> Result<FiniteSubset> {
        let mut all = Vec::new();
        for t in self.tiles() {
            all.extend(t?.set.iter().cloned());
        }
        FiniteSubset::new(self.group(), all)
    }

    /// Fraction of `interior(W, T_k)` covered by the union of tiles.
    pub fn covering_fraction(&self) -> Result<(Rational, usize)> {
        let largest = self
            .shapes
            .last()
            .ok_or_else(|| Error::domain("tiling has no shapes"))?;
        let interior = self.window.interior(largest)?;
        if interior.is_empty() {
            return Err(Error::domain("window interior for the largest shape is empty"));
        }
        let union: FxHashSet<GroupElement> = self.union()?.iter().cloned().collect();
        let hit = interior.iter().filter(|g| union.contains(*g)).count();
        Ok((ratio(hit, interior.len()), interior.len()))
    }

    pub fn to_json(&self) -> Value {
        let window = match as_cuboid(self.window.region()) {
            Some((lo, hi)) => json!({ "lo": lo, "hi": hi }),
            None => self.window.region().to_json(),
        };
        let mut meta = serde_json::Map::new();
        if let Some(eps) = self.meta.eps {
            meta.insert("eps".into(), serde_json::to_value(Fraction::from(eps)).unwrap());
        }
        if let Some(c) = self.meta.covering {
            meta.insert("covering_num".into(), json!(c.numer()));
            meta.insert("covering_den".into(), json!(c.denom()));
        }
        meta.insert("maximal".into(), json!(self.meta.maximal));
        json!({
            "group": self.group().to_string(),
            "shapes": self.shapes.iter().map(FiniteSubset::to_json).collect::<Vec<_>>(),
            "centers": self.centers.iter().map(FiniteSubset::to_json).collect::<Vec<_>>(),
            "window": window,
            "meta": meta,
        })
    }

    pub fn from_json(value: &Value) -> Result<Self> {
        let group: GroupSpec = value
            .get("group")
            .and_then(Value::as_str)
            .ok_or_else(|| Error::Format("quasitiling needs a `group` string".into()))?
            .parse()?;
        let window = Window::new(window_from_json(group, field(value, "window")?)?)?;
        let list = |name: &str| -> Result<Vec<FiniteSubset>> {
            field(value, name)?
                .as_array()
                .ok_or_else(|| Error::Format(format!("`{name}` must be an array")))?
                .iter()
                .map(|v| FiniteSubset::from_json(group, v))
                .collect()
        };
        let mut q = Quasitiling::new(list("shapes")?, list("centers")?, window)?;
        if let Some(meta) = value.get("meta") {
            if let Some(eps) = meta.get("eps") {
                let f: Fraction =
                    serde_json::from_value(eps.clone()).map_err(|e| Error::Format(format!("meta.eps: {e}")))?;
                q.meta.eps = Some(f.into());
            }
            if let (Some(n), Some(d)) = (
                meta.get("covering_num").and_then(Value::as_i64),
                meta.get("covering_den").and_then(Value::as_i64),
            ) {
                q.meta.covering = Some(Rational::new(n, d));
            }
            q.meta.maximal = meta.get("maximal").and_then(Value::as_bool).unwrap_or(false);
        }
        Ok(q)
    }
}

fn field<'a>(v: &'a Value, name: &str) -> Result<&'a Value> {
    v.get(name)
        .ok_or_else(|| Error::Format(format!("missing field `{name}`")))
}

/// A window is either `{ "lo": [...], "hi": [...] }` (half-open box) or an
/// explicit array of elements.
pub fn window_from_json(group: GroupSpec, v: &Value) -> Result<FiniteSubset> {
    if let (Some(lo), Some(hi)) = (v.get("lo"), v.get("hi")) {
        let lo: Vec<i64> = serde_json::from_value(lo.clone()).map_err(|e| Error::Format(format!("window.lo: {e}")))?;
        let hi: Vec<i64> = serde_json::from_value(hi.clone()).map_err(|e| Error::Format(format!("window.hi: {e}")))?;
        return FiniteSubset::cuboid(group, &lo, &hi);
    }
    FiniteSubset::from_json(group, v)
}

// ---------------------------------------------------------------------------
// ε-disjointness

/// Kept elements per tile; tiles are indexed in `Quasitiling::tiles` order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DisjointnessCertificate {
    /// `(element, tile index)` for every covered element, in canonical element order.
    pub assignment: Vec<(GroupElement, usize)>,
    pub retained: Vec<usize>,
    pub tile_sizes: Vec<usize>,
}

impl DisjointnessCertificate {
    pub fn retained_fraction(&self, tile: usize) -> Rational {
        ratio(self.retained[tile], self.tile_sizes[tile])
    }

    fn from_owner(group: GroupSpec, owner: FxHashMap<GroupElement, usize>, tile_sizes: Vec<usize>) -> Self {
        let _ = group;
        let mut assignment: Vec<(GroupElement, usize)> = owner.into_iter().collect();
        assignment.sort_unstable();
        let mut retained = vec![0; tile_sizes.len()];
        for (_, t) in &assignment {
            retained[*t] += 1;
        }
        DisjointnessCertificate {
            assignment,
            retained,
            tile_sizes,
        }
    }

    /// Checks the certificate against a tiling: every assigned element lies in
    /// its tile, and every tile keeps more than `(1-ε)` of itself.
    pub fn verify(&self, tiling: &Quasitiling, eps: &Rational) -> Result<bool> {
        let tiles = tiling.tile_sets()?;
        if tiles.len() != self.retained.len() {
            return Ok(false);
        }
        let mut kept = vec![0usize; tiles.len()];
        let mut seen = FxHashSet::default();
        for (x, t) in &self.assignment {
            if *t >= tiles.len() || !tiles[*t].set.contains(x) || !seen.insert(x) {
                return Ok(false);
            }
            kept[*t] += 1;
        }
        let one = Rational::from_integer(1);
        Ok(tiles
            .iter()
            .zip(&kept)
            .all(|(t, &k)| ratio(k, 1) > (one - *eps) * ratio(t.set.len(), 1)))
    }
}

/// A set of tiles whose combined demand exceeds the contested elements
/// available to them (a Hall-condition violation).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct HallViolation {
    pub tiles: Vec<usize>,
    pub demand: usize,
    pub available: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct EpsDisjointOutcome {
    pub pass: bool,
    pub certificate: Option<DisjointnessCertificate>,
    pub counterexample: Option<HallViolation>,
}

/// Least number of elements a tile of size `n` must keep: the smallest
/// integer strictly greater than `(1-ε)·n`.
pub fn required_retention(n: usize, eps: &Rational) -> usize {
    let x = (Rational::from_integer(1) - *eps) * ratio(n, 1);
    (x.floor().to_integer() + 1).max(0) as usize
}

/// Exact decision of ε-disjointness.
pub fn eps_disjoint_check(tiling: &Quasitiling, eps: &Rational) -> Result<EpsDisjointOutcome> {
    check_unit_interval("eps", eps, true)?;
    let tiles = tiling.tile_sets()?;
    let win = ElementIndex::new(tiling.window().region());
    let wlen = tiling.window().len();

    // covering tiles per window cell
    let mut cover_count = vec![0u32; wlen];
    for t in &tiles {
        for x in &t.set {
            let i = win.get(x).expect("tiles lie in the window");
            cover_count[i] += 1;
        }
    }

    let demand: Vec<usize> = tiles.iter().map(|t| required_retention(t.set.len(), eps)).collect();
    let mut owner: FxHashMap<GroupElement, usize> = FxHashMap::default();
    let mut residual = demand.clone();
    let mut contested: FxHashMap<usize, usize> = FxHashMap::default(); // window idx -> node
    let mut contested_elems: Vec<GroupElement> = Vec::new();
    for (ti, t) in tiles.iter().enumerate() {
        for x in &t.set {
            let i = win.get(x).expect("tiles lie in the window");
            if cover_count[i] == 1 {
                owner.insert(x.clone(), ti);
                residual[ti] = residual[ti].saturating_sub(1);
            } else if let std::collections::hash_map::Entry::Vacant(slot) = contested.entry(i) {
                slot.insert(contested_elems.len());
                contested_elems.push(x.clone());
            }
        }
    }

    let nt = tiles.len();
    let ne = contested_elems.len();
    let (src, sink) = (0, 1);
    let tile_node = |t: usize| 2 + t;
    let elem_node = |e: usize| 2 + nt + e;
    let mut net = Dinic::new(2 + nt + ne);
    let mut tile_edges: Vec<Vec<(usize, (usize, usize))>> = vec![Vec::new(); nt];
    let total_demand: u64 = residual.iter().map(|&d| d as u64).sum();
    for (ti, t) in tiles.iter().enumerate() {
        if residual[ti] > 0 {
            net.add_edge(src, tile_node(ti), residual[ti] as u32);
        }
        for x in &t.set {
            let i = win.get(x).expect("tiles lie in the window");
            if let Some(&e) = contested.get(&i) {
                let h = net.add_edge(tile_node(ti), elem_node(e), 1);
                tile_edges[ti].push((e, h));
            }
        }
    }
    for e in 0..ne {
        net.add_edge(elem_node(e), sink, 1);
    }
    let flow = net.max_flow(src, sink);

    if flow == total_demand {
        let mut taken = vec![false; ne];
        for (ti, edges) in tile_edges.iter().enumerate() {
            for &(e, h) in edges {
                if net.flow_on(h) > 0 {
                    taken[e] = true;
                    owner.insert(contested_elems[e].clone(), ti);
                }
            }
        }
        // leftover contested elements go to their first covering tile
        for (ti, edges) in tile_edges.iter().enumerate() {
            for &(e, _) in edges {
                if !taken[e] {
                    taken[e] = true;
                    owner.insert(contested_elems[e].clone(), ti);
                }
            }
        }
        let sizes = tiles.iter().map(|t| t.set.len()).collect();
        return Ok(EpsDisjointOutcome {
            pass: true,
            certificate: Some(DisjointnessCertificate::from_owner(tiling.group(), owner, sizes)),
            counterexample: None,
        });
    }

    let reach = net.residual_reachable(src);
    let bad: Vec<usize> = (0..nt).filter(|&t| reach[tile_node(t)]).collect();
    let demand_sum: usize = bad.iter().map(|&t| residual[t]).sum();
    let mut nbrs = FxHashSet::default();
    for &t in &bad {
        nbrs.extend(tile_edges[t].iter().map(|&(e, _)| e));
    }
    debug_assert!(demand_sum > nbrs.len());
    Ok(EpsDisjointOutcome {
        pass: false,
        certificate: None,
        counterexample: Some(HallViolation {
            tiles: bad,
            demand: demand_sum,
            available: nbrs.len(),
        }),
    })
}

// ---------------------------------------------------------------------------
// greedy construction

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreedyReport {
    pub eps: Fraction,
    pub levels: usize,
    pub centers_per_level: Vec<usize>,
    pub covering: Fraction,
    pub covering_bound: f64,
    pub interior_size: usize,
}

/// Smallest integer `m` with `m >= ε·n`; a translate with fewer than `m`
/// covered elements is addable.
fn addable_limit(n: usize, eps: &Rational) -> usize {
    let x = *eps * ratio(n, 1);
    x.ceil().to_integer() as usize
}

/// Counts covered elements of `shape·g`, stopping as soon as `limit` is reached.
fn covered_count(
    shape: &FiniteSubset,
    g: &GroupElement,
    covered: &[bool],
    index: &ElementIndex,
    limit: usize,
) -> Result<usize> {
    let mut n = 0;
    for x in shape.right_translate_iter(g) {
        let x = x?;
        if let Some(i) = index.get(&x) {
            if covered[i] {
                n += 1;
                if n >= limit {
                    break;
                }
            }
        }
    }
    Ok(n)
}

/// Level-by-level greedy construction, largest shape first. A candidate
/// center `g` (with `T_j g` inside the window, scanned in canonical order) is
/// added iff `|H ∩ T_j g| < ε|T_j|`, where `H` is everything placed so far.
pub fn greedy_construct(
    window: &Window,
    shapes: &[FiniteSubset],
    eps: &Rational,
) -> Result<(Quasitiling, GreedyReport)> {
    check_unit_interval("eps", eps, false)?;
    if *eps >= Rational::new(1, 2) {
        return Err(Error::domain(format!("eps = {eps} must be below 1/2")));
    }
    if shapes.is_empty() {
        return Err(Error::domain("at least one shape is required"));
    }
    check_nested(shapes)?;
    let group = window.group();
    for (i, s) in shapes.iter().enumerate() {
        if s.group() != group {
            return Err(Error::domain(format!("shape {i} belongs to a different group")));
        }
        if !s.contains_identity() {
            return Err(Error::domain(format!("shape {i} does not contain the identity")));
        }
    }
    let largest = shapes.last().expect("nonempty");
    if window.interior(largest)?.is_empty() {
        return Err(Error::domain("the largest shape does not fit in the window"));
    }

    let index = ElementIndex::new(window.region());
    let mut covered = vec![false; window.len()];
    let mut centers: Vec<Vec<GroupElement>> = vec![Vec::new(); shapes.len()];
    for j in (0..shapes.len()).rev() {
        let shape = &shapes[j];
        let limit = addable_limit(shape.len(), eps);
        for g in window.interior(shape)?.iter() {
            if covered_count(shape, g, &covered, &index, limit)? < limit {
                for x in shape.right_translate_iter(g) {
                    let i = index.get(&x?).expect("interior translates stay in the window");
                    covered[i] = true;
                }
                centers[j].push(g.clone());
            }
        }
    }
    let centers = centers
        .into_iter()
        .map(|c| FiniteSubset::new(group, c))
        .collect::<Result<Vec<_>>>()?;
    let mut tiling = Quasitiling::new(shapes.to_vec(), centers, window.clone())?;
    let (covering, interior_size) = tiling.covering_fraction()?;
    tiling.meta = QuasitilingMeta {
        eps: Some(*eps),
        covering: Some(covering),
        maximal: true,
    };
    let report = GreedyReport {
        eps: (*eps).into(),
        levels: shapes.len(),
        centers_per_level: tiling.centers().iter().map(FiniteSubset::len).collect(),
        covering: covering.into(),
        covering_bound: covering_bound(eps, shapes.len()),
        interior_size,
    };
    Ok((tiling, report))
}

/// `1 - (1 - ε/2)^k`.
pub fn covering_bound(eps: &Rational, k: usize) -> f64 {
    let e = crate::rational::to_f64(eps);
    1.0 - (1.0 - e / 2.0).powi(k as i32)
}

/// Exact form of [`covering_bound`].
pub fn covering_bound_exact(eps: &Rational, k: usize) -> Rational {
    let base = Rational::from_integer(1) - *eps / Rational::from_integer(2);
    let mut p = Rational::from_integer(1);
    for _ in 0..k {
        p *= base;
    }
    Rational::from_integer(1) - p
}

/// Candidates `(level, g)` that could still be added: `g` in the interior for
/// `T_j` with `|H_j ∩ T_j g| < ε|T_j|`, `H_j` the union of levels `>= j`.
pub fn maximality_violations(tiling: &Quasitiling, eps: &Rational) -> Result<Vec<(usize, GroupElement)>> {
    let window = tiling.window();
    let index = ElementIndex::new(window.region());
    let mut covered = vec![false; window.len()];
    let mut out = Vec::new();
    for j in (0..tiling.shapes().len()).rev() {
        let shape = &tiling.shapes()[j];
        for c in &tiling.centers()[j] {
            for x in shape.right_translate_iter(c) {
                covered[index.get(&x?).expect("tiles lie in the window")] = true;
            }
        }
        let limit = addable_limit(shape.len(), eps);
        for g in window.interior(shape)?.iter() {
            if covered_count(shape, g, &covered, &index, limit)? < limit {
                out.push((j, g.clone()));
            }
        }
    }
    Ok(out)
}

/// Certificate that keeps, for each tile in insertion order (largest level
/// first, canonical centers), the elements not claimed by earlier tiles.
pub fn insertion_order_certificate(tiling: &Quasitiling) -> Result<DisjointnessCertificate> {
    let tiles = tiling.tile_sets()?;
    let mut order: Vec<usize> = (0..tiles.len()).collect();
    // tiles() is level-ascending; insertion went level-descending
    order.sort_by(|&a, &b| tiles[b].level.cmp(&tiles[a].level).then(a.cmp(&b)));
    let mut owner: FxHashMap<GroupElement, usize> = FxHashMap::default();
    for t in order {
        for x in &tiles[t].set {
            owner.entry(x.clone()).or_insert(t);
        }
    }
    let sizes = tiles.iter().map(|t| t.set.len()).collect();
    Ok(DisjointnessCertificate::from_owner(tiling.group(), owner, sizes))
}

// ---------------------------------------------------------------------------
// disjointification

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DisjointifyReport {
    pub tiles: usize,
    pub shapes_out: usize,
    pub min_retention: Fraction,
    pub centers_retained: bool,
    pub retained: Vec<usize>,
}

/// Makes a quasitiling disjoint by numbering shape elements.
///
/// The elements of the union of shapes are numbered with the identity first
/// and the rest in canonical order. Within tile `T_i c` an element `x` carries
/// the number of `x c⁻¹`; it stays in the tile where its number is smallest,
/// ties going to the lower level and then the smaller center. The kept parts
/// become the shapes of the output, which groups tiles by kept shape.
pub fn disjointify(tiling: &Quasitiling) -> Result<(Quasitiling, DisjointnessCertificate, DisjointifyReport)> {
    let group = tiling.group();
    let e = group.identity();
    let mut all = Vec::new();
    for s in tiling.shapes() {
        all.extend(s.iter().cloned());
    }
    let universe = FiniteSubset::new(group, all)?;
    let e_pos = universe.index_of(&e).expect("shapes contain the identity");
    let number = |rel: &GroupElement| -> usize {
        let i = universe.index_of(rel).expect("relative position lies in a shape");
        match i.cmp(&e_pos) {
            std::cmp::Ordering::Equal => 0,
            std::cmp::Ordering::Less => i + 1,
            std::cmp::Ordering::Greater => i,
        }
    };

    let tiles = tiling.tile_sets()?;
    let mut best: FxHashMap<GroupElement, ((usize, usize, usize), usize)> = FxHashMap::default();
    for (ti, t) in tiles.iter().enumerate() {
        let cinv = group.inv(&t.center)?;
        for x in &t.set {
            if !tiling.window().contains(x) {
                return Err(Error::domain(format!("tile element {x} lies outside the window")));
            }
            let rel = group.mul(x, &cinv)?;
            // ti orders tiles by (level, canonical center)
            let key = (number(&rel), t.level, ti);
            match best.get(x) {
                Some((k, _)) if *k <= key => {}
                _ => {
                    best.insert(x.clone(), (key, ti));
                }
            }
        }
    }
    let owner: FxHashMap<GroupElement, usize> = best.into_iter().map(|(x, (_, t))| (x, t)).collect();

    let mut kept: Vec<Vec<GroupElement>> = vec![Vec::new(); tiles.len()];
    for (x, &t) in &owner {
        kept[t].push(x.clone());
    }
    let mut shape_ids: FxHashMap<FiniteSubset, usize> = FxHashMap::default();
    let mut shapes_out: Vec<FiniteSubset> = Vec::new();
    let mut centers_out: Vec<Vec<GroupElement>> = Vec::new();
    for (ti, t) in tiles.iter().enumerate() {
        let cinv = group.inv(&t.center)?;
        let rel = kept[ti]
            .iter()
            .map(|x| group.mul(x, &cinv))
            .collect::<Result<Vec<_>>>()?;
        let shape = FiniteSubset::new(group, rel)?;
        if !shape.contains(&e) {
            return Err(Error::domain(format!(
                "center {} of level {} is claimed by another tile (coinciding centers)",
                t.center, t.level
            )));
        }
        let id = *shape_ids.entry(shape.clone()).or_insert_with(|| {
            shapes_out.push(shape);
            centers_out.push(Vec::new());
            shapes_out.len() - 1
        });
        centers_out[id].push(t.center.clone());
    }
    let centers_out = centers_out
        .into_iter()
        .map(|c| FiniteSubset::new(group, c))
        .collect::<Result<Vec<_>>>()?;
    let out = Quasitiling::new(shapes_out, centers_out, tiling.window().clone())?;
    let sizes: Vec<usize> = tiles.iter().map(|t| t.set.len()).collect();
    let cert = DisjointnessCertificate::from_owner(group, owner, sizes.clone());
    let min_retention = cert
        .retained
        .iter()
        .zip(&sizes)
        .map(|(&k, &n)| ratio(k, n))
        .min()
        .unwrap_or_else(|| Rational::from_integer(1));
    let report = DisjointifyReport {
        tiles: tiles.len(),
        shapes_out: out.shapes().len(),
        min_retention: min_retention.into(),
        centers_retained: true,
        retained: cert.retained.clone(),
    };
    Ok((out, cert, report))
}

/// Pairwise disjointness of all tiles, by exhaustive element counting.
pub fn tiles_pairwise_disjoint(tiling: &Quasitiling) -> Result<bool> {
    let mut seen = FxHashSet::default();
    for t in tiling.tiles() {
        for x in t?.set.iter() {
            if !seen.insert(x.clone()) {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

// ---------------------------------------------------------------------------
// absorption of lower tiles

/// One level of a tile hierarchy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TileLevel {
    pub shape: Vec<GroupElement>,
    pub centers: Vec<GroupElement>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Level {
    pub shape: FiniteSubset,
    pub centers: FiniteSubset,
}

impl Level {
    fn tiles(&self) -> Result<Vec<(GroupElement, FiniteSubset)>> {
        self.centers
            .iter()
            .map(|c| Ok((c.clone(), self.shape.translate(c, Side::Right)?)))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AbsorbReport {
    pub input_size: usize,
    pub output_size: usize,
    pub absorbed_per_level: Vec<usize>,
    pub no_boundary_tiles: bool,
    pub within_bound: bool,
    pub bound_size: usize,
}

/// Grows `s_tilde` by absorbing, level by level in the given (descending)
/// order, every tile that meets the current set.
pub fn absorb_lower_tiles(s_tilde: &FiniteSubset, lower: &[Level]) -> Result<(FiniteSubset, AbsorbReport)> {
    let group = s_tilde.group();
    let tiles: Vec<Vec<(GroupElement, FiniteSubset)>> = lower.iter().map(Level::tiles).collect::<Result<_>>()?;

    // each level: tiles pairwise disjoint
    let mut owners: Vec<FxHashMap<GroupElement, usize>> = Vec::with_capacity(tiles.len());
    for (l, level) in tiles.iter().enumerate() {
        let mut own: FxHashMap<GroupElement, usize> = FxHashMap::default();
        for (ti, (c, t)) in level.iter().enumerate() {
            for x in t {
                if let Some(&other) = own.get(x) {
                    return Err(Error::domain(format!(
                        "tiles at centers {} and {c} of level {l} overlap at {x}",
                        level[other].0
                    )));
                }
                own.insert(x.clone(), ti);
            }
        }
        owners.push(own);
    }
    // a tile meets at most one tile of each higher level; levels are given
    // highest first, so "higher" means a smaller list position
    for low in 0..tiles.len() {
        for high in 0..low {
            for (c, t) in &tiles[low] {
                let hits: FxHashSet<usize> = t.iter().filter_map(|x| owners[high].get(x).copied()).collect();
                if hits.len() > 1 {
                    let mut hits: Vec<usize> = hits.into_iter().collect();
                    hits.sort_unstable();
                    return Err(Error::domain(format!(
                        "tile at {c} (list position {low}) meets tiles at {} and {} (list position {high})",
                        tiles[high][hits[0]].0, tiles[high][hits[1]].0
                    )));
                }
            }
        }
    }

    let mut s: FxHashSet<GroupElement> = s_tilde.iter().cloned().collect();
    let mut absorbed_per_level = Vec::with_capacity(tiles.len());
    let mut absorbed_tiles: Vec<Vec<bool>> = Vec::with_capacity(tiles.len());
    for level in &tiles {
        let take: Vec<bool> = level.iter().map(|(_, t)| t.iter().any(|x| s.contains(x))).collect();
        for ((_, t), &tk) in level.iter().zip(&take) {
            if tk {
                s.extend(t.iter().cloned());
            }
        }
        absorbed_per_level.push(take.iter().filter(|&&b| b).count());
        absorbed_tiles.push(take);
    }

    // no tile of any level may end on the boundary of S
    for (l, level) in tiles.iter().enumerate() {
        for (c, t) in level {
            let inside = t.iter().filter(|x| s.contains(*x)).count();
            if inside > 0 && inside < t.len() {
                let culprit = (l + 1..tiles.len()).find_map(|m| {
                    tiles[m]
                        .iter()
                        .zip(&absorbed_tiles[m])
                        .find(|((_, u), &tk)| tk && u.iter().any(|x| t.contains(x)))
                        .map(|((cu, _), _)| (m, cu.clone()))
                });
                let detail = match culprit {
                    Some((m, cu)) => format!("; it was cut by the absorbed tile at {cu} (list position {m})"),
                    None => String::new(),
                };
                return Err(Error::domain(format!(
                    "tile at {c} (list position {l}) lies on the boundary of the absorbed set{detail}"
                )));
            }
        }
    }

    // S ⊆ T_1T_1⁻¹ ⋯ T_{k-1}T_{k-1}⁻¹ · S̃, built from the innermost factor out
    let mut bound = s_tilde.clone();
    for level in lower {
        let diff = level.shape.product(&level.shape.inverse()?)?;
        bound = diff.product(&bound)?;
    }
    let out = FiniteSubset::new(group, s)?;
    let within_bound = out.is_subset(&bound);
    let report = AbsorbReport {
        input_size: s_tilde.len(),
        output_size: out.len(),
        absorbed_per_level,
        no_boundary_tiles: true,
        within_bound,
        bound_size: bound.len(),
    };
    Ok((out, report))
}

// ---------------------------------------------------------------------------
// marker packings

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MarkerSet {
    pub markers: FiniteSubset,
    /// `F⁻¹F`; every interior position lies in `F⁻¹F · V`.
    pub covering_shape: FiniteSubset,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MarkerReport {
    pub markers: usize,
    pub interior_size: usize,
    pub pairwise_disjoint: bool,
    pub interior_covered: bool,
}

/// Greedy maximal packing of right translates `F·v`, `v` scanned over the
/// window interior in canonical order.
pub fn maximal_marker_set(window: &Window, f: &FiniteSubset) -> Result<MarkerSet> {
    let interior = window.interior(f)?;
    if interior.is_empty() {
        return Err(Error::domain("the marker shape does not fit in the window"));
    }
    let index = ElementIndex::new(window.region());
    let mut occupied = vec![false; window.len()];
    let mut v = Vec::new();
    for g in &interior {
        let cells = f
            .right_translate_iter(g)
            .map(|x| Ok(index.get(&x?).expect("interior translates stay in the window")))
            .collect::<Result<Vec<usize>>>()?;
        if cells.iter().all(|&i| !occupied[i]) {
            for i in cells {
                occupied[i] = true;
            }
            v.push(g.clone());
        }
    }
    Ok(MarkerSet {
        markers: FiniteSubset::new(window.group(), v)?,
        covering_shape: f.inverse()?.product(f)?,
    })
}

/// Exhaustive check of the packing and covering properties.
pub fn verify_marker_set(window: &Window, f: &FiniteSubset, m: &MarkerSet) -> Result<MarkerReport> {
    let mut seen = FxHashSet::default();
    let mut disjoint = true;
    for v in &m.markers {
        for x in f.right_translate_iter(v) {
            if !seen.insert(x?) {
                disjoint = false;
            }
        }
    }
    let reach: FxHashSet<GroupElement> = m.covering_shape.product(&m.markers)?.iter().cloned().collect();
    let interior = window.interior(f)?;
    let covered = interior.iter().all(|g| reach.contains(g));
    Ok(MarkerReport {
        markers: m.markers.len(),
        interior_size: interior.len(),
        pairwise_disjoint: disjoint,
        interior_covered: covered,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(d: u32) -> GroupSpec {
        GroupSpec::Zd(d)
    }

    fn el(c: &[i64]) -> GroupElement {
        GroupElement::new(c)
    }

    fn interval(lo: i64, hi: i64) -> FiniteSubset {
        FiniteSubset::cuboid(z(1), &[lo], &[hi]).unwrap()
    }

    fn pts1(v: &[i64]) -> FiniteSubset {
        FiniteSubset::new(z(1), v.iter().map(|&x| el(&[x]))).unwrap()
    }

    /// Exhaustive ε-disjointness: try every assignment of contested elements.
    fn brute_eps_disjoint(tiles: &[Vec<i64>], eps: Rational) -> bool {
        let mut elems: Vec<i64> = tiles.iter().flatten().copied().collect();
        elems.sort_unstable();
        elems.dedup();
        let holders: Vec<Vec<usize>> = elems
            .iter()
            .map(|x| (0..tiles.len()).filter(|&t| tiles[t].contains(x)).collect())
            .collect();
        let mut choice = vec![0usize; elems.len()];
        loop {
            let mut kept = vec![0usize; tiles.len()];
            for (i, h) in holders.iter().enumerate() {
                kept[h[choice[i]]] += 1;
            }
            let ok = tiles.iter().zip(&kept).all(|(t, &k)| {
                Rational::from_integer((t.len() - k) as i64) < eps * Rational::from_integer(t.len() as i64)
            });
            if ok {
                return true;
            }
            let mut i = 0;
            loop {
                if i == elems.len() {
                    return false;
                }
                choice[i] += 1;
                if choice[i] < holders[i].len() {
                    break;
                }
                choice[i] = 0;
                i += 1;
            }
        }
    }

    fn tiling_1d(shapes: Vec<FiniteSubset>, centers: Vec<Vec<i64>>, lo: i64, hi: i64) -> Quasitiling {
        Quasitiling::new(
            shapes,
            centers.iter().map(|c| pts1(c)).collect(),
            Window::new(interval(lo, hi)).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn retention_threshold_is_strict() {
        assert_eq!(required_retention(10, &Rational::new(1, 5)), 9);
        assert_eq!(required_retention(10, &Rational::new(1, 4)), 8);
        assert_eq!(required_retention(1, &Rational::new(1, 2)), 1);
        assert_eq!(required_retention(4, &Rational::from_integer(1)), 1);
    }

    #[test]
    fn disjoint_tiles_pass() {
        let t = tiling_1d(vec![interval(0, 3)], vec![vec![0, 3, 6]], 0, 9);
        for eps in [Rational::new(1, 100), Rational::new(1, 2), Rational::from_integer(1)] {
            let out = eps_disjoint_check(&t, &eps).unwrap();
            assert!(out.pass);
            let cert = out.certificate.unwrap();
            assert_eq!(cert.retained, vec![3, 3, 3]);
            assert!(cert.verify(&t, &eps).unwrap());
        }
    }

    #[test]
    fn identical_singletons_fail() {
        let shape = pts1(&[0]);
        let t = tiling_1d(vec![shape.clone(), shape], vec![vec![5], vec![5]], 0, 10);
        assert!(!brute_eps_disjoint(&[vec![5], vec![5]], Rational::new(1, 2)));
        let out = eps_disjoint_check(&t, &Rational::new(1, 2)).unwrap();
        assert!(!out.pass);
        let cx = out.counterexample.unwrap();
        assert!(cx.demand > cx.available);
    }

    #[test]
    fn overlapping_intervals_pass() {
        let shape = interval(0, 10);
        let t = tiling_1d(vec![shape], vec![vec![0, 9]], 0, 19);
        let eps = Rational::new(1, 5);
        assert!(brute_eps_disjoint(&[(0..10).collect(), (9..19).collect()], eps));
        let out = eps_disjoint_check(&t, &eps).unwrap();
        assert!(out.pass);
        let cert = out.certificate.unwrap();
        assert!(cert.verify(&t, &eps).unwrap());
        assert_eq!(cert.retained.iter().sum::<usize>(), 19);
        assert!(eps_disjoint_check(&t, &Rational::from_integer(0)).is_err());
    }

    #[test]
    fn flow_agrees_with_exhaustive_assignment() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..300 {
            let ntiles = rng.gen_range(1..5);
            let len = rng.gen_range(1..5);
            let centers: Vec<i64> = (0..ntiles).map(|_| rng.gen_range(0..6)).collect();
            let mut uniq = centers.clone();
            uniq.sort_unstable();
            uniq.dedup();
            let eps = Rational::new(rng.gen_range(1..=8), 8);
            let t = tiling_1d(vec![interval(0, len)], vec![uniq.clone()], 0, 12);
            let raw: Vec<Vec<i64>> = uniq.iter().map(|c| (*c..c + len).collect()).collect();
            let brute = brute_eps_disjoint(&raw, eps);
            let out = eps_disjoint_check(&t, &eps).unwrap();
            assert_eq!(out.pass, brute, "centers {uniq:?} len {len} eps {eps}");
            if let Some(c) = out.certificate {
                assert!(c.verify(&t, &eps).unwrap());
            }
        }
    }

    #[test]
    fn greedy_1d_example() {
        let w = Window::new(interval(0, 12)).unwrap();
        let (t, rep) = greedy_construct(&w, &[interval(0, 4)], &Rational::new(1, 4)).unwrap();
        assert_eq!(t.centers()[0], pts1(&[0, 4, 8]));
        assert_eq!(Rational::from(rep.covering), Rational::from_integer(1));
        assert!(maximality_violations(&t, &Rational::new(1, 4)).unwrap().is_empty());
        assert!(t.meta.maximal);
    }

    #[test]
    fn greedy_preconditions() {
        let w = Window::new(interval(0, 3)).unwrap();
        assert!(greedy_construct(&w, &[interval(0, 4)], &Rational::new(1, 4)).is_err());
        let w = Window::new(interval(0, 30)).unwrap();
        assert!(greedy_construct(&w, &[interval(0, 4)], &Rational::new(1, 2)).is_err());
        assert!(greedy_construct(&w, &[interval(0, 4), pts1(&[0, 7])], &Rational::new(1, 4)).is_err());
    }

    #[test]
    fn greedy_small_level_can_be_empty() {
        // largest shape tiles the window exactly; smaller level gets nothing
        let w = Window::new(interval(0, 16)).unwrap();
        let (t, _) = greedy_construct(&w, &[interval(0, 2), interval(0, 8)], &Rational::new(1, 10)).unwrap();
        assert!(t.centers()[0].is_empty());
        assert_eq!(t.centers()[1].len(), 2);
    }

    #[test]
    fn greedy_2d_example() {
        let g = z(2);
        let w = Window::cube(g, 64).unwrap();
        let shapes = [FiniteSubset::cube(g, 4).unwrap(), FiniteSubset::cube(g, 8).unwrap()];
        let eps = Rational::new(1, 4);
        let (t, rep) = greedy_construct(&w, &shapes, &eps).unwrap();
        assert!(eps_disjoint_check(&t, &eps).unwrap().pass);
        assert!(insertion_order_certificate(&t).unwrap().verify(&t, &eps).unwrap());
        assert!(Rational::from(rep.covering) >= covering_bound_exact(&eps, 2));
        assert!(maximality_violations(&t, &eps).unwrap().is_empty());
    }

    #[test]
    fn greedy_heisenberg() {
        let h = GroupSpec::Heisenberg3;
        let w = Window::new(FiniteSubset::cuboid(h, &[0, 0, 0], &[6, 6, 12]).unwrap()).unwrap();
        let shapes = [
            FiniteSubset::cuboid(h, &[0, 0, 0], &[1, 2, 2]).unwrap(),
            FiniteSubset::cuboid(h, &[0, 0, 0], &[2, 2, 4]).unwrap(),
        ];
        let eps = Rational::new(1, 5);
        let (t, rep) = greedy_construct(&w, &shapes, &eps).unwrap();
        assert!(eps_disjoint_check(&t, &eps).unwrap().pass);
        assert!(maximality_violations(&t, &eps).unwrap().is_empty());
        assert!(crate::rational::to_f64(&rep.covering.into()) >= rep.covering_bound);
    }

    #[test]
    fn disjointify_examples() {
        let t = tiling_1d(vec![interval(0, 3)], vec![vec![0, 3]], 0, 6);
        let (out, _, rep) = disjointify(&t).unwrap();
        assert_eq!(out.union().unwrap(), t.union().unwrap());
        assert_eq!(rep.retained, vec![3, 3]);
        assert_eq!(out.shapes(), t.shapes());

        let t = tiling_1d(vec![interval(0, 10)], vec![vec![0, 9]], 0, 19);
        let (out, cert, _) = disjointify(&t).unwrap();
        assert!(tiles_pairwise_disjoint(&out).unwrap());
        let kept: Vec<FiniteSubset> = out.tiles().map(|t| t.unwrap().set).collect();
        assert!(kept.contains(&interval(0, 9)));
        assert!(kept.contains(&interval(9, 19)));
        assert_eq!(cert.retained, vec![9, 10]);
    }

    #[test]
    fn disjointify_2d_strip() {
        let g = z(2);
        let shape = FiniteSubset::cube(g, 4).unwrap();
        let centers = FiniteSubset::from_coords(g, &[&[0, 0], &[2, 0]]).unwrap();
        let t = Quasitiling::new(vec![shape], vec![centers], Window::cube(g, 8).unwrap()).unwrap();
        let (out, cert, rep) = disjointify(&t).unwrap();
        assert!(tiles_pairwise_disjoint(&out).unwrap());
        assert!(rep.centers_retained);
        // strip x∈{2,3}: relative (x,y) in tile 0, (x-2,y) in tile 1; smaller index wins
        for (x, owner) in &cert.assignment {
            let c = x.coords();
            if c[0] >= 2 && c[0] < 4 {
                assert_eq!(*owner, 1, "{x}");
            }
        }
        assert_eq!(out.union().unwrap(), t.union().unwrap());
    }

    #[test]
    fn numbering_rule_can_retain_less_than_one_minus_eps() {
        // A = [0,2)x[1,3) loses (1,2) to B and (1,1) to D, each of which wins
        // on relative index; the input is still 2/5-disjoint
        let g = z(2);
        let shape = FiniteSubset::cube(g, 2).unwrap();
        let centers = FiniteSubset::from_coords(g, &[&[0, 1], &[1, 2], &[1, 0]]).unwrap();
        let t = Quasitiling::new(vec![shape], vec![centers], Window::cube(g, 4).unwrap()).unwrap();
        let eps = Rational::new(2, 5);
        assert!(eps_disjoint_check(&t, &eps).unwrap().pass);
        let (out, _, rep) = disjointify(&t).unwrap();
        assert!(tiles_pairwise_disjoint(&out).unwrap());
        assert_eq!(Rational::from(rep.min_retention), Rational::new(1, 2));
        assert!(Rational::from(rep.min_retention) < Rational::from_integer(1) - eps);
    }

    #[test]
    fn disjointify_rejects_coinciding_centers() {
        let t = tiling_1d(vec![interval(0, 2), interval(0, 4)], vec![vec![3], vec![3]], 0, 10);
        assert!(disjointify(&t).is_err());
    }

    fn level1(shape_len: i64, centers: &[i64]) -> Level {
        Level {
            shape: interval(0, shape_len),
            centers: pts1(centers),
        }
    }

    #[test]
    fn absorb_examples() {
        let lower = [level1(2, &(0..10).map(|i| 2 * i).collect::<Vec<_>>())];
        let (s, rep) = absorb_lower_tiles(&interval(3, 9), &lower).unwrap();
        assert_eq!(s, interval(2, 10));
        assert!(rep.no_boundary_tiles && rep.within_bound);

        let far = [level1(2, &[20, 22])];
        let (s, rep) = absorb_lower_tiles(&interval(3, 9), &far).unwrap();
        assert_eq!(s, interval(3, 9));
        assert_eq!(rep.absorbed_per_level, vec![0]);
    }

    #[test]
    fn absorb_cascade() {
        // level 2: length 4 on 4Z; level 1: length 2 on 2Z
        let lower = [
            level1(4, &(0..6).map(|i| 4 * i).collect::<Vec<_>>()),
            level1(2, &(0..12).map(|i| 2 * i).collect::<Vec<_>>()),
        ];
        let (s, rep) = absorb_lower_tiles(&interval(5, 9), &lower).unwrap();
        assert_eq!(s, interval(4, 12));
        for lvl in &lower {
            for c in &lvl.centers {
                let t = lvl.shape.translate(c, Side::Right).unwrap();
                let meet = t.intersection_len(&s);
                assert!(meet == 0 || meet == t.len());
            }
        }
        assert!(rep.within_bound);
    }

    #[test]
    fn absorb_rejects_overlap_and_straddling() {
        let overlapping = [level1(3, &[0, 2])];
        assert!(absorb_lower_tiles(&interval(0, 1), &overlapping).is_err());
        // a length-2 tile at 3 meets both length-4 tiles [0,4) and [4,8)
        let straddle = [level1(4, &[0, 4]), level1(2, &[3])];
        assert!(absorb_lower_tiles(&interval(0, 1), &straddle).is_err());
    }

    #[test]
    fn marker_1d() {
        let w = Window::new(interval(0, 20)).unwrap();
        let f = interval(0, 3);
        let m = maximal_marker_set(&w, &f).unwrap();
        assert_eq!(m.markers, pts1(&[0, 3, 6, 9, 12, 15]));
        assert_eq!(m.covering_shape, interval(-2, 3));
        let rep = verify_marker_set(&w, &f, &m).unwrap();
        assert!(rep.pairwise_disjoint && rep.interior_covered);
        assert_eq!(rep.interior_size, 18);
    }

    #[test]
    fn marker_single_position() {
        let g = z(2);
        let f = FiniteSubset::cube(g, 3).unwrap();
        let w = Window::new(f.clone()).unwrap();
        let m = maximal_marker_set(&w, &f).unwrap();
        assert_eq!(m.markers.len(), 1);
        assert!(m.markers.contains_identity());
        assert!(maximal_marker_set(&Window::cube(g, 2).unwrap(), &f).is_err());
    }

    #[test]
    fn marker_2d_grid() {
        let g = z(2);
        let w = Window::cube(g, 16).unwrap();
        let f = FiniteSubset::cube(g, 3).unwrap();
        let m = maximal_marker_set(&w, &f).unwrap();
        assert!(m.markers.iter().all(|v| v.coords().iter().all(|c| c % 3 == 0)));
        assert_eq!(m.markers.len(), 25);
        let rep = verify_marker_set(&w, &f, &m).unwrap();
        assert!(rep.pairwise_disjoint && rep.interior_covered);
    }

    #[test]
    fn json_roundtrip() {
        let g = z(2);
        let w = Window::cube(g, 32).unwrap();
        let shapes = [FiniteSubset::cube(g, 2).unwrap(), FiniteSubset::cube(g, 4).unwrap()];
        let (t, _) = greedy_construct(&w, &shapes, &Rational::new(1, 5)).unwrap();
        let v = t.to_json();
        assert_eq!(v["window"], json!({"lo": [0, 0], "hi": [32, 32]}));
        let back = Quasitiling::from_json(&v).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn constructor_rejects_escaping_tiles() {
        let r = Quasitiling::new(
            vec![interval(0, 4)],
            vec![pts1(&[8])],
            Window::new(interval(0, 10)).unwrap(),
        );
        assert!(r.is_err());
        let r = Quasitiling::new(
            vec![interval(1, 4)],
            vec![pts1(&[0])],
            Window::new(interval(0, 10)).unwrap(),
        );
        assert!(r.is_err());
    }
}
